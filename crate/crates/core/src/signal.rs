//! Log-mel spectrogram with 25 ms / 10 ms framing and 80 mel bands at 16 kHz.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::SignalError;
use crate::par::{self, Execution};
use crate::synth::AudioBuffer;

pub const FEATURE_MAGIC: [u8; 4] = *b"OMEL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        MelParams {
            sample_rate: 16_000,
            n_fft: 400,
            hop: 160,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelParams {
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(SignalError::InvalidParams(format!(
                "hop {} must be in 1..={}",
                self.hop, self.n_fft
            )));
        }
        if self.n_mels == 0 || !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return Err(SignalError::InvalidParams("empty mel range".into()));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return Err(SignalError::InvalidParams(format!(
                "fmax {} above Nyquist",
                self.fmax
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequency in Hz of each mel band.
pub fn mel_centers(p: &MelParams) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(p.fmin), hz_to_mel(p.fmax));
    (1..=p.n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64))
        .collect()
}

/// Triangular, area-normalized filters over the `n_fft / 2 + 1` spectrum bins, row-major.
pub fn mel_filterbank(p: &MelParams) -> Vec<Vec<f64>> {
    let bins = p.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(p.fmin), hz_to_mel(p.fmax));
    let edges: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (p.n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * p.sample_rate as f64 / p.n_fft as f64;
    (0..p.n_mels)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (right - left);
            (0..bins)
                .map(|k| {
                    let f = bin_hz(k);
                    let w = ((f - left) / (centre - left)).min((right - f) / (right - centre));
                    w.max(0.0) * norm
                })
                .collect()
        })
        .collect()
}

/// Row-major `[n_mels x frames]` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub frames: usize,
    pub data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.data[mel * self.frames + frame]
    }

    pub fn column(&self, frame: usize) -> Vec<f32> {
        (0..self.n_mels).map(|m| self.get(m, frame)).collect()
    }

    /// `OMEL` magic, `n_mels` and `frames` as u32 LE, then f32 LE data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend(FEATURE_MAGIC);
        out.extend((self.n_mels as u32).to_le_bytes());
        out.extend((self.frames as u32).to_le_bytes());
        for v in &self.data {
            out.extend(v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SignalError> {
        if bytes.len() < 12 || bytes[..4] != FEATURE_MAGIC {
            return Err(SignalError::Format("missing OMEL header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n_mels, frames) = (word(4), word(8));
        let body = &bytes[12..];
        if body.len() != n_mels * frames * 4 {
            return Err(SignalError::Format(format!(
                "expected {} data bytes, found {}",
                n_mels * frames * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(MelSpectrogram {
            n_mels,
            frames,
            data,
        })
    }
}

fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

struct FrameContext<'a> {
    samples: &'a [f32],
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    params: MelParams,
}

impl FrameContext<'_> {
    fn log_mel_frame(&self, frame: usize) -> Vec<f64> {
        let p = &self.params;
        let half = (p.n_fft / 2) as isize;
        let start = (frame * p.hop) as isize - half;
        let mut buf: Vec<Complex<f64>> = (0..p.n_fft)
            .map(|i| {
                let idx = reflect(start + i as isize, self.samples.len());
                Complex::new(self.samples[idx] as f64 * self.window[i], 0.0)
            })
            .collect();
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..p.n_fft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        self.filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&power).map(|(w, x)| w * x).sum();
                e.max(p.log_floor).log10()
            })
            .collect()
    }
}

/// Log-mel features with `floor(len / hop)` frames and per-utterance scaling
/// `(x - max + 8) / 4`.
pub fn log_mel_spectrogram(
    audio: &AudioBuffer,
    p: &MelParams,
) -> Result<MelSpectrogram, SignalError> {
    log_mel_spectrogram_with(audio, p, Execution::default())
}

pub fn log_mel_spectrogram_with(
    audio: &AudioBuffer,
    p: &MelParams,
    exec: Execution,
) -> Result<MelSpectrogram, SignalError> {
    p.validate()?;
    if audio.sample_rate != p.sample_rate {
        return Err(SignalError::SampleRate {
            expected: p.sample_rate,
            actual: audio.sample_rate,
        });
    }
    let frames = audio.samples.len() / p.hop;
    if frames == 0 {
        return Ok(MelSpectrogram {
            n_mels: p.n_mels,
            frames: 0,
            data: Vec::new(),
        });
    }
    let ctx = FrameContext {
        samples: &audio.samples,
        window: hann(p.n_fft),
        filters: mel_filterbank(p),
        fft: FftPlanner::new().plan_fft_forward(p.n_fft),
        params: *p,
    };
    let columns = par::map_range(exec, 0..frames as u64, |f| ctx.log_mel_frame(f as usize));
    let max = columns
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut data = vec![0.0f32; p.n_mels * frames];
    for (f, col) in columns.iter().enumerate() {
        for (m, &v) in col.iter().enumerate() {
            data[m * frames + f] = ((v - max + 8.0) / 4.0) as f32;
        }
    }
    Ok(MelSpectrogram {
        n_mels: p.n_mels,
        frames,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audio(samples: Vec<f32>) -> AudioBuffer {
        AudioBuffer {
            sample_rate: 16_000,
            samples,
        }
    }

    fn tone(hz: f64, n: usize) -> Vec<f32> {
        (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * hz * i as f64 / 16_000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 440.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.99).abs() < 0.1);
    }

    #[test]
    fn frame_count_is_len_over_hop() {
        let p = MelParams::default();
        for n in [0, 159, 160, 161, 1000, 16_000] {
            let m = log_mel_spectrogram(&audio(tone(300.0, n)), &p).unwrap();
            assert_eq!(m.frames, n / 160, "{n}");
            assert_eq!(m.data.len(), 80 * (n / 160));
        }
    }

    #[test]
    fn silent_input_is_constant_and_finite() {
        let m = log_mel_spectrogram(&audio(vec![0.0; 8000]), &MelParams::default()).unwrap();
        assert!(m.data.iter().all(|v| v.is_finite()));
        let first = m.column(0);
        assert!((0..m.frames).all(|f| m.column(f) == first));
    }

    #[test]
    fn rejects_other_sample_rates() {
        let a = AudioBuffer {
            sample_rate: 22_050,
            samples: vec![0.0; 1000],
        };
        assert!(matches!(
            log_mel_spectrogram(&a, &MelParams::default()),
            Err(SignalError::SampleRate { .. })
        ));
        let bad = MelParams {
            hop: 500,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn short_inputs_reflect_safely() {
        let m = log_mel_spectrogram(&audio(tone(500.0, 170)), &MelParams::default()).unwrap();
        assert_eq!(m.frames, 1);
        assert!(m.data.iter().all(|v| v.is_finite()));
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(-7, 3), 1);
    }

    #[test]
    fn filterbank_peaks_at_centres() {
        let p = MelParams::default();
        let centres = mel_centers(&p);
        assert_eq!(centres.len(), 80);
        assert!(centres.windows(2).all(|w| w[0] < w[1]));
        assert!(centres[79] < 8000.0);
    }

    #[test]
    fn tone_peaks_in_nearest_band() {
        let p = MelParams::default();
        let m = log_mel_spectrogram(&audio(tone(440.0, 16_000)), &p).unwrap();
        let centres = mel_centers(&p);
        let nearest = (0..80)
            .min_by(|&a, &b| {
                (centres[a] - 440.0)
                    .abs()
                    .total_cmp(&(centres[b] - 440.0).abs())
            })
            .unwrap();
        for f in 5..m.frames - 5 {
            let col = m.column(f);
            let peak = (0..80).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(peak, nearest, "frame {f}");
        }
    }

    #[test]
    fn hop_shift_moves_one_frame() {
        let p = MelParams::default();
        let base: Vec<f32> = tone(700.0, 8000)
            .iter()
            .enumerate()
            .map(|(i, v)| v * (i as f32 / 8000.0))
            .collect();
        let mut shifted = vec![0.0; 160];
        shifted.extend_from_slice(&base[..base.len() - 160]);
        let a = log_mel_spectrogram(&audio(base), &p).unwrap();
        let b = log_mel_spectrogram(&audio(shifted), &p).unwrap();
        // Both share the same global maximum only approximately, so compare raw differences.
        let offset = a.get(0, 10) - b.get(0, 11);
        for f in 5..a.frames - 5 {
            for mel in 0..80 {
                assert!((a.get(mel, f) - b.get(mel, f + 1) - offset).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn feature_file_layout() {
        let m = MelSpectrogram {
            n_mels: 2,
            frames: 3,
            data: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        };
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"OMEL");
        assert_eq!(bytes.len(), 12 + 24);
        assert_eq!(&bytes[16..20], 1.0f32.to_le_bytes());
        assert_eq!(MelSpectrogram::from_bytes(&bytes).unwrap(), m);
        assert!(MelSpectrogram::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = audio(tone(523.25, 4000));
        let p = MelParams::default();
        assert_eq!(
            log_mel_spectrogram_with(&a, &p, Execution::Sequential).unwrap(),
            log_mel_spectrogram_with(&a, &p, Execution::Parallel).unwrap()
        );
    }
}
