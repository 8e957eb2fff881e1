//! Token-level word error rate.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::par::{self, Execution};

/// Range of corpus WER commonly reported for music transcription.
pub const TYPICAL_WER_BAND: (f64, f64) = (0.30, 0.50);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerResult {
    pub wer: f64,
    #[serde(rename = "S")]
    pub substitutions: usize,
    #[serde(rename = "D")]
    pub deletions: usize,
    #[serde(rename = "I")]
    pub insertions: usize,
    #[serde(rename = "N")]
    pub reference_len: usize,
}

impl WerResult {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
struct Cell {
    cost: usize,
    subs: usize,
    dels: usize,
    ins: usize,
}

impl Cell {
    /// Lower cost first; at equal cost, more substitutions.
    fn key(&self) -> (usize, std::cmp::Reverse<usize>) {
        (self.cost, std::cmp::Reverse(self.subs))
    }
}

/// Minimum-edit alignment counts between `reference` and `hypothesis`.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, usize, usize) {
    let m = hypothesis.len();
    let mut prev: Vec<Cell> = (0..=m)
        .map(|j| Cell {
            cost: j,
            ins: j,
            ..Default::default()
        })
        .collect();
    let mut cur = vec![Cell::default(); m + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = Cell {
            cost: i + 1,
            dels: i + 1,
            ..Default::default()
        };
        for (j, h) in hypothesis.iter().enumerate() {
            let diag = prev[j];
            let diag = if r == h {
                diag
            } else {
                Cell {
                    cost: diag.cost + 1,
                    subs: diag.subs + 1,
                    ..diag
                }
            };
            let del = Cell {
                cost: prev[j + 1].cost + 1,
                dels: prev[j + 1].dels + 1,
                ..prev[j + 1]
            };
            let ins = Cell {
                cost: cur[j].cost + 1,
                ins: cur[j].ins + 1,
                ..cur[j]
            };
            cur[j + 1] = [diag, del, ins]
                .into_iter()
                .min_by_key(Cell::key)
                .expect("three candidates");
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let last = prev[m];
    (last.subs, last.dels, last.ins)
}

/// `(S + D + I) / N` with `N` the reference length.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerResult, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let (s, d, i) = edit_counts(reference, hypothesis);
    Ok(WerResult {
        wer: (s + d + i) as f64 / reference.len() as f64,
        substitutions: s,
        deletions: d,
        insertions: i,
        reference_len: reference.len(),
    })
}

/// Pooled WER over a corpus: total errors over total reference length.
pub fn wer_corpus<T, P>(pairs: &[(P, P)]) -> Result<WerResult, MetricsError>
where
    T: PartialEq,
    P: AsRef<[T]> + Sync,
{
    wer_corpus_with(pairs, Execution::default())
}

pub fn wer_corpus_with<T, P>(pairs: &[(P, P)], exec: Execution) -> Result<WerResult, MetricsError>
where
    T: PartialEq,
    P: AsRef<[T]> + Sync,
{
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let per_pair = par::map_slice(exec, pairs, |(r, h)| {
        let (r, h) = (r.as_ref(), h.as_ref());
        let (s, d, i) = edit_counts(r, h);
        (s, d, i, r.len())
    });
    let (s, d, i, n) = per_pair.into_iter().fold((0, 0, 0, 0), |a, b| {
        (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3)
    });
    if n == 0 {
        return Err(MetricsError::EmptyReference);
    }
    let rate = (s + d + i) as f64 / n as f64;
    if !(TYPICAL_WER_BAND.0..=TYPICAL_WER_BAND.1).contains(&rate) {
        log::info!(
            "corpus WER {rate:.3} is outside the typical {:.2}..{:.2} band",
            TYPICAL_WER_BAND.0,
            TYPICAL_WER_BAND.1
        );
    }
    Ok(WerResult {
        wer: rate,
        substitutions: s,
        deletions: d,
        insertions: i,
        reference_len: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        let r = wer(&words("a b c"), &words("a b c")).unwrap();
        assert_eq!((r.wer, r.errors(), r.reference_len), (0.0, 0, 3));
    }

    #[test]
    fn substitution_and_deletion() {
        let r = wer(&words("a b c d"), &words("a x c")).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (1, 1, 0));
        assert_eq!(r.wer, 0.5);
    }

    #[test]
    fn all_deletions_and_insertions() {
        let r = wer(&words("a b c d e"), &[]).unwrap();
        assert_eq!((r.deletions, r.wer), (5, 1.0));
        let r = wer(&words("a"), &words("x y z")).unwrap();
        assert_eq!((r.substitutions, r.insertions), (1, 2));
        assert_eq!(r.wer, 3.0);
        assert_eq!(
            wer::<&str>(&[], &words("a")),
            Err(MetricsError::EmptyReference)
        );
    }

    #[test]
    fn rate_depends_on_direction() {
        let (a, b) = (words("a b c d"), words("a b"));
        let ab = wer(&a, &b).unwrap();
        let ba = wer(&b, &a).unwrap();
        assert_eq!(ab.errors(), ba.errors());
        assert_eq!((ab.wer, ba.wer), (0.5, 1.0));
        assert_eq!((ab.deletions, ba.insertions), (2, 2));
    }

    #[test]
    fn corpus_pools() {
        let pairs = vec![
            (words("a b c d"), words("a x c")),
            (words("a b c d e f"), words("a b c d e f")),
        ];
        let r = wer_corpus(&pairs).unwrap();
        assert_eq!((r.errors(), r.reference_len), (2, 10));
        assert!((r.wer - 0.2).abs() < 1e-12);
        let single = wer_corpus(&pairs[..1]).unwrap();
        assert_eq!(single, wer(&pairs[0].0, &pairs[0].1).unwrap());
        assert_eq!(
            wer_corpus::<&str, Vec<&str>>(&[]),
            Err(MetricsError::EmptyCorpus)
        );
    }

    #[test]
    fn json_field_names() {
        let r = wer(&words("a b"), &words("a c")).unwrap();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"wer":0.5,"S":1,"D":0,"I":0,"N":2}"#
        );
    }
}
