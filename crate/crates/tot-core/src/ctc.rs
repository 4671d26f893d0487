//! CTC loss by the forward algorithm over the blank-augmented label
//! sequence, evaluated in log space throughout.
//!
//! For labels y_1..y_L the augmented sequence is
//! [blank, y_1, blank, y_2, ..., y_L, blank] of length 2L+1. The forward
//! variable alpha[t][s] accumulates the log-probability of every frame
//! prefix ending in augmented state s; transitions allow staying, advancing
//! one state, and skipping a blank between distinct labels. The loss is the
//! negated log-sum of the two terminal states.
//!
//! An alignment only exists when T is large enough to emit every label plus
//! one blank between each repeated pair. Shorter inputs (and hard zeros in
//! the table that kill every surviving path) yield `CtcLoss::Infeasible`
//! rather than an infinite float.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::logaddexp;
use crate::seq::TokenSequence;

/// Outcome of a CTC evaluation: the negative log-likelihood, or the marker
/// that no positive-probability alignment exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CtcLoss {
    Feasible(f64),
    Infeasible,
}

impl CtcLoss {
    pub fn value(&self) -> Option<f64> {
        match self {
            CtcLoss::Feasible(v) => Some(*v),
            CtcLoss::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, CtcLoss::Feasible(_))
    }
}

/// Forward-algorithm CTC loss.
///
/// `log_probs` is T x V with each row a log-distribution over the
/// vocabulary; -inf entries are legal (hard zeros). `labels` contributes
/// its CTC targets (interior tokens when framed), which must avoid the
/// blank id and stay inside the vocabulary.
pub fn ctc_loss(log_probs: &Array2<f64>, labels: &TokenSequence, blank: usize) -> Result<CtcLoss> {
    let (t_len, vocab) = log_probs.dim();
    if t_len == 0 || vocab == 0 {
        return Err(Error::EmptyInput {
            context: "ctc log-probabilities",
        });
    }
    if blank >= vocab {
        return Err(Error::LabelOutOfRange {
            label: blank,
            position: 0,
            vocab,
        });
    }
    for ((i, j), &v) in log_probs.indexed_iter() {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite {
                context: "ctc log-probabilities",
                row: i,
                col: j,
            });
        }
    }
    let targets = labels.labels();
    for (pos, &y) in targets.iter().enumerate() {
        if y == blank {
            return Err(Error::BlankInLabels {
                position: pos,
                blank,
            });
        }
        if y >= vocab {
            return Err(Error::LabelOutOfRange {
                label: y,
                position: pos,
                vocab,
            });
        }
    }

    // Augmented state s holds blank for even s and targets[s/2] for odd s.
    let states = 2 * targets.len() + 1;
    let state_id = |s: usize| if s % 2 == 0 { blank } else { targets[s / 2] };

    let mut alpha = vec![f64::NEG_INFINITY; states];
    alpha[0] = log_probs[[0, blank]];
    if states > 1 {
        alpha[1] = log_probs[[0, state_id(1)]];
    }
    let mut next = vec![f64::NEG_INFINITY; states];
    for t in 1..t_len {
        for s in 0..states {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = logaddexp(acc, alpha[s - 1]);
            }
            if s >= 2 && s % 2 == 1 && state_id(s) != state_id(s - 2) {
                acc = logaddexp(acc, alpha[s - 2]);
            }
            next[s] = acc + log_probs[[t, state_id(s)]];
        }
        std::mem::swap(&mut alpha, &mut next);
    }

    let mut log_lik = alpha[states - 1];
    if states > 1 {
        log_lik = logaddexp(log_lik, alpha[states - 2]);
    }
    if log_lik == f64::NEG_INFINITY {
        Ok(CtcLoss::Infeasible)
    } else {
        Ok(CtcLoss::Feasible(-log_lik))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logsumexp;
    use crate::rng::SplitMix64;

    fn bare(ids: Vec<usize>) -> TokenSequence {
        TokenSequence::bare(ids, usize::MAX, usize::MAX)
    }

    fn log_table(rows: Vec<Vec<f64>>) -> Array2<f64> {
        let t = rows.len();
        let v = rows[0].len();
        let flat: Vec<f64> = rows
            .into_iter()
            .flatten()
            .map(|p: f64| p.ln())
            .collect();
        Array2::from_shape_vec((t, v), flat).unwrap()
    }

    fn random_log_table(rng: &mut SplitMix64, t: usize, v: usize) -> Array2<f64> {
        let mut rows = Vec::with_capacity(t);
        for _ in 0..t {
            let raw: Vec<f64> = (0..v).map(|_| rng.uniform_in(0.05, 1.0)).collect();
            let sum: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|x| x / sum).collect::<Vec<_>>());
        }
        log_table(rows)
    }

    // Independent oracle: walk every one of the V^T frame paths, collapse
    // repeats then drop blanks, and log-sum the paths matching the labels.
    fn enumerated(log_probs: &Array2<f64>, labels: &[usize], blank: usize) -> CtcLoss {
        let (t_len, vocab) = log_probs.dim();
        let mut path = vec![0usize; t_len];
        let mut total = f64::NEG_INFINITY;
        loop {
            let mut collapsed: Vec<usize> = Vec::new();
            let mut prev = None;
            for &sym in &path {
                if Some(sym) != prev && sym != blank {
                    collapsed.push(sym);
                }
                prev = Some(sym);
            }
            if collapsed == labels {
                let lp: f64 = path.iter().enumerate().map(|(t, &s)| log_probs[[t, s]]).sum();
                total = logaddexp(total, lp);
            }
            let mut t = 0;
            loop {
                if t == t_len {
                    return if total == f64::NEG_INFINITY {
                        CtcLoss::Infeasible
                    } else {
                        CtcLoss::Feasible(-total)
                    };
                }
                path[t] += 1;
                if path[t] < vocab {
                    break;
                }
                path[t] = 0;
                t += 1;
            }
        }
    }

    #[test]
    fn single_frame_forces_the_single_token() {
        let lp = log_table(vec![vec![0.2, 0.5, 0.3]]);
        let got = ctc_loss(&lp, &bare(vec![1]), 0).unwrap();
        let want = -(0.5_f64.ln());
        assert!((got.value().unwrap() - want).abs() < 1e-12, "{got:?}");
    }

    #[test]
    fn two_frames_single_label_sums_three_paths() {
        let lp = log_table(vec![vec![0.3, 0.7], vec![0.6, 0.4]]);
        let got = ctc_loss(&lp, &bare(vec![1]), 0).unwrap().value().unwrap();
        // paths aa, a-, -a
        let want = -logsumexp(&[
            (0.7_f64 * 0.4).ln(),
            (0.7_f64 * 0.6).ln(),
            (0.3_f64 * 0.4).ln(),
        ]);
        assert!((got - want).abs() < 1e-12, "got={got} want={want}");
    }

    #[test]
    fn repeated_label_needs_an_intervening_blank() {
        let lp = log_table(vec![vec![0.3, 0.7], vec![0.6, 0.4]]);
        assert_eq!(ctc_loss(&lp, &bare(vec![1, 1]), 0).unwrap(), CtcLoss::Infeasible);
        // Three frames are enough: a - a.
        let lp3 = log_table(vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5]]);
        assert!(ctc_loss(&lp3, &bare(vec![1, 1]), 0).unwrap().is_feasible());
    }

    #[test]
    fn empty_labels_score_the_all_blank_path() {
        let lp = log_table(vec![vec![0.8, 0.2], vec![0.9, 0.1]]);
        let got = ctc_loss(&lp, &bare(vec![]), 0).unwrap().value().unwrap();
        let want = -((0.8_f64 * 0.9).ln());
        assert!((got - want).abs() < 1e-12, "got={got} want={want}");
    }

    #[test]
    fn framed_sequences_strip_sentinels_before_scoring() {
        let lp = log_table(vec![vec![0.2, 0.5, 0.3]]);
        let framed = TokenSequence::framed(vec![8, 1, 9], 8, 9).unwrap();
        let viaframed = ctc_loss(&lp, &framed, 0).unwrap();
        let viabare = ctc_loss(&lp, &bare(vec![1]), 0).unwrap();
        assert_eq!(viaframed, viabare);
    }

    #[test]
    fn rejects_blank_targets_and_out_of_range_ids() {
        let lp = log_table(vec![vec![0.5, 0.5]]);
        assert!(matches!(
            ctc_loss(&lp, &bare(vec![0]), 0),
            Err(Error::BlankInLabels { position: 0, blank: 0 })
        ));
        assert!(matches!(
            ctc_loss(&lp, &bare(vec![7]), 0),
            Err(Error::LabelOutOfRange { label: 7, .. })
        ));
        assert!(matches!(
            ctc_loss(&lp, &bare(vec![1]), 5),
            Err(Error::LabelOutOfRange { label: 5, .. })
        ));
    }

    #[test]
    fn agrees_with_path_enumeration_on_random_tables() {
        let mut rng = SplitMix64::new(0xC7C0);
        for case in 0..40 {
            let t = 1 + (rng.next_below(5) as usize);
            let v = 2 + (rng.next_below(2) as usize);
            let lp = random_log_table(&mut rng, t, v);
            let len = rng.next_below(4) as usize;
            let labels: Vec<usize> =
                (0..len).map(|_| 1 + rng.next_below((v - 1) as u64) as usize).collect();
            let got = ctc_loss(&lp, &bare(labels.clone()), 0).unwrap();
            let want = enumerated(&lp, &labels, 0);
            match (got, want) {
                (CtcLoss::Feasible(g), CtcLoss::Feasible(w)) => {
                    assert!(
                        (g - w).abs() < 1e-9,
                        "case {case}: t={t} v={v} labels={labels:?} got={g} want={w}"
                    );
                    assert!(g >= -1e-12, "negative loss {g}");
                }
                (g, w) => assert_eq!(g, w, "case {case}: t={t} v={v} labels={labels:?}"),
            }
        }
    }
}
