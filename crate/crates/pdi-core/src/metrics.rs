//! Evaluation metrics: contingency counts over interval membership, the six
//! classification scores, oracle interval errors, and the invalid-interval
//! proportion.
//!
//! The contingency labeling follows the reference convention exactly: a
//! "positive" is a favorable outcome, so FP counts favorable outcomes with
//! the dose *outside* the interval and FN counts unfavorable outcomes with
//! the dose *inside* (the reverse of the usual classifier convention).

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Contingency counts over a test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Contingency {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// Counts agreement between the range indicator and interval membership of
/// the observed dose: TP = (r=1, dose inside), TN = (r=0, dose outside),
/// FP = (r=1, dose outside), FN = (r=0, dose inside).
pub fn contingency(rule_eval: &[(f64, f64)], test: &Dataset) -> Result<Contingency> {
    if rule_eval.len() != test.len() {
        return Err(Error::LengthMismatch {
            expected: test.len(),
            got: rule_eval.len(),
        });
    }
    let mut c = Contingency::default();
    for ((ell, u), o) in rule_eval.iter().zip(test.iter()) {
        let inside = o.a >= *ell && o.a <= *u;
        match (o.r, inside) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// The six classification scores; metrics whose denominator vanishes are
/// reported as `None` rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub kappa: Option<f64>,
}

/// Accuracy, F1, Matthews correlation, recall, precision, and Cohen's kappa
/// from the contingency counts.
pub fn classification_metrics(c: &Contingency) -> Result<MetricsReport> {
    if c.total() == 0 {
        return Err(Error::EmptyContingency);
    }
    let tp = c.true_pos as f64;
    let tn = c.true_neg as f64;
    let fp = c.false_pos as f64;
    let fneg = c.false_neg as f64;
    let total = tp + tn + fp + fneg;

    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let accuracy = ratio(tp + tn, total);
    let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fneg);
    let mcc_den = ((tp + fp) * (tp + fneg) * (tn + fp) * (tn + fneg)).sqrt();
    let mcc = ratio(tp * tn - fp * fneg, mcc_den);
    let recall = ratio(tp, tp + fneg);
    let precision = ratio(tp, tp + fp);
    let kappa_den = (tp + fp) * (fp + tn) + (tp + fneg) * (fneg + tn);
    let kappa = ratio(2.0 * (tp * tn - fneg * fp), kappa_den);
    Ok(MetricsReport {
        accuracy,
        f1,
        mcc,
        recall,
        precision,
        kappa,
    })
}

/// Mean absolute and squared errors against the oracle bounds; each row
/// contributes the sum of its two bound errors.
pub fn interval_errors(
    rule_eval: &[(f64, f64)],
    oracle_eval: &[(f64, f64)],
) -> Result<(f64, f64)> {
    if rule_eval.len() != oracle_eval.len() {
        return Err(Error::LengthMismatch {
            expected: oracle_eval.len(),
            got: rule_eval.len(),
        });
    }
    if rule_eval.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut mae = 0.0;
    let mut mse = 0.0;
    for ((el, eu), (ol, ou)) in rule_eval.iter().zip(oracle_eval) {
        let dl = ol - el;
        let du = ou - eu;
        mae += dl.abs() + du.abs();
        mse += dl * dl + du * du;
    }
    let m = rule_eval.len() as f64;
    Ok((mae / m, mse / m))
}

/// One raw (pre-winsorization) interval with an external invalidity flag
/// (used by the indirect fallback).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawInterval {
    pub ell: f64,
    pub u: f64,
    pub flagged_invalid: bool,
}

/// Fraction of rows whose raw pair violates `0 <= ell <= u <= 1` or was
/// flagged invalid upstream.
pub fn invalid_proportion(raw: &[RawInterval]) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bad = raw
        .iter()
        .filter(|r| {
            r.flagged_invalid || r.ell > r.u || r.ell < 0.0 || r.ell > 1.0 || r.u < 0.0 || r.u > 1.0
        })
        .count();
    Ok(bad as f64 / raw.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn row(y: f64, a: f64) -> Observation {
        Observation::new(y, a, vec![0.0], 0.75, f64::INFINITY)
    }

    #[test]
    fn contingency_single_rows() {
        let ds = Dataset::new(vec![row(1.0, 0.5)]).unwrap();
        let c = contingency(&[(0.2, 0.6)], &ds).unwrap();
        assert_eq!(
            c,
            Contingency {
                true_pos: 1,
                ..Default::default()
            }
        );

        let ds = Dataset::new(vec![row(0.0, 0.5)]).unwrap();
        let c = contingency(&[(0.2, 0.6)], &ds).unwrap();
        assert_eq!(c.false_neg, 1);
    }

    #[test]
    fn contingency_length_mismatch() {
        let ds = Dataset::new(vec![row(1.0, 0.5)]).unwrap();
        assert!(contingency(&[], &ds).is_err());
    }

    #[test]
    fn contingency_row_order_invariant() {
        let rows = vec![row(1.0, 0.1), row(0.0, 0.5), row(1.0, 0.9), row(0.0, 0.2)];
        let evals = [(0.0, 0.3), (0.4, 0.6), (0.85, 1.0), (0.3, 0.4)];
        let ds = Dataset::new(rows.clone()).unwrap();
        let c1 = contingency(&evals, &ds).unwrap();
        let perm = [2usize, 0, 3, 1];
        let ds2 = Dataset::new(perm.iter().map(|&i| rows[i].clone()).collect()).unwrap();
        let evals2: Vec<_> = perm.iter().map(|&i| evals[i]).collect();
        let c2 = contingency(&evals2, &ds2).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn metrics_perfect_and_chance() {
        let perfect = Contingency {
            true_pos: 2,
            true_neg: 2,
            ..Default::default()
        };
        let m = classification_metrics(&perfect).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.mcc, Some(1.0));
        assert_eq!(m.kappa, Some(1.0));

        let chance = Contingency {
            true_pos: 1,
            true_neg: 1,
            false_pos: 1,
            false_neg: 1,
        };
        let m = classification_metrics(&chance).unwrap();
        assert_eq!(m.accuracy, Some(0.5));
        assert_eq!(m.mcc, Some(0.0));
        assert_eq!(m.kappa, Some(0.0));
    }

    #[test]
    fn kappa_hand_computed() {
        let c = Contingency {
            true_pos: 45,
            false_pos: 15,
            false_neg: 25,
            true_neg: 15,
        };
        let m = classification_metrics(&c).unwrap();
        let want = 600.0 / 4600.0;
        assert!((m.kappa.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn undefined_denominators_are_none() {
        // no positives at all: precision/recall/F1 undefined
        let c = Contingency {
            true_neg: 5,
            ..Default::default()
        };
        let m = classification_metrics(&c).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.mcc, None);
    }

    #[test]
    fn interval_error_cases() {
        let oracle = [(0.2, 0.6), (0.3, 0.7)];
        let (mae, mse) = interval_errors(&oracle, &oracle).unwrap();
        assert_eq!((mae, mse), (0.0, 0.0));

        let est = [(0.3, 0.7), (0.4, 0.8)];
        let (mae, mse) = interval_errors(&est, &oracle).unwrap();
        assert!((mae - 0.2).abs() < 1e-12);
        assert!((mse - 0.02).abs() < 1e-12);

        let (mae, mse) = interval_errors(&[(0.5, 0.5)], &[(0.8, 0.1)]).unwrap();
        assert!((mae - 0.7).abs() < 1e-12);
        assert!((mse - 0.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_proportion_cases() {
        let ok = RawInterval {
            ell: 0.2,
            u: 0.8,
            flagged_invalid: false,
        };
        let inverted = RawInterval {
            ell: 0.8,
            u: 0.2,
            flagged_invalid: false,
        };
        assert_eq!(invalid_proportion(&[ok; 4]).unwrap(), 0.0);
        assert_eq!(invalid_proportion(&[inverted; 3]).unwrap(), 1.0);
        assert_eq!(
            invalid_proportion(&[ok, ok, ok, inverted]).unwrap(),
            0.25
        );
        assert!(invalid_proportion(&[]).is_err());
    }

    #[test]
    fn label_swap_symmetry() {
        // swapping r-labels and the membership predicate swaps TP<->TN and
        // FP<->FN, which keeps accuracy and flips nothing in |MCC|
        let c = Contingency {
            true_pos: 45,
            false_pos: 15,
            false_neg: 25,
            true_neg: 15,
        };
        let swapped = Contingency {
            true_pos: c.true_neg,
            true_neg: c.true_pos,
            false_pos: c.false_neg,
            false_neg: c.false_pos,
        };
        let m1 = classification_metrics(&c).unwrap();
        let m2 = classification_metrics(&swapped).unwrap();
        assert_eq!(m1.accuracy, m2.accuracy);
        assert!((m1.mcc.unwrap() - m2.mcc.unwrap()).abs() < 1e-12);
    }
}
