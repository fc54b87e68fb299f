//! Weighted F-score and the paired-sample t-test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Per-genre tallies behind [`weighted_fscore`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreTally {
    pub true_positive: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl GenreTally {
    /// `2PR / (P + R)`, 0 when undefined.
    pub fn f1(&self) -> f64 {
        if self.true_positive == 0 {
            return 0.0;
        }
        let p = self.true_positive as f64 / self.predicted as f64;
        let r = self.true_positive as f64 / self.gold as f64;
        2.0 * p * r / (p + r)
    }
}

pub fn tallies<L: Ord + Clone>(preds: &[L], golds: &[L]) -> Result<BTreeMap<L, GenreTally>> {
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut out: BTreeMap<L, GenreTally> = BTreeMap::new();
    for (p, g) in preds.iter().zip(golds) {
        out.entry(p.clone()).or_default().predicted += 1;
        let t = out.entry(g.clone()).or_default();
        t.gold += 1;
        if p == g {
            t.true_positive += 1;
        }
    }
    Ok(out)
}

/// Per-genre F1 averaged with weights proportional to gold counts.
pub fn weighted_fscore<L: Ord + Clone>(preds: &[L], golds: &[L]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::InvalidArgument("weighted F-score of an empty set".into()));
    }
    let n = golds.len() as f64;
    Ok(tallies(preds, golds)?
        .values()
        .map(|t| t.gold as f64 / n * t.f1())
        .sum())
}

/// Outcome of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// Mean difference over its standard error; `±∞` when the differences
    /// are constant and nonzero.
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub mean_difference: f64,
    pub significant: bool,
}

/// Paired-sample t-test on `a[i] - b[i]` at two-sided `confidence`.
pub fn paired_ttest(a: &[f64], b: &[f64], confidence: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least two pairs".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} outside (0, 1)")));
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let sd = var.sqrt();
    let scale = mean.abs().max(diffs.iter().fold(0.0f64, |m, d| m.max(d.abs())));
    let (t, significant) = if sd <= 1e-12 * scale.max(f64::MIN_POSITIVE) || sd == 0.0 {
        if mean == 0.0 || scale == 0.0 {
            (0.0, false)
        } else {
            (f64::INFINITY.copysign(mean), true)
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        (t, t.abs() > critical)
    };
    Ok(TTest {
        t,
        df,
        critical,
        mean_difference: mean,
        significant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_fscores() {
        assert_eq!(weighted_fscore(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        let f = weighted_fscore(&['A', 'B', 'B', 'B'], &['A', 'A', 'B', 'B']).unwrap();
        assert!((f - (0.5 * (2.0 / 3.0) + 0.5 * 0.8)).abs() < 1e-12);
        // Everything predicted as A on a balanced set: F1(A) = 2/3, F1(B) = 0.
        let f = weighted_fscore(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert!((f - (2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(weighted_fscore::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn ttest_cases() {
        let a = [0.5, 0.6, 0.7];
        let r = paired_ttest(&a, &a, 0.99).unwrap();
        assert_eq!((r.t, r.significant), (0.0, false));

        let b = [0.4, 0.5, 0.6, 0.7, 0.8];
        let c: Vec<f64> = b.iter().map(|x| x - 0.1).collect();
        let r = paired_ttest(&b, &c, 0.99).unwrap();
        assert!(r.significant && r.t == f64::INFINITY);
        let r = paired_ttest(&c, &b, 0.99).unwrap();
        assert!(r.significant && r.t == f64::NEG_INFINITY);

        let d = [0.02, 0.03, -0.01, 0.04, 0.02];
        let zeros = [0.0; 5];
        let r = paired_ttest(&d, &zeros, 0.99).unwrap();
        let mean = 0.1 / 5.0;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((r.t - mean / (var.sqrt() / 5f64.sqrt())).abs() < 1e-9);
        assert_eq!(r.df, 4);
        assert!((r.critical - 4.604094).abs() < 1e-5);
        assert!(!r.significant);
    }
}
