//! Observer screening per Rec. ITU-R BT.500.
//!
//! Every (case, dimension) cell is one presentation. For each presentation the
//! kurtosis of the panel's scores picks the outlier bound: `2·S` when the scores
//! look normal (2 ≤ β₂ ≤ 4), `√20·S` otherwise. An observer scoring at or beyond
//! the upper bound gets `P += 1`, at or beyond the lower bound `Q += 1`. The
//! observer is rejected when `(P + Q) / N > 0.05` and `|P − Q| / (P + Q) < 0.3`.

use std::collections::BTreeSet;

use super::{SubjectiveError, ZScoreMatrix};

pub const REJECT_FRACTION: f64 = 0.05;
pub const REJECT_ASYMMETRY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverStats {
    pub rater_id: String,
    /// Scores at or above the upper bound.
    pub p: usize,
    /// Scores at or below the lower bound.
    pub q: usize,
    /// Presentations the observer scored.
    pub n: usize,
    pub rejected: bool,
}

impl ObserverStats {
    pub fn outlier_fraction(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.p + self.q) as f64 / self.n as f64
        }
    }

    pub fn asymmetry(&self) -> Option<f64> {
        let t = self.p + self.q;
        (t > 0).then(|| (self.p as f64 - self.q as f64).abs() / t as f64)
    }

    pub fn reason(&self) -> Option<String> {
        self.rejected.then(|| {
            format!(
                "(P+Q)/N = {}/{} = {:.4} > {REJECT_FRACTION} and |P-Q|/(P+Q) = {:.4} < {REJECT_ASYMMETRY}",
                self.p + self.q,
                self.n,
                self.outlier_fraction(),
                self.asymmetry().unwrap_or(0.0)
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningReport {
    pub kept: Vec<String>,
    pub rejected: Vec<String>,
    /// One entry per rater, sorted by rater id.
    pub observers: Vec<ObserverStats>,
    /// Presentations skipped because fewer than two raters scored them or they had zero spread.
    pub skipped_presentations: usize,
}

impl ScreeningReport {
    pub fn observer(&self, rater_id: &str) -> Option<&ObserverStats> {
        self.observers.iter().find(|o| o.rater_id == rater_id)
    }
}

/// Runs the observer-rejection procedure over all presentations of `zm`.
///
/// Per-presentation statistics are computed over the sorted panel scores, so the
/// result does not depend on rater order.
pub fn bt500_screen(zm: &ZScoreMatrix) -> Result<ScreeningReport, SubjectiveError> {
    let nr = zm.raters().len();
    if nr < 2 {
        return Err(SubjectiveError::TooFewRaters(nr));
    }
    let mut p = vec![0usize; nr];
    let mut q = vec![0usize; nr];
    let mut n = vec![0usize; nr];
    let mut skipped = 0;

    for c in 0..zm.cases().len() {
        for d in 0..zm.dims().len() {
            let scored: Vec<(usize, f64)> = (0..nr).filter_map(|r| zm.get(r, c, d).map(|v| (r, v))).collect();
            for &(r, _) in &scored {
                n[r] += 1;
            }
            let mut sorted: Vec<f64> = scored.iter().map(|&(_, v)| v).collect();
            sorted.sort_by(f64::total_cmp);
            let Some((mean, s, beta2)) = presentation_stats(&sorted) else {
                skipped += 1;
                continue;
            };
            let bound = if (2.0..=4.0).contains(&beta2) { 2.0 * s } else { 20f64.sqrt() * s };
            for &(r, v) in &scored {
                if v >= mean + bound {
                    p[r] += 1;
                }
                if v <= mean - bound {
                    q[r] += 1;
                }
            }
        }
    }

    let mut observers: Vec<ObserverStats> = (0..nr)
        .map(|r| {
            let mut o = ObserverStats { rater_id: zm.raters()[r].clone(), p: p[r], q: q[r], n: n[r], rejected: false };
            o.rejected = o.outlier_fraction() > REJECT_FRACTION
                && o.asymmetry().is_some_and(|a| a < REJECT_ASYMMETRY);
            o
        })
        .collect();
    observers.sort_by(|a, b| a.rater_id.cmp(&b.rater_id));

    let kept = observers.iter().filter(|o| !o.rejected).map(|o| o.rater_id.clone()).collect();
    let rejected = observers.iter().filter(|o| o.rejected).map(|o| o.rater_id.clone()).collect();
    Ok(ScreeningReport { kept, rejected, observers, skipped_presentations: skipped })
}

/// Mean, sample std and kurtosis (m4 / m2²) of one presentation.
fn presentation_stats(sorted: &[f64]) -> Option<(f64, f64, f64)> {
    let k = sorted.len();
    if k < 2 {
        return None;
    }
    let mean = sorted.iter().sum::<f64>() / k as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in sorted {
        let dv = v - mean;
        m2 += dv * dv;
        m4 += dv * dv * dv * dv;
    }
    if m2 == 0.0 {
        return None;
    }
    let s = (m2 / (k - 1) as f64).sqrt();
    m2 /= k as f64;
    m4 /= k as f64;
    Some((mean, s, m4 / (m2 * m2)))
}

/// Checks that every id in `kept` exists, returning them as a set.
pub(crate) fn kept_set<'a>(zm: &ZScoreMatrix, kept: &'a [String]) -> Result<BTreeSet<&'a str>, SubjectiveError> {
    if kept.is_empty() {
        return Err(SubjectiveError::NoKeptRaters);
    }
    for k in kept {
        if zm.rater_index(k).is_none() {
            return Err(SubjectiveError::UnknownRater(k.clone()));
        }
    }
    Ok(kept.iter().map(String::as_str).collect())
}
