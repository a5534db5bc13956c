use super::{ScoreMatrix, SubjectiveError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaterStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub n: usize,
}

/// Per-rater, per-dimension standardised scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreMatrix {
    raters: Vec<String>,
    cases: Vec<String>,
    dims: Vec<String>,
    values: Vec<f64>,
    present: Vec<bool>,
    stats: Vec<RaterStats>,
    degenerate: Vec<(String, String)>,
}

impl ZScoreMatrix {
    /// Builds a matrix from already-normalised values (`None` = missing), computing stats as given.
    pub fn from_values(
        raters: Vec<String>,
        cases: Vec<String>,
        dims: Vec<String>,
        values: Vec<Option<f64>>,
    ) -> Self {
        assert_eq!(values.len(), raters.len() * cases.len() * dims.len(), "shape mismatch");
        let present = values.iter().map(Option::is_some).collect();
        let values: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        let mut m = ZScoreMatrix { raters, cases, dims, values, present, stats: Vec::new(), degenerate: Vec::new() };
        for r in 0..m.raters.len() {
            for d in 0..m.dims.len() {
                let xs: Vec<f64> = (0..m.cases.len()).filter_map(|c| m.get(r, c, d)).collect();
                let (mean, std) = mean_std(&xs);
                m.stats.push(RaterStats { mean, std, n: xs.len() });
            }
        }
        m
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    #[inline]
    fn index(&self, rater: usize, case: usize, dim: usize) -> usize {
        (rater * self.cases.len() + case) * self.dims.len() + dim
    }

    pub fn get(&self, rater: usize, case: usize, dim: usize) -> Option<f64> {
        let i = self.index(rater, case, dim);
        self.present[i].then_some(self.values[i])
    }

    /// Raw-score statistics used to normalise `rater` on `dim`.
    pub fn stats(&self, rater: usize, dim: usize) -> RaterStats {
        self.stats[rater * self.dims.len() + dim]
    }

    /// (rater_id, dim) pairs whose raw scores had zero spread; their z-values are all 0.
    pub fn degenerate(&self) -> &[(String, String)] {
        &self.degenerate
    }

    pub fn rater_index(&self, rater_id: &str) -> Option<usize> {
        self.raters.iter().position(|r| r == rater_id)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Standardises `xs` with its own mean and sample std.
///
/// Returns `None` when the spread is zero (or fewer than two values).
pub fn standardize(xs: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let (mean, std) = mean_std(xs);
    if std == 0.0 || !std.is_finite() {
        return None;
    }
    Some((xs.iter().map(|x| (x - mean) / std).collect(), mean, std))
}

/// Z-scores each rater's raw scores per dimension: `z = (x − mean) / std`.
///
/// A rater/dim with zero spread gets z = 0 everywhere and is listed in
/// [`ZScoreMatrix::degenerate`] instead of failing the run.
pub fn zscore_normalize(sm: &ScoreMatrix) -> Result<ZScoreMatrix, SubjectiveError> {
    let (nr, nc, nd) = (sm.raters().len(), sm.cases().len(), sm.dims().len());
    let mut values = vec![0.0; nr * nc * nd];
    let mut present = vec![false; nr * nc * nd];
    let mut stats = Vec::with_capacity(nr * nd);
    let mut degenerate = Vec::new();

    for r in 0..nr {
        for d in 0..nd {
            let idx: Vec<usize> = (0..nc).filter(|&c| sm.get(r, c, d).is_some()).collect();
            if idx.len() < 2 {
                return Err(SubjectiveError::InsufficientScores {
                    rater_id: sm.raters()[r].clone(),
                    dim: sm.dims()[d].clone(),
                    n: idx.len(),
                });
            }
            let xs: Vec<f64> = idx.iter().map(|&c| sm.get(r, c, d).unwrap() as f64).collect();
            let (mean, std) = mean_std(&xs);
            stats.push(RaterStats { mean, std, n: xs.len() });
            let zs = match standardize(&xs) {
                Some((zs, _, _)) => zs,
                None => {
                    log::warn!("rater {} has zero spread on {}; z-scores set to 0", sm.raters()[r], sm.dims()[d]);
                    degenerate.push((sm.raters()[r].clone(), sm.dims()[d].clone()));
                    vec![0.0; xs.len()]
                }
            };
            for (&c, z) in idx.iter().zip(zs) {
                let i = sm.index(r, c, d);
                values[i] = z;
                present[i] = true;
            }
        }
    }

    Ok(ZScoreMatrix {
        raters: sm.raters().to_vec(),
        cases: sm.cases().to_vec(),
        dims: sm.dims().to_vec(),
        values,
        present,
        stats,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subjective::{ScoreRow, DIM_OVERALL};
    use proptest::prelude::*;

    fn matrix(rater_scores: &[(&str, &[i64])]) -> ScoreMatrix {
        let mut rows = Vec::new();
        for (r, scores) in rater_scores {
            for (c, s) in scores.iter().enumerate() {
                rows.push(ScoreRow {
                    rater_id: r.to_string(),
                    case_id: format!("c{c}"),
                    dim: DIM_OVERALL.into(),
                    score: *s,
                    timestamp: 0,
                });
            }
        }
        ScoreMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn one_two_three() {
        let z = zscore_normalize(&matrix(&[("a", &[1, 2, 3])])).unwrap();
        assert_eq!([z.get(0, 0, 0), z.get(0, 1, 0), z.get(0, 2, 0)], [Some(-1.0), Some(0.0), Some(1.0)]);
        assert_eq!(z.stats(0, 0), RaterStats { mean: 2.0, std: 1.0, n: 3 });
    }

    #[test]
    fn standardized_input_is_unchanged() {
        let (z, _, _) = standardize(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_variance_rater_flagged() {
        let z = zscore_normalize(&matrix(&[("a", &[5, 5, 5]), ("b", &[1, 4, 9])])).unwrap();
        assert_eq!(z.degenerate(), [("a".to_string(), DIM_OVERALL.to_string())]);
        assert_eq!(z.get(0, 1, 0), Some(0.0));
        assert!(z.get(1, 2, 0).unwrap() > 0.0);
    }

    #[test]
    fn single_score_is_an_error() {
        assert!(matches!(
            zscore_normalize(&matrix(&[("a", &[5])])),
            Err(SubjectiveError::InsufficientScores { n: 1, .. })
        ));
    }

    #[test]
    fn missing_entries_stay_missing() {
        let rows = vec![
            ScoreRow { rater_id: "a".into(), case_id: "c0".into(), dim: DIM_OVERALL.into(), score: 2, timestamp: 0 },
            ScoreRow { rater_id: "a".into(), case_id: "c1".into(), dim: DIM_OVERALL.into(), score: 4, timestamp: 0 },
            ScoreRow { rater_id: "b".into(), case_id: "c2".into(), dim: DIM_OVERALL.into(), score: 4, timestamp: 0 },
            ScoreRow { rater_id: "b".into(), case_id: "c1".into(), dim: DIM_OVERALL.into(), score: 8, timestamp: 0 },
        ];
        let z = zscore_normalize(&ScoreMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(z.get(0, 2, 0), None);
        assert_eq!(z.get(1, 0, 0), None);
        assert!(z.get(0, 1, 0).is_some());
    }

    proptest! {
        #[test]
        fn unit_sample_moments(xs in prop::collection::vec(1u8..=10, 2..200)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            if let Some((z, _, _)) = standardize(&xs) {
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                prop_assert!(mean.abs() < 1e-9 * n);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn positive_affine_invariance(
            xs in prop::collection::vec(1u8..=10, 2..100),
            a in 0.01f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            match (standardize(&xs), standardize(&ys)) {
                (Some((zx, _, _)), Some((zy, _, _))) => {
                    for (p, q) in zx.iter().zip(&zy) {
                        prop_assert!((p - q).abs() < 1e-9, "{} vs {}", p, q);
                    }
                }
                (None, None) => {}
                _ => prop_assert!(false, "degeneracy changed under affine map"),
            }
        }
    }
}
