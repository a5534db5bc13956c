use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Predictions paired with ground-truth targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries<'a> {
    pred: &'a [f64],
    target: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    /// Equal lengths, at least two points, all finite.
    pub fn new(pred: &'a [f64], target: &'a [f64]) -> Result<Self, MetricError> {
        if pred.len() != target.len() {
            return Err(MetricError::LengthMismatch { pred: pred.len(), target: target.len() });
        }
        if pred.len() < 2 {
            return Err(MetricError::TooShort(pred.len()));
        }
        if pred.iter().chain(target).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(PairedSeries { pred, target })
    }

    pub fn pred(&self) -> &[f64] {
        self.pred
    }

    pub fn target(&self) -> &[f64] {
        self.target
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub srocc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
}

/// All four agreement metrics at once.
pub fn correlation_summary(ps: &PairedSeries<'_>) -> Result<CorrelationSummary, MetricError> {
    Ok(CorrelationSummary { srocc: srocc(ps)?, plcc: plcc(ps)?, krcc: krcc(ps)?, rmse: rmse(ps) })
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(MetricError::Constant("pred"));
    }
    if syy == 0.0 {
        return Err(MetricError::Constant("target"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank-order correlation (Pearson on average ranks).
pub fn srocc(ps: &PairedSeries<'_>) -> Result<f64, MetricError> {
    pearson(&average_ranks(ps.pred), &average_ranks(ps.target))
}

/// Pearson linear correlation.
pub fn plcc(ps: &PairedSeries<'_>) -> Result<f64, MetricError> {
    pearson(ps.pred, ps.target)
}

/// Kendall tau-b, computed with Knight's O(n log n) merge-sort algorithm.
pub fn krcc(ps: &PairedSeries<'_>) -> Result<f64, MetricError> {
    let n = ps.len();
    let x = ps.pred;
    let y = ps.target;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let n0 = (n * (n - 1) / 2) as u64;
    // ties in x (n1) and joint ties in (x, y) (n3)
    let (mut n1, mut n3) = (0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        n1 += pairs(j - i);
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && y[idx[l]] == y[idx[k]] {
                l += 1;
            }
            n3 += pairs(l - k);
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    // ys is now sorted: ties in y (n2)
    let mut n2 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        n2 += pairs(j - i);
        i = j;
    }

    if n0 == n1 {
        return Err(MetricError::AllTied("pred"));
    }
    if n0 == n2 {
        return Err(MetricError::AllTied("target"));
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let den = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((num / den).clamp(-1.0, 1.0))
}

fn pairs(k: usize) -> u64 {
    (k as u64) * (k as u64).saturating_sub(1) / 2
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..n].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Root mean squared error, in the units of the inputs.
pub fn rmse(ps: &PairedSeries<'_>) -> f64 {
    let ss: f64 = ps.pred.iter().zip(ps.target).map(|(p, t)| (p - t) * (p - t)).sum();
    (ss / ps.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps<'a>(p: &'a [f64], t: &'a [f64]) -> PairedSeries<'a> {
        PairedSeries::new(p, t).unwrap()
    }

    // Brute-force references: O(n²) rank counting and pair enumeration.
    fn brute_rank(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&v| {
                let less = xs.iter().filter(|&&u| u < v).count() as f64;
                let eq = xs.iter().filter(|&&u| u == v).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    }

    fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let c: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        c / (vx * vy).sqrt()
    }

    fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let sx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
                let sy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
                if sx == 0.0 && sy == 0.0 {
                } else if sx == 0.0 {
                    tx += 1.0;
                } else if sy == 0.0 {
                    ty += 1.0;
                } else if sx == sy {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    }

    #[test]
    fn srocc_examples() {
        let up = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(srocc(&ps(&up, &[10.0, 20.0, 25.0, 99.0])).unwrap(), 1.0);
        assert_eq!(srocc(&ps(&[4.0, 3.0, 2.0, 1.0], &up)).unwrap(), -1.0);
        let v = srocc(&ps(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((v - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
        assert!((v - 0.9487).abs() < 1e-4);
    }

    #[test]
    fn plcc_examples() {
        let t = [0.3, 1.7, -2.0, 5.5];
        let p: Vec<f64> = t.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((plcc(&ps(&p, &t)).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((plcc(&ps(&neg, &t)).unwrap() + 1.0).abs() < 1e-15);
        let v = plcc(&ps(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!((v - 3.0 / (42.0f64 / 9.0 * 2.0).sqrt()).abs() < 1e-12);
        assert!((v - 0.9820).abs() < 1e-4);
    }

    #[test]
    fn krcc_examples() {
        let a = [1.0, 5.0, 2.0, 9.0];
        assert_eq!(krcc(&ps(&a, &a)).unwrap(), 1.0);
        assert!((krcc(&ps(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // pred [1,1,2] target [1,2,3]: C = 2, D = 0, ties-in-pred = 1 → 2 / sqrt(2·3)
        let v = krcc(&ps(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!((v - brute_tau_b(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0])).abs() < 1e-15);
        assert!((v - 2.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_examples() {
        let t = [3.0, -1.0, 2.5];
        assert_eq!(rmse(&ps(&t, &t)), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.75).collect();
        assert!((rmse(&ps(&shifted, &t)) - 0.75).abs() < 1e-15);
        assert!((rmse(&ps(&[0.0, 0.0], &[3.0, 4.0])) - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(srocc(&ps(&[1.0, 1.0], &[1.0, 2.0])), Err(MetricError::Constant("pred"))));
        assert!(matches!(plcc(&ps(&[1.0, 2.0], &[3.0, 3.0])), Err(MetricError::Constant("target"))));
        assert!(matches!(krcc(&ps(&[2.0, 2.0], &[1.0, 2.0])), Err(MetricError::AllTied("pred"))));
        assert!(matches!(PairedSeries::new(&[1.0], &[1.0]), Err(MetricError::TooShort(1))));
        assert!(matches!(PairedSeries::new(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(PairedSeries::new(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricError::NonFinite)));
    }

    fn tied_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.5), 2..=max_len)
    }

    proptest! {
        #[test]
        fn small_series_match_brute_force(x in tied_vec(7), y in tied_vec(7)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let p = ps(x, y);
            let bx = brute_rank(x);
            let by = brute_rank(y);
            prop_assert_eq!(average_ranks(x), bx.clone());
            match srocc(&p) {
                Ok(v) => prop_assert!((v - brute_pearson(&bx, &by)).abs() < 1e-12),
                Err(_) => prop_assert!(bx.iter().all(|r| *r == bx[0]) || by.iter().all(|r| *r == by[0])),
            }
            match krcc(&p) {
                Ok(v) => prop_assert!((v - brute_tau_b(x, y)).abs() < 1e-12),
                Err(_) => prop_assert!(x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0])),
            }
        }

        #[test]
        fn symmetry(x in tied_vec(30), y in tied_vec(30)) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            prop_assert_eq!(rmse(&ps(x, y)), rmse(&ps(y, x)));
            if let (Ok(a), Ok(b)) = (plcc(&ps(x, y)), plcc(&ps(y, x))) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (krcc(&ps(x, y)), krcc(&ps(y, x))) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn plcc_affine_behaviour(x in tied_vec(30), y in tied_vec(30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            if let Ok(r) = plcc(&ps(x, y)) {
                let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
                prop_assert!((plcc(&ps(&up, y)).unwrap() - r).abs() < 1e-9);
                prop_assert!((plcc(&ps(&down, y)).unwrap() + r).abs() < 1e-9);
            }
        }
    }
}
