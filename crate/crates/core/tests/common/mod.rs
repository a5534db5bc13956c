//! Independent reference implementations used as test oracles. Written from the
//! textbook definitions, deliberately naive, and sharing no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use editscore_core::model::{CaseFeatures, EditQualityModel, FusionMode, Matrix};

// ---------- correlation ----------

/// Rank of each value: 1 + (# smaller) + (# equal others) / 2.
pub fn oracle_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx.sqrt() * vy.sqrt()))
    }
}

pub fn oracle_srocc(x: &[f64], y: &[f64]) -> Option<f64> {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// Kendall tau-b by enumerating all pairs.
pub fn oracle_krcc(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tie_x += 1;
            }
            if dy == 0.0 {
                tie_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let dx = (pairs - tie_x) as f64;
    let dy = (pairs - tie_y) as f64;
    if dx == 0.0 || dy == 0.0 {
        None
    } else {
        Some((conc - disc) as f64 / (dx * dy).sqrt())
    }
}

pub fn oracle_rmse(x: &[f64], y: &[f64]) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / x.len() as f64).sqrt()
}

// ---------- subjective pipeline ----------

/// (rater, case, dim) → raw score.
pub type RawTable = BTreeMap<(String, String, String), f64>;

/// Per (rater, dim) z-scores using the sample standard deviation; a rater with
/// zero spread gets zeros.
pub fn oracle_zscores(raw: &RawTable) -> RawTable {
    let mut groups: BTreeMap<(String, String), Vec<(String, f64)>> = BTreeMap::new();
    for ((r, c, d), v) in raw {
        groups.entry((r.clone(), d.clone())).or_default().push((c.clone(), *v));
    }
    let mut out = RawTable::new();
    for ((r, d), vals) in groups {
        let n = vals.len() as f64;
        let mean = vals.iter().map(|(_, v)| v).sum::<f64>() / n;
        let var = vals.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        for (c, v) in vals {
            let z = if sd == 0.0 { 0.0 } else { (v - mean) / sd };
            out.insert((r.clone(), c, d.clone()), z);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleObserver {
    pub p: usize,
    pub q: usize,
    pub n: usize,
}

/// Observer screening over every (case, dim) presentation.
///
/// Each presentation: mean, sample std S, kurtosis m4/m2² with population
/// moments; the bound is 2S for kurtosis in [2, 4] and sqrt(20)·S otherwise.
/// Presentations with fewer than two scores or S = 0 do not count towards P or Q.
/// A rater is rejected when (P+Q)/N > 0.05 and |P−Q|/(P+Q) < 0.3.
pub fn oracle_screen(z: &RawTable) -> (BTreeMap<String, OracleObserver>, Vec<String>) {
    let mut pres: BTreeMap<(String, String), Vec<(String, f64)>> = BTreeMap::new();
    for ((r, c, d), v) in z {
        pres.entry((c.clone(), d.clone())).or_default().push((r.clone(), *v));
    }
    let mut obs: BTreeMap<String, OracleObserver> = BTreeMap::new();
    for panel in pres.values() {
        for (r, _) in panel {
            obs.entry(r.clone()).or_default().n += 1;
        }
        let k = panel.len() as f64;
        if panel.len() < 2 {
            continue;
        }
        let mean = panel.iter().map(|(_, v)| v).sum::<f64>() / k;
        let ss: f64 = panel.iter().map(|(_, v)| (v - mean).powi(2)).sum();
        if ss == 0.0 {
            continue;
        }
        let s = (ss / (k - 1.0)).sqrt();
        let m2 = ss / k;
        let m4 = panel.iter().map(|(_, v)| (v - mean).powi(4)).sum::<f64>() / k;
        let beta2 = m4 / (m2 * m2);
        let bound = if (2.0..=4.0).contains(&beta2) { 2.0 * s } else { 20f64.sqrt() * s };
        for (r, v) in panel {
            let o = obs.get_mut(r).unwrap();
            if *v >= mean + bound {
                o.p += 1;
            }
            if *v <= mean - bound {
                o.q += 1;
            }
        }
    }
    let rejected = obs
        .iter()
        .filter(|(_, o)| {
            let t = o.p + o.q;
            t > 0 && (t as f64) / (o.n as f64) > 0.05 && (o.p as f64 - o.q as f64).abs() / (t as f64) < 0.3
        })
        .map(|(r, _)| r.clone())
        .collect();
    (obs, rejected)
}

// ---------- model ----------

type M = Vec<Vec<f64>>;

fn to_rows(m: &Matrix) -> M {
    (0..m.rows).map(|r| m.data[r * m.cols..(r + 1) * m.cols].to_vec()).collect()
}

fn param(model: &EditQualityModel, name: &str) -> M {
    to_rows(model.params().get(name).unwrap_or_else(|| panic!("missing parameter {name}")))
}

fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

fn dense(model: &EditQualityModel, x: &M, prefix: &str) -> M {
    let w = param(model, &format!("{prefix}.weight"));
    let b = param(model, &format!("{prefix}.bias"));
    mm(x, &w).into_iter().map(|row| row.iter().zip(&b[0]).map(|(v, bb)| v + bb).collect()).collect()
}

fn tanh_m(a: &M) -> M {
    a.iter().map(|r| r.iter().map(|v| v.tanh()).collect()).collect()
}

fn col_mean(a: &M) -> Vec<f64> {
    let n = a.len() as f64;
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

fn softmax_rows(a: &M) -> M {
    a.iter()
        .map(|r| {
            let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn attend(q: &M, k: &M, v: &M, width: usize) -> M {
    let scale = 1.0 / (width as f64).sqrt();
    let s: M = mm(q, &transpose(k)).into_iter().map(|r| r.into_iter().map(|x| x * scale).collect()).collect();
    mm(&softmax_rows(&s), v)
}

fn cols(a: &M, start: usize, len: usize) -> M {
    a.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn mlp(model: &EditQualityModel, x: Vec<f64>, prefix: &str) -> Vec<f64> {
    let h = tanh_m(&dense(model, &vec![x], &format!("{prefix}.l1")));
    dense(model, &h, &format!("{prefix}.l2")).remove(0)
}

/// Straight-line forward pass written from the architecture description.
pub fn reference_forward(model: &EditQualityModel, x: &CaseFeatures) -> f64 {
    let cfg = model.config();
    let pe = to_rows(&x.edited);
    let tv = tanh_m(&dense(model, &pe, "visual_encoder"));
    let e_bv = col_mean(&tv);
    let mut head_in = Vec::new();

    if cfg.use_text_branch {
        let emb = param(model, "text_encoder.embedding");
        let xt: M = x.tokens.iter().map(|&t| emb[t].clone()).collect();
        let q = mm(&xt, &param(model, "cross_attention.wq"));
        let k = mm(&tv, &param(model, "cross_attention.wk"));
        let v = mm(&tv, &param(model, "cross_attention.wv"));
        let ctx = mm(&attend(&q, &k, &v, cfg.attn_dim), &param(model, "cross_attention.wo"));
        let h: M = xt.iter().zip(&ctx).map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p + q).tanh()).collect()).collect();
        let e_bt = col_mean(&h);
        let dot: f64 = e_bv.iter().zip(&e_bt).map(|(a, b)| a * b).sum();
        let na = e_bv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = e_bt.iter().map(|a| a * a).sum::<f64>().sqrt();
        let cos = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
        let mut u: Vec<f64> = e_bv.iter().zip(&e_bt).map(|(a, b)| a * b).collect();
        u.push(cos);
        head_in.extend(dense(model, &vec![u], "alignment").remove(0));
    }

    if cfg.use_source_branch {
        let enc = if cfg.shared_source_encoder { "visual_encoder" } else { "source_encoder" };
        let fin = match cfg.fusion {
            FusionMode::Identity => e_bv.clone(),
            FusionMode::Concat => {
                let ts = tanh_m(&dense(model, &to_rows(&x.source), enc));
                let mut f = col_mean(&ts);
                f.extend(&e_bv);
                f
            }
            FusionMode::Attention => {
                let ts = tanh_m(&dense(model, &to_rows(&x.source), enc));
                let q = mm(&tv, &param(model, "fusion_attention.wq"));
                let k = mm(&ts, &param(model, "fusion_attention.wk"));
                let v = mm(&ts, &param(model, "fusion_attention.wv"));
                let dh = cfg.embed_dim / cfg.fusion_heads;
                let mut joined: M = vec![Vec::new(); tv.len()];
                for hd in 0..cfg.fusion_heads {
                    let o = attend(&cols(&q, hd * dh, dh), &cols(&k, hd * dh, dh), &cols(&v, hd * dh, dh), dh);
                    for (row, part) in joined.iter_mut().zip(o) {
                        row.extend(part);
                    }
                }
                let mha = mm(&joined, &param(model, "fusion_attention.wo"));
                let fused: M = tv.iter().zip(&mha).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
                col_mean(&fused)
            }
        };
        head_in.extend(mlp(model, fin, "source_head"));
    }

    let tq = tanh_m(&dense(model, &pe, "quality_encoder"));
    head_in.extend(mlp(model, col_mean(&tq), "quality_head"));
    mlp(model, head_in, "head")[0]
}

/// Column means of the edited-image patch features.
pub fn mean_patch_features(x: &CaseFeatures) -> Vec<f64> {
    let m = &x.edited;
    (0..m.cols).map(|c| (0..m.rows).map(|r| m.data[r * m.cols + c]).sum::<f64>() / m.rows as f64).collect()
}
