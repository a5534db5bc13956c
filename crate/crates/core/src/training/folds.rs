use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    /// Case ids per fold, each sorted.
    pub folds: Vec<Vec<String>>,
}

impl FoldSplit {
    /// Every case outside fold `i`, sorted.
    pub fn train_ids(&self, i: usize) -> Vec<String> {
        let mut ids: Vec<String> =
            self.folds.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, f)| f.iter().cloned()).collect();
        ids.sort();
        ids
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }
}

/// Seeded shuffle of the sorted ids, then contiguous chunks; the first `n mod k`
/// folds get one extra case.
pub fn make_folds(case_ids: &[String], k: usize, seed: u64) -> Result<FoldSplit, TrainError> {
    if k == 0 || k > case_ids.len() {
        return Err(TrainError::Config(format!("cannot split {} cases into {k} folds", case_ids.len())));
    }
    let mut ids = case_ids.to_vec();
    ids.sort();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        return Err(TrainError::Config("duplicate case ids".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut fold = ids[start..start + len].to_vec();
        fold.sort();
        folds.push(fold);
        start += len;
    }
    Ok(FoldSplit { k, seed, folds })
}
