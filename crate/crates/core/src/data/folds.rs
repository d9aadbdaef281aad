use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// k-fold split by student: each fold tests on one k-th of the students and
/// splits the rest 80/20 into train and validation.
pub fn kfold(students: &[String], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(CoreError::Argument(format!("k must be at least 2, got {k}")));
    }
    let mut ids: Vec<String> = students.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < k {
        return Err(CoreError::Argument(format!(
            "{} students cannot be split into {k} folds",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let bounds: Vec<usize> = (0..=k).map(|f| f * n / k).collect();
    Ok((0..k)
        .map(|f| {
            let test = ids[bounds[f]..bounds[f + 1]].to_vec();
            let rest: Vec<String> = ids[..bounds[f]]
                .iter()
                .chain(&ids[bounds[f + 1]..])
                .cloned()
                .collect();
            let n_val = (rest.len() + 2) / 5;
            let val = rest[..n_val].to_vec();
            let train = rest[n_val..].to_vec();
            FoldSplit { train, val, test }
        })
        .collect())
}
