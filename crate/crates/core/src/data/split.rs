use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub test_frac: f64,
    pub unlabeled_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.10,
            test_frac: 0.20,
            unlabeled_frac: 0.70,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let fr = [self.train_frac, self.test_frac, self.unlabeled_frac];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(DataError::InvalidSplit("fractions must be positive".into()));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSplit(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Labeled, unlabeled and test index sets over `0..n`.
///
/// `unlabeled` and `test` stay sorted. `labeled` starts sorted and then grows
/// in query order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
    pub iteration: usize,
}

impl PoolState {
    /// Moves `chosen` from the unlabeled pool to the labeled set.
    pub fn label(&mut self, chosen: &[usize]) -> Result<(), DataError> {
        let mut remove = Vec::with_capacity(chosen.len());
        for &i in chosen {
            match self.unlabeled.binary_search(&i) {
                Ok(pos) => remove.push(pos),
                Err(_) => return Err(DataError::NotUnlabeled(i)),
            }
        }
        remove.sort_unstable();
        if remove.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::InvalidSplit("duplicate index in batch".into()));
        }
        for pos in remove.into_iter().rev() {
            self.unlabeled.remove(pos);
        }
        self.labeled.extend_from_slice(chosen);
        self.iteration += 1;
        Ok(())
    }

    /// Checks that the three sets partition `0..n` exactly.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self
            .labeled
            .iter()
            .chain(&self.unlabeled)
            .chain(&self.test)
        {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Seeded uniform split. Sizes are floored; the remainder joins the unlabeled
/// pool so the test set is exactly `floor(n * test_frac)`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<PoolState, DataError> {
    split_n(ds.n(), spec)
}

pub(crate) fn split_n(n: usize, spec: &SplitSpec) -> Result<PoolState, DataError> {
    spec.validate()?;
    if n < 10 {
        return Err(DataError::InvalidSplit(format!(
            "need at least 10 rows, got {n}"
        )));
    }
    let n_train = floor_size(n, spec.train_frac);
    let n_test = floor_size(n, spec.test_frac);
    let n_unlabeled = n.saturating_sub(n_train + n_test);
    for (name, size) in [("labeled", n_train), ("test", n_test), ("unlabeled", n_unlabeled)] {
        if size == 0 {
            return Err(DataError::InvalidSplit(format!("{name} split is empty")));
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);

    let mut labeled = idx[..n_train].to_vec();
    let mut test = idx[n_train..n_train + n_test].to_vec();
    let mut unlabeled = idx[n_train + n_test..].to_vec();
    labeled.sort_unstable();
    test.sort_unstable();
    unlabeled.sort_unstable();
    Ok(PoolState {
        labeled,
        unlabeled,
        test,
        iteration: 0,
    })
}

fn floor_size(n: usize, frac: f64) -> usize {
    // 1e-9 absorbs products such as 0.29 * 100 = 28.999999999999996.
    (n as f64 * frac + 1e-9).floor() as usize
}
