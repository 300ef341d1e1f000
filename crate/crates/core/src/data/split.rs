use rand::seq::SliceRandom;

use super::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Assigns whole conversations to train/val/test. Train and val sizes are
/// `round(ratio · n)`; test takes the remainder.
pub fn split(dataset: Dataset, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = dataset.conversations.len();
    let mut ids: Vec<String> = dataset.conversations.iter().map(|c| c.id.clone()).collect();
    ids.shuffle(&mut substream(seed, "split"));
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    dataset.with_splits(Splits { train: ids, val, test })
}
