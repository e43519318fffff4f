use super::tree::{grow, GrowParams, Presorted, Tree};
use super::{Dataset, GbtParams};
use crate::seeds::{derive_seed, rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Gbt {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub seed: u64,
}

impl Gbt {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_first(x, self.trees.len())
    }

    /// Prediction of the model truncated to its first `rounds` trees.
    pub fn predict_first(&self, x: &[f64], rounds: usize) -> f64 {
        let mut f = self.init;
        for t in &self.trees[..rounds.min(self.trees.len())] {
            f += self.learning_rate * t.predict(x);
        }
        f
    }
}

/// Squared-error boosting: each round fits a depth-limited tree to the
/// current residuals on a row subsample drawn without replacement.
pub fn train_gbt(ds: &Dataset, hp: &GbtParams, seed: u64) -> Result<Gbt> {
    hp.validate()?;
    let pre = Presorted::new(ds);
    let mut init = 0.0;
    for (k, v) in ds.y.iter().enumerate() {
        init += (v - init) / (k + 1) as f64;
    }
    let mut fitted = vec![init; ds.n];
    let m = ((hp.subsample * ds.n as f64).round() as usize).clamp(1, ds.n);
    let params = GrowParams {
        max_features: ds.p,
        min_leaf: 1,
        max_depth: hp.max_depth,
    };
    let mut trees = Vec::with_capacity(hp.n_rounds);
    let mut resid = vec![0.0; ds.n];
    for round in 0..hp.n_rounds {
        for i in 0..ds.n {
            resid[i] = ds.y[i] - fitted[i];
        }
        let mut r = rng(derive_seed(seed, &[round as u64]));
        let mut counts = vec![0u32; ds.n];
        if m == ds.n {
            counts.fill(1);
        } else {
            for i in rand::seq::index::sample(&mut r, ds.n, m) {
                counts[i] = 1;
            }
        }
        let tree = grow(&pre, &resid, &counts, params, &mut r);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += hp.learning_rate * tree.predict(ds.row(i));
        }
        trees.push(tree);
    }
    Ok(Gbt {
        init,
        learning_rate: hp.learning_rate,
        trees,
        n_features: ds.p,
        seed,
    })
}
