use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow, GrowParams, Presorted, Tree};
use super::{Dataset, RfParams};
use crate::seeds::{derive_seed, rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub seed: u64,
    /// Out-of-bag prediction per training row; `None` for rows that were in
    /// every bootstrap. Empty for a forest loaded from disk.
    pub oob: Vec<Option<f64>>,
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        running_mean(self.trees.iter().map(|t| t.predict(x)))
    }
}

/// Incremental mean; exact when every term is equal.
fn running_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, v) in values.enumerate() {
        m += (v - m) / (k + 1) as f64;
    }
    m
}

/// Bootstrap multiplicities of tree `tree`: n uniform draws with
/// replacement from the tree's own derived stream.
pub fn bootstrap_counts(n: usize, seed: u64, tree: usize) -> Vec<u32> {
    let mut r = rng(derive_seed(seed, &[tree as u64]));
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[r.random_range(0..n)] += 1;
    }
    counts
}

pub fn train_rf(ds: &Dataset, hp: &RfParams, seed: u64) -> Result<RandomForest> {
    hp.validate(ds.p)?;
    let pre = Presorted::new(ds);
    let params = GrowParams {
        max_features: hp.mtry,
        min_leaf: hp.min_leaf,
        max_depth: usize::MAX,
    };
    let fitted: Vec<(Tree, Vec<u32>)> = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let counts = bootstrap_counts(ds.n, seed, t);
            // split-feature draws continue on the bootstrap stream's sibling
            let mut r = rng(derive_seed(seed, &[t as u64, 1]));
            (grow(&pre, &ds.y, &counts, params, &mut r), counts)
        })
        .collect();
    let oob = (0..ds.n)
        .into_par_iter()
        .map(|i| {
            let row = ds.row(i);
            let mut any = false;
            let m = running_mean(fitted.iter().filter(|(_, c)| c[i] == 0).map(|(t, _)| {
                any = true;
                t.predict(row)
            }));
            any.then_some(m)
        })
        .collect();
    Ok(RandomForest {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        n_features: ds.p,
        seed,
        oob,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::friedmanish;
    use crate::learners::rmse;

    #[test]
    fn single_unsplittable_tree_is_bootstrap_mean() {
        let ds = friedmanish(30, 2, 1.0, 5);
        let hp = RfParams { n_trees: 1, mtry: 2, min_leaf: 30 };
        let f = train_rf(&ds, &hp, 77).unwrap();
        // independent oracle: replay the bootstrap draws
        let mut r = rng(derive_seed(77, &[0]));
        let draws: Vec<usize> = (0..30).map(|_| r.random_range(0..30)).collect();
        let oracle = draws.iter().map(|&i| ds.y[i]).sum::<f64>() / 30.0;
        for i in 0..ds.n {
            assert!((f.predict(ds.row(i)) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = friedmanish(80, 4, 0.5, 1);
        let hp = RfParams { n_trees: 25, ..RfParams::default_for(4) };
        let a = train_rf(&ds, &hp, 9).unwrap();
        let b = train_rf(&ds, &hp, 9).unwrap();
        let c = train_rf(&ds, &hp, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let ds = friedmanish(60, 3, 0.5, 2);
        let hp = RfParams { n_trees: 16, ..RfParams::default_for(3) };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| train_rf(&ds, &hp, 4).unwrap());
        let b = four.install(|| train_rf(&ds, &hp, 4).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn oob_uses_only_out_of_bag_trees() {
        let ds = friedmanish(40, 3, 0.5, 3);
        let hp = RfParams { n_trees: 20, ..RfParams::default_for(3) };
        let f = train_rf(&ds, &hp, 12).unwrap();
        for i in 0..ds.n {
            let outs: Vec<f64> = (0..20)
                .filter(|&t| bootstrap_counts(ds.n, 12, t)[i] == 0)
                .map(|t| f.trees[t].predict(ds.row(i)))
                .collect();
            match f.oob[i] {
                None => assert!(outs.is_empty()),
                Some(v) => {
                    let m = outs.iter().sum::<f64>() / outs.len() as f64;
                    assert!((v - m).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn learns_signal() {
        let train = friedmanish(300, 3, 0.3, 4);
        let test = friedmanish(200, 3, 0.0, 5);
        let f = train_rf(&train, &RfParams { n_trees: 100, ..RfParams::default_for(3) }, 1).unwrap();
        let pred: Vec<f64> = (0..test.n).map(|i| f.predict(test.row(i))).collect();
        let sd = crate::stats::sample_sd(&test.y);
        assert!(rmse(&test.y, &pred) < 0.35 * sd);
    }
}
