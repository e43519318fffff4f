use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{rmse, train, Dataset, Hyperparams};
use crate::seeds::{derive_seed, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Index of the winning grid point.
    pub best: usize,
    pub best_params: Hyperparams,
    /// Mean out-of-fold RMSE per grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Fold of each row: rows are shuffled with `seed`, then dealt round-robin,
/// so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Exhaustive k-fold search over `grid`. Every grid point sees the same
/// folds and the same per-fold training seeds; the lowest mean RMSE wins
/// and ties keep the earliest grid point.
pub fn grid_search_cv(ds: &Dataset, grid: &[Hyperparams], k: usize, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if k < 2 || ds.n < k {
        return Err(Error::invalid(format!("cannot run {k}-fold CV on {} rows", ds.n)));
    }
    let folds = fold_assignment(ds.n, k, derive_seed(seed, &[0]));
    let splits: Vec<(Dataset, Dataset)> = (0..k)
        .map(|f| {
            let tr: Vec<usize> = (0..ds.n).filter(|&i| folds[i] != f).collect();
            let te: Vec<usize> = (0..ds.n).filter(|&i| folds[i] == f).collect();
            (ds.subset(&tr), ds.subset(&te))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let fold_rmse: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (tr, te) = &splits[f];
            let m = train(tr, &grid[g], derive_seed(seed, &[1, f as u64]))?;
            Ok(rmse(&te.y, &m.predict_rows(&te.x, te.p)))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = fold_rmse.chunks(k).map(|c| c.iter().sum::<f64>() / k as f64).collect();
    let mut best = 0;
    for (g, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = g;
        }
    }
    Ok(CvResult {
        best,
        best_params: grid[best],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::friedmanish;
    use crate::learners::{GbtParams, RfParams};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn folds_partition_rows(n in 5usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let f = fold_assignment(n, k, seed);
            let mut sizes = vec![0usize; k];
            for &v in &f {
                prop_assert!(v < k);
                sizes[v] += 1;
            }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn single_and_duplicated_grid_points() {
        let ds = friedmanish(40, 2, 0.5, 1);
        let g = Hyperparams::Gbt(GbtParams { n_rounds: 20, ..Default::default() });
        let one = grid_search_cv(&ds, &[g], 5, 3).unwrap();
        assert_eq!(one.best, 0);
        let dup = grid_search_cv(&ds, &[g, g], 5, 3).unwrap();
        assert_eq!(dup.scores[0], dup.scores[1]);
        assert_eq!(dup.best, 0);
        assert!(grid_search_cv(&ds, &[], 5, 3).is_err());
    }

    #[test]
    fn prefers_informative_split_features() {
        // y depends on x0 only; 9 noise columns. mtry = 1 draws mostly noise.
        let mut wins = 0;
        for seed in 0..10u64 {
            let mut ds = friedmanish(100, 10, 0.5, 100 + seed);
            for i in 0..ds.n {
                ds.y[i] = 10.0 * ds.x[i * 10] + (ds.y[i] - 10.0 * ds.x[i * 10] - 5.0 * (3.0 * ds.x[i * 10 + 1]).sin());
            }
            let grid = [
                Hyperparams::Rf(RfParams { n_trees: 60, mtry: 1, min_leaf: 5 }),
                Hyperparams::Rf(RfParams { n_trees: 60, mtry: 10, min_leaf: 5 }),
            ];
            let r = grid_search_cv(&ds, &grid, 5, seed).unwrap();
            wins += usize::from(r.best == 1);
        }
        assert_eq!(wins, 10);
    }
}
