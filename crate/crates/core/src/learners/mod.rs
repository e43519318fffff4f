//! Base regressors: random forest, stochastic gradient boosting, and RBF
//! ε-SVR, plus seeded k-fold grid search.

mod cv;
mod gbt;
mod rf;
mod svr;
mod tree;

pub use cv::{fold_assignment, grid_search_cv, CvResult};
pub use gbt::{train_gbt, Gbt};
pub use rf::{bootstrap_counts, train_rf, RandomForest};
pub use svr::{train_svr, train_svr_with, Svr, SVR_DEFAULT_MAX_ITER, SVR_DEFAULT_TOL};
pub use tree::{Node, Tree, LEAF};

use crate::{stats, Error, Result};

/// Row-major predictor matrix with its response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, p: usize, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one predictor"));
        }
        if x.len() % p != 0 || x.len() / p != y.len() {
            return Err(Error::invalid(format!(
                "predictor matrix of {} values does not match {} rows x {p} columns",
                x.len(),
                y.len()
            )));
        }
        if feature_names.len() != p {
            return Err(Error::invalid(format!("{} names for {p} predictors", feature_names.len())));
        }
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 rows, got {n}")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "missing or non-finite predictor `{}` in row {}",
                feature_names[i % p],
                i / p
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite response in row {i}")));
        }
        Ok(Dataset { x, n, p, y, feature_names })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Dataset {
            x,
            n: rows.len(),
            p: self.p,
            y: rows.iter().map(|&r| self.y[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
}

impl RfParams {
    pub fn default_for(p: usize) -> Self {
        RfParams {
            n_trees: 500,
            mtry: p.div_ceil(3).max(1),
            min_leaf: 5,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 || self.mtry == 0 || self.min_leaf == 0 {
            return Err(Error::Config("random forest parameters must be positive".into()));
        }
        if self.mtry > p {
            return Err(Error::Config(format!("mtry {} exceeds {p} predictors", self.mtry)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 500,
            learning_rate: 0.05,
            max_depth: 3,
            subsample: 0.75,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.max_depth == 0 {
            return Err(Error::Config("boosting rounds and depth must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample fraction {} outside (0, 1]", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    /// Tube half-width in response units.
    pub epsilon: f64,
    /// RBF width on standardized predictors.
    pub gamma: f64,
}

impl SvrParams {
    pub fn default_for(ds: &Dataset) -> Self {
        let sd = stats::sample_sd(&ds.y);
        SvrParams {
            c: 10.0,
            epsilon: if sd > 0.0 { 0.1 * sd } else { 0.1 },
            gamma: 1.0 / ds.p as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("epsilon", self.epsilon), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("SVR {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyperparams {
    Rf(RfParams),
    Gbt(GbtParams),
    Svr(SvrParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnerKind {
    Rf,
    Gbt,
    Svr,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Rf, LearnerKind::Gbt, LearnerKind::Svr];

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Rf => "rf",
            LearnerKind::Gbt => "gbt",
            LearnerKind::Svr => "svr",
        }
    }
}

impl Hyperparams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Rf(_) => LearnerKind::Rf,
            Hyperparams::Gbt(_) => LearnerKind::Gbt,
            Hyperparams::Svr(_) => LearnerKind::Svr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Rf(RandomForest),
    Gbt(Gbt),
    Svr(Svr),
}

impl TrainedModel {
    pub fn kind(&self) -> LearnerKind {
        match self {
            TrainedModel::Rf(_) => LearnerKind::Rf,
            TrainedModel::Gbt(_) => LearnerKind::Gbt,
            TrainedModel::Svr(_) => LearnerKind::Svr,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Rf(m) => m.n_features,
            TrainedModel::Gbt(m) => m.n_features,
            TrainedModel::Svr(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TrainedModel::Rf(m) => m.predict(x),
            TrainedModel::Gbt(m) => m.predict(x),
            TrainedModel::Svr(m) => m.predict(x),
        }
    }

    /// Predictions for every row of a row-major matrix with `p` columns.
    pub fn predict_rows(&self, x: &[f64], p: usize) -> Vec<f64> {
        use rayon::prelude::*;
        x.par_chunks(p).map(|r| self.predict(r)).collect()
    }
}

/// Fits one learner. The seed is ignored by the deterministic SVR solver.
pub fn train(ds: &Dataset, hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    Ok(match hp {
        Hyperparams::Rf(h) => TrainedModel::Rf(train_rf(ds, h, seed)?),
        Hyperparams::Gbt(h) => TrainedModel::Gbt(train_gbt(ds, h, seed)?),
        Hyperparams::Svr(h) => TrainedModel::Svr(train_svr(ds, h)?),
    })
}

/// Root-mean-square difference between two equal-length slices.
pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
    let sq: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).collect();
    stats::mean(&sq).sqrt()
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::Dataset;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// y = 10·x0 + 5·sin(3·x1) + noise, extra columns pure noise.
    pub fn friedmanish(n: usize, p: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = crate::seeds::rng(seed);
        let nd = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
            let e = if noise > 0.0 { nd.sample(&mut rng) } else { 0.0 };
            y.push(10.0 * row[0] + if p > 1 { 5.0 * (3.0 * row[1]).sin() } else { 0.0 } + e);
            x.extend(row);
        }
        Dataset::new(x, p, y, (0..p).map(|i| format!("x{i}")).collect()).unwrap()
    }
}
