//! Stacked generalization: leave-one-out predictions of the three base
//! learners feed a linear meta-model with an intercept.

use rayon::prelude::*;

use crate::learners::{train, Dataset, GbtParams, Hyperparams, LearnerKind, RfParams, SvrParams, TrainedModel};
use crate::seeds::derive_seed;
use crate::{Error, Result};

/// Condition number above which the meta design falls back to ridge.
pub const MAX_CONDITION: f64 = 1e10;
pub const RIDGE_PENALTY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub rf: RfParams,
    pub gbt: GbtParams,
    pub svr: SvrParams,
}

impl EnsembleParams {
    pub fn default_for(ds: &Dataset) -> Self {
        EnsembleParams {
            rf: RfParams::default_for(ds.p),
            gbt: GbtParams::default(),
            svr: SvrParams::default_for(ds),
        }
    }

    pub fn get(&self, kind: LearnerKind) -> Hyperparams {
        match kind {
            LearnerKind::Rf => Hyperparams::Rf(self.rf),
            LearnerKind::Gbt => Hyperparams::Gbt(self.gbt),
            LearnerKind::Svr => Hyperparams::Svr(self.svr),
        }
    }

    /// Smaller tree ensembles for the n leave-one-out refits: RF trees and
    /// boosting rounds divided by `factor`, learning rate scaled up by the
    /// same factor (capped at 1). SVR is unchanged.
    pub fn reduced(&self, factor: usize) -> Self {
        if factor <= 1 {
            return *self;
        }
        EnsembleParams {
            rf: RfParams {
                n_trees: (self.rf.n_trees / factor).max(1),
                ..self.rf
            },
            gbt: GbtParams {
                n_rounds: (self.gbt.n_rounds / factor).max(1),
                learning_rate: (self.gbt.learning_rate * factor as f64).min(1.0),
                ..self.gbt
            },
            svr: self.svr,
        }
    }
}

/// Linear meta-model `coef[0] + coef[1]·rf + coef[2]·gbt + coef[3]·svr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meta {
    pub coef: [f64; 4],
    pub ridge_fallback: bool,
}

impl Meta {
    pub fn apply(&self, base: [f64; 3]) -> f64 {
        self.coef[0] + self.coef[1] * base[0] + self.coef[2] * base[1] + self.coef[3] * base[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedEnsemble {
    pub rf: TrainedModel,
    pub gbt: TrainedModel,
    pub svr: TrainedModel,
    pub meta: Meta,
    /// Meta-training inputs: leave-one-out predictions, one row per plot.
    pub loo: Vec<[f64; 3]>,
    pub feature_names: Vec<String>,
}

impl StackedEnsemble {
    pub fn base_predictions(&self, x: &[f64]) -> [f64; 3] {
        [self.rf.predict(x), self.gbt.predict(x), self.svr.predict(x)]
    }

    /// Meta-model output; may be negative.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.meta.apply(self.base_predictions(x))
    }

    pub fn predict_rows(&self, x: &[f64]) -> Vec<f64> {
        let p = self.feature_names.len();
        x.par_chunks(p).map(|r| self.predict(r)).collect()
    }

    pub fn svr_converged(&self) -> bool {
        match &self.svr {
            TrainedModel::Svr(s) => s.converged,
            _ => true,
        }
    }
}

/// Entry (i, m) is row i's prediction by learner m fitted on the other
/// n−1 rows with seed hash(seed, i, m).
pub fn loo_component_predictions(ds: &Dataset, hps: &EnsembleParams, seed: u64) -> Result<Vec<[f64; 3]>> {
    if ds.n < 3 {
        return Err(Error::invalid(format!("leave-one-out stacking needs n >= 3, got {}", ds.n)));
    }
    let jobs: Vec<(usize, usize)> = (0..ds.n).flat_map(|i| (0..3).map(move |m| (i, m))).collect();
    let preds: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, m)| {
            let rows: Vec<usize> = (0..ds.n).filter(|&r| r != i).collect();
            let sub = ds.subset(&rows);
            let hp = hps.get(LearnerKind::ALL[m]);
            let model = train(&sub, &hp, derive_seed(seed, &[i as u64, m as u64]))?;
            Ok(model.predict(ds.row(i)))
        })
        .collect::<Result<_>>()?;
    Ok(preds.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
}

fn design(row: &[f64; 3]) -> [f64; 4] {
    [1.0, row[0], row[1], row[2]]
}

fn normal_equations(loo: &[[f64; 3]], y: &[f64]) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut a = [[0.0; 4]; 4];
    let mut b = [0.0; 4];
    for (r, &yi) in loo.iter().zip(y) {
        let x = design(r);
        for i in 0..4 {
            b[i] += x[i] * yi;
            for j in 0..4 {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    (a, b)
}

/// Eigenvalues of a symmetric 4×4 matrix by cyclic Jacobi rotations.
fn sym_eigenvalues(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    for _ in 0..100 {
        let off: f64 = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    [a[0][0], a[1][1], a[2][2], a[3][3]]
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn condition_number(a: &[[f64; 4]; 4]) -> f64 {
    let ev = sym_eigenvalues(*a);
    let max = ev.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve_meta(a: [[f64; 4]; 4], b: [f64; 4]) -> Result<Meta> {
    if condition_number(&a) <= MAX_CONDITION {
        if let Some(coef) = solve4(a, b) {
            return Ok(Meta {
                coef,
                ridge_fallback: false,
            });
        }
    }
    let mut r = a;
    for (i, row) in r.iter_mut().enumerate().skip(1) {
        row[i] += RIDGE_PENALTY;
    }
    let coef = solve4(r, b).ok_or_else(|| Error::invalid("meta-model design is degenerate even with ridge"))?;
    Ok(Meta {
        coef,
        ridge_fallback: true,
    })
}

/// OLS of y on [1, loo], with a ridge fallback on the slopes when the
/// normal matrix is singular or ill-conditioned.
pub fn fit_meta(loo: &[[f64; 3]], y: &[f64]) -> Result<Meta> {
    if loo.len() != y.len() {
        return Err(Error::invalid("meta inputs and response differ in length"));
    }
    if loo.len() <= 4 {
        return Err(Error::invalid(format!("meta-model needs n > 4, got {}", loo.len())));
    }
    let (a, b) = normal_equations(loo, y);
    solve_meta(a, b)
}

/// Leave-one-out RMSE of the stacked model: each row is predicted from its
/// held-out base predictions by a meta-model refitted without that row.
pub fn stacked_loo_rmse(loo: &[[f64; 3]], y: &[f64]) -> Result<f64> {
    if loo.len() != y.len() || loo.len() <= 5 {
        return Err(Error::invalid("stacked LOO RMSE needs n > 5 matched rows"));
    }
    let (a, b) = normal_equations(loo, y);
    let mut sse = 0.0;
    for (r, &yi) in loo.iter().zip(y) {
        let x = design(r);
        let mut ai = a;
        let mut bi = b;
        for i in 0..4 {
            bi[i] -= x[i] * yi;
            for j in 0..4 {
                ai[i][j] -= x[i] * x[j];
            }
        }
        let meta = solve_meta(ai, bi)?;
        let e = yi - meta.apply(*r);
        sse += e * e;
    }
    Ok((sse / loo.len() as f64).sqrt())
}

/// Fits the three base learners on all rows, and the meta-model on their
/// leave-one-out predictions. `loo_reduction` > 1 shrinks the tree
/// ensembles used for the leave-one-out refits only.
pub fn train_ensemble(ds: &Dataset, hps: &EnsembleParams, seed: u64, loo_reduction: usize) -> Result<StackedEnsemble> {
    let loo = loo_component_predictions(ds, &hps.reduced(loo_reduction), seed)?;
    let meta = fit_meta(&loo, &ds.y)?;
    let full: Vec<TrainedModel> = LearnerKind::ALL
        .par_iter()
        .enumerate()
        .map(|(m, k)| train(ds, &hps.get(*k), derive_seed(seed, &[u64::MAX, m as u64])))
        .collect::<Result<_>>()?;
    let mut it = full.into_iter();
    Ok(StackedEnsemble {
        rf: it.next().unwrap(),
        gbt: it.next().unwrap(),
        svr: it.next().unwrap(),
        meta,
        loo,
        feature_names: ds.feature_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::friedmanish;
    use rand::Rng;

    fn small(ds: &Dataset) -> EnsembleParams {
        EnsembleParams {
            rf: RfParams { n_trees: 20, ..RfParams::default_for(ds.p) },
            gbt: GbtParams { n_rounds: 20, ..GbtParams::default() },
            svr: SvrParams::default_for(ds),
        }
    }

    #[test]
    fn loo_constant_response() {
        let mut ds = friedmanish(3, 2, 0.0, 1);
        ds.y = vec![4.5; 3];
        let hp = EnsembleParams {
            rf: RfParams { n_trees: 10, mtry: 1, min_leaf: 1 },
            ..small(&ds)
        };
        let loo = loo_component_predictions(&ds, &hp, 3).unwrap();
        for r in &loo {
            assert_eq!(r[0], 4.5);
            assert_eq!(r[1], 4.5);
            assert!((r[2] - 4.5).abs() <= hp.svr.epsilon);
        }
    }

    #[test]
    fn held_out_response_does_not_leak() {
        let ds = friedmanish(12, 3, 0.5, 2);
        let hp = small(&ds);
        let base = loo_component_predictions(&ds, &hp, 8).unwrap();
        let mut bumped = ds.clone();
        bumped.y[5] += 100.0;
        let after = loo_component_predictions(&bumped, &hp, 8).unwrap();
        assert_eq!(base[5][0], after[5][0]);
        assert_eq!(base[5][1], after[5][1]);
        assert_eq!(base[5][2], after[5][2]);
        assert_ne!(base[4], after[4]);
    }

    #[test]
    fn loo_matches_naive_refits() {
        let ds = friedmanish(10, 3, 0.5, 3);
        let hp = small(&ds);
        let loo = loo_component_predictions(&ds, &hp, 21).unwrap();
        for i in 0..10 {
            let rows: Vec<usize> = (0..10).filter(|&r| r != i).collect();
            let sub = ds.subset(&rows);
            let rf = crate::learners::train_rf(&sub, &hp.rf, derive_seed(21, &[i as u64, 0])).unwrap();
            let gbt = crate::learners::train_gbt(&sub, &hp.gbt, derive_seed(21, &[i as u64, 1])).unwrap();
            let svr = crate::learners::train_svr(&sub, &hp.svr).unwrap();
            assert_eq!(loo[i], [rf.predict(ds.row(i)), gbt.predict(ds.row(i)), svr.predict(ds.row(i))]);
        }
    }

    #[test]
    fn meta_exact_column() {
        let mut r = crate::seeds::rng(4);
        let loo: Vec<[f64; 3]> = (0..20).map(|_| [r.random(), r.random(), r.random()]).collect();
        let y: Vec<f64> = loo.iter().map(|v| v[0]).collect();
        let m = fit_meta(&loo, &y).unwrap();
        assert!(!m.ridge_fallback);
        for (c, e) in m.coef.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert!((c - e).abs() < 1e-10, "{:?}", m.coef);
        }
    }

    #[test]
    fn meta_collinear_falls_back_to_ridge() {
        let mut r = crate::seeds::rng(5);
        let p: Vec<f64> = (0..30).map(|_| r.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = p.iter().map(|v| 3.0 + 0.8 * v + r.random_range(-5.0..5.0)).collect();
        let loo: Vec<[f64; 3]> = p.iter().map(|&v| [v, v, v]).collect();
        let m = fit_meta(&loo, &y).unwrap();
        assert!(m.ridge_fallback);
        // simple regression of y on p
        let (mp, my) = (p.iter().sum::<f64>() / 30.0, y.iter().sum::<f64>() / 30.0);
        let sxy: f64 = p.iter().zip(&y).map(|(a, b)| (a - mp) * (b - my)).sum();
        let sxx: f64 = p.iter().map(|a| (a - mp) * (a - mp)).sum();
        let (b1, b0) = (sxy / sxx, my - sxy / sxx * mp);
        for (i, &v) in p.iter().enumerate() {
            assert!((m.apply(loo[i]) - (b0 + b1 * v)).abs() < 1e-4);
        }
    }

    #[test]
    fn meta_matches_nalgebra_oracle() {
        let mut r = crate::seeds::rng(6);
        let loo: Vec<[f64; 3]> = (0..50).map(|_| [r.random_range(0.0..50.0), r.random_range(0.0..50.0), r.random_range(0.0..50.0)]).collect();
        let y: Vec<f64> = loo.iter().map(|v| 2.0 + 0.3 * v[0] + 0.5 * v[1] + 0.1 * v[2] + r.random_range(-3.0..3.0)).collect();
        let m = fit_meta(&loo, &y).unwrap();
        let x = nalgebra::DMatrix::from_fn(50, 4, |i, j| if j == 0 { 1.0 } else { loo[i][j - 1] });
        let yv = nalgebra::DVector::from_vec(y.clone());
        let beta = x.clone().svd(true, true).solve(&yv, 1e-14).unwrap();
        for j in 0..4 {
            assert!((m.coef[j] - beta[j]).abs() < 1e-8, "{j}: {} vs {}", m.coef[j], beta[j]);
        }
        let resid: f64 = (0..50).map(|i| y[i] - m.apply(loo[i])).sum();
        assert!(resid.abs() < 1e-8);
    }

    #[test]
    fn stacked_loo_rmse_matches_explicit_refits() {
        let mut r = crate::seeds::rng(7);
        let loo: Vec<[f64; 3]> = (0..25).map(|_| [r.random_range(0.0..10.0), r.random_range(0.0..10.0), r.random_range(0.0..10.0)]).collect();
        let y: Vec<f64> = loo.iter().map(|v| v[0] + v[2] + r.random_range(-1.0..1.0)).collect();
        let fast = stacked_loo_rmse(&loo, &y).unwrap();
        let mut sse = 0.0;
        for i in 0..25 {
            let (l, yy): (Vec<_>, Vec<_>) = (0..25).filter(|&j| j != i).map(|j| (loo[j], y[j])).unzip();
            let m = fit_meta(&l, &yy).unwrap();
            sse += (y[i] - m.apply(loo[i])).powi(2);
        }
        assert!((fast - (sse / 25.0).sqrt()).abs() < 1e-9);
    }

    fn fake_ensemble(coef: [f64; 4]) -> StackedEnsemble {
        let ds = friedmanish(30, 2, 0.5, 8);
        let hp = small(&ds);
        let e = train_ensemble(&ds, &hp, 1, 1).unwrap();
        StackedEnsemble {
            meta: Meta { coef, ridge_fallback: false },
            ..e
        }
    }

    #[test]
    fn prediction_is_linear_in_meta() {
        let a = fake_ensemble([0.0, 1.0, 0.0, 0.0]);
        let x = [0.3, 0.9];
        assert_eq!(a.predict(&x), a.rf.predict(&x));
        let c = StackedEnsemble { meta: Meta { coef: [7.0, 0.0, 0.0, 0.0], ridge_fallback: false }, ..a.clone() };
        assert_eq!(c.predict(&x), 7.0);
        let m1 = [1.0, 0.2, 0.3, 0.4];
        let m2 = [-2.0, 0.5, -0.1, 0.6];
        let sum = [m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2], m1[3] + m2[3]];
        let with = |m| StackedEnsemble { meta: Meta { coef: m, ridge_fallback: false }, ..a.clone() };
        assert!((with(m1).predict(&x) + with(m2).predict(&x) - with(sum).predict(&x)).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotated() {
        let d = [[4.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let mut ev = sym_eigenvalues(d);
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, [1.0, 2.0, 3.0, 4.0]);
        let a = [[2.0, 1.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 5.0, 0.0], [0.0, 0.0, 0.0, 5.0]];
        let mut ev = sym_eigenvalues(a);
        ev.sort_by(f64::total_cmp);
        for (v, e) in ev.iter().zip([1.0, 3.0, 5.0, 5.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }
}
