use super::{Dataset, SvrParams};
use crate::{stats, Result};

pub const SVR_DEFAULT_TOL: f64 = 1e-3;
pub const SVR_DEFAULT_MAX_ITER: usize = 10_000_000;

const TAU: f64 = 1e-12;

/// RBF ε-SVR fitted on standardized predictors and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Svr {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub gamma: f64,
    /// Support vectors in standardized units, row-major.
    pub support: Vec<f64>,
    /// Dual coefficients αᵢ − αᵢ*, one per support vector.
    pub coef: Vec<f64>,
    /// Intercept in standardized units.
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective at the returned solution (standardized units).
    pub objective: f64,
}

impl Svr {
    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let p = self.x_mean.len();
        let z: Vec<f64> = (0..p).map(|j| (x[j] - self.x_mean[j]) / self.x_scale[j]).collect();
        let mut f = self.bias;
        for (sv, c) in self.support.chunks(p).zip(&self.coef) {
            f += c * rbf(sv, &z, self.gamma);
        }
        self.y_mean + self.y_scale * f
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

/// Train-set mean and sd per column; constant columns get scale 1.
pub(crate) fn standardize(ds: &Dataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; ds.p];
    let mut scale = vec![1.0; ds.p];
    let mut col = vec![0.0; ds.n];
    for j in 0..ds.p {
        for i in 0..ds.n {
            col[i] = ds.x[i * ds.p + j];
        }
        mean[j] = stats::mean(&col);
        let sd = stats::sample_sd(&col);
        if sd > 0.0 {
            scale[j] = sd;
        }
    }
    let z = (0..ds.n * ds.p).map(|k| (ds.x[k] - mean[k % ds.p]) / scale[k % ds.p]).collect();
    (z, mean, scale)
}

pub fn train_svr(ds: &Dataset, hp: &SvrParams) -> Result<Svr> {
    train_svr_with(ds, hp, SVR_DEFAULT_TOL, SVR_DEFAULT_MAX_ITER)
}

/// SMO with second-order working-set selection on the 2n-variable dual.
/// Stops when the maximal KKT violation falls below `tol`; reaching
/// `max_iter` first leaves `converged = false`.
pub fn train_svr_with(ds: &Dataset, hp: &SvrParams, tol: f64, max_iter: usize) -> Result<Svr> {
    hp.validate()?;
    let (z, x_mean, x_scale) = standardize(ds);
    let y_mean = stats::mean(&ds.y);
    let sd = stats::sample_sd(&ds.y);
    let y_scale = if sd > 0.0 { sd } else { 1.0 };
    let yz: Vec<f64> = ds.y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let eps = hp.epsilon / y_scale;
    let c = hp.c;
    let (n, p) = (ds.n, ds.p);

    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(&z[i * p..(i + 1) * p], &z[j * p..(j + 1) * p], hp.gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let base = |t: usize| if t < n { t } else { t - n };
    // Q_ts = s_t s_s K
    let q = |t: usize, s: usize| sign(t) * sign(s) * k[base(t) * n + base(s)];
    let lin: Vec<f64> = (0..l).map(|t| if t < n { eps - yz[t] } else { eps + yz[t - n] }).collect();
    let mut alpha = vec![0.0; l];
    let mut grad = lin.clone();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter {
        // working set: maximal violator, then second-order partner
        let (mut gmax, mut gmax2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if !upper(alpha[t]) && -grad[t] >= gmax {
                gmax = -grad[t];
                i_sel = t;
            }
        }
        for t in n..l {
            if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = t;
            }
        }
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            // s_i Q_it = s_t K, so the curvature is 2 - 2K in both halves
            let krow = &k[base(i_sel) * n..base(i_sel) * n + n];
            let mut consider = |t: usize, diff: f64, kv: f64| {
                if diff > 0.0 {
                    let quad = 2.0 - 2.0 * kv;
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            };
            for t in 0..n {
                if lower(alpha[t]) {
                    continue;
                }
                gmax2 = gmax2.max(grad[t]);
                consider(t, gmax + grad[t], krow[t]);
            }
            for t in n..l {
                if upper(alpha[t]) {
                    continue;
                }
                gmax2 = gmax2.max(-grad[t]);
                consider(t, gmax - grad[t], krow[t - n]);
            }
        }
        if gmax + gmax2 < tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if sign(i) != sign(j) {
            let quad = (2.0 + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        // rows t and t + n differ only in sign
        let (a, b) = (sign(i) * di, sign(j) * dj);
        let (ki, kj) = (&k[base(i) * n..base(i) * n + n], &k[base(j) * n..base(j) * n + n]);
        let (gp, gm) = grad.split_at_mut(n);
        for t in 0..n {
            let u = ki[t] * a + kj[t] * b;
            gp[t] += u;
            gm[t] -= u;
        }
    }

    // intercept from free variables, else midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if upper(alpha[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    let objective = 0.5 * (0..l).map(|t| alpha[t] * (grad[t] + lin[t])).sum::<f64>();

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        let b = alpha[i] - alpha[i + n];
        if b != 0.0 {
            support.extend_from_slice(&z[i * p..(i + 1) * p]);
            coef.push(b);
        }
    }
    Ok(Svr {
        x_mean,
        x_scale,
        y_mean,
        y_scale,
        gamma: hp.gamma,
        support,
        coef,
        bias: -rho,
        converged,
        iterations: iter,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::rmse;
    use crate::learners::testdata::friedmanish;

    /// Dual in β = α − α*: ½βᵀKβ + ε‖β‖₁ − yᵀβ with Σβ = 0, |β| ≤ C.
    fn dual(k: &[f64], y: &[f64], eps: f64, beta: &[f64]) -> f64 {
        let n = y.len();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += beta[i] * beta[j] * k[i * n + j];
            }
        }
        0.5 * q + eps * beta.iter().map(|b| b.abs()).sum::<f64>() - y.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn objective_matches_grid_oracle() {
        let x = vec![0.0, 0.7, 1.1, 2.5, 3.0];
        let y = vec![1.0, 2.1, 1.7, 4.0, 3.2];
        let ds = Dataset::new(x.clone(), 1, y.clone(), vec!["x".into()]).unwrap();
        let hp = SvrParams { c: 1.0, epsilon: 0.1, gamma: 0.8 };
        let m = train_svr_with(&ds, &hp, 1e-8, SVR_DEFAULT_MAX_ITER).unwrap();
        assert!(m.converged);

        // oracle problem built independently in standardized units
        let mx = x.iter().sum::<f64>() / 5.0;
        let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 4.0).sqrt();
        let my = y.iter().sum::<f64>() / 5.0;
        let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 4.0).sqrt();
        let zx: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();
        let zy: Vec<f64> = y.iter().map(|v| (v - my) / sy).collect();
        let mut k = vec![0.0; 25];
        for i in 0..5 {
            for j in 0..5 {
                k[i * 5 + j] = (-0.8 * (zx[i] - zx[j]).powi(2)).exp();
            }
        }
        let eps = 0.1 / sy;
        let eval = |b4: &[f64; 4]| -> f64 {
            let last = -(b4[0] + b4[1] + b4[2] + b4[3]);
            if last.abs() > 1.0 {
                return f64::INFINITY;
            }
            dual(&k, &zy, eps, &[b4[0], b4[1], b4[2], b4[3], last])
        };
        let mut best = ([0.0; 4], f64::INFINITY);
        let coarse: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
        for &a in &coarse {
            for &b in &coarse {
                for &c in &coarse {
                    for &d in &coarse {
                        let v = eval(&[a, b, c, d]);
                        if v < best.1 {
                            best = ([a, b, c, d], v);
                        }
                    }
                }
            }
        }
        for step in [0.02, 0.004, 0.0008, 0.00016] {
            let center = best.0;
            for a in -5..=5 {
                for b in -5..=5 {
                    for c in -5..=5 {
                        for d in -5..=5 {
                            let cand = [
                                (center[0] + a as f64 * step).clamp(-1.0, 1.0),
                                (center[1] + b as f64 * step).clamp(-1.0, 1.0),
                                (center[2] + c as f64 * step).clamp(-1.0, 1.0),
                                (center[3] + d as f64 * step).clamp(-1.0, 1.0),
                            ];
                            let v = eval(&cand);
                            if v < best.1 {
                                best = (cand, v);
                            }
                        }
                    }
                }
            }
        }
        assert!((m.objective - best.1).abs() < 1e-2, "smo {} vs grid {}", m.objective, best.1);
        assert!(m.objective <= best.1 + 1e-6);
    }

    #[test]
    fn duplicate_rows_do_not_move_predictions() {
        let ds = friedmanish(40, 2, 0.3, 1);
        let hp = SvrParams::default_for(&ds);
        let a = train_svr(&ds, &hp).unwrap();
        let rows: Vec<usize> = (0..40).chain(0..40).collect();
        let dd = ds.subset(&rows);
        let b = train_svr(&dd, &SvrParams { c: hp.c / 2.0, ..hp }).unwrap();
        // doubling every row with C halved is the same problem up to scaling of sd
        let probe = friedmanish(20, 2, 0.0, 2);
        for i in 0..probe.n {
            let (pa, pb) = (a.predict(probe.row(i)), b.predict(probe.row(i)));
            assert!((pa - pb).abs() < 0.05 * hp.epsilon.max(1.0), "{pa} vs {pb}");
        }
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let ds = friedmanish(60, 3, 0.3, 3);
        let m = train_svr_with(&ds, &SvrParams::default_for(&ds), 1e-3, 3).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
        assert!(m.predict(ds.row(0)).is_finite());
    }

    #[test]
    fn learns_signal() {
        let train = friedmanish(200, 2, 0.3, 4);
        let test = friedmanish(100, 2, 0.0, 5);
        let m = train_svr(&train, &SvrParams::default_for(&train)).unwrap();
        assert!(m.converged);
        let pred: Vec<f64> = (0..test.n).map(|i| m.predict(test.row(i))).collect();
        assert!(rmse(&test.y, &pred) < 0.25 * crate::stats::sample_sd(&test.y));
    }
}
