use rayon::prelude::*;
use rand::Rng;

use crate::seeds::derived_rng;
use crate::stats::{mean, sample_sd, sample_variance};
use crate::{Error, Result};

/// Point agreement metrics between reference `y` and predictions `ŷ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub n: usize,
    pub y_mean: f64,
    pub rmse: f64,
    pub mae: f64,
    /// mean(y − ŷ): positive when the map under-predicts.
    pub me: f64,
    /// `None` when y is constant but predictions are not.
    pub r2: Option<f64>,
    /// `None` unless ȳ > 0.
    pub pct_rmse: Option<f64>,
    pub pct_mae: Option<f64>,
}

/// Point metrics plus their standard errors. SEs are `None` for a single
/// observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBundle {
    pub point: PointMetrics,
    pub se_rmse: Option<f64>,
    pub se_r2: Option<f64>,
    pub se_mae: Option<f64>,
    pub se_me: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub bootstrap_reps: usize,
    /// Divide the analytic SE by √n. Off by default: the printed formula is
    /// a plain sample standard deviation.
    pub divide_sqrt_n: bool,
}

impl Default for SeOptions {
    fn default() -> Self {
        SeOptions {
            bootstrap_reps: 1000,
            divide_sqrt_n: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSe {
    pub se_rmse: f64,
    /// `None` when fewer than two replicates have a defined R².
    pub se_r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmfrLine {
    pub slope: f64,
    pub intercept: f64,
}

impl GmfrLine {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

fn check_pairs(y: &[f64], yhat: &[f64], min_n: usize) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!(
            "reference and prediction lengths differ ({} vs {})",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < min_n {
        return Err(Error::invalid(format!("need at least {min_n} pairs, got {}", y.len())));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in metric input"));
    }
    Ok(())
}

/// Pairs sorted by (y, ŷ) so every statistic, including bootstrap draws,
/// is independent of input order.
fn canonical(y: &[f64], yhat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = y.iter().copied().zip(yhat.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.into_iter().unzip()
}

fn r_squared(sse: f64, y: &[f64], y_mean: f64) -> Option<f64> {
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    if sst > 0.0 {
        Some(1.0 - sse / sst)
    } else if sse == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

pub(crate) fn point_metrics_unchecked(y: &[f64], yhat: &[f64]) -> PointMetrics {
    let (y, yhat) = canonical(y, yhat);
    let n = y.len();
    let nf = n as f64;
    let e: Vec<f64> = y.iter().zip(&yhat).map(|(a, b)| a - b).collect();
    let sse: f64 = e.iter().map(|v| v * v).sum();
    let rmse = (sse / nf).sqrt();
    let mae = e.iter().map(|v| v.abs()).sum::<f64>() / nf;
    let me = e.iter().sum::<f64>() / nf;
    let y_mean = mean(&y);
    let pct = |m: f64| (y_mean > 0.0).then(|| 100.0 * m / y_mean);
    PointMetrics {
        n,
        y_mean,
        rmse,
        mae,
        me,
        r2: r_squared(sse, &y, y_mean),
        pct_rmse: pct(rmse),
        pct_mae: pct(mae),
    }
}

/// RMSE, %RMSE, MAE, %MAE, ME and R² for at least two pairs.
pub fn accuracy_metrics(y: &[f64], yhat: &[f64]) -> Result<PointMetrics> {
    check_pairs(y, yhat, 2)?;
    Ok(point_metrics_unchecked(y, yhat))
}

/// Bootstrap standard errors of RMSE and R²: `B` resamples of the pairs,
/// variance across replicates (B − 1 denominator), then √(Var/n).
pub fn bootstrap_se(y: &[f64], yhat: &[f64], reps: usize, seed: u64) -> Result<BootstrapSe> {
    check_pairs(y, yhat, 2)?;
    if reps < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {reps}")));
    }
    let (y, yhat) = canonical(y, yhat);
    let n = y.len();
    let reps_out: Vec<(f64, Option<f64>)> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = derived_rng(seed, &[b as u64]);
            let mut ys = Vec::with_capacity(n);
            let mut sse = 0.0;
            for _ in 0..n {
                let i = rng.random_range(0..n);
                let e = y[i] - yhat[i];
                sse += e * e;
                ys.push(y[i]);
            }
            let ym = mean(&ys);
            ((sse / n as f64).sqrt(), r_squared(sse, &ys, ym))
        })
        .collect();
    let rmses: Vec<f64> = reps_out.iter().map(|r| r.0).collect();
    let r2s: Vec<f64> = reps_out.iter().filter_map(|r| r.1).collect();
    let nf = n as f64;
    Ok(BootstrapSe {
        se_rmse: (sample_variance(&rmses) / nf).sqrt(),
        se_r2: (r2s.len() >= 2).then(|| (sample_variance(&r2s) / nf).sqrt()),
    })
}

/// Sample standard deviation of `errors` (n − 1 denominator), optionally
/// divided by √n.
pub fn analytic_se(errors: &[f64], divide_sqrt_n: bool) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 errors, got {}", errors.len())));
    }
    let sd = sample_sd(errors);
    Ok(if divide_sqrt_n {
        sd / (errors.len() as f64).sqrt()
    } else {
        sd
    })
}

/// Point metrics with all four standard errors. Accepts a single pair, in
/// which case the SEs are `None`.
pub fn metric_bundle(y: &[f64], yhat: &[f64], opts: &SeOptions, seed: u64) -> Result<MetricBundle> {
    check_pairs(y, yhat, 1)?;
    let point = point_metrics_unchecked(y, yhat);
    if y.len() < 2 {
        return Ok(MetricBundle {
            point,
            se_rmse: None,
            se_r2: None,
            se_mae: None,
            se_me: None,
        });
    }
    let boot = bootstrap_se(y, yhat, opts.bootstrap_reps, seed)?;
    let (y, yhat) = canonical(y, yhat);
    let e: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| a - b).collect();
    let abs_e: Vec<f64> = e.iter().map(|v| v.abs()).collect();
    Ok(MetricBundle {
        point,
        se_rmse: Some(boot.se_rmse),
        se_r2: boot.se_r2,
        se_mae: Some(analytic_se(&abs_e, opts.divide_sqrt_n)?),
        se_me: Some(analytic_se(&e, opts.divide_sqrt_n)?),
    })
}

/// Geometric-mean functional regression of `y` on `x`. Uncorrelated inputs
/// get a positive slope.
pub fn gmfr(x: &[f64], y: &[f64]) -> Result<GmfrLine> {
    check_pairs(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::invalid("GMFR needs non-constant x and y"));
    }
    let slope = if sxy < 0.0 { -1.0 } else { 1.0 } * (syy / sxx).sqrt();
    Ok(GmfrLine {
        slope,
        intercept: my - slope * mx,
    })
}
