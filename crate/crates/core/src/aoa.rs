//! Area of applicability: cluster-based permutation importance, a weighted
//! dissimilarity index against the training data, its threshold, and the
//! resulting pixel mask.

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;

use crate::ensemble::{loo_component_predictions, stacked_loo_rmse, EnsembleParams};
use crate::geodata::Raster;
use crate::learners::{Dataset, GbtParams, RfParams, SvrParams};
use crate::seeds::{derive_seed, label_hash, rng};
use crate::{stats, Error, Result};

pub const N_CLUSTERS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster label per predictor; labels are numbered by the smallest
    /// predictor index they contain.
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    /// Set when there were fewer predictors than clusters and every
    /// predictor became its own cluster.
    pub singleton_fallback: bool,
}

impl Clustering {
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&j| self.assignment[j] == c).collect()
    }
}

fn column(ds: &Dataset, j: usize) -> Vec<f64> {
    (0..ds.n).map(|i| ds.x[i * ds.p + j]).collect()
}

/// Spearman correlation matrix of the predictor columns; the diagonal is 1
/// even for constant columns.
pub fn spearman_matrix(ds: &Dataset) -> Vec<f64> {
    let ranks: Vec<Vec<f64>> = (0..ds.p).map(|j| stats::average_ranks(&column(ds, j))).collect();
    let p = ds.p;
    let mut m = vec![0.0; p * p];
    for a in 0..p {
        m[a * p + a] = 1.0;
        for b in 0..a {
            let r = stats::pearson(&ranks[a], &ranks[b]);
            m[a * p + b] = r;
            m[b * p + a] = r;
        }
    }
    m
}

/// Average-linkage agglomerative clustering of predictors, where two
/// predictors are as far apart as their Spearman-correlation profiles.
/// Stops at [`N_CLUSTERS`] clusters; equal distances merge the pair with
/// the lowest indices first.
pub fn cluster_predictors(ds: &Dataset) -> Clustering {
    let p = ds.p;
    if p < N_CLUSTERS {
        return Clustering {
            assignment: (0..p).collect(),
            n_clusters: p,
            singleton_fallback: true,
        };
    }
    let corr = spearman_matrix(ds);
    let mut d = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..a {
            let s: f64 = (0..p).map(|k| (corr[a * p + k] - corr[b * p + k]).powi(2)).sum();
            d[a * p + b] = s.sqrt();
            d[b * p + a] = s.sqrt();
        }
    }
    // clusters as member lists; merged clusters are retired with None
    let mut clusters: Vec<Option<Vec<usize>>> = (0..p).map(|j| Some(vec![j])).collect();
    let mut alive = p;
    while alive > N_CLUSTERS {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..p {
            let Some(ca) = &clusters[a] else { continue };
            for b in a + 1..p {
                let Some(cb) = &clusters[b] else { continue };
                let mut s = 0.0;
                for &i in ca {
                    for &j in cb {
                        s += d[i * p + j];
                    }
                }
                let avg = s / (ca.len() * cb.len()) as f64;
                if best.is_none_or(|(bd, ..)| avg < bd) {
                    best = Some((avg, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters remain");
        let mut merged = clusters[a].take().unwrap();
        merged.extend(clusters[b].take().unwrap());
        merged.sort_unstable();
        clusters[a] = Some(merged);
        alive -= 1;
    }
    let mut groups: Vec<Vec<usize>> = clusters.into_iter().flatten().collect();
    groups.sort_by_key(|g| g[0]);
    let mut assignment = vec![0; p];
    for (c, g) in groups.iter().enumerate() {
        for &j in g {
            assignment[j] = c;
        }
    }
    Clustering {
        assignment,
        n_clusters: groups.len(),
        singleton_fallback: false,
    }
}

/// Model sizes for the importance refits. The defaults are the learners'
/// default hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceOptions {
    pub rf_trees: usize,
    pub gbt_rounds: usize,
    pub loo_reduction: usize,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            rf_trees: 500,
            gbt_rounds: 500,
            loo_reduction: 1,
        }
    }
}

impl ImportanceOptions {
    fn params(&self, ds: &Dataset) -> EnsembleParams {
        EnsembleParams {
            rf: RfParams {
                n_trees: self.rf_trees,
                ..RfParams::default_for(ds.p)
            },
            gbt: GbtParams {
                n_rounds: self.gbt_rounds,
                ..GbtParams::default()
            },
            svr: SvrParams::default_for(ds),
        }
        .reduced(self.loo_reduction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    pub names: Vec<String>,
    /// Non-negative, summing to 1.
    pub weights: Vec<f64>,
    /// Clamped RMSE increase per predictor, before normalization.
    pub deltas: Vec<f64>,
    /// Stacked LOO-CV RMSE of the unshuffled model on all predictors.
    pub rmse_full: f64,
    /// Per predictor, the names of the representatives it was paired with.
    pub representatives: Vec<Vec<String>>,
    pub uniform_fallback: bool,
}

/// Stacked-ensemble LOO-CV RMSE for a design.
fn design_rmse(ds: &Dataset, opts: &ImportanceOptions, seed: u64) -> Result<f64> {
    let loo = loo_component_predictions(ds, &opts.params(ds), seed)?;
    stacked_loo_rmse(&loo, &ds.y)
}

/// Permutation importance over cluster designs. For predictor j the design
/// holds j plus one seeded-random member of every other cluster; j's column
/// is shuffled and the RMSE increase over the full model is its raw
/// importance. All randomness is keyed by predictor name, so the weights do
/// not depend on column order.
pub fn permutation_importance(
    ds: &Dataset,
    clustering: &Clustering,
    opts: &ImportanceOptions,
    seed: u64,
) -> Result<ImportanceWeights> {
    if clustering.assignment.len() != ds.p {
        return Err(Error::invalid("clustering does not match the predictor count"));
    }
    // canonical order: by name
    let mut order: Vec<usize> = (0..ds.p).collect();
    order.sort_by(|&a, &b| ds.feature_names[a].cmp(&ds.feature_names[b]));
    let canon_members = |c: usize| -> Vec<usize> {
        order.iter().copied().filter(|&j| clustering.assignment[j] == c).collect()
    };
    let mut cluster_order: Vec<usize> = (0..clustering.n_clusters).collect();
    cluster_order.retain(|&c| !canon_members(c).is_empty());
    cluster_order.sort_by_key(|&c| canon_members(c).first().map(|&j| ds.feature_names[j].clone()));

    let canonical = {
        let mut x = Vec::with_capacity(ds.n * ds.p);
        for i in 0..ds.n {
            x.extend(order.iter().map(|&j| ds.x[i * ds.p + j]));
        }
        let names = order.iter().map(|&j| ds.feature_names[j].clone()).collect();
        Dataset::new(x, ds.p, ds.y.clone(), names)?
    };
    let rmse_full = design_rmse(&canonical, opts, derive_seed(seed, &[0]))?;

    let results: Vec<(f64, Vec<usize>)> = (0..ds.p)
        .into_par_iter()
        .map(|j| {
            let key = label_hash(&ds.feature_names[j]);
            let mut r = rng(derive_seed(seed, &[1, key]));
            let mut cols = vec![j];
            for &c in &cluster_order {
                if c == clustering.assignment[j] {
                    continue;
                }
                cols.push(*canon_members(c).choose(&mut r).expect("non-empty cluster"));
            }
            let mut x = Vec::with_capacity(ds.n * cols.len());
            for i in 0..ds.n {
                for &c in &cols {
                    x.push(ds.x[i * ds.p + c]);
                }
            }
            let mut perm: Vec<usize> = (0..ds.n).collect();
            perm.shuffle(&mut r);
            let k = cols.len();
            let orig: Vec<f64> = (0..ds.n).map(|i| x[i * k]).collect();
            for i in 0..ds.n {
                x[i * k] = orig[perm[i]];
            }
            let names = cols.iter().map(|&c| ds.feature_names[c].clone()).collect();
            let design = Dataset::new(x, k, ds.y.clone(), names)?;
            let rmse = design_rmse(&design, opts, derive_seed(seed, &[2, key]))?;
            Ok((rmse, cols[1..].to_vec()))
        })
        .collect::<Result<_>>()?;

    let deltas: Vec<f64> = results.iter().map(|(r, _)| (r - rmse_full).max(0.0)).collect();
    let total: f64 = deltas.iter().sum();
    let uniform_fallback = total <= 0.0;
    let weights = if uniform_fallback {
        vec![1.0 / ds.p as f64; ds.p]
    } else {
        deltas.iter().map(|d| d / total).collect()
    };
    Ok(ImportanceWeights {
        names: ds.feature_names.clone(),
        weights,
        deltas,
        rmse_full,
        representatives: results
            .into_iter()
            .map(|(_, reps)| reps.into_iter().map(|c| ds.feature_names[c].clone()).collect())
            .collect(),
        uniform_fallback,
    })
}

/// Normalizes raw non-negative deltas into weights, uniform when all are 0.
pub fn normalize_deltas(deltas: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = deltas.iter().map(|d| d.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        vec![1.0 / deltas.len() as f64; deltas.len()]
    } else {
        clamped.iter().map(|d| d / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainDistance {
    /// Mean distance over all pairs of training rows.
    MeanPairwise,
    /// Mean distance from each training row to its nearest other row.
    MeanNearestNeighbor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiStats {
    pub train_means: Vec<f64>,
    pub train_sds: Vec<f64>,
    /// Effective weights: zero for dropped zero-variance predictors, the
    /// rest rescaled to sum to 1.
    pub weights: Vec<f64>,
    /// Standardized, weighted training rows, row-major.
    pub train_scaled: Vec<f64>,
    pub n_train: usize,
    pub mean_train_distance: f64,
    pub threshold: f64,
}

impl DiStats {
    pub fn p(&self) -> usize {
        self.train_means.len()
    }

    fn scale(&self, v: &[f64], out: &mut [f64]) {
        for j in 0..self.p() {
            out[j] = if self.weights[j] > 0.0 {
                (v[j] - self.train_means[j]) / self.train_sds[j] * self.weights[j]
            } else {
                0.0
            };
        }
    }

    pub fn retained(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Training-side statistics for the dissimilarity index. The threshold is
/// left at 0 until [`aoa_threshold`] is applied.
pub fn fit_di_stats(train: &Dataset, weights: &[f64], mode: TrainDistance) -> Result<DiStats> {
    if weights.len() != train.p {
        return Err(Error::invalid("one weight per predictor is required"));
    }
    let mut means = vec![0.0; train.p];
    let mut sds = vec![0.0; train.p];
    let mut w = weights.to_vec();
    for j in 0..train.p {
        let col = column(train, j);
        means[j] = stats::mean(&col);
        sds[j] = stats::sample_sd(&col);
        if sds[j] <= 0.0 {
            w[j] = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("no predictor with both positive weight and variance"));
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    let mut s = DiStats {
        train_means: means,
        train_sds: sds,
        weights: w,
        train_scaled: vec![0.0; train.n * train.p],
        n_train: train.n,
        mean_train_distance: 0.0,
        threshold: 0.0,
    };
    let p = train.p;
    let mut scaled = vec![0.0; train.n * p];
    for i in 0..train.n {
        s.scale(train.row(i), &mut scaled[i * p..(i + 1) * p]);
    }
    s.train_scaled = scaled;
    let rows = |i: usize| &s.train_scaled[i * p..(i + 1) * p];
    let per_row: Vec<f64> = (0..train.n)
        .into_par_iter()
        .map(|i| match mode {
            TrainDistance::MeanPairwise => (i + 1..train.n).map(|k| dist(rows(i), rows(k))).sum::<f64>(),
            TrainDistance::MeanNearestNeighbor => (0..train.n)
                .filter(|&k| k != i)
                .map(|k| dist(rows(i), rows(k)))
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    let n = train.n as f64;
    s.mean_train_distance = match mode {
        TrainDistance::MeanPairwise => per_row.iter().sum::<f64>() / (n * (n - 1.0) / 2.0),
        TrainDistance::MeanNearestNeighbor => per_row.iter().sum::<f64>() / n,
    };
    if !(s.mean_train_distance > 0.0) {
        return Err(Error::invalid("training rows coincide in weighted predictor space"));
    }
    Ok(s)
}

/// Minimum weighted, standardized distance to any training row, divided by
/// the mean training distance.
pub fn dissimilarity_index(point: &[f64], s: &DiStats) -> f64 {
    let p = s.p();
    let mut q = vec![0.0; p];
    s.scale(point, &mut q);
    let mut best = f64::INFINITY;
    for row in s.train_scaled.chunks(p) {
        let mut d2 = 0.0;
        for (a, b) in row.iter().zip(&q) {
            d2 += (a - b) * (a - b);
        }
        best = best.min(d2);
    }
    best.sqrt() / s.mean_train_distance
}

/// Q75 + 1.5·IQR of the test-partition DIs.
pub fn aoa_threshold(test_dis: &[f64]) -> Result<f64> {
    aoa_threshold_with(test_dis, 0.25, 0.75, 1.5)
}

/// `Q(q_high) + k·(Q(q_high) − Q(q_low))` of the test-partition DIs.
pub fn aoa_threshold_with(test_dis: &[f64], q_low: f64, q_high: f64, k: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_low) || !(0.0..=1.0).contains(&q_high) || q_low > q_high || !(k >= 0.0) {
        return Err(Error::Config(format!("invalid AOA quantile rule ({q_low}, {q_high}, {k})")));
    }
    if test_dis.len() < 4 {
        return Err(Error::invalid(format!("threshold needs at least 4 DI values, got {}", test_dis.len())));
    }
    let mut v = test_dis.to_vec();
    v.sort_by(f64::total_cmp);
    let lo = stats::quantile_sorted(&v, q_low);
    let hi = stats::quantile_sorted(&v, q_high);
    Ok(hi + k * (hi - lo))
}

fn check_stack(stack: &[Raster], s: &DiStats) -> Result<()> {
    if stack.len() != s.p() {
        return Err(Error::invalid(format!("{} predictor bands for {} predictors", stack.len(), s.p())));
    }
    if stack.iter().any(|b| !b.spec.aligned_with(&stack[0].spec)) {
        return Err(Error::invalid("predictor bands are not pixel-aligned"));
    }
    Ok(())
}

/// Per-pixel DI; nodata wherever any predictor is nodata.
pub fn di_raster(stack: &[Raster], s: &DiStats) -> Result<Raster> {
    check_stack(stack, s)?;
    let spec = stack[0].spec;
    let values = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let v: Vec<f64> = stack.iter().map(|b| b.values[i]).collect();
            if stack.iter().zip(&v).any(|(b, x)| b.is_nodata(*x)) {
                spec.nodata
            } else {
                dissimilarity_index(&v, s)
            }
        })
        .collect();
    Raster::from_values(spec, values, "DI")
}

/// 1 where DI ≤ threshold, 0 elsewhere, including pixels with any nodata
/// predictor.
pub fn aoa_mask(stack: &[Raster], s: &DiStats) -> Result<Raster> {
    let di = di_raster(stack, s)?;
    Ok(mask_from_di(&di, s.threshold))
}

pub fn mask_from_di(di: &Raster, threshold: f64) -> Raster {
    let values = di
        .values
        .iter()
        .map(|&v| if !di.is_nodata(v) && v <= threshold { 1.0 } else { 0.0 })
        .collect();
    Raster {
        spec: di.spec,
        values,
        band_name: "AOA".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GridSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_ds(n: usize, p: usize, seed: u64) -> Dataset {
        let mut r = rng(seed);
        let x = (0..n * p).map(|_| r.random_range(0.0..1.0)).collect();
        let y = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        Dataset::new(x, p, y, (0..p).map(|j| format!("v{j}")).collect()).unwrap()
    }

    #[test]
    fn identical_columns_share_a_cluster() {
        let mut ds = random_ds(50, 9, 1);
        for i in 0..50 {
            ds.x[i * 9 + 4] = ds.x[i * 9 + 2];
        }
        let c = cluster_predictors(&ds);
        assert_eq!(c.n_clusters, 7);
        assert_eq!(c.assignment[2], c.assignment[4]);
    }

    #[test]
    fn independent_columns_are_singletons() {
        let ds = random_ds(400, 7, 2);
        let c = cluster_predictors(&ds);
        assert_eq!(c.assignment, (0..7).collect::<Vec<_>>());
        assert!(!c.singleton_fallback);
        let few = cluster_predictors(&random_ds(20, 4, 3));
        assert!(few.singleton_fallback);
        assert_eq!(few.assignment, vec![0, 1, 2, 3]);
    }

    #[test]
    fn monotone_transform_keeps_clustering() {
        let ds = random_ds(60, 12, 4);
        let mut t = ds.clone();
        for i in 0..60 {
            t.x[i * 12 + 3] = (t.x[i * 12 + 3] * 5.0).exp();
        }
        assert_eq!(cluster_predictors(&ds), cluster_predictors(&t));
    }

    fn tiny() -> ImportanceOptions {
        ImportanceOptions {
            rf_trees: 15,
            gbt_rounds: 15,
            loo_reduction: 1,
        }
    }

    #[test]
    fn signal_predictor_gets_the_largest_weight() {
        for seed in 0..5u64 {
            let mut ds = random_ds(40, 7, 10 + seed);
            for i in 0..40 {
                ds.y[i] = ds.x[i * 7 + 1];
            }
            let c = cluster_predictors(&ds);
            let w = permutation_importance(&ds, &c, &tiny(), seed).unwrap();
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let top = (0..7).max_by(|&a, &b| w.weights[a].total_cmp(&w.weights[b])).unwrap();
            assert_eq!(top, 1, "seed {seed}: {:?}", w.weights);
            for j in 0..7 {
                if j != 1 {
                    assert!(w.weights[1] > w.weights[j]);
                }
            }
        }
    }

    #[test]
    fn weights_follow_columns_when_reordered() {
        let mut ds = random_ds(30, 8, 20);
        for i in 0..30 {
            ds.y[i] = ds.x[i * 8] + 0.5 * ds.x[i * 8 + 5];
        }
        let perm = [7, 2, 5, 0, 3, 6, 1, 4];
        let mut shuffled = ds.clone();
        for i in 0..30 {
            for (k, &j) in perm.iter().enumerate() {
                shuffled.x[i * 8 + k] = ds.x[i * 8 + j];
            }
        }
        shuffled.feature_names = perm.iter().map(|&j| ds.feature_names[j].clone()).collect();
        let a = permutation_importance(&ds, &cluster_predictors(&ds), &tiny(), 3).unwrap();
        let b = permutation_importance(&shuffled, &cluster_predictors(&shuffled), &tiny(), 3).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert_eq!(a.weights[j], b.weights[k]);
        }
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_deltas(&[2.0, 2.0, 2.0, 2.0]), vec![0.25; 4]);
        assert_eq!(normalize_deltas(&[0.0, -1.0, 0.0]), vec![1.0 / 3.0; 3]);
        assert_eq!(normalize_deltas(&[0.0, 1.0, 3.0]), vec![0.0, 0.25, 0.75]);
    }

    #[test]
    fn di_two_point_hand_case() {
        // x: (0, 0) and (2, 4); sds sqrt(2) and sqrt(8); weights 0.25 / 0.75
        let train = Dataset::new(vec![0.0, 0.0, 2.0, 4.0], 2, vec![0.0, 1.0], vec!["a".into(), "b".into()]).unwrap();
        let s = fit_di_stats(&train, &[0.25, 0.75], TrainDistance::MeanPairwise).unwrap();
        // scaled training rows differ by (2/√2·0.25, 4/√8·0.75)
        let d_train = ((2.0 / 2f64.sqrt() * 0.25).powi(2) + (4.0 / 8f64.sqrt() * 0.75).powi(2)).sqrt();
        assert!((s.mean_train_distance - d_train).abs() < 1e-12);
        // query (1, 3): nearer to (2, 4), offsets (1/√2·0.25, 1/√8·0.75)
        let d_q = ((1.0 / 2f64.sqrt() * 0.25).powi(2) + (1.0 / 8f64.sqrt() * 0.75).powi(2)).sqrt();
        assert!((dissimilarity_index(&[1.0, 3.0], &s) - d_q / d_train).abs() < 1e-12);
        assert_eq!(dissimilarity_index(&[2.0, 4.0], &s), 0.0);
    }

    #[test]
    fn zero_variance_predictor_is_dropped() {
        let train = Dataset::new(vec![0.0, 5.0, 1.0, 5.0, 3.0, 5.0], 2, vec![0.0; 3], vec!["a".into(), "b".into()]).unwrap();
        let s = fit_di_stats(&train, &[0.5, 0.5], TrainDistance::MeanPairwise).unwrap();
        assert_eq!(s.weights, vec![1.0, 0.0]);
        assert_eq!(s.retained(), 1);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(aoa_threshold(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 5.5);
        assert_eq!(aoa_threshold(&[0.7; 6]).unwrap(), 0.7);
        assert!(aoa_threshold(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn threshold_can_drop_when_a_maximum_is_added() {
        // the lower quartile catches up with the upper one and the IQR collapses
        assert_eq!(aoa_threshold(&[0.0, 10.0, 10.0, 10.0]).unwrap(), 13.75);
        assert_eq!(aoa_threshold(&[0.0, 10.0, 10.0, 10.0, 10.0]).unwrap(), 10.0);
    }

    proptest! {
        #[test]
        fn quartiles_monotone_in_new_maximum(v in prop::collection::vec(0.0..10.0f64, 4..40), extra in 0.0..5.0f64) {
            let mx = v.iter().cloned().fold(f64::MIN, f64::max);
            let mut w = v.clone();
            w.push(mx + extra);
            for q in [0.25, 0.75] {
                prop_assert!(stats::quantile(&w, q) >= stats::quantile(&v, q));
            }
        }

        #[test]
        fn di_scale_invariant(seed in 0u64..1000, k in 0.5..4.0f64) {
            let ds = random_ds(12, 3, seed);
            let mut scaled = ds.clone();
            scaled.x.iter_mut().for_each(|v| *v *= k);
            let w = [0.2, 0.3, 0.5];
            let a = fit_di_stats(&ds, &w, TrainDistance::MeanPairwise).unwrap();
            let b = fit_di_stats(&scaled, &w, TrainDistance::MeanPairwise).unwrap();
            let q = [0.3, 0.8, 0.1];
            let qk = [0.3 * k, 0.8 * k, 0.1 * k];
            prop_assert!((dissimilarity_index(&q, &a) - dissimilarity_index(&qk, &b)).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_matches_scalar_loop_and_handles_nodata() {
        let train = random_ds(25, 3, 30);
        let mut s = fit_di_stats(&train, &[0.2, 0.3, 0.5], TrainDistance::MeanPairwise).unwrap();
        s.threshold = 0.35;
        let spec = GridSpec::new(0.0, 0.0, 30.0, 12, 9).unwrap();
        let mut r = rng(31);
        let mut stack: Vec<Raster> = (0..3)
            .map(|j| {
                let v = (0..spec.len()).map(|_| r.random_range(-0.2..1.2)).collect();
                Raster::from_values(spec, v, format!("v{j}")).unwrap()
            })
            .collect();
        // one pixel equal to a training row, one pixel with nodata
        for j in 0..3 {
            stack[j].values[0] = train.x[7 * 3 + j];
        }
        stack[1].values[5] = spec.nodata;
        let mask = aoa_mask(&stack, &s).unwrap();
        assert_eq!(mask.values[0], 1.0);
        assert_eq!(mask.values[5], 0.0);
        let mut inside = 0;
        for i in 0..spec.len() {
            let v: Vec<f64> = stack.iter().map(|b| b.values[i]).collect();
            let expect = if v.iter().any(|x| *x == spec.nodata) {
                0.0
            } else {
                // naive oracle
                let mut best = f64::INFINITY;
                for t in 0..train.n {
                    let mut d2 = 0.0;
                    for j in 0..3 {
                        let a = (v[j] - s.train_means[j]) / s.train_sds[j] * s.weights[j];
                        let b = (train.x[t * 3 + j] - s.train_means[j]) / s.train_sds[j] * s.weights[j];
                        d2 += (a - b) * (a - b);
                    }
                    best = best.min(d2.sqrt());
                }
                if best / s.mean_train_distance <= s.threshold { 1.0 } else { 0.0 }
            };
            assert_eq!(mask.values[i], expect, "pixel {i}");
            inside += expect as usize;
        }
        assert_eq!(mask.values.iter().filter(|v| **v == 1.0).count(), inside);
        let all_nd: Vec<Raster> = stack.iter().map(|b| Raster::nodata(b.spec, b.band_name.clone())).collect();
        assert!(aoa_mask(&all_nd, &s).unwrap().values.iter().all(|v| *v == 0.0));
        // raising the threshold never removes pixels
        s.threshold = 0.5;
        let wider = aoa_mask(&stack, &s).unwrap();
        assert!(mask.values.iter().zip(&wider.values).all(|(a, b)| a <= b));
    }
}
