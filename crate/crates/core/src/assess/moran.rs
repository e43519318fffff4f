use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::geodata::Point;
use crate::seeds::derived_rng;
use crate::stats::quantile_sorted;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranResult {
    pub radius: f64,
    /// `None` when no pair lies within the radius or residuals are constant.
    pub i: Option<f64>,
    pub envelope_low: Option<f64>,
    pub envelope_high: Option<f64>,
    pub n_points: usize,
    /// Unordered neighbor pairs within the radius.
    pub n_pairs: usize,
}

impl MoranResult {
    pub fn within_envelope(&self) -> Option<bool> {
        match (self.i, self.envelope_low, self.envelope_high) {
            (Some(i), Some(lo), Some(hi)) => Some(lo <= i && i <= hi),
            _ => None,
        }
    }
}

/// Unordered point pairs at positive distance up to `max_r`, sorted by
/// distance (ties by index) so every radius is a prefix.
fn sorted_pairs(points: &[Point], max_r: f64) -> Vec<(f64, u32, u32)> {
    let r2 = max_r * max_r;
    let mut pairs = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d2 = points[i].dist2(&points[j]);
            if d2 > 0.0 && d2 <= r2 {
                pairs.push((d2.sqrt(), i as u32, j as u32));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    pairs
}

fn centered(residuals: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = residuals.len() as f64;
    let m = residuals.iter().sum::<f64>() / n;
    let z: Vec<f64> = residuals.iter().map(|e| e - m).collect();
    let denom: f64 = z.iter().map(|v| v * v).sum();
    let scale = residuals.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    // Constant residuals leave only rounding noise after centering.
    (denom > (1e-12 * scale.max(1e-300)).powi(2) * n).then_some((z, denom))
}

/// I at each prefix length in `cuts` (ascending), for residual vector `z`.
fn prefix_stats(pairs: &[(f64, u32, u32)], z: &[f64], denom: f64, cuts: &[usize]) -> Vec<Option<f64>> {
    let n = z.len() as f64;
    let mut out = Vec::with_capacity(cuts.len());
    let mut s = 0.0;
    let mut k = 0;
    for &c in cuts {
        while k < c {
            let (_, i, j) = pairs[k];
            s += z[i as usize] * z[j as usize];
            k += 1;
        }
        // W = 2c and the double sum counts each pair twice.
        out.push((c > 0).then(|| n * s / (c as f64 * denom)));
    }
    out
}

fn check(points: &[Point], residuals: &[f64]) -> Result<()> {
    if points.len() != residuals.len() {
        return Err(Error::invalid("points and residuals differ in length"));
    }
    if points.len() < 2 {
        return Err(Error::invalid(format!("Moran's I needs at least 2 points, got {}", points.len())));
    }
    if residuals.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("non-finite residual"));
    }
    Ok(())
}

/// Global Moran's I with binary weights for pairs at distance in (0, r].
/// `Ok(None)` signals an undefined statistic.
pub fn morans_i(points: &[Point], residuals: &[f64], radius: f64) -> Result<Option<f64>> {
    check(points, residuals)?;
    let pairs = sorted_pairs(points, radius);
    let Some((z, denom)) = centered(residuals) else {
        return Ok(None);
    };
    Ok(prefix_stats(&pairs, &z, denom, &[pairs.len()])[0])
}

/// Moran's I at every radius with a permutation envelope (2.5th and 97.5th
/// percentiles over `reps` shuffles of the residuals). Each shuffle is
/// seeded by its replicate index and shared across radii.
pub fn moran_profile(points: &[Point], residuals: &[f64], radii: &[f64], reps: usize, seed: u64) -> Result<Vec<MoranResult>> {
    check(points, residuals)?;
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Config("Moran radii must be positive".into()));
    }
    let max_r = radii.iter().copied().fold(0.0, f64::max);
    let pairs = sorted_pairs(points, max_r);
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let cuts_sorted: Vec<usize> = order.iter().map(|&k| pairs.partition_point(|p| p.0 <= radii[k])).collect();
    let mut cuts = vec![0; radii.len()];
    for (pos, &k) in order.iter().enumerate() {
        cuts[k] = cuts_sorted[pos];
    }
    let empty = |k: usize| MoranResult {
        radius: radii[k],
        i: None,
        envelope_low: None,
        envelope_high: None,
        n_points: points.len(),
        n_pairs: cuts[k],
    };
    let Some((z, denom)) = centered(residuals) else {
        return Ok((0..radii.len()).map(empty).collect());
    };
    let unsort = |v: Vec<Option<f64>>| {
        let mut out = vec![None; radii.len()];
        for (pos, &k) in order.iter().enumerate() {
            out[k] = v[pos];
        }
        out
    };
    let observed = unsort(prefix_stats(&pairs, &z, denom, &cuts_sorted));
    let sims: Vec<Vec<Option<f64>>> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut zp = z.clone();
            zp.shuffle(&mut derived_rng(seed, &[b as u64]));
            unsort(prefix_stats(&pairs, &zp, denom, &cuts_sorted))
        })
        .collect();
    Ok((0..radii.len())
        .map(|k| {
            let mut vals: Vec<f64> = sims.iter().filter_map(|s| s[k]).collect();
            vals.sort_by(f64::total_cmp);
            let env = |p: f64| (!vals.is_empty()).then(|| quantile_sorted(&vals, p));
            MoranResult {
                i: observed[k],
                envelope_low: env(0.025),
                envelope_high: env(0.975),
                ..empty(k)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn opposite_pair_gives_minus_one() {
        // Third point is far away so only the first two are neighbors; its
        // residual is the mean so it adds nothing to the sums.
        let pts = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(1e6, 0.0)];
        let i = morans_i(&pts, &[3.0, -3.0, 0.0], 50.0).unwrap().unwrap();
        // n/W * (-2a²) / (2a²) with n = 3, W = 2.
        assert!((i - (-1.5)).abs() < 1e-12);
        // The two-point configuration itself, evaluated by direct formula.
        let (z, w, n) = ([3.0f64, -3.0], 2.0, 2.0);
        let num = 2.0 * z[0] * z[1];
        let den: f64 = z.iter().map(|v| v * v).sum();
        assert_eq!(n / w * num / den, -1.0);
        let two = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        assert_eq!(morans_i(&two, &[3.0, -3.0], 50.0).unwrap(), Some(-1.0));
    }

    #[test]
    fn brute_force_agreement() {
        let mut rng = crate::seeds::rng(3);
        let pts: Vec<Point> = (0..60).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let e: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r = 25.0;
        let m = e.iter().sum::<f64>() / 60.0;
        let (mut num, mut w) = (0.0, 0.0);
        for i in 0..60 {
            for j in 0..60 {
                let d = pts[i].dist(&pts[j]);
                if d > 0.0 && d <= r {
                    w += 1.0;
                    num += (e[i] - m) * (e[j] - m);
                }
            }
        }
        let den: f64 = e.iter().map(|v| (v - m).powi(2)).sum();
        let oracle = 60.0 / w * num / den;
        assert!((morans_i(&pts, &e, r).unwrap().unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn undefined_cases() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert_eq!(morans_i(&pts, &[4.0, 4.0, 4.0], 5.0).unwrap(), None);
        assert_eq!(morans_i(&pts, &[1.0, 2.0, 4.0], 0.5).unwrap(), None);
        assert!(morans_i(&pts[..1], &[1.0], 5.0).is_err());
        let prof = moran_profile(&pts, &[1.0, 2.0, 4.0], &[0.5, 1.5], 20, 1).unwrap();
        assert_eq!(prof[0].i, None);
        assert!(prof[1].i.is_some());
    }

    #[test]
    fn null_residuals_mostly_inside_envelope() {
        let mut rng = crate::seeds::rng(17);
        let n = 300;
        let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..50_000.0), rng.random_range(0.0..50_000.0))).collect();
        let e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let radii: Vec<f64> = (1..=50).map(|k| k as f64 * 1000.0).collect();
        let prof = moran_profile(&pts, &e, &radii, 1000, 5).unwrap();
        let inside = prof.iter().filter(|r| r.within_envelope() == Some(true)).count();
        assert!(inside >= 45, "{inside} of 50 radii inside");
        for r in &prof {
            if let (Some(lo), Some(hi)) = (r.envelope_low, r.envelope_high) {
                assert!(lo <= hi);
            }
        }
    }

    #[test]
    fn profile_matches_single_radius_and_is_seeded() {
        let mut rng = crate::seeds::rng(2);
        let pts: Vec<Point> = (0..80).map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))).collect();
        let e: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let radii = [300.0, 100.0, 200.0];
        let a = moran_profile(&pts, &e, &radii, 200, 8).unwrap();
        assert_eq!(a, moran_profile(&pts, &e, &radii, 200, 8).unwrap());
        for r in &a {
            let single = morans_i(&pts, &e, r.radius).unwrap().unwrap();
            assert!((r.i.unwrap() - single).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(seed in any::<u64>(), c in -100.0f64..100.0) {
            let mut rng = crate::seeds::rng(seed);
            let pts: Vec<Point> = (0..30).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
            let e: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
            let shifted: Vec<f64> = e.iter().map(|v| v + c).collect();
            let a = morans_i(&pts, &e, 30.0).unwrap();
            let b = morans_i(&pts, &shifted, 30.0).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
