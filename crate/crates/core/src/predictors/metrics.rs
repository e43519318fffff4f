use crate::pointcloud::PointCloud;
use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Height above which a return counts as canopy (strictly greater).
pub const CANOPY_HEIGHT_M: f64 = 2.5;

pub const N_LIDAR: usize = 39;

/// Canonical order of the LiDAR metric predictors.
pub const LIDAR_NAMES: [&str; N_LIDAR] = [
    "H0", "H10", "H20", "H30", "H40", "H50", "H60", "H70", "H80", "H90", "H100", "H95", "H99",
    "D10", "D20", "D30", "D40", "D50", "D60", "D70", "D80", "D90",
    "ZMEAN", "ZMEAN_C", "Z_KURT", "Z_SKEW", "QUAD_MEAN", "QUAD_MEAN_C", "CV", "CV_C",
    "L2", "L3", "L4", "L_CV", "L_SKEW", "L_KURT",
    "CANCOV", "HVOL", "RPC1",
];

const I_H0: usize = 0;
const I_H95: usize = 11;
const I_H99: usize = 12;
const I_D10: usize = 13;
const I_ZMEAN: usize = 22;
const I_L2: usize = 30;
const I_CANCOV: usize = 36;

/// One value per entry of [`LIDAR_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarMetrics {
    pub values: [f64; N_LIDAR],
}

impl LidarMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        LIDAR_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    /// Panicking accessor for known metric names.
    pub fn by_name(&self, name: &str) -> f64 {
        self.get(name).unwrap_or_else(|| panic!("unknown LiDAR metric {name}"))
    }
}

/// Sample L-moments l1..l4 of ascending-sorted data from unbiased
/// probability-weighted moments. `l_r` is 0 when fewer than `r` values exist.
pub fn l_moments(sorted: &[f64]) -> [f64; 4] {
    let n = sorted.len();
    if n == 0 {
        return [0.0; 4];
    }
    let nf = n as f64;
    let (mut b0, mut b1, mut b2, mut b3) = (0.0, 0.0, 0.0, 0.0);
    for (k, &x) in sorted.iter().enumerate() {
        let j = k as f64; // j - 1 in 1-based terms
        b0 += x;
        if n > 1 {
            let w1 = j / (nf - 1.0);
            b1 += w1 * x;
            if n > 2 {
                let w2 = w1 * (j - 1.0) / (nf - 2.0);
                b2 += w2 * x;
                if n > 3 {
                    b3 += w2 * (j - 2.0) / (nf - 3.0) * x;
                }
            }
        }
    }
    let (b0, b1, b2, b3) = (b0 / nf, b1 / nf, b2 / nf, b3 / nf);
    let l1 = b0;
    let l2 = if n > 1 { 2.0 * b1 - b0 } else { 0.0 };
    let l3 = if n > 2 { 6.0 * b2 - 6.0 * b1 + b0 } else { 0.0 };
    let l4 = if n > 3 { 20.0 * b3 - 30.0 * b2 + 12.0 * b1 - b0 } else { 0.0 };
    [l1, l2, l3, l4]
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

struct Moments {
    mean: f64,
    quad_mean: f64,
    cv: f64,
}

fn moments(h: &[f64]) -> Moments {
    if h.is_empty() {
        return Moments {
            mean: 0.0,
            quad_mean: 0.0,
            cv: 0.0,
        };
    }
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let sq = h.iter().map(|v| v * v).sum::<f64>() / n;
    let cv = if h.len() < 2 || mean == 0.0 {
        0.0
    } else {
        let ss: f64 = h.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt() / mean
    };
    Moments {
        mean,
        quad_mean: sq.sqrt(),
        cv,
    }
}

/// Metrics from heights already sorted ascending, with the number of first
/// returns among them. Heights must be non-empty.
pub fn metrics_from_sorted(h: &[f64], n_first: usize) -> LidarMetrics {
    debug_assert!(!h.is_empty());
    let mut v = [0.0; N_LIDAR];
    let n = h.len() as f64;
    for k in 0..=10 {
        v[I_H0 + k] = quantile_sorted(h, k as f64 / 10.0);
    }
    v[I_H95] = quantile_sorted(h, 0.95);
    v[I_H99] = quantile_sorted(h, 0.99);
    let h100 = h[h.len() - 1];
    for k in 1..=9 {
        v[I_D10 + k - 1] = if h100 > 0.0 {
            let t = k as f64 * h100 / 10.0;
            let below = h.partition_point(|&z| z < t);
            (h.len() - below) as f64 / n
        } else {
            0.0
        };
    }
    let all = moments(h);
    let canopy = &h[h.partition_point(|&z| z <= CANOPY_HEIGHT_M)..];
    let can = moments(canopy);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &z in h {
        let d = z - all.mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let cancov = canopy.len() as f64 / n;
    v[I_ZMEAN] = all.mean;
    v[I_ZMEAN + 1] = can.mean;
    v[I_ZMEAN + 2] = ratio(m4, m2 * m2);
    v[I_ZMEAN + 3] = ratio(m3, m2.powf(1.5));
    v[I_ZMEAN + 4] = all.quad_mean;
    v[I_ZMEAN + 5] = can.quad_mean;
    v[I_ZMEAN + 6] = all.cv;
    v[I_ZMEAN + 7] = can.cv;
    let [l1, l2, l3, l4] = l_moments(h);
    v[I_L2] = l2;
    v[I_L2 + 1] = l3;
    v[I_L2 + 2] = l4;
    v[I_L2 + 3] = ratio(l2, l1);
    v[I_L2 + 4] = ratio(l3, l2);
    v[I_L2 + 5] = ratio(l4, l2);
    v[I_CANCOV] = cancov;
    v[I_CANCOV + 1] = cancov * all.mean;
    v[I_CANCOV + 2] = n_first as f64 / n;
    LidarMetrics { values: v }
}

/// Area-based LiDAR metrics of a height-normalized cloud.
pub fn lidar_metrics(cloud: &PointCloud) -> Result<LidarMetrics> {
    if !cloud.height_normalized {
        return Err(Error::invalid("LiDAR metrics need a height-normalized cloud"));
    }
    if cloud.is_empty() {
        return Err(Error::Empty("no returns to compute LiDAR metrics from".into()));
    }
    let mut h: Vec<f64> = cloud.records.iter().map(|r| r.z).collect();
    h.sort_by(f64::total_cmp);
    let n_first = cloud.records.iter().filter(|r| r.is_first()).count();
    Ok(metrics_from_sorted(&h, n_first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::PointRecord;
    use proptest::prelude::*;

    fn cloud(h: &[f64], first: &[bool]) -> PointCloud {
        PointCloud::normalized(
            h.iter()
                .zip(first)
                .map(|(&z, &f)| PointRecord {
                    x: 0.0,
                    y: 0.0,
                    z,
                    return_number: if f { 1 } else { 2 },
                    num_returns: 2,
                    classification: 1,
                })
                .collect(),
        )
    }

    /// Definitional L-moments: average over all size-r subsets of the
    /// alternating combination of subset order statistics.
    fn l_moment_oracle(x: &[f64], r: usize) -> f64 {
        fn choose(n: usize, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        }
        fn subsets(n: usize, r: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if cur.len() == r {
                f(cur);
                return;
            }
            for i in start..n {
                cur.push(i);
                subsets(n, r, i + 1, cur, f);
                cur.pop();
            }
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut total = 0.0;
        let mut count = 0usize;
        subsets(sorted.len(), r, 0, &mut Vec::new(), &mut |idx| {
            // idx ascending => order statistics x_{1:r} <= ... <= x_{r:r}
            let mut s = 0.0;
            for k in 0..r {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                s += sign * choose(r - 1, k) * sorted[idx[r - 1 - k]];
            }
            total += s / r as f64;
            count += 1;
        });
        total / count as f64
    }

    #[test]
    fn single_return() {
        let m = lidar_metrics(&cloud(&[10.0], &[true])).unwrap();
        for k in 0..13 {
            assert_eq!(m.values[k], 10.0);
        }
        assert_eq!(m.by_name("ZMEAN"), 10.0);
        assert_eq!(m.by_name("CANCOV"), 1.0);
        assert_eq!(m.by_name("HVOL"), 10.0);
        for k in 1..=9 {
            assert_eq!(m.by_name(&format!("D{}", k * 10)), 1.0);
        }
        assert_eq!(m.by_name("RPC1"), 1.0);
        let second = lidar_metrics(&cloud(&[10.0], &[false])).unwrap();
        assert_eq!(second.by_name("RPC1"), 0.0);
    }

    #[test]
    fn four_heights() {
        let m = lidar_metrics(&cloud(&[1.0, 2.0, 3.0, 4.0], &[true; 4])).unwrap();
        assert_eq!(m.by_name("ZMEAN"), 2.5);
        assert_eq!(m.by_name("CANCOV"), 0.5);
        assert_eq!(m.by_name("ZMEAN_C"), 3.5);
        assert_eq!(m.by_name("HVOL"), 1.25);
        assert_eq!(m.by_name("RPC1"), 1.0);
        let l = l_moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(l[0], 2.5);
        assert!((l[1] - 5.0 / 6.0).abs() < 1e-15);
        assert!((m.by_name("L2") - l_moment_oracle(&[1.0, 2.0, 3.0, 4.0], 2)).abs() < 1e-12);
    }

    #[test]
    fn flat_ground_zero_densities() {
        let m = lidar_metrics(&cloud(&[0.0, 0.0, 0.0], &[true; 3])).unwrap();
        for k in 1..=9 {
            assert_eq!(m.by_name(&format!("D{}", k * 10)), 0.0);
        }
        assert_eq!(m.by_name("CANCOV"), 0.0);
        assert_eq!(m.by_name("ZMEAN_C"), 0.0);
        assert_eq!(m.by_name("CV_C"), 0.0);
        assert_eq!(m.by_name("HVOL"), 0.0);
    }

    #[test]
    fn preconditions() {
        assert!(lidar_metrics(&PointCloud::normalized(vec![])).is_err());
        let mut c = cloud(&[1.0], &[true]);
        c.height_normalized = false;
        assert!(lidar_metrics(&c).is_err());
    }

    #[test]
    fn strict_canopy_boundary() {
        let m = lidar_metrics(&cloud(&[2.5, 2.5, 5.0, 1.0], &[true; 4])).unwrap();
        assert_eq!(m.by_name("CANCOV"), 0.25);
        assert_eq!(m.by_name("ZMEAN_C"), 5.0);
    }

    proptest! {
        #[test]
        fn l_moments_match_subset_definition(h in prop::collection::vec(0.0f64..40.0, 4..=12)) {
            let mut s = h.clone();
            s.sort_by(f64::total_cmp);
            let l = l_moments(&s);
            for r in 1..=4 {
                let o = l_moment_oracle(&h, r);
                prop_assert!((l[r - 1] - o).abs() < 1e-10, "r={} {} vs {}", r, l[r - 1], o);
            }
        }

        #[test]
        fn metric_invariants(h in prop::collection::vec(0.0f64..50.0, 1..200), seed in 0u64..1000) {
            let first: Vec<bool> = h.iter().enumerate().map(|(i, _)| (i as u64 ^ seed) % 3 == 0).collect();
            let c = cloud(&h, &first);
            let m = lidar_metrics(&c).unwrap();
            let v = &m.values;
            for k in 0..10 {
                prop_assert!(v[k] <= v[k + 1]);
            }
            prop_assert!(v[11] <= v[12] && v[12] <= v[10]);
            for k in 13..21 {
                prop_assert!(v[k] >= v[k + 1]);
            }
            prop_assert!(v[13] <= 1.0 && v[21] >= 0.0);
            prop_assert_eq!(m.by_name("HVOL"), m.by_name("CANCOV") * m.by_name("ZMEAN"));
            prop_assert!((0.0..=1.0).contains(&m.by_name("CANCOV")));
            prop_assert!((0.0..=1.0).contains(&m.by_name("RPC1")));

            let mut rev = c.clone();
            rev.records.reverse();
            let m2 = lidar_metrics(&rev).unwrap();
            for (a, b) in m.values.iter().zip(m2.values.iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
