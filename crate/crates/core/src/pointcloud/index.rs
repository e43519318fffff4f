use super::{PointCloud, PointRecord};
use crate::geodata::{Point, Rect};

/// Bucket index over a cloud's (x, y) positions for fast circle queries.
#[derive(Debug, Clone)]
pub struct CloudIndex {
    bounds: Rect,
    bucket: f64,
    n_cols: usize,
    n_rows: usize,
    /// Record indices grouped by bucket, ascending within a bucket.
    order: Vec<u32>,
    starts: Vec<u32>,
}

impl CloudIndex {
    pub fn new(cloud: &PointCloud, bucket: f64) -> Self {
        let mut bounds = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &cloud.records {
            bounds.xmin = bounds.xmin.min(p.x);
            bounds.ymin = bounds.ymin.min(p.y);
            bounds.xmax = bounds.xmax.max(p.x);
            bounds.ymax = bounds.ymax.max(p.y);
        }
        if cloud.is_empty() {
            bounds = Rect::new(0.0, 0.0, 0.0, 0.0);
        }
        let n_cols = ((bounds.width() / bucket).floor() as usize) + 1;
        let n_rows = ((bounds.height() / bucket).floor() as usize) + 1;
        let key = |p: &PointRecord| {
            let c = (((p.x - bounds.xmin) / bucket) as usize).min(n_cols - 1);
            let r = (((p.y - bounds.ymin) / bucket) as usize).min(n_rows - 1);
            r * n_cols + c
        };
        let mut starts = vec![0u32; n_cols * n_rows + 1];
        for p in &cloud.records {
            starts[key(p) + 1] += 1;
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; cloud.len()];
        for (i, p) in cloud.records.iter().enumerate() {
            let k = key(p);
            order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        CloudIndex {
            bounds,
            bucket,
            n_cols,
            n_rows,
            order,
            starts,
        }
    }

    /// Indices of records within `radius` of `center` (boundary inclusive),
    /// ascending, so results match [`super::clip_circle`] order.
    pub fn query_circle(&self, cloud: &PointCloud, center: Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if cloud.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let cell = |v: f64, lo: f64, n: usize| -> Option<usize> {
            let f = ((v - lo) / self.bucket).floor();
            if f < 0.0 {
                Some(0)
            } else if f as usize >= n {
                Some(n - 1)
            } else {
                Some(f as usize)
            }
        };
        if center.x + radius < self.bounds.xmin
            || center.x - radius > self.bounds.xmax
            || center.y + radius < self.bounds.ymin
            || center.y - radius > self.bounds.ymax
        {
            return out;
        }
        let (Some(c0), Some(c1), Some(r0), Some(r1)) = (
            cell(center.x - radius, self.bounds.xmin, self.n_cols),
            cell(center.x + radius, self.bounds.xmin, self.n_cols),
            cell(center.y - radius, self.bounds.ymin, self.n_rows),
            cell(center.y + radius, self.bounds.ymin, self.n_rows),
        ) else {
            return out;
        };
        for r in r0..=r1 {
            for c in c0..=c1 {
                let k = r * self.n_cols + c;
                for &i in &self.order[self.starts[k] as usize..self.starts[k + 1] as usize] {
                    let p = &cloud.records[i as usize];
                    let dx = p.x - center.x;
                    let dy = p.y - center.y;
                    if dx * dx + dy * dy <= r2 {
                        out.push(i as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn clip_circle(&self, cloud: &PointCloud, center: Point, radius: f64) -> PointCloud {
        PointCloud {
            records: self
                .query_circle(cloud, center, radius)
                .into_iter()
                .map(|i| cloud.records[i])
                .collect(),
            height_normalized: cloud.height_normalized,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn indexed_clip_matches_brute_force() {
        let mut rng = crate::seeds::rng(1);
        let recs: Vec<PointRecord> = (0..20_000)
            .map(|_| PointRecord {
                x: rng.random_range(0.0..300.0),
                y: rng.random_range(0.0..200.0),
                z: 1.0,
                return_number: 1,
                num_returns: 1,
                classification: 1,
            })
            .collect();
        let cloud = PointCloud::new(recs);
        let idx = CloudIndex::new(&cloud, 10.0);
        for (cx, cy, r) in [(50.0, 50.0, 7.32), (0.0, 0.0, 20.0), (299.0, 199.0, 15.0), (-100.0, 5.0, 3.0), (150.0, 100.0, 60.0)] {
            let c = Point::new(cx, cy);
            assert_eq!(idx.clip_circle(&cloud, c, r), super::super::clip_circle(&cloud, c, r));
        }
    }
}
