use super::{PointCloud, PointRecord};
use crate::geodata::{GridSpec, Raster};
use crate::{Error, Result};

/// Gridded ground elevation with every cell filled.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundModel {
    pub spec: GridSpec,
    pub ground_elevation: Raster,
}

impl GroundModel {
    /// Bilinear interpolation between cell centers; clamps to the edge
    /// centers near the border. `None` outside the grid extent.
    pub fn elevation_at(&self, x: f64, y: f64) -> Option<f64> {
        let s = &self.spec;
        let ext = s.extent();
        if !(x >= ext.xmin && x <= ext.xmax && y >= ext.ymin && y <= ext.ymax) {
            return None;
        }
        let fx = ((x - s.origin_x) / s.cell_size - 0.5).clamp(0.0, (s.n_cols - 1) as f64);
        let fy = ((ext.ymax - y) / s.cell_size - 0.5).clamp(0.0, (s.n_rows - 1) as f64);
        let c0 = fx.floor() as usize;
        let r0 = fy.floor() as usize;
        let c1 = (c0 + 1).min(s.n_cols - 1);
        let r1 = (r0 + 1).min(s.n_rows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let g = &self.ground_elevation;
        let top = g.get(c0, r0) * (1.0 - tx) + g.get(c1, r0) * tx;
        let bot = g.get(c0, r1) * (1.0 - tx) + g.get(c1, r1) * tx;
        Some(top * (1.0 - ty) + bot * ty)
    }
}

/// Per-cell mean elevation of ground-classified returns. Empty cells take the
/// value of the nearest non-empty cell by center distance, ties to the lowest
/// cell index.
pub fn build_ground_model(cloud: &PointCloud, spec: GridSpec) -> Result<GroundModel> {
    if cloud.height_normalized {
        return Err(Error::invalid("ground model needs a cloud that is not height-normalized"));
    }
    let mut sum = vec![0.0f64; spec.len()];
    let mut count = vec![0u32; spec.len()];
    for p in cloud.records.iter().filter(|p| p.is_ground()) {
        if let Some(i) = spec.index_of(p.x, p.y) {
            sum[i] += p.z;
            count[i] += 1;
        }
    }
    let filled: Vec<usize> = (0..spec.len()).filter(|&i| count[i] > 0).collect();
    if filled.is_empty() {
        return Err(Error::Empty("no ground returns inside the ground model grid".into()));
    }
    let mut values: Vec<f64> = (0..spec.len())
        .map(|i| if count[i] > 0 { sum[i] / count[i] as f64 } else { f64::NAN })
        .collect();
    for i in 0..spec.len() {
        if count[i] > 0 {
            continue;
        }
        let (ci, ri) = spec.col_row(i);
        let mut best = (f64::INFINITY, usize::MAX);
        for &j in &filled {
            let (cj, rj) = spec.col_row(j);
            let dc = ci as f64 - cj as f64;
            let dr = ri as f64 - rj as f64;
            let d = dc * dc + dr * dr;
            if d < best.0 {
                best = (d, j);
            }
        }
        values[i] = sum[best.1] / count[best.1] as f64;
    }
    Ok(GroundModel {
        spec,
        ground_elevation: Raster::from_values(spec, values, "ground")?,
    })
}

/// Subtract interpolated ground elevation from every return, clamping
/// negative heights to 0.
pub fn normalize_heights(cloud: PointCloud, ground: &GroundModel) -> Result<PointCloud> {
    if cloud.height_normalized {
        return Err(Error::invalid("cloud is already height-normalized"));
    }
    let mut outside = Vec::new();
    let records: Vec<PointRecord> = cloud
        .records
        .iter()
        .enumerate()
        .map(|(i, p)| match ground.elevation_at(p.x, p.y) {
            Some(g) => PointRecord {
                z: (p.z - g).max(0.0),
                ..*p
            },
            None => {
                outside.push(i);
                *p
            }
        })
        .collect();
    if !outside.is_empty() {
        return Err(Error::OutsideExtent { indices: outside });
    }
    Ok(PointCloud::normalized(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground(x: f64, y: f64, z: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            return_number: 1,
            num_returns: 1,
            classification: 2,
        }
    }

    fn veg(x: f64, y: f64, z: f64) -> PointRecord {
        PointRecord {
            classification: 1,
            ..ground(x, y, z)
        }
    }

    #[test]
    fn flat_ground_model() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 3, 3).unwrap();
        let pts: Vec<_> = (0..9).map(|k| ground(5.0 + 10.0 * (k % 3) as f64, 5.0 + 10.0 * (k / 3) as f64, 100.0)).collect();
        let g = build_ground_model(&PointCloud::new(pts), spec).unwrap();
        assert!(g.ground_elevation.values.iter().all(|v| *v == 100.0));
    }

    #[test]
    fn cell_mean() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 1, 1).unwrap();
        let g = build_ground_model(&PointCloud::new(vec![ground(1.0, 1.0, 99.0), ground(2.0, 2.0, 101.0)]), spec).unwrap();
        assert_eq!(g.ground_elevation.values, vec![100.0]);
    }

    #[test]
    fn nearest_fill() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 2, 1).unwrap();
        let g = build_ground_model(&PointCloud::new(vec![ground(1.0, 1.0, 50.0), veg(15.0, 5.0, 80.0)]), spec).unwrap();
        assert_eq!(g.ground_elevation.values, vec![50.0, 50.0]);
    }

    #[test]
    fn nearest_fill_tie_goes_to_lowest_index() {
        // 3x1 grid, ground in cells 0 and 2, middle cell equidistant.
        let spec = GridSpec::new(0.0, 0.0, 10.0, 3, 1).unwrap();
        let g = build_ground_model(&PointCloud::new(vec![ground(1.0, 1.0, 10.0), ground(25.0, 5.0, 30.0)]), spec).unwrap();
        assert_eq!(g.ground_elevation.values, vec![10.0, 10.0, 30.0]);
    }

    #[test]
    fn no_ground_is_an_error() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 2, 1).unwrap();
        assert!(build_ground_model(&PointCloud::new(vec![veg(1.0, 1.0, 5.0)]), spec).is_err());
    }

    #[test]
    fn normalization_heights_and_clamp() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 2, 2).unwrap();
        let g = GroundModel {
            spec,
            ground_elevation: Raster::filled(spec, 100.0, "g"),
        };
        let cloud = PointCloud::new(vec![veg(3.0, 3.0, 130.0), veg(12.0, 15.0, 99.0)]);
        let n = normalize_heights(cloud, &g).unwrap();
        assert!(n.height_normalized);
        assert_eq!(n.records[0].z, 30.0);
        assert_eq!(n.records[1].z, 0.0);
        assert_eq!(n.records[0].x, 3.0);
        assert!(normalize_heights(n, &g).is_err());
    }

    #[test]
    fn outside_points_listed() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 1, 1).unwrap();
        let g = GroundModel {
            spec,
            ground_elevation: Raster::filled(spec, 0.0, "g"),
        };
        let cloud = PointCloud::new(vec![veg(3.0, 3.0, 1.0), veg(30.0, 3.0, 1.0), veg(-1.0, 3.0, 1.0)]);
        match normalize_heights(cloud, &g) {
            Err(Error::OutsideExtent { indices }) => assert_eq!(indices, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bilinear_between_centers() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 2, 1).unwrap();
        let g = GroundModel {
            spec,
            ground_elevation: Raster::from_values(spec, vec![0.0, 10.0], "g").unwrap(),
        };
        assert_eq!(g.elevation_at(10.0, 5.0), Some(5.0));
        assert_eq!(g.elevation_at(1.0, 5.0), Some(0.0));
    }
}
