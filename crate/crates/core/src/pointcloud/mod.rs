//! LiDAR returns: the PCX text format, ground models, height normalization,
//! circle clipping and convex-hull coverage.

mod ground;
mod hull;
mod index;
mod pcx;

pub use ground::{build_ground_model, normalize_heights, GroundModel};
pub use hull::{convex_hull, convex_hull_coverage};
pub use index::CloudIndex;
pub use pcx::{format_pcx, parse_pcx, read_normalized_pcx, read_pcx, write_pcx};

use crate::geodata::Point;

pub const GROUND_CLASS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// 1-based.
    pub return_number: u8,
    pub num_returns: u8,
    pub classification: u8,
}

impl PointRecord {
    pub fn is_ground(&self) -> bool {
        self.classification == GROUND_CLASS
    }

    pub fn is_first(&self) -> bool {
        self.return_number == 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub records: Vec<PointRecord>,
    /// When set, `z` is height above ground and never negative.
    pub height_normalized: bool,
}

impl PointCloud {
    pub fn new(records: Vec<PointRecord>) -> Self {
        PointCloud {
            records,
            height_normalized: false,
        }
    }

    pub fn normalized(records: Vec<PointRecord>) -> Self {
        PointCloud {
            records,
            height_normalized: true,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_z(&self) -> Option<f64> {
        self.records.iter().map(|r| r.z).reduce(f64::max)
    }

    /// Concatenate clouds in order (pooling keeps duplicates).
    pub fn pooled(parts: &[PointCloud]) -> PointCloud {
        let mut records = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            records.extend_from_slice(&p.records);
        }
        PointCloud {
            records,
            height_normalized: parts.iter().all(|p| p.height_normalized),
        }
    }
}

/// Records with `(x - cx)^2 + (y - cy)^2 <= r^2`, in input order.
pub fn clip_circle(cloud: &PointCloud, center: Point, radius: f64) -> PointCloud {
    let r2 = radius * radius;
    PointCloud {
        records: cloud
            .records
            .iter()
            .filter(|p| {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                dx * dx + dy * dy <= r2
            })
            .copied()
            .collect(),
        height_normalized: cloud.height_normalized,
    }
}
