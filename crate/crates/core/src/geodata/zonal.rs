use std::collections::BTreeMap;

use super::footprint::PlotFootprint;
use super::geometry::Polygon;
use super::grid::{GridSpec, Raster};

/// Per-pixel intersection areas of a (multi)polygon with the grid, keyed by
/// pixel index in ascending order. Areas come from exact polygon clipping.
pub fn zonal_weights(spec: &GridSpec, polygons: &[Polygon]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for poly in polygons {
        let Some((c0, c1, r0, r1)) = spec.window(&poly.bbox()) else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let a = poly.clip_rect(&spec.cell_rect(col, row)).area();
                if a > 0.0 {
                    *acc.entry(spec.index(col, row)).or_insert(0.0) += a;
                }
            }
        }
    }
    acc.into_iter().collect()
}

/// Area-weighted mean of non-nodata pixels under the polygons.
/// `None` signals that no valid pixel intersects (distinct from a mean of 0).
pub fn area_weighted_mean(raster: &Raster, polygons: &[Polygon]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, a) in zonal_weights(&raster.spec, polygons) {
        let v = raster.values[i];
        if raster.is_nodata(v) {
            continue;
        }
        num += v * a;
        den += a;
    }
    (den > 0.0).then(|| num / den)
}

/// Pixels whose rectangles share positive area with any subplot circle,
/// using the exact circle–rectangle distance test.
pub fn footprint_touches(spec: &GridSpec, footprint: &PlotFootprint) -> Vec<usize> {
    let r = footprint.subplot_radius;
    let mut out = Vec::new();
    for c in footprint.subplot_centers() {
        let bb = super::geometry::Rect::new(c.x - r, c.y - r, c.x + r, c.y + r);
        let Some((c0, c1, r0, r1)) = spec.window(&bb) else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let rect = spec.cell_rect(col, row);
                let dx = (rect.xmin - c.x).max(0.0).max(c.x - rect.xmax);
                let dy = (rect.ymin - c.y).max(0.0).max(c.y - rect.ymax);
                if dx * dx + dy * dy < r * r {
                    out.push(spec.index(col, row));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Nearest-neighbour resampling: each target cell takes the source cell that
/// contains its center; cells off the source grid become nodata.
pub fn resample_nearest(raster: &Raster, target: &GridSpec) -> Raster {
    let mut out = Raster::nodata(*target, raster.band_name.clone());
    for row in 0..target.n_rows {
        for col in 0..target.n_cols {
            let c = target.cell_center(col, row);
            if let Some(i) = raster.spec.index_of(c.x, c.y) {
                let v = raster.values[i];
                if !raster.is_nodata(v) {
                    out.set(col, row, v);
                }
            }
        }
    }
    out
}
