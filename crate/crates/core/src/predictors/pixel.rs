use rayon::prelude::*;

use super::metrics::{metrics_from_sorted, LIDAR_NAMES, N_LIDAR};
use super::tax::{normalize_tax_code, TaxEncoding};
use super::vector::AuxRasters;
use crate::geodata::{GridSpec, Raster};
use crate::pointcloud::PointCloud;
use crate::{Error, Result};

/// Per-cell LiDAR metrics, one raster per entry of [`LIDAR_NAMES`]. Cells
/// with no returns are nodata in every band; returns off the grid are ignored.
pub fn pixel_predictors(cloud: &PointCloud, spec: &GridSpec) -> Result<Vec<Raster>> {
    if !cloud.height_normalized {
        return Err(Error::invalid("pixel predictors need a height-normalized cloud"));
    }
    let n_cells = spec.len();
    let cell_of: Vec<u32> = cloud
        .records
        .par_iter()
        .map(|p| spec.index_of(p.x, p.y).map_or(u32::MAX, |i| i as u32))
        .collect();

    let counts = cell_of
        .par_chunks(1 << 16)
        .fold(
            || vec![0usize; n_cells],
            |mut acc, chunk| {
                for &c in chunk {
                    if c != u32::MAX {
                        acc[c as usize] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0usize; n_cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut starts = vec![0usize; n_cells + 1];
    for c in 0..n_cells {
        starts[c + 1] = starts[c] + counts[c];
    }

    // Contiguous cell blocks of roughly equal point counts. Each block
    // gathers its own returns, so the block layout never affects results.
    let n_blocks = rayon::current_num_threads().min(n_cells.max(1));
    let total = starts[n_cells];
    let mut bounds = vec![0usize];
    for k in 1..n_blocks {
        let target = total * k / n_blocks;
        let c = starts.partition_point(|&s| s < target).min(n_cells);
        if c > *bounds.last().unwrap() {
            bounds.push(c);
        }
    }
    bounds.push(n_cells);

    let per_cell: Vec<Option<[f64; N_LIDAR]>> = bounds
        .par_windows(2)
        .flat_map_iter(|w| {
            let (c0, c1) = (w[0], w[1]);
            let base = starts[c0];
            let mut heights = vec![0.0f64; starts[c1] - base];
            let mut fill: Vec<usize> = starts[c0..c1].iter().map(|s| s - base).collect();
            let mut n_first = vec![0usize; c1 - c0];
            for (i, &c) in cell_of.iter().enumerate() {
                let c = c as usize;
                if c < c0 || c >= c1 {
                    continue;
                }
                let p = &cloud.records[i];
                heights[fill[c - c0]] = p.z;
                fill[c - c0] += 1;
                if p.is_first() {
                    n_first[c - c0] += 1;
                }
            }
            (c0..c1)
                .map(|c| {
                    let h = &mut heights[starts[c] - base..starts[c + 1] - base];
                    if h.is_empty() {
                        return None;
                    }
                    h.sort_unstable_by(f64::total_cmp);
                    Some(metrics_from_sorted(h, n_first[c - c0]).values)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut bands: Vec<Raster> = LIDAR_NAMES
        .iter()
        .map(|n| Raster::nodata(*spec, *n))
        .collect();
    for (c, m) in per_cell.iter().enumerate() {
        if let Some(v) = m {
            for (b, band) in bands.iter_mut().enumerate() {
                band.values[c] = v[b];
            }
        }
    }
    Ok(bands)
}

/// Full predictor stack in schema order: LiDAR bands, auxiliary bands, then
/// one 0/1 band per retained parcel indicator.
pub fn predictor_stack(
    lidar: Vec<Raster>,
    aux: &AuxRasters,
    parcels: &Raster,
    tax: &TaxEncoding,
) -> Result<Vec<Raster>> {
    let spec = lidar
        .first()
        .ok_or_else(|| Error::invalid("empty LiDAR band list"))?
        .spec;
    for r in aux.bands.iter().chain(std::iter::once(parcels)) {
        if !r.spec.aligned_with(&spec) {
            return Err(Error::invalid(format!(
                "band `{}` is not aligned with the LiDAR predictor grid",
                r.band_name
            )));
        }
    }
    let mut stack = lidar;
    for b in &aux.bands {
        let mut out = b.clone();
        if out.spec.nodata != spec.nodata {
            for v in out.values.iter_mut() {
                if *v == b.spec.nodata {
                    *v = spec.nodata;
                }
            }
            out.spec.nodata = spec.nodata;
        }
        stack.push(out);
    }
    let names = tax.indicator_names();
    let mut tax_bands: Vec<Raster> = names.iter().map(|n| Raster::filled(spec, 0.0, n.clone())).collect();
    for (i, &raw) in parcels.values.iter().enumerate() {
        let code = normalize_tax_code((!parcels.is_nodata(raw)).then_some(raw));
        for (band, v) in tax_bands.iter_mut().zip(tax.encode(code)) {
            band.values[i] = v;
        }
    }
    stack.extend(tax_bands);
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::PointRecord;
    use crate::predictors::lidar_metrics;
    use rand::Rng;

    fn rec(x: f64, y: f64, z: f64, first: bool) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            return_number: if first { 1 } else { 2 },
            num_returns: 2,
            classification: 1,
        }
    }

    #[test]
    fn single_cell_matches_whole_cloud() {
        let spec = GridSpec::new(0.0, 0.0, 30.0, 3, 3).unwrap();
        let mut rng = crate::seeds::rng(2);
        let recs: Vec<_> = (0..500)
            .map(|i| rec(rng.random_range(30.0..60.0), rng.random_range(30.0..60.0), rng.random_range(0.0..25.0), i % 2 == 0))
            .collect();
        let cloud = PointCloud::normalized(recs);
        let bands = pixel_predictors(&cloud, &spec).unwrap();
        let whole = lidar_metrics(&cloud).unwrap();
        let center = spec.index(1, 1);
        for (b, band) in bands.iter().enumerate() {
            assert_eq!(band.values[center], whole.values[b], "{}", band.band_name);
            assert_eq!(band.count_valid(), 1);
        }
    }

    #[test]
    fn translation_by_one_cell() {
        let spec = GridSpec::new(0.0, 0.0, 10.0, 6, 5).unwrap();
        let mut rng = crate::seeds::rng(9);
        let recs: Vec<_> = (0..800)
            .map(|_| rec(rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), rng.random_range(0.0..30.0), true))
            .collect();
        let a = PointCloud::normalized(recs.clone());
        let b = PointCloud::normalized(recs.iter().map(|r| PointRecord { x: r.x + 10.0, ..*r }).collect());
        let ba = pixel_predictors(&a, &spec).unwrap();
        let bb = pixel_predictors(&b, &spec).unwrap();
        for (ra, rb) in ba.iter().zip(&bb) {
            for row in 0..spec.n_rows {
                for col in 0..spec.n_cols - 1 {
                    assert_eq!(ra.get(col, row), rb.get(col + 1, row));
                }
            }
        }
    }

    #[test]
    fn nodata_count_matches_histogram_oracle() {
        let spec = GridSpec::new(0.0, 0.0, 30.0, 100, 100).unwrap();
        let mut rng = crate::seeds::rng(4);
        // sparse enough that many cells stay empty
        let recs: Vec<_> = (0..20_000)
            .map(|_| rec(rng.random_range(0.0..3000.0), rng.random_range(0.0..3000.0), rng.random_range(0.0..30.0), true))
            .collect();
        let cloud = PointCloud::normalized(recs);
        let mut occupied = vec![false; 100 * 100];
        for r in &cloud.records {
            let c = (r.x / 30.0).floor() as usize;
            let row = 99 - (r.y / 30.0).floor() as usize;
            occupied[row * 100 + c] = true;
        }
        let empty = occupied.iter().filter(|o| !**o).count();
        let bands = pixel_predictors(&cloud, &spec).unwrap();
        for b in &bands {
            assert_eq!(b.values.len() - b.count_valid(), empty);
        }
    }
}
