use std::collections::BTreeMap;

use super::metrics::{gmfr, metric_bundle, point_metrics_unchecked, GmfrLine, MetricBundle, SeOptions};
use crate::geodata::{area_weighted_mean, HexTessellation, Point, Raster, Rect};
use crate::plotselect::AssessmentPlot;
use crate::seeds::derive_seed;
use crate::{Error, Result};

/// Plots per hectare below which a hexagon is dropped from the filtered
/// mean-error series (1 plot per 24,000 ha).
pub const MIN_PLOT_DENSITY_PER_HA: f64 = 1.0 / 24_000.0;

/// Reference AGB of one plot next to the map value extracted over its
/// footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPixelPair {
    pub plot_id: String,
    pub center: Point,
    pub fia: f64,
    pub map: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    PlotPixel,
    /// Hexagon tessellation with this centroid spacing in meters.
    Hex(f64),
}

impl Scale {
    pub fn label(&self) -> String {
        match self {
            Scale::PlotPixel => "plot-pixel".into(),
            Scale::Hex(d) => format!("{}", d),
        }
    }
}

/// One aggregation unit: a plot at the plot-pixel scale, a hexagon otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: usize,
    pub n_plots: usize,
    pub fia_mean: f64,
    pub map_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleResult {
    pub scale: Scale,
    pub n_units: usize,
    pub plots_per_hex: f64,
    pub metrics: MetricBundle,
    /// `None` when either side is constant across units.
    pub gmfr: Option<GmfrLine>,
    pub units: Vec<Unit>,
}

/// Extracts the area-weighted mean of valid map pixels under every plot
/// footprint. A plot with no valid pixel is an error: assessment plots are
/// filtered so this cannot happen for consistent inputs.
pub fn extract_plot_pixels(plots: &[AssessmentPlot], agb_masked: &Raster) -> Result<Vec<PlotPixelPair>> {
    if plots.is_empty() {
        return Err(Error::Empty("no assessment plots".into()));
    }
    plots
        .iter()
        .map(|p| {
            let map = area_weighted_mean(agb_masked, &p.footprint.polygons()).ok_or_else(|| {
                Error::invalid(format!("plot {} has no valid map pixel under its footprint", p.plot_id))
            })?;
            Ok(PlotPixelPair {
                plot_id: p.plot_id.clone(),
                center: p.footprint.center,
                fia: p.agb,
                map,
            })
        })
        .collect()
}

fn tessellation(extent: Rect, spacing: f64, seed: u64) -> Result<HexTessellation> {
    HexTessellation::new(extent, spacing, derive_seed(seed, &[spacing.to_bits()]))
}

/// Groups plots by the hexagon containing their center, in hex id order.
fn group_by_hex(pairs: &[PlotPixelPair], hexes: &HexTessellation) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let h = hexes
            .cell_at(&p.center)
            .ok_or_else(|| Error::Geometry(format!("plot {} lies outside the tessellation", p.plot_id)))?;
        groups.entry(h).or_default().push(i);
    }
    Ok(groups)
}

fn units_at(pairs: &[PlotPixelPair], scale: Scale, extent: Rect, seed: u64) -> Result<Vec<Unit>> {
    match scale {
        Scale::PlotPixel => Ok(pairs
            .iter()
            .enumerate()
            .map(|(i, p)| Unit {
                id: i,
                n_plots: 1,
                fia_mean: p.fia,
                map_mean: p.map,
            })
            .collect()),
        Scale::Hex(d) => {
            let hexes = tessellation(extent, d, seed)?;
            Ok(group_by_hex(pairs, &hexes)?
                .into_iter()
                .map(|(id, members)| {
                    let k = members.len() as f64;
                    Unit {
                        id,
                        n_plots: members.len(),
                        fia_mean: members.iter().map(|&i| pairs[i].fia).sum::<f64>() / k,
                        map_mean: members.iter().map(|&i| pairs[i].map).sum::<f64>() / k,
                    }
                })
                .collect())
        }
    }
}

/// Agreement at the plot-pixel scale and at each hexagon spacing. The hex
/// lattice for spacing `d` is seeded from `seed` and `d` only, so adding or
/// removing scales leaves the others unchanged.
pub fn riemann_from_pairs(
    pairs: &[PlotPixelPair],
    extent: Rect,
    spacings: &[f64],
    se: &SeOptions,
    seed: u64,
) -> Result<Vec<ScaleResult>> {
    if pairs.is_empty() {
        return Err(Error::Empty("no assessment plots".into()));
    }
    let scales = std::iter::once(Scale::PlotPixel).chain(spacings.iter().map(|&d| Scale::Hex(d)));
    // One bootstrap seed for every scale: with canonical pair ordering, a
    // scale whose units are single plots reproduces the plot-pixel bundle.
    let boot_seed = derive_seed(seed, &[2]);
    scales
        .map(|scale| {
            let units = units_at(pairs, scale, extent, seed)?;
            let fia: Vec<f64> = units.iter().map(|u| u.fia_mean).collect();
            let map: Vec<f64> = units.iter().map(|u| u.map_mean).collect();
            let metrics = metric_bundle(&fia, &map, se, boot_seed)?;
            Ok(ScaleResult {
                scale,
                n_units: units.len(),
                plots_per_hex: pairs.len() as f64 / units.len() as f64,
                metrics,
                gmfr: gmfr(&fia, &map).ok(),
                units,
            })
        })
        .collect()
}

pub fn riemann_assessment(
    plots: &[AssessmentPlot],
    agb_masked: &Raster,
    spacings: &[f64],
    se: &SeOptions,
    seed: u64,
) -> Result<Vec<ScaleResult>> {
    let pairs = extract_plot_pixels(plots, agb_masked)?;
    riemann_from_pairs(&pairs, agb_masked.spec.extent(), spacings, se, seed)
}

/// Plot-pixel residual summary for one hexagon.
#[derive(Debug, Clone, PartialEq)]
pub struct HexResidual {
    pub hex_id: usize,
    pub center: Point,
    pub n_plots: usize,
    pub rmse: f64,
    pub mae: f64,
    pub me: f64,
    pub mean_fia: f64,
}

/// Per-hexagon RMSE, MAE and ME of plot-pixel residuals; hexagons holding
/// fewer than two plots are dropped.
pub fn choropleth_residuals(pairs: &[PlotPixelPair], extent: Rect, spacing: f64, seed: u64) -> Result<Vec<HexResidual>> {
    let hexes = tessellation(extent, spacing, seed)?;
    Ok(group_by_hex(pairs, &hexes)?
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(id, members)| {
            let fia: Vec<f64> = members.iter().map(|&i| pairs[i].fia).collect();
            let map: Vec<f64> = members.iter().map(|&i| pairs[i].map).collect();
            let m = point_metrics_unchecked(&fia, &map);
            HexResidual {
                hex_id: id,
                center: hexes.cells[id].center,
                n_plots: members.len(),
                rmse: m.rmse,
                mae: m.mae,
                me: m.me,
                mean_fia: m.y_mean,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityFilteredMe {
    pub spacing: f64,
    pub hex_area_ha: f64,
    pub me_unfiltered: f64,
    /// `None` when every hexagon falls below the density threshold.
    pub me_filtered: Option<f64>,
    pub n_units: usize,
    pub n_units_filtered: usize,
    /// Per-hexagon mean error (FIA mean − map mean) before and after filtering.
    pub unit_errors: Vec<f64>,
    pub unit_errors_filtered: Vec<f64>,
}

/// Whether a hexagon of `hex_area_ha` holding `n_plots` meets the density
/// threshold.
pub fn meets_density(n_plots: usize, hex_area_ha: f64, min_density: f64) -> bool {
    n_plots as f64 / hex_area_ha >= min_density
}

/// Mean error across hexagon units at each spacing, with and without the
/// plot-density filter.
pub fn density_filtered_me(
    pairs: &[PlotPixelPair],
    extent: Rect,
    spacings: &[f64],
    min_density: f64,
    seed: u64,
) -> Result<Vec<DensityFilteredMe>> {
    if pairs.is_empty() {
        return Err(Error::Empty("no assessment plots".into()));
    }
    spacings
        .iter()
        .map(|&d| {
            let units = units_at(pairs, Scale::Hex(d), extent, seed)?;
            let area_ha = crate::geodata::hex_area_for_spacing(d) / 1e4;
            let all: Vec<f64> = units.iter().map(|u| u.fia_mean - u.map_mean).collect();
            let kept: Vec<f64> = units
                .iter()
                .filter(|u| meets_density(u.n_plots, area_ha, min_density))
                .map(|u| u.fia_mean - u.map_mean)
                .collect();
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(DensityFilteredMe {
                spacing: d,
                hex_area_ha: area_ha,
                me_unfiltered: avg(&all),
                me_filtered: (!kept.is_empty()).then(|| avg(&kept)),
                n_units: all.len(),
                n_units_filtered: kept.len(),
                unit_errors: all,
                unit_errors_filtered: kept,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{GridSpec, PlotFootprint};
    use crate::stats::sample_variance;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn plot(id: usize, x: f64, y: f64, agb: f64) -> AssessmentPlot {
        AssessmentPlot {
            plot_id: format!("p{id}"),
            coverage_id: 1,
            lidar_year: 2016,
            inventory_year: 2015,
            agb,
            footprint: PlotFootprint::new(Point::new(x, y)),
        }
    }

    fn quick() -> SeOptions {
        SeOptions {
            bootstrap_reps: 100,
            divide_sqrt_n: false,
        }
    }

    #[test]
    fn constant_scene_has_zero_error_everywhere() {
        let spec = GridSpec::new(0.0, 0.0, 30.0, 100, 100).unwrap();
        let r = Raster::filled(spec, 77.0, "AGB");
        let res = riemann_assessment(&[plot(0, 1500.0, 1500.0, 77.0)], &r, &[500.0, 1000.0], &quick(), 1).unwrap();
        assert_eq!(res.len(), 3);
        for s in &res {
            assert_eq!(s.n_units, 1);
            assert!(s.metrics.point.rmse.abs() < 1e-12);
            assert!(s.metrics.point.me.abs() < 1e-12);
        }
    }

    #[test]
    fn no_plots_is_an_error() {
        let spec = GridSpec::new(0.0, 0.0, 30.0, 10, 10).unwrap();
        let r = Raster::filled(spec, 1.0, "AGB");
        assert!(riemann_assessment(&[], &r, &[100.0], &quick(), 1).is_err());
    }

    fn random_pairs(n: usize, side: f64, noise: f64, seed: u64) -> Vec<PlotPixelPair> {
        let mut rng = crate::seeds::rng(seed);
        let nrm = Normal::new(0.0, noise).unwrap();
        (0..n)
            .map(|i| {
                let c = Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
                let truth = 50.0 + 40.0 * (c.x / side) + 30.0 * (c.y / side * 3.0).sin();
                PlotPixelPair {
                    plot_id: format!("p{i}"),
                    center: c,
                    fia: (truth + nrm.sample(&mut rng)).max(0.0),
                    map: truth,
                }
            })
            .collect()
    }

    #[test]
    fn distinct_hexes_reproduce_plot_pixel_metrics() {
        // Plots on a coarse lattice, tessellation much finer.
        let mut pairs = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let c = Point::new(500.0 + 1000.0 * i as f64, 500.0 + 1000.0 * j as f64);
                pairs.push(PlotPixelPair {
                    plot_id: format!("{i}-{j}"),
                    center: c,
                    fia: (i * 7 + j * 3) as f64,
                    map: (i * 5 + j) as f64,
                });
            }
        }
        let ext = Rect::new(0.0, 0.0, 8000.0, 8000.0);
        let res = riemann_from_pairs(&pairs, ext, &[100.0], &quick(), 4).unwrap();
        assert_eq!(res[1].n_units, 64);
        assert_eq!(res[0].metrics, res[1].metrics);
    }

    #[test]
    fn coarser_hexes_reduce_rmse_for_unbiased_noise() {
        for seed in 0..10 {
            let pairs = random_pairs(400, 20_000.0, 40.0, seed);
            let ext = Rect::new(0.0, 0.0, 20_000.0, 20_000.0);
            let res = riemann_from_pairs(&pairs, ext, &[5000.0], &quick(), seed).unwrap();
            assert!(res[1].metrics.point.rmse <= res[0].metrics.point.rmse, "seed {seed}");
            assert!((res[0].plots_per_hex - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn halving_spacing_quadruples_units() {
        let pairs = random_pairs(20_000, 40_000.0, 1.0, 3);
        let ext = Rect::new(0.0, 0.0, 40_000.0, 40_000.0);
        let res = riemann_from_pairs(&pairs, ext, &[4000.0, 2000.0], &quick(), 3).unwrap();
        let ratio = res[2].n_units as f64 / res[1].n_units as f64;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn choropleth_drops_singletons() {
        let mut pairs = random_pairs(300, 10_000.0, 10.0, 5);
        pairs.push(PlotPixelPair {
            plot_id: "lonely".into(),
            center: Point::new(30_000.0, 30_000.0),
            fia: 1.0,
            map: 1.0,
        });
        let ext = Rect::new(0.0, 0.0, 32_000.0, 32_000.0);
        let hexes = choropleth_residuals(&pairs, ext, 3000.0, 1).unwrap();
        assert!(hexes.iter().all(|h| h.n_plots >= 2));
        assert!(hexes.iter().all(|h| h.rmse + 1e-12 >= h.me.abs()));
        let total: usize = hexes.iter().map(|h| h.n_plots).sum();
        assert!(total < pairs.len());
        for p in pairs.iter_mut() {
            p.map = p.fia;
        }
        for h in choropleth_residuals(&pairs, ext, 3000.0, 1).unwrap() {
            assert_eq!((h.rmse, h.mae, h.me), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn density_threshold_examples() {
        let a10 = crate::geodata::hex_area_for_spacing(10_000.0) / 1e4;
        let a50 = crate::geodata::hex_area_for_spacing(50_000.0) / 1e4;
        assert!(meets_density(1, a10, MIN_PLOT_DENSITY_PER_HA));
        assert!(!meets_density(5, a50, MIN_PLOT_DENSITY_PER_HA));
    }

    #[test]
    fn density_filter_does_not_raise_unit_error_spread() {
        // Plot density varies across the scene so hexes differ in support.
        for seed in 0..10u64 {
            let mut pairs = random_pairs(150, 60_000.0, 40.0, seed);
            pairs.extend(random_pairs(450, 20_000.0, 40.0, seed + 100));
            let ext = Rect::new(0.0, 0.0, 60_000.0, 60_000.0);
            // A 6 km hex (about 3,118 ha) passes the default threshold with a
            // single plot, so require three plots per hex instead.
            let res = density_filtered_me(&pairs, ext, &[6000.0], 3.0 / 3117.7, seed).unwrap();
            let r = &res[0];
            assert!(r.n_units_filtered < r.n_units);
            let abs = |v: &[f64]| v.iter().map(|e| e.abs()).collect::<Vec<_>>();
            let before = sample_variance(&abs(&r.unit_errors));
            let after = sample_variance(&abs(&r.unit_errors_filtered));
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }
}
