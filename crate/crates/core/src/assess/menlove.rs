use crate::geodata::{hexagon_polygon, spacing_for_hex_area, zonal_weights, Point, Raster};
use crate::mapper::LandClass;
use crate::{Error, Result};

/// Minimum share of a hexagon that must be mapped for it to be compared.
pub const MIN_MAPPED_FRACTION: f64 = 0.10;

/// External design-based estimate for one hexagon: AGB density over the
/// whole hexagon area with its confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct HexEstimate {
    pub hex_id: String,
    pub center: Point,
    pub area_ha: f64,
    pub fia_density: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexComparison {
    pub hex_id: String,
    pub mapped_fraction: f64,
    pub map_estimate: f64,
    /// Inventory density re-expressed per vegetated hectare.
    pub fia_adjusted: f64,
    pub ci_low_adjusted: f64,
    pub ci_high_adjusted: f64,
    pub within_ci: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexComparisonSummary {
    pub rows: Vec<HexComparison>,
    pub n_input: usize,
    /// `None` when no hexagon passes the mapped-area threshold.
    pub fraction_within: Option<f64>,
}

/// Compares intersection-weighted mean masked AGB to inventory estimates per
/// hexagon. Inventory densities and CIs are scaled by hexagon area over
/// vegetated area; hexagons with at most 10% mapped area are skipped.
pub fn menlove_compare(hexes: &[HexEstimate], agb_masked: &Raster, landcover: &Raster) -> Result<HexComparisonSummary> {
    menlove_compare_with(hexes, agb_masked, landcover, MIN_MAPPED_FRACTION)
}

/// [`menlove_compare`] with an explicit mapped-area threshold.
pub fn menlove_compare_with(
    hexes: &[HexEstimate],
    agb_masked: &Raster,
    landcover: &Raster,
    min_mapped_fraction: f64,
) -> Result<HexComparisonSummary> {
    if !agb_masked.spec.aligned_with(&landcover.spec) {
        return Err(Error::invalid("map and landcover rasters are not on a shared grid"));
    }
    let mut rows = Vec::new();
    for h in hexes {
        if !(h.area_ha > 0.0) || !(h.ci_low <= h.ci_high) {
            return Err(Error::invalid(format!("hexagon {} has invalid area or interval", h.hex_id)));
        }
        let area_m2 = h.area_ha * 1e4;
        let poly = hexagon_polygon(h.center, spacing_for_hex_area(area_m2));
        let mut mapped = 0.0;
        let mut weighted = 0.0;
        let mut vegetated = 0.0;
        for (i, a) in zonal_weights(&agb_masked.spec, &[poly]) {
            let v = agb_masked.values[i];
            if !agb_masked.is_nodata(v) {
                mapped += a;
                weighted += v * a;
            }
            let lc = landcover.values[i];
            if !landcover.is_nodata(lc) && LandClass::from_code(lc).is_some_and(|c| c.is_vegetated()) {
                vegetated += a;
            }
        }
        let mapped_fraction = mapped / area_m2;
        if mapped_fraction <= min_mapped_fraction || vegetated <= 0.0 {
            continue;
        }
        let map_estimate = weighted / mapped;
        let k = area_m2 / vegetated;
        let (lo, hi) = (h.ci_low * k, h.ci_high * k);
        rows.push(HexComparison {
            hex_id: h.hex_id.clone(),
            mapped_fraction,
            map_estimate,
            fia_adjusted: h.fia_density * k,
            ci_low_adjusted: lo,
            ci_high_adjusted: hi,
            within_ci: lo <= map_estimate && map_estimate <= hi,
        });
    }
    let within = rows.iter().filter(|r| r.within_ci).count();
    Ok(HexComparisonSummary {
        fraction_within: (!rows.is_empty()).then(|| within as f64 / rows.len() as f64),
        n_input: hexes.len(),
        rows,
    })
}
