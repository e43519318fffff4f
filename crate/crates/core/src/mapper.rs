//! Wall-to-wall AGB surfaces: per-coverage prediction, newest-wins
//! mosaicking with provenance, landcover/AOA masking, and per-class totals.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::ensemble::StackedEnsemble;
use crate::geodata::{GridSpec, Raster};
use crate::stats::CompensatedSum;
use crate::{Error, Result};

/// Landcover primary classes with their raster codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LandClass {
    Developed,
    Cropland,
    GrassShrub,
    TreeCover,
    Water,
    Wetland,
    Barren,
}

impl LandClass {
    pub const ALL: [LandClass; 7] = [
        LandClass::Developed,
        LandClass::Cropland,
        LandClass::GrassShrub,
        LandClass::TreeCover,
        LandClass::Water,
        LandClass::Wetland,
        LandClass::Barren,
    ];
    /// Classes kept on the map, in reporting order.
    pub const VEGETATED: [LandClass; 4] = [
        LandClass::TreeCover,
        LandClass::Cropland,
        LandClass::Wetland,
        LandClass::GrassShrub,
    ];

    pub fn code(&self) -> u8 {
        match self {
            LandClass::Developed => 1,
            LandClass::Cropland => 2,
            LandClass::GrassShrub => 3,
            LandClass::TreeCover => 4,
            LandClass::Water => 5,
            LandClass::Wetland => 6,
            LandClass::Barren => 8,
        }
    }

    pub fn from_code(v: f64) -> Option<LandClass> {
        LandClass::ALL.into_iter().find(|c| f64::from(c.code()) == v)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LandClass::Developed => "Developed",
            LandClass::Cropland => "Cropland",
            LandClass::GrassShrub => "Grass/Shrub",
            LandClass::TreeCover => "Tree cover",
            LandClass::Water => "Water",
            LandClass::Wetland => "Wetland",
            LandClass::Barren => "Barren",
        }
    }

    pub fn is_vegetated(&self) -> bool {
        LandClass::VEGETATED.contains(self)
    }
}

fn aligned(rasters: &[&Raster]) -> Result<GridSpec> {
    let spec = rasters[0].spec;
    if rasters.iter().any(|r| !r.spec.aligned_with(&spec)) {
        return Err(Error::invalid("rasters are not on a shared grid"));
    }
    Ok(spec)
}

/// Ensemble prediction for every pixel, floored at 0; nodata wherever any
/// predictor band is nodata.
pub fn predict_surface(stack: &[Raster], ens: &StackedEnsemble) -> Result<Raster> {
    if stack.len() != ens.feature_names.len() {
        return Err(Error::invalid(format!(
            "{} predictor bands for a model with {} predictors",
            stack.len(),
            ens.feature_names.len()
        )));
    }
    for (b, n) in stack.iter().zip(&ens.feature_names) {
        if &b.band_name != n {
            return Err(Error::invalid(format!("band `{}` where `{n}` was expected", b.band_name)));
        }
    }
    let spec = aligned(&stack.iter().collect::<Vec<_>>())?;
    let values = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = stack.iter().map(|b| b.values[i]).collect();
            if stack.iter().zip(&x).any(|(b, v)| b.is_nodata(*v)) {
                spec.nodata
            } else {
                ens.predict(&x).max(0.0)
            }
        })
        .collect();
    Raster::from_values(spec, values, "AGB")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSurface {
    pub coverage_id: u32,
    pub year: i32,
    /// Nodata outside the coverage.
    pub agb: Raster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMosaic {
    pub agb: Raster,
    /// coverage_id of the surface each pixel came from; nodata where none.
    pub provenance: Raster,
    pub years: BTreeMap<u32, i32>,
}

/// Index of the winning surface per pixel: newest year among surfaces with
/// data there, ties to the larger coverage_id.
fn winners(surfaces: &[CoverageSurface]) -> Vec<Option<usize>> {
    let n = surfaces[0].agb.values.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<usize> = None;
            for (k, s) in surfaces.iter().enumerate() {
                if s.agb.is_nodata(s.agb.values[i]) {
                    continue;
                }
                let key = (s.year, s.coverage_id);
                if best.is_none_or(|b| key > (surfaces[b].year, surfaces[b].coverage_id)) {
                    best = Some(k);
                }
            }
            best
        })
        .collect()
}

/// Newest-wins mosaic with a provenance raster.
pub fn mosaic(surfaces: &[CoverageSurface]) -> Result<CoverageMosaic> {
    if surfaces.is_empty() {
        return Err(Error::invalid("nothing to mosaic"));
    }
    let spec = aligned(&surfaces.iter().map(|s| &s.agb).collect::<Vec<_>>())?;
    let mut years = BTreeMap::new();
    for s in surfaces {
        if years.insert(s.coverage_id, s.year).is_some() {
            return Err(Error::invalid(format!("coverage {} supplied twice", s.coverage_id)));
        }
    }
    let win = winners(surfaces);
    let mut agb = Raster::nodata(spec, "AGB");
    let mut provenance = Raster::nodata(spec, "PROVENANCE");
    for (i, w) in win.iter().enumerate() {
        if let Some(k) = *w {
            agb.values[i] = surfaces[k].agb.values[i];
            provenance.values[i] = f64::from(surfaces[k].coverage_id);
        }
    }
    Ok(CoverageMosaic { agb, provenance, years })
}

/// Assembles a per-coverage layer (landcover vintage, AOA mask) following
/// the mosaic's provenance. Pixels without provenance are nodata.
pub fn mosaic_by_provenance(layers: &BTreeMap<u32, Raster>, provenance: &Raster, band: &str) -> Result<Raster> {
    let spec = provenance.spec;
    for (id, l) in layers {
        if !l.spec.aligned_with(&spec) {
            return Err(Error::invalid(format!("layer for coverage {id} is not on the mosaic grid")));
        }
    }
    let mut out = Raster::nodata(spec, band);
    for (i, &p) in provenance.values.iter().enumerate() {
        if provenance.is_nodata(p) {
            continue;
        }
        let id = p as u32;
        let layer = layers
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("no layer supplied for coverage {id}")))?;
        let v = layer.values[i];
        out.values[i] = if layer.is_nodata(v) { spec.nodata } else { v };
    }
    Ok(out)
}

/// Removes Developed, Water and Barren pixels, pixels without a landcover
/// class, and pixels outside the area of applicability.
pub fn apply_masks(agb: &Raster, landcover: &Raster, aoa: &Raster) -> Result<Raster> {
    let spec = aligned(&[agb, landcover, aoa])?;
    let values = (0..spec.len())
        .map(|i| {
            let v = agb.values[i];
            let class = (!landcover.is_nodata(landcover.values[i]))
                .then(|| LandClass::from_code(landcover.values[i]))
                .flatten();
            let keep = !agb.is_nodata(v)
                && class.is_some_and(|c| c.is_vegetated())
                && !aoa.is_nodata(aoa.values[i])
                && aoa.values[i] == 1.0;
            if keep {
                v
            } else {
                spec.nodata
            }
        })
        .collect();
    Raster::from_values(spec, values, agb.band_name.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: LandClass,
    pub pixel_count: usize,
    pub area_ha: f64,
    pub pct_area: f64,
    pub mean_agb: f64,
    /// Mt.
    pub total_agb: f64,
    pub pct_agb: f64,
    /// Reference plots falling in the class, with their mean AGB.
    pub ref_n: Option<usize>,
    pub ref_mean_agb: Option<f64>,
    /// Share of the class's predicted pixels inside the AOA, in percent.
    pub pct_aoa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub rows: Vec<ClassRow>,
}

/// Mg over `area_ha` hectares at `mean` Mg/ha, in Mt.
pub fn total_mt(mean: f64, area_ha: f64) -> f64 {
    mean * area_ha * 1e-6
}

/// Per vegetated class: mapped pixel count, area, mean and total AGB, and
/// each class's share of area and AGB.
pub fn tabulate_by_class(agb_masked: &Raster, landcover: &Raster) -> Result<ClassSummary> {
    let spec = aligned(&[agb_masked, landcover])?;
    let cell_ha = spec.cell_area() / 10_000.0;
    let mut acc: BTreeMap<LandClass, (usize, CompensatedSum)> = BTreeMap::new();
    for (i, &v) in agb_masked.values.iter().enumerate() {
        if agb_masked.is_nodata(v) || landcover.is_nodata(landcover.values[i]) {
            continue;
        }
        if let Some(c) = LandClass::from_code(landcover.values[i]).filter(|c| c.is_vegetated()) {
            let e = acc.entry(c).or_default();
            e.0 += 1;
            e.1.add(v);
        }
    }
    let mut rows: Vec<ClassRow> = LandClass::VEGETATED
        .iter()
        .map(|&class| {
            let (n, sum) = acc.get(&class).map_or((0, 0.0), |(n, s)| (*n, s.value()));
            let area_ha = n as f64 * cell_ha;
            let mean_agb = if n > 0 { sum / n as f64 } else { 0.0 };
            ClassRow {
                class,
                pixel_count: n,
                area_ha,
                pct_area: 0.0,
                mean_agb,
                total_agb: total_mt(mean_agb, area_ha),
                pct_agb: 0.0,
                ref_n: None,
                ref_mean_agb: None,
                pct_aoa: None,
            }
        })
        .collect();
    let area: f64 = rows.iter().map(|r| r.area_ha).sum();
    let total: f64 = rows.iter().map(|r| r.total_agb).sum();
    for r in rows.iter_mut() {
        r.pct_area = if area > 0.0 { 100.0 * r.area_ha / area } else { 0.0 };
        r.pct_agb = if total > 0.0 { 100.0 * r.total_agb / total } else { 0.0 };
    }
    Ok(ClassSummary { rows })
}

impl ClassSummary {
    /// Adds each class's AOA share among pixels that had a prediction
    /// before AOA masking.
    pub fn with_aoa_share(mut self, agb_unmasked: &Raster, landcover: &Raster, aoa: &Raster) -> Result<Self> {
        aligned(&[agb_unmasked, landcover, aoa])?;
        for row in self.rows.iter_mut() {
            let code = f64::from(row.class.code());
            let (mut n, mut inside) = (0usize, 0usize);
            for i in 0..agb_unmasked.values.len() {
                if landcover.values[i] != code || agb_unmasked.is_nodata(agb_unmasked.values[i]) {
                    continue;
                }
                n += 1;
                inside += usize::from(aoa.values[i] == 1.0);
            }
            row.pct_aoa = (n > 0).then(|| 100.0 * inside as f64 / n as f64);
        }
        Ok(self)
    }

    /// Adds reference-plot counts and means from `(class, agb)` pairs.
    pub fn with_reference_plots(mut self, plots: &[(LandClass, f64)]) -> Self {
        for row in self.rows.iter_mut() {
            let v: Vec<f64> = plots.iter().filter(|(c, _)| *c == row.class).map(|(_, a)| *a).collect();
            row.ref_n = Some(v.len());
            row.ref_mean_agb = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        }
        self
    }

    pub fn total_agb(&self) -> f64 {
        self.rows.iter().map(|r| r.total_agb).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{train_ensemble, EnsembleParams, Meta};
    use crate::learners::testdata::friedmanish;
    use crate::learners::{GbtParams, RfParams, SvrParams};
    use rand::Rng;

    fn spec() -> GridSpec {
        GridSpec::new(0.0, 0.0, 30.0, 8, 6).unwrap()
    }

    fn ensemble() -> StackedEnsemble {
        let ds = friedmanish(30, 2, 0.5, 1);
        let hp = EnsembleParams {
            rf: RfParams { n_trees: 10, ..RfParams::default_for(2) },
            gbt: GbtParams { n_rounds: 10, ..GbtParams::default() },
            svr: SvrParams::default_for(&ds),
        };
        train_ensemble(&ds, &hp, 2, 1).unwrap()
    }

    fn stack(seed: u64) -> Vec<Raster> {
        let mut r = crate::seeds::rng(seed);
        ["x0", "x1"]
            .iter()
            .map(|n| Raster::from_values(spec(), (0..48).map(|_| r.random_range(0.0..1.0)).collect(), *n).unwrap())
            .collect()
    }

    #[test]
    fn surface_matches_scalar_predictions() {
        let e = ensemble();
        let mut s = stack(3);
        s[1].values[7] = spec().nodata;
        let out = predict_surface(&s, &e).unwrap();
        for i in 0..48 {
            if i == 7 {
                assert!(out.is_nodata(out.values[i]));
            } else {
                assert_eq!(out.values[i], e.predict(&[s[0].values[i], s[1].values[i]]).max(0.0));
            }
        }
        let c = StackedEnsemble { meta: Meta { coef: [12.5, 0.0, 0.0, 0.0], ridge_fallback: false }, ..e.clone() };
        assert!(predict_surface(&stack(3), &c).unwrap().values.iter().all(|v| *v == 12.5));
        let neg = StackedEnsemble { meta: Meta { coef: [-3.0, 0.0, 0.0, 0.0], ridge_fallback: false }, ..e };
        assert!(predict_surface(&stack(3), &neg).unwrap().values.iter().all(|v| *v == 0.0));
    }

    fn surface(id: u32, year: i32, cols: std::ops::Range<usize>, value: f64) -> CoverageSurface {
        let mut agb = Raster::nodata(spec(), "AGB");
        for row in 0..6 {
            for col in cols.clone() {
                agb.set(col, row, value);
            }
        }
        CoverageSurface { coverage_id: id, year, agb }
    }

    #[test]
    fn newest_wins_and_order_independent() {
        let a = surface(1, 2014, 0..5, 10.0);
        let b = surface(2, 2018, 3..8, 20.0);
        let m = mosaic(&[a.clone(), b.clone()]).unwrap();
        for col in 0..8 {
            let expect = if col >= 3 { 20.0 } else { 10.0 };
            assert_eq!(m.agb.get(col, 2), expect);
            assert_eq!(m.provenance.get(col, 2), if col >= 3 { 2.0 } else { 1.0 });
        }
        assert_eq!(mosaic(&[b.clone(), a.clone()]).unwrap(), m);
        assert_eq!(mosaic(&[a.clone()]).unwrap().agb, a.agb);
        // equal years: larger id wins
        let c = surface(5, 2018, 0..8, 30.0);
        assert_eq!(mosaic(&[b, c]).unwrap().agb.get(4, 0), 30.0);
    }

    #[test]
    fn layers_follow_provenance() {
        let m = mosaic(&[surface(1, 2014, 0..5, 10.0), surface(2, 2018, 3..8, 20.0)]).unwrap();
        let layers: BTreeMap<u32, Raster> = [(1, Raster::filled(spec(), 4.0, "LC")), (2, Raster::filled(spec(), 6.0, "LC"))].into();
        let lc = mosaic_by_provenance(&layers, &m.provenance, "LC").unwrap();
        assert_eq!(lc.get(0, 0), 4.0);
        assert_eq!(lc.get(7, 0), 6.0);
    }

    #[test]
    fn masks() {
        let agb = Raster::from_values(spec(), (0..48).map(f64::from).collect(), "AGB").unwrap();
        let tree = Raster::filled(spec(), 4.0, "LC");
        let inside = Raster::filled(spec(), 1.0, "AOA");
        assert_eq!(apply_masks(&agb, &tree, &inside).unwrap(), agb);
        let water = Raster::filled(spec(), 5.0, "LC");
        assert_eq!(apply_masks(&agb, &water, &inside).unwrap().count_valid(), 0);
        let mut mixed = tree.clone();
        mixed.values[3] = 1.0;
        mixed.values[4] = spec().nodata;
        let mut aoa = inside.clone();
        aoa.values[10] = 0.0;
        let once = apply_masks(&agb, &mixed, &aoa).unwrap();
        assert_eq!(once.count_valid(), 45);
        assert_eq!(apply_masks(&once, &mixed, &aoa).unwrap(), once);
    }

    #[test]
    fn published_tree_cover_total() {
        // mean 132.66 Mg/ha over 4,251,812 ha; the table prints 564.06 Mt,
        // and rounding the mean to 2 decimals allows ±0.005·area·1e-6
        let t = total_mt(132.66, 4_251_812.0);
        assert!((t - 564.06).abs() <= 0.005 * 4_251_812.0 * 1e-6 + 0.005, "{t}");
    }

    #[test]
    fn single_pixel_and_shares() {
        let mut agb = Raster::nodata(spec(), "AGB");
        agb.values[0] = 100.0;
        let lc = Raster::filled(spec(), 4.0, "LC");
        let s = tabulate_by_class(&agb, &lc).unwrap();
        let tree = &s.rows[0];
        assert_eq!(tree.class, LandClass::TreeCover);
        assert!((tree.area_ha - 0.09).abs() < 1e-12);
        assert!((tree.total_agb - 9e-6).abs() < 1e-15);
        assert_eq!(s.rows[1].pixel_count, 0);

        let mut r = crate::seeds::rng(4);
        let agb = Raster::from_values(spec(), (0..48).map(|_| r.random_range(0.0..300.0)).collect(), "AGB").unwrap();
        let lc = Raster::from_values(spec(), (0..48).map(|i| [2.0, 3.0, 4.0, 6.0, 5.0][i % 5]).collect(), "LC").unwrap();
        let s = tabulate_by_class(&agb, &lc).unwrap();
        let pa: f64 = s.rows.iter().map(|r| r.pct_area).sum();
        let pg: f64 = s.rows.iter().map(|r| r.pct_agb).sum();
        assert!((pa - 100.0).abs() < 1e-9 && (pg - 100.0).abs() < 1e-9);
        for row in &s.rows {
            assert!((row.total_agb - row.mean_agb * row.area_ha * 1e-6).abs() <= 1e-6 * row.total_agb.abs().max(1e-12));
        }
    }
}
