//! Model and assessment plot datasets: temporal matching against LiDAR
//! coverages, growth adjustment of bracketed plots, point-cloud screening,
//! duplicate resolution, and the train/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::geodata::{footprint_touches, PlotFootprint, Point, Polygon, Raster};
use crate::pointcloud::{convex_hull_coverage, CloudIndex, PointCloud};
use crate::predictors::pool_footprint;
use crate::{Error, Result};

/// Relative AGB decrease between bracketing inventories that marks a plot
/// as disturbed.
pub const DISTURBANCE_DECREASE: f64 = 0.05;
/// Zero-AGB plots with a pooled return higher than this are excluded.
pub const NONFOREST_MAX_HEIGHT_M: f64 = 1.0;
/// Minimum share of each subplot covered by the hull of its returns.
pub const MIN_HULL_COVERAGE: f64 = 0.90;
/// Largest inventory-to-acquisition gap, in years, for assessment plots.
pub const ASSESSMENT_WINDOW_YEARS: i32 = 2;

/// Tunable selection thresholds; defaults are the published values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionThresholds {
    pub disturbance_decrease: f64,
    pub nonforest_max_height: f64,
    pub min_hull_coverage: f64,
    pub assessment_window_years: i32,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        SelectionThresholds {
            disturbance_decrease: DISTURBANCE_DECREASE,
            nonforest_max_height: NONFOREST_MAX_HEIGHT_M,
            min_hull_coverage: MIN_HULL_COVERAGE,
            assessment_window_years: ASSESSMENT_WINDOW_YEARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventoryRecord {
    pub plot_id: String,
    pub x: f64,
    pub y: f64,
    pub inventory_year: i32,
    /// Mg/ha; structurally 0 when the plot is nonforest.
    pub agb: f64,
    pub all_subplots_measured: bool,
    pub uniform_condition: bool,
    pub forested: bool,
    pub tax_code: Option<f64>,
}

impl InventoryRecord {
    pub fn validate(&self) -> Result<()> {
        if self.plot_id.is_empty() {
            return Err(Error::invalid("inventory record with empty plot_id"));
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::invalid(format!("plot `{}` has non-finite coordinates", self.plot_id)));
        }
        if !(self.agb.is_finite() && self.agb >= 0.0) {
            return Err(Error::invalid(format!("plot `{}` has invalid AGB {}", self.plot_id, self.agb)));
        }
        if !self.forested && self.agb != 0.0 {
            return Err(Error::invalid(format!(
                "plot `{}` ({}) is nonforest but has AGB {}",
                self.plot_id, self.inventory_year, self.agb
            )));
        }
        Ok(())
    }

    fn eligible(&self) -> bool {
        self.all_subplots_measured && self.uniform_condition
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageInfo {
    pub coverage_id: u32,
    pub year: i32,
    pub footprint: Polygon,
}

/// A height-normalized coverage cloud with its spatial index.
#[derive(Clone, Copy)]
pub struct CoverageCloud<'a> {
    pub cloud: &'a PointCloud,
    pub index: &'a CloudIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgbSource {
    Measured { year: i32 },
    GrowthAdjusted { pre_year: i32, post_year: i32 },
}

impl AgbSource {
    /// Most recent inventory year contributing to the AGB value.
    pub fn reference_year(&self) -> i32 {
        match *self {
            AgbSource::Measured { year } => year,
            AgbSource::GrowthAdjusted { post_year, .. } => post_year,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, AgbSource::Measured { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPlot {
    pub plot_id: String,
    pub coverage_id: u32,
    pub lidar_year: i32,
    pub agb_at_lidar: f64,
    pub source: AgbSource,
    pub footprint: PlotFootprint,
    pub tax_code: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentPlot {
    pub plot_id: String,
    pub coverage_id: u32,
    pub lidar_year: i32,
    pub inventory_year: i32,
    pub agb: f64,
    pub footprint: PlotFootprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Include,
    Exclude,
    Info,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Include => "include",
            Action::Exclude => "exclude",
            Action::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub criterion: String,
    pub action: Action,
    pub description: String,
    pub count: usize,
}

/// Per-criterion counts. Numbered rows follow the published criterion
/// numbering; the remaining rows account for every other candidate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionReport {
    pub rows: Vec<ReportRow>,
}

impl SelectionReport {
    fn push(&mut self, criterion: &str, action: Action, description: &str, count: usize) {
        self.rows.push(ReportRow {
            criterion: criterion.to_string(),
            action,
            description: description.to_string(),
            count,
        });
    }

    pub fn count(&self, criterion: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.criterion == criterion).map(|r| r.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthOutcome {
    Adjusted(f64),
    Disturbed,
}

/// Linear interpolation of AGB between bracketing inventories, or
/// `Disturbed` when AGB fell by 5% or more. A zero baseline never counts as
/// disturbed.
pub fn growth_adjust(pre: (i32, f64), post: (i32, f64), lidar_year: i32) -> Result<GrowthOutcome> {
    growth_adjust_with(pre, post, lidar_year, DISTURBANCE_DECREASE)
}

/// [`growth_adjust`] with an explicit relative-decrease threshold.
pub fn growth_adjust_with(pre: (i32, f64), post: (i32, f64), lidar_year: i32, decrease: f64) -> Result<GrowthOutcome> {
    let ((y0, a0), (y1, a1)) = (pre, post);
    if !(y0 < lidar_year && lidar_year < y1) {
        return Err(Error::invalid(format!(
            "inventories {y0} and {y1} do not bracket acquisition year {lidar_year}"
        )));
    }
    if !(a0.is_finite() && a1.is_finite() && a0 >= 0.0 && a1 >= 0.0) {
        return Err(Error::invalid("bracketing AGB values must be finite and non-negative"));
    }
    if a0 > 0.0 && (a1 - a0) / a0 <= -decrease {
        return Ok(GrowthOutcome::Disturbed);
    }
    // Multiplying before dividing keeps whole-number cases exact.
    let dy = f64::from(lidar_year - y0);
    Ok(GrowthOutcome::Adjusted(a0 + (a1 - a0) * dy / f64::from(y1 - y0)))
}

struct PlotHistory<'a> {
    id: &'a str,
    center: Point,
    /// Eligible records sorted by year.
    records: Vec<&'a InventoryRecord>,
}

fn plot_histories(inventory: &[InventoryRecord]) -> Result<(Vec<PlotHistory<'_>>, usize)> {
    let mut by_plot: BTreeMap<&str, Vec<&InventoryRecord>> = BTreeMap::new();
    for r in inventory {
        r.validate()?;
        by_plot.entry(&r.plot_id).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut ineligible = 0;
    for (id, mut recs) in by_plot {
        recs.sort_by_key(|r| r.inventory_year);
        for w in recs.windows(2) {
            if w[0].inventory_year == w[1].inventory_year {
                return Err(Error::invalid(format!(
                    "plot `{id}` has two records for {}",
                    w[0].inventory_year
                )));
            }
        }
        let center = Point::new(recs[0].x, recs[0].y);
        let eligible: Vec<_> = recs.into_iter().filter(|r| r.eligible()).collect();
        if eligible.is_empty() {
            ineligible += 1;
            continue;
        }
        out.push(PlotHistory {
            id,
            center,
            records: eligible,
        });
    }
    Ok((out, ineligible))
}

fn containing<'c>(coverages: &'c [CoverageInfo], p: &Point) -> Vec<(usize, &'c CoverageInfo)> {
    coverages
        .iter()
        .enumerate()
        .filter(|(_, c)| c.footprint.contains(p))
        .collect()
}

fn check_coverages(coverages: &[CoverageInfo]) -> Result<()> {
    let mut ids: Vec<u32> = coverages.iter().map(|c| c.coverage_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate coverage_id"));
    }
    Ok(())
}

/// Model dataset: exact-year and growth-adjusted plots, screened against
/// their coverage clouds and deduplicated across overlapping coverages.
/// `clouds` is parallel to `coverages`.
pub fn select_model_plots(
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    clouds: &[CoverageCloud<'_>],
) -> Result<(Vec<ModelPlot>, SelectionReport)> {
    select_model_plots_with(inventory, coverages, clouds, &SelectionThresholds::default())
}

pub fn select_model_plots_with(
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    clouds: &[CoverageCloud<'_>],
    th: &SelectionThresholds,
) -> Result<(Vec<ModelPlot>, SelectionReport)> {
    if clouds.len() != coverages.len() {
        return Err(Error::invalid(format!(
            "{} coverages but {} clouds",
            coverages.len(),
            clouds.len()
        )));
    }
    check_coverages(coverages)?;
    if clouds.iter().any(|c| !c.cloud.height_normalized) {
        return Err(Error::invalid("plot selection needs height-normalized clouds"));
    }
    let (plots, ineligible) = plot_histories(inventory)?;

    let (mut unmatched, mut no_match, mut disturbed) = (0, 0, 0);
    let (mut exact, mut adjusted) = (0, 0);
    // (candidate, coverage slot)
    let mut candidates: Vec<(ModelPlot, usize)> = Vec::new();
    for plot in &plots {
        let covs = containing(coverages, &plot.center);
        if covs.is_empty() {
            unmatched += 1;
            continue;
        }
        for (slot, cov) in covs {
            let y = cov.year;
            let same = plot.records.iter().find(|r| r.inventory_year == y);
            let before = plot.records.iter().rev().find(|r| r.inventory_year < y);
            let after = plot.records.iter().find(|r| r.inventory_year > y);
            let (agb, source, tax) = if let Some(r) = same {
                exact += 1;
                (r.agb, AgbSource::Measured { year: y }, r.tax_code)
            } else if let (Some(a), Some(b)) = (before, after) {
                match growth_adjust((a.inventory_year, a.agb), (b.inventory_year, b.agb), y)? {
                    GrowthOutcome::Disturbed => {
                        disturbed += 1;
                        continue;
                    }
                    GrowthOutcome::Adjusted(v) => {
                        adjusted += 1;
                        let source = AgbSource::GrowthAdjusted {
                            pre_year: a.inventory_year,
                            post_year: b.inventory_year,
                        };
                        (v, source, b.tax_code.or(a.tax_code))
                    }
                }
            } else {
                no_match += 1;
                continue;
            };
            let candidate = ModelPlot {
                plot_id: plot.id.to_string(),
                coverage_id: cov.coverage_id,
                lidar_year: y,
                agb_at_lidar: agb,
                source,
                footprint: PlotFootprint::new(plot.center),
                tax_code: tax,
            };
            candidates.push((candidate, slot));
        }
    }

    // Point-cloud screens; verdicts are collected in candidate order.
    #[derive(Clone, Copy, PartialEq)]
    enum Verdict {
        Keep,
        Nonforest,
        Hull,
    }
    let verdicts: Vec<Verdict> = candidates
        .par_iter()
        .map(|(c, slot)| {
            let cc = clouds[*slot];
            if c.agb_at_lidar == 0.0 {
                let pooled = pool_footprint(cc.cloud, cc.index, &c.footprint);
                if pooled.max_z().is_some_and(|z| z > th.nonforest_max_height) {
                    return Verdict::Nonforest;
                }
            }
            let r = c.footprint.subplot_radius;
            for center in c.footprint.subplot_centers() {
                let sub = cc.index.clip_circle(cc.cloud, center, r);
                if convex_hull_coverage(&sub, center, r) < th.min_hull_coverage {
                    return Verdict::Hull;
                }
            }
            Verdict::Keep
        })
        .collect();
    let crit3 = verdicts.iter().filter(|v| **v == Verdict::Nonforest).count();
    let crit4 = verdicts.iter().filter(|v| **v == Verdict::Hull).count();
    let survivors: Vec<ModelPlot> = candidates
        .into_iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v == Verdict::Keep)
        .map(|((c, _), _)| c)
        .collect();

    // Duplicate resolution: exact match, then recency, then larger coverage_id.
    let mut best: BTreeMap<String, ModelPlot> = BTreeMap::new();
    let mut crit5 = 0;
    for c in survivors {
        crit5 += usize::from(best.contains_key(&c.plot_id));
        match best.get(&c.plot_id) {
            Some(cur) if !preferred(&c, cur) => {}
            _ => {
                best.insert(c.plot_id.clone(), c);
            }
        }
    }
    let included: Vec<ModelPlot> = best.into_values().collect();

    let mut report = SelectionReport::default();
    let candidate_total = unmatched + no_match + disturbed + exact + adjusted;
    report.push("candidates", Action::Info, "Plot-coverage pairs plus plots outside every coverage", candidate_total);
    report.push("ineligible", Action::Info, "Plots without a fully measured, uniform-condition inventory", ineligible);
    report.push("unmatched", Action::Exclude, "Plots outside every coverage footprint", unmatched);
    report.push("no_temporal_match", Action::Exclude, "Pairs with neither a same-year nor a bracketing inventory", no_match);
    report.push("disturbance", Action::Exclude, "Bracketed pairs whose AGB decreased by 5% or more", disturbed);
    report.push("1", Action::Include, "Plots inventoried in the same year as a LiDAR acquisition", exact);
    report.push("2", Action::Include, "Plots growth-adjusted to temporally align with LiDAR acquisition", adjusted);
    report.push("3", Action::Exclude, "Measured AGB = 0 but maximum LiDAR return > 1 m", crit3);
    report.push("4", Action::Exclude, "A subplot's return hull covers less than 90% of the subplot", crit4);
    report.push("5", Action::Exclude, "Duplicates in overlapping coverages", crit5);
    report.push("included", Action::Info, "Plots in the model dataset", included.len());
    Ok((included, report))
}

fn preferred(a: &ModelPlot, b: &ModelPlot) -> bool {
    let key = |p: &ModelPlot| (p.source.is_exact(), p.source.reference_year(), p.coverage_id);
    key(a) > key(b)
}

/// Assessment dataset: one measured record per plot within two years of a
/// containing coverage's acquisition (but not the same year), excluding
/// footprints that touch a masked pixel. Mask pixels equal to 1 are mapped;
/// anything else, nodata, or the area off the grid counts as masked.
pub fn select_assessment_plots(
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    landcover_mask: &Raster,
    aoa_mask: &Raster,
) -> Result<(Vec<AssessmentPlot>, SelectionReport)> {
    select_assessment_plots_with(inventory, coverages, landcover_mask, aoa_mask, &SelectionThresholds::default())
}

pub fn select_assessment_plots_with(
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    landcover_mask: &Raster,
    aoa_mask: &Raster,
    th: &SelectionThresholds,
) -> Result<(Vec<AssessmentPlot>, SelectionReport)> {
    check_coverages(coverages)?;
    if !landcover_mask.spec.aligned_with(&aoa_mask.spec) {
        return Err(Error::invalid("landcover and AOA masks are on different grids"));
    }
    let (plots, ineligible) = plot_histories(inventory)?;
    let (mut unmatched, mut no_match) = (0, 0);
    let mut eligible = Vec::new();
    for plot in &plots {
        let covs = containing(coverages, &plot.center);
        if covs.is_empty() {
            unmatched += 1;
            continue;
        }
        // newest coverage, then the closest record, then the later record
        let mut best: Option<((i32, u32, i32, i32), &CoverageInfo, &InventoryRecord)> = None;
        for (_, cov) in covs {
            for r in &plot.records {
                let gap = (r.inventory_year - cov.year).abs();
                if !(1..=th.assessment_window_years).contains(&gap) {
                    continue;
                }
                let key = (cov.year, cov.coverage_id, -gap, r.inventory_year);
                if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                    best = Some((key, cov, r));
                }
            }
        }
        match best {
            None => no_match += 1,
            Some((_, cov, r)) => eligible.push(AssessmentPlot {
                plot_id: plot.id.to_string(),
                coverage_id: cov.coverage_id,
                lidar_year: cov.year,
                inventory_year: r.inventory_year,
                agb: r.agb,
                footprint: PlotFootprint::new(plot.center),
            }),
        }
    }
    let crit1 = eligible.len();
    let (mut crit2, mut crit3) = (0, 0);
    let mut included = Vec::new();
    for p in eligible {
        if touches_masked(landcover_mask, &p.footprint) {
            crit2 += 1;
        } else if touches_masked(aoa_mask, &p.footprint) {
            crit3 += 1;
        } else {
            included.push(p);
        }
    }
    let mut report = SelectionReport::default();
    report.push("candidates", Action::Info, "Plots with a fully measured, uniform-condition inventory", plots.len());
    report.push("ineligible", Action::Info, "Plots without a fully measured, uniform-condition inventory", ineligible);
    report.push("unmatched", Action::Exclude, "Plots outside every coverage footprint", unmatched);
    report.push("no_temporal_match", Action::Exclude, "Plots with no inventory 1-2 years from a containing acquisition", no_match);
    report.push("1", Action::Include, "Plots inventoried within 2 years of LiDAR acquisition but not in the same year", crit1);
    report.push("2", Action::Exclude, "Footprint touches a pixel outside the landcover mask", crit2);
    report.push("3", Action::Exclude, "Footprint touches a pixel outside the area of applicability", crit3);
    report.push("included", Action::Info, "Plots in the assessment dataset", included.len());
    Ok((included, report))
}

fn touches_masked(mask: &Raster, footprint: &PlotFootprint) -> bool {
    let ext = mask.spec.extent();
    let r = footprint.subplot_radius;
    let off_grid = footprint.subplot_centers().iter().any(|c| {
        c.x - r < ext.xmin || c.x + r > ext.xmax || c.y - r < ext.ymin || c.y + r > ext.ymax
    });
    off_grid
        || footprint_touches(&mask.spec, footprint)
            .into_iter()
            .any(|i| mask.values[i] != 1.0)
}

/// Seeded 80/20-style split. Returns sorted train and test indices.
pub fn split_train_test(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 plots to split, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut crate::seeds::rng(seed));
    let n_train = (fraction * n as f64).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{GridSpec, Rect};
    use crate::pointcloud::PointRecord;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn growth_examples() {
        assert_eq!(growth_adjust((2013, 100.0), (2019, 130.0), 2015).unwrap(), GrowthOutcome::Adjusted(110.0));
        assert_eq!(growth_adjust((2013, 100.0), (2017, 94.0), 2015).unwrap(), GrowthOutcome::Disturbed);
        assert_eq!(growth_adjust((2013, 100.0), (2019, 100.0), 2016).unwrap(), GrowthOutcome::Adjusted(100.0));
        assert_eq!(growth_adjust((2013, 100.0), (2017, 95.0), 2015).unwrap(), GrowthOutcome::Disturbed);
        assert!(matches!(growth_adjust((2013, 100.0), (2017, 95.5), 2015).unwrap(), GrowthOutcome::Adjusted(_)));
        assert_eq!(growth_adjust((2013, 0.0), (2017, 0.0), 2015).unwrap(), GrowthOutcome::Adjusted(0.0));
        assert!(growth_adjust((2013, 1.0), (2017, 2.0), 2013).is_err());
        assert!(growth_adjust((2013, 1.0), (2017, 2.0), 2018).is_err());
    }

    proptest! {
        #[test]
        fn growth_between_brackets(a0 in 0.0..500.0f64, a1 in 0.0..500.0f64, y0 in 2000..2010i32, gap in 2..8i32, k in 1..7i32) {
            let y1 = y0 + gap;
            let ly = y0 + 1 + k % (gap - 1);
            if let GrowthOutcome::Adjusted(v) = growth_adjust((y0, a0), (y1, a1), ly).unwrap() {
                prop_assert!(v >= a0.min(a1) - 1e-9 && v <= a0.max(a1) + 1e-9);
            }
        }

        #[test]
        fn split_is_partition(n in 5usize..200, seed in any::<u64>()) {
            let (tr, te) = split_train_test(n, 0.8, seed).unwrap();
            prop_assert_eq!(tr.len(), (0.8 * n as f64).round() as usize);
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_examples() {
        let (tr, te) = split_train_test(10, 0.8, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(split_train_test(10, 0.8, 5).unwrap(), (tr, te));
        assert!(split_train_test(4, 0.8, 5).is_err());
    }

    fn rec(id: &str, x: f64, y: f64, year: i32, agb: f64) -> InventoryRecord {
        InventoryRecord {
            plot_id: id.into(),
            x,
            y,
            inventory_year: year,
            agb,
            all_subplots_measured: true,
            uniform_condition: true,
            forested: agb > 0.0,
            tax_code: None,
        }
    }

    fn square(id: u32, year: i32, r: Rect) -> CoverageInfo {
        CoverageInfo {
            coverage_id: id,
            year,
            footprint: r.to_polygon(),
        }
    }

    /// Dense returns over a rectangle, with height `h`.
    fn dense_cloud(r: Rect, h: f64, seed: u64) -> PointCloud {
        let mut rng = crate::seeds::rng(seed);
        let n = (r.area() * 4.0) as usize;
        PointCloud::normalized(
            (0..n)
                .map(|_| PointRecord {
                    x: rng.random_range(r.xmin..r.xmax),
                    y: rng.random_range(r.ymin..r.ymax),
                    z: rng.random_range(0.0..h),
                    return_number: 1,
                    num_returns: 1,
                    classification: 1,
                })
                .collect(),
        )
    }

    #[test]
    fn model_selection_rules() {
        let area = Rect::new(0.0, 0.0, 400.0, 200.0);
        let cloud = dense_cloud(area, 3.0, 1);
        let index = CloudIndex::new(&cloud, 20.0);
        let cc = CoverageCloud { cloud: &cloud, index: &index };
        let covs = vec![
            square(1, 2017, Rect::new(0.0, 0.0, 250.0, 200.0)),
            square(2, 2015, Rect::new(150.0, 0.0, 400.0, 200.0)),
        ];
        let inv = vec![
            // exact match in coverage 1
            rec("a", 60.0, 100.0, 2017, 120.0),
            // nonforest with 3 m returns
            rec("b", 100.0, 100.0, 2017, 0.0),
            // overlap: exact in 2015 coverage, bracketed for 2017
            rec("c", 200.0, 100.0, 2015, 90.0),
            rec("c", 200.0, 100.0, 2019, 110.0),
            // bracketed only, in coverage 2
            rec("d", 320.0, 100.0, 2013, 50.0),
            rec("d", 320.0, 100.0, 2016, 60.0),
            // disturbed
            rec("e", 350.0, 60.0, 2014, 100.0),
            rec("e", 350.0, 60.0, 2018, 80.0),
            // outside every coverage
            rec("f", 900.0, 900.0, 2017, 10.0),
            // no temporal match
            rec("g", 60.0, 160.0, 2010, 10.0),
        ];
        let (plots, report) = select_model_plots(&inv, &covs, &[cc, cc]).unwrap();
        let ids: Vec<_> = plots.iter().map(|p| (p.plot_id.as_str(), p.coverage_id)).collect();
        assert_eq!(ids, vec![("a", 1), ("c", 2), ("d", 2)]);
        assert_eq!(plots[2].agb_at_lidar, 50.0 + 10.0 * 2.0 / 3.0);
        assert_eq!(plots[2].source, AgbSource::GrowthAdjusted { pre_year: 2013, post_year: 2016 });
        let c = |k| report.count(k).unwrap();
        assert_eq!((c("1"), c("2"), c("3"), c("4"), c("5")), (3, 2, 1, 0, 1));
        assert_eq!((c("unmatched"), c("no_temporal_match"), c("disturbance")), (1, 1, 1));
        assert_eq!(c("included"), c("1") + c("2") - c("3") - c("4") - c("5"));
        assert_eq!(
            c("candidates"),
            c("1") + c("2") + c("unmatched") + c("no_temporal_match") + c("disturbance")
        );
    }

    #[test]
    fn sparse_subplot_fails_hull_screen() {
        let area = Rect::new(0.0, 0.0, 200.0, 200.0);
        let mut cloud = dense_cloud(area, 20.0, 2);
        // empty the southern half of one subplot of the plot at (100, 100)
        let fp = PlotFootprint::new(Point::new(100.0, 100.0));
        let sub = fp.subplot_centers()[2];
        cloud.records.retain(|r| Point::new(r.x, r.y).dist(&sub) > 8.0 || r.y > sub.y);
        let index = CloudIndex::new(&cloud, 20.0);
        let covs = vec![square(1, 2017, area)];
        let inv = vec![rec("a", 100.0, 100.0, 2017, 80.0)];
        let (plots, report) =
            select_model_plots(&inv, &covs, &[CoverageCloud { cloud: &cloud, index: &index }]).unwrap();
        assert!(plots.is_empty());
        assert_eq!(report.count("4"), Some(1));
    }

    #[test]
    fn assessment_window_and_masks() {
        let spec = GridSpec::new(0.0, 0.0, 30.0, 20, 10).unwrap();
        let mut lc = Raster::filled(spec, 1.0, "landcover");
        let aoa = Raster::filled(spec, 1.0, "aoa");
        // a water pixel under plot "w"
        let i = spec.index_of(300.0, 150.0).unwrap();
        lc.values[i] = 0.0;
        let covs = vec![square(1, 2017, spec.extent())];
        let inv = vec![
            rec("a", 100.0, 150.0, 2015, 10.0),
            rec("b", 200.0, 150.0, 2017, 10.0),
            rec("w", 300.0, 150.0, 2016, 10.0),
            rec("c", 450.0, 150.0, 2019, 10.0),
            rec("c", 450.0, 150.0, 2018, 20.0),
        ];
        let (plots, report) = select_assessment_plots(&inv, &covs, &lc, &aoa).unwrap();
        let ids: Vec<_> = plots.iter().map(|p| (p.plot_id.as_str(), p.inventory_year)).collect();
        assert_eq!(ids, vec![("a", 2015), ("c", 2018)]);
        assert_eq!(report.count("1"), Some(3));
        assert_eq!(report.count("2"), Some(1));
        assert_eq!(report.count("no_temporal_match"), Some(1));
    }

    #[test]
    fn nonforest_with_agb_is_rejected() {
        let mut r = rec("x", 0.0, 0.0, 2017, 5.0);
        r.forested = false;
        assert!(r.validate().is_err());
    }
}
