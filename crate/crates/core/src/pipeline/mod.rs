//! The mapping and assessment workflow as stage functions over in-memory
//! data. [`files`] wraps each stage with artifact I/O and manifests.

pub mod files;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::aoa::{
    aoa_threshold_with, cluster_predictors, di_raster, fit_di_stats, dissimilarity_index, mask_from_di, permutation_importance,
    Clustering, DiStats, ImportanceOptions, ImportanceWeights,
};
use crate::assess::{
    choropleth_residuals, density_filtered_me, extract_plot_pixels, menlove_compare_with, metric_bundle, moran_profile,
    riemann_from_pairs, DensityFilteredMe, HexComparisonSummary, HexEstimate, HexResidual, MetricBundle, MoranResult,
    PlotPixelPair, ScaleResult, SeOptions,
};
use crate::config::{RunConfig, VintageMode};
use crate::ensemble::{train_ensemble, EnsembleParams, StackedEnsemble};
use crate::geodata::{GridSpec, Point, Raster, Rect};
use crate::learners::{grid_search_cv, CvResult, Dataset, Hyperparams, LearnerKind};
use crate::mapper::{apply_masks, mosaic, mosaic_by_provenance, predict_surface, tabulate_by_class, ClassSummary, CoverageMosaic, CoverageSurface, LandClass};
use crate::plotselect::{
    select_assessment_plots_with, select_model_plots_with, split_train_test, AssessmentPlot, CoverageCloud, CoverageInfo,
    InventoryRecord, ModelPlot, SelectionReport,
};
use crate::pointcloud::{build_ground_model, normalize_heights, CloudIndex, GroundModel, PointCloud};
use crate::predictors::{fit_tax_encoding, normalize_tax_code, pixel_predictors, plot_predictors, predictor_stack, AuxRasters, PredictorSchema, TaxEncoding};
use crate::seeds::{derive_seed, derived_rng};
use crate::stats;
use crate::synth::{gen_cloud, gen_hex_estimates, gen_inventory, gen_scene, growth_factor, CloudParams, InventoryParams, SceneParams, SyntheticScene};
use crate::tabular::{to_learning_dataset, DatasetRow};
use crate::{Error, Result};

/// Bucket size of the spatial index over each coverage cloud, m.
const INDEX_BUCKET_M: f64 = 10.0;
/// Relative half-width and center noise of synthetic inventory hexagon estimates.
const HEX_CI_REL: f64 = 0.15;
const HEX_NOISE_CV: f64 = 0.05;

/// Everything the synthetic generator provides except the clouds, which
/// are produced one coverage at a time by [`synth_cloud`].
#[derive(Debug, Clone)]
pub struct SynthData {
    pub scene: SyntheticScene,
    pub coverages: Vec<CoverageInfo>,
    /// Landcover for the newest coverage year, used in single-vintage mode.
    pub landcover: Raster,
    pub vintages: BTreeMap<i32, Raster>,
    pub inventory: Vec<InventoryRecord>,
    pub hex_estimates: Vec<HexEstimate>,
}

fn inventory_params(cfg: &RunConfig) -> InventoryParams {
    InventoryParams {
        plot_spacing: cfg.synth.plot_spacing,
        years: (cfg.synth.first_year..=cfg.synth.last_year).collect(),
        ..InventoryParams::default()
    }
}

/// Full-height strips spread evenly across the extent, ids from 1 in year
/// order. Each strip spans `share` of the width.
pub fn coverage_layout(extent: Rect, years: &[i32], share: f64) -> Vec<CoverageInfo> {
    let w = extent.width() * share;
    let n = years.len();
    years
        .iter()
        .enumerate()
        .map(|(k, &year)| {
            let x0 = if n > 1 {
                extent.xmin + k as f64 * (extent.width() - w) / (n - 1) as f64
            } else {
                extent.xmin
            };
            CoverageInfo {
                coverage_id: k as u32 + 1,
                year,
                footprint: Rect::new(x0, extent.ymin, (x0 + w).min(extent.xmax), extent.ymax).to_polygon(),
            }
        })
        .collect()
}

/// Older landcover vintage: a seeded share of tree-cover blocks were still
/// grass/shrub before `newest`.
pub fn landcover_vintage(base: &Raster, block: f64, change: f64, year: i32, newest: i32, seed: u64) -> Raster {
    let mut out = base.clone();
    if year >= newest || change <= 0.0 {
        return out;
    }
    let spec = base.spec;
    let ext = spec.extent();
    let tree = f64::from(LandClass::TreeCover.code());
    let grass = f64::from(LandClass::GrassShrub.code());
    for row in 0..spec.n_rows {
        for col in 0..spec.n_cols {
            let i = spec.index(col, row);
            if out.values[i] != tree {
                continue;
            }
            let c = spec.cell_center(col, row);
            let bx = ((c.x - ext.xmin) / block).floor() as i64;
            let by = ((c.y - ext.ymin) / block).floor() as i64;
            let u: f64 = rand::Rng::random(&mut derived_rng(seed, &[year as u64, bx as u64, by as u64]));
            if u < change {
                out.values[i] = grass;
            }
        }
    }
    out
}

pub fn synth(cfg: &RunConfig) -> Result<SynthData> {
    let s = &cfg.synth;
    let seed = cfg.seeds.synth;
    let params = SceneParams {
        cell_size: s.cell_size,
        n_bumps: s.n_bumps,
        ..SceneParams::default()
    };
    let scene = gen_scene(s.extent, derive_seed(seed, &[0]), &params)?;
    let coverages = coverage_layout(s.extent, &s.coverage_years, s.coverage_share);
    let newest = *s.coverage_years.iter().max().expect("at least one coverage year");
    let vintages = s
        .coverage_years
        .iter()
        .map(|&y| {
            let r = landcover_vintage(&scene.landcover, params.landcover_block, s.landcover_change, y, newest, derive_seed(seed, &[4]));
            (y, r.renamed(format!("landcover_{y}")))
        })
        .collect();
    let inventory = gen_inventory(&scene, &inventory_params(cfg), derive_seed(seed, &[2]))?;
    let hex_estimates = gen_hex_estimates(&scene, s.hex_estimate_spacing, HEX_CI_REL, HEX_NOISE_CV, derive_seed(seed, &[3]))?;
    Ok(SynthData {
        landcover: scene.landcover.clone().renamed("landcover"),
        scene,
        coverages,
        vintages,
        inventory,
        hex_estimates,
    })
}

/// Raw (not height-normalized) cloud over coverage `k` of the layout, with
/// canopy grown to the acquisition year.
pub fn synth_cloud(cfg: &RunConfig, scene: &SyntheticScene, cov: &CoverageInfo) -> Result<PointCloud> {
    let inv = InventoryParams::default();
    let params = CloudParams {
        density: cfg.synth.point_density,
        agb_scale: growth_factor(inv.growth_rate, inv.base_year, cov.year),
        ..CloudParams::default()
    };
    gen_cloud(scene, cov.footprint.bbox(), &params, derive_seed(cfg.seeds.synth, &[1, u64::from(cov.coverage_id)]))
}

/// Ground model over the coverage footprint and heights above it.
pub fn normalize(cfg: &RunConfig, raw: PointCloud, cov: &CoverageInfo) -> Result<(PointCloud, GroundModel)> {
    let spec = GridSpec::covering(&cov.footprint.bbox(), cfg.ground_cell)?;
    let ground = build_ground_model(&raw, spec)?;
    Ok((normalize_heights(raw, &ground)?, ground))
}

/// LiDAR metric bands of one coverage on the analysis grid.
pub fn coverage_metrics(cloud: &PointCloud, grid: &GridSpec) -> Result<Vec<Raster>> {
    pixel_predictors(cloud, grid)
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub plots: Vec<ModelPlot>,
    pub report: SelectionReport,
    pub tax: TaxEncoding,
    pub names: Vec<String>,
    pub rows: Vec<DatasetRow>,
}

fn parcel_code(parcels: &Raster, p: Point) -> u32 {
    normalize_tax_code(parcels.value_at(p.x, p.y))
}

/// Model-plot selection, seeded train/test split, tax encoding fitted on the
/// training plots, and plot-support predictors for every selected plot.
pub fn select(
    cfg: &RunConfig,
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    clouds: &[PointCloud],
    aux: &AuxRasters,
    parcels: &Raster,
) -> Result<Selection> {
    let indexes: Vec<CloudIndex> = clouds.iter().map(|c| CloudIndex::new(c, INDEX_BUCKET_M)).collect();
    let cc: Vec<CoverageCloud<'_>> = clouds.iter().zip(&indexes).map(|(cloud, index)| CoverageCloud { cloud, index }).collect();
    let (plots, report) = select_model_plots_with(inventory, coverages, &cc, &cfg.selection)?;
    let (train, _) = split_train_test(plots.len(), cfg.train.train_fraction, cfg.seeds.split)?;
    let train_codes: Vec<u32> = train.iter().map(|&i| parcel_code(parcels, plots[i].footprint.center)).collect();
    let tax = fit_tax_encoding(&train_codes)?;
    let names = PredictorSchema::new(&tax).names;
    let slot: BTreeMap<u32, usize> = coverages.iter().enumerate().map(|(k, c)| (c.coverage_id, k)).collect();
    let is_train: Vec<bool> = {
        let mut v = vec![false; plots.len()];
        for &i in &train {
            v[i] = true;
        }
        v
    };
    let rows = plots
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let k = slot[&p.coverage_id];
            let v = plot_predictors(&clouds[k], &indexes[k], &p.footprint, aux, &tax, parcels)?;
            Ok(DatasetRow {
                plot_id: p.plot_id.clone(),
                coverage_id: p.coverage_id,
                center: p.footprint.center,
                test: !is_train[i],
                agb: p.agb_at_lidar,
                predictors: v.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection {
        plots,
        report,
        tax,
        names,
        rows,
    })
}

/// Train and test partitions of a plot dataset.
pub fn partitions<'a>(names: &[String], rows: &'a [DatasetRow]) -> Result<(Dataset, Vec<&'a DatasetRow>, Dataset, Vec<&'a DatasetRow>)> {
    let train: Vec<&DatasetRow> = rows.iter().filter(|r| !r.test).collect();
    let test: Vec<&DatasetRow> = rows.iter().filter(|r| r.test).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("both train and test partitions must be non-empty".into()));
    }
    Ok((to_learning_dataset(names, &train)?, train, to_learning_dataset(names, &test)?, test))
}

#[derive(Debug, Clone)]
pub struct Training {
    pub ensemble: StackedEnsemble,
    /// Per learner: the CV result, or `None` when its grid had one point.
    pub cv: Vec<(LearnerKind, Option<CvResult>)>,
    pub test_ids: Vec<String>,
    pub test_y: Vec<f64>,
    pub test_pred: Vec<f64>,
    pub test_metrics: MetricBundle,
}

fn pick_params(grid: Vec<Hyperparams>, ds: &Dataset, k: usize, seed: u64) -> Result<(Hyperparams, Option<CvResult>)> {
    if grid.len() == 1 {
        return Ok((grid[0], None));
    }
    let cv = grid_search_cv(ds, &grid, k, seed)?;
    Ok((cv.best_params, Some(cv)))
}

/// Grid search per learner, stacked ensemble on the training partition,
/// hold-out metrics on the test partition.
pub fn train(cfg: &RunConfig, names: &[String], rows: &[DatasetRow]) -> Result<Training> {
    let (tr, _, te, te_rows) = partitions(names, rows)?;
    let t = &cfg.train;
    let k = t.cv_folds.min(tr.n);
    let (rf, rf_cv) = pick_params(t.rf_grid(tr.p), &tr, k, derive_seed(cfg.seeds.cv, &[0]))?;
    let (gbt, gbt_cv) = pick_params(t.gbt_grid(), &tr, k, derive_seed(cfg.seeds.cv, &[1]))?;
    let (svr, svr_cv) = pick_params(t.svr_grid(tr.p, stats::sample_sd(&tr.y)), &tr, k, derive_seed(cfg.seeds.cv, &[2]))?;
    let (Hyperparams::Rf(rf), Hyperparams::Gbt(gbt), Hyperparams::Svr(svr)) = (rf, gbt, svr) else {
        unreachable!("grids are built per learner");
    };
    let ensemble = train_ensemble(&tr, &EnsembleParams { rf, gbt, svr }, cfg.seeds.train, cfg.flags.loo_reduction())?;
    let test_pred = ensemble.predict_rows(&te.x);
    let se = SeOptions {
        bootstrap_reps: cfg.assess.bootstrap_reps,
        divide_sqrt_n: cfg.flags.se_divide_sqrt_n,
    };
    let test_metrics = metric_bundle(&te.y, &test_pred, &se, derive_seed(cfg.seeds.assess, &[0]))?;
    Ok(Training {
        ensemble,
        cv: vec![(LearnerKind::Rf, rf_cv), (LearnerKind::Gbt, gbt_cv), (LearnerKind::Svr, svr_cv)],
        test_ids: te_rows.iter().map(|r| r.plot_id.clone()).collect(),
        test_y: te.y,
        test_pred,
        test_metrics,
    })
}

#[derive(Debug, Clone)]
pub struct AoaFit {
    pub clustering: Clustering,
    pub weights: ImportanceWeights,
    /// Threshold filled in from the test DIs.
    pub stats: DiStats,
    pub test_dis: Vec<f64>,
}

/// Importance weights on the training partition, DI statistics, and the
/// threshold from the test partition's DIs.
pub fn fit_aoa(cfg: &RunConfig, names: &[String], rows: &[DatasetRow]) -> Result<AoaFit> {
    let (tr, _, te, _) = partitions(names, rows)?;
    let clustering = cluster_predictors(&tr);
    let opts = ImportanceOptions {
        rf_trees: cfg.aoa.importance_rf_trees,
        gbt_rounds: cfg.aoa.importance_gbt_rounds,
        loo_reduction: cfg.aoa.importance_loo_reduction,
    };
    let weights = permutation_importance(&tr, &clustering, &opts, cfg.seeds.importance)?;
    let mut stats = fit_di_stats(&tr, &weights.weights, cfg.aoa.train_distance)?;
    let test_dis: Vec<f64> = (0..te.n).map(|i| dissimilarity_index(te.row(i), &stats)).collect();
    stats.threshold = aoa_threshold_with(&test_dis, cfg.aoa.q_low, cfg.aoa.q_high, cfg.aoa.iqr_multiplier)?;
    Ok(AoaFit {
        clustering,
        weights,
        stats,
        test_dis,
    })
}

/// Full predictor stack of one coverage.
pub fn coverage_stack(lidar: Vec<Raster>, aux: &AuxRasters, parcels: &Raster, tax: &TaxEncoding) -> Result<Vec<Raster>> {
    predictor_stack(lidar, aux, parcels, tax)
}

/// DI raster and 0/1 AOA mask of one coverage stack.
pub fn coverage_aoa(stack: &[Raster], fit: &AoaFit) -> Result<(Raster, Raster)> {
    let di = di_raster(stack, &fit.stats)?;
    let mask = mask_from_di(&di, fit.stats.threshold);
    Ok((di, mask))
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub surfaces: Vec<CoverageSurface>,
    pub mosaic: CoverageMosaic,
    pub aoa: Raster,
    /// Landcover used for masking: the provenance-mosaicked vintages or the
    /// single raster, depending on the vintage mode.
    pub landcover: Raster,
    pub agb_masked: Raster,
    pub classes: ClassSummary,
}

/// Per-coverage surfaces, newest-wins mosaic, landcover and AOA masking,
/// and the per-class tabulation with reference plots.
#[allow(clippy::too_many_arguments)]
pub fn predict(
    cfg: &RunConfig,
    coverages: &[CoverageInfo],
    stacks: &[Vec<Raster>],
    ensemble: &StackedEnsemble,
    aoa_masks: &BTreeMap<u32, Raster>,
    landcover: &Raster,
    vintages: &BTreeMap<i32, Raster>,
    reference: &[(LandClass, f64)],
) -> Result<Prediction> {
    let surfaces = coverages
        .iter()
        .zip(stacks)
        .map(|(c, s)| {
            Ok(CoverageSurface {
                coverage_id: c.coverage_id,
                year: c.year,
                agb: predict_surface(s, ensemble)?.renamed(format!("agb_{}", c.coverage_id)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mosaic = mosaic(&surfaces)?;
    let aoa = mosaic_by_provenance(aoa_masks, &mosaic.provenance, "AOA")?;
    let lc = match cfg.flags.lcmap_vintage_mode {
        VintageMode::Single => landcover.clone(),
        VintageMode::PerCoverage => {
            let layers = coverages
                .iter()
                .map(|c| {
                    let r = vintages
                        .get(&c.year)
                        .ok_or_else(|| Error::invalid(format!("no landcover vintage for coverage year {}", c.year)))?;
                    Ok((c.coverage_id, r.clone()))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            mosaic_by_provenance(&layers, &mosaic.provenance, "LANDCOVER")?
        }
    };
    let agb_masked = apply_masks(&mosaic.agb, &lc, &aoa)?;
    let classes = tabulate_by_class(&agb_masked, &lc)?
        .with_aoa_share(&mosaic.agb, &lc, &aoa)?
        .with_reference_plots(reference);
    Ok(Prediction {
        surfaces,
        mosaic,
        aoa,
        landcover: lc,
        agb_masked,
        classes,
    })
}

/// `(class, agb)` of model plots whose center lies on a classified pixel.
pub fn reference_plots(rows: &[DatasetRow], landcover: &Raster) -> Vec<(LandClass, f64)> {
    rows.iter()
        .filter_map(|r| {
            let c = landcover.value_at(r.center.x, r.center.y).and_then(LandClass::from_code)?;
            Some((c, r.agb))
        })
        .collect()
}

/// 1 on vegetated classes, 0 elsewhere (including unclassified pixels).
pub fn vegetated_mask(landcover: &Raster) -> Raster {
    let mut out = Raster::filled(landcover.spec, 0.0, "VEGETATED");
    for (o, &v) in out.values.iter_mut().zip(&landcover.values) {
        if !landcover.is_nodata(v) && LandClass::from_code(v).is_some_and(|c| c.is_vegetated()) {
            *o = 1.0;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Assessment {
    pub plots: Vec<AssessmentPlot>,
    pub report: SelectionReport,
    pub pairs: Vec<PlotPixelPair>,
    pub scales: Vec<ScaleResult>,
    pub choropleth: Vec<HexResidual>,
    pub density: Vec<DensityFilteredMe>,
    pub menlove: HexComparisonSummary,
}

/// Assessment-plot selection against the masks, then the agreement
/// battery over plot-pixel and hexagon scales.
pub fn assess(
    cfg: &RunConfig,
    inventory: &[InventoryRecord],
    coverages: &[CoverageInfo],
    agb_masked: &Raster,
    landcover: &Raster,
    aoa: &Raster,
    hexes: &[HexEstimate],
) -> Result<Assessment> {
    let (plots, report) = select_assessment_plots_with(inventory, coverages, &vegetated_mask(landcover), aoa, &cfg.selection)?;
    let pairs = extract_plot_pixels(&plots, agb_masked)?;
    let extent = agb_masked.spec.extent();
    let a = &cfg.assess;
    let se = SeOptions {
        bootstrap_reps: a.bootstrap_reps,
        divide_sqrt_n: cfg.flags.se_divide_sqrt_n,
    };
    let seed = cfg.seeds.assess;
    let scales = riemann_from_pairs(&pairs, extent, &a.spacings, &se, seed)?;
    let choropleth = choropleth_residuals(&pairs, extent, a.choropleth_spacing, seed)?;
    let density = density_filtered_me(&pairs, extent, &a.density_spacings, a.density_filter, seed)?;
    let menlove = menlove_compare_with(hexes, agb_masked, landcover, a.mapped_area)?;
    Ok(Assessment {
        plots,
        report,
        pairs,
        scales,
        choropleth,
        density,
        menlove,
    })
}

/// Observed minus predicted for every model plot: the stacked LOO
/// prediction for training plots, the ensemble prediction for test plots.
pub fn model_residuals(names: &[String], rows: &[DatasetRow], ensemble: &StackedEnsemble) -> Result<(Vec<Point>, Vec<f64>)> {
    let (_, tr_rows, te, te_rows) = partitions(names, rows)?;
    if ensemble.loo.len() != tr_rows.len() {
        return Err(Error::invalid("model was not trained on this dataset's training partition"));
    }
    let mut pts = Vec::with_capacity(rows.len());
    let mut res = Vec::with_capacity(rows.len());
    for (r, loo) in tr_rows.iter().zip(&ensemble.loo) {
        pts.push(r.center);
        res.push(r.agb - ensemble.meta.apply(*loo));
    }
    for (r, p) in te_rows.iter().zip(ensemble.predict_rows(&te.x)) {
        pts.push(r.center);
        res.push(r.agb - p);
    }
    Ok((pts, res))
}

/// Moran profiles of model residuals and assessment residuals.
pub fn moran(
    cfg: &RunConfig,
    model: (&[Point], &[f64]),
    pairs: &[PlotPixelPair],
) -> Result<Vec<(String, Vec<MoranResult>)>> {
    let a = &cfg.assess;
    let m = moran_profile(model.0, model.1, &a.moran_radii, a.moran_reps, derive_seed(cfg.seeds.moran, &[0]))?;
    let pts: Vec<Point> = pairs.iter().map(|p| p.center).collect();
    let res: Vec<f64> = pairs.iter().map(|p| p.fia - p.map).collect();
    let s = moran_profile(&pts, &res, &a.moran_radii, a.moran_reps, derive_seed(cfg.seeds.moran, &[1]))?;
    Ok(vec![("model".to_string(), m), ("assessment".to_string(), s)])
}

/// Headline numbers of a run as `key,value` pairs.
pub fn summary(
    n_rows: usize,
    training: &Training,
    fit: &AoaFit,
    pred: &Prediction,
    assessment: &Assessment,
) -> Vec<(String, String)> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let m = &training.test_metrics.point;
    let (mut pixels, mut inside) = (0usize, 0usize);
    for (&a, &v) in pred.aoa.values.iter().zip(&pred.mosaic.agb.values) {
        if !pred.mosaic.agb.is_nodata(v) {
            pixels += 1;
            inside += usize::from(a == 1.0);
        }
    }
    let mut out = vec![
        ("model_plots".to_string(), n_rows.to_string()),
        ("test_n".to_string(), m.n.to_string()),
        ("test_r2".to_string(), opt(m.r2)),
        ("test_rmse".to_string(), format!("{}", m.rmse)),
        ("test_pct_rmse".to_string(), opt(m.pct_rmse)),
        ("aoa_threshold".to_string(), format!("{}", fit.stats.threshold)),
        ("aoa_inside_fraction".to_string(), format!("{}", if pixels > 0 { inside as f64 / pixels as f64 } else { 0.0 })),
        ("mapped_total_mt".to_string(), format!("{}", pred.classes.total_agb())),
        ("assessment_plots".to_string(), assessment.pairs.len().to_string()),
        ("menlove_fraction_within".to_string(), opt(assessment.menlove.fraction_within)),
    ];
    for s in &assessment.scales {
        out.push((format!("pct_rmse_{}", s.scale.label()), opt(s.metrics.point.pct_rmse)));
    }
    out
}

/// Every intermediate of an in-memory run.
pub struct Run {
    pub synth: SynthData,
    pub n_points: usize,
    pub selection: Selection,
    pub training: Training,
    pub aoa: AoaFit,
    pub prediction: Prediction,
    pub assessment: Assessment,
    pub moran: Vec<(String, Vec<MoranResult>)>,
    pub summary: Vec<(String, String)>,
}

/// Synthetic end-to-end run without touching disk. Clouds are generated,
/// normalized and reduced to metrics one coverage at a time.
pub fn run_in_memory(cfg: &RunConfig) -> Result<Run> {
    let data = synth(cfg)?;
    let grid = data.scene.spec;
    let mut clouds = Vec::new();
    let mut lidar = Vec::new();
    let mut n_points = 0;
    for cov in &data.coverages {
        let raw = synth_cloud(cfg, &data.scene, cov)?;
        n_points += raw.len();
        let (cloud, _) = normalize(cfg, raw, cov)?;
        lidar.push(coverage_metrics(&cloud, &grid)?);
        clouds.push(cloud);
    }
    let parcels = data.scene.parcels.clone();
    let selection = select(cfg, &data.inventory, &data.coverages, &clouds, &data.scene.aux, &parcels)?;
    drop(clouds);
    let training = train(cfg, &selection.names, &selection.rows)?;
    let aoa = fit_aoa(cfg, &selection.names, &selection.rows)?;
    let stacks = lidar
        .into_iter()
        .map(|l| coverage_stack(l, &data.scene.aux, &parcels, &selection.tax))
        .collect::<Result<Vec<_>>>()?;
    let masks = data
        .coverages
        .iter()
        .zip(&stacks)
        .map(|(c, s)| Ok((c.coverage_id, coverage_aoa(s, &aoa)?.1)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let reference = reference_plots(&selection.rows, &data.landcover);
    let prediction = predict(cfg, &data.coverages, &stacks, &training.ensemble, &masks, &data.landcover, &data.vintages, &reference)?;
    let assessment = assess(
        cfg,
        &data.inventory,
        &data.coverages,
        &prediction.agb_masked,
        &prediction.landcover,
        &prediction.aoa,
        &data.hex_estimates,
    )?;
    let (pts, res) = model_residuals(&selection.names, &selection.rows, &training.ensemble)?;
    let moran = moran(cfg, (&pts, &res), &assessment.pairs)?;
    let summary = summary(selection.rows.len(), &training, &aoa, &prediction, &assessment);
    Ok(Run {
        synth: data,
        n_points,
        selection,
        training,
        aoa,
        prediction,
        assessment,
        moran,
        summary,
    })
}
