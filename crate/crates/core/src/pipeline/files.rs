//! Stage runners over files. Each stage reads its inputs from the config's
//! paths or from upstream stage folders under `out_dir`, writes into a
//! scratch folder, and only replaces `out_dir/<stage>` once everything,
//! including `manifest.json`, has been written. A failing stage leaves no
//! partial outputs behind.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{AoaFit, Training};
use crate::config::{RunConfig, VintageMode};
use crate::container::{read_ensemble, write_ensemble, FORMAT_VERSION};
use crate::geodata::{write_asc, GridSpec, Raster};
use crate::learners::Hyperparams;
use crate::plotselect::{CoverageInfo, InventoryRecord};
use crate::pointcloud::{parse_pcx, write_pcx, PointCloud};
use crate::predictors::{AuxRasters, TaxEncoding, AUX_NAMES, LIDAR_NAMES};
use crate::tabular::{self as tab, DatasetRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Normalize,
    Metrics,
    Select,
    Train,
    Aoa,
    Predict,
    Assess,
    Moran,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Normalize,
        Stage::Metrics,
        Stage::Select,
        Stage::Train,
        Stage::Aoa,
        Stage::Predict,
        Stage::Assess,
        Stage::Moran,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Normalize => "normalize",
            Stage::Metrics => "metrics",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Aoa => "aoa",
            Stage::Predict => "predict",
            Stage::Assess => "assess",
            Stage::Moran => "moran",
            Stage::Report => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    fn seeds(&self, cfg: &RunConfig) -> Vec<(&'static str, u64)> {
        let s = &cfg.seeds;
        match self {
            Stage::Synth => vec![("synth", s.synth)],
            Stage::Select => vec![("split", s.split)],
            Stage::Train => vec![("cv", s.cv), ("train", s.train), ("assess", s.assess)],
            Stage::Aoa => vec![("importance", s.importance)],
            Stage::Assess => vec![("assess", s.assess)],
            Stage::Moran => vec![("moran", s.moran)],
            _ => vec![],
        }
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn out(&self, stage: Stage) -> PathBuf {
        self.cfg.paths.out_dir.join(stage.name())
    }

    fn read_text(&mut self, path: &Path) -> Result<String> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(path.to_path_buf());
        Ok(text)
    }

    fn read_asc(&mut self, path: &Path) -> Result<Raster> {
        let band = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let text = self.read_text(path)?;
        crate::geodata::parse_asc(&text, &path.display().to_string(), &band)
    }

    fn read_cloud(&mut self, path: &Path, normalized: bool) -> Result<PointCloud> {
        let text = self.read_text(path)?;
        let marked = text.starts_with("# height_normalized\n");
        if marked != normalized {
            return Err(Error::invalid(format!(
                "{}: expected a {}height-normalized cloud",
                path.display(),
                if normalized { "" } else { "non-" }
            )));
        }
        let mut cloud = parse_pcx(&text, &path.display().to_string())?;
        cloud.height_normalized = normalized;
        Ok(cloud)
    }

    fn inventory(&mut self) -> Result<Vec<InventoryRecord>> {
        let p = self.cfg.paths.inventory.clone();
        let text = self.read_text(&p)?;
        tab::parse_inventory(&text, &p.display().to_string())
    }

    fn coverages(&mut self) -> Result<Vec<CoverageInfo>> {
        let p = self.cfg.paths.coverages.clone();
        let t = tab::Table::parse(&self.read_text(&p)?, &p.display().to_string())?;
        let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
        for (_, r) in &t.rows {
            if let Some(f) = r.get(2) {
                self.inputs.push(dir.join(f.trim()));
            }
        }
        tab::read_coverages(&p)
    }

    fn aux(&mut self) -> Result<AuxRasters> {
        let dir = self.cfg.paths.aux_dir.clone();
        let bands = AUX_NAMES
            .iter()
            .map(|n| self.read_asc(&dir.join(format!("{n}.asc"))))
            .collect::<Result<Vec<_>>>()?;
        AuxRasters::new(bands)
    }

    fn parcels(&mut self) -> Result<Raster> {
        let p = self.cfg.paths.parcels.clone();
        Ok(self.read_asc(&p)?.renamed("parcels"))
    }

    fn landcover(&mut self) -> Result<Raster> {
        let p = self.cfg.paths.landcover_dir.join("landcover.asc");
        self.read_asc(&p)
    }

    fn vintages(&mut self, coverages: &[CoverageInfo]) -> Result<BTreeMap<i32, Raster>> {
        let mut out = BTreeMap::new();
        for c in coverages {
            if !out.contains_key(&c.year) {
                let p = self.cfg.paths.landcover_dir.join(format!("landcover_{}.asc", c.year));
                out.insert(c.year, self.read_asc(&p)?);
            }
        }
        Ok(out)
    }

    fn dataset(&mut self) -> Result<(Vec<String>, Vec<DatasetRow>)> {
        let p = self.out(Stage::Select).join("dataset.csv");
        let text = self.read_text(&p)?;
        tab::parse_dataset(&text, &p.display().to_string())
    }

    fn tax(&mut self) -> Result<TaxEncoding> {
        let p = self.out(Stage::Select).join("tax_encoding.csv");
        let text = self.read_text(&p)?;
        tab::parse_tax_encoding(&text, &p.display().to_string())
    }

    fn lidar_bands(&mut self, coverage_id: u32) -> Result<Vec<Raster>> {
        let dir = self.out(Stage::Metrics).join(coverage_id.to_string());
        LIDAR_NAMES.iter().map(|n| self.read_asc(&dir.join(format!("{n}.asc")))).collect()
    }

    fn stacks(&mut self, coverages: &[CoverageInfo], tax: &TaxEncoding) -> Result<Vec<Vec<Raster>>> {
        let aux = self.aux()?;
        let parcels = self.parcels()?;
        coverages
            .iter()
            .map(|c| {
                let lidar = self.lidar_bands(c.coverage_id)?;
                super::coverage_stack(lidar, &aux, &parcels, tax)
            })
            .collect()
    }

    fn write(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        tab::write_text(&p, text)
    }

    fn write_asc(&self, rel: &str, r: &Raster) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_asc(&p, r)
    }

    fn subdir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}

/// SHA-256 of a file, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let k = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Files under `dir`, as sorted `/`-separated relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = e.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("walk stays under root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn label(out_dir: &Path, p: &Path) -> String {
    match p.strip_prefix(out_dir) {
        Ok(rel) => rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        Err(_) => p.display().to_string(),
    }
}

fn manifest(ctx: &Ctx<'_>, stage: Stage, final_dir: &Path) -> Result<String> {
    let out_dir = &ctx.cfg.paths.out_dir;
    let mut inputs = BTreeMap::new();
    for p in &ctx.inputs {
        inputs.insert(label(out_dir, p), file_digest(p)?);
    }
    let mut outputs = BTreeMap::new();
    for rel in list_files(&ctx.dir)? {
        outputs.insert(rel.clone(), file_digest(&ctx.dir.join(&rel))?);
    }
    let seeds: BTreeMap<&str, u64> = stage.seeds(ctx.cfg).into_iter().collect();
    let doc = json!({
        "stage": stage.name(),
        "output_dir": label(out_dir, final_dir),
        "config_hash": ctx.cfg.hash(),
        "module_versions": {
            "agbmap": env!("CARGO_PKG_VERSION"),
            "model_container": FORMAT_VERSION,
        },
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n")
}

/// Runs one stage. On failure the stage's previous outputs are untouched
/// and no partial outputs remain.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<PathBuf> {
    let out_dir = &cfg.paths.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scratch = out_dir.join(format!(".{}.partial", stage.name()));
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
    }
    std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
    let mut ctx = Ctx {
        cfg,
        dir: scratch.clone(),
        inputs: Vec::new(),
    };
    let final_dir = out_dir.join(stage.name());
    let result = run(&mut ctx, stage).and_then(|()| {
        let m = manifest(&ctx, stage, &final_dir)?;
        tab::write_text(&scratch.join("manifest.json"), &m)
    });
    if let Err(e) = result {
        let _ = std::fs::remove_dir_all(&scratch);
        return Err(e);
    }
    if final_dir.exists() {
        std::fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    std::fs::rename(&scratch, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(final_dir)
}

fn run(ctx: &mut Ctx<'_>, stage: Stage) -> Result<()> {
    match stage {
        Stage::Synth => synth(ctx),
        Stage::Normalize => normalize(ctx),
        Stage::Metrics => metrics(ctx),
        Stage::Select => select(ctx),
        Stage::Train => train(ctx),
        Stage::Aoa => aoa(ctx),
        Stage::Predict => predict(ctx),
        Stage::Assess => assess(ctx),
        Stage::Moran => moran(ctx),
        Stage::Report => report(ctx),
    }
}

fn synth(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let data = super::synth(cfg)?;
    ctx.write("inventory.csv", &tab::format_inventory(&data.inventory))?;
    tab::write_coverages(&ctx.dir, "coverages.csv", &data.coverages)?;
    ctx.write("hex_estimates.csv", &tab::format_hex_estimates(&data.hex_estimates))?;
    for b in &data.scene.aux.bands {
        ctx.write_asc(&format!("aux/{}.asc", b.band_name), b)?;
    }
    ctx.write_asc("parcels.asc", &data.scene.parcels)?;
    ctx.write_asc("landcover/landcover.asc", &data.landcover)?;
    for (y, r) in &data.vintages {
        ctx.write_asc(&format!("landcover/landcover_{y}.asc"), r)?;
    }
    ctx.write_asc("truth/true_agb.asc", &data.scene.true_agb)?;
    let clouds = ctx.subdir("clouds")?;
    for c in &data.coverages {
        let cloud = super::synth_cloud(cfg, &data.scene, c)?;
        write_pcx(&clouds.join(format!("cloud_{}.pcx", c.coverage_id)), &cloud)?;
    }
    Ok(())
}

fn normalize(ctx: &mut Ctx<'_>) -> Result<()> {
    let coverages = ctx.coverages()?;
    for c in &coverages {
        let p = ctx.cfg.paths.clouds_dir.join(format!("cloud_{}.pcx", c.coverage_id));
        let raw = ctx.read_cloud(&p, false)?;
        let (cloud, ground) = super::normalize(ctx.cfg, raw, c)?;
        write_pcx(&ctx.dir.join(format!("cloud_{}.pcx", c.coverage_id)), &cloud)?;
        ctx.write_asc(&format!("ground_{}.asc", c.coverage_id), &ground.ground_elevation)?;
    }
    Ok(())
}

fn normalized_clouds(ctx: &mut Ctx<'_>, coverages: &[CoverageInfo]) -> Result<Vec<PointCloud>> {
    let dir = ctx.out(Stage::Normalize);
    coverages
        .iter()
        .map(|c| ctx.read_cloud(&dir.join(format!("cloud_{}.pcx", c.coverage_id)), true))
        .collect()
}

fn metrics(ctx: &mut Ctx<'_>) -> Result<()> {
    let coverages = ctx.coverages()?;
    let grid: GridSpec = ctx.landcover()?.spec;
    for c in &coverages {
        let clouds = normalized_clouds(ctx, std::slice::from_ref(c))?;
        for b in super::coverage_metrics(&clouds[0], &grid)? {
            ctx.write_asc(&format!("{}/{}.asc", c.coverage_id, b.band_name), &b)?;
        }
    }
    Ok(())
}

fn select(ctx: &mut Ctx<'_>) -> Result<()> {
    let inventory = ctx.inventory()?;
    let coverages = ctx.coverages()?;
    let clouds = normalized_clouds(ctx, &coverages)?;
    let aux = ctx.aux()?;
    let parcels = ctx.parcels()?;
    let s = super::select(ctx.cfg, &inventory, &coverages, &clouds, &aux, &parcels)?;
    ctx.write("selection_report.csv", &tab::format_selection_report(&s.report))?;
    ctx.write("model_plots.csv", &tab::format_model_plots(&s.plots))?;
    ctx.write("dataset.csv", &tab::format_dataset(&s.names, &s.rows))?;
    ctx.write("tax_encoding.csv", &tab::format_tax_encoding(&s.tax))?;
    Ok(())
}

fn describe(h: &Hyperparams) -> String {
    match h {
        Hyperparams::Rf(p) => format!("n_trees={} mtry={} min_leaf={}", p.n_trees, p.mtry, p.min_leaf),
        Hyperparams::Gbt(p) => format!(
            "n_rounds={} learning_rate={} max_depth={} subsample={}",
            p.n_rounds, p.learning_rate, p.max_depth, p.subsample
        ),
        Hyperparams::Svr(p) => format!("c={} epsilon={} gamma={}", p.c, p.epsilon, p.gamma),
    }
}

fn format_cv(t: &Training, grids: &[(String, Vec<Hyperparams>)]) -> String {
    let mut out = tab::CsvOut::new(&["learner", "grid_index", "params", "cv_rmse", "selected"]);
    for ((kind, cv), (_, grid)) in t.cv.iter().zip(grids) {
        for (g, h) in grid.iter().enumerate() {
            let (score, sel) = match cv {
                Some(cv) => (tab::num(cv.scores[g]), cv.best == g),
                None => (String::new(), true),
            };
            out.row([kind.name().to_string(), g.to_string(), describe(h), score, u8::from(sel).to_string()]);
        }
    }
    out.finish()
}

fn train(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let (names, rows) = ctx.dataset()?;
    let t = super::train(cfg, &names, &rows)?;
    let (tr, tr_rows, _, _) = super::partitions(&names, &rows)?;
    let grids = vec![
        ("rf".to_string(), cfg.train.rf_grid(tr.p)),
        ("gbt".to_string(), cfg.train.gbt_grid()),
        ("svr".to_string(), cfg.train.svr_grid(tr.p, crate::stats::sample_sd(&tr.y))),
    ];
    write_ensemble(&ctx.dir.join("model.pagb"), &t.ensemble)?;
    ctx.write("cv_scores.csv", &format_cv(&t, &grids))?;
    let ids: Vec<String> = tr_rows.iter().map(|r| r.plot_id.clone()).collect();
    ctx.write("loo.csv", &tab::format_loo(&ids, &tr.y, &t.ensemble.loo))?;
    let meta: Vec<(String, String)> = ["intercept", "rf", "gbt", "svr"]
        .iter()
        .zip(t.ensemble.meta.coef)
        .map(|(k, v)| (k.to_string(), tab::num(v)))
        .chain(std::iter::once(("ridge_fallback".to_string(), t.ensemble.meta.ridge_fallback.to_string())))
        .collect();
    ctx.write("meta.csv", &tab::format_key_values(&meta))?;
    ctx.write("test_predictions.csv", &tab::format_predictions(&t.test_ids, &t.test_y, &t.test_pred))?;
    ctx.write("test_metrics.csv", &tab::format_key_values(&tab::metric_pairs(&t.test_metrics)))?;
    Ok(())
}

fn aoa_summary(fit: &AoaFit, cfg: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("threshold".into(), tab::num(fit.stats.threshold)),
        ("mean_train_distance".into(), tab::num(fit.stats.mean_train_distance)),
        (
            "train_distance".into(),
            match cfg.aoa.train_distance {
                crate::aoa::TrainDistance::MeanPairwise => "pairwise",
                crate::aoa::TrainDistance::MeanNearestNeighbor => "nearest",
            }
            .into(),
        ),
        ("n_clusters".into(), fit.clustering.n_clusters.to_string()),
        ("rmse_full".into(), tab::num(fit.weights.rmse_full)),
        ("uniform_fallback".into(), fit.weights.uniform_fallback.to_string()),
        ("n_test".into(), fit.test_dis.len().to_string()),
    ]
}

fn aoa(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let (names, rows) = ctx.dataset()?;
    let tax = ctx.tax()?;
    let coverages = ctx.coverages()?;
    let fit = super::fit_aoa(cfg, &names, &rows)?;
    ctx.write("aoa_weights.csv", &tab::format_aoa_weights(&fit.weights))?;
    ctx.write("aoa_summary.csv", &tab::format_key_values(&aoa_summary(&fit, cfg)))?;
    let mut clusters = tab::CsvOut::new(&["predictor", "cluster"]);
    for (n, c) in names.iter().zip(&fit.clustering.assignment) {
        clusters.row([n.clone(), c.to_string()]);
    }
    ctx.write("clusters.csv", &clusters.finish())?;
    let test_ids: Vec<String> = rows.iter().filter(|r| r.test).map(|r| r.plot_id.clone()).collect();
    let mut di = tab::CsvOut::new(&["plot_id", "di"]);
    for (id, d) in test_ids.iter().zip(&fit.test_dis) {
        di.row([id.clone(), tab::num(*d)]);
    }
    ctx.write("test_di.csv", &di.finish())?;
    let stacks = ctx.stacks(&coverages, &tax)?;
    for (c, s) in coverages.iter().zip(&stacks) {
        let (di, mask) = super::coverage_aoa(s, &fit)?;
        ctx.write_asc(&format!("{}/di.asc", c.coverage_id), &di)?;
        ctx.write_asc(&format!("{}/aoa_mask.asc", c.coverage_id), &mask)?;
    }
    Ok(())
}

fn predict(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let (_, rows) = ctx.dataset()?;
    let tax = ctx.tax()?;
    let coverages = ctx.coverages()?;
    let model_path = ctx.out(Stage::Train).join("model.pagb");
    ctx.inputs.push(model_path.clone());
    let ensemble = read_ensemble(&model_path)?;
    let stacks = ctx.stacks(&coverages, &tax)?;
    let aoa_dir = ctx.out(Stage::Aoa);
    let mut masks = BTreeMap::new();
    for c in &coverages {
        masks.insert(c.coverage_id, ctx.read_asc(&aoa_dir.join(format!("{}/aoa_mask.asc", c.coverage_id)))?);
    }
    let landcover = ctx.landcover()?;
    let vintages = match cfg.flags.lcmap_vintage_mode {
        VintageMode::PerCoverage => ctx.vintages(&coverages)?,
        VintageMode::Single => BTreeMap::new(),
    };
    let reference = super::reference_plots(&rows, &landcover);
    let p = super::predict(cfg, &coverages, &stacks, &ensemble, &masks, &landcover, &vintages, &reference)?;
    for s in &p.surfaces {
        ctx.write_asc(&format!("agb_{}.asc", s.coverage_id), &s.agb)?;
    }
    ctx.write_asc("agb_mosaic.asc", &p.mosaic.agb)?;
    ctx.write_asc("provenance.asc", &p.mosaic.provenance)?;
    ctx.write_asc("aoa_mosaic.asc", &p.aoa)?;
    ctx.write_asc("landcover_mosaic.asc", &p.landcover)?;
    ctx.write_asc("agb_masked.asc", &p.agb_masked)?;
    ctx.write("class_summary.csv", &tab::format_class_summary(&p.classes))?;
    Ok(())
}

fn assess(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let inventory = ctx.inventory()?;
    let coverages = ctx.coverages()?;
    let pd = ctx.out(Stage::Predict);
    let agb = ctx.read_asc(&pd.join("agb_masked.asc"))?;
    let lc = ctx.read_asc(&pd.join("landcover_mosaic.asc"))?;
    let aoa = ctx.read_asc(&pd.join("aoa_mosaic.asc"))?;
    let hp = cfg.paths.hex_estimates.clone();
    let hexes = tab::parse_hex_estimates(&ctx.read_text(&hp)?, &hp.display().to_string())?;
    let a = super::assess(cfg, &inventory, &coverages, &agb, &lc, &aoa, &hexes)?;
    ctx.write("assessment_report.csv", &tab::format_selection_report(&a.report))?;
    ctx.write("plot_pixels.csv", &tab::format_plot_pixels(&a.pairs))?;
    ctx.write("scale_metrics.csv", &tab::format_scale_results(&a.scales))?;
    for s in &a.scales {
        ctx.write(&format!("scatter/scatter_{}.csv", s.scale.label()), &tab::format_scatter(s))?;
    }
    ctx.write("hex_residuals.csv", &tab::format_hex_residuals(&a.choropleth))?;
    ctx.write("density_me.csv", &tab::format_density_me(&a.density))?;
    ctx.write("menlove.csv", &tab::format_hex_comparison(&a.menlove))?;
    let ms = vec![
        ("n_input".to_string(), a.menlove.n_input.to_string()),
        ("n_compared".to_string(), a.menlove.rows.len().to_string()),
        ("fraction_within".to_string(), tab::opt(a.menlove.fraction_within)),
    ];
    ctx.write("menlove_summary.csv", &tab::format_key_values(&ms))?;
    Ok(())
}

fn moran(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let (names, rows) = ctx.dataset()?;
    let model_path = ctx.out(Stage::Train).join("model.pagb");
    ctx.inputs.push(model_path.clone());
    let ensemble = read_ensemble(&model_path)?;
    let pp = ctx.out(Stage::Assess).join("plot_pixels.csv");
    let pairs = tab::parse_plot_pixels(&ctx.read_text(&pp)?, &pp.display().to_string())?;
    let (pts, res) = super::model_residuals(&names, &rows, &ensemble)?;
    let profiles = super::moran(cfg, (&pts, &res), &pairs)?;
    let flat: Vec<(String, crate::assess::MoranResult)> = profiles
        .into_iter()
        .flat_map(|(name, rs)| rs.into_iter().map(move |r| (name.clone(), r)))
        .collect();
    ctx.write("moran.csv", &tab::format_moran(&flat))?;
    Ok(())
}

/// Collates the tables and scatter exports and merges the stage manifests.
fn report(ctx: &mut Ctx<'_>) -> Result<()> {
    let copies = [
        (Stage::Assess, "scale_metrics.csv"),
        (Stage::Assess, "density_me.csv"),
        (Stage::Assess, "hex_residuals.csv"),
        (Stage::Assess, "menlove.csv"),
        (Stage::Predict, "class_summary.csv"),
        (Stage::Train, "test_metrics.csv"),
        (Stage::Train, "test_predictions.csv"),
        (Stage::Select, "selection_report.csv"),
        (Stage::Assess, "assessment_report.csv"),
        (Stage::Moran, "moran.csv"),
    ];
    for (stage, name) in copies {
        let text = ctx.read_text(&ctx.out(stage).join(name))?;
        ctx.write(name, &text)?;
    }
    let scatter_dir = ctx.out(Stage::Assess).join("scatter");
    for rel in list_files(&scatter_dir)? {
        let text = ctx.read_text(&scatter_dir.join(&rel))?;
        ctx.write(&format!("scatter/{rel}"), &text)?;
    }
    let mut summary = Vec::new();
    for (stage, name, prefix) in [
        (Stage::Train, "test_metrics.csv", "test"),
        (Stage::Aoa, "aoa_summary.csv", "aoa"),
        (Stage::Assess, "menlove_summary.csv", "menlove"),
    ] {
        let p = ctx.out(stage).join(name);
        for (k, v) in tab::parse_key_values(&ctx.read_text(&p)?, &p.display().to_string())? {
            summary.push((format!("{prefix}_{k}"), v));
        }
    }
    ctx.write("summary.csv", &tab::format_key_values(&summary))?;

    let mut stages = serde_json::Map::new();
    for st in Stage::ALL.iter().filter(|s| **s != Stage::Report) {
        let p = ctx.out(*st).join("manifest.json");
        let text = ctx.read_text(&p)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: p.display().to_string(), line: e.line(), message: e.to_string() })?;
        stages.insert(st.name().to_string(), v);
    }
    let doc = json!({
        "config_hash": ctx.cfg.hash(),
        "agbmap": env!("CARGO_PKG_VERSION"),
        "stages": stages,
    });
    ctx.write("run_manifest.json", &(serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n"))?;
    ctx.write("config.resolved", &ctx.cfg.canonical_text())?;
    Ok(())
}

/// Runs `stages` in order, stopping at the first failure.
pub fn run_stages(cfg: &RunConfig, stages: &[Stage]) -> Result<()> {
    for &s in stages {
        run_stage(cfg, s)?;
    }
    Ok(())
}
