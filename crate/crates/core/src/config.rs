//! Pipeline configuration: flat `key = value` lines under `[section]`
//! headers, `#` comments, comma-separated lists. Every key has a default;
//! unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::aoa::TrainDistance;
use crate::geodata::Rect;
use crate::learners::{GbtParams, Hyperparams, RfParams, SvrParams};
use crate::plotselect::SelectionThresholds;
use crate::{Error, Result};

/// `(section.key, default)` for every accepted key, in canonical order.
const KEYS: &[(&str, &str)] = &[
    ("paths.out_dir", "out"),
    ("paths.inventory", ""),
    ("paths.coverages", ""),
    ("paths.clouds_dir", ""),
    ("paths.aux_dir", ""),
    ("paths.parcels", ""),
    ("paths.landcover_dir", ""),
    ("paths.hex_estimates", ""),
    ("seeds.synth", "1"),
    ("seeds.split", "2"),
    ("seeds.cv", "3"),
    ("seeds.train", "4"),
    ("seeds.importance", "5"),
    ("seeds.assess", "6"),
    ("seeds.moran", "7"),
    ("synth.extent", "0,0,3000,3000"),
    ("synth.cell_size", "30"),
    ("synth.n_bumps", "80"),
    ("synth.coverage_years", "2014,2018"),
    ("synth.coverage_share", "0.6"),
    ("synth.point_density", "2.5"),
    ("synth.plot_spacing", "130"),
    ("synth.first_year", "2011"),
    ("synth.last_year", "2021"),
    ("synth.landcover_change", "0.05"),
    ("synth.hex_estimate_spacing", "1000"),
    ("normalize.ground_cell", "10"),
    ("train.train_fraction", "0.8"),
    ("train.cv_folds", "5"),
    ("train.rf_trees", "500"),
    ("train.rf_mtry", "auto"),
    ("train.rf_min_leaf", "5"),
    ("train.gbt_rounds", "500"),
    ("train.gbt_learning_rate", "0.05"),
    ("train.gbt_depth", "3"),
    ("train.gbt_subsample", "0.75"),
    ("train.svr_c", "10"),
    ("train.svr_epsilon", "0.1"),
    ("train.svr_gamma", "auto"),
    ("thresholds.hull_coverage", "0.90"),
    ("thresholds.disturbance", "0.05"),
    ("thresholds.nonforest_max_height", "1.0"),
    ("thresholds.assessment_window", "2"),
    ("thresholds.aoa_q_low", "0.25"),
    ("thresholds.aoa_q_high", "0.75"),
    ("thresholds.aoa_iqr_multiplier", "1.5"),
    ("thresholds.mapped_area", "0.10"),
    ("thresholds.density_filter", "0.0000416666666666666667"),
    ("aoa.train_distance", "pairwise"),
    ("aoa.importance_rf_trees", "500"),
    ("aoa.importance_gbt_rounds", "500"),
    ("aoa.importance_loo_reduction", "1"),
    ("assess.spacings", "200,300,450,600"),
    ("assess.choropleth_spacing", "600"),
    ("assess.density_spacings", "200,300,450,600,900"),
    ("assess.bootstrap_reps", "1000"),
    ("moran.radius_step", "100"),
    ("moran.n_radii", "20"),
    ("moran.reps", "1000"),
    ("flags.se_divide_sqrt_n", "false"),
    ("flags.lcmap_vintage_mode", "per_coverage"),
    ("flags.loo_reduced_fits", "false"),
    ("flags.loo_reduction_factor", "5"),
];

/// Which landcover raster masks the mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VintageMode {
    /// One landcover raster per coverage year, mosaicked by provenance.
    PerCoverage,
    /// A single landcover raster for the whole mosaic.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub inventory: PathBuf,
    pub coverages: PathBuf,
    /// Raw clouds, `cloud_<coverage_id>.pcx`.
    pub clouds_dir: PathBuf,
    pub aux_dir: PathBuf,
    pub parcels: PathBuf,
    /// `landcover.asc` plus `landcover_<year>.asc` per coverage year.
    pub landcover_dir: PathBuf,
    pub hex_estimates: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub cv: u64,
    pub train: u64,
    pub importance: u64,
    pub assess: u64,
    pub moran: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub extent: Rect,
    pub cell_size: f64,
    pub n_bumps: usize,
    pub coverage_years: Vec<i32>,
    /// Share of the scene width covered by each coverage strip.
    pub coverage_share: f64,
    pub point_density: f64,
    pub plot_spacing: f64,
    pub first_year: i32,
    pub last_year: i32,
    /// Share of landcover blocks that differ between vintages.
    pub landcover_change: f64,
    pub hex_estimate_spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub rf_trees: Vec<usize>,
    /// `None` means ⌈p/3⌉.
    pub rf_mtry: Vec<Option<usize>>,
    pub rf_min_leaf: Vec<usize>,
    pub gbt_rounds: Vec<usize>,
    pub gbt_learning_rate: Vec<f64>,
    pub gbt_depth: Vec<usize>,
    pub gbt_subsample: Vec<f64>,
    pub svr_c: Vec<f64>,
    /// Multiples of sd(y).
    pub svr_epsilon: Vec<f64>,
    /// `None` means 1/p.
    pub svr_gamma: Vec<Option<f64>>,
}

impl TrainConfig {
    pub fn rf_grid(&self, p: usize) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &n_trees in &self.rf_trees {
            for &m in &self.rf_mtry {
                for &min_leaf in &self.rf_min_leaf {
                    out.push(Hyperparams::Rf(RfParams {
                        n_trees,
                        mtry: m.unwrap_or_else(|| RfParams::default_for(p).mtry).min(p).max(1),
                        min_leaf,
                    }));
                }
            }
        }
        out
    }

    pub fn gbt_grid(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &n_rounds in &self.gbt_rounds {
            for &learning_rate in &self.gbt_learning_rate {
                for &max_depth in &self.gbt_depth {
                    for &subsample in &self.gbt_subsample {
                        out.push(Hyperparams::Gbt(GbtParams {
                            n_rounds,
                            learning_rate,
                            max_depth,
                            subsample,
                        }));
                    }
                }
            }
        }
        out
    }

    pub fn svr_grid(&self, p: usize, sd_y: f64) -> Vec<Hyperparams> {
        let sd = if sd_y > 0.0 { sd_y } else { 1.0 };
        let mut out = Vec::new();
        for &c in &self.svr_c {
            for &e in &self.svr_epsilon {
                for &g in &self.svr_gamma {
                    out.push(Hyperparams::Svr(SvrParams {
                        c,
                        epsilon: e * sd,
                        gamma: g.unwrap_or(1.0 / p as f64),
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaConfig {
    pub train_distance: TrainDistance,
    pub importance_rf_trees: usize,
    pub importance_gbt_rounds: usize,
    pub importance_loo_reduction: usize,
    pub q_low: f64,
    pub q_high: f64,
    pub iqr_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessConfig {
    pub spacings: Vec<f64>,
    pub choropleth_spacing: f64,
    pub density_spacings: Vec<f64>,
    pub bootstrap_reps: usize,
    pub mapped_area: f64,
    /// Plots per hectare.
    pub density_filter: f64,
    pub moran_radii: Vec<f64>,
    pub moran_reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub se_divide_sqrt_n: bool,
    pub lcmap_vintage_mode: VintageMode,
    pub loo_reduced_fits: bool,
    pub loo_reduction_factor: usize,
}

impl Flags {
    /// Effective LOO reduction factor (1 when the switch is off).
    pub fn loo_reduction(&self) -> usize {
        if self.loo_reduced_fits {
            self.loo_reduction_factor
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub synth: SynthConfig,
    pub ground_cell: f64,
    pub train: TrainConfig,
    pub selection: SelectionThresholds,
    pub aoa: AoaConfig,
    pub assess: AssessConfig,
    pub flags: Flags,
    /// Resolved `key = value` pairs (defaults filled in), canonical order.
    pub resolved: Vec<(String, String)>,
}

struct Values<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Values<'_> {
    fn raw(&self, key: &str) -> &str {
        self.map.get(key).map(String::as_str).expect("every key has a default")
    }

    fn bad(key: &str, v: &str, what: &str) -> Error {
        Error::Config(format!("`{key}`: expected {what}, found `{v}`"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse().map_err(|_| Self::bad(key, v, what))
    }

    fn f64_in(&self, key: &str, lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Result<f64> {
        let v: f64 = self.parse(key, "a number")?;
        let ok = v.is_finite()
            && if lo_open { v > lo } else { v >= lo }
            && if hi_open { v < hi } else { v <= hi };
        if !ok {
            let (a, b) = (if lo_open { "(" } else { "[" }, if hi_open { ")" } else { "]" });
            return Err(Error::Config(format!("`{key}` = {v} is outside {a}{lo}, {hi}{b}")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<f64> {
        self.f64_in(key, 0.0, f64::MAX, true, false)
    }

    fn count(&self, key: &str, min: usize) -> Result<usize> {
        let v: usize = self.parse(key, "a non-negative integer")?;
        if v < min {
            return Err(Error::Config(format!("`{key}` = {v} must be at least {min}")));
        }
        Ok(v)
    }

    fn list<T>(&self, key: &str, mut f: impl FnMut(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
        let raw = self.raw(key);
        let items: Vec<T> = raw
            .split(',')
            .map(str::trim)
            .map(|s| f(s).ok_or_else(|| Self::bad(key, s, what)))
            .collect::<Result<_>>()?;
        if raw.trim().is_empty() || items.is_empty() {
            return Err(Error::Config(format!("`{key}` must list at least one value")));
        }
        Ok(items)
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Self::bad(key, v, "true or false")),
        }
    }

    fn path(&self, key: &str, base: &Path, default: PathBuf) -> PathBuf {
        match self.raw(key) {
            "" => default,
            v => base.join(v),
        }
    }
}

fn positive_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

fn positive_usize(s: &str) -> Option<usize> {
    s.parse::<usize>().ok().filter(|v| *v > 0)
}

impl RunConfig {
    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut section = String::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {ln}: malformed section header `{line}`")))?
                    .trim();
                if !KEYS.iter().any(|(k, _)| k.split('.').next() == Some(name)) {
                    return Err(Error::Config(format!("line {ln}: unknown section `[{name}]`")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {ln}: expected `key = value`, found `{line}`")))?;
            let k = k.trim();
            if section.is_empty() {
                return Err(Error::Config(format!("line {ln}: key `{k}` appears before any [section]")));
            }
            let full = format!("{section}.{k}");
            if !map.contains_key(&full) {
                return Err(Error::Config(format!("line {ln}: unknown key `{full}`")));
            }
            if let Some(prev) = seen.insert(full.clone(), ln) {
                return Err(Error::Config(format!("line {ln}: key `{full}` already set on line {prev}")));
            }
            map.insert(full, v.trim().to_string());
        }
        Self::from_map(map, base_dir)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// All defaults, paths relative to `base_dir`.
    pub fn defaults(base_dir: &Path) -> RunConfig {
        Self::parse("", base_dir).expect("defaults are valid")
    }

    fn from_map(map: BTreeMap<String, String>, base: &Path) -> Result<RunConfig> {
        let v = Values { map: &map };
        let out_dir = base.join(v.raw("paths.out_dir"));
        let synth_dir = out_dir.join("synth");
        let paths = Paths {
            inventory: v.path("paths.inventory", base, synth_dir.join("inventory.csv")),
            coverages: v.path("paths.coverages", base, synth_dir.join("coverages.csv")),
            clouds_dir: v.path("paths.clouds_dir", base, synth_dir.join("clouds")),
            aux_dir: v.path("paths.aux_dir", base, synth_dir.join("aux")),
            parcels: v.path("paths.parcels", base, synth_dir.join("parcels.asc")),
            landcover_dir: v.path("paths.landcover_dir", base, synth_dir.join("landcover")),
            hex_estimates: v.path("paths.hex_estimates", base, synth_dir.join("hex_estimates.csv")),
            out_dir,
        };
        let seed = |k: &str| v.parse::<u64>(k, "an unsigned 64-bit seed");
        let seeds = Seeds {
            synth: seed("seeds.synth")?,
            split: seed("seeds.split")?,
            cv: seed("seeds.cv")?,
            train: seed("seeds.train")?,
            importance: seed("seeds.importance")?,
            assess: seed("seeds.assess")?,
            moran: seed("seeds.moran")?,
        };

        let ext = v.list("synth.extent", |s| s.parse::<f64>().ok().filter(|x| x.is_finite()), "a number")?;
        if ext.len() != 4 || !(ext[2] > ext[0] && ext[3] > ext[1]) {
            return Err(Error::Config("`synth.extent` must be xmin,ymin,xmax,ymax with max > min".into()));
        }
        let coverage_years = v.list("synth.coverage_years", |s| s.parse::<i32>().ok(), "a year")?;
        let first_year: i32 = v.parse("synth.first_year", "a year")?;
        let last_year: i32 = v.parse("synth.last_year", "a year")?;
        if last_year < first_year {
            return Err(Error::Config("`synth.last_year` precedes `synth.first_year`".into()));
        }
        let synth = SynthConfig {
            extent: Rect::new(ext[0], ext[1], ext[2], ext[3]),
            cell_size: v.positive("synth.cell_size")?,
            n_bumps: v.count("synth.n_bumps", 0)?,
            coverage_years,
            coverage_share: v.f64_in("synth.coverage_share", 0.5, 1.0, false, false)?,
            point_density: v.positive("synth.point_density")?,
            plot_spacing: v.positive("synth.plot_spacing")?,
            first_year,
            last_year,
            landcover_change: v.f64_in("synth.landcover_change", 0.0, 1.0, false, false)?,
            hex_estimate_spacing: v.positive("synth.hex_estimate_spacing")?,
        };

        let auto_usize = |s: &str| if s == "auto" { Some(None) } else { positive_usize(s).map(Some) };
        let auto_f64 = |s: &str| if s == "auto" { Some(None) } else { positive_f64(s).map(Some) };
        let frac = |s: &str| s.parse::<f64>().ok().filter(|x| *x > 0.0 && *x <= 1.0);
        let train = TrainConfig {
            train_fraction: v.f64_in("train.train_fraction", 0.0, 1.0, true, true)?,
            cv_folds: v.count("train.cv_folds", 2)?,
            rf_trees: v.list("train.rf_trees", positive_usize, "a positive integer")?,
            rf_mtry: v.list("train.rf_mtry", auto_usize, "a positive integer or auto")?,
            rf_min_leaf: v.list("train.rf_min_leaf", positive_usize, "a positive integer")?,
            gbt_rounds: v.list("train.gbt_rounds", positive_usize, "a positive integer")?,
            gbt_learning_rate: v.list("train.gbt_learning_rate", positive_f64, "a positive number")?,
            gbt_depth: v.list("train.gbt_depth", positive_usize, "a positive integer")?,
            gbt_subsample: v.list("train.gbt_subsample", frac, "a fraction in (0, 1]")?,
            svr_c: v.list("train.svr_c", positive_f64, "a positive number")?,
            svr_epsilon: v.list("train.svr_epsilon", positive_f64, "a positive number")?,
            svr_gamma: v.list("train.svr_gamma", auto_f64, "a positive number or auto")?,
        };

        let selection = SelectionThresholds {
            min_hull_coverage: v.f64_in("thresholds.hull_coverage", 0.0, 1.0, true, false)?,
            disturbance_decrease: v.f64_in("thresholds.disturbance", 0.0, 1.0, true, true)?,
            nonforest_max_height: v.f64_in("thresholds.nonforest_max_height", 0.0, 100.0, false, false)?,
            assessment_window_years: v.count("thresholds.assessment_window", 1)? as i32,
        };

        let q_low = v.f64_in("thresholds.aoa_q_low", 0.0, 1.0, false, false)?;
        let q_high = v.f64_in("thresholds.aoa_q_high", 0.0, 1.0, false, false)?;
        if q_low >= q_high {
            return Err(Error::Config("`thresholds.aoa_q_low` must be below `thresholds.aoa_q_high`".into()));
        }
        let aoa = AoaConfig {
            train_distance: match v.raw("aoa.train_distance") {
                "pairwise" => TrainDistance::MeanPairwise,
                "nearest" => TrainDistance::MeanNearestNeighbor,
                x => return Err(Values::bad("aoa.train_distance", x, "pairwise or nearest")),
            },
            importance_rf_trees: v.count("aoa.importance_rf_trees", 1)?,
            importance_gbt_rounds: v.count("aoa.importance_gbt_rounds", 1)?,
            importance_loo_reduction: v.count("aoa.importance_loo_reduction", 1)?,
            q_low,
            q_high,
            iqr_multiplier: v.f64_in("thresholds.aoa_iqr_multiplier", 0.0, 100.0, false, false)?,
        };

        let step = v.positive("moran.radius_step")?;
        let n_radii = v.count("moran.n_radii", 1)?;
        let assess = AssessConfig {
            spacings: v.list("assess.spacings", positive_f64, "a positive spacing")?,
            choropleth_spacing: v.positive("assess.choropleth_spacing")?,
            density_spacings: v.list("assess.density_spacings", positive_f64, "a positive spacing")?,
            bootstrap_reps: v.count("assess.bootstrap_reps", 2)?,
            mapped_area: v.f64_in("thresholds.mapped_area", 0.0, 1.0, false, true)?,
            density_filter: v.f64_in("thresholds.density_filter", 0.0, 1.0, false, false)?,
            moran_radii: (1..=n_radii).map(|k| k as f64 * step).collect(),
            moran_reps: v.count("moran.reps", 1)?,
        };

        let flags = Flags {
            se_divide_sqrt_n: v.bool("flags.se_divide_sqrt_n")?,
            lcmap_vintage_mode: match v.raw("flags.lcmap_vintage_mode") {
                "per_coverage" => VintageMode::PerCoverage,
                "single" => VintageMode::Single,
                x => return Err(Values::bad("flags.lcmap_vintage_mode", x, "per_coverage or single")),
            },
            loo_reduced_fits: v.bool("flags.loo_reduced_fits")?,
            loo_reduction_factor: v.count("flags.loo_reduction_factor", 1)?,
        };

        let resolved = KEYS.iter().map(|(k, _)| (k.to_string(), map[*k].clone())).collect();
        Ok(RunConfig {
            paths,
            seeds,
            synth,
            ground_cell: v.positive("normalize.ground_cell")?,
            train,
            selection,
            aoa,
            assess,
            flags,
            resolved,
        })
    }

    /// Canonical text of the resolved configuration.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, v) in &self.resolved {
            let (s, key) = k.split_once('.').expect("sectioned key");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{s}]\n"));
                section = s;
            }
            out.push_str(&format!("{key} = {v}\n"));
        }
        out
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }

    /// Resolved value of one key.
    pub fn value(&self, key: &str) -> Option<&str> {
        self.resolved.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
