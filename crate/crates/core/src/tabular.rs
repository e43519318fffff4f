//! CSV encodings of inventories, coverage manifests, plot datasets and every
//! tabular output. Floats are written in Rust's shortest round-trip form so
//! files are byte-stable; missing values are empty fields.

use std::path::{Path, PathBuf};

use crate::aoa::ImportanceWeights;
use crate::assess::{
    DensityFilteredMe, HexComparisonSummary, HexEstimate, HexResidual, MetricBundle, MoranResult, PlotPixelPair, ScaleResult,
};
use crate::geodata::{Point, Polygon};
use crate::learners::Dataset;
use crate::mapper::ClassSummary;
use crate::predictors::TaxEncoding;
use crate::plotselect::{AgbSource, CoverageInfo, InventoryRecord, ModelPlot, SelectionReport};
use crate::{Error, Result};

pub const INVENTORY_HEADER: [&str; 9] = [
    "plot_id",
    "x",
    "y",
    "inventory_year",
    "agb",
    "all_subplots_measured",
    "uniform_condition",
    "forested",
    "tax_code",
];
pub const COVERAGE_HEADER: [&str; 3] = ["coverage_id", "year", "footprint_file"];
pub const HEX_ESTIMATE_HEADER: [&str; 7] = ["hex_id", "center_x", "center_y", "area_ha", "fia_density", "ci_low", "ci_high"];
/// Leading columns of a plot dataset; predictor columns follow.
pub const DATASET_LEAD: [&str; 6] = ["plot_id", "coverage_id", "x", "y", "partition", "agb"];

/// A parsed CSV file: header plus data rows tagged with their line numbers.
#[derive(Debug, Clone)]
pub struct Table {
    pub source: String,
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(source, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(source, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Table {
            source: source.to_string(),
            header,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Table::parse(&text, &path.display().to_string())
    }

    /// Requires the header to start with exactly `expected`.
    pub fn expect_prefix(&self, expected: &[&str]) -> Result<()> {
        let ok = self.header.len() >= expected.len() && self.header.iter().zip(expected).all(|(a, b)| a == b);
        if !ok {
            return Err(parse_err(
                &self.source,
                1,
                format!("expected header starting `{}`, found `{}`", expected.join(","), self.header.join(",")),
            ));
        }
        Ok(())
    }

    pub fn expect_exact(&self, expected: &[&str]) -> Result<()> {
        self.expect_prefix(expected)?;
        if self.header.len() != expected.len() {
            return Err(parse_err(&self.source, 1, format!("unexpected extra columns after `{}`", expected.join(","))));
        }
        Ok(())
    }

    pub fn err(&self, line: usize, message: impl Into<String>) -> Error {
        parse_err(&self.source, line, message.into())
    }

    pub fn parse_field<T: std::str::FromStr>(&self, line: usize, row: &[String], col: usize) -> Result<T> {
        row[col]
            .trim()
            .parse()
            .map_err(|_| self.err(line, format!("column `{}`: cannot parse `{}`", self.header[col], row[col])))
    }

    pub fn parse_opt_f64(&self, line: usize, row: &[String], col: usize) -> Result<Option<f64>> {
        if row[col].trim().is_empty() {
            Ok(None)
        } else {
            self.parse_field(line, row, col).map(Some)
        }
    }

    pub fn parse_bool(&self, line: usize, row: &[String], col: usize) -> Result<bool> {
        match row[col].trim() {
            "1" | "true" | "TRUE" | "True" => Ok(true),
            "0" | "false" | "FALSE" | "False" => Ok(false),
            other => Err(self.err(line, format!("column `{}`: expected a boolean, found `{other}`", self.header[col]))),
        }
    }
}

fn parse_err(source: &str, line: usize, message: String) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message,
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// In-memory CSV writer that renders to a byte-stable string.
pub struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new(header: &[&str]) -> CsvOut {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("write to memory");
        CsvOut { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("write to memory");
    }

    pub fn finish(self) -> String {
        let bytes = self.w.into_inner().expect("flush to memory");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_inventory(text: &str, source: &str) -> Result<Vec<InventoryRecord>> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&INVENTORY_HEADER)?;
    t.rows
        .iter()
        .map(|(ln, r)| {
            let rec = InventoryRecord {
                plot_id: r[0].trim().to_string(),
                x: t.parse_field(*ln, r, 1)?,
                y: t.parse_field(*ln, r, 2)?,
                inventory_year: t.parse_field(*ln, r, 3)?,
                agb: t.parse_field(*ln, r, 4)?,
                all_subplots_measured: t.parse_bool(*ln, r, 5)?,
                uniform_condition: t.parse_bool(*ln, r, 6)?,
                forested: t.parse_bool(*ln, r, 7)?,
                tax_code: t.parse_opt_f64(*ln, r, 8)?,
            };
            rec.validate().map_err(|e| t.err(*ln, e.to_string()))?;
            Ok(rec)
        })
        .collect()
}

pub fn read_inventory(path: &Path) -> Result<Vec<InventoryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_inventory(&text, &path.display().to_string())
}

pub fn format_inventory(records: &[InventoryRecord]) -> String {
    let mut out = CsvOut::new(&INVENTORY_HEADER);
    let b = |v: bool| if v { "true" } else { "false" };
    for r in records {
        out.row([
            r.plot_id.clone(),
            num(r.x),
            num(r.y),
            r.inventory_year.to_string(),
            num(r.agb),
            b(r.all_subplots_measured).into(),
            b(r.uniform_condition).into(),
            b(r.forested).into(),
            opt(r.tax_code),
        ]);
    }
    out.finish()
}

/// Polygon as `x,y` vertex rows.
pub fn parse_polygon(text: &str, source: &str) -> Result<Polygon> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&["x", "y"])?;
    let pts = t
        .rows
        .iter()
        .map(|(ln, r)| Ok(Point::new(t.parse_field(*ln, r, 0)?, t.parse_field(*ln, r, 1)?)))
        .collect::<Result<Vec<_>>>()?;
    if pts.len() < 3 {
        return Err(t.err(1, "polygon needs at least 3 vertices"));
    }
    let poly = Polygon::new(pts);
    if poly.area() <= 0.0 {
        return Err(t.err(1, "polygon has zero area"));
    }
    Ok(poly)
}

pub fn format_polygon(p: &Polygon) -> String {
    let mut out = CsvOut::new(&["x", "y"]);
    for v in &p.vertices {
        out.row([num(v.x), num(v.y)]);
    }
    out.finish()
}

/// Coverage manifest; footprint paths are relative to the manifest's folder.
pub fn read_coverages(path: &Path) -> Result<Vec<CoverageInfo>> {
    let t = Table::read(path)?;
    t.expect_exact(&COVERAGE_HEADER)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    t.rows
        .iter()
        .map(|(ln, r)| {
            let fp = dir.join(r[2].trim());
            let text = std::fs::read_to_string(&fp).map_err(|e| Error::io(&fp, e))?;
            Ok(CoverageInfo {
                coverage_id: t.parse_field(*ln, r, 0)?,
                year: t.parse_field(*ln, r, 1)?,
                footprint: parse_polygon(&text, &fp.display().to_string())?,
            })
        })
        .collect()
}

/// Writes the manifest plus one footprint file per coverage into `dir`.
pub fn write_coverages(dir: &Path, manifest_name: &str, coverages: &[CoverageInfo]) -> Result<PathBuf> {
    let mut out = CsvOut::new(&COVERAGE_HEADER);
    for c in coverages {
        let name = format!("footprint_{}.csv", c.coverage_id);
        write_text(&dir.join(&name), &format_polygon(&c.footprint))?;
        out.row([c.coverage_id.to_string(), c.year.to_string(), name]);
    }
    let path = dir.join(manifest_name);
    write_text(&path, &out.finish())?;
    Ok(path)
}

pub fn format_selection_report(report: &SelectionReport) -> String {
    let mut out = CsvOut::new(&["criterion", "action", "description", "count"]);
    for r in &report.rows {
        out.row([r.criterion.clone(), r.action.as_str().into(), r.description.clone(), r.count.to_string()]);
    }
    out.finish()
}

pub fn format_model_plots(plots: &[ModelPlot]) -> String {
    let mut out = CsvOut::new(&[
        "plot_id",
        "coverage_id",
        "lidar_year",
        "agb_at_lidar",
        "source",
        "pre_year",
        "post_year",
        "x",
        "y",
        "tax_code",
    ]);
    for p in plots {
        let (source, pre, post) = match p.source {
            AgbSource::Measured { year } => ("measured", year.to_string(), String::new()),
            AgbSource::GrowthAdjusted { pre_year, post_year } => ("growth_adjusted", pre_year.to_string(), post_year.to_string()),
        };
        out.row([
            p.plot_id.clone(),
            p.coverage_id.to_string(),
            p.lidar_year.to_string(),
            num(p.agb_at_lidar),
            source.into(),
            pre,
            post,
            num(p.footprint.center.x),
            num(p.footprint.center.y),
            opt(p.tax_code),
        ]);
    }
    out.finish()
}

/// One row of a plot dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub plot_id: String,
    pub coverage_id: u32,
    pub center: Point,
    pub test: bool,
    pub agb: f64,
    pub predictors: Vec<f64>,
}

pub fn format_dataset(names: &[String], rows: &[DatasetRow]) -> String {
    let header: Vec<&str> = DATASET_LEAD.iter().copied().chain(names.iter().map(String::as_str)).collect();
    let mut out = CsvOut::new(&header);
    for r in rows {
        let lead = [
            r.plot_id.clone(),
            r.coverage_id.to_string(),
            num(r.center.x),
            num(r.center.y),
            if r.test { "test" } else { "train" }.to_string(),
            num(r.agb),
        ];
        out.row(lead.into_iter().chain(r.predictors.iter().map(|v| num(*v))));
    }
    out.finish()
}

/// Returns predictor names and rows.
pub fn parse_dataset(text: &str, source: &str) -> Result<(Vec<String>, Vec<DatasetRow>)> {
    let t = Table::parse(text, source)?;
    t.expect_prefix(&DATASET_LEAD)?;
    let names: Vec<String> = t.header[DATASET_LEAD.len()..].to_vec();
    if names.is_empty() {
        return Err(t.err(1, "dataset has no predictor columns"));
    }
    let rows = t
        .rows
        .iter()
        .map(|(ln, r)| {
            let test = match r[4].trim() {
                "train" => false,
                "test" => true,
                other => return Err(t.err(*ln, format!("partition must be train or test, found `{other}`"))),
            };
            Ok(DatasetRow {
                plot_id: r[0].trim().to_string(),
                coverage_id: t.parse_field(*ln, r, 1)?,
                center: Point::new(t.parse_field(*ln, r, 2)?, t.parse_field(*ln, r, 3)?),
                test,
                agb: t.parse_field(*ln, r, 5)?,
                predictors: (DATASET_LEAD.len()..t.header.len())
                    .map(|c| t.parse_field(*ln, r, c))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((names, rows))
}

/// Learner-ready dataset from the rows of one partition.
pub fn to_learning_dataset(names: &[String], rows: &[&DatasetRow]) -> Result<Dataset> {
    let p = names.len();
    let mut x = Vec::with_capacity(rows.len() * p);
    for r in rows {
        x.extend_from_slice(&r.predictors);
    }
    Dataset::new(x, p, rows.iter().map(|r| r.agb).collect(), names.to_vec())
}

pub fn parse_hex_estimates(text: &str, source: &str) -> Result<Vec<HexEstimate>> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&HEX_ESTIMATE_HEADER)?;
    t.rows
        .iter()
        .map(|(ln, r)| {
            Ok(HexEstimate {
                hex_id: r[0].trim().to_string(),
                center: Point::new(t.parse_field(*ln, r, 1)?, t.parse_field(*ln, r, 2)?),
                area_ha: t.parse_field(*ln, r, 3)?,
                fia_density: t.parse_field(*ln, r, 4)?,
                ci_low: t.parse_field(*ln, r, 5)?,
                ci_high: t.parse_field(*ln, r, 6)?,
            })
        })
        .collect()
}

pub fn format_hex_estimates(hexes: &[HexEstimate]) -> String {
    let mut out = CsvOut::new(&HEX_ESTIMATE_HEADER);
    for h in hexes {
        out.row([
            h.hex_id.clone(),
            num(h.center.x),
            num(h.center.y),
            num(h.area_ha),
            num(h.fia_density),
            num(h.ci_low),
            num(h.ci_high),
        ]);
    }
    out.finish()
}

/// Tax encoding as `kind,value` rows: every code seen in training, then the
/// retained codes and categories.
pub fn format_tax_encoding(enc: &TaxEncoding) -> String {
    let mut out = CsvOut::new(&["kind", "value"]);
    for c in enc.code_to_category.keys() {
        out.row(["seen_code".to_string(), c.to_string()]);
    }
    for c in &enc.retained_codes {
        out.row(["retained_code".to_string(), c.to_string()]);
    }
    for c in &enc.retained_categories {
        out.row(["retained_category".to_string(), c.to_string()]);
    }
    out.finish()
}

pub fn parse_tax_encoding(text: &str, source: &str) -> Result<TaxEncoding> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&["kind", "value"])?;
    let mut enc = TaxEncoding {
        retained_codes: Default::default(),
        retained_categories: Default::default(),
        code_to_category: Default::default(),
    };
    for (ln, r) in &t.rows {
        let v: u32 = t.parse_field(*ln, r, 1)?;
        match r[0].trim() {
            "seen_code" => {
                enc.code_to_category.insert(v, crate::predictors::category_of(v));
            }
            "retained_code" => {
                enc.retained_codes.insert(v);
            }
            "retained_category" => {
                enc.retained_categories.insert(v);
            }
            other => return Err(t.err(*ln, format!("unknown kind `{other}`"))),
        }
    }
    Ok(enc)
}

pub fn format_loo(ids: &[String], y: &[f64], loo: &[[f64; 3]]) -> String {
    let mut out = CsvOut::new(&["plot_id", "agb", "rf", "gbt", "svr"]);
    for ((id, yi), r) in ids.iter().zip(y).zip(loo) {
        out.row([id.clone(), num(*yi), num(r[0]), num(r[1]), num(r[2])]);
    }
    out.finish()
}

pub fn format_predictions(ids: &[String], y: &[f64], yhat: &[f64]) -> String {
    let mut out = CsvOut::new(&["plot_id", "agb", "predicted"]);
    for ((id, a), b) in ids.iter().zip(y).zip(yhat) {
        out.row([id.clone(), num(*a), num(*b)]);
    }
    out.finish()
}

pub const PLOT_PIXEL_HEADER: [&str; 5] = ["plot_id", "x", "y", "fia", "map"];

pub fn format_plot_pixels(pairs: &[PlotPixelPair]) -> String {
    let mut out = CsvOut::new(&PLOT_PIXEL_HEADER);
    for p in pairs {
        out.row([p.plot_id.clone(), num(p.center.x), num(p.center.y), num(p.fia), num(p.map)]);
    }
    out.finish()
}

pub fn parse_plot_pixels(text: &str, source: &str) -> Result<Vec<PlotPixelPair>> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&PLOT_PIXEL_HEADER)?;
    t.rows
        .iter()
        .map(|(ln, r)| {
            Ok(PlotPixelPair {
                plot_id: r[0].trim().to_string(),
                center: Point::new(t.parse_field(*ln, r, 1)?, t.parse_field(*ln, r, 2)?),
                fia: t.parse_field(*ln, r, 3)?,
                map: t.parse_field(*ln, r, 4)?,
            })
        })
        .collect()
}

/// Metric bundle as `key,value` pairs; undefined values are empty.
pub fn metric_pairs(m: &MetricBundle) -> Vec<(String, String)> {
    let p = &m.point;
    [
        ("n", p.n.to_string()),
        ("y_mean", num(p.y_mean)),
        ("rmse", num(p.rmse)),
        ("se_rmse", opt(m.se_rmse)),
        ("pct_rmse", opt(p.pct_rmse)),
        ("mae", num(p.mae)),
        ("se_mae", opt(m.se_mae)),
        ("pct_mae", opt(p.pct_mae)),
        ("me", num(p.me)),
        ("se_me", opt(m.se_me)),
        ("r2", opt(p.r2)),
        ("se_r2", opt(m.se_r2)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Reads a `key,value` file.
pub fn parse_key_values(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let t = Table::parse(text, source)?;
    t.expect_exact(&["key", "value"])?;
    Ok(t.rows.iter().map(|(_, r)| (r[0].clone(), r[1].clone())).collect())
}

pub fn format_key_values(pairs: &[(String, String)]) -> String {
    let mut out = CsvOut::new(&["key", "value"]);
    for (k, v) in pairs {
        out.row([k, v]);
    }
    out.finish()
}

pub fn format_aoa_weights(w: &ImportanceWeights) -> String {
    let mut out = CsvOut::new(&["predictor", "weight", "delta_rmse", "paired_with"]);
    for (((name, weight), delta), reps) in w.names.iter().zip(&w.weights).zip(&w.deltas).zip(&w.representatives) {
        out.row([name.clone(), num(*weight), num(*delta), reps.join(";")]);
    }
    out.finish()
}

pub fn format_class_summary(s: &ClassSummary) -> String {
    let mut out = CsvOut::new(&[
        "class",
        "ref_n",
        "ref_mean_agb",
        "pixels",
        "area_ha",
        "pct_area",
        "mean_agb",
        "total_mt",
        "pct_agb",
        "pct_aoa",
    ]);
    for r in &s.rows {
        out.row([
            r.class.name().to_string(),
            r.ref_n.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.ref_mean_agb),
            r.pixel_count.to_string(),
            num(r.area_ha),
            num(r.pct_area),
            num(r.mean_agb),
            num(r.total_agb),
            num(r.pct_agb),
            opt(r.pct_aoa),
        ]);
    }
    out.finish()
}

/// Agreement per scale, SEs next to their metric.
pub fn format_scale_results(results: &[ScaleResult]) -> String {
    let mut out = CsvOut::new(&[
        "distance",
        "n",
        "pph",
        "pct_rmse",
        "rmse",
        "se_rmse",
        "pct_mae",
        "mae",
        "se_mae",
        "me",
        "se_me",
        "r2",
        "se_r2",
        "gmfr_slope",
        "gmfr_intercept",
    ]);
    for s in results {
        let m = &s.metrics;
        out.row([
            s.scale.label(),
            s.n_units.to_string(),
            num(s.plots_per_hex),
            opt(m.point.pct_rmse),
            num(m.point.rmse),
            opt(m.se_rmse),
            opt(m.point.pct_mae),
            num(m.point.mae),
            opt(m.se_mae),
            num(m.point.me),
            opt(m.se_me),
            opt(m.point.r2),
            opt(m.se_r2),
            opt(s.gmfr.map(|g| g.slope)),
            opt(s.gmfr.map(|g| g.intercept)),
        ]);
    }
    out.finish()
}

/// Scatter export for one scale: x is the reference mean, y the map mean.
pub fn format_scatter(s: &ScaleResult) -> String {
    let mut out = CsvOut::new(&["unit_id", "n_plots", "fia", "map"]);
    for u in &s.units {
        out.row([u.id.to_string(), u.n_plots.to_string(), num(u.fia_mean), num(u.map_mean)]);
    }
    out.finish()
}

pub fn format_hex_residuals(rows: &[HexResidual]) -> String {
    let mut out = CsvOut::new(&["hex_id", "center_x", "center_y", "n_plots", "rmse", "mae", "me", "mean_fia"]);
    for h in rows {
        out.row([
            h.hex_id.to_string(),
            num(h.center.x),
            num(h.center.y),
            h.n_plots.to_string(),
            num(h.rmse),
            num(h.mae),
            num(h.me),
            num(h.mean_fia),
        ]);
    }
    out.finish()
}

pub fn format_density_me(rows: &[DensityFilteredMe]) -> String {
    let mut out = CsvOut::new(&["distance", "hex_area_ha", "n_units", "me_unfiltered", "n_units_filtered", "me_filtered"]);
    for r in rows {
        out.row([
            num(r.spacing),
            num(r.hex_area_ha),
            r.n_units.to_string(),
            num(r.me_unfiltered),
            r.n_units_filtered.to_string(),
            opt(r.me_filtered),
        ]);
    }
    out.finish()
}

pub fn format_hex_comparison(s: &HexComparisonSummary) -> String {
    let mut out = CsvOut::new(&[
        "hex_id",
        "mapped_fraction",
        "map_estimate",
        "fia_adjusted",
        "ci_low_adjusted",
        "ci_high_adjusted",
        "within_ci",
    ]);
    for r in &s.rows {
        out.row([
            r.hex_id.clone(),
            num(r.mapped_fraction),
            num(r.map_estimate),
            num(r.fia_adjusted),
            num(r.ci_low_adjusted),
            num(r.ci_high_adjusted),
            if r.within_ci { "1" } else { "0" }.to_string(),
        ]);
    }
    out.finish()
}

pub fn format_moran(rows: &[(String, MoranResult)]) -> String {
    let mut out = CsvOut::new(&["dataset", "radius", "n_points", "n_pairs", "moran_i", "envelope_low", "envelope_high"]);
    for (name, r) in rows {
        out.row([
            name.clone(),
            num(r.radius),
            r.n_points.to_string(),
            r.n_pairs.to_string(),
            opt(r.i),
            opt(r.envelope_low),
            opt(r.envelope_high),
        ]);
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, year: i32, agb: f64, tax: Option<f64>) -> InventoryRecord {
        InventoryRecord {
            plot_id: id.into(),
            x: 1.25,
            y: -3.5,
            inventory_year: year,
            agb,
            all_subplots_measured: true,
            uniform_condition: false,
            forested: agb > 0.0,
            tax_code: tax,
        }
    }

    #[test]
    fn inventory_round_trip() {
        let recs = vec![rec("a", 2014, 101.5, Some(910.0)), rec("b, with comma", 2016, 0.0, None)];
        let text = format_inventory(&recs);
        assert_eq!(parse_inventory(&text, "t").unwrap(), recs);
    }

    #[test]
    fn inventory_errors_carry_line_numbers() {
        let mut text = format_inventory(&[rec("a", 2014, 10.0, None)]);
        text.push_str("b,1,2,notayear,5,true,true,true,\n");
        match parse_inventory(&text, "inv.csv").unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("inventory_year"));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(parse_inventory("plot_id,x\n", "h").is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let names = vec!["H_MAX".to_string(), "ELEV".to_string()];
        let rows = vec![
            DatasetRow {
                plot_id: "p1".into(),
                coverage_id: 3,
                center: Point::new(10.5, 20.25),
                test: false,
                agb: 88.125,
                predictors: vec![12.0, 0.1 + 0.2],
            },
            DatasetRow {
                plot_id: "p2".into(),
                coverage_id: 4,
                center: Point::new(1.0, 2.0),
                test: true,
                agb: 0.0,
                predictors: vec![0.0, 1e-9],
            },
        ];
        let text = format_dataset(&names, &rows);
        let (n2, r2) = parse_dataset(&text, "d").unwrap();
        assert_eq!(n2, names);
        assert_eq!(r2, rows);
    }

    #[test]
    fn coverage_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let covs = vec![CoverageInfo {
            coverage_id: 7,
            year: 2018,
            footprint: crate::geodata::Rect::new(0.0, 0.0, 500.0, 250.0).to_polygon(),
        }];
        let path = write_coverages(dir.path(), "coverages.csv", &covs).unwrap();
        assert_eq!(read_coverages(&path).unwrap(), covs);
    }

    #[test]
    fn plot_pixels_and_key_values_round_trip() {
        let p = vec![PlotPixelPair {
            plot_id: "P1".into(),
            center: Point::new(1.5, 2.5),
            fia: 100.25,
            map: 90.0,
        }];
        assert_eq!(parse_plot_pixels(&format_plot_pixels(&p), "p").unwrap(), p);
        let kv = vec![("a".to_string(), "1".to_string()), ("b".to_string(), String::new())];
        assert_eq!(parse_key_values(&format_key_values(&kv), "k").unwrap(), kv);
    }

    #[test]
    fn tax_encoding_round_trip() {
        let enc = crate::predictors::fit_tax_encoding(&[910, 910, 920, 105, 1000, 2000, 910, 311]).unwrap();
        assert_eq!(parse_tax_encoding(&format_tax_encoding(&enc), "t").unwrap(), enc);
    }

    #[test]
    fn hex_estimates_round_trip() {
        let h = vec![HexEstimate {
            hex_id: "H1".into(),
            center: Point::new(5.0, 6.0),
            area_ha: 64_000.0,
            fia_density: 80.5,
            ci_low: 70.0,
            ci_high: 91.0,
        }];
        assert_eq!(parse_hex_estimates(&format_hex_estimates(&h), "h").unwrap(), h);
    }
}
