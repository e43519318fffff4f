use std::fmt::Write as _;
use std::path::Path;

use super::geometry::{Point, Rect};
use crate::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Pixel grid. Row 0 is the northern row, matching the ASCII grid layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Lower-left corner.
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub nodata: f64,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        let spec = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            n_cols,
            n_rows,
            nodata: DEFAULT_NODATA,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest grid anchored at `extent`'s lower-left corner that covers it.
    pub fn covering(extent: &Rect, cell_size: f64) -> Result<Self> {
        if extent.is_degenerate() {
            return Err(Error::Geometry(format!("degenerate extent {extent:?}")));
        }
        let n_cols = ((extent.width() / cell_size) - 1e-9).ceil().max(1.0) as usize;
        let n_rows = ((extent.height() / cell_size) - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(extent.xmin, extent.ymin, cell_size, n_cols, n_rows)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::invalid(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin_x,
            self.origin_y,
            self.origin_x + self.n_cols as f64 * self.cell_size,
            self.origin_y + self.n_rows as f64 * self.cell_size,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.n_cols, index / self.n_cols)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y + (self.n_rows as f64 - row as f64 - 0.5) * self.cell_size,
        )
    }

    pub fn cell_rect(&self, col: usize, row: usize) -> Rect {
        let x0 = self.origin_x + col as f64 * self.cell_size;
        let y0 = self.origin_y + (self.n_rows - row - 1) as f64 * self.cell_size;
        Rect::new(x0, y0, x0 + self.cell_size, y0 + self.cell_size)
    }

    /// Cell containing `(x, y)` under half-open `[lo, hi)` intervals.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let col = fx.floor() as usize;
        let row_from_bottom = fy.floor() as usize;
        if col >= self.n_cols || row_from_bottom >= self.n_rows {
            return None;
        }
        Some((col, self.n_rows - 1 - row_from_bottom))
    }

    pub fn index_of(&self, x: f64, y: f64) -> Option<usize> {
        self.cell_of(x, y).map(|(c, r)| self.index(c, r))
    }

    /// Inclusive column/row window of cells whose rectangles touch `r`.
    pub fn window(&self, r: &Rect) -> Option<(usize, usize, usize, usize)> {
        let ext = self.extent();
        if !ext.intersects(r) {
            return None;
        }
        let c0 = (((r.xmin - self.origin_x) / self.cell_size).floor().max(0.0)) as usize;
        let c1 = ((((r.xmax - self.origin_x) / self.cell_size).ceil() as isize - 1).max(0) as usize).min(self.n_cols - 1);
        let top = self.origin_y + self.n_rows as f64 * self.cell_size;
        let r0 = (((top - r.ymax) / self.cell_size).floor().max(0.0)) as usize;
        let r1 = ((((top - r.ymin) / self.cell_size).ceil() as isize - 1).max(0) as usize).min(self.n_rows - 1);
        if c0 > c1 || r0 > r1 {
            return None;
        }
        Some((c0, c1, r0, r1))
    }

    /// Same geometry (nodata sentinel ignored).
    pub fn aligned_with(&self, other: &GridSpec) -> bool {
        self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
            && self.cell_size == other.cell_size
            && self.n_cols == other.n_cols
            && self.n_rows == other.n_rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub spec: GridSpec,
    /// Row-major, north row first.
    pub values: Vec<f64>,
    pub band_name: String,
}

impl Raster {
    pub fn filled(spec: GridSpec, value: f64, band_name: impl Into<String>) -> Self {
        Raster {
            spec,
            values: vec![value; spec.len()],
            band_name: band_name.into(),
        }
    }

    pub fn nodata(spec: GridSpec, band_name: impl Into<String>) -> Self {
        Raster::filled(spec, spec.nodata, band_name)
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>, band_name: impl Into<String>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::invalid(format!(
                "raster has {} values, grid needs {}",
                values.len(),
                spec.len()
            )));
        }
        Ok(Raster {
            spec,
            values,
            band_name: band_name.into(),
        })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.spec.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        let i = self.spec.index(col, row);
        self.values[i] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.spec.nodata || v.is_nan()
    }

    pub fn value_at(&self, x: f64, y: f64) -> Option<f64> {
        let i = self.spec.index_of(x, y)?;
        let v = self.values[i];
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn count_valid(&self) -> usize {
        self.values.iter().filter(|v| !self.is_nodata(**v)).count()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.band_name = name.into();
        self
    }
}

/// Serialize to the ESRI ASCII grid layout.
pub fn format_asc(r: &Raster) -> String {
    let s = &r.spec;
    let mut out = String::with_capacity(s.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", s.n_cols);
    let _ = writeln!(out, "nrows {}", s.n_rows);
    let _ = writeln!(out, "xllcorner {}", s.origin_x);
    let _ = writeln!(out, "yllcorner {}", s.origin_y);
    let _ = writeln!(out, "cellsize {}", s.cell_size);
    let _ = writeln!(out, "NODATA_value {}", s.nodata);
    for row in 0..s.n_rows {
        for col in 0..s.n_cols {
            if col > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", r.get(col, row));
        }
        out.push('\n');
    }
    out
}

pub fn write_asc(path: &Path, r: &Raster) -> Result<()> {
    std::fs::write(path, format_asc(r)).map_err(|e| Error::io(path, e))
}

pub fn parse_asc(text: &str, source: &str, band_name: &str) -> Result<Raster> {
    const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value"];
    let mut lines = text.lines().enumerate();
    let mut header = [0.0f64; 6];
    for (k, key) in KEYS.iter().enumerate() {
        let (ln, line) = lines.next().ok_or_else(|| Error::Parse {
            path: source.into(),
            line: k + 1,
            message: format!("missing header line `{key}`"),
        })?;
        let mut parts = line.split_whitespace();
        let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: source.into(),
                line: ln + 1,
                message: format!("expected `{key} <value>`"),
            });
        };
        if name != *key {
            return Err(Error::Parse {
                path: source.into(),
                line: ln + 1,
                message: format!("expected header `{key}`, found `{name}`"),
            });
        }
        header[k] = val.parse().map_err(|_| Error::Parse {
            path: source.into(),
            line: ln + 1,
            message: format!("bad number `{val}`"),
        })?;
    }
    let mut spec = GridSpec::new(header[2], header[3], header[4], header[0] as usize, header[1] as usize)?;
    spec.nodata = header[5];
    let mut values = Vec::with_capacity(spec.len());
    for (ln, line) in lines {
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                path: source.into(),
                line: ln + 1,
                message: format!("bad value `{tok}`"),
            })?);
        }
    }
    if values.len() != spec.len() {
        return Err(Error::Parse {
            path: source.into(),
            line: 0,
            message: format!("expected {} values, found {}", spec.len(), values.len()),
        });
    }
    Raster::from_values(spec, values, band_name)
}

pub fn read_asc(path: &Path) -> Result<Raster> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let band = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_asc(&text, &path.display().to_string(), &band)
}
