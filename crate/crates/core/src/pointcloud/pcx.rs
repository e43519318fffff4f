use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{PointCloud, PointRecord};
use crate::{Error, Result};

const HEADER: &str = "PCX 1";

fn parse_decimal(tok: &str) -> Option<f64> {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    let mut seen_digit = false;
    let mut seen_dot = false;
    for b in body.bytes() {
        match b {
            b'0'..=b'9' => seen_digit = true,
            b'.' if !seen_dot => seen_dot = true,
            _ => return None,
        }
    }
    if !seen_digit {
        return None;
    }
    tok.parse().ok()
}

/// Parse a PCX document. `source` names the input in error messages.
pub fn parse_pcx(text: &str, source: &str) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut records = Vec::with_capacity(text.len() / 40);
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != HEADER {
                return Err(err(ln, format!("expected header `{HEADER}`, found `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let mut fields = line.split(' ');
        let mut f = [""; 6];
        for slot in f.iter_mut() {
            *slot = fields
                .next()
                .ok_or_else(|| err(ln, "expected 6 space-separated fields".into()))?;
        }
        if fields.next().is_some() {
            return Err(err(ln, "expected 6 space-separated fields".into()));
        }
        let coord = |k: usize| parse_decimal(f[k]).ok_or_else(|| err(ln, format!("bad decimal `{}`", f[k])));
        let int = |k: usize| f[k].parse::<u8>().map_err(|_| err(ln, format!("bad integer `{}`", f[k])));
        let rec = PointRecord {
            x: coord(0)?,
            y: coord(1)?,
            z: coord(2)?,
            return_number: int(3)?,
            num_returns: int(4)?,
            classification: int(5)?,
        };
        if rec.return_number < 1 || rec.return_number > rec.num_returns {
            return Err(err(
                ln,
                format!(
                    "return_number {} outside 1..={}",
                    rec.return_number, rec.num_returns
                ),
            ));
        }
        records.push(rec);
    }
    if !seen_header {
        return Err(err(1, format!("missing `{HEADER}` header")));
    }
    Ok(PointCloud::new(records))
}

pub fn read_pcx(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pcx(&text, &path.display().to_string())
}

/// Read a cloud written by [`write_pcx`] after height normalization. The
/// file must carry the `# height_normalized` marker and no negative heights.
pub fn read_normalized_pcx(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !text.starts_with("# height_normalized\n") {
        return Err(Error::invalid(format!(
            "{} is not a height-normalized cloud",
            path.display()
        )));
    }
    let mut cloud = parse_pcx(&text, &path.display().to_string())?;
    if let Some(i) = cloud.records.iter().position(|r| r.z < 0.0) {
        return Err(Error::invalid(format!(
            "{}: negative height at record {i}",
            path.display()
        )));
    }
    cloud.height_normalized = true;
    Ok(cloud)
}

fn push_record(out: &mut String, p: &PointRecord) {
    let _ = writeln!(
        out,
        "{} {} {} {} {} {}",
        p.x, p.y, p.z, p.return_number, p.num_returns, p.classification
    );
}

pub fn format_pcx(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 36 + 8);
    out.push_str(HEADER);
    out.push('\n');
    for p in &cloud.records {
        push_record(&mut out, p);
    }
    out
}

/// Writes in chunks so multi-gigabyte clouds never sit in one string.
/// The `height_normalized` flag is recorded as a comment line.
pub fn write_pcx(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::with_capacity(1 << 20, file);
    let mut buf = String::with_capacity(1 << 20);
    if cloud.height_normalized {
        buf.push_str("# height_normalized\n");
    }
    buf.push_str(HEADER);
    buf.push('\n');
    for chunk in cloud.records.chunks(16_384) {
        for p in chunk {
            push_record(&mut buf, p);
        }
        w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        buf.clear();
    }
    w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
