//! Browser bindings for a few self-contained pieces of the library:
//! hexagon geometry, accuracy metrics on pasted pairs, and Moran's I
//! profiles of pasted residuals.

use agbmap::assess::{gmfr, metric_bundle, moran_profile, SeOptions};
use agbmap::geodata::{hex_area_for_spacing, spacing_for_hex_area, Point};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Numeric rows of `width` columns; blank lines, `#` comments and a
/// non-numeric header line are skipped.
fn parse_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split([',', ';', '\t', ' ']).filter(|s| !s.is_empty()).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == width => rows.push(v),
            Ok(v) => return Err(format!("line {}: expected {width} numbers, found {}", i + 1, v.len())),
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(_) => return Err(format!("line {}: not a number in `{line}`", i + 1)),
        }
    }
    Ok(rows)
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn hex_geometry_json(spacing_m: f64) -> Result<String, String> {
    if !(spacing_m.is_finite() && spacing_m > 0.0) {
        return Err("spacing must be a positive number of meters".into());
    }
    let area_ha = hex_area_for_spacing(spacing_m) / 1e4;
    Ok(json!({
        "spacing_m": spacing_m,
        "area_ha": area_ha,
        "side_m": spacing_m / 3f64.sqrt(),
        "roundtrip_spacing_m": spacing_for_hex_area(area_ha * 1e4),
    })
    .to_string())
}

pub fn accuracy_json(pairs: &str, bootstrap_reps: usize, seed: u64) -> Result<String, String> {
    let rows = parse_rows(pairs, 2)?;
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let yhat: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let opts = SeOptions {
        bootstrap_reps,
        divide_sqrt_n: false,
    };
    let b = metric_bundle(&y, &yhat, &opts, seed).map_err(|e| e.to_string())?;
    let p = b.point;
    let line = gmfr(&y, &yhat).ok();
    let opt = |v: Option<f64>| v.map_or(Value::Null, num);
    Ok(json!({
        "n": p.n,
        "y_mean": num(p.y_mean),
        "rmse": num(p.rmse),
        "pct_rmse": opt(p.pct_rmse),
        "mae": num(p.mae),
        "pct_mae": opt(p.pct_mae),
        "me": num(p.me),
        "r2": opt(p.r2),
        "se_rmse": opt(b.se_rmse),
        "se_r2": opt(b.se_r2),
        "se_mae": opt(b.se_mae),
        "se_me": opt(b.se_me),
        "gmfr_slope": opt(line.map(|l| l.slope)),
        "gmfr_intercept": opt(line.map(|l| l.intercept)),
    })
    .to_string())
}

pub fn moran_json(points: &str, radius_step: f64, n_radii: usize, reps: usize, seed: u64) -> Result<String, String> {
    if !(radius_step > 0.0) || n_radii == 0 {
        return Err("need a positive radius step and at least one radius".into());
    }
    let rows = parse_rows(points, 3)?;
    let pts: Vec<Point> = rows.iter().map(|r| Point::new(r[0], r[1])).collect();
    let res: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let radii: Vec<f64> = (1..=n_radii).map(|k| radius_step * k as f64).collect();
    let profile = moran_profile(&pts, &res, &radii, reps, seed).map_err(|e| e.to_string())?;
    let out: Vec<Value> = profile
        .iter()
        .map(|m| {
            json!({
                "radius": m.radius,
                "i": m.i.map_or(Value::Null, num),
                "low": m.envelope_low.map_or(Value::Null, num),
                "high": m.envelope_high.map_or(Value::Null, num),
                "pairs": m.n_pairs,
            })
        })
        .collect();
    Ok(Value::Array(out).to_string())
}

#[wasm_bindgen]
pub fn hex_geometry(spacing_m: f64) -> Result<String, JsError> {
    hex_geometry_json(spacing_m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn accuracy(pairs: &str, bootstrap_reps: usize, seed: u64) -> Result<String, JsError> {
    accuracy_json(pairs, bootstrap_reps, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn moran(points: &str, radius_step: f64, n_radii: usize, reps: usize, seed: u64) -> Result<String, JsError> {
    moran_json(points, radius_step, n_radii, reps, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_geometry_matches_published_pairs() {
        let v: Value = serde_json::from_str(&hex_geometry_json(10_000.0).unwrap()).unwrap();
        assert!((v["area_ha"].as_f64().unwrap() - 8660.254).abs() < 1e-3);
        assert!(hex_geometry_json(-1.0).is_err());
    }

    #[test]
    fn accuracy_hand_case() {
        let v: Value = serde_json::from_str(&accuracy_json("y,yhat\n0,1\n2,1\n", 50, 1).unwrap()).unwrap();
        assert_eq!(v["rmse"].as_f64(), Some(1.0));
        assert_eq!(v["pct_rmse"].as_f64(), Some(100.0));
        assert_eq!(v["r2"].as_f64(), Some(0.0));
        assert!(accuracy_json("1,2\n3\n", 10, 1).unwrap_err().contains("line 2"));
    }

    #[test]
    fn moran_two_points() {
        let out = moran_json("0 0 3\n10 0 -3\n", 50.0, 1, 9, 1).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v[0]["i"].as_f64(), Some(-1.0));
    }
}
