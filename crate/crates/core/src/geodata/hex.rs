use std::collections::HashMap;

use rand::Rng;

use super::geometry::{Point, Polygon, Rect};
use crate::{seeds, Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Area of a regular hexagon whose neighbor centroids are `spacing` apart.
pub fn hex_area_for_spacing(spacing: f64) -> f64 {
    SQRT3 / 2.0 * spacing * spacing
}

pub fn spacing_for_hex_area(area: f64) -> f64 {
    (2.0 * area / SQRT3).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexCell {
    pub id: usize,
    /// Axial lattice coordinates.
    pub q: i64,
    pub r: i64,
    pub center: Point,
    pub polygon: Polygon,
}

/// Flat-topped hexagon lattice over an extent, with a seeded random offset
/// of the lattice origin.
#[derive(Debug, Clone)]
pub struct HexTessellation {
    pub spacing_d: f64,
    pub extent: Rect,
    pub offset: Point,
    pub cells: Vec<HexCell>,
    lookup: HashMap<(i64, i64), usize>,
}

impl HexTessellation {
    pub fn new(extent: Rect, spacing_d: f64, seed: u64) -> Result<Self> {
        if extent.is_degenerate() {
            return Err(Error::Geometry(format!("degenerate extent {extent:?}")));
        }
        if !(spacing_d > 0.0) || !spacing_d.is_finite() {
            return Err(Error::invalid(format!("hex spacing must be > 0, got {spacing_d}")));
        }
        let circum = spacing_d / SQRT3;
        let mut rng = seeds::rng(seed);
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        // Lattice basis: a1 = (1.5R, d/2), a2 = (0, d).
        let offset = Point::new(
            extent.xmin + u * 1.5 * circum,
            extent.ymin + u * 0.5 * spacing_d + v * spacing_d,
        );
        let mut t = HexTessellation {
            spacing_d,
            extent,
            offset,
            cells: Vec::new(),
            lookup: HashMap::new(),
        };
        let q_lo = ((extent.xmin - offset.x) / (1.5 * circum)).floor() as i64 - 1;
        let q_hi = ((extent.xmax - offset.x) / (1.5 * circum)).ceil() as i64 + 1;
        let ext_poly = extent.to_polygon();
        for q in q_lo..=q_hi {
            let cx = offset.x + 1.5 * circum * q as f64;
            let base_y = offset.y + spacing_d * 0.5 * q as f64;
            let r_lo = ((extent.ymin - base_y) / spacing_d).floor() as i64 - 1;
            let r_hi = ((extent.ymax - base_y) / spacing_d).ceil() as i64 + 1;
            for r in r_lo..=r_hi {
                let center = Point::new(cx, base_y + spacing_d * r as f64);
                let poly = hexagon(center, circum);
                if !poly.bbox().intersects(&extent) {
                    continue;
                }
                if poly.clip_convex(&ext_poly).area() <= 0.0 {
                    continue;
                }
                let id = t.cells.len();
                t.lookup.insert((q, r), id);
                t.cells.push(HexCell {
                    id,
                    q,
                    r,
                    center,
                    polygon: poly,
                });
            }
        }
        Ok(t)
    }

    pub fn circumradius(&self) -> f64 {
        self.spacing_d / SQRT3
    }

    pub fn cell_area(&self) -> f64 {
        hex_area_for_spacing(self.spacing_d)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Axial coordinates of the hexagon containing `p` (cube rounding).
    pub fn axial_of(&self, p: &Point) -> (i64, i64) {
        let rad = self.circumradius();
        let x = p.x - self.offset.x;
        let y = p.y - self.offset.y;
        let qf = (2.0 / 3.0) * x / rad;
        let rf = (-1.0 / 3.0 * x + SQRT3 / 3.0 * y) / rad;
        cube_round(qf, rf)
    }

    /// Id of the cell containing `p`, if that cell is part of the tessellation.
    pub fn cell_at(&self, p: &Point) -> Option<usize> {
        let (q, r) = self.axial_of(p);
        self.lookup.get(&(q, r)).copied()
    }
}

fn cube_round(qf: f64, rf: f64) -> (i64, i64) {
    let sf = -qf - rf;
    let mut q = qf.round();
    let mut r = rf.round();
    let s = sf.round();
    let dq = (q - qf).abs();
    let dr = (r - rf).abs();
    let ds = (s - sf).abs();
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    (q as i64, r as i64)
}

/// Flat-topped hexagon centered on `center` with neighbor spacing `spacing`,
/// oriented like the cells of [`HexTessellation`].
pub fn hexagon_polygon(center: Point, spacing: f64) -> Polygon {
    hexagon(center, spacing / SQRT3)
}

fn hexagon(center: Point, circum: f64) -> Polygon {
    Polygon::new(
        (0..6)
            .map(|k| {
                let a = std::f64::consts::PI / 3.0 * k as f64;
                Point::new(center.x + circum * a.cos(), center.y + circum * a.sin())
            })
            .collect(),
    )
}
