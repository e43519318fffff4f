use std::f64::consts::PI;

use super::geometry::{circle_polygon, Point, Polygon, Rect, CIRCLE_VERTICES};

pub const SUBPLOT_RADIUS_M: f64 = 7.32;
pub const SUBPLOT_OFFSET_M: f64 = 36.6;
/// Azimuths of the three outer subplots, clockwise from grid north (+y).
pub const SUBPLOT_AZIMUTHS_DEG: [f64; 3] = [360.0, 120.0, 240.0];

/// Four-subplot inventory plot: one subplot at the center and three at a
/// fixed offset along the stated azimuths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFootprint {
    pub center: Point,
    pub subplot_radius: f64,
    pub subplot_offset: f64,
    pub azimuths: [f64; 3],
}

impl PlotFootprint {
    pub fn new(center: Point) -> Self {
        PlotFootprint {
            center,
            subplot_radius: SUBPLOT_RADIUS_M,
            subplot_offset: SUBPLOT_OFFSET_M,
            azimuths: SUBPLOT_AZIMUTHS_DEG,
        }
    }

    pub fn subplot_centers(&self) -> [Point; 4] {
        let mut out = [self.center; 4];
        for (k, az) in self.azimuths.iter().enumerate() {
            let a = az.to_radians();
            out[k + 1] = Point::new(
                self.center.x + self.subplot_offset * a.sin(),
                self.center.y + self.subplot_offset * a.cos(),
            );
        }
        out
    }

    pub fn total_area(&self) -> f64 {
        4.0 * PI * self.subplot_radius * self.subplot_radius
    }

    /// Subplot circles as equal-area polygons, for clipping against pixels.
    pub fn polygons(&self) -> Vec<Polygon> {
        self.subplot_centers()
            .iter()
            .map(|c| circle_polygon(*c, self.subplot_radius, CIRCLE_VERTICES))
            .collect()
    }

    pub fn bbox(&self) -> Rect {
        let r = self.subplot_radius;
        let mut b = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in self.subplot_centers() {
            b.xmin = b.xmin.min(c.x - r);
            b.ymin = b.ymin.min(c.y - r);
            b.xmax = b.xmax.max(c.x + r);
            b.ymax = b.ymax.max(c.y + r);
        }
        b
    }
}

/// Build the footprint for a plot center.
pub fn build_plot_footprint(center: Point) -> crate::Result<PlotFootprint> {
    if !center.x.is_finite() || !center.y.is_finite() {
        return Err(crate::Error::invalid("plot center must be finite"));
    }
    Ok(PlotFootprint::new(center))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subplot_layout() {
        let f = build_plot_footprint(Point::new(0.0, 0.0)).unwrap();
        let c = f.subplot_centers();
        let expect = [(0.0, 0.0), (0.0, 36.6), (31.70, -18.30), (-31.70, -18.30)];
        for (p, (x, y)) in c.iter().zip(expect) {
            assert!((p.x - x).abs() < 0.005 && (p.y - y).abs() < 0.005, "{p:?} vs {x},{y}");
        }
        assert!((f.total_area() - 673.3).abs() < 0.05);
    }

    #[test]
    fn translation_equivariance() {
        let a = PlotFootprint::new(Point::new(0.0, 0.0)).subplot_centers();
        let b = PlotFootprint::new(Point::new(250.5, -13.25)).subplot_centers();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((q.x - p.x - 250.5).abs() < 1e-9);
            assert!((q.y - p.y + 13.25).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_center() {
        assert!(build_plot_footprint(Point::new(f64::NAN, 0.0)).is_err());
    }
}
