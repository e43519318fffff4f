use std::f64::consts::PI;

use super::PointCloud;
use crate::geodata::{circle_polygon, Point, Polygon, CIRCLE_VERTICES};

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Fraction of the circle covered by the convex hull of the returns' (x, y)
/// positions. The circle is an equal-area 720-gon for clipping.
pub fn convex_hull_coverage(cloud: &PointCloud, center: Point, radius: f64) -> f64 {
    let pts: Vec<Point> = cloud.records.iter().map(|r| Point::new(r.x, r.y)).collect();
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return 0.0;
    }
    let hull = Polygon::new(hull);
    if hull.area() <= 0.0 {
        return 0.0;
    }
    let circle = circle_polygon(center, radius, CIRCLE_VERTICES);
    let covered = hull.clip_convex(&circle).area();
    (covered / (PI * radius * radius)).clamp(0.0, 1.0)
}
