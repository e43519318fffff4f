use std::f64::consts::PI;

/// Vertex count used when a circle has to be clipped as a polygon.
pub const CIRCLE_VERTICES: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Axis-aligned rectangle, `min` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || !self.xmin.is_finite()
            || !self.ymin.is_finite()
            || !self.xmax.is_finite()
            || !self.ymax.is_finite()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.xmin < other.xmax
            && other.xmin < self.xmax
            && self.ymin < other.ymax
            && other.ymin < self.ymax
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(vec![
            Point::new(self.xmin, self.ymin),
            Point::new(self.xmax, self.ymin),
            Point::new(self.xmax, self.ymax),
            Point::new(self.xmin, self.ymax),
        ])
    }
}

/// Simple polygon given by its outer ring (no holes, not closed).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..v.len() {
            let j = (i + 1) % v.len();
            s += v[i].x * v[j].y - v[j].x * v[i].y;
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            r.xmin = r.xmin.min(p.x);
            r.ymin = r.ymin.min(p.y);
            r.xmax = r.xmax.max(p.x);
            r.ymax = r.ymax.max(p.y);
        }
        r
    }

    /// Even-odd point-in-polygon test. Boundary points may fall either way.
    pub fn contains(&self, p: &Point) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len().wrapping_sub(1);
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Sutherland–Hodgman clip against an axis-aligned rectangle. The subject
    /// may be concave; degenerate zero-area bridges can appear in the output
    /// but the shoelace area of the result is exact.
    pub fn clip_rect(&self, r: &Rect) -> Polygon {
        let mut out = self.vertices.clone();
        out = clip_half(&out, |p| p.x >= r.xmin, |a, b| lerp_x(a, b, r.xmin));
        out = clip_half(&out, |p| p.x <= r.xmax, |a, b| lerp_x(a, b, r.xmax));
        out = clip_half(&out, |p| p.y >= r.ymin, |a, b| lerp_y(a, b, r.ymin));
        out = clip_half(&out, |p| p.y <= r.ymax, |a, b| lerp_y(a, b, r.ymax));
        Polygon::new(out)
    }

    /// Clip against a convex polygon (any orientation).
    pub fn clip_convex(&self, clip: &Polygon) -> Polygon {
        let c = &clip.vertices;
        if c.len() < 3 {
            return Polygon::new(Vec::new());
        }
        let orient = clip.signed_area().signum();
        let mut out = self.vertices.clone();
        for i in 0..c.len() {
            if out.is_empty() {
                break;
            }
            let a = c[i];
            let b = c[(i + 1) % c.len()];
            let side = |p: &Point| orient * cross(a, b, *p) >= 0.0;
            out = clip_half(&out, side, |p, q| {
                let dp = cross(a, b, p);
                let dq = cross(a, b, q);
                let t = dp / (dp - dq);
                Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
            });
        }
        Polygon::new(out)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon::new(
            self.vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        )
    }
}

fn cross(a: Point, b: Point, p: Point) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn lerp_x(a: Point, b: Point, x: f64) -> Point {
    let t = (x - a.x) / (b.x - a.x);
    Point::new(x, a.y + t * (b.y - a.y))
}

fn lerp_y(a: Point, b: Point, y: f64) -> Point {
    let t = (y - a.y) / (b.y - a.y);
    Point::new(a.x + t * (b.x - a.x), y)
}

fn clip_half(
    input: &[Point],
    inside: impl Fn(&Point) -> bool,
    intersect: impl Fn(Point, Point) -> Point,
) -> Vec<Point> {
    let mut out = Vec::with_capacity(input.len() + 4);
    if input.is_empty() {
        return out;
    }
    let mut prev = input[input.len() - 1];
    let mut prev_in = inside(&prev);
    for &cur in input {
        let cur_in = inside(&cur);
        if cur_in {
            if !prev_in {
                out.push(intersect(prev, cur));
            }
            out.push(cur);
        } else if prev_in {
            out.push(intersect(prev, cur));
        }
        prev = cur;
        prev_in = cur_in;
    }
    out
}

/// Regular polygon standing in for a circle. The circumradius is inflated so
/// the polygon has exactly the circle's area; vertex 0 sits due north.
pub fn circle_polygon(center: Point, radius: f64, n: usize) -> Polygon {
    let step = 2.0 * PI / n as f64;
    let circum = radius * (PI / (0.5 * n as f64 * step.sin())).sqrt();
    Polygon::new(
        (0..n)
            .map(|k| {
                let a = k as f64 * step;
                Point::new(center.x + circum * a.sin(), center.y + circum * a.cos())
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_polygon_area_matches_circle() {
        let c = circle_polygon(Point::new(3.0, 4.0), 7.32, CIRCLE_VERTICES);
        let exact = PI * 7.32 * 7.32;
        assert!((c.area() - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn rect_clip_of_concave_polygon() {
        // L-shape, area 3
        let l = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ]);
        assert_eq!(l.area(), 3.0);
        let clipped = l.clip_rect(&Rect::new(0.5, 0.5, 1.5, 1.5));
        assert!((clipped.area() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn convex_clip_square_by_square() {
        let a = Rect::new(0.0, 0.0, 2.0, 2.0).to_polygon();
        let b = Rect::new(1.0, 1.0, 3.0, 3.0).to_polygon();
        assert!((a.clip_convex(&b).area() - 1.0).abs() < 1e-12);
    }
}
