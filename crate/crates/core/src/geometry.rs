//! Planar primitives: points, rigid transforms, simple polygons.

use serde::{Deserialize, Serialize};

/// Position in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    /// Counter-clockwise rotation by `angle` about the origin.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn rotate_about(self, pivot: Point, angle: f64) -> Point {
        self.sub(pivot).rotate(angle).add(pivot)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Rigid frame: origin plus x-axis direction. Maps between global
/// coordinates and coordinates local to the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Point,
    pub heading: f64,
}

impl Frame {
    pub fn to_local(&self, p: Point) -> Point {
        p.sub(self.origin).rotate(-self.heading)
    }

    pub fn to_global(&self, p: Point) -> Point {
        p.rotate(self.heading).add(self.origin)
    }

    /// Rotates a displacement (no translation) into the local frame.
    pub fn vec_to_local(&self, v: Point) -> Point {
        v.rotate(-self.heading)
    }

    pub fn vec_to_global(&self, v: Point) -> Point {
        v.rotate(self.heading)
    }
}

const BOUNDARY_EPS: f64 = 1e-9;

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let ab = b.sub(a);
    let len = ab.norm();
    if len == 0.0 {
        return p.dist(a) <= BOUNDARY_EPS;
    }
    let t = p.sub(a).dot(ab) / (len * len);
    if !(-BOUNDARY_EPS..=1.0 + BOUNDARY_EPS).contains(&t) {
        return false;
    }
    (ab.cross(p.sub(a)) / len).abs() <= BOUNDARY_EPS
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    // orientation with near-collinear triples snapped to zero
    let o = |p: Point, q: Point, r: Point| {
        let (u, v) = (q.sub(p), r.sub(p));
        let x = u.cross(v);
        if x.abs() <= 1e-12 * (u.norm() * v.norm()).max(1e-300) {
            0.0
        } else {
            x
        }
    };
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of(points: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = Point::new(min.x.min(p.x), min.y.min(p.y));
            max = Point::new(max.x.max(p.x), max.y.max(p.y));
        }
        Self { min, max }
    }

    pub fn contains(&self, p: Point, slack: f64) -> bool {
        p.x >= self.min.x - slack && p.x <= self.max.x + slack && p.y >= self.min.y - slack && p.y <= self.max.y + slack
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
    bbox: BBox,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        let bbox = BBox::of(&vertices);
        Self { vertices, bbox }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(b)).sum::<f64>() / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let e: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // adjacent edges may only share their common vertex
                    let (a, b) = e[i];
                    let (c, d) = e[j];
                    let shared = if j == i + 1 { b } else { a };
                    let other_i = if j == i + 1 { a } else { b };
                    let other_j = if j == i + 1 { d } else { c };
                    if on_segment(other_j, a, b) && other_j != shared || on_segment(other_i, c, d) && other_i != shared {
                        return false;
                    }
                    continue;
                }
                if segments_cross(e[i].0, e[i].1, e[j].0, e[j].1) {
                    return false;
                }
            }
        }
        true
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b))
    }

    /// Even-odd containment with the boundary counted as inside.
    pub fn contains(&self, p: Point) -> bool {
        if !self.bbox.contains(p, BOUNDARY_EPS) {
            return false;
        }
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Closest point on the polygon's boundary.
    pub fn nearest_boundary_point(&self, p: Point) -> Point {
        let mut best = (f64::INFINITY, p);
        for (a, b) in self.edges() {
            let ab = b.sub(a);
            let denom = ab.dot(ab);
            let t = if denom == 0.0 { 0.0 } else { (p.sub(a).dot(ab) / denom).clamp(0.0, 1.0) };
            let q = a.add(ab.scale(t));
            let d = q.dist(p);
            if d < best.0 {
                best = (d, q);
            }
        }
        best.1
    }

    /// Sutherland-Hodgman clip against an axis-aligned box.
    pub fn clip_to_box(&self, bbox: &BBox) -> Option<Polygon> {
        if !self.bbox.intersects(bbox) {
            return None;
        }
        if bbox.contains(self.bbox.min, 0.0) && bbox.contains(self.bbox.max, 0.0) {
            return Some(self.clone());
        }
        type Inside = fn(Point, &BBox) -> bool;
        type Cross = fn(Point, Point, &BBox) -> Point;
        let planes: [(Inside, Cross); 4] = [
            (|p, b| p.x >= b.min.x, |a, c, b| Point::new(b.min.x, a.y + (c.y - a.y) * (b.min.x - a.x) / (c.x - a.x))),
            (|p, b| p.x <= b.max.x, |a, c, b| Point::new(b.max.x, a.y + (c.y - a.y) * (b.max.x - a.x) / (c.x - a.x))),
            (|p, b| p.y >= b.min.y, |a, c, b| Point::new(a.x + (c.x - a.x) * (b.min.y - a.y) / (c.y - a.y), b.min.y)),
            (|p, b| p.y <= b.max.y, |a, c, b| Point::new(a.x + (c.x - a.x) * (b.max.y - a.y) / (c.y - a.y), b.max.y)),
        ];
        let mut poly = self.vertices.clone();
        for (inside, cross) in planes {
            if poly.is_empty() {
                break;
            }
            let input = std::mem::take(&mut poly);
            let n = input.len();
            for i in 0..n {
                let cur = input[i];
                let prev = input[(i + n - 1) % n];
                match (inside(prev, bbox), inside(cur, bbox)) {
                    (true, true) => poly.push(cur),
                    (true, false) => poly.push(cross(prev, cur, bbox)),
                    (false, true) => {
                        poly.push(cross(prev, cur, bbox));
                        poly.push(cur);
                    }
                    (false, false) => {}
                }
            }
        }
        poly.dedup();
        if poly.len() > 1 && poly.first() == poly.last() {
            poly.pop();
        }
        let clipped = Polygon::new(poly);
        (clipped.vertices.len() >= 3 && clipped.area() > 0.0).then_some(clipped)
    }

    pub fn transformed(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon::new(self.vertices.iter().map(|p| f(*p)).collect())
    }

    pub fn reversed(&self) -> Polygon {
        let mut v = self.vertices.clone();
        v.reverse();
        Polygon::new(v)
    }
}
