//! Planar domains: the JSON shape schema, validation, exact polygon
//! area and the equivalent-ball radii.

use crate::error::{Error, Result};
use crate::radial::unit_ball_volume;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = [f64; 2];

/// Minimum polygon resolution for curved primitives.
pub const MIN_SEGMENTS: usize = 64;

fn default_segments() -> usize {
    512
}

/// One entry of the `shapes` list in a domain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Polygon {
        outer: Vec<Point>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        holes: Vec<Vec<Point>>,
    },
    Rectangle {
        min: Point,
        max: Point,
    },
    Disc {
        center: Point,
        radius: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
    Annulus {
        center: Point,
        radii: [f64; 2],
        #[serde(default = "default_segments")]
        segments: usize,
    },
    Union {
        parts: Vec<Shape>,
    },
}

/// The on-disk form of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub label: String,
    pub shapes: Vec<Shape>,
}

/// Circle that a polygonized loop approximates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

/// A closed polygonal loop. The closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub vertices: Vec<Point>,
    /// Set when the loop polygonizes a circle.
    pub curve: Option<Circle>,
}

impl Loop {
    fn new(vertices: Vec<Point>) -> Self {
        Self {
            vertices,
            curve: None,
        }
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Area between the polygon and the circle it approximates.
    pub fn sagitta_area(&self) -> f64 {
        match self.curve {
            Some(c) => (PI * c.radius * c.radius - self.signed_area().abs()).max(0.0),
            None => 0.0,
        }
    }
}

/// Outer boundary (counter-clockwise) plus holes (clockwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub outer: Loop,
    pub holes: Vec<Loop>,
}

impl Component {
    pub fn area(&self) -> f64 {
        self.outer.signed_area() + self.holes.iter().map(Loop::signed_area).sum::<f64>()
    }

    pub fn loops(&self) -> impl Iterator<Item = &Loop> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    pub fn contains(&self, p: Point) -> bool {
        winding_inside(&self.outer.vertices, p)
            && !self.holes.iter().any(|h| winding_inside(&h.vertices, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentRadii {
    /// Radius of the ball with the same volume.
    pub r_big: f64,
    /// Radius of the ball with half the volume.
    pub r_half: f64,
}

/// A validated polygonal domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub label: String,
    pub components: Vec<Component>,
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

fn winding_inside(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Bounding boxes of edge chunks, used to prune the quadratic edge tests.
fn bbox(v: &[Point]) -> [f64; 4] {
    let mut b = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    for p in v {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    b
}

fn boxes_overlap(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn check_simple(l: &Loop, loop_index: usize) -> Result<()> {
    let v = &l.vertices;
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let eb = bbox(&[a, b]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (c, d) = (v[j], v[(j + 1) % n]);
            if !boxes_overlap(eb, bbox(&[c, d])) {
                continue;
            }
            if adjacent {
                // adjacent edges may only share their common vertex
                let shared = if j == i + 1 { b } else { a };
                let (far_self, far_other) = if j == i + 1 { (a, d) } else { (b, c) };
                if orient(far_self, shared, far_other) == 0.0
                    && (on_segment(a, b, far_other) || on_segment(c, d, far_self))
                {
                    return Err(Error::SelfIntersection {
                        loop_index,
                        first: i,
                        second: j,
                    });
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Err(Error::SelfIntersection {
                    loop_index,
                    first: i,
                    second: j,
                });
            }
        }
    }
    Ok(())
}

fn loops_cross(a: &Loop, b: &Loop) -> bool {
    if !boxes_overlap(bbox(&a.vertices), bbox(&b.vertices)) {
        return false;
    }
    let bb = bbox(&b.vertices);
    a.edges().any(|(p, q)| {
        boxes_overlap(bbox(&[p, q]), bb) && b.edges().any(|(r, s)| segments_intersect(p, q, r, s))
    })
}

fn clean_loop(mut v: Vec<Point>) -> Result<Vec<Point>> {
    if v.len() >= 2 && v.first() == v.last() {
        v.pop();
    }
    if v.len() < 3 {
        return Err(Error::Schema(format!(
            "loop has {} vertices, need at least 3",
            v.len()
        )));
    }
    if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Schema("non-finite vertex coordinate".into()));
    }
    Ok(v)
}

fn circle_loop(center: Point, radius: f64, segments: usize, ccw: bool) -> Loop {
    let vertices = (0..segments)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / segments as f64;
            let t = if ccw { t } else { -t };
            [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect();
    Loop {
        vertices,
        curve: Some(Circle { center, radius }),
    }
}

fn expand(shape: &Shape, out: &mut Vec<Component>) -> Result<()> {
    match shape {
        Shape::Polygon { outer, holes } => {
            let mut outer = Loop::new(clean_loop(outer.clone())?);
            if outer.signed_area() < 0.0 {
                outer.vertices.reverse();
            }
            let mut hs = Vec::with_capacity(holes.len());
            for h in holes {
                let mut h = Loop::new(clean_loop(h.clone())?);
                if h.signed_area() > 0.0 {
                    h.vertices.reverse();
                }
                hs.push(h);
            }
            out.push(Component { outer, holes: hs });
        }
        Shape::Rectangle { min, max } => {
            if !(max[0] > min[0] && max[1] > min[1]) {
                return Err(Error::Schema(format!(
                    "rectangle min {min:?} not below max {max:?}"
                )));
            }
            let v = vec![*min, [max[0], min[1]], *max, [min[0], max[1]]];
            out.push(Component {
                outer: Loop::new(v),
                holes: vec![],
            });
        }
        Shape::Disc {
            center,
            radius,
            segments,
        } => {
            if !(*radius > 0.0) {
                return Err(Error::Schema(format!(
                    "disc radius {radius} must be positive"
                )));
            }
            let n = (*segments).max(MIN_SEGMENTS);
            out.push(Component {
                outer: circle_loop(*center, *radius, n, true),
                holes: vec![],
            });
        }
        Shape::Annulus {
            center,
            radii,
            segments,
        } => {
            let [r_out, r_in] = *radii;
            if !(r_in > 0.0 && r_out > r_in) {
                return Err(Error::Schema(format!(
                    "annulus radii {radii:?} need r_out > r_in > 0"
                )));
            }
            let n = (*segments).max(MIN_SEGMENTS);
            out.push(Component {
                outer: circle_loop(*center, r_out, n, true),
                holes: vec![circle_loop(*center, r_in, n, false)],
            });
        }
        Shape::Union { parts } => {
            for p in parts {
                expand(p, out)?;
            }
        }
    }
    Ok(())
}

impl Domain {
    /// Expand the primitives of a spec and validate the result.
    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let mut components = Vec::new();
        for s in &spec.shapes {
            expand(s, &mut components)?;
        }
        if components.is_empty() {
            return Err(Error::Schema("domain has no shapes".into()));
        }
        let d = Domain {
            label: spec.label.clone(),
            components,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: DomainSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let mut index = 0;
        for c in &self.components {
            for l in c.loops() {
                check_simple(l, index)?;
                index += 1;
            }
            for h in &c.holes {
                if loops_cross(&c.outer, h) || !winding_inside(&c.outer.vertices, h.vertices[0]) {
                    return Err(Error::Domain(format!(
                        "hole of '{}' is not inside its outer loop",
                        self.label
                    )));
                }
            }
            for (i, h) in c.holes.iter().enumerate() {
                for g in &c.holes[i + 1..] {
                    if loops_cross(h, g)
                        || winding_inside(&h.vertices, g.vertices[0])
                        || winding_inside(&g.vertices, h.vertices[0])
                    {
                        return Err(Error::Domain("holes overlap".into()));
                    }
                }
            }
        }
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate().skip(i + 1) {
                let crossing = a.loops().any(|la| b.loops().any(|lb| loops_cross(la, lb)));
                if crossing || a.contains(b.outer.vertices[0]) || b.contains(a.outer.vertices[0]) {
                    return Err(Error::Overlap(i, j));
                }
            }
        }
        if !(self.area() > 0.0) {
            return Err(Error::Domain("domain area is not positive".into()));
        }
        Ok(())
    }

    /// Lossless description of the expanded polygons.
    pub fn to_spec(&self) -> DomainSpec {
        DomainSpec {
            label: self.label.clone(),
            shapes: self
                .components
                .iter()
                .map(|c| Shape::Polygon {
                    outer: c.outer.vertices.clone(),
                    holes: c.holes.iter().map(|h| h.vertices.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("domain spec serializes")
    }

    pub fn area(&self) -> f64 {
        self.components.iter().map(Component::area).sum()
    }

    /// Total area between the curved primitives and their polygons.
    pub fn sagitta_area(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.loops())
            .map(Loop::sagitta_area)
            .sum()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.components.iter().any(|c| c.contains(p))
    }

    pub fn equivalent_radii(&self, dim: usize) -> EquivalentRadii {
        equivalent_radii(self.area(), dim)
    }

    /// `[xmin, ymin, xmax, ymax]`
    pub fn bounding_box(&self) -> [f64; 4] {
        let all: Vec<Point> = self
            .components
            .iter()
            .flat_map(|c| c.outer.vertices.iter().copied())
            .collect();
        bbox(&all)
    }

    /// Largest distance between two boundary vertices.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self
            .components
            .iter()
            .flat_map(|c| c.outer.vertices.iter().copied())
            .collect();
        let mut d2: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d2 = d2.max((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
            }
        }
        d2.sqrt()
    }

    /// Shortest boundary edge, a rough lower bound for the feature size.
    pub fn min_edge(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.loops())
            .flat_map(|l| l.edges())
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Apply `x -> s x + t` to every vertex.
    pub fn transformed(&self, s: f64, t: Point) -> Domain {
        let map = |l: &Loop| Loop {
            vertices: l
                .vertices
                .iter()
                .map(|p| [s * p[0] + t[0], s * p[1] + t[1]])
                .collect(),
            curve: l.curve.map(|c| Circle {
                center: [s * c.center[0] + t[0], s * c.center[1] + t[1]],
                radius: s * c.radius,
            }),
        };
        Domain {
            label: self.label.clone(),
            components: self
                .components
                .iter()
                .map(|c| Component {
                    outer: map(&c.outer),
                    holes: c.holes.iter().map(map).collect(),
                })
                .collect(),
        }
    }
}

pub fn equivalent_radii(volume: f64, dim: usize) -> EquivalentRadii {
    let w = unit_ball_volume(dim);
    let n = dim as f64;
    EquivalentRadii {
        r_big: (volume / w).powf(1.0 / n),
        r_half: (volume / (2.0 * w)).powf(1.0 / n),
    }
}
