//! Triangle meshes: constrained Delaunay generation, nested 1→4
//! refinement and the plain-text import/export format.

use crate::domain::{Circle, Domain, Point};
use crate::error::{Error, Result};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise index triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    /// Curve carried by each boundary edge, parallel to `boundary_edges`.
    boundary_curves: Vec<Option<Circle>>,
    /// Coarser mesh this one was refined from. Fine triangle `i` lies in
    /// parent triangle `i / 4`.
    pub parent: Option<Arc<Mesh>>,
}

pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edges used by exactly one triangle, oriented as in that triangle.
fn find_boundary(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for i in 0..3 {
            *count.entry(edge_key(t[i], t[(i + 1) % 3])).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for t in triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if count[&edge_key(a, b)] == 1 {
                out.push([a, b]);
            }
        }
    }
    out
}

impl Mesh {
    /// Build from raw arrays. Clockwise triangles are flipped; zero-area
    /// triangles are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, t) in triangles.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("triangle {i} references a missing vertex"),
                });
            }
            let a = triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if !(a.abs() > 0.0) {
                return Err(Error::DegenerateTriangle(i));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
        }
        let boundary_edges = find_boundary(&triangles);
        let boundary_curves = vec![None; boundary_edges.len()];
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            boundary_curves,
            parent: None,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area_of(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        triangle_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area_of(t)).sum()
    }

    pub fn max_edge(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.triangles.iter().flat_map(move |t| {
            (0..3).map(move |i| dist(self.vertices[t[i]], self.vertices[t[(i + 1) % 3]]))
        })
    }

    /// Smallest interior angle in degrees.
    /// Largest distance between two boundary vertices.
    pub fn diameter(&self) -> f64 {
        let mut ids: Vec<usize> = self.boundary_edges.iter().map(|e| e[0]).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut best: f64 = 0.0;
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                best = best.max(dist(self.vertices[a], self.vertices[b]));
            }
        }
        best
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut best = 180.0f64;
        for t in 0..self.triangles.len() {
            let p = self.corners(t);
            for i in 0..3 {
                let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist(a, b) * dist(a, c));
                best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    /// Connected components of the triangle adjacency graph (triangles
    /// sharing an edge).
    pub fn component_count(&self) -> usize {
        let nt = self.triangles.len();
        let mut parent: Vec<usize> = (0..nt).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let key = edge_key(t[k], t[(k + 1) % 3]);
                if let Some(&j) = owner.get(&key) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                } else {
                    owner.insert(key, i);
                }
            }
        }
        (0..nt).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Every triangle split into four by its edge midpoints. With `snap`,
    /// midpoints of boundary edges that approximate a circle are moved
    /// onto the circle.
    pub fn refine(self: &Arc<Self>, snap: bool) -> Result<Mesh> {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(3 * self.triangles.len() / 2);
        let curve_of: HashMap<(usize, usize), Circle> = self
            .boundary_edges
            .iter()
            .zip(&self.boundary_curves)
            .filter_map(|(e, c)| c.map(|c| (edge_key(e[0], e[1]), c)))
            .collect();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                if snap {
                    if let Some(c) = curve_of.get(&edge_key(a, b)) {
                        let d = [m[0] - c.center[0], m[1] - c.center[1]];
                        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                        m = [
                            c.center[0] + c.radius * d[0] / r,
                            c.center[1] + c.radius * d[1] / r,
                        ];
                    }
                }
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        let mut boundary_curves = Vec::with_capacity(2 * self.boundary_edges.len());
        for (e, c) in self.boundary_edges.iter().zip(&self.boundary_curves) {
            let m = mid[&edge_key(e[0], e[1])];
            boundary_edges.push([e[0], m]);
            boundary_edges.push([m, e[1]]);
            boundary_curves.push(*c);
            boundary_curves.push(*c);
        }
        if snap {
            for (i, t) in triangles.iter().enumerate() {
                if !(triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > 0.0) {
                    return Err(Error::DegenerateTriangle(i));
                }
            }
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            boundary_curves,
            parent: Some(Arc::clone(self)),
        })
    }

    /// `h`-scaled copy: every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Mesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            v[0] *= s;
            v[1] *= s;
        }
        for c in m.boundary_curves.iter_mut().flatten() {
            c.center = [c.center[0] * s, c.center[1] * s];
            c.radius *= s;
        }
        m.parent = None;
        m
    }

    /// `V T`, then `x y` per vertex, then `i j k` per triangle.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, reason: &str| Error::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| bad(0, "empty mesh file"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(hl, "header must be `V T`")))
            .collect::<Result<_>>()?;
        if counts.len() != 2 {
            return Err(bad(hl, "header must be `V T`"));
        }
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| bad(hl, "missing vertex lines"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(ln, "vertex line must be `x y`")))
                .collect::<Result<_>>()?;
            if xs.len() != 2 || !xs.iter().all(|x| x.is_finite()) {
                return Err(bad(ln, "vertex line must be `x y`"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::with_capacity(counts[1]);
        for _ in 0..counts[1] {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| bad(hl, "missing triangle lines"))?;
            let ix: Vec<usize> = l
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| bad(ln, "triangle line must be `i j k`"))
                })
                .collect::<Result<_>>()?;
            if ix.len() != 3 {
                return Err(bad(ln, "triangle line must be `i j k`"));
            }
            triangles.push([ix[0], ix[1], ix[2]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(bad(ln, "trailing content"));
        }
        Self::from_parts(vertices, triangles)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }
}

/// Constrained Delaunay triangulation of `domain` with target edge length
/// `h` and a 25° minimum-angle goal.
pub fn triangulate(domain: &Domain, h: f64) -> Result<Mesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("mesh size {h} must be positive")));
    }
    let feature = domain.min_edge();
    if h > 0.5 * domain.diameter() {
        log::warn!("mesh size {h} is coarse relative to '{}'", domain.label);
    }
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let mut loop_index = 0;
    for c in &domain.components {
        for l in c.loops() {
            let mut handles = Vec::with_capacity(l.vertices.len());
            for p in &l.vertices {
                let hnd = cdt
                    .insert(Point2::new(p[0], p[1]))
                    .map_err(|e| Error::Mesher {
                        loop_index,
                        reason: format!("{e:?}"),
                    })?;
                handles.push(hnd);
            }
            let n = handles.len();
            for i in 0..n {
                let (a, b) = (handles[i], handles[(i + 1) % n]);
                if !cdt.can_add_constraint(a, b) {
                    return Err(Error::Mesher {
                        loop_index,
                        reason: format!("edge {i} crosses another boundary edge"),
                    });
                }
                cdt.add_constraint(a, b);
            }
            loop_index += 1;
        }
    }
    let budget = (50.0 * domain.area() / (h * h)) as usize + 50 * cdt.num_vertices() + 1000;
    let params = RefinementParameters::<f64>::new()
        .with_max_allowed_area(3f64.sqrt() / 4.0 * h * h)
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_additional_vertices(budget)
        .exclude_outer_faces(true);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        log::warn!(
            "mesh refinement for '{}' hit its vertex budget",
            domain.label
        );
    }
    let excluded: std::collections::HashSet<_> =
        result.excluded_faces.iter().map(|f| f.index()).collect();

    let mut remap = vec![usize::MAX; cdt.num_vertices()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let vs = face.vertices();
        let pts: [Point; 3] = std::array::from_fn(|i| {
            let p = vs[i].position();
            [p.x, p.y]
        });
        let centroid = [
            (pts[0][0] + pts[1][0] + pts[2][0]) / 3.0,
            (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0,
        ];
        if !domain.contains(centroid) {
            continue;
        }
        let mut tri = [0; 3];
        for i in 0..3 {
            let idx = vs[i].fix().index();
            if remap[idx] == usize::MAX {
                remap[idx] = vertices.len();
                vertices.push(pts[i]);
            }
            tri[i] = remap[idx];
        }
        triangles.push(tri);
    }
    if triangles.is_empty() {
        return Err(Error::Mesher {
            loop_index: 0,
            reason: "no triangles inside the domain".into(),
        });
    }
    let mut mesh = Mesh::from_parts(vertices, triangles)?;
    // boundary edges inherit the circle of the input segment they lie on
    let circles: Vec<Circle> = domain
        .components
        .iter()
        .flat_map(|c| c.loops())
        .filter_map(|l| l.curve)
        .collect();
    if !circles.is_empty() {
        let tol = 1e-9 * domain.diameter().max(feature);
        for (e, slot) in mesh
            .boundary_edges
            .iter()
            .zip(mesh.boundary_curves.iter_mut())
        {
            let (p, q) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
            *slot = circles.iter().copied().find(|c| {
                let on = |x: Point| (dist(x, c.center) - c.radius).abs() <= 1e-3 * c.radius + tol;
                on(p) && on(q)
            });
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn domain(json: &str) -> Domain {
        Domain::parse(json).unwrap()
    }

    fn square() -> Domain {
        domain(r#"{"label":"sq","shapes":[{"type":"rectangle","min":[0,0],"max":[1,1]}]}"#)
    }

    fn check_valid(m: &Mesh) {
        for t in 0..m.num_triangles() {
            assert!(m.area_of(t) > 0.0);
        }
    }

    #[test]
    fn unit_square_mesh() {
        let m = triangulate(&square(), 0.5).unwrap();
        check_valid(&m);
        assert!(m.num_triangles() >= 8, "{} triangles", m.num_triangles());
        assert!((m.area() - 1.0).abs() < 1e-14);
        assert!(m.min_angle_deg() >= 20.0);
    }

    #[test]
    fn disc_mesh_area() {
        let d = domain(
            r#"{"label":"d","shapes":[{"type":"disc","center":[0,0],"radius":1,"segments":128}]}"#,
        );
        let m = triangulate(&d, 0.1).unwrap();
        check_valid(&m);
        assert!((m.area() - d.area()).abs() < 1e-4);
        assert!(m.min_angle_deg() >= 20.0);
        assert!(m.boundary_curves.iter().all(Option::is_some));
    }

    #[test]
    fn annulus_and_lshape() {
        let a = domain(
            r#"{"label":"a","shapes":[{"type":"annulus","center":[0,0],"radii":[1,0.5],"segments":128}]}"#,
        );
        let m = triangulate(&a, 0.1).unwrap();
        assert!((m.area() - a.area()).abs() < 1e-12);
        let l = domain(
            r#"{"label":"l","shapes":[{"type":"polygon","outer":[[0,0],[2,0],[2,1],[1,1],[1,2],[0,2]]}]}"#,
        );
        let m = triangulate(&l, 0.2).unwrap();
        assert!((m.area() - 3.0).abs() < 1e-12);
        assert!(m.min_angle_deg() >= 20.0);
    }

    #[test]
    fn two_components() {
        let d = domain(
            r#"{"label":"2","shapes":[{"type":"disc","center":[-1,0],"radius":0.4,"segments":64},
                {"type":"disc","center":[1,0],"radius":0.4,"segments":64}]}"#,
        );
        let m = triangulate(&d, 0.1).unwrap();
        assert_eq!(m.component_count(), 2);
        assert_eq!(triangulate(&square(), 0.3).unwrap().component_count(), 1);
    }

    #[test]
    fn refine_quadruples_and_nests() {
        let m = Arc::new(triangulate(&square(), 0.5).unwrap());
        let f = Arc::new(m.refine(false).unwrap());
        assert_eq!(f.num_triangles(), 4 * m.num_triangles());
        assert_eq!(f.area(), m.area());
        assert_eq!(f.boundary_edges.len(), 2 * m.boundary_edges.len());
        // each child lies in its parent: barycentric coordinates in [0, 1]
        for t in 0..f.num_triangles() {
            let [a, b, c] = m.corners(t / 4);
            let total = triangle_area(a, b, c);
            for p in f.corners(t) {
                for w in [
                    triangle_area(p, b, c),
                    triangle_area(a, p, c),
                    triangle_area(a, b, p),
                ] {
                    assert!(w / total >= -1e-14);
                }
            }
        }
        let ff = f.refine(false).unwrap();
        assert!((ff.max_edge() - 0.25 * m.max_edge()).abs() < 1e-14);
    }

    #[test]
    fn snapping_moves_midpoints_onto_circle() {
        let d = domain(
            r#"{"label":"d","shapes":[{"type":"disc","center":[0,0],"radius":1,"segments":64}]}"#,
        );
        let m = Arc::new(triangulate(&d, 0.3).unwrap());
        let f = m.refine(true).unwrap();
        for e in &f.boundary_edges {
            let p = f.vertices[e[0]];
            assert!((dist(p, [0.0, 0.0]) - 1.0).abs() < 1e-12);
        }
        assert!(f.area() > m.area());
        assert!(f.area() < std::f64::consts::PI);
    }

    #[test]
    fn text_round_trip() {
        let m = triangulate(&square(), 0.4).unwrap();
        let again = Mesh::parse_text(&m.to_text()).unwrap();
        assert_eq!(m.vertices, again.vertices);
        assert_eq!(m.triangles, again.triangles);
    }

    #[test]
    fn import_rejects_bad_files() {
        assert!(Mesh::parse_text("").is_err());
        assert!(Mesh::parse_text("3 1\n0 0\n1 0\n0 1\n0 1 5\n").is_err());
        assert!(matches!(
            Mesh::parse_text("3 1\n0 0\n1 0\n2 0\n0 1 2\n"),
            Err(Error::DegenerateTriangle(0))
        ));
        let flipped = Mesh::parse_text("3 1\n0 0\n1 0\n0 1\n0 2 1\n").unwrap();
        assert!(flipped.area_of(0) > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mesh_invariants(w in 0.5f64..3.0, hgt in 0.5f64..3.0, h in 0.1f64..0.5) {
            let d = domain(&format!(
                r#"{{"label":"r","shapes":[{{"type":"rectangle","min":[0,0],"max":[{w},{hgt}]}}]}}"#
            ));
            let m = triangulate(&d, h).unwrap();
            for t in 0..m.num_triangles() {
                prop_assert!(m.area_of(t) > 0.0);
            }
            prop_assert!((m.area() - w * hgt).abs() < 1e-12 * w * hgt);
            prop_assert!(m.min_angle_deg() >= 20.0);
        }
    }
}
