//! Densities `ρ: R² → [0, 1]` on a box and their relaxed eigenvalues.

use crate::domain::{Domain, DomainSpec, Point, Shape};
use crate::eigen::{solve_eigs_with, EigenOptions, SpectralResult};
use crate::error::{Error, Result};
use crate::extrapolate::richardson;
use crate::fem::{assemble_moments, BilinearForms};
use crate::mesh::{triangulate, Mesh};
use crate::quadrature::triangle_rule;
use crate::radial::mu_star;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Nodal values on a uniform `nx × ny` grid spanning `bounds`
/// (`xmin, ymin, xmax, ymax`), row `j` holding the nodes with
/// `y = ymin + j dy`. Between nodes the density is bilinear; outside the
/// box it is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    nx: usize,
    ny: usize,
    bounds: [f64; 4],
    values: Vec<f64>,
}

impl Density {
    pub fn new(nx: usize, ny: usize, bounds: [f64; 4], values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Density(format!(
                "grid {nx}×{ny} needs at least 2 nodes per side"
            )));
        }
        if !(bounds[2] > bounds[0] && bounds[3] > bounds[1])
            || bounds.iter().any(|b| !b.is_finite())
        {
            return Err(Error::Density(format!("box {bounds:?} is empty")));
        }
        if values.len() != nx * ny {
            return Err(Error::Density(format!(
                "{} values for a {nx}×{ny} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Density(format!(
                "value {} at node {i} outside [0, 1]",
                values[i]
            )));
        }
        let rho = Self {
            nx,
            ny,
            bounds,
            values,
        };
        if !(rho.mass() > 0.0) {
            return Err(Error::Density("density has zero mass".into()));
        }
        Ok(rho)
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        bounds: [f64; 4],
        f: impl Fn(Point) -> f64,
    ) -> Result<Self> {
        let (dx, dy) = (
            (bounds[2] - bounds[0]) / (nx - 1) as f64,
            (bounds[3] - bounds[1]) / (ny - 1) as f64,
        );
        let values = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| f([bounds[0] + i as f64 * dx, bounds[1] + j as f64 * dy]))
            .collect();
        Self::new(nx, ny, bounds, values)
    }

    /// Header `nx ny xmin ymin xmax ymax`, then `nx·ny` values. Blank
    /// lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.lines().enumerate().flat_map(|(n, line)| {
            let body = line.split('#').next().unwrap_or("");
            body.split_whitespace()
                .map(move |t| (n + 1, t))
                .collect::<Vec<_>>()
        });
        let mut next = |what: &str| {
            tokens.next().ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("missing {what}"),
            })
        };
        let count = |(line, t): (usize, &str)| {
            t.parse::<usize>().map_err(|e| Error::Parse {
                line,
                reason: format!("bad grid size {t:?}: {e}"),
            })
        };
        let real = |(line, t): (usize, &str)| {
            t.parse::<f64>().map_err(|e| Error::Parse {
                line,
                reason: format!("bad number {t:?}: {e}"),
            })
        };
        let nx = count(next("nx")?)?;
        let ny = count(next("ny")?)?;
        let mut bounds = [0.0; 4];
        for b in &mut bounds {
            *b = real(next("box corner")?)?;
        }
        let mut values = Vec::with_capacity(nx.saturating_mul(ny).min(1 << 24));
        for _ in 0..nx.saturating_mul(ny) {
            values.push(real(next("grid value")?)?);
        }
        if let Some((line, t)) = tokens.next() {
            return Err(Error::Parse {
                line,
                reason: format!("unexpected trailing token {t:?}"),
            });
        }
        Self::new(nx, ny, bounds, values)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let b = self.bounds;
        let mut out = format!(
            "{} {} {} {} {} {}\n",
            self.nx, self.ny, b[0], b[1], b[2], b[3]
        );
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn spacing(&self) -> (f64, f64) {
        (
            (self.bounds[2] - self.bounds[0]) / (self.nx - 1) as f64,
            (self.bounds[3] - self.bounds[1]) / (self.ny - 1) as f64,
        )
    }

    /// Bilinear interpolant, zero outside the box.
    pub fn value(&self, x: Point) -> f64 {
        let (dx, dy) = self.spacing();
        let u = (x[0] - self.bounds[0]) / dx;
        let v = (x[1] - self.bounds[1]) / dy;
        if !(u >= 0.0 && v >= 0.0 && u <= (self.nx - 1) as f64 && v <= (self.ny - 1) as f64) {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.nx - 2);
        let j = (v.floor() as usize).min(self.ny - 2);
        let (s, t) = (u - i as f64, v - j as f64);
        let at = |i: usize, j: usize| self.values[j * self.nx + i];
        (1.0 - s) * (1.0 - t) * at(i, j)
            + s * (1.0 - t) * at(i + 1, j)
            + (1.0 - s) * t * at(i, j + 1)
            + s * t * at(i + 1, j + 1)
    }

    /// `∫ρ`, exact for the bilinear interpolant.
    pub fn mass(&self) -> f64 {
        let (dx, dy) = self.spacing();
        let mut total = 0.0;
        for j in 0..self.ny {
            let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
            for i in 0..self.nx {
                let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
                total += wx * wy * self.values[j * self.nx + i];
            }
        }
        total * dx * dy
    }

    /// Box and grid dilated by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            bounds: self.bounds.map(|b| b * s),
            ..self.clone()
        }
    }

    /// Mean of the interpolant over a triangle.
    pub fn element_mean(&self, p: [Point; 3]) -> f64 {
        let mut total = 0.0;
        sample_triangle(p, |_, x, w| total += w * self.value(x));
        total.clamp(0.0, 1.0)
    }

    /// The floored weight `w = max(ρ, eps)` where `ρ > 0`, zero elsewhere.
    pub fn floored(&self, x: Point, eps: f64) -> f64 {
        let r = self.value(x);
        if r > 0.0 {
            r.max(eps)
        } else {
            0.0
        }
    }

    /// Mean of the floored weight over a triangle and `∫ w λ_i λ_j`.
    pub fn element_moments(&self, p: [Point; 3], eps: f64) -> (f64, [[f64; 3]; 3]) {
        let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
        let mut mean = 0.0;
        let mut m = [[0.0; 3]; 3];
        sample_triangle(p, |l, x, w| {
            let v = w * self.floored(x, eps);
            mean += v;
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += v * l[i] * l[j];
                }
            }
        });
        (mean.clamp(0.0, 1.0), m.map(|row| row.map(|v| v * area)))
    }

    /// The box as a domain.
    pub fn box_domain(&self) -> Result<Domain> {
        let b = self.bounds;
        Domain::from_spec(&DomainSpec {
            label: "box".into(),
            shapes: vec![Shape::Rectangle {
                min: [b[0], b[1]],
                max: [b[2], b[3]],
            }],
        })
    }
}

/// Degree-5 rule on the 16 sub-triangles of two uniform splits; `f` gets
/// barycentrics, the point and a weight (weights sum to one).
fn sample_triangle(p: [Point; 3], mut f: impl FnMut([f64; 3], Point, f64)) {
    const N: usize = 4;
    let bary = |i: usize, j: usize| -> [f64; 3] {
        let (a, b) = (i as f64 / N as f64, j as f64 / N as f64);
        [1.0 - a - b, a, b]
    };
    let mut sub = |q: [[f64; 3]; 3]| {
        for (l, w) in triangle_rule() {
            let lam: [f64; 3] =
                std::array::from_fn(|k| l[0] * q[0][k] + l[1] * q[1][k] + l[2] * q[2][k]);
            let x = [
                lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
                lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
            ];
            f(lam, x, w / (N * N) as f64);
        }
    };
    for i in 0..N {
        for j in 0..N - i {
            sub([bary(i, j), bary(i + 1, j), bary(i, j + 1)]);
            if i + j + 1 < N {
                sub([bary(i + 1, j), bary(i + 1, j + 1), bary(i, j + 1)]);
            }
        }
    }
}

/// Eigenvalues at a fixed `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub mu_tilde: Vec<f64>,
}

pub const EPS_SWEEP: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityOptions {
    pub eps_floor: f64,
    /// Extra floors solved for the stability report.
    pub eps_sweep: Vec<f64>,
    pub eigen: EigenOptions,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            eps_floor: 1e-4,
            eps_sweep: EPS_SWEEP.to_vec(),
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedResult {
    pub mu_tilde: Vec<f64>,
    pub eps_floor: f64,
    pub eps_sweep: Vec<SweepPoint>,
    /// Support mesh (elements with positive mean density).
    pub mesh: Arc<Mesh>,
    /// Element means of the floored weight at `eps_floor`.
    pub weights: Vec<f64>,
    pub spectrum: SpectralResult,
}

/// Elements of `mesh` with positive mean density, renumbered.
pub fn support_mesh(rho: &Density, mesh: &Mesh) -> Result<Mesh> {
    let keep: Vec<[usize; 3]> = (0..mesh.num_triangles())
        .filter(|&t| rho.element_mean(mesh.corners(t)) > 0.0)
        .map(|t| mesh.triangles[t])
        .collect();
    if keep.is_empty() {
        return Err(Error::Density("no element carries mass".into()));
    }
    let mut index = vec![usize::MAX; mesh.num_vertices()];
    let mut vertices = Vec::new();
    let triangles = keep
        .iter()
        .map(|t| {
            t.map(|v| {
                if index[v] == usize::MAX {
                    index[v] = vertices.len();
                    vertices.push(mesh.vertices[v]);
                }
                index[v]
            })
        })
        .collect();
    Mesh::from_parts(vertices, triangles)
}

/// Weighted forms for the floored density on `mesh`.
pub fn density_forms(rho: &Density, mesh: &Arc<Mesh>, eps: f64) -> Result<BilinearForms> {
    let (mean, moments): (Vec<f64>, Vec<_>) = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| rho.element_moments(mesh.corners(t), eps))
        .unzip();
    assemble_moments(mesh, &mean, &moments, eps)
}

fn relaxed_on(
    rho: &Density,
    support: &Arc<Mesh>,
    count: usize,
    opts: &DensityOptions,
) -> Result<RelaxedResult> {
    let eps_floor = opts.eps_floor;
    if !(eps_floor > 0.0) || opts.eps_sweep.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::OutOfRange(format!(
            "eps_floor {eps_floor} must be positive"
        )));
    }
    let solve = |eps: f64| -> Result<SpectralResult> {
        solve_eigs_with(&density_forms(rho, support, eps)?, count, &opts.eigen)
    };
    let forms = density_forms(rho, support, eps_floor)?;
    let spectrum = solve_eigs_with(&forms, count, &opts.eigen)?;
    let pieces = crate::eigen::vertex_components(support).0;
    if pieces > 1 {
        warn!("density support splits into {pieces} pieces; each adds a zero eigenvalue");
    }
    let mut eps_sweep = Vec::new();
    for &eps in &opts.eps_sweep {
        let mu_tilde = if eps == eps_floor {
            spectrum.eigenvalues.clone()
        } else {
            solve(eps)?.eigenvalues
        };
        eps_sweep.push(SweepPoint { eps, mu_tilde });
    }
    Ok(RelaxedResult {
        mu_tilde: spectrum.eigenvalues.clone(),
        eps_floor,
        eps_sweep,
        mesh: Arc::clone(support),
        weights: forms.weight.as_deref().cloned().unwrap_or_default(),
        spectrum,
    })
}

/// `μ̃_0 … μ̃_{count-1}` on the box meshed at `h`.
pub fn relaxed_eigs(rho: &Density, h: f64, count: usize, eps_floor: f64) -> Result<RelaxedResult> {
    let mesh = triangulate(&rho.box_domain()?, h)?;
    relaxed_eigs_on(
        rho,
        &mesh,
        count,
        &DensityOptions {
            eps_floor,
            ..Default::default()
        },
    )
}

/// As [`relaxed_eigs`] on a given box mesh.
pub fn relaxed_eigs_on(
    rho: &Density,
    mesh: &Mesh,
    count: usize,
    opts: &DensityOptions,
) -> Result<RelaxedResult> {
    relaxed_on(rho, &Arc::new(support_mesh(rho, mesh)?), count, opts)
}

/// One inequality `mass^{2/N} μ̃_k ≤ μ_k*` with its tolerance budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub k: usize,
    pub mu_tilde: f64,
    pub product: f64,
    pub mu_star: f64,
    /// Relative: grid + FEM + eps.
    pub budget: f64,
    /// `μ_k*(1 + budget) − product`; non-negative means pass.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub mass: f64,
    pub levels: Vec<Vec<f64>>,
    pub checks: Vec<BoundCheck>,
}

/// Check both scale-invariant inequalities on `levels` nested meshes
/// starting at `h`. With three or more levels the eigenvalues are
/// extrapolated when the sequence allows it, otherwise the finest value
/// is used.
pub fn verify_density_bounds(rho: &Density, h: f64, levels: usize) -> Result<DensityReport> {
    verify_density_bounds_with(rho, h, levels, &DensityOptions::default())
}

pub fn verify_density_bounds_with(
    rho: &Density,
    h: f64,
    levels: usize,
    opts: &DensityOptions,
) -> Result<DensityReport> {
    if levels == 0 {
        return Err(Error::OutOfRange("need at least one level".into()));
    }
    let mut mesh = Arc::new(triangulate(&rho.box_domain()?, h)?);
    let mut runs = Vec::new();
    for level in 0..levels {
        if level > 0 {
            mesh = Arc::new(mesh.refine(false)?);
        }
        runs.push(relaxed_eigs_on(rho, &mesh, 3, opts)?);
    }
    let mass = rho.mass();
    let (dx, dy) = rho.spacing();
    // the interpolated boundary of an indicator is a one-cell ramp
    let grid = 2.0 * dx.max(dy) / mass.sqrt();
    let finest = runs.last().expect("at least one level");
    // absolute spreads, made relative to μ_k* so near-zero μ̃ stay harmless
    let eps_spread = |k: usize| {
        let vals = finest.eps_sweep.iter().map(|s| s.mu_tilde[k]);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    };
    let mut checks = Vec::new();
    for k in [1usize, 2] {
        let star = mu_star(2, k as u8)?;
        let seq: Vec<f64> = runs.iter().map(|r| r.mu_tilde[k]).collect();
        let n = seq.len();
        let (value, fem) = match (n >= 3).then(|| richardson(&seq)).and_then(|r| r.ok()) {
            Some(e) => (e.estimate, (e.estimate - seq[n - 1]).abs()),
            None if n >= 2 => (seq[n - 1], (seq[n - 2] - seq[n - 1]).abs()),
            None => (seq[0], 0.0),
        };
        let budget = grid + mass * (fem + eps_spread(k)) / star;
        let product = mass * value;
        let margin = star * (1.0 + budget) - product;
        checks.push(BoundCheck {
            k,
            mu_tilde: value,
            product,
            mu_star: star,
            budget,
            margin,
            pass: margin >= 0.0,
        });
    }
    Ok(DensityReport {
        mass,
        levels: runs.iter().map(|r| r.mu_tilde.clone()).collect(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square_indicator(n: usize) -> Density {
        Density::from_fn(n, n, [-1.0, -1.0, 2.0, 2.0], |x| {
            if (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1]) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn unit_square_mass() {
        // nodes on the square's edges carry 1, adding a half-cell rim
        let rho = square_indicator(301);
        let cell = 0.01;
        assert!((rho.mass() - (1.0 + cell) * (1.0 + cell)).abs() < 1e-12);
    }

    #[test]
    fn half_density_mass_and_text_round_trip() {
        let rho = Density::from_fn(11, 21, [0.0, 0.0, 1.0, 1.0], |_| 0.5).unwrap();
        assert!((rho.mass() - 0.5).abs() < 1e-14);
        let back = Density::parse(&rho.to_text()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn two_disc_mass() {
        let r = (0.5 / PI).sqrt();
        let rho = Density::from_fn(401, 201, [-1.0, -0.5, 1.0, 0.5], |x| {
            let a = (x[0] + 0.5).hypot(x[1]) <= r;
            let b = (x[0] - 0.5).hypot(x[1]) <= r;
            if a || b {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!((rho.mass() - 1.0).abs() < 0.02, "{}", rho.mass());
    }

    #[test]
    fn bilinear_value_and_bad_files() {
        let rho = Density::parse("2 2 0 0 1 1\n0 1\n0.5 1").unwrap();
        assert!((rho.value([0.5, 0.5]) - 0.625).abs() < 1e-15);
        assert_eq!(rho.value([2.0, 0.5]), 0.0);
        assert!(matches!(
            Density::parse("2 2 0 0 1 1\n0 1\n0.5 1.5"),
            Err(Error::Density(_))
        ));
        assert!(matches!(
            Density::parse("2 2 0 0 1 1\n0 0\n0 0"),
            Err(Error::Density(_))
        ));
        assert!(matches!(
            Density::parse("2 2 0 0 1 1\n0 1\n0.5"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            Density::parse("2 2 0 0 1 1\n0 1 x 1"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn element_mean_is_exact_for_affine_data() {
        let rho = Density::from_fn(5, 5, [0.0, 0.0, 4.0, 4.0], |x| {
            0.1 + 0.1 * x[0] + 0.05 * x[1]
        })
        .unwrap();
        let p = [[0.3, 0.2], [2.9, 0.7], [1.1, 3.4]];
        let c = [(0.3 + 2.9 + 1.1) / 3.0, (0.2 + 0.7 + 3.4) / 3.0];
        assert!((rho.element_mean(p) - (0.1 + 0.1 * c[0] + 0.05 * c[1])).abs() < 1e-14);
    }

    #[test]
    fn constant_scaling_cancels() {
        let a = square_indicator(61);
        let b = Density::from_fn(61, 61, [-1.0, -1.0, 2.0, 2.0], |x| 0.5 * a.value(x)).unwrap();
        let mesh = triangulate(&a.box_domain().unwrap(), 0.1).unwrap();
        let opts = DensityOptions {
            eps_floor: 1e-6,
            ..Default::default()
        };
        let ra = relaxed_eigs_on(&a, &mesh, 4, &opts).unwrap();
        let rb = relaxed_eigs_on(&b, &mesh, 4, &opts).unwrap();
        for k in 1..4 {
            assert!(
                (ra.mu_tilde[k] - rb.mu_tilde[k]).abs() < 1e-9 * ra.mu_tilde[k],
                "{k}"
            );
        }
    }

    #[test]
    fn scaling_law() {
        let rho = Density::from_fn(41, 41, [-1.0, -1.0, 1.0, 1.0], |x| {
            (1.0 - x[0].hypot(x[1])).max(0.0)
        })
        .unwrap();
        let mesh = triangulate(&rho.box_domain().unwrap(), 0.1).unwrap();
        let opts = DensityOptions::default();
        let base = relaxed_eigs_on(&rho, &mesh, 3, &opts).unwrap();
        for s in [0.5, 2.0] {
            let r = relaxed_eigs_on(&rho.scaled(s), &mesh.scaled(s), 3, &opts).unwrap();
            assert!((rho.scaled(s).mass() - s * s * rho.mass()).abs() < 1e-12);
            for k in 1..3 {
                let a = rho.mass() * base.mu_tilde[k];
                let b = rho.scaled(s).mass() * r.mu_tilde[k];
                assert!((a - b).abs() < 1e-10 * a, "s={s} k={k}: {a} vs {b}");
            }
        }
    }

    fn bump() -> Density {
        Density::from_fn(61, 61, [-1.0, -1.0, 1.0, 1.0], |x| {
            (1.0 - x[0].hypot(x[1])).max(0.0)
        })
        .unwrap()
    }

    #[test]
    fn nested_refinement_never_increases() {
        let rho = bump();
        let coarse = Arc::new(triangulate(&rho.box_domain().unwrap(), 0.12).unwrap());
        let fine = coarse.refine(false).unwrap();
        let opts = DensityOptions::default();
        let a = relaxed_eigs_on(&rho, &coarse, 5, &opts).unwrap();
        let b = relaxed_eigs_on(&rho, &fine, 5, &opts).unwrap();
        for k in 1..5 {
            assert!(
                b.mu_tilde[k] <= a.mu_tilde[k],
                "k={k}: {} > {}",
                b.mu_tilde[k],
                a.mu_tilde[k]
            );
        }
    }

    #[test]
    fn eps_sweep_is_reported() {
        let rho = bump();
        let r = relaxed_eigs(&rho, 0.12, 3, 1e-4).unwrap();
        let eps: Vec<f64> = r.eps_sweep.iter().map(|s| s.eps).collect();
        assert_eq!(eps, EPS_SWEEP);
        assert_eq!(r.eps_sweep[1].mu_tilde, r.mu_tilde);
        assert_eq!(r.weights.len(), r.mesh.num_triangles());
        // the bump exceeds eps except on a thin rim, so the floor barely matters
        for s in &r.eps_sweep {
            assert!((s.mu_tilde[1] - r.mu_tilde[1]).abs() < 1e-3 * r.mu_tilde[1]);
        }
        // the floor only adds weight, so lowering it moves μ̃ up, by
        // geometrically shrinking amounts
        for k in 1..3 {
            let v: Vec<f64> = r.eps_sweep.iter().map(|s| s.mu_tilde[k]).collect();
            assert!(v[0] <= v[1] && v[1] <= v[2], "k={k}: {v:?}");
            assert!(v[2] - v[1] < 0.1 * (v[1] - v[0]), "k={k}: {v:?}");
        }
        assert!(relaxed_eigs(&rho, 0.12, 3, 0.0).is_err());
    }
}
