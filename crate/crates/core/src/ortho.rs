//! Frames `(A, B)` whose glued field is orthogonal to constants and `u1`.
//!
//! Roots of the four-dimensional system are found two ways: continuation
//! from the two explicit zeros of an auxiliary map built on far-away
//! reference discs, and damped Newton from half-domain barycenters. Both
//! work on a copy of the mesh moved into the unit disc.

use crate::domain::{equivalent_radii, Point};
use crate::error::{Error, Result};
use crate::fields::{ortho_residual, ortho_residual_with, OrthoResidual, TestFieldFrame};
use crate::mesh::Mesh;
use crate::quadrature::{integrate_mesh, QuadOptions};
use crate::radial::{unit_ball_volume, RadialProfile};
use faer::linalg::solvers::Solve;
use faer::Mat;
use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Half-width of the search box in normalized coordinates.
    pub box_m: f64,
    /// Diagonal exclusion radius as a fraction of the diameter.
    pub delta_sep: f64,
    /// Accept `‖F‖_∞ ≤ tol_orth · g(r_half) · |Ω|`.
    pub tol_orth: f64,
    pub max_newton: usize,
    /// Continuation step bounds (arclength in normalized `(A, B, t)`).
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Central-difference step as a fraction of the diameter.
    pub fd_step: f64,
    /// Crossed sub-triangles are not split below this fraction of `|Ω|`
    /// while searching. Certification always uses the accurate rule.
    pub search_area: f64,
    /// Random seeds added to the eight barycenter seeds.
    pub extra_seeds: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            box_m: 20.0,
            delta_sep: 1e-2,
            tol_orth: 1e-6,
            max_newton: 40,
            min_step: 1e-4,
            max_step: 0.3,
            max_steps: 400,
            fd_step: 1e-6,
            search_area: 1e-7,
            extra_seeds: 2,
            seed: 0x5eed,
        }
    }
}

/// Centers of the two reference discs and their radius, in normalized
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyAnchors {
    pub xstar: Point,
    pub xsharp: Point,
    pub rref: f64,
}

impl HomotopyAnchors {
    pub fn new(direction: [f64; 2], rref: f64) -> Result<Self> {
        let n = direction[0].hypot(direction[1]);
        if !(n > 0.0) {
            return Err(Error::ZeroNorm("anchor direction".into()));
        }
        if !(rref > 0.0 && rref <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "reference radius {rref} not in (0, 1]"
            )));
        }
        let c = 3.0 * 2f64.sqrt() / n;
        Ok(Self {
            xstar: [c * direction[0], c * direction[1]],
            xsharp: [-c * direction[0], -c * direction[1]],
            rref,
        })
    }
}

/// Diagonal of the Jacobian of the anchor map at `(X♯, X*)`: every entry
/// is `−ω_N R^N h(R)` with `h = G/r`, except entry `N+1`, which has the
/// opposite sign.
pub fn jacobian_reference(radius: f64, profile: &RadialProfile) -> Vec<f64> {
    let n = profile.dim();
    let c = unit_ball_volume(n) * radius.powi(n as i32) * profile.ratio(radius);
    (0..2 * n).map(|i| if i == n { c } else { -c }).collect()
}

/// `(F_const, F_u1)` at `(A, B)` as in [`ortho_residual`], with the
/// diagonal exclusion enforced.
pub fn residual_f(
    a: Point,
    b: Point,
    mesh: &Mesh,
    weight: Option<&[f64]>,
    u1: Option<&[f64]>,
    profile: &RadialProfile,
    delta_sep: f64,
) -> Result<OrthoResidual> {
    let frame = TestFieldFrame::new(a, b, *profile, delta_sep)?;
    ortho_residual(&frame, mesh, weight, u1)
}

fn weighted_moments(mesh: &Mesh, weight: Option<&[f64]>) -> (f64, Point) {
    let mut mass = 0.0;
    let mut c = [0.0, 0.0];
    for t in 0..mesh.num_triangles() {
        let w = weight.map_or(1.0, |w| w[t]) * mesh.area_of(t);
        let p = mesh.corners(t);
        mass += w;
        for k in 0..2 {
            c[k] += w * (p[0][k] + p[1][k] + p[2][k]) / 3.0;
        }
    }
    (mass, [c[0] / mass, c[1] / mass])
}

/// Dense `n × n` solve; `None` when singular or non-finite.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let m = Mat::from_fn(n, n, |i, j| a[i][j]);
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Central-difference Jacobian, rows = outputs.
fn fd_jacobian<F>(f: &F, x: &[f64], step: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let (fp, fm) = (f(&xp)?, f(&xm)?);
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(p, m)| (p - m) / (2.0 * step))
                .collect::<Vec<f64>>(),
        );
    }
    let rows = cols[0].len();
    Ok((0..rows)
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Point where `∫ w g_A = 0`, by damped Newton from the weighted barycenter.
pub fn weinberger_center(
    mesh: &Mesh,
    weight: Option<&[f64]>,
    profile: &RadialProfile,
    config: &SolverConfig,
) -> Result<Point> {
    let (mass, bary) = weighted_moments(mesh, weight);
    if !(mass > 0.0) {
        return Err(Error::ZeroNorm("total weight".into()));
    }
    let opts = QuadOptions {
        min_area: 0.0,
        estimate_error: false,
    };
    let map = |a: &[f64]| -> Result<Vec<f64>> {
        let frame = TestFieldFrame::b_at_infinity([a[0], a[1]], [1.0, 0.0], *profile)?;
        let r = ortho_residual_with(&frame, mesh, weight, None, &opts)?;
        Ok(r.const_defects.to_vec())
    };
    let tol = config.tol_orth * profile.g_at_radius() * mass;
    let step = config.fd_step * mesh.diameter();
    let (x, res) = damped_newton(
        &map,
        bary.to_vec(),
        1e-3 * tol,
        config.max_newton,
        step,
        &|_| true,
    )?;
    if res > tol {
        return Err(Error::Stalled {
            what: "Weinberger center".into(),
            residual: res,
        });
    }
    Ok([x[0], x[1]])
}

/// Damped Newton with backtracking on `‖f‖_∞`. Returns the last iterate
/// and its residual; stops early when the residual stops decreasing.
fn damped_newton<F, A>(
    f: &F,
    mut x: Vec<f64>,
    target: f64,
    max_iter: usize,
    fd: f64,
    admissible: &A,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    A: Fn(&[f64]) -> bool,
{
    let mut fx = f(&x)?;
    let mut res = max_abs(&fx);
    for _ in 0..max_iter {
        if res <= target {
            break;
        }
        let jac = fd_jacobian(f, &x, fd)?;
        let rhs: Vec<f64> = fx.iter().map(|v| -v).collect();
        let Some(dx) = solve_dense(&jac, &rhs) else {
            break;
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 256.0 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            if admissible(&trial) {
                let ft = f(&trial)?;
                let rt = max_abs(&ft);
                if rt < (1.0 - 1e-4 * lambda) * res {
                    x = trial;
                    fx = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((x, res))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSource {
    Homotopy,
    Multistart,
    Swap,
}

/// An accepted root, in the coordinates of the input mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub a: Point,
    pub b: Point,
    /// Accurate residual with `u1` scaled to unit mean square.
    pub residual: OrthoResidual,
    /// `‖F‖_∞ / (g(r_half) |Ω|)`.
    pub relative_residual: f64,
    pub source: RootSource,
}

/// The root-finding problem on a mesh moved into the unit disc.
#[derive(Debug, Clone)]
pub struct OrthoProblem {
    mesh: Mesh,
    weight: Option<Vec<f64>>,
    u1: Option<Vec<f64>>,
    profile: RadialProfile,
    center: Point,
    scale: f64,
    mass: f64,
    diameter: f64,
    delta: f64,
    config: SolverConfig,
}

impl OrthoProblem {
    /// `u1` is rescaled to unit weighted mean square; its sign and the
    /// root set are unaffected.
    pub fn new(
        mesh: &Mesh,
        weight: Option<&[f64]>,
        u1: Option<&[f64]>,
        config: &SolverConfig,
    ) -> Result<Self> {
        if weight.is_some_and(|w| w.len() != mesh.num_triangles()) {
            return Err(Error::Domain(
                "weight length differs from the triangle count".into(),
            ));
        }
        if u1.is_some_and(|u| u.len() != mesh.num_vertices()) {
            return Err(Error::Domain(
                "u1 length differs from the vertex count".into(),
            ));
        }
        let (mass, center) = weighted_moments(mesh, weight);
        if !(mass > 0.0) {
            return Err(Error::ZeroNorm("total weight".into()));
        }
        let scale = mesh
            .vertices
            .iter()
            .map(|v| (v[0] - center[0]).hypot(v[1] - center[1]))
            .fold(0.0, f64::max);
        let vertices = mesh
            .vertices
            .iter()
            .map(|v| [(v[0] - center[0]) / scale, (v[1] - center[1]) / scale])
            .collect();
        let normalized = Mesh::from_parts(vertices, mesh.triangles.clone())?;
        let mass_n = mass / (scale * scale);
        let u1 = match u1 {
            Some(u) => {
                let opts = QuadOptions {
                    min_area: 0.0,
                    estimate_error: false,
                };
                let sq = integrate_mesh(&normalized, None, &opts, |t, l, _| {
                    let v = normalized.triangles[t];
                    let x = l[0] * u[v[0]] + l[1] * u[v[1]] + l[2] * u[v[2]];
                    [weight.map_or(1.0, |w| w[t]) * x * x]
                });
                if !(sq.value[0] > 0.0) {
                    return Err(Error::ZeroNorm("u1".into()));
                }
                let f = (mass_n / sq.value[0]).sqrt();
                Some(u.iter().map(|x| x * f).collect())
            }
            None => None,
        };
        let profile = RadialProfile::new(2, equivalent_radii(mass_n, 2).r_half)?;
        let diameter = normalized.diameter();
        Ok(Self {
            delta: config.delta_sep * diameter,
            mesh: normalized,
            weight: weight.map(<[f64]>::to_vec),
            u1,
            profile,
            center,
            scale,
            mass: mass_n,
            diameter,
            config: config.clone(),
        })
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn to_original(&self, p: Point) -> Point {
        [
            self.center[0] + self.scale * p[0],
            self.center[1] + self.scale * p[1],
        ]
    }

    pub fn to_normalized(&self, p: Point) -> Point {
        [
            (p[0] - self.center[0]) / self.scale,
            (p[1] - self.center[1]) / self.scale,
        ]
    }

    /// `g(r_half) |Ω|`, the natural size of every residual entry.
    pub fn residual_scale(&self) -> f64 {
        self.profile.g_at_radius() * self.mass
    }

    pub fn anchors(&self, direction: [f64; 2]) -> Result<HomotopyAnchors> {
        HomotopyAnchors::new(direction, self.profile.radius().min(1.0))
    }

    fn frame(&self, z: &[f64]) -> Result<TestFieldFrame> {
        TestFieldFrame::new([z[0], z[1]], [z[2], z[3]], self.profile, self.delta)
    }

    fn admissible(&self, z: &[f64]) -> bool {
        z[..4].iter().all(|v| v.abs() <= self.config.box_m)
            && (z[0] - z[2]).hypot(z[1] - z[3]) >= self.delta
    }

    fn search_options(&self) -> QuadOptions {
        QuadOptions {
            min_area: self.config.search_area * self.mass,
            estimate_error: false,
        }
    }

    fn fd(&self) -> f64 {
        self.config.fd_step * self.diameter
    }

    /// `F` with the cheaper search quadrature.
    pub fn f_search(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = ortho_residual_with(
            &self.frame(z)?,
            &self.mesh,
            self.weight.as_deref(),
            self.u1.as_deref(),
            &self.search_options(),
        )?;
        Ok(r.as_vector().to_vec())
    }

    /// `G_t`: the constant block slides from `Ω` to `B♯`; the second block
    /// is always the integral over `B*`.
    pub fn g_map(&self, anchors: &HomotopyAnchors, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let frame = self.frame(z)?;
        let sharp = frame.disc_integral(anchors.xsharp, anchors.rref);
        let star = frame.disc_integral(anchors.xstar, anchors.rref);
        let omega = if t < 1.0 {
            ortho_residual_with(
                &frame,
                &self.mesh,
                self.weight.as_deref(),
                None,
                &self.search_options(),
            )?
            .const_defects
        } else {
            [0.0; 2]
        };
        Ok(vec![
            (1.0 - t) * omega[0] + t * sharp[0],
            (1.0 - t) * omega[1] + t * sharp[1],
            star[0],
            star[1],
        ])
    }

    /// `F_t`: the `u1` block slides from `B*` to `Ω`.
    pub fn f_map(&self, anchors: &HomotopyAnchors, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let frame = self.frame(z)?;
        let r = ortho_residual_with(
            &frame,
            &self.mesh,
            self.weight.as_deref(),
            self.u1.as_deref(),
            &self.search_options(),
        )?;
        let star = if t > 0.0 {
            frame.disc_integral(anchors.xstar, anchors.rref)
        } else {
            [0.0; 2]
        };
        Ok(vec![
            r.const_defects[0],
            r.const_defects[1],
            (1.0 - t) * r.u1_defects[0] + t * star[0],
            (1.0 - t) * r.u1_defects[1] + t * star[1],
        ])
    }

    /// Accurate residual at a normalized `z`, in original coordinates.
    /// The search and accurate rules differ slightly, so up to two
    /// defect-correction steps (search Jacobian, accurate residual) are
    /// taken first.
    fn certify(&self, z: &[f64], source: RootSource) -> Result<Option<Frame>> {
        let accurate = |z: &[f64]| -> Result<OrthoResidual> {
            ortho_residual(
                &self.frame(z)?,
                &self.mesh,
                self.weight.as_deref(),
                self.u1.as_deref(),
            )
        };
        let mut z = z.to_vec();
        let mut r = accurate(&z)?;
        for _ in 0..2 {
            if r.max_abs() <= 1e-2 * self.config.tol_orth * self.residual_scale() {
                break;
            }
            let f = |x: &[f64]| self.f_search(x);
            let jac = fd_jacobian(&f, &z, self.fd())?;
            let rhs: Vec<f64> = r.as_vector().iter().map(|v| -v).collect();
            let Some(dz) = solve_dense(&jac, &rhs) else {
                break;
            };
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + d).collect();
            if !self.admissible(&trial) {
                break;
            }
            let rt = accurate(&trial)?;
            if rt.max_abs() >= r.max_abs() {
                break;
            }
            z = trial;
            r = rt;
        }
        let relative = r.max_abs() / self.residual_scale();
        let s2 = self.scale * self.scale;
        let frame = Frame {
            a: self.to_original([z[0], z[1]]),
            b: self.to_original([z[2], z[3]]),
            residual: OrthoResidual {
                const_defects: r.const_defects.map(|v| v * s2),
                u1_defects: r.u1_defects.map(|v| v * s2),
                quad_error: r.quad_error * s2,
            },
            relative_residual: relative,
            source,
        };
        Ok((relative <= self.config.tol_orth && self.admissible(&z)).then_some(frame))
    }

    /// Newton on the search residual; `None` when it stalls above the
    /// tolerance.
    fn polish(&self, z: Vec<f64>) -> Result<Option<Vec<f64>>> {
        let target = 1e-3 * self.config.tol_orth * self.residual_scale();
        let f = |x: &[f64]| self.f_search(x);
        let (x, res) = damped_newton(&f, z, target, self.config.max_newton, self.fd(), &|x| {
            self.admissible(x)
        })?;
        Ok((res <= self.config.tol_orth * self.residual_scale()).then_some(x))
    }

    /// Pseudo-arclength continuation of `h(z, t) = 0` from `(z0, 1)` to
    /// `t = 0`.
    fn track<H>(&self, h: &H, z0: &[f64]) -> Result<Vec<f64>>
    where
        H: Fn(&[f64], f64) -> Result<Vec<f64>>,
    {
        let hy = |y: &[f64]| h(&y[..4], y[4]);
        let fd = self.fd();
        let tol = 1e-7 * self.residual_scale();
        let tangent = |jac: &[Vec<f64>], prev: Option<&[f64]>| -> Result<Vec<f64>> {
            let mut a = jac.to_vec();
            let mut b = vec![0.0; 5];
            match prev {
                Some(p) => {
                    a.push(p.to_vec());
                    b[4] = 1.0;
                }
                None => {
                    a.push(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
                    b[4] = -1.0;
                }
            }
            let v = solve_dense(&a, &b)
                .ok_or_else(|| Error::PathFailure("singular tangent system".into()))?;
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Ok(v.iter().map(|x| x / n).collect())
        };

        let mut y: Vec<f64> = z0.iter().copied().chain([1.0]).collect();
        let jac = fd_jacobian(&hy, &y, fd)?;
        let mut tau = tangent(&jac, None)?;
        let mut step = 0.25 * self.config.max_step;
        for _ in 0..self.config.max_steps {
            let mut pred: Vec<f64> = y.iter().zip(&tau).map(|(a, d)| a + step * d).collect();
            let finishing = pred[4] <= 0.0;
            if finishing {
                let s = -y[4] / tau[4];
                pred = y.iter().zip(&tau).map(|(a, d)| a + s * d).collect();
                pred[4] = 0.0;
            }
            let outcome = if self.admissible(&pred) {
                let jp = fd_jacobian(&hy, &pred, fd)?;
                self.correct(&hy, &pred, &jp, &tau, finishing, tol, step)
                    .map(|r| r.map(|(yn, it)| (yn, it, jp)))
            } else {
                Ok(None)
            };
            match outcome? {
                Some((yn, iterations, jp)) => {
                    y = yn;
                    if finishing {
                        return Ok(y[..4].to_vec());
                    }
                    tau = tangent(&jp, Some(&tau))?;
                    if iterations <= 3 {
                        step = (1.5 * step).min(self.config.max_step);
                    }
                }
                None => {
                    step *= 0.5;
                    if step < self.config.min_step {
                        return Err(Error::PathFailure(format!(
                            "step underflow at t = {:.4}",
                            y[4]
                        )));
                    }
                }
            }
        }
        Err(Error::PathFailure(format!(
            "no arrival after {} steps",
            self.config.max_steps
        )))
    }

    /// Chord-Newton corrector on the hyperplane orthogonal to `tau`
    /// through `pred` (or on `t = 0` when finishing).
    #[allow(clippy::too_many_arguments)]
    fn correct<F>(
        &self,
        hy: &F,
        pred: &[f64],
        jac: &[Vec<f64>],
        tau: &[f64],
        finishing: bool,
        tol: f64,
        step: f64,
    ) -> Result<Option<(Vec<f64>, usize)>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
    {
        let mut a = jac.to_vec();
        a.push(if finishing {
            vec![0.0, 0.0, 0.0, 0.0, 1.0]
        } else {
            tau.to_vec()
        });
        let mut y = pred.to_vec();
        let mut last = f64::INFINITY;
        for it in 0..8 {
            let r = hy(&y)?;
            let res = max_abs(&r);
            if res <= tol {
                let moved = y
                    .iter()
                    .zip(pred)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                return Ok((moved <= step && self.admissible(&y)).then_some((y, it)));
            }
            if res > 0.5 * last && it > 1 {
                return Ok(None);
            }
            last = res;
            let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            rhs.push(0.0);
            let Some(d) = solve_dense(&a, &rhs) else {
                return Ok(None);
            };
            for (v, dv) in y.iter_mut().zip(&d) {
                *v += dv;
            }
            if finishing {
                y[4] = 0.0;
            }
            if !self.admissible(&y) {
                return Ok(None);
            }
        }
        Ok(None)
    }

    /// Track both paths leaving the zeros of the anchor map. Paths that
    /// fail are reported, not raised.
    pub fn homotopy_solve(&self, anchors: &HomotopyAnchors) -> Result<HomotopyOutcome> {
        let starts = [
            [
                anchors.xstar[0],
                anchors.xstar[1],
                anchors.xsharp[0],
                anchors.xsharp[1],
            ],
            [
                anchors.xsharp[0],
                anchors.xsharp[1],
                anchors.xstar[0],
                anchors.xstar[1],
            ],
        ];
        for s in &starts {
            let r = max_abs(&self.g_map(anchors, s, 1.0)?);
            if r > self.config.tol_orth * self.residual_scale() {
                return Err(Error::PathFailure(format!(
                    "anchor residual {r:e} above tolerance"
                )));
            }
        }
        let paths: Vec<Result<Option<Frame>>> = starts
            .par_iter()
            .map(|s| {
                let g = |z: &[f64], t: f64| self.g_map(anchors, z, t);
                let mid = self.track(&g, s)?;
                debug!("first stage ended at {mid:?}");
                let f = |z: &[f64], t: f64| self.f_map(anchors, z, t);
                let end = self.track(&f, &mid)?;
                match self.polish(end)? {
                    Some(z) => self.certify(&z, RootSource::Homotopy),
                    None => Err(Error::PathFailure(
                        "end point did not polish to tolerance".into(),
                    )),
                }
            })
            .collect();
        let mut out = HomotopyOutcome::default();
        for p in paths {
            match p {
                Ok(Some(f)) => out.frames.push(f),
                Ok(None) => out.failures.push("end point failed certification".into()),
                Err(e) => out.failures.push(e.to_string()),
            }
        }
        Ok(out)
    }

    /// Half-domain barycenter pairs along eight directions plus
    /// `extra_seeds` jittered copies, in original coordinates.
    pub fn default_seeds(&self) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        for k in 0..8 {
            let th = k as f64 * std::f64::consts::FRAC_PI_4;
            let n = [th.cos(), th.sin()];
            let mut acc = [[0.0; 3]; 2];
            for t in 0..self.mesh.num_triangles() {
                let p = self.mesh.corners(t);
                let c = [
                    (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                    (p[0][1] + p[1][1] + p[2][1]) / 3.0,
                ];
                let w = self.weight.as_ref().map_or(1.0, |w| w[t]) * self.mesh.area_of(t);
                let side = usize::from(c[0] * n[0] + c[1] * n[1] > 0.0);
                acc[side][0] += w * c[0];
                acc[side][1] += w * c[1];
                acc[side][2] += w;
            }
            if acc[0][2] > 0.0 && acc[1][2] > 0.0 {
                let a = [acc[0][0] / acc[0][2], acc[0][1] / acc[0][2]];
                let b = [acc[1][0] / acc[1][2], acc[1][1] / acc[1][2]];
                out.push((self.to_original(a), self.to_original(b)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let base = out.clone();
        for i in 0..self.config.extra_seeds.min(base.len() * 4) {
            let (a, b) = base[i % base.len()];
            let mut jitter = |p: Point| {
                [
                    p[0] + 0.1 * self.scale * rng.random_range(-1.0..1.0),
                    p[1] + 0.1 * self.scale * rng.random_range(-1.0..1.0),
                ]
            };
            out.push((jitter(a), jitter(b)));
        }
        out
    }

    /// Damped Newton from each seed (original coordinates). Seeds inside
    /// the diagonal exclusion are an error.
    pub fn newton_multistart(&self, seeds: &[(Point, Point)]) -> Result<Vec<Frame>> {
        let starts: Vec<Vec<f64>> = seeds
            .iter()
            .map(|(a, b)| {
                let (a, b) = (self.to_normalized(*a), self.to_normalized(*b));
                let z = vec![a[0], a[1], b[0], b[1]];
                if (z[0] - z[2]).hypot(z[1] - z[3]) < self.delta {
                    Err(Error::DiagonalExclusion(format!("seed {a:?}, {b:?}")))
                } else {
                    Ok(z)
                }
            })
            .collect::<Result<_>>()?;
        let found: Vec<Result<Option<Vec<f64>>>> =
            starts.into_par_iter().map(|z| self.polish(z)).collect();
        let mut roots: Vec<Vec<f64>> = Vec::new();
        for z in found.into_iter().filter_map(|r| r.ok().flatten()) {
            if !roots.iter().any(|r| same_root(r, &z)) {
                roots.push(z);
            }
        }
        if roots.is_empty() {
            info!("multistart found no root from {} seeds", seeds.len());
        }
        let mut out = Vec::new();
        for z in roots {
            if let Some(f) = self.certify(&z, RootSource::Multistart)? {
                out.push(f);
            }
        }
        Ok(out)
    }

    /// Continuation (with direction retries) and multistart combined,
    /// closed under swapping and de-duplicated.
    pub fn find_frames(&self) -> Result<FrameSearch> {
        let mut search = FrameSearch::default();
        for k in 0..8 {
            let th = k as f64 * std::f64::consts::FRAC_PI_4;
            let anchors = self.anchors([th.cos(), th.sin()])?;
            let outcome = self.homotopy_solve(&anchors)?;
            for f in &outcome.failures {
                warn!("continuation path (direction {k}) failed: {f}");
            }
            search.path_failures += outcome.failures.len();
            let found = !outcome.frames.is_empty();
            search.frames.extend(outcome.frames);
            if found {
                break;
            }
        }
        search
            .frames
            .extend(self.newton_multistart(&self.default_seeds())?);
        let mut swaps = Vec::new();
        for f in &search.frames {
            let (a, b) = (self.to_normalized(f.b), self.to_normalized(f.a));
            if let Some(s) = self.certify(&[a[0], a[1], b[0], b[1]], RootSource::Swap)? {
                swaps.push(s);
            }
        }
        search.frames.extend(swaps);
        let mut unique: Vec<Frame> = Vec::new();
        for f in search.frames.drain(..) {
            let z = self.key(&f);
            if !unique.iter().any(|u| same_root(&self.key(u), &z)) {
                unique.push(f);
            }
        }
        search.frames = unique;
        Ok(search)
    }

    fn key(&self, f: &Frame) -> Vec<f64> {
        let (a, b) = (self.to_normalized(f.a), self.to_normalized(f.b));
        vec![a[0], a[1], b[0], b[1]]
    }
}

fn same_root(x: &[f64], y: &[f64]) -> bool {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        < 1e-6
}

#[derive(Debug, Clone, Default)]
pub struct HomotopyOutcome {
    pub frames: Vec<Frame>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FrameSearch {
    pub frames: Vec<Frame>,
    pub path_failures: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::mesh::triangulate;

    fn mesh(json: &str, h: f64) -> Mesh {
        triangulate(&Domain::parse(json).unwrap(), h).unwrap()
    }

    const SQUARE: &str =
        r#"{"label":"sq","shapes":[{"type":"rectangle","min":[0,0],"max":[1,1]}]}"#;

    fn two_discs() -> (Mesh, Point, Point) {
        let r = (0.5 / std::f64::consts::PI).sqrt();
        let json = format!(
            r#"{{"label":"two","shapes":[{{"type":"disc","center":[-0.6,0.1],"radius":{r},"segments":256}},{{"type":"disc","center":[0.6,0.1],"radius":{r},"segments":256}}]}}"#
        );
        (mesh(&json, 0.06), [-0.6, 0.1], [0.6, 0.1])
    }

    #[test]
    fn reference_jacobian_structure() {
        for n in [2, 3] {
            let p = RadialProfile::new(n, 1.0).unwrap();
            let d = jacobian_reference(1.0, &p);
            assert_eq!(d.len(), 2 * n);
            let det: f64 = d.iter().product();
            assert!(det < 0.0);
            let c = unit_ball_volume(n) * p.g_at_radius();
            assert!((det + c.powi(2 * n as i32)).abs() < 1e-12 * c.powi(2 * n as i32));
        }
    }

    #[test]
    fn anchors_are_far_apart() {
        let a = HomotopyAnchors::new([0.0, 2.0], 0.7).unwrap();
        assert!((a.xstar[1] - 3.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.xsharp, [-a.xstar[0], -a.xstar[1]]);
        assert!(HomotopyAnchors::new([1.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn weinberger_center_of_disc() {
        let m = mesh(
            r#"{"label":"d","shapes":[{"type":"disc","center":[0.3,-0.4],"radius":0.8}]}"#,
            0.1,
        );
        let p = RadialProfile::new(2, equivalent_radii(m.area(), 2).r_big).unwrap();
        let a = weinberger_center(&m, None, &p, &SolverConfig::default()).unwrap();
        assert!((a[0] - 0.3).hypot(a[1] + 0.4) < 1e-8 * 1.6, "{a:?}");
    }

    #[test]
    fn weinberger_center_of_square_and_l() {
        let m = mesh(SQUARE, 0.1);
        let p = RadialProfile::new(2, equivalent_radii(1.0, 2).r_big).unwrap();
        let a = weinberger_center(&m, None, &p, &SolverConfig::default()).unwrap();
        assert!(
            (a[0] - 0.5).abs() < 1e-6 && (a[1] - 0.5).abs() < 1e-6,
            "{a:?}"
        );

        let l = mesh(
            r#"{"label":"L","shapes":[{"type":"polygon","outer":[[0,0],[2,0],[2,1],[1,1],[1,2],[0,2]]}]}"#,
            0.1,
        );
        let p = RadialProfile::new(2, equivalent_radii(3.0, 2).r_big).unwrap();
        let a = weinberger_center(&l, None, &p, &SolverConfig::default()).unwrap();
        assert!((a[0] - a[1]).abs() < 1e-6, "{a:?}");
    }

    #[test]
    fn residual_swap_and_linearity() {
        let m = mesh(SQUARE, 0.1);
        let u: Vec<f64> = m.vertices.iter().map(|v| v[0] - 0.5).collect();
        let u7: Vec<f64> = u.iter().map(|x| 7.0 * x).collect();
        let p = RadialProfile::new(2, 0.4).unwrap();
        let (a, b) = ([0.2, 0.3], [0.7, 0.6]);
        let r = residual_f(a, b, &m, None, Some(&u), &p, 0.01).unwrap();
        let s = residual_f(b, a, &m, None, Some(&u), &p, 0.01).unwrap();
        let r7 = residual_f(a, b, &m, None, Some(&u7), &p, 0.01).unwrap();
        let f = TestFieldFrame::new(a, b, p, 0.01).unwrap();
        let (tc, tu) = (f.reflect(r.const_defects), f.reflect(r.u1_defects));
        for i in 0..2 {
            assert!((s.const_defects[i] - tc[i]).abs() < 1e-12);
            assert!((s.u1_defects[i] - tu[i]).abs() < 1e-12);
            assert!(
                (r7.u1_defects[i] - 7.0 * r.u1_defects[i]).abs() <= 1e-14 * r7.u1_defects[i].abs()
            );
            assert_eq!(r7.const_defects[i], r.const_defects[i]);
        }
        assert!(matches!(
            residual_f(a, a, &m, None, Some(&u), &p, 0.01),
            Err(Error::DiagonalExclusion(_))
        ));
    }

    #[test]
    fn anchor_jacobian_matches_finite_differences() {
        let anchors = HomotopyAnchors::new([1.0, 0.0], 1.0).unwrap();
        let p = RadialProfile::new(2, 1.0).unwrap();
        let expected = jacobian_reference(1.0, &p);
        // the problem's own profile has radius r_half of the normalized
        // square; build the anchor map with radius 1 directly
        let g1 = |z: &[f64]| -> Vec<f64> {
            let f = TestFieldFrame::new([z[0], z[1]], [z[2], z[3]], p, 1e-3).unwrap();
            let a = f.disc_integral(anchors.xsharp, 1.0);
            let b = f.disc_integral(anchors.xstar, 1.0);
            vec![a[0], a[1], b[0], b[1]]
        };
        let z0 = [
            anchors.xsharp[0],
            anchors.xsharp[1],
            anchors.xstar[0],
            anchors.xstar[1],
        ];
        assert!(max_abs(&g1(&z0)) < 1e-13);
        for step in [1e-3, 1e-4, 1e-5] {
            for j in 0..4 {
                let mut zp = z0.to_vec();
                let mut zm = z0.to_vec();
                zp[j] += step;
                zm[j] -= step;
                let (fp, fm) = (g1(&zp), g1(&zm));
                for i in 0..4 {
                    let d = (fp[i] - fm[i]) / (2.0 * step);
                    let e = if i == j { expected[i] } else { 0.0 };
                    assert!(
                        (d - e).abs() < 1e-5 * expected[0].abs(),
                        "step {step} ({i},{j}): {d} vs {e}"
                    );
                }
            }
        }

        // at the swapped zero the same entries move to the off-diagonal
        // blocks; the determinant is unchanged in the plane
        let z1 = [
            anchors.xstar[0],
            anchors.xstar[1],
            anchors.xsharp[0],
            anchors.xsharp[1],
        ];
        assert!(max_abs(&g1(&z1)) < 1e-13);
        let f = |z: &[f64]| -> Result<Vec<f64>> { Ok(g1(z)) };
        let jac = fd_jacobian(&f, &z1, 1e-4).unwrap();
        let swapped = [
            (0, 2, expected[2]),
            (1, 3, expected[1]),
            (2, 0, expected[0]),
            (3, 1, expected[3]),
        ];
        for i in 0..4 {
            for j in 0..4 {
                let e = swapped
                    .iter()
                    .find(|s| s.0 == i && s.1 == j)
                    .map_or(0.0, |s| s.2);
                assert!(
                    (jac[i][j] - e).abs() < 1e-5 * expected[0].abs(),
                    "({i},{j}): {} vs {e}",
                    jac[i][j]
                );
            }
        }
        let m = Mat::from_fn(4, 4, |i, j| jac[i][j]);
        let det = m.determinant();
        let reference: f64 = expected.iter().product();
        assert!((det / reference - 1.0).abs() < 1e-4, "{det} vs {reference}");
    }

    #[test]
    fn two_disc_multistart_finds_centers() {
        let (m, c1, c2) = two_discs();
        let u: Vec<f64> = m.vertices.iter().map(|v| v[0].signum()).collect();
        let prob = OrthoProblem::new(&m, None, Some(&u), &SolverConfig::default()).unwrap();
        let jitter = |p: Point, s: f64| [p[0] + s * 0.03, p[1] - s * 0.02];
        let frames = prob
            .newton_multistart(&[(jitter(c1, 1.0), jitter(c2, -1.0))])
            .unwrap();
        assert_eq!(frames.len(), 1);
        let f = &frames[0];
        assert!((f.a[0] - c1[0]).hypot(f.a[1] - c1[1]) < 1e-6, "{f:?}");
        assert!((f.b[0] - c2[0]).hypot(f.b[1] - c2[1]) < 1e-6, "{f:?}");
        assert!(prob.newton_multistart(&[(c1, c1)]).is_err());
    }
}
