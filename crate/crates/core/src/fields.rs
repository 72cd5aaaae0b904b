//! Weinberger test fields and the glued two-point field `g^AB`.

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{integrate_disc, integrate_mesh, Cut, Kinks, QuadOptions};
use crate::radial::RadialProfile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Finite(Point),
    AtInfinity,
}

impl Endpoint {
    pub fn point(&self) -> Option<Point> {
        match self {
            Endpoint::Finite(p) => Some(*p),
            Endpoint::AtInfinity => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Two centers, the unit vector `ab` between them and the profile used for
/// both. At most one endpoint is at infinity; `ab` is then the stored
/// direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFieldFrame {
    a: Endpoint,
    b: Endpoint,
    ab: [f64; 2],
    profile: RadialProfile,
}

fn sub(x: Point, y: Point) -> [f64; 2] {
    [x[0] - y[0], x[1] - y[1]]
}

fn dot(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

fn unit(v: [f64; 2]) -> Result<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroNorm(format!("direction {v:?}")));
    }
    Ok([v[0] / n, v[1] / n])
}

fn check_profile(profile: &RadialProfile) -> Result<()> {
    if profile.dim() != 2 {
        return Err(Error::Domain(format!(
            "test fields are planar, got a dimension {} profile",
            profile.dim()
        )));
    }
    Ok(())
}

impl TestFieldFrame {
    /// Both centers finite and at least `delta_sep` apart.
    pub fn new(a: Point, b: Point, profile: RadialProfile, delta_sep: f64) -> Result<Self> {
        check_profile(&profile)?;
        let d = sub(b, a);
        if d[0].hypot(d[1]) < delta_sep || a == b {
            return Err(Error::DiagonalExclusion(format!(
                "|A - B| below {delta_sep}"
            )));
        }
        Ok(Self {
            a: Endpoint::Finite(a),
            b: Endpoint::Finite(b),
            ab: unit(d)?,
            profile,
        })
    }

    /// `B` sent to infinity along `direction`: the field is `g_A` everywhere.
    pub fn b_at_infinity(a: Point, direction: [f64; 2], profile: RadialProfile) -> Result<Self> {
        check_profile(&profile)?;
        Ok(Self {
            a: Endpoint::Finite(a),
            b: Endpoint::AtInfinity,
            ab: unit(direction)?,
            profile,
        })
    }

    /// `A` sent to infinity: the field is the reflected `g_B` everywhere.
    pub fn a_at_infinity(b: Point, direction: [f64; 2], profile: RadialProfile) -> Result<Self> {
        check_profile(&profile)?;
        Ok(Self {
            a: Endpoint::AtInfinity,
            b: Endpoint::Finite(b),
            ab: unit(direction)?,
            profile,
        })
    }

    pub fn a(&self) -> Endpoint {
        self.a
    }

    pub fn b(&self) -> Endpoint {
        self.b
    }

    pub fn ab(&self) -> [f64; 2] {
        self.ab
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    /// The mediator, oriented towards `B`. `None` when an endpoint is at
    /// infinity.
    pub fn mediator(&self) -> Option<Cut> {
        match (self.a, self.b) {
            (Endpoint::Finite(a), Endpoint::Finite(b)) => Some(Cut {
                point: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                normal: self.ab,
            }),
            _ => None,
        }
    }

    /// Same centers, roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            ab: [-self.ab[0], -self.ab[1]],
            profile: self.profile,
        }
    }

    /// Points on the mediator count as `A`'s side.
    pub fn side(&self, x: Point) -> Side {
        match (self.a, self.b) {
            (_, Endpoint::AtInfinity) => Side::A,
            (Endpoint::AtInfinity, _) => Side::B,
            _ => {
                if self.mediator().is_some_and(|c| c.side(x) > 0.0) {
                    Side::B
                } else {
                    Side::A
                }
            }
        }
    }

    /// The linear reflection `v − 2(ab·v) ab`.
    pub fn reflect(&self, v: [f64; 2]) -> [f64; 2] {
        let s = 2.0 * dot(self.ab, v);
        [v[0] - s * self.ab[0], v[1] - s * self.ab[1]]
    }

    /// Center of the side containing `x`.
    fn center(&self, side: Side) -> Point {
        let e = if side == Side::A { self.a } else { self.b };
        e.point().expect("side centers are finite")
    }

    /// `g^AB(x)`.
    pub fn eval(&self, x: Point) -> [f64; 2] {
        match self.side(x) {
            Side::A => eval_field_a(&self.profile, self.center(Side::A), x),
            Side::B => self.reflect(eval_field_a(&self.profile, self.center(Side::B), x)),
        }
    }

    /// `(|∇g^AB|², |g^AB|²)` at `x`, using the distance to the center of
    /// the side `x` lies on.
    pub fn energy(&self, x: Point) -> (f64, f64) {
        let c = self.center(self.side(x));
        let d = sub(x, c);
        let r = d[0].hypot(d[1]);
        let q = self.profile.ratio(r) * r;
        (self.profile.energy_density(r), q * q)
    }

    fn kinks(&self) -> Kinks {
        let rho = self.profile.radius();
        Kinks {
            cuts: self.mediator().into_iter().collect(),
            circles: [self.a, self.b]
                .iter()
                .filter_map(|e| e.point())
                .map(|p| (p, rho))
                .collect(),
        }
    }

    /// `∫ g^AB` over the disc `|x − center| < radius`.
    pub fn disc_integral(&self, center: Point, radius: f64) -> [f64; 2] {
        integrate_disc(center, radius, &self.kinks(), |x| self.eval(x))
    }
}

/// `g_A(x) = G(|x − A|) (x − A)/|x − A|`.
pub fn eval_field_a(profile: &RadialProfile, a: Point, x: Point) -> [f64; 2] {
    let d = sub(x, a);
    let q = profile.ratio(d[0].hypot(d[1]));
    [q * d[0], q * d[1]]
}

/// `(g_A(x) − g_B(x))·ab`.
pub fn separation_gap(a: Point, b: Point, x: Point, profile: &RadialProfile) -> f64 {
    let ab = sub(b, a);
    let n = ab[0].hypot(ab[1]);
    let ga = eval_field_a(profile, a, x);
    let gb = eval_field_a(profile, b, x);
    dot(sub(ga, gb), ab) / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoResidual {
    pub const_defects: [f64; 2],
    pub u1_defects: [f64; 2],
    pub quad_error: f64,
}

impl OrthoResidual {
    /// `(const_defects, u1_defects)` as one vector.
    pub fn as_vector(&self) -> [f64; 4] {
        [
            self.const_defects[0],
            self.const_defects[1],
            self.u1_defects[0],
            self.u1_defects[1],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_vector().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The settings `ortho_residual` and `rayleigh_bound` use on `mesh`.
pub fn accurate_options(mesh: &Mesh) -> QuadOptions {
    QuadOptions {
        min_area: 1e-10 * mesh.area(),
        estimate_error: true,
    }
}

fn check_lengths(mesh: &Mesh, weight: Option<&[f64]>, u1: Option<&[f64]>) -> Result<()> {
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
    Ok(())
}

/// `∫ w g^AB·e_i` and `∫ w g^AB·e_i u1` over the mesh.
pub fn ortho_residual(
    frame: &TestFieldFrame,
    mesh: &Mesh,
    weight: Option<&[f64]>,
    u1: Option<&[f64]>,
) -> Result<OrthoResidual> {
    ortho_residual_with(frame, mesh, weight, u1, &accurate_options(mesh))
}

pub fn ortho_residual_with(
    frame: &TestFieldFrame,
    mesh: &Mesh,
    weight: Option<&[f64]>,
    u1: Option<&[f64]>,
    opts: &QuadOptions,
) -> Result<OrthoResidual> {
    check_lengths(mesh, weight, u1)?;
    let cut = frame.mediator();
    let r = integrate_mesh(mesh, cut.as_ref(), opts, |t, l, x| {
        let w = weight.map_or(1.0, |w| w[t]);
        let g = frame.eval(x);
        let u = u1.map_or(0.0, |u| {
            let v = mesh.triangles[t];
            l[0] * u[v[0]] + l[1] * u[v[1]] + l[2] * u[v[2]]
        });
        [w * g[0], w * g[1], w * g[0] * u, w * g[1] * u]
    });
    Ok(OrthoResidual {
        const_defects: [r.value[0], r.value[1]],
        u1_defects: [r.value[2], r.value[3]],
        quad_error: r.error.iter().fold(0.0, |m: f64, e| m.max(*e)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighBound {
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
}

/// Sum over both components of `∫ w |∇(g^AB·e_i)|²` against `∫ w |g^AB|²`.
pub fn rayleigh_bound(
    frame: &TestFieldFrame,
    mesh: &Mesh,
    weight: Option<&[f64]>,
) -> Result<RayleighBound> {
    check_lengths(mesh, weight, None)?;
    let cut = frame.mediator();
    let r = integrate_mesh(mesh, cut.as_ref(), &accurate_options(mesh), |t, _, x| {
        let w = weight.map_or(1.0, |w| w[t]);
        let (e, g2) = frame.energy(x);
        [w * e, w * g2]
    });
    let [numerator, denominator] = r.value;
    if !(denominator > 0.0) {
        return Err(Error::ZeroNorm("Rayleigh denominator vanishes".into()));
    }
    Ok(RayleighBound {
        numerator,
        denominator,
        quotient: numerator / denominator,
    })
}
