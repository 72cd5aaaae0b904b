//! The radial profile used to build test fields, and the ball constants
//! derived from it.
//!
//! `g(r) = (r/R)^{1-N/2} J_{N/2}(k r/R)` on `[0, R]`, where `k` is the first
//! positive zero of `d/dr [r^{1-N/2} J_{N/2}(r)]`, and `G` freezes `g` at
//! `g(R)` beyond `R`. The factor `(r/R)^{1-N/2}` coincides with the usual
//! Bessel form for `N = 2` and makes the profile depend on `r/R` only.

use crate::bessel::{gamma_half_integer, reduced_series};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Largest supported dimension.
pub const MAX_DIM: usize = 24;

static ZEROS: [OnceLock<f64>; MAX_DIM + 1] = [const { OnceLock::new() }; MAX_DIM + 1];

fn check_dim(dim: usize) -> Result<()> {
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(Error::OutOfRange(format!(
            "dimension {dim} outside 2..={MAX_DIM}"
        )));
    }
    Ok(())
}

/// `d/dr [r^{1-ν} J_ν(r)]` up to the positive factor `2^{-ν}`.
fn profile_slope(nu: f64, r: f64) -> f64 {
    reduced_series(nu, r) - 0.5 * r * r * reduced_series(nu + 1.0, r)
}

/// First positive zero of the profile derivative in dimension `dim`.
pub fn profile_zero(dim: usize) -> Result<f64> {
    check_dim(dim)?;
    if let Some(k) = ZEROS[dim].get() {
        return Ok(*k);
    }
    let k = find_zero(0.5 * dim as f64)?;
    Ok(*ZEROS[dim].get_or_init(|| k))
}

fn find_zero(nu: f64) -> Result<f64> {
    let step = 0.01;
    let mut lo = step;
    let mut f_lo = profile_slope(nu, lo);
    while lo < 10.0 {
        let hi = lo + step;
        let f_hi = profile_slope(nu, hi);
        if f_lo.signum() != f_hi.signum() {
            return Ok(bisect(|r| profile_slope(nu, r), lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    Err(Error::Bracket(format!(
        "no sign change of the profile derivative in (0, 10) for order {nu}"
    )))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Volume of the unit ball in `R^dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    let half = 0.5 * dim as f64;
    PI.powf(half) / gamma_half_integer(half + 1.0)
}

/// First nonzero Neumann eigenvalue of the ball of the given radius.
pub fn mu1_ball(dim: usize, radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!(
            "ball radius {radius} must be positive"
        )));
    }
    let k = profile_zero(dim)?;
    Ok((k / radius).powi(2))
}

/// Scale-invariant constants: `μ1* = ω_N^{2/N} μ1(B_1)` and
/// `μ2* = 2^{2/N} μ1*`.
pub fn mu_star(dim: usize, index: u8) -> Result<f64> {
    let base = unit_ball_volume(dim).powf(2.0 / dim as f64) * mu1_ball(dim, 1.0)?;
    match index {
        1 => Ok(base),
        2 => Ok(2f64.powf(2.0 / dim as f64) * base),
        _ => Err(Error::OutOfRange(format!(
            "mu_star index {index} is not 1 or 2"
        ))),
    }
}

/// Constants needed by the bound checks in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstants {
    pub dim: usize,
    pub omega: f64,
    pub k: f64,
    pub mu1_unit_ball: f64,
    pub mu1_star: f64,
    pub mu2_star: f64,
}

impl ReferenceConstants {
    pub fn new(dim: usize) -> Result<Self> {
        let k = profile_zero(dim)?;
        Ok(Self {
            dim,
            omega: unit_ball_volume(dim),
            k,
            mu1_unit_ball: k * k,
            mu1_star: mu_star(dim, 1)?,
            mu2_star: mu_star(dim, 2)?,
        })
    }

    /// Weyl-type bound `4π² (2 / (ω_N |Ω|))^{2/N}` for `μ2`.
    pub fn polya2(&self, volume: f64) -> f64 {
        4.0 * PI * PI * (2.0 / (self.omega * volume)).powf(2.0 / self.dim as f64)
    }

    /// Planar bound `16π / |Ω|` for `μ2`; `None` off the plane.
    pub fn kroger2d(&self, area: f64) -> Option<f64> {
        (self.dim == 2).then(|| 16.0 * PI / area)
    }
}

/// Truncated radial profile for a ball of radius `R` in dimension `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    dim: usize,
    radius: f64,
    k: f64,
    nu: f64,
    /// `(k/2)^ν`
    scale: f64,
}

impl RadialProfile {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!(
                "profile radius {radius} must be positive"
            )));
        }
        let k = profile_zero(dim)?;
        let nu = 0.5 * dim as f64;
        Ok(Self {
            dim,
            radius,
            k,
            nu,
            scale: (0.5 * k).powf(nu),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `μ1` of the ball this profile belongs to.
    pub fn mu1(&self) -> f64 {
        (self.k / self.radius).powi(2)
    }

    /// Untruncated `g(r)`.
    pub fn g(&self, r: f64) -> f64 {
        let rho = r / self.radius;
        rho * self.scale * reduced_series(self.nu, self.k * rho)
    }

    /// Untruncated `g'(r)`.
    pub fn g_prime(&self, r: f64) -> f64 {
        let z = self.k * r / self.radius;
        self.scale * (reduced_series(self.nu, z) - 0.5 * z * z * reduced_series(self.nu + 1.0, z))
            / self.radius
    }

    /// Untruncated `g''(r)`.
    pub fn g_second(&self, r: f64) -> f64 {
        let z = self.k * r / self.radius;
        let a = reduced_series(self.nu + 1.0, z);
        let b = reduced_series(self.nu + 2.0, z);
        self.scale * self.k * (-1.5 * z * a + 0.25 * z * z * z * b) / (self.radius * self.radius)
    }

    /// `lim_{r→0+} g'(r)`.
    pub fn g_prime_at_zero(&self) -> f64 {
        self.scale / (gamma_half_integer(self.nu + 1.0) * self.radius)
    }

    /// `g(R)`, the constant value of `G` outside the ball.
    pub fn g_at_radius(&self) -> f64 {
        self.g(self.radius)
    }

    /// `(G(r), G'(r))` for the truncated profile.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("profile evaluated at r = {r}")));
        }
        if r >= self.radius {
            Ok((self.g_at_radius(), 0.0))
        } else {
            Ok((self.g(r), self.g_prime(r)))
        }
    }

    /// `G(r)/r`, continuous at the origin. This is the multiplier turning
    /// `x - A` into the test field `G(|x-A|) (x-A)/|x-A|`.
    pub fn ratio(&self, r: f64) -> f64 {
        if r >= self.radius {
            self.g_at_radius() / r
        } else {
            self.scale * reduced_series(self.nu, self.k * r / self.radius) / self.radius
        }
    }

    /// `G'(r)² + (N-1) (G(r)/r)²`, the radial energy density.
    pub fn energy_density(&self, r: f64) -> f64 {
        let q = self.ratio(r);
        let gp = if r >= self.radius {
            0.0
        } else {
            self.g_prime(r)
        };
        gp * gp + (self.dim as f64 - 1.0) * q * q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive `r^{1-ν} J_ν(r)` from a fixed-length series, differentiated
    /// numerically, then bisected: independent of the closed-form slope.
    fn zero_oracle(dim: usize) -> f64 {
        let nu = 0.5 * dim as f64;
        let prof = |r: f64| -> f64 {
            let mut total = 0.0;
            let mut fact = 1.0;
            for m in 0..40 {
                if m > 0 {
                    fact *= m as f64;
                }
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                total +=
                    sign * (0.5 * r).powi(2 * m) / (fact * gamma_half_integer(m as f64 + nu + 1.0));
            }
            r * total
        };
        let d = |r: f64| (prof(r + 1e-5) - prof(r - 1e-5)) / 2e-5;
        let (mut lo, mut hi) = (0.1, 0.1);
        while d(hi) > 0.0 {
            lo = hi;
            hi += 0.05;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if d(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn known_zeros() {
        assert!((profile_zero(2).unwrap() - 1.8411837813).abs() < 1e-9);
        assert!((profile_zero(3).unwrap() - 2.0815759782).abs() < 1e-9);
        assert!((mu1_ball(2, 1.0).unwrap() - 3.389957).abs() < 1e-6);
        assert!((mu1_ball(3, 1.0).unwrap() - 4.33296).abs() < 1e-5);
    }

    #[test]
    fn zeros_match_oracle_all_dims() {
        for dim in 2..=MAX_DIM {
            let k = profile_zero(dim).unwrap();
            let o = zero_oracle(dim);
            assert!((k - o).abs() < 1e-7, "dim {dim}: {k} vs {o}");
        }
    }

    #[test]
    fn dimension_range() {
        assert!(profile_zero(1).is_err());
        assert!(profile_zero(25).is_err());
        assert!(profile_zero(24).is_ok());
    }

    #[test]
    fn reference_constants_plane() {
        let c = ReferenceConstants::new(2).unwrap();
        assert!((c.mu1_star - 10.6499).abs() < 1e-3);
        assert!((c.mu2_star - 21.2999).abs() < 1e-3);
        assert!((c.polya2(1.0) - 8.0 * PI).abs() < 1e-12);
        assert!((c.kroger2d(1.0).unwrap() - 16.0 * PI).abs() < 1e-12);
        assert!(ReferenceConstants::new(3).unwrap().kroger2d(1.0).is_none());
    }

    #[test]
    fn mu_star_rejects_index() {
        assert!(mu_star(2, 3).is_err());
    }

    #[test]
    fn negative_radius_rejected() {
        let p = RadialProfile::new(2, 1.0).unwrap();
        assert!(matches!(p.eval(-0.1), Err(Error::Domain(_))));
        assert!(RadialProfile::new(2, 0.0).is_err());
    }

    #[test]
    fn plane_profile_is_j1() {
        let p = RadialProfile::new(2, 1.0).unwrap();
        for i in 0..=20 {
            let r = 0.05 * i as f64;
            let j1 = crate::bessel::bessel_j(1.0, p.k() * r).unwrap();
            assert!((p.g(r) - j1).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_vanishes_at_radius() {
        for dim in 2..=6 {
            let p = RadialProfile::new(dim, 1.3).unwrap();
            assert!(p.g_prime(1.3).abs() < 1e-12);
            assert!(p.g_at_radius() > 0.0);
        }
    }

    #[test]
    fn strictly_increasing_on_ball() {
        for dim in 2..=6 {
            let p = RadialProfile::new(dim, 0.7).unwrap();
            let mut prev = p.eval(0.0).unwrap().0;
            assert_eq!(prev, 0.0);
            let mut sup_gp: f64 = 0.0;
            for i in 1..=10_000 {
                let r = 0.7 * i as f64 / 10_000.0;
                let (g, _) = p.eval(r).unwrap();
                assert!(g > prev, "dim {dim} r {r}");
                sup_gp = sup_gp.max(p.g_prime(r).abs());
                prev = g;
            }
            assert!(p.g_prime(0.7).abs() <= 1e-10 * sup_gp);
        }
    }

    #[test]
    fn energy_density_non_increasing() {
        for dim in 2..=4 {
            let p = RadialProfile::new(dim, 1.0).unwrap();
            let mut prev = p.energy_density(1e-6);
            for i in 1..=10_000 {
                let r = 3.0 * i as f64 / 10_000.0;
                let b = p.energy_density(r);
                assert!(b <= prev * (1.0 + 1e-13), "dim {dim} r {r}: {b} > {prev}");
                prev = b;
            }
        }
    }

    #[test]
    fn half_radius_matches_series_oracle() {
        let p = RadialProfile::new(2, 1.0).unwrap();
        let z = 0.5 * p.k();
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for m in 0..30 {
            if m > 0 {
                fact *= m as f64;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            oracle += sign * (0.5 * z).powi(2 * m + 1) / (fact * fact * (m as f64 + 1.0));
        }
        assert!((p.eval(0.5).unwrap().0 - oracle).abs() < 1e-10);
    }

    #[test]
    fn zero_residual_at_root() {
        for dim in 2..=MAX_DIM {
            let k = profile_zero(dim).unwrap();
            let nu = 0.5 * dim as f64;
            let slope = (0.5f64).powf(nu) * profile_slope(nu, k);
            assert!(slope.abs() < 1e-10, "dim {dim}: {slope}");
        }
    }

    #[test]
    fn ball_scaling() {
        let base = mu1_ball(2, 1.0).unwrap();
        assert_eq!(mu1_ball(2, 2.0).unwrap(), base / 4.0);
        for &r in &[0.3, 1.7, 12.0] {
            let v = mu1_ball(3, r).unwrap() * r * r;
            assert!((v - mu1_ball(3, 1.0).unwrap()).abs() <= 1e-12 * v);
        }
    }

    #[test]
    fn mu_star_ratio() {
        for dim in 2..=MAX_DIM {
            let r = mu_star(dim, 2).unwrap() / mu_star(dim, 1).unwrap();
            assert!((r - 2f64.powf(2.0 / dim as f64)).abs() < 1e-15);
        }
        let c = ReferenceConstants::new(2).unwrap();
        assert!(c.mu2_star < c.polya2(1.0) && c.polya2(1.0) < c.kroger2d(1.0).unwrap());
    }

    proptest! {
        #[test]
        fn profile_ode(dim in 2usize..=8, radius in 0.1f64..10.0, t in 0.01f64..=1.0) {
            let p = RadialProfile::new(dim, radius).unwrap();
            let r = t * radius;
            let n = dim as f64;
            let resid = p.g_second(r) + (n - 1.0) / r * p.g_prime(r)
                + (p.mu1() - (n - 1.0) / (r * r)) * p.g(r);
            prop_assert!(resid.abs() <= 1e-8 * p.g_at_radius() * p.mu1(), "resid {}", resid);
        }

        #[test]
        fn increasing_then_constant(dim in 2usize..=10, radius in 0.1f64..10.0,
                                    a in 0.0f64..1.5, b in 0.0f64..1.5) {
            let p = RadialProfile::new(dim, radius).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (g_lo, _) = p.eval(lo * radius).unwrap();
            let (g_hi, gp_hi) = p.eval(hi * radius).unwrap();
            prop_assert!(g_lo <= g_hi + 1e-15);
            if hi >= 1.0 {
                prop_assert_eq!(gp_hi, 0.0);
                prop_assert_eq!(g_hi, p.g_at_radius());
            }
        }

        #[test]
        fn scale_covariance(dim in 2usize..=6, radius in 0.2f64..5.0, t in 0.0f64..1.3,
                            s in prop::sample::select(vec![0.5, 2.0])) {
            let p = RadialProfile::new(dim, radius).unwrap();
            let q = RadialProfile::new(dim, s * radius).unwrap();
            let (g1, gp1) = p.eval(t * radius).unwrap();
            let (g2, gp2) = q.eval(s * t * radius).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-13 * (1.0 + g1.abs()));
            prop_assert!((gp1 / s - gp2).abs() <= 1e-12 * (1.0 + gp1.abs()));
        }

        #[test]
        fn ratio_limit_at_origin(dim in 2usize..=12, radius in 0.1f64..10.0) {
            let p = RadialProfile::new(dim, radius).unwrap();
            let lim = p.g_prime_at_zero();
            prop_assert!((p.ratio(0.0) - lim).abs() <= 1e-14 * lim);
            prop_assert!((p.g_prime(1e-9 * radius) - lim).abs() <= 1e-9 * lim);
        }
    }
}
