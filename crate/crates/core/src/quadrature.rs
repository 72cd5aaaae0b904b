//! Quadrature over meshes (with a straight cut) and over discs.

use crate::domain::Point;
use crate::mesh::Mesh;
use rayon::prelude::*;
use std::sync::OnceLock;

/// Degree-5 seven-point rule on the reference triangle: barycentric points
/// and weights summing to one.
pub fn triangle_rule() -> &'static [([f64; 3], f64); 7] {
    static RULE: OnceLock<[([f64; 3], f64); 7]> = OnceLock::new();
    RULE.get_or_init(|| {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let w1 = (155.0 - s) / 1200.0;
        let w2 = (155.0 + s) / 1200.0;
        let b1 = 1.0 - 2.0 * a1;
        let b2 = 1.0 - 2.0 * a2;
        [
            ([1.0 / 3.0; 3], 9.0 / 40.0),
            ([a1, a1, b1], w1),
            ([a1, b1, a1], w1),
            ([b1, a1, a1], w1),
            ([a2, a2, b2], w2),
            ([a2, b2, a2], w2),
            ([b2, a2, a2], w2),
        ]
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(12))
}

/// Oriented line `{x : (x − point)·normal = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub point: Point,
    pub normal: [f64; 2],
}

impl Cut {
    pub fn side(&self, x: Point) -> f64 {
        (x[0] - self.point[0]) * self.normal[0] + (x[1] - self.point[1]) * self.normal[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Crossed sub-triangles smaller than this are no longer split.
    pub min_area: f64,
    /// Also integrate each leaf split 1→4 and report the difference.
    pub estimate_error: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const K: usize> {
    pub value: [f64; K],
    /// Sum over leaves of `|fine − coarse|`, zero when not estimated.
    pub error: [f64; K],
}

fn lerp_bary(b: &[[f64; 3]; 3], l: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| l[0] * b[0][k] + l[1] * b[1][k] + l[2] * b[2][k])
}

fn to_point(p: &[Point; 3], l: [f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

fn leaf<const K: usize, F>(
    t: usize,
    p: &[Point; 3],
    sub: &[[f64; 3]; 3],
    area: f64,
    f: &F,
) -> [f64; K]
where
    F: Fn(usize, [f64; 3], Point) -> [f64; K],
{
    let mut acc = [0.0; K];
    for (l, w) in triangle_rule() {
        let bary = lerp_bary(sub, *l);
        let v = f(t, bary, to_point(p, bary));
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc.map(|a| a * area)
}

fn mid(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| 0.5 * (a[k] + b[k]))
}

#[allow(clippy::too_many_arguments)]
fn integrate_sub<const K: usize, F>(
    t: usize,
    p: &[Point; 3],
    sub: [[f64; 3]; 3],
    area: f64,
    cut: Option<&Cut>,
    opts: &QuadOptions,
    f: &F,
) -> ([f64; K], [f64; K])
where
    F: Fn(usize, [f64; 3], Point) -> [f64; K],
{
    let xs = sub.map(|l| to_point(p, l));
    let crossed = cut.is_some_and(|c| {
        let s = xs.map(|x| c.side(x));
        s.iter().any(|v| *v < 0.0) && s.iter().any(|v| *v > 0.0)
    });
    if crossed && area > opts.min_area {
        let len =
            |i: usize, j: usize| (xs[i][0] - xs[j][0]).powi(2) + (xs[i][1] - xs[j][1]).powi(2);
        let edges = [len(0, 1), len(1, 2), len(2, 0)];
        // near-ties go to the lowest index so that rounding (e.g. after a
        // translation) does not change the split
        let longest = edges.iter().fold(0.0f64, |m, v| m.max(*v));
        let e = (0..3)
            .find(|&i| edges[i] >= longest * (1.0 - 1e-9))
            .unwrap();
        let (i, j, k) = (e, (e + 1) % 3, (e + 2) % 3);
        let m = mid(sub[i], sub[j]);
        let (v1, e1) = integrate_sub(t, p, [sub[i], m, sub[k]], 0.5 * area, cut, opts, f);
        let (v2, e2) = integrate_sub(t, p, [m, sub[j], sub[k]], 0.5 * area, cut, opts, f);
        return (
            std::array::from_fn(|q| v1[q] + v2[q]),
            std::array::from_fn(|q| e1[q] + e2[q]),
        );
    }
    let coarse = leaf(t, p, &sub, area, f);
    if opts.estimate_error {
        let (m01, m12, m20) = (
            mid(sub[0], sub[1]),
            mid(sub[1], sub[2]),
            mid(sub[2], sub[0]),
        );
        let quarter = 0.25 * area;
        let mut fine = [0.0; K];
        for s in [
            [sub[0], m01, m20],
            [m01, sub[1], m12],
            [m20, m12, sub[2]],
            [m01, m12, m20],
        ] {
            let v = leaf(t, p, &s, quarter, f);
            for k in 0..K {
                fine[k] += v[k];
            }
        }
        (fine, std::array::from_fn(|k| (fine[k] - coarse[k]).abs()))
    } else {
        (coarse, [0.0; K])
    }
}

/// `∫ f` over all triangles of `mesh`. `f` receives the triangle index,
/// barycentric coordinates within it, and the physical point. Triangles
/// straddling `cut` are bisected along their longest edge first.
/// Summation order is fixed, so results do not depend on thread count.
pub fn integrate_mesh<const K: usize, F>(
    mesh: &Mesh,
    cut: Option<&Cut>,
    opts: &QuadOptions,
    f: F,
) -> Integral<K>
where
    F: Fn(usize, [f64; 3], Point) -> [f64; K] + Sync,
{
    const CHUNK: usize = 512;
    let nt = mesh.num_triangles();
    let parts: Vec<([f64; K], [f64; K])> = (0..nt.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut value = [0.0; K];
            let mut error = [0.0; K];
            for t in c * CHUNK..((c + 1) * CHUNK).min(nt) {
                let p = mesh.corners(t);
                let sub = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                let (v, e) = integrate_sub(t, &p, sub, mesh.area_of(t), cut, opts, &f);
                for k in 0..K {
                    value[k] += v[k];
                    error[k] += e[k];
                }
            }
            (value, error)
        })
        .collect();
    let mut out = Integral {
        value: [0.0; K],
        error: [0.0; K],
    };
    for (v, e) in parts {
        for k in 0..K {
            out.value[k] += v[k];
            out.error[k] += e[k];
        }
    }
    out
}

/// Curves across which the integrand is not smooth, used as radial
/// breakpoints by [`integrate_disc`].
#[derive(Debug, Clone, Default)]
pub struct Kinks {
    pub cuts: Vec<Cut>,
    pub circles: Vec<(Point, f64)>,
}

/// Angular pieces of the disc rule before kink splitting.
pub const DISC_PIECES: usize = 32;

fn wrap(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * std::f64::consts::PI)
}

/// Angles (seen from `center`) at which the radial breakpoint structure
/// changes: kink curves meeting the rim, and rays tangent to kink circles.
fn critical_angles(center: Point, radius: f64, kinks: &Kinks) -> Vec<f64> {
    let mut out = Vec::new();
    for c in &kinks.cuts {
        let s = c.side(center);
        if s.abs() < radius {
            let h = (radius * radius - s * s).sqrt();
            let foot = [-s * c.normal[0], -s * c.normal[1]];
            let t = [-c.normal[1], c.normal[0]];
            for sign in [-1.0, 1.0] {
                out.push(wrap(
                    (foot[1] + sign * h * t[1]).atan2(foot[0] + sign * h * t[0]),
                ));
            }
        }
    }
    for (p, rho) in &kinks.circles {
        let q = [p[0] - center[0], p[1] - center[1]];
        let dist = q[0].hypot(q[1]);
        if dist <= 0.0 {
            continue;
        }
        let base = q[1].atan2(q[0]);
        if dist > *rho {
            let a = (rho / dist).asin();
            out.push(wrap(base - a));
            out.push(wrap(base + a));
        }
        // rim intersection: |x| = R, |x − q| = ρ
        let cos = (radius * radius + dist * dist - rho * rho) / (2.0 * radius * dist);
        if cos.abs() < 1.0 {
            let a = cos.acos();
            out.push(wrap(base - a));
            out.push(wrap(base + a));
        }
    }
    out
}

/// `∫ f` over the disc `|x − center| < radius` in polar coordinates.
/// Both directions use 12-point Gauss–Legendre: radially on each piece
/// between kinks, in the angle on pieces split at [`critical_angles`].
pub fn integrate_disc<const K: usize, F>(
    center: Point,
    radius: f64,
    kinks: &Kinks,
    f: F,
) -> [f64; K]
where
    F: Fn(Point) -> [f64; K],
{
    let two_pi = 2.0 * std::f64::consts::PI;
    let (gx, gw) = gl12();
    let mut cuts: Vec<f64> = (0..=DISC_PIECES)
        .map(|i| two_pi * i as f64 / DISC_PIECES as f64)
        .collect();
    cuts.extend(critical_angles(center, radius, kinks));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut acc = [0.0; K];
    let mut breaks: Vec<f64> = Vec::with_capacity(8);
    for piece in cuts.windows(2) {
        let (t0, t1) = (piece[0], piece[1]);
        let half_t = 0.5 * (t1 - t0);
        for (xt, wt) in gx.iter().zip(gw) {
            let th = t0 + half_t * (xt + 1.0);
            let d = [th.cos(), th.sin()];
            breaks.clear();
            breaks.push(0.0);
            for c in &kinks.cuts {
                let dn = d[0] * c.normal[0] + d[1] * c.normal[1];
                if dn.abs() > 1e-300 {
                    let r = -c.side(center) / dn;
                    if r > 0.0 && r < radius {
                        breaks.push(r);
                    }
                }
            }
            for (p, rho) in &kinks.circles {
                let q = [center[0] - p[0], center[1] - p[1]];
                let b = d[0] * q[0] + d[1] * q[1];
                let disc = b * b - (q[0] * q[0] + q[1] * q[1] - rho * rho);
                if disc > 0.0 {
                    let s = disc.sqrt();
                    for r in [-b - s, -b + s] {
                        if r > 0.0 && r < radius {
                            breaks.push(r);
                        }
                    }
                }
            }
            breaks.push(radius);
            breaks.sort_by(f64::total_cmp);
            for w in breaks.windows(2) {
                let half = 0.5 * (w[1] - w[0]);
                if half <= 0.0 {
                    continue;
                }
                for (xr, wr) in gx.iter().zip(gw) {
                    let r = w[0] + half * (xr + 1.0);
                    let v = f([center[0] + r * d[0], center[1] + r * d[1]]);
                    let s = wt * half_t * wr * half * r;
                    for k in 0..K {
                        acc[k] += s * v[k];
                    }
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::mesh::triangulate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn rule_is_degree_five() {
        // ∫ λ1^a λ2^b λ3^c over the reference simplex (area 1/2)
        // = a! b! c! / (a+b+c+2)!, times 2 for the unit-area normalization
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                for c in 0..=(5 - a - b) {
                    let exact = 2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
                    let q: f64 = triangle_rule()
                        .iter()
                        .map(|(l, w)| {
                            w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32)
                        })
                        .sum();
                    assert!((q - exact).abs() < 1e-15, "{a} {b} {c}");
                }
            }
        }
        let total: f64 = triangle_rule().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_exact() {
        let (x, w) = gauss_legendre(12);
        for k in 0..24 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn cut_square_area() {
        let d = Domain::parse(
            r#"{"label":"sq","shapes":[{"type":"rectangle","min":[0,0],"max":[1,1]}]}"#,
        )
        .unwrap();
        let m = triangulate(&d, 0.2).unwrap();
        let cut = Cut {
            point: [0.3, 0.0],
            normal: [1.0, 0.2],
        };
        let opts = QuadOptions {
            min_area: 1e-10,
            estimate_error: true,
        };
        let r = integrate_mesh(&m, Some(&cut), &opts, |_, _, x| {
            let left = if cut.side(x) <= 0.0 { 1.0 } else { 0.0 };
            [1.0, left, x[0] * x[1]]
        });
        assert!((r.value[0] - m.area()).abs() < 1e-14, "{:?}", r);
        assert!((r.value[2] - 0.25).abs() < 1e-13);
        // area left of x + 0.2 y = 0.3 in the unit square
        assert!((r.value[1] - 0.2).abs() < 1e-4, "{}", r.value[1]);
        assert!(r.error[0] < 1e-13);
    }

    #[test]
    fn disc_rule_with_kinks() {
        let kinks = Kinks {
            cuts: vec![Cut {
                point: [0.2, 0.0],
                normal: [1.0, 0.0],
            }],
            circles: vec![([0.5, 0.1], 0.3)],
        };
        let r = integrate_disc([0.0, 0.0], 1.0, &kinks, |x| {
            let half = if x[0] > 0.2 { 1.0 } else { 0.0 };
            [1.0, x[0] * x[0], half]
        });
        assert!((r[0] - PI).abs() < 1e-12);
        assert!((r[1] - PI / 4.0).abs() < 1e-12);
        let seg = (0.2f64).acos() - 0.2 * (1.0 - 0.04f64).sqrt();
        assert!((r[2] - seg).abs() < 1e-13, "{} vs {}", r[2], seg);
    }

    proptest! {
        #[test]
        fn polynomial_on_random_triangle(c in prop::array::uniform6(-2.0f64..2.0), k in 0i32..=5) {
            let p = [[c[0], c[1]], [c[2], c[3]], [c[4], c[5]]];
            let area = crate::mesh::triangle_area(p[0], p[1], p[2]).abs();
            prop_assume!(area > 1e-2);
            // exact: integral of λ1^k is 2·area·k!/(k+2)!
            let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
            let exact = 2.0 * area * fact(k) / fact(k + 2);
            let q: f64 = triangle_rule().iter().map(|(l, w)| w * l[0].powi(k)).sum::<f64>() * area;
            prop_assert!((q - exact).abs() < 1e-13 * area);
        }
    }
}
