//! Lowest eigenpairs of the pencil `K x = μ M x`.
//!
//! Small problems go through a dense Cholesky reduction. Larger ones use
//! block shift-invert Lanczos in the `M` inner product with full
//! reorthogonalization, factoring `K + σM` once.

use crate::error::{Error, Result};
use crate::fem::BilinearForms;
use crate::mesh::Mesh;
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    pub seed: u64,
    /// Basis size at which one run is abandoned.
    pub max_basis: usize,
    /// Lanczos block width; must cover the largest expected multiplicity.
    pub block: usize,
    /// Problems with fewer unknowns are solved densely.
    pub dense_limit: usize,
    /// `σ = shift_factor / Σ M`, a mesh-independent shift.
    pub shift_factor: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            max_basis: 300,
            block: 6,
            dense_limit: 2000,
            shift_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `M`-orthonormal nodal vectors.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `‖Kx − μMx‖ / ‖Mx‖` per pair.
    pub residuals: Vec<f64>,
    /// Index ranges of numerically equal eigenvalues.
    pub clusters: Vec<Range<usize>>,
    /// Number of vertex-connected pieces, which is the kernel dimension.
    pub zero_modes: usize,
    pub mesh: Arc<Mesh>,
}

impl SpectralResult {
    pub fn cluster_of(&self, i: usize) -> Range<usize> {
        self.clusters
            .iter()
            .find(|c| c.contains(&i))
            .cloned()
            .unwrap_or(i..i + 1)
    }

    pub fn unknowns(&self) -> usize {
        self.mesh.num_vertices()
    }
}

pub fn solve_eigs(forms: &BilinearForms, count: usize) -> Result<SpectralResult> {
    solve_eigs_with(forms, count, &EigenOptions::default())
}

pub fn solve_eigs_with(
    forms: &BilinearForms,
    count: usize,
    opts: &EigenOptions,
) -> Result<SpectralResult> {
    let n = forms.dim();
    if count < 3 || count > n {
        return Err(Error::OutOfRange(format!(
            "eigenpair count {count} needs 3 <= count <= {n}"
        )));
    }
    if n < opts.dense_limit {
        let sigma = opts.shift_factor / forms.mass.total();
        let (vals, vecs) = dense_pairs(forms, (count + 6).min(n), sigma)?;
        finalize(forms, &vals, &vecs, count)
    } else {
        lanczos(forms, count, opts)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Generalized symmetric eigenproblem for small dense matrices, all pairs
/// ascending, `B`-orthonormal vectors as columns.
fn dense_generalized(a: &Mat<f64>, b: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let llt = b
        .llt(Side::Lower)
        .map_err(|_| Error::Indefinite("mass matrix is not positive definite".into()))?;
    let l = llt.L();
    let mut y = a.to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, y.as_mut(), faer::Par::Seq);
    let mut c = y.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NoConvergence {
            iterations: 0,
            worst_residual: f64::NAN,
            residuals: vec![],
        })?;
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let mut x = evd.U().to_owned();
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(
        l.transpose(),
        x.as_mut(),
        faer::Par::Seq,
    );
    Ok((vals, x))
}

/// The `keep` lowest pairs of the full dense problem, polished by one
/// step of shifted subspace iteration. The Cholesky-transformed solve alone
/// leaves residuals near 1e-8 on graded meshes.
fn dense_pairs(
    forms: &BilinearForms,
    keep: usize,
    sigma: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = forms.stiffness.to_dense();
    let m = forms.mass.to_dense();
    let (_, x) = dense_generalized(&k, &m)?;
    let n = k.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| k[(i, j)] + sigma * m[(i, j)]);
    let llt = shifted
        .llt(Side::Lower)
        .map_err(|_| Error::Indefinite("K + σM is not positive definite".into()))?;
    let mut w = &m * x.subcols(0, keep);
    llt.solve_in_place(w.as_mut());
    let a = w.transpose() * &k * &w;
    let b = w.transpose() * &m * &w;
    let sym = |c: &Mat<f64>| Mat::from_fn(keep, keep, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let (vals, y) = dense_generalized(&sym(&a), &sym(&b))?;
    let v = &w * &y;
    let vecs = (0..keep)
        .map(|j| (0..n).map(|i| v[(i, j)]).collect())
        .collect();
    Ok((vals, vecs))
}

/// `M`-orthogonalize `w` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalization). Returns the accumulated coefficients.
fn orthogonalize(forms: &BilinearForms, basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let mw = forms.mass.mul(w);
        let c: Vec<f64> = basis.iter().map(|q| dot(q, &mw)).collect();
        for (q, ci) in basis.iter().zip(&c) {
            axpy(w, -ci, q);
        }
        for (a, b) in coeffs.iter_mut().zip(&c) {
            *a += b;
        }
    }
    coeffs
}

fn m_norm(forms: &BilinearForms, x: &[f64]) -> f64 {
    forms.mass.form(x, x).max(0.0).sqrt()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

enum Outcome {
    Done(SpectralResult),
    Stalled {
        ritz: Vec<Vec<f64>>,
        residuals: Vec<f64>,
        iterations: usize,
    },
}

fn lanczos(forms: &BilinearForms, count: usize, opts: &EigenOptions) -> Result<SpectralResult> {
    let n = forms.dim();
    let sigma = opts.shift_factor / forms.mass.total();
    let shifted = forms.stiffness.combine(1.0, &forms.mass, sigma).to_faer();
    let llt = shifted
        .sp_cholesky(Side::Lower)
        .map_err(|_| Error::Indefinite("K + σM is not positive definite".into()))?;
    let op = |block: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut rhs = Mat::<f64>::zeros(n, block.len());
        for (j, q) in block.iter().enumerate() {
            let mq = forms.mass.mul(q);
            for i in 0..n {
                rhs[(i, j)] = mq[i];
            }
        }
        llt.solve_in_place(rhs.as_mut());
        (0..block.len())
            .map(|j| (0..n).map(|i| rhs[(i, j)]).collect())
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p = opts.block.max(4).max(count.min(8));
    let mut start: Vec<Vec<f64>> = (0..p).map(|_| random_vector(&mut rng, n)).collect();
    let mut last = (0, vec![]);
    for attempt in 0..2 {
        match lanczos_run(forms, count, sigma, &op, start, opts, &mut rng)? {
            Outcome::Done(r) => return Ok(r),
            Outcome::Stalled {
                ritz,
                residuals,
                iterations,
            } => {
                log::warn!("lanczos run {attempt} stalled after {iterations} vectors; restarting");
                let width = ritz.len().max(p);
                start = ritz;
                while start.len() < width {
                    start.push(random_vector(&mut rng, n));
                }
                last = (iterations, residuals);
            }
        }
    }
    let worst = last.1.iter().copied().fold(0.0, f64::max);
    Err(Error::NoConvergence {
        iterations: last.0,
        worst_residual: worst,
        residuals: last.1,
    })
}

fn lanczos_run(
    forms: &BilinearForms,
    count: usize,
    sigma: f64,
    op: &dyn Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
    start: Vec<Vec<f64>>,
    opts: &EigenOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome> {
    let n = forms.dim();
    let p = start.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(opts.max_basis + p);
    for mut v in start {
        orthogonalize(forms, &q, &mut v);
        let mut nv = m_norm(forms, &v);
        while !(nv > 1e-8) {
            v = random_vector(rng, n);
            orthogonalize(forms, &q, &mut v);
            nv = m_norm(forms, &v);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        q.push(v);
    }
    // h[j][i] = <Op q_j, q_i>_M
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut applied = 0;
    let mut best: (Vec<Vec<f64>>, Vec<f64>) = (vec![], vec![]);
    loop {
        let images = op(&q[applied..applied + p]);
        for mut w in images {
            let before = m_norm(forms, &w);
            let mut coeffs = orthogonalize(forms, &q, &mut w);
            let mut nw = m_norm(forms, &w);
            if !(nw > 1e-10 * before) {
                // invariant subspace found; continue with a fresh direction
                w = random_vector(rng, n);
                orthogonalize(forms, &q, &mut w);
                nw = m_norm(forms, &w);
                coeffs.push(0.0);
            } else {
                coeffs.push(nw);
            }
            w.iter_mut().for_each(|x| *x /= nw);
            q.push(w);
            h.push(coeffs);
        }
        applied += p;
        let m = applied;
        if m >= count + p {
            let t = Mat::from_fn(m, m, |i, j| {
                let a = h[j].get(i).copied().unwrap_or(0.0);
                let b = h[i].get(j).copied().unwrap_or(0.0);
                0.5 * (a + b)
            });
            let evd = t
                .self_adjoint_eigen(Side::Lower)
                .map_err(|_| Error::NoConvergence {
                    iterations: m,
                    worst_residual: f64::NAN,
                    residuals: vec![],
                })?;
            // largest θ are the wanted ones; faer sorts ascending
            let want = (count + p / 2).min(m);
            let idx: Vec<usize> = (0..want).map(|k| m - 1 - k).collect();
            let theta_max = evd.S()[m - 1];
            let mut ests = Vec::with_capacity(want);
            for &k in &idx {
                let mut e2 = 0.0;
                for r in m..m + p {
                    let mut s = 0.0;
                    for c in m - p..m {
                        s += h[c].get(r).copied().unwrap_or(0.0) * evd.U()[(c, k)];
                    }
                    e2 += s * s;
                }
                ests.push(e2.sqrt());
            }
            let ritz: Vec<Vec<f64>> = idx
                .iter()
                .map(|&k| {
                    let mut x = vec![0.0; n];
                    for j in 0..m {
                        axpy(&mut x, evd.U()[(j, k)], &q[j]);
                    }
                    x
                })
                .collect();
            let converged = ests[..count].iter().all(|e| *e <= 1e-12 * theta_max);
            if converged {
                let vals: Vec<f64> = idx.iter().map(|&k| 1.0 / evd.S()[k] - sigma).collect();
                match finalize(forms, &vals, &ritz, count) {
                    Ok(r) => return Ok(Outcome::Done(r)),
                    Err(Error::NoConvergence { residuals, .. }) => best = (ritz.clone(), residuals),
                    Err(e) => return Err(e),
                }
            } else {
                best = (ritz, ests);
            }
        }
        if q.len() + p > opts.max_basis {
            return Ok(Outcome::Stalled {
                ritz: best.0,
                residuals: best.1,
                iterations: q.len(),
            });
        }
    }
}

/// Vertex-connected pieces of the mesh, one label per vertex.
pub fn vertex_components(mesh: &Mesh) -> (usize, Vec<usize>) {
    let n = mesh.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in &mesh.triangles {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[v] = label[r];
    }
    (next, out)
}

/// Replace the numerical kernel by the exact one (piecewise constants,
/// global constant first), Rayleigh–Ritz the rest on the original pencil,
/// then check residuals.
fn finalize(
    forms: &BilinearForms,
    vals: &[f64],
    vecs: &[Vec<f64>],
    count: usize,
) -> Result<SpectralResult> {
    let n = forms.dim();
    let (pieces, label) = vertex_components(&forms.mesh);
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let top = vals[order[count.min(order.len()) - 1]]
        .abs()
        .max(f64::MIN_POSITIVE);
    let near_zero = order.iter().filter(|&&i| vals[i] < 1e-8 * top).count();
    if near_zero != pieces {
        log::warn!("{near_zero} near-zero eigenvalues for {pieces} connected pieces");
    }

    let mut kernel: Vec<Vec<f64>> = Vec::with_capacity(pieces);
    let mut seeds = vec![vec![1.0; n]];
    for c in 0..pieces.saturating_sub(1) {
        seeds.push(
            label
                .iter()
                .map(|&l| if l == c { 1.0 } else { 0.0 })
                .collect(),
        );
    }
    for mut v in seeds {
        orthogonalize(forms, &kernel, &mut v);
        let nv = m_norm(forms, &v);
        v.iter_mut().for_each(|x| *x /= nv);
        kernel.push(v);
    }

    let mut rest: Vec<Vec<f64>> = Vec::new();
    for &i in order.iter().skip(near_zero) {
        let mut v = vecs[i].clone();
        orthogonalize(forms, &kernel, &mut v);
        if m_norm(forms, &v) > 1e-6 * m_norm(forms, &vecs[i]) {
            rest.push(v);
        }
    }
    let k = rest.len();
    let kx: Vec<Vec<f64>> = rest.iter().map(|v| forms.stiffness.mul(v)).collect();
    let mx: Vec<Vec<f64>> = rest.iter().map(|v| forms.mass.mul(v)).collect();
    let a = Mat::from_fn(k, k, |i, j| {
        0.5 * (dot(&rest[i], &kx[j]) + dot(&rest[j], &kx[i]))
    });
    let b = Mat::from_fn(k, k, |i, j| {
        0.5 * (dot(&rest[i], &mx[j]) + dot(&rest[j], &mx[i]))
    });
    let (rvals, y) = dense_generalized(&a, &b)?;

    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    for z in kernel.into_iter().take(count) {
        eigenvalues.push(forms.stiffness.form(&z, &z));
        eigenvectors.push(z);
    }
    for j in 0..k {
        if eigenvalues.len() == count {
            break;
        }
        let mut x = vec![0.0; n];
        for i in 0..k {
            axpy(&mut x, y[(i, j)], &rest[i]);
        }
        let big = x
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        eigenvalues.push(rvals[j]);
        eigenvectors.push(x);
    }
    if eigenvalues.len() < count {
        return Err(Error::NoConvergence {
            iterations: 0,
            worst_residual: f64::INFINITY,
            residuals: vec![],
        });
    }

    let residuals: Vec<f64> = eigenvalues
        .iter()
        .zip(&eigenvectors)
        .map(|(&mu, x)| {
            let kx = forms.stiffness.mul(x);
            let mx = forms.mass.mul(x);
            let r: f64 = kx
                .iter()
                .zip(&mx)
                .map(|(a, b)| (a - mu * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r / dot(&mx, &mx).sqrt()
        })
        .collect();
    let bad = eigenvalues
        .iter()
        .zip(&residuals)
        .any(|(mu, r)| !(*r <= 1e-9 * (mu.abs() + 1.0)));
    if bad {
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        return Err(Error::NoConvergence {
            iterations: 0,
            worst_residual: worst,
            residuals,
        });
    }

    let last = eigenvalues[count - 1].abs();
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=count {
        let split = i == count || {
            let gap = eigenvalues[i] - eigenvalues[i - 1];
            gap > (1e-6 * eigenvalues[i].abs()).max(1e-8 * last)
        };
        if split {
            clusters.push(start..i);
            start = i;
        }
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
        residuals,
        clusters,
        zero_modes: pieces,
        mesh: Arc::clone(&forms.mesh),
    })
}
