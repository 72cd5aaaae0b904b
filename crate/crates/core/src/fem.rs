//! P1 stiffness and consistent mass forms, optionally weighted per element.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct BilinearForms {
    /// `∫ w ∇φ_i·∇φ_j`
    pub stiffness: CsrMatrix,
    /// `∫ w φ_i φ_j`
    pub mass: CsrMatrix,
    /// Floor applied to the weight before assembly, 0 when unweighted.
    pub weight_floor: f64,
    pub mesh: Arc<Mesh>,
    /// Per-element weight used, `None` for `w ≡ 1`.
    pub weight: Option<Arc<Vec<f64>>>,
}

/// Element matrices for one triangle with constant weight `w`.
pub fn element_matrices(p: [[f64; 2]; 3], w: f64) -> Result<([[f64; 3]; 3], [[f64; 3]; 3])> {
    let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
    if !(area > 0.0) {
        return Err(Error::DegenerateTriangle(usize::MAX));
    }
    // gradients of barycentric coordinates times 2·area
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]];
    }
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    let ks = w / (4.0 * area);
    let ms = w * area / 12.0;
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = ks * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            me[i][j] = if i == j { 2.0 * ms } else { ms };
        }
    }
    Ok((ke, me))
}

fn pattern(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut rows: Vec<Vec<usize>> = (0..mesh.num_vertices()).map(|i| vec![i]).collect();
    for t in &mesh.triangles {
        for &a in t {
            for &b in t {
                rows[a].push(b);
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    rows
}

/// Assemble with `w ≡ 1`.
pub fn assemble(mesh: &Arc<Mesh>) -> Result<BilinearForms> {
    assemble_inner(mesh, None, 0.0)
}

/// Assemble with a per-element weight in `[0, 1]`.
pub fn assemble_weighted(
    mesh: &Arc<Mesh>,
    weight: &[f64],
    weight_floor: f64,
) -> Result<BilinearForms> {
    if weight.len() != mesh.num_triangles() {
        return Err(Error::Density(format!(
            "{} weights for {} triangles",
            weight.len(),
            mesh.num_triangles()
        )));
    }
    if let Some(i) = weight.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Density(format!(
            "element weight {} at {i} outside [0, 1]",
            weight[i]
        )));
    }
    assemble_inner(mesh, Some(weight), weight_floor)
}

/// Assemble for a weight that varies inside elements. `mean[t]` is the
/// average of `w` over triangle `t`, which gives the exact P1 stiffness;
/// `moments[t][i][j] = ∫_t w λ_i λ_j` is the mass block.
pub fn assemble_moments(
    mesh: &Arc<Mesh>,
    mean: &[f64],
    moments: &[[[f64; 3]; 3]],
    weight_floor: f64,
) -> Result<BilinearForms> {
    if mean.len() != mesh.num_triangles() || moments.len() != mesh.num_triangles() {
        return Err(Error::Density(format!(
            "moments for {} of {} triangles",
            mean.len(),
            mesh.num_triangles()
        )));
    }
    if let Some(i) = mean.iter().position(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Density(format!(
            "element weight {} at {i} outside [0, 1]",
            mean[i]
        )));
    }
    let locals = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let (ke, _) = element_matrices(mesh.corners(t), mean[t])
                .map_err(|_| Error::DegenerateTriangle(t))?;
            Ok((ke, moments[t]))
        })
        .collect();
    scatter(mesh, locals, Some(mean), weight_floor)
}

fn assemble_inner(
    mesh: &Arc<Mesh>,
    weight: Option<&[f64]>,
    weight_floor: f64,
) -> Result<BilinearForms> {
    let locals = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let w = weight.map_or(1.0, |w| w[t]);
            element_matrices(mesh.corners(t), w).map_err(|_| Error::DegenerateTriangle(t))
        })
        .collect();
    scatter(mesh, locals, weight, weight_floor)
}

type Local = ([[f64; 3]; 3], [[f64; 3]; 3]);

fn scatter(
    mesh: &Arc<Mesh>,
    locals: Vec<Result<Local>>,
    weight: Option<&[f64]>,
    weight_floor: f64,
) -> Result<BilinearForms> {
    let rows = pattern(mesh);
    let mut stiffness = CsrMatrix::from_pattern(&rows);
    let mut mass = stiffness.clone();
    for (t, local) in locals.into_iter().enumerate() {
        let (ke, me) = local?;
        let tri = mesh.triangles[t];
        for i in 0..3 {
            for j in 0..3 {
                stiffness.add(tri[i], tri[j], ke[i][j]);
                mass.add(tri[i], tri[j], me[i][j]);
            }
        }
    }
    Ok(BilinearForms {
        stiffness,
        mass,
        weight_floor,
        mesh: Arc::clone(mesh),
        weight: weight.map(|w| Arc::new(w.to_vec())),
    })
}

impl BilinearForms {
    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// `xᵀKx / xᵀMx`
    pub fn rayleigh(&self, x: &[f64]) -> Result<f64> {
        let den = self.mass.form(x, x);
        if !(den > 0.0) {
            return Err(Error::ZeroNorm("vector has zero mass norm".into()));
        }
        Ok(self.stiffness.form(x, x) / den)
    }

    pub fn element_weight(&self, t: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w[t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::mesh::triangulate;
    use proptest::prelude::*;

    fn square_forms(h: f64) -> BilinearForms {
        let d = Domain::parse(
            r#"{"label":"sq","shapes":[{"type":"rectangle","min":[0,0],"max":[1,1]}]}"#,
        )
        .unwrap();
        assemble(&Arc::new(triangulate(&d, h).unwrap())).unwrap()
    }

    /// Exact ∫ λ_i λ_j over a triangle via the 3-point edge-midpoint rule,
    /// exact for quadratics.
    fn mass_oracle(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
        let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = mids.iter().map(|l| l[i] * l[j]).sum::<f64>() * area / 3.0;
            }
        }
        m
    }

    #[test]
    fn reference_element() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (ke, me) = element_matrices(p, 1.0).unwrap();
        let oracle = mass_oracle(p);
        for i in 0..3 {
            for j in 0..3 {
                assert!((me[i][j] - oracle[i][j]).abs() < 1e-16);
            }
        }
        assert_eq!(ke[0], [1.0, -0.5, -0.5]);
        assert_eq!(ke[1], [-0.5, 0.5, 0.0]);
        assert!(element_matrices([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], 1.0).is_err());
    }

    #[test]
    fn constant_moments_match_element_weights() {
        let f = square_forms(0.1);
        let w: Vec<f64> = (0..f.mesh.num_triangles())
            .map(|t| 0.25 + 0.5 * (t % 3) as f64 / 2.0)
            .collect();
        let moments: Vec<_> = (0..w.len())
            .map(|t| element_matrices(f.mesh.corners(t), w[t]).unwrap().1)
            .collect();
        let a = assemble_weighted(&f.mesh, &w, 0.0).unwrap();
        let b = assemble_moments(&f.mesh, &w, &moments, 0.0).unwrap();
        let x: Vec<f64> = (0..f.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(a.stiffness.form(&x, &x), b.stiffness.form(&x, &x));
        assert_eq!(a.mass.form(&x, &x), b.mass.form(&x, &x));
        assert!(assemble_moments(&f.mesh, &w[1..], &moments, 0.0).is_err());
    }

    #[test]
    fn partition_of_unity() {
        let f = square_forms(0.1);
        assert!((f.mass.total() - 1.0).abs() < 1e-13);
        let k1 = f.stiffness.mul(&vec![1.0; f.dim()]);
        let kmax = f.stiffness.norm_inf();
        assert!(k1.iter().all(|v| v.abs() <= 1e-12 * kmax));
        assert!(f.rayleigh(&vec![1.0; f.dim()]).unwrap().abs() < 1e-12);
        assert!(f.rayleigh(&vec![0.0; f.dim()]).is_err());
    }

    #[test]
    fn unit_weight_bit_identical() {
        let f = square_forms(0.1);
        let w = vec![1.0; f.mesh.num_triangles()];
        let g = assemble_weighted(&f.mesh, &w, 1e-3).unwrap();
        assert_eq!(f.stiffness, g.stiffness);
        assert_eq!(f.mass, g.mass);
    }

    #[test]
    fn weighted_row_sums() {
        let f = square_forms(0.2);
        let w: Vec<f64> = (0..f.mesh.num_triangles())
            .map(|t| 0.1 + 0.9 * ((t * 37 % 11) as f64 / 10.0))
            .collect();
        let g = assemble_weighted(&f.mesh, &w, 0.0).unwrap();
        let total: f64 = (0..f.mesh.num_triangles())
            .map(|t| w[t] * f.mesh.area_of(t))
            .sum();
        assert!((g.mass.total() - total).abs() < 1e-13);
        assert!(assemble_weighted(&f.mesh, &vec![2.0; w.len()], 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_triangle_invariants(x in prop::array::uniform6(-3.0f64..3.0)) {
            let p = [[x[0], x[1]], [x[2], x[3]], [x[4], x[5]]];
            let area = crate::mesh::triangle_area(p[0], p[1], p[2]);
            prop_assume!(area > 1e-3);
            let (ke, me) = element_matrices(p, 1.0).unwrap();
            let oracle = mass_oracle(p);
            for i in 0..3 {
                let ksum: f64 = ke[i].iter().sum();
                prop_assert!(ksum.abs() < 1e-10 * ke[i][i].abs().max(1.0));
                for j in 0..3 {
                    prop_assert!((me[i][j] - oracle[i][j]).abs() < 1e-13);
                    prop_assert_eq!(ke[i][j], ke[j][i]);
                }
            }
        }
    }
}
