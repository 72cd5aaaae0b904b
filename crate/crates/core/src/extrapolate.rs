//! Nested-refinement eigenvalue sequences and Richardson extrapolation.

use crate::domain::Domain;
use crate::eigen::{solve_eigs_with, EigenOptions, SpectralResult};
use crate::error::{Error, Result};
use crate::fem::assemble;
use crate::mesh::{triangulate, Mesh};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub estimate: f64,
    /// Observed convergence order in `h`.
    pub order: f64,
    pub sequence: Vec<f64>,
}

impl Extrapolation {
    /// Distance between the finest computed value and the estimate,
    /// relative to the estimate.
    pub fn relative_correction(&self) -> f64 {
        let last = *self.sequence.last().expect("non-empty sequence");
        ((last - self.estimate) / self.estimate).abs()
    }
}

/// Fit `μ_h = μ + C h^p` to the last three values of a sequence computed
/// on meshes halving `h` each step.
pub fn richardson(sequence: &[f64]) -> Result<Extrapolation> {
    if sequence.len() < 3 {
        return Err(Error::OutOfRange(format!(
            "need 3 levels, got {}",
            sequence.len()
        )));
    }
    if sequence.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::NonMonotone(sequence.to_vec()));
    }
    let n = sequence.len();
    let (a, b, c) = (sequence[n - 3], sequence[n - 2], sequence[n - 1]);
    let ratio = (a - b) / (b - c);
    if !(ratio > 1.0) {
        return Err(Error::NonMonotone(sequence.to_vec()));
    }
    Ok(Extrapolation {
        estimate: c - (b - c) / (ratio - 1.0),
        order: ratio.log2(),
        sequence: sequence.to_vec(),
    })
}

/// Solve on `levels` nested meshes starting from `mesh`.
pub fn solve_levels(
    mesh: Arc<Mesh>,
    levels: usize,
    count: usize,
    opts: &EigenOptions,
) -> Result<Vec<SpectralResult>> {
    let mut out = Vec::with_capacity(levels);
    let mut m = mesh;
    for level in 0..levels {
        if level > 0 {
            m = Arc::new(m.refine(false)?);
        }
        let forms = assemble(&m)?;
        out.push(solve_eigs_with(&forms, count, opts)?);
    }
    Ok(out)
}

/// Extrapolated `μ_index` of `domain` from `levels` nested meshes with
/// initial size `h0`.
pub fn extrapolate(
    domain: &Domain,
    h0: f64,
    levels: usize,
    index: usize,
    opts: &EigenOptions,
) -> Result<(Extrapolation, Vec<SpectralResult>)> {
    if levels < 3 {
        return Err(Error::OutOfRange(format!(
            "extrapolation needs at least 3 levels, got {levels}"
        )));
    }
    let count = (index + 2).max(3);
    let results = solve_levels(Arc::new(triangulate(domain, h0)?), levels, count, opts)?;
    let seq: Vec<f64> = results.iter().map(|r| r.eigenvalues[index]).collect();
    Ok((richardson(&seq)?, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let seq: Vec<f64> = (0..4).map(|l| 2.0 + 3.0 * 0.5f64.powi(2 * l)).collect();
        let e = richardson(&seq).unwrap();
        assert!((e.estimate - 2.0).abs() < 1e-13);
        assert!((e.order - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(matches!(
            richardson(&[3.0, 2.0, 2.5]),
            Err(Error::NonMonotone(_))
        ));
        assert!(matches!(
            richardson(&[3.0, 2.0, 1.0]),
            Err(Error::NonMonotone(_))
        ));
        assert!(richardson(&[3.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_limit(mu in 1.0f64..100.0, c in 0.01f64..10.0, p in 0.8f64..3.0) {
            let seq: Vec<f64> = (0..3).map(|l| mu + c * 0.5f64.powf(p * l as f64)).collect();
            let e = richardson(&seq).unwrap();
            prop_assert!((e.estimate - mu).abs() < 1e-9 * mu.max(c));
            prop_assert!((e.order - p).abs() < 1e-8);
        }
    }
}
