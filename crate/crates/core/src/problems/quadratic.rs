use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::{jacobi_eigen, SymMatrix};
use crate::error::{Error, Result};
use crate::params::{LayeredParams, ObjectiveVector, PreferenceVector};

/// `m` concave quadratic objectives over a shared parameter vector:
///
/// ```text
/// f_j(θ) = −(θ − c_j)ᵀ A_j (θ − c_j)
/// ```
///
/// `A_j` defaults to the identity. The parameter vector is viewed through a
/// pseudo-layer layout so that layer-wise similarity has more than one layer
/// to average over; the layout does not affect values or gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    centers: Vec<Vec<f64>>,
    scales: Option<Vec<Vec<Vec<f64>>>>,
    layer_sizes: Vec<usize>,
}

impl QuadraticProblem {
    pub fn new(
        centers: Vec<Vec<f64>>,
        scales: Option<Vec<Vec<Vec<f64>>>>,
        layer_sizes: Vec<usize>,
    ) -> Result<Self> {
        let m = centers.len();
        if m == 0 {
            return Err(Error::Config("problem needs at least one objective center".into()));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("objective centers must share a nonzero dimension".into()));
        }
        if centers.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("objective centers must be finite".into()));
        }
        if layer_sizes.iter().sum::<usize>() != dim || layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes {layer_sizes:?} do not partition dimension {dim}"
            )));
        }
        if let Some(scales) = &scales {
            if scales.len() != m {
                return Err(Error::Config(format!(
                    "{} scale matrices for {m} objectives",
                    scales.len()
                )));
            }
            for (j, a) in scales.iter().enumerate() {
                if a.len() != dim || a.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("scale matrix {j} is not {dim}x{dim}")));
                }
                let sym = SymMatrix::from_rows(a)
                    .map_err(|e| Error::Config(format!("scale matrix {j}: {e}")))?;
                let min_eig = jacobi_eigen(&sym)?.values[0];
                if min_eig < -1e-12 * sym.frobenius_norm().max(1.0) {
                    return Err(Error::Config(format!(
                        "scale matrix {j} is not positive semidefinite (eigenvalue {min_eig})"
                    )));
                }
            }
        }
        Ok(Self {
            centers,
            scales,
            layer_sizes,
        })
    }

    /// Identity-scaled problem.
    pub fn isotropic(centers: Vec<Vec<f64>>, layer_sizes: Vec<usize>) -> Result<Self> {
        Self::new(centers, None, layer_sizes)
    }

    pub fn objectives(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Shape(format!(
                "model has {} parameters, problem expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn check_weights(&self, w: &PreferenceVector) -> Result<()> {
        if w.len() != self.objectives() {
            return Err(Error::Shape(format!(
                "{} preference weights for {} objectives",
                w.len(),
                self.objectives()
            )));
        }
        Ok(())
    }

    /// `A_j x`.
    fn apply_scale(&self, j: usize, x: &[f64]) -> Vec<f64> {
        match &self.scales {
            None => x.to_vec(),
            Some(s) => s[j]
                .iter()
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    fn objective_flat(&self, j: usize, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = theta.iter().zip(&self.centers[j]).map(|(t, c)| t - c).collect();
        let ad = self.apply_scale(j, &diff);
        -diff.iter().zip(&ad).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn objective_vector_flat(&self, theta: &[f64]) -> Result<ObjectiveVector> {
        self.check_theta(theta)?;
        ObjectiveVector::new((0..self.objectives()).map(|j| self.objective_flat(j, theta)).collect())
    }

    /// `(f_1(θ), …, f_m(θ))`.
    pub fn objective_vector(&self, theta: &LayeredParams) -> Result<ObjectiveVector> {
        self.objective_vector_flat(&theta.flatten())
    }

    pub fn scalarised_value_flat(&self, w: &PreferenceVector, theta: &[f64]) -> Result<f64> {
        self.check_weights(w)?;
        self.objective_vector_flat(theta)?.scalarise(w)
    }

    /// `Σ_j w_j f_j(θ)`.
    pub fn scalarised_value(&self, w: &PreferenceVector, theta: &LayeredParams) -> Result<f64> {
        self.scalarised_value_flat(w, &theta.flatten())
    }

    /// `∇_θ Σ_j w_j f_j(θ) = −2 Σ_j w_j A_j (θ − c_j)`.
    pub fn gradient_flat(&self, w: &PreferenceVector, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        self.check_theta(theta)?;
        let mut g = vec![0.0; self.dim()];
        for (j, &wj) in w.weights().iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let diff: Vec<f64> = theta.iter().zip(&self.centers[j]).map(|(t, c)| t - c).collect();
            for (gi, ai) in g.iter_mut().zip(self.apply_scale(j, &diff)) {
                *gi -= 2.0 * wj * ai;
            }
        }
        Ok(g)
    }

    /// Maximiser of the scalarised objective:
    /// `θ* = (Σ_j w_j A_j)^{-1} Σ_j w_j A_j c_j`.
    pub fn analytic_optimum(&self, w: &PreferenceVector) -> Result<LayeredParams> {
        self.check_weights(w)?;
        let dim = self.dim();
        let flat = match &self.scales {
            None => {
                let mut theta = vec![0.0; dim];
                for (c, &wj) in self.centers.iter().zip(w.weights()) {
                    for (t, x) in theta.iter_mut().zip(c) {
                        *t += wj * x;
                    }
                }
                theta
            }
            Some(scales) => {
                let mut lhs = DMatrix::<f64>::zeros(dim, dim);
                let mut rhs = DVector::<f64>::zeros(dim);
                for (j, &wj) in w.weights().iter().enumerate() {
                    let a = DMatrix::from_fn(dim, dim, |r, c| scales[j][r][c]);
                    rhs += wj * (&a * DVector::from_column_slice(&self.centers[j]));
                    lhs += wj * a;
                }
                let singular =
                    || Error::Numeric("weighted scale matrix is singular; no unique optimum".into());
                let rows: Vec<Vec<f64>> =
                    (0..dim).map(|r| (0..dim).map(|c| lhs[(r, c)]).collect()).collect();
                let eig = jacobi_eigen(&SymMatrix::from_rows(&rows)?)?.values;
                if eig[0] <= 1e-12 * eig[dim - 1].abs().max(f64::MIN_POSITIVE) {
                    return Err(singular());
                }
                let sol = lhs.lu().solve(&rhs).ok_or_else(singular)?;
                sol.iter().copied().collect()
            }
        };
        LayeredParams::from_flat(&flat, &self.layer_sizes)
    }

    /// Objective vectors of the analytic optima over an `m`-simplex lattice
    /// with `divisions` steps per axis.
    pub fn analytic_front(&self, divisions: usize) -> Result<Vec<ObjectiveVector>> {
        let m = self.objectives();
        let mut out = Vec::new();
        for comp in super::preferences::simplex_lattice(m, divisions.max(1)) {
            let w = PreferenceVector::new(comp)?;
            match self.analytic_optimum(&w) {
                Ok(theta) => out.push(self.objective_vector(&theta)?),
                Err(Error::Numeric(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}
