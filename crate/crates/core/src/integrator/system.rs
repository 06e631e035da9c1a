use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{HbvmError, Result};

/// A Hamiltonian `H(y)` on a state `y = (q, p)` of even dimension `2m`.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    fn energy(&self, y: &[f64]) -> f64;

    fn gradient(&self, y: &[f64], out: &mut [f64]);

    /// `∇²H(y)`, when available analytically.
    fn hessian(&self, _y: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Total degree `ν` when `H` is a polynomial.
    fn poly_degree(&self) -> Option<u32> {
        None
    }
}

/// Canonical `J = [[0, I], [-I, 0]]` with `q` first and `p` second.
pub fn canonical_structure(dim: usize) -> DMatrix<f64> {
    let m = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// `ẏ = J ∇H(y)` with a constant skew-symmetric `J`.
#[derive(Clone)]
pub struct HamiltonianSystem {
    hamiltonian: Arc<dyn Hamiltonian>,
    structure: DMatrix<f64>,
    canonical: bool,
}

impl std::fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("dim", &self.dim())
            .field("poly_degree", &self.poly_degree())
            .field("canonical", &self.canonical)
            .finish()
    }
}

impl HamiltonianSystem {
    /// Canonical system; panics if the dimension is odd.
    pub fn canonical(h: impl Hamiltonian + 'static) -> Self {
        let dim = h.dim();
        assert!(
            dim.is_multiple_of(2) && dim > 0,
            "canonical systems need an even dimension"
        );
        Self {
            hamiltonian: Arc::new(h),
            structure: canonical_structure(dim),
            canonical: true,
        }
    }

    /// System with an explicit structure matrix, which must satisfy `J = -Jᵀ`
    /// exactly.
    pub fn with_structure(h: impl Hamiltonian + 'static, j: DMatrix<f64>) -> Result<Self> {
        let dim = h.dim();
        if j.nrows() != dim || j.ncols() != dim {
            return Err(HbvmError::Dimension(format!(
                "structure matrix is {}×{}, state dimension {dim}",
                j.nrows(),
                j.ncols()
            )));
        }
        if j != -j.transpose() {
            return Err(HbvmError::Config(
                "structure matrix must be skew-symmetric".into(),
            ));
        }
        let canonical = j == canonical_structure(dim);
        Ok(Self {
            hamiltonian: Arc::new(h),
            structure: j,
            canonical,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn energy(&self, y: &[f64]) -> f64 {
        self.hamiltonian.energy(y)
    }

    pub fn gradient(&self, y: &[f64], out: &mut [f64]) {
        self.hamiltonian.gradient(y, out)
    }

    pub fn poly_degree(&self) -> Option<u32> {
        self.hamiltonian.poly_degree()
    }

    pub fn structure(&self) -> &DMatrix<f64> {
        &self.structure
    }

    /// `f(y) = J ∇H(y)`. `scratch` must have length `dim`.
    pub fn vector_field(&self, y: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.hamiltonian.gradient(y, scratch);
        if self.canonical {
            let m = self.dim() / 2;
            for i in 0..m {
                out[i] = scratch[m + i];
                out[m + i] = -scratch[i];
            }
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self
                    .structure
                    .row(i)
                    .iter()
                    .zip(scratch.iter())
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
    }

    /// `J ∇²H(y)` from the analytic Hessian, if the Hamiltonian provides one.
    pub fn analytic_jacobian(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        self.hamiltonian
            .hessian(y)
            .map(|hess| &self.structure * hess)
    }

    /// Forward-difference Jacobian of `f` with steps `sqrt(ε)(1 + |y_j|)`.
    pub fn fd_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut scratch = vec![0.0; n];
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        self.vector_field(y, &mut scratch, &mut f0);
        let mut yp = y.to_vec();
        let mut jac = DMatrix::zeros(n, n);
        let sqrt_eps = f64::EPSILON.sqrt();
        for j in 0..n {
            let step = sqrt_eps * (1.0 + y[j].abs());
            yp[j] = y[j] + step;
            let actual = yp[j] - y[j];
            self.vector_field(&yp, &mut scratch, &mut f1);
            for i in 0..n {
                jac[(i, j)] = (f1[i] - f0[i]) / actual;
            }
            yp[j] = y[j];
        }
        jac
    }

    /// Largest relative discrepancy between `∇H` and central differences of
    /// `H` at `y`.
    pub fn gradient_check(&self, y: &[f64]) -> f64 {
        let n = self.dim();
        let mut grad = vec![0.0; n];
        self.gradient(y, &mut grad);
        let scale = grad.iter().fold(1.0f64, |a, g| a.max(g.abs()));
        let mut yp = y.to_vec();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let step = 1e-5 * (1.0 + y[j].abs());
            yp[j] = y[j] + step;
            let hp = self.energy(&yp);
            yp[j] = y[j] - step;
            let hm = self.energy(&yp);
            yp[j] = y[j];
            let fd = (hp - hm) / (2.0 * step);
            worst = worst.max((fd - grad[j]).abs() / scale);
        }
        worst
    }
}
