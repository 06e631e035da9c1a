use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::HamiltonianSystem;
use crate::error::{HbvmError, Result};
use crate::tableau::{BasisMatrices, ButcherTableau, HbvmSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianSource {
    FiniteDifference,
    UserSupplied,
}

/// Nonlinear stage solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Absolute max-norm tolerance on the fixed-point residual.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian: JacobianSource,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::FixedPoint,
            tol: 1e-13,
            max_iter: 100,
            jacobian: JacobianSource::FiniteDifference,
        }
    }
}

impl SolverConfig {
    pub fn newton() -> Self {
        Self {
            mode: SolverMode::Newton,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(HbvmError::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(HbvmError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub y1: Vec<f64>,
    pub iterations: usize,
    /// Final max-norm residual of the stage (or γ) equations.
    pub residual: f64,
}

/// Expansion coefficients and stage values of the γ formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaState {
    /// `gamma[j]` is the `2m`-vector coefficient of `P_{j+1}`.
    pub gamma: Vec<Vec<f64>>,
    /// `stage_values[l] = y0 + h Σ_j (∫₀^{τ_l} P_j) γ_j`.
    pub stage_values: Vec<Vec<f64>>,
}

const DIVERGENCE_WINDOW: usize = 5;

/// Fixed point `z = Φ(z)` of a map acting on `blocks` blocks of length `dim`.
///
/// Newton mode solves `(I - h (M ⊗ J_f(y0))) Δ = Φ(z) - z`, with the
/// iteration matrix factored once.
struct StageProblem<'a, F: FnMut(&[f64], &mut [f64])> {
    sys: &'a HamiltonianSystem,
    y0: &'a [f64],
    h: f64,
    /// Coupling matrix in the linearization of Φ.
    coupling: &'a DMatrix<f64>,
    map: F,
}

impl<F: FnMut(&[f64], &mut [f64])> StageProblem<'_, F> {
    fn solve(&mut self, z: &mut [f64], cfg: &SolverConfig) -> Result<(usize, f64)> {
        cfg.validate()?;
        match cfg.mode {
            SolverMode::FixedPoint => self.fixed_point(z, cfg),
            SolverMode::Newton => self.newton(z, cfg),
        }
    }

    fn fixed_point(&mut self, z: &mut [f64], cfg: &SolverConfig) -> Result<(usize, f64)> {
        let mut next = vec![0.0; z.len()];
        let mut prev_res = f64::INFINITY;
        let mut growth = 0;
        let mut res = f64::INFINITY;
        for it in 1..=cfg.max_iter {
            (self.map)(z, &mut next);
            res = max_diff(z, &next);
            z.copy_from_slice(&next);
            if !res.is_finite() {
                return Err(HbvmError::FixedPointDiverged {
                    iterations: it,
                    residual: res,
                });
            }
            if res <= cfg.tol {
                return Ok((it, res));
            }
            growth = if res > prev_res { growth + 1 } else { 0 };
            if growth >= DIVERGENCE_WINDOW {
                return Err(HbvmError::FixedPointDiverged {
                    iterations: it,
                    residual: res,
                });
            }
            prev_res = res;
        }
        Err(HbvmError::SolverNotConverged {
            iterations: cfg.max_iter,
            residual: res,
        })
    }

    fn newton(&mut self, z: &mut [f64], cfg: &SolverConfig) -> Result<(usize, f64)> {
        let dim = self.sys.dim();
        let jf = match cfg.jacobian {
            JacobianSource::FiniteDifference => self.sys.fd_jacobian(self.y0),
            JacobianSource::UserSupplied => {
                self.sys.analytic_jacobian(self.y0).ok_or_else(|| {
                    HbvmError::Config("Hamiltonian provides no analytic Hessian".into())
                })?
            }
        };
        let blocks = self.coupling.nrows();
        let n = blocks * dim;
        let mut iter = DMatrix::<f64>::identity(n, n);
        for bi in 0..blocks {
            for bj in 0..blocks {
                let c = self.h * self.coupling[(bi, bj)];
                if c == 0.0 {
                    continue;
                }
                for i in 0..dim {
                    for j in 0..dim {
                        iter[(bi * dim + i, bj * dim + j)] -= c * jf[(i, j)];
                    }
                }
            }
        }
        let lu = iter.lu();
        let mut image = vec![0.0; n];
        let mut res = f64::INFINITY;
        for it in 1..=cfg.max_iter {
            (self.map)(z, &mut image);
            let rhs = DVector::from_iterator(n, image.iter().zip(z.iter()).map(|(a, b)| a - b));
            res = rhs.amax();
            if !res.is_finite() {
                break;
            }
            if res <= cfg.tol {
                return Ok((it, res));
            }
            let delta = lu
                .solve(&rhs)
                .ok_or_else(|| HbvmError::Singular("Newton iteration matrix".into()))?;
            for (zi, d) in z.iter_mut().zip(delta.iter()) {
                *zi += d;
            }
        }
        Err(HbvmError::SolverNotConverged {
            iterations: cfg.max_iter,
            residual: res,
        })
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() {
            f64::NAN
        } else {
            m.max(d)
        }
    })
}

fn check_inputs(sys: &HamiltonianSystem, y0: &[f64], h: f64) -> Result<()> {
    if y0.len() != sys.dim() {
        return Err(HbvmError::Dimension(format!(
            "state has length {}, system dimension {}",
            y0.len(),
            sys.dim()
        )));
    }
    if !(h.is_finite() && h != 0.0) {
        return Err(HbvmError::Config(format!(
            "step size must be finite and nonzero, got {h}"
        )));
    }
    Ok(())
}

fn require_positive(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(HbvmError::Config(format!(
            "step size must be positive, got {h}"
        )))
    }
}

/// One step of the `k`-stage Runge–Kutta form: stages
/// `Y_i = y0 + h Σ_j A_ij f(Y_j)`, update `y1 = y0 + h Σ_i b_i f(Y_i)`.
pub fn rk_step(
    tab: &ButcherTableau,
    sys: &HamiltonianSystem,
    y0: &[f64],
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    require_positive(h)?;
    rk_step_signed(tab, sys, y0, h, cfg)
}

/// [`rk_step`] without the `h > 0` restriction, for time-reversal checks.
pub fn rk_step_signed(
    tab: &ButcherTableau,
    sys: &HamiltonianSystem,
    y0: &[f64],
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    check_inputs(sys, y0, h)?;
    let k = tab.stages();
    let dim = sys.dim();
    let mut stages: Vec<f64> = y0.iter().copied().cycle().take(k * dim).collect();
    let mut f = vec![0.0; k * dim];
    let mut scratch = vec![0.0; dim];

    let map = |z: &[f64], out: &mut [f64]| {
        for l in 0..k {
            sys.vector_field(
                &z[l * dim..(l + 1) * dim],
                &mut scratch,
                &mut f[l * dim..(l + 1) * dim],
            );
        }
        for i in 0..k {
            let row = &mut out[i * dim..(i + 1) * dim];
            row.copy_from_slice(y0);
            for j in 0..k {
                let c = h * tab.a[(i, j)];
                if c != 0.0 {
                    for (o, fj) in row.iter_mut().zip(&f[j * dim..(j + 1) * dim]) {
                        *o += c * fj;
                    }
                }
            }
        }
    };
    let mut problem = StageProblem {
        sys,
        y0,
        h,
        coupling: &tab.a,
        map,
    };
    let (iterations, residual) = problem.solve(&mut stages, cfg)?;

    let mut y1 = y0.to_vec();
    let mut fl = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for l in 0..k {
        sys.vector_field(&stages[l * dim..(l + 1) * dim], &mut scratch, &mut fl);
        for (y, fv) in y1.iter_mut().zip(&fl) {
            *y += h * tab.b[l] * fv;
        }
    }
    Ok(StepOutcome {
        y1,
        iterations,
        residual,
    })
}

/// Precomputed matrices for stepping in the γ formulation.
#[derive(Debug, Clone)]
pub struct GammaSolver {
    spec: HbvmSpec,
    basis: BasisMatrices,
    /// `P_sᵀ Ω`.
    projector: DMatrix<f64>,
    /// `P_sᵀ Ω I_s`, the linearization coupling.
    coupling: DMatrix<f64>,
}

impl GammaSolver {
    pub fn new(spec: &HbvmSpec) -> Self {
        let basis = spec.basis();
        let projector = basis.projector();
        let coupling = &projector * &basis.i_s;
        Self {
            spec: spec.clone(),
            basis,
            projector,
            coupling,
        }
    }

    pub fn spec(&self) -> &HbvmSpec {
        &self.spec
    }

    pub fn step(
        &self,
        sys: &HamiltonianSystem,
        y0: &[f64],
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<(StepOutcome, GammaState)> {
        require_positive(h)?;
        self.step_signed(sys, y0, h, cfg)
    }

    /// Solves `γ_j = Σ_l ω_l P_j(τ_l) f(y0 + h Σ_i (∫₀^{τ_l} P_i) γ_i)` for the
    /// `s` coefficient vectors, then sets `y1 = y0 + h γ_1`.
    pub fn step_signed(
        &self,
        sys: &HamiltonianSystem,
        y0: &[f64],
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<(StepOutcome, GammaState)> {
        check_inputs(sys, y0, h)?;
        let k = self.spec.k();
        let s = self.spec.s();
        let dim = sys.dim();
        let i_s = &self.basis.i_s;
        let projector = &self.projector;

        let stage_values = |gamma: &[f64], out: &mut [f64]| {
            for l in 0..k {
                let row = &mut out[l * dim..(l + 1) * dim];
                row.copy_from_slice(y0);
                for j in 0..s {
                    let c = h * i_s[(l, j)];
                    for (o, g) in row.iter_mut().zip(&gamma[j * dim..(j + 1) * dim]) {
                        *o += c * g;
                    }
                }
            }
        };

        let mut gamma = vec![0.0; s * dim];
        let mut stages = vec![0.0; k * dim];
        let mut f = vec![0.0; k * dim];
        let mut scratch = vec![0.0; dim];
        let map = |g: &[f64], out: &mut [f64]| {
            stage_values(g, &mut stages);
            for l in 0..k {
                sys.vector_field(
                    &stages[l * dim..(l + 1) * dim],
                    &mut scratch,
                    &mut f[l * dim..(l + 1) * dim],
                );
            }
            out.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..s {
                let row = &mut out[j * dim..(j + 1) * dim];
                for l in 0..k {
                    let c = projector[(j, l)];
                    for (o, fl) in row.iter_mut().zip(&f[l * dim..(l + 1) * dim]) {
                        *o += c * fl;
                    }
                }
            }
        };
        let mut problem = StageProblem {
            sys,
            y0,
            h,
            coupling: &self.coupling,
            map,
        };
        let (iterations, residual) = problem.solve(&mut gamma, cfg)?;

        let mut stage_buf = vec![0.0; k * dim];
        stage_values(&gamma, &mut stage_buf);
        let y1 = y0
            .iter()
            .zip(&gamma[..dim])
            .map(|(y, g)| y + h * g)
            .collect();
        let state = GammaState {
            gamma: gamma.chunks(dim).map(<[f64]>::to_vec).collect(),
            stage_values: stage_buf.chunks(dim).map(<[f64]>::to_vec).collect(),
        };
        Ok((
            StepOutcome {
                y1,
                iterations,
                residual,
            },
            state,
        ))
    }
}

/// One step of the γ formulation; the nonlinear system has `s · 2m`
/// unknowns regardless of `k`.
pub fn gamma_step(
    spec: &HbvmSpec,
    sys: &HamiltonianSystem,
    y0: &[f64],
    h: f64,
    cfg: &SolverConfig,
) -> Result<(StepOutcome, GammaState)> {
    GammaSolver::new(spec).step(sys, y0, h, cfg)
}

/// Either formulation behind one stepping interface.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Stepper {
    Rk(ButcherTableau),
    Gamma(GammaSolver),
}

impl Stepper {
    pub fn rk(spec: &HbvmSpec) -> Result<Self> {
        Ok(Stepper::Rk(crate::tableau::hbvm_tableau(spec)?))
    }

    pub fn gamma(spec: &HbvmSpec) -> Self {
        Stepper::Gamma(GammaSolver::new(spec))
    }

    pub fn step(
        &self,
        sys: &HamiltonianSystem,
        y0: &[f64],
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<StepOutcome> {
        require_positive(h)?;
        self.step_signed(sys, y0, h, cfg)
    }

    pub fn step_signed(
        &self,
        sys: &HamiltonianSystem,
        y0: &[f64],
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<StepOutcome> {
        match self {
            Stepper::Rk(tab) => rk_step_signed(tab, sys, y0, h, cfg),
            Stepper::Gamma(g) => g.step_signed(sys, y0, h, cfg).map(|(out, _)| out),
        }
    }
}
