//! Hamiltonian test problems.
//!
//! States are ordered `(q, p)`; all systems use the canonical structure
//! matrix.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{HbvmError, Result};
use crate::integrator::{
    convergence_order, fine_reference, Hamiltonian, HamiltonianSystem, OrderStudy, SolverConfig,
    Stepper,
};

/// Closed-form solution `t ↦ y(t)` starting from a problem's default state.
pub type ReferenceSolution = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub system: HamiltonianSystem,
    pub default_y0: Vec<f64>,
    pub reference_solution: Option<ReferenceSolution>,
    pub notes: &'static str,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("system", &self.system)
            .field("default_y0", &self.default_y0)
            .field("has_reference", &self.reference_solution.is_some())
            .finish()
    }
}

/// `H = (p² + q²)/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HarmonicOscillator;

impl Hamiltonian for HarmonicOscillator {
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, y: &[f64]) -> f64 {
        0.5 * (y[0] * y[0] + y[1] * y[1])
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&y[..2]);
    }
    fn hessian(&self, _y: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }
    fn poly_degree(&self) -> Option<u32> {
        Some(2)
    }
}

/// `H = p²/2 + q^n/n` for even `n >= 2`.
#[derive(Debug, Clone, Copy)]
pub struct PowerOscillator {
    pub power: u32,
}

impl Hamiltonian for PowerOscillator {
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, y: &[f64]) -> f64 {
        let n = self.power as i32;
        0.5 * y[1] * y[1] + y[0].powi(n) / n as f64
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0].powi(self.power as i32 - 1);
        out[1] = y[1];
    }
    fn hessian(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.power as i32;
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[(n - 1) as f64 * y[0].powi(n - 2), 0.0, 0.0, 1.0],
        ))
    }
    fn poly_degree(&self) -> Option<u32> {
        Some(self.power)
    }
}

/// `H = (p₁² + p₂²)/2 + (q₁² + q₂²)/2 + q₁²q₂ - q₂³/3`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HenonHeiles;

impl Hamiltonian for HenonHeiles {
    fn dim(&self) -> usize {
        4
    }
    fn energy(&self, y: &[f64]) -> f64 {
        let (q1, q2, p1, p2) = (y[0], y[1], y[2], y[3]);
        0.5 * (p1 * p1 + p2 * p2) + 0.5 * (q1 * q1 + q2 * q2) + q1 * q1 * q2 - q2 * q2 * q2 / 3.0
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let (q1, q2) = (y[0], y[1]);
        out[0] = q1 + 2.0 * q1 * q2;
        out[1] = q2 + q1 * q1 - q2 * q2;
        out[2] = y[2];
        out[3] = y[3];
    }
    fn hessian(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let (q1, q2) = (y[0], y[1]);
        let mut m = DMatrix::identity(4, 4);
        m[(0, 0)] = 1.0 + 2.0 * q2;
        m[(0, 1)] = 2.0 * q1;
        m[(1, 0)] = 2.0 * q1;
        m[(1, 1)] = 1.0 - 2.0 * q2;
        Some(m)
    }
    fn poly_degree(&self) -> Option<u32> {
        Some(3)
    }
}

/// `H = p²/2 - cos q`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

impl Hamiltonian for Pendulum {
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, y: &[f64]) -> f64 {
        0.5 * y[1] * y[1] - y[0].cos()
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0].sin();
        out[1] = y[1];
    }
    fn hessian(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 2, &[y[0].cos(), 0.0, 0.0, 1.0]))
    }
}

/// Planar Kepler problem `H = ‖p‖²/2 - 1/‖q‖`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kepler;

impl Hamiltonian for Kepler {
    fn dim(&self) -> usize {
        4
    }
    fn energy(&self, y: &[f64]) -> f64 {
        0.5 * (y[2] * y[2] + y[3] * y[3]) - 1.0 / y[0].hypot(y[1])
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let r = y[0].hypot(y[1]);
        let r3 = r * r * r;
        out[0] = y[0] / r3;
        out[1] = y[1] / r3;
        out[2] = y[2];
        out[3] = y[3];
    }
    fn hessian(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let r = y[0].hypot(y[1]);
        let r3 = r * r * r;
        let r5 = r3 * r * r;
        let mut m = DMatrix::identity(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 / r3 } else { 0.0 };
                m[(i, j)] = delta - 3.0 * y[i] * y[j] / r5;
            }
        }
        Some(m)
    }
}

/// Solves `E - e sin E = M` by Newton's method to `1e-14`.
pub fn solve_kepler_equation(mean_anomaly: f64, e: f64) -> f64 {
    let mut big_e = if e > 0.8 {
        std::f64::consts::PI
    } else {
        mean_anomaly
    };
    for _ in 0..100 {
        let f = big_e - e * big_e.sin() - mean_anomaly;
        let d = f / (1.0 - e * big_e.cos());
        big_e -= d;
        if d.abs() <= 1e-14 {
            break;
        }
    }
    big_e
}

/// Initial state at pericentre of the unit-semi-major-axis orbit with
/// eccentricity `e` (period `2π`).
pub fn kepler_initial_state(e: f64) -> Vec<f64> {
    vec![1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()]
}

/// Exact Kepler orbit from [`kepler_initial_state`].
pub fn kepler_solution(e: f64, t: f64) -> Vec<f64> {
    let big_e = solve_kepler_equation(t, e);
    let (sin_e, cos_e) = big_e.sin_cos();
    let b = (1.0 - e * e).sqrt();
    let rate = 1.0 / (1.0 - e * cos_e);
    vec![cos_e - e, b * sin_e, -sin_e * rate, b * cos_e * rate]
}

pub fn harmonic() -> ProblemSpec {
    ProblemSpec {
        name: "harmonic",
        system: HamiltonianSystem::canonical(HarmonicOscillator),
        default_y0: vec![1.0, 0.0],
        reference_solution: Some(Arc::new(|t: f64| vec![t.cos(), -t.sin()])),
        notes: "H = (p^2 + q^2)/2, degree 2, exact rotation",
    }
}

pub fn quartic() -> ProblemSpec {
    ProblemSpec {
        name: "quartic",
        system: HamiltonianSystem::canonical(PowerOscillator { power: 4 }),
        default_y0: vec![1.0, 0.0],
        reference_solution: None,
        notes: "H = p^2/2 + q^4/4, degree 4",
    }
}

pub fn sextic() -> ProblemSpec {
    ProblemSpec {
        name: "sextic",
        system: HamiltonianSystem::canonical(PowerOscillator { power: 6 }),
        default_y0: vec![1.0, 0.0],
        reference_solution: None,
        notes: "H = p^2/2 + q^6/6, degree 6",
    }
}

pub fn henon_heiles() -> ProblemSpec {
    ProblemSpec {
        name: "henon-heiles",
        system: HamiltonianSystem::canonical(HenonHeiles),
        default_y0: vec![0.0, 0.1, 0.5, 0.0],
        reference_solution: None,
        notes: "Hénon–Heiles potential, degree 3, bounded orbit at H ≈ 0.13",
    }
}

pub fn pendulum() -> ProblemSpec {
    ProblemSpec {
        name: "pendulum",
        system: HamiltonianSystem::canonical(Pendulum),
        default_y0: vec![1.0, 0.0],
        reference_solution: None,
        notes: "H = p^2/2 - cos q, not polynomial",
    }
}

pub const KEPLER_ECCENTRICITY: f64 = 0.6;

pub fn kepler(e: f64) -> ProblemSpec {
    ProblemSpec {
        name: "kepler",
        system: HamiltonianSystem::canonical(Kepler),
        default_y0: kepler_initial_state(e),
        reference_solution: Some(Arc::new(move |t: f64| kepler_solution(e, t))),
        notes: "H = |p|^2/2 - 1/|q|, eccentric orbit from pericentre, period 2π",
    }
}

pub fn catalog() -> Vec<ProblemSpec> {
    vec![
        harmonic(),
        quartic(),
        sextic(),
        henon_heiles(),
        pendulum(),
        kepler(KEPLER_ECCENTRICITY),
    ]
}

/// Looks a problem up by name (`henon_heiles` and `henonheiles` are accepted
/// for `henon-heiles`).
pub fn problem(name: &str) -> Result<ProblemSpec> {
    let normalized = name.to_ascii_lowercase().replace('_', "-");
    let normalized = if normalized == "henonheiles" {
        "henon-heiles".to_string()
    } else {
        normalized
    };
    catalog()
        .into_iter()
        .find(|p| p.name == normalized)
        .ok_or_else(|| HbvmError::UnknownProblem(name.to_string()))
}

/// Step sizes `hmax, hmax/2, …` (`levels` of them).
pub fn halving_steps(hmax: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|i| hmax / 2f64.powi(i as i32)).collect()
}

/// Convergence study on `problem` from its default state. Problems without a
/// closed-form solution are compared with a run at a quarter of the smallest
/// step size.
pub fn order_study(
    problem: &ProblemSpec,
    stepper: &Stepper,
    hmax: f64,
    levels: usize,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<OrderStudy> {
    if !(hmax > 0.0 && hmax.is_finite()) {
        return Err(HbvmError::Config(format!(
            "hmax must be positive, got {hmax}"
        )));
    }
    let h_list = halving_steps(hmax, levels);
    let sys = &problem.system;
    let y0 = &problem.default_y0;
    match &problem.reference_solution {
        Some(r) => convergence_order(stepper, sys, y0, &|t| r(t), t_end, &h_list, cfg),
        None => {
            let h_fine = h_list.last().copied().unwrap_or(hmax) / 4.0;
            let exact = fine_reference(stepper, sys, y0, t_end, h_fine, cfg)?;
            convergence_order(stepper, sys, y0, &|_| exact.clone(), t_end, &h_list, cfg)
        }
    }
}
