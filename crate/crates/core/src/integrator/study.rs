use serde::Serialize;

use super::step::{SolverConfig, Stepper};
use super::system::HamiltonianSystem;
use crate::error::{HbvmError, Result};

/// States on a uniform time grid together with their energies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    /// Solver iterations for the step ending at each time (0 for the initial
    /// state).
    pub iteration_counts: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Runs `n_steps` steps of size `h` from `t = 0`; stops at the first step
/// whose stage equations fail to converge.
pub fn integrate(
    stepper: &Stepper,
    sys: &HamiltonianSystem,
    y0: &[f64],
    h: f64,
    n_steps: usize,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(HbvmError::Config("n_steps must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(HbvmError::Config(format!(
            "step size must be positive, got {h}"
        )));
    }
    cfg.validate()?;
    if y0.len() != sys.dim() {
        return Err(HbvmError::Dimension(format!(
            "state has length {}, system dimension {}",
            y0.len(),
            sys.dim()
        )));
    }
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        energies: Vec::with_capacity(n_steps + 1),
        iteration_counts: Vec::with_capacity(n_steps + 1),
    };
    traj.times.push(0.0);
    traj.states.push(y0.to_vec());
    traj.energies.push(sys.energy(y0));
    traj.iteration_counts.push(0);
    let mut y = y0.to_vec();
    for n in 1..=n_steps {
        let out = stepper
            .step(sys, &y, h, cfg)
            .map_err(|e| HbvmError::StepFailed {
                step: n,
                source: Box::new(e),
            })?;
        y = out.y1;
        traj.times.push(n as f64 * h);
        traj.energies.push(sys.energy(&y));
        traj.states.push(y.clone());
        traj.iteration_counts.push(out.iterations);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyDrift {
    /// `max_n |H(y_n) - H(y_0)|`.
    pub max_abs: f64,
    /// `|H(y_N) - H(y_0)|`.
    pub final_abs: f64,
}

impl EnergyDrift {
    /// `max_abs / |H(y_0)|`, or `max_abs` when `H(y_0) = 0`.
    pub fn relative(&self, h0: f64) -> f64 {
        if h0 == 0.0 {
            self.max_abs
        } else {
            self.max_abs / h0.abs()
        }
    }
}

pub fn energy_drift(traj: &Trajectory) -> EnergyDrift {
    let h0 = traj.energies.first().copied().unwrap_or(0.0);
    let max_abs = traj
        .energies
        .iter()
        .fold(0.0f64, |m, e| m.max((e - h0).abs()));
    let final_abs = traj.energies.last().map_or(0.0, |e| (e - h0).abs());
    EnergyDrift { max_abs, final_abs }
}

/// Errors at `t_end` for a sequence of step sizes and the fitted order.
#[derive(Debug, Clone, Serialize)]
pub struct OrderStudy {
    pub t_end: f64,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// Leading points used in the fit; trailing ones sit on the round-off
    /// floor.
    pub fitted: usize,
    /// Least-squares slope of `log(error)` against `log(h)`.
    pub slope: f64,
    /// Slopes between consecutive step sizes.
    pub local_slopes: Vec<f64>,
}

/// Errors below this count as round-off, relative to the solution size.
pub const ERROR_FLOOR: f64 = 1e-12;

fn steps_for(t_end: f64, h: f64) -> Result<usize> {
    let n = (t_end / h).round();
    if n < 1.0 || ((n * h) - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(HbvmError::Config(format!(
            "t_end = {t_end} is not an integer multiple of h = {h}"
        )));
    }
    Ok(n as usize)
}

/// Measures the convergence order against `reference(t_end)`.
///
/// `h_list` needs at least three decreasing step sizes. Points whose error
/// sits on the round-off floor (below `1e-12` times the solution size, or
/// shrinking by less than a factor 1.5 from the previous size) are trimmed
/// from the small-`h` end before fitting.
pub fn convergence_order(
    stepper: &Stepper,
    sys: &HamiltonianSystem,
    y0: &[f64],
    reference: &dyn Fn(f64) -> Vec<f64>,
    t_end: f64,
    h_list: &[f64],
    cfg: &SolverConfig,
) -> Result<OrderStudy> {
    if h_list.len() < 3 {
        return Err(HbvmError::Config(
            "order study needs at least three step sizes".into(),
        ));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HbvmError::Config(
            "step sizes must be strictly decreasing".into(),
        ));
    }
    let exact = reference(t_end);
    let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut errors = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let n = steps_for(t_end, h)?;
        let traj = integrate(stepper, sys, y0, h, n, cfg)?;
        let err = traj
            .last_state()
            .iter()
            .zip(&exact)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        errors.push(err);
    }
    let mut fitted = errors.len();
    while fitted > 2 {
        let last = errors[fitted - 1];
        let prev = errors[fitted - 2];
        if last <= ERROR_FLOOR * scale || prev / last < 1.5 {
            fitted -= 1;
        } else {
            break;
        }
    }
    let local_slopes = h_list
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let slope = least_squares_slope(&h_list[..fitted], &errors[..fitted]);
    Ok(OrderStudy {
        t_end,
        h: h_list.to_vec(),
        errors,
        fitted,
        slope,
        local_slopes,
    })
}

/// Reference solution from a fine run of the same method (for problems
/// without a closed form).
pub fn fine_reference(
    stepper: &Stepper,
    sys: &HamiltonianSystem,
    y0: &[f64],
    t_end: f64,
    h_fine: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = steps_for(t_end, h_fine)?;
    let fine_cfg = SolverConfig { tol: 1e-14, ..*cfg };
    Ok(integrate(stepper, sys, y0, h_fine, n, &fine_cfg)?
        .last_state()
        .to_vec())
}

fn least_squares_slope(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
