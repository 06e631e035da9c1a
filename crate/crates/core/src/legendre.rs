//! Orthonormal shifted-Legendre basis on `[0, 1]` and the quadrature rules
//! built on it.
//!
//! `P_j` denotes the orthonormal polynomial of degree `j - 1`,
//! `P_j(t) = sqrt(2j - 1) * L_{j-1}(2t - 1)` with `L_n` the classical
//! Legendre polynomial on `[-1, 1]`, so that `∫₀¹ P_i P_j = δ_ij`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HbvmError, Result};

/// Index `j >= 1` of the basis polynomial `P_j` (degree `j - 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolyIndex(usize);

impl PolyIndex {
    pub fn new(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(HbvmError::InvalidIndex(j));
        }
        Ok(Self(j))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Polynomial degree of `P_j`.
    pub fn degree(self) -> usize {
        self.0 - 1
    }
}

impl TryFrom<usize> for PolyIndex {
    type Error = HbvmError;

    fn try_from(j: usize) -> Result<Self> {
        Self::new(j)
    }
}

/// Evaluates `P_j(t)` with the three-term recurrence of the orthonormal basis.
pub fn eval_orthonormal(j: PolyIndex, t: f64) -> f64 {
    eval_orthonormal_all(j.get(), t)[j.get() - 1]
}

/// Values `P_1(t), …, P_n(t)`.
pub fn eval_orthonormal_all(n: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let x = 2.0 * t - 1.0;
    out.push(1.0);
    if n == 1 {
        return out;
    }
    out.push(3f64.sqrt() * x);
    for j in 1..n - 1 {
        // out[j] = P_{j+1}, out[j-1] = P_j, producing P_{j+2}.
        let jf = j as f64;
        let a = (2.0 * jf + 1.0) / (jf + 1.0) * ((2.0 * jf + 3.0) / (2.0 * jf + 1.0)).sqrt();
        let b = jf / (jf + 1.0) * ((2.0 * jf + 3.0) / (2.0 * jf - 1.0)).sqrt();
        let next = x * a * out[j] - b * out[j - 1];
        out.push(next);
    }
    out
}

/// `ξ_j = 1 / (2 sqrt((2j+1)(2j-1)))`, the off-diagonal coefficients of the
/// Gauss–Legendre spectral matrix.
pub fn xi(j: usize) -> Result<f64> {
    if j == 0 {
        return Err(HbvmError::InvalidIndex(j));
    }
    Ok(xi_unchecked(j))
}

pub(crate) fn xi_unchecked(j: usize) -> f64 {
    let jf = j as f64;
    1.0 / (2.0 * ((2.0 * jf + 1.0) * (2.0 * jf - 1.0)).sqrt())
}

/// Exact `∫₀^c P_j(x) dx`, written in the basis itself:
///
/// ```text
/// ∫₀^c P_1 = P_1(c)/2 + ξ_1 P_2(c)
/// ∫₀^c P_j = -ξ_{j-1} P_{j-1}(c) + ξ_j P_{j+1}(c),   j >= 2
/// ```
pub fn integral_orthonormal(j: PolyIndex, c: f64) -> Result<f64> {
    check_unit(c)?;
    Ok(integrals_orthonormal_all(j.get(), c)[j.get() - 1])
}

/// `∫₀^c P_1, …, ∫₀^c P_n` sharing one recurrence sweep. `c` is not checked.
pub(crate) fn integrals_orthonormal_all(n: usize, c: f64) -> Vec<f64> {
    let p = eval_orthonormal_all(n + 1, c);
    (1..=n)
        .map(|j| {
            if j == 1 {
                0.5 * p[0] + xi_unchecked(1) * p[1]
            } else {
                -xi_unchecked(j - 1) * p[j - 2] + xi_unchecked(j) * p[j]
            }
        })
        .collect()
}

fn check_unit(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(HbvmError::OutOfDomain {
            value: c,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// Classical Legendre `L_n(x)` and `L_{n-1}(x)` on `[-1, 1]`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 1..n {
        let mf = m as f64;
        let p2 = ((2.0 * mf + 1.0) * x * p1 - mf * p0) / (mf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Newton iteration on `f(x) / f'(x)` until the correction falls below the
/// tolerance.
fn newton_root(mut x: f64, what: &'static str, step: impl Fn(f64) -> (f64, f64)) -> Result<f64> {
    for _ in 0..NEWTON_MAX_ITER {
        let (f, df) = step(x);
        let dx = f / df;
        x -= dx;
        if dx.abs() <= NEWTON_TOL || f.abs() <= NEWTON_TOL {
            // One polishing step once inside the basin.
            let (f, df) = step(x);
            return Ok(x - f / df);
        }
    }
    Err(HbvmError::NoConvergence {
        what,
        iterations: NEWTON_MAX_ITER,
    })
}

/// Node family of an [`AbscissaeSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFamily {
    Gauss,
    Lobatto,
    Custom,
}

impl NodeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeFamily::Gauss => "gauss",
            NodeFamily::Lobatto => "lobatto",
            NodeFamily::Custom => "custom",
        }
    }
}

impl std::fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NodeFamily {
    type Err = HbvmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gauss" => Ok(NodeFamily::Gauss),
            "lobatto" => Ok(NodeFamily::Lobatto),
            "custom" => Ok(NodeFamily::Custom),
            other => Err(HbvmError::Config(format!("unknown node family `{other}`"))),
        }
    }
}

/// Quadrature nodes `τ_i` on `[0, 1]` with weights `ω_i`.
///
/// Fundamental and silent abscissae are not distinguished: the set is used as
/// a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbscissaeSystem {
    tau: Vec<f64>,
    omega: Vec<f64>,
    family: NodeFamily,
}

impl AbscissaeSystem {
    /// Builds a system from explicit nodes and weights after validating them.
    pub fn from_parts(tau: Vec<f64>, omega: Vec<f64>, family: NodeFamily) -> Result<Self> {
        if tau.len() != omega.len() {
            return Err(HbvmError::Dimension(format!(
                "{} nodes but {} weights",
                tau.len(),
                omega.len()
            )));
        }
        validate_nodes(&tau, family == NodeFamily::Lobatto)?;
        let sum: f64 = omega.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(HbvmError::InvalidNodes(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { tau, omega, family })
    }

    /// Arbitrary distinct nodes in `(0, 1]`, sorted, with interpolatory weights.
    pub fn custom(nodes: &[f64]) -> Result<Self> {
        let mut tau = nodes.to_vec();
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(HbvmError::InvalidNodes("non-finite node".into()));
        }
        tau.sort_by(f64::total_cmp);
        validate_nodes(&tau, false)?;
        let omega = interpolatory_weights(&tau)?;
        Ok(Self {
            tau,
            omega,
            family: NodeFamily::Custom,
        })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// `Σ ω_i g(τ_i)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.tau
            .iter()
            .zip(&self.omega)
            .map(|(&t, &w)| w * g(t))
            .sum()
    }
}

fn validate_nodes(tau: &[f64], allow_zero: bool) -> Result<()> {
    if tau.is_empty() {
        return Err(HbvmError::InvalidNodes("empty node set".into()));
    }
    let lo_ok = |t: f64| if allow_zero { t >= 0.0 } else { t > 0.0 };
    if let Some(&t) = tau.iter().find(|&&t| !(lo_ok(t) && t <= 1.0)) {
        let lo = if allow_zero { "[0" } else { "(0" };
        return Err(HbvmError::InvalidNodes(format!(
            "node {t} outside {lo}, 1]"
        )));
    }
    if let Some(w) = tau.windows(2).find(|w| w[1] <= w[0]) {
        return Err(HbvmError::InvalidNodes(format!(
            "nodes must be strictly increasing and distinct ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `k` Gauss–Legendre nodes and weights on `[0, 1]` (exact to degree `2k-1`).
pub fn gauss_system(k: usize) -> Result<AbscissaeSystem> {
    if k == 0 {
        return Err(HbvmError::InvalidSpec("gauss_system needs k >= 1".into()));
    }
    let kf = k as f64;
    let half = k.div_ceil(2);
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    for i in 0..half {
        let root = if k % 2 == 1 && i == half - 1 {
            0.0
        } else {
            let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
            newton_root(guess, "Gauss-Legendre node iteration", |x| {
                let (p, pm1) = legendre_pair(k, x);
                let dp = kf * (x * p - pm1) / (x * x - 1.0);
                (p, dp)
            })?
        };
        let (p, pm1) = legendre_pair(k, root);
        let dp = if k == 1 {
            1.0
        } else {
            kf * (root * p - pm1) / (root * root - 1.0)
        };
        let weight = 1.0 / (kf * pm1 * dp);
        // Descending roots from the guesses; mirror into ascending order.
        x[k - 1 - i] = root;
        x[i] = -root;
        w[k - 1 - i] = weight;
        w[i] = weight;
    }
    let tau = x.iter().map(|&xi| 0.5 * (1.0 + xi)).collect::<Vec<_>>();
    validate_nodes(&tau, false)?;
    Ok(AbscissaeSystem {
        tau,
        omega: w,
        family: NodeFamily::Gauss,
    })
}

/// `k` Gauss–Lobatto nodes on `[0, 1]` including both endpoints (exact to
/// degree `2k-3`).
pub fn lobatto_system(k: usize) -> Result<AbscissaeSystem> {
    if k < 2 {
        return Err(HbvmError::InvalidSpec("lobatto_system needs k >= 2".into()));
    }
    let n = k - 1;
    let nf = n as f64;
    let mut x = vec![0.0; k];
    x[0] = -1.0;
    x[k - 1] = 1.0;
    let interior = k - 2;
    for i in 0..interior.div_ceil(2) {
        let root = if interior % 2 == 1 && i == interior.div_ceil(2) - 1 {
            0.0
        } else {
            let guess = (std::f64::consts::PI * (i as f64 + 1.0) / nf).cos();
            newton_root(guess, "Gauss-Lobatto node iteration", |x| {
                let (p, pm1) = legendre_pair(n, x);
                let dp = nf * (x * p - pm1) / (x * x - 1.0);
                let ddp = (2.0 * x * dp - nf * (nf + 1.0) * p) / (1.0 - x * x);
                (dp, ddp)
            })?
        };
        x[k - 2 - i] = root;
        x[1 + i] = -root;
    }
    let omega = x
        .iter()
        .map(|&xi| {
            let (p, _) = legendre_pair(n, xi);
            1.0 / (nf * (nf + 1.0) * p * p)
        })
        .collect();
    let tau: Vec<f64> = x.iter().map(|&xi| 0.5 * (1.0 + xi)).collect();
    validate_nodes(&tau, true)?;
    Ok(AbscissaeSystem {
        tau,
        omega,
        family: NodeFamily::Lobatto,
    })
}

/// Legendre-basis Vandermonde `V_ij = P_{j+1}(τ_i)`, LU-factored. The
/// Lagrange polynomials are `ℓ_i = Σ_j (V⁻¹)_{ji} P_{j+1}`, which keeps the
/// expansion well conditioned for the node counts used here.
fn lagrange_basis_lu(tau: &[f64]) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let k = tau.len();
    let vt = DMatrix::from_fn(k, k, |j, i| eval_orthonormal_all(k, tau[i])[j]);
    let lu = vt.lu();
    if !lu.is_invertible() {
        return Err(HbvmError::InvalidNodes(
            "singular interpolation matrix".into(),
        ));
    }
    Ok(lu)
}

/// `α_ij = ∫₀^{τ_i} ℓ_j` for distinct nodes in `[0, 1]`.
pub(crate) fn collocation_integrals(tau: &[f64]) -> Result<DMatrix<f64>> {
    let k = tau.len();
    let lu = lagrange_basis_lu(tau)?;
    // α V = I_k, solved as Vᵀ αᵀ = I_kᵀ.
    let ik_t = DMatrix::from_fn(k, k, |j, l| integrals_orthonormal_all(k, tau[l])[j]);
    let alpha_t = lu
        .solve(&ik_t)
        .ok_or_else(|| HbvmError::InvalidNodes("singular interpolation matrix".into()))?;
    Ok(alpha_t.transpose())
}

pub(crate) fn check_distinct(tau: &[f64]) -> Result<()> {
    for i in 0..tau.len() {
        if !tau[i].is_finite() {
            return Err(HbvmError::InvalidNodes("non-finite node".into()));
        }
        for j in 0..i {
            if tau[i] == tau[j] {
                return Err(HbvmError::InvalidNodes(format!(
                    "duplicate node {}",
                    tau[i]
                )));
            }
        }
    }
    Ok(())
}

/// Weights `ω_i = ∫₀¹ ℓ_i(t) dt` of the interpolatory rule on `tau`.
pub fn interpolatory_weights(tau: &[f64]) -> Result<Vec<f64>> {
    if tau.is_empty() {
        return Err(HbvmError::InvalidNodes("empty node set".into()));
    }
    check_distinct(tau)?;
    if let Some(&t) = tau.iter().find(|&&t| !(0.0..=1.0).contains(&t)) {
        return Err(HbvmError::InvalidNodes(format!("node {t} outside [0, 1]")));
    }
    // Only P_1 has a nonzero integral over [0, 1], so ω is the first row of V⁻¹.
    let lu = lagrange_basis_lu(tau)?;
    let e0 = DVector::from_fn(tau.len(), |j, _| if j == 0 { 1.0 } else { 0.0 });
    let w = lu
        .solve(&e0)
        .ok_or_else(|| HbvmError::InvalidNodes("singular interpolation matrix".into()))?;
    Ok(w.iter().copied().collect())
}

/// Largest `d` such that the rule integrates every `t^e`, `e <= d`, within
/// `tol`; the scan stops at `2k + 2`. `None` if even constants fail.
pub fn exactness_degree(sys: &AbscissaeSystem, tol: f64) -> Option<usize> {
    let cap = 2 * sys.len() + 2;
    let mut best = None;
    for e in 0..=cap {
        let moment = sys.integrate(|t| t.powi(e as i32));
        if (moment - 1.0 / (e as f64 + 1.0)).abs() > tol {
            break;
        }
        best = Some(e);
    }
    best
}
