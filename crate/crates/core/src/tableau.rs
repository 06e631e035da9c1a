//! HBVM(k, s) Butcher tableaux and the structural matrices around them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HbvmError, Result};
use crate::legendre::{
    check_distinct, collocation_integrals, eval_orthonormal_all, exactness_degree, gauss_system,
    integrals_orthonormal_all, lobatto_system, xi_unchecked, AbscissaeSystem, NodeFamily,
};

/// Largest supported stage count.
pub const MAX_STAGES: usize = 12;
/// Largest supported degree.
pub const MAX_DEGREE: usize = 6;
/// Moment tolerance used when checking the quadrature hypothesis.
pub const EXACTNESS_TOL: f64 = 1e-12;
/// Singular values above this count towards the numerical rank of `A`.
pub const RANK_TOL: f64 = 1e-10;

/// Evaluation and integration matrices of the orthonormal basis at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrices {
    /// `(P_s)_{ij} = P_j(τ_i)`, `k × s`.
    pub p_s: DMatrix<f64>,
    /// Same with `s + 1` columns.
    pub p_splus1: DMatrix<f64>,
    /// `(I_s)_{ij} = ∫₀^{τ_i} P_j`, `k × s`.
    pub i_s: DMatrix<f64>,
    /// Diagonal of `Ω`.
    pub omega: DVector<f64>,
}

impl BasisMatrices {
    pub fn omega_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.omega)
    }

    /// `P_sᵀ Ω`, the `s × k` projection onto the basis coefficients.
    pub fn projector(&self) -> DMatrix<f64> {
        let mut pt = self.p_s.transpose();
        for (mut col, &w) in pt.column_iter_mut().zip(self.omega.iter()) {
            col *= w;
        }
        pt
    }
}

/// `k × n` matrix of `P_1..P_n` evaluated at the nodes.
pub fn legendre_vandermonde(tau: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(tau.len(), n);
    for (i, &t) in tau.iter().enumerate() {
        for (j, v) in eval_orthonormal_all(n, t).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

pub fn basis_matrices(sys: &AbscissaeSystem, s: usize) -> Result<BasisMatrices> {
    let k = sys.len();
    if s == 0 || s > k {
        return Err(HbvmError::InvalidSpec(format!(
            "degree s = {s} must satisfy 1 <= s <= k = {k}"
        )));
    }
    let p_splus1 = legendre_vandermonde(sys.tau(), s + 1);
    let p_s = p_splus1.columns(0, s).into_owned();
    let mut i_s = DMatrix::zeros(k, s);
    for (i, &t) in sys.tau().iter().enumerate() {
        for (j, v) in integrals_orthonormal_all(s, t).into_iter().enumerate() {
            i_s[(i, j)] = v;
        }
    }
    Ok(BasisMatrices {
        p_s,
        p_splus1,
        i_s,
        omega: DVector::from_column_slice(sys.omega()),
    })
}

/// Parameters of an HBVM(k, s): the node system (whose size is `k`) and the
/// degree `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct HbvmSpec {
    system: AbscissaeSystem,
    s: usize,
}

impl HbvmSpec {
    /// Validates `1 <= s <= k <= 12`, `s <= 6`, and that the quadrature is
    /// exact for degree `2s - 1`. Custom node sets additionally need `k >= 2s`,
    /// the degree their interpolatory weights are guaranteed to reach.
    pub fn new(system: AbscissaeSystem, s: usize) -> Result<Self> {
        let k = system.len();
        if s == 0 || s > k {
            return Err(HbvmError::InvalidSpec(format!(
                "degree s = {s} must satisfy 1 <= s <= k = {k}"
            )));
        }
        if k > MAX_STAGES || s > MAX_DEGREE {
            return Err(HbvmError::InvalidSpec(format!(
                "supported envelope is k <= {MAX_STAGES}, s <= {MAX_DEGREE} (got k = {k}, s = {s})"
            )));
        }
        let required = 2 * s - 1;
        let exactness = exactness_degree(&system, EXACTNESS_TOL);
        let structural_ok = system.family() != NodeFamily::Custom || k > required;
        let measured_ok = exactness.is_some_and(|d| d >= required);
        if !(structural_ok && measured_ok) {
            let reported = match system.family() {
                NodeFamily::Custom => exactness.map_or(-1, |d| d.min(k - 1) as i64),
                _ => exactness.map_or(-1, |d| d as i64),
            };
            return Err(HbvmError::QuadratureTooWeak {
                k,
                s,
                exactness: reported,
                required,
            });
        }
        Ok(Self { system, s })
    }

    pub fn gauss(k: usize, s: usize) -> Result<Self> {
        Self::new(gauss_system(k)?, s)
    }

    pub fn lobatto(k: usize, s: usize) -> Result<Self> {
        Self::new(lobatto_system(k)?, s)
    }

    pub fn custom(nodes: &[f64], s: usize) -> Result<Self> {
        Self::new(AbscissaeSystem::custom(nodes)?, s)
    }

    /// Builds a spec from a family name; `nodes` is required for `Custom`
    /// and ignored otherwise.
    pub fn from_family(
        family: NodeFamily,
        k: usize,
        s: usize,
        nodes: Option<&[f64]>,
    ) -> Result<Self> {
        match family {
            NodeFamily::Gauss => Self::gauss(k, s),
            NodeFamily::Lobatto => Self::lobatto(k, s),
            NodeFamily::Custom => {
                let nodes = nodes.ok_or_else(|| {
                    HbvmError::InvalidSpec("custom family requires explicit nodes".into())
                })?;
                if nodes.len() != k {
                    return Err(HbvmError::InvalidSpec(format!(
                        "k = {k} but {} custom nodes given",
                        nodes.len()
                    )));
                }
                Self::custom(nodes, s)
            }
        }
    }

    pub fn k(&self) -> usize {
        self.system.len()
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn family(&self) -> NodeFamily {
        self.system.family()
    }

    pub fn system(&self) -> &AbscissaeSystem {
        &self.system
    }

    pub fn basis(&self) -> BasisMatrices {
        basis_matrices(&self.system, self.s).expect("validated spec")
    }
}

impl std::fmt::Display for HbvmSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HBVM({}, {}) {}", self.k(), self.s, self.family())
    }
}

/// A `k`-stage Runge–Kutta tableau `(c, A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl ButcherTableau {
    /// Checks dimensions only; consistency is reported by
    /// [`row_sum_residual`](Self::row_sum_residual) and friends so that
    /// perturbed tableaux can still be loaded and examined.
    pub fn new(c: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let k = c.len();
        if k == 0 || a.nrows() != k || a.ncols() != k || b.len() != k {
            return Err(HbvmError::Dimension(format!(
                "tableau needs c: k, A: k×k, b: k (got {}, {}×{}, {})",
                c.len(),
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(Self { c, a, b })
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// `max_i |Σ_j A_ij - c_i|`.
    pub fn row_sum_residual(&self) -> f64 {
        self.a
            .row_iter()
            .zip(&self.c)
            .map(|(row, &ci)| (row.sum() - ci).abs())
            .fold(0.0, f64::max)
    }

    /// `|Σ b_i - 1|`.
    pub fn weight_sum_residual(&self) -> f64 {
        (self.b.iter().sum::<f64>() - 1.0).abs()
    }

    /// Number of singular values of `A` above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.a
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&sv| sv > tol)
            .count()
    }

    /// Largest absolute entrywise difference of the three components.
    pub fn max_abs_diff(&self, other: &ButcherTableau) -> f64 {
        if self.stages() != other.stages() {
            return f64::INFINITY;
        }
        let vec_diff = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        max_abs(&(&self.a - &other.a))
            .max(vec_diff(&self.c, &other.c))
            .max(vec_diff(&self.b, &other.b))
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `A = I_s P_sᵀ Ω`, `c = τ`, `b = ω`.
pub fn hbvm_tableau(spec: &HbvmSpec) -> Result<ButcherTableau> {
    let basis = spec.basis();
    let a = &basis.i_s * basis.projector();
    let tab = ButcherTableau::new(spec.system.tau().to_vec(), a, spec.system.omega().to_vec())?;
    let rank = tab.rank(RANK_TOL);
    if rank != spec.s {
        return Err(HbvmError::RankDeficient {
            rank,
            expected: spec.s,
        });
    }
    Ok(tab)
}

/// Collocation matrix `α_ij = ∫₀^{τ_i} ℓ_j`.
pub fn collocation_matrix(sys: &AbscissaeSystem) -> DMatrix<f64> {
    collocation_matrix_for_nodes(sys.tau()).expect("abscissae systems hold distinct nodes")
}

pub fn collocation_matrix_for_nodes(tau: &[f64]) -> Result<DMatrix<f64>> {
    check_distinct(tau)?;
    collocation_integrals(tau)
}

/// The `k`-stage collocation method filtered to rank `s`:
/// `A = 𝒜 P_s P_sᵀ Ω`.
pub fn filtered_tableau(sys: &AbscissaeSystem, s: usize) -> Result<ButcherTableau> {
    let spec = HbvmSpec::new(sys.clone(), s)?;
    let basis = spec.basis();
    let a = collocation_matrix(sys) * &basis.p_s * basis.projector();
    ButcherTableau::new(sys.tau().to_vec(), a, sys.omega().to_vec())
}

/// `X_s`: `1/2` in the corner, `-ξ_j` above and `ξ_j` below the diagonal.
pub fn xs_matrix(s: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(s, s);
    if s == 0 {
        return x;
    }
    x[(0, 0)] = 0.5;
    for j in 1..s {
        let v = xi_unchecked(j);
        x[(j - 1, j)] = -v;
        x[(j, j - 1)] = v;
    }
    x
}

/// `X̂_s`: `X_s` with the row `(0, …, 0, ξ_s)` appended.
pub fn xhat_matrix(s: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(s + 1, s);
    if s == 0 {
        return x;
    }
    x.view_mut((0, 0), (s, s)).copy_from(&xs_matrix(s));
    x[(s, s - 1)] = xi_unchecked(s);
    x
}

/// `X̃_s`: `X̂_s` with a zero column appended.
pub fn xtilde_matrix(s: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(s + 1, s + 1);
    x.view_mut((0, 0), (s + 1, s)).copy_from(&xhat_matrix(s));
    x
}

/// On-disk representation of a tableau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableauRecord {
    pub k: usize,
    pub s: usize,
    pub family: NodeFamily,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

impl TableauRecord {
    pub fn from_spec(spec: &HbvmSpec, tab: &ButcherTableau) -> Self {
        Self {
            k: spec.k(),
            s: spec.s(),
            family: spec.family(),
            c: tab.c.clone(),
            b: tab.b.clone(),
            a: tab
                .a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }

    pub fn tableau(&self) -> Result<ButcherTableau> {
        let k = self.c.len();
        if self.k != k || self.a.len() != k || self.a.iter().any(|r| r.len() != k) {
            return Err(HbvmError::Dimension(format!(
                "record declares k = {} but holds {} nodes and a {}-row matrix",
                self.k,
                k,
                self.a.len()
            )));
        }
        let a = DMatrix::from_fn(k, k, |i, j| self.a[i][j]);
        ButcherTableau::new(self.c.clone(), a, self.b.clone())
    }
}
