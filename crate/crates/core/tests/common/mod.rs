//! Test-side oracles built from textbook formulas and nalgebra's own
//! eigensolvers, independent of the crate's construction paths.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Gauss–Legendre rule on `[0, 1]` by Golub–Welsch.
pub fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for j in 1..n {
        let jf = j as f64;
        let beta = jf / (4.0 * jf * jf - 1.0).sqrt();
        jac[(j, j - 1)] = beta;
        jac[(j - 1, j)] = beta;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            ((eig.eigenvalues[i] + 1.0) / 2.0, v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `∫₀^c g` with a 16-point Gauss rule.
pub fn integrate_to(c: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = golub_welsch(16);
    c * x.iter().zip(&w).map(|(xi, wi)| wi * g(c * xi)).sum::<f64>()
}

/// Lagrange basis polynomial by the product formula.
pub fn lagrange(nodes: &[f64], j: usize, t: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != j)
        .map(|(_, &tm)| (t - tm) / (nodes[j] - tm))
        .product()
}

/// Collocation matrix `∫₀^{τ_i} ℓ_j` by quadrature of the product formula.
pub fn collocation(nodes: &[f64]) -> DMatrix<f64> {
    let k = nodes.len();
    DMatrix::from_fn(k, k, |i, j| {
        integrate_to(nodes[i], |t| lagrange(nodes, j, t))
    })
}

/// Classical Gauss–Legendre collocation tableau `(c, A, b)`.
pub fn gauss_collocation(s: usize) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let (c, b) = golub_welsch(s);
    let a = collocation(&c);
    (c, a, b)
}

/// Orthonormal shifted Legendre `P_j(t) = √(2j-1) L_{j-1}(2t-1)` from the
/// explicit sum `L_n(x) = Σ_m C(n,m) C(n+m,m) ((x-1)/2)^m`.
pub fn legendre_explicit(j: usize, t: f64) -> f64 {
    let n = j - 1;
    let x = 2.0 * t - 1.0;
    let mut sum = 0.0;
    for m in 0..=n {
        sum += binom(n, m) * binom(n + m, m) * ((x - 1.0) / 2.0).powi(m as i32);
    }
    ((2 * j - 1) as f64).sqrt() * sum
}

/// `Σ |terms|` of [`legendre_explicit`], scaling its round-off error.
pub fn legendre_explicit_magnitude(j: usize, t: f64) -> f64 {
    let n = j - 1;
    let x = 2.0 * t - 1.0;
    let mut sum = 0.0;
    for m in 0..=n {
        sum += binom(n, m) * binom(n + m, m) * ((x - 1.0) / 2.0).abs().powi(m as i32);
    }
    ((2 * j - 1) as f64).sqrt() * sum
}

pub fn binom(n: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Eigenvalues of the Gauss-`s` Butcher matrix: reciprocals of the zeros of
/// the `(s, s)` Padé denominator `Q(z) = Σ_j (2s-j)! s! / ((2s)! j! (s-j)!) (-z)^j`,
/// i.e. the zeros of `λ^s Q(1/λ)`, found from its companion matrix with
/// nalgebra's Schur-based solver.
pub fn gauss_eigenvalues(s: usize) -> Vec<Complex64> {
    let coeff = |j: usize| {
        factorial(2 * s - j) * factorial(s) / (factorial(2 * s) * factorial(j) * factorial(s - j))
            * if j.is_multiple_of(2) { 1.0 } else { -1.0 }
    };
    // λ^s Q(1/λ) = λ^s + Σ_{m<s} coeff(s-m) λ^m, since coeff(0) = 1.
    let mut monic = DMatrix::<f64>::zeros(s, s);
    for i in 1..s {
        monic[(i, i - 1)] = 1.0;
    }
    for m in 0..s {
        monic[(m, s - 1)] = -coeff(s - m);
    }
    monic.complex_eigenvalues().iter().copied().collect()
}

/// Greedy nearest matching; largest distance, or infinity on a count
/// mismatch.
pub fn match_distance(found: &[Complex64], expected: &[Complex64]) -> f64 {
    if found.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; expected.len()];
    let mut worst: f64 = 0.0;
    for z in found {
        let (i, d) = expected
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, e)| (i, (z - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        used[i] = true;
        worst = worst.max(d);
    }
    worst
}

/// `R(z) = det(I - zA + z 1 bᵀ) / det(I - zA)` with complex LU from nalgebra.
pub fn stability_oracle(a: &DMatrix<f64>, b: &[f64], z: Complex64) -> Complex64 {
    let k = a.nrows();
    let m = DMatrix::<Complex64>::from_fn(k, k, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex64::new(id, 0.0) - z * a[(i, j)]
    });
    let n = DMatrix::<Complex64>::from_fn(k, k, |i, j| m[(i, j)] + z * b[j]);
    n.determinant() / m.determinant()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
