//! Small dense eigenvalue solver and the spectral checks built on it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{HbvmError, Result};
use crate::legendre::AbscissaeSystem;
use crate::tableau::{
    hbvm_tableau, legendre_vandermonde, max_abs, xhat_matrix, xs_matrix, xtilde_matrix,
    ButcherTableau, HbvmSpec,
};

/// Largest matrix accepted by [`eigenvalues`].
pub const MAX_EIGEN_DIM: usize = 12;
/// Relative threshold under which an eigenvalue counts as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-8;

/// All eigenvalues of a real square matrix, with algebraic multiplicity.
///
/// Balancing, Householder reduction to upper Hessenberg form, then Francis
/// double-shift QR on the Hessenberg matrix. Complex pairs are extracted from
/// converged 2×2 trailing blocks.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(HbvmError::Dimension(format!(
            "eigenvalues of a {}×{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if n > MAX_EIGEN_DIM {
        return Err(HbvmError::Dimension(format!(
            "eigenvalue solver supports n <= {MAX_EIGEN_DIM}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HbvmError::Dimension("matrix has non-finite entries".into()));
    }
    let mut a = m.clone();
    balance(&mut a);
    hessenberg(&mut a);
    hessenberg_qr(a)
}

/// Parlett–Reinsch balancing with radix-2 scaling (exact in floating point).
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// In-place Householder similarity to upper Hessenberg form.
fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n)
            .map(|i| a[(i, k)] * a[(i, k)])
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        // A <- H A
        for j in 0..n {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(p, vi)| vi * a[(k + 1 + p, j)])
                .sum();
            for (p, vi) in v.iter().enumerate() {
                a[(k + 1 + p, j)] -= 2.0 * vi * dot;
            }
        }
        // A <- A H
        for i in 0..n {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(p, vi)| vi * a[(i, k + 1 + p)])
                .sum();
            for (p, vi) in v.iter().enumerate() {
                a[(i, k + 1 + p)] -= 2.0 * vi * dot;
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
///
/// Internally 1-based (`h[(i, j)]` with `1 <= i, j <= n`) to keep the
/// deflation and bulge-chasing index arithmetic readable.
fn hessenberg_qr(a: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let mut h = DMatrix::<f64>::zeros(n + 1, n + 1);
    h.view_mut((1, 1), (n, n)).copy_from(&a);
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i - 1).max(1)..=n {
            anorm += h[(i, j)].abs();
        }
    }
    let max_total = 30 * n;
    let mut total = 0usize;
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            // Look for a single small subdiagonal element.
            let mut l = nn;
            while l >= 2 {
                let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h[(l, l - 1)].abs() + s == s {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let l = l.max(1);
            let mut x = h[(nn, nn)];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = h[(nn - 1, nn - 1)];
            let mut w = h[(nn, nn - 1)] * h[(nn - 1, nn)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn - 1] = x + z;
                    wr[nn] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if total >= max_total {
                return Err(HbvmError::NoConvergence {
                    what: "Hessenberg QR iteration",
                    iterations: total,
                });
            }
            if its > 0 && its.is_multiple_of(10) {
                // Exceptional shift.
                t += x;
                for i in 1..=nn {
                    h[(i, i)] -= x;
                }
                let s = h[(nn, nn - 1)].abs() + h[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;

            // Find two consecutive small subdiagonal elements.
            let (mut p, mut q, mut r);
            let mut m = nn - 2;
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                h[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // Double QR step on rows l..nn and columns m..nn.
            for k in m..nn {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != nn - 1 { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if k != nn - 1 {
                        pp += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= pp * z;
                    }
                    h[(k + 1, j)] -= pp * y;
                    h[(k, j)] -= pp * x;
                }
                let mmin = nn.min(k + 3);
                for i in l..=mmin {
                    let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                    if k != nn - 1 {
                        pp += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= pp * r;
                    }
                    h[(i, k + 1)] -= pp * q;
                    h[(i, k)] -= pp;
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

fn cmp_complex(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Serializes complex numbers as `[re, im]`.
fn ser_complex<S: serde::Serializer>(
    v: &[Complex64],
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Classification of the spectrum of an HBVM Butcher matrix against the
/// spectrum of `X_s`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub k: usize,
    pub s: usize,
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex64>,
    pub zero_count: usize,
    #[serde(serialize_with = "ser_complex")]
    pub nonzero: Vec<Complex64>,
    #[serde(serialize_with = "ser_complex")]
    pub reference: Vec<Complex64>,
    /// Largest distance over matched pairs; infinite when the number of
    /// nonzero eigenvalues differs from `s`.
    pub max_match_distance: f64,
    pub zero_threshold: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares the spectrum of `a` with `k - s` zeros plus the spectrum of `X_s`.
///
/// Eigenvalues with `|λ| <= 1e-8 max(1, ‖A‖)` count as zero; the remaining
/// ones are paired greedily with the sorted reference spectrum.
pub fn compare_spectrum(a: &DMatrix<f64>, s: usize, tol: f64) -> Result<SpectrumReport> {
    let k = a.nrows();
    let mut eig = eigenvalues(a)?;
    eig.sort_by(cmp_complex);
    let mut reference = eigenvalues(&xs_matrix(s))?;
    reference.sort_by(cmp_complex);

    let zero_threshold = ZERO_EIGEN_REL * a.norm().max(1.0);
    let (zeros, mut nonzero): (Vec<Complex64>, Vec<Complex64>) =
        eig.iter().partition(|z| z.norm() <= zero_threshold);
    nonzero.sort_by(cmp_complex);

    let mut used = vec![false; reference.len()];
    let mut max_dist: f64 = 0.0;
    for z in &nonzero {
        let best = reference
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, r)| (i, (z - r).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, d)) => {
                used[i] = true;
                max_dist = max_dist.max(d);
            }
            None => max_dist = f64::INFINITY,
        }
    }
    if nonzero.len() != reference.len() {
        max_dist = f64::INFINITY;
    }
    let zero_count = zeros.len();
    let passed = zero_count + s == k && max_dist <= tol;
    Ok(SpectrumReport {
        k,
        s,
        eigenvalues: eig,
        zero_count,
        nonzero,
        reference,
        max_match_distance: max_dist,
        zero_threshold,
        tol,
        passed,
    })
}

/// Checks that the nonzero eigenvalues of the HBVM Butcher matrix are those of
/// the Gauss–Legendre method of order `2s`, and that there are `k - s` zeros.
pub fn isospectral_check(spec: &HbvmSpec, tol: f64) -> Result<SpectrumReport> {
    let tab = hbvm_tableau(spec)?;
    compare_spectrum(&tab.a, spec.s(), tol)
}

/// `‖A P_{s+1} - P_{s+1} X̃_s‖_max`.
pub fn invariant_subspace_residual(spec: &HbvmSpec) -> Result<f64> {
    let tab = hbvm_tableau(spec)?;
    Ok(subspace_residual_for(&tab, spec.s()))
}

/// Same residual for an arbitrary tableau, using its `c` as the nodes.
pub fn subspace_residual_for(tab: &ButcherTableau, s: usize) -> f64 {
    let p = legendre_vandermonde(&tab.c, s + 1);
    max_abs(&(&tab.a * &p - &p * xtilde_matrix(s)))
}

/// Residuals of the W-transformation structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WTransformResiduals {
    /// Deviation of `PᵀΩP` from `blkdiag(I_s, R)` outside the free block `R`.
    pub gram: f64,
    /// Deviation of `P⁻¹AP` from `X̂_s` in the leading columns and zero
    /// elsewhere.
    pub similarity: f64,
}

impl WTransformResiduals {
    pub fn max(&self) -> f64 {
        self.gram.max(self.similarity)
    }
}

/// W-transformation check with the `k × k` matrix `P = (P_j(τ_i))`.
pub fn w_transform_check(sys: &AbscissaeSystem, s: usize) -> Result<WTransformResiduals> {
    let spec = HbvmSpec::new(sys.clone(), s)?;
    let tab = hbvm_tableau(&spec)?;
    let k = sys.len();
    let p = legendre_vandermonde(sys.tau(), k);

    let basis = spec.basis();
    let mut weighted = p.transpose();
    for (mut col, &w) in weighted.column_iter_mut().zip(basis.omega.iter()) {
        col *= w;
    }
    let gram = &weighted * &p;
    let mut gram_res: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i >= s && j >= s {
                continue;
            }
            let expected = if i == j { 1.0 } else { 0.0 };
            gram_res = gram_res.max((gram[(i, j)] - expected).abs());
        }
    }

    let lu = p.clone().lu();
    let similar = lu
        .solve(&(&tab.a * &p))
        .ok_or_else(|| HbvmError::Singular("enlarged basis matrix P".into()))?;
    let xhat = xhat_matrix(s);
    let rows = (s + 1).min(k);
    let mut expected = DMatrix::zeros(k, k);
    expected
        .view_mut((0, 0), (rows, s))
        .copy_from(&xhat.rows(0, rows));
    let similarity = max_abs(&(similar - expected));
    Ok(WTransformResiduals {
        gram: gram_res,
        similarity,
    })
}

/// One evaluation of the stability function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilitySample {
    pub z: [f64; 2],
    pub r: [f64; 2],
}

/// `R(z) = 1 + z bᵀ (I - zA)⁻¹ 1`, through a complex LU solve.
pub fn stability_function(tab: &ButcherTableau, z: Complex64) -> Result<Complex64> {
    let k = tab.stages();
    let m = DMatrix::<Complex64>::from_fn(k, k, |i, j| {
        let delta = if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        delta - z * tab.a[(i, j)]
    });
    let ones = nalgebra::DVector::<Complex64>::from_element(k, Complex64::new(1.0, 0.0));
    let pole = || HbvmError::Pole { re: z.re, im: z.im };
    let x = m.lu().solve(&ones).ok_or_else(pole)?;
    let r = Complex64::new(1.0, 0.0)
        + z * tab
            .b
            .iter()
            .zip(x.iter())
            .map(|(&b, xi)| xi * b)
            .sum::<Complex64>();
    if !(r.re.is_finite() && r.im.is_finite()) {
        return Err(pole());
    }
    Ok(r)
}

/// Sampling grid for [`a_stability_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityGrid {
    /// Points `y` on the log grid `[axis_min, axis_max]` used for `R(iy)`.
    pub axis_points: usize,
    pub axis_min: f64,
    pub axis_max: f64,
    /// Left half-plane: `Re z = -x` for `x` on a log grid of this size…
    pub plane_re_points: usize,
    /// …times `Im z ∈ {0} ∪ ±(log grid of this size)`.
    pub plane_im_points: usize,
}

impl Default for StabilityGrid {
    fn default() -> Self {
        Self {
            axis_points: 200,
            axis_min: 1e-3,
            axis_max: 1e3,
            plane_re_points: 40,
            plane_im_points: 30,
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Worst-case statistics of `|R|` on the imaginary axis and in the open left
/// half-plane.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityScan {
    /// `max_y ||R(iy)| - 1|`.
    pub max_axis_deviation: f64,
    pub worst_axis: Option<StabilitySample>,
    /// `max |R(z)|` over the left half-plane grid.
    pub max_left_modulus: f64,
    pub worst_left: Option<StabilitySample>,
    /// Grid points where `I - zA` was singular.
    pub poles: Vec<[f64; 2]>,
    pub samples: usize,
}

impl StabilityScan {
    /// Single figure: the larger of the axis deviation and the excess of
    /// `|R|` over 1 in the left half-plane.
    pub fn max_deviation(&self) -> f64 {
        self.max_axis_deviation
            .max((self.max_left_modulus - 1.0).max(0.0))
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.poles.is_empty()
            && self.max_axis_deviation <= tol
            && self.max_left_modulus <= 1.0 + tol
    }
}

pub fn a_stability_scan(tab: &ButcherTableau, grid: &StabilityGrid) -> StabilityScan {
    let mut scan = StabilityScan {
        max_axis_deviation: 0.0,
        worst_axis: None,
        max_left_modulus: 0.0,
        worst_left: None,
        poles: Vec::new(),
        samples: 0,
    };
    let eval = |z: Complex64, scan: &mut StabilityScan| -> Option<StabilitySample> {
        scan.samples += 1;
        match stability_function(tab, z) {
            Ok(r) => Some(StabilitySample {
                z: [z.re, z.im],
                r: [r.re, r.im],
            }),
            Err(_) => {
                scan.poles.push([z.re, z.im]);
                None
            }
        }
    };
    for y in log_grid(grid.axis_min, grid.axis_max, grid.axis_points) {
        if let Some(sample) = eval(Complex64::new(0.0, y), &mut scan) {
            let dev = (Complex64::new(sample.r[0], sample.r[1]).norm() - 1.0).abs();
            if dev >= scan.max_axis_deviation {
                scan.max_axis_deviation = dev;
                scan.worst_axis = Some(sample);
            }
        }
    }
    let ims = log_grid(grid.axis_min, grid.axis_max, grid.plane_im_points);
    let im_values: Vec<f64> = std::iter::once(0.0)
        .chain(ims.iter().copied())
        .chain(ims.iter().map(|v| -v))
        .collect();
    for x in log_grid(grid.axis_min, grid.axis_max, grid.plane_re_points) {
        for &y in &im_values {
            if let Some(sample) = eval(Complex64::new(-x, y), &mut scan) {
                let modulus = Complex64::new(sample.r[0], sample.r[1]).norm();
                if modulus >= scan.max_left_modulus {
                    scan.max_left_modulus = modulus;
                    scan.worst_left = Some(sample);
                }
            }
        }
    }
    scan
}
