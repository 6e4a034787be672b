//! Dense linear algebra used by the oracles: matrix exponentials,
//! Hermitian pencil eigensolves and a couple of norms.
//!
//! Everything here works on `DMatrix<Complex64>`. The vertex-space matrices
//! are tiny and the discretized operators stay at desk scale (a few thousand
//! degrees of freedom at most), so dense factorizations are adequate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("linear system is singular")]
    Singular,
    #[error("eigensolver did not converge")]
    EigenFailure,
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm_one(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced ∞-norm (maximum absolute row sum).
pub fn norm_inf(a: &CMatrix) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn is_real(a: &CMatrix) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Largest deviation from Hermitian symmetry, `max |a_ij - conj(a_ji)|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn scaled(a: &CMatrix, s: f64) -> CMatrix {
    a.map(|z| z * s)
}

fn pade_low(a: &CMatrix, b: &[f64]) -> Result<CMatrix, LinalgError> {
    let n = a.nrows();
    let ident = CMatrix::identity(n, n);
    let a2 = a * a;
    // powers of A^2 up to the degree needed
    let mut even = vec![ident.clone()];
    while even.len() * 2 < b.len() {
        let next = even.last().unwrap() * &a2;
        even.push(next);
    }
    let mut u_inner = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    for (k, p) in even.iter().enumerate() {
        if 2 * k + 1 < b.len() {
            u_inner += scaled(p, b[2 * k + 1]);
        }
        v += scaled(p, b[2 * k]);
    }
    let u = a * u_inner;
    solve_pade(&u, &v)
}

fn pade_13(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = CMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let u_lo = scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]) + scaled(&ident, b[1]);
    let u = a * (&a6 * u_hi + u_lo);
    let v_hi = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let v = &a6 * v_hi
        + scaled(&a6, b[6])
        + scaled(&a4, b[4])
        + scaled(&a2, b[2])
        + scaled(&ident, b[0]);
    solve_pade(&u, &v)
}

fn solve_pade(u: &CMatrix, v: &CMatrix) -> Result<CMatrix, LinalgError> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(LinalgError::Singular)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let norm = norm_one(a);
    if norm == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    for (theta, coeffs) in [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ] {
        if norm <= theta {
            return pade_low(a, coeffs);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let a_scaled = scaled(a, 0.5_f64.powi(s));
    let mut r = pade_13(&a_scaled)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `exp(A) - I`, computed without cancellation: a Taylor series on a
/// scaled copy of `A`, followed by the doubling rule
/// `exp(2X) - I = 2(exp(X) - I) + (exp(X) - I)^2`.
///
/// Entries stay accurate relative to `||A||` even when `exp(A)` is within
/// rounding distance of the identity.
pub fn expm_minus_identity(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = norm_one(a);
    if norm == 0.0 {
        return CMatrix::zeros(n, n);
    }
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = scaled(a, 0.5_f64.powi(s));
    let mut term = x.clone();
    let mut sum = x.clone();
    for k in 2..40 {
        term = &term * &x / Complex64::new(k as f64, 0.0);
        let tn = max_abs(&term);
        sum += &term;
        if tn <= f64::EPSILON * 1e-3 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..s {
        let sq = &sum * &sum;
        sum = scaled(&sum, 2.0) + sq;
    }
    sum
}

/// Solution of a Hermitian-definite pencil `S v = λ M v`.
///
/// `values` ascend; the columns of `vectors` are M-orthonormal
/// (`Vᴴ M V = I`), so `exp(-t M⁻¹ S) = V e^{-tΛ} Vᴴ M`.
#[derive(Debug, Clone)]
pub struct HermitianPencilEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn hermitian_pencil_eigen(
    s: &CMatrix,
    m: &DMatrix<f64>,
) -> Result<HermitianPencilEigen, LinalgError> {
    let n = s.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or(LinalgError::NotPositiveDefinite)?;
    let l = chol.l();
    let real_case = is_real(s);

    let (values, q) = if real_case {
        let sr = s.map(|z| z.re);
        let x = l
            .solve_lower_triangular(&sr)
            .ok_or(LinalgError::Singular)?;
        let c = l
            .solve_lower_triangular(&x.transpose())
            .ok_or(LinalgError::Singular)?;
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        (eig.eigenvalues.as_slice().to_vec(), to_complex(&eig.eigenvectors))
    } else {
        let lc = to_complex(&l);
        let x = lc
            .solve_lower_triangular(s)
            .ok_or(LinalgError::Singular)?;
        let c = lc
            .solve_lower_triangular(&x.adjoint())
            .ok_or(LinalgError::Singular)?;
        let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = c.symmetric_eigen();
        (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::EigenFailure);
    }
    let lt = to_complex(&l.transpose());
    let v = lt.solve_upper_triangular(&q).ok_or(LinalgError::Singular)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianPencilEigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// All eigenvalues of a general dense matrix via the complex Schur form,
/// sorted by ascending real part.
pub fn general_eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(LinalgError::EigenFailure)?;
    let ev = schur.eigenvalues().ok_or(LinalgError::EigenFailure)?;
    let mut out: Vec<Complex64> = ev.iter().copied().collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// Largest eigenvalue of the Hermitian part `(A + Aᴴ)/2`.
pub fn hermitian_part_max_eigenvalue(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Conjugate inner product `xᴴ y`.
pub fn dot_conj(x: &CVector, y: &CVector) -> Complex64 {
    x.iter().zip(y.iter()).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// Least-squares line `y = intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// `‖e^{tB}‖∞ − 1`, evaluated from an accurate `e^{tB} − I`, and the threshold below which the excess is rounding.
pub fn exp_row_sum_excess(b: &CMatrix, t: f64) -> (f64, f64) {
    let tb = b * Complex64::new(t, 0.0);
    let threshold = 256.0 * f64::EPSILON * norm_inf(&tb).min(1.0);
    (row_sum_excess(&expm_minus_identity(&tb)), threshold)
}

/// `‖I + E‖∞ − 1` evaluated without cancellation.
pub fn row_sum_excess(e: &CMatrix) -> f64 {
    let n = e.nrows();
    (0..n)
        .map(|i| {
            let d = e[(i, i)];
            // |1 + d| - 1 without cancellation
            let diag = (2.0 * d.re + d.norm_sqr()) / ((Complex64::new(1.0, 0.0) + d).norm() + 1.0);
            diag + (0..n).filter(|&h| h != i).map(|h| e[(i, h)].norm()).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Truncated Taylor series with many terms, good for small norms.
    fn taylor_oracle(a: &CMatrix) -> CMatrix {
        let n = a.nrows();
        let mut term = CMatrix::identity(n, n);
        let mut sum = CMatrix::identity(n, n);
        for k in 1..80 {
            term = &term * a / c(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), CMatrix::identity(3, 3));
    }

    #[test]
    fn expm_nilpotent_closed_form() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        let e = expm(&a).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!((e - expected).norm() < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_across_degrees() {
        let base = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(-0.3, 0.2),
                c(0.5, -0.1),
                c(0.0, 0.4),
                c(0.1, 0.0),
                c(-0.7, 0.0),
                c(0.2, 0.2),
                c(-0.4, 0.1),
                c(0.3, -0.3),
                c(0.25, 0.0),
            ],
        );
        for scale in [0.01, 0.2, 0.8, 1.7, 4.0] {
            let a = &base * c(scale, 0.0);
            let e = expm(&a).unwrap();
            let o = taylor_oracle(&a);
            assert!((&e - &o).norm() < 1e-13 * o.norm(), "scale {scale}");
        }
    }

    #[test]
    fn expm_scaling_and_squaring_diagonal() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-30.0, 0.0), c(12.0, 3.0)]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)].re - (-30.0f64).exp()).abs() < 1e-12 * (-30.0f64).exp());
        let expected = c(12.0, 3.0).exp();
        assert!((e[(1, 1)] - expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn expm_minus_identity_is_accurate_for_tiny_arguments() {
        let a = CMatrix::from_row_slice(2, 2, &[c(-1.0, 0.5), c(0.3, 0.0), c(0.2, -0.1), c(-2.0, 0.0)]);
        let t = 1e-9;
        let e = expm_minus_identity(&(&a * c(t, 0.0)));
        // first-order term dominates; second order is ~1e-18
        for i in 0..2 {
            for j in 0..2 {
                let first = a[(i, j)] * t;
                assert!((e[(i, j)] - first).norm() < 1e-17, "{i}{j}");
            }
        }
        let big = &a * c(3.0, 0.0);
        let e = expm_minus_identity(&big);
        let reference = expm(&big).unwrap() - CMatrix::identity(2, 2);
        assert!((e - reference).norm() < 1e-13);
    }

    #[test]
    fn pencil_eigen_is_mass_orthonormal() {
        let s = CMatrix::from_row_slice(
            3,
            3,
            &[c(2., 0.), c(-1., 0.5), c(0., 0.), c(-1., -0.5), c(2., 0.), c(-1., 0.), c(0., 0.), c(-1., 0.), c(1., 0.)],
        );
        let m = DMatrix::from_row_slice(3, 3, &[2., 0.5, 0., 0.5, 2., 0.5, 0., 0.5, 1.]);
        let eig = hermitian_pencil_eigen(&s, &m).unwrap();
        let v = &eig.vectors;
        let gram = v.adjoint() * to_complex(&m) * v;
        assert!((gram - CMatrix::identity(3, 3)).norm() < 1e-12);
        for k in 0..3 {
            let lhs = &s * v.column(k);
            let rhs = to_complex(&m) * v.column(k) * c(eig.values[k], 0.0);
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn general_eigenvalues_of_triangular() {
        let a = CMatrix::from_row_slice(2, 2, &[c(3., 1.), c(5., 0.), c(0., 0.), c(-1., 0.)]);
        let ev = general_eigenvalues(&a).unwrap();
        assert!((ev[0] - c(-1., 0.)).norm() < 1e-12);
        assert!((ev[1] - c(3., 1.)).norm() < 1e-12);
    }
}
