//! The vertex coupling matrix `B` and its matrix-level diagnostics.

use crate::linalg::{self, CMatrix, CVector, LinalgError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Dimension limit for the dense matrix-exponential oracle.
pub const MAX_ORACLE_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("coupling matrix is {rows}x{cols}, expected a square matrix")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix dimension {0} exceeds the dense oracle limit of {MAX_ORACLE_DIM}")]
    DimensionTooLarge(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dominating matrix must be real with nonnegative off-diagonal entries")]
    NotPositiveGenerator,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Square complex matrix `B` acting on the nodal values at the free vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix(CMatrix);

impl CouplingMatrix {
    pub fn new(entries: CMatrix) -> Result<Self, CouplingError> {
        if !entries.is_square() {
            return Err(CouplingError::NonSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        Ok(CouplingMatrix(entries))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, CouplingError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(CouplingError::NonSquare { rows: r, cols: c });
        }
        Self::new(CMatrix::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        CouplingMatrix(CMatrix::zeros(n, n))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        CouplingMatrix(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.0
    }

    pub fn get(&self, i: usize, h: usize) -> Complex64 {
        self.0[(i, h)]
    }

    /// 𝔹: `B` in the upper-left block of a zero matrix one size larger.
    pub fn padded(&self) -> CMatrix {
        let n = self.dim();
        let mut p = CMatrix::zeros(n + 1, n + 1);
        p.view_mut((0, 0), (n, n)).copy_from(&self.0);
        p
    }

    pub fn adjoint(&self) -> Self {
        CouplingMatrix(self.0.adjoint())
    }

    /// `max_i (Re b_ii + Σ_{h≠i} |b_ih|)`; nonpositive exactly when the row
    /// criterion holds.
    pub fn row_margin(&self) -> f64 {
        let b = &self.0;
        (0..self.dim())
            .map(|i| {
                b[(i, i)].re
                    + (0..self.dim())
                        .filter(|&h| h != i)
                        .map(|h| b[(i, h)].norm())
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Column counterpart of [`Self::row_margin`].
    pub fn column_margin(&self) -> f64 {
        self.adjoint().row_margin()
    }

    /// Most negative real off-diagonal entry, or `+∞` on a 1×1 matrix.
    pub fn min_offdiagonal(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&h| h != i).map(move |h| (i, h)))
            .map(|(i, h)| self.0[(i, h)].re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_imaginary(&self) -> f64 {
        self.0.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub is_real: bool,
    pub is_dissipative: bool,
    pub is_self_adjoint: bool,
    pub positive_offdiagonal: bool,
    pub row_criterion: bool,
    pub column_criterion: bool,
    /// Index groups of the free vertices when `B` is block diagonal with
    /// more than one block.
    pub block_partition: Option<Vec<Vec<usize>>>,
    pub hermitian_part_max_eigenvalue: f64,
    pub row_margin: f64,
    pub column_margin: f64,
}

pub fn classify_coupling(b: &CouplingMatrix, tol: f64) -> CouplingReport {
    let is_real = b.max_imaginary() <= tol;
    let lambda = linalg::hermitian_part_max_eigenvalue(b.entries());
    let row_margin = b.row_margin();
    let column_margin = b.column_margin();
    CouplingReport {
        is_real,
        is_dissipative: lambda <= tol,
        is_self_adjoint: linalg::hermitian_defect(b.entries()) <= tol,
        positive_offdiagonal: is_real && b.min_offdiagonal() >= -tol,
        row_criterion: row_margin <= tol,
        column_criterion: column_margin <= tol,
        block_partition: block_partition(b),
        hermitian_part_max_eigenvalue: lambda,
        row_margin,
        column_margin,
    }
}

fn block_partition(b: &CouplingMatrix) -> Option<Vec<Vec<usize>>> {
    let n = b.dim();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if label[start].is_some() {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        label[start] = Some(id);
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            for h in 0..n {
                let linked = b.get(i, h) != Complex64::new(0.0, 0.0)
                    || b.get(h, i) != Complex64::new(0.0, 0.0);
                if label[h].is_none() && linked {
                    label[h] = Some(id);
                    members.push(h);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        blocks.push(members);
    }
    (blocks.len() > 1).then_some(blocks)
}

/// A♯: diagonal `Re b_ii`, off-diagonal `|b_ih|`.
pub fn modulus_matrix(b: &CouplingMatrix) -> CouplingMatrix {
    let m = CMatrix::from_fn(b.dim(), b.dim(), |i, h| {
        let z = b.get(i, h);
        Complex64::new(if i == h { z.re } else { z.norm() }, 0.0)
    });
    CouplingMatrix(m)
}

pub fn matrix_semigroup(b: &CouplingMatrix, t: f64) -> Result<CMatrix, CouplingError> {
    if b.dim() > MAX_ORACLE_DIM {
        return Err(CouplingError::DimensionTooLarge(b.dim()));
    }
    if t < 0.0 {
        return Err(CouplingError::NegativeTime(t));
    }
    Ok(linalg::expm(&(b.entries() * Complex64::new(t, 0.0)))?)
}

/// Logarithmically spaced times in `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, z) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (z - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default grid for the ℓ∞ check: twelve points per decade on `[1e-10, 10]`.
pub fn default_contractivity_grid() -> Vec<f64> {
    geometric_grid(1e-10, 10.0, 133)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinfContractivity {
    pub holds: bool,
    /// Largest value of `‖e^{tB}‖∞ − 1` over the grid.
    pub max_excess: f64,
    pub worst_t: f64,
    /// Set when a random vector violated the bound although the row sums
    /// did not; this would indicate a bug in the row-sum evaluation.
    pub sample_violation: Option<f64>,
}

/// Decides whether `e^{tB}` is ℓ∞-contractive on every time in `t_grid`.
///
/// The decision uses the exact induced norm (maximum absolute row sum) of an
/// accurately computed `e^{tB} − I`, so margins far below the grid spacing
/// in `t` are still resolved. `samples` random complex vectors are pushed
/// through `e^{tB}` as an independent cross-check.
pub fn verify_matrix_linf_contractivity(
    b: &CouplingMatrix,
    t_grid: &[f64],
    samples: usize,
    seed: u64,
) -> LinfContractivity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_t = t_grid.first().copied().unwrap_or(0.0);
    let mut holds = true;
    let mut sample_violation = None;
    for &t in t_grid {
        let (excess, threshold) = linalg::exp_row_sum_excess(b.entries(), t);
        if excess > max_excess {
            max_excess = excess;
            worst_t = t;
        }
        let row_ok = excess <= threshold;
        holds &= row_ok;
        if samples > 0 && row_ok {
            let p = linalg::identity(b.dim()) + linalg::expm_minus_identity(&(b.entries() * Complex64::new(t, 0.0)));
            for _ in 0..samples {
                let x = CVector::from_fn(b.dim(), |_, _| {
                    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
                        * rng.random_range(0.0..=1.0)
                });
                let xn = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let yn = (&p * &x).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if yn > xn * (1.0 + 1e-12) + 1e-300 {
                    sample_violation = Some(t);
                    holds = false;
                }
            }
        }
    }
    LinfContractivity {
        holds,
        max_excess,
        worst_t,
        sample_violation,
    }
}

/// ℓ¹ counterpart: maximum absolute column sum of `e^{tB}` at most one.
pub fn verify_matrix_l1_contractivity(b: &CouplingMatrix, t_grid: &[f64]) -> bool {
    let bt = b.entries().transpose();
    t_grid.iter().all(|&t| {
        let (excess, threshold) = linalg::exp_row_sum_excess(&bt, t);
        excess <= threshold
    })
}

/// Checks `|e^{tB̃}| ≤ e^{tB}` entrywise on `t_grid`, which is equivalent to
/// domination of the matrix semigroups.
pub fn dominates_matrix(
    b: &CouplingMatrix,
    b_tilde: &CouplingMatrix,
    t_grid: &[f64],
) -> Result<bool, CouplingError> {
    if b.dim() != b_tilde.dim() {
        return Err(CouplingError::DimensionMismatch(b.dim(), b_tilde.dim()));
    }
    if b.max_imaginary() != 0.0 || b.min_offdiagonal() < 0.0 {
        return Err(CouplingError::NotPositiveGenerator);
    }
    for &t in t_grid {
        let e = matrix_semigroup(b, t)?;
        let et = matrix_semigroup(b_tilde, t)?;
        let scale = linalg::max_abs(&e).max(linalg::max_abs(&et)).max(1e-300);
        let tol = 64.0 * f64::EPSILON * scale;
        if e.iter().zip(et.iter()).any(|(d, s)| s.norm() > d.re + tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Random `n × n` complex matrix whose row margin is exactly `margin`:
/// off-diagonal moduli uniform in `[0, scale]` with random phases, and
/// `Re b_ii = −Σ_{h≠i}|b_ih| + margin_i` where the largest `margin_i`
/// equals `margin`.
pub fn random_with_row_margin(n: usize, margin: f64, scale: f64, rng: &mut impl Rng) -> CouplingMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for h in 0..n {
            if h != i {
                let r = rng.random_range(0.0..=scale);
                m[(i, h)] = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
    }
    let top = rng.random_range(0..n.max(1));
    for i in 0..n {
        let off: f64 = (0..n).filter(|&h| h != i).map(|h| m[(i, h)].norm()).sum();
        let slack = if i == top {
            margin
        } else {
            margin - rng.random_range(0.0..=scale)
        };
        m[(i, i)] = Complex64::new(-off + slack, rng.random_range(-scale..=scale));
    }
    CouplingMatrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn laplacian() -> CouplingMatrix {
        CouplingMatrix::from_real_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]).unwrap()
    }

    fn nilpotent() -> CouplingMatrix {
        CouplingMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap()
    }

    #[test]
    fn padded_block() {
        let p = laplacian().padded();
        assert_eq!(p.nrows(), 3);
        assert_eq!(p[(0, 1)], c(1.0, 0.0));
        assert!(p.row(2).iter().chain(p.column(2).iter()).all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn classify_graph_laplacian() {
        let r = classify_coupling(&laplacian(), 1e-12);
        assert!(r.is_real && r.is_dissipative && r.is_self_adjoint);
        assert!(r.positive_offdiagonal && r.row_criterion && r.column_criterion);
        assert!(r.hermitian_part_max_eigenvalue.abs() < 1e-14);
        assert_eq!(r.block_partition, None);
    }

    #[test]
    fn classify_zero() {
        let r = classify_coupling(&CouplingMatrix::zeros(3), 1e-12);
        assert!(r.is_real && r.is_dissipative && r.is_self_adjoint);
        assert!(r.positive_offdiagonal && r.row_criterion && r.column_criterion);
        assert_eq!(r.block_partition, Some(vec![vec![0], vec![1], vec![2]]));
    }

    #[test]
    fn classify_nilpotent() {
        let r = classify_coupling(&nilpotent(), 1e-12);
        assert!(!r.is_dissipative);
        assert!((r.hermitian_part_max_eigenvalue - 0.5).abs() < 1e-14);
        assert!(!r.row_criterion);
        assert!(!r.column_criterion);
    }

    #[test]
    fn modulus_examples() {
        let b = CouplingMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(-1.0, 2.0), c(-3.0, 0.0), c(0.0, 4.0), c(-2.0, 0.0)],
        ))
        .unwrap();
        let a = modulus_matrix(&b);
        assert_eq!(a, CouplingMatrix::from_real_rows(&[&[-1.0, 3.0], &[4.0, -2.0]]).unwrap());
        assert_eq!(modulus_matrix(&laplacian()), laplacian());
        assert_eq!(modulus_matrix(&CouplingMatrix::zeros(2)), CouplingMatrix::zeros(2));
        assert!(classify_coupling(&a, 0.0).positive_offdiagonal);
    }

    #[test]
    fn semigroup_examples() {
        let e = matrix_semigroup(&laplacian(), 0.0).unwrap();
        assert!((e - linalg::identity(2)).norm() < 1e-15);
        let e = matrix_semigroup(&nilpotent(), 1.0).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!((e - expected).norm() < 1e-14);
        let e = matrix_semigroup(&CouplingMatrix::diagonal(&[-1.0, -2.0]), 1.0).unwrap();
        assert!((e[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)].re - (-2.0f64).exp()).abs() < 1e-15);
        assert!(e[(0, 1)].norm() < 1e-16);
        assert_eq!(
            matrix_semigroup(&CouplingMatrix::zeros(65), 1.0),
            Err(CouplingError::DimensionTooLarge(65))
        );
    }

    #[test]
    fn linf_examples() {
        let grid = default_contractivity_grid();
        assert!(verify_matrix_linf_contractivity(&laplacian(), &grid, 20, 1).holds);
        let bad = verify_matrix_linf_contractivity(&nilpotent(), &grid, 20, 1);
        assert!(!bad.holds);
        // row sum of [[1, t], [0, 1]] is 1 + t
        assert!((bad.max_excess - 10.0).abs() < 1e-12);
        assert!(verify_matrix_linf_contractivity(&CouplingMatrix::zeros(2), &grid, 5, 0).holds);
    }

    #[test]
    fn tiny_margins_are_resolved() {
        let grid = default_contractivity_grid();
        for margin in [1e-6, -1e-6] {
            let b = CouplingMatrix::from_real_rows(&[&[-1.0 + margin, 1.0], &[0.5, -3.0]]).unwrap();
            let v = verify_matrix_linf_contractivity(&b, &grid, 0, 0);
            assert_eq!(v.holds, margin < 0.0, "margin {margin}: {v:?}");
        }
    }

    #[test]
    fn domination_examples() {
        let grid = [0.01, 0.1, 1.0, 5.0];
        assert!(dominates_matrix(&laplacian(), &laplacian(), &grid).unwrap());
        let b_tilde = CouplingMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(-2.0, 1.0), c(0.0, 1.0), c(0.5, -0.5), c(-1.0, -3.0)],
        ))
        .unwrap();
        assert!(dominates_matrix(&modulus_matrix(&b_tilde), &b_tilde, &grid).unwrap());
        let b = CouplingMatrix::diagonal(&[-5.0, -5.0]);
        assert!(!dominates_matrix(&b, &laplacian(), &[0.01]).unwrap());
        assert_eq!(
            dominates_matrix(&b_tilde, &b, &grid),
            Err(CouplingError::NotPositiveGenerator)
        );
    }

    #[test]
    fn random_family_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for margin in [1e-3, -0.5, 0.2] {
            let b = random_with_row_margin(3, margin, 1.0, &mut rng);
            assert!((b.row_margin() - margin).abs() < 1e-12);
        }
    }
}
