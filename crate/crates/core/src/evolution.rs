//! Time evolution `u' = −M⁻¹S u`: one-step schemes, a dense exponential
//! oracle, the discrete heat kernel and the X_p norms.

use crate::discretization::{DiscreteOperator, MassKind};
use crate::linalg::{self, CMatrix, CVector, HermitianPencilEigen, LinalgError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Dof limit for the dense oracles.
pub const MAX_DENSE_DOFS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("time-stepping system is singular")]
    SingularSystem,
    #[error("{0} degrees of freedom exceed the dense oracle limit of {MAX_DENSE_DOFS}")]
    DimensionTooLarge(usize),
    #[error("state has length {found}, operator has {expected} dofs")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid time parameter {0}")]
    InvalidTime(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: CVector,
    pub time: f64,
}

impl StateVector {
    pub fn new(values: CVector, time: f64) -> Self {
        StateVector { values, time }
    }

    pub fn zeros(dofs: usize) -> Self {
        StateVector::new(CVector::zeros(dofs), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRecord {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl NormRecord {
    pub fn of(op: &DiscreteOperator, u: &CVector) -> Self {
        NormRecord {
            l1: norm(op, u, Norm::L1),
            l2: norm(op, u, Norm::L2),
            linf: norm(op, u, Norm::LInf),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub norms: Vec<NormRecord>,
}

impl Trajectory {
    fn push(&mut self, op: &DiscreteOperator, s: StateVector) {
        self.norms.push(NormRecord::of(op, &s.values));
        self.states.push(s);
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// `∫₀¹ |a + (b − a)s| ds` for complex endpoint values.
fn abs_linear_integral(a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let qa = d.norm_sqr();
    let qc = a.norm_sqr();
    if qa == 0.0 {
        return a.norm();
    }
    let cross = (a.conj() * d).im;
    if cross * cross <= 1e-24 * qa * qc.max(b.norm_sqr()) {
        // the segment lies on a line through the origin
        let dir = if a.norm() >= b.norm() { a / a.norm() } else { b / b.norm() };
        let (x, y) = ((a * dir.conj()).re, (b * dir.conj()).re);
        return if x * y >= 0.0 {
            0.5 * (x.abs() + y.abs())
        } else {
            0.5 * (x * x + y * y) / (x.abs() + y.abs())
        };
    }
    let qb = 2.0 * (a.conj() * d).re;
    let disc = 4.0 * qa * qc - qb * qb;
    let root = disc.max(0.0).sqrt();
    let prim = |s: f64| {
        let q = (qa * s * s + qb * s + qc).max(0.0).sqrt();
        let lin = 2.0 * qa * s + qb;
        lin * q / (4.0 * qa) + disc / (8.0 * qa.powf(1.5)) * (lin / root).asinh()
    };
    prim(1.0) - prim(0.0)
}

/// X_p norm of the piecewise-linear function with nodal values `u`.
///
/// L² uses the operator's mass matrix, L∞ is the nodal maximum and L¹ is the
/// exact integral of the modulus of the interpolant.
pub fn norm(op: &DiscreteOperator, u: &CVector, p: Norm) -> f64 {
    match p {
        Norm::LInf => u.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Norm::L2 => linalg::dot_conj(u, &op.mass_apply(u)).re.max(0.0).sqrt(),
        Norm::L1 => {
            let zero = Complex64::new(0.0, 0.0);
            op.elements()
                .iter()
                .map(|e| {
                    let a = e.left.map_or(zero, |p| u[p]);
                    let b = e.right.map_or(zero, |p| u[p]);
                    e.h * abs_linear_integral(a, b)
                })
                .sum()
        }
    }
}

/// One-step θ-scheme `(M + θ dt S) u⁺ = (M − (1−θ) dt S) u` with a
/// factorization reused across steps.
pub struct ThetaStepper {
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    explicit: CMatrix,
    dt: f64,
}

impl ThetaStepper {
    pub fn new(op: &DiscreteOperator, dt: f64, theta: f64) -> Result<Self, EvolutionError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EvolutionError::InvalidTime(dt));
        }
        let m = linalg::to_complex(&op.mass_dense());
        let s = op.stiffness_dense();
        let implicit = &m + &s * Complex64::new(theta * dt, 0.0);
        let explicit = &m - &s * Complex64::new((1.0 - theta) * dt, 0.0);
        let lu = implicit.lu();
        if !lu.is_invertible() {
            return Err(EvolutionError::SingularSystem);
        }
        Ok(ThetaStepper { lu, explicit, dt })
    }

    pub fn crank_nicolson(op: &DiscreteOperator, dt: f64) -> Result<Self, EvolutionError> {
        Self::new(op, dt, 0.5)
    }

    pub fn implicit_euler(op: &DiscreteOperator, dt: f64) -> Result<Self, EvolutionError> {
        Self::new(op, dt, 1.0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves `(M + θ dt S) x = rhs`.
    pub fn solve(&self, rhs: &CVector) -> Result<CVector, EvolutionError> {
        self.lu.solve(rhs).ok_or(EvolutionError::SingularSystem)
    }

    pub fn step(&self, u: &StateVector) -> Result<StateVector, EvolutionError> {
        let rhs = &self.explicit * &u.values;
        Ok(StateVector::new(self.solve(&rhs)?, u.time + self.dt))
    }
}

fn check_state(op: &DiscreteOperator, u: &StateVector) -> Result<(), EvolutionError> {
    if u.values.len() != op.dofs() {
        return Err(EvolutionError::LengthMismatch {
            expected: op.dofs(),
            found: u.values.len(),
        });
    }
    Ok(())
}

pub fn step_crank_nicolson(op: &DiscreteOperator, u: &StateVector, dt: f64) -> Result<StateVector, EvolutionError> {
    check_state(op, u)?;
    ThetaStepper::crank_nicolson(op, dt)?.step(u)
}

fn run(op: &DiscreteOperator, u0: &StateVector, t_end: f64, stepper: &ThetaStepper) -> Result<Trajectory, EvolutionError> {
    check_state(op, u0)?;
    if !(t_end >= 0.0) {
        return Err(EvolutionError::InvalidTime(t_end));
    }
    let steps = (t_end / stepper.dt() - 1e-9).ceil().max(0.0) as usize;
    let mut traj = Trajectory::default();
    traj.push(op, u0.clone());
    let mut u = u0.clone();
    for k in 1..=steps {
        u = stepper.step(&u)?;
        u.time = u0.time + k as f64 * stepper.dt();
        traj.push(op, u.clone());
    }
    Ok(traj)
}

/// Crank–Nicolson trajectory from `u0` with `⌈t_end/dt⌉` steps.
pub fn evolve(op: &DiscreteOperator, u0: &StateVector, t_end: f64, dt: f64) -> Result<Trajectory, EvolutionError> {
    run(op, u0, t_end, &ThetaStepper::crank_nicolson(op, dt)?)
}

pub fn evolve_implicit_euler(op: &DiscreteOperator, u0: &StateVector, t_end: f64, dt: f64) -> Result<Trajectory, EvolutionError> {
    run(op, u0, t_end, &ThetaStepper::implicit_euler(op, dt)?)
}

enum Representation {
    /// S Hermitian: `P(t) = V e^{−tΛ} Vᴴ M`.
    Spectral(HermitianPencilEigen),
    /// `A = −M⁻¹S`; `P(t) = expm(tA)`.
    General(CMatrix),
}

/// Dense representation of `T(t) = exp(−tM⁻¹S)` on the discrete space.
pub struct DenseSemigroup {
    mass: DMatrix<f64>,
    mass_inv: CMatrix,
    repr: Representation,
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub t: f64,
    /// `K = P(t) M⁻¹`, so that `K M f = T(t) f`.
    pub entries: CMatrix,
    pub coordinates: Vec<f64>,
}

impl DenseSemigroup {
    pub fn new(op: &DiscreteOperator) -> Result<Self, EvolutionError> {
        let n = op.dofs();
        if n > MAX_DENSE_DOFS {
            return Err(EvolutionError::DimensionTooLarge(n));
        }
        let mass = op.mass_dense();
        let mass_inv = match op.mass_kind() {
            MassKind::Lumped => linalg::to_complex(&DMatrix::from_diagonal(
                &nalgebra::DVector::from_iterator(n, op.lumped_mass().iter().map(|w| 1.0 / w)),
            )),
            MassKind::Consistent => linalg::to_complex(
                &mass
                    .clone()
                    .try_inverse()
                    .ok_or(EvolutionError::Linalg(LinalgError::Singular))?,
            ),
        };
        let s = op.stiffness_dense();
        let scale = linalg::max_abs(&s).max(1.0);
        let repr = if linalg::hermitian_defect(&s) <= 1e-14 * scale {
            Representation::Spectral(linalg::hermitian_pencil_eigen(&s, &mass)?)
        } else {
            Representation::General(-(&mass_inv * &s))
        };
        Ok(DenseSemigroup { mass, mass_inv, repr })
    }

    pub fn is_self_adjoint(&self) -> bool {
        matches!(self.repr, Representation::Spectral(_))
    }

    /// Generalized eigenpairs of `(S, M)` when `S` is Hermitian.
    pub fn modes(&self) -> Option<&HermitianPencilEigen> {
        match &self.repr {
            Representation::Spectral(e) => Some(e),
            Representation::General(_) => None,
        }
    }

    fn spectral_kernel(eig: &HermitianPencilEigen, t: f64) -> CMatrix {
        let v = &eig.vectors;
        let mut scaled = v.clone();
        for (k, lambda) in eig.values.iter().enumerate() {
            let f = Complex64::new((-t * lambda).exp(), 0.0);
            for z in scaled.column_mut(k).iter_mut() {
                *z *= f;
            }
        }
        scaled * v.adjoint()
    }

    /// `P(t) = exp(−tM⁻¹S)`.
    pub fn propagator(&self, t: f64) -> Result<CMatrix, EvolutionError> {
        if !(t >= 0.0) {
            return Err(EvolutionError::InvalidTime(t));
        }
        match &self.repr {
            Representation::Spectral(eig) => Ok(Self::spectral_kernel(eig, t) * linalg::to_complex(&self.mass)),
            Representation::General(a) => Ok(linalg::expm(&(a * Complex64::new(t, 0.0)))?),
        }
    }

    pub fn kernel_entries(&self, t: f64) -> Result<CMatrix, EvolutionError> {
        if !(t > 0.0) {
            return Err(EvolutionError::InvalidTime(t));
        }
        match &self.repr {
            Representation::Spectral(eig) => Ok(Self::spectral_kernel(eig, t)),
            Representation::General(_) => Ok(self.propagator(t)? * &self.mass_inv),
        }
    }

    pub fn apply(&self, u: &CVector, t: f64) -> Result<CVector, EvolutionError> {
        match &self.repr {
            Representation::Spectral(eig) => {
                let coeffs = eig.vectors.adjoint() * (linalg::to_complex(&self.mass) * u);
                let decayed = CVector::from_fn(coeffs.len(), |k, _| coeffs[k] * (-t * eig.values[k]).exp());
                Ok(&eig.vectors * decayed)
            }
            Representation::General(_) => Ok(self.propagator(t)? * u),
        }
    }

    /// `sup ‖T(t)f‖∞ / ‖f‖₂` over the discrete space.
    pub fn norm_2_to_inf(&self, t: f64) -> Result<f64, EvolutionError> {
        match &self.repr {
            Representation::Spectral(eig) => {
                let v = &eig.vectors;
                let weights: Vec<f64> = eig.values.iter().map(|l| (-2.0 * t * l).exp()).collect();
                Ok((0..v.nrows())
                    .map(|p| {
                        v.row(p)
                            .iter()
                            .zip(&weights)
                            .map(|(z, w)| z.norm_sqr() * w)
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
                    .sqrt())
            }
            Representation::General(_) => {
                let k = self.kernel_entries(t)?;
                let m = linalg::to_complex(&self.mass);
                let km = &k * &m;
                Ok((0..k.nrows())
                    .map(|p| {
                        let row = k.row(p);
                        (0..k.ncols()).map(|q| (row[q].conj() * km[(p, q)]).re).sum::<f64>()
                    })
                    .fold(0.0, f64::max)
                    .max(0.0)
                    .sqrt())
            }
        }
    }
}

pub fn expm_apply(op: &DiscreteOperator, u0: &StateVector, t: f64) -> Result<StateVector, EvolutionError> {
    check_state(op, u0)?;
    let sg = DenseSemigroup::new(op)?;
    Ok(StateVector::new(sg.apply(&u0.values, t)?, u0.time + t))
}

pub fn heat_kernel(op: &DiscreteOperator, t: f64) -> Result<KernelMatrix, EvolutionError> {
    let sg = DenseSemigroup::new(op)?;
    Ok(KernelMatrix {
        t,
        entries: sg.kernel_entries(t)?,
        coordinates: op.stretch().to_vec(),
    })
}

pub fn operator_norm_2_to_inf(op: &DiscreteOperator, t: f64) -> Result<f64, EvolutionError> {
    if !(t > 0.0) {
        return Err(EvolutionError::InvalidTime(t));
    }
    DenseSemigroup::new(op)?.norm_2_to_inf(t)
}

/// Induced sup-norm of a propagator: maximum absolute row sum, which is
/// exact for piecewise-linear functions.
pub fn operator_norm_inf(p: &CMatrix) -> f64 {
    linalg::norm_inf(p)
}

/// Induced norm of a propagator in the weighted ℓ¹ norm `Σ w_p |u_p|`
/// given by the lumped mass.
pub fn operator_norm_l1_weighted(op: &DiscreteOperator, p: &CMatrix) -> f64 {
    let w = op.lumped_mass();
    (0..p.ncols())
        .map(|q| (0..p.nrows()).map(|r| w[r] * p[(r, q)].norm()).sum::<f64>() / w[q])
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingMatrix;
    use crate::discretization::{assemble, CoefficientProfile, Mesh};
    use crate::graph::Network;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn edge_op(n: usize, mass: MassKind) -> DiscreteOperator {
        let net = Network::new(2, &[(0, 1)], 1).unwrap();
        assemble(&net, &CoefficientProfile::Constant(1.0), &CouplingMatrix::zeros(1), &Mesh::uniform(1, n), true, mass).unwrap()
    }

    fn kirchhoff_path(n: usize) -> DiscreteOperator {
        let net = Network::new(3, &[(0, 1), (1, 2)], 2).unwrap();
        assemble(&net, &CoefficientProfile::Constant(1.0), &CouplingMatrix::zeros(3), &Mesh::uniform(2, n), false, MassKind::Lumped).unwrap()
    }

    #[test]
    fn abs_integral_cases() {
        assert!((abs_linear_integral(c(1.0), c(3.0)) - 2.0).abs() < 1e-15);
        assert!((abs_linear_integral(c(-1.0), c(1.0)) - 0.5).abs() < 1e-15);
        assert!((abs_linear_integral(c(2.0), c(-1.0)) - 5.0 / 6.0).abs() < 1e-15);
        let i = Complex64::new(0.0, 1.0);
        assert!((abs_linear_integral(i, -i) - 0.5).abs() < 1e-15);
        // |s + i(1-s)| integrated numerically
        let (a, b) = (i, c(1.0));
        let n = 200_000;
        let quad: f64 = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                (a + (b - a) * s).norm()
            })
            .sum::<f64>()
            / n as f64;
        assert!((abs_linear_integral(a, b) - quad).abs() < 1e-10);
    }

    #[test]
    fn norm_examples() {
        let op = kirchhoff_path(8);
        let z = CVector::zeros(op.dofs());
        for p in [Norm::L1, Norm::L2, Norm::LInf] {
            assert_eq!(norm(&op, &z, p), 0.0);
        }
        let one = CVector::from_element(op.dofs(), c(1.0));
        assert!((norm(&op, &one, Norm::L1) - 2.0).abs() < 1e-14);
        assert!((norm(&op, &one, Norm::L2) - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(norm(&op, &one, Norm::LInf), 1.0);

        let op = edge_op(10, MassKind::Consistent);
        let mut hat = CVector::zeros(op.dofs());
        hat[op.node_dof(0, 9).unwrap()] = c(1.0);
        // the hat spans two elements next to the Dirichlet end: area h
        assert!((norm(&op, &hat, Norm::L1) - 0.1).abs() < 1e-15);
        assert_eq!(norm(&op, &hat, Norm::LInf), 1.0);
    }

    #[test]
    fn cn_step_examples() {
        // S = 0: Kirchhoff system with zero coupling and constants
        let op = kirchhoff_path(4);
        let u = StateVector::new(CVector::from_element(op.dofs(), c(2.0)), 0.0);
        let next = step_crank_nicolson(&op, &u, 0.1).unwrap();
        assert!((next.values - u.values).norm() < 1e-13);
        assert!((next.time - 0.1).abs() < 1e-15);

        let op = edge_op(16, MassKind::Lumped);
        let sg = DenseSemigroup::new(&op).unwrap();
        let eig = sg.modes().unwrap();
        let dt = 0.01;
        for k in [0, 3] {
            let v = eig.vectors.column(k).into_owned();
            let lambda = eig.values[k];
            let next = step_crank_nicolson(&op, &StateVector::new(v.clone(), 0.0), dt).unwrap();
            let r = (1.0 - lambda * dt / 2.0) / (1.0 + lambda * dt / 2.0);
            assert!((next.values - v * c(r)).norm() < 1e-12);
        }
    }

    #[test]
    fn evolve_examples() {
        let op = edge_op(40, MassKind::Lumped);
        let zero = StateVector::zeros(op.dofs());
        let tr = evolve(&op, &zero, 0.5, 0.05).unwrap();
        assert!(tr.states.iter().all(|s| s.values.norm() == 0.0));
        assert_eq!(tr.states.len(), 11);
        assert!((tr.last().time - 0.5).abs() < 1e-12);

        let sg = DenseSemigroup::new(&op).unwrap();
        let eig = sg.modes().unwrap();
        let v = eig.vectors.column(0).into_owned();
        let tr = evolve(&op, &StateVector::new(v, 0.0), 1.0, 0.01).unwrap();
        let l0 = tr.norms[0].l2;
        for (s, nr) in tr.states.iter().zip(&tr.norms) {
            let expected = (-eig.values[0] * s.time).exp() * l0;
            assert!((nr.l2 - expected).abs() < 1e-4 * l0);
        }
        assert!(tr.norms.windows(2).all(|w| w[1].l2 <= w[0].l2 + 1e-15));
    }

    #[test]
    fn expm_apply_examples() {
        let op = edge_op(30, MassKind::Lumped);
        let u0 = StateVector::new(op.interpolate_fn(|_, x| c((1.0 - x) * x.sin() + (1.0 - x))), 0.0);
        let same = expm_apply(&op, &u0, 0.0).unwrap();
        assert!((same.values - &u0.values).norm() < 1e-13);
        let exact = expm_apply(&op, &u0, 0.2).unwrap();
        let coarse = evolve(&op, &u0, 0.2, 0.02).unwrap();
        let fine = evolve(&op, &u0, 0.2, 0.01).unwrap();
        let e1 = norm(&op, &(&coarse.last().values - &exact.values), Norm::L2);
        let e2 = norm(&op, &(&fine.last().values - &exact.values), Norm::L2);
        let order = (e1 / e2).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
        // contraction at rate e^{s_h t}
        let s_h = -DenseSemigroup::new(&op).unwrap().modes().unwrap().values[0];
        assert!(norm(&op, &exact.values, Norm::L2) <= (s_h * 0.2).exp() * norm(&op, &u0.values, Norm::L2) * (1.0 + 1e-12));
    }

    #[test]
    fn kernel_examples() {
        let star = Network::new(4, &[(0, 3), (1, 3), (2, 3)], 3).unwrap();
        let op = assemble(&star, &CoefficientProfile::Constant(1.0), &CouplingMatrix::diagonal(&[-1.0; 3]), &Mesh::uniform(3, 10), true, MassKind::Lumped).unwrap();
        let k = heat_kernel(&op, 0.05).unwrap();
        assert!(linalg::hermitian_defect(&k.entries) < 1e-10);
        assert_eq!(k.coordinates.len(), op.dofs());

        let op = kirchhoff_path(10);
        let k = heat_kernel(&op, 0.3).unwrap();
        let one = CVector::from_element(op.dofs(), c(1.0));
        let image = &k.entries * op.mass_apply(&one);
        assert!(image.iter().all(|z| (z - c(1.0)).norm() < 1e-12));

        // short-time diagonal against the free-space kernel
        let op = edge_op(400, MassKind::Lumped);
        let t = 1e-3;
        let k = heat_kernel(&op, t).unwrap();
        let p = op.node_dof(0, 200).unwrap();
        let free = (4.0 * PI * t).powf(-0.5);
        assert!((k.entries[(p, p)].re - free).abs() / free < 0.1);
    }

    #[test]
    fn two_to_inf_examples() {
        let op = edge_op(200, MassKind::Lumped);
        let sg = DenseSemigroup::new(&op).unwrap();
        assert!(sg.norm_2_to_inf(20.0).unwrap() < 1e-15);

        // analytic eigenfunctions √2 sin((k−½)πx) on [0,1], Dirichlet at x = 1
        // (the tail x = 0 is free: cos form in the edge coordinate)
        let t = 0.05;
        let analytic = (0..=400)
            .map(|i| {
                let x = i as f64 / 400.0;
                (1..200)
                    .map(|k| {
                        let mu = (k as f64 - 0.5) * PI;
                        2.0 * (mu * x).cos().powi(2) * (-2.0 * mu * mu * t).exp()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
            .sqrt();
        let discrete = sg.norm_2_to_inf(t).unwrap();
        assert!((discrete - analytic).abs() / analytic < 1e-3, "{discrete} vs {analytic}");

        // the lumped discrete modes are the sampled cosines with eigenvalues
        // (4/h²) sin²(μh/2) and trapezoidal norm 1/2
        let h: f64 = 1.0 / 200.0;
        let exact_discrete = (0..200)
            .map(|i| {
                let x = i as f64 * h;
                (1..=200)
                    .map(|k| {
                        let mu = (k as f64 - 0.5) * PI;
                        let lam = 4.0 / (h * h) * (mu * h / 2.0).sin().powi(2);
                        2.0 * (mu * x).cos().powi(2) * (-2.0 * lam * t).exp()
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
            .sqrt();
        assert!((discrete - exact_discrete).abs() < 1e-8, "{discrete} vs {exact_discrete}");

        let mut prev = f64::INFINITY;
        for t in [0.01, 0.1, 1.0] {
            let v = sg.norm_2_to_inf(t).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn general_path_matches_spectral_path() {
        let op = edge_op(12, MassKind::Consistent);
        let sg = DenseSemigroup::new(&op).unwrap();
        let general = DenseSemigroup {
            mass: op.mass_dense(),
            mass_inv: sg.mass_inv.clone(),
            repr: Representation::General(-(&sg.mass_inv * op.stiffness_dense())),
        };
        for t in [1e-3, 0.1, 1.0] {
            let a = sg.propagator(t).unwrap();
            let b = general.propagator(t).unwrap();
            assert!((&a - &b).norm() < 1e-10 * a.norm());
            let (x, y) = (sg.norm_2_to_inf(t).unwrap(), general.norm_2_to_inf(t).unwrap());
            assert!((x - y).abs() < 1e-9 * x);
        }
    }
}
