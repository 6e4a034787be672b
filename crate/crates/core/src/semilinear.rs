//! The semilinear system `u̇_j = (c_j u_j')' + (ψ_j(u_j))'` with the linear
//! vertex conditions, stepped implicitly in the linear part and explicitly
//! in the flux.

use crate::discretization::DiscreteOperator;
use crate::evolution::{EvolutionError, NormRecord, StateVector, ThetaStepper, Trajectory};
use num_complex::Complex64;
use thiserror::Error;

/// Default sup-norm cap beyond which a run is declared blown up.
pub const DEFAULT_BLOWUP_CAP: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemilinearError {
    #[error("tabulated flux evaluated at {value}, outside [{lo}, {hi}]")]
    EvaluationOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("sup norm {norm} exceeds the cap {cap} at t = {time}")]
    Blowup { time: f64, norm: f64, cap: f64 },
    #[error("flux list has {found} entries for {expected} edges")]
    EdgeCount { expected: usize, found: usize },
    #[error("table needs at least two strictly increasing abscissae")]
    BadTable,
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

/// A scalar flux function `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Flux {
    Zero,
    /// `ψ(s) = a s²`
    Quadratic(f64),
    /// `ψ(s) = a s³`
    Cubic(f64),
    /// Piecewise-linear interpolation of `(s, ψ(s))` samples; only the real
    /// part of the argument is used.
    Table { s: Vec<f64>, psi: Vec<f64> },
}

impl Flux {
    pub fn table(s: Vec<f64>, psi: Vec<f64>) -> Result<Self, SemilinearError> {
        if s.len() < 2 || s.len() != psi.len() || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SemilinearError::BadTable);
        }
        Ok(Flux::Table { s, psi })
    }

    pub fn eval(&self, u: Complex64) -> Result<Complex64, SemilinearError> {
        Ok(match self {
            Flux::Zero => Complex64::new(0.0, 0.0),
            Flux::Quadratic(a) => u * u * *a,
            Flux::Cubic(a) => u * u * u * *a,
            Flux::Table { s, psi } => {
                let x = u.re;
                let (lo, hi) = (s[0], s[s.len() - 1]);
                if !(lo..=hi).contains(&x) {
                    return Err(SemilinearError::EvaluationOutOfRange { value: x, lo, hi });
                }
                let k = s.partition_point(|&v| v <= x).clamp(1, s.len() - 1);
                let w = (x - s[k - 1]) / (s[k] - s[k - 1]);
                Complex64::new(psi[k - 1] * (1.0 - w) + psi[k] * w, 0.0)
            }
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Flux::Zero)
    }
}

/// Per-edge fluxes `ψ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearFlux(Vec<Flux>);

impl NonlinearFlux {
    pub fn uniform(flux: Flux, edges: usize) -> Self {
        NonlinearFlux(vec![flux; edges])
    }

    pub fn per_edge(fluxes: Vec<Flux>) -> Self {
        NonlinearFlux(fluxes)
    }

    pub fn edge(&self, j: usize) -> &Flux {
        &self.0[j]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// `∫ (ψ_j(u_h))' φ dx` against every nodal basis function `φ`.
///
/// Each edge contributes `ψ(u(1))φ(1) − ψ(u(0))φ(0) − ∫ ψ(u_h) φ' dx`, the
/// integral taken by two-point Gauss quadrature per element. The test
/// functions vanish at an enforced Dirichlet vertex.
pub fn assemble_nonlinear_term(
    op: &DiscreteOperator,
    psi: &NonlinearFlux,
    u: &StateVector,
) -> Result<crate::linalg::CVector, SemilinearError> {
    let m = op.network().edge_count();
    if psi.len() != m {
        return Err(SemilinearError::EdgeCount {
            expected: m,
            found: psi.len(),
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut out = crate::linalg::CVector::zeros(op.dofs());
    let value = |d: Option<usize>| d.map_or(zero, |p| u.values[p]);
    for e in op.elements() {
        let flux = psi.edge(e.edge);
        if flux.is_zero() {
            continue;
        }
        let (a, b) = (value(e.left), value(e.right));
        let mut integral = zero;
        for g in GAUSS {
            integral += flux.eval(a + (b - a) * g)? * (0.5 * e.h);
        }
        // φ' is −1/h for the left basis function and +1/h for the right one
        if let Some(p) = e.left {
            out[p] += integral / e.h;
        }
        if let Some(q) = e.right {
            out[q] -= integral / e.h;
        }
    }
    for j in 0..m {
        let flux = psi.edge(j);
        if flux.is_zero() {
            continue;
        }
        let n = op.mesh().elements(j);
        if let Some(p) = op.node_dof(j, n) {
            out[p] += flux.eval(u.values[p])?;
        }
        if let Some(p) = op.node_dof(j, 0) {
            out[p] -= flux.eval(u.values[p])?;
        }
    }
    Ok(out)
}

/// Semi-implicit stepper `(M + dt S) u⁺ = M u + dt N(u)`.
pub struct ImexStepper<'a> {
    op: &'a DiscreteOperator,
    psi: &'a NonlinearFlux,
    linear: ThetaStepper,
    dt: f64,
    cap: f64,
}

impl<'a> ImexStepper<'a> {
    pub fn new(op: &'a DiscreteOperator, psi: &'a NonlinearFlux, dt: f64, cap: f64) -> Result<Self, SemilinearError> {
        Ok(ImexStepper {
            op,
            psi,
            linear: ThetaStepper::implicit_euler(op, dt)?,
            dt,
            cap,
        })
    }

    pub fn step(&self, u: &StateVector) -> Result<StateVector, SemilinearError> {
        let mut rhs = self.op.mass_apply(&u.values);
        if self.psi.0.iter().any(|f| !f.is_zero()) {
            rhs += assemble_nonlinear_term(self.op, self.psi, u)? * Complex64::new(self.dt, 0.0);
        }
        let next = StateVector::new(self.linear.solve(&rhs)?, u.time + self.dt);
        let norm = next.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(norm <= self.cap) {
            return Err(SemilinearError::Blowup {
                time: next.time,
                norm,
                cap: self.cap,
            });
        }
        Ok(next)
    }
}

pub fn imex_step(
    op: &DiscreteOperator,
    psi: &NonlinearFlux,
    u: &StateVector,
    dt: f64,
) -> Result<StateVector, SemilinearError> {
    ImexStepper::new(op, psi, dt, DEFAULT_BLOWUP_CAP)?.step(u)
}

pub fn solve_semilinear(
    op: &DiscreteOperator,
    psi: &NonlinearFlux,
    u0: &StateVector,
    t_end: f64,
    dt: f64,
    cap: f64,
) -> Result<Trajectory, SemilinearError> {
    if u0.values.len() != op.dofs() {
        return Err(EvolutionError::LengthMismatch {
            expected: op.dofs(),
            found: u0.values.len(),
        }
        .into());
    }
    let stepper = ImexStepper::new(op, psi, dt, cap)?;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut traj = Trajectory::default();
    traj.norms.push(NormRecord::of(op, &u0.values));
    traj.states.push(u0.clone());
    let mut u = u0.clone();
    for k in 1..=steps {
        u = stepper.step(&u)?;
        u.time = u0.time + k as f64 * dt;
        traj.norms.push(NormRecord::of(op, &u.values));
        traj.states.push(u.clone());
    }
    Ok(traj)
}

/// Observed order `log₂(‖u_{dt} − u_{dt/2}‖∞ / ‖u_{dt/2} − u_{dt/4}‖∞)` at
/// `t_end`.
pub fn self_convergence_order(
    op: &DiscreteOperator,
    psi: &NonlinearFlux,
    u0: &StateVector,
    t_end: f64,
    dt: f64,
) -> Result<f64, SemilinearError> {
    let finals: Vec<_> = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|&d| solve_semilinear(op, psi, u0, t_end, d, DEFAULT_BLOWUP_CAP).map(|tr| tr.last().values.clone()))
        .collect::<Result<_, _>>()?;
    let sup = |v: crate::linalg::CVector| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let e1 = sup(&finals[0] - &finals[1]);
    let e2 = sup(&finals[1] - &finals[2]);
    Ok((e1 / e2).log2())
}

/// Largest sup-norm distance between two trajectories on the same times.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (&x.values - &y.values).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}
