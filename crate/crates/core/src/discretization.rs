//! Piecewise-linear finite elements for the coupled form on the network.
//!
//! Degrees of freedom are numbered with the interior nodes first, edge by
//! edge in increasing position, followed by the vertices that carry a value
//! (all vertices except the Dirichlet one when it is enforced) in index order.
//! Vertex dofs are shared by every incident edge, which encodes continuity.

use crate::coupling::CouplingMatrix;
use crate::graph::Network;
use crate::linalg::{self, CMatrix, CVector, LinalgError};
use crate::sparse::CsrMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("coupling matrix has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("coefficient sample {value} on edge {edge} is not strictly positive")]
    NonPositiveCoefficient { edge: usize, value: f64 },
    #[error("coefficient profile for edge {edge} needs at least two samples")]
    TooFewSamples { edge: usize },
    #[error("coefficient profile lists {found} edges, network has {expected}")]
    ProfileEdgeCount { expected: usize, found: usize },
    #[error("mesh lists {found} edges, network has {expected}")]
    MeshEdgeCount { expected: usize, found: usize },
    #[error("edge {edge} needs at least one element")]
    EmptyEdge { edge: usize },
    #[error("edge functions disagree at vertex {vertex} by {gap}")]
    DiscontinuousAtVertex { vertex: usize, gap: f64 },
    #[error("function has value {value} at the Dirichlet vertex")]
    NonzeroAtDirichlet { value: f64 },
    #[error("edge {edge} expects {expected} samples, got {found}")]
    SampleCount { edge: usize, expected: usize, found: usize },
    #[error("operator has no Dirichlet vertex")]
    NoDirichlet,
    #[error("pencil is singular: {0}")]
    SingularPencil(LinalgError),
}

/// Edge diffusion coefficients `c_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientProfile {
    Constant(f64),
    /// Per edge, samples at uniform points of `[0,1]`, interpolated linearly.
    Samples(Vec<Vec<f64>>),
}

impl CoefficientProfile {
    pub fn validate(&self, edges: usize) -> Result<(), DiscretizationError> {
        match self {
            CoefficientProfile::Constant(c) => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(DiscretizationError::NonPositiveCoefficient { edge: 0, value: *c });
                }
            }
            CoefficientProfile::Samples(per_edge) => {
                if per_edge.len() != edges {
                    return Err(DiscretizationError::ProfileEdgeCount {
                        expected: edges,
                        found: per_edge.len(),
                    });
                }
                for (edge, samples) in per_edge.iter().enumerate() {
                    if samples.len() < 2 {
                        return Err(DiscretizationError::TooFewSamples { edge });
                    }
                    if let Some(&value) = samples.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                        return Err(DiscretizationError::NonPositiveCoefficient { edge, value });
                    }
                }
            }
        }
        Ok(())
    }

    /// `c_j(x)` for `x ∈ [0,1]`.
    pub fn value(&self, edge: usize, x: f64) -> f64 {
        match self {
            CoefficientProfile::Constant(c) => *c,
            CoefficientProfile::Samples(per_edge) => {
                let s = &per_edge[edge];
                let cells = s.len() - 1;
                let pos = (x.clamp(0.0, 1.0) * cells as f64).min(cells as f64);
                let k = (pos.floor() as usize).min(cells - 1);
                let w = pos - k as f64;
                s[k] * (1.0 - w) + s[k + 1] * w
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            CoefficientProfile::Constant(c) => *c,
            CoefficientProfile::Samples(per_edge) => per_edge
                .iter()
                .flatten()
                .copied()
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassKind {
    Consistent,
    /// Row-sum lumping: each element gives `h/2` to both endpoints.
    #[default]
    Lumped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mesh {
    elements: Vec<usize>,
}

impl Mesh {
    pub fn uniform(edges: usize, per_edge: usize) -> Self {
        Mesh {
            elements: vec![per_edge; edges],
        }
    }

    pub fn new(elements: Vec<usize>) -> Self {
        Mesh { elements }
    }

    pub fn elements(&self, edge: usize) -> usize {
        self.elements[edge]
    }

    pub fn edge_count(&self) -> usize {
        self.elements.len()
    }

    pub fn max_h(&self) -> f64 {
        self.elements
            .iter()
            .map(|&n| 1.0 / n as f64)
            .fold(0.0, f64::max)
    }
}

/// One subinterval: its edge, local start and length, and the dofs of its
/// endpoints (`None` at the Dirichlet vertex).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub edge: usize,
    pub x0: f64,
    pub h: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    network: Network,
    mesh: Mesh,
    coupling: CouplingMatrix,
    dirichlet_enforced: bool,
    mass_kind: MassKind,
    dofs: usize,
    /// `node_dofs[j][k]`: dof of node `k` on edge `j`.
    node_dofs: Vec<Vec<Option<usize>>>,
    vertex_dofs: Vec<Option<usize>>,
    elements: Vec<Element>,
    stretch: Vec<f64>,
    mass_consistent: CsrMatrix<f64>,
    mass_lumped: Vec<f64>,
    stiffness_c: CsrMatrix<f64>,
    stiffness_unit: CsrMatrix<f64>,
    operator: CsrMatrix<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub alpha: f64,
    pub omega: f64,
    pub continuity_m: f64,
    pub poincare_c: f64,
}

/// Assembles mass and stiffness-plus-coupling matrices.
///
/// With `dirichlet_enforced` the coupling matrix acts on the free vertices
/// in index order and the Dirichlet vertex carries no dof. Otherwise every
/// vertex carries a dof and `b` must be `n × n`.
pub fn assemble(
    net: &Network,
    c: &CoefficientProfile,
    b: &CouplingMatrix,
    mesh: &Mesh,
    dirichlet_enforced: bool,
    mass_kind: MassKind,
) -> Result<DiscreteOperator, DiscretizationError> {
    let m = net.edge_count();
    c.validate(m)?;
    if mesh.edge_count() != m {
        return Err(DiscretizationError::MeshEdgeCount {
            expected: m,
            found: mesh.edge_count(),
        });
    }
    if let Some(edge) = (0..m).find(|&j| mesh.elements(j) == 0) {
        return Err(DiscretizationError::EmptyEdge { edge });
    }
    let coupled: Vec<usize> = if dirichlet_enforced {
        net.free_vertices()
    } else {
        (0..net.vertex_count()).collect()
    };
    if b.dim() != coupled.len() {
        return Err(DiscretizationError::DimensionMismatch {
            expected: coupled.len(),
            found: b.dim(),
        });
    }

    let mut next = 0;
    let mut node_dofs: Vec<Vec<Option<usize>>> = Vec::with_capacity(m);
    let mut stretch = Vec::new();
    for j in 0..m {
        let n = mesh.elements(j);
        let mut nodes = vec![None; n + 1];
        for (k, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
            *node = Some(next);
            stretch.push(j as f64 + k as f64 / n as f64);
            next += 1;
        }
        node_dofs.push(nodes);
    }
    let mut vertex_dofs = vec![None; net.vertex_count()];
    for &v in &coupled {
        vertex_dofs[v] = Some(next);
        let j = net.incident_edges(v).expect("vertex in range")[0];
        let at_tail = net.tail(j) == v;
        stretch.push(j as f64 + if at_tail { 0.0 } else { 1.0 });
        next += 1;
    }
    for (j, nodes) in node_dofs.iter_mut().enumerate() {
        let n = nodes.len() - 1;
        nodes[0] = vertex_dofs[net.tail(j)];
        nodes[n] = vertex_dofs[net.head(j)];
    }
    let dofs = next;

    let mut elements = Vec::new();
    let mut mass = Vec::new();
    let mut lumped = vec![0.0; dofs];
    let mut kc = Vec::new();
    let mut k1 = Vec::new();
    for (j, nodes) in node_dofs.iter().enumerate() {
        let n = nodes.len() - 1;
        let h = 1.0 / n as f64;
        for k in 0..n {
            let x0 = k as f64 * h;
            let e = Element {
                edge: j,
                x0,
                h,
                left: nodes[k],
                right: nodes[k + 1],
            };
            elements.push(e);
            let cbar = c.value(j, x0 + 0.5 * h);
            let ends = [e.left, e.right];
            for (a, da) in ends.iter().enumerate() {
                let Some(p) = *da else { continue };
                lumped[p] += 0.5 * h;
                for (bb, db) in ends.iter().enumerate() {
                    let Some(q) = *db else { continue };
                    let same = a == bb;
                    mass.push((p, q, if same { h / 3.0 } else { h / 6.0 }));
                    let sign = if same { 1.0 } else { -1.0 };
                    kc.push((p, q, sign * cbar / h));
                    k1.push((p, q, sign / h));
                }
            }
        }
    }
    let mut s: Vec<(usize, usize, Complex64)> = kc
        .iter()
        .map(|&(p, q, v)| (p, q, Complex64::new(v, 0.0)))
        .collect();
    for (a, &vi) in coupled.iter().enumerate() {
        for (bb, &vh) in coupled.iter().enumerate() {
            let bih = b.get(a, bb);
            if bih != Complex64::new(0.0, 0.0) {
                let (p, q) = (vertex_dofs[vi].unwrap(), vertex_dofs[vh].unwrap());
                s.push((p, q, -bih));
            }
        }
    }

    Ok(DiscreteOperator {
        network: net.clone(),
        mesh: mesh.clone(),
        coupling: b.clone(),
        dirichlet_enforced,
        mass_kind,
        dofs,
        node_dofs,
        vertex_dofs,
        elements,
        stretch,
        mass_consistent: CsrMatrix::from_triplets(dofs, mass),
        mass_lumped: lumped,
        stiffness_c: CsrMatrix::from_triplets(dofs, kc),
        stiffness_unit: CsrMatrix::from_triplets(dofs, k1),
        operator: CsrMatrix::from_triplets(dofs, s),
    })
}

impl DiscreteOperator {
    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn dirichlet_enforced(&self) -> bool {
        self.dirichlet_enforced
    }

    pub fn mass_kind(&self) -> MassKind {
        self.mass_kind
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Stretched coordinate in `[0, m]` of every dof.
    pub fn stretch(&self) -> &[f64] {
        &self.stretch
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dofs[v]
    }

    pub fn node_dof(&self, edge: usize, node: usize) -> Option<usize> {
        self.node_dofs[edge][node]
    }

    /// S = K_c − B on the vertex dofs.
    pub fn stiffness(&self) -> &CsrMatrix<Complex64> {
        &self.operator
    }

    pub fn stiffness_coefficient(&self) -> &CsrMatrix<f64> {
        &self.stiffness_c
    }

    /// Stiffness with `c ≡ 1`.
    pub fn stiffness_unit(&self) -> &CsrMatrix<f64> {
        &self.stiffness_unit
    }

    pub fn consistent_mass(&self) -> &CsrMatrix<f64> {
        &self.mass_consistent
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.mass_lumped
    }

    /// The mass matrix used for evolution, dense.
    pub fn mass_dense(&self) -> DMatrix<f64> {
        match self.mass_kind {
            MassKind::Consistent => self.mass_consistent.to_dense(),
            MassKind::Lumped => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.mass_lumped)),
        }
    }

    pub fn stiffness_dense(&self) -> CMatrix {
        self.operator.to_dense()
    }

    pub fn mass_apply(&self, u: &CVector) -> CVector {
        match self.mass_kind {
            MassKind::Consistent => self.mass_consistent.mul_vec(u),
            MassKind::Lumped => CVector::from_fn(self.dofs, |i, _| u[i] * self.mass_lumped[i]),
        }
    }

    pub fn stiffness_apply(&self, u: &CVector) -> CVector {
        self.operator.mul_vec(u)
    }

    fn check_len(&self, v: &CVector) -> Result<(), DiscretizationError> {
        if v.len() != self.dofs {
            return Err(DiscretizationError::LengthMismatch {
                expected: self.dofs,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// 𝔞(f, g) = gᴴ S f.
    pub fn form_value(&self, f: &CVector, g: &CVector) -> Result<Complex64, DiscretizationError> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(linalg::dot_conj(g, &self.operator.mul_vec(f)))
    }

    /// Nodal interpolant from per-edge samples at the `N_j + 1` mesh nodes.
    /// Endpoint samples of edges sharing a vertex must agree within `tol`.
    pub fn interpolate(&self, edge_values: &[Vec<Complex64>], tol: f64) -> Result<CVector, DiscretizationError> {
        let m = self.network.edge_count();
        if edge_values.len() != m {
            return Err(DiscretizationError::LengthMismatch {
                expected: m,
                found: edge_values.len(),
            });
        }
        let mut out = CVector::zeros(self.dofs);
        let mut vertex_value: Vec<Option<Complex64>> = vec![None; self.network.vertex_count()];
        for (j, vals) in edge_values.iter().enumerate() {
            let n = self.mesh.elements(j);
            if vals.len() != n + 1 {
                return Err(DiscretizationError::SampleCount {
                    edge: j,
                    expected: n + 1,
                    found: vals.len(),
                });
            }
            for (v, val) in [(self.network.tail(j), vals[0]), (self.network.head(j), vals[n])] {
                match vertex_value[v] {
                    None => vertex_value[v] = Some(val),
                    Some(prev) => {
                        let gap = (prev - val).norm();
                        if gap > tol {
                            return Err(DiscretizationError::DiscontinuousAtVertex { vertex: v, gap });
                        }
                    }
                }
            }
            for (k, val) in vals.iter().enumerate() {
                if let Some(p) = self.node_dofs[j][k] {
                    out[p] = *val;
                }
            }
        }
        if self.dirichlet_enforced {
            let d = self.network.dirichlet();
            if let Some(val) = vertex_value[d] {
                if val.norm() > tol {
                    return Err(DiscretizationError::NonzeroAtDirichlet { value: val.norm() });
                }
            }
        }
        Ok(out)
    }

    /// Nodal interpolant of `f(edge, x)`. Values at vertex dofs are taken
    /// from the smallest incident edge; no continuity check is made.
    pub fn interpolate_fn(&self, f: impl Fn(usize, f64) -> Complex64) -> CVector {
        let mut out = CVector::zeros(self.dofs);
        for (j, nodes) in self.node_dofs.iter().enumerate().rev() {
            let n = nodes.len() - 1;
            for (k, dof) in nodes.iter().enumerate() {
                if let Some(p) = dof {
                    out[*p] = f(j, k as f64 / n as f64);
                }
            }
        }
        out
    }

    /// Poincaré constant `1/λ_min(K₁, M)` with the consistent mass.
    pub fn poincare_constant(&self) -> Result<f64, DiscretizationError> {
        if !self.dirichlet_enforced {
            return Err(DiscretizationError::NoDirichlet);
        }
        let k1 = linalg::to_complex(&self.stiffness_unit.to_dense());
        let eig = linalg::hermitian_pencil_eigen(&k1, &self.mass_consistent.to_dense())
            .map_err(DiscretizationError::SingularPencil)?;
        Ok(1.0 / eig.values[0])
    }

    /// Inner-product matrix of the energy space: `K₁` with a Dirichlet
    /// vertex, `K₁ + M` otherwise.
    fn energy_gram(&self) -> DMatrix<f64> {
        let k1 = self.stiffness_unit.to_dense();
        if self.dirichlet_enforced {
            k1
        } else {
            k1 + self.mass_consistent.to_dense()
        }
    }

    /// `α(ω) = λ_min(Re S + ωM, V)` on a grid of shifts, with `V` the energy
    /// Gram matrix. Reports the smallest grid shift with `α > 0` (or the
    /// best shift when none is positive) and the continuity constant
    /// `‖V^{-1/2} S V^{-1/2}‖₂`.
    pub fn ellipticity_constants(&self, omega_grid: &[f64]) -> Result<EllipticityReport, DiscretizationError> {
        let gram = self.energy_gram();
        let mass = self.mass_consistent.to_dense();
        let s = self.stiffness_dense();
        let sym = (&s + s.adjoint()) * Complex64::new(0.5, 0.0);
        let mut sorted: Vec<f64> = omega_grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut best: Option<(f64, f64)> = None;
        for &omega in &sorted {
            let shifted = &sym + linalg::to_complex(&(&mass * omega));
            let eig = linalg::hermitian_pencil_eigen(&shifted, &gram).map_err(DiscretizationError::SingularPencil)?;
            let alpha = eig.values[0];
            if alpha > 0.0 {
                best = Some((alpha, omega));
                break;
            }
            if best.is_none_or(|(a, _)| alpha > a) {
                best = Some((alpha, omega));
            }
        }
        let (alpha, omega) = best.ok_or(DiscretizationError::LengthMismatch { expected: 1, found: 0 })?;

        let chol = gram
            .clone()
            .cholesky()
            .ok_or(DiscretizationError::SingularPencil(LinalgError::NotPositiveDefinite))?;
        let l = linalg::to_complex(&chol.l());
        let x = l
            .solve_lower_triangular(&s)
            .ok_or(DiscretizationError::SingularPencil(LinalgError::Singular))?;
        let c = l
            .solve_lower_triangular(&x.adjoint())
            .ok_or(DiscretizationError::SingularPencil(LinalgError::Singular))?
            .adjoint();
        let continuity_m = c.singular_values().iter().copied().fold(0.0, f64::max);
        let poincare_c = if self.dirichlet_enforced {
            self.poincare_constant()?
        } else {
            f64::INFINITY
        };
        Ok(EllipticityReport {
            alpha,
            omega,
            continuity_m,
            poincare_c,
        })
    }
}
