//! Finite connected metric graphs with unit-length edges and one Dirichlet
//! vertex.
//!
//! Every edge `j` is parametrized over `[0, 1]`; `tail(j)` is the vertex at
//! `x = 0` and `head(j)` the vertex at `x = 1`. Orientation only fixes the
//! parametrization, it carries no flow direction.

use nalgebra::DMatrix;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("vertex index {index} out of range for a graph with {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("edge index {index} out of range for a graph with {m} edges")]
    EdgeOutOfRange { index: usize, m: usize },
    #[error("a network needs at least one vertex and one edge")]
    Empty,
    #[error("graph is not connected: vertex {vertex} is unreachable from vertex 0")]
    Disconnected { vertex: usize },
    #[error("vertex {vertex} has degree {degree}, only degree-one vertices can be merged")]
    NotDegreeOne { vertex: usize, degree: usize },
    #[error("the boundary vertex list is empty")]
    EmptyBoundary,
    #[error("position {0} lies outside the unit interval")]
    OutOfUnitInterval(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    tail: Vec<usize>,
    head: Vec<usize>,
    dirichlet: usize,
}

/// The incidence matrices Φ⁺ (edge starts) and Φ⁻ (edge ends), both `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidencePair {
    pub phi_plus: DMatrix<f64>,
    pub phi_minus: DMatrix<f64>,
}

impl IncidencePair {
    /// Φ = Φ⁺ − Φ⁻; loops cancel to a zero column.
    pub fn signed(&self) -> DMatrix<f64> {
        &self.phi_plus - &self.phi_minus
    }
}

/// Splitting of the graph at the Dirichlet vertex.
///
/// Components are formed by edges sharing a non-Dirichlet vertex. When
/// more than one component exists, `part_one` holds the component of the
/// lowest-numbered edge and `part_two` the union of the rest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SeparabilityReport {
    pub separable: bool,
    pub part_one: Vec<usize>,
    pub part_two: Vec<usize>,
    pub edges_one: Vec<usize>,
    pub edges_two: Vec<usize>,
}

impl Network {
    /// Validates and builds a network from `(tail, head)` pairs.
    pub fn new(n: usize, edges: &[(usize, usize)], dirichlet: usize) -> Result<Self, GraphError> {
        if n == 0 || edges.is_empty() {
            return Err(GraphError::Empty);
        }
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(GraphError::IndexOutOfRange { index: v, n });
                }
            }
        }
        if dirichlet >= n {
            return Err(GraphError::IndexOutOfRange { index: dirichlet, n });
        }
        let net = Network {
            n,
            tail: edges.iter().map(|e| e.0).collect(),
            head: edges.iter().map(|e| e.1).collect(),
            dirichlet,
        };
        if let Some(vertex) = net.first_unreachable() {
            return Err(GraphError::Disconnected { vertex });
        }
        Ok(net)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.tail.len()
    }

    pub fn tail(&self, j: usize) -> usize {
        self.tail[j]
    }

    pub fn head(&self, j: usize) -> usize {
        self.head[j]
    }

    pub fn dirichlet(&self) -> usize {
        self.dirichlet
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.tail.iter().copied().zip(self.head.iter().copied())
    }

    /// Non-Dirichlet vertices in increasing order; position in this list is
    /// the row/column index of the coupling matrix B.
    pub fn free_vertices(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| v != self.dirichlet).collect()
    }

    /// Number of edge ends at `v` (a loop counts twice).
    pub fn degree(&self, v: usize) -> usize {
        self.edges()
            .map(|(a, b)| usize::from(a == v) + usize::from(b == v))
            .sum()
    }

    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn first_unreachable(&self) -> Option<usize> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn incidence_matrices(&self) -> IncidencePair {
        let m = self.edge_count();
        let mut phi_plus = DMatrix::zeros(self.n, m);
        let mut phi_minus = DMatrix::zeros(self.n, m);
        for (j, (a, b)) in self.edges().enumerate() {
            phi_plus[(a, j)] = 1.0;
            phi_minus[(b, j)] = 1.0;
        }
        IncidencePair {
            phi_plus,
            phi_minus,
        }
    }

    /// Γ(v): indices of the edges with an endpoint at `v`, ascending. A loop
    /// is listed once.
    pub fn incident_edges(&self, v: usize) -> Result<Vec<usize>, GraphError> {
        if v >= self.n {
            return Err(GraphError::IndexOutOfRange { index: v, n: self.n });
        }
        Ok(self
            .edges()
            .enumerate()
            .filter(|(_, (a, b))| *a == v || *b == v)
            .map(|(j, _)| j)
            .collect())
    }

    /// Fuses the listed degree-one vertices into a single vertex, placed last
    /// and marked Dirichlet. The remaining vertices keep their relative order.
    pub fn merge_boundary_vertices(&self, boundary: &[usize]) -> Result<Network, GraphError> {
        if boundary.is_empty() {
            return Err(GraphError::EmptyBoundary);
        }
        let mut in_boundary = vec![false; self.n];
        for &v in boundary {
            if v >= self.n {
                return Err(GraphError::IndexOutOfRange { index: v, n: self.n });
            }
            let degree = self.degree(v);
            if degree != 1 {
                return Err(GraphError::NotDegreeOne { vertex: v, degree });
            }
            in_boundary[v] = true;
        }
        let kept = in_boundary.iter().filter(|b| !**b).count();
        let mut relabel = vec![kept; self.n];
        let mut next = 0;
        for v in 0..self.n {
            if !in_boundary[v] {
                relabel[v] = next;
                next += 1;
            }
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .map(|(a, b)| (relabel[a], relabel[b]))
            .collect();
        Network::new(kept + 1, &edges, kept)
    }

    /// Relabels vertices so that the Dirichlet vertex comes last, preserving
    /// the order of the others. Returns the new network and the map
    /// `old index -> new index`.
    pub fn with_dirichlet_last(&self) -> (Network, Vec<usize>) {
        let d = self.dirichlet;
        let relabel: Vec<usize> = (0..self.n)
            .map(|v| match v.cmp(&d) {
                std::cmp::Ordering::Less => v,
                std::cmp::Ordering::Equal => self.n - 1,
                std::cmp::Ordering::Greater => v - 1,
            })
            .collect();
        let net = Network {
            n: self.n,
            tail: self.tail.iter().map(|&v| relabel[v]).collect(),
            head: self.head.iter().map(|&v| relabel[v]).collect(),
            dirichlet: self.n - 1,
        };
        (net, relabel)
    }

    /// Image of the local position `x ∈ [0,1]` on edge `j` in the stretched
    /// interval `[0, m]`.
    pub fn stretch_coordinate(&self, j: usize, x: f64) -> Result<f64, GraphError> {
        if j >= self.edge_count() {
            return Err(GraphError::EdgeOutOfRange {
                index: j,
                m: self.edge_count(),
            });
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(GraphError::OutOfUnitInterval(x));
        }
        Ok(j as f64 + x)
    }

    pub fn separability_decomposition(&self) -> SeparabilityReport {
        let m = self.edge_count();
        let d = self.dirichlet;
        // union-find over edges, joined through shared non-Dirichlet vertices
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        let mut owner: Vec<Option<usize>> = vec![None; self.n];
        for (j, (a, b)) in self.edges().enumerate() {
            for v in [a, b] {
                if v == d {
                    continue;
                }
                match owner[v] {
                    None => owner[v] = Some(j),
                    Some(k) => {
                        let (ra, rb) = (find(&mut parent, j), find(&mut parent, k));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
        }
        let roots: Vec<usize> = (0..m).map(|j| find(&mut parent, j)).collect();
        let first = roots[0];
        let separable = roots.iter().any(|&r| r != first);
        let (mut edges_one, mut edges_two) = (Vec::new(), Vec::new());
        for (j, &r) in roots.iter().enumerate() {
            if r == first {
                edges_one.push(j);
            } else {
                edges_two.push(j);
            }
        }
        let mut part_one = Vec::new();
        let mut part_two = Vec::new();
        for v in 0..self.n {
            if v == d {
                continue;
            }
            if let Some(j) = owner[v] {
                if roots[j] == first {
                    part_one.push(v);
                } else {
                    part_two.push(v);
                }
            }
        }
        if !separable {
            part_two.clear();
            edges_two.clear();
        }
        SeparabilityReport {
            separable,
            part_one,
            part_two,
            edges_one,
            edges_two,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> Network {
        Network::new(4, &[(0, 3), (1, 3), (2, 3)], 3).unwrap()
    }

    #[test]
    fn build_smallest_and_star() {
        let net = Network::new(2, &[(0, 1)], 1).unwrap();
        assert_eq!(net.edge_count(), 1);
        assert_eq!(star().vertex_count(), 4);
    }

    #[test]
    fn isolated_vertex_is_rejected() {
        assert_eq!(
            Network::new(3, &[(0, 1)], 2),
            Err(GraphError::Disconnected { vertex: 2 })
        );
        assert!(matches!(
            Network::new(2, &[(0, 5)], 1),
            Err(GraphError::IndexOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn incidence_of_single_edge_star_and_loop() {
        let inc = Network::new(2, &[(0, 1)], 1).unwrap().incidence_matrices();
        assert_eq!(inc.phi_plus, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(inc.phi_minus, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));

        let inc = star().incidence_matrices();
        assert_eq!(inc.phi_minus.row(3).iter().copied().collect::<Vec<_>>(), vec![1.0; 3]);
        for v in 0..3 {
            assert_eq!(inc.phi_plus.row(v).sum(), 1.0);
            assert_eq!(inc.phi_plus[(v, v)], 1.0);
        }

        let looped = Network::new(2, &[(0, 0), (0, 1)], 1).unwrap();
        let inc = looped.incidence_matrices();
        assert_eq!(inc.phi_plus[(0, 0)], 1.0);
        assert_eq!(inc.phi_minus[(0, 0)], 1.0);
        assert_eq!(inc.signed().column(0).iter().map(|x| x.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn incident_edge_sets() {
        assert_eq!(star().incident_edges(3).unwrap(), vec![0, 1, 2]);
        assert_eq!(star().incident_edges(0).unwrap(), vec![0]);
        let path = Network::new(3, &[(0, 1), (1, 2)], 2).unwrap();
        assert_eq!(path.incident_edges(1).unwrap(), vec![0, 1]);
        assert!(path.incident_edges(7).is_err());
        let looped = Network::new(2, &[(0, 0), (0, 1)], 1).unwrap();
        assert_eq!(looped.incident_edges(0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn merge_path_ends() {
        let path = Network::new(3, &[(0, 1), (1, 2)], 2).unwrap();
        let merged = path.merge_boundary_vertices(&[0, 2]).unwrap();
        assert_eq!(merged.vertex_count(), 2);
        assert_eq!(merged.dirichlet(), 1);
        // old 1 -> new 0, fused -> new 1
        assert_eq!(merged.edges().collect::<Vec<_>>(), vec![(1, 0), (0, 1)]);
        let inc = merged.incidence_matrices();
        assert_eq!(inc.phi_plus, DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]));
        assert_eq!(inc.phi_minus, DMatrix::from_row_slice(2, 2, &[1., 0., 0., 1.]));
    }

    #[test]
    fn merge_single_leaf_relabels_only() {
        let merged = star().merge_boundary_vertices(&[0]).unwrap();
        assert_eq!(merged.vertex_count(), 4);
        assert_eq!(merged.dirichlet(), 3);
        assert_eq!(merged.edges().collect::<Vec<_>>(), vec![(3, 2), (0, 2), (1, 2)]);
    }

    #[test]
    fn merge_rejects_center() {
        assert_eq!(
            star().merge_boundary_vertices(&[3]),
            Err(GraphError::NotDegreeOne { vertex: 3, degree: 3 })
        );
    }

    #[test]
    fn stretch() {
        let net = star();
        assert_eq!(net.stretch_coordinate(0, 0.0).unwrap(), 0.0);
        assert_eq!(net.stretch_coordinate(2, 0.5).unwrap(), 2.5);
        assert_eq!(net.stretch_coordinate(2, 1.0).unwrap(), 3.0);
        assert_eq!(net.stretch_coordinate(0, 1.5), Err(GraphError::OutOfUnitInterval(1.5)));
    }

    #[test]
    fn dirichlet_moved_last() {
        let net = Network::new(3, &[(0, 1), (1, 2)], 0).unwrap();
        let (moved, map) = net.with_dirichlet_last();
        assert_eq!(map, vec![2, 0, 1]);
        assert_eq!(moved.dirichlet(), 2);
        assert_eq!(moved.edges().collect::<Vec<_>>(), vec![(2, 0), (0, 1)]);
    }

    #[test]
    fn separability_examples() {
        let two_leaves = Network::new(3, &[(0, 2), (1, 2)], 2).unwrap();
        let r = two_leaves.separability_decomposition();
        assert!(r.separable);
        assert_eq!(r.part_one, vec![0]);
        assert_eq!(r.part_two, vec![1]);

        let triangle = Network::new(3, &[(0, 1), (1, 2), (2, 0)], 2).unwrap();
        assert!(!triangle.separability_decomposition().separable);

        let single = Network::new(2, &[(0, 1)], 1).unwrap();
        let r = single.separability_decomposition();
        assert!(!r.separable);
        assert_eq!(r.part_one, vec![0]);
    }
}
