//! Run configuration: a sectioned TOML document.
//!
//! ```toml
//! [network]
//! vertices = 4
//! edges = [[0, 3], [1, 3], [2, 3]]
//! dirichlet = 3
//!
//! [coefficients]
//! constant = 1.0
//!
//! [coupling]
//! B = [[-1, 0, 0], [0, -1, 0], [0, 0, "-1+0.5i"]]
//!
//! [mesh]
//! elements_per_edge = 50
//!
//! [run]
//! t_end = 1.0
//! dt = 0.01
//! ```
//!
//! After loading, the Dirichlet vertex is relabeled to come last; the other
//! vertices keep their order, so a reduced `B` needs no permutation.

use crate::coupling::CouplingMatrix;
use crate::discretization::{assemble, CoefficientProfile, DiscreteOperator, MassKind, Mesh};
use crate::graph::Network;
use crate::linalg::CMatrix;
use crate::semilinear::{Flux, NonlinearFlux, DEFAULT_BLOWUP_CAP};
use num_complex::Complex64;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Validation {
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    network: Spanned<RawNetwork>,
    #[serde(default)]
    coefficients: Option<Spanned<RawCoefficients>>,
    #[serde(default)]
    coupling: Option<RawCoupling>,
    mesh: Spanned<RawMesh>,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    initial: Option<Spanned<RawInitial>>,
    #[serde(default)]
    semilinear: Option<Spanned<RawSemilinear>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    vertices: usize,
    edges: Spanned<Vec<[usize; 2]>>,
    dirichlet: Option<Spanned<usize>>,
    merge_boundary: Option<Spanned<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    constant: Option<Spanned<f64>>,
    edges: Option<Spanned<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    #[serde(rename = "B")]
    b: Option<Spanned<Vec<Vec<Entry>>>>,
    #[serde(default)]
    kirchhoff_full: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Elements {
    Uniform(usize),
    PerEdge(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    elements_per_edge: Spanned<Elements>,
    #[serde(default)]
    mass: MassKind,
}

/// `[run]` parameters with their defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub tolerance: f64,
    /// Sample times for kernels and verdicts.
    pub times: Vec<f64>,
    /// Number of eigenvalues to report.
    pub k: usize,
    /// Random vectors per time in randomized checks.
    pub samples: usize,
    pub quantile: f64,
    pub coverage_target: f64,
    /// Properties evaluated by `verify`; empty means all.
    pub properties: Vec<String>,
    pub output: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 1.0,
            dt: 0.01,
            seed: 0,
            tolerance: 1e-8,
            times: vec![0.001, 0.01, 0.1],
            k: 5,
            samples: 8,
            quantile: 1.0,
            coverage_target: 0.99,
            properties: Vec::new(),
            output: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    profile: Option<String>,
    samples: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PsiSpec {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSemilinear {
    psi: PsiSpec,
    blowup_cap: Option<f64>,
}

/// Initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// Seeded uniform values in `[0, 1]` at every dof.
    Random,
    Constant(f64),
    /// The `k`-th generalized eigenvector (1-based), ascending eigenvalue.
    Mode(usize),
    /// Per-edge nodal values.
    Samples(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearSection {
    pub psi: NonlinearFlux,
    pub blowup_cap: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: Network,
    pub coefficients: CoefficientProfile,
    pub coupling: CouplingMatrix,
    pub dirichlet_enforced: bool,
    pub mesh: Mesh,
    pub mass: MassKind,
    pub run: RunSection,
    pub initial: InitialProfile,
    pub semilinear: Option<SemilinearSection>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
    base: Option<&'a Path>,
}

impl Ctx<'_> {
    fn invalid<T>(&self, key: &str, span: Option<std::ops::Range<usize>>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError::Validation {
            key: key.to_string(),
            line: span.map(|s| line_of(self.text, s.start)),
            message: message.into(),
        })
    }
}

/// Parses `a`, `a+bi`, `a-bi`, `bi`, `i`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return None;
    }
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return t.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let re: f64 = re.parse().ok()?;
    let im: f64 = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse().ok()?,
    };
    Some(Complex64::new(re, im))
}

fn parse_flux(spec: &str, base: Option<&Path>) -> Result<Flux, String> {
    let mut words = spec.split_whitespace();
    let kind = words.next().unwrap_or("");
    let arg = words.next();
    let number = |a: Option<&str>| -> Result<f64, String> {
        a.ok_or_else(|| format!("`{kind}` needs a coefficient"))?
            .parse::<f64>()
            .map_err(|e| format!("bad coefficient: {e}"))
    };
    match kind {
        "zero" => Ok(Flux::Zero),
        "quadratic" => Ok(Flux::Quadratic(number(arg)?)),
        "cubic" => Ok(Flux::Cubic(number(arg)?)),
        "table" => {
            let file = arg.ok_or("`table` needs a file name")?;
            let path = base.map_or_else(|| Path::new(file).to_path_buf(), |b| b.join(file));
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut s = Vec::new();
            let mut psi = Vec::new();
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                let vals: Vec<f64> = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|w| !w.is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                if vals.len() != 2 {
                    return Err(format!("{}: expected two columns", path.display()));
                }
                s.push(vals[0]);
                psi.push(vals[1]);
            }
            Flux::table(s, psi).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown flux `{other}`")),
    }
}

fn parse_initial(raw: &Spanned<RawInitial>, ctx: &Ctx) -> Result<InitialProfile, ConfigError> {
    let span = Some(raw.span());
    let raw = raw.get_ref();
    match (&raw.profile, &raw.samples) {
        (Some(_), Some(_)) => ctx.invalid("initial", span, "give either `profile` or `samples`"),
        (None, Some(s)) => Ok(InitialProfile::Samples(s.clone())),
        (None, None) => Ok(InitialProfile::Random),
        (Some(p), None) => {
            let mut words = p.split_whitespace();
            let kind = words.next().unwrap_or("");
            let arg = words.next();
            match (kind, arg) {
                ("random", None) => Ok(InitialProfile::Random),
                ("constant", Some(v)) => match v.parse() {
                    Ok(v) => Ok(InitialProfile::Constant(v)),
                    Err(_) => ctx.invalid("initial.profile", span, format!("bad constant `{v}`")),
                },
                ("mode", Some(k)) => match k.parse::<usize>() {
                    Ok(k) if k >= 1 => Ok(InitialProfile::Mode(k)),
                    _ => ctx.invalid("initial.profile", span, "mode index must be a positive integer"),
                },
                _ => ctx.invalid("initial.profile", span, format!("unknown profile `{p}`")),
            }
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_with_base(&text, path.parent())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_base(text, None)
    }

    fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let ctx = Ctx { text, base };

        let net_span = raw.network.span();
        let rn = raw.network.into_inner();
        let edges: Vec<(usize, usize)> = rn.edges.get_ref().iter().map(|e| (e[0], e[1])).collect();
        let edges_span = Some(rn.edges.span());
        for &(a, b) in &edges {
            if a >= rn.vertices || b >= rn.vertices {
                return ctx.invalid("network.edges", edges_span, format!("edge ({a}, {b}) refers to a vertex outside 0..{}", rn.vertices));
            }
        }
        let network = match (&rn.merge_boundary, &rn.dirichlet) {
            (Some(boundary), _) => {
                let first = boundary.get_ref().first().copied().unwrap_or(0);
                let net = Network::new(rn.vertices, &edges, first.min(rn.vertices.saturating_sub(1)))
                    .or_else(|e| ctx.invalid("network", Some(net_span.clone()), e.to_string()))?;
                net.merge_boundary_vertices(boundary.get_ref())
                    .or_else(|e| ctx.invalid("network.merge_boundary", Some(boundary.span()), e.to_string()))?
            }
            (None, Some(d)) => Network::new(rn.vertices, &edges, *d.get_ref())
                .or_else(|e| ctx.invalid("network", Some(d.span()), e.to_string()))?
                .with_dirichlet_last()
                .0,
            (None, None) => return ctx.invalid("network.dirichlet", Some(net_span), "missing Dirichlet vertex"),
        };
        let relabel: Vec<usize> = match (&rn.merge_boundary, &rn.dirichlet) {
            (None, Some(d)) => {
                let d = *d.get_ref();
                (0..rn.vertices).map(|v| if v < d { v } else if v == d { rn.vertices - 1 } else { v - 1 }).collect()
            }
            _ => (0..rn.vertices).collect(),
        };

        let coefficients = match &raw.coefficients {
            None => CoefficientProfile::Constant(1.0),
            Some(sc) => {
                let rc = sc.get_ref();
                match (&rc.constant, &rc.edges) {
                    (Some(c), None) => {
                        let v = *c.get_ref();
                        if !(v > 0.0) {
                            return ctx.invalid("coefficients.constant", Some(c.span()), format!("coefficient {v} must be strictly positive"));
                        }
                        CoefficientProfile::Constant(v)
                    }
                    (None, Some(e)) => {
                        let p = CoefficientProfile::Samples(e.get_ref().clone());
                        if let Err(err) = p.validate(network.edge_count()) {
                            return ctx.invalid("coefficients.edges", Some(e.span()), format!("{err}; coefficients must be strictly positive"));
                        }
                        p
                    }
                    _ => return ctx.invalid("coefficients", Some(sc.span()), "give exactly one of `constant` or `edges`"),
                }
            }
        };

        let (b_raw, kirchhoff_full) = match raw.coupling {
            Some(c) => (c.b, c.kirchhoff_full),
            None => (None, false),
        };
        let dim = if kirchhoff_full { network.vertex_count() } else { network.vertex_count() - 1 };
        let coupling = match b_raw {
            None => CouplingMatrix::zeros(dim),
            Some(b) => {
                let span = Some(b.span());
                let rows = b.get_ref();
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    let found = format!("{}x{}", rows.len(), rows.first().map_or(0, Vec::len));
                    return ctx.invalid("coupling.B", span, format!("expected a {dim}x{dim} matrix, found {found}"));
                }
                let mut m = CMatrix::zeros(dim, dim);
                for (i, row) in rows.iter().enumerate() {
                    for (h, e) in row.iter().enumerate() {
                        m[(i, h)] = match e {
                            Entry::Real(x) => Complex64::new(*x, 0.0),
                            Entry::Text(s) => match parse_complex(s) {
                                Some(z) => z,
                                None => return ctx.invalid("coupling.B", span, format!("cannot read `{s}` as a complex number")),
                            },
                        };
                    }
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return ctx.invalid("coupling.B", span, "entries must be finite");
                }
                if kirchhoff_full {
                    let mut p = CMatrix::zeros(dim, dim);
                    for i in 0..dim {
                        for h in 0..dim {
                            p[(relabel[i], relabel[h])] = m[(i, h)];
                        }
                    }
                    m = p;
                }
                CouplingMatrix::new(m).expect("square by construction")
            }
        };

        let mesh_span = Some(raw.mesh.span());
        let rm = raw.mesh.into_inner();
        let mesh = match rm.elements_per_edge.get_ref() {
            Elements::Uniform(n) => Mesh::uniform(network.edge_count(), *n),
            Elements::PerEdge(v) => {
                if v.len() != network.edge_count() {
                    return ctx.invalid("mesh.elements_per_edge", mesh_span, format!("{} entries for {} edges", v.len(), network.edge_count()));
                }
                Mesh::new(v.clone())
            }
        };
        if (0..mesh.edge_count()).any(|j| mesh.elements(j) == 0) {
            return ctx.invalid("mesh.elements_per_edge", Some(rm.elements_per_edge.span()), "every edge needs at least one element");
        }

        let run = raw.run;
        if !(run.dt > 0.0) || !(run.t_end >= 0.0) {
            return ctx.invalid("run", None, "need dt > 0 and t_end >= 0");
        }
        if run.times.iter().any(|&t| !(t > 0.0)) {
            return ctx.invalid("run.times", None, "sample times must be positive");
        }
        if !(run.tolerance > 0.0) {
            return ctx.invalid("run.tolerance", None, "tolerance must be positive");
        }

        let initial = match &raw.initial {
            None => InitialProfile::Random,
            Some(i) => parse_initial(i, &ctx)?,
        };

        let semilinear = match raw.semilinear {
            None => None,
            Some(s) => {
                let span = Some(s.span());
                let rs = s.into_inner();
                let specs = match rs.psi {
                    PsiSpec::One(one) => vec![one; network.edge_count()],
                    PsiSpec::Many(v) => v,
                };
                if specs.len() != network.edge_count() {
                    return ctx.invalid("semilinear.psi", span, format!("{} entries for {} edges", specs.len(), network.edge_count()));
                }
                let fluxes = specs
                    .iter()
                    .map(|s| parse_flux(s, ctx.base))
                    .collect::<Result<Vec<_>, _>>()
                    .or_else(|m| ctx.invalid("semilinear.psi", span.clone(), m))?;
                Some(SemilinearSection {
                    psi: NonlinearFlux::per_edge(fluxes),
                    blowup_cap: rs.blowup_cap.unwrap_or(DEFAULT_BLOWUP_CAP),
                })
            }
        };

        let cfg = RunConfig {
            network,
            coefficients,
            coupling,
            dirichlet_enforced: !kirchhoff_full,
            mesh,
            mass: rm.mass,
            run,
            initial,
            semilinear,
        };
        cfg.operator().or_else(|e| ctx.invalid("mesh", mesh_span, e.to_string()))?;
        Ok(cfg)
    }

    pub fn operator(&self) -> Result<DiscreteOperator, crate::discretization::DiscretizationError> {
        assemble(&self.network, &self.coefficients, &self.coupling, &self.mesh, self.dirichlet_enforced, self.mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[network]\nvertices = 2\nedges = [[0, 1]]\ndirichlet = 1\n\n[mesh]\nelements_per_edge = 4\n";

    #[test]
    fn minimal_config() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.network.edge_count(), 1);
        assert_eq!(cfg.coupling.dim(), 1);
        assert_eq!(cfg.mass, MassKind::Lumped);
        assert_eq!(cfg.run.seed, 0);
        assert_eq!(cfg.initial, InitialProfile::Random);
        assert_eq!(cfg.operator().unwrap().dofs(), 4);
    }

    #[test]
    fn wrong_b_dimension_names_key_and_line() {
        let text = format!("{MINIMAL}\n[coupling]\nB = [[1, 0], [0, 1]]\n");
        let err = RunConfig::parse(&text).unwrap_err();
        match err {
            ConfigError::Validation { key, line, .. } => {
                assert_eq!(key, "coupling.B");
                assert_eq!(line, Some(10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_coefficient_rejected() {
        let text = format!("{MINIMAL}\n[coefficients]\nedges = [[1.0, 0.0]]\n");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Validation { key, .. } if key == "coefficients.edges"));
        assert!(err.to_string().contains("positive"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = RunConfig::parse("[network]\nvertices = = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn complex_entries() {
        assert_eq!(parse_complex("1+2i"), Some(Complex64::new(1.0, 2.0)));
        assert_eq!(parse_complex("-0.5-i"), Some(Complex64::new(-0.5, -1.0)));
        assert_eq!(parse_complex("3i"), Some(Complex64::new(0.0, 3.0)));
        assert_eq!(parse_complex("-2"), Some(Complex64::new(-2.0, 0.0)));
        assert_eq!(parse_complex("1e-3+2e-1i"), Some(Complex64::new(1e-3, 0.2)));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn dirichlet_moved_last_and_full_b_permuted() {
        let text = "[network]\nvertices = 3\nedges = [[0, 1], [1, 2]]\ndirichlet = 0\n\
                    [coupling]\nkirchhoff_full = true\nB = [[-1, 0, 0], [0, -2, 0], [0, 0, -3]]\n\
                    [mesh]\nelements_per_edge = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.network.dirichlet(), 2);
        assert!(!cfg.dirichlet_enforced);
        // old vertex 0 (b = −1) is now vertex 2
        assert_eq!(cfg.coupling.get(2, 2), Complex64::new(-1.0, 0.0));
        assert_eq!(cfg.coupling.get(0, 0), Complex64::new(-2.0, 0.0));
    }

    #[test]
    fn merge_boundary_builds_fused_dirichlet() {
        let text = "[network]\nvertices = 3\nedges = [[0, 1], [1, 2]]\nmerge_boundary = [0, 2]\n[mesh]\nelements_per_edge = 3\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.network.vertex_count(), 2);
        assert_eq!(cfg.network.dirichlet(), 1);
    }

    #[test]
    fn semilinear_and_initial_sections() {
        let text = format!("{MINIMAL}\n[initial]\nprofile = \"mode 2\"\n[semilinear]\npsi = \"quadratic 0.5\"\n");
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.initial, InitialProfile::Mode(2));
        let s = cfg.semilinear.unwrap();
        assert_eq!(s.psi.edge(0), &Flux::Quadratic(0.5));
        assert_eq!(s.blowup_cap, DEFAULT_BLOWUP_CAP);
        let bad = format!("{MINIMAL}\n[semilinear]\npsi = \"sine 1\"\n");
        assert!(matches!(RunConfig::parse(&bad), Err(ConfigError::Validation { key, .. }) if key == "semilinear.psi"));
    }

    #[test]
    fn disconnected_network_is_a_validation_error() {
        let text = "[network]\nvertices = 3\nedges = [[0, 1]]\ndirichlet = 2\n[mesh]\nelements_per_edge = 2\n";
        assert!(matches!(RunConfig::parse(text), Err(ConfigError::Validation { key, .. }) if key == "network"));
    }
}
