//! Pairing of an interaction topology with the law that decides each competition.
//!
//! Every variant reduces to a list of competitions: a set of vertices and an
//! exponent `a`, where vertex `i` of the competition wins with probability
//! `x_i^a / sum_j x_j^a`. Graph edges are two-vertex competitions; hyperedges
//! use `a = 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Hypergraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("exponent {0} must be positive and finite")]
    BadExponent(f64),
    #[error("per-edge exponent table has {found} entries, graph has {expected} edges")]
    ExponentTableSize { expected: usize, found: usize },
    #[error("hypergraph law requires a hypergraph topology")]
    HypergraphLawOnGraph,
    #[error("graph laws require a graph topology")]
    GraphLawOnHypergraph,
}

/// Which vector field variant drives the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    /// Same exponent on every edge.
    UniformAlpha(f64),
    /// One exponent per edge, indexed like [`Graph::edges`].
    PerEdgeAlpha(Vec<f64>),
    /// Proportional choice inside each hyperedge.
    Hypergraph,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Graph(Graph),
    Hyper(Hypergraph),
}

impl Topology {
    pub fn vertex_count(&self) -> usize {
        match self {
            Topology::Graph(g) => g.vertex_count(),
            Topology::Hyper(h) => h.vertex_count(),
        }
    }

    pub fn as_graph(&self) -> Option<&Graph> {
        match self {
            Topology::Graph(g) => Some(g),
            Topology::Hyper(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Competition {
    pub members: Vec<usize>,
    pub alpha: f64,
}

/// A validated (topology, field) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    topology: Topology,
    spec: FieldSpec,
    competitions: Vec<Competition>,
    incident: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(topology: Topology, spec: FieldSpec) -> Result<Self, ModelError> {
        let competitions = match (&topology, &spec) {
            (Topology::Graph(g), FieldSpec::UniformAlpha(a)) => {
                check_exponent(*a)?;
                g.edges()
                    .iter()
                    .map(|&(i, j)| Competition {
                        members: vec![i, j],
                        alpha: *a,
                    })
                    .collect()
            }
            (Topology::Graph(g), FieldSpec::PerEdgeAlpha(table)) => {
                if table.len() != g.edge_count() {
                    return Err(ModelError::ExponentTableSize {
                        expected: g.edge_count(),
                        found: table.len(),
                    });
                }
                table.iter().try_for_each(|&a| check_exponent(a))?;
                g.edges()
                    .iter()
                    .zip(table)
                    .map(|(&(i, j), &alpha)| Competition {
                        members: vec![i, j],
                        alpha,
                    })
                    .collect()
            }
            (Topology::Hyper(h), FieldSpec::Hypergraph) => h
                .hyperedges()
                .iter()
                .map(|e| Competition {
                    members: e.clone(),
                    alpha: 1.0,
                })
                .collect::<Vec<_>>(),
            (Topology::Graph(_), FieldSpec::Hypergraph) => {
                return Err(ModelError::HypergraphLawOnGraph)
            }
            (Topology::Hyper(_), _) => return Err(ModelError::GraphLawOnHypergraph),
        };
        let mut incident = vec![Vec::new(); topology.vertex_count()];
        for (k, c) in competitions.iter().enumerate() {
            for &v in &c.members {
                incident[v].push(k);
            }
        }
        Ok(Self {
            topology,
            spec,
            competitions,
            incident,
        })
    }

    pub fn uniform(graph: Graph, alpha: f64) -> Result<Self, ModelError> {
        Self::new(Topology::Graph(graph), FieldSpec::UniformAlpha(alpha))
    }

    pub fn hypergraph(h: Hypergraph) -> Self {
        Self::new(Topology::Hyper(h), FieldSpec::Hypergraph)
            .expect("hypergraph law always matches a hypergraph")
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.topology.as_graph()
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn vertex_count(&self) -> usize {
        self.topology.vertex_count()
    }

    /// `N`: one ball is added per competition per step.
    pub fn competition_count(&self) -> usize {
        self.competitions.len()
    }

    pub fn competitions(&self) -> &[Competition] {
        &self.competitions
    }

    /// Indices of the competitions vertex `v` takes part in.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    /// Number of competitions vertex `v` takes part in.
    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn max_alpha(&self) -> f64 {
        self.competitions.iter().map(|c| c.alpha).fold(0.0, f64::max)
    }

    pub fn min_alpha(&self) -> f64 {
        self.competitions
            .iter()
            .map(|c| c.alpha)
            .fold(f64::INFINITY, f64::min)
    }

    /// Stable textual form of the topology and law, used for hashing run specs.
    pub fn canonical_text(&self) -> String {
        let mut out = match &self.topology {
            Topology::Graph(g) => format!("graph\n{}", g.to_edge_list()),
            Topology::Hyper(h) => {
                let mut s = format!("hypergraph\n{}\n", h.vertex_count());
                for e in h.hyperedges() {
                    let labels: Vec<String> = e.iter().map(|v| (v + 1).to_string()).collect();
                    s.push_str(&labels.join(" "));
                    s.push('\n');
                }
                s
            }
        };
        match &self.spec {
            FieldSpec::UniformAlpha(a) => out.push_str(&format!("alpha {a:e}\n")),
            FieldSpec::PerEdgeAlpha(t) => {
                for a in t {
                    out.push_str(&format!("edge_alpha {a:e}\n"));
                }
            }
            FieldSpec::Hypergraph => out.push_str("hypergraph_law\n"),
        }
        out
    }

    /// The uniform exponent when every competition shares one.
    pub fn common_alpha(&self) -> Option<f64> {
        let a = self.competitions.first()?.alpha;
        self.competitions.iter().all(|c| c.alpha == a).then_some(a)
    }
}

fn check_exponent(a: f64) -> Result<(), ModelError> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(ModelError::BadExponent(a))
    }
}
