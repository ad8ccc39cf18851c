//! Interaction topologies: simple connected graphs and hypergraphs.
//!
//! Vertices are labeled `1..=m` in every textual format and `0..m` in memory.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("vertex label {label} out of range 1..={m}")]
    OutOfRange { label: usize, m: usize },
    #[error("graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("hyperedge {0} has fewer than 2 distinct vertices")]
    DegenerateHyperedge(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
}

/// A finite simple connected graph on vertices `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 0-based edges, rejecting self-loops, duplicates,
    /// out-of-range endpoints and disconnected vertex sets.
    pub fn new(m: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        if m < 2 {
            return Err(GraphError::TooFewVertices(m));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &edges {
            for v in [i, j] {
                if v >= m {
                    return Err(GraphError::OutOfRange { label: v + 1, m });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i + 1));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(GraphError::DuplicateEdge(i + 1, j + 1));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        if !connected(m, edges.iter().map(|&(i, j)| vec![i, j])) {
            return Err(GraphError::Disconnected);
        }
        Ok(Self { m, edges, neighbors })
    }

    /// Parses the edge-list document: first line `m`, then one `i j` pair per line (1-based).
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let (m, rows) = parse_rows(text)?;
        let mut edges = Vec::with_capacity(rows.len());
        for (line, labels) in rows {
            if labels.len() != 2 {
                return Err(GraphError::Parse {
                    line,
                    message: format!("expected 2 vertex labels, found {}", labels.len()),
                });
            }
            edges.push((to_index(labels[0], m)?, to_index(labels[1], m)?));
        }
        Self::new(m, edges)
    }

    /// Serializes back into the edge-list document format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.m);
        for &(i, j) in &self.edges {
            out.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in construction order, 0-based.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    /// Index of the edge `{i, j}` in [`Graph::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
    }

    pub fn analyze(&self) -> StructureReport {
        let degree = self.degree(0);
        let regular_degree = (0..self.m)
            .all(|v| self.degree(v) == degree)
            .then_some(degree);
        StructureReport {
            bipartition: self.bipartition(),
            regular_degree,
        }
    }

    /// BFS 2-coloring from vertex 0; the color class of vertex 0 becomes `part_a`.
    pub fn bipartition(&self) -> BipartitionInfo {
        let mut color = vec![None; self.m];
        color[0] = Some(false);
        let mut queue = VecDeque::from([0usize]);
        let mut bipartite = true;
        while let Some(v) = queue.pop_front() {
            let c = color[v].expect("queued vertices are colored");
            for &w in &self.neighbors[v] {
                match color[w] {
                    None => {
                        color[w] = Some(!c);
                        queue.push_back(w);
                    }
                    Some(cw) if cw == c => bipartite = false,
                    Some(_) => {}
                }
            }
        }
        if !bipartite {
            return BipartitionInfo {
                is_bipartite: false,
                part_a: Vec::new(),
                part_b: Vec::new(),
                balanced: false,
            };
        }
        let (part_a, part_b): (Vec<usize>, Vec<usize>) =
            (0..self.m).partition(|&v| color[v] == Some(false));
        let balanced = part_a.len() == part_b.len();
        BipartitionInfo {
            is_bipartite: true,
            part_a,
            part_b,
            balanced,
        }
    }

    pub fn generate(family: &Family) -> Result<Self, GraphError> {
        let invalid = |msg: &str| Err(GraphError::InvalidGenerator(format!("{family}: {msg}")));
        let edges = match *family {
            Family::Complete(m) => {
                if m < 2 {
                    return invalid("needs m >= 2");
                }
                (0..m)
                    .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                    .collect()
            }
            Family::Cycle(m) => {
                if m < 3 {
                    return invalid("needs m >= 3");
                }
                (0..m).map(|i| (i, (i + 1) % m)).collect()
            }
            Family::Path(m) => {
                if m < 2 {
                    return invalid("needs m >= 2");
                }
                (0..m - 1).map(|i| (i, i + 1)).collect()
            }
            Family::Star(m) => {
                if m < 2 {
                    return invalid("needs m >= 2");
                }
                // the center is the last vertex
                (0..m - 1).map(|i| (i, m - 1)).collect()
            }
            Family::CompleteBipartite(a, b) => {
                if a == 0 || b == 0 {
                    return invalid("needs both parts nonempty");
                }
                (0..a)
                    .flat_map(|i| (0..b).map(move |j| (i, a + j)))
                    .collect()
            }
            Family::HyperOneEdge(_) => return invalid("not a graph family"),
        };
        let m = family.vertex_count();
        Self::new(m, edges)
    }
}

/// Regularity and bipartition of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureReport {
    pub bipartition: BipartitionInfo,
    /// Common degree `r` when the graph is regular.
    pub regular_degree: Option<usize>,
}

impl StructureReport {
    pub fn is_regular(&self) -> bool {
        self.regular_degree.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BipartitionInfo {
    pub is_bipartite: bool,
    /// 0-based; contains vertex 0 when bipartite.
    pub part_a: Vec<usize>,
    pub part_b: Vec<usize>,
    pub balanced: bool,
}

/// A connected hypergraph on vertices `0..m`; each hyperedge holds at least two distinct vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    m: usize,
    hyperedges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(m: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        if m < 2 {
            return Err(GraphError::TooFewVertices(m));
        }
        let mut cleaned = Vec::with_capacity(hyperedges.len());
        for (k, e) in hyperedges.into_iter().enumerate() {
            if let Some(&v) = e.iter().find(|&&v| v >= m) {
                return Err(GraphError::OutOfRange { label: v + 1, m });
            }
            let set: BTreeSet<usize> = e.into_iter().collect();
            if set.len() < 2 {
                return Err(GraphError::DegenerateHyperedge(k + 1));
            }
            cleaned.push(set.into_iter().collect::<Vec<_>>());
        }
        if !connected(m, cleaned.iter().cloned()) {
            return Err(GraphError::Disconnected);
        }
        Ok(Self {
            m,
            hyperedges: cleaned,
        })
    }

    /// Same layout as the edge-list format, with any number (>= 2) of labels per line.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let (m, rows) = parse_rows(text)?;
        let hyperedges = rows
            .into_iter()
            .map(|(_, labels)| {
                labels
                    .into_iter()
                    .map(|l| to_index(l, m))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(m, hyperedges)
    }

    /// The trivial hypergraph whose only hyperedge is the full vertex set.
    pub fn one_edge(m: usize) -> Result<Self, GraphError> {
        Self::new(m, vec![(0..m).collect()])
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn hyperedge_count(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }
}

impl From<&Graph> for Hypergraph {
    fn from(g: &Graph) -> Self {
        Self {
            m: g.m,
            hyperedges: g.edges.iter().map(|&(i, j)| vec![i, j]).collect(),
        }
    }
}

/// Named generator families, written `family:params` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Complete(usize),
    Cycle(usize),
    Path(usize),
    /// `m` vertices, center is vertex `m`.
    Star(usize),
    CompleteBipartite(usize, usize),
    HyperOneEdge(usize),
}

impl Family {
    pub fn vertex_count(&self) -> usize {
        match *self {
            Family::Complete(m)
            | Family::Cycle(m)
            | Family::Path(m)
            | Family::Star(m)
            | Family::HyperOneEdge(m) => m,
            Family::CompleteBipartite(a, b) => a + b,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Complete(m) => write!(f, "complete:{m}"),
            Family::Cycle(m) => write!(f, "cycle:{m}"),
            Family::Path(m) => write!(f, "path:{m}"),
            Family::Star(m) => write!(f, "star:{m}"),
            Family::CompleteBipartite(a, b) => write!(f, "complete_bipartite:{a}:{b}"),
            Family::HyperOneEdge(m) => write!(f, "hyper:one-edge:{m}"),
        }
    }
}

impl FromStr for Family {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::InvalidGenerator(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |k: usize| -> Result<usize, GraphError> {
            parts.get(k).and_then(|p| p.parse().ok()).ok_or_else(bad)
        };
        let family = match (parts[0], parts.len()) {
            ("complete", 2) => Family::Complete(num(1)?),
            ("cycle", 2) => Family::Cycle(num(1)?),
            ("path", 2) => Family::Path(num(1)?),
            ("star", 2) => Family::Star(num(1)?),
            ("complete_bipartite", 3) => Family::CompleteBipartite(num(1)?, num(2)?),
            ("hyper", 3) if parts[1] == "one-edge" => Family::HyperOneEdge(num(2)?),
            _ => return Err(bad()),
        };
        Ok(family)
    }
}

fn to_index(label: usize, m: usize) -> Result<usize, GraphError> {
    if label == 0 || label > m {
        Err(GraphError::OutOfRange { label, m })
    } else {
        Ok(label - 1)
    }
}

type Rows = Vec<(usize, Vec<usize>)>;

fn parse_rows(text: &str) -> Result<(usize, Rows), GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (line, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        message: "missing vertex count".into(),
    })?;
    let m: usize = header.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("vertex count `{header}` is not a nonnegative integer"),
    })?;
    let rows = lines
        .map(|(line, l)| {
            l.split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| GraphError::Parse {
                        line,
                        message: format!("`{tok}` is not a vertex label"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(|labels| (line, labels))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((m, rows))
}

fn connected(m: usize, groups: impl Iterator<Item = Vec<usize>>) -> bool {
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut components = m;
    for group in groups {
        for w in group.iter().skip(1) {
            let (a, b) = (find(&mut parent, group[0]), find(&mut parent, *w));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
    }
    components == 1
}
