//! Weighted directed influence graphs.
//!
//! The influence graph of a dynamic system has one node per state variable
//! and a directed edge `i -> j` whenever state `i` enters the governing
//! equation of state `j`. For a linear system `xdot = A x` this means an edge
//! `i -> j` exactly when `A[j][i] != 0`, carrying weight `A[j][i]`. Zero
//! weights are not edges; constructors reject them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use thiserror::Error;

/// Index of a state node, stable within one graph's namespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(ix: usize) -> Self {
        NodeId(ix)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("state matrix must be square, got {rows}x{cols}")]
    NonSquareMatrix { rows: usize, cols: usize },
    #[error("node {0} out of range for graph with {1} nodes")]
    NodeOutOfRange(usize, usize),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),
    #[error("edge {0} -> {1} has zero weight; zero-weight edges are not edges")]
    ZeroWeight(usize, usize),
    #[error("step {0} -> {1} is not an edge of the graph")]
    NotAnEdge(usize, usize),
    #[error("empty node sequence is not a path")]
    EmptyPath,
    #[error("glue lists must have equal length, got {0} and {1}")]
    GlueLengthMismatch(usize, usize),
    #[error("glue list contains duplicate node {0}")]
    DuplicateGlue(usize),
    #[error("label list length {0} does not match node count {1}")]
    LabelLengthMismatch(usize, usize),
    #[error("csv parse error: {0}")]
    Csv(String),
    #[error("ragged matrix csv: row {row} has {got} entries, expected {expected}")]
    RaggedCsv { row: usize, got: usize, expected: usize },
}

/// Immutable weighted digraph over `n` state nodes.
///
/// Self-loops are permitted (diagonal of the state matrix); parallel edges
/// are not. Every stored edge has a nonzero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGraph {
    n: usize,
    /// out[i] = sorted list of (target, weight)
    out: Vec<Vec<(usize, f64)>>,
    labels: Option<Vec<String>>,
}

/// Ordered family of directed paths, each a node sequence.
///
/// When used as a linking witness the paths are pairwise node-disjoint
/// (no shared node, endpoints included) and a length-0 path is a single
/// node that is both a source and a sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFamily {
    pub paths: Vec<Vec<NodeId>>,
}

impl PathFamily {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// True when no node occurs in more than one path (or twice in one).
    pub fn is_node_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        for path in &self.paths {
            for node in path {
                if !seen.insert(node.0) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl InfluenceGraph {
    /// Graph with `n` nodes and no edges.
    pub fn new(n: usize) -> Self {
        InfluenceGraph {
            n,
            out: vec![Vec::new(); n],
            labels: None,
        }
    }

    pub fn with_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut g = Self::new(n);
        for &(src, dst, w) in edges {
            g.add_edge(src, dst, w)?;
        }
        Ok(g)
    }

    /// Adds `src -> dst` with the given weight. Rejects zero weights,
    /// duplicates and out-of-range nodes.
    pub fn add_edge(&mut self, src: usize, dst: usize, weight: f64) -> Result<(), GraphError> {
        if src >= self.n {
            return Err(GraphError::NodeOutOfRange(src, self.n));
        }
        if dst >= self.n {
            return Err(GraphError::NodeOutOfRange(dst, self.n));
        }
        if weight == 0.0 || !weight.is_finite() {
            return Err(GraphError::ZeroWeight(src, dst));
        }
        let row = &mut self.out[src];
        match row.binary_search_by_key(&dst, |&(t, _)| t) {
            Ok(_) => Err(GraphError::DuplicateEdge(src, dst)),
            Err(pos) => {
                row.insert(pos, (dst, weight));
                Ok(())
            }
        }
    }

    pub fn set_labels(&mut self, labels: Vec<String>) -> Result<(), GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::LabelLengthMismatch(labels.len(), self.n));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Builds the influence graph of `xdot = A x`: edge `i -> j` exactly when
    /// `A[j][i] != 0`, with weight `A[j][i]`.
    pub fn from_state_matrix(a: &DMatrix<f64>) -> Result<Self, GraphError> {
        if a.nrows() != a.ncols() {
            return Err(GraphError::NonSquareMatrix {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut g = Self::new(n);
        for src in 0..n {
            for dst in 0..n {
                let w = a[(dst, src)];
                if w != 0.0 {
                    g.out[src].push((dst, w));
                }
            }
        }
        Ok(g)
    }

    /// Dense state matrix with `A[j][i]` = weight of edge `i -> j`
    /// (zero where there is no edge). Round-trips with
    /// [`InfluenceGraph::from_state_matrix`].
    pub fn to_state_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for src in 0..self.n {
            for &(dst, w) in &self.out[src] {
                a[(dst, src)] = w;
            }
        }
        a
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|row| row.len()).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n).map(NodeId)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(src, row)| row.iter().map(move |&(dst, w)| (NodeId(src), NodeId(dst), w)))
    }

    pub fn out_neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.out[node]
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        let row = self.out.get(src)?;
        row.binary_search_by_key(&dst, |&(t, _)| t)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.weight(src, dst).is_some()
    }

    /// Product of edge weights along the node sequence. A single node is a
    /// length-0 path with weight 1 (the empty product).
    pub fn path_weight(&self, path: &[NodeId]) -> Result<f64, GraphError> {
        if path.is_empty() {
            return Err(GraphError::EmptyPath);
        }
        if path[0].0 >= self.n {
            return Err(GraphError::NodeOutOfRange(path[0].0, self.n));
        }
        let mut w = 1.0;
        for pair in path.windows(2) {
            match self.weight(pair[0].0, pair[1].0) {
                Some(ew) => w *= ew,
                None => return Err(GraphError::NotAnEdge(pair[0].0, pair[1].0)),
            }
        }
        Ok(w)
    }

    /// Sum of the individual path weights of a family.
    pub fn path_family_weight(&self, family: &PathFamily) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for path in &family.paths {
            total += self.path_weight(path)?;
        }
        Ok(total)
    }

    /// Graph with every edge reversed, weights preserved. An involution.
    pub fn transpose(&self) -> Self {
        let mut out = vec![Vec::new(); self.n];
        for src in 0..self.n {
            for &(dst, w) in &self.out[src] {
                out[dst].push((src, w));
            }
        }
        for row in &mut out {
            row.sort_unstable_by_key(|&(t, _)| t);
        }
        InfluenceGraph {
            n: self.n,
            out,
            labels: self.labels.clone(),
        }
    }

    /// Hop-count distances from `src` to every node (usize::MAX = unreachable).
    pub fn bfs_distances(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.out[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_json<W: Write>(&self, writer: W) -> serde_json::Result<()> {
        let doc = GraphJson {
            n: self.n,
            edges: self.edges().map(|(s, d, w)| (s.0, d.0, w)).collect(),
            labels: self.labels.clone(),
        };
        serde_json::to_writer_pretty(writer, &doc)
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, GraphError> {
        let doc: GraphJson =
            serde_json::from_reader(reader).map_err(|e| GraphError::Csv(e.to_string()))?;
        let mut g = Self::with_edges(doc.n, &doc.edges)?;
        if let Some(labels) = doc.labels {
            g.set_labels(labels)?;
        }
        Ok(g)
    }

    /// Reads a dense state matrix from CSV (row i = equation of state i,
    /// entry (i, j) = A_ij) and builds the influence graph.
    pub fn from_matrix_csv<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| GraphError::Csv(e.to_string()))?;
            let row: Result<Vec<f64>, _> = record
                .iter()
                .map(|cell| cell.trim().parse::<f64>())
                .collect();
            rows.push(row.map_err(|e| GraphError::Csv(e.to_string()))?);
        }
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::RaggedCsv {
                    row: i,
                    got: row.len(),
                    expected: n,
                });
            }
        }
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_state_matrix(&a)
    }
}

/// Result of gluing two graphs: the composed graph in a fresh contiguous
/// index space plus the mappings from each input graph's node ids into it.
#[derive(Debug, Clone)]
pub struct Composition {
    pub graph: InfluenceGraph,
    /// map1[v] = new id of node v of the first graph
    pub map1: Vec<usize>,
    /// map2[v] = new id of node v of the second graph
    pub map2: Vec<usize>,
}

/// Disjoint union of `g1` and `g2` with node `glue2[k]` of `g2` merged into
/// node `glue1[k]` of `g1`. The composed graph has `n1 + n2 - |glue|` nodes.
///
/// Parallel edges that arise when glue nodes already share edges are merged
/// by summing weights; a merged weight of exactly zero drops the edge.
pub fn compose(
    g1: &InfluenceGraph,
    glue1: &[NodeId],
    g2: &InfluenceGraph,
    glue2: &[NodeId],
) -> Result<Composition, GraphError> {
    if glue1.len() != glue2.len() {
        return Err(GraphError::GlueLengthMismatch(glue1.len(), glue2.len()));
    }
    for &g in glue1 {
        if g.0 >= g1.node_count() {
            return Err(GraphError::NodeOutOfRange(g.0, g1.node_count()));
        }
    }
    for &g in glue2 {
        if g.0 >= g2.node_count() {
            return Err(GraphError::NodeOutOfRange(g.0, g2.node_count()));
        }
    }
    let mut seen1 = std::collections::HashSet::new();
    for &g in glue1 {
        if !seen1.insert(g.0) {
            return Err(GraphError::DuplicateGlue(g.0));
        }
    }
    let mut seen2 = std::collections::HashSet::new();
    for &g in glue2 {
        if !seen2.insert(g.0) {
            return Err(GraphError::DuplicateGlue(g.0));
        }
    }

    let n1 = g1.node_count();
    let n2 = g2.node_count();
    let map1: Vec<usize> = (0..n1).collect();
    let mut map2 = vec![usize::MAX; n2];
    for (k, &g) in glue2.iter().enumerate() {
        map2[g.0] = glue1[k].0;
    }
    let mut next = n1;
    for v in 0..n2 {
        if map2[v] == usize::MAX {
            map2[v] = next;
            next += 1;
        }
    }

    let mut weights: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
    for (src, dst, w) in g1.edges() {
        *weights.entry((map1[src.0], map1[dst.0])).or_insert(0.0) += w;
    }
    for (src, dst, w) in g2.edges() {
        *weights.entry((map2[src.0], map2[dst.0])).or_insert(0.0) += w;
    }

    let mut graph = InfluenceGraph::new(next);
    for ((src, dst), w) in weights {
        if w != 0.0 {
            graph.add_edge(src, dst, w)?;
        }
    }
    Ok(Composition { graph, map1, map2 })
}
