//! Laplace-domain objects for linear systems: resolvent transfer entries,
//! the input gramian G(s) = T*(s) T(s), coherence functions, the
//! shortest-path coherence surrogate, and the coherence-based spark lower
//! bound.
//!
//! The coherence of two candidate input nodes measures how hard they are to
//! tell apart from the sensors. Its |s| -> infinity limit depends only on
//! minimal-length path-weight sums through the sensor set and is cheap to
//! compute even for large networks; the exact gramian coherence at finite s
//! is available for cross-checks and for the Gershgorin-based invertibility
//! arguments.

use crate::gammoid::Gammoid;
use crate::graph::NodeId;
use crate::simulate::LinearSystem;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("sI - A is singular at s = {0}")]
    SingularResolvent(Complex64),
    #[error("node {0} out of range for {1} states")]
    NodeOutOfRange(usize, usize),
    #[error("mutual coherence must lie in [0, 1], got {0}")]
    CoherenceOutOfRange(f64),
    #[error("degenerate diagonal path weight at node {0}; signed shortest-path weights cancelled")]
    DegenerateDiagonal(usize),
    #[error("csv error: {0}")]
    Csv(String),
}

/// Which construction produced a coherence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoherenceKind {
    GramianAt { s: Complex64 },
    ShortestPath,
}

/// Symmetric matrix of pairwise coherences over an ordered node set.
/// Entries lie in [0, 1] with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix {
    pub node_ids: Vec<NodeId>,
    pub values: DMatrix<f64>,
    pub kind: CoherenceKind,
}

impl CoherenceMatrix {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Largest off-diagonal entry (0 when fewer than two nodes).
    pub fn mutual(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.values[(i, j)]);
            }
        }
        best
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), TransferError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["node".to_string()];
        header.extend(self.node_ids.iter().map(|n| n.to_string()));
        wtr.write_record(&header)
            .map_err(|e| TransferError::Csv(e.to_string()))?;
        for i in 0..self.len() {
            let mut record = vec![self.node_ids[i].to_string()];
            for j in 0..self.len() {
                record.push(format!("{}", self.values[(i, j)]));
            }
            wtr.write_record(&record)
                .map_err(|e| TransferError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| TransferError::Csv(e.to_string()))
    }
}

/// Coherence matrix over the usable ground nodes plus the mutual coherence
/// and the nodes that were dropped because they cannot influence any output.
#[derive(Debug, Clone)]
pub struct CoherenceReport {
    pub matrix: CoherenceMatrix,
    pub mutual: f64,
    pub excluded: Vec<NodeId>,
}

/// (sI - A)^{-1}.
pub fn resolvent(a: &DMatrix<f64>, s: Complex64) -> Result<DMatrix<Complex64>, TransferError> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
        diag - Complex64::new(a[(i, j)], 0.0)
    });
    m.try_inverse().ok_or(TransferError::SingularResolvent(s))
}

/// Entry (out, in) of the full transfer function (sI - A)^{-1}.
pub fn transfer_entry(
    sys: &LinearSystem,
    s: Complex64,
    out: NodeId,
    inp: NodeId,
) -> Result<Complex64, TransferError> {
    let n = sys.dim();
    for v in [out, inp] {
        if v.0 >= n {
            return Err(TransferError::NodeOutOfRange(v.0, n));
        }
    }
    let r = resolvent(&sys.a, s)?;
    Ok(r[(out.0, inp.0)])
}

/// Truncated Neumann path-sum form of the same transfer entry:
/// (1/s) sum_k (A^k)_{out,in} / s^k. Valid for |s| above the spectral
/// radius; used as an independent route to cross-check the resolvent.
pub fn transfer_entry_series(
    a: &DMatrix<f64>,
    s: Complex64,
    out: NodeId,
    inp: NodeId,
    terms: usize,
) -> Complex64 {
    let n = a.nrows();
    let mut v = DVector::<f64>::zeros(n);
    v[inp.0] = 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut s_pow = Complex64::new(1.0, 0.0);
    for _ in 0..=terms {
        acc += Complex64::new(v[out.0], 0.0) / s_pow;
        s_pow *= s;
        v = a * v;
    }
    acc / s
}

/// Transfer matrix T(s) with rows the sensor set and columns the ground set.
fn transfer_matrix(
    sys: &LinearSystem,
    s: Complex64,
    ground: &[NodeId],
    sensors: &[NodeId],
) -> Result<DMatrix<Complex64>, TransferError> {
    let n = sys.dim();
    for v in ground.iter().chain(sensors.iter()) {
        if v.0 >= n {
            return Err(TransferError::NodeOutOfRange(v.0, n));
        }
    }
    let r = resolvent(&sys.a, s)?;
    Ok(DMatrix::from_fn(sensors.len(), ground.len(), |i, j| {
        r[(sensors[i].0, ground[j].0)]
    }))
}

/// Input gramian G(s) = T*(s) T(s) over the given ground and sensor node
/// lists: hermitian positive semidefinite with real non-negative diagonal.
pub fn gramian(
    sys: &LinearSystem,
    s: Complex64,
    ground: &[NodeId],
    sensors: &[NodeId],
) -> Result<DMatrix<Complex64>, TransferError> {
    let t = transfer_matrix(sys, s, ground, sensors)?;
    Ok(t.adjoint() * t)
}

/// True when |G_ii| strictly dominates the off-diagonal row sums for all i.
pub fn strictly_diagonally_dominant(g: &DMatrix<Complex64>) -> bool {
    let n = g.nrows();
    (0..n).all(|i| {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| g[(i, j)].norm()).sum();
        g[(i, i)].norm() > off
    })
}

/// Real eigenvalues of a hermitian matrix, ascending.
pub fn hermitian_eigenvalues(g: &DMatrix<Complex64>) -> Vec<f64> {
    let eig = g.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Ground nodes split into (can influence some sensor, cannot). The second
/// group is trivially unobservable and is excluded from coherence matrices.
fn split_by_reachability(
    sys_graph: &crate::graph::InfluenceGraph,
    ground: &[NodeId],
    sensors: &[NodeId],
) -> (Vec<NodeId>, Vec<NodeId>) {
    let transposed = sys_graph.transpose();
    let mut reaches_sensor = vec![false; sys_graph.node_count()];
    for &z in sensors {
        reaches_sensor[z.0] = true;
        for (v, d) in transposed.bfs_distances(z.0).into_iter().enumerate() {
            if d != usize::MAX {
                reaches_sensor[v] = true;
            }
        }
    }
    let (included, excluded): (Vec<NodeId>, Vec<NodeId>) =
        ground.iter().partition(|l| reaches_sensor[l.0]);
    (included, excluded)
}

/// Coherence function matrix mu_ij(s) = |G_ij| / sqrt(G_ii G_jj) over the
/// usable ground nodes, built from normalized transfer columns so that very
/// small |T| entries at large |s| do not underflow. The report carries the
/// mutual coherence (largest off-diagonal entry).
pub fn coherence_at(
    sys: &LinearSystem,
    s: Complex64,
    ground: &[NodeId],
    sensors: &[NodeId],
) -> Result<CoherenceReport, TransferError> {
    let graph = sys.influence_graph();
    let (included, mut excluded) = split_by_reachability(&graph, ground, sensors);
    let t = transfer_matrix(sys, s, &included, sensors)?;

    // guard against exact cancellation of a whole column at this particular s
    let mut kept = Vec::new();
    let mut kept_cols = Vec::new();
    for (j, &node) in included.iter().enumerate() {
        if t.column(j).norm() == 0.0 {
            excluded.push(node);
        } else {
            kept.push(node);
            kept_cols.push(j);
        }
    }
    let t_kept = DMatrix::from_fn(sensors.len(), kept_cols.len(), |i, j| t[(i, kept_cols[j])]);
    coherence_from_columns(&t_kept, kept, excluded, CoherenceKind::GramianAt { s })
}

fn coherence_from_columns(
    t: &DMatrix<Complex64>,
    included: Vec<NodeId>,
    excluded: Vec<NodeId>,
    kind: CoherenceKind,
) -> Result<CoherenceReport, TransferError> {
    let m = included.len();
    let mut values = DMatrix::zeros(m, m);
    let norms: Vec<f64> = (0..m).map(|j| t.column(j).norm()).collect();
    for i in 0..m {
        values[(i, i)] = 1.0;
        for j in (i + 1)..m {
            let dot = t.column(i).dotc(&t.column(j)).norm();
            let mu = (dot / (norms[i] * norms[j])).min(1.0);
            values[(i, j)] = mu;
            values[(j, i)] = mu;
        }
    }
    let matrix = CoherenceMatrix {
        node_ids: included,
        values,
        kind,
    };
    let mutual = matrix.mutual();
    Ok(CoherenceReport {
        matrix,
        mutual,
        excluded,
    })
}

/// Per-node shortest-path data toward the sensor set: hop distances to each
/// sensor, the minimal distance m, and the signed sums of weights of all
/// minimal-length walks to each nearest sensor.
struct PathProfile {
    /// (sensor position, weight sum of minimal-length paths to it)
    nearest: Vec<(usize, f64)>,
}

fn path_profiles(
    a: &DMatrix<f64>,
    graph: &crate::graph::InfluenceGraph,
    ground: &[NodeId],
    sensors: &[NodeId],
) -> Vec<PathProfile> {
    ground
        .iter()
        .map(|&l| {
            let dist = graph.bfs_distances(l.0);
            let min_dist = sensors
                .iter()
                .map(|z| dist[z.0])
                .min()
                .expect("output set is non-empty");
            debug_assert_ne!(min_dist, usize::MAX);
            // propagate walk-weight sums for min_dist steps:
            // v_m[x] = sum of weights of length-m walks from l to x
            let n = a.nrows();
            let mut v = DVector::<f64>::zeros(n);
            v[l.0] = 1.0;
            for _ in 0..min_dist {
                v = a * &v;
            }
            let nearest = sensors
                .iter()
                .enumerate()
                .filter(|(_, z)| dist[z.0] == min_dist)
                .map(|(zi, z)| (zi, v[z.0]))
                .collect();
            PathProfile { nearest }
        })
        .collect()
}

/// Shortest-path coherence over the gammoid's ground set.
///
/// The pair coherence is the |s| -> infinity limit of the gramian coherence:
/// paths from l_i and l_j meet at a sensor, and only splits whose total
/// length attains min_z(d_i(z) + d_j(z)) survive the limit. When that
/// minimum exceeds m_i + m_j (the nearest-sensor distances) the limit is
/// zero; otherwise both legs are forced onto nearest sensors shared by i
/// and j, giving
///   mu_ij = |sum_z W_i(z) W_j(z)| / sqrt(sum_z W_i(z)^2 sum_z W_j(z)^2)
/// with W the minimal-length path-weight sums. Pairs with no common sensor
/// get coherence 0; ground nodes that reach no sensor are excluded.
pub fn shortest_path_coherence(gam: &Gammoid) -> Result<CoherenceReport, TransferError> {
    let graph = gam.graph();
    let a = graph.to_state_matrix();
    let sensors = gam.output_set();
    let (included, excluded) = split_by_reachability(graph, gam.ground_set(), sensors);

    let profiles = path_profiles(&a, graph, &included, sensors);
    let m = included.len();

    // diagonal normalizers: sums of squares of minimal-path weight sums
    let mut diag = vec![0.0_f64; m];
    for (i, prof) in profiles.iter().enumerate() {
        diag[i] = prof.nearest.iter().map(|&(_, w)| w * w).sum();
        if diag[i] <= 0.0 {
            return Err(TransferError::DegenerateDiagonal(included[i].0));
        }
    }

    let mut values = DMatrix::zeros(m, m);
    let p = sensors.len();
    let mut wi = vec![0.0_f64; p];
    for i in 0..m {
        values[(i, i)] = 1.0;
        for w in wi.iter_mut() {
            *w = 0.0;
        }
        for &(zi, w) in &profiles[i].nearest {
            wi[zi] = w;
        }
        for j in (i + 1)..m {
            let cross: f64 = profiles[j]
                .nearest
                .iter()
                .map(|&(zi, wj)| wi[zi] * wj)
                .sum();
            let mu = (cross.abs() / (diag[i] * diag[j]).sqrt()).min(1.0);
            values[(i, j)] = mu;
            values[(j, i)] = mu;
        }
    }

    let matrix = CoherenceMatrix {
        node_ids: included,
        values,
        kind: CoherenceKind::ShortestPath,
    };
    let mutual = matrix.mutual();
    Ok(CoherenceReport {
        matrix,
        mutual,
        excluded,
    })
}

/// Spark lower bound from a mutual coherence: spark >= 1/mu + 1.
/// A mutual coherence of exactly 0 certifies that no dependent set exists,
/// reported as an infinite bound.
pub fn spark_lower_bound(mu_mutual: f64) -> Result<f64, TransferError> {
    if !(0.0..=1.0).contains(&mu_mutual) || mu_mutual.is_nan() {
        return Err(TransferError::CoherenceOutOfRange(mu_mutual));
    }
    if mu_mutual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / mu_mutual + 1.0)
}

/// True iff the gammoid is a cascade: the nodes split into layers
/// N_0, ..., N_L with every edge from one layer to the next, ground set
/// exactly N_0 and output set exactly N_L. Layering is the longest-path
/// level assignment; any cycle disqualifies.
pub fn is_cascade(gam: &Gammoid) -> bool {
    let g = gam.graph();
    let n = g.node_count();
    let mut indeg = vec![0usize; n];
    for (_, dst, _) in g.edges() {
        indeg[dst.0] += 1;
    }
    let mut level = vec![0usize; n];
    let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop_front() {
        seen += 1;
        for &(v, _) in g.out_neighbors(u) {
            level[v] = level[v].max(level[u] + 1);
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if seen != n {
        return false; // cycle
    }
    for (src, dst, _) in g.edges() {
        if level[dst.0] != level[src.0] + 1 {
            return false;
        }
    }
    let top = level.iter().copied().max().unwrap_or(0);
    let layer0: std::collections::BTreeSet<usize> =
        (0..n).filter(|&v| level[v] == 0).collect();
    let layer_top: std::collections::BTreeSet<usize> =
        (0..n).filter(|&v| level[v] == top).collect();
    let ground: std::collections::BTreeSet<usize> = gam.ground_set().iter().map(|v| v.0).collect();
    let outputs: std::collections::BTreeSet<usize> =
        gam.output_set().iter().map(|v| v.0).collect();
    ground == layer0 && outputs == layer_top
}

/// Default complex sample points for finite-s coherence checks: just above
/// the spectral radius on the real and imaginary axes, plus a point far out
/// on the real axis to approach the shortest-path limit.
pub fn default_sample_points(sys: &LinearSystem) -> [Complex64; 3] {
    let rho = sys.spectral_radius();
    let near = 2.0 * rho + 1.0;
    [
        Complex64::new(near, 0.0),
        Complex64::new(0.0, near),
        Complex64::new(1e8, 0.0),
    ]
}
