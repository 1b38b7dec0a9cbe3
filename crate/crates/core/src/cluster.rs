//! Clustering of indistinguishable nodes and the iterative localization
//! strategy.
//!
//! Highly coherent input nodes cannot be told apart as error sources, so the
//! coherence matrix (as a similarity index) induces input clusters via
//! agglomerative clustering on the distance 1 - mu. The same machinery
//! applied to the reversed graph with a restricted input cluster as target
//! yields clusters of redundant sensor locations, which drives the sensor
//! replacement suggestions and the full localization loop: cluster inputs,
//! reconstruct, rank clusters, shrink the ground set, re-cluster outputs,
//! move one redundant sensor, repeat.

use crate::gammoid::{Gammoid, GammoidError};
use crate::graph::NodeId;
use crate::lintransfer::{
    shortest_path_coherence, CoherenceMatrix, CoherenceReport, TransferError,
};
use crate::reconstruct::{
    cluster_score, solve, ReconstructError, ReconstructionProblem, SolverConfig,
};
use crate::simulate::{LinearSystem, SimulateError, TwinExperiment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("coherence matrix is empty")]
    EmptyMatrix,
    #[error("coherence matrix must be square and symmetric")]
    MalformedMatrix,
    #[error("cluster count must be at least 1")]
    BadClusterCount,
    #[error("sensor {0} does not appear in the output clustering")]
    SensorNotInClustering(usize),
    #[error("restricted ground set is empty")]
    EmptyRestrictedGround,
    #[error(transparent)]
    Gammoid(#[from] GammoidError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

/// How to cut the dendrogram into clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cut {
    /// fixed number of clusters
    Clusters(usize),
    /// merge while the linkage distance is below the threshold
    Distance(f64),
    /// cut at the largest gap in the merge-height sequence (with virtual
    /// boundaries at 0 and 1), so all-coherent data collapses to one
    /// cluster and all-incoherent data stays fully split
    Auto,
}

/// Partition of a node list into contiguous cluster indices starting at 0,
/// ordered by first occurrence in the node list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub node_ids: Vec<NodeId>,
    pub assignments: Vec<usize>,
    pub n_clusters: usize,
    pub linkage: Linkage,
    pub cut: Cut,
}

impl Clustering {
    pub fn groups(&self) -> Vec<Vec<NodeId>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (pos, &cluster) in self.assignments.iter().enumerate() {
            groups[cluster].push(self.node_ids[pos]);
        }
        groups
    }

    pub fn cluster_of(&self, node: NodeId) -> Option<usize> {
        self.node_ids
            .iter()
            .position(|&n| n == node)
            .map(|pos| self.assignments[pos])
    }
}

struct MergeStep {
    a: usize,
    b: usize,
    height: f64,
}

/// Full agglomerative merge sequence on a distance matrix with
/// Lance-Williams updates. Ties in the minimal distance are broken by the
/// smallest lexicographic pair of cluster representatives (the lowest
/// original position in each cluster), so the result is deterministic.
fn merge_sequence(dist: &mut [Vec<f64>], linkage: Linkage) -> Vec<MergeStep> {
    let n = dist.len();
    let mut alive: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let mut rep: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let d = dist[i][j];
                let key = (rep[i].min(rep[j]), rep[i].max(rep[j]));
                match best {
                    None => best = Some((d, i, j)),
                    Some((bd, bi, bj)) => {
                        let bkey = (rep[bi].min(rep[bj]), rep[bi].max(rep[bj]));
                        if d < bd || (d == bd && key < bkey) {
                            best = Some((d, i, j));
                        }
                    }
                }
            }
        }
        let (height, a, b) = best.expect("at least two clusters alive");
        for k in 0..n {
            if !alive[k] || k == a || k == b {
                continue;
            }
            let dak = dist[a][k];
            let dbk = dist[b][k];
            let merged = match linkage {
                Linkage::Single => dak.min(dbk),
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => {
                    (size[a] as f64 * dak + size[b] as f64 * dbk)
                        / (size[a] + size[b]) as f64
                }
            };
            dist[a][k] = merged;
            dist[k][a] = merged;
        }
        alive[b] = false;
        size[a] += size[b];
        rep[a] = rep[a].min(rep[b]);
        steps.push(MergeStep { a, b, height });
    }
    steps
}

/// Number of initial merges to apply for the requested cut.
fn merges_for_cut(steps: &[MergeStep], n: usize, cut: Cut) -> Result<usize, ClusterError> {
    Ok(match cut {
        Cut::Clusters(c) => {
            if c == 0 {
                return Err(ClusterError::BadClusterCount);
            }
            n.saturating_sub(c.min(n))
        }
        Cut::Distance(theta) => steps.iter().take_while(|s| s.height < theta).count(),
        Cut::Auto => {
            // heights with virtual boundaries h_0 = 0 and h_n = 1; cut at
            // the largest gap, preferring more clusters on ties
            let mut best_gap = f64::NEG_INFINITY;
            let mut best_m = 0;
            for m in 0..=steps.len() {
                let lo = if m == 0 { 0.0 } else { steps[m - 1].height };
                let hi = if m == steps.len() {
                    1.0_f64.max(lo)
                } else {
                    steps[m].height
                };
                let gap = hi - lo;
                if gap > best_gap {
                    best_gap = gap;
                    best_m = m;
                }
            }
            best_m
        }
    })
}

fn assignments_from_merges(n: usize, steps: &[MergeStep], m: usize) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for step in &steps[..m] {
        let ra = find(&mut parent, step.a);
        let rb = find(&mut parent, step.b);
        parent[rb] = ra;
    }
    // contiguous indices by first occurrence
    let mut relabel = std::collections::HashMap::new();
    let mut assignments = vec![0usize; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        let next = relabel.len();
        let label = *relabel.entry(root).or_insert(next);
        assignments[i] = label;
    }
    let count = relabel.len();
    (assignments, count)
}

/// Agglomerative clustering on the distance 1 - mu over the coherence
/// matrix's node set.
pub fn cluster_inputs(
    coh: &CoherenceMatrix,
    linkage: Linkage,
    cut: Cut,
) -> Result<Clustering, ClusterError> {
    let n = coh.len();
    if n == 0 {
        return Err(ClusterError::EmptyMatrix);
    }
    if coh.values.nrows() != n || coh.values.ncols() != n {
        return Err(ClusterError::MalformedMatrix);
    }
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 - coh.values[(i, j)]).collect())
        .collect();
    for i in 0..n {
        for j in 0..n {
            if (dist[i][j] - dist[j][i]).abs() > 1e-9 || !(0.0..=1.0 + 1e-9).contains(&dist[i][j])
            {
                return Err(ClusterError::MalformedMatrix);
            }
        }
    }
    let steps = merge_sequence(&mut dist, linkage);
    let m = merges_for_cut(&steps, n, cut)?;
    let (assignments, n_clusters) = assignments_from_merges(n, &steps, m);
    Ok(Clustering {
        node_ids: coh.node_ids.clone(),
        assignments,
        n_clusters,
        linkage,
        cut,
    })
}

/// Output-side coherence and clustering: how redundant are candidate sensor
/// locations with respect to a restricted set of suspected input nodes?
///
/// Built by transposing the graph and using the restricted ground set as the
/// target: the coherence of candidates a and b is the shortest-path
/// coherence of the reversed gammoid (pool, g', restricted_ground), which is
/// the composed-gammoid construction traversed from the output side.
/// Candidates unreachable from the restricted set are excluded (they carry
/// no information about it). The pool defaults to all state nodes.
pub fn cluster_outputs(
    gam: &Gammoid,
    restricted_ground: &[NodeId],
    pool: Option<&[NodeId]>,
    linkage: Linkage,
    cut: Cut,
) -> Result<(CoherenceReport, Clustering), ClusterError> {
    if restricted_ground.is_empty() {
        return Err(ClusterError::EmptyRestrictedGround);
    }
    let all_nodes: Vec<NodeId> = gam.graph().nodes().collect();
    let pool = pool.unwrap_or(&all_nodes);
    let reversed = Gammoid::new(
        gam.graph().transpose(),
        pool.to_vec(),
        restricted_ground.to_vec(),
    )?;
    let report = shortest_path_coherence(&reversed)?;
    let clustering = cluster_inputs(&report.matrix, linkage, cut)?;
    Ok((report, clustering))
}

/// One proposed sensor relocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMove {
    pub remove: NodeId,
    pub add: NodeId,
    pub uncovered_cluster: usize,
}

/// Redundancies among the current sensors and proposed relocations into
/// output clusters that no sensor covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPlan {
    pub current_sensors: Vec<NodeId>,
    pub redundant_pairs: Vec<(NodeId, NodeId)>,
    pub suggestions: Vec<SensorMove>,
}

/// Pairs surplus sensors (all but the lowest-id sensor of each multiply
/// covered cluster) with uncovered clusters, proposing the lowest-id
/// non-sensor node of each uncovered cluster as the new location.
pub fn plan_sensors(
    output_clusters: &Clustering,
    current: &[NodeId],
) -> Result<SensorPlan, ClusterError> {
    for &z in current {
        if output_clusters.cluster_of(z).is_none() {
            return Err(ClusterError::SensorNotInClustering(z.0));
        }
    }
    let groups = output_clusters.groups();
    let mut sensors_by_cluster: Vec<Vec<NodeId>> = vec![Vec::new(); groups.len()];
    for &z in current {
        let c = output_clusters.cluster_of(z).expect("checked above");
        sensors_by_cluster[c].push(z);
    }
    for list in sensors_by_cluster.iter_mut() {
        list.sort_unstable();
    }

    let mut redundant_pairs = Vec::new();
    let mut surplus = Vec::new();
    for list in &sensors_by_cluster {
        if list.len() >= 2 {
            for i in 0..list.len() {
                for j in (i + 1)..list.len() {
                    redundant_pairs.push((list[i], list[j]));
                }
            }
            surplus.extend_from_slice(&list[1..]);
        }
    }

    let mut suggestions = Vec::new();
    let mut surplus_iter = surplus.into_iter();
    for (ci, group) in groups.iter().enumerate() {
        if !sensors_by_cluster[ci].is_empty() {
            continue;
        }
        let Some(remove) = surplus_iter.next() else {
            break;
        };
        let add = group
            .iter()
            .copied()
            .min()
            .expect("clusters are non-empty");
        suggestions.push(SensorMove {
            remove,
            add,
            uncovered_cluster: ci,
        });
    }
    Ok(SensorPlan {
        current_sensors: current.to_vec(),
        redundant_pairs,
        suggestions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOptions {
    pub beta: f64,
    pub linkage: Linkage,
    pub cut: Cut,
    pub solver: SolverConfig,
    /// candidate sensor locations for output clustering (all nodes if None)
    pub output_pool: Option<Vec<NodeId>>,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            beta: 0.01,
            linkage: Linkage::Average,
            cut: Cut::Auto,
            solver: SolverConfig::default(),
            output_pool: None,
        }
    }
}

/// Everything observed in one localization round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sensors: Vec<NodeId>,
    pub ground_set: Vec<NodeId>,
    /// ground nodes dropped as unobservable this round
    pub excluded: Vec<NodeId>,
    pub clusters: Vec<Vec<NodeId>>,
    /// (cluster index, summed reconstructed norm), ranked descending
    pub scores: Vec<(usize, f64)>,
    pub selected_ground: Vec<NodeId>,
    pub sensor_plan: Option<SensorPlan>,
    pub chosen_move: Option<SensorMove>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationTrace {
    pub rounds: Vec<RoundRecord>,
    pub final_ground: Vec<NodeId>,
    pub final_sensors: Vec<NodeId>,
    /// ground set reached the target size k
    pub converged: bool,
    /// a round failed to shrink the ground set (or scores vanished)
    pub stalled: bool,
}

/// Iterative localization: input clustering, reconstruction-based cluster
/// ranking, ground-set shrinking to the top clusters covering at least k
/// nodes, output clustering and one sensor move per round. Stops when the
/// ground set has at most k nodes, when a round fails to shrink it, or
/// after `max_rounds`.
pub fn iterate_localization(
    exp: &TwinExperiment,
    k: usize,
    max_rounds: usize,
    opts: &LocalizationOptions,
) -> Result<LocalizationTrace, ClusterError> {
    let graph = &exp.graph;
    let mut ground: Vec<NodeId> = graph.nodes().collect();
    let mut sensors = exp.system.sensors.clone();
    let mut y_data = exp.y_data.clone();

    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut converged = false;
    let mut stalled = false;

    for round in 1..=max_rounds {
        let gam = Gammoid::new(graph.clone(), ground.clone(), sensors.clone())?;
        let report = shortest_path_coherence(&gam)?;
        let included = report.matrix.node_ids.clone();
        if included.is_empty() {
            stalled = true;
            rounds.push(RoundRecord {
                round,
                sensors: sensors.clone(),
                ground_set: ground.clone(),
                excluded: report.excluded,
                clusters: Vec::new(),
                scores: Vec::new(),
                selected_ground: Vec::new(),
                sensor_plan: None,
                chosen_move: None,
            });
            break;
        }
        let clustering = cluster_inputs(&report.matrix, opts.linkage, opts.cut)?;
        let groups = clustering.groups();

        let sys = LinearSystem::new(
            exp.system.a.clone(),
            sensors.clone(),
            exp.system.x0.clone(),
            exp.system.horizon,
            exp.system.dt,
        )?;
        let mut prob = ReconstructionProblem::new(sys, y_data.clone(), included.clone(), opts.beta)?;
        prob.solver = opts.solver.clone();
        let result = solve(&prob)?;
        let scores = cluster_score(&result, &groups)?;
        let total_score: f64 = scores.iter().map(|&(_, s)| s).sum();

        let mut record = RoundRecord {
            round,
            sensors: sensors.clone(),
            ground_set: ground.clone(),
            excluded: report.excluded.clone(),
            clusters: groups.clone(),
            scores: scores.clone(),
            selected_ground: ground.clone(),
            sensor_plan: None,
            chosen_move: None,
        };

        if ground.len() <= k {
            converged = true;
            rounds.push(record);
            break;
        }
        if total_score <= 1e-12 {
            stalled = true;
            rounds.push(record);
            break;
        }

        // shrink to the top-ranked clusters until k nodes are covered
        let mut selected: Vec<NodeId> = Vec::new();
        for &(ci, _) in &scores {
            selected.extend_from_slice(&groups[ci]);
            if selected.len() >= k {
                break;
            }
        }
        selected.sort_unstable();
        record.selected_ground = selected.clone();

        if selected.len() >= ground.len() {
            stalled = true;
            rounds.push(record);
            break;
        }
        ground = selected;

        if ground.len() <= k {
            converged = true;
            rounds.push(record);
            break;
        }

        // output clustering with respect to the shrunk ground set
        let gam_now = Gammoid::new(graph.clone(), ground.clone(), sensors.clone())?;
        let (out_report, out_clustering) = cluster_outputs(
            &gam_now,
            &ground,
            opts.output_pool.as_deref(),
            opts.linkage,
            opts.cut,
        )?;

        // sensors that carry no information about the current ground set are
        // prime candidates for relocation; the rest follow the plan
        let informative: Vec<NodeId> = sensors
            .iter()
            .copied()
            .filter(|z| out_clustering.cluster_of(*z).is_some())
            .collect();
        let uninformative: Vec<NodeId> = sensors
            .iter()
            .copied()
            .filter(|z| out_clustering.cluster_of(*z).is_none())
            .collect();
        let plan = plan_sensors(&out_clustering, &informative)?;

        let out_groups = out_clustering.groups();
        let covered: std::collections::HashSet<usize> = informative
            .iter()
            .filter_map(|z| out_clustering.cluster_of(*z))
            .collect();
        let first_uncovered = (0..out_groups.len()).find(|ci| !covered.contains(ci));

        let chosen = match (uninformative.first(), first_uncovered) {
            (Some(&stale), Some(ci)) => {
                let add = out_groups[ci]
                    .iter()
                    .copied()
                    .filter(|n| !sensors.contains(n))
                    .min();
                add.map(|add| SensorMove {
                    remove: stale,
                    add,
                    uncovered_cluster: ci,
                })
            }
            _ => plan
                .suggestions
                .iter()
                .copied()
                .find(|mv| !sensors.contains(&mv.add)),
        };
        let _ = out_report;

        if let Some(mv) = chosen {
            sensors.retain(|&z| z != mv.remove);
            sensors.push(mv.add);
            sensors.sort_unstable();
            y_data = exp.remeasure(&sensors)?;
        }
        record.sensor_plan = Some(plan);
        record.chosen_move = chosen;
        rounds.push(record);
    }

    Ok(LocalizationTrace {
        rounds,
        final_ground: ground,
        final_sensors: sensors,
        converged,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lintransfer::CoherenceKind;
    use nalgebra::DMatrix;

    fn ids(xs: &[usize]) -> Vec<NodeId> {
        xs.iter().map(|&x| NodeId(x)).collect()
    }

    fn coh(nodes: &[usize], values: DMatrix<f64>) -> CoherenceMatrix {
        CoherenceMatrix {
            node_ids: ids(nodes),
            values,
            kind: CoherenceKind::ShortestPath,
        }
    }

    #[test]
    fn identity_coherence_stays_split_under_threshold() {
        let c = coh(&[0, 1, 2], DMatrix::identity(3, 3));
        let clustering = cluster_inputs(&c, Linkage::Average, Cut::Distance(0.5)).unwrap();
        assert_eq!(clustering.n_clusters, 3);
        assert_eq!(clustering.assignments, vec![0, 1, 2]);
    }

    #[test]
    fn all_ones_coherence_collapses() {
        let c = coh(&[0, 1, 2], DMatrix::from_element(3, 3, 1.0));
        for cut in [Cut::Distance(0.5), Cut::Auto] {
            let clustering = cluster_inputs(&c, Linkage::Average, cut).unwrap();
            assert_eq!(clustering.n_clusters, 1);
        }
    }

    #[test]
    fn auto_cut_finds_the_block_structure() {
        // two tight blocks {0,1} and {2,3} with weak cross coherence
        let mut v = DMatrix::identity(4, 4);
        v[(0, 1)] = 0.95;
        v[(1, 0)] = 0.95;
        v[(2, 3)] = 0.9;
        v[(3, 2)] = 0.9;
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            v[(i, j)] = 0.1;
            v[(j, i)] = 0.1;
        }
        let clustering = cluster_inputs(&coh(&[0, 1, 2, 3], v), Linkage::Average, Cut::Auto).unwrap();
        assert_eq!(clustering.n_clusters, 2);
        assert_eq!(clustering.assignments[0], clustering.assignments[1]);
        assert_eq!(clustering.assignments[2], clustering.assignments[3]);
        assert_ne!(clustering.assignments[0], clustering.assignments[2]);
    }

    #[test]
    fn fixed_count_cut() {
        let mut v = DMatrix::identity(3, 3);
        v[(0, 1)] = 0.8;
        v[(1, 0)] = 0.8;
        let clustering =
            cluster_inputs(&coh(&[0, 1, 2], v), Linkage::Complete, Cut::Clusters(2)).unwrap();
        assert_eq!(clustering.n_clusters, 2);
        assert_eq!(clustering.assignments, vec![0, 0, 1]);
        assert!(matches!(
            cluster_inputs(&coh(&[0], DMatrix::identity(1, 1)), Linkage::Single, Cut::Clusters(0)),
            Err(ClusterError::BadClusterCount)
        ));
    }

    #[test]
    fn clustering_is_a_partition_and_deterministic() {
        let mut v = DMatrix::identity(5, 5);
        for (i, j, mu) in [(0, 1, 0.6), (1, 2, 0.6), (3, 4, 0.6), (0, 4, 0.2)] {
            v[(i, j)] = mu;
            v[(j, i)] = mu;
        }
        let c = coh(&[3, 7, 11, 20, 21], v);
        let a = cluster_inputs(&c, Linkage::Average, Cut::Auto).unwrap();
        let b = cluster_inputs(&c, Linkage::Average, Cut::Auto).unwrap();
        assert_eq!(a, b);
        let groups = a.groups();
        let mut all: Vec<NodeId> = groups.into_iter().flatten().collect();
        all.sort_unstable();
        let mut expected = c.node_ids.clone();
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn fully_coherent_pair_never_separates_under_single_linkage() {
        let mut v = DMatrix::identity(4, 4);
        v[(1, 2)] = 1.0;
        v[(2, 1)] = 1.0;
        v[(0, 3)] = 0.4;
        v[(3, 0)] = 0.4;
        for theta in [0.1, 0.5, 0.99] {
            let clustering =
                cluster_inputs(&coh(&[0, 1, 2, 3], v.clone()), Linkage::Single, Cut::Distance(theta))
                    .unwrap();
            assert_eq!(clustering.assignments[1], clustering.assignments[2]);
        }
        // pairwise case under average linkage
        let pair = coh(&[5, 6], DMatrix::from_element(2, 2, 1.0));
        let clustering = cluster_inputs(&pair, Linkage::Average, Cut::Distance(0.5)).unwrap();
        assert_eq!(clustering.n_clusters, 1);
    }

    #[test]
    fn fan_in_pair_clusters_together() {
        let g = crate::graph::InfluenceGraph::with_edges(3, &[(0, 2, 0.8), (1, 2, -1.7)]).unwrap();
        let gam = Gammoid::new(g, ids(&[0, 1]), ids(&[2])).unwrap();
        let rep = shortest_path_coherence(&gam).unwrap();
        let clustering = cluster_inputs(&rep.matrix, Linkage::Average, Cut::Auto).unwrap();
        assert_eq!(clustering.n_clusters, 1);
    }

    #[test]
    fn output_clustering_mirrors_fan_in() {
        // node 0 feeds sensors 1 and 2 identically: both sensor locations
        // are redundant with respect to suspecting node 0
        let g = crate::graph::InfluenceGraph::with_edges(3, &[(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let gam = Gammoid::new(g, ids(&[0]), ids(&[1, 2])).unwrap();
        let (report, clustering) = cluster_outputs(
            &gam,
            &ids(&[0]),
            Some(&ids(&[1, 2])),
            Linkage::Average,
            Cut::Auto,
        )
        .unwrap();
        assert!(report.excluded.is_empty());
        assert_eq!(clustering.n_clusters, 1);

        let singleton = cluster_outputs(&gam, &ids(&[0]), Some(&ids(&[1])), Linkage::Average, Cut::Auto)
            .unwrap()
            .1;
        assert_eq!(singleton.n_clusters, 1);

        assert!(matches!(
            cluster_outputs(&gam, &[], None, Linkage::Average, Cut::Auto),
            Err(ClusterError::EmptyRestrictedGround)
        ));
    }

    #[test]
    fn sensor_plan_trivial_cases() {
        let clustering = Clustering {
            node_ids: ids(&[0, 1, 2, 3]),
            assignments: vec![0, 0, 1, 2],
            n_clusters: 3,
            linkage: Linkage::Average,
            cut: Cut::Auto,
        };
        // sensors in distinct clusters: nothing to do
        let plan = plan_sensors(&clustering, &ids(&[0, 2, 3])).unwrap();
        assert!(plan.suggestions.is_empty());
        assert!(plan.redundant_pairs.is_empty());

        // two sensors in cluster 0, cluster 2 uncovered
        let plan = plan_sensors(&clustering, &ids(&[0, 1, 2])).unwrap();
        assert_eq!(plan.redundant_pairs, vec![(NodeId(0), NodeId(1))]);
        assert_eq!(plan.suggestions.len(), 1);
        assert_eq!(
            plan.suggestions[0],
            SensorMove {
                remove: NodeId(1),
                add: NodeId(3),
                uncovered_cluster: 2
            }
        );

        assert!(matches!(
            plan_sensors(&clustering, &ids(&[9])),
            Err(ClusterError::SensorNotInClustering(9))
        ));
    }

    #[test]
    fn localization_stops_immediately_when_ground_is_small() {
        let exp = crate::simulate::make_twin(&crate::simulate::TwinConfig {
            n: 6,
            sensors: 3,
            k: 1,
            seed: 4,
            shape: crate::simulate::InputShape::Pulse,
            dt: 0.05,
            horizon: 2.0,
        })
        .unwrap();
        // k as large as the whole ground set: immediate stop after one round
        let trace = iterate_localization(&exp, 6, 5, &LocalizationOptions::default()).unwrap();
        assert_eq!(trace.rounds.len(), 1);
        assert!(trace.converged);
        assert_eq!(trace.final_ground.len(), 6);
    }

    #[test]
    fn localization_never_grows_the_ground_set() {
        let exp = crate::simulate::make_twin(&crate::simulate::TwinConfig {
            n: 12,
            sensors: 4,
            k: 1,
            seed: 10,
            shape: crate::simulate::InputShape::Pulse,
            dt: 0.05,
            horizon: 3.0,
        })
        .unwrap();
        let trace = iterate_localization(&exp, 1, 4, &LocalizationOptions::default()).unwrap();
        let mut prev = usize::MAX;
        for round in &trace.rounds {
            assert!(round.ground_set.len() <= prev);
            prev = round.ground_set.len();
        }
        assert!(!trace.rounds.is_empty());
    }
}
