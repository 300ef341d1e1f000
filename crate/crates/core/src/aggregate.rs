//! Bilevel aggregation.
//!
//! First level: the members of each similarity cluster `r` pass through the
//! cluster's affine map `W^(r) x + b^(r)` and are averaged into a virtual
//! node `e_r` (zero when the cluster is empty). Second level: the virtual
//! nodes, in ascending cluster order, are concatenated with the target's own
//! embedding and fused by `ReLU(W · [e_0 ‖ … ‖ e_γ ‖ g_o])`.
//!
//! Also hosts the mean-aggregation GCN layer used as the layer-count baseline.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{build_clusters, ClusterAssignment, SimilarityConfig};
use crate::error::{ensure_len, Error, Result};
use crate::graph::ConversationGraph;
use crate::numeric::init::xavier_uniform;
use crate::numeric::{Dropout, NodeId, ParamStore, SegmentId, Tape};

/// How the second level combines virtual nodes with the target embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLevelMode {
    /// One fusion over all `γ + 1` virtual nodes and the target.
    #[default]
    Joint,
    /// `ReLU(mean_r W · (e_r ‖ g_o))` over non-empty clusters.
    PerCluster,
}

impl fmt::Display for SecondLevelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SecondLevelMode::Joint => "joint",
            SecondLevelMode::PerCluster => "per_cluster",
        })
    }
}

impl FromStr for SecondLevelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "per_cluster" => Ok(Self::PerCluster),
            _ => Err(Error::Config(format!("unknown second-level mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiamParams {
    /// `(W^(r), b^(r))` for `r = 0..=γ`, each `d × d`.
    pub clusters: Vec<(SegmentId, SegmentId)>,
    /// Second-level fusion matrix, no bias.
    pub fuse: SegmentId,
    pub dim: usize,
    pub out_dim: usize,
    pub mode: SecondLevelMode,
}

impl BiamParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        out_dim: usize,
        gamma: usize,
        mode: SecondLevelMode,
    ) -> Self {
        let clusters = (0..=gamma)
            .map(|r| {
                (
                    store.add(format!("{prefix}.cluster.{r}.w"), dim, dim),
                    store.add(format!("{prefix}.cluster.{r}.b"), dim, 1),
                )
            })
            .collect();
        let fuse_in = match mode {
            SecondLevelMode::Joint => (gamma + 2) * dim,
            SecondLevelMode::PerCluster => 2 * dim,
        };
        let fuse = store.add(format!("{prefix}.fuse.w"), out_dim, fuse_in);
        Self {
            clusters,
            fuse,
            dim,
            out_dim,
            mode,
        }
    }

    pub fn gamma(&self) -> usize {
        self.clusters.len() - 1
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for &(w, b) in &self.clusters {
            xavier_uniform(store.get_mut(w), self.dim, self.dim, rng);
            store.get_mut(b).fill(0.0);
        }
        let seg = store.segment(self.fuse).clone();
        xavier_uniform(store.get_mut(self.fuse), seg.cols, seg.rows, rng);
    }
}

/// First-level outputs `e_r` for `r = 0..=γ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualNodes {
    pub nodes: Vec<NodeId>,
    /// `true` where the cluster had no members and `e_r` is the zero vector.
    pub empty: Vec<bool>,
}

/// Memo of `σ^(r)(g_u)` keyed by `(dense node index, r)`. The transform does
/// not depend on the target, so one layer evaluates it once per pair.
#[derive(Debug, Default)]
pub struct TransformCache(HashMap<(usize, usize), NodeId>);

/// Mean of `W^(r) g_u + b^(r)` over each cluster, members in canonical order.
/// `features[k]` is the embedding of the `k`-th node of `graph`.
pub fn first_level(
    tape: &mut Tape<'_>,
    assignment: &ClusterAssignment,
    graph: &ConversationGraph,
    features: &[NodeId],
    params: &BiamParams,
) -> Result<VirtualNodes> {
    first_level_cached(tape, assignment, graph, features, params, &mut TransformCache::default())
}

pub fn first_level_cached(
    tape: &mut Tape<'_>,
    assignment: &ClusterAssignment,
    graph: &ConversationGraph,
    features: &[NodeId],
    params: &BiamParams,
    cache: &mut TransformCache,
) -> Result<VirtualNodes> {
    ensure_len("node features", graph.node_count(), features.len())?;
    if assignment.gamma != params.gamma() {
        return Err(Error::dim("cluster count", params.gamma() + 1, assignment.gamma + 1));
    }
    let mut nodes = Vec::with_capacity(params.clusters.len());
    let mut empty = Vec::with_capacity(params.clusters.len());
    for (r, members) in assignment.groups().into_iter().enumerate() {
        if members.is_empty() {
            nodes.push(tape.zeros(params.dim));
            empty.push(true);
            continue;
        }
        let (w, b) = params.clusters[r];
        let mut mapped = Vec::with_capacity(members.len());
        for u in members {
            let k = graph.index_of(u)?;
            let node = match cache.0.get(&(k, r)) {
                Some(&n) => n,
                None => {
                    let x = features[k];
                    ensure_len("cluster member feature", params.dim, tape.value(x).len())?;
                    let n = tape.linear(w, Some(b), x)?;
                    cache.0.insert((k, r), n);
                    n
                }
            };
            mapped.push(node);
        }
        nodes.push(tape.mean(&mapped)?);
        empty.push(false);
    }
    Ok(VirtualNodes { nodes, empty })
}

/// Fuses the virtual nodes with the target embedding `g_o`.
pub fn second_level(
    tape: &mut Tape<'_>,
    virtual_nodes: &VirtualNodes,
    g_o: NodeId,
    params: &BiamParams,
    dropout: &mut Dropout,
) -> Result<NodeId> {
    ensure_len("virtual nodes", params.clusters.len(), virtual_nodes.nodes.len())?;
    ensure_len("target feature", params.dim, tape.value(g_o).len())?;
    match params.mode {
        SecondLevelMode::Joint => {
            let mut parts = virtual_nodes.nodes.clone();
            parts.push(g_o);
            let joined = tape.concat(&parts)?;
            let joined = dropout.apply(tape, joined)?;
            let z = tape.linear(params.fuse, None, joined)?;
            Ok(tape.relu(z))
        }
        SecondLevelMode::PerCluster => {
            let mut fused = Vec::new();
            for (r, &e) in virtual_nodes.nodes.iter().enumerate() {
                if virtual_nodes.empty[r] {
                    continue;
                }
                let joined = tape.concat(&[e, g_o])?;
                let joined = dropout.apply(tape, joined)?;
                fused.push(tape.linear(params.fuse, None, joined)?);
            }
            if fused.is_empty() {
                let zero = tape.zeros(params.dim);
                let joined = tape.concat(&[zero, g_o])?;
                let joined = dropout.apply(tape, joined)?;
                fused.push(tape.linear(params.fuse, None, joined)?);
            }
            let z = tape.mean(&fused)?;
            Ok(tape.relu(z))
        }
    }
}

/// Output of one relational bilevel layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// Updated embedding per node, canonical order.
    pub outputs: Vec<NodeId>,
    pub assignments: Vec<ClusterAssignment>,
}

/// Updates every node from the same frozen input features.
pub fn rba_layer(
    tape: &mut Tape<'_>,
    graph: &ConversationGraph,
    features: &[NodeId],
    params: &BiamParams,
    cfg: &SimilarityConfig,
    dropout: &mut Dropout,
) -> Result<LayerOutput> {
    ensure_len("node features", graph.node_count(), features.len())?;
    if cfg.gamma != params.gamma() {
        return Err(Error::dim("cluster count", params.gamma() + 1, cfg.gamma + 1));
    }
    let values: Vec<Vec<f64>> = features.iter().map(|&f| tape.value(f).to_vec()).collect();
    let refs: Vec<&[f64]> = values.iter().map(Vec::as_slice).collect();
    let mut cache = TransformCache::default();
    let mut outputs = Vec::with_capacity(features.len());
    let mut assignments = Vec::with_capacity(features.len());
    for (k, o) in graph.nodes().enumerate() {
        let assignment = build_clusters(graph, o, &refs, cfg)?;
        let virt = first_level_cached(tape, &assignment, graph, features, params, &mut cache)?;
        outputs.push(second_level(tape, &virt, features[k], params, dropout)?);
        assignments.push(assignment);
    }
    Ok(LayerOutput { outputs, assignments })
}

/// `h_o = ReLU(W · mean({g_u : u ∈ C_g(o)} ∪ {g_o}))`.
pub fn baseline_gcn_layer(
    tape: &mut Tape<'_>,
    graph: &ConversationGraph,
    features: &[NodeId],
    w: SegmentId,
) -> Result<Vec<NodeId>> {
    ensure_len("node features", graph.node_count(), features.len())?;
    let mut out = Vec::with_capacity(features.len());
    for o in graph.nodes() {
        let mut group = graph.connected_neighborhood(o)?;
        group.push(o);
        group.sort();
        let nodes = group
            .into_iter()
            .map(|u| graph.index_of(u).map(|k| features[k]))
            .collect::<Result<Vec<_>>>()?;
        let m = tape.mean(&nodes)?;
        let z = tape.linear(w, None, m)?;
        out.push(tape.relu(z));
    }
    Ok(out)
}
