//! Plain-Rust implementations behind the browser exports. Every function
//! returns a JSON document so the page only needs `JSON.parse`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rba_gcn::aggregate::baseline_gcn_layer;
use rba_gcn::cluster::{build_clusters, cluster_id, similarity_flagged, AssignmentDump, ClusterDecision, Membership, NeighborhoodConfig, SimilarityConfig};
use rba_gcn::graph::ConversationGraph;
use rba_gcn::numeric::{ParamStore, Tape};
use rba_gcn::{Error, Modality, Result};
use serde::Serialize;

const MAX_UTTERANCES: usize = 64;
const MAX_DEPTH: usize = 64;

#[derive(Debug, Serialize)]
pub struct NodeView {
    pub id: String,
    pub utterance: usize,
    pub modality: Modality,
    pub features: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Explorer {
    pub gamma: usize,
    pub rho: f64,
    pub neighborhood: String,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<[String; 2]>,
    pub assignments: Vec<AssignmentDump>,
}

fn check_utterances(n: usize) -> Result<()> {
    if n == 0 || n > MAX_UTTERANCES {
        return Err(Error::Argument(format!("utterance count {n} outside 1..={MAX_UTTERANCES}")));
    }
    Ok(())
}

/// Feature vectors that drift slowly along the conversation, one random walk
/// per modality, so nearby utterances tend to land in high-similarity clusters.
fn drifting_features(n: usize, dim: usize, drift: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut per_mod: Vec<Vec<Vec<f64>>> = Vec::new();
    for _ in Modality::ALL {
        let mut cur: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut walk = Vec::with_capacity(n);
        for _ in 0..n {
            walk.push(cur.clone());
            for x in cur.iter_mut() {
                *x += drift * rng.sample::<f64, _>(StandardNormal);
            }
        }
        per_mod.push(walk);
    }
    // canonical node order is utterance-major, modality-minor
    (0..n).flat_map(|j| Modality::ALL.map(|m| per_mod[m.index()][j].clone())).collect()
}

/// Builds a random conversation graph and the clusters of every node.
pub fn cluster_explorer(utterances: usize, gamma: usize, rho: f64, neighborhood: &str, drift: f64, seed: u64) -> Result<String> {
    check_utterances(utterances)?;
    if !(drift.is_finite() && drift >= 0.0) {
        return Err(Error::Argument(format!("drift {drift} must be finite and non-negative")));
    }
    let cfg = SimilarityConfig {
        gamma,
        rho,
        neighborhood: neighborhood.parse::<NeighborhoodConfig>()?,
    };
    cfg.validate()?;
    let graph = ConversationGraph::build(utterances, &Modality::ALL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats = drifting_features(utterances, 3, drift, &mut rng);
    let views: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
    let assignments = graph
        .nodes()
        .map(|o| build_clusters(&graph, o, &views, &cfg).map(|a| a.dump()))
        .collect::<Result<Vec<_>>>()?;
    let dump = graph.dump();
    let nodes = graph
        .nodes()
        .zip(&feats)
        .map(|(id, f)| NodeView {
            id: id.to_string(),
            utterance: id.utterance,
            modality: id.modality,
            features: f.clone(),
        })
        .collect();
    let out = Explorer {
        gamma,
        rho,
        neighborhood: cfg.neighborhood.to_string(),
        nodes,
        edges: dump.edges,
        assignments,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Debug, Serialize)]
pub struct SimilarityView {
    pub similarity: f64,
    pub angle_degrees: f64,
    pub degenerate: bool,
    /// `None` when the pair is filtered out by `ρ`.
    pub cluster: Option<usize>,
}

/// Similarity of two vectors and the cluster it maps to.
pub fn similarity_to_cluster(u: &[f64], o: &[f64], gamma: usize, rho: f64, connected: bool) -> Result<String> {
    let cfg = SimilarityConfig {
        gamma,
        rho,
        ..SimilarityConfig::default()
    };
    cfg.validate()?;
    let (s, degenerate) = similarity_flagged(u, o)?;
    let membership = if connected { Membership::Connected } else { Membership::Disconnected };
    let cluster = match cluster_id(s, membership, &cfg)? {
        ClusterDecision::Cluster(r) => Some(r),
        ClusterDecision::Filtered => None,
    };
    let view = SimilarityView {
        similarity: s,
        angle_degrees: (1.0 - s) * 180.0,
        degenerate,
        cluster,
    };
    Ok(serde_json::to_string(&view)?)
}

#[derive(Debug, Serialize)]
pub struct SmoothingCurve {
    /// Total per-coordinate variance across nodes after `k` layers, `k = 0..=depth`.
    pub spread: Vec<f64>,
    /// `spread[k] / spread[0]`.
    pub relative: Vec<f64>,
}

/// Feature spread across nodes while stacking mean-aggregation layers with
/// identity weights on random non-negative features.
pub fn oversmoothing_curve(utterances: usize, depth: usize, seed: u64) -> Result<String> {
    check_utterances(utterances)?;
    if depth > MAX_DEPTH {
        return Err(Error::Argument(format!("depth {depth} above {MAX_DEPTH}")));
    }
    let dim = 3;
    let graph = ConversationGraph::build(utterances, &Modality::ALL)?;
    let mut store = ParamStore::new();
    let w = store.add("gcn.w", dim, dim);
    for (i, x) in store.get_mut(w).iter_mut().enumerate() {
        *x = if i % (dim + 1) == 0 { 1.0 } else { 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats: Vec<Vec<f64>> = (0..graph.node_count()).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let mut tape = Tape::new(&store);
    let mut cur: Vec<_> = feats.iter().map(|f| tape.leaf(f.clone())).collect();
    let mut spread = vec![spread_of(&feats)];
    for _ in 0..depth {
        cur = baseline_gcn_layer(&mut tape, &graph, &cur, w)?;
        let vals: Vec<Vec<f64>> = cur.iter().map(|&h| tape.value(h).to_vec()).collect();
        spread.push(spread_of(&vals));
    }
    let base = spread[0];
    let relative = spread.iter().map(|s| if base > 0.0 { s / base } else { 0.0 }).collect();
    Ok(serde_json::to_string(&SmoothingCurve { spread, relative })?)
}

fn spread_of(vals: &[Vec<f64>]) -> f64 {
    let n = vals.len() as f64;
    (0..vals[0].len())
        .map(|c| {
            let mean = vals.iter().map(|v| v[c]).sum::<f64>() / n;
            vals.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n
        })
        .sum()
}
