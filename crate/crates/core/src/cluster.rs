//! Similarity-based cluster building.
//!
//! For a target node `o`, every member `u` of its structural neighbourhood is
//! scored with the angular similarity `s(u, o) ∈ [0, 1]` and mapped to
//! cluster `⌊γ·s⌋ ∈ {0, …, γ}`. Members below the threshold `ρ` are dropped
//! for each neighbourhood whose filter is enabled (by default only the
//! disconnected one).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_len, Error, Result};
use crate::graph::{ConversationGraph, NodeId};
use crate::numeric::matrix::norm;

/// Which structural neighbourhoods feed the clusters and which are filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NeighborhoodConfig {
    pub use_connected: bool,
    pub use_disconnected: bool,
    pub filter_connected: bool,
    pub filter_disconnected: bool,
}

impl NeighborhoodConfig {
    /// Connected neighbourhood unfiltered, disconnected filtered by `ρ`.
    pub const DEFAULT: Self = Self::new(true, true, false, true);

    const fn new(cg: bool, dg: bool, fcg: bool, fdg: bool) -> Self {
        Self {
            use_connected: cg,
            use_disconnected: dg,
            filter_connected: fcg,
            filter_disconnected: fdg,
        }
    }

    /// The eight neighbourhood variants of the ablation table, in table order.
    pub fn variants() -> [Self; 8] {
        [
            Self::new(true, false, false, false),
            Self::new(false, true, false, false),
            Self::new(true, false, true, false),
            Self::new(false, true, false, true),
            Self::new(true, true, false, false),
            Self::new(true, true, true, false),
            Self::new(true, true, true, true),
            Self::DEFAULT,
        ]
    }

    fn validate(&self) -> Result<()> {
        if !self.use_connected && !self.use_disconnected {
            return Err(Error::Config("neighbourhood must include cg, dg or both".into()));
        }
        Ok(())
    }
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for NeighborhoodConfig {
    /// `cg`, `dg_filtered`, `cg+dg_filtered`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.use_connected {
            parts.push(if self.filter_connected { "cg_filtered" } else { "cg" });
        }
        if self.use_disconnected {
            parts.push(if self.filter_disconnected { "dg_filtered" } else { "dg" });
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for NeighborhoodConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = Self::new(false, false, false, false);
        for part in s.split('+').map(str::trim) {
            match part {
                "cg" if !cfg.use_connected => cfg.use_connected = true,
                "cg_filtered" if !cfg.use_connected => {
                    cfg.use_connected = true;
                    cfg.filter_connected = true;
                }
                "dg" if !cfg.use_disconnected => cfg.use_disconnected = true,
                "dg_filtered" if !cfg.use_disconnected => {
                    cfg.use_disconnected = true;
                    cfg.filter_disconnected = true;
                }
                _ => {
                    return Err(Error::Config(format!(
                        "bad neighbourhood {s:?}: expected terms cg, cg_filtered, dg, dg_filtered joined by '+'"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Serialize for NeighborhoodConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NeighborhoodConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub gamma: usize,
    pub rho: f64,
    pub neighborhood: NeighborhoodConfig,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            gamma: 8,
            rho: 0.3,
            neighborhood: NeighborhoodConfig::DEFAULT,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma == 0 {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        self.neighborhood.validate()
    }

    pub fn cluster_count(&self) -> usize {
        self.gamma + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Connected,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterDecision {
    Cluster(usize),
    Filtered,
}

/// Angular similarity `1 − θ/π` where `θ` is the angle between the vectors.
///
/// A zero-norm argument yields `0.5`.
pub fn similarity(f_u: &[f64], f_o: &[f64]) -> Result<f64> {
    similarity_flagged(f_u, f_o).map(|(s, _)| s)
}

/// As [`similarity`], also reporting whether a zero-norm vector was involved.
pub fn similarity_flagged(f_u: &[f64], f_o: &[f64]) -> Result<(f64, bool)> {
    ensure_len("similarity", f_u.len(), f_o.len())?;
    let (nu, no) = (norm(f_u), norm(f_o));
    if nu == 0.0 || no == 0.0 {
        return Ok((0.5, true));
    }
    // θ = 2·atan2(‖û − ô‖, ‖û + ô‖) equals arccos of the clamped cosine but
    // stays accurate near 0 and π, so identical directions give s = 1 exactly.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in f_u.iter().zip(f_o) {
        let (x, y) = (a / nu, b / no);
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    let theta = 2.0 * diff.sqrt().atan2(sum.sqrt());
    let s = 1.0 - theta / std::f64::consts::PI;
    Ok((s.clamp(0.0, 1.0), false))
}

/// Maps a similarity to its cluster id, or drops it when the member's
/// neighbourhood is filtered and `s < ρ`.
pub fn cluster_id(s: f64, membership: Membership, cfg: &SimilarityConfig) -> Result<ClusterDecision> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Numeric(format!("similarity {s} outside [0, 1]")));
    }
    let filtered = match membership {
        Membership::Connected => cfg.neighborhood.filter_connected,
        Membership::Disconnected => cfg.neighborhood.filter_disconnected,
    };
    if filtered && s < cfg.rho {
        return Ok(ClusterDecision::Filtered);
    }
    let r = (cfg.gamma as f64 * s).floor() as usize;
    Ok(ClusterDecision::Cluster(r.min(cfg.gamma)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub node: NodeId,
    pub membership: Membership,
    pub similarity: f64,
    pub cluster: usize,
}

/// Cluster ids for the neighbourhood of one target node.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub target: NodeId,
    pub gamma: usize,
    /// Assigned members in canonical node order.
    pub members: Vec<ClusterMember>,
    /// Filtered members in canonical node order.
    pub dropped: Vec<NodeId>,
    /// Similarities that involved a zero-norm feature vector.
    pub degenerate: usize,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, node: NodeId) -> Option<usize> {
        self.members.iter().find(|m| m.node == node).map(|m| m.cluster)
    }

    /// Members grouped by cluster id; entry `r` lists cluster `r` in canonical order.
    pub fn groups(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.gamma + 1];
        for m in &self.members {
            out[m.cluster].push(m.node);
        }
        out
    }

    pub fn dump(&self) -> AssignmentDump {
        AssignmentDump {
            target: self.target.to_string(),
            members: self
                .members
                .iter()
                .map(|m| MemberDump {
                    node: m.node.to_string(),
                    membership: m.membership,
                    similarity: m.similarity,
                    cluster: m.cluster,
                })
                .collect(),
            dropped: self.dropped.iter().map(|n| n.to_string()).collect(),
            degenerate: self.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDump {
    pub target: String,
    pub members: Vec<MemberDump>,
    pub dropped: Vec<String>,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDump {
    pub node: String,
    pub membership: Membership,
    pub similarity: f64,
    pub cluster: usize,
}

/// Builds the clusters of target `o`. `features[k]` is the feature vector of
/// the `k`-th node of `g` in canonical order.
pub fn build_clusters(
    g: &ConversationGraph,
    o: NodeId,
    features: &[&[f64]],
    cfg: &SimilarityConfig,
) -> Result<ClusterAssignment> {
    cfg.validate()?;
    ensure_len("node features", g.node_count(), features.len())?;
    let f_o = features[g.index_of(o)?];
    let mut candidates: Vec<(NodeId, Membership)> = Vec::new();
    if cfg.neighborhood.use_connected {
        candidates.extend(g.connected_neighborhood(o)?.into_iter().map(|u| (u, Membership::Connected)));
    }
    if cfg.neighborhood.use_disconnected {
        candidates.extend(
            g.disconnected_neighborhood(o)?
                .into_iter()
                .map(|u| (u, Membership::Disconnected)),
        );
    }
    candidates.sort_by_key(|(u, _)| *u);

    let mut members = Vec::with_capacity(candidates.len());
    let mut dropped = Vec::new();
    let mut degenerate = 0;
    for (u, membership) in candidates {
        let (s, flagged) = similarity_flagged(features[g.index_of(u)?], f_o)?;
        degenerate += usize::from(flagged);
        match cluster_id(s, membership, cfg)? {
            ClusterDecision::Cluster(cluster) => members.push(ClusterMember {
                node: u,
                membership,
                similarity: s,
                cluster,
            }),
            ClusterDecision::Filtered => dropped.push(u),
        }
    }
    Ok(ClusterAssignment {
        target: o,
        gamma: cfg.gamma,
        members,
        dropped,
        degenerate,
    })
}
