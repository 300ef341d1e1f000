//! Per-conversation graph: one node per (utterance, modality), same-modality
//! chains in conversation order, and a clique over the modalities of each
//! utterance.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub utterance: usize,
    pub modality: Modality,
}

impl NodeId {
    pub fn new(utterance: usize, modality: Modality) -> Self {
        Self { utterance, modality }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.utterance, self.modality)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralNeighborhood {
    pub connected: Vec<NodeId>,
    pub disconnected: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct ConversationGraph {
    utterances: usize,
    modalities: Vec<Modality>,
    /// Indexed by dense node index; order of each list is storage order only.
    adjacency: Vec<Vec<NodeId>>,
}

impl ConversationGraph {
    /// Builds the graph for `utterances` utterances over the given modality set.
    pub fn build(utterances: usize, modalities: &[Modality]) -> Result<Self> {
        if utterances == 0 {
            return Err(Error::Data("conversation has no utterances".into()));
        }
        let mut mods = modalities.to_vec();
        mods.sort();
        mods.dedup();
        if mods.is_empty() || mods.len() != modalities.len() {
            return Err(Error::Data(format!(
                "graph needs a non-empty set of distinct modalities, got {modalities:?}"
            )));
        }
        let mut g = Self {
            utterances,
            modalities: mods,
            adjacency: vec![Vec::new(); utterances * modalities.len()],
        };
        for i in 0..utterances {
            for (k, &m) in g.modalities.clone().iter().enumerate() {
                if i + 1 < utterances {
                    g.link(NodeId::new(i, m), NodeId::new(i + 1, m));
                }
                for &other in &g.modalities.clone()[k + 1..] {
                    g.link(NodeId::new(i, m), NodeId::new(i, other));
                }
            }
        }
        Ok(g)
    }

    fn link(&mut self, a: NodeId, b: NodeId) {
        let (ia, ib) = (self.dense(a), self.dense(b));
        self.adjacency[ia].push(b);
        self.adjacency[ib].push(a);
    }

    fn dense(&self, id: NodeId) -> usize {
        let k = self
            .modalities
            .iter()
            .position(|&m| m == id.modality)
            .expect("modality present");
        id.utterance * self.modalities.len() + k
    }

    pub fn utterances(&self) -> usize {
        self.utterances
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.utterance < self.utterances && self.modalities.contains(&id.modality)
    }

    /// Dense position of a node in canonical order, or an error if absent.
    pub fn index_of(&self, id: NodeId) -> Result<usize> {
        if self.contains(id) {
            Ok(self.dense(id))
        } else {
            Err(Error::Argument(format!("node {id} is not in the graph")))
        }
    }

    /// All nodes in canonical order (utterance, then modality).
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.utterances).flat_map(move |i| self.modalities.iter().map(move |&m| NodeId::new(i, m)))
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out: Vec<(NodeId, NodeId)> = self
            .nodes()
            .flat_map(|u| {
                self.adjacency[self.dense(u)]
                    .iter()
                    .filter(move |&&v| u < v)
                    .map(move |&v| (u, v))
            })
            .collect();
        out.sort();
        out
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.adjacency[self.dense(a)].contains(&b)
    }

    /// `C_g(o)`: nodes sharing an edge with `o`, in canonical order.
    pub fn connected_neighborhood(&self, o: NodeId) -> Result<Vec<NodeId>> {
        let idx = self.index_of(o)?;
        let mut out = self.adjacency[idx].clone();
        out.sort();
        Ok(out)
    }

    /// `D_g(o)`: same-modality nodes other than `o` that are not adjacent to it.
    pub fn disconnected_neighborhood(&self, o: NodeId) -> Result<Vec<NodeId>> {
        let idx = self.index_of(o)?;
        let adjacent: BTreeSet<NodeId> = self.adjacency[idx].iter().copied().collect();
        Ok((0..self.utterances)
            .map(|j| NodeId::new(j, o.modality))
            .filter(|u| *u != o && !adjacent.contains(u))
            .collect())
    }

    pub fn structural_neighborhood(&self, o: NodeId) -> Result<StructuralNeighborhood> {
        Ok(StructuralNeighborhood {
            connected: self.connected_neighborhood(o)?,
            disconnected: self.disconnected_neighborhood(o)?,
        })
    }

    /// Permutes the storage order of every adjacency list. Neighbourhood
    /// queries are unaffected; used to exercise order independence.
    pub fn shuffle_adjacency<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for list in &mut self.adjacency {
            list.shuffle(rng);
        }
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self.nodes().map(|n| n.to_string()).collect(),
            edges: self
                .edges()
                .into_iter()
                .map(|(a, b)| [a.to_string(), b.to_string()])
                .collect(),
        }
    }
}

/// JSON adjacency dump with node ids written as `"i:modality"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
}
