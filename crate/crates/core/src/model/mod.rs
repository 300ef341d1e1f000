//! End-to-end model: per-modality Bi-LSTM encoders, the conversation graph,
//! one bilevel aggregation layer (or a stack of mean-GCN layers), and the
//! utterance classifier.

mod metrics;
mod micro;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{baseline_gcn_layer, rba_layer, BiamParams, SecondLevelMode};
use crate::cluster::{ClusterAssignment, SimilarityConfig};
use crate::data::Conversation;
use crate::encoder::{bilstm_encode, BiLstmParams};
use crate::error::{Error, Result};
use crate::graph::ConversationGraph;
use crate::modality::Modality;
use crate::numeric::init::xavier_uniform;
use crate::numeric::{ops, Dropout, NodeId, ParamStore, Segment, SegmentId, Tape};

pub use metrics::{evaluate, ClassScore, Metrics};
pub use micro::{micro_gradcheck, MicroConfig, MicroReport};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

/// Graph layer stack between the encoders and the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerKind {
    /// One relational bilevel aggregation layer.
    #[default]
    Bilevel,
    /// `k` stacked mean-aggregation GCN layers.
    Gcn(usize),
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Bilevel => f.write_str("bilevel"),
            LayerKind::Gcn(k) => write!(f, "gcn{k}"),
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bilevel" {
            return Ok(Self::Bilevel);
        }
        match s.strip_prefix("gcn").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => Ok(Self::Gcn(k)),
            _ => Err(Error::Config(format!("unknown layer kind {s:?} (expected bilevel or gcnK, K ≥ 1)"))),
        }
    }
}

impl Serialize for LayerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub modalities: Vec<Modality>,
    /// Input feature dimension per modality, `t, v, a` order.
    pub input_dims: [usize; 3],
    pub hidden: usize,
    pub d_out: usize,
    pub classifier_hidden: usize,
    pub classes: usize,
    pub layers: LayerKind,
    pub similarity: SimilarityConfig,
    pub second_level: SecondLevelMode,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality is required".into()));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("d_out", self.d_out),
            ("classifier_hidden", self.classifier_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least two classes, got {}", self.classes)));
        }
        for m in &self.modalities {
            if self.input_dims[m.index()] == 0 {
                return Err(Error::Config(format!("modality {m} has zero input dimension")));
            }
        }
        self.similarity.validate()
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Debug, Clone)]
enum Body {
    Bilevel(BiamParams),
    Gcn(Vec<SegmentId>),
}

#[derive(Debug, Clone)]
struct Classifier {
    l_w: SegmentId,
    l_b: SegmentId,
    s_w: SegmentId,
    s_b: SegmentId,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    encoders: Vec<(Modality, BiLstmParams)>,
    body: Body,
    classifier: Classifier,
}

/// Per-utterance logits plus the cluster assignment of every node (empty
/// for GCN stacks).
#[derive(Debug)]
pub struct ForwardOutput {
    pub logits: Vec<NodeId>,
    pub assignments: Vec<ClusterAssignment>,
    pub graph: ConversationGraph,
}

impl Model {
    /// Registers every parameter tensor, zero-initialised.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let encoders = spec
            .modalities
            .iter()
            .map(|&m| {
                let p = BiLstmParams::register(&mut store, &format!("enc.{m}"), spec.input_dims[m.index()], spec.hidden);
                (m, p)
            })
            .collect();
        let d = spec.embedding_dim();
        let body = match spec.layers {
            LayerKind::Bilevel => Body::Bilevel(BiamParams::register(
                &mut store,
                "biam",
                d,
                spec.d_out,
                spec.similarity.gamma,
                spec.second_level,
            )),
            LayerKind::Gcn(k) => Body::Gcn(
                (0..k)
                    .map(|i| store.add(format!("gcn.{i}.w"), spec.d_out, if i == 0 { d } else { spec.d_out }))
                    .collect(),
            ),
        };
        let cls_in = spec.modalities.len() * spec.d_out;
        let classifier = Classifier {
            l_w: store.add("cls.l.w", spec.classifier_hidden, cls_in),
            l_b: store.add("cls.l.b", spec.classifier_hidden, 1),
            s_w: store.add("cls.smax.w", spec.classes, spec.classifier_hidden),
            s_b: store.add("cls.smax.b", spec.classes, 1),
        };
        Ok(Self {
            spec,
            store,
            encoders,
            body,
            classifier,
        })
    }

    /// Rebuilds a model from a saved segment table and flat parameters,
    /// checking every segment's name and shape against the spec.
    pub fn from_parts(spec: ModelSpec, segments: &[Segment], params: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(spec)?;
        let expected = model.store.segments();
        if segments.len() != expected.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameter segments, the model needs {}",
                segments.len(),
                expected.len()
            )));
        }
        for (got, want) in segments.iter().zip(expected) {
            if got.name != want.name {
                return Err(Error::Data(format!("segment {} found where {} was expected", got.name, want.name)));
            }
            if (got.rows, got.cols) != (want.rows, want.cols) {
                return Err(Error::Data(format!(
                    "segment {} has shape {}×{}, expected {}×{}",
                    got.name, got.rows, got.cols, want.rows, want.cols
                )));
            }
        }
        model.store = ParamStore::from_parts(segments.to_vec(), params)?;
        Ok(model)
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (_, p) in &self.encoders {
            p.init(&mut self.store, rng);
        }
        match &self.body {
            Body::Bilevel(p) => p.init(&mut self.store, rng),
            Body::Gcn(ws) => {
                for &w in ws {
                    let seg = self.store.segment(w).clone();
                    xavier_uniform(self.store.get_mut(w), seg.cols, seg.rows, rng);
                }
            }
        }
        let c = &self.classifier;
        for (w, b) in [(c.l_w, c.l_b), (c.s_w, c.s_b)] {
            let seg = self.store.segment(w).clone();
            xavier_uniform(self.store.get_mut(w), seg.cols, seg.rows, rng);
            self.store.get_mut(b).fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// Checks that a conversation's feature widths fit the encoders.
    pub fn check_input(&self, conv: &Conversation) -> Result<()> {
        if conv.is_empty() {
            return Err(Error::Argument(format!("conversation {} is empty", conv.id)));
        }
        for (m, p) in &self.encoders {
            let got = conv.utterances[0].feature(*m).len();
            if got != p.forward.input_dim {
                return Err(Error::Dimension {
                    context: format!("segment enc.{m}.fwd.w input width (conversation {})", conv.id),
                    expected: p.forward.input_dim,
                    actual: got,
                });
            }
        }
        Ok(())
    }

    /// Builds the forward graph on `tape`, whose parameter store must share
    /// this model's layout.
    pub fn forward(&self, tape: &mut Tape<'_>, conv: &Conversation, dropout: &mut Dropout) -> Result<ForwardOutput> {
        if tape.params().len() != self.store.len() {
            return Err(Error::dim("tape parameter store", self.store.len(), tape.params().len()));
        }
        self.check_input(conv)?;
        let n = conv.len();
        let mm = self.encoders.len();
        let mut features = vec![None; n * mm];
        for (pos, (m, p)) in self.encoders.iter().enumerate() {
            let seq: Vec<NodeId> = conv.utterances.iter().map(|u| tape.leaf(u.feature(*m).to_vec())).collect();
            for (i, g) in bilstm_encode(tape, &seq, p)?.into_iter().enumerate() {
                features[i * mm + pos] = Some(g);
            }
        }
        let features: Vec<NodeId> = features.into_iter().map(|f| f.expect("every node encoded")).collect();
        let graph = ConversationGraph::build(n, &self.spec.modalities)?;
        let (outputs, assignments) = match &self.body {
            Body::Bilevel(p) => {
                let out = rba_layer(tape, &graph, &features, p, &self.spec.similarity, dropout)?;
                (out.outputs, out.assignments)
            }
            Body::Gcn(ws) => {
                let mut cur = features;
                for &w in ws {
                    cur = baseline_gcn_layer(tape, &graph, &cur, w)?;
                }
                (cur, Vec::new())
            }
        };
        let c = &self.classifier;
        let mut logits = Vec::with_capacity(n);
        for i in 0..n {
            let x = tape.concat(&outputs[i * mm..(i + 1) * mm])?;
            let x = dropout.apply(tape, x)?;
            let l = tape.linear(c.l_w, Some(c.l_b), x)?;
            let l = tape.relu(l);
            logits.push(tape.linear(c.s_w, Some(c.s_b), l)?);
        }
        Ok(ForwardOutput {
            logits,
            assignments,
            graph,
        })
    }

    /// Mean cross-entropy over the conversation's utterances.
    pub fn loss(&self, tape: &mut Tape<'_>, conv: &Conversation, dropout: &mut Dropout) -> Result<(NodeId, ForwardOutput)> {
        let gold = conv.labels()?;
        let out = self.forward(tape, conv, dropout)?;
        let terms = out
            .logits
            .iter()
            .zip(&gold)
            .map(|(&z, &y)| tape.softmax_ce(z, y))
            .collect::<Result<Vec<_>>>()?;
        let loss = tape.sum(&terms, 1.0 / terms.len() as f64)?;
        Ok((loss, out))
    }

    /// Eval-mode class probabilities for every utterance.
    pub fn probabilities(&self, conv: &Conversation) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, conv, &mut Dropout::disabled())?;
        Ok(out.logits.iter().map(|&z| ops::softmax(tape.value(z))).collect())
    }

    /// Eval-mode cluster assignments of every node, canonical node order.
    pub fn assignments(&self, conv: &Conversation) -> Result<Vec<ClusterAssignment>> {
        let mut tape = Tape::new(&self.store);
        Ok(self.forward(&mut tape, conv, &mut Dropout::disabled())?.assignments)
    }

    pub fn predict_conversation(&self, conv: &Conversation) -> Result<Vec<usize>> {
        self.probabilities(conv)?.iter().map(|p| predict(p)).collect()
    }
}

/// Index of the largest probability; ties go to the smallest index.
pub fn predict(p: &[f64]) -> Result<usize> {
    let (first, rest) = p
        .split_first()
        .ok_or_else(|| Error::Argument("cannot predict from an empty probability vector".into()))?;
    let mut best = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v > best.1 {
            best = (i + 1, v);
        }
    }
    Ok(best.0)
}

/// Mean per-utterance cross-entropy over a slice of conversations.
pub fn batch_loss(model: &Model, store: &ParamStore, convs: &[&Conversation], dropout: &mut Dropout) -> Result<f64> {
    if convs.is_empty() {
        return Err(Error::Argument("batch_loss needs at least one conversation".into()));
    }
    let mut total = 0.0;
    let mut count = 0;
    for conv in convs {
        let mut tape = Tape::new(store);
        let (loss, _) = model.loss(&mut tape, conv, dropout)?;
        total += tape.scalar(loss) * conv.len() as f64;
        count += conv.len();
    }
    Ok(total / count as f64)
}

/// Loss and flat parameter gradient of `batch_loss` on one tape.
pub fn batch_loss_and_grad(
    model: &Model,
    store: &ParamStore,
    convs: &[&Conversation],
    dropout: &mut Dropout,
) -> Result<(f64, Vec<f64>)> {
    if convs.is_empty() {
        return Err(Error::Argument("batch_loss needs at least one conversation".into()));
    }
    let total: usize = convs.iter().map(|c| c.len()).sum();
    let mut tape = Tape::new(store);
    let mut terms = Vec::new();
    for conv in convs {
        let (loss, _) = model.loss(&mut tape, conv, dropout)?;
        terms.push((loss, conv.len()));
    }
    // re-weight per-conversation means into one mean over utterances
    let weighted = terms
        .iter()
        .map(|&(l, n)| tape.sum(&[l], n as f64 / total as f64))
        .collect::<Result<Vec<_>>>()?;
    let loss = tape.sum(&weighted, 1.0)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), grads.params))
}
