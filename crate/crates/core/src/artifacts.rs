//! Checkpoints and report files.
//!
//! | file              | content                                            |
//! |-------------------|----------------------------------------------------|
//! | `checkpoint.json` | config echo, model spec, labels, segments, params  |
//! | `history.csv`     | `epoch,train_loss,train_accuracy,val_waf1,val_accuracy` |
//! | `metrics.json`    | [`MetricsReport`]                                  |
//! | `confusion.csv`   | `gold` column then one column per predicted label  |
//! | `per_class.csv`   | `label,support,predicted,precision,recall,f1`      |
//! | `predictions.csv` | `conversation,utterance,gold,predicted,p_<label>…` |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::AssignmentDump;
use crate::data::{Conversation, SplitPart};
use crate::error::{Error, Result};
use crate::graph::GraphDump;
use crate::model::{predict, EpochRecord, Metrics, Model, ModelSpec, TrainConfig};
use crate::numeric::Segment;

pub const CHECKPOINT_VERSION: u32 = 1;

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub labels: Vec<String>,
    pub segments: Vec<Segment>,
    pub params: Vec<f64>,
    pub epoch: usize,
    pub metrics: Option<MetricsReport>,
}

impl Checkpoint {
    pub fn new(model: &Model, config: &TrainConfig, labels: &[String], epoch: usize, metrics: Option<MetricsReport>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config: config.clone(),
            spec: model.spec.clone(),
            labels: labels.to_vec(),
            segments: model.store.segments().to_vec(),
            params: model.store.flat().to_vec(),
            epoch,
            metrics,
        }
    }

    pub fn model(&self) -> Result<Model> {
        if self.labels.len() != self.spec.classes {
            return Err(Error::dim("checkpoint labels", self.spec.classes, self.labels.len()));
        }
        Model::from_parts(self.spec.clone(), &self.segments, self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "{}: checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                path.display(),
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub waf1: f64,
    pub accuracy: f64,
    pub samples: u64,
    pub labels: Vec<String>,
    pub per_class: Vec<ClassReport>,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn new(metrics: &Metrics, labels: &[String], split: SplitPart) -> Self {
        Self {
            split: split.to_string(),
            waf1: metrics.waf1,
            accuracy: metrics.accuracy,
            samples: metrics.samples,
            labels: labels.to_vec(),
            per_class: metrics
                .per_class
                .iter()
                .zip(labels)
                .map(|(s, l)| ClassReport {
                    label: l.clone(),
                    support: s.support,
                    predicted: s.predicted,
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                })
                .collect(),
            confusion: metrics.confusion.clone(),
        }
    }

    /// Writes `metrics.json`, `confusion.csv` and `per_class.csv` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_json(dir.join(METRICS_FILE), self)?;
        self.write_confusion(dir.join(CONFUSION_FILE))?;
        self.write_per_class(dir.join(PER_CLASS_FILE))
    }

    pub fn write_confusion(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_writer(path.as_ref())?;
        let mut header = vec!["gold".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        flush(w, path.as_ref())
    }

    pub fn write_per_class(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_writer(path.as_ref())?;
        w.write_record(["label", "support", "predicted", "precision", "recall", "f1"])?;
        for c in &self.per_class {
            w.write_record([
                c.label.clone(),
                c.support.to_string(),
                c.predicted.to_string(),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
            ])?;
        }
        flush(w, path.as_ref())
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Floats use Rust's shortest round-trip formatting, so equal histories
/// produce byte-identical files.
pub fn write_history<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_waf1", "val_accuracy"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.train_accuracy.to_string(),
            opt(r.val_waf1),
            opt(r.val_accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))
}

pub fn save_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history(history, file)
}

pub fn write_predictions(model: &Model, labels: &[String], convs: &[&Conversation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["conversation", "utterance", "gold", "predicted"].map(String::from).to_vec();
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    w.write_record(&header)?;
    for conv in convs {
        for (u, p) in conv.utterances.iter().zip(model.probabilities(conv)?) {
            let mut rec = vec![
                conv.id.clone(),
                u.id.clone(),
                u.label.map(|l| labels[l].clone()).unwrap_or_default(),
                labels[predict(&p)?].clone(),
            ];
            rec.extend(p.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    flush(w, path)
}

/// Graph and per-node cluster assignments of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationClusters {
    pub conversation: String,
    pub graph: GraphDump,
    pub assignments: Vec<AssignmentDump>,
}

pub fn cluster_dump(model: &Model, conv: &Conversation) -> Result<ConversationClusters> {
    let mut tape = crate::numeric::Tape::new(&model.store);
    let out = model.forward(&mut tape, conv, &mut crate::numeric::Dropout::disabled())?;
    Ok(ConversationClusters {
        conversation: conv.id.clone(),
        graph: out.graph.dump(),
        assignments: out.assignments.iter().map(|a| a.dump()).collect(),
    })
}
