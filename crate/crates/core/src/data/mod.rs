//! Conversations, datasets and splits.

mod io;
mod split;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::Modality;

pub use io::{load_dataset, load_dataset_with_labels, load_splits, parse_dataset, save_dataset, save_splits, write_dataset};
pub use split::split;
pub use synth::{generate_synthetic, partner, SynthSpec, SynthTask};

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: Option<String>,
    /// Class index into the dataset vocabulary; `None` for unlabelled input.
    pub label: Option<usize>,
    /// Feature vectors indexed by [`Modality::index`].
    pub features: [Vec<f64>; 3],
}

impl Utterance {
    pub fn feature(&self, m: Modality) -> &[f64] {
        &self.features[m.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Gold labels, failing on the first unlabelled utterance.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.utterances
            .iter()
            .map(|u| {
                u.label
                    .ok_or_else(|| Error::Data(format!("utterance {} of conversation {} has no label", u.id, self.id)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, part: SplitPart) -> Option<&[String]> {
        match part {
            SplitPart::Train => Some(&self.train),
            SplitPart::Val => Some(&self.val),
            SplitPart::Test => Some(&self.test),
            SplitPart::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Val => "val",
            SplitPart::Test => "test",
            SplitPart::All => "all",
        })
    }
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            _ => Err(Error::Argument(format!("unknown split {s:?} (expected train, val, test or all)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: Vec<String>,
    /// Feature dimension per modality, indexed by [`Modality::index`].
    pub dims: [usize; 3],
    pub conversations: Vec<Conversation>,
    pub splits: Option<Splits>,
}

impl Dataset {
    /// Validates dimensions, labels, finiteness and id uniqueness.
    pub fn new(labels: Vec<String>, conversations: Vec<Conversation>) -> Result<Self> {
        let first = conversations
            .iter()
            .flat_map(|c| c.utterances.first())
            .next()
            .ok_or_else(|| Error::Data("dataset has no utterances".into()))?;
        let dims = [first.features[0].len(), first.features[1].len(), first.features[2].len()];
        let mut seen = HashSet::new();
        for c in &conversations {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Data(format!("duplicate conversation id {}", c.id)));
            }
            if c.is_empty() {
                return Err(Error::Data(format!("conversation {} has no utterances", c.id)));
            }
            let mut utt_ids = HashSet::new();
            for u in &c.utterances {
                if !utt_ids.insert(u.id.as_str()) {
                    return Err(Error::Data(format!("duplicate utterance id {} in conversation {}", u.id, c.id)));
                }
                for m in Modality::ALL {
                    let f = u.feature(m);
                    if f.len() != dims[m.index()] {
                        return Err(Error::Dimension {
                            context: format!("modality {m} of utterance {}", u.id),
                            expected: dims[m.index()],
                            actual: f.len(),
                        });
                    }
                    if f.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data(format!("non-finite {m} feature in utterance {}", u.id)));
                    }
                }
                if let Some(l) = u.label {
                    if l >= labels.len() {
                        return Err(Error::Index { index: l, len: labels.len() });
                    }
                }
            }
        }
        if dims.contains(&0) {
            return Err(Error::Data(format!("empty feature vectors (dims {dims:?})")));
        }
        Ok(Self {
            labels,
            dims,
            conversations,
            splits: None,
        })
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn utterance_count(&self) -> usize {
        self.conversations.iter().map(Conversation::len).sum()
    }

    pub fn conversation(&self, id: &str) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.id == id)
    }

    /// Attaches splits after checking they partition the conversation ids.
    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        let mut seen = HashSet::new();
        for id in splits.train.iter().chain(&splits.val).chain(&splits.test) {
            if self.conversation(id).is_none() {
                return Err(Error::Data(format!("split names unknown conversation {id}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("conversation {id} appears in more than one split")));
            }
        }
        if seen.len() != self.conversations.len() {
            return Err(Error::Data(format!(
                "splits cover {} of {} conversations",
                seen.len(),
                self.conversations.len()
            )));
        }
        self.splits = Some(splits);
        Ok(self)
    }

    /// Conversations of one split, in split-file order. `All` and datasets
    /// without splits yield every conversation in file order.
    pub fn part(&self, part: SplitPart) -> Result<Vec<&Conversation>> {
        match (&self.splits, part) {
            (_, SplitPart::All) => Ok(self.conversations.iter().collect()),
            (None, SplitPart::Train) => Ok(self.conversations.iter().collect()),
            (None, p) => Err(Error::Data(format!("dataset has no splits, cannot select {p}"))),
            (Some(s), p) => Ok(s
                .get(p)
                .unwrap_or_default()
                .iter()
                .map(|id| self.conversation(id).expect("validated split"))
                .collect()),
        }
    }
}
