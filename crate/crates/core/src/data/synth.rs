//! Synthetic conversations with known structure.
//!
//! * `prototype`: every class owns one prototype per modality, placed on a
//!   class-specific axis so any two prototypes are `separation` apart.
//!   Features are prototype plus isotropic Gaussian noise; labels are
//!   recoverable from each utterance alone.
//! * `long_range`: utterances come in pairs `(j, j + δ)` inside blocks of
//!   `2δ` positions. Each member carries a random key shared with its partner
//!   plus the prototype of its *partner's* label, so an utterance's own
//!   features say nothing about its label while its partner's features
//!   determine it. Conversation lengths are rounded down to a multiple of
//!   `2δ` so every utterance has a partner.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Conversation, Dataset, Utterance};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTask {
    Prototype,
    LongRange,
}

impl fmt::Display for SynthTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthTask::Prototype => "prototype",
            SynthTask::LongRange => "long_range",
        })
    }
}

impl FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prototype" => Ok(Self::Prototype),
            "long_range" | "long-range" => Ok(Self::LongRange),
            _ => Err(Error::Argument(format!("unknown synthetic task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub task: SynthTask,
    pub conversations: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub classes: usize,
    /// Feature dimension per modality in `t, v, a` order.
    pub dims: [usize; 3],
    /// Partner distance of the long-range task.
    pub delta: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub noise: f64,
    /// Euclidean distance between any two class prototypes.
    pub separation: f64,
    /// Norm of the shared pair key (long-range task only).
    pub key_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::prototype()
    }
}

impl SynthSpec {
    pub fn prototype() -> Self {
        Self {
            task: SynthTask::Prototype,
            conversations: 40,
            min_len: 8,
            max_len: 12,
            classes: 3,
            dims: [8, 8, 8],
            delta: 4,
            noise: 1.0,
            separation: 3.0,
            key_scale: 0.0,
        }
    }

    pub fn long_range() -> Self {
        Self {
            task: SynthTask::LongRange,
            conversations: 120,
            min_len: 8,
            max_len: 16,
            classes: 3,
            dims: [64, 64, 64],
            delta: 4,
            noise: 0.1,
            separation: 3.0,
            key_scale: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.conversations == 0 {
            return bad("conversations must be positive".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("invalid length range {}..={}", self.min_len, self.max_len));
        }
        if self.classes < 2 {
            return bad("need at least two classes".into());
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < self.classes) {
            return bad(format!("feature dim {d} is smaller than the class count {}", self.classes));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise {} must be finite and non-negative", self.noise));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad(format!("separation {} must be positive", self.separation));
        }
        if self.task == SynthTask::LongRange {
            if self.delta < 2 {
                return bad(format!("delta {} must be at least 2", self.delta));
            }
            if self.max_len < 2 * self.delta {
                return bad(format!("max_len {} is shorter than one block of 2·delta", self.max_len));
            }
            if !(self.key_scale.is_finite() && self.key_scale >= 0.0) {
                return bad(format!("key_scale {} must be finite and non-negative", self.key_scale));
            }
        }
        Ok(())
    }

    pub fn label_names(&self) -> Vec<String> {
        let width = (self.classes - 1).to_string().len().max(2);
        (0..self.classes).map(|c| format!("c{c:0width$}")).collect()
    }
}

/// Partner of position `j` in the long-range layout.
pub fn partner(j: usize, delta: usize) -> usize {
    if (j / delta) % 2 == 0 {
        j + delta
    } else {
        j - delta
    }
}

/// Class `c`'s prototype for one modality: `separation/√2` along axis `axes[c]`.
fn prototype(axes: &[usize], dim: usize, c: usize, separation: f64) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    p[axes[c]] = separation / std::f64::consts::SQRT_2;
    p
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, n, 1.0);
        let norm = crate::numeric::matrix::norm(&v);
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let root = StreamKey::new(seed, "synth");
    let mut axes_rng = root.clone().with_str("axes").rng();
    let axes: Vec<Vec<usize>> = spec
        .dims
        .iter()
        .map(|&d| {
            let mut a: Vec<usize> = (0..d).collect();
            a.shuffle(&mut axes_rng);
            a.truncate(spec.classes);
            a
        })
        .collect();
    let mut conversations = Vec::with_capacity(spec.conversations);
    for i in 0..spec.conversations {
        let mut rng = root.clone().with(i as u64).rng();
        let mut len = rng.random_range(spec.min_len..=spec.max_len);
        if spec.task == SynthTask::LongRange {
            let block = 2 * spec.delta;
            len = (len / block).max(1) * block;
        }
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.classes)).collect();
        let keys: Vec<[Vec<f64>; 3]> = match spec.task {
            SynthTask::Prototype => vec![],
            SynthTask::LongRange => (0..len / 2)
                .map(|_| spec.dims.map(|d| unit(&mut rng, d)))
                .collect(),
        };
        let id = format!("conv{i:03}");
        let utterances = (0..len)
            .map(|j| {
                let features = Modality::ALL.map(|m| {
                    let k = m.index();
                    let d = spec.dims[k];
                    let mut f = match spec.task {
                        SynthTask::Prototype => prototype(&axes[k], d, labels[j], spec.separation),
                        SynthTask::LongRange => {
                            let p = partner(j, spec.delta);
                            let pair = (j.min(p) / (2 * spec.delta)) * spec.delta + j.min(p) % spec.delta;
                            let mut v = prototype(&axes[k], d, labels[p], spec.separation);
                            for (x, key) in v.iter_mut().zip(&keys[pair][k]) {
                                *x += spec.key_scale * key;
                            }
                            v
                        }
                    };
                    if spec.noise > 0.0 {
                        for (x, n) in f.iter_mut().zip(gaussian(&mut rng, d, spec.noise)) {
                            *x += n;
                        }
                    }
                    f
                });
                Utterance {
                    id: format!("{id}.u{j:02}"),
                    speaker: Some(if j % 2 == 0 { "A" } else { "B" }.to_string()),
                    label: Some(labels[j]),
                    features,
                }
            })
            .collect();
        conversations.push(Conversation { id, utterances });
    }
    Dataset::new(spec.label_names(), conversations)
}
