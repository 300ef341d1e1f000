use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, predict, LayerKind, Model, ModelSpec};
use crate::aggregate::SecondLevelMode;
use crate::cluster::{NeighborhoodConfig, SimilarityConfig};
use crate::data::{Conversation, Dataset, SplitPart};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::numeric::{ops, AdamConfig, AdamState, Dropout, Tape};
use crate::rng::{substream, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub gamma: usize,
    pub rho: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Bi-LSTM hidden size per direction; node embeddings are twice this.
    pub hidden: usize,
    pub d_out: usize,
    pub classifier_hidden: usize,
    pub neighborhood: NeighborhoodConfig,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub second_level: SecondLevelMode,
    pub layers: LayerKind,
    pub modalities: Vec<Modality>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            dropout: 0.5,
            gamma: 8,
            rho: 0.3,
            max_epochs: 1500,
            seed: 0,
            hidden: 16,
            d_out: 32,
            classifier_hidden: 32,
            neighborhood: NeighborhoodConfig::DEFAULT,
            patience: 100,
            second_level: SecondLevelMode::Joint,
            layers: LayerKind::Bilevel,
            modalities: Modality::ALL.to_vec(),
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn similarity(&self) -> SimilarityConfig {
        SimilarityConfig {
            gamma: self.gamma,
            rho: self.rho,
            neighborhood: self.neighborhood,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn model_spec(&self, input_dims: [usize; 3], classes: usize) -> ModelSpec {
        ModelSpec {
            modalities: self.modalities.clone(),
            input_dims,
            hidden: self.hidden,
            d_out: self.d_out,
            classifier_hidden: self.classifier_hidden,
            classes,
            layers: self.layers,
            similarity: self.similarity(),
            second_level: self.second_level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        self.similarity().validate()?;
        AdamState::new(0, self.adam())?;
        Ok(())
    }

    /// Fresh model with seed-derived initial weights.
    pub fn init_model(&self, input_dims: [usize; 3], classes: usize) -> Result<Model> {
        let mut model = Model::new(self.model_spec(input_dims, classes))?;
        model.init(&mut substream(self.seed, "init"));
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode forward passes that produced the loss.
    pub train_accuracy: f64,
    pub val_waf1: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch without a
    /// validation split).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_set = dataset.part(SplitPart::Train)?;
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let val_set: Vec<&Conversation> = match &dataset.splits {
        Some(_) => dataset.part(SplitPart::Val)?,
        None => Vec::new(),
    };
    let mut model = cfg.init_model(dataset.dims, dataset.class_count())?;
    for conv in train_set.iter().chain(&val_set) {
        model.check_input(conv)?;
    }
    train_model(&mut model, &train_set, &val_set, cfg)
}

fn train_model(model: &mut Model, train_set: &[&Conversation], val_set: &[&Conversation], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut adam = AdamState::new(model.param_count(), cfg.adam())?;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut StreamKey::new(cfg.seed, "shuffle").with(epoch as u64).rng());
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut count = 0usize;
        for &k in &order {
            let conv = train_set[k];
            let mut dropout = if cfg.dropout > 0.0 {
                let rng = StreamKey::new(cfg.seed, "dropout").with(epoch as u64).with_str(&conv.id).rng();
                Dropout::training(cfg.dropout, rng)?
            } else {
                Dropout::disabled()
            };
            let grads = {
                let mut tape = Tape::new(&model.store);
                let (loss, out) = model.loss(&mut tape, conv, &mut dropout)?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss {value} at epoch {epoch}, conversation {}", conv.id)));
                }
                for (&z, gold) in out.logits.iter().zip(conv.labels()?) {
                    if predict(&ops::softmax(tape.value(z)))? == gold {
                        correct += 1;
                    }
                }
                loss_sum += value * conv.len() as f64;
                count += conv.len();
                tape.backward(loss)?.params
            };
            adam.step(model.store.flat_mut(), &grads)?;
        }
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / count as f64,
            train_accuracy: correct as f64 / count as f64,
            val_waf1: None,
            val_accuracy: None,
        };
        if !val_set.is_empty() {
            let m = evaluate(model, val_set)?;
            record.val_waf1 = Some(m.waf1);
            record.val_accuracy = Some(m.accuracy);
            if best.as_ref().is_none_or(|(w, _, _)| m.waf1 > *w) {
                best = Some((m.waf1, epoch, model.clone()));
            }
        }
        log::debug!(
            "epoch {epoch}: loss {:.6} acc {:.4} val_waf1 {:?}",
            record.train_loss,
            record.train_accuracy,
            record.val_waf1
        );
        history.push(record);
        if let Some((_, best_epoch, _)) = &best {
            if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
                log::info!("early stop at epoch {epoch}, best epoch {best_epoch}");
                break;
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model.clone(), history.len()),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
