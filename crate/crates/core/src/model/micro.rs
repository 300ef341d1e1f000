//! End-to-end finite-difference check on a tiny random model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, batch_loss_and_grad, LayerKind, Model, ModelSpec};
use crate::aggregate::SecondLevelMode;
use crate::cluster::SimilarityConfig;
use crate::data::{Conversation, Utterance};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::numeric::{grad_check, Dropout, GradCheckReport};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicroConfig {
    pub conversations: usize,
    pub utterances: usize,
    pub hidden: usize,
    pub gamma: usize,
    pub rho: f64,
    pub classes: usize,
    pub dims: [usize; 3],
    pub d_out: usize,
    pub classifier_hidden: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Must be zero: masks would differ between the perturbed evaluations.
    pub dropout: f64,
    pub layers: LayerKind,
    /// Test hook: perturbs one analytic gradient entry before comparison.
    #[serde(skip)]
    pub corrupt_gradient: bool,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self {
            conversations: 2,
            utterances: 3,
            hidden: 4,
            gamma: 2,
            rho: 0.3,
            classes: 2,
            dims: [3, 2, 2],
            d_out: 4,
            classifier_hidden: 4,
            eps: 1e-5,
            tolerance: 1e-4,
            seed: 0,
            dropout: 0.0,
            layers: LayerKind::Bilevel,
            corrupt_gradient: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicroReport {
    pub report: GradCheckReport,
    pub param_count: usize,
    /// Largest relative error per parameter segment, in layout order.
    pub segments: Vec<(String, f64)>,
    pub worst_segment: String,
    pub passed: bool,
}

fn micro_data(cfg: &MicroConfig) -> Vec<Conversation> {
    let mut rng = substream(cfg.seed, "micro-data");
    (0..cfg.conversations)
        .map(|c| Conversation {
            id: format!("m{c}"),
            utterances: (0..cfg.utterances)
                .map(|i| Utterance {
                    id: format!("m{c}.{i}"),
                    speaker: None,
                    label: Some(rng.random_range(0..cfg.classes)),
                    features: cfg.dims.map(|d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()),
                })
                .collect(),
        })
        .collect()
}

pub fn micro_gradcheck(cfg: &MicroConfig) -> Result<MicroReport> {
    if cfg.dropout != 0.0 {
        return Err(Error::Argument(format!(
            "gradient check needs dropout 0 (got {}): random masks make the loss non-deterministic",
            cfg.dropout
        )));
    }
    let spec = ModelSpec {
        modalities: Modality::ALL.to_vec(),
        input_dims: cfg.dims,
        hidden: cfg.hidden,
        d_out: cfg.d_out,
        classifier_hidden: cfg.classifier_hidden,
        classes: cfg.classes,
        layers: cfg.layers,
        similarity: SimilarityConfig {
            gamma: cfg.gamma,
            rho: cfg.rho,
            ..Default::default()
        },
        second_level: SecondLevelMode::Joint,
    };
    let mut model = Model::new(spec)?;
    model.init(&mut substream(cfg.seed, "micro-init"));
    // nonzero biases so every gate and bias path carries gradient
    let mut rng = substream(cfg.seed, "micro-bias");
    for seg in model.store.segments().to_vec() {
        if seg.cols == 1 {
            for v in &mut model.store.flat_mut()[seg.range()] {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let data = micro_data(cfg);
    let convs: Vec<&Conversation> = data.iter().collect();
    let (_, mut analytic) = batch_loss_and_grad(&model, &model.store, &convs, &mut Dropout::disabled())?;
    if cfg.corrupt_gradient {
        let k = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        analytic[k] = 2.0 * analytic[k] + 1e-3;
    }
    let mut scratch = model.store.clone();
    let report = grad_check(
        |flat| {
            scratch.flat_mut().copy_from_slice(flat);
            batch_loss(&model, &scratch, &convs, &mut Dropout::disabled())
        },
        model.store.flat(),
        &analytic,
        cfg.eps,
    )?;
    let errors: Vec<f64> = report.rel_errors().collect();
    let segments: Vec<(String, f64)> = model
        .store
        .segments()
        .iter()
        .map(|s| (s.name.clone(), errors[s.range()].iter().cloned().fold(0.0, f64::max)))
        .collect();
    let worst_segment = model
        .store
        .segment_at(report.worst_index)
        .map(|s| s.name.clone())
        .unwrap_or_default();
    Ok(MicroReport {
        passed: report.max_rel_error < cfg.tolerance,
        param_count: model.param_count(),
        report,
        segments,
        worst_segment,
    })
}
