//! Ablation sweeps. Each variant changes one axis of the base config and
//! keeps the seed, so variants share data order, dropout streams and (where
//! shapes agree) initial weights.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::AblationConfig;
use crate::data::{Dataset, SplitPart};
use crate::error::{Error, Result};
use crate::modality::{modality_label, parse_modalities};
use crate::model::{evaluate, train, LayerKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Neighborhood,
    Gamma,
    Layers,
    Modality,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 4] = [Self::Neighborhood, Self::Gamma, Self::Layers, Self::Modality];
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::Neighborhood => "neighborhood",
            AblationAxis::Gamma => "gamma",
            AblationAxis::Layers => "layers",
            AblationAxis::Modality => "modality",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Argument(format!("unknown ablation axis {s:?} (expected neighborhood, gamma, layers or modality)")))
    }
}

/// `(row label, config)` for every variant of an axis, in output order.
pub fn variants(base: &TrainConfig, axis: AblationAxis, ablation: &AblationConfig) -> Result<Vec<(String, TrainConfig)>> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let out: Vec<(String, TrainConfig)> = match axis {
        AblationAxis::Neighborhood => ablation
            .neighborhoods
            .iter()
            .map(|&n| (n.to_string(), with(&|c| c.neighborhood = n)))
            .collect(),
        AblationAxis::Gamma => ablation
            .gammas
            .iter()
            .map(|&g| (g.to_string(), with(&|c| c.gamma = g)))
            .collect(),
        AblationAxis::Layers => std::iter::once(LayerKind::Bilevel)
            .chain(ablation.gcn_layers.iter().map(|&k| LayerKind::Gcn(k)))
            .map(|l| (l.to_string(), with(&|c| c.layers = l)))
            .collect(),
        AblationAxis::Modality => ablation
            .modalities
            .iter()
            .map(|s| {
                let ms = parse_modalities(s)?;
                Ok((modality_label(&ms), with(&|c| c.modalities = ms.clone())))
            })
            .collect::<Result<_>>()?,
    };
    if out.is_empty() {
        return Err(Error::Config(format!("ablation axis {axis} has no variants")));
    }
    for (label, cfg) in &out {
        cfg.validate().map_err(|e| Error::Config(format!("variant {label}: {e}")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub variant: String,
    /// Split the score columns were computed on.
    pub eval_split: String,
    pub waf1: f64,
    pub accuracy: f64,
    pub best_val_waf1: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub params: usize,
}

/// Trains and scores every variant: on the test split when it is non-empty,
/// else validation, else train.
pub fn run_ablation(dataset: &Dataset, base: &TrainConfig, axis: AblationAxis, ablation: &AblationConfig) -> Result<Vec<AblationRow>> {
    let eval_part = [SplitPart::Test, SplitPart::Val]
        .into_iter()
        .find(|&p| dataset.part(p).map(|c| !c.is_empty()).unwrap_or(false))
        .unwrap_or(SplitPart::Train);
    let eval_set = dataset.part(eval_part)?;
    let mut rows = Vec::new();
    for (variant, cfg) in variants(base, axis, ablation)? {
        log::info!("ablation {axis}: training {variant}");
        let out = train(dataset, &cfg)?;
        let m = evaluate(&out.model, &eval_set)?;
        let best_val_waf1 = out.history.get(out.best_epoch.saturating_sub(1)).and_then(|r| r.val_waf1);
        rows.push(AblationRow {
            axis: axis.to_string(),
            variant,
            eval_split: eval_part.to_string(),
            waf1: m.waf1,
            accuracy: m.accuracy,
            best_val_waf1,
            best_epoch: out.best_epoch,
            epochs_run: out.history.len(),
            params: out.model.param_count(),
        });
    }
    Ok(rows)
}

/// Columns: `axis,variant,eval_split,waf1,accuracy,best_val_waf1,best_epoch,epochs_run,params`.
pub fn write_ablation<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<ablation>", e))
}
