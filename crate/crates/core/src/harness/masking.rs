//! Log-odds masking: zero the most important features for "source rather
//! than target" and measure how much the logit difference drops.

use super::{median, Saliency};
use crate::complex::{CTensor, Reduction, ZERO};
use crate::cvnn::Model;
use crate::error::{Error, Result};
use crate::method::{ExplainConfig, Objective};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingResult {
    pub saliency: String,
    pub fraction: f64,
    pub masked_features: usize,
    /// `(src − tgt)` before minus after masking, per image
    pub changes: Vec<f64>,
    pub median: f64,
    pub mean: f64,
}

/// Indices of the `count` largest scores, ties to the lower index.
pub fn top_features(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn logit_gap(model: &Model, x: &CTensor, source: usize, target: usize) -> Result<f64> {
    let out = model.predict(x)?;
    Ok(out.data()[source].re - out.data()[target].re)
}

#[allow(clippy::too_many_arguments)]
pub fn masking_experiment(
    model: &Model,
    images: &[CTensor],
    source: usize,
    target: usize,
    saliency: Saliency,
    reduction: Reduction,
    fraction: f64,
    config: &ExplainConfig,
) -> Result<MaskingResult> {
    if model.output_len() < 2 {
        return Err(Error::InvalidArgument("masking needs a classifier with at least two outputs".into()));
    }
    if source == target {
        return Err(Error::InvalidArgument("source and target classes must differ".into()));
    }
    let objective = Objective::Difference { plus: source, minus: target };
    objective.check(model)?;
    if !(0.0..=0.2).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("masking fraction {fraction} outside [0, 0.2]")));
    }
    let n_features = model.input_len();
    let count = (fraction * n_features as f64).floor() as usize;
    let mut changes = Vec::with_capacity(images.len());
    for (i, x) in images.iter().enumerate() {
        let scores = saliency.scores(model, x, &objective, reduction, config, i as u64)?;
        let mut data = x.data().to_vec();
        for j in top_features(&scores, count) {
            data[j] = ZERO;
        }
        let masked = CTensor::new(x.shape().to_vec(), data)?;
        changes.push(logit_gap(model, x, source, target)? - logit_gap(model, &masked, source, target)?);
    }
    let mean = if changes.is_empty() { 0.0 } else { changes.iter().sum::<f64>() / changes.len() as f64 };
    Ok(MaskingResult {
        saliency: saliency.label(reduction),
        fraction,
        masked_features: count,
        median: median(&changes),
        mean,
        changes,
    })
}
