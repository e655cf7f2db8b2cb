//! Fraction of the attribution that lands on the channels known to carry
//! the explained class.

use super::{median, Saliency};
use crate::complex::{CTensor, Reduction};
use crate::cvnn::Model;
use crate::error::{Error, Result};
use crate::method::{ExplainConfig, Objective};
use serde::{Deserialize, Serialize};

/// One explanation to score: `output_index` should be explained by the
/// leading-axis channels in `correct_channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    pub input: CTensor,
    pub output_index: usize,
    pub correct_channels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub saliency: String,
    pub scores: Vec<f64>,
    /// samples whose total attribution was below 1e-12 in magnitude
    pub skipped: usize,
    pub median: f64,
    pub mean: f64,
}

/// `Σ_{correct} s / Σ_{all} s` for reduced scores `s`, or `None` when the
/// denominator vanishes.
pub fn channel_fraction(scores: &[f64], shape: &[usize], correct: &[usize]) -> Option<f64> {
    let per_channel: usize = shape[1..].iter().product();
    let total: f64 = scores.iter().sum();
    if total.abs() < 1e-12 {
        return None;
    }
    let on: f64 = correct
        .iter()
        .map(|&c| scores[c * per_channel..(c + 1) * per_channel].iter().sum::<f64>())
        .sum();
    Some(on / total)
}

pub fn channel_attribution_score(
    model: &Model,
    samples: &[ChannelSample],
    saliency: Saliency,
    reduction: Reduction,
    config: &ExplainConfig,
) -> Result<ChannelScore> {
    let mut scores = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for (i, s) in samples.iter().enumerate() {
        let channels = s.input.shape()[0];
        if s.input.shape().len() < 2 || s.correct_channels.iter().any(|&c| c >= channels) {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: correct channels {:?} do not fit input shape {:?}",
                s.correct_channels,
                s.input.shape()
            )));
        }
        let obj = Objective::re(s.output_index);
        let r = saliency.scores(model, &s.input, &obj, reduction, config, i as u64)?;
        match channel_fraction(&r, s.input.shape(), &s.correct_channels) {
            Some(v) => scores.push(v),
            None => skipped += 1,
        }
    }
    let mean = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    Ok(ChannelScore {
        saliency: saliency.label(reduction),
        median: median(&scores),
        mean,
        scores,
        skipped,
    })
}
