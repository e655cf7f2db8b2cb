//! The channel-attribution and masking experiments over every method.

use super::channel::{channel_attribution_score, ChannelSample, ChannelScore};
use super::data::Dataset;
use super::masking::{masking_experiment, MaskingResult};
use super::Saliency;
use crate::complex::{CTensor, Reduction};
use crate::cvnn::Model;
use crate::error::Result;
use crate::method::{ExplainConfig, Method};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// DeepCSHAP once, then every gradient method under both reductions.
pub const EXPERIMENT_VARIANTS: [(Method, Reduction); 11] = [
    (Method::DeepCshap, Reduction::RealPlusImag),
    (Method::Gradient, Reduction::Abs),
    (Method::Gradient, Reduction::RealPlusImag),
    (Method::GradTimesInput, Reduction::Abs),
    (Method::GradTimesInput, Reduction::RealPlusImag),
    (Method::IntegratedGradients, Reduction::Abs),
    (Method::IntegratedGradients, Reduction::RealPlusImag),
    (Method::GuidedZ, Reduction::Abs),
    (Method::GuidedZ, Reduction::RealPlusImag),
    (Method::GuidedC, Reduction::Abs),
    (Method::GuidedC, Reduction::RealPlusImag),
];

/// Two samples per two-patch input: class of patch 1 explained by channels
/// 0–1, class of patch 2 by channels 2–3.
pub fn channel_samples(data: &Dataset) -> Vec<ChannelSample> {
    data.inputs
        .iter()
        .zip(&data.labels)
        .flat_map(|(x, l)| {
            [(l[0], vec![0, 1]), (l[1], vec![2, 3])].map(|(k, ch)| ChannelSample {
                input: x.clone(),
                output_index: k,
                correct_channels: ch,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelExperiment {
    pub results: Vec<ChannelScore>,
}

impl ChannelExperiment {
    pub fn get(&self, label: &str) -> Option<&ChannelScore> {
        self.results.iter().find(|r| r.saliency == label)
    }
}

pub fn channel_experiment(model: &Model, samples: &[ChannelSample], config: &ExplainConfig) -> Result<ChannelExperiment> {
    let results = EXPERIMENT_VARIANTS
        .par_iter()
        .map(|&(m, r)| channel_attribution_score(model, samples, Saliency::Explain(m), r, config))
        .collect::<Result<_>>()?;
    Ok(ChannelExperiment { results })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingSuite {
    pub source: usize,
    pub target: usize,
    pub results: Vec<MaskingResult>,
}

impl MaskingSuite {
    pub fn get(&self, label: &str, fraction: f64) -> Option<&MaskingResult> {
        self.results.iter().find(|r| r.saliency == label && r.fraction == fraction)
    }
}

/// Every variant plus the random baseline at every fraction.
pub fn masking_suite(
    model: &Model,
    images: &[CTensor],
    source: usize,
    target: usize,
    fractions: &[f64],
    config: &ExplainConfig,
    random_seed: u64,
) -> Result<MaskingSuite> {
    let mut jobs: Vec<(Saliency, Reduction, f64)> = Vec::new();
    for &f in fractions {
        for &(m, r) in &EXPERIMENT_VARIANTS {
            jobs.push((Saliency::Explain(m), r, f));
        }
        jobs.push((Saliency::Random(random_seed), Reduction::Abs, f));
    }
    let results = jobs
        .par_iter()
        .map(|&(s, r, f)| masking_experiment(model, images, source, target, s, r, f, config))
        .collect::<Result<_>>()?;
    Ok(MaskingSuite { source, target, results })
}
