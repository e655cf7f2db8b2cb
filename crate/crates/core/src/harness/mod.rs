//! Axiom checks and toy evaluation experiments.

mod axioms;
mod channel;
pub mod data;
mod experiments;
mod masking;
mod oracle_suite;
mod train;

pub use axioms::{check_axioms, AxiomReport};
pub use channel::{channel_attribution_score, channel_fraction, ChannelSample, ChannelScore};
pub use data::{Dataset, Task};
pub use experiments::{
    channel_experiment, channel_samples, masking_suite, ChannelExperiment, MaskingSuite, EXPERIMENT_VARIANTS,
};
pub use masking::{masking_experiment, top_features, MaskingResult};
pub use oracle_suite::{near_reference, oracle_suite, OracleCheck, OracleSuiteConfig, OracleSuiteReport};
pub use train::{accuracy, initial_model, is_correct, train_on, train_toy, TrainConfig, TrainReport};

use crate::complex::{reduce_saliency, CTensor, Reduction};
use crate::cvnn::Model;
use crate::error::Result;
use crate::method::{explain, ExplainConfig, Method, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Where per-feature importance scores come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Saliency {
    Explain(Method),
    /// uniform noise, reseeded per image from `(seed, image index)`
    Random(u64),
}

impl Saliency {
    pub fn label(self, reduction: Reduction) -> String {
        match self {
            Saliency::Explain(Method::DeepCshap) => "deepcshap".into(),
            Saliency::Explain(m) => format!("{}:{}", m.name(), reduction.short_name()),
            Saliency::Random(_) => "random".into(),
        }
    }

    /// Real scores per input feature. DeepCSHAP maps of real objectives are
    /// real already and keep their sign regardless of `reduction`.
    pub fn scores(
        self,
        model: &Model,
        x: &CTensor,
        objective: &Objective,
        reduction: Reduction,
        config: &ExplainConfig,
        index: u64,
    ) -> Result<Vec<f64>> {
        match self {
            Saliency::Explain(Method::DeepCshap) => {
                let e = explain(model, x, objective, Method::DeepCshap, config)?;
                Ok(e.phi.data().iter().map(|z| z.re).collect())
            }
            Saliency::Explain(m) => Ok(reduce_saliency(&explain(model, x, objective, m, config)?.phi, reduction)),
            Saliency::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                Ok((0..x.len()).map(|_| rng.random::<f64>()).collect())
            }
        }
    }
}

/// Median with the mean of the two central values for even lengths; 0 when
/// empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
