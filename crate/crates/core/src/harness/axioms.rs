//! Local accuracy and missingness checks.

use crate::complex::{neumaier_sum, CTensor, C64};
use crate::cvnn::Model;
use crate::deepcshap::explain_deepcshap_with;
use crate::error::{Error, Result};
use crate::method::{explain, ExplainConfig, Method, Objective};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// mean over inputs and outputs of `|Σφ + φ₀ − f(x)|`
    pub local_accuracy_error: f64,
    /// mean of `|f(x)|` over the same pairs
    pub mean_abs_output: f64,
    /// `local_accuracy_error / mean_abs_output`
    pub relative_error: f64,
    pub max_abs_error: f64,
    /// fraction of features equal to every reference with a nonzero `φ`
    pub missingness_error_fraction: f64,
    pub missing_features: usize,
    pub explanations: usize,
    pub fallbacks: usize,
}

/// Checks local accuracy and missingness of `method` on every input and
/// every output. Supported methods are DeepCSHAP (`Σφ + φ₀`) and integrated
/// gradients (`Σ 2·re φ + f(baseline)`, baseline = first reference).
pub fn check_axioms(
    model: &Model,
    inputs: &[CTensor],
    references: &[CTensor],
    method: Method,
    config: &ExplainConfig,
) -> Result<AxiomReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no inputs to check".into()));
    }
    if references.is_empty() {
        return Err(Error::InvalidArgument("no references given".into()));
    }
    let mut cfg = config.clone();
    match method {
        Method::DeepCshap => cfg.references = references.to_vec(),
        Method::IntegratedGradients => cfg.baseline = Some(references[0].clone()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "local accuracy is not defined for method '{other}'"
            )))
        }
    }
    let base_out = match method {
        Method::IntegratedGradients => Some(model.predict(&references[0])?),
        _ => None,
    };
    let mut errors = Vec::new();
    let mut magnitudes = Vec::new();
    let (mut missing, mut violated, mut fallbacks) = (0usize, 0usize, 0usize);
    for x in inputs {
        let fx = model.predict(x)?;
        let is_missing: Vec<bool> = (0..x.len())
            .map(|j| references.iter().all(|r| r.data().get(j) == Some(&x.data()[j])))
            .collect();
        for k in 0..model.output_len() {
            let obj = Objective::re(k);
            let target = fx.data()[k].re;
            let (phi, total) = if method == Method::DeepCshap {
                let map = explain_deepcshap_with(model, x, references, &obj, &cfg.deepcshap)?;
                fallbacks += map.fallbacks;
                let total = map.total().re;
                (map.phi, total)
            } else {
                let e = explain(model, x, &obj, method, &cfg)?;
                let base = base_out.as_ref().expect("baseline output").data()[k].re;
                let total = neumaier_sum(e.phi.data().iter().map(|p| C64::new(2.0 * p.re, 0.0))).re + base;
                (e.phi, total)
            };
            errors.push((total - target).abs());
            magnitudes.push(target.abs());
            for (p, &m) in phi.data().iter().zip(&is_missing) {
                if m {
                    missing += 1;
                    violated += (*p != C64::new(0.0, 0.0)) as usize;
                }
            }
        }
    }
    let n = errors.len() as f64;
    let local_accuracy_error = errors.iter().sum::<f64>() / n;
    let mean_abs_output = magnitudes.iter().sum::<f64>() / n;
    Ok(AxiomReport {
        local_accuracy_error,
        mean_abs_output,
        relative_error: if mean_abs_output > 0.0 {
            local_accuracy_error / mean_abs_output
        } else {
            local_accuracy_error
        },
        max_abs_error: errors.iter().copied().fold(0.0, f64::max),
        missingness_error_fraction: if missing > 0 { violated as f64 / missing as f64 } else { 0.0 },
        missing_features: missing,
        explanations: errors.len(),
        fallbacks,
    })
}
