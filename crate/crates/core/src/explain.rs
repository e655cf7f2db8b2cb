//! Gradient-based saliency for complex-valued networks.
//!
//! Every method is built on `∂f/∂z̄`, the steepest-ascent direction of a
//! real output `f`.

use crate::complex::{neumaier_sum, CTensor, Reduction, C64};
use crate::cvnn::{forward, Model};
use crate::error::{Error, Result};
use crate::method::Objective;
use crate::wirtinger::{backward_from_seed, Guided};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMethod {
    Gradient,
    GradTimesInput,
    IntegratedGradients,
    GuidedZ,
    GuidedC,
}

/// Whether gradient × input multiplies by `x` or by `conj(x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFactor {
    #[default]
    Plain,
    Conjugate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradExplanation {
    pub method: GradMethod,
    pub phi: CTensor,
    pub reduction: Reduction,
}

impl GradExplanation {
    pub fn reduced(&self) -> Vec<f64> {
        crate::complex::reduce_saliency(&self.phi, self.reduction)
    }
}

pub(crate) fn gradient_objective(
    model: &Model,
    x: &CTensor,
    objective: &Objective,
    guided: Guided,
) -> Result<CTensor> {
    let trace = forward(model, x)?;
    let seed = objective.seed_pair(model)?;
    let (state, _) = backward_from_seed(model, &trace, seed, guided, false)?;
    Ok(state.pairs.into_iter().next().unwrap().d_zbar)
}

pub(crate) fn grad_times_input_objective(
    model: &Model,
    x: &CTensor,
    objective: &Objective,
    factor: InputFactor,
) -> Result<CTensor> {
    let g = gradient_objective(model, x, objective, Guided::None)?;
    match factor {
        InputFactor::Plain => g.mul(x),
        InputFactor::Conjugate => g.mul(&x.conj()),
    }
}

pub(crate) fn integrated_gradients_objective(
    model: &Model,
    x: &CTensor,
    baseline: &CTensor,
    steps: usize,
    objective: &Objective,
) -> Result<CTensor> {
    if steps == 0 {
        return Err(Error::InvalidArgument("integrated gradients needs steps >= 1".into()));
    }
    x.check_same_shape(baseline)?;
    let delta = x.sub(baseline)?;
    let mut per_feature: Vec<Vec<C64>> = vec![Vec::with_capacity(steps); x.len()];
    for k in 1..=steps {
        let alpha = k as f64 / steps as f64;
        let point = baseline.zip_map(&delta, |b, d| b + alpha * d)?;
        let g = gradient_objective(model, &point, objective, Guided::None)?;
        for (acc, &v) in per_feature.iter_mut().zip(g.data()) {
            acc.push(v);
        }
    }
    let data = per_feature
        .into_iter()
        .zip(delta.data())
        .map(|(gs, d)| neumaier_sum(gs) / steps as f64 * d.conj())
        .collect();
    CTensor::new(x.shape().to_vec(), data)
}

/// `∂f/∂z̄` of `re(out[output_index])` at `x`.
pub fn explain_gradient(model: &Model, x: &CTensor, output_index: usize) -> Result<CTensor> {
    gradient_objective(model, x, &Objective::re(output_index), Guided::None)
}

/// `∂f/∂z̄ ⊙ x`.
pub fn explain_grad_times_input(model: &Model, x: &CTensor, output_index: usize) -> Result<CTensor> {
    grad_times_input_objective(model, x, &Objective::re(output_index), InputFactor::Plain)
}

/// Riemann mean of `∂f/∂z̄` along the straight line from `baseline` to `x`
/// (right endpoints `k/steps`), times `conj(x - baseline)`.
///
/// With this convention `Σ 2·re(φ)` approximates `f(x) - f(baseline)`.
pub fn explain_integrated_gradients(
    model: &Model,
    x: &CTensor,
    baseline: &CTensor,
    steps: usize,
    output_index: usize,
) -> Result<CTensor> {
    integrated_gradients_objective(model, x, baseline, steps, &Objective::re(output_index))
}

/// Guided backpropagation with zReLU (`Guided::Z`) or CReLU (`Guided::C`)
/// rectification at every activation layer.
pub fn explain_guided(model: &Model, x: &CTensor, output_index: usize, variant: Guided) -> Result<CTensor> {
    if variant == Guided::None {
        return Err(Error::InvalidArgument("guided variant must be z or c".into()));
    }
    gradient_objective(model, x, &Objective::re(output_index), variant)
}
