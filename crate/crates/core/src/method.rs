//! Explanation method selection and the scalar objective being explained.

use crate::complex::{CTensor, WirtingerPair, C64};
use crate::cvnn::Model;
use crate::deepcshap::{explain_deepcshap_with, DeepCshapConfig};
use crate::error::{Error, Result};
use crate::explain::{gradient_objective, grad_times_input_objective, integrated_gradients_objective, InputFactor};
use crate::wirtinger::{Guided, OutputTarget};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "deepcshap")]
    DeepCshap,
    #[serde(rename = "grad")]
    Gradient,
    #[serde(rename = "gradxinput")]
    GradTimesInput,
    #[serde(rename = "intgrad")]
    IntegratedGradients,
    GuidedZ,
    GuidedC,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DeepCshap,
        Method::Gradient,
        Method::GradTimesInput,
        Method::IntegratedGradients,
        Method::GuidedZ,
        Method::GuidedC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DeepCshap => "deepcshap",
            Method::Gradient => "grad",
            Method::GradTimesInput => "gradxinput",
            Method::IntegratedGradients => "intgrad",
            Method::GuidedZ => "guided-z",
            Method::GuidedC => "guided-c",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!("unknown method '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// The scalar being explained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    Output(OutputTarget),
    /// `re(out[plus]) - re(out[minus])`, e.g. a logit difference
    Difference { plus: usize, minus: usize },
}

impl Objective {
    pub fn re(index: usize) -> Self {
        Objective::Output(OutputTarget::re(index))
    }

    pub fn check(&self, model: &Model) -> Result<()> {
        match *self {
            Objective::Output(t) => t.check(model),
            Objective::Difference { plus, minus } => {
                OutputTarget::re(plus).check(model)?;
                OutputTarget::re(minus).check(model)
            }
        }
    }

    /// Whether the objective is a real scalar.
    pub fn is_real(&self) -> bool {
        !matches!(self, Objective::Output(OutputTarget { part: crate::wirtinger::Part::Full, .. }))
    }

    pub fn value(&self, output: &CTensor) -> C64 {
        match *self {
            Objective::Output(t) => t.read(output),
            Objective::Difference { plus, minus } => C64::new(output.data()[plus].re - output.data()[minus].re, 0.0),
        }
    }

    /// `(∂t/∂y, ∂t/∂ȳ)` over the whole output tensor.
    pub fn seed_pair(&self, model: &Model) -> Result<WirtingerPair> {
        match *self {
            Objective::Output(t) => t.seed_pair(model),
            Objective::Difference { plus, minus } => {
                let a = OutputTarget::re(plus).seed_pair(model)?;
                let b = OutputTarget::re(minus).seed_pair(model)?;
                Ok(WirtingerPair {
                    d_z: a.d_z.sub(&b.d_z)?,
                    d_zbar: a.d_zbar.sub(&b.d_zbar)?,
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplainConfig {
    /// integration steps for integrated gradients
    pub steps: usize,
    /// integrated-gradients baseline; zeros when absent
    pub baseline: Option<CTensor>,
    /// DeepCSHAP references; a single all-zero reference when empty
    pub references: Vec<CTensor>,
    pub input_factor: InputFactor,
    pub deepcshap: DeepCshapConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            steps: 5,
            baseline: None,
            references: Vec::new(),
            input_factor: InputFactor::Plain,
            deepcshap: DeepCshapConfig::default(),
        }
    }
}

/// Complex attribution map; `phi0` is set by methods with a baseline output.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub method: Method,
    pub phi: CTensor,
    pub phi0: Option<C64>,
}

pub fn explain(
    model: &Model,
    x: &CTensor,
    objective: &Objective,
    method: Method,
    config: &ExplainConfig,
) -> Result<Explanation> {
    objective.check(model)?;
    let zeros = || CTensor::zeros(x.shape());
    let (phi, phi0) = match method {
        Method::DeepCshap => {
            let refs = if config.references.is_empty() {
                vec![zeros()]
            } else {
                config.references.clone()
            };
            let map = explain_deepcshap_with(model, x, &refs, objective, &config.deepcshap)?;
            (map.phi, Some(map.phi0))
        }
        Method::Gradient => (gradient_objective(model, x, objective, Guided::None)?, None),
        Method::GradTimesInput => (grad_times_input_objective(model, x, objective, config.input_factor)?, None),
        Method::IntegratedGradients => {
            let base = config.baseline.clone().unwrap_or_else(zeros);
            (integrated_gradients_objective(model, x, &base, config.steps, objective)?, None)
        }
        Method::GuidedZ => (gradient_objective(model, x, objective, Guided::Z)?, None),
        Method::GuidedC => (gradient_objective(model, x, objective, Guided::C)?, None),
    };
    Ok(Explanation { method, phi, phi0 })
}
