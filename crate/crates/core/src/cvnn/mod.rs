//! Complex-valued network representation and forward evaluation.

mod builder;
pub mod format;
mod layers;

pub use builder::{random_model, random_tensor, shipped_model, Architecture, ModelBuilder, SHIPPED};
pub use format::{load_model, model_hash, probe_mismatch, save_model, ModelFile};
pub use layers::{
    argmax_magnitude, cmaxpool_window, crelu, zrelu, Conv2d, Layer, Linear, MaxPool, Pointwise,
};

use crate::complex::CTensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// An ordered stack of layers with a fixed input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    layers: Vec<Layer>,
    /// Activation shapes; `shapes[0]` is the input shape, `shapes[k+1]` the
    /// output shape of layer `k`.
    shapes: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(name: impl Into<String>, input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Validation(format!(
                "input shape must be non-empty with positive dimensions, got {input_shape:?}"
            )));
        }
        let mut shapes = vec![input_shape];
        for (index, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Linear(l) => l.validate(),
                Layer::Conv2d(c) => c.validate(),
                Layer::MaxPool(p) => p.validate(),
                _ => Ok(()),
            }
            .map_err(|e| Error::layer(index, layer.kind(), e.to_string()))?;
            if layer.params().iter().any(|t| !t.is_finite()) {
                return Err(Error::layer(index, layer.kind(), "non-finite weights"));
            }
            let out = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|m| Error::layer(index, layer.kind(), m))?;
            shapes.push(out);
        }
        Ok(Self {
            name: name.into(),
            layers,
            shapes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Number of output elements.
    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn activation_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// True when the output is real by construction: the last value-changing
    /// layer is a real-valued pointwise map.
    pub fn output_is_real(&self) -> bool {
        for layer in self.layers.iter().rev() {
            match layer {
                Layer::Flatten | Layer::MaxPool(_) => continue,
                Layer::Pointwise(p) if p.real_valued() => return true,
                _ => return false,
            }
        }
        false
    }

    /// Output tensor only.
    pub fn predict(&self, x: &CTensor) -> Result<CTensor> {
        self.check_input(x)?;
        let mut act = x.clone();
        for layer in &self.layers {
            act = layer.apply(&act);
        }
        Ok(act)
    }

    pub(crate) fn check_input(&self, x: &CTensor) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape().to_vec(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Every activation of one forward pass: `trace[0]` is the input and
/// `trace[k + 1] = layer_k(trace[k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    activations: Vec<CTensor>,
}

impl ForwardTrace {
    pub fn activations(&self) -> &[CTensor] {
        &self.activations
    }

    pub fn input(&self) -> &CTensor {
        &self.activations[0]
    }

    pub fn output(&self) -> &CTensor {
        self.activations.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    /// Checks that this trace has the activation shapes of `model`.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        if self.activations.len() != model.layers().len() + 1 {
            return Err(Error::TraceMismatch(format!(
                "trace has {} activations, model needs {}",
                self.activations.len(),
                model.layers().len() + 1
            )));
        }
        for (k, (a, s)) in self.activations.iter().zip(model.activation_shapes()).enumerate() {
            if a.shape() != s.as_slice() {
                return Err(Error::TraceMismatch(format!(
                    "activation {k} has shape {:?}, expected {s:?}",
                    a.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Runs the model on `x`, recording every activation.
pub fn forward(model: &Model, x: &CTensor) -> Result<ForwardTrace> {
    if x.shape() != model.input_shape() {
        let (index, kind) = model
            .layers()
            .first()
            .map(|l| (0, l.kind()))
            .unwrap_or((0, "input"));
        return Err(Error::layer(
            index,
            kind,
            format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                model.input_shape()
            ),
        ));
    }
    let mut activations = Vec::with_capacity(model.layers().len() + 1);
    activations.push(x.clone());
    for layer in model.layers() {
        let next = layer.apply(activations.last().unwrap());
        activations.push(next);
    }
    Ok(ForwardTrace { activations })
}
