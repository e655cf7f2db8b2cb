use super::{Conv2d, Layer, Linear, MaxPool, Model, Pointwise};
use crate::complex::{CTensor, C64};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

/// Tensor with independent `N(0, scale²/2)` real and imaginary parts.
pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> CTensor {
    let n: usize = shape.iter().product();
    let s = scale * std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            C64::new(s * a, s * b)
        })
        .collect();
    CTensor::from_parts(shape.to_vec(), data)
}

/// Incrementally assembles a model, initializing weights with complex
/// Gaussians scaled by `1/sqrt(fan_in)`.
pub struct ModelBuilder {
    input_shape: Vec<usize>,
    current: Vec<usize>,
    layers: Vec<Layer>,
    error: Option<Error>,
}

impl ModelBuilder {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            current: input_shape.clone(),
            input_shape,
            layers: Vec::new(),
            error: None,
        }
    }

    pub fn layer(mut self, layer: Layer) -> Self {
        if self.error.is_some() {
            return self;
        }
        match layer.output_shape(&self.current) {
            Ok(s) => {
                self.current = s;
                self.layers.push(layer);
            }
            Err(m) => self.error = Some(Error::layer(self.layers.len(), layer.kind(), m)),
        }
        self
    }

    pub fn linear<R: Rng + ?Sized>(self, out: usize, rng: &mut R) -> Self {
        let fan_in: usize = self.current.iter().product();
        let weight = random_tensor(&[out, fan_in], 1.0 / (fan_in as f64).sqrt(), rng);
        let bias = random_tensor(&[out], 0.1, rng);
        self.layer(Layer::Linear(Linear { weight, bias }))
    }

    pub fn conv2d<R: Rng + ?Sized>(
        self,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let in_channels = self.current.first().copied().unwrap_or(1);
        let fan_in = in_channels * kernel.0 * kernel.1;
        let k = random_tensor(
            &[out_channels, in_channels, kernel.0, kernel.1],
            1.0 / (fan_in as f64).sqrt(),
            rng,
        );
        let bias = random_tensor(&[out_channels], 0.1, rng);
        self.layer(Layer::Conv2d(Conv2d {
            kernel: k,
            bias,
            stride,
            padding,
        }))
    }

    pub fn maxpool(self, window: (usize, usize), stride: usize) -> Self {
        self.layer(Layer::MaxPool(MaxPool { window, stride }))
    }

    pub fn crelu(self) -> Self {
        self.layer(Layer::Pointwise(Pointwise::CRelu))
    }

    pub fn zrelu(self) -> Self {
        self.layer(Layer::Pointwise(Pointwise::ZRelu))
    }

    pub fn real_part(self) -> Self {
        self.layer(Layer::Pointwise(Pointwise::RealPart))
    }

    pub fn magnitude(self) -> Self {
        self.layer(Layer::Pointwise(Pointwise::Magnitude))
    }

    pub fn squared_magnitude(self) -> Self {
        self.layer(Layer::Pointwise(Pointwise::SquaredMagnitude))
    }

    pub fn flatten(self) -> Self {
        self.layer(Layer::Flatten)
    }

    pub fn build(self, name: impl Into<String>) -> Result<Model> {
        if let Some(e) = self.error {
            return Err(e);
        }
        Model::new(name, self.input_shape, self.layers)
    }
}

/// Fixed small architectures used by tests, benches and the shipped toy models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// `[6] → linear(3) → re`
    Linear,
    /// `[6] → linear(8) → crelu → linear(3) → re`
    Mlp,
    /// `[1,6,6] → conv(2, 3x3, pad 1) → crelu → maxpool 2x2 → flatten → linear(3) → re`
    ConvPool,
    /// Four linear layers with mixed activations: `[5] → 6 → crelu → 6 → zrelu → 5 → |·| → 2 → re`
    Deep4,
    /// `[4] → linear(5) → crelu → linear(4) → magnitude → linear(2) → re`
    Mixed3,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Mlp => "mlp_crelu",
            Architecture::ConvPool => "conv_crelu_maxpool",
            Architecture::Deep4 => "deep4",
            Architecture::Mixed3 => "mixed3",
        }
    }
}

pub fn random_model<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Model> {
    let b = match arch {
        Architecture::Linear => ModelBuilder::new(vec![6]).linear(3, rng).real_part(),
        Architecture::Mlp => ModelBuilder::new(vec![6])
            .linear(8, rng)
            .crelu()
            .linear(3, rng)
            .real_part(),
        Architecture::ConvPool => ModelBuilder::new(vec![1, 6, 6])
            .conv2d(2, (3, 3), 1, 1, rng)
            .crelu()
            .maxpool((2, 2), 2)
            .flatten()
            .linear(3, rng)
            .real_part(),
        Architecture::Deep4 => ModelBuilder::new(vec![5])
            .linear(6, rng)
            .crelu()
            .linear(6, rng)
            .zrelu()
            .linear(5, rng)
            .magnitude()
            .linear(2, rng)
            .real_part(),
        Architecture::Mixed3 => ModelBuilder::new(vec![4])
            .linear(5, rng)
            .crelu()
            .linear(4, rng)
            .magnitude()
            .linear(2, rng)
            .real_part(),
    };
    b.build(arch.name())
}

/// Architectures of the models shipped under `models/`.
pub const SHIPPED: [Architecture; 3] = [Architecture::Linear, Architecture::Mlp, Architecture::ConvPool];

/// The shipped toy model of `arch`, regenerated from a fixed seed.
pub fn shipped_model(arch: Architecture) -> Result<Model> {
    let seed = match arch {
        Architecture::Linear => 101,
        Architecture::Mlp => 102,
        Architecture::ConvPool => 103,
        Architecture::Deep4 => 104,
        Architecture::Mixed3 => 105,
    };
    random_model(&arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}
