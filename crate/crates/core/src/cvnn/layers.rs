//! Layer kinds and their forward maps.

use crate::complex::{magnitude, CTensor, WirtingerPair, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// Elementwise layers. Each maps one complex value to one complex value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pointwise {
    /// `max(0, re z) + i·max(0, im z)`
    CRelu,
    /// `z` inside the open first quadrant, `0` elsewhere.
    ZRelu,
    /// `re z`
    RealPart,
    /// `|z|`
    Magnitude,
    /// `|z|²`
    SquaredMagnitude,
}

impl Pointwise {
    pub const ALL: [Pointwise; 5] = [
        Pointwise::CRelu,
        Pointwise::ZRelu,
        Pointwise::RealPart,
        Pointwise::Magnitude,
        Pointwise::SquaredMagnitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pointwise::CRelu => "crelu",
            Pointwise::ZRelu => "zrelu",
            Pointwise::RealPart => "real_part",
            Pointwise::Magnitude => "magnitude",
            Pointwise::SquaredMagnitude => "squared_magnitude",
        }
    }

    #[inline]
    pub fn eval(self, z: C64) -> C64 {
        match self {
            Pointwise::CRelu => crelu(z),
            Pointwise::ZRelu => zrelu(z),
            Pointwise::RealPart => C64::new(z.re, 0.0),
            Pointwise::Magnitude => C64::new(magnitude(z), 0.0),
            Pointwise::SquaredMagnitude => C64::new(z.norm_sqr(), 0.0),
        }
    }

    /// Wirtinger derivatives `(∂g/∂z, ∂g/∂z̄)` at `z`. Kinks take derivative 0.
    #[inline]
    pub fn wirtinger(self, z: C64) -> (C64, C64) {
        match self {
            Pointwise::CRelu => {
                let hr = if z.re > 0.0 { 1.0 } else { 0.0 };
                let hi = if z.im > 0.0 { 1.0 } else { 0.0 };
                (C64::new(0.5 * (hr + hi), 0.0), C64::new(0.5 * (hr - hi), 0.0))
            }
            Pointwise::ZRelu => {
                if in_open_first_quadrant(z) {
                    (ONE, ZERO)
                } else {
                    (ZERO, ZERO)
                }
            }
            Pointwise::RealPart => (C64::new(0.5, 0.0), C64::new(0.5, 0.0)),
            Pointwise::Magnitude => {
                let r = magnitude(z);
                if r == 0.0 {
                    (ZERO, ZERO)
                } else {
                    (z.conj() / (2.0 * r), z / (2.0 * r))
                }
            }
            Pointwise::SquaredMagnitude => (z.conj(), z),
        }
    }

    /// True when the output is always real.
    pub fn real_valued(self) -> bool {
        matches!(
            self,
            Pointwise::RealPart | Pointwise::Magnitude | Pointwise::SquaredMagnitude
        )
    }

    pub fn is_relu(self) -> bool {
        matches!(self, Pointwise::CRelu | Pointwise::ZRelu)
    }
}

#[inline]
fn in_open_first_quadrant(z: C64) -> bool {
    z.re > 0.0 && z.im > 0.0
}

/// Projection onto the closed first quadrant.
#[inline]
pub fn crelu(z: C64) -> C64 {
    C64::new(z.re.max(0.0), z.im.max(0.0))
}

/// Keeps `z` only when both parts are strictly positive.
#[inline]
pub fn zrelu(z: C64) -> C64 {
    if in_open_first_quadrant(z) {
        z
    } else {
        ZERO
    }
}

/// Fully connected layer `y = W x + b` over a rank-1 input.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: CTensor,
    /// `[out]`
    pub bias: CTensor,
}

impl Linear {
    pub fn new(weight: CTensor, bias: CTensor) -> Result<Self> {
        let l = Self { weight, bias };
        l.validate()?;
        Ok(l)
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape().get(1).copied().unwrap_or(0)
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.weight.shape().len() != 2 {
            return Err(Error::Validation(format!(
                "linear weight must be [out, in], got {:?}",
                self.weight.shape()
            )));
        }
        if self.bias.shape() != [self.out_features()] {
            return Err(Error::Validation(format!(
                "linear bias must be [{}], got {:?}",
                self.out_features(),
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        if input != [self.in_features()] {
            return Err(format!(
                "expected input [{}], got {input:?}",
                self.in_features()
            ));
        }
        Ok(vec![self.out_features()])
    }

    pub fn forward(&self, x: &CTensor) -> CTensor {
        let (n_out, n_in) = (self.out_features(), self.in_features());
        let w = self.weight.data();
        let xs = x.data();
        let out = (0..n_out)
            .map(|k| {
                let row = &w[k * n_in..(k + 1) * n_in];
                row.iter().zip(xs).fold(self.bias.data()[k], |acc, (a, b)| acc + a * b)
            })
            .collect();
        CTensor::from_parts(vec![n_out], out)
    }

    /// Pulls a pair back through `W`: `d_in = Wᵀ d_out`, `d̄_in = Wᴴ d̄_out`.
    pub fn pull_back(&self, upstream: &WirtingerPair) -> WirtingerPair {
        let (n_out, n_in) = (self.out_features(), self.in_features());
        let w = self.weight.data();
        let (du, dbu) = (upstream.d_z.data(), upstream.d_zbar.data());
        let mut d = vec![ZERO; n_in];
        let mut db = vec![ZERO; n_in];
        for k in 0..n_out {
            let row = &w[k * n_in..(k + 1) * n_in];
            for j in 0..n_in {
                d[j] += row[j] * du[k];
                db[j] += row[j].conj() * dbu[k];
            }
        }
        WirtingerPair {
            d_z: CTensor::from_parts(vec![n_in], d),
            d_zbar: CTensor::from_parts(vec![n_in], db),
        }
    }

    /// `(∂L/∂W̄, ∂L/∂b̄)` given the layer input and `∂L/∂ȳ`.
    pub fn param_grads(&self, x: &CTensor, dbar_out: &CTensor) -> (CTensor, CTensor) {
        let (n_out, n_in) = (self.out_features(), self.in_features());
        let xs = x.data();
        let g = dbar_out.data();
        let mut gw = Vec::with_capacity(n_out * n_in);
        for k in 0..n_out {
            gw.extend(xs.iter().map(|xj| g[k] * xj.conj()));
        }
        (
            CTensor::from_parts(vec![n_out, n_in], gw),
            CTensor::from_parts(vec![n_out], g.to_vec()),
        )
    }
}

/// 2-D convolution over `[channels, height, width]` inputs with zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kh, kw]`
    pub kernel: CTensor,
    /// `[out_channels]`
    pub bias: CTensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(kernel: CTensor, bias: CTensor, stride: usize, padding: usize) -> Result<Self> {
        let c = Self {
            kernel,
            bias,
            stride,
            padding,
        };
        c.validate()?;
        Ok(c)
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.kernel.shape().len() != 4 {
            return Err(Error::Validation(format!(
                "conv2d kernel must be [out_c, in_c, kh, kw], got {:?}",
                self.kernel.shape()
            )));
        }
        if self.stride == 0 {
            return Err(Error::Validation("conv2d stride must be positive".into()));
        }
        let oc = self.kernel.shape()[0];
        if self.bias.shape() != [oc] {
            return Err(Error::Validation(format!(
                "conv2d bias must be [{oc}], got {:?}",
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let (oc, ic, kh, kw) = self.dims();
        if input.len() != 3 || input[0] != ic {
            return Err(format!("expected input [{ic}, h, w], got {input:?}"));
        }
        let (h, w) = (input[1] + 2 * self.padding, input[2] + 2 * self.padding);
        if h < kh || w < kw {
            return Err(format!(
                "kernel {kh}x{kw} larger than padded input {h}x{w}"
            ));
        }
        Ok(vec![oc, (h - kh) / self.stride + 1, (w - kw) / self.stride + 1])
    }

    /// Calls `f(out_flat, in_flat, kernel_flat)` for every input-output connection.
    pub(crate) fn connections(&self, input: &[usize], mut f: impl FnMut(usize, usize, usize)) {
        let (oc, ic, kh, kw) = self.dims();
        let (h, w) = (input[1], input[2]);
        let (p, s) = (self.padding as isize, self.stride);
        let out_h = (h + 2 * self.padding - kh) / s + 1;
        let out_w = (w + 2 * self.padding - kw) / s + 1;
        for o in 0..oc {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let out_idx = (o * out_h + oy) * out_w + ox;
                    for c in 0..ic {
                        for ky in 0..kh {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * s + kx) as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let in_idx = (c * h + iy as usize) * w + ix as usize;
                                let k_idx = ((o * ic + c) * kh + ky) * kw + kx;
                                f(out_idx, in_idx, k_idx);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &CTensor) -> CTensor {
        let shape = self
            .output_shape(x.shape())
            .expect("conv2d input validated by caller");
        let plane = shape[1] * shape[2];
        let mut out: Vec<C64> = (0..shape.iter().product::<usize>())
            .map(|i| self.bias.data()[i / plane])
            .collect();
        let (k, xs) = (self.kernel.data(), x.data());
        self.connections(x.shape(), |o, i, w| out[o] += k[w] * xs[i]);
        CTensor::from_parts(shape, out)
    }

    pub fn pull_back(&self, input_shape: &[usize], upstream: &WirtingerPair) -> WirtingerPair {
        let n: usize = input_shape.iter().product();
        let mut d = vec![ZERO; n];
        let mut db = vec![ZERO; n];
        let k = self.kernel.data();
        let (du, dbu) = (upstream.d_z.data(), upstream.d_zbar.data());
        self.connections(input_shape, |o, i, w| {
            d[i] += k[w] * du[o];
            db[i] += k[w].conj() * dbu[o];
        });
        WirtingerPair {
            d_z: CTensor::from_parts(input_shape.to_vec(), d),
            d_zbar: CTensor::from_parts(input_shape.to_vec(), db),
        }
    }

    pub fn param_grads(&self, x: &CTensor, dbar_out: &CTensor) -> (CTensor, CTensor) {
        let mut gk = vec![ZERO; self.kernel.len()];
        let (xs, g) = (x.data(), dbar_out.data());
        self.connections(x.shape(), |o, i, w| gk[w] += g[o] * xs[i].conj());
        let oc = self.kernel.shape()[0];
        let plane = dbar_out.len() / oc;
        let gb = (0..oc)
            .map(|c| g[c * plane..(c + 1) * plane].iter().sum())
            .collect();
        (
            CTensor::from_parts(self.kernel.shape().to_vec(), gk),
            CTensor::from_parts(vec![oc], gb),
        )
    }
}

/// Magnitude max-pooling over `[channels, height, width]` with full windows only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool {
    pub window: (usize, usize),
    pub stride: usize,
}

impl MaxPool {
    pub fn new(window: (usize, usize), stride: usize) -> Result<Self> {
        let p = Self { window, stride };
        p.validate()?;
        Ok(p)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.window.0 == 0 || self.window.1 == 0 || self.stride == 0 {
            return Err(Error::Validation(
                "maxpool window and stride must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        self.window.0 * self.window.1
    }

    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let (wh, ww) = self.window;
        if input.len() != 3 {
            return Err(format!("expected input [c, h, w], got {input:?}"));
        }
        if input[1] < wh || input[2] < ww {
            return Err(format!("window {wh}x{ww} larger than input {input:?}"));
        }
        Ok(vec![
            input[0],
            (input[1] - wh) / self.stride + 1,
            (input[2] - ww) / self.stride + 1,
        ])
    }

    /// Flat input indices of every window, in output order. Within a window
    /// indices are increasing.
    pub fn windows(&self, input: &[usize]) -> Vec<Vec<usize>> {
        let out = self
            .output_shape(input)
            .expect("maxpool input validated by caller");
        let (h, w) = (input[1], input[2]);
        let (wh, ww) = self.window;
        let mut all = Vec::with_capacity(out.iter().product());
        for c in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    let mut win = Vec::with_capacity(wh * ww);
                    for ky in 0..wh {
                        for kx in 0..ww {
                            win.push((c * h + oy * self.stride + ky) * w + ox * self.stride + kx);
                        }
                    }
                    all.push(win);
                }
            }
        }
        all
    }

    pub fn forward(&self, x: &CTensor) -> CTensor {
        let shape = self
            .output_shape(x.shape())
            .expect("maxpool input validated by caller");
        let xs = x.data();
        let out = self
            .windows(x.shape())
            .iter()
            .map(|win| xs[win[argmax_magnitude(win.iter().map(|&i| xs[i]))]])
            .collect();
        CTensor::from_parts(shape, out)
    }
}

/// Position of the element with the largest magnitude; the first one wins ties.
///
/// Panics on an empty iterator.
pub fn argmax_magnitude(values: impl IntoIterator<Item = C64>) -> usize {
    let mut best = None::<(usize, f64)>;
    for (k, z) in values.into_iter().enumerate() {
        let m = magnitude(z);
        match best {
            Some((_, bm)) if m <= bm => {}
            _ => best = Some((k, m)),
        }
    }
    best.expect("argmax of an empty window").0
}

/// Complex max-pooling of one window: the element of maximal magnitude,
/// lowest index on ties.
pub fn cmaxpool_window(vals: &[C64]) -> Result<C64> {
    if vals.is_empty() {
        return Err(Error::InvalidArgument("empty max-pool window".into()));
    }
    Ok(vals[argmax_magnitude(vals.iter().copied())])
}

/// A network layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Conv2d(Conv2d),
    Pointwise(Pointwise),
    MaxPool(MaxPool),
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Conv2d(_) => "conv2d",
            Layer::Pointwise(p) => p.name(),
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten => "flatten",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            Layer::Linear(l) => l.output_shape(input),
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::MaxPool(p) => p.output_shape(input),
            Layer::Pointwise(_) => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Evaluates the layer on an input whose shape has already been checked.
    pub(crate) fn apply(&self, x: &CTensor) -> CTensor {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Conv2d(c) => c.forward(x),
            Layer::Pointwise(p) => x.map(|z| p.eval(z)),
            Layer::MaxPool(m) => m.forward(x),
            Layer::Flatten => CTensor::from_parts(vec![x.len()], x.data().to_vec()),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Linear(_) | Layer::Conv2d(_))
    }

    pub(crate) fn params(&self) -> Vec<&CTensor> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(c) => vec![&c.kernel, &c.bias],
            _ => vec![],
        }
    }
}
