//! Shapley-style contributions propagated through the network with a
//! complex chain rule on multipliers.
//!
//! For a layer `y = g(x)` with reference `r` and `Δ = x - r`, the partial
//! contributions of feature `j` are
//!
//! ```text
//! φ_R(j) = g(re x_j + i·im r_j) - g(r)
//! φ_I(j) = g(x) - g(re x_j + i·im r_j)
//! ```
//!
//! (summed over coalitions for multi-input layers). Dividing by `re Δ_j` and
//! `im Δ_j` gives the partial multipliers `m^R`, `m^I`, combined as
//! `m = ½(m^R - i·m^I)` and `m̄ = ½(m^R + i·m^I)`. These pull back exactly
//! like a Wirtinger pair, so `Δy = Σ_j m_j·Δx_j + m̄_j·conj(Δx_j)` holds per
//! layer and therefore for the whole network. At the input,
//!
//! ```text
//! φ_j = (m_j + m̄_j)·re Δ_j + (m_j - m̄_j)·i·im Δ_j
//! ```

use crate::complex::{neumaier_sum, CTensor, WirtingerPair, C64, ZERO};
use crate::cvnn::{argmax_magnitude, forward, Layer, Linear, Model, Pointwise};
use crate::error::{Error, Result};
use crate::maxcshap::{window_partials, MaxPoolShapConfig, MAX_WINDOW};
use crate::method::Objective;
use crate::wirtinger::{pull_back_diag, pull_back_linear, pull_back_windows, OutputTarget};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepCshapConfig {
    /// below this `|re Δ|` or `|im Δ|` the multiplier falls back to the
    /// Wirtinger derivative
    pub threshold: f64,
    pub maxpool: MaxPoolShapConfig,
}

impl Default for DeepCshapConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            maxpool: MaxPoolShapConfig::default(),
        }
    }
}

/// `φ_R` and `φ_I` of every feature.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialContrib {
    pub phi_r: CTensor,
    pub phi_i: CTensor,
}

impl PartialContrib {
    pub fn total(&self) -> CTensor {
        self.phi_r.add(&self.phi_i).expect("partials share a shape")
    }
}

/// Multipliers `(m_x, m_x̄)` of one scalar with respect to every feature.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierState {
    pub m_x: CTensor,
    pub m_xbar: CTensor,
}

impl MultiplierState {
    /// `max |m_x̄ - conj(m_x)|`, zero for a real explained scalar.
    pub fn conjugacy_error(&self) -> f64 {
        self.m_xbar.max_abs_diff(&self.m_x.conj()).expect("multipliers share a shape")
    }

    fn from_pair(pair: WirtingerPair) -> Self {
        Self {
            m_x: pair.d_z,
            m_xbar: pair.d_zbar,
        }
    }
}

/// Dense multipliers of a whole layer: `m[o, i]` and `m_bar[o, i]` relate
/// output element `o` to input element `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMultipliers {
    pub m: CTensor,
    pub m_bar: CTensor,
    pub input_shape: Vec<usize>,
}

/// Attribution of one scalar to the input features.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionMap {
    pub phi: CTensor,
    /// value of the explained scalar at the reference
    pub phi0: C64,
    pub partial: PartialContrib,
    /// number of multipliers that used the derivative fallback
    pub fallbacks: usize,
}

impl ContributionMap {
    /// `Σφ + φ₀`, which equals the explained scalar at `x`.
    pub fn total(&self) -> C64 {
        neumaier_sum(self.phi.data().iter().copied()) + self.phi0
    }
}

/// Partials of a linear layer, shaped `[out, in]`: `φ_R = W·re Δ`,
/// `φ_I = i·W·im Δ`. The bias cancels.
pub fn layer_partials_linear(layer: &Linear, x: &CTensor, reference: &CTensor) -> Result<PartialContrib> {
    x.check_same_shape(reference)?;
    if x.len() != layer.in_features() {
        return Err(Error::ShapeMismatch {
            expected: vec![layer.in_features()],
            actual: x.shape().to_vec(),
        });
    }
    let delta = x.sub(reference)?;
    let (out, inp) = (layer.out_features(), layer.in_features());
    let mut phi_r = Vec::with_capacity(out * inp);
    let mut phi_i = Vec::with_capacity(out * inp);
    for row in layer.weight.data().chunks(inp) {
        for (w, d) in row.iter().zip(delta.data()) {
            phi_r.push(w * d.re);
            phi_i.push(w * C64::new(0.0, d.im));
        }
    }
    Ok(PartialContrib {
        phi_r: CTensor::new(vec![out, inp], phi_r)?,
        phi_i: CTensor::new(vec![out, inp], phi_i)?,
    })
}

/// Partials of an elementwise map.
pub fn layer_partials_pointwise(g: Pointwise, x: &CTensor, reference: &CTensor) -> Result<PartialContrib> {
    let phi_r = x.zip_map(reference, |a, r| g.eval(C64::new(a.re, r.im)) - g.eval(r))?;
    let phi_i = x.zip_map(reference, |a, r| g.eval(a) - g.eval(C64::new(a.re, r.im)))?;
    Ok(PartialContrib { phi_r, phi_i })
}

/// Multiplier pair of one feature. `d_re`/`d_im` give `∂g/∂re`, `∂g/∂im`
/// for the fallback. Returns whether a fallback was used.
fn multiplier_pair(
    phi_r: C64,
    phi_i: C64,
    delta: C64,
    threshold: f64,
    d_re: impl FnOnce() -> C64,
    d_im: impl FnOnce() -> C64,
) -> ((C64, C64), bool) {
    let mut fell_back = false;
    let m_r = if delta.re.abs() < threshold {
        fell_back = true;
        d_re()
    } else {
        phi_r / delta.re
    };
    let m_i = if delta.im.abs() < threshold {
        fell_back = true;
        d_im()
    } else {
        phi_i / delta.im
    };
    let i = C64::new(0.0, 1.0);
    ((0.5 * (m_r - i * m_i), 0.5 * (m_r + i * m_i)), fell_back)
}

/// Multipliers of an elementwise layer from its partials. `derivative(k, z)`
/// returns the Wirtinger pair `(∂y_k/∂x_k, ∂y_k/∂x̄_k)` at `z`, used when a
/// component of `Δ` is below `threshold`: the real-part fallback is taken at
/// `re x + i·im r`, the imaginary one at `x`.
pub fn partial_multipliers(
    pc: &PartialContrib,
    x: &CTensor,
    reference: &CTensor,
    threshold: f64,
    derivative: impl Fn(usize, C64) -> (C64, C64),
) -> Result<(MultiplierState, usize)> {
    x.check_same_shape(reference)?;
    pc.phi_r.check_same_shape(x)?;
    pc.phi_i.check_same_shape(x)?;
    let mut m = Vec::with_capacity(x.len());
    let mut mb = Vec::with_capacity(x.len());
    let mut fallbacks = 0;
    for k in 0..x.len() {
        let (a, r) = (x.data()[k], reference.data()[k]);
        let ((mk, mbk), fb) = multiplier_pair(
            pc.phi_r.data()[k],
            pc.phi_i.data()[k],
            a - r,
            threshold,
            || {
                let (da, db) = derivative(k, C64::new(a.re, r.im));
                da + db
            },
            || {
                let (da, db) = derivative(k, a);
                C64::new(0.0, 1.0) * (da - db)
            },
        );
        m.push(mk);
        mb.push(mbk);
        fallbacks += fb as usize;
    }
    Ok((
        MultiplierState {
            m_x: CTensor::new(x.shape().to_vec(), m)?,
            m_xbar: CTensor::new(x.shape().to_vec(), mb)?,
        },
        fallbacks,
    ))
}

/// Composes the multipliers of `f` with respect to a layer's output with
/// the layer's own multipliers, giving those of `f∘g` with respect to the
/// layer's input:
///
/// ```text
/// m_y^k = Σ_j m_g[j,k]·m_x^j + conj(m̄_g[j,k])·m_x̄^j
/// m_ȳ^k = Σ_j m̄_g[j,k]·m_x^j + conj(m_g[j,k])·m_x̄^j
/// ```
pub fn chain_step(upstream: &MultiplierState, layer: &LayerMultipliers) -> Result<MultiplierState> {
    let (out, inp) = (layer.m.shape()[0], layer.m.shape()[1]);
    if upstream.m_x.len() != out || upstream.m_xbar.len() != out {
        return Err(Error::ShapeMismatch {
            expected: vec![out],
            actual: upstream.m_x.shape().to_vec(),
        });
    }
    let (mu, mbu) = (upstream.m_x.data(), upstream.m_xbar.data());
    let (g, gb) = (layer.m.data(), layer.m_bar.data());
    let mut m = vec![ZERO; inp];
    let mut mb = vec![ZERO; inp];
    for j in 0..out {
        for k in 0..inp {
            let (a, b) = (g[j * inp + k], gb[j * inp + k]);
            m[k] += a * mu[j] + b.conj() * mbu[j];
            mb[k] += b * mu[j] + a.conj() * mbu[j];
        }
    }
    Ok(MultiplierState {
        m_x: CTensor::new(layer.input_shape.clone(), m)?,
        m_xbar: CTensor::new(layer.input_shape.clone(), mb)?,
    })
}

/// Turns input multipliers back into contributions.
pub fn reconstruct_contributions(
    m: &MultiplierState,
    x: &CTensor,
    reference: &CTensor,
    phi0: C64,
) -> Result<ContributionMap> {
    x.check_same_shape(reference)?;
    m.m_x.check_same_shape(x)?;
    m.m_xbar.check_same_shape(x)?;
    let delta = x.sub(reference)?;
    let i = C64::new(0.0, 1.0);
    let mut phi_r = Vec::with_capacity(x.len());
    let mut phi_i = Vec::with_capacity(x.len());
    for ((a, b), d) in m.m_x.data().iter().zip(m.m_xbar.data()).zip(delta.data()) {
        phi_r.push((a + b) * d.re);
        phi_i.push((a - b) * i * d.im);
    }
    let partial = PartialContrib {
        phi_r: CTensor::new(x.shape().to_vec(), phi_r)?,
        phi_i: CTensor::new(x.shape().to_vec(), phi_i)?,
    };
    Ok(ContributionMap {
        phi: partial.total(),
        phi0,
        partial,
        fallbacks: 0,
    })
}

fn unsupported(index: usize, layer: &Layer) -> Error {
    Error::UnsupportedLayer {
        index,
        kind: layer.kind(),
        method: "deepcshap",
    }
}

type WindowCoeffs = Vec<Vec<(C64, C64)>>;

/// Per-window multipliers of a max-pool layer: `coeffs[o][j]`.
fn maxpool_coeffs(
    windows: &[Vec<usize>],
    x: &CTensor,
    reference: &CTensor,
    config: &DeepCshapConfig,
) -> Result<(WindowCoeffs, usize)> {
    let mut fallbacks = 0;
    let mut coeffs = Vec::with_capacity(windows.len());
    for win in windows {
        let xs: Vec<C64> = win.iter().map(|&i| x.data()[i]).collect();
        let rs: Vec<C64> = win.iter().map(|&i| reference.data()[i]).collect();
        let parts = window_partials(&xs, &rs, &config.maxpool)?;
        let best = argmax_magnitude(xs.iter().copied());
        let mut row = Vec::with_capacity(win.len());
        for j in 0..win.len() {
            let slope = if j == best { 1.0 } else { 0.0 };
            let (pair, fb) = multiplier_pair(
                parts.phi_r[j],
                parts.phi_i[j],
                xs[j] - rs[j],
                config.threshold,
                || C64::new(slope, 0.0),
                || C64::new(0.0, slope),
            );
            row.push(pair);
            fallbacks += fb as usize;
        }
        coeffs.push(row);
    }
    Ok((coeffs, fallbacks))
}

fn check_layer_supported(index: usize, layer: &Layer) -> Result<()> {
    match layer {
        Layer::MaxPool(p) if p.window_len() > MAX_WINDOW => Err(unsupported(index, layer)),
        _ => Ok(()),
    }
}

/// Dense multipliers of layer `index` at `(x, reference)`.
pub fn layer_multipliers(
    layer: &Layer,
    x: &CTensor,
    reference: &CTensor,
    config: &DeepCshapConfig,
) -> Result<(LayerMultipliers, usize)> {
    x.check_same_shape(reference)?;
    check_layer_supported(0, layer)?;
    let out_shape = layer.output_shape(x.shape()).map_err(|m| Error::layer(0, layer.kind(), m))?;
    let out: usize = out_shape.iter().product();
    let inp = x.len();
    let mut m = vec![ZERO; out * inp];
    let mut mb = vec![ZERO; out * inp];
    let mut fallbacks = 0;
    match layer {
        Layer::Linear(l) => m.copy_from_slice(l.weight.data()),
        Layer::Conv2d(c) => c.connections(x.shape(), |o, i, k| m[o * inp + i] += c.kernel.data()[k]),
        Layer::Flatten => (0..inp).for_each(|k| m[k * inp + k] = C64::new(1.0, 0.0)),
        Layer::Pointwise(g) => {
            let pc = layer_partials_pointwise(*g, x, reference)?;
            let (state, fb) = partial_multipliers(&pc, x, reference, config.threshold, |_, z| g.wirtinger(z))?;
            for k in 0..inp {
                m[k * inp + k] = state.m_x.data()[k];
                mb[k * inp + k] = state.m_xbar.data()[k];
            }
            fallbacks = fb;
        }
        Layer::MaxPool(p) => {
            let windows = p.windows(x.shape());
            let (coeffs, fb) = maxpool_coeffs(&windows, x, reference, config)?;
            for (o, (win, row)) in windows.iter().zip(&coeffs).enumerate() {
                for (&i, &(a, b)) in win.iter().zip(row) {
                    m[o * inp + i] = a;
                    mb[o * inp + i] = b;
                }
            }
            fallbacks = fb;
        }
    }
    Ok((
        LayerMultipliers {
            m: CTensor::new(vec![out, inp], m)?,
            m_bar: CTensor::new(vec![out, inp], mb)?,
            input_shape: x.shape().to_vec(),
        },
        fallbacks,
    ))
}

/// Multipliers of the objective with respect to every activation for one
/// reference; `states[k]` belongs to activation `k` (0 is the input).
pub fn multiplier_chain(
    model: &Model,
    x: &CTensor,
    reference: &CTensor,
    objective: &Objective,
    config: &DeepCshapConfig,
) -> Result<(Vec<MultiplierState>, usize)> {
    objective.check(model)?;
    for (k, layer) in model.layers().iter().enumerate() {
        check_layer_supported(k, layer)?;
    }
    let tx = forward(model, x)?;
    let tr = forward(model, reference)?;
    let mut pairs = vec![objective.seed_pair(model)?];
    let mut fallbacks = 0;
    for (k, layer) in model.layers().iter().enumerate().rev() {
        let upstream = pairs.last().unwrap();
        let (xi, ri) = (&tx.activations()[k], &tr.activations()[k]);
        let next = match layer {
            Layer::Pointwise(g) => {
                let pc = layer_partials_pointwise(*g, xi, ri)?;
                let (state, fb) = partial_multipliers(&pc, xi, ri, config.threshold, |_, z| g.wirtinger(z))?;
                fallbacks += fb;
                pull_back_diag(upstream, state.m_x.data(), state.m_xbar.data())
            }
            Layer::MaxPool(p) => {
                let windows = p.windows(xi.shape());
                let (coeffs, fb) = maxpool_coeffs(&windows, xi, ri, config)?;
                fallbacks += fb;
                pull_back_windows(upstream, xi.shape(), &windows, &coeffs)
            }
            _ => pull_back_linear(layer, xi.shape(), upstream),
        };
        pairs.push(next);
    }
    pairs.reverse();
    Ok((pairs.into_iter().map(MultiplierState::from_pair).collect(), fallbacks))
}

fn explain_one(
    model: &Model,
    x: &CTensor,
    reference: &CTensor,
    objective: &Objective,
    config: &DeepCshapConfig,
) -> Result<ContributionMap> {
    let (mut states, fallbacks) = multiplier_chain(model, x, reference, objective, config)?;
    let phi0 = objective.value(&model.predict(reference)?);
    let input = states.swap_remove(0);
    let mut map = reconstruct_contributions(&input, x, reference, phi0)?;
    map.fallbacks = fallbacks;
    Ok(map)
}

/// Contributions of `objective` averaged over `references`; `φ₀` is the mean
/// objective value at the references.
pub fn explain_deepcshap_with(
    model: &Model,
    x: &CTensor,
    references: &[CTensor],
    objective: &Objective,
    config: &DeepCshapConfig,
) -> Result<ContributionMap> {
    if references.is_empty() {
        return Err(Error::InvalidArgument("at least one reference is required".into()));
    }
    for r in references {
        if r.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape().to_vec(),
                actual: r.shape().to_vec(),
            });
        }
    }
    let maps: Vec<ContributionMap> = references
        .par_iter()
        .map(|r| explain_one(model, x, r, objective, config))
        .collect::<Result<_>>()?;
    if maps.len() == 1 {
        return Ok(maps.into_iter().next().unwrap());
    }
    let count = maps.len() as f64;
    let mean = |get: &dyn Fn(&ContributionMap) -> &CTensor| -> CTensor {
        let data = (0..x.len())
            .map(|k| neumaier_sum(maps.iter().map(|m| get(m).data()[k])) / count)
            .collect();
        CTensor::new(x.shape().to_vec(), data).expect("shape checked")
    };
    let partial = PartialContrib {
        phi_r: mean(&|m| &m.partial.phi_r),
        phi_i: mean(&|m| &m.partial.phi_i),
    };
    Ok(ContributionMap {
        phi: mean(&|m| &m.phi),
        phi0: neumaier_sum(maps.iter().map(|m| m.phi0)) / count,
        partial,
        fallbacks: maps.iter().map(|m| m.fallbacks).sum(),
    })
}

/// Contributions to `re(out[output_index])` with the default configuration.
pub fn explain_deepcshap(
    model: &Model,
    x: &CTensor,
    references: &[CTensor],
    output_index: usize,
) -> Result<ContributionMap> {
    explain_deepcshap_with(
        model,
        x,
        references,
        &Objective::Output(OutputTarget::re(output_index)),
        &DeepCshapConfig::default(),
    )
}
