//! Reverse-mode propagation of Wirtinger cogradient pairs.
//!
//! For a scalar `f` and a layer `y = g(x)` the pair pulls back as
//!
//! ```text
//! ∂f/∂x  = Σ_k ∂f/∂y_k · ∂y_k/∂x  + ∂f/∂ȳ_k · conj(∂y_k/∂x̄)
//! ∂f/∂x̄  = Σ_k ∂f/∂y_k · ∂y_k/∂x̄  + ∂f/∂ȳ_k · conj(∂y_k/∂x)
//! ```
//!
//! The same contraction drives the multiplier chain in [`crate::deepcshap`],
//! with layer multipliers in place of layer derivatives.

use crate::complex::{CTensor, WirtingerPair, C64, ZERO};
use crate::cvnn::{argmax_magnitude, crelu, zrelu, ForwardTrace, Layer, Model};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rectification applied to the backward signal at activation layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guided {
    #[default]
    None,
    /// zero `∂f/∂z̄` outside the open first quadrant
    Z,
    /// project `∂f/∂z̄` onto the closed first quadrant
    C,
}

/// Which real scalar of a (possibly complex) output element is differentiated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// `re(out[index])`
    #[default]
    Re,
    /// `im(out[index])`
    Im,
    /// `out[index]` itself (complex-valued target)
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OutputTarget {
    pub index: usize,
    pub part: Part,
}

impl OutputTarget {
    pub fn re(index: usize) -> Self {
        Self {
            index,
            part: Part::Re,
        }
    }

    pub fn im(index: usize) -> Self {
        Self {
            index,
            part: Part::Im,
        }
    }

    pub fn full(index: usize) -> Self {
        Self {
            index,
            part: Part::Full,
        }
    }

    /// `(∂t/∂y, ∂t/∂ȳ)` of the selected scalar `t` with respect to the output
    /// element it reads.
    pub fn seed(self) -> (C64, C64) {
        match self.part {
            Part::Re => (C64::new(0.5, 0.0), C64::new(0.5, 0.0)),
            Part::Im => (C64::new(0.0, -0.5), C64::new(0.0, 0.5)),
            Part::Full => (C64::new(1.0, 0.0), ZERO),
        }
    }

    /// Value of the selected scalar, as a complex number.
    pub fn read(self, output: &CTensor) -> C64 {
        let z = output.data()[self.index];
        match self.part {
            Part::Re => C64::new(z.re, 0.0),
            Part::Im => C64::new(z.im, 0.0),
            Part::Full => z,
        }
    }

    pub(crate) fn check(self, model: &Model) -> Result<()> {
        if self.index >= model.output_len() {
            return Err(Error::OutputIndex {
                index: self.index,
                len: model.output_len(),
            });
        }
        Ok(())
    }

    /// Seed pair over the whole output tensor.
    pub fn seed_pair(self, model: &Model) -> Result<WirtingerPair> {
        self.check(model)?;
        let shape = model.output_shape();
        let (a, b) = self.seed();
        let mut d = vec![ZERO; model.output_len()];
        let mut db = vec![ZERO; model.output_len()];
        d[self.index] = a;
        db[self.index] = b;
        Ok(WirtingerPair {
            d_z: CTensor::from_parts(shape.to_vec(), d),
            d_zbar: CTensor::from_parts(shape.to_vec(), db),
        })
    }
}

/// Pairs with respect to every activation; `pairs[k]` belongs to `trace[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardState {
    pub pairs: Vec<WirtingerPair>,
}

impl BackwardState {
    pub fn input(&self) -> &WirtingerPair {
        &self.pairs[0]
    }
}

/// `(∂L/∂W̄, ∂L/∂b̄)` for a layer with parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weight: CTensor,
    pub bias: CTensor,
}

/// Wirtinger pair of `re(out[output_index])` with respect to the input.
pub fn backward(
    model: &Model,
    trace: &ForwardTrace,
    output_index: usize,
    guided: Guided,
) -> Result<WirtingerPair> {
    let state = backward_target(model, trace, OutputTarget::re(output_index), guided)?;
    Ok(state.pairs.into_iter().next().unwrap())
}

pub fn backward_target(
    model: &Model,
    trace: &ForwardTrace,
    target: OutputTarget,
    guided: Guided,
) -> Result<BackwardState> {
    let seed = target.seed_pair(model)?;
    Ok(backward_from_seed(model, trace, seed, guided, false)?.0)
}

/// Pulls an arbitrary output pair back to the input. With `with_params`,
/// also returns `∂L/∂W̄` for every parametrized layer.
pub fn backward_from_seed(
    model: &Model,
    trace: &ForwardTrace,
    seed: WirtingerPair,
    guided: Guided,
    with_params: bool,
) -> Result<(BackwardState, Vec<Option<ParamGrads>>)> {
    trace.check_model(model)?;
    if seed.shape() != model.output_shape() {
        return Err(Error::ShapeMismatch {
            expected: model.output_shape().to_vec(),
            actual: seed.shape().to_vec(),
        });
    }
    let acts = trace.activations();
    let n_layers = model.layers().len();
    let mut pairs = vec![seed];
    let mut params = vec![None; n_layers];
    for (k, layer) in model.layers().iter().enumerate().rev() {
        let upstream = pairs.last().unwrap();
        let input = &acts[k];
        if with_params {
            params[k] = match layer {
                Layer::Linear(l) => {
                    let (weight, bias) = l.param_grads(input, &upstream.d_zbar);
                    Some(ParamGrads { weight, bias })
                }
                Layer::Conv2d(c) => {
                    let (weight, bias) = c.param_grads(input, &upstream.d_zbar);
                    Some(ParamGrads { weight, bias })
                }
                _ => None,
            };
        }
        let mut next = match layer {
            Layer::Pointwise(p) => {
                let (a, b): (Vec<C64>, Vec<C64>) = input.data().iter().map(|&z| p.wirtinger(z)).unzip();
                pull_back_diag(upstream, &a, &b)
            }
            Layer::MaxPool(pool) => {
                let windows = pool.windows(input.shape());
                let xs = input.data();
                let coeffs: Vec<Vec<(C64, C64)>> = windows
                    .iter()
                    .map(|win| {
                        let best = argmax_magnitude(win.iter().map(|&i| xs[i]));
                        (0..win.len())
                            .map(|j| if j == best { (C64::new(1.0, 0.0), ZERO) } else { (ZERO, ZERO) })
                            .collect()
                    })
                    .collect();
                pull_back_windows(upstream, input.shape(), &windows, &coeffs)
            }
            _ => pull_back_linear(layer, input.shape(), upstream),
        };
        if let (Layer::Pointwise(p), true) = (layer, guided != Guided::None) {
            if p.is_relu() {
                next = guide(&next, guided);
            }
        }
        pairs.push(next);
    }
    pairs.reverse();
    Ok((BackwardState { pairs }, params))
}

/// Rectifies `∂f/∂z̄` and mirrors it onto `∂f/∂z` as its conjugate.
fn guide(pair: &WirtingerPair, guided: Guided) -> WirtingerPair {
    let d_zbar = match guided {
        Guided::None => return pair.clone(),
        Guided::Z => pair.d_zbar.map(zrelu),
        Guided::C => pair.d_zbar.map(crelu),
    };
    WirtingerPair {
        d_z: d_zbar.conj(),
        d_zbar,
    }
}

/// Pull-back through layers that are complex-linear in their input
/// (linear, conv, flatten). Panics for other layers.
pub(crate) fn pull_back_linear(
    layer: &Layer,
    input_shape: &[usize],
    upstream: &WirtingerPair,
) -> WirtingerPair {
    match layer {
        Layer::Linear(l) => l.pull_back(upstream),
        Layer::Conv2d(c) => c.pull_back(input_shape, upstream),
        Layer::Flatten => WirtingerPair {
            d_z: CTensor::from_parts(input_shape.to_vec(), upstream.d_z.data().to_vec()),
            d_zbar: CTensor::from_parts(input_shape.to_vec(), upstream.d_zbar.data().to_vec()),
        },
        other => unreachable!("{} is not linear", other.kind()),
    }
}

/// Pull-back through an elementwise map with per-element coefficients
/// `a = ∂y/∂x`, `b = ∂y/∂x̄`.
pub(crate) fn pull_back_diag(upstream: &WirtingerPair, a: &[C64], b: &[C64]) -> WirtingerPair {
    let (du, dbu) = (upstream.d_z.data(), upstream.d_zbar.data());
    let mut d = Vec::with_capacity(a.len());
    let mut db = Vec::with_capacity(a.len());
    for k in 0..a.len() {
        d.push(du[k] * a[k] + dbu[k] * b[k].conj());
        db.push(du[k] * b[k] + dbu[k] * a[k].conj());
    }
    let shape = upstream.shape().to_vec();
    WirtingerPair {
        d_z: CTensor::from_parts(shape.clone(), d),
        d_zbar: CTensor::from_parts(shape, db),
    }
}

/// Pull-back through a window reduction: output `o` reads inputs
/// `windows[o]` with coefficients `coeffs[o][j] = (∂y_o/∂x, ∂y_o/∂x̄)`.
pub(crate) fn pull_back_windows(
    upstream: &WirtingerPair,
    input_shape: &[usize],
    windows: &[Vec<usize>],
    coeffs: &[Vec<(C64, C64)>],
) -> WirtingerPair {
    let n: usize = input_shape.iter().product();
    let (du, dbu) = (upstream.d_z.data(), upstream.d_zbar.data());
    let mut d = vec![ZERO; n];
    let mut db = vec![ZERO; n];
    for (o, (win, cs)) in windows.iter().zip(coeffs).enumerate() {
        for (&i, &(a, b)) in win.iter().zip(cs) {
            d[i] += du[o] * a + dbu[o] * b.conj();
            db[i] += du[o] * b + dbu[o] * a.conj();
        }
    }
    WirtingerPair {
        d_z: CTensor::from_parts(input_shape.to_vec(), d),
        d_zbar: CTensor::from_parts(input_shape.to_vec(), db),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvnn::{forward, random_model, random_tensor, Architecture, ModelBuilder, Pointwise};
    use crate::oracle::finite_diff_wirtinger;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single(p: Pointwise) -> Model {
        Model::new("p", vec![1], vec![Layer::Pointwise(p)]).unwrap()
    }

    #[test]
    fn real_part_readout() {
        let m = single(Pointwise::RealPart);
        let x = CTensor::from_vec(vec![c(0.3, -2.0)]);
        let t = forward(&m, &x).unwrap();
        let p = backward(&m, &t, 0, Guided::None).unwrap();
        assert_eq!(p.d_zbar.data()[0], c(0.5, 0.0));
    }

    #[test]
    fn squared_magnitude_readout() {
        let m = single(Pointwise::SquaredMagnitude);
        let x = CTensor::from_vec(vec![c(3.0, 4.0)]);
        let t = forward(&m, &x).unwrap();
        let p = backward(&m, &t, 0, Guided::None).unwrap();
        assert!((p.d_zbar.data()[0] - c(3.0, 4.0)).norm() < 1e-15);
    }

    #[test]
    fn invalid_index_and_foreign_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&Architecture::Mlp, &mut rng).unwrap();
        let other = random_model(&Architecture::Linear, &mut rng).unwrap();
        let x = random_tensor(m.input_shape(), 1.0, &mut rng);
        let t = forward(&m, &x).unwrap();
        assert!(matches!(backward(&m, &t, 3, Guided::None), Err(Error::OutputIndex { .. })));
        assert!(matches!(backward(&other, &t, 0, Guided::None), Err(Error::TraceMismatch(_))));
    }

    #[test]
    fn matches_finite_differences_on_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for arch in [Architecture::Mixed3, Architecture::ConvPool, Architecture::Deep4] {
            let m = random_model(&arch, &mut rng).unwrap();
            for _ in 0..3 {
                let x = random_tensor(m.input_shape(), 1.0, &mut rng);
                let t = forward(&m, &x).unwrap();
                let bp = backward(&m, &t, 1, Guided::None).unwrap();
                let fd = finite_diff_wirtinger(|z| m.predict(z).unwrap().data()[1].re, &x, 1e-5);
                let rel = bp.d_zbar.sub(&fd.d_zbar).unwrap().norm() / bp.d_zbar.norm().max(1e-12);
                assert!(rel < 1e-4, "{arch:?}: rel err {rel}");
            }
        }
    }

    #[test]
    fn real_outputs_give_conjugate_pairs_at_every_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&Architecture::Deep4, &mut rng).unwrap();
        let x = random_tensor(m.input_shape(), 1.0, &mut rng);
        let t = forward(&m, &x).unwrap();
        let s = backward_target(&m, &t, OutputTarget::re(0), Guided::None).unwrap();
        for p in &s.pairs {
            assert!(p.conjugacy_error() < 1e-12);
        }
    }

    #[test]
    fn all_linear_gradient_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = ModelBuilder::new(vec![4]).linear(3, &mut rng).linear(2, &mut rng).real_part().build("l").unwrap();
        let g = |x: &CTensor| backward(&m, &forward(&m, x).unwrap(), 1, Guided::None).unwrap();
        let a = g(&random_tensor(&[4], 1.0, &mut rng));
        let b = g(&random_tensor(&[4], 1.0, &mut rng));
        assert!(a.d_zbar.max_abs_diff(&b.d_zbar).unwrap() < 1e-12);
    }

    #[test]
    fn guided_none_is_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = ModelBuilder::new(vec![5])
            .linear(6, &mut rng)
            .zrelu()
            .linear(4, &mut rng)
            .crelu()
            .linear(2, &mut rng)
            .real_part()
            .build("g")
            .unwrap();
        for _ in 0..10 {
            let x = random_tensor(&[5], 1.0, &mut rng);
            let t = forward(&m, &x).unwrap();
            let plain = backward_target(&m, &t, OutputTarget::re(0), Guided::None).unwrap();
            let seed = OutputTarget::re(0).seed_pair(&m).unwrap();
            let (again, _) = backward_from_seed(&m, &t, seed, Guided::None, false).unwrap();
            assert_eq!(plain, again);
        }
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&Architecture::ConvPool, &mut rng).unwrap();
        let x = random_tensor(m.input_shape(), 1.0, &mut rng);
        let t = forward(&m, &x).unwrap();
        let seed = OutputTarget::re(2).seed_pair(&m).unwrap();
        let (_, grads) = backward_from_seed(&m, &t, seed, Guided::None, true).unwrap();
        // perturb one conv kernel entry and one linear weight entry
        for (layer_idx, entry) in [(0usize, 5usize), (4, 7)] {
            let g = grads[layer_idx].as_ref().unwrap().weight.data()[entry];
            let f = |delta: C64| {
                let mut mm = m.clone();
                match &mut mm.layers_mut()[layer_idx] {
                    Layer::Conv2d(cv) => {
                        let mut d = cv.kernel.data().to_vec();
                        d[entry] += delta;
                        cv.kernel = CTensor::from_parts(cv.kernel.shape().to_vec(), d);
                    }
                    Layer::Linear(l) => {
                        let mut d = l.weight.data().to_vec();
                        d[entry] += delta;
                        l.weight = CTensor::from_parts(l.weight.shape().to_vec(), d);
                    }
                    _ => unreachable!(),
                }
                mm.predict(&x).unwrap().data()[2].re
            };
            let h = 1e-6;
            let dre = (f(c(h, 0.0)) - f(c(-h, 0.0))) / (2.0 * h);
            let dim = (f(c(0.0, h)) - f(c(0.0, -h))) / (2.0 * h);
            let expect = 0.5 * c(dre, dim);
            assert!((g - expect).norm() < 1e-6 * (1.0 + expect.norm()), "{g} vs {expect}");
        }
    }
}
