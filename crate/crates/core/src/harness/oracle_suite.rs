//! Randomized cross-checks of the fast algorithms against brute force.

use crate::complex::{CTensor, C64};
use crate::cvnn::{forward, random_model, random_tensor, Architecture, Layer, Model, ModelBuilder, Pointwise};
use crate::deepcshap::{explain_deepcshap_with, multiplier_chain, DeepCshapConfig};
use crate::error::Result;
use crate::maxcshap::{maxpool_partials, maxpool_partials_fast, MaxPoolShapConfig};
use crate::method::Objective;
use crate::oracle::{exact_partial_shap, exact_shap, finite_diff_wirtinger};
use crate::wirtinger::{backward_target, Guided, OutputTarget, Part};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSuiteConfig {
    /// random cases per per-layer check; network checks use fewer
    pub cases: usize,
    pub seed: u64,
}

impl Default for OracleSuiteConfig {
    fn default() -> Self {
        Self { cases: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSuiteReport {
    pub config: OracleSuiteConfig,
    pub checks: Vec<OracleCheck>,
    pub passed: bool,
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    max_error: f64,
    failed: bool,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            max_error: 0.0,
            failed: false,
        }
    }

    fn record(&mut self, error: f64) {
        self.record_with(error, self.tolerance);
    }

    fn record_with(&mut self, error: f64, tolerance: f64) {
        self.cases += 1;
        self.max_error = self.max_error.max(error);
        self.failed |= error.is_nan() || error > tolerance;
    }

    fn finish(self) -> OracleCheck {
        OracleCheck {
            name: self.name.into(),
            cases: self.cases,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: !self.failed && self.cases > 0,
        }
    }
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Random input next to `reference`; some features share the real part, the
/// imaginary part or the whole value with it to exercise the fallbacks.
pub fn near_reference<R: Rng>(reference: &CTensor, rng: &mut R) -> CTensor {
    let data = reference
        .data()
        .iter()
        .map(|&r| {
            let z = C64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            match rng.random_range(0..8) {
                0 => r,
                1 => C64::new(r.re, z.im),
                2 => C64::new(z.re, r.im),
                _ => z,
            }
        })
        .collect();
    CTensor::from_parts(reference.shape().to_vec(), data)
}

fn random_target<R: Rng>(outputs: usize, rng: &mut R) -> OutputTarget {
    let part = [Part::Re, Part::Im, Part::Full][rng.random_range(0..3)];
    OutputTarget {
        index: rng.random_range(0..outputs),
        part,
    }
}

fn oracle_agreement(model: &Model, target: OutputTarget, x: &CTensor, r: &CTensor) -> Result<f64> {
    let map = explain_deepcshap_with(model, x, std::slice::from_ref(r), &Objective::Output(target), &DeepCshapConfig::default())?;
    let f = |z: &[C64]| target.read(&model.predict(&CTensor::from_parts(x.shape().to_vec(), z.to_vec())).unwrap());
    let oracle = exact_shap(f, x.data(), r.data())?;
    Ok(max_diff(map.phi.data(), &oracle.phi).max((map.phi0 - oracle.phi0).norm()))
}

fn check_linear<R: Rng>(cases: usize, rng: &mut R) -> Result<OracleCheck> {
    let mut t = Tally::new("deepcshap_linear_vs_enumeration", 1e-10);
    for _ in 0..cases {
        let n = rng.random_range(1..=8);
        let out = rng.random_range(1..=3);
        let model = ModelBuilder::new(vec![n]).linear(out, rng).build("linear")?;
        let r = random_tensor(&[n], 1.0, rng);
        let x = near_reference(&r, rng);
        t.record(oracle_agreement(&model, random_target(out, rng), &x, &r)?);
    }
    Ok(t.finish())
}

fn check_pointwise<R: Rng>(cases: usize, rng: &mut R) -> Result<OracleCheck> {
    let mut t = Tally::new("deepcshap_pointwise_vs_enumeration", 1e-10);
    for _ in 0..cases {
        let n = rng.random_range(1..=6);
        let g = Pointwise::ALL[rng.random_range(0..Pointwise::ALL.len())];
        let model = Model::new("pointwise", vec![n], vec![Layer::Pointwise(g)])?;
        let r = random_tensor(&[n], 1.0, rng);
        let x = near_reference(&r, rng);
        let target = random_target(n, rng);
        let mut err = oracle_agreement(&model, target, &x, &r)?;
        // the partials of the explained feature against the two-step oracle
        let map = explain_deepcshap_with(&model, &x, std::slice::from_ref(&r), &Objective::Output(target), &DeepCshapConfig::default())?;
        let f = |z: &[C64]| target.read(&model.predict(&CTensor::from_parts(vec![n], z.to_vec())).unwrap());
        for j in 0..n {
            let (pr, pi) = exact_partial_shap(f, x.data(), r.data(), j)?;
            err = err
                .max((map.partial.phi_r.data()[j] - pr).norm())
                .max((map.partial.phi_i.data()[j] - pi).norm());
        }
        t.record(err);
    }
    Ok(t.finish())
}

fn random_window<R: Rng>(n: usize, rng: &mut R) -> (Vec<C64>, Vec<C64>) {
    let y = random_tensor(&[n], 1.0, rng);
    let x = near_reference(&y, rng);
    (x.into_data(), y.into_data())
}

fn check_maxpool<R: Rng>(cases: usize, rng: &mut R) -> Result<OracleCheck> {
    let mut t = Tally::new("deepcshap_maxpool_vs_enumeration", 1e-10);
    for _ in 0..cases {
        let n = rng.random_range(1..=9);
        let model = ModelBuilder::new(vec![1, 1, n]).maxpool((1, n), 1).build("maxpool")?;
        let r = random_tensor(&[1, 1, n], 1.0, rng);
        let x = near_reference(&r, rng);
        t.record(oracle_agreement(&model, random_target(1, rng), &x, &r)?);
    }
    Ok(t.finish())
}

fn check_maxpool_fast<R: Rng>(cases: usize, rng: &mut R) -> Result<OracleCheck> {
    let mut t = Tally::new("maxpool_fast_vs_enumeration", 1e-10);
    let cfg = MaxPoolShapConfig { enum_cap: 9 };
    for _ in 0..cases {
        let (x, y) = random_window(rng.random_range(1..=9), rng);
        let a = maxpool_partials(&x, &y, &cfg)?;
        let b = maxpool_partials_fast(&x, &y)?;
        t.record(max_diff(&a.phi_r, &b.phi_r).max(max_diff(&a.phi_i, &b.phi_i)));
    }
    Ok(t.finish())
}

/// Σφ + φ₀ against the explained value; looser when a fallback fired.
fn check_conservation<R: Rng>(cases: usize, rng: &mut R) -> Result<OracleCheck> {
    let mut t = Tally::new("deepcshap_conservation_deep4", 1e-7);
    for _ in 0..cases {
        let model = random_model(&Architecture::Deep4, rng)?;
        let r = random_tensor(model.input_shape(), 1.0, rng);
        let x = near_reference(&r, rng);
        let obj = Objective::re(rng.random_range(0..model.output_len()));
        let map = explain_deepcshap_with(&model, &x, std::slice::from_ref(&r), &obj, &DeepCshapConfig::default())?;
        let err = (map.total() - obj.value(&model.predict(&x)?)).norm();
        t.record_with(err, if map.fallbacks > 0 { 1e-5 } else { 1e-7 });
    }
    Ok(t.finish())
}

const SMOOTH_NETS: [Architecture; 4] = [Architecture::Linear, Architecture::Mlp, Architecture::ConvPool, Architecture::Mixed3];

fn check_wirtinger<R: Rng>(cases: usize, rng: &mut R) -> Result<(OracleCheck, OracleCheck)> {
    let mut fd = Tally::new("wirtinger_vs_finite_differences", 1e-4);
    let mut conj = Tally::new("wirtinger_real_output_conjugacy", 1e-12);
    for k in 0..cases {
        let model = random_model(&SMOOTH_NETS[k % SMOOTH_NETS.len()], rng)?;
        let x = random_tensor(model.input_shape(), 1.0, rng);
        let target = OutputTarget::re(rng.random_range(0..model.output_len()));
        let state = backward_target(&model, &forward(&model, &x)?, target, Guided::None)?;
        let bp = state.input();
        let num = finite_diff_wirtinger(|z| target.read(&model.predict(z).unwrap()), &x, 1e-5);
        fd.record(bp.d_zbar.sub(&num.d_zbar)?.norm() / bp.d_zbar.norm().max(1e-12));
        conj.record(state.pairs.iter().map(|p| p.conjugacy_error()).fold(0.0, f64::max));
    }
    Ok((fd.finish(), conj.finish()))
}

fn check_multiplier_properties<R: Rng>(cases: usize, rng: &mut R) -> Result<(OracleCheck, OracleCheck)> {
    let mut conj = Tally::new("multipliers_real_output_conjugacy", 1e-12);
    let mut lin = Tally::new("multipliers_linear_equal_wirtinger", 1e-12);
    let cfg = DeepCshapConfig::default();
    for _ in 0..cases {
        let model = random_model(&Architecture::Deep4, rng)?;
        let r = random_tensor(model.input_shape(), 1.0, rng);
        let x = near_reference(&r, rng);
        let obj = Objective::re(0);
        let (states, _) = multiplier_chain(&model, &x, &r, &obj, &cfg)?;
        conj.record(states.iter().map(|s| s.conjugacy_error()).fold(0.0, f64::max));

        let n = rng.random_range(1..=6);
        let linear = ModelBuilder::new(vec![n])
            .linear(rng.random_range(1..=4), rng)
            .linear(2, rng)
            .build("linear")?;
        let r = random_tensor(&[n], 1.0, rng);
        let x = near_reference(&r, rng);
        let target = random_target(2, rng);
        let (states, _) = multiplier_chain(&linear, &x, &r, &Objective::Output(target), &cfg)?;
        let grads = backward_target(&linear, &forward(&linear, &x)?, target, Guided::None)?;
        let w = grads.input();
        lin.record(states[0].m_x.max_abs_diff(&w.d_z)?.max(states[0].m_xbar.max_abs_diff(&w.d_zbar)?));
    }
    Ok((conj.finish(), lin.finish()))
}

/// Runs every check; `cases` per per-layer check, `cases / 10` networks for
/// conservation and multiplier properties and `cases / 20` for gradients
/// (each at least one).
pub fn oracle_suite(config: &OracleSuiteConfig) -> Result<OracleSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.cases.max(1);
    let mut checks = vec![
        check_linear(n, &mut rng)?,
        check_pointwise(n, &mut rng)?,
        check_maxpool(n, &mut rng)?,
        check_maxpool_fast(n, &mut rng)?,
        check_conservation((n / 10).max(1), &mut rng)?,
    ];
    let (fd, conj) = check_wirtinger((n / 20).max(1), &mut rng)?;
    checks.extend([fd, conj]);
    let (conj, lin) = check_multiplier_properties((n / 10).max(1), &mut rng)?;
    checks.extend([conj, lin]);
    let passed = checks.iter().all(|c| c.passed);
    Ok(OracleSuiteReport {
        config: *config,
        checks,
        passed,
    })
}
