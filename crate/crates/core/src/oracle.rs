//! Brute-force references: exact Shapley values by subset enumeration, exact
//! partial (real/imaginary) contributions, and finite-difference Wirtinger
//! gradients.
//!
//! Nothing here shares code with the explainers it is used to check, apart
//! from the complex scalar type.

use crate::complex::{neumaier_sum, wirtinger_from_real_parts, CTensor, WirtingerPair, C64};
use crate::error::{Error, Result};

/// Largest feature count accepted by the enumeration oracles.
pub const MAX_FEATURES: usize = 12;

/// Presence state of one feature in a coalition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Presence {
    /// takes the reference value
    Absent,
    /// real part from the input, imaginary part from the reference
    RealOnly,
    /// takes the input value
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetMask {
    presence: Vec<Presence>,
}

impl SubsetMask {
    pub fn new(presence: Vec<Presence>) -> Result<Self> {
        let real_only = presence.iter().filter(|&&p| p == Presence::RealOnly).count();
        if real_only > 1 {
            return Err(Error::InvalidArgument(
                "at most one feature may be present with its real part only".into(),
            ));
        }
        Ok(Self { presence })
    }

    /// Coalition given as a bitset of fully present features.
    pub fn from_bits(n: usize, bits: u32) -> Self {
        Self {
            presence: (0..n)
                .map(|k| if bits >> k & 1 == 1 { Presence::Full } else { Presence::Absent })
                .collect(),
        }
    }

    pub fn presence(&self) -> &[Presence] {
        &self.presence
    }

    /// The masked input `z` built from `x` and `reference`.
    pub fn apply(&self, x: &[C64], reference: &[C64]) -> Vec<C64> {
        self.presence
            .iter()
            .zip(x.iter().zip(reference))
            .map(|(p, (&xv, &rv))| match p {
                Presence::Absent => rv,
                Presence::Full => xv,
                Presence::RealOnly => C64::new(xv.re, rv.im),
            })
            .collect()
    }
}

/// Exact Shapley values and the empty-coalition output.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyValues {
    pub phi: Vec<C64>,
    pub phi0: C64,
}

impl ShapleyValues {
    pub fn total(&self) -> C64 {
        neumaier_sum(self.phi.iter().copied())
    }
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Shapley weight `s!(n-1-s)!/n!` from exact integer factorials.
pub fn shapley_weight(n: usize, s: usize) -> f64 {
    assert!(s < n);
    factorial(s) as f64 * factorial(n - 1 - s) as f64 / factorial(n) as f64
}

fn check_inputs(x: &[C64], reference: &[C64]) -> Result<usize> {
    if x.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![x.len()],
            actual: vec![reference.len()],
        });
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no features".into()));
    }
    if n > MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            count: n,
            limit: MAX_FEATURES,
        });
    }
    Ok(n)
}

fn coalition_values<F: Fn(&[C64]) -> C64>(f: &F, x: &[C64], reference: &[C64]) -> Vec<C64> {
    let n = x.len();
    (0..1u32 << n)
        .map(|bits| f(&SubsetMask::from_bits(n, bits).apply(x, reference)))
        .collect()
}

/// Shapley values of `f` at `x`, absent features taking `reference` values.
pub fn exact_shap<F: Fn(&[C64]) -> C64>(f: F, x: &[C64], reference: &[C64]) -> Result<ShapleyValues> {
    let n = check_inputs(x, reference)?;
    let values = coalition_values(&f, x, reference);
    let weights: Vec<f64> = (0..n).map(|s| shapley_weight(n, s)).collect();
    let phi = (0..n)
        .map(|j| {
            let bit = 1u32 << j;
            neumaier_sum(
                (0..1u32 << n)
                    .filter(|s| s & bit == 0)
                    .map(|s| weights[s.count_ones() as usize] * (values[(s | bit) as usize] - values[s as usize])),
            )
        })
        .collect();
    Ok(ShapleyValues {
        phi,
        phi0: values[0],
    })
}

/// The two partial contributions of feature `j`: `(φ_R, φ_I)`, where
/// `φ_R` adds only the real part of `x_j` and `φ_I` completes it.
pub fn exact_partial_shap<F: Fn(&[C64]) -> C64>(
    f: F,
    x: &[C64],
    reference: &[C64],
    j: usize,
) -> Result<(C64, C64)> {
    let n = check_inputs(x, reference)?;
    if j >= n {
        return Err(Error::InvalidArgument(format!("feature {j} out of range for {n}")));
    }
    let bit = 1u32 << j;
    let mut r_terms = Vec::with_capacity(1 << (n - 1));
    let mut i_terms = Vec::with_capacity(1 << (n - 1));
    for s in (0..1u32 << n).filter(|s| s & bit == 0) {
        let mut presence = SubsetMask::from_bits(n, s).presence;
        let without = f(&SubsetMask { presence: presence.clone() }.apply(x, reference));
        presence[j] = Presence::RealOnly;
        let real_only = f(&SubsetMask { presence: presence.clone() }.apply(x, reference));
        presence[j] = Presence::Full;
        let with = f(&SubsetMask { presence }.apply(x, reference));
        let w = shapley_weight(n, s.count_ones() as usize);
        r_terms.push(w * (real_only - without));
        i_terms.push(w * (with - real_only));
    }
    Ok((neumaier_sum(r_terms), neumaier_sum(i_terms)))
}

/// Central differences along each real and imaginary axis, combined into
/// Wirtinger derivatives.
pub fn finite_diff_wirtinger<T, F>(f: F, x: &CTensor, h: f64) -> WirtingerPair
where
    T: Into<C64>,
    F: Fn(&CTensor) -> T,
{
    assert!(h > 0.0, "step must be positive");
    let n = x.len();
    let mut dre = Vec::with_capacity(n);
    let mut dim = Vec::with_capacity(n);
    let eval = |k: usize, delta: C64| -> C64 {
        let mut d = x.data().to_vec();
        d[k] += delta;
        f(&CTensor::from_parts(x.shape().to_vec(), d)).into()
    };
    for k in 0..n {
        dre.push((eval(k, C64::new(h, 0.0)) - eval(k, C64::new(-h, 0.0))) / (2.0 * h));
        dim.push((eval(k, C64::new(0.0, h)) - eval(k, C64::new(0.0, -h))) / (2.0 * h));
    }
    let shape = x.shape().to_vec();
    wirtinger_from_real_parts(
        &CTensor::from_parts(shape.clone(), dre),
        &CTensor::from_parts(shape, dim),
    )
    .expect("same shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn additive_function() {
        let s = exact_shap(|z| z[0] + z[1], &[c(1.0, 1.0), c(2.0, 0.0)], &[c(0.0, 0.0); 2]).unwrap();
        assert!(close(s.phi[0], c(1.0, 1.0), 1e-15));
        assert!(close(s.phi[1], c(2.0, 0.0), 1e-15));
    }

    #[test]
    fn single_feature_squared_magnitude() {
        let s = exact_shap(|z| c(z[0].norm_sqr(), 0.0), &[c(3.0, 4.0)], &[c(0.0, 0.0)]).unwrap();
        assert!(close(s.phi[0], c(25.0, 0.0), 1e-12));
    }

    #[test]
    fn product_of_magnitudes() {
        // v(∅)=0, v({1})=0, v({2})=0, v({1,2})=2 → φ = (1, 1)
        let s = exact_shap(|z| c(z[0].norm() * z[1].norm(), 0.0), &[c(1.0, 0.0), c(0.0, 2.0)], &[c(0.0, 0.0); 2])
            .unwrap();
        assert!(close(s.phi[0], c(1.0, 0.0), 1e-15));
        assert!(close(s.phi[1], c(1.0, 0.0), 1e-15));
    }

    #[test]
    fn weights_match_hand_values() {
        assert_eq!(shapley_weight(1, 0), 1.0);
        assert_eq!(shapley_weight(2, 0), 0.5);
        assert!((shapley_weight(3, 1) - 1.0 / 6.0).abs() < 1e-16);
        // Σ_s C(n-1, s)·w(s) = 1
        let total: f64 = (0..12).map(|s| shapley_weight(12, s) * binom(11, s)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn binom(n: usize, k: usize) -> f64 {
        (factorial(n) / (factorial(k) * factorial(n - k))) as f64
    }

    #[test]
    fn too_many_features() {
        let x = vec![c(1.0, 0.0); 13];
        assert!(matches!(
            exact_shap(|z| z[0], &x, &x),
            Err(Error::TooManyFeatures { count: 13, .. })
        ));
    }

    #[test]
    fn mask_rejects_two_real_only() {
        assert!(SubsetMask::new(vec![Presence::RealOnly, Presence::RealOnly]).is_err());
        let m = SubsetMask::new(vec![Presence::RealOnly, Presence::Absent, Presence::Full]).unwrap();
        let z = m.apply(&[c(1.0, 2.0), c(3.0, 4.0), c(5.0, 6.0)], &[c(-1.0, -2.0), c(-3.0, -4.0), c(-5.0, -6.0)]);
        assert_eq!(z, vec![c(1.0, -2.0), c(-3.0, -4.0), c(5.0, 6.0)]);
    }

    #[test]
    fn partial_linear_closed_form() {
        // f(z) = Σ A_j z_j → φ_R = A_j re(Δ_j), φ_I = i A_j im(Δ_j)
        let a = [c(2.0, 1.0), c(-0.5, 0.3), c(0.0, -1.0)];
        let f = |z: &[C64]| z.iter().zip(&a).map(|(x, w)| x * w).sum::<C64>();
        let x = [c(1.0, 1.0), c(0.2, -0.7), c(-1.5, 0.4)];
        let r = [c(0.1, 0.0), c(0.0, 0.5), c(0.3, -0.2)];
        for j in 0..3 {
            let (pr, pi) = exact_partial_shap(f, &x, &r, j).unwrap();
            let d = x[j] - r[j];
            assert!(close(pr, a[j] * d.re, 1e-14));
            assert!(close(pi, c(0.0, 1.0) * a[j] * d.im, 1e-14));
        }
    }

    #[test]
    fn partial_vanishes_when_imaginary_parts_agree() {
        let f = |z: &[C64]| c(z[0].norm() * z[1].re.max(0.0), z[1].im);
        let (_, pi) = exact_partial_shap(f, &[c(1.0, 0.5), c(2.0, -1.0)], &[c(0.0, 0.5), c(0.0, 0.0)], 0).unwrap();
        assert_eq!(pi, c(0.0, 0.0));
    }

    #[test]
    fn finite_differences_of_simple_functions() {
        let x = CTensor::from_vec(vec![c(0.4, -1.2)]);
        let p = finite_diff_wirtinger(|t| t.data()[0], &x, 1e-5);
        assert!(close(p.d_z.data()[0], c(1.0, 0.0), 1e-8));
        assert!(close(p.d_zbar.data()[0], c(0.0, 0.0), 1e-8));
        let x = CTensor::from_vec(vec![c(3.0, 4.0)]);
        let p = finite_diff_wirtinger(|t| t.data()[0].norm_sqr(), &x, 1e-5);
        assert!(close(p.d_zbar.data()[0], c(3.0, 4.0), 1e-8));
    }

    fn random_nonlinear(rng: &mut ChaCha8Rng, n: usize) -> impl Fn(&[C64]) -> C64 {
        let w: Vec<C64> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        move |z: &[C64]| {
            let s: C64 = z.iter().zip(&w).map(|(a, b)| a * b).sum();
            let m = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
            c(s.re.max(0.0), s.im.max(0.0)) * m + z[0] * z[n - 1].conj()
        }
    }

    #[test]
    fn partial_split_sums_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let f = random_nonlinear(&mut rng, 4);
            let x: Vec<C64> = (0..4).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let r: Vec<C64> = (0..4).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let total = exact_shap(&f, &x, &r).unwrap();
            for j in 0..4 {
                let (pr, pi) = exact_partial_shap(&f, &x, &r, j).unwrap();
                assert!(close(pr + pi, total.phi[j], 1e-12));
            }
        }
    }

    #[test]
    fn consistency_axiom_spot_check() {
        // f' differs from f by a term that only lowers feature 0's marginals.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |z: &[C64]| c(z.iter().zip(&w).map(|(a, b)| a.re * b).sum::<f64>().max(0.0) + z[1].re * z[2].re, 0.0);
            let damp = rng.random_range(0.0..1.0);
            let fp = |z: &[C64]| f(z) - c(damp * z[0].re.abs() * (1.0 + z[3].re.abs()), 0.0);
            let x: Vec<C64> = (0..4).map(|_| c(rng.random_range(-2.0..2.0), 0.0)).collect();
            let r = vec![c(0.0, 0.0); 4];
            // check the premise on every coalition
            for s in 0..16u32 {
                if s & 1 == 1 {
                    continue;
                }
                let z_with = SubsetMask::from_bits(4, s | 1).apply(&x, &r);
                let z_without = SubsetMask::from_bits(4, s).apply(&x, &r);
                assert!((fp(&z_with) - fp(&z_without)).re <= (f(&z_with) - f(&z_without)).re + 1e-12);
            }
            let a = exact_shap(f, &x, &r).unwrap();
            let b = exact_shap(fp, &x, &r).unwrap();
            assert!(b.phi[0].re <= a.phi[0].re + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn axioms_hold(seed in 0u64..10_000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_nonlinear(&mut rng, n);
            let r: Vec<C64> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            // about a third of the features equal the reference
            let x: Vec<C64> = r
                .iter()
                .map(|&rv| if rng.random_bool(0.3) { rv } else { c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) })
                .collect();
            let s = exact_shap(&f, &x, &r).unwrap();
            // local accuracy
            prop_assert!((s.total() + s.phi0 - f(&x)).norm() < 1e-10);
            // missingness
            for j in 0..n {
                if x[j] == r[j] {
                    prop_assert_eq!(s.phi[j], c(0.0, 0.0));
                }
            }
        }

        #[test]
        fn symmetric_features_share_credit(a in -2.0f64..2.0, b in -2.0f64..2.0, k in -2.0f64..2.0) {
            let f = |z: &[C64]| (z[0] * z[1]) + z[2] * k;
            let x = [c(a, b), c(a, b), c(b, a)];
            let s = exact_shap(f, &x, &[c(0.0, 0.0); 3]).unwrap();
            prop_assert!((s.phi[0] - s.phi[1]).norm() < 1e-12);
        }
    }
}
