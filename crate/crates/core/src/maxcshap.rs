//! Exact Shapley contributions for magnitude max-pooling.
//!
//! A window `X` with reference window `Y` defines the game
//! `f(S) = cmax(z)` with `z_k = X_k` for `k ∈ S` and `z_k = Y_k` otherwise.
//! Sorting the `2n` candidate values by magnitude turns `f` into a sum of
//! indicator games "candidate `c` is the first active one", each of which
//! requires a fixed set of features present and another set absent. Such a
//! game has a closed-form Shapley value, so the totals cost `O(n²)` after
//! sorting.

use crate::complex::{neumaier_sum, C64};
use crate::cvnn::argmax_magnitude;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest supported window.
pub const MAX_WINDOW: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPoolShapConfig {
    /// windows up to this size use subset enumeration for the partial
    /// contributions; larger ones use the sorted closed form
    pub enum_cap: usize,
}

impl Default for MaxPoolShapConfig {
    fn default() -> Self {
        Self { enum_cap: 9 }
    }
}

/// Coefficients `M[p][q] = p!·q!/(p+q+1)!` for `p + q < n`.
///
/// `M[s][n-1-s]` is the Shapley weight of a coalition of size `s`.
pub fn precompute_m(n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || n > MAX_WINDOW {
        return Err(Error::InvalidArgument(format!("window size {n} outside 1..={MAX_WINDOW}")));
    }
    let mut fact = [1u128; MAX_WINDOW + 1];
    for k in 1..=MAX_WINDOW {
        fact[k] = fact[k - 1] * k as u128;
    }
    Ok((0..n)
        .map(|p| {
            (0..n - p)
                .map(|q| (fact[p] * fact[q]) as f64 / fact[p + q + 1] as f64)
                .collect()
        })
        .collect())
}

fn check_pair(x: &[C64], y: &[C64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![x.len()],
            actual: vec![y.len()],
        });
    }
    if x.is_empty() || x.len() > MAX_WINDOW {
        return Err(Error::InvalidArgument(format!("window size {} outside 1..={MAX_WINDOW}", x.len())));
    }
    Ok(())
}

/// `cmax` of the window with features in `present` (bit mask) taken from
/// `x` and the rest from `y`.
fn masked_max(x: &[C64], y: &[C64], present: u32) -> C64 {
    let pick = |k: usize| if present >> k & 1 == 1 { x[k] } else { y[k] };
    let best = argmax_magnitude((0..x.len()).map(pick));
    pick(best)
}

fn totals_with_table(x: &[C64], y: &[C64], m: &[Vec<f64>]) -> Vec<C64> {
    let n = x.len();
    // candidate (value, position, from_x)
    let mut cands: Vec<(C64, usize, bool)> = Vec::with_capacity(2 * n);
    for k in 0..n {
        cands.push((x[k], k, true));
        cands.push((y[k], k, false));
    }
    cands.sort_by(|a, b| b.0.norm().total_cmp(&a.0.norm()).then(a.1.cmp(&b.1)));
    let mut rank_x = vec![0; n];
    let mut rank_y = vec![0; n];
    for (r, &(_, k, from_x)) in cands.iter().enumerate() {
        if from_x {
            rank_x[k] = r;
        } else {
            rank_y[k] = r;
        }
    }
    let mut terms: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut present = Vec::with_capacity(n);
    let mut absent = Vec::with_capacity(n);
    'cand: for (r, &(v, p, from_x)) in cands.iter().enumerate() {
        present.clear();
        absent.clear();
        if from_x {
            present.push(p);
        } else {
            absent.push(p);
        }
        for q in (0..n).filter(|&q| q != p) {
            match (rank_x[q] < r, rank_y[q] < r) {
                (true, true) => continue 'cand,
                (true, false) => absent.push(q),
                (false, true) => present.push(q),
                (false, false) => {}
            }
        }
        let (np, na) = (present.len(), absent.len());
        if np > 0 {
            let w = v * m[np - 1][na];
            for &k in &present {
                terms[k].push(w);
            }
        }
        if na > 0 {
            let w = v * m[np][na - 1];
            for &k in &absent {
                terms[k].push(-w);
            }
        }
    }
    terms.into_iter().map(neumaier_sum).collect()
}

/// Exact Shapley value of every window element for `cmax` with reference
/// window `y`. `Σ φ = cmax(x) - cmax(y)`.
pub fn maxpool_total(x: &[C64], y: &[C64]) -> Result<Vec<C64>> {
    check_pair(x, y)?;
    let m = precompute_m(x.len())?;
    Ok(totals_with_table(x, y, &m))
}

/// Partial contributions `(φ_R, φ_I)` per window element.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPartials {
    pub phi_r: Vec<C64>,
    pub phi_i: Vec<C64>,
}

impl WindowPartials {
    pub fn totals(&self) -> Vec<C64> {
        self.phi_r.iter().zip(&self.phi_i).map(|(a, b)| a + b).collect()
    }
}

fn real_only(x: &[C64], y: &[C64], j: usize) -> Vec<C64> {
    let mut xr = x.to_vec();
    xr[j] = C64::new(x[j].re, y[j].im);
    xr
}

/// Partial contributions by enumerating the `2^(n-1)` coalitions of the
/// other elements. Real-only presence of element `j` means the value
/// `re(X_j) + i·im(Y_j)`.
pub fn maxpool_partials(x: &[C64], y: &[C64], config: &MaxPoolShapConfig) -> Result<WindowPartials> {
    check_pair(x, y)?;
    let n = x.len();
    if n > config.enum_cap {
        return Err(Error::TooManyFeatures {
            count: n,
            limit: config.enum_cap,
        });
    }
    let m = precompute_m(n)?;
    let mut phi_r = Vec::with_capacity(n);
    let mut phi_i = Vec::with_capacity(n);
    for j in 0..n {
        let xr = real_only(x, y, j);
        let mut acc_r = Vec::with_capacity(1 << (n - 1));
        let mut acc_i = Vec::with_capacity(1 << (n - 1));
        for bits in 0u32..(1 << n) {
            if bits >> j & 1 == 1 {
                continue;
            }
            let s = bits.count_ones() as usize;
            let w = m[s][n - 1 - s];
            let without = masked_max(x, y, bits);
            let with_re = masked_max(&xr, y, bits | 1 << j);
            let with = masked_max(x, y, bits | 1 << j);
            acc_r.push(w * (with_re - without));
            acc_i.push(w * (with - with_re));
        }
        phi_r.push(neumaier_sum(acc_r));
        phi_i.push(neumaier_sum(acc_i));
    }
    Ok(WindowPartials { phi_r, phi_i })
}

/// Partial contributions from the sorted closed form: `φ_R(j)` is the total
/// contribution of `j` after replacing `X_j` by its real-only value.
pub fn maxpool_partials_fast(x: &[C64], y: &[C64]) -> Result<WindowPartials> {
    check_pair(x, y)?;
    let m = precompute_m(x.len())?;
    let totals = totals_with_table(x, y, &m);
    let phi_r: Vec<C64> = (0..x.len())
        .map(|j| totals_with_table(&real_only(x, y, j), y, &m)[j])
        .collect();
    let phi_i = totals.iter().zip(&phi_r).map(|(t, r)| t - r).collect();
    Ok(WindowPartials { phi_r, phi_i })
}

/// Enumeration below the cap, closed form above it.
pub fn window_partials(x: &[C64], y: &[C64], config: &MaxPoolShapConfig) -> Result<WindowPartials> {
    if x.len() <= config.enum_cap {
        maxpool_partials(x, y, config)
    } else {
        maxpool_partials_fast(x, y)
    }
}

/// `cmax(x) - cmax(y)`.
pub fn window_delta(x: &[C64], y: &[C64]) -> C64 {
    let full = (1u32 << x.len()) - 1;
    masked_max(x, y, full) - masked_max(x, y, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::ZERO;
    use crate::oracle::{exact_partial_shap, exact_shap};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cmax(v: &[C64]) -> C64 {
        v[argmax_magnitude(v.iter().copied())]
    }

    fn window<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn table_small_sizes() {
        assert_eq!(precompute_m(1).unwrap(), vec![vec![1.0]]);
        assert_eq!(precompute_m(2).unwrap(), vec![vec![1.0, 0.5], vec![0.5]]);
        let m4 = precompute_m(4).unwrap();
        // Shapley weights s!(n-1-s)!/n! for n = 4
        let expect = [1.0 / 4.0, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 4.0];
        for s in 0..4 {
            assert!((m4[s][3 - s] - expect[s]).abs() < 1e-15);
        }
        assert!(precompute_m(0).is_err());
        assert!(precompute_m(17).is_err());
        assert_eq!(precompute_m(16).unwrap().len(), 16);
    }

    #[test]
    fn single_element_gets_full_difference() {
        let phi = maxpool_total(&[c(1.0, 2.0)], &[c(0.5, 0.0)]).unwrap();
        assert_eq!(phi, vec![c(0.5, 2.0)]);
    }

    #[test]
    fn worked_examples() {
        let z = [c(0.0, 0.0); 2];
        assert_eq!(maxpool_total(&[c(2.0, 0.0), c(0.0, 0.0)], &z).unwrap(), vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let x = [c(1.0, 0.0), c(0.0, 2.0)];
        let phi = maxpool_total(&x, &z).unwrap();
        // {1}: 1, {2}: 2i, {1,2}: 2i
        assert!((phi[0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((phi[1] - c(-0.5, 2.0)).norm() < 1e-15);
        let w = [c(0.3, -0.2), c(-0.1, 0.9), c(0.4, 0.4)];
        assert!(maxpool_total(&w, &w).unwrap().iter().all(|p| *p == ZERO));
    }

    #[test]
    fn size_errors() {
        assert!(maxpool_total(&[ZERO], &[ZERO, ZERO]).is_err());
        assert!(maxpool_total(&[], &[]).is_err());
        assert!(maxpool_total(&[ZERO; 17], &[ZERO; 17]).is_err());
        let cfg = MaxPoolShapConfig { enum_cap: 3 };
        assert!(matches!(maxpool_partials(&[ZERO; 4], &[ZERO; 4], &cfg), Err(Error::TooManyFeatures { .. })));
    }

    #[test]
    fn totals_match_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=9 {
            for _ in 0..60 {
                let x = window(n, &mut rng);
                let y = window(n, &mut rng);
                let fast = maxpool_total(&x, &y).unwrap();
                let oracle = exact_shap(cmax, &x, &y).unwrap();
                assert!(max_diff(&fast, &oracle.phi) < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn ties_follow_forward_rule() {
        // equal magnitudes everywhere: lowest index wins in every coalition
        let x = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        let y = [c(0.0, -1.0), c(0.6, 0.8), c(0.8, -0.6)];
        let oracle = exact_shap(cmax, &x, &y).unwrap();
        assert!(max_diff(&maxpool_total(&x, &y).unwrap(), &oracle.phi) < 1e-15);
        let zero_y = [c(1.0, 0.0), ZERO, c(0.0, 0.0)];
        let oracle = exact_shap(cmax, &x, &zero_y).unwrap();
        assert!(max_diff(&maxpool_total(&x, &zero_y).unwrap(), &oracle.phi) < 1e-15);
    }

    #[test]
    fn partials_match_oracle_and_fast_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = MaxPoolShapConfig::default();
        for n in [1, 2, 4, 9] {
            for _ in 0..40 {
                let x = window(n, &mut rng);
                let y = window(n, &mut rng);
                let enumerated = maxpool_partials(&x, &y, &cfg).unwrap();
                let fast = maxpool_partials_fast(&x, &y).unwrap();
                assert!(max_diff(&enumerated.phi_r, &fast.phi_r) < 1e-12);
                assert!(max_diff(&enumerated.phi_i, &fast.phi_i) < 1e-12);
                assert!(max_diff(&enumerated.totals(), &maxpool_total(&x, &y).unwrap()) < 1e-12);
                for j in 0..n {
                    let (r, i) = exact_partial_shap(cmax, &x, &y, j).unwrap();
                    assert!((r - enumerated.phi_r[j]).norm() < 1e-12);
                    assert!((i - enumerated.phi_i[j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn partial_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = MaxPoolShapConfig::default();
        let x = window(4, &mut rng);
        let p = maxpool_partials(&x, &x, &cfg).unwrap();
        assert!(p.phi_r.iter().chain(&p.phi_i).all(|v| *v == ZERO));
        let xr: Vec<C64> = window(4, &mut rng).iter().map(|z| c(z.re, 0.0)).collect();
        let yr: Vec<C64> = window(4, &mut rng).iter().map(|z| c(z.re, 0.0)).collect();
        let p = maxpool_partials(&xr, &yr, &cfg).unwrap();
        assert!(p.phi_i.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn large_windows_conserve() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in [10, 13, 16] {
            let x = window(n, &mut rng);
            let y = window(n, &mut rng);
            let phi = maxpool_total(&x, &y).unwrap();
            let sum: C64 = phi.iter().sum();
            assert!((sum - window_delta(&x, &y)).norm() < 1e-12);
            let p = window_partials(&x, &y, &MaxPoolShapConfig::default()).unwrap();
            assert!(max_diff(&p.totals(), &phi) < 1e-12);
        }
    }

    fn arb_window(n: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| c(a, b)), n)
    }

    proptest! {
        #[test]
        fn efficiency_holds(n in 1usize..=12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = window(n, &mut rng);
            let y = window(n, &mut rng);
            let sum = neumaier_sum(maxpool_total(&x, &y).unwrap());
            prop_assert!((sum - window_delta(&x, &y)).norm() < 1e-12);
        }

        #[test]
        fn permutation_equivariant(x in arb_window(5), y in arb_window(5), rot in 0usize..5) {
            let phi = maxpool_total(&x, &y).unwrap();
            let rx: Vec<C64> = (0..5).map(|k| x[(k + rot) % 5]).collect();
            let ry: Vec<C64> = (0..5).map(|k| y[(k + rot) % 5]).collect();
            let rphi = maxpool_total(&rx, &ry).unwrap();
            for k in 0..5 {
                prop_assert!((rphi[k] - phi[(k + rot) % 5]).norm() < 1e-12);
            }
        }
    }
}
