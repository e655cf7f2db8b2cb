//! Synthetic complex-valued classification tasks.
//!
//! `two_channel_synthetic`: every sample stacks two patches of two complex
//! channels each (`[4, 4, 4]`). Patch classes differ; a class is a ±1
//! Hadamard pattern over the patch's 32 pixels, rotated by a fixed phase per
//! channel, with amplitude jitter and complex Gaussian noise. The target is
//! the pair of classes, so explanations of either class logit have known
//! correct channels.
//!
//! `mini_digits`: `[1, 8, 8]` seven-segment digits with a smooth phase ramp
//! and background noise.

use crate::complex::{CTensor, C64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TwoChannelSynthetic,
    MiniDigits,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::TwoChannelSynthetic => "two_channel_synthetic",
            Task::MiniDigits => "mini_digits",
        }
    }

    pub fn input_shape(self) -> Vec<usize> {
        match self {
            Task::TwoChannelSynthetic => vec![4, PATCH_SIDE, PATCH_SIDE],
            Task::MiniDigits => vec![1, DIGIT_SIDE, DIGIT_SIDE],
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Task::TwoChannelSynthetic => PATCH_CLASSES,
            Task::MiniDigits => 10,
        }
    }

    pub fn generate(self, count: usize, seed: u64) -> Dataset {
        match self {
            Task::TwoChannelSynthetic => two_channel_synthetic(count, seed),
            Task::MiniDigits => mini_digits(count, seed),
        }
    }
}

impl FromStr for Task {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "two_channel_synthetic" | "two-channel" => Ok(Task::TwoChannelSynthetic),
            "mini_digits" | "digits" => Ok(Task::MiniDigits),
            _ => Err(crate::error::Error::InvalidArgument(format!(
                "unknown task '{s}' (expected two_channel_synthetic or mini_digits)"
            ))),
        }
    }
}

/// Inputs with their sets of correct classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<CTensor>,
    pub labels: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub const PATCH_SIDE: usize = 4;
pub const PATCH_CLASSES: usize = 4;
const PATCH_LEN: usize = 2 * PATCH_SIDE * PATCH_SIDE;
const CHANNEL_PHASE: [f64; 2] = [std::f64::consts::PI / 8.0, std::f64::consts::PI / 16.0];
const PATCH_NOISE: f64 = 0.5;

/// Row `k` of the Sylvester–Hadamard matrix of order `n` (a power of two).
fn hadamard_row(n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|j| if (k & j).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect()
}

fn complex_noise<R: Rng>(sigma: f64, rng: &mut R) -> C64 {
    let s = sigma * std::f64::consts::FRAC_1_SQRT_2;
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    C64::new(s * a, s * b)
}

/// One patch of class `class`: `2 × side × side` values, channel-major.
fn patch<R: Rng>(class: usize, rng: &mut R) -> Vec<C64> {
    // rows 1.. of the Hadamard matrix are zero-mean, which keeps patch
    // classes orthogonal to a constant offset as well as to each other
    let h = hadamard_row(PATCH_LEN, class + 1);
    let amp = 0.8 + 0.4 * rng.random::<f64>();
    let per_channel = PATCH_SIDE * PATCH_SIDE;
    h.iter()
        .enumerate()
        .map(|(j, &s)| {
            let phase = C64::from_polar(1.0, CHANNEL_PHASE[j / per_channel]);
            amp * s * phase + complex_noise(PATCH_NOISE, rng)
        })
        .collect()
}

pub fn two_channel_synthetic(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.random_range(0..PATCH_CLASSES);
        let b = (a + rng.random_range(1..PATCH_CLASSES)) % PATCH_CLASSES;
        let mut data = patch(a, &mut rng);
        data.extend(patch(b, &mut rng));
        inputs.push(CTensor::from_parts(Task::TwoChannelSynthetic.input_shape(), data));
        labels.push(vec![a, b]);
    }
    Dataset { inputs, labels }
}

pub const DIGIT_SIDE: usize = 8;

/// Pixels of the seven segments `a..g` on the 8×8 grid.
fn segment(s: usize) -> Vec<(usize, usize)> {
    match s {
        0 => (2..=5).map(|c| (1, c)).collect(),
        1 => (1..=4).map(|r| (r, 5)).collect(),
        2 => (4..=6).map(|r| (r, 5)).collect(),
        3 => (2..=5).map(|c| (6, c)).collect(),
        4 => (4..=6).map(|r| (r, 2)).collect(),
        5 => (1..=4).map(|r| (r, 2)).collect(),
        6 => (2..=5).map(|c| (4, c)).collect(),
        _ => unreachable!(),
    }
}

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],
    &[1, 2],
    &[0, 1, 3, 4, 6],
    &[0, 1, 2, 3, 6],
    &[1, 2, 5, 6],
    &[0, 2, 3, 5, 6],
    &[0, 2, 3, 4, 5, 6],
    &[0, 1, 2],
    &[0, 1, 2, 3, 4, 5, 6],
    &[0, 1, 2, 3, 5, 6],
];

/// Noise-free magnitude mask of a digit.
pub fn digit_mask(digit: usize) -> Vec<f64> {
    let mut m = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
    for &s in DIGIT_SEGMENTS[digit] {
        for (r, c) in segment(s) {
            m[r * DIGIT_SIDE + c] = 1.0;
        }
    }
    m
}

fn digit_image<R: Rng>(digit: usize, rng: &mut R) -> CTensor {
    let mask = digit_mask(digit);
    let offset = 0.4 * (rng.random::<f64>() - 0.5);
    let data = mask
        .iter()
        .enumerate()
        .map(|(k, &on)| {
            let (r, c) = (k / DIGIT_SIDE, k % DIGIT_SIDE);
            let phase = 0.15 * (r + c) as f64 + offset;
            let amp = on * (0.7 + 0.6 * rng.random::<f64>());
            C64::from_polar(amp, phase) + complex_noise(0.2, rng)
        })
        .collect();
    CTensor::from_parts(Task::MiniDigits.input_shape(), data)
}

/// Balanced digits in shuffled order.
pub fn mini_digits(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut digits: Vec<usize> = (0..count).map(|k| k % 10).collect();
    digits.shuffle(&mut rng);
    let inputs = digits.iter().map(|&d| digit_image(d, &mut rng)).collect();
    let labels = digits.iter().map(|&d| vec![d]).collect();
    Dataset { inputs, labels }
}

/// Images of one digit only.
pub fn digits_of_class(digit: usize, count: usize, seed: u64) -> Vec<CTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| digit_image(digit, &mut rng)).collect()
}
