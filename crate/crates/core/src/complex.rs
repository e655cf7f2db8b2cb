//! Complex scalars, shape-tagged complex tensors, and Wirtinger cogradient pairs.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Double-precision complex scalar used throughout the crate.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Magnitude used for every ordering decision (max-pooling, ranking).
#[inline]
pub fn magnitude(z: C64) -> f64 {
    z.norm()
}

/// Row-major complex array with an explicit shape.
///
/// The data length always equals the product of the shape. Values are
/// immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct CTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl CTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match shape {shape:?} ({expected} elements)",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor whose shape is known to match `data` by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![ZERO; n])
    }

    pub fn filled(shape: &[usize], value: C64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        Self::from_parts(vec![data.len()], data)
    }

    pub fn from_re_im(shape: Vec<usize>, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::InvalidArgument(format!(
                "re has {} values but im has {}",
                re.len(),
                im.len()
            )));
        }
        let data = re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::InvalidArgument(format!(
                "index {index:?} has rank {} but tensor has rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::InvalidArgument(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<C64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&z| f(z)).collect())
    }

    pub fn zip_map(&self, other: &CTensor, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn add(&self, other: &CTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: &CTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn sum(&self) -> C64 {
        neumaier_sum(self.data.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest elementwise distance `|a - b|`.
    pub fn max_abs_diff(&self, other: &CTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Euclidean norm over all elements.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn check_same_shape(&self, other: &CTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }
}

/// Compensated (Neumaier) summation of complex values, real and imaginary
/// parts carried independently.
pub fn neumaier_sum(values: impl IntoIterator<Item = C64>) -> C64 {
    let (mut sr, mut cr, mut si, mut ci) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for z in values {
        neumaier_step(&mut sr, &mut cr, z.re);
        neumaier_step(&mut si, &mut ci, z.im);
    }
    C64::new(sr + cr, si + ci)
}

#[inline]
fn neumaier_step(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// The two Wirtinger cogradients of a scalar function with respect to a
/// tensor-valued variable: `d_z = ∂f/∂z` and `d_zbar = ∂f/∂z̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct WirtingerPair {
    pub d_z: CTensor,
    pub d_zbar: CTensor,
}

impl WirtingerPair {
    pub fn new(d_z: CTensor, d_zbar: CTensor) -> Result<Self> {
        d_z.check_same_shape(&d_zbar)?;
        Ok(Self { d_z, d_zbar })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            d_z: CTensor::zeros(shape),
            d_zbar: CTensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.d_z.shape()
    }

    /// Largest deviation from the real-function identity `d_zbar == conj(d_z)`.
    pub fn conjugacy_error(&self) -> f64 {
        self.d_z
            .data()
            .iter()
            .zip(self.d_zbar.data())
            .map(|(a, b)| (a.conj() - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Combines the partial derivatives along the real and imaginary axes into
/// the Wirtinger pair: `d_z = ½(∂/∂re − i∂/∂im)`, `d_zbar = ½(∂/∂re + i∂/∂im)`.
pub fn wirtinger_from_real_parts(df_dre: &CTensor, df_dim: &CTensor) -> Result<WirtingerPair> {
    let d_z = df_dre.zip_map(df_dim, |a, b| 0.5 * (a - I * b))?;
    let d_zbar = df_dre.zip_map(df_dim, |a, b| 0.5 * (a + I * b))?;
    Ok(WirtingerPair { d_z, d_zbar })
}

/// How a complex saliency value is collapsed to a real score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// `|φ|`
    Abs,
    /// `re(φ) + im(φ)`
    RealPlusImag,
}

impl Reduction {
    #[inline]
    pub fn apply(self, z: C64) -> f64 {
        match self {
            Reduction::Abs => z.norm(),
            Reduction::RealPlusImag => z.re + z.im,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Reduction::Abs => "abs",
            Reduction::RealPlusImag => "ri",
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Reduction::Abs),
            "ri" | "real_plus_imag" => Ok(Reduction::RealPlusImag),
            other => Err(Error::InvalidArgument(format!(
                "unknown reduction `{other}` (expected abs or ri)"
            ))),
        }
    }
}

/// Collapses a complex saliency map to one real score per element.
pub fn reduce_saliency(phi: &CTensor, mode: Reduction) -> Vec<f64> {
    phi.data().iter().map(|&z| mode.apply(z)).collect()
}
