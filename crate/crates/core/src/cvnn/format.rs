//! JSON model and tensor files.
//!
//! A model file looks like
//!
//! ```json
//! {
//!   "name": "mlp",
//!   "version": 1,
//!   "input_shape": [6],
//!   "output_shape": [3],
//!   "layers": [
//!     {"kind": "linear", "params": {"in_features": 6, "out_features": 3},
//!      "weights": {"weight": {"shape": [3, 6], "re": [...], "im": [...]},
//!                  "bias":   {"shape": [3],    "re": [...], "im": [...]}}},
//!     {"kind": "conv2d", "params": {"in_channels": 1, "out_channels": 2, "kernel": [3, 3],
//!      "stride": 1, "padding": 1}, "weights": {"kernel": {...}, "bias": {...}}},
//!     {"kind": "maxpool", "params": {"window": [2, 2], "stride": 2}},
//!     {"kind": "crelu"}, {"kind": "zrelu"}, {"kind": "real_part"},
//!     {"kind": "magnitude"}, {"kind": "squared_magnitude"}, {"kind": "flatten"}
//!   ]
//! }
//! ```
//!
//! Weights are flat row-major `re`/`im` lists. Every number is written with
//! 17 significant digits so that saving and loading is bit-exact.
//! `output_shape` is optional on load and checked when present.
//!
//! Tensor files (inputs, references, probe outputs) hold either a single
//! `{"shape", "re", "im"}` object or a JSON array of them.

use super::{Conv2d, Layer, Linear, MaxPool, Model, Pointwise, FORMAT_VERSION};
use crate::complex::CTensor;
use crate::error::{Error, Result};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

/// Numbers serialized as `{:.16e}`: 17 significant digits.
struct Sig17<'a>(&'a [f64]);

impl Serialize for Sig17<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeSeq};
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for &v in self.0 {
            if !v.is_finite() {
                return Err(S::Error::custom("non-finite value"));
            }
            let raw = RawValue::from_string(format!("{v:.16e}")).map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

/// On-disk tensor representation.
#[derive(Clone, Debug, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TensorJson {
    fn into_tensor(self, path: &str) -> Result<CTensor> {
        CTensor::from_re_im(self.shape, &self.re, &self.im).map_err(|e| Error::Format {
            path: path.to_string(),
            message: e.to_string(),
        })
    }
}

struct TensorOut<'a>(&'a CTensor);

impl Serialize for TensorOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Tensor", 3)?;
        st.serialize_field("shape", self.0.shape())?;
        st.serialize_field("re", &Sig17(&self.0.re()))?;
        st.serialize_field("im", &Sig17(&self.0.im()))?;
        st.end()
    }
}

#[derive(Debug, Deserialize)]
struct LinearParams {
    in_features: usize,
    out_features: usize,
}

#[derive(Debug, Deserialize)]
struct LinearWeights {
    weight: TensorJson,
    bias: TensorJson,
}

#[derive(Debug, Deserialize)]
struct ConvParams {
    in_channels: usize,
    out_channels: usize,
    kernel: [usize; 2],
    stride: usize,
    padding: usize,
}

#[derive(Debug, Deserialize)]
struct ConvWeights {
    kernel: TensorJson,
    bias: TensorJson,
}

#[derive(Debug, Deserialize)]
struct PoolParams {
    window: [usize; 2],
    stride: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerJson {
    Linear {
        params: LinearParams,
        weights: LinearWeights,
    },
    Conv2d {
        params: ConvParams,
        weights: ConvWeights,
    },
    Maxpool {
        params: PoolParams,
    },
    Crelu,
    Zrelu,
    RealPart,
    Magnitude,
    SquaredMagnitude,
    Flatten,
}

/// Parsed but not yet validated model document.
#[derive(Debug, Deserialize)]
pub struct ModelFile {
    name: String,
    version: u32,
    input_shape: Vec<usize>,
    #[serde(default)]
    output_shape: Option<Vec<usize>>,
    layers: Vec<LayerJson>,
}

fn expect_shape(t: &TensorJson, expected: &[usize], path: String) -> Result<()> {
    if t.shape != expected {
        return Err(Error::Validation(format!(
            "{path}: shape {:?} does not match declared {expected:?}",
            t.shape
        )));
    }
    Ok(())
}

impl ModelFile {
    pub fn into_model(self) -> Result<Model> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format {
                path: "version".into(),
                message: format!("unsupported version {} (expected {FORMAT_VERSION})", self.version),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, lj) in self.layers.into_iter().enumerate() {
            let at = |field: &str| format!("layers[{k}].{field}");
            let layer = match lj {
                LayerJson::Linear { params, weights } => {
                    let LinearParams {
                        in_features,
                        out_features,
                    } = params;
                    expect_shape(&weights.weight, &[out_features, in_features], at("weights.weight.shape"))?;
                    expect_shape(&weights.bias, &[out_features], at("weights.bias.shape"))?;
                    Layer::Linear(Linear {
                        weight: weights.weight.into_tensor(&at("weights.weight"))?,
                        bias: weights.bias.into_tensor(&at("weights.bias"))?,
                    })
                }
                LayerJson::Conv2d { params, weights } => {
                    let [kh, kw] = params.kernel;
                    expect_shape(
                        &weights.kernel,
                        &[params.out_channels, params.in_channels, kh, kw],
                        at("weights.kernel.shape"),
                    )?;
                    expect_shape(&weights.bias, &[params.out_channels], at("weights.bias.shape"))?;
                    Layer::Conv2d(Conv2d {
                        kernel: weights.kernel.into_tensor(&at("weights.kernel"))?,
                        bias: weights.bias.into_tensor(&at("weights.bias"))?,
                        stride: params.stride,
                        padding: params.padding,
                    })
                }
                LayerJson::Maxpool { params } => Layer::MaxPool(MaxPool {
                    window: (params.window[0], params.window[1]),
                    stride: params.stride,
                }),
                LayerJson::Crelu => Layer::Pointwise(Pointwise::CRelu),
                LayerJson::Zrelu => Layer::Pointwise(Pointwise::ZRelu),
                LayerJson::RealPart => Layer::Pointwise(Pointwise::RealPart),
                LayerJson::Magnitude => Layer::Pointwise(Pointwise::Magnitude),
                LayerJson::SquaredMagnitude => Layer::Pointwise(Pointwise::SquaredMagnitude),
                LayerJson::Flatten => Layer::Flatten,
            };
            layers.push(layer);
        }
        let model = Model::new(self.name, self.input_shape, layers)?;
        if let Some(out) = self.output_shape {
            if out != model.output_shape() {
                return Err(Error::Validation(format!(
                    "output_shape: declared {out:?} but layers produce {:?}",
                    model.output_shape()
                )));
            }
        }
        Ok(model)
    }
}

struct LayerOut<'a>(&'a Layer);

impl Serialize for LayerOut<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct LinP {
            in_features: usize,
            out_features: usize,
        }
        #[derive(Serialize)]
        struct ConvP {
            in_channels: usize,
            out_channels: usize,
            kernel: [usize; 2],
            stride: usize,
            padding: usize,
        }
        #[derive(Serialize)]
        struct PoolP {
            window: [usize; 2],
            stride: usize,
        }
        #[derive(Serialize)]
        struct LinW<'a> {
            weight: TensorOut<'a>,
            bias: TensorOut<'a>,
        }
        #[derive(Serialize)]
        struct ConvW<'a> {
            kernel: TensorOut<'a>,
            bias: TensorOut<'a>,
        }

        let layer = self.0;
        let mut st = s.serialize_struct("Layer", 3)?;
        st.serialize_field("kind", layer.kind())?;
        match layer {
            Layer::Linear(l) => {
                st.serialize_field(
                    "params",
                    &LinP {
                        in_features: l.in_features(),
                        out_features: l.out_features(),
                    },
                )?;
                st.serialize_field(
                    "weights",
                    &LinW {
                        weight: TensorOut(&l.weight),
                        bias: TensorOut(&l.bias),
                    },
                )?;
            }
            Layer::Conv2d(c) => {
                let k = c.kernel.shape();
                st.serialize_field(
                    "params",
                    &ConvP {
                        in_channels: k[1],
                        out_channels: k[0],
                        kernel: [k[2], k[3]],
                        stride: c.stride,
                        padding: c.padding,
                    },
                )?;
                st.serialize_field(
                    "weights",
                    &ConvW {
                        kernel: TensorOut(&c.kernel),
                        bias: TensorOut(&c.bias),
                    },
                )?;
            }
            Layer::MaxPool(p) => {
                st.serialize_field(
                    "params",
                    &PoolP {
                        window: [p.window.0, p.window.1],
                        stride: p.stride,
                    },
                )?;
            }
            Layer::Pointwise(_) | Layer::Flatten => {}
        }
        st.end()
    }
}

#[derive(Serialize)]
struct ModelOut<'a> {
    name: &'a str,
    version: u32,
    input_shape: &'a [usize],
    output_shape: &'a [usize],
    layers: Vec<LayerOut<'a>>,
}

/// Canonical pretty-printed JSON for `model`.
pub fn model_to_string(model: &Model) -> String {
    let doc = ModelOut {
        name: &model.name,
        version: FORMAT_VERSION,
        input_shape: model.input_shape(),
        output_shape: model.output_shape(),
        layers: model.layers().iter().map(LayerOut).collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("models hold finite values");
    s.push('\n');
    s
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Format {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn model_from_str(text: &str) -> Result<Model> {
    parse::<ModelFile>(text)?.into_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    model_from_str(&fs::read_to_string(path)?)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), model_to_string(model).as_bytes())
}

/// Hex SHA-256 of the canonical serialization.
pub fn model_hash(model: &Model) -> String {
    let digest = Sha256::digest(model_to_string(model).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TensorDoc {
    One(TensorJson),
    Many(Vec<TensorJson>),
}

pub fn tensors_from_str(text: &str) -> Result<Vec<CTensor>> {
    match parse::<TensorDoc>(text)? {
        TensorDoc::One(t) => Ok(vec![t.into_tensor("")?]),
        TensorDoc::Many(ts) => ts
            .into_iter()
            .enumerate()
            .map(|(k, t)| t.into_tensor(&format!("[{k}]")))
            .collect(),
    }
}

pub fn tensors_to_string(tensors: &[CTensor]) -> String {
    let out: Vec<TensorOut<'_>> = tensors.iter().map(TensorOut).collect();
    let mut s = if out.len() == 1 {
        serde_json::to_string(&out[0])
    } else {
        serde_json::to_string(&out)
    }
    .expect("finite tensor values");
    s.push('\n');
    s
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<CTensor>> {
    tensors_from_str(&fs::read_to_string(path)?)
}

pub fn save_tensors(tensors: &[CTensor], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), tensors_to_string(tensors).as_bytes())
}

/// Largest relative deviation `‖f(p) − e‖ / ‖e‖` of the model's outputs on
/// `probes` from `expected` (absolute when `‖e‖` vanishes).
pub fn probe_mismatch(model: &Model, probes: &[CTensor], expected: &[CTensor]) -> Result<f64> {
    if probes.len() != expected.len() {
        return Err(Error::Validation(format!(
            "{} probe inputs but {} expected outputs",
            probes.len(),
            expected.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (k, (p, e)) in probes.iter().zip(expected).enumerate() {
        let out = model.predict(p)?;
        if out.len() != e.len() {
            return Err(Error::Validation(format!(
                "expected output [{k}] has {} values, model produces {}",
                e.len(),
                out.len()
            )));
        }
        let diff = CTensor::from_parts(vec![e.len()], out.data().iter().zip(e.data()).map(|(a, b)| a - b).collect());
        let scale = e.norm();
        worst = worst.max(if scale > 0.0 { diff.norm() / scale } else { diff.norm() });
    }
    Ok(worst)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvnn::{random_model, Architecture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for arch in [Architecture::Mlp, Architecture::ConvPool] {
            let m = random_model(&arch, &mut rng).unwrap();
            let text = model_to_string(&m);
            let back = model_from_str(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(model_to_string(&back), text);
        }
    }

    #[test]
    fn numbers_have_17_significant_digits() {
        let t = CTensor::from_vec(vec![crate::complex::C64::new(0.1, -2.0)]);
        let s = tensors_to_string(&[t]);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.0000000000000000e0"), "{s}");
    }

    #[test]
    fn mismatched_weight_shape_is_validation_error() {
        let text = r#"{"name":"bad","version":1,"input_shape":[2],"layers":[
            {"kind":"linear","params":{"in_features":2,"out_features":1},
             "weights":{"weight":{"shape":[1,3],"re":[1,2,3],"im":[0,0,0]},
                        "bias":{"shape":[1],"re":[0],"im":[0]}}}]}"#;
        let err = model_from_str(text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("layers[0].weights.weight.shape"));
    }

    #[test]
    fn malformed_field_reports_path() {
        let text = r#"{"name":"bad","version":1,"input_shape":[2],"layers":[
            {"kind":"maxpool","params":{"window":[2,"x"],"stride":2}}]}"#;
        let err = model_from_str(text).unwrap_err();
        match err {
            Error::Format { path, .. } => assert!(path.starts_with("layers[0]"), "{path}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn declared_output_shape_checked() {
        let text = r#"{"name":"x","version":1,"input_shape":[3],"output_shape":[4],"layers":[{"kind":"crelu"}]}"#;
        assert!(matches!(model_from_str(text), Err(Error::Validation(_))));
    }

    #[test]
    fn save_and_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&Architecture::Linear, &mut rng).unwrap();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn tensor_files_single_and_list() {
        let a = CTensor::from_vec(vec![crate::complex::C64::new(1.5, -0.25)]);
        let b = CTensor::zeros(&[2, 2]);
        assert_eq!(tensors_from_str(&tensors_to_string(std::slice::from_ref(&a))).unwrap(), vec![a.clone()]);
        assert_eq!(
            tensors_from_str(&tensors_to_string(&[a.clone(), b.clone()])).unwrap(),
            vec![a, b]
        );
    }
}
