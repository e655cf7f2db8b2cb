//! Output file formats.
//!
//! Every file starts with the same header: tool version, the run
//! configuration as one line of JSON, and the model hash. CSV and PGM files
//! carry it as `#` comment lines; JSON reports as top-level fields.
//!
//! Complex maps are CSV with columns `index,re,im`; reduced maps have
//! columns `index,value`. Indices are flat row-major offsets. Values are
//! written in shortest round-trip form.

use cshap_core::{CTensor, C64, VERSION};
use serde::Serialize;

/// Command, paths and flags of one invocation, echoed into every output.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enum_cap: Option<usize>,
    /// command-specific settings
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.extra
            .insert(key.into(), serde_json::to_value(value).expect("plain values serialize"));
    }
}

pub fn header_lines(config: &RunConfig, model_hash: Option<&str>) -> String {
    let mut s = format!("# cshap {VERSION}\n");
    s += &format!("# config {}\n", serde_json::to_string(config).expect("config serializes"));
    if let Some(h) = model_hash {
        s += &format!("# model_sha256 {h}\n");
    }
    s
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_sha256: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    passed: Option<bool>,
    result: &'a T,
}

pub fn json_report<T: Serialize>(config: &RunConfig, model_hash: Option<&str>, passed: Option<bool>, result: &T) -> String {
    let doc = Report {
        tool: "cshap",
        version: VERSION,
        config,
        model_sha256: model_hash,
        passed,
        result,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
    s.push('\n');
    s
}

pub fn complex_csv(header: &str, meta: Option<&str>, phi: &CTensor) -> String {
    let mut s = String::from(header);
    if let Some(m) = meta {
        s += &format!("# meta {m}\n");
    }
    s += "index,re,im\n";
    for (k, z) in phi.data().iter().enumerate() {
        s += &format!("{k},{:e},{:e}\n", z.re, z.im);
    }
    s
}

pub fn real_csv(header: &str, values: &[f64]) -> String {
    let mut s = String::from(header);
    s += "index,value\n";
    for (k, v) in values.iter().enumerate() {
        s += &format!("{k},{v:e}\n");
    }
    s
}

/// Image width and height of a map: `[C, H, W]` stacks channels vertically,
/// `[H, W]` is itself, anything else is one row.
pub fn image_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [h, w] => (*w, *h),
        [c, h, w] => (*w, c * h),
        _ => (shape.iter().product(), 1),
    }
}

/// Plain (P2) graymap, min-max normalized to 0..=255; a constant map is
/// all zeros.
pub fn pgm(header: &str, values: &[f64], shape: &[usize]) -> String {
    let (w, h) = image_dims(shape);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut s = String::from("P2\n");
    s += header;
    s += &format!("{w} {h}\n255\n");
    for row in values.chunks(w.max(1)) {
        let px: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if span > 0.0 && span.is_finite() { (255.0 * (v - lo) / span).round() } else { 0.0 };
                (g as u8).to_string()
            })
            .collect();
        s += &px.join(" ");
        s.push('\n');
    }
    s
}

pub fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}
