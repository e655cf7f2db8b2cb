//! Command implementations.
//!
//! `explain` writes, per input `k` (counting across all input files):
//! `phi_<k>.csv` (`index,re,im` plus a `# meta` JSON line with the explained
//! output, `phi0`, `sum_phi` and the conservation error), `phi_<k>_reduced.csv`
//! (`index,value`), `phi_<k>.pgm`, and `explain.json` with every meta line.
//!
//! `evaluate` writes `evaluate.json` and either `channel_scores.csv`
//! (`saliency,median,mean,scored,skipped`) or `masking.csv`
//! (`saliency,fraction,masked_features,median,mean,count`).

use crate::output::{complex_csv, header_lines, json_report, pair, pgm, real_csv, RunConfig};
use crate::{AxiomsArgs, EvaluateArgs, ExplainArgs, OracleArgs, TrainArgs, VerifyArgs};
use cshap_core::cvnn::format::{load_tensors, write_atomic};
use cshap_core::cvnn::{model_hash, probe_mismatch, random_tensor};
use cshap_core::harness::{
    channel_experiment, channel_samples, check_axioms, data::digits_of_class, masking_suite, oracle_suite,
    train_toy as run_training, OracleSuiteConfig, Task, TrainConfig,
};
use cshap_core::method::{explain as run_explain, ExplainConfig, Objective};
use cshap_core::{load_model, reduce_saliency, save_model, CTensor, Error, Method, Model, OutputTarget, Reduction, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Core { context: Option<String>, source: Error },
    Usage(String),
    /// a check ran and did not pass
    Failed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core { source: Error::UnsupportedLayer { .. }, .. } => 3,
            CliError::Core { source: Error::Divergence { .. }, .. } => 1,
            CliError::Core { .. } | CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core { context: Some(c), source } => write!(f, "{c}: {source}"),
            CliError::Core { context: None, source } => write!(f, "{source}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        CliError::Core { context: None, source }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn at(path: &Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |source| CliError::Core {
        context: Some(path.display().to_string()),
        source,
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn read_model(path: &Path) -> Result<(Model, String)> {
    let model = load_model(path).map_err(at(path))?;
    let hash = model_hash(&model);
    Ok((model, hash))
}

/// Every tensor of every file, checked against `shape`.
fn read_tensors(paths: &[PathBuf], shape: &[usize]) -> Result<Vec<CTensor>> {
    let mut out = Vec::new();
    for p in paths {
        for (k, t) in load_tensors(p).map_err(at(p))?.into_iter().enumerate() {
            if t.shape() != shape {
                return Err(at(p)(Error::Validation(format!(
                    "tensor [{k}] has shape {:?}, the model expects {shape:?}",
                    t.shape()
                ))));
            }
            out.push(t);
        }
    }
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).map_err(at(path))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| at(path)(e.into()))
}

/// Writes a report to `path`, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ExplainMeta {
    input: usize,
    output: [f64; 2],
    phi0: Option<[f64; 2]>,
    sum_phi: [f64; 2],
    /// `|Σφ + φ₀ − output|` for methods with a `φ₀`
    conservation_error: Option<f64>,
}

struct ExplainFiles {
    complex: String,
    reduced: String,
    image: String,
    meta: ExplainMeta,
}

pub fn explain(a: ExplainArgs) -> Result<()> {
    let (model, hash) = read_model(&a.model)?;
    let inputs = read_tensors(&a.input, model.input_shape())?;
    let references = read_tensors(&a.reference, model.input_shape())?;
    let objective = Objective::Output(OutputTarget {
        index: a.output_index,
        part: a.part.into(),
    });
    objective.check(&model)?;
    let reduction: Reduction = a.reduce.into();
    let mut config = ExplainConfig {
        steps: a.steps,
        baseline: references.first().cloned(),
        references: references.clone(),
        ..ExplainConfig::default()
    };
    config.deepcshap.maxpool.enum_cap = a.enum_cap;

    let mut run = RunConfig::new("explain");
    run.model = Some(show(&a.model));
    run.inputs = a.input.iter().map(|p| show(p)).collect();
    run.references = a.reference.iter().map(|p| show(p)).collect();
    run.method = Some(a.method.name().into());
    run.reduction = Some(reduction.short_name());
    run.output = Some(show(&a.output));
    run.steps = Some(a.steps);
    run.enum_cap = Some(a.enum_cap);
    run.set("output_index", a.output_index);
    run.set("part", format!("{:?}", a.part).to_lowercase());
    let header = header_lines(&run, Some(&hash));

    let files: Vec<ExplainFiles> = inputs
        .par_iter()
        .enumerate()
        .map(|(k, x)| -> Result<ExplainFiles> {
            let e = run_explain(&model, x, &objective, a.method, &config)?;
            let output = objective.value(&model.predict(x)?);
            let sum: C64 = cshap_core::complex::neumaier_sum(e.phi.data().iter().copied());
            let meta = ExplainMeta {
                input: k,
                output: pair(output),
                phi0: e.phi0.map(pair),
                sum_phi: pair(sum),
                conservation_error: e.phi0.map(|p0| (sum + p0 - output).norm()),
            };
            let values = if a.method == Method::DeepCshap && objective.is_real() {
                e.phi.data().iter().map(|z| z.re).collect()
            } else {
                reduce_saliency(&e.phi, reduction)
            };
            let meta_line = serde_json::to_string(&meta).expect("meta serializes");
            Ok(ExplainFiles {
                complex: complex_csv(&header, Some(&meta_line), &e.phi),
                reduced: real_csv(&header, &values),
                image: pgm(&header, &values, x.shape()),
                meta,
            })
        })
        .collect::<Result<_>>()?;

    make_dir(&a.output)?;
    for (k, f) in files.iter().enumerate() {
        write(&a.output.join(format!("phi_{k:04}.csv")), &f.complex)?;
        write(&a.output.join(format!("phi_{k:04}_reduced.csv")), &f.reduced)?;
        write(&a.output.join(format!("phi_{k:04}.pgm")), &f.image)?;
    }
    let metas: Vec<&ExplainMeta> = files.iter().map(|f| &f.meta).collect();
    write(&a.output.join("explain.json"), &json_report(&run, Some(&hash), None, &metas))
}

/// Random inputs around `reference`: each feature copies it with
/// probability `missing`, otherwise is a unit complex Gaussian.
pub fn random_inputs(reference: &CTensor, count: usize, missing: f64, seed: u64) -> Vec<CTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let noise = random_tensor(reference.shape(), 1.0, &mut rng);
            let data = noise
                .data()
                .iter()
                .zip(reference.data())
                .map(|(&z, &r)| if rng.random::<f64>() < missing { r } else { z })
                .collect();
            CTensor::new(reference.shape().to_vec(), data).expect("shape of the reference")
        })
        .collect()
}

#[derive(Serialize)]
struct AxiomsResult {
    #[serde(flatten)]
    report: cshap_core::harness::AxiomReport,
    tolerance: f64,
}

pub fn axioms(a: AxiomsArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.missing) {
        return Err(CliError::usage(format!("--missing must be in [0, 1], got {}", a.missing)));
    }
    let (model, hash) = read_model(&a.model)?;
    let mut references = read_tensors(&a.reference, model.input_shape())?;
    if references.is_empty() {
        references.push(CTensor::zeros(model.input_shape()));
    }
    let inputs = if a.input.is_empty() {
        random_inputs(&references[0], a.samples, a.missing, a.seed)
    } else {
        read_tensors(&a.input, model.input_shape())?
    };
    let config = ExplainConfig {
        steps: a.steps,
        ..ExplainConfig::default()
    };
    let report = check_axioms(&model, &inputs, &references, a.method, &config)?;
    let passed = report.relative_error <= a.tolerance && report.missingness_error_fraction == 0.0;

    let mut run = RunConfig::new("axioms");
    run.model = Some(show(&a.model));
    run.inputs = a.input.iter().map(|p| show(p)).collect();
    run.references = a.reference.iter().map(|p| show(p)).collect();
    run.method = Some(a.method.name().into());
    run.output = a.output.as_deref().map(show);
    run.steps = Some(a.steps);
    run.seed = Some(a.seed);
    if a.input.is_empty() {
        run.set("samples", a.samples);
        run.set("missing", a.missing);
    }
    run.set("tolerance", a.tolerance);
    let result = AxiomsResult {
        report,
        tolerance: a.tolerance,
    };
    emit(a.output.as_deref(), &json_report(&run, Some(&hash), Some(passed), &result))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "relative error {:e} (tolerance {:e}), missingness error {}",
            result.report.relative_error, a.tolerance, result.report.missingness_error_fraction
        )))
    }
}

fn check_task_model(task: Task, model: &Model) -> Result<()> {
    if model.input_shape() != task.input_shape().as_slice() || model.output_len() != task.classes() {
        return Err(Error::Validation(format!(
            "task {} needs input {:?} and {} outputs; the model has {:?} and {}",
            task.name(),
            task.input_shape(),
            task.classes(),
            model.input_shape(),
            model.output_len()
        ))
        .into());
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (model, hash) = read_model(&a.model)?;
    check_task_model(a.task, &model)?;
    let config = ExplainConfig {
        steps: a.steps,
        ..ExplainConfig::default()
    };
    let mut run = RunConfig::new("evaluate");
    run.model = Some(show(&a.model));
    run.output = Some(show(&a.output));
    run.steps = Some(a.steps);
    run.seed = Some(a.seed);
    run.set("task", a.task.name());
    match a.task {
        Task::TwoChannelSynthetic => {
            let samples = a.samples.unwrap_or(200);
            run.set("samples", samples);
            let data = a.task.generate(samples, a.seed);
            let result = channel_experiment(&model, &channel_samples(&data), &config)?;
            let mut csv = header_lines(&run, Some(&hash));
            csv += "saliency,median,mean,scored,skipped\n";
            for r in &result.results {
                csv += &format!("{},{:e},{:e},{},{}\n", r.saliency, r.median, r.mean, r.scores.len(), r.skipped);
            }
            make_dir(&a.output)?;
            write(&a.output.join("channel_scores.csv"), &csv)?;
            write(&a.output.join("evaluate.json"), &json_report(&run, Some(&hash), None, &result))
        }
        Task::MiniDigits => {
            let samples = a.samples.unwrap_or(50);
            for d in [a.source, a.target] {
                if d >= 10 {
                    return Err(CliError::usage(format!("digit {d} out of range 0..=9")));
                }
            }
            run.set("samples", samples);
            run.set("fractions", &a.fraction);
            run.set("source", a.source);
            run.set("target", a.target);
            let images = digits_of_class(a.source, samples, a.seed);
            let result = masking_suite(&model, &images, a.source, a.target, &a.fraction, &config, a.seed)?;
            let mut csv = header_lines(&run, Some(&hash));
            csv += "saliency,fraction,masked_features,median,mean,count\n";
            for r in &result.results {
                csv += &format!(
                    "{},{},{},{:e},{:e},{}\n",
                    r.saliency,
                    r.fraction,
                    r.masked_features,
                    r.median,
                    r.mean,
                    r.changes.len()
                );
            }
            make_dir(&a.output)?;
            write(&a.output.join("masking.csv"), &csv)?;
            write(&a.output.join("evaluate.json"), &json_report(&run, Some(&hash), None, &result))
        }
    }
}

pub fn oracle_check(a: OracleArgs) -> Result<()> {
    let config = OracleSuiteConfig {
        cases: a.cases,
        seed: a.seed,
    };
    let report = oracle_suite(&config)?;
    for c in &report.checks {
        eprintln!(
            "{} {:<40} cases={:<5} max_error={:.3e} tolerance={:.0e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.max_error,
            c.tolerance
        );
    }
    let mut run = RunConfig::new("oracle-check");
    run.output = a.output.as_deref().map(show);
    run.seed = Some(a.seed);
    run.set("cases", a.cases);
    emit(a.output.as_deref(), &json_report(&run, None, Some(report.passed), &report))?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct TrainResult<'a> {
    train: &'a TrainConfig,
    train_accuracy: f64,
    final_loss: f64,
    losses: &'a [f64],
}

/// `dir/name.json` → `dir/name.train.json`.
pub fn sidecar_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("train.json")
}

pub fn train_toy(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::for_task(a.task, a.seed);
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden = v;
    }
    let report = run_training(a.task, &cfg)?;
    save_model(&report.model, &a.output).map_err(at(&a.output))?;
    let hash = model_hash(&report.model);
    let mut run = RunConfig::new("train-toy");
    run.output = Some(show(&a.output));
    run.seed = Some(a.seed);
    run.set("task", a.task.name());
    let result = TrainResult {
        train: &cfg,
        train_accuracy: report.train_accuracy,
        final_loss: report.final_loss,
        losses: &report.losses,
    };
    write(&sidecar_path(&a.output), &json_report(&run, Some(&hash), None, &result))?;
    eprintln!(
        "trained {} for {} epochs: train accuracy {:.4}, loss {:.4e}",
        a.task.name(),
        cfg.epochs,
        report.train_accuracy,
        report.final_loss
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifyResult {
    probes: usize,
    max_relative_error: f64,
    tolerance: f64,
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let (model, hash) = read_model(&a.model)?;
    let probes = read_tensors(std::slice::from_ref(&a.input), model.input_shape())?;
    let expected = load_tensors(&a.expected).map_err(at(&a.expected))?;
    let err = probe_mismatch(&model, &probes, &expected).map_err(at(&a.expected))?;
    let passed = err <= a.tolerance;
    let mut run = RunConfig::new("verify");
    run.model = Some(show(&a.model));
    run.inputs = vec![show(&a.input)];
    run.output = a.output.as_deref().map(show);
    run.set("expected", show(&a.expected));
    run.set("tolerance", a.tolerance);
    let result = VerifyResult {
        probes: probes.len(),
        max_relative_error: err,
        tolerance: a.tolerance,
    };
    emit(a.output.as_deref(), &json_report(&run, Some(&hash), Some(passed), &result))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("max relative error {err:e} exceeds {:e}", a.tolerance)))
    }
}
