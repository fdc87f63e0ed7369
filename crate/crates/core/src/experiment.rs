//! Experiment configuration, dispatch and persistence.
//!
//! A run reads one JSON [`ExperimentConfig`], executes the requested study and
//! writes its data files, a `results.json` and a `manifest.json` into the
//! output directory. Data files and `results.json` depend only on the config
//! and seed; timestamps, the thread count and the output location appear only
//! in the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::basis::{make_test_function, CoefficientVector, FunctionFamilySpec};
use crate::dgp::{generate_sample, DgpSpec, IvSample, ORACLE_DRAWS};
use crate::error::{Error, Result};
use crate::estimator::{adaptive_estimate, EstimatorConfig};
use crate::risk::{loss, oracle_summary};
use crate::rng::derive_seed;
use crate::study::{coverage_study, least_squares, oracle_ratio_study_with, rate_fit, risk_oracle, RiskCurve, RiskStudy};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Simulate,
    Estimate,
    RiskCurve,
    RateStudy,
    CoverageStudy,
    OracleStudy,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Simulate => "simulate",
            Study::Estimate => "estimate",
            Study::RiskCurve => "risk-curve",
            Study::RateStudy => "rate-study",
            Study::CoverageStudy => "coverage-study",
            Study::OracleStudy => "oracle-study",
        }
    }
}

/// The regression function, either as explicit coefficients or as a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSource {
    Coefficients(CoefficientVector),
    Family(FunctionFamilySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub t: f64,
    pub phi: PhiSource,
    #[serde(default)]
    pub g: CoefficientVector,
    #[serde(default)]
    pub a: f64,
    pub eta_sd: f64,
}

impl DgpConfig {
    pub fn to_spec(&self) -> Result<DgpSpec> {
        let phi = match &self.phi {
            PhiSource::Coefficients(c) => c.clone(),
            PhiSource::Family(f) => make_test_function(f)?,
        };
        let spec = DgpSpec {
            t: self.t,
            phi,
            g: self.g.clone(),
            a: self.a,
            eta_sd: self.eta_sd,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn smoothness(&self) -> Option<f64> {
        match &self.phi {
            PhiSource::Family(f) => f.smoothness(),
            PhiSource::Coefficients(_) => None,
        }
    }
}

impl Default for DgpConfig {
    /// Sobolev `s = 1`, `q = 2` regression with 64 coefficients, `t = 1`,
    /// `g` the first cosine, `a = 0.5`, `eta_sd = 0.5`.
    fn default() -> Self {
        DgpConfig {
            t: 1.0,
            phi: PhiSource::Family(FunctionFamilySpec::Sobolev {
                s: 1.0,
                q: Some(2.0),
                amplitude: 1.0,
                k_support: 64,
            }),
            g: CoefficientVector::new(vec![1.0]),
            a: 0.5,
            eta_sd: 0.5,
        }
    }
}

fn default_oracle_draws() -> usize {
    ORACLE_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Normally given by the subcommand; a conflicting value is an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(default)]
    pub dgp: DgpConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Draws for the `sigma_k^2` oracle behind the true risks.
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    /// Smoothness `s` for the rate fit when `phi` is not a Sobolev family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    /// CSV (`y,x,w`) to estimate from instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sample: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::InvalidConfig("n_grid must be nonempty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("n_grid must be strictly increasing".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::InvalidConfig("sample sizes must be >= 1".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be >= 1".into()));
        }
        if self.oracle_draws < 2 {
            return Err(Error::InvalidConfig("oracle_draws must be >= 2".into()));
        }
        self.dgp.to_spec()?;
        self.estimator.validate()
    }

    /// The config as recorded in `results.json`: no thread count, no output location.
    fn data_echo(&self, study: Study) -> Value {
        let mut echo = self.clone();
        echo.study = Some(study);
        echo.jobs = None;
        echo.output_dir = None;
        serde_json::to_value(echo).expect("config serializes")
    }
}

/// One emitted file and its checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub study: Study,
    pub config: Value,
    pub jobs: usize,
    pub started: String,
    pub finished: String,
    /// Values the run derived or limited on its own, e.g. the resolution cap.
    pub adjustments: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
}

/// Resolves the study from the subcommand and the config.
pub fn resolve_study(config: &ExperimentConfig, requested: Study) -> Result<Study> {
    match config.study {
        Some(s) if s != requested => Err(Error::InvalidConfig(format!(
            "config names study `{}` but `{}` was requested",
            s.name(),
            requested.name()
        ))),
        _ => Ok(requested),
    }
}

/// Runs the study named in `config.study`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let study = config
        .study
        .ok_or_else(|| Error::InvalidConfig("no study selected".into()))?;
    let started = chrono::Utc::now().to_rfc3339();
    config.validate()?;
    let out_dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("output_dir is not set".into()))?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let jobs = config.jobs.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let (mut files, results) = pool.install(|| dispatch(config, study))?;

    let results_doc = json!({
        "tool": TOOL_NAME,
        "study": study.name(),
        "config": config.data_echo(study),
        "results": results,
    });
    files.push(("results.json".to_string(), to_pretty_json(&results_doc)));

    let mut outputs = Vec::with_capacity(files.len());
    let mut paths = Vec::with_capacity(files.len() + 1);
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        outputs.push(OutputRecord {
            file: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        paths.push(path);
    }

    let mut full_echo = serde_json::to_value(config)?;
    full_echo["study"] = json!(study.name());
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        study,
        config: full_echo,
        jobs,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        adjustments: adjustments(config, study),
        outputs,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_atomic(&manifest_path, &to_pretty_json(&serde_json::to_value(&manifest)?))?;
    paths.push(manifest_path);
    Ok(RunOutcome {
        output_dir: out_dir,
        files: paths,
        manifest,
    })
}

fn adjustments(config: &ExperimentConfig, study: Study) -> Vec<String> {
    let mut notes = Vec::new();
    if study != Study::Simulate {
        for &n in &config.n_grid {
            if config.estimator.cap_limited_by_k_max(n) {
                notes.push(format!(
                    "n = {n}: resolution cap N = min(n^4, k_max) = k_max = {}",
                    config.estimator.k_max
                ));
            }
        }
    }
    if config.estimator.allow_empty_model {
        notes.push("m = 0 (empty model) admitted in the selection".to_string());
    }
    notes
}

type Files = Vec<(String, Vec<u8>)>;

fn dispatch(config: &ExperimentConfig, study: Study) -> Result<(Files, Value)> {
    let spec = config.dgp.to_spec()?;
    match study {
        Study::Simulate => simulate(config, &spec),
        Study::Estimate => estimate(config, &spec),
        Study::RiskCurve | Study::RateStudy | Study::OracleStudy => risk_studies(config, &spec, study),
        Study::CoverageStudy => coverage(config, &spec),
    }
}

fn simulate(config: &ExperimentConfig, spec: &DgpSpec) -> Result<(Files, Value)> {
    let mut files = Vec::new();
    let mut seeds = Vec::new();
    for &n in &config.n_grid {
        let seed = derive_seed(config.master_seed, Study::Simulate.name(), n as u64, 0);
        let sample = generate_sample(spec, n, seed)?;
        let mut buf = Vec::new();
        sample.write_csv(&mut buf)?;
        files.push((format!("sample_n{n}.csv"), buf));
        seeds.push(json!({ "n": n, "seed": seed }));
    }
    Ok((files, json!({ "samples": seeds })))
}

fn estimate(config: &ExperimentConfig, spec: &DgpSpec) -> Result<(Files, Value)> {
    let mut files = Vec::new();
    if let Some(path) = &config.input_sample {
        let sample = IvSample::read_csv_path(path)?;
        let report = adaptive_estimate(&sample, &config.estimator)?;
        files.push(("estimate.json".to_string(), to_pretty_json(&serde_json::to_value(&report)?)));
        files.push(("phi_star.csv".to_string(), report.phi_star_csv().into_bytes()));
        let summary = json!({ "n": report.n, "M": report.resolution, "m_star": report.m_star });
        return Ok((files, json!({ "input_sample": true, "estimates": [summary] })));
    }
    let mut summaries = Vec::new();
    for &n in &config.n_grid {
        let seed = derive_seed(config.master_seed, Study::Estimate.name(), n as u64, 0);
        let sample = generate_sample(spec, n, seed)?;
        let report = adaptive_estimate(&sample, &config.estimator)?;
        summaries.push(json!({
            "n": n,
            "seed": seed,
            "M": report.resolution,
            "m_star": report.m_star,
            "loss": loss(&report.phi_star, &spec.phi),
        }));
        files.push((format!("estimate_n{n}.json"), to_pretty_json(&serde_json::to_value(&report)?)));
        files.push((format!("phi_star_n{n}.csv"), report.phi_star_csv().into_bytes()));
    }
    Ok((files, json!({ "input_sample": false, "estimates": summaries })))
}

fn risk_studies(config: &ExperimentConfig, spec: &DgpSpec, study: Study) -> Result<(Files, Value)> {
    let oracle = risk_oracle(spec, config.oracle_draws)?;
    let result = oracle_ratio_study_with(spec, &config.estimator, &config.n_grid, config.reps, config.master_seed, &oracle)?;
    let mut files = vec![("risk_curve.csv".to_string(), risk_curve_csv(&result).into_bytes())];
    let mut doc = json!({
        "master_seed": config.master_seed,
        "oracle": { "draws": oracle.draws, "seed": oracle.seed, "sigma_sq": oracle.values, "stderr": oracle.stderr },
        "curve": result.curve,
        "ratio": result.ratio,
        "points": result.points,
    });
    match study {
        Study::RiskCurve => {
            files.push(("plot_data.csv".to_string(), plot_data_csv(&result.curve)?.into_bytes()));
        }
        Study::RateStudy => {
            let s = config.smoothness.or_else(|| config.dgp.smoothness()).ok_or_else(|| {
                Error::InvalidConfig("rate-study needs `smoothness` or a Sobolev phi family".into())
            })?;
            let fit = rate_fit(&result.curve, s, spec.t)?;
            files.push(("plot_data.csv".to_string(), plot_data_csv(&result.curve)?.into_bytes()));
            files.push(("rate_fit.json".to_string(), to_pretty_json(&serde_json::to_value(&fit)?)));
            doc["rate_fit"] = serde_json::to_value(&fit)?;
        }
        Study::OracleStudy => {
            let summaries = config
                .n_grid
                .iter()
                .map(|&n| oracle_summary(&spec.phi, spec.t, &oracle.values, n, None))
                .collect::<Result<Vec<_>>>()?;
            files.push(("oracle.csv".to_string(), oracle_csv(&result).into_bytes()));
            doc["oracle_summaries"] = serde_json::to_value(summaries)?;
        }
        _ => unreachable!("not a risk study"),
    }
    Ok((files, doc))
}

fn coverage(config: &ExperimentConfig, spec: &DgpSpec) -> Result<(Files, Value)> {
    let rows = config
        .n_grid
        .iter()
        .map(|&n| coverage_study(spec, &config.estimator, n, config.reps, config.master_seed))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("n,reps,hits,fraction,ci_low,ci_high,M0,M1,mean_M\n");
    for c in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            c.n, c.reps, c.hits, c.fraction, c.ci_low, c.ci_high, c.lower_bracket, c.upper_bracket, c.mean_resolution
        )
        .unwrap();
    }
    Ok((
        vec![("coverage.csv".to_string(), csv.into_bytes())],
        json!({ "master_seed": config.master_seed, "coverage": rows }),
    ))
}

/// One row per `n`: `n,mean_loss,stderr,oracle_risk,ratio`.
pub fn risk_curve_csv(study: &RiskStudy) -> String {
    let c = &study.curve;
    let mut csv = String::from("n,mean_loss,stderr,oracle_risk,ratio\n");
    for i in 0..c.len() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            c.n_grid[i], c.mean_loss[i], c.stderr[i], c.oracle_risk[i], study.ratio[i]
        )
        .unwrap();
    }
    csv
}

fn oracle_csv(study: &RiskStudy) -> String {
    let mut csv = String::from(
        "n,m0,M0,M1,gamma,inf_R0,inf_R,mean_loss,stderr,naive_mean_loss,naive_stderr,adaptive_over_naive,ratio,bracket_fraction,mean_m_star,mean_M\n",
    );
    for p in &study.points {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.n,
            p.m0,
            p.lower_bracket,
            p.upper_bracket,
            p.gamma,
            p.inf_r0,
            p.inf_r,
            p.mean_loss,
            p.stderr,
            p.naive_mean_loss,
            p.naive_stderr,
            p.adaptive_over_naive(),
            p.ratio,
            p.bracket_fraction,
            p.mean_m_star,
            p.mean_resolution
        )
        .unwrap();
    }
    csv
}

/// Two-block CSV: `data` rows `(log n, log mean_loss)` followed by two `fit`
/// rows, the least-squares line evaluated at the smallest and largest `log n`.
pub fn plot_data_csv(curve: &RiskCurve) -> Result<String> {
    curve.validate()?;
    let x: Vec<f64> = curve.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = curve.mean_loss.iter().map(|l| l.ln()).collect();
    let mut csv = String::from("block,log_n,log_mean_loss\n");
    for (a, b) in x.iter().zip(&y) {
        writeln!(csv, "data,{a},{b}").unwrap();
    }
    let (lo, hi) = (x[0], x[x.len() - 1]);
    let (slope, intercept) = if x.len() >= 2 {
        least_squares(&x, &y)?
    } else {
        (0.0, y[0])
    };
    for end in [lo, hi] {
        writeln!(csv, "fit,{end},{}", intercept + slope * end).unwrap();
    }
    Ok(csv)
}

/// Writes [`plot_data_csv`] to `path`; nothing is created if the curve is invalid.
pub fn emit_plot_data(curve: &RiskCurve, path: &Path) -> Result<()> {
    let csv = plot_data_csv(curve)?;
    write_atomic(path, csv.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_pretty_json(value: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("json value serializes");
    bytes.push(b'\n');
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
