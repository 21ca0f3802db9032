//! Batch scenarios with seed control and CSV/JSON reports.

mod report;
mod scenarios;

pub use report::{Assertion, Cell, Row, RunReport, Status};
pub use scenarios::{HARNESS_SEEDS, SUBSET_CALIBRATION_N};

use crate::functional::FunctionalError;
use crate::measure::{sample_gaussian, sample_laplace_product, sample_uniform_cube, DiscreteMeasure, MeasureError, DEFAULT_PAIR_CAP};
use crate::position::PositionError;
use crate::rng::SeedStream;
use crate::sphere_kernel::KernelError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 20_240_917;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Position(#[from] PositionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    CubeScan,
    Subset,
    Thm5,
    Identities,
    ThirdMoment,
    Moments,
    Position,
    Var,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::CubeScan,
        Scenario::Subset,
        Scenario::Thm5,
        Scenario::Identities,
        Scenario::ThirdMoment,
        Scenario::Moments,
        Scenario::Position,
        Scenario::Var,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::CubeScan => "cube-scan",
            Scenario::Subset => "subset",
            Scenario::Thm5 => "thm5",
            Scenario::Identities => "identities",
            Scenario::ThirdMoment => "third-moment",
            Scenario::Moments => "moments",
            Scenario::Position => "position",
            Scenario::Var => "var",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| LabError::Invalid(format!("unknown scenario '{s}'")))
    }
}

/// Sampled measure families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Laplace,
    UniformCube,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Laplace, Family::UniformCube];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Laplace => "laplace",
            Family::UniformCube => "uniform-cube",
        }
    }

    pub fn sample(self, n: usize, count: usize, stream: &SeedStream) -> Result<DiscreteMeasure, MeasureError> {
        match self {
            Family::Gaussian => sample_gaussian(n, count, stream),
            Family::Laplace => sample_laplace_product(n, count, stream),
            Family::UniformCube => sample_uniform_cube(n, count, stream),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Family::Gaussian => 1,
            Family::Laplace => 2,
            Family::UniformCube => 3,
        }
    }
}

impl FromStr for Family {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| LabError::Invalid(format!("unknown family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(LabError::Invalid(format!("unknown format '{other}'"))),
        }
    }
}

/// Deliberate errors for sensitivity runs of the identity suite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tamper {
    /// Multiplies `Ω_n` in the random-rotation checks.
    pub omega_factor: Option<f64>,
    /// Replaces the ψ cubic coefficient in the expansion row.
    pub psi_cubic: Option<f64>,
}

/// One batch run. Empty or `None` fields take scenario defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub dims: Vec<usize>,
    pub samples: Option<usize>,
    pub seed: u64,
    pub p_values: Vec<f64>,
    pub tol: Option<f64>,
    /// Atom count: subset size, sampled-family size or optimiser input size.
    pub atoms: Option<usize>,
    /// `N = factor · n²` in the thm5 scenario.
    pub atoms_factor: Option<f64>,
    pub delta: Option<f64>,
    pub seeds: Option<usize>,
    pub families: Vec<Family>,
    pub measure: Option<PathBuf>,
    pub tamper: Tamper,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: OutputFormat,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentSpec {
            scenario,
            dims: Vec::new(),
            samples: None,
            seed: DEFAULT_SEED,
            p_values: Vec::new(),
            tol: None,
            atoms: None,
            atoms_factor: None,
            delta: None,
            seeds: None,
            families: Vec::new(),
            measure: None,
            tamper: Tamper::default(),
            threads: None,
            out: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Invalid(m));
        let min_dim = match self.scenario {
            Scenario::Identities => 3,
            Scenario::Moments | Scenario::Position => 2,
            _ => 1,
        };
        if let Some(&n) = self.dims.iter().find(|&&n| n < min_dim || n > 1 << 16) {
            return bad(format!("dimension {n} outside [{min_dim}, 65536] for {}", self.scenario));
        }
        if let Some(s) = self.samples {
            let min = if self.scenario == Scenario::Thm5 { crate::functional::MIN_ORLICZ_SAMPLES } else { 2 };
            if s < min {
                return bad(format!("--samples {s} is below {min}"));
            }
        }
        if let Some(&p) = self.p_values.iter().find(|p| !(p.is_finite() && **p >= 1.0)) {
            return bad(format!("p = {p} must be a finite value >= 1"));
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("--tol {t} must be positive"));
            }
        }
        if self.atoms == Some(0) {
            return bad("--atoms must be positive".into());
        }
        if let Some(f) = self.atoms_factor {
            if !(f.is_finite() && f > 0.0) {
                return bad(format!("--atoms-factor {f} must be positive"));
            }
        }
        if let Some(d) = self.delta {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("--delta {d} must be >= 0"));
            }
        }
        if self.seeds == Some(0) {
            return bad("--seeds must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("--threads must be positive".into());
        }
        if let Some(f) = self.tamper.omega_factor {
            if !(f.is_finite() && f > 0.0) {
                return bad(format!("Ω tamper factor {f} must be positive"));
            }
        }
        if let Some(c) = self.tamper.psi_cubic {
            if !c.is_finite() {
                return bad("ψ tamper coefficient must be finite".into());
            }
        }
        if let Some(path) = &self.measure {
            if !path.is_file() {
                return bad(format!("measure file {} does not exist", path.display()));
            }
        }
        match self.scenario {
            Scenario::Subset => {
                let delta = self.delta.unwrap_or(scenarios::SUBSET_DEFAULT_DELTA);
                for &n in self.dims.iter().chain([SUBSET_CALIBRATION_N].iter()) {
                    let count = self.atoms.unwrap_or_else(|| scenarios::subset_size(n, delta));
                    if count > DEFAULT_PAIR_CAP {
                        return bad(format!("subset size {count} at n = {n} exceeds the pair cap {DEFAULT_PAIR_CAP}"));
                    }
                }
            }
            Scenario::Thm5 => {
                let factor = self.atoms_factor.unwrap_or(scenarios::THM5_ATOMS_FACTOR);
                if let Some(&n) = self.dims.iter().find(|&&n| n < 2) {
                    return bad(format!("thm5 needs n >= 2, got {n}"));
                }
                if let Some(&n) = self.dims.iter().find(|&&n| factor * (n * n) as f64 > 1e7) {
                    return bad(format!("thm5 atom count at n = {n} exceeds 10^7"));
                }
            }
            Scenario::CubeScan => {
                if self.measure.is_some() || !self.families.is_empty() {
                    return bad("cube-scan takes neither --measure nor --family".into());
                }
            }
            Scenario::Var if self.measure.is_none() && !self.dims.is_empty() => {
                return bad("var without --measure runs the fixed inequality harness and takes no --n".into());
            }
            _ => {}
        }
        if self.measure.is_some() && !matches!(self.scenario, Scenario::ThirdMoment | Scenario::Moments | Scenario::Var) {
            return bad(format!("--measure is not used by {}", self.scenario));
        }
        Ok(())
    }

    pub(crate) fn stream(&self) -> SeedStream {
        SeedStream::new(self.seed)
    }

    pub(crate) fn family_stream(&self, family: Family, n: usize, seed_index: u64) -> SeedStream {
        self.stream().fork(family.tag()).fork(n as u64).fork(seed_index)
    }
}

/// Validates `spec`, runs it (on a pool of `spec.threads` workers when set)
/// and returns the report. Nothing is written to disk.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport, LabError> {
    spec.validate()?;
    match spec.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| LabError::ThreadPool(e.to_string()))?
            .install(|| run_validated(spec)),
        None => run_validated(spec),
    }
}

fn run_validated(spec: &ExperimentSpec) -> Result<RunReport, LabError> {
    let start = Instant::now();
    let outcome = match spec.scenario {
        Scenario::CubeScan => scenarios::cube_scan(spec)?,
        Scenario::Subset => scenarios::subset(spec)?,
        Scenario::Thm5 => scenarios::thm5(spec)?,
        Scenario::Identities => scenarios::identities(spec)?,
        Scenario::ThirdMoment => scenarios::third_moment(spec)?,
        Scenario::Moments => scenarios::moments(spec)?,
        Scenario::Position => scenarios::position(spec)?,
        Scenario::Var => scenarios::var(spec)?,
    };
    let all_pass = outcome.assertions.iter().all(|a| a.pass);
    Ok(RunReport {
        scenario: spec.scenario.as_str().to_string(),
        version: VERSION.to_string(),
        seed: spec.seed,
        spec: serde_json::to_value(spec).expect("spec serialises"),
        rows: outcome.rows,
        assertions: outcome.assertions,
        all_pass,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Writes `<base>.json` and `<base>.csv`, where `base` is `path` without
/// its extension. Returns both paths.
pub fn write_outputs(report: &RunReport, path: &Path) -> Result<(PathBuf, PathBuf), LabError> {
    let json = path.with_extension("json");
    let csv = path.with_extension("csv");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&json, report.to_json())?;
    report.write_csv(std::fs::File::create(&csv)?)?;
    Ok((json, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.as_str().parse::<Scenario>().unwrap(), sc);
            assert_eq!(serde_json::to_value(sc).unwrap(), sc.as_str());
        }
        assert!("cube_scan".parse::<Scenario>().is_err());
        assert!("gauss".parse::<Family>().is_err());
    }

    #[test]
    fn validation_rejects_before_running() {
        let mut s = ExperimentSpec::new(Scenario::Subset);
        s.dims = vec![40];
        s.delta = Some(1.5);
        assert!(matches!(run(&s), Err(LabError::Invalid(_))));
        let mut s = ExperimentSpec::new(Scenario::Identities);
        s.dims = vec![2];
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Scenario::Position);
        s.p_values = vec![0.5];
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Scenario::Var);
        s.measure = Some("/definitely/not/here.csv".into());
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Scenario::CubeScan);
        s.threads = Some(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn outputs_agree() {
        let mut s = ExperimentSpec::new(Scenario::CubeScan);
        s.dims = vec![1, 2, 3, 7];
        let r = run(&s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = write_outputs(&r, &dir.path().join("scan.out")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        let mut rd = csv::Reader::from_path(c).unwrap();
        let header = rd.headers().unwrap().clone();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.unwrap();
            for (k, field) in header.iter().zip(rec.iter()).skip(1) {
                let v = &json["rows"][i][k];
                let expect = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                assert_eq!(field, expect, "column {k}");
            }
        }
    }
}
