//! Parameter sweeps driven by a JSON experiment description, and their
//! CSV/JSON output.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, sample_scenario, FadingProfile, SystemConfig};
use crate::error::{Error, Result};
use crate::optimizer::{
    lower_bound_pipeline, optimize_uniform, random_pilot_pipeline, upper_bound_pipeline, DesignPoint,
    PipelineOptions,
};

/// Environment variable that caps the sweep worker pool.
pub const WORKERS_ENV: &str = "MIMO_WORKERS";

pub const CSV_HEADER: &str = "swept,design,rate,ci,alpha_opt,active_users";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "K", alias = "k")]
    K,
    #[serde(rename = "rho0_db")]
    Rho0Db,
    #[serde(rename = "N", alias = "n")]
    N,
    #[serde(rename = "alpha")]
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Upper,
    Lower,
    UniformExact,
    RandomPilot,
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Upper => "upper",
            Design::Lower => "lower",
            Design::UniformExact => "uniform_exact",
            Design::RandomPilot => "random_pilot",
        }
    }

    pub fn from_name(s: &str) -> Option<Design> {
        [Design::Upper, Design::Lower, Design::UniformExact, Design::RandomPilot]
            .into_iter()
            .find(|d| d.name() == s)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FadingMode {
    /// Users dropped uniformly in a disk; `seed` defaults to the master seed.
    Scenario {
        radius: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Uniform { d: f64 },
}

/// Problem size presets for parameters a spec leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn antennas(&self) -> usize {
        match self {
            Scale::Desk => 50,
            Scale::Paper => 100,
        }
    }

    pub fn coherence(&self) -> usize {
        match self {
            Scale::Desk => 100,
            Scale::Paper => 200,
        }
    }
}

pub const DEFAULT_TRIALS: usize = 500;

/// Parameters held fixed across a sweep. Missing sizes come from the
/// [`Scale`] preset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedParams {
    pub n_antennas: Option<usize>,
    pub n_users: Option<usize>,
    pub coherence: Option<usize>,
    /// Pins the training fraction; otherwise it is searched.
    pub alpha: Option<f64>,
    pub rho0_db: Option<f64>,
    pub p0: Option<f64>,
    /// Ties the antenna count to the user count, `N = K/β`.
    pub beta: Option<f64>,
}

/// One sweep, as read from a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default)]
    pub fixed: FixedParams,
    pub fading: FadingMode,
    pub designs: Vec<Design>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Grid spacing of the training-length search, in symbols.
    #[serde(default)]
    pub alpha_step: Option<usize>,
    /// Uniform designs pick their own user count instead of `K`.
    #[serde(default)]
    pub optimize_users: bool,
    #[serde(default)]
    pub scale: Scale,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read spec {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.name.trim().is_empty() {
            bad.push("name: must not be empty".to_string());
        }
        if self.values.is_empty() {
            bad.push("values: must not be empty".to_string());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            bad.push("values: must be finite".to_string());
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            bad.push("values: must be strictly increasing".to_string());
        }
        if matches!(self.sweep, SweepVariable::K | SweepVariable::N)
            && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            bad.push("values: user and antenna counts must be positive integers".to_string());
        }
        if self.sweep == SweepVariable::Alpha && self.values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            bad.push("values: alpha must lie in (0, 1)".to_string());
        }
        if self.designs.is_empty() {
            bad.push("designs: must list at least one design".to_string());
        }
        let mut seen = Vec::new();
        for d in &self.designs {
            if seen.contains(d) {
                bad.push(format!("designs: {d} listed twice"));
            }
            seen.push(*d);
        }
        if self.trials == Some(0) {
            bad.push("trials: must be positive".to_string());
        }
        if self.alpha_step == Some(0) {
            bad.push("alpha_step: must be positive".to_string());
        }
        match self.fading {
            FadingMode::Scenario { radius, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    bad.push("fading.radius: must be positive".to_string());
                }
                if self.designs.contains(&Design::UniformExact) {
                    bad.push("designs: uniform_exact needs uniform fading".to_string());
                }
            }
            FadingMode::Uniform { d } => {
                if !(d > 0.0 && d.is_finite()) {
                    bad.push("fading.d: must be positive".to_string());
                }
            }
        }
        if self.sweep != SweepVariable::K && self.fixed.n_users.is_none() {
            bad.push("fixed.n_users: required unless sweeping K".to_string());
        }
        if self.sweep != SweepVariable::Rho0Db && self.fixed.rho0_db.is_none() {
            bad.push("fixed.rho0_db: required unless sweeping rho0_db".to_string());
        }
        if let Some(b) = self.fixed.beta {
            if !(b > 0.0 && b.is_finite()) {
                bad.push("fixed.beta: must be positive".to_string());
            }
            if self.sweep == SweepVariable::N || self.fixed.n_antennas.is_some() {
                bad.push("fixed.beta: conflicts with an explicit antenna count".to_string());
            }
        }
        if let Some(p) = self.fixed.p0 {
            if !(p > 0.0 && p.is_finite()) {
                bad.push("fixed.p0: must be positive".to_string());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }

    /// Configuration, fading and grid options for one swept value.
    pub fn point(&self, value: f64) -> Result<(SystemConfig, FadingProfile, PipelineOptions)> {
        let f = &self.fixed;
        let mut k = f.n_users.unwrap_or(0);
        let mut n = f.n_antennas.unwrap_or(self.scale.antennas());
        let t = f.coherence.unwrap_or(self.scale.coherence());
        let mut rho_db = f.rho0_db.unwrap_or(0.0);
        let mut alpha = f.alpha;
        match self.sweep {
            SweepVariable::K => k = value as usize,
            SweepVariable::N => n = value as usize,
            SweepVariable::Rho0Db => rho_db = value,
            SweepVariable::Alpha => alpha = Some(value),
        }
        if let Some(b) = f.beta {
            n = ((k as f64 / b).round() as usize).max(1);
        }
        let p0 = f.p0.unwrap_or(1.0);
        // α is searched unless pinned; any valid value does for construction
        let a0 = alpha.unwrap_or(1.0 / t.max(2) as f64);
        let cfg = SystemConfig::new(n, k, t, a0, p0, p0 / db_to_linear(rho_db))?;
        let fading = match self.fading {
            FadingMode::Scenario { radius, seed } => sample_scenario(k, radius, seed.unwrap_or(self.seed))?,
            FadingMode::Uniform { d } => FadingProfile::uniform(k, d)?,
        };
        let mut opts = PipelineOptions { trials: self.trials(), seed: self.seed, ..PipelineOptions::default() };
        if let Some(s) = self.alpha_step {
            opts.alpha_step = s;
        }
        if alpha.is_some() {
            opts = opts.at_training_len(cfg.training_len(), t);
        }
        Ok((cfg, fading, opts))
    }
}

/// Outcome of one design at one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub design: Design,
    pub rate: Option<f64>,
    pub ci: Option<f64>,
    pub alpha_opt: Option<f64>,
    pub active_users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DesignResult {
    fn from_point(design: Design, p: &DesignPoint) -> Self {
        DesignResult {
            design,
            rate: Some(p.rate.rate_bits_per_symbol),
            ci: p.rate.ci_halfwidth,
            alpha_opt: Some(p.alpha),
            active_users: Some(p.active_set.len()),
            error: None,
        }
    }

    fn failed(design: Design, e: &Error) -> Self {
        DesignResult { design, rate: None, ci: None, alpha_opt: None, active_users: None, error: Some(e.to_string()) }
    }
}

/// All designs at one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept: f64,
    pub results: Vec<DesignResult>,
}

fn run_design(design: Design, cfg: &SystemConfig, fading: &FadingProfile, opts: &PipelineOptions, spec: &ExperimentSpec) -> Result<DesignPoint> {
    match design {
        Design::Upper => upper_bound_pipeline(cfg, fading, opts),
        Design::Lower => lower_bound_pipeline(cfg, fading, opts),
        Design::RandomPilot => random_pilot_pipeline(cfg, fading, opts),
        Design::UniformExact => {
            let d = fading.d[0];
            let k = (!spec.optimize_users).then_some(cfg.n_users);
            optimize_uniform(cfg, d, k, opts)
        }
    }
}

fn run_row(spec: &ExperimentSpec, value: f64) -> SweepRow {
    let results = match spec.point(value) {
        Ok((cfg, fading, opts)) => spec
            .designs
            .iter()
            .map(|&d| match run_design(d, &cfg, &fading, &opts, spec) {
                Ok(p) => DesignResult::from_point(d, &p),
                Err(e) => DesignResult::failed(d, &e),
            })
            .collect(),
        Err(e) => spec.designs.iter().map(|&d| DesignResult::failed(d, &e)).collect(),
    };
    SweepRow { swept: value, results }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every swept value, in parallel on a pool of `workers` threads
/// (or the [`WORKERS_ENV`] setting, or all cores), and writes
/// `<output>.csv` and `<output>.json` when the spec names an output.
///
/// Failures of individual designs are recorded in their rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    run_experiment_with(spec, workers_from_env())
}

pub fn run_experiment_with(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| spec.values.par_iter().map(|&v| run_row(spec, v)).collect());
    if let Some(out) = &spec.output {
        emit_csv(&rows, &out.with_extension("csv"))?;
        emit_json(&rows, &out.with_extension("json"))?;
    }
    Ok(rows)
}

fn fmt_float(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// CSV text, one line per (row, design).
pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for row in rows {
        for r in &row.results {
            w.write_record([
                format!("{:.16e}", row.swept),
                r.design.name().to_string(),
                fmt_float(r.rate),
                fmt_float(r.ci),
                fmt_float(r.alpha_opt),
                r.active_users.map(|n| n.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Validation("no rows to write".into()));
    }
    write_file(path, csv_string(rows)?.as_bytes())
}

pub fn emit_json(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Validation("no rows to write".into()));
    }
    let mut text = serde_json::to_string_pretty(rows).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_opt<T: std::str::FromStr>(field: &str, what: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::Validation(format!("bad {what} value {field:?}")))
}

/// Reads rows back from [`csv_string`] output. Error messages are not
/// part of the CSV and come back as an empty string.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Validation(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Validation(format!("unexpected CSV header, want {CSV_HEADER}")));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Validation(e.to_string()))?;
        let swept: f64 = parse_opt(&rec[0], "swept")?.ok_or_else(|| Error::Validation("missing swept value".into()))?;
        let design = Design::from_name(&rec[1]).ok_or_else(|| Error::Validation(format!("unknown design {:?}", &rec[1])))?;
        let rate = parse_opt(&rec[2], "rate")?;
        let result = DesignResult {
            design,
            rate,
            ci: parse_opt(&rec[3], "ci")?,
            alpha_opt: parse_opt(&rec[4], "alpha_opt")?,
            active_users: parse_opt(&rec[5], "active_users")?,
            error: rate.is_none().then(String::new),
        };
        match rows.last_mut() {
            Some(last) if last.swept.to_bits() == swept.to_bits() => last.results.push(result),
            _ => rows.push(SweepRow { swept, results: vec![result] }),
        }
    }
    Ok(rows)
}

pub fn parse_json(text: &str) -> Result<Vec<SweepRow>> {
    serde_json::from_str(text).map_err(|e| Error::Validation(format!("sweep rows: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_json(designs: &str) -> String {
        format!(
            r#"{{"name":"t","sweep":"K","values":[4,6],"fixed":{{"n_antennas":8,"coherence":20,"rho0_db":40}},
               "fading":{{"mode":"scenario","radius":100}},"designs":{designs},"trials":30,"seed":3,"alpha_step":4}}"#
        )
    }

    #[test]
    fn empty_designs_rejected() {
        let e = ExperimentSpec::from_json(&spec_json("[]")).unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("designs"));
    }

    #[test]
    fn values_must_increase() {
        let text = spec_json(r#"["lower"]"#).replace("[4,6]", "[6,4]");
        assert!(ExperimentSpec::from_json(&text).unwrap_err().to_string().contains("strictly increasing"));
    }

    #[test]
    fn uniform_design_needs_uniform_fading() {
        assert!(ExperimentSpec::from_json(&spec_json(r#"["uniform_exact"]"#)).is_err());
    }

    #[test]
    fn run_is_deterministic_across_worker_counts() {
        let spec = ExperimentSpec::from_json(&spec_json(r#"["upper","lower","random_pilot"]"#)).unwrap();
        let a = run_experiment_with(&spec, Some(1)).unwrap();
        let b = run_experiment_with(&spec, Some(3)).unwrap();
        assert_eq!(csv_string(&a).unwrap(), csv_string(&b).unwrap());
        assert_eq!(a.len(), 2);
        for row in &a {
            assert_eq!(row.results.len(), 3);
            assert!(row.results.iter().all(|r| r.rate.is_some_and(|x| x.is_finite() && x >= 0.0)));
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow {
                swept: 10.0,
                results: vec![
                    DesignResult { design: Design::Upper, rate: Some(1.0 / 3.0), ci: Some(1e-3), alpha_opt: Some(0.15), active_users: Some(7), error: None },
                    DesignResult { design: Design::UniformExact, rate: Some(2.5), ci: None, alpha_opt: Some(0.2), active_users: Some(9), error: None },
                ],
            },
            SweepRow {
                swept: 20.0,
                results: vec![DesignResult { design: Design::Lower, rate: Some(0.1 + 0.2), ci: Some(0.0), alpha_opt: Some(0.3), active_users: Some(3), error: None }],
            },
        ];
        let text = csv_string(&rows).unwrap();
        assert!(text.starts_with("swept,design,rate,ci,alpha_opt,active_users\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(!text.contains('\r'));
        assert_eq!(parse_csv(&text).unwrap(), rows);
        let json = serde_json::to_string(&rows).unwrap();
        assert_eq!(parse_json(&json).unwrap(), rows);
    }

    #[test]
    fn one_row_one_design_is_two_lines() {
        let rows = vec![SweepRow {
            swept: 1.0,
            results: vec![DesignResult { design: Design::Lower, rate: Some(1.0), ci: Some(0.1), alpha_opt: Some(0.1), active_users: Some(1), error: None }],
        }];
        assert_eq!(csv_string(&rows).unwrap().lines().count(), 2);
    }

    #[test]
    fn beta_links_antennas_to_users() {
        let text = r#"{"name":"b","sweep":"K","values":[20,40],"fixed":{"coherence":100,"rho0_db":-18,"beta":1,"alpha":0.3},
                       "fading":{"mode":"uniform","d":1},"designs":["uniform_exact"]}"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        let (cfg, _, opts) = spec.point(40.0).unwrap();
        assert_eq!(cfg.n_antennas, 40);
        assert_eq!(opts.training_lengths(100), vec![30]);
    }
}
