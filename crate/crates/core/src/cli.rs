//! Command-line front end.
//!
//! Every subcommand resolves one flat configuration, in increasing order of
//! precedence: built-in defaults, `SPDE_POWVAR_THREADS`, a preset, a config
//! file (JSON or `key = value` lines), `--set key=value` and the named
//! flags. The effective configuration is written to
//! `<output-dir>/config_echo.json`; passing that file back with `--config`
//! reproduces the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_from_delta_u, estimate_from_u_seconddiff, estimate_from_ux, EstimateReport, EstimatorId, Known,
};
use crate::kernels::{
    delta_u_increment_variance, mu_factor, q_expectations, ux_increment_variance, IncrementVariant,
};
use crate::model::{uniform_times, ModelParams, SamplingScheme};
use crate::montecarlo::{
    run_consistency, run_normality, write_consistency, write_normality, ExperimentConfig, SimulatorKind,
    StatisticKind,
};
use crate::oracle::verify_closed_forms;
use crate::simulate::{
    simulate_spectral_delta_u, simulate_spectral_grid, simulate_spectral_ux_increments, write_atomic, FieldKind,
    FieldSample, IncrementSampler, Seed,
};

pub const THREADS_ENV: &str = "SPDE_POWVAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spde-powvar", version, about = "Simulation and power-variation estimation for the stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one field sample and write it as CSV and JSON.
    Simulate(Common),
    /// Estimate theta^2 or sigma^2 from a field sample (JSON).
    Estimate(Common),
    /// Consistency sweep over N.
    McConsistency(Common),
    /// Normality diagnostics of the normalized estimator.
    McNormality(Common),
    /// Print closed-form quantities.
    KernelsTable(Common),
    /// Compare the closed forms against adaptive quadrature.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file, JSON or `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "output-dir")]
    output_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// paper-fig1 or paper-fig2.
    #[arg(long)]
    preset: Option<String>,
    /// Inline override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Left end of the spatial interval.
    #[arg(long = "A", allow_negative_numbers = true)]
    a_end: Option<f64>,
    /// Right end of the spatial interval.
    #[arg(long = "B", allow_negative_numbers = true)]
    b_end: Option<f64>,
    /// Number of spatial cells; a comma-separated list for sweeps.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Number of uniform times `t_j = j T / M`.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Final time of the uniform time grid.
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Explicit sampling times (comma-separated); overrides T and M.
    #[arg(long = "t", value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    estimator: Option<String>,
    /// bounded (spectral on (0, pi)) or line (dense covariance).
    #[arg(long)]
    domain: Option<String>,
    /// Field kind for `simulate`: u_values, ux_increments, delta_u_increments.
    #[arg(long)]
    kind: Option<String>,
    /// Field sample to read for `estimate`.
    #[arg(long)]
    input: Option<String>,
    /// Quantity for `kernels-table`: mu, ux_variance, delta_variance, q.
    #[arg(long)]
    op: Option<String>,
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Skip the finite-difference bias correction.
    #[arg(long = "no-bias-correction")]
    no_bias_correction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Bounded,
    Line,
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

/// Effective configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub output_dir: String,
    pub seed: u64,
    pub threads: usize,
    pub theta: f64,
    pub sigma: f64,
    #[serde(rename = "A")]
    pub a_end: f64,
    #[serde(rename = "B")]
    pub b_end: f64,
    #[serde(rename = "N", deserialize_with = "one_or_many")]
    pub n: Option<Vec<usize>>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub t: Option<Vec<f64>>,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub modes: usize,
    pub reps: usize,
    pub estimator: EstimatorId,
    pub correct_bias: bool,
    pub domain: Domain,
    pub kind: FieldKind,
    pub statistic: StatisticKind,
    pub dense_cap: usize,
    pub input: Option<String>,
    pub op: Option<String>,
    pub tolerance: f64,
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            output_dir: "out".into(),
            seed: 0,
            threads: 0,
            theta: 0.1,
            sigma: 0.1,
            a_end: 0.0,
            b_end: std::f64::consts::PI,
            n: None,
            m: 1,
            t_final: 1.0,
            t: None,
            gamma: 1.0,
            a: 1.0,
            b: 0.0,
            modes: 10_000,
            reps: 100,
            estimator: EstimatorId::Sigma2Check,
            correct_bias: true,
            domain: Domain::Bounded,
            kind: FieldKind::UValues,
            statistic: StatisticKind::ParameterLevel,
            dense_cap: crate::simulate::DEFAULT_DENSE_CAP,
            input: None,
            op: None,
            tolerance: 1e-6,
            trials: 100,
        }
    }
}

fn preset_values(name: &str) -> Result<Map<String, Value>> {
    let pi = std::f64::consts::PI;
    let v = match name {
        "paper-fig1" => serde_json::json!({
            "theta": 0.1, "sigma": 0.1, "A": 0.0, "B": pi,
            "N": [64, 128, 256, 512, 1024], "M": 50, "T": 1.0, "t": null,
            "a": 1.0, "b": 0.0, "gamma": 1.0, "modes": 10000, "reps": 20,
            "estimator": "sigma2_check", "correct_bias": true, "domain": "bounded",
        }),
        "paper-fig2" => serde_json::json!({
            "theta": 0.1, "sigma": 0.1, "A": 0.0, "B": pi,
            "N": [1000], "t": [0.2], "a": 1.0, "b": 0.0, "gamma": 1.0,
            "modes": 10000, "reps": 1000, "estimator": "sigma2_check",
            "correct_bias": true, "domain": "bounded", "statistic": "parameter_level",
        }),
        other => return Err(Error::Usage(format!("unknown preset '{other}' (expected paper-fig1 or paper-fig2)"))),
    };
    Ok(v.as_object().cloned().unwrap_or_default())
}

/// Parses a scalar from a `key = value` line: JSON if it parses as JSON,
/// a list if it contains commas, a bare string otherwise.
fn parse_scalar(text: &str) -> Value {
    let text = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return v;
    }
    if text.contains(',') {
        return Value::Array(text.split(',').map(parse_scalar).collect());
    }
    Value::String(text.to_string())
}

fn parse_key_values<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value, got '{line}'", i + 1)))?;
        map.insert(k.trim().to_string(), parse_scalar(v));
    }
    Ok(map)
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        match serde_json::from_str::<Value>(&text)? {
            Value::Object(map) => Ok(map),
            _ => Err(Error::Parse("config JSON must be an object".into())),
        }
    } else {
        parse_key_values(text.lines())
    }
}

impl Common {
    fn flag_values(&self) -> Result<Map<String, Value>> {
        let mut map = parse_key_values(self.set.iter().map(String::as_str))?;
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("output_dir", self.output_dir.clone().map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("threads", self.threads.map(Value::from));
        put("theta", self.theta.map(Value::from));
        put("sigma", self.sigma.map(Value::from));
        put("A", self.a_end.map(Value::from));
        put("B", self.b_end.map(Value::from));
        put("N", self.n.clone().map(Value::from));
        put("M", self.m.map(Value::from));
        put("T", self.t_final.map(Value::from));
        put("t", self.t.clone().map(Value::from));
        put("gamma", self.gamma.map(Value::from));
        put("a", self.a.map(Value::from));
        put("b", self.b.map(Value::from));
        put("modes", self.modes.map(Value::from));
        put("reps", self.reps.map(Value::from));
        put("estimator", self.estimator.clone().map(Value::from));
        put("domain", self.domain.clone().map(Value::from));
        put("kind", self.kind.clone().map(Value::from));
        put("input", self.input.clone().map(Value::from));
        put("op", self.op.clone().map(Value::from));
        put("statistic", self.statistic.clone().map(Value::from));
        put("tolerance", self.tolerance.map(Value::from));
        put("trials", self.trials.map(Value::from));
        if self.no_bias_correction {
            put("correct_bias", Some(Value::Bool(false)));
        }
        // `--t` replaces the uniform grid unless `--M`/`--T` were given too
        if self.t.is_none() && (self.m.is_some() || self.t_final.is_some()) {
            map.insert("t".into(), Value::Null);
        }
        Ok(map)
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut merged = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a nonnegative integer, got '{v}'")))?;
            merged.insert("threads".into(), n.into());
        }
        let file = self.config.as_deref().map(read_config_file).transpose()?;
        let flags = self.flag_values()?;
        let preset = self
            .preset
            .clone()
            .or_else(|| file.as_ref().and_then(|f| f.get("preset")).and_then(|v| v.as_str().map(String::from)));
        if let Some(name) = &preset {
            merged.extend(preset_values(name)?);
            merged.insert("preset".into(), Value::from(name.clone()));
        }
        if let Some(file) = file {
            merged.extend(file);
        }
        merged.extend(flags);
        if let Some(name) = preset {
            merged.insert("preset".into(), Value::from(name));
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Usage(format!("invalid configuration: {e}")))
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.theta, self.sigma)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        match &self.t {
            Some(t) => Ok(t.clone()),
            None => uniform_times(self.t_final, self.m),
        }
    }

    pub fn n_values(&self, default: &[usize]) -> Vec<usize> {
        self.n.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn scheme(&self, n: usize) -> Result<SamplingScheme> {
        SamplingScheme::new(self.a_end, self.b_end, n, self.times()?, self.gamma, self.a, self.b)
    }

    pub fn experiment(&self, default_n: &[usize]) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            theta: self.theta,
            sigma: self.sigma,
            a_end: self.a_end,
            b_end: self.b_end,
            n_values: self.n_values(default_n),
            times: self.times()?,
            stencil_a: self.a,
            stencil_b: self.b,
            gamma: self.gamma,
            estimator: self.estimator,
            correct_bias: self.correct_bias,
            statistic: self.statistic,
            replications: self.reps,
            master_seed: self.seed,
            n_modes: self.modes,
            simulator: match self.domain {
                Domain::Bounded => SimulatorKind::SpectralBounded,
                Domain::Line => SimulatorKind::CovLine,
            },
            dense_cap: self.dense_cap,
            threads: self.threads,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        Path::new(&self.output_dir).join(name)
    }

    fn echo(&self) -> Result<()> {
        write_atomic(&self.out("config_echo.json"), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    let n = cfg.n_values(&[64])[0];
    let scheme = cfg.scheme(n)?;
    let seed = Seed::from(cfg.seed);
    let field = match (cfg.domain, cfg.kind) {
        (Domain::Bounded, FieldKind::UValues) => simulate_spectral_grid(&params, &scheme, cfg.modes, seed)?,
        (Domain::Bounded, FieldKind::UxIncrements) => {
            simulate_spectral_ux_increments(&params, &scheme, cfg.modes, seed)?
        }
        (Domain::Bounded, FieldKind::DeltaUIncrements) => simulate_spectral_delta_u(&params, &scheme, cfg.modes, seed)?,
        (Domain::Line, FieldKind::UValues) => {
            return Err(Error::domain("the line simulator produces increments only; use --kind ux_increments"))
        }
        (Domain::Line, kind) => {
            let variant = if kind == FieldKind::UxIncrements { IncrementVariant::Ux } else { IncrementVariant::DeltaU };
            IncrementSampler::new(&params, &scheme, variant, cfg.dense_cap)?.sample(seed)?
        }
    };
    write_atomic(&cfg.out("field.csv"), field.to_csv().as_bytes())?;
    write_atomic(&cfg.out("field.json"), field.to_json()?.as_bytes())?;
    println!("wrote {} ({} x {})", cfg.out("field.csv").display(), field.n_time(), field.xs.len());
    Ok(())
}

fn estimate(cfg: &RunConfig) -> Result<()> {
    let path = cfg.input.as_deref().ok_or_else(|| Error::Usage("estimate needs --input <field.json>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read {path}: {e}")))?;
    let field = FieldSample::from_json(&text)?;
    let known = if cfg.estimator.is_theta() { Known::Sigma(cfg.sigma) } else { Known::Theta(cfg.theta) };
    let family_matches = match cfg.estimator {
        EstimatorId::Theta2Ux | EstimatorId::Sigma2Ux => field.kind == FieldKind::UxIncrements,
        EstimatorId::Theta2Check | EstimatorId::Sigma2Check => field.kind == FieldKind::UValues,
        EstimatorId::Theta2Tilde | EstimatorId::Sigma2Tilde => field.kind == FieldKind::DeltaUIncrements,
    };
    if !family_matches {
        return Err(Error::domain(format!(
            "estimator {} does not apply to a {} field",
            cfg.estimator.as_str(),
            field.kind.as_str()
        )));
    }
    let report: EstimateReport = match field.kind {
        FieldKind::UxIncrements => estimate_from_ux(&field, known)?,
        FieldKind::UValues => estimate_from_u_seconddiff(&field, known, cfg.correct_bias)?,
        FieldKind::DeltaUIncrements => estimate_from_delta_u(&field, known, cfg.correct_bias)?,
    };
    let truth = if cfg.estimator.is_theta() { field.params.theta() } else { field.params.sigma() };
    let report = if truth > 0.0 { report.with_truth(truth)? } else { report };
    let csv = format!("{}\n{}\n", EstimateReport::CSV_HEADER, report.to_csv_line());
    write_atomic(&cfg.out("estimate.csv"), csv.as_bytes())?;
    let json = report.to_json()?;
    write_atomic(&cfg.out("estimate.json"), json.as_bytes())?;
    println!("{json}");
    Ok(())
}

fn kernels_table(cfg: &RunConfig) -> Result<()> {
    let op = cfg.op.as_deref().unwrap_or("mu");
    if op == "mu" {
        println!("{}", mu_factor(cfg.a, cfg.b, cfg.gamma)?.mu);
        return Ok(());
    }
    let params = cfg.params()?;
    let t = *cfg.times()?.first().ok_or_else(|| Error::domain("no sampling time"))?;
    let ns = cfg.n_values(&[100, 1000, 10_000]);
    let mut out = String::new();
    match op {
        "ux_variance" | "delta_variance" => {
            out.push_str("N,value,N_times_value\n");
            for n in ns {
                let scheme = cfg.scheme(n)?;
                let v = if op == "ux_variance" {
                    ux_increment_variance(t, scheme.h(), &params)?
                } else {
                    delta_u_increment_variance(t, &params, &scheme)?
                };
                out.push_str(&format!("{n},{v:.16e},{:.16e}\n", n as f64 * v));
            }
        }
        "q" => {
            out.push_str("N,variant,q_diag,q_nd,q_nd_cross_lag\n");
            for n in ns {
                let scheme = cfg.scheme(n)?;
                for (name, variant) in [("ux", IncrementVariant::Ux), ("delta_u", IncrementVariant::DeltaU)] {
                    let q = q_expectations(&params, &scheme, variant)?;
                    out.push_str(&format!(
                        "{n},{name},{:.16e},{:.16e},{:.16e}\n",
                        q.q_diag, q.q_nd, q.q_nd_cross_lag
                    ));
                }
            }
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown op '{other}' (expected mu, ux_variance, delta_variance or q)"
            )))
        }
    }
    write_atomic(&cfg.out("kernels_table.csv"), out.as_bytes())?;
    print!("{out}");
    Ok(())
}

fn verify(cfg: &RunConfig) -> Result<()> {
    let report = verify_closed_forms(cfg.tolerance, cfg.trials, cfg.seed);
    let json = serde_json::to_string_pretty(&report)?;
    write_atomic(&cfg.out("verify.json"), json.as_bytes())?;
    for f in &report.formulas {
        println!(
            "{:<36} max rel error {:.3e} (tolerance {:.0e}) {}",
            f.formula,
            f.max_rel_error,
            f.tolerance,
            if f.pass { "pass" } else { "FAIL" }
        );
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.failures().map(|f| f.formula.as_str()).collect();
        Err(Error::Numerical(format!("closed-form verification failed for {}", failed.join(", "))))
    }
}

fn dispatch(command: Command) -> Result<()> {
    let (common, run): (&Common, fn(&RunConfig) -> Result<()>) = match &command {
        Command::Simulate(c) => (c, simulate),
        Command::Estimate(c) => (c, estimate),
        Command::McConsistency(c) => (c, |cfg| {
            let exp = cfg.experiment(&[64, 128, 256, 512, 1024])?;
            let table = run_consistency(&exp)?;
            write_consistency(Path::new(&cfg.output_dir), &exp, &table)?;
            print!("{}", table.to_csv());
            Ok(())
        }),
        Command::McNormality(c) => (c, |cfg| {
            let exp = cfg.experiment(&[1000])?;
            let summary = run_normality(&exp)?;
            write_normality(Path::new(&cfg.output_dir), &exp, &summary)?;
            println!(
                "replications {} failures {} ks {:.6} mean {:.6e} stderr {:.3e}",
                summary.normalized_stats.len(),
                summary.failures,
                summary.ks_stat,
                summary.mean,
                summary.stderr
            );
            Ok(())
        }),
        Command::KernelsTable(c) => (c, kernels_table),
        Command::Verify(c) => (c, verify),
    };
    let cfg = common.resolve()?;
    if !matches!(command, Command::KernelsTable(_)) || cfg.op.as_deref().unwrap_or("mu") != "mu" {
        cfg.echo()?;
    }
    run(&cfg)
}

/// Runs the command line `args` (program name first) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
