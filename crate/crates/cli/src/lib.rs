//! Command-line front end for the adaptive pole-placement simulator.
//!
//! All command logic lives here so it can be driven in-process by tests;
//! `main.rs` only parses arguments and maps the outcome to an exit code.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaptive_pp::simulation::{
    audit_trajectory, estimate_constants, monte_carlo_sweep, run_closed_loop, AuditSummary,
    DrawOutcome, SimConfig, SimError, SweepOverrides, SweepReport,
};
use adaptive_pp::trajectory::{Trajectory, TrajectoryMeta};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub mod plot;

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "ADAPTIVE_PP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "adaptive-pp", version, about = "Adaptive pole-placement set-point tracking experiments")]
pub struct Cli {
    /// Directory for all output files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Also write a gnuplot script for the trajectory.
    #[arg(long, global = true)]
    pub plots: bool,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one closed-loop run and audit it.
    Run { config: PathBuf },
    /// Run randomized draws around the configured experiment.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run the audits on a stored trajectory.
    Audit { csv: PathBuf, config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    AuditFailure,
    ConfigError,
    SingularSylvester,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::AuditFailure => 1,
            Status::ConfigError => 2,
            Status::SingularSylvester => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub trajectory: String,
    pub plot_script: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            trajectory: "trajectory.csv".into(),
            plot_script: "plots.gp".into(),
        }
    }
}

pub const AUDIT_NAMES: [&str; 8] = [
    "dissipation",
    "state_recursion",
    "estimate_in_set",
    "diophantine",
    "charpoly",
    "pole_clusters",
    "finite",
    "crude_bound",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    /// Audits that decide the exit status.
    pub select: Vec<String>,
    /// Samples used to estimate `ᾱ` for the crude bound.
    pub alpha_samples: usize,
    pub alpha_seed: u64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            select: AUDIT_NAMES.iter().map(|s| s.to_string()).collect(),
            alpha_samples: 100_000,
            alpha_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema_version: u32,
    pub simulation: SimConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub audits: AuditSpec,
    #[serde(default)]
    pub sweep: SweepOverrides,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {err}")]
    Read { path: PathBuf, err: std::io::Error },
    #[error("cannot write {path}: {err}")]
    Write { path: PathBuf, err: std::io::Error },
    #[error("{path}: {err}")]
    Json { path: PathBuf, err: serde_json::Error },
    #[error("{path}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
    #[error("unknown audit `{0}`")]
    UnknownAudit(String),
    #[error("output name `{0}` must be a plain file name")]
    OutputName(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {err}")]
    Csv {
        path: PathBuf,
        err: adaptive_pp::trajectory::CsvError,
    },
}

/// Parses and validates an experiment document.
pub fn parse_experiment(text: &str, path: &Path) -> Result<ExperimentFile, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|err| CliError::Json {
        path: path.into(),
        err,
    })?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .map(|v| v as u32);
    if let Some(found) = found {
        if found != SCHEMA_VERSION {
            return Err(CliError::Schema {
                path: path.into(),
                found,
            });
        }
    }
    let exp: ExperimentFile = serde_json::from_value(value).map_err(|err| CliError::Json {
        path: path.into(),
        err,
    })?;
    for name in &exp.audits.select {
        if !AUDIT_NAMES.contains(&name.as_str()) {
            return Err(CliError::UnknownAudit(name.clone()));
        }
    }
    for name in [&exp.output.trajectory, &exp.output.plot_script] {
        let p = Path::new(name);
        if name.is_empty() || p.file_name() != Some(p.as_os_str()) {
            return Err(CliError::OutputName(name.clone()));
        }
    }
    if exp.audits.select.iter().any(|s| s == "crude_bound") && exp.audits.alpha_samples == 0 {
        return Err(CliError::Config("audits.alpha_samples must be at least 1".into()));
    }
    if let Some((lo, hi)) = exp.sweep.mu_range {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CliError::Config(format!("sweep.mu_range ({lo}, {hi}) is invalid")));
        }
    }
    if let Some(r) = exp.sweep.phi0_range {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(CliError::Config(format!("sweep.phi0_range {r} is invalid")));
        }
    }
    exp.simulation
        .prepare()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(exp)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentFile, CliError> {
    let text = fs::read_to_string(path).map_err(|err| CliError::Read {
        path: path.into(),
        err,
    })?;
    parse_experiment(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: Status,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub files: Vec<String>,
    /// Pass/fail per selected audit.
    pub audits: Vec<AuditEntry>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    let werr = |err| CliError::Write {
        path: path.clone(),
        err,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(werr)?;
    tmp.write_all(bytes).map_err(werr)?;
    tmp.as_file().sync_all().map_err(werr)?;
    tmp.persist(&path).map_err(|e| werr(e.error))?;
    Ok(())
}

struct Session<'a> {
    cli: &'a Cli,
    started: Instant,
    files: Vec<String>,
    log: Box<dyn Write + 'a>,
}

impl<'a> Session<'a> {
    fn say(&mut self, line: impl AsRef<str>) {
        if !self.cli.quiet {
            let _ = writeln!(self.log, "{}", line.as_ref());
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.cli.out, name, bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        status: Status,
        exp: Option<&ExperimentFile>,
        seed: Option<u64>,
        audits: Vec<(String, bool)>,
        error: Option<String>,
    ) -> Status {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            status,
            config_hash: exp.map(|e| e.simulation.hash()),
            seed,
            files: std::mem::take(&mut self.files),
            audits: audits
                .into_iter()
                .map(|(name, passed)| AuditEntry { name, passed })
                .collect(),
            error: error.clone(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        if let Err(e) = write_atomic(&self.cli.out, "manifest.json", &json) {
            eprintln!("error: {e}");
        }
        if let Some(e) = error {
            eprintln!("error: {e}");
        }
        status
    }
}

/// Executes a parsed command line. Diagnostics go to stderr, reports to `log`.
pub fn execute<'a>(cli: &'a Cli, log: impl Write + 'a) -> Status {
    let mut session = Session {
        cli,
        started: Instant::now(),
        files: Vec::new(),
        log: Box::new(log),
    };
    if let Err(err) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {err}", cli.out.display());
        return Status::ConfigError;
    }
    match &cli.command {
        Command::Run { config } => cmd_run(session, config),
        Command::Sweep {
            config,
            draws,
            seed,
        } => cmd_sweep(session, config, *draws, *seed),
        Command::Audit { csv, config } => {
            let status = cmd_audit(&mut session, csv, config);
            match status {
                Ok((status, exp, audits)) => session.finish("audit", status, Some(&exp), None, audits, None),
                Err(e) => session.finish("audit", Status::ConfigError, None, None, vec![], Some(e.to_string())),
            }
        }
    }
}

type AuditFlags = Vec<(String, bool)>;

fn selected(summary: &AuditSummary, spec: &AuditSpec) -> AuditFlags {
    summary
        .lines
        .iter()
        .filter(|l| spec.select.contains(&l.name))
        .map(|l| (l.name.clone(), l.passed))
        .collect()
}

fn alpha_for(exp: &ExperimentFile) -> Result<Option<f64>, CliError> {
    if !exp.audits.select.iter().any(|s| s == "crude_bound") {
        return Ok(None);
    }
    let prep = exp
        .simulation
        .prepare()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let c = estimate_constants(&prep.sbar, &prep.target, exp.audits.alpha_samples, exp.audits.alpha_seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Some(c.alpha_bar))
}

fn audit_and_report(
    session: &mut Session,
    tr: &Trajectory,
    exp: &ExperimentFile,
) -> Result<(Status, AuditFlags), CliError> {
    let prep = exp
        .simulation
        .prepare()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let alpha = alpha_for(exp)?;
    let summary = audit_trajectory(tr, &prep.sbar, &prep.target, alpha)
        .map_err(|e| CliError::Config(e.to_string()))?;
    for l in &summary.lines {
        if exp.audits.select.contains(&l.name) {
            session.say(format!(
                "{:<16} {}  value {:.3e}  tol {:.3e}",
                l.name,
                if l.passed { "PASS" } else { "FAIL" },
                l.value,
                l.tolerance
            ));
        }
    }
    let audits = selected(&summary, &exp.audits);
    let status = if audits.iter().all(|a| a.1) {
        Status::Ok
    } else {
        Status::AuditFailure
    };
    Ok((status, audits))
}

fn cmd_run(mut session: Session, config: &Path) -> Status {
    let exp = match load_experiment(config) {
        Ok(e) => e,
        Err(e) => return session.finish("run", Status::ConfigError, None, None, vec![], Some(e.to_string())),
    };
    let seed = Some(exp.simulation.seed);
    let tr = match run_closed_loop(&exp.simulation) {
        Ok(t) => t,
        Err(e) => {
            let status = match e {
                SimError::SingularSylvester { .. } => Status::SingularSylvester,
                SimError::Config(_) => Status::ConfigError,
                SimError::NonFinite { .. } => Status::AuditFailure,
            };
            return session.finish("run", status, Some(&exp), seed, vec![], Some(e.to_string()));
        }
    };
    let outcome = (|| {
        session.write(&exp.output.trajectory, tr.to_csv_string().as_bytes())?;
        if session.cli.plots {
            let script = plot::gnuplot_script(&exp.output.trajectory, &tr);
            session.write(&exp.output.plot_script, script.as_bytes())?;
        }
        audit_and_report(&mut session, &tr, &exp)
    })();
    match outcome {
        Ok((status, audits)) => session.finish("run", status, Some(&exp), seed, audits, None),
        Err(e) => session.finish("run", Status::ConfigError, Some(&exp), seed, vec![], Some(e.to_string())),
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// One row per draw of the sweep table.
pub fn sweep_csv(report: &SweepReport, select: &[String]) -> String {
    let mut out = String::from("draw,status,mu,gamma,residual_floor,tail_tracking");
    for name in select {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",error\n");
    for d in &report.draws {
        let mu = format!("{:.16e}", d.config.mu);
        match &d.outcome {
            DrawOutcome::Completed { audits, bound } => {
                let pass = select
                    .iter()
                    .all(|s| audits.get(s).is_none_or(|l| l.passed))
                    && bound.violations == 0;
                out.push_str(&format!(
                    "{},{},{mu},{:.16e},{:.16e},{:.16e}",
                    d.draw,
                    if pass { "pass" } else { "fail" },
                    bound.gamma,
                    bound.residual_floor,
                    bound.tail_tracking
                ));
                for name in select {
                    let v = audits.get(name).map_or("", |l| if l.passed { "1" } else { "0" });
                    out.push(',');
                    out.push_str(v);
                }
                out.push_str(",\n");
            }
            DrawOutcome::Failed { error } => {
                out.push_str(&format!("{},error,{mu},,,", d.draw));
                for _ in select {
                    out.push(',');
                }
                out.push(',');
                out.push_str(&error.replace([',', '\n'], ";"));
                out.push('\n');
            }
        }
    }
    out
}

fn cmd_sweep(mut session: Session, config: &Path, draws: usize, seed: u64) -> Status {
    let exp = match load_experiment(config) {
        Ok(e) => e,
        Err(e) => return session.finish("sweep", Status::ConfigError, None, Some(seed), vec![], Some(e.to_string())),
    };
    if draws == 0 {
        return session.finish(
            "sweep",
            Status::ConfigError,
            Some(&exp),
            Some(seed),
            vec![],
            Some("--draws must be at least 1".into()),
        );
    }
    let mut ov = exp.sweep.clone();
    match alpha_for(&exp) {
        Ok(a) => ov.alpha_bar = ov.alpha_bar.or(a),
        Err(e) => return session.finish("sweep", Status::ConfigError, Some(&exp), Some(seed), vec![], Some(e.to_string())),
    }
    let report = monte_carlo_sweep(&exp.simulation, draws, &ov, seed, threads_from_env());

    let select = &exp.audits.select;
    let draw_passed = |d: &adaptive_pp::simulation::DrawReport| match &d.outcome {
        DrawOutcome::Completed { audits, bound } => {
            bound.violations == 0 && select.iter().all(|s| audits.get(s).is_none_or(|l| l.passed))
        }
        DrawOutcome::Failed { .. } => false,
    };
    let mut audits = Vec::new();
    for name in select {
        let ok = report.draws.iter().all(|d| match &d.outcome {
            DrawOutcome::Completed { audits, .. } => audits.get(name).is_none_or(|l| l.passed),
            DrawOutcome::Failed { .. } => false,
        });
        audits.push((name.clone(), ok));
    }
    let passed = report.draws.iter().filter(|d| draw_passed(d)).count();
    audits.push(("draws_completed".into(), report.draws.iter().all(|d| matches!(d.outcome, DrawOutcome::Completed { .. }))));
    session.say(format!("{passed}/{} draws passed", report.draws.len()));
    for d in report.draws.iter().filter(|d| !draw_passed(d)) {
        session.say(format!("draw {} failed: {:?}", d.draw, d.outcome));
    }

    let written = (|| {
        session.write("sweep.csv", sweep_csv(&report, select).as_bytes())?;
        let json = serde_json::to_vec_pretty(&report).expect("report serializes");
        session.write("sweep.json", &json)
    })();
    if let Err(e) = written {
        return session.finish("sweep", Status::ConfigError, Some(&exp), Some(seed), audits, Some(e.to_string()));
    }
    let status = if passed == report.draws.len() {
        Status::Ok
    } else {
        Status::AuditFailure
    };
    session.finish("sweep", status, Some(&exp), Some(seed), audits, None)
}

fn cmd_audit(
    session: &mut Session,
    csv: &Path,
    config: &Path,
) -> Result<(Status, ExperimentFile, AuditFlags), CliError> {
    let exp = load_experiment(config)?;
    let cfg = &exp.simulation;
    let prep = cfg.prepare().map_err(|e| CliError::Config(e.to_string()))?;
    let file = fs::File::open(csv).map_err(|err| CliError::Read {
        path: csv.into(),
        err,
    })?;
    let meta = TrajectoryMeta {
        config_hash: cfg.hash(),
        mu: cfg.mu,
        theta_star: Some(prep.theta_star.clone()),
        alpha_bar: None,
        s_bar: Some(prep.sbar.diameter()),
    };
    let tr = Trajectory::read_csv(BufReader::new(file), cfg.n, &cfg.phi0, Some(cfg.horizon), meta)
        .map_err(|err| CliError::Csv {
            path: csv.into(),
            err,
        })?;
    let (status, audits) = audit_and_report(session, &tr, &exp)?;
    Ok((status, exp, audits))
}
