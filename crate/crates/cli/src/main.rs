mod cache;
mod simulate;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use laserlab_core::laser_engine::{analyze_cw_full, omega_bound, verify_table, EngineConfig, ValueTable};
use laserlab_core::solver::pipeline::{default_lambdas, PipelineConfig};
use laserlab_core::solver::{HeuristicKind, DEFAULT_SEED};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "laserlab",
    version,
    about = "Laser-method bounds on the matrix multiplication exponent"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    /// Directory holding cached value tables.
    #[arg(long, env = "LASERLAB_CACHE_DIR", global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Include wall-clock times in the output. Breaks byte-for-byte
    /// reproducibility.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bisect for the smallest certified exponent bound from CW_q^{(x)t}.
    Omega(OmegaArgs),
    /// Value bounds for every class of CW_q^{(x)t} at a fixed tau.
    Analyze(AnalyzeArgs),
    /// Randomized constructions at small scale.
    #[command(subcommand)]
    Simulate(simulate::SimulateCommand),
    /// Inspect or re-certify cached value tables.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Args, Debug, Clone)]
struct EngineArgs {
    #[arg(long)]
    q: u32,
    /// Tensor power; one of 1, 2, 4, 8, 16, 32.
    #[arg(long)]
    t: u32,
    /// Heuristics to run, e.g. `h1,h2,h3,h4`.
    #[arg(long, value_delimiter = ',', value_parser = parse_heuristic)]
    heuristics: Option<Vec<HeuristicKind>>,
    /// λ grid for heuristic 3.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Working precision for certification.
    #[arg(long, default_value_t = 256)]
    precision_bits: usize,
    /// Allow t = 16 or 32. These runs take hours and carry no accuracy claim.
    #[arg(long)]
    stretch: bool,
}

#[derive(Args, Debug)]
struct OmegaArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Bisection tolerance on tau.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Skip writing the value table.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    tau: f64,
}

#[derive(Subcommand, Debug)]
enum CacheCommand {
    /// List cached tables.
    List,
    /// Re-certify cached tables in extended precision.
    Verify {
        #[arg(long, requires = "t")]
        q: Option<u32>,
        #[arg(long, requires = "q")]
        t: Option<u32>,
    },
}

/// An error with a fixed process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Failure {
        code: 2,
        message: msg.into(),
    }
    .into()
}

pub fn failure(code: u8, msg: impl Into<String>) -> anyhow::Error {
    Failure {
        code,
        message: msg.into(),
    }
    .into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use laserlab_core::Error as E;
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidInput(_) => 2,
                E::Infeasible { .. } | E::Solver(_) | E::NoSolution(_) => 3,
                E::Certification(_) => 4,
                E::CapExceeded { .. } => 5,
                E::Schema(_) | E::Json(_) => 6,
            };
        }
    }
    1
}

fn parse_heuristic(s: &str) -> std::result::Result<HeuristicKind, String> {
    HeuristicKind::parse(s).map_err(|e| e.to_string())
}

fn heuristic_names(h: &[HeuristicKind]) -> Vec<String> {
    h.iter().map(|k| format!("{k:?}").to_lowercase()).collect()
}

impl EngineArgs {
    fn engine_config(&self, certify: bool) -> Result<EngineConfig> {
        if self.q == 0 {
            return Err(config_error("q must be at least 1"));
        }
        if ![1, 2, 4, 8, 16, 32].contains(&self.t) {
            return Err(config_error(format!(
                "t must be one of 1, 2, 4, 8, 16, 32 (got {})",
                self.t
            )));
        }
        if self.t >= 16 && !self.stretch {
            return Err(config_error(format!("t = {} needs --stretch", self.t)));
        }
        if !(64..=4096).contains(&self.precision_bits) {
            return Err(config_error("precision bits must lie in [64, 4096]"));
        }
        let heuristics = self
            .heuristics
            .clone()
            .unwrap_or_else(|| PipelineConfig::default().heuristics);
        if heuristics.is_empty() {
            return Err(config_error("need at least one heuristic"));
        }
        let lambdas = self.lambdas.clone().unwrap_or_else(default_lambdas);
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(config_error("lambdas must be finite and non-negative"));
        }
        Ok(EngineConfig {
            pipeline: PipelineConfig {
                heuristics,
                lambdas,
                seed: self.seed,
                ..PipelineConfig::default()
            },
            certify,
            precision_bits: self.precision_bits,
            ..EngineConfig::default()
        })
    }
}

fn cache_dir(g: &GlobalOpts) -> PathBuf {
    g.cache_dir.clone().unwrap_or_else(|| PathBuf::from(cache::DEFAULT_DIR))
}

#[derive(Serialize)]
struct OmegaReport {
    q: u32,
    t: u32,
    omega_bound: String,
    tau: String,
    tolerance: f64,
    certified: bool,
    bisection_steps: usize,
    max_kkt_residual: f64,
    heuristics: Vec<String>,
    lambdas: Vec<f64>,
    seed: u64,
    precision_bits: usize,
    stretch: bool,
    cache_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

fn cmd_omega(g: &GlobalOpts, args: &OmegaArgs) -> Result<String> {
    let cfg = args.engine.engine_config(true)?;
    if !(args.tol >= 1e-9) {
        return Err(config_error("tolerance must be at least 1e-9"));
    }
    let started = Instant::now();
    let res = omega_bound(args.engine.q, args.engine.t, args.tol, &cfg)?;
    let table = ValueTable::from_analysis(&res.analysis, &cfg);
    let cache_file = if args.no_cache {
        None
    } else {
        Some(cache::store(&cache_dir(g), &table)?)
    };
    let report = OmegaReport {
        q: res.q,
        t: res.t,
        omega_bound: format!("{:?}", res.omega_bound),
        tau: format!("{:?}", res.tau),
        tolerance: res.tolerance,
        certified: res.certified,
        bisection_steps: res.bisection_steps,
        max_kkt_residual: res.analysis.max_kkt(),
        heuristics: heuristic_names(&cfg.pipeline.heuristics),
        lambdas: cfg.pipeline.lambdas.clone(),
        seed: cfg.pipeline.seed,
        precision_bits: cfg.precision_bits,
        stretch: args.engine.stretch,
        cache_file: cache_file.map(|p| p.display().to_string()),
        wall_time_ms: g.timing.then(|| started.elapsed().as_millis() as u64),
    };
    let out = match g.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "q",
                "t",
                "omega_bound",
                "tau",
                "tolerance",
                "certified",
                "max_kkt_residual",
                "seed",
            ])?;
            w.write_record([
                report.q.to_string(),
                report.t.to_string(),
                report.omega_bound.clone(),
                report.tau.clone(),
                report.tolerance.to_string(),
                report.certified.to_string(),
                format!("{:e}", report.max_kkt_residual),
                report.seed.to_string(),
            ])?;
            String::from_utf8(w.into_inner()?)?
        }
        Format::Text => {
            let mut s = format!(
                "omega <= {:.10}  (q = {}, t = {}, {})\n",
                res.omega_bound,
                res.q,
                res.t,
                if res.certified { "certified" } else { "NOT certified" }
            );
            s += &format!(
                "tau = {}  tolerance = {:e}  bisection steps = {}  max residual = {:.2e}\n",
                report.tau, report.tolerance, report.bisection_steps, report.max_kkt_residual
            );
            s += &format!(
                "heuristics = {}  lambdas = {:?}  seed = {}  precision = {} bits\n",
                report.heuristics.join(","),
                report.lambdas,
                report.seed,
                report.precision_bits
            );
            if args.engine.stretch {
                s += "stretch run: no accuracy target applies\n";
            }
            if let Some(p) = &report.cache_file {
                s += &format!("table written to {p}\n");
            }
            if let Some(ms) = report.wall_time_ms {
                s += &format!("wall time {ms} ms\n");
            }
            s
        }
    };
    if !res.certified {
        print!("{out}");
        return Err(failure(4, "the reported bound did not certify in extended precision"));
    }
    Ok(out)
}

fn cmd_analyze(g: &GlobalOpts, args: &AnalyzeArgs) -> Result<String> {
    let cfg = args.engine.engine_config(true)?;
    if !(args.tau > 0.0 && args.tau <= 1.0) {
        return Err(config_error("tau must lie in (0, 1]"));
    }
    let a = analyze_cw_full(args.engine.q, args.engine.t, args.tau, &cfg)?;
    let table = ValueTable::from_analysis(&a, &cfg);
    Ok(match g.format {
        Format::Json => table.to_json()?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "I", "J", "K", "method", "heuristic", "log_value", "penalty_log"])?;
            for e in &table.entries {
                w.write_record([
                    e.t.to_string(),
                    e.i.to_string(),
                    e.j.to_string(),
                    e.k.to_string(),
                    e.method.as_str().to_string(),
                    e.heuristic.clone().unwrap_or_default(),
                    e.log_value.clone(),
                    e.penalty_log.clone(),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
        Format::Text => {
            let mut s = format!("CW_{} power {} at tau = {}\n", a.q, a.t, table.tau);
            for (k, v) in &a.classes {
                s += &format!(
                    "{:<22} {:<12} ln V >= {:.12}  penalty {:.3e}\n",
                    k.to_string(),
                    v.method.as_str(),
                    v.log_value,
                    v.penalty_log
                );
            }
            s += &format!(
                "global ln V >= {:.12} against t ln(q+2) = {:.12}: {}\n",
                a.top.log_value,
                a.threshold_log,
                match a.certified_feasible {
                    Some(true) => "feasible (certified)",
                    Some(false) => "infeasible",
                    None => "uncertified",
                }
            );
            s
        }
    })
}

#[derive(Serialize)]
struct CacheListing {
    file: String,
    q: u32,
    t: u32,
    omega: String,
    certified: bool,
    entries: usize,
}

fn cmd_cache(g: &GlobalOpts, cmd: &CacheCommand) -> Result<String> {
    let dir = cache_dir(g);
    match cmd {
        CacheCommand::List => {
            let mut rows = Vec::new();
            for path in cache::table_files(&dir)? {
                let t = cache::load(&path)?;
                rows.push(CacheListing {
                    file: path.file_name().unwrap().to_string_lossy().into_owned(),
                    q: t.q,
                    t: t.t,
                    omega: t.omega.clone(),
                    certified: t.certified,
                    entries: t.entries.len(),
                });
            }
            Ok(match g.format {
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
                Format::Csv => {
                    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                    w.write_record(["file", "q", "t", "omega", "certified", "entries"])?;
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    String::from_utf8(w.into_inner()?)?
                }
                Format::Text if rows.is_empty() => format!("no cached tables in {}\n", dir.display()),
                Format::Text => rows
                    .iter()
                    .map(|r| {
                        format!(
                            "{}  q = {}  t = {}  omega <= {}  {}  {} entries\n",
                            r.file,
                            r.q,
                            r.t,
                            r.omega,
                            if r.certified { "certified" } else { "uncertified" },
                            r.entries
                        )
                    })
                    .collect(),
            })
        }
        CacheCommand::Verify { q, t } => {
            let files = match (q, t) {
                (Some(q), Some(t)) => {
                    let p = cache::table_path(&dir, *q, *t);
                    if !p.exists() {
                        return Err(config_error(format!("no cached table {}", p.display())));
                    }
                    vec![p]
                }
                _ => cache::table_files(&dir)?,
            };
            let mut out = String::new();
            let mut records = Vec::new();
            let mut failed = 0usize;
            for path in &files {
                let table = cache::load(path)?;
                let checks = verify_table(&table).with_context(|| format!("verifying {}", path.display()))?;
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                for c in checks {
                    failed += usize::from(!c.pass);
                    if g.format == Format::Text {
                        out += &format!(
                            "{} {} {}  claimed {}  recomputed {}{}\n",
                            if c.pass { "PASS" } else { "FAIL" },
                            name,
                            c.name,
                            short(&c.claimed),
                            short(&c.recomputed),
                            c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
                        );
                    }
                    records.push(serde_json::json!({
                        "file": name,
                        "entry": c.name,
                        "claimed": c.claimed,
                        "recomputed": c.recomputed,
                        "pass": c.pass,
                        "note": c.note,
                    }));
                }
            }
            match g.format {
                Format::Json => out = serde_json::to_string_pretty(&records)? + "\n",
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["file", "entry", "pass", "claimed", "recomputed"])?;
                    for r in &records {
                        w.write_record([
                            r["file"].as_str().unwrap_or_default(),
                            r["entry"].as_str().unwrap_or_default(),
                            if r["pass"].as_bool() == Some(true) {
                                "true"
                            } else {
                                "false"
                            },
                            r["claimed"].as_str().unwrap_or_default(),
                            r["recomputed"].as_str().unwrap_or_default(),
                        ])?;
                    }
                    out = String::from_utf8(w.into_inner()?)?;
                }
                Format::Text => {
                    if files.is_empty() {
                        out += &format!("no cached tables in {}\n", dir.display());
                    } else {
                        out += &format!("{} checks, {} failed\n", records.len(), failed);
                    }
                }
            }
            if failed > 0 {
                print!("{out}");
                return Err(failure(4, format!("{failed} cached entries failed re-certification")));
            }
            Ok(out)
        }
    }
}

/// First 24 significant characters of a long decimal.
fn short(s: &str) -> &str {
    &s[..s.len().min(24)]
}

fn run(cli: Cli) -> Result<String> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(config_error("threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Omega(a) => cmd_omega(&cli.global, a),
        Command::Analyze(a) => cmd_analyze(&cli.global, a),
        Command::Simulate(s) => simulate::run(&cli.global, s),
        Command::Cache(c) => cmd_cache(&cli.global, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
