//! Command-line front end.
//!
//! Settings come from three layers: flags, then an optional `--config` file
//! of `key = value` lines, then built-in defaults.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bell::{bilocal_bound, local_bound, quantum_bound, BellProtocol, Family};
use crate::error::{Error, Result};
use crate::experiment::{certify, write_records_csv, NoiseModel, SimulationConfig};
use crate::tradeoff::emit_curve;
use crate::verifier::{
    closed_form_crosscheck, min_eig_over_grid_with_tolerance, CertificateConstants, GridSpec,
    PSD_TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STRUCTURE: i32 = 3;

const BOUNDS_TOL: f64 = 1e-8;

const CONFIG_HELP: &str = "\
CONFIG FILE:
  --config takes a plain text file with one `key = value` per line; `#` starts
  a comment. Recognized keys: family, n, grid, tol, out, format, seed, shots,
  visibility, resolution, s, mu, full_domain, refinement, samples, log.
  Flags override the file, the file overrides defaults.

DEFAULTS:
  family = svetlichny, n = 3, grid = 21 (n <= 4) / 11 (n = 5) / 7 (n = 6),
  tol = 1e-8, format = json, seed = 1, shots = 100000, visibility = 1,
  resolution = 101, refinement = 6, samples = 1000, log = ghzcert_runs.jsonl

EXIT CODES:
  0 success or certificate passed, 1 certificate or check failed,
  2 usage error, 3 numeric structure violation";

#[derive(Debug, Parser)]
#[command(
    name = "ghzcert",
    version,
    about = "Robust self-testing certificates for GHZ states from Svetlichny and MABK violations",
    after_help = CONFIG_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Brute-force local bound and spectral quantum bound.
    Bounds(Common),
    /// Scan the operator inequality over the angle domain.
    Verify(VerifyArgs),
    /// Emit the fidelity tradeoff line.
    Curve(CurveArgs),
    /// Simulate a finite-statistics experiment and certify it.
    Simulate(SimulateArgs),
    /// Compare the closed-form block expressions against dense numerics.
    Crosscheck(CrosscheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// svetlichny or mabk
    #[arg(long)]
    pub family: Option<String>,
    /// Number of parties (3 to 6).
    #[arg(short = 'n', long = "parties")]
    pub n: Option<usize>,
    /// key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the result record to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// PSD tolerance on the reported minimum.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Scan [0, pi/2]^n instead of [0, pi/4]^n.
    #[arg(long)]
    pub full_domain: bool,
    /// Slope override.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Offset override.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Halving steps of the local refinement.
    #[arg(long)]
    pub refinement: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of points on the line.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub visibility: Option<f64>,
    /// Shots per setting combination.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines log the record is appended to.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CrosscheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub n: usize,
    pub grid: Option<usize>,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub shots: u64,
    pub visibility: f64,
    pub resolution: usize,
    pub s: Option<f64>,
    pub mu: Option<f64>,
    pub full_domain: bool,
    pub refinement: usize,
    pub samples: usize,
    pub log: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Family::Svetlichny,
            n: 3,
            grid: None,
            tol: PSD_TOLERANCE,
            out: None,
            format: Format::Json,
            seed: 1,
            shots: 100_000,
            visibility: 1.0,
            resolution: 101,
            s: None,
            mu: None,
            full_domain: false,
            refinement: 6,
            samples: 1000,
            log: PathBuf::from("ghzcert_runs.jsonl"),
        }
    }
}

impl RunConfig {
    pub fn protocol(&self) -> Result<BellProtocol> {
        BellProtocol::new(self.family, self.n)
    }

    fn apply_file(&mut self, entries: &HashMap<String, String>) -> Result<()> {
        for (key, value) in entries {
            let bad = |what: &str| Error::invalid(format!("config key {key}: {what} {value:?}"));
            match key.as_str() {
                "family" => self.family = value.parse()?,
                "n" => self.n = value.parse().map_err(|_| bad("not an integer"))?,
                "grid" => self.grid = Some(value.parse().map_err(|_| bad("not an integer"))?),
                "tol" => self.tol = value.parse().map_err(|_| bad("not a number"))?,
                "out" => self.out = Some(PathBuf::from(value)),
                "format" => {
                    self.format =
                        Format::from_str(value, true).map_err(|_| bad("unknown format"))?
                }
                "seed" => self.seed = value.parse().map_err(|_| bad("not an integer"))?,
                "shots" => self.shots = value.parse().map_err(|_| bad("not an integer"))?,
                "visibility" => self.visibility = value.parse().map_err(|_| bad("not a number"))?,
                "resolution" => {
                    self.resolution = value.parse().map_err(|_| bad("not an integer"))?
                }
                "s" => self.s = Some(value.parse().map_err(|_| bad("not a number"))?),
                "mu" => self.mu = Some(value.parse().map_err(|_| bad("not a number"))?),
                "full_domain" => {
                    self.full_domain = value.parse().map_err(|_| bad("not a boolean"))?
                }
                "refinement" => {
                    self.refinement = value.parse().map_err(|_| bad("not an integer"))?
                }
                "samples" => self.samples = value.parse().map_err(|_| bad("not an integer"))?,
                "log" => self.log = PathBuf::from(value),
                _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
            }
        }
        Ok(())
    }

    fn apply_common(&mut self, c: &Common) -> Result<()> {
        if let Some(f) = &c.family {
            self.family = f.parse()?;
        }
        if let Some(n) = c.n {
            self.n = n;
        }
        if let Some(f) = c.format {
            self.format = f;
        }
        if let Some(o) = &c.out {
            self.out = Some(o.clone());
        }
        Ok(())
    }

    /// Checks cross-field constraints before any computation runs.
    pub fn validate(&self) -> Result<()> {
        self.protocol()?;
        if matches!(self.grid, Some(g) if g < 2) {
            return Err(Error::invalid("grid needs at least 2 points per axis"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be non-negative"));
        }
        if self.shots == 0 {
            return Err(Error::invalid("shots must be positive"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid("visibility must lie in [0, 1]"));
        }
        if self.resolution < 2 {
            return Err(Error::invalid("resolution must be at least 2"));
        }
        Ok(())
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("config line {}: expected key = value", lineno + 1))
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&parse_config(&text)?)?;
    }
    cfg.apply_common(common)?;
    Ok(cfg)
}

/// Formats with 12 significant digits, switching to exponent form for very
/// large or small magnitudes.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_output(path: &Path, body: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Serializes a flat record as JSON or as a two-line CSV.
fn render_record<T: Serialize>(record: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(record)? + "\n"),
        Format::Csv => {
            let value = serde_json::to_value(record)?;
            let obj = value
                .as_object()
                .ok_or_else(|| Error::Serialization("record is not an object".into()))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(obj.keys())?;
            w.write_record(obj.values().map(|v| match v {
                serde_json::Value::Number(n) => {
                    n.as_f64().map(sig12).unwrap_or_else(|| n.to_string())
                }
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Serialization(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
        }
    }
}

#[derive(Debug, Serialize)]
struct BoundsRecord {
    family: Family,
    n: usize,
    local_bound: f64,
    bilocal_bound: f64,
    quantum_bound: f64,
    catalog_local_bound: f64,
    catalog_quantum_bound: f64,
    matches_catalog: bool,
}

fn cmd_bounds(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    let p = cfg.protocol()?;
    let local = local_bound(&p);
    let bilocal = bilocal_bound(&p);
    let quantum = quantum_bound(&p)?;
    let ok = (local - p.beta_l()).abs() <= BOUNDS_TOL && (quantum - p.beta_q()).abs() <= BOUNDS_TOL;
    println!("protocol: {p}");
    println!(
        "local bound: {} (catalog {})",
        sig12(local),
        p.local_bound_exact()
    );
    println!("bilocal bound: {}", sig12(bilocal));
    println!(
        "quantum bound: {} (catalog {})",
        sig12(quantum),
        p.quantum_bound_exact()
    );
    println!("matches catalog: {ok}");
    let record = BoundsRecord {
        family: p.family,
        n: p.n,
        local_bound: local,
        bilocal_bound: bilocal,
        quantum_bound: quantum,
        catalog_local_bound: p.beta_l(),
        catalog_quantum_bound: p.beta_q(),
        matches_catalog: ok,
    };
    if let Some(out) = &cfg.out {
        write_output(out, &render_record(&record, cfg.format)?)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
struct VerifyRecord {
    family: Family,
    n: usize,
    s: f64,
    mu: f64,
    beta_t: f64,
    grid_points_per_axis: usize,
    domain_upper: f64,
    points_evaluated: usize,
    psd_tolerance: f64,
    min_eigenvalue: f64,
    argmin_angles: String,
    refined: bool,
    passed: bool,
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let mut cfg = load_config(&args.common)?;
    if args.grid.is_some() {
        cfg.grid = args.grid;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    cfg.full_domain |= args.full_domain;
    cfg.s = args.s.or(cfg.s);
    cfg.mu = args.mu.or(cfg.mu);
    if let Some(r) = args.refinement {
        cfg.refinement = r;
    }
    cfg.validate()?;
    let p = cfg.protocol()?;
    let constants = CertificateConstants::resolve(&p, cfg.s, cfg.mu)?;
    let mut grid = GridSpec::default_for(p.n);
    if let Some(g) = cfg.grid {
        grid.points_per_axis = g;
    }
    if cfg.full_domain {
        grid = grid.full_domain();
    }
    grid.refinement_depth = cfg.refinement;
    let report = min_eig_over_grid_with_tolerance(&constants, &grid, cfg.tol)?;
    let angles: Vec<String> = report.argmin_angles.iter().map(|a| sig12(*a)).collect();
    println!("protocol: {p}");
    println!(
        "s: {}  mu: {}  threshold: {}",
        sig12(constants.s),
        sig12(constants.mu),
        sig12(constants.beta_t)
    );
    println!(
        "grid: {} points per axis on [0, {}], {} evaluations",
        grid.points_per_axis,
        sig12(grid.upper),
        report.points_evaluated
    );
    println!("min eigenvalue: {}", sig12(report.min_eigenvalue));
    println!("argmin angles: [{}]", angles.join(", "));
    println!("refined: {}", report.refined);
    println!("result: {}", if report.passed { "PASS" } else { "FAIL" });
    if let Some(out) = &cfg.out {
        let body = match cfg.format {
            Format::Json => serde_json::to_string_pretty(&report)? + "\n",
            Format::Csv => render_record(
                &VerifyRecord {
                    family: p.family,
                    n: p.n,
                    s: constants.s,
                    mu: constants.mu,
                    beta_t: constants.beta_t,
                    grid_points_per_axis: grid.points_per_axis,
                    domain_upper: grid.upper,
                    points_evaluated: report.points_evaluated,
                    psd_tolerance: report.psd_tolerance,
                    min_eigenvalue: report.min_eigenvalue,
                    argmin_angles: angles.join(";"),
                    refined: report.refined,
                    passed: report.passed,
                },
                Format::Csv,
            )?,
        };
        write_output(out, &body)?;
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_curve(args: &CurveArgs) -> Result<i32> {
    let mut cfg = load_config(&args.common)?;
    if let Some(r) = args.resolution {
        cfg.resolution = r;
    }
    // Curves default to CSV unless a format was requested somewhere.
    if args.common.format.is_none() && args.common.config.is_none() {
        cfg.format = Format::Csv;
    }
    cfg.validate()?;
    let curve = emit_curve(&cfg.protocol()?, cfg.resolution)?;
    let json = cfg.format == Format::Json;
    match &cfg.out {
        Some(path) => {
            curve.save(path, json)?;
            println!(
                "wrote {} points to {} (start {}, {})",
                curve.points.len(),
                path.display(),
                sig12(curve.start().relative_violation),
                sig12(curve.start().fidelity_bound)
            );
        }
        None if json => println!("{}", curve.to_json()?),
        None => curve.write_csv(std::io::stdout().lock())?,
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.visibility {
        cfg.visibility = v;
    }
    if let Some(s) = args.shots {
        cfg.shots = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(l) = &args.log {
        cfg.log = l.clone();
    }
    cfg.s = args.s.or(cfg.s);
    cfg.mu = args.mu.or(cfg.mu);
    cfg.validate()?;
    let p = cfg.protocol()?;
    let sim = SimulationConfig {
        constants: CertificateConstants::resolve(&p, cfg.s, cfg.mu)?,
        noise: NoiseModel::visibility(cfg.visibility)?,
        shots: cfg.shots,
        seed: cfg.seed,
        angles: None,
        log_path: Some(cfg.log.clone()),
    };
    let outcome = certify(&sim)?;
    let r = &outcome.record;
    println!("protocol: {p}");
    println!(
        "estimated beta: {} +/- {}",
        sig12(r.estimated_beta),
        sig12(r.std_error)
    );
    if let Some(flag) = r.clamp {
        println!(
            "warning: estimate clamped ({})",
            serde_json::to_string(&flag)?.trim_matches('"')
        );
    }
    println!(
        "fidelity bound: {}{}",
        sig12(r.fidelity_bound),
        if r.trivial { " (trivial)" } else { "" }
    );
    if let Some(err) = &outcome.persist_error {
        eprintln!("warning: could not append to {}: {err}", cfg.log.display());
    }
    if let Some(out) = &cfg.out {
        match cfg.format {
            Format::Json => write_output(out, &(serde_json::to_string_pretty(r)? + "\n"))?,
            Format::Csv => write_records_csv(std::slice::from_ref(r), std::fs::File::create(out)?)?,
        }
    }
    Ok(EXIT_OK)
}

fn cmd_crosscheck(args: &CrosscheckArgs) -> Result<i32> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.samples {
        cfg.samples = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let p = cfg.protocol()?;
    let report = closed_form_crosscheck(&p, cfg.samples, cfg.seed)?;
    println!("protocol: {p}");
    println!("samples: {}", report.samples);
    println!("max entry deviation: {}", sig12(report.max_entry_deviation));
    if let Some(d) = report.max_determinant_deviation {
        println!("max determinant deviation: {}", sig12(d));
    }
    if let Some(d) = report.max_lambda_deviation {
        println!("max projector criterion deviation: {}", sig12(d));
    }
    println!(
        "max eigenvalue deviation: {}",
        sig12(report.max_eigenvalue_deviation)
    );
    println!("Sylvester checks: {}", report.sylvester_checks);
    println!("result: PASS");
    if let Some(out) = &cfg.out {
        write_output(out, &render_record(&report, cfg.format)?)?;
    }
    Ok(EXIT_OK)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::NoCatalog(_) => EXIT_USAGE,
        Error::StructureViolation { .. } => EXIT_STRUCTURE,
        _ => EXIT_FAIL,
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Bounds(c) => cmd_bounds(c),
        Command::Verify(a) => cmd_verify(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Crosscheck(a) => cmd_crosscheck(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_formatting() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(4.0), "4");
        assert_eq!(sig12(std::f64::consts::SQRT_2), "1.41421356237");
        assert_eq!(sig12(-0.5), "-0.5");
        assert_eq!(sig12(1e-9), "1.00000000000e-9");
        assert_eq!(sig12(22.627416997969522), "22.627416998");
    }

    #[test]
    fn config_parsing() {
        let entries =
            parse_config("# comment\nfamily = mabk\nn=4 # trailing\n\ngrid = 5\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&entries).unwrap();
        assert_eq!(cfg.family, Family::Mabk);
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.grid, Some(5));
        assert!(parse_config("nonsense").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg
            .apply_file(&parse_config("colour = red").unwrap())
            .is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "family = mabk\nn = 5\n").unwrap();
        let common = Common {
            n: Some(4),
            config: Some(path),
            ..Default::default()
        };
        let cfg = load_config(&common).unwrap();
        assert_eq!((cfg.family, cfg.n), (Family::Mabk, 4));
    }

    #[test]
    fn validation_rejects_bad_combinations() {
        let cfg = RunConfig {
            n: 9,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            visibility: 1.2,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["ghzcert", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["ghzcert", "bounds", "--family", "chsh"]), EXIT_USAGE);
        assert_eq!(run(["ghzcert", "verify", "-n", "6"]), EXIT_USAGE);
    }
}
