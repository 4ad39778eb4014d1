//! Command-line interface: `assess`, `validate`, `rapex` and `serve`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use riskbn_core::product::ProductModel;
use riskbn_core::rapex::{self, InjuryScenario, RapexAssessment, Sensitivity};
use riskbn_core::report::{canonical_json, render_table};

use crate::service::{self, ServiceConfig};
use crate::{apply_update, binning, build_report, load_scenario, read, AppError, EvidenceUpdate, DEFAULT_BINS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_INFERENCE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "riskbn", version, about = "Product safety risk assessment with a hybrid Bayesian network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assess a scenario file (or a bundled scenario name) and print the report.
    Assess(AssessArgs),
    /// Check a scenario file without running inference.
    Validate {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Classify an injury scenario with the RAPEX risk matrix.
    Rapex(RapexArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
pub struct AssessArgs {
    pub scenario: String,
    /// Bins per continuous node; count nodes get twice as many.
    #[arg(long, env = "RISKBN_BINS", default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Add a RAPEX verdict on the network's major-injury probability.
    #[arg(long, requires = "severity")]
    pub compare_rapex: bool,
    /// Injury severity level (1-4) for the RAPEX comparison.
    #[arg(long, value_parser = clap::value_parser!(i64).range(1..=4))]
    pub severity: Option<i64>,
    /// Extra evidence: a JSON object of node to value, `null` removes.
    #[arg(long, value_name = "FILE")]
    pub evidence: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RapexArgs {
    /// Injury scenario JSON file, or `axe` for the built-in example.
    pub scenario: String,
    /// Also re-evaluate with every step probability multiplied or divided by this factor.
    #[arg(long)]
    pub factor: Option<f64>,
    /// Severity shift used with `--factor`.
    #[arg(long, default_value_t = 1, requires = "factor")]
    pub severity_shift: i64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, env = "RISKBN_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Idle session lifetime in seconds.
    #[arg(long, env = "RISKBN_SESSION_TTL", default_value_t = 3600)]
    pub session_ttl: u64,
    #[arg(long, env = "RISKBN_BINS", default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli))
}

pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Assess(a) => assess(&a),
        Command::Validate { scenario, format } => return validate(&scenario, format),
        Command::Rapex(a) => rapex_cmd(&a),
        Command::Serve(a) => serve(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_INFERENCE
            }
        }
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|source| AppError::Io { path: path.display().to_string(), source }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| AppError::Io { path: "stdout".into(), source })
        }
    }
}

fn assess(a: &AssessArgs) -> Result<(), AppError> {
    if a.bins < 2 {
        return Err(AppError::Parse("--bins must be at least 2".into()));
    }
    let config = load_scenario(&a.scenario)?;
    let model = ProductModel::build(&config, &binning(a.bins))?;
    let mut evidence = model.scenario_evidence();
    if let Some(path) = &a.evidence {
        let update: EvidenceUpdate = serde_json::from_str(&read(path)?)
            .map_err(|e| AppError::Parse(format!("{}: {e}", path.display())))?;
        evidence = apply_update(&evidence, &update);
    }
    let severity = if a.compare_rapex { a.severity } else { None };
    let report = build_report(&model, &evidence, a.seed, severity)?;
    let text = match a.format {
        Format::Json => canonical_json(&report),
        Format::Table => render_table(&report),
    };
    emit(&text, a.out.as_ref())
}

fn validate(scenario: &str, format: Format) -> u8 {
    let problems = match load_scenario(scenario) {
        Ok(c) => c.problems(),
        Err(AppError::Product(riskbn_core::product::ProductError::InvalidConfig(p))) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match format {
        Format::Json => {
            let v = serde_json::json!({ "valid": problems.is_empty(), "problems": problems });
            print!("{}", canonical_json(&v));
        }
        Format::Table if problems.is_empty() => println!("{scenario}: valid"),
        Format::Table => {
            println!("{scenario}: {} problem(s)", problems.len());
            for p in &problems {
                println!("  - {p}");
            }
        }
    }
    if problems.is_empty() {
        EXIT_OK
    } else {
        EXIT_INVALID
    }
}

fn rapex_cmd(a: &RapexArgs) -> Result<(), AppError> {
    let scenario: InjuryScenario = if a.scenario == "axe" && !std::path::Path::new("axe").exists() {
        rapex::axe_scenario()
    } else {
        let text = read(std::path::Path::new(&a.scenario))?;
        serde_json::from_str(&text).map_err(|e| AppError::Parse(format!("{}: {e}", a.scenario)))?
    };
    let sensitivity = a.factor.map(|factor| Sensitivity { factor, severity_shift: a.severity_shift });
    let assessment = rapex::assess(&scenario, sensitivity)?;
    let text = match a.format {
        Format::Json => canonical_json(&assessment),
        Format::Table => render_rapex(&scenario, &assessment),
    };
    emit(&text, None)
}

pub fn render_rapex(scenario: &InjuryScenario, a: &RapexAssessment) -> String {
    let mut out = String::new();
    if !scenario.description.is_empty() {
        let _ = writeln!(out, "{}", scenario.description);
    }
    for (i, s) in scenario.steps.iter().enumerate() {
        let p = match &s.probability {
            rapex::StepProbability::Number(v) => v.to_string(),
            rapex::StepProbability::Text(t) => t.clone(),
        };
        let _ = writeln!(out, "  step {}: {:<40} {}", i + 1, s.label, p);
    }
    let _ = writeln!(
        out,
        "P = {:e} (band {}), severity {}: {} risk",
        a.total_probability, a.probability_band, a.severity, a.risk_class
    );
    if let Some(s) = &a.sensitivity {
        let classes: Vec<String> = s.classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            out,
            "sensitivity (x{} per step, severity +/-{}): {} variants, classes {}; {}",
            s.factor,
            s.severity_shift,
            s.variants.len(),
            classes.join(", "),
            if s.stable { "stable" } else { "not stable" }
        );
    }
    out
}

fn serve(a: &ServeArgs) -> Result<(), AppError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .try_init();
    let config = ServiceConfig { bins: a.bins, session_ttl: Duration::from_secs(a.session_ttl) };
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|source| AppError::Io { path: "tokio runtime".into(), source })?;
    runtime
        .block_on(service::serve(a.addr, config))
        .map_err(|source| AppError::Io { path: a.addr.to_string(), source })
}

