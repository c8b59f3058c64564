//! Command-line surface of discord-gate: `analyze`, `verify` and `generate`.
//!
//! Exit codes: 0 clean, 1 verification anomalies, 2 malformed input,
//! 3 invariant violation, 4 internal or output error.

pub mod analyze;
pub mod files;
pub mod json;

use clap::{Args, Parser, Subcommand};
use discord_gate::linalg::RandomSource;
use discord_gate::states::{generate_state, StateKind, StateParams};
use discord_gate::verify::{monte_carlo_verify, CampaignConfig, VerificationReport};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANOMALIES: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Malformed(String),
    Invariant(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Malformed(_) => EXIT_MALFORMED,
            Failure::Invariant(_) => EXIT_INVARIANT,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Malformed(m) => write!(f, "malformed input: {m}"),
            Failure::Invariant(m) => write!(f, "invariant violation: {m}"),
            Failure::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "discord-gate",
    version,
    about = "Complete positivity of reduced dynamics versus vanishing discord"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one state file.
    Analyze(AnalyzeArgs),
    /// Run the seeded verification campaign.
    Verify(VerifyArgs),
    /// Write random state files.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub state: PathBuf,
    /// Joint unitary file; may be repeated.
    #[arg(long = "unitary")]
    pub unitaries: Vec<PathBuf>,
    /// CP tolerance on the smallest Choi eigenvalue.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Attempts for the non-CP certificate search.
    #[arg(long, default_value_t = 500)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Canonical JSON output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "product,cq,sl-generic,separable-discordant,entangled-pure"
    )]
    pub families: Vec<String>,
    /// `dSxdB`, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2x2")]
    pub dims: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub n_states: usize,
    #[arg(long, default_value_t = 10)]
    pub n_unitaries: usize,
    #[arg(long, default_value_t = 500)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random draws for the sector-algebra audit.
    #[arg(long, default_value_t = 200)]
    pub algebra_draws: usize,
    /// Report path; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "cq")]
    pub kind: String,
    #[arg(long, default_value = "2x2")]
    pub dims: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn parse_dims(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Malformed(format!("dimensions '{s}' are not of the form dSxdB"));
    let (a, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let ds = a.trim().parse::<usize>().map_err(|_| bad())?;
    let db = b.trim().parse::<usize>().map_err(|_| bad())?;
    if ds == 0 || db == 0 {
        return Err(bad());
    }
    Ok((ds, db))
}

pub fn parse_kind(s: &str) -> Result<StateKind, Failure> {
    s.trim()
        .parse()
        .map_err(|e: discord_gate::Error| Failure::Malformed(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Internal(format!("{}: cannot write: {e}", path.display())))
}

fn canonical<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    json::to_canonical(v).map_err(|e| Failure::Internal(e.to_string()))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(i32, String), Failure> {
    if args.tol.is_nan() || args.tol < 0.0 || args.budget == 0 {
        return Err(Failure::Malformed(
            "--tol must be >= 0 and --budget > 0".into(),
        ));
    }
    let opts = analyze::AnalyzeOptions {
        state: args.state.clone(),
        unitaries: args.unitaries.clone(),
        tol: args.tol,
        budget: args.budget,
        seed: args.seed,
    };
    let verdict = analyze::run(&opts)?;
    let text = if args.json {
        canonical(&verdict)?
    } else {
        analyze::human_readable(&verdict)
    };
    let code = if verdict.anomalies.is_empty() {
        EXIT_OK
    } else {
        EXIT_ANOMALIES
    };
    Ok((code, text))
}

pub fn campaign_config(args: &VerifyArgs) -> Result<CampaignConfig, Failure> {
    let families = args
        .families
        .iter()
        .map(|f| parse_kind(f))
        .collect::<Result<Vec<_>, _>>()?;
    let dims = args
        .dims
        .iter()
        .map(|d| parse_dims(d))
        .collect::<Result<Vec<_>, _>>()?;
    let config = CampaignConfig {
        families,
        dims,
        n_states: args.n_states,
        n_unitaries: args.n_unitaries,
        budget: args.budget,
        seed: args.seed,
        algebra_draws: args.algebra_draws,
        ..CampaignConfig::default()
    };
    config
        .validate()
        .map_err(|e| Failure::Malformed(e.to_string()))?;
    Ok(config)
}

pub fn summary(report: &VerificationReport) -> String {
    let mut out = format!(
        "{:<22} {:>7} {:>13} {:>11} {:>11}\n",
        "family", "tested", "cp_confirmed", "violations", "unresolved"
    );
    for f in &report.families {
        let t = f.tally;
        out.push_str(&format!(
            "{:<22} {:>7} {:>13} {:>11} {:>11}\n",
            f.family, t.tested, t.cp_confirmed, t.violations_found, t.unresolved
        ));
    }
    if let Some(a) = &report.algebra {
        out.push_str(&format!(
            "sector algebra: {} draws, max P_kl error {:.2e}, e(2,4) printed form disagrees on {} draws\n",
            a.draws, a.max_pkl_error, a.e24_printed_mismatches
        ));
    }
    out.push_str(&format!("anomalies: {}\n", report.anomalies));
    out
}

/// Returns the exit code and the text for stdout.
pub fn cmd_verify(args: &VerifyArgs) -> Result<(i32, String), Failure> {
    let config = campaign_config(args)?;
    let report = monte_carlo_verify(&config).map_err(|e| Failure::Internal(e.to_string()))?;
    let text = canonical(&report)?;
    let code = if report.anomalies == 0 {
        EXIT_OK
    } else {
        EXIT_ANOMALIES
    };
    match &args.out {
        Some(path) => {
            write_file(path, &text)?;
            Ok((code, summary(&report)))
        }
        None => Ok((code, text)),
    }
}

/// Writes `{kind}-{index}.json`; state `i` is drawn from stream `i` of `seed`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<(i32, String), Failure> {
    let kind = parse_kind(&args.kind)?;
    let (ds, db) = parse_dims(&args.dims)?;
    let params = StateParams::new(ds, db);
    params
        .validate()
        .map_err(|e| Failure::Malformed(e.to_string()))?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        Failure::Internal(format!("{}: cannot create: {e}", args.out_dir.display()))
    })?;
    let mut listing = String::new();
    for index in 0..args.count {
        let stream = index as u64;
        let mut rng = RandomSource::new(args.seed, stream);
        let state = generate_state(kind, &params, &mut rng)
            .map_err(|e| Failure::Malformed(e.to_string()))?;
        let label = format!("{kind}-{index}");
        let meta = files::Metadata {
            label: Some(label.clone()),
            seed: Some(args.seed),
            stream: Some(stream),
        };
        let text = canonical(&files::StateFile::from_state(&state, Some(meta)))?;
        let path = args.out_dir.join(format!("{label}.json"));
        write_file(&path, &text)?;
        listing.push_str(&format!("{}\n", path.display()));
    }
    Ok((EXIT_OK, listing))
}

/// Dispatches a parsed command line, printing to stdout/stderr.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(v) => cmd_verify(v),
        Command::Generate(g) => cmd_generate(g),
    };
    match result {
        Ok((code, text)) => {
            print!("{text}");
            code
        }
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
