use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mlf_cli::{emit_outputs, parse_config, resolve_out_dir, run_command, CliError, Command, Lemma, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "mlf", version, about = "Numerical checks for Lefschetz fibrations on cotangent bundles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario name, e.g. sphere2-height, quadric-n3-k1, torus-tilted, heegaard-genus-2.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to $MLF_OUT_DIR, then ./mlf-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    VerifyLemma { lemma: LemmaArg },
    Transport,
    Monodromy,
    Thimble,
    MorseSmale,
    ProbeIncompleteness,
    HeegaardExport,
    DoubleCheck,
    ScanDelta,
    ReportAll,
}

#[derive(Clone, Copy, ValueEnum)]
enum LemmaArg {
    Hnu,
    Cnu,
    H0,
    Slope,
    Pf,
    Surgery,
    Sharp,
    Pw,
}

impl From<&Cmd> for Command {
    fn from(c: &Cmd) -> Self {
        match c {
            Cmd::VerifyLemma { lemma } => Command::VerifyLemma(Lemma::ALL[*lemma as usize]),
            Cmd::Transport => Command::Transport,
            Cmd::Monodromy => Command::Monodromy,
            Cmd::Thimble => Command::Thimble,
            Cmd::MorseSmale => Command::MorseSmale,
            Cmd::ProbeIncompleteness => Command::ProbeIncompleteness,
            Cmd::HeegaardExport => Command::HeegaardExport,
            Cmd::DoubleCheck => Command::DoubleCheck,
            Cmd::ScanDelta => Command::ScanDelta,
            Cmd::ReportAll => Command::ReportAll,
        }
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
            parse_config(&text).map_err(|e| match e {
                CliError::Io { .. } => e,
                other => CliError::Invalid(format!("{}: {other}", path.display())),
            })?
        }
        None => RunConfig::default(),
    };
    cfg.command = Command::from(&cli.command);
    if let Some(s) = &cli.scenario {
        cfg.scenario = s.parse::<Scenario>()?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mlf: {e}");
            // unreadable config files count as configuration errors
            return ExitCode::from(2);
        }
    };
    let out = resolve_out_dir(cli.out.clone(), &cfg);
    let report = run_command(&cfg);
    for c in &report.checks {
        let num = |x: Option<f64>| x.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<8} {:<28} value {:>10}  tol {:>10}  margin {:>10}  {:>8.2}s  {}",
            c.status.label(),
            c.name,
            num(c.value),
            num(c.tolerance),
            num(c.margin),
            c.runtime.as_secs_f64(),
            c.detail
        );
    }
    match emit_outputs(&report, &out) {
        Ok(manifest) => println!("wrote {} files to {}", manifest.len() + 1, out.display()),
        Err(e) => {
            eprintln!("mlf: {e}");
            return ExitCode::from(e.exit_code());
        }
    }
    ExitCode::from(report.exit_code())
}
