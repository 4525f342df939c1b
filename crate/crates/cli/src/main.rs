use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liouville_cli::commands::{self, Outcome};
use liouville_cli::config::{read_matrix, ExperimentConfig};
use liouville_cli::manifest::{write_artifacts, RunManifest};
use liouville_cli::{CliError, EXIT_MODULE, EXIT_USAGE};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "liouville", version, about = "Blowup numerics for Liouville systems on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Coupling matrix JSON: {"n":..,"a":[[..]]} or a list of rows.
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Experiment descriptor JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON/CSV artifacts and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[arg(long, global = true)]
    delta0: Option<f64>,
    #[arg(long = "convention-factor", global = true, value_parser = ["1", "2"])]
    convention_factor: Option<String>,
    /// Level N.
    #[arg(long = "N", global = true)]
    level: Option<usize>,
    /// Euler characteristic.
    #[arg(long, global = true, allow_hyphen_values = true)]
    chi: Option<i64>,
    /// Heights α, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    /// Parameter ρ, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check the structural hypotheses on the coupling matrix.
    CheckMatrix,
    /// Classify ρ against Γ_N or project a direction onto it.
    Gamma,
    /// The point Q_N on Γ_N.
    Qpoint,
    /// Degree of the solution map in O_N.
    Degree,
    /// Global radial solution and its asymptotic data.
    GlobalSolve,
    /// Jacobian of the mass map, sweeps and inversion.
    MassMap,
    /// Green's function samples and the spectral check.
    GreenProbe,
    /// Solve for blowup locations.
    Locations,
    /// Leading coefficient D from regularized brackets (m < 4).
    LeadingTerm,
    /// Coefficients b_it (all masses equal to 4).
    BCoeff,
    /// Continue the mean field equation along a ray in ρ.
    PdeContinue,
    /// Run every acceptance check.
    VerifyAll,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckMatrix => "check-matrix",
            Command::Gamma => "gamma",
            Command::Qpoint => "qpoint",
            Command::Degree => "degree",
            Command::GlobalSolve => "global-solve",
            Command::MassMap => "mass-map",
            Command::GreenProbe => "green-probe",
            Command::Locations => "locations",
            Command::LeadingTerm => "leading-term",
            Command::BCoeff => "b-coeff",
            Command::PdeContinue => "pde-continue",
            Command::VerifyAll => "verify-all",
        }
    }

    fn run(self, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
        match self {
            Command::CheckMatrix => commands::check_matrix(cfg),
            Command::Gamma => commands::gamma(cfg),
            Command::Qpoint => commands::qpoint(cfg),
            Command::Degree => commands::degree_cmd(cfg),
            Command::GlobalSolve => commands::global_solve(cfg),
            Command::MassMap => commands::mass_map(cfg),
            Command::GreenProbe => commands::green_probe(cfg),
            Command::Locations => commands::locations(cfg),
            Command::LeadingTerm => commands::leading_term(cfg),
            Command::BCoeff => commands::b_coeff(cfg),
            Command::PdeContinue => commands::pde_continue(cfg),
            Command::VerifyAll => commands::verify_all(cfg),
        }
    }
}

/// Config file first, then flags on top.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &cli.matrix {
        cfg.matrix = Some(read_matrix(p)?);
    }
    if let Some(t) = cli.tol {
        cfg.tol = Some(t);
        cfg.controls.tol = t;
    }
    if let Some(d) = cli.delta0 {
        cfg.deltas = vec![d];
        cfg.controls.delta0 = d;
    }
    if let Some(cf) = &cli.convention_factor {
        cfg.convention_factor = Some(cf.parse().expect("validated by clap"));
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = Some(r);
    }
    if let Some(n) = cli.level {
        cfg.level = Some(n);
        cfg.controls.level = n;
    }
    if let Some(c) = cli.chi {
        cfg.chi = Some(c);
    }
    if let Some(a) = &cli.alpha {
        cfg.alpha = Some(a.clone());
    }
    if let Some(r) = &cli.rho {
        cfg.rho = Some(r.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TOOLKIT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("TOOLKIT_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = now();
    let cfg = match init_threads().and_then(|_| effective_config(&cli)) {
        Ok(c) => c,
        Err(e) => return report_error(&cli, None, &started, e),
    };
    match cli.command.run(&cfg) {
        Ok(out) => finish(&cli, &cfg, &started, out),
        Err(e) => report_error(&cli, Some(&cfg), &started, e),
    }
}

fn finish(cli: &Cli, cfg: &ExperimentConfig, started: &str, out: Outcome) -> ExitCode {
    let body = pretty(&out.json);
    print!("{}", out.stdout.as_ref().map(|s| format!("{s}\n")).unwrap_or_else(|| body.clone()));
    if let Some(dir) = &cfg.out {
        let mut files = vec![(format!("{}.json", cli.command.name()), body.into_bytes())];
        files.extend(out.tables);
        files.push(("config.json".to_string(), (cfg.to_json() + "\n").into_bytes()));
        let status = if out.exit_code == 0 { "ok" } else { "failed" };
        if let Err(e) = persist(cli, cfg, dir, &files, started, status, out.exit_code) {
            eprintln!("{}", pretty(&json!({ "error": { "kind": "io", "message": e.to_string() } })));
            return ExitCode::from(EXIT_MODULE);
        }
    }
    ExitCode::from(out.exit_code as u8)
}

fn persist(
    cli: &Cli,
    cfg: &ExperimentConfig,
    dir: &std::path::Path,
    files: &[(String, Vec<u8>)],
    started: &str,
    status: &str,
    exit_code: i32,
) -> std::io::Result<()> {
    let artifacts = write_artifacts(dir, files)?;
    RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        config_hash: cfg.hash(),
        started_at: started.to_string(),
        finished_at: now(),
        status: status.to_string(),
        exit_code,
        artifacts,
    }
    .write(dir)
}

fn report_error(cli: &Cli, cfg: Option<&ExperimentConfig>, started: &str, e: CliError) -> ExitCode {
    let (code, kind, message) = match &e {
        CliError::Usage(m) => (EXIT_USAGE, "usage", m.clone()),
        CliError::Module(err) => (EXIT_MODULE, err.kind(), err.to_string()),
    };
    let body = json!({ "error": { "kind": kind, "message": message, "command": cli.command.name() } });
    eprint!("{}", pretty(&body));
    if let (Some(cfg), Some(dir)) = (cfg, cfg.and_then(|c| c.out.as_ref())) {
        let files = vec![("error.json".to_string(), pretty(&body).into_bytes())];
        let _ = persist(cli, cfg, dir, &files, started, "error", code as i32);
    }
    ExitCode::from(code)
}
