use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mmqkd::channel_sim::{expected_observations, sample_observations};
use mmqkd::decoy::Observations;
use mmqkd::detector_model::{closed_form_deltas, oracle_deltas, DeltaPair};
use mmqkd::keyrate::{key_length_decoy, scan_loss};
use mmqkd::mc_verify::*;
use mmqkd::phase_error::bound_decoy_composed;
use serde::Serialize;
use serde_json::json;

mod config;
mod format;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    /// a verification ran but did not pass
    Check(String),
}

impl From<mmqkd::Error> for CliError {
    fn from(e: mmqkd::Error) -> Self {
        match e {
            mmqkd::Error::Config(_) | mmqkd::Error::Domain(_) => CliError::Config(e.to_string()),
            mmqkd::Error::Degenerate(_) | mmqkd::Error::Numeric(_) => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "mmqkd", version, about = "Finite-size decoy BB84 key rates with detector mismatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate over the loss values in [scan], as CSV
    Keyrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// δ₁, δ₂ from the closed form and from the numeric oracle
    Delta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// largest photon-number block the oracle visits
        #[arg(long)]
        nmax: Option<usize>,
    },
    /// Decoy bounds, phase-error bound and key length for observed counts
    Decoy {
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observed statistics for the configured channel
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// expected counts instead of one sampled run
        #[arg(long)]
        expected: bool,
    },
    /// Monte Carlo check of one concentration lemma
    Verify {
        #[arg(long, value_enum)]
        lemma: Lemma,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// rounds per trial
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Lemma {
    Serfling,
    Smallpovm,
    Transfer,
    Decoy,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

const CSV_HEADER: &str = "loss_dB,key_rate_per_pulse,key_length,phase_bound,delta1,delta2";

fn keyrate(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    cfg.validate_common()?;
    let channel = cfg.channel_at(0.0)?;
    let rows = scan_loss(&channel, &cfg.decoy, cfg.detector()?, &cfg.epsilon, &cfg.error_correction, &cfg.scan.losses_db)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        let f = format::sig12;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            f(r.loss_db),
            f(r.key_rate_per_pulse),
            r.key_length,
            f(r.phase_bound),
            f(r.delta1),
            f(r.delta2)
        )
        .expect("writing to a String");
    }
    let meta = to_json(&json!({
        "config": cfg,
        "security_parameter": cfg.epsilon.security_parameter_decoy(),
    }));
    match out {
        Some(p) => {
            emit(Some(p), &csv)?;
            let mut side = p.as_os_str().to_owned();
            side.push(".meta.json");
            emit(Some(Path::new(&side)), &meta)
        }
        None => {
            eprint!("{meta}");
            emit(None, &csv)
        }
    }
}

fn delta(config: &Path, out: Option<&Path>, nmax: Option<usize>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(n) = nmax {
        cfg.oracle.n_max = n;
    }
    cfg.validate_common()?;
    let spec = *cfg.detector()?;
    let closed = closed_form_deltas(&spec)?;
    let oracle = oracle_deltas(&spec, cfg.oracle.n_max, &cfg.oracle.grid())?;
    emit(
        out,
        &to_json(&json!({
            "config": cfg,
            "closed_form": closed,
            "closed_form_vacuous": spec.closed_form_is_vacuous(),
            "oracle": oracle,
        })),
    )
}

/// Accepts the output of `simulate` or a bare observations object.
fn read_observations(path: &Path) -> Result<Observations, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("observations") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn decoy(observations: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config)?;
    cfg.validate_common()?;
    let obs = read_observations(observations)?;
    obs.validate()?;
    let deltas = match &cfg.detector {
        Some(d) => closed_form_deltas(d)?,
        None => DeltaPair::ZERO,
    };
    let bounds = bound_decoy_composed(&obs, &cfg.decoy, deltas, &cfg.epsilon)?;
    let key = key_length_decoy(&obs, &cfg.decoy, deltas, &cfg.epsilon, &cfg.error_correction)?;
    emit(
        out,
        &to_json(&json!({
            "config": cfg,
            "observations": obs,
            "deltas": deltas,
            "bounds": bounds,
            "key": key,
        })),
    )
}

fn simulate(config: &Path, out: Option<&Path>, seed: Option<u64>, expected: bool) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.validate_common()?;
    let channel = cfg.simulate_channel()?;
    let body = if expected {
        let obs = expected_observations(&channel, &cfg.decoy)?;
        json!({ "config": cfg, "mode": "expected", "observations": obs })
    } else {
        let seed = seed.or(cfg.seed).unwrap_or(0);
        cfg.seed = Some(seed);
        let obs = sample_observations(&channel, &cfg.decoy, seed)?;
        json!({ "config": cfg, "mode": "sampled", "observations": obs })
    };
    emit(out, &to_json(&body))
}

fn verify(
    lemma: Lemma,
    config: Option<&Path>,
    out: Option<&Path>,
    trials: Option<usize>,
    seed: Option<u64>,
    n: Option<usize>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config)?;
    let mut base = TrialConfig::default();
    if let Some(v) = n.or(cfg.verify.n) {
        base.n = v;
    }
    if let Some(v) = trials.or(cfg.verify.trials) {
        base.trials = v;
    }
    if let Some(v) = seed.or(cfg.verify.seed).or(cfg.seed) {
        base.seed = v;
    }
    let (settings, report) = match lemma {
        Lemma::Serfling => {
            let c = SerflingConfig { base, ..Default::default() };
            (json!(c), verify_serfling(&c)?)
        }
        Lemma::Smallpovm => {
            let c = SmallPovmConfig { base, ..Default::default() };
            (json!(c), verify_small_povm(&c)?)
        }
        Lemma::Transfer => {
            let c = TransferConfig { base, ..Default::default() };
            (json!(c), verify_freq_transfer(&c)?)
        }
        Lemma::Decoy => {
            let c = DecoyHoeffdingConfig { base, decoy: cfg.decoy, ..Default::default() };
            (json!(c), verify_decoy_hoeffding(&c)?)
        }
    };
    emit(out, &to_json(&json!({ "lemma": lemma, "config": settings, "report": report })))?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!("{}: empirical frequency above bound + 3 sigma", report.lemma)))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Keyrate { config, out } => keyrate(&config, out.as_deref()),
        Command::Delta { config, out, nmax } => delta(&config, out.as_deref(), nmax),
        Command::Decoy { observations, config, out } => decoy(&observations, config.as_deref(), out.as_deref()),
        Command::Simulate { config, out, seed, expected } => simulate(&config, out.as_deref(), seed, expected),
        Command::Verify { lemma, config, out, trials, seed, n } => {
            verify(lemma, config.as_deref(), out.as_deref(), trials, seed, n)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
    }
}
