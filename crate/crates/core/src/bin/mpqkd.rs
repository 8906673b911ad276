use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mpqkd::estimate::{estimate_key_rate, plob_bound, EstimateError, Mode};
use mpqkd::freqref::{read_bins_csv, sliding_estimates, write_estimates_csv, FreqError};
use mpqkd::model::{validate_config, ConfigError, SystemConfig};
use mpqkd::pairing::pair_positions;
use mpqkd::pipeline::{record_paths, replay_records, simulate_to_dir, FrequencySource, PipelineError, RunOptions};
use mpqkd::presets::Link;
use mpqkd::siftmap::TallyTable;

#[derive(Parser)]
#[command(name = "mpqkd", version, about = "Mode-pairing QKD simulator and key-rate estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in link: 202, 303, 354 or 404.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate blocks, write them to DIR and report on them.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        blocks: u64,
        #[arg(long)]
        out: PathBuf,
        /// Rounds per block, overriding the configuration.
        #[arg(long)]
        n_rounds: Option<u64>,
        /// Use a constant beat frequency instead of the reference light.
        #[arg(long)]
        delta_f: Option<f64>,
    },
    /// Run the chain on stored records (a file or a directory of them).
    Replay {
        #[arg(long)]
        records: PathBuf,
        /// Defaults to config.txt next to the records.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use a constant beat frequency instead of the reference sidecar.
        #[arg(long)]
        delta_f: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the key rate from a tally table.
    Estimate {
        #[arg(long)]
        tallies: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Total rounds, overriding the configuration.
        #[arg(long)]
        n_rounds: Option<u64>,
    },
    /// Repeaterless bound for a given channel loss.
    Plob {
        #[arg(long)]
        loss_db: f64,
    },
    /// Sliding-window beat-frequency estimates from binned counts.
    Freqest {
        #[arg(long)]
        bins: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        bin_ns: f64,
        #[arg(long, default_value_t = 500.0)]
        window_us: f64,
        #[arg(long, default_value_t = 2)]
        pad: u32,
    },
    /// Greedy pairing of effective round indices (one per line).
    Pair {
        #[arg(long)]
        l_max: u64,
        /// Defaults to standard input.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<SystemConfig> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => read_config(path)?,
        (None, Some(name)) => Link::from_name(name)
            .ok_or_else(|| anyhow!("unknown preset `{name}`"))?
            .config(),
        (None, None) => bail!("either --config or --preset is required"),
    };
    Ok(validate_config(cfg)?)
}

fn read_config(path: &Path) -> Result<SystemConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SystemConfig::from_config_text(&text).with_context(|| format!("in {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            cfg,
            seed,
            blocks,
            out,
            n_rounds,
            delta_f,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(n) = n_rounds {
                cfg.n_rounds = n;
            }
            let cfg = validate_config(cfg)?;
            let opts = RunOptions {
                frequency: delta_f.map_or(FrequencySource::Reference, FrequencySource::Fixed),
                ..Default::default()
            };
            let (report, tallies, manifest) = simulate_to_dir(&cfg, seed, blocks, opts, &out)?;
            write_file(&out.join("config.txt"), &cfg.to_config_text())?;
            write_file(&out.join("report.json"), &report.to_json())?;
            write_file(&out.join("tallies.json"), &(tallies.to_json() + "\n"))?;
            write_file(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
            eprintln!(
                "{} blocks, {} rounds: n11 >= {:.1}, E_z = {:.4}, E_x = {:.4}, R = {:.4e} bit/pulse ({:.4e} statistical)",
                report.inputs.n_blocks,
                report.n_rounds,
                report.finite_key.n11_z_lower,
                report.e_z,
                report.e_x,
                report.finite_key.skr_bpp,
                report.statistical.skr_bpp
            );
        }
        Command::Replay {
            records,
            config,
            delta_f,
            out,
        } => {
            let config = config.unwrap_or_else(|| {
                let dir = if records.is_dir() {
                    records.clone()
                } else {
                    records.parent().map(Path::to_path_buf).unwrap_or_default()
                };
                dir.join("config.txt")
            });
            let cfg = validate_config(read_config(&config)?)?;
            let report = replay_records(&record_paths(&records)?, &cfg, delta_f)?;
            match out {
                Some(path) => write_file(&path, &report.to_json())?,
                None => io::stdout().write_all(report.to_json().as_bytes())?,
            }
        }
        Command::Estimate { tallies, cfg, n_rounds } => {
            let cfg = load_config(&cfg)?;
            let text = fs::read_to_string(&tallies).with_context(|| format!("reading {}", tallies.display()))?;
            let table = TallyTable::from_json(&text).with_context(|| format!("parsing {}", tallies.display()))?;
            let n = n_rounds.unwrap_or(cfg.n_rounds) as f64;
            let finite = estimate_key_rate(&table, &cfg, n, Mode::FiniteKey)?;
            let statistical = estimate_key_rate(&table, &cfg, n, Mode::Statistical)?;
            let failure = finite.failure.clone();
            let doc = serde_json::json!({
                "tallies": table,
                "n_rounds": n,
                "finite_key": finite,
                "statistical": statistical,
                "assumptions": { "epsilons": cfg.epsilons, "f_ec": cfg.f_ec },
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            if let Some(msg) = failure {
                return Err(EstimateError::EstimationFailure(msg).into());
            }
        }
        Command::Plob { loss_db } => {
            if !(loss_db >= 0.0) {
                return Err(ConfigError::OutOfRange {
                    field: "loss_db".into(),
                    value: loss_db,
                    range: "[0, inf)",
                }
                .into());
            }
            println!("{:e}", plob_bound(loss_db));
        }
        Command::Freqest {
            bins,
            bin_ns,
            window_us,
            pad,
        } => {
            let file = fs::File::open(&bins).with_context(|| format!("opening {}", bins.display()))?;
            let counts = read_bins_csv(BufReader::new(file))?;
            let est = sliding_estimates(&counts, bin_ns, window_us, pad)?;
            write_estimates_csv(io::stdout().lock(), &est)?;
        }
        Command::Pair { l_max, input } => {
            if l_max == 0 {
                return Err(ConfigError::OutOfRange {
                    field: "l_max".into(),
                    value: 0.0,
                    range: "[1, inf)",
                }
                .into());
            }
            let reader: Box<dyn BufRead> = match &input {
                Some(p) => Box::new(BufReader::new(
                    fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
                )),
                None => Box::new(io::stdin().lock()),
            };
            let mut rounds = Vec::new();
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                let j: u64 = t.parse().with_context(|| format!("line {}: `{t}`", n + 1))?;
                if rounds.last().is_some_and(|&p| j <= p) {
                    bail!("line {}: round indices must increase", n + 1);
                }
                rounds.push(j);
            }
            let mut out = io::stdout().lock();
            for (a, b) in pair_positions(&rounds, l_max) {
                writeln!(out, "{},{}", rounds[a], rounds[b])?;
            }
        }
    }
    Ok(())
}

/// 2 for configuration problems, 3 for numeric or estimation failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<EstimateError>() || cause.is::<FreqError>() {
            return 3;
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            match p {
                PipelineError::Config(_) => return 2,
                PipelineError::Estimate(_) => return 3,
                PipelineError::Sim(mpqkd::sim::SimError::Config(_)) => return 2,
                PipelineError::Sim(_) => return 3,
                _ => {}
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
