use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlab::cli::{cmd_detect_eval, cmd_prepare, cmd_report, cmd_train, resolve_settings, DATA_DIR_ENV};
use nlab::dataset::synthetic::{write_cifar_dir, SyntheticSpec};
use nlab::dataset::PrepareSpec;
use nlab::trainer::TrainConfig;
use nlab::{NlabError, Result};

/// Noisy-label detection and training toolkit.
#[derive(Parser)]
#[command(name = "nlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// key = value settings file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides one setting; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Sets every seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CIFAR-10 binary dataset and inject label noise.
    Prepare {
        /// Directory with data_batch_*.bin and test_batch.bin.
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shorthand for `--override noise.rate=R`.
        #[arg(long)]
        noise_rate: Option<f64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train one model and write a run directory.
    Train {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Score every decision strategy on a stored detection dump.
    DetectEval { run_dir: PathBuf, epoch: usize },
    /// Summary table and per-epoch series across runs.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset in CIFAR-10 binary layout.
    SynthCifar {
        #[arg(long, env = DATA_DIR_ENV)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records per training batch file.
        #[arg(long, default_value_t = 10_000)]
        per_file: usize,
        #[arg(long, default_value_t = 10_000)]
        test_count: usize,
        #[arg(long, default_value_t = 1.0)]
        difficulty: f64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            data_dir,
            out,
            noise_rate,
            settings,
        } => {
            let mut kv = resolve_settings(settings.config.as_deref(), &settings.overrides)?;
            if let Some(r) = noise_rate {
                kv.set("noise.rate", r);
            }
            if let Some(s) = settings.seed {
                kv.set("split.seed", s);
                kv.set("noise.seed", s);
            }
            let spec = PrepareSpec::from_kv(&kv)?;
            if !(0.0..=1.0).contains(&spec.noise_rate) {
                return Err(NlabError::Config(format!(
                    "noise rate {} outside [0, 1]",
                    spec.noise_rate
                )));
            }
            let summary = cmd_prepare(&data_dir, &out, spec)?;
            println!("{} labels redrawn, {} noisy", summary.resampled, summary.noisy);
        }
        Command::Train { out, settings } => {
            let kv = resolve_settings(settings.config.as_deref(), &settings.overrides)?;
            let mut cfg = TrainConfig::from_kv(&kv)?;
            if let Some(s) = settings.seed {
                cfg.set_all_seeds(s);
            }
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(cfg.display_name()));
            let (dir, outcome) = cmd_train(cfg, &out)?;
            let s = &outcome.summary;
            let show = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            println!(
                "{}: best val {} (1-img) {} (4-rot), test {} / {}",
                dir.path().display(),
                show(s.val_one_image),
                show(s.val_four_rotation),
                show(s.test_one_image),
                show(s.test_four_rotation)
            );
        }
        Command::DetectEval { run_dir, epoch } => {
            let (results, path) = cmd_detect_eval(&run_dir, epoch)?;
            println!("strategy      clean_acc  clean_frac");
            for (s, m) in results {
                println!(
                    "{:<12}  {:.6}   {:.6}",
                    s.as_str(),
                    m.clean_prediction_accuracy,
                    m.predicted_clean_fraction
                );
            }
            println!("written to {}", path.display());
        }
        Command::Report { run_dirs, out } => {
            for p in cmd_report(&run_dirs, &out)? {
                println!("{}", p.display());
            }
        }
        Command::SynthCifar {
            out,
            seed,
            per_file,
            test_count,
            difficulty,
        } => {
            write_cifar_dir(
                &out,
                SyntheticSpec {
                    seed,
                    per_train_file: per_file,
                    test_count,
                    difficulty,
                },
            )?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
