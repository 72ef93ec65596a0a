use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use covidx::arch::{ArchConfig, FamilyId};
use covidx::data::{gen_synthetic, SplitMode};
use covidx::record::{self, RunRecord};
use covidx::runner::{self, RunOptions};
use covidx::trainer::TrainConfig;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRAINING: u8 = 4;

#[derive(Parser)]
#[command(name = "covidx", version, about = "Train and compare small CNN classifiers on chest X-ray style images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class image set and its manifest
    Synth {
        /// Images per class
        #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: u64,
        /// Image side length in pixels
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(8..))]
        size: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
    },
    /// Train one model family and write its run directory
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// One of vgg19, densenet, inceptionv3, resnetv2, inceptionresnetv2, xception, mobilenetv2
        #[arg(long)]
        family: String,
        /// Depth label: 16 or 19 for vgg19, 121 or 201 for densenet
        #[arg(long)]
        variant: Option<u32>,
        /// Output directory [default: runs/<family>]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several families on one shared split and write combined tables
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        /// Run all seven families
        #[arg(long, conflicts_with = "families")]
        all: bool,
        /// Comma-separated subset of families
        #[arg(long, value_delimiter = ',')]
        families: Vec<String>,
        #[arg(long, default_value = "runs/benchmark")]
        out: PathBuf,
    },
    /// Regenerate tables and plots of a run (or benchmark) directory
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Recompute every metric from the stored predictions and compare
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// holdout (80/20) or three_way (40/40/20)
    #[arg(long, default_value = "holdout")]
    mode: String,
    /// Seeds the split, weight initialisation and batch shuffling
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input side length after resizing
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Channel multiplier
    #[arg(long, default_value_t = 0.25)]
    width: f64,
    /// Block-count multiplier
    #[arg(long, default_value_t = 0.5)]
    depth: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Use e^-3 (about 0.0498) as the learning rate
    #[arg(long, conflicts_with = "lr")]
    lr_euler: bool,
    #[arg(long, default_value_t = 7)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Keep the sample order fixed across epochs
    #[arg(long)]
    no_shuffle: bool,
}

impl RunArgs {
    fn options(&self, variant: Option<u32>) -> anyhow::Result<RunOptions> {
        let mode: SplitMode = self.mode.parse()?;
        let arch = ArchConfig {
            input_size: self.size,
            width_mult: self.width,
            depth_mult: self.depth,
            init_seed: self.seed,
            variant,
            ..ArchConfig::default()
        };
        arch.validate()?;
        let train = TrainConfig {
            learning_rate: if self.lr_euler { TrainConfig::euler_learning_rate() } else { self.lr },
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            shuffle_each_epoch: !self.no_shuffle,
        };
        train.validate()?;
        Ok(RunOptions { manifest: self.manifest.clone(), mode, split_seed: self.seed, arch, train })
    }
}

/// Pipeline stage that produced an error, used for the exit code.
#[derive(Debug)]
enum Stage {
    Data,
    Training,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Data => "data stage",
            Stage::Training => "training stage",
        })
    }
}

impl std::error::Error for Stage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use covidx::Error as E;
    for cause in err.chain() {
        if let Some(stage) = cause.downcast_ref::<Stage>() {
            return match stage {
                Stage::Data => EXIT_DATA,
                Stage::Training => EXIT_TRAINING,
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) | E::UnknownFamily { .. } | E::Config(_) => EXIT_USAGE,
                E::Manifest { .. } | E::Decode { .. } | E::Split(_) | E::Io { .. } | E::Record(_) | E::Metrics(_) => {
                    EXIT_DATA
                }
                E::Shape { .. } | E::NonFinite { .. } | E::Graph(_) | E::Diverged { .. } => EXIT_TRAINING,
            };
        }
    }
    1
}

fn workers() -> anyhow::Result<usize> {
    match std::env::var("COVIDX_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(covidx::Error::Config(format!("COVIDX_THREADS must be a positive integer, got {v:?}")).into()),
        },
    }
}

fn print_table(records: &[&RunRecord]) {
    print!("{}", runner::render_table(records));
}

fn cmd_train(run: &RunArgs, family: &str, variant: Option<u32>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let family: FamilyId = family.parse()?;
    let opts = run.options(variant)?;
    covidx::arch::build_family::<f32>(family, &opts.arch)?;
    let out = out.unwrap_or_else(|| Path::new("runs").join(family.cli_name()));
    let (entries, split) = opts
        .load_split()
        .with_context(|| format!("preparing data from {}", opts.manifest.display()))
        .context(Stage::Data)?;
    eprintln!(
        "{}: {} train / {} validation / {} test images",
        family.display_name(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let epochs = opts.train.epochs;
    let rec = runner::train_family(family, &opts, &entries, &split, &out, |log| {
        if log.epoch.is_multiple_of(10) || log.epoch == epochs {
            eprintln!(
                "epoch {:>4}  loss {:.4}  acc {:.3}  val_loss {:.4}  val_acc {:.3}",
                log.epoch, log.train_loss, log.train_accuracy, log.val_loss, log.val_accuracy
            );
        }
    })
    .with_context(|| format!("training {family}"))
    .context(Stage::Training)?;
    print_table(&[&rec]);
    println!("run written to {}", out.display());
    Ok(())
}

fn cmd_benchmark(run: &RunArgs, all: bool, families: &[String], out: &Path) -> anyhow::Result<()> {
    let families: Vec<FamilyId> = if all {
        FamilyId::ALL.to_vec()
    } else if families.is_empty() {
        return Err(covidx::Error::InvalidArgument("pass --all or --families".into()).into());
    } else {
        families.iter().map(|f| f.parse()).collect::<Result<_, _>>()?
    };
    let opts = run.options(None)?;
    let workers = workers()?;
    let epochs = opts.train.epochs;
    let progress = |f: FamilyId, log: &covidx::trainer::EpochLog| {
        if log.epoch.is_multiple_of(25) || log.epoch == epochs {
            eprintln!(
                "{:<18} epoch {:>4}  loss {:.4}  acc {:.3}  val_acc {:.3}",
                f.display_name(),
                log.epoch,
                log.train_loss,
                log.train_accuracy,
                log.val_accuracy
            );
        }
    };
    let (summary, outcomes) = runner::run_benchmark(&families, &opts, out, workers, &progress)
        .with_context(|| format!("preparing data from {}", opts.manifest.display()))
        .context(Stage::Data)?;
    let ok: Vec<&RunRecord> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    print_table(&ok);
    for o in &outcomes {
        if let Err(e) = &o.result {
            eprintln!("{} failed: {e}", o.family.display_name());
        }
    }
    println!("split {}", summary.split_hash);
    println!("benchmark written to {}", out.display());
    if ok.len() < outcomes.len() {
        return Err(anyhow::anyhow!("{} of {} families failed", outcomes.len() - ok.len(), outcomes.len())
            .context(Stage::Training));
    }
    Ok(())
}

fn cmd_report(dir: &Path, verify: bool) -> anyhow::Result<()> {
    let runs = record::find_runs(dir).context(Stage::Data)?;
    let mut records = Vec::new();
    for run in &runs {
        if verify {
            let v = record::verify(run).with_context(|| format!("verifying {}", run.display())).context(Stage::Data)?;
            println!(
                "verified {}: {} values, max |diff| {:e}",
                run.display(),
                v.values_checked,
                v.max_abs_diff
            );
        }
        records.push(record::regenerate(run).with_context(|| format!("regenerating {}", run.display())).context(Stage::Data)?);
    }
    if dir.join(runner::SUMMARY_JSON).is_file() {
        runner::regenerate_benchmark(dir).context(Stage::Data)?;
    }
    print_table(&records.iter().collect::<Vec<_>>());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { per_class, size, seed, out } => {
            let manifest = gen_synthetic(per_class as usize, size as usize, seed, &out).context(Stage::Data)?;
            println!("{}", manifest.display());
        }
        Command::Train { run, family, variant, out } => cmd_train(&run, &family, variant, out)?,
        Command::Benchmark { run, all, families, out } => cmd_benchmark(&run, all, &families, &out)?,
        Command::Report { run, verify } => {
            if !run.exists() {
                bail!(covidx::Error::Record(format!("{} does not exist", run.display())));
            }
            cmd_report(&run, verify)?
        }
    }
    Ok(())
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
