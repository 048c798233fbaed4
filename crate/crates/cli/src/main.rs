//! `srtsl` command-line entry point.
//!
//! Configuration precedence, lowest first: built-in defaults, the `--config`
//! file, then individual flags. Every command prints the resolved
//! configuration as `key = value` lines that can be fed back via `--config`.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use srtsl::config::{DataSource, Precision, RunConfig};
use srtsl::data::{
    parse_skeleton_file, read_manifest, split_dataset, synthetic_dataset, write_manifest, FixedLengthSequence,
    SkeletonSequence,
};
use srtsl::model::{gradient_check, ModelConfig, SrTsl};
use srtsl::training::{
    evaluate, load_checkpoint, read_checkpoint_config, save_checkpoint, EpochMetrics, Trainer,
};
use srtsl::Scalar;

const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "srtsl", version, about = "Skeleton action recognition with spatial reasoning and temporal stack learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics and checkpoints to the output directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        /// Keep an extra numbered checkpoint every N epochs (0 keeps none).
        #[arg(long, value_name = "N", default_value_t = 10)]
        keep_every: usize,
    },
    /// Report test-split accuracy and the confusion matrix of a checkpoint.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print the predicted class of one skeleton file.
    Predict {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        file: PathBuf,
    },
    /// Check analytic gradients of the micro model against finite differences.
    Gradcheck {
        #[arg(long, value_name = "U64", default_value_t = 1)]
        seed: u64,
    },
    /// Write a synthetic dataset directory with its index.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "N")]
        classes: Option<usize>,
        #[arg(long, value_name = "N")]
        per_class: Option<usize>,
    },
}

#[derive(Args, Default)]
struct DataArgs {
    /// Dataset directory with an index file; `synthetic` generates samples.
    #[arg(long, value_name = "DIR")]
    data: Option<String>,
    /// cross-subject, cross-view or random:FRAC.
    #[arg(long, value_name = "PROTOCOL")]
    split: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    batch: Option<usize>,
    #[arg(long, value_name = "D")]
    clip_len: Option<usize>,
    #[arg(long, value_name = "T")]
    rgnn_steps: Option<usize>,
    /// full, fc-lstm, srn-lstm, fc-tsln, position or velocity.
    #[arg(long, value_name = "NAME")]
    variant: Option<String>,
    /// f32 or f64.
    #[arg(long, value_name = "P")]
    precision: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(d) = &self.data {
            cfg.set("data", d)?;
        }
        if let Some(s) = &self.split {
            cfg.set("split", s)?;
        }
        Ok(())
    }
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags: [(&str, Option<String>); 8] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("clip_len", self.clip_len.map(|v| v.to_string())),
            ("rgnn_steps", self.rgnn_steps.map(|v| v.to_string())),
            ("variant", self.variant.clone()),
            ("precision", self.precision.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        self.data.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn echo(cfg: &RunConfig) {
    println!("# resolved configuration");
    print!("{}", cfg.to_text());
    println!("# end configuration");
}

fn raw_samples(cfg: &RunConfig) -> Result<Vec<SkeletonSequence>> {
    Ok(match &cfg.data {
        DataSource::Synthetic => synthetic_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.seed, &cfg.synth)?,
        DataSource::Directory(dir) => {
            read_manifest(dir, cfg.joints).with_context(|| format!("loading dataset {}", dir.display()))?
        }
    })
}

/// Prepared (train, test) samples for `cfg`.
fn load_split(cfg: &RunConfig) -> Result<(Vec<FixedLengthSequence>, Vec<FixedLengthSequence>)> {
    let m = &cfg.model;
    let prepared = raw_samples(cfg)?
        .iter()
        .map(|s| FixedLengthSequence::prepare(s, m.frames, &m.parts))
        .collect::<srtsl::Result<Vec<_>>>()?;
    if let Some(s) = prepared.iter().find(|s| s.label >= m.classes) {
        bail!("sample {} has label {} but the model has {} classes", s.sample_id, s.label, m.classes);
    }
    let (train, test) = split_dataset(&prepared, &cfg.split_protocol()?)?;
    eprintln!("data: {} train / {} test samples ({})", train.len(), test.len(), cfg.split);
    Ok((train, test))
}

fn cmd_train(run: &RunArgs, resume: Option<&Path>, keep_every: usize) -> Result<()> {
    let base = match resume {
        Some(path) => read_checkpoint_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    let cfg = run.resolve(base)?;
    cfg.validate()?;
    echo(&cfg);
    match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg, resume, keep_every),
        Precision::F64 => train_with::<f64>(&cfg, resume, keep_every),
    }
}

fn train_with<F: Scalar>(cfg: &RunConfig, resume: Option<&Path>, keep_every: usize) -> Result<()> {
    let (train, test) = load_split(cfg)?;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = load_checkpoint::<F>(path).with_context(|| format!("loading {}", path.display()))?;
            if ckpt.config.model != cfg.model {
                bail!("model settings differ from the checkpoint; only training and output settings may change on resume");
            }
            let mut t = ckpt.trainer;
            t.config = cfg.train;
            eprintln!("resuming at epoch {}", t.epoch);
            t
        }
        None => Trainer::new(SrTsl::<F>::new(cfg.model.clone(), cfg.seed)?, cfg.train)?,
    };

    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let log_path = cfg.out.join("metrics.tsv");
    let fresh_log = resume.is_none() || !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh_log)
        .truncate(fresh_log)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    if fresh_log {
        writeln!(log, "{}", EpochMetrics::HEADER)?;
    }

    println!("{}", EpochMetrics::HEADER);
    trainer.run(&train, &test, |t, m| {
        println!("{m}");
        writeln!(log, "{m}")?;
        log.flush()?;
        save_checkpoint(&cfg.out.join("last.ckpt"), cfg, t)?;
        if keep_every > 0 && t.epoch % keep_every == 0 {
            save_checkpoint(&cfg.out.join(format!("epoch-{:03}.ckpt", t.epoch)), cfg, t)?;
        }
        Ok(())
    })?;
    if let Some(m) = trainer.metrics.last() {
        println!("final test accuracy {:.4}", m.test_acc);
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &DataArgs) -> Result<()> {
    let mut cfg = read_checkpoint_config(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    data.apply(&mut cfg)?;
    cfg.validate()?;
    echo(&cfg);
    match cfg.precision {
        Precision::F32 => eval_with::<f32>(&cfg, checkpoint),
        Precision::F64 => eval_with::<f64>(&cfg, checkpoint),
    }
}

fn eval_with<F: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let model = load_checkpoint::<F>(checkpoint)?.trainer.model;
    let (_, test) = load_split(cfg)?;
    let e = evaluate(&model, &test, cfg.train.batch_size)?;
    println!("accuracy {:.4} ({}/{})", e.accuracy, e.correct, e.total);
    println!("confusion (rows: true class, columns: predicted class)");
    for row in &e.confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{}", cells.join("\t"));
    }
    Ok(())
}

fn cmd_predict(checkpoint: &Path, file: &Path) -> Result<()> {
    let cfg = read_checkpoint_config(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    echo(&cfg);
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let seq = parse_skeleton_file(&text, cfg.joints).with_context(|| format!("parsing {}", file.display()))?;
    let sample = FixedLengthSequence::prepare(&seq, cfg.model.frames, &cfg.model.parts)?;
    let class = match cfg.precision {
        Precision::F32 => load_checkpoint::<f32>(checkpoint)?.trainer.model.predict(&sample)?,
        Precision::F64 => load_checkpoint::<f64>(checkpoint)?.trainer.model.predict(&sample)?,
    };
    println!("{class}");
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<bool> {
    let mut cfg = RunConfig {
        model: ModelConfig::micro(),
        precision: Precision::F64,
        seed,
        ..RunConfig::default()
    };
    cfg.joints = cfg.model.parts.joint_count();
    echo(&cfg);
    let r = gradient_check(&cfg.model, seed)?;
    if let Some((name, i)) = &r.worst {
        eprintln!(
            "worst entry {name}[{i}]: analytic {:e}, numeric {:e} ({} scalars checked)",
            r.worst_values.0, r.worst_values.1, r.checked
        );
    }
    println!("max relative error {:e}", r.max_rel_error);
    Ok(r.max_rel_error < GRADCHECK_THRESHOLD)
}

fn cmd_synth(run: &RunArgs, classes: Option<usize>, per_class: Option<usize>) -> Result<()> {
    let mut cfg = run.resolve(RunConfig::default())?;
    if let Some(c) = classes {
        cfg.synth_classes = c;
    }
    if let Some(n) = per_class {
        cfg.synth_per_class = n;
    }
    if cfg.data != DataSource::Synthetic {
        bail!("synth generates data; --data must be synthetic or absent");
    }
    cfg.validate()?;
    echo(&cfg);
    let samples = synthetic_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.seed, &cfg.synth)?;
    write_manifest(&cfg.out, &samples).with_context(|| format!("writing {}", cfg.out.display()))?;
    println!("wrote {} samples to {}", samples.len(), cfg.out.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SRTSL_THREADS") {
        let n: usize = v.parse().with_context(|| format!("SRTSL_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match &cli.command {
        Command::Train { run, resume, keep_every } => cmd_train(run, resume.as_deref(), *keep_every)?,
        Command::Eval { checkpoint, data } => cmd_eval(checkpoint, data)?,
        Command::Predict { checkpoint, file } => cmd_predict(checkpoint, file)?,
        Command::Gradcheck { seed } => return cmd_gradcheck(*seed),
        Command::Synth { run, classes, per_class } => cmd_synth(run, *classes, *per_class)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradient check failed: error at or above {GRADCHECK_THRESHOLD:e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
