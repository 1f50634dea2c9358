//! `snnmeta`: pretraining, meta-training, evaluation, sparsity sweeps and
//! memory-correlation heatmaps for the spiking few-shot meta-learner.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use snnmeta_core::checkpoint::{
    conv_checkpoint, conv_from_checkpoint, model_checkpoint, model_from_checkpoint, train_state_from_checkpoint,
    Checkpoint,
};
use snnmeta_core::config::RunConfig;
use snnmeta_core::episodes::{load_image, ClassCorpus, Dataset};
use snnmeta_core::layers::{pearson_correlation, MemoryRepresentation};
use snnmeta_core::meta::{meta_test, meta_train_steps, pretrain_conv, sparsity_sweep, Model, TaskRecord, TrainState};
use snnmeta_core::plasticity::SparsityPolicy;
use snnmeta_core::synth::{glyph_corpus, write_corpus, GlyphStyle};
use snnmeta_core::SimRng;

// rng streams derived from the run seed, one per command
const PRETRAIN_STREAM: u64 = 0x9E7A;
const EVAL_STREAM: u64 = 0xE7A1;
const HEATMAP_STREAM: u64 = 0x4EA7;

#[derive(Parser)]
#[command(name = "snnmeta", version, about = "Spiking few-shot meta-learner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` file applied on top of the defaults (or the checkpoint's configuration)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Single configuration override, e.g. `--set memory.da_gain=50` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct DataArgs {
    /// Root of the class-per-directory image corpus
    #[arg(long, env = "SNNMETA_DATA_DIR", value_name = "DIR")]
    data_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the convolutional features with unsupervised STDP
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        /// omniglot | double_mnist
        #[arg(long)]
        dataset: Option<String>,
        /// Number of training images presented
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Meta-train the memory and decision layers on top of pretrained features
    MetaTrain {
        #[command(flatten)]
        data: DataArgs,
        /// Conv checkpoint written by `pretrain`
        #[arg(long, value_name = "FILE", required_unless_present = "resume")]
        conv_ckpt: Option<PathBuf>,
        /// Continue a paused run from its checkpoint
        #[arg(long, value_name = "FILE", conflicts_with_all = ["conv_ckpt", "ways", "shots", "epochs", "seed", "config", "set"])]
        resume: Option<PathBuf>,
        #[arg(long)]
        ways: Option<usize>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Stop (resumably) after this many further tasks
        #[arg(long, value_name = "TASKS")]
        halt_after: Option<usize>,
        /// Model checkpoint to write
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Metrics CSV (default: `<out>.metrics.csv`)
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Meta-test a trained model on held-out classes
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        ways: Option<usize>,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restore the meta-trained memory weights before every episode
        #[arg(long)]
        reset_memory: bool,
        /// Per-episode CSV (default: `<model>.eval.csv`)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Pearson correlation matrix of memory representations
    Heatmap {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// One image path per line, relative paths resolved against the file
        #[arg(long, value_name = "FILE")]
        samples_file: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Meta-train and meta-test one model per sparsity level
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        conv_ckpt: PathBuf,
        /// Comma-separated `center:spread` pairs in percent
        #[arg(long, default_value = "5:1,15:3,40:8")]
        levels: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write a synthetic stroke-glyph corpus in class-per-directory layout
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bright strokes on black (default mimics Omniglot's dark strokes)
        #[arg(long)]
        light_strokes: bool,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<snnmeta_core::SnnError> for Failure {
    fn from(e: snnmeta_core::SnnError) -> Self {
        Self::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}\n\nSee `snnmeta help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Pretrain {
            data,
            dataset,
            samples,
            seed,
            out,
            cfg,
        } => {
            let mut rc = RunConfig::default();
            apply_config(&mut rc, &cfg)?;
            if let Some(d) = dataset {
                rc.data.dataset = Dataset::parse(&d).map_err(usage)?;
            }
            override_value(&mut rc.meta.pretrain_samples, samples);
            override_value(&mut rc.meta.seed, seed);
            rc.validate().map_err(usage)?;
            pretrain(&rc, &data.data_dir, &out)
        }
        Command::MetaTrain {
            data,
            conv_ckpt,
            resume,
            ways,
            shots,
            epochs,
            seed,
            halt_after,
            out,
            metrics,
            cfg,
        } => {
            let metrics = metrics.unwrap_or_else(|| suffixed(&out, "metrics.csv"));
            if let Some(path) = resume {
                let ck = load_checkpoint(&path)?;
                let rc = ck.run_config()?;
                let state = train_state_from_checkpoint(&ck, &rc)?;
                return meta_train(&rc, state, &data.data_dir, halt_after, &out, &metrics);
            }
            let path = conv_ckpt.expect("clap enforces --conv-ckpt without --resume");
            let ck = load_checkpoint(&path)?;
            let mut rc = ck.run_config()?;
            apply_config(&mut rc, &cfg)?;
            override_value(&mut rc.meta.n_ways, ways);
            override_value(&mut rc.meta.k_shots, shots);
            override_value(&mut rc.meta.epochs, epochs);
            override_value(&mut rc.meta.seed, seed);
            rc.validate().map_err(usage)?;
            let conv = conv_from_checkpoint(&ck, &rc).with_context(|| format!("{} does not fit the configuration", path.display()))?;
            let mut rng = SimRng::seed_from_u64(rc.meta.seed);
            let mut init_rng = rng.fork();
            let model = Model::new(&rc.meta, conv, &mut init_rng)?;
            meta_train(&rc, TrainState::new(model, rng), &data.data_dir, halt_after, &out, &metrics)
        }
        Command::Eval {
            data,
            model,
            episodes,
            ways,
            shots,
            seed,
            reset_memory,
            out,
            cfg,
        } => {
            let ck = load_checkpoint(&model)?;
            let mut rc = ck.run_config()?;
            apply_config(&mut rc, &cfg)?;
            override_value(&mut rc.meta.eval_episodes, episodes);
            override_value(&mut rc.meta.n_ways, ways);
            override_value(&mut rc.meta.k_shots, shots);
            override_value(&mut rc.meta.seed, seed);
            if reset_memory {
                rc.meta.memory_reset_per_episode = true;
            }
            rc.validate().map_err(usage)?;
            let out = out.unwrap_or_else(|| suffixed(&model, "eval.csv"));
            evaluate(&rc, &ck, &data.data_dir, &out)
        }
        Command::Heatmap {
            model,
            samples_file,
            out,
            seed,
        } => {
            let ck = load_checkpoint(&model)?;
            let mut rc = ck.run_config()?;
            override_value(&mut rc.meta.seed, seed);
            heatmap(&rc, &ck, &samples_file, &out)
        }
        Command::Sweep {
            data,
            conv_ckpt,
            levels,
            epochs,
            episodes,
            seed,
            out,
            cfg,
        } => {
            let levels = parse_levels(&levels).map_err(usage)?;
            let ck = load_checkpoint(&conv_ckpt)?;
            let mut rc = ck.run_config()?;
            apply_config(&mut rc, &cfg)?;
            override_value(&mut rc.meta.epochs, epochs);
            override_value(&mut rc.meta.eval_episodes, episodes);
            override_value(&mut rc.meta.seed, seed);
            rc.validate().map_err(usage)?;
            sweep(&rc, &ck, &levels, &data.data_dir, &out)
        }
        Command::Synth {
            out,
            classes,
            per_class,
            seed,
            light_strokes,
        } => {
            if classes == 0 || per_class == 0 {
                return Err(usage(anyhow!("--classes and --per-class must be >= 1")));
            }
            let mut rng = SimRng::seed_from_u64(seed);
            let corpus = glyph_corpus(classes, per_class, &GlyphStyle::default(), &mut rng);
            write_corpus(&corpus, &out, !light_strokes)?;
            println!("wrote {classes} classes x {per_class} images to {}", out.display());
            Ok(())
        }
    }
}

fn override_value<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_config(rc: &mut RunConfig, args: &ConfigArgs) -> CmdResult {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        rc.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))
            .map_err(usage)?;
    }
    for item in &args.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got `{item}`")))?;
        rc.set(k.trim(), v.trim()).map_err(usage)?;
    }
    Ok(())
}

fn parse_levels(text: &str) -> anyhow::Result<Vec<SparsityPolicy>> {
    let mut levels = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (c, s) = item
            .split_once(':')
            .ok_or_else(|| anyhow!("sparsity level `{item}` is not `center:spread`"))?;
        let center: f32 = c.trim().parse().with_context(|| format!("bad center in `{item}`"))?;
        let spread: f32 = s.trim().parse().with_context(|| format!("bad spread in `{item}`"))?;
        levels.push(SparsityPolicy::new(center, spread)?);
    }
    if levels.is_empty() {
        bail!("--levels lists no sparsity levels");
    }
    Ok(levels)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(Failure::Runtime)
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> CmdResult {
    let bytes = ck.to_bytes()?;
    create(path)?
        .write_all(&bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_split(rc: &RunConfig, root: &Path) -> Result<(ClassCorpus, ClassCorpus), Failure> {
    rc.data
        .load_split(root, rc.meta.conv.input_side)
        .with_context(|| format!("loading {} corpus from {}", rc.data.dataset.as_str(), root.display()))
        .map_err(Failure::Runtime)
}

fn create(path: &Path) -> Result<File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(File::create(path).with_context(|| format!("creating {}", path.display()))?)
}

fn pretrain(rc: &RunConfig, data_dir: &Path, out: &Path) -> CmdResult {
    let (train, _) = load_split(rc, data_dir)?;
    let start = Instant::now();
    let mut rng = SimRng::seed_from_u64(rc.meta.seed).derive(PRETRAIN_STREAM);
    let conv = pretrain_conv(&train, rc.meta.pretrain_samples, &rc.meta, &mut rng)?;
    save_checkpoint(&conv_checkpoint(&conv, rc), out)?;
    println!(
        "pretrained {} filters on {} samples from {} training classes -> {}",
        rc.meta.conv.n_filters,
        rc.meta.pretrain_samples,
        train.len(),
        out.display()
    );
    eprintln!("wall time {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn meta_train(
    rc: &RunConfig,
    mut state: TrainState,
    data_dir: &Path,
    halt_after: Option<usize>,
    out: &Path,
    metrics: &Path,
) -> CmdResult {
    let (train, _) = load_split(rc, data_dir)?;
    let start = Instant::now();
    let tasks = rc.meta.tasks_per_epoch;
    let mut epoch_acc = 0.0;
    meta_train_steps(&mut state, &train, &rc.meta, halt_after, |r| {
        epoch_acc += r.accuracy;
        if r.task + 1 == tasks {
            println!(
                "epoch {:>3}: accuracy {:.3}, reward magnitude {:.3}, support n_s {:.1}%",
                r.epoch,
                epoch_acc / tasks as f32,
                r.reward_mag,
                r.mean_n_s
            );
            epoch_acc = 0.0;
        }
    })?;
    save_checkpoint(&model_checkpoint(&state.model, rc, Some(&state)), out)?;
    write_metrics(metrics, &state.records)?;
    let total = rc.meta.epochs * tasks;
    if state.finished(&rc.meta) {
        println!("meta-trained {total} tasks -> {}", out.display());
    } else {
        println!(
            "paused after {} of {total} tasks -> {} (continue with --resume)",
            state.next_task,
            out.display()
        );
    }
    eprintln!("wall time {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn write_metrics(path: &Path, records: &[TaskRecord]) -> CmdResult {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TaskRecord::CSV_HEADER.split(',')).context("writing metrics")?;
    for r in records {
        w.serialize((r.epoch, r.task, r.accuracy, r.reward_mag, r.mean_n_s))
            .context("writing metrics")?;
    }
    w.flush().context("writing metrics")?;
    Ok(())
}

fn evaluate(rc: &RunConfig, ck: &Checkpoint, data_dir: &Path, out: &Path) -> CmdResult {
    let mut model = model_from_checkpoint(ck, rc)?;
    let (_, test) = load_split(rc, data_dir)?;
    let mut rng = SimRng::seed_from_u64(rc.meta.seed).derive(EVAL_STREAM);
    let report = meta_test(&mut model, &test, &rc.meta, &mut rng)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["episode", "correct"]).context("writing evaluation")?;
    for (i, s) in report.per_episode.iter().enumerate() {
        w.serialize((i, *s as u8)).context("writing evaluation")?;
    }
    w.flush().context("writing evaluation")?;
    println!(
        "{}-way {}-shot accuracy {:.2}% ± {:.2}% (95% CI, {} episodes over {} test classes)",
        rc.meta.n_ways,
        rc.meta.k_shots,
        100.0 * report.mean_accuracy,
        100.0 * report.ci95,
        report.per_episode.len(),
        test.len()
    );
    eprintln!("wall time {:.1} s", report.wall_time);
    Ok(())
}

fn read_sample_list(path: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<(String, PathBuf)> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| (l.to_owned(), base.join(l)))
        .collect();
    if entries.is_empty() {
        return Err(usage(anyhow!("{} lists no samples", path.display())));
    }
    Ok(entries)
}

fn heatmap(rc: &RunConfig, ck: &Checkpoint, samples_file: &Path, out: &Path) -> CmdResult {
    let entries = read_sample_list(samples_file)?;
    let mut model = model_from_checkpoint(ck, rc)?;
    let mut rng = SimRng::seed_from_u64(rc.meta.seed).derive(HEATMAP_STREAM);
    let mut reps: Vec<MemoryRepresentation> = Vec::with_capacity(entries.len());
    for (name, path) in &entries {
        let img = load_image(rc.data.dataset, path, rc.meta.conv.input_side)
            .with_context(|| format!("loading sample {name}"))?;
        reps.push(model.represent(&img, &rc.meta, &mut rng)?);
    }
    let n = reps.len();
    let mut matrix = vec![None; n * n];
    for i in 0..n {
        for j in i..n {
            let r = match pearson_correlation(&reps[i], &reps[j]) {
                Ok(_) if i == j => Some(1.0),
                Ok(r) => Some(r),
                Err(_) => None,
            };
            matrix[i * n + j] = r;
            matrix[j * n + i] = r;
        }
    }
    for (i, (name, _)) in entries.iter().enumerate() {
        if matrix[i * n + i].is_none() {
            eprintln!("warning: memory representation of {name} is constant; its correlations are left empty");
        }
    }
    let mut w = csv::Writer::from_writer(create(out)?);
    let header: Vec<&str> = std::iter::once("sample").chain(entries.iter().map(|(s, _)| s.as_str())).collect();
    w.write_record(&header).context("writing heatmap")?;
    for (i, (name, _)) in entries.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..n).map(|j| matrix[i * n + j].map_or(String::new(), |r: f64| r.to_string())));
        w.write_record(&row).context("writing heatmap")?;
    }
    w.flush().context("writing heatmap")?;
    let mean_ns = reps.iter().map(|r| r.n_s).sum::<f32>() / n as f32;
    println!("{n}x{n} correlation matrix (mean n_s {mean_ns:.1}%) -> {}", out.display());
    Ok(())
}

fn sweep(rc: &RunConfig, ck: &Checkpoint, levels: &[SparsityPolicy], data_dir: &Path, out: &Path) -> CmdResult {
    let conv = conv_from_checkpoint(ck, rc)?;
    let (train, test) = load_split(rc, data_dir)?;
    let start = Instant::now();
    let rows = sparsity_sweep(&conv, &train, &test, levels, &rc.meta)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["center", "spread", "mean_accuracy", "ci95", "final_train_accuracy"])
        .context("writing sweep")?;
    for r in &rows {
        w.serialize((r.policy.center, r.policy.spread, r.report.mean_accuracy, r.report.ci95, r.final_train_accuracy))
            .context("writing sweep")?;
        println!(
            "c = {:>4}%, s = {:>3}%: accuracy {:.2}% ± {:.2}%",
            r.policy.center,
            r.policy.spread,
            100.0 * r.report.mean_accuracy,
            100.0 * r.report.ci95
        );
    }
    w.flush().context("writing sweep")?;
    std::io::stdout().flush().ok();
    eprintln!("wall time {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
