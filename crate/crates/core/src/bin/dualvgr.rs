use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualvgr::config::parse_key_values;
use dualvgr::data::io::split_dir;
use dualvgr::data::{generate_all, read_dataset, write_dataset, Split};
use dualvgr::train::{evaluate, grad_check, run_ablation, trace_dump, train, Checkpoint};
use dualvgr::{Error, ModelConfig, Result, RunConfig, Variant};

#[derive(Parser)]
#[command(name = "dualvgr", version, about = "Dual-visual graph reasoning for video question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key = value config file; flags below override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Single worker, fixed reduction order
    #[arg(long, global = true)]
    deterministic: bool,
    /// Extra config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/val/test splits under --out
    GenerateData {
        #[command(flatten)]
        common: Common,
    },
    /// Train on <data>/train, select on <data>/val; writes metrics.jsonl and checkpoints to --out
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on one split directory
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train every variant (or --variant) and score each on <data>/test
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Dump per-step attention for one question as JSON
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Question id; defaults to the first question
        #[arg(long)]
        qid: Option<String>,
        /// Include per-head graph attention matrices
        #[arg(long)]
        gat: bool,
    },
    /// Compare analytic and finite-difference gradients on the micro config
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 3)]
        answers: usize,
        #[arg(long, default_value_t = 4)]
        question_len: usize,
    },
}

fn resolve(common: &Common, base: RunConfig, seed_key: &str) -> Result<RunConfig> {
    let mut cfg = base;
    if let Some(path) = &common.config {
        cfg.apply_text(&fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?)?;
    }
    if let Some(seed) = common.seed {
        cfg.set(seed_key, &seed.to_string())?;
    }
    if let Some(v) = &common.variant {
        cfg.set("variant", v)?;
    }
    if common.deterministic {
        cfg.set("deterministic", "true")?;
    }
    for pair in &common.overrides {
        cfg.set_pair(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { context: path.display().to_string(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { context: "stdout".into(), source })?;
    println!("{text}");
    Ok(())
}

fn echo(cfg: &RunConfig) -> BTreeMap<String, String> {
    parse_key_values(&cfg.to_text()).unwrap_or_default()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { common } => {
            let cfg = resolve(&common, RunConfig::default(), "data_seed")?;
            let root = out_dir(&common)?;
            let splits = generate_all(&cfg.data)?;
            for (split, data) in Split::ALL.iter().zip(&splits) {
                write_dataset(data, &split_dir(&root, *split))?;
                log::info!("{}: {} questions over {} videos", split.name(), data.len(), data.videos.len());
            }
            fs::write(root.join("config.txt"), cfg.to_text()).map_err(|e| Error::Io { path: root.join("config.txt"), source: e })?;
            Ok(())
        }
        Command::Train { common, data } => {
            let cfg = resolve(&common, RunConfig::default(), "seed")?;
            let root = out_dir(&common)?;
            let train_set = read_dataset(&split_dir(&data, Split::Train))?;
            let val_set = read_dataset(&split_dir(&data, Split::Val))?;
            let metrics_path = root.join("metrics.jsonl");
            let mut metrics = fs::File::create(&metrics_path).map_err(|e| Error::Io { path: metrics_path.clone(), source: e })?;
            let outcome = train(&cfg.model, echo(&cfg), &train_set, &val_set, |record| {
                let line = serde_json::to_string(record).map_err(|source| Error::Json { context: "metrics".into(), source })?;
                writeln!(metrics, "{line}").map_err(|e| Error::Io { path: metrics_path.clone(), source: e })
            })?;
            outcome.best.save(&root.join("checkpoint.bin"))?;
            outcome.last.save(&root.join("last.bin"))?;
            fs::write(root.join("config.txt"), cfg.to_text()).map_err(|e| Error::Io { path: root.join("config.txt"), source: e })?;
            println!("best epoch {} of {}", outcome.best.epoch, outcome.history.len());
            Ok(())
        }
        Command::Eval { common, checkpoint, data } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dataset = read_dataset(&data)?;
            let report = evaluate(&ckpt.model, &dataset)?;
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            print_json(&report)
        }
        Command::Ablate { common, data } => {
            let cfg = resolve(&common, RunConfig::default(), "seed")?;
            let root = out_dir(&common)?;
            let train_set = read_dataset(&split_dir(&data, Split::Train))?;
            let val_set = read_dataset(&split_dir(&data, Split::Val))?;
            let test_set = read_dataset(&split_dir(&data, Split::Test))?;
            let variants: Vec<Variant> = match &common.variant {
                Some(_) => vec![cfg.model.variant],
                None => Variant::ALL.to_vec(),
            };
            let mut results = Vec::new();
            for v in variants {
                log::info!("ablation: {v}");
                let r = run_ablation(v, &cfg.model, echo(&cfg), &train_set, &val_set, &test_set)?;
                println!("{:<14} test_acc {:.4}  best_val_acc {:.4}", r.variant, r.test.accuracy, r.best_val_acc);
                results.push(r);
            }
            write_json(&root.join("ablation.json"), &results)
        }
        Command::Trace { common, checkpoint, data, qid, gat } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dataset = read_dataset(&data)?;
            let instance = match &qid {
                Some(id) => dataset
                    .instances
                    .iter()
                    .find(|q| &q.qid == id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no question with qid {id}")))?,
                None => dataset.instances.first().ok_or_else(|| Error::InvalidArgument("dataset has no questions".into()))?,
            };
            let doc = trace_dump(&ckpt.model, &dataset, instance, gat)?;
            if let Some(out) = &common.out {
                write_json(out, &doc)?;
            }
            print_json(&doc)
        }
        Command::Gradcheck { common, tolerance, answers, question_len } => {
            let base = RunConfig { model: ModelConfig::micro(), ..RunConfig::default() };
            let cfg = resolve(&common, base, "seed")?;
            let report = grad_check(&cfg.model, answers, question_len, tolerance)?;
            for g in &report.groups {
                println!("{:<40} {:>6} entries  max rel err {:.3e}", g.group, g.entries, g.max_rel_error);
            }
            if let Some(out) = &common.out {
                write_json(out, &report)?;
            }
            report.into_result().map(|r| {
                println!("passed: max relative error {:.3e} < {:.1e} (max absolute {:.3e})", r.max_rel_error(), r.tolerance, r.max_abs_error())
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
