use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdhr_core::data::synth::SynthSpec;
use mdhr_core::data::Dataset;
use mdhr_core::objective::F1Report;
use mdhr_core::trainer::{self, Trainer};
use mdhr_core::verify::{self, Module};
use mdhr_core::{CoreError, Precision, Result, RunConfig};
use mdhr_tensor::{io, Fault, OpKind, Scalar};

#[derive(Parser)]
#[command(name = "mdhr", version, about = "Train and inspect MDHR action unit models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic blob dataset.
    SynthData {
        /// Generator parameters; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write checkpoints plus metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        precision: Option<Precision>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Disable the dynamics branch (G = x_L).
        #[arg(long)]
        no_mfd: bool,
    },
    /// Evaluate a checkpoint on the eval split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        precision: Option<Precision>,
    },
    /// Finite-difference check of module gradients.
    Gradcheck {
        #[arg(long, default_value = "all")]
        module: String,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Report parameter counts and optionally dump scale weight maps.
    Inspect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dump_weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        video: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::SynthData { spec, out, seed } => {
            let mut s = match spec {
                Some(p) => SynthSpec::load(&p)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s.write(&out)?;
            println!("wrote {} train and {} eval videos to {}", s.n_train, s.n_eval, out.display());
            Ok(0)
        }
        Cmd::Train { config, epochs, lambda, seed, precision, out, no_mfd } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = lambda {
                cfg.train.lambda = l;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(p) = precision {
                cfg.precision = p;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if no_mfd {
                cfg.mfd.enabled = false;
            }
            cfg.validate()?;
            let (train, eval) = datasets(&cfg)?;
            let t = Trainer::new(cfg.clone());
            let outcome = match cfg.precision {
                Precision::F32 => t.run::<f32>(&train, &eval)?,
                Precision::F64 => t.run::<f64>(&train, &eval)?,
            };
            match outcome.best_metric {
                Some(m) => println!("best macro-F1 {m:.4} at epoch {}", outcome.best_epoch),
                None => println!("no validation run; initial checkpoint only"),
            }
            println!("metrics: {}\ncheckpoint: {}", outcome.metrics.display(), outcome.checkpoint.display());
            Ok(0)
        }
        Cmd::Eval { config, checkpoint, precision } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(p) = precision {
                cfg.precision = p;
            }
            let report = match cfg.precision {
                Precision::F32 => eval_with::<f32>(&cfg, &checkpoint)?,
                Precision::F64 => eval_with::<f64>(&cfg, &checkpoint)?,
            };
            print_table(&cfg.au_ids, &report);
            Ok(0)
        }
        Cmd::Gradcheck { module, inject_fault } => {
            let modules = Module::parse(&module)
                .ok_or_else(|| CoreError::validation("module", format!("`{module}` is not one of mfd, hsr, head, loss, all")))?;
            let fault = inject_fault.map(|k| parse_fault(&k)).transpose()?;
            let lines = verify::run_checks(&modules, fault)?;
            let mut ok = true;
            for l in &lines {
                ok &= l.passed();
                println!(
                    "{:<5} {:<16} max_rel_err {:.3e}  coords {:>5}  {}",
                    l.module,
                    l.op,
                    l.max_rel_err,
                    l.checked,
                    if l.passed() { "ok" } else { "FAIL" }
                );
            }
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Inspect { config, checkpoint, dump_weights, video } => {
            let cfg = RunConfig::load(&config)?;
            match cfg.precision {
                Precision::F32 => inspect::<f32>(&cfg, &checkpoint, dump_weights.as_deref(), video),
                Precision::F64 => inspect::<f64>(&cfg, &checkpoint, dump_weights.as_deref(), video),
            }
        }
    }
}

fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let train = cfg.data.train_dir.as_ref().ok_or_else(|| CoreError::Config("data.train_dir is not set".into()))?;
    let eval = cfg.data.eval_dir.as_ref().ok_or_else(|| CoreError::Config("data.eval_dir is not set".into()))?;
    for d in [train, eval] {
        if !d.is_dir() {
            return Err(CoreError::Config(format!("dataset directory {} does not exist", d.display())));
        }
    }
    Ok((Dataset::load(train, Some(&cfg.au_ids))?, Dataset::load(eval, Some(&cfg.au_ids))?))
}

fn eval_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.data.eval_dir.as_ref().ok_or_else(|| CoreError::Config("data.eval_dir is not set".into()))?;
    if !dir.is_dir() {
        return Err(CoreError::Config(format!("dataset directory {} does not exist", dir.display())));
    }
    Dataset::load(dir, Some(&cfg.au_ids))
}

fn eval_with<S: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<F1Report> {
    let (model, store, _) = trainer::load_model::<S>(cfg, checkpoint)?;
    let data = eval_dataset(cfg)?;
    Ok(trainer::evaluate(&model, &store, &data, cfg.train.batch_size)?.0)
}

fn print_table(au_ids: &[u32], r: &F1Report) {
    println!("{:<8} {:>9} {:>9} {:>9}", "au", "precision", "recall", "f1");
    for (id, a) in au_ids.iter().zip(&r.per_au) {
        println!("{:<8} {:>9.4} {:>9.4} {:>9.4}", format!("AU{id}"), a.precision, a.recall, a.f1);
    }
    println!("{:<8} {:>9} {:>9} {:>9.4}", "macro", "", "", r.macro_f1);
}

fn inspect<S: Scalar>(cfg: &RunConfig, checkpoint: &Path, dump: Option<&Path>, video: usize) -> Result<u8> {
    let (model, store, manifest) = trainer::load_model::<S>(cfg, checkpoint)?;
    println!("checkpoint epoch {} metric {:?}", manifest.epoch, manifest.metric);
    println!("param_count {}", store.count());
    if let Some(out) = dump {
        let data = eval_dataset(cfg)?;
        let Some(w) = trainer::scale_weight_maps(&model, &store, &data, video)? else {
            return Err(CoreError::Config("the dynamics branch is disabled; no weight maps to dump".into()));
        };
        std::fs::create_dir_all(out).map_err(|e| CoreError::io(out, e))?;
        let path = out.join(format!("scale_weights_video{video:04}.mdt"));
        io::save(&path, &w, io::Payload::native::<S>()).map_err(|e| match e {
            mdhr_tensor::TensorError::Io(src) => CoreError::io(&path, src),
            other => other.into(),
        })?;
        println!("scale weights {:?} written to {}", w.shape(), path.display());
    }
    Ok(0)
}

fn parse_fault(kind: &str) -> Result<Fault> {
    let kind = match kind {
        "conv2d" => OpKind::Conv2d,
        "conv1d" => OpKind::Conv1d,
        "linear" => OpKind::Linear,
        "softmax" => OpKind::Softmax,
        "l2-normalize" => OpKind::L2Normalize,
        "graph-attention" => OpKind::GraphAttention,
        "window-mean" => OpKind::WindowMean,
        "unary" => OpKind::Unary,
        "binary" => OpKind::Binary,
        other => return Err(CoreError::validation("inject-fault", format!("unknown op kind `{other}`"))),
    };
    Ok(Fault { kind, factor: 1.5 })
}
