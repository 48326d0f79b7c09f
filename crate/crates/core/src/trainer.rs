//! Training loop, evaluation and metric logging.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mdhr_tensor::{Scalar, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{self, Manifest};
use crate::config::RunConfig;
use crate::data::{eval_clips, train_clips, Dataset};
use crate::error::{CoreError, Result};
use crate::model::Mdhr;
use crate::objective::{au_loss, class_weights, sub_loss, total_loss, Confusion, F1Report};
use crate::optim::{clip_grad_norm, cosine_lr, AdamW, OptimizerState};
use crate::params::ParamStore;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const METRICS_HEADER: &str = "epoch,au_id,precision,recall,f1,macro_f1";
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub eval: Option<F1Report>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    pub best_metric: Option<f64>,
    pub best_epoch: usize,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

fn precision_name<S: Scalar>() -> String {
    S::NAME.to_string()
}

/// Sliding-window evaluation with padded tail frames masked out.
pub fn evaluate<S: Scalar>(model: &Mdhr, store: &ParamStore<S>, data: &Dataset, batch_size: usize) -> Result<(F1Report, Confusion)> {
    let t = model.cfg.train.t;
    let k = model.k();
    let clips = eval_clips(&data.lengths(), t);
    let mut conf = Confusion::new(data.au_ids.len());
    for chunk in clips.chunks(batch_size.max(1)) {
        let batch = data.batch::<S>(chunk, t, k, &model.cfg.regions);
        let probs = model.predict(store, &batch.frames)?;
        conf.add(&probs.to_f64_vec(), &batch.labels_u8, Some(&batch.mask), THRESHOLD);
    }
    Ok((conf.report(), conf))
}

pub fn metrics_rows(epoch: usize, au_ids: &[u32], report: &F1Report) -> String {
    let mut s = String::new();
    for (id, a) in au_ids.iter().zip(&report.per_au) {
        writeln!(s, "{epoch},{id},{:.6},{:.6},{:.6},{:.6}", a.precision, a.recall, a.f1, report.macro_f1).unwrap();
    }
    s
}

fn append(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CoreError::io(path, e))
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Self {
        let out = cfg.output_dir.clone();
        Trainer { cfg, out }
    }

    /// Runs the configured number of epochs. The initial model is saved as
    /// epoch 0 and replaced whenever validation macro-F1 improves. A
    /// non-finite loss or gradient aborts with that checkpoint untouched.
    pub fn run<S: Scalar>(&self, train: &Dataset, eval: &Dataset) -> Result<TrainOutcome> {
        let cfg = &self.cfg;
        let tc = &cfg.train;
        if train.au_ids != cfg.au_ids || eval.au_ids != cfg.au_ids {
            return Err(CoreError::validation("au_ids", "dataset AU columns differ from the config"));
        }
        let (model, mut store) = Mdhr::new::<S>(cfg)?;
        let (counts, total) = train.label_counts();
        let weights = class_weights(&counts, total)?;
        let mut state = OptimizerState::zeros(&store);
        let opt = AdamW { beta1: tc.beta1, beta2: tc.beta2, eps: tc.eps, weight_decay: tc.weight_decay };
        std::fs::create_dir_all(&self.out).map_err(|e| CoreError::io(&self.out, e))?;
        let ckpt = self.out.join(CHECKPOINT_DIR);
        let metrics = self.out.join(METRICS_FILE);
        std::fs::write(&metrics, format!("{METRICS_HEADER}\n")).map_err(|e| CoreError::io(&metrics, e))?;
        let hash = cfg.hash();
        let manifest = |epoch, metric, step, store: &ParamStore<S>| Manifest {
            config_hash: hash.clone(),
            epoch,
            metric,
            precision: precision_name::<S>(),
            step,
            params: store.iter().map(|p| p.name.clone()).collect(),
        };
        checkpoint::save(&ckpt, &store, &state, &manifest(0, None, 0, &store))?;

        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        rng.set_stream(1);
        let lengths = train.lengths();
        let k = model.k();
        let mut history = Vec::with_capacity(tc.epochs);
        let mut best: Option<f64> = None;
        let mut best_epoch = 0;
        for e in 0..tc.epochs {
            let lr = cosine_lr(e, tc.epochs, tc.lr);
            let mut clips = train_clips(&lengths, tc.t, &mut rng);
            clips.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut steps = 0;
            for chunk in clips.chunks(tc.batch_size) {
                let batch = train.batch::<S>(chunk, tc.t, k, &cfg.regions);
                let tape = Tape::<S>::new();
                let p = store.bind(&tape);
                let fwd = model.forward(&p, tape.constant(batch.frames))?;
                let l_au = au_loss(fwd.probs, &batch.labels, &weights, None)?;
                let l_sub = sub_loss(&fwd.hsr.combos, &batch.combos, None)?;
                let loss = total_loss(l_au, l_sub, tc.lambda)?;
                let lv = loss.value().item().as_f64();
                if !lv.is_finite() {
                    return Err(CoreError::Numerical(format!(
                        "loss became {lv} at epoch {} step {steps}; last good checkpoint kept at {}",
                        e + 1,
                        ckpt.display()
                    )));
                }
                tape.backward(loss)?;
                let mut grads = p.grads();
                if let Some(c) = tc.grad_clip {
                    clip_grad_norm(&mut grads, c);
                }
                opt.step(&mut store, &grads, &mut state, lr)?;
                loss_sum += lv;
                steps += 1;
            }
            let epoch = e + 1;
            let mean_loss = loss_sum / steps.max(1) as f64;
            let mut log = EpochLog { epoch, lr, mean_loss, eval: None };
            if epoch % tc.validation_interval == 0 || epoch == tc.epochs {
                let (report, _) = evaluate(&model, &store, eval, tc.batch_size)?;
                append(&metrics, &metrics_rows(epoch, &cfg.au_ids, &report))?;
                log::info!("epoch {epoch}: loss {mean_loss:.4}, eval macro-F1 {:.4}", report.macro_f1);
                if best.map_or(true, |b| report.macro_f1 > b) {
                    best = Some(report.macro_f1);
                    best_epoch = epoch;
                    checkpoint::save(&ckpt, &store, &state, &manifest(epoch, best, state.step, &store))?;
                }
                log.eval = Some(report);
            } else {
                log::info!("epoch {epoch}: loss {mean_loss:.4}");
            }
            history.push(log);
        }
        Ok(TrainOutcome { history, best_metric: best, best_epoch, checkpoint: ckpt, metrics })
    }
}

/// Rebuilds the configured model and loads a checkpoint into it.
pub fn load_model<S: Scalar>(cfg: &RunConfig, dir: &Path) -> Result<(Mdhr, ParamStore<S>, Manifest)> {
    let (model, mut store) = Mdhr::new::<S>(cfg)?;
    let (manifest, _) = checkpoint::load(dir, &mut store)?;
    Ok((model, store, manifest))
}

/// Scale weight maps `[T, L, 7, 7]` for the first clip of a video.
pub fn scale_weight_maps<S: Scalar>(model: &Mdhr, store: &ParamStore<S>, data: &Dataset, video: usize) -> Result<Option<Tensor<S>>> {
    if video >= data.videos.len() {
        return Err(CoreError::validation("video", format!("index {video} but only {} videos", data.videos.len())));
    }
    let clip = crate::data::Clip { video, start: 0 };
    let batch = data.batch::<S>(&[clip], model.cfg.train.t, model.k(), &model.cfg.regions);
    let tape = Tape::<S>::new();
    let p = store.bind(&tape);
    let fwd = model.forward(&p, tape.constant(batch.frames))?;
    Ok(fwd.scale_weights.map(|w| w.value().as_ref().clone()))
}
