//! The conditional CycleGAN training procedure, checkpointed runs and
//! embedder pretraining.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ccgan_autograd::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::condition::{ConditionRegistry, ConditionSource, ConditionVector, SourceContext};
use crate::config::{ArchConfig, EmbedderConfig, Mode, OptimizerConfig, RunConfig, TrainConfig};
use crate::data::{sample_batch, Batch, LabeledImageSet, Labels, UnpairedPools};
use crate::error::{Error, Result};
use crate::losses::{
    cycle_loss, d_loss_conditional, d_loss_unconditional, g_losses, identity_loss, LossBundle,
};
use crate::metrics::{emit_grid, grid_extension};
use crate::models::{Embedder, ModelBundle, Net};
use crate::optim::{Optimizer, OptimizerRegistry};
use crate::params::{Initializer, ParamSet};

/// Held-out accuracy an embedder must reach before it may be frozen.
pub const EMBEDDER_ACCURACY_FLOOR: f64 = 0.95;

/// Loss log inside a run directory.
pub const LOG_FILE: &str = "losses.tsv";
/// Latest checkpoint inside a run directory.
pub const CHECKPOINT_FILE: &str = "checkpoint.ccgn";

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator streams derived from the run seed.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const EMBEDDER: u64 = 3;
}

/// One iteration: forward and backward cycles, then updates of `D_Y`, `D_X`,
/// `G_{X->Y}` and `G_{Y->X}` in that order. All four losses are evaluated at
/// the parameters held when the step starts.
pub fn train_step(
    bundle: &mut ModelBundle<f32>,
    optimizers: &mut [Box<dyn Optimizer>],
    batch: &Batch,
    config: &TrainConfig,
    iteration: u64,
) -> Result<LossBundle> {
    if optimizers.len() != Net::ALL.len() {
        return Err(Error::Training("one optimizer per network is required".into()));
    }
    let w_id = config.effective_identity_weight();
    let embedder = match (w_id != 0.0, &bundle.embedder) {
        (true, None) => {
            return Err(Error::config("identity loss needs a frozen embedder in the bundle"))
        }
        (true, Some(e)) => Some(e),
        (false, _) => None,
    };

    let blame = |term: &'static str| {
        move |e: Error| match e {
            Error::Tensor(t @ ccgan_autograd::TensorError::NonFinite { .. }) => {
                Error::NonFiniteLoss {
                    term,
                    iteration,
                    detail: t.to_string(),
                }
            }
            other => other,
        }
    };

    let tape = Tape::new();
    let p_dy = bundle.d_y.params.bind(&tape, true);
    let p_dx = bundle.d_x.params.bind(&tape, true);
    let p_gxy = bundle.g_xy.params.bind(&tape, true);
    let p_gyx = bundle.g_yx.params.bind(&tape, true);

    let x = tape.constant(batch.x.clone());
    let y = tape.constant(batch.y.clone());
    let z = tape.constant(batch.z_tensor()?);
    let z_hat = tape.constant(batch.z_hat_tensor()?);

    // forward cycle x -> y_hat -> x_tilde, backward cycle y -> x_hat -> y_tilde
    let (y_hat, x_tilde, x_hat, y_tilde) = (|| -> Result<_> {
        let y_hat = bundle.g_xy.forward(&p_gxy, x, None)?;
        let x_tilde = bundle.g_yx.forward(&p_gyx, y_hat, Some(z))?;
        let x_hat = bundle.g_yx.forward(&p_gyx, y, Some(z))?;
        let y_tilde = bundle.g_xy.forward(&p_gxy, x_hat, None)?;
        Ok((y_hat, x_tilde, x_hat, y_tilde))
    })()
    .map_err(blame("L_c"))?;

    let (rho_r, l_dy) = (|| -> Result<_> {
        let rho_r = bundle.d_y.forward(&p_dy, y, None)?;
        let rho_f = bundle.d_y.forward(&p_dy, y_hat.detach(), None)?;
        Ok((rho_r, d_loss_unconditional(&rho_r, &rho_f)?))
    })()
    .map_err(blame("L_DY"))?;
    let (s_r, s_w, l_dx) = (|| -> Result<_> {
        let s_r = bundle.d_x.forward(&p_dx, x, Some(z))?;
        let s_f = bundle.d_x.forward(&p_dx, x_hat.detach(), Some(z))?;
        let s_w = bundle.d_x.forward(&p_dx, x, Some(z_hat))?;
        Ok((s_r, s_w, d_loss_conditional(&s_r, &s_f, &s_w)?))
    })()
    .map_err(blame("L_DX"))?;

    let rho_f = bundle.d_y.forward(&p_dy, y_hat, None).map_err(blame("L_GXY"))?;
    let s_f = bundle.d_x.forward(&p_dx, x_hat, Some(z)).map_err(blame("L_GYX"))?;
    let l_c = cycle_loss(&x, &x_tilde, &y, &y_tilde, config.lambda1, config.lambda2)
        .map_err(blame("L_c"))?;
    let l_id = match embedder {
        Some(e) => {
            let p_emb = e.params.bind(&tape, false);
            // the exemplar is x itself, so its embedding is the condition z
            let l = (|| -> Result<_> {
                let (emb_fake, _) = e.forward(&p_emb, x_hat)?;
                identity_loss(&emb_fake, &z)
            })()
            .map_err(blame("L_id"))?;
            Some(l)
        }
        None => None,
    };
    let (l_gxy, l_gyx) =
        g_losses(&rho_f, &s_f, &l_c, l_id.as_ref(), w_id).map_err(blame("L_GXY/L_GYX"))?;

    let mean = |v: &ccgan_autograd::Var<'_, f32>| v.value().sum_f64() / v.value().numel() as f64;
    let losses = LossBundle {
        rho_r: mean(&rho_r),
        rho_f: mean(&rho_f),
        s_r: mean(&s_r),
        s_f: mean(&s_f),
        s_w: mean(&s_w),
        l_dy: f64::from(l_dy.item()),
        l_dx: f64::from(l_dx.item()),
        l_gxy: f64::from(l_gxy.item()),
        l_gyx: f64::from(l_gyx.item()),
        l_c: f64::from(l_c.item()),
        l_id: l_id.map(|v| f64::from(v.item())).unwrap_or(0.0),
    };
    if let Some(term) = losses.first_non_finite() {
        return Err(Error::NonFiniteLoss {
            term,
            iteration,
            detail: "loss value is not finite".into(),
        });
    }

    // D losses only reach D parameters (fakes are detached).
    tape.backward(l_dy.add(&l_dx)?)?;
    let g_dy = p_dy.grads();
    let g_dx = p_dx.grads();
    tape.zero_grad();
    // -log rho_f does not depend on G_{Y->X}; -log s_f and L_id do not depend
    // on G_{X->Y}. One pass over L_GXY + L_GYX with L_c counted once therefore
    // yields dL_GXY/dG_XY and dL_GYX/dG_YX.
    let g_total = l_gxy.add(&l_gyx)?.sub(&l_c)?;
    tape.backward(g_total)?;
    let g_gxy = p_gxy.grads();
    let g_gyx = p_gyx.grads();
    drop(tape);

    let grads = [g_dy, g_dx, g_gxy, g_gyx];
    for ((net, opt), g) in Net::ALL.iter().zip(optimizers.iter_mut()).zip(&grads) {
        opt.step(bundle.params_mut(*net), g)?;
    }
    Ok(losses)
}

/// Optimizers for the four networks in update order.
pub fn make_optimizers(
    bundle: &ModelBundle<f32>,
    config: &TrainConfig,
) -> Result<Vec<Box<dyn Optimizer>>> {
    let reg = OptimizerRegistry::default();
    Net::ALL
        .iter()
        .map(|&n| reg.create(config.learning_rate, &config.optimizer, bundle.params(n)))
        .collect()
}

/// Mutable state of a training run.
pub struct Trainer {
    pub run: RunConfig,
    pub bundle: ModelBundle<f32>,
    pub optimizers: Vec<Box<dyn Optimizer>>,
    pub source: Box<dyn ConditionSource>,
    pub rng: ChaCha8Rng,
    /// Completed iterations.
    pub iteration: u64,
}

impl Trainer {
    /// Fresh run. `embedder` is required in identity mode and is frozen.
    pub fn new(run: RunConfig, labels: &Labels, embedder: Option<Embedder<f32>>) -> Result<Self> {
        run.validate()?;
        let t = &run.train;
        let mut bundle = ModelBundle::init(t.seed, t.mode, &run.arch)?;
        if let Some(e) = embedder {
            bundle = bundle.with_embedder(e)?;
        }
        let source = ConditionRegistry::default().for_mode(
            t.mode,
            labels,
            &SourceContext {
                arch: &bundle.arch,
                embedder: bundle.embedder.as_ref(),
            },
        )?;
        let optimizers = make_optimizers(&bundle, t)?;
        Ok(Self {
            rng: rng_for(t.seed, streams::BATCHES),
            run,
            bundle,
            optimizers,
            source,
            iteration: 0,
        })
    }

    pub fn next_batch(&mut self, pools: &UnpairedPools) -> Result<Batch> {
        sample_batch(pools, self.run.train.batch_size, self.source.as_ref(), &mut self.rng)
    }

    pub fn step(&mut self, pools: &UnpairedPools) -> Result<LossBundle> {
        let batch = self.next_batch(pools)?;
        let losses = train_step(
            &mut self.bundle,
            &mut self.optimizers,
            &batch,
            &self.run.train,
            self.iteration + 1,
        )?;
        self.iteration += 1;
        Ok(losses)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut text = self.run.to_text();
        let _ = writeln!(text, "\n[checkpoint]");
        let _ = writeln!(text, "iteration = {}", self.iteration);
        let _ = writeln!(text, "rng_word_pos = {}", self.rng.get_word_pos());
        let mut ck = Checkpoint::new(text);
        push_bundle(&mut ck, &self.bundle);
        for (net, opt) in Net::ALL.iter().zip(&self.optimizers) {
            for (name, t) in opt.state() {
                ck.push_f32(format!("optim.{}.{}.{name}", net.name(), opt.name()), t);
            }
        }
        ck
    }

    /// Resumes a run from a checkpoint written by [`Trainer::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint, labels: &Labels) -> Result<Self> {
        let run = RunConfig::parse(&ck.config_text)?;
        let embedder = match ck.get("embedder.embed.weight") {
            Some(_) => Some(embedder_from_checkpoint(ck, &run.arch)?),
            None => None,
        };
        let mut trainer = Trainer::new(run, labels, embedder)?;
        load_bundle(ck, &mut trainer.bundle)?;
        for (net, opt) in Net::ALL.iter().zip(trainer.optimizers.iter_mut()) {
            let prefix = format!("optim.{}.{}.", net.name(), opt.name());
            opt.load_state(&mut |n| ck.tensor(&format!("{prefix}{n}")))?;
        }
        trainer.iteration = state_number(ck, "iteration")?;
        let pos: u128 = state_number(ck, "rng_word_pos")?;
        trainer.rng.set_word_pos(pos);
        Ok(trainer)
    }
}

fn state_number<V: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<V> {
    ck.state_value(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CheckpointPayload(format!("checkpoint lacks `{key}`")))
}

fn push_params(ck: &mut Checkpoint, params: &ParamSet<f32>) {
    for (name, t) in params.iter() {
        ck.push_f32(name, t.clone());
    }
}

/// Appends every network (and the embedder, if any) to `ck`.
pub fn push_bundle(ck: &mut Checkpoint, bundle: &ModelBundle<f32>) {
    for net in Net::ALL {
        push_params(ck, bundle.params(net));
    }
    if let Some(e) = &bundle.embedder {
        push_params(ck, &e.params);
    }
}

/// Loads the four networks of `bundle` from `ck`; shape disagreements (for
/// example a different condition length) are configuration errors.
pub fn load_bundle(ck: &Checkpoint, bundle: &mut ModelBundle<f32>) -> Result<()> {
    for net in Net::ALL {
        bundle.params_mut(net).load_from(|n| ck.tensor(n))?;
    }
    Ok(())
}

/// A bundle as stored in a checkpoint, rebuilt from the config it carries.
pub fn bundle_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, ModelBundle<f32>)> {
    let run = RunConfig::parse(&ck.config_text)?;
    let mut bundle = ModelBundle::init(run.train.seed, run.train.mode, &run.arch)?;
    load_bundle(ck, &mut bundle)?;
    if ck.get("embedder.embed.weight").is_some() {
        bundle = bundle.with_embedder(embedder_from_checkpoint(ck, &run.arch)?)?;
    }
    Ok((run, bundle))
}

pub fn embedder_from_checkpoint(ck: &Checkpoint, arch: &ArchConfig) -> Result<Embedder<f32>> {
    let mut e = Embedder::new(arch, &mut Initializer::new(0));
    e.params.load_from(|n| ck.tensor(n))?;
    Ok(e)
}

pub fn embedder_checkpoint(embedder: &Embedder<f32>, run: &RunConfig, accuracy: f64) -> Checkpoint {
    let mut text = run.to_text();
    let _ = writeln!(text, "\n[checkpoint]");
    let _ = writeln!(text, "held_out_accuracy = {accuracy:?}");
    let mut ck = Checkpoint::new(text);
    push_params(&mut ck, &embedder.params);
    ck
}

/// Outcome of a call to [`train_loop`].
pub struct RunOutcome {
    pub trainer: Trainer,
    pub history: Vec<LossBundle>,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Header line of the loss log.
pub fn log_header() -> String {
    let mut h = String::from("iteration");
    for c in LossBundle::COLUMNS {
        h.push('\t');
        h.push_str(c);
    }
    h
}

fn log_line(iteration: u64, l: &LossBundle) -> String {
    let mut s = iteration.to_string();
    for v in l.values() {
        let _ = write!(s, "\t{v:?}");
    }
    s
}

/// Parses a loss log back into `(iteration, losses)` rows.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, LossBundle)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(log_header().as_str()) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: "missing or unexpected header".into(),
        });
    }
    lines
        .map(|line| {
            let bad = || Error::Data {
                path: path.to_path_buf(),
                message: format!("malformed row `{line}`"),
            };
            let mut cols = line.split('\t');
            let it = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let vals = cols.map(|v| v.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
            let losses = vals.ok().and_then(|v| LossBundle::from_values(&v)).ok_or_else(bad)?;
            Ok((it, losses))
        })
        .collect()
}

/// Samples for the periodic grid: `rows` low-res inputs, each followed by
/// its generation under `cols - 1` conditions.
pub fn sample_grid(
    bundle: &ModelBundle<f32>,
    pools: &UnpairedPools,
    source: &dyn ConditionSource,
    rows: usize,
) -> Result<(Tensor<f32>, usize)> {
    let rows = rows.min(pools.y.len()).min(pools.x.len());
    let idx: Vec<usize> = (0..rows).collect();
    let y = pools.y.gather(&idx)?;
    // identity mode uses the exemplars of the first rows as columns
    let conds: Vec<ConditionVector> = match (&pools.x.labels, bundle.mode) {
        (Labels::Classes { num_classes, .. }, Mode::Attribute) => (0..*num_classes)
            .map(|c| ConditionVector::one_hot(c, *num_classes))
            .collect::<Result<_>>()?,
        _ => source.conditions(&pools.x, &idx)?,
    };
    let (c, h, w) = pools.y.image_shape();
    let tile = |t: Tensor<f32>| t.reshape(&[c, h, w]);
    let mut tiles = Vec::new();
    for r in 0..rows {
        let yr = y.slice_batch(r, r + 1)?;
        tiles.push(tile(yr.clone())?);
        for cond in &conds {
            let z = ConditionVector::stack(std::slice::from_ref(cond))?;
            tiles.push(tile(bundle.generate(&yr, &z)?)?);
        }
    }
    Ok((Tensor::stack(&tiles)?, conds.len() + 1))
}

/// The training run: `S` steps with a loss log line per step, periodic
/// checkpoints and sample grids. When `resume` holds a checkpoint the run
/// continues from it and the log is cut back to its iteration.
pub fn train_loop(
    run: &RunConfig,
    pools: &UnpairedPools,
    embedder: Option<Embedder<f32>>,
    resume: Option<&Checkpoint>,
    out_dir: &Path,
    mut progress: impl FnMut(u64, &LossBundle),
) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut trainer = match resume {
        Some(ck) => {
            let mut t = Trainer::from_checkpoint(ck, &pools.x.labels)?;
            t.run = resumed_config(&t.run, run)?;
            t
        }
        None => Trainer::new(run.clone(), &pools.x.labels, embedder)?,
    };
    let total = trainer.run.train.iterations;
    let ck_interval = trainer.run.train.checkpoint_interval.max(1);
    let log_path = out_dir.join(LOG_FILE);
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);

    let mut kept = vec![log_header()];
    if resume.is_some() && log_path.exists() {
        let text = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        kept.extend(
            text.lines()
                .skip(1)
                .take(trainer.iteration as usize)
                .map(str::to_string),
        );
    }
    fs::write(&log_path, kept.join("\n") + "\n").map_err(|e| Error::io(&log_path, e))?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let mut history = Vec::new();
    while trainer.iteration < total {
        let losses = trainer.step(pools)?;
        writeln!(log, "{}", log_line(trainer.iteration, &losses))
            .map_err(|e| Error::io(&log_path, e))?;
        progress(trainer.iteration, &losses);
        history.push(losses);
        if trainer.iteration % ck_interval == 0 || trainer.iteration == total {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            trainer.to_checkpoint().save(&checkpoint_path)?;
            let (grid, cols) = sample_grid(&trainer.bundle, pools, trainer.source.as_ref(), 4)?;
            let ext = grid_extension(run.arch.image_channels);
            let rows = grid.shape()[0] / cols;
            emit_grid(
                &grid,
                rows,
                cols,
                &out_dir.join(format!("samples_{:06}.{ext}", trainer.iteration)),
            )?;
        }
    }
    if resume.is_none() && total == 0 {
        trainer.to_checkpoint().save(&checkpoint_path)?;
    }
    Ok(RunOutcome {
        trainer,
        history,
        log_path,
        checkpoint_path,
    })
}

/// The checkpointed run with the schedule (iterations, intervals, output
/// directory) of `requested`. Anything else differing is a configuration
/// error, since the continuation would no longer match an uninterrupted run.
fn resumed_config(stored: &RunConfig, requested: &RunConfig) -> Result<RunConfig> {
    let mut merged = stored.clone();
    merged.output_dir = requested.output_dir.clone();
    merged.train.iterations = requested.train.iterations;
    merged.train.checkpoint_interval = requested.train.checkpoint_interval;
    merged.train.log_interval = requested.train.log_interval;
    let mut comparable = requested.clone();
    comparable.embedder = merged.embedder.clone();
    comparable.data = merged.data.clone();
    if comparable != merged {
        return Err(Error::config(
            "resume config differs from the checkpoint beyond iterations and intervals",
        ));
    }
    Ok(merged)
}

/// High-res / low-res pools for a run, split with the run seed.
pub fn make_pools(run: &RunConfig, set: &LabeledImageSet) -> Result<UnpairedPools> {
    let mut rng = rng_for(run.train.seed, streams::SPLIT);
    UnpairedPools::split(set, run.data.low_res_factor, &mut rng)
}

fn class_targets(labels: &Labels) -> Result<Vec<usize>> {
    match labels {
        Labels::Classes { values, .. } => Ok(values.clone()),
        Labels::Attributes { values, .. } => Ok(values.iter().map(|v| usize::from(v[0])).collect()),
    }
}

/// Accuracy of `embedder`'s classifier head on `set`.
pub fn classifier_accuracy(embedder: &Embedder<f32>, set: &LabeledImageSet) -> Result<f64> {
    let targets = class_targets(&set.labels)?;
    let mut hits = 0usize;
    for start in (0..set.len()).step_by(256) {
        let end = (start + 256).min(set.len());
        let idx: Vec<usize> = (start..end).collect();
        let pred = embedder.classify(&set.gather(&idx)?)?;
        hits += pred.iter().zip(&targets[start..end]).filter(|(p, t)| p == t).count();
    }
    Ok(hits as f64 / set.len().max(1) as f64)
}

/// Trains the classifier whose hidden layer serves as identity embedding.
/// Fails unless held-out accuracy reaches `floor`. Class-labelled sets train
/// on their classes; attribute-labelled sets on their first attribute.
pub fn pretrain_embedder(
    train: &LabeledImageSet,
    held_out: &LabeledImageSet,
    arch: &ArchConfig,
    cfg: &EmbedderConfig,
    floor: f64,
    mut progress: impl FnMut(usize, f64),
) -> Result<(Embedder<f32>, f64)> {
    let targets = class_targets(&train.labels)?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("embedder batch_size and epochs must be positive"));
    }
    let mut init = Initializer::new(cfg.seed);
    let mut embedder = Embedder::<f32>::new(arch, &mut init);
    let opt_cfg = OptimizerConfig {
        kind: "adam".into(),
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
    let mut opt = OptimizerRegistry::default().create(cfg.learning_rate, &opt_cfg, &embedder.params)?;
    let mut rng = rng_for(cfg.seed, streams::EMBEDDER);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let images = train.gather(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let tape = Tape::new();
            let bound = embedder.params.bind(&tape, true);
            let (_, logits) = embedder.forward(&bound, tape.constant(images))?;
            let loss = logits.softmax_cross_entropy(&labels)?;
            if !loss.item().is_finite() {
                return Err(Error::NonFiniteLoss {
                    term: "embedder cross-entropy",
                    iteration: epoch as u64,
                    detail: format!("loss {}", loss.item()),
                });
            }
            tape.backward(loss)?;
            let grads = bound.grads();
            drop(tape);
            opt.step(&mut embedder.params, &grads)?;
        }
        let acc = classifier_accuracy(&embedder, held_out)?;
        progress(epoch + 1, acc);
    }
    let acc = classifier_accuracy(&embedder, held_out)?;
    if acc < floor {
        return Err(Error::Training(format!(
            "embedder reached {:.4} held-out accuracy after {} epochs, below the {floor} floor",
            acc, cfg.epochs
        )));
    }
    Ok((embedder, acc))
}

/// Identity-mode guard: the bundle's condition length must be the embedding
/// width.
pub fn check_mode(bundle: &ModelBundle<f32>, mode: Mode) -> Result<()> {
    if bundle.mode != mode {
        return Err(Error::config(format!(
            "checkpoint was trained in {} mode, requested {}",
            bundle.mode.as_str(),
            mode.as_str()
        )));
    }
    Ok(())
}
