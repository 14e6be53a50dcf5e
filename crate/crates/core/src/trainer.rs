//! Two-phase optimization. Phase one fits the MLP and TCN teachers to the
//! ternary pseudo-labels with masked BCE; phase two trains fresh students on
//! soft ensemble targets while the teachers track the students by EMA.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::models::{MlpModel, ModelHyper, TcnModel};
use crate::nn::loss::masked_bce_sum_from_logits;
use crate::nn::optim::{ema_update, AdamW, AdamWConfig};
use crate::nn::tensor::{s, Tensor2};
use crate::types::{FeatureSequence, PseudoLabelTimeline, TernaryLabel};

/// Mirrors the plain-text key=value config file, one key per field.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub ema_momentum: f64,
    pub seed: u64,
    /// Apply EMA once per epoch instead of once per optimizer step.
    pub ema_per_epoch: bool,
    /// Restrict stage-2 soft targets to originally assigned cells (ablation;
    /// the default trains on every frame, which is the point of the stage).
    pub targets_assigned_only: bool,
    pub hidden: usize,
    pub stages: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs_stage1: 50,
            epochs_stage2: 50,
            lr: 1e-4,
            weight_decay: 0.01,
            alpha: 0.5,
            ema_momentum: 0.999,
            seed: 0,
            ema_per_epoch: false,
            targets_assigned_only: false,
            hidden: 512,
            stages: 4,
            layers: 10,
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::Config(format!(
                "ema_momentum {} outside [0, 1]",
                self.ema_momentum
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("bad lr {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("bad weight_decay {}", self.weight_decay)));
        }
        if self.hidden == 0 || self.stages == 0 || self.layers == 0 {
            return Err(Error::Config("hidden/stages/layers must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment, blank lines skipped.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                Error::Config(format!("line {}: bad value for {key}: {e}", lineno + 1))
            };
            match key {
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "epochs_stage1" => cfg.epochs_stage1 = value.parse().map_err(|e| bad(&e))?,
                "epochs_stage2" => cfg.epochs_stage2 = value.parse().map_err(|e| bad(&e))?,
                "lr" => cfg.lr = value.parse().map_err(|e| bad(&e))?,
                "weight_decay" => cfg.weight_decay = value.parse().map_err(|e| bad(&e))?,
                "alpha" => cfg.alpha = value.parse().map_err(|e| bad(&e))?,
                "ema_momentum" => cfg.ema_momentum = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "ema_per_epoch" => cfg.ema_per_epoch = value.parse().map_err(|e| bad(&e))?,
                "targets_assigned_only" => {
                    cfg.targets_assigned_only = value.parse().map_err(|e| bad(&e))?
                }
                "hidden" => cfg.hidden = value.parse().map_err(|e| bad(&e))?,
                "stages" => cfg.stages = value.parse().map_err(|e| bad(&e))?,
                "layers" => cfg.layers = value.parse().map_err(|e| bad(&e))?,
                "dropout" => cfg.dropout = value.parse().map_err(|e| bad(&e))?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "batch_size={}\nepochs_stage1={}\nepochs_stage2={}\nlr={}\nweight_decay={}\n\
             alpha={}\nema_momentum={}\nseed={}\nema_per_epoch={}\ntargets_assigned_only={}\n\
             hidden={}\nstages={}\nlayers={}\ndropout={}\n",
            self.batch_size,
            self.epochs_stage1,
            self.epochs_stage2,
            self.lr,
            self.weight_decay,
            self.alpha,
            self.ema_momentum,
            self.seed,
            self.ema_per_epoch,
            self.targets_assigned_only,
            self.hidden,
            self.stages,
            self.layers,
            self.dropout
        )
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    pub fn mlp_hyper(&self, d_in: usize, k: usize) -> ModelHyper {
        ModelHyper::mlp(d_in, k, self.hidden)
    }

    pub fn tcn_hyper(&self, d_in: usize, k: usize) -> ModelHyper {
        ModelHyper::tcn(d_in, k, self.hidden, self.stages, self.layers, self.dropout)
    }
}

/// One training example: features plus targets/mask derived from a ternary
/// timeline (Positive -> 1, Negative -> 0, Unassigned -> masked out).
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub video_id: String,
    pub features: Tensor2<f32>,
    pub targets: Tensor2<f32>,
    pub mask: Vec<bool>,
}

impl LabeledSequence {
    pub fn new(features: &FeatureSequence, labels: &PseudoLabelTimeline) -> Result<Self> {
        if features.video_id != labels.video_id {
            return Err(Error::shape(
                "labeled sequence video_id",
                &features.video_id,
                &labels.video_id,
            ));
        }
        if features.num_frames != labels.num_frames {
            return Err(Error::shape(
                format!("frame count for {}", features.video_id),
                features.num_frames,
                labels.num_frames,
            ));
        }
        let mut targets = Tensor2::zeros(labels.num_frames, labels.num_states);
        let mut mask = vec![false; labels.num_frames * labels.num_states];
        for (i, l) in labels.labels().iter().enumerate() {
            match l {
                TernaryLabel::Positive => {
                    targets.data_mut()[i] = 1.0;
                    mask[i] = true;
                }
                TernaryLabel::Negative => mask[i] = true,
                TernaryLabel::Unassigned => {}
            }
        }
        Ok(LabeledSequence {
            video_id: features.video_id.clone(),
            features: Tensor2::from_flat(features.num_frames, features.feat_dim, features.data.clone()),
            targets,
            mask,
        })
    }

    pub fn assigned_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Stage-one result: both teachers plus per-epoch mean masked BCE histories
/// (the TCN history is the multi-stage sum).
#[derive(Debug, Clone)]
pub struct TrainedTeachers {
    pub mlp: MlpModel<f32>,
    pub tcn: TcnModel<f32>,
    pub mlp_loss: Vec<f64>,
    pub tcn_loss: Vec<f64>,
    pub steps: u64,
}

/// Stage-two result. Inference uses `student_tcn` only; the rest is kept for
/// diagnostics and ablation.
#[derive(Debug, Clone)]
pub struct SelfTrainRun {
    pub student_tcn: TcnModel<f32>,
    pub student_mlp: MlpModel<f32>,
    pub student_tcn_loss: Vec<f64>,
    pub student_mlp_loss: Vec<f64>,
    pub steps: u64,
}

// Distinct ChaCha8 streams per purpose so every consumer draws independent,
// reproducible randomness from one seed.
const STREAM_TEACHER_MLP_INIT: u64 = 1;
const STREAM_TEACHER_TCN_INIT: u64 = 2;
const STREAM_SHUFFLE_STAGE1: u64 = 3;
const STREAM_DROPOUT_BASE: u64 = 4;
const STREAM_STUDENT_MLP_INIT: u64 = 5;
const STREAM_STUDENT_TCN_INIT: u64 = 6;
const STREAM_SHUFFLE_STAGE2: u64 = 7;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-sequence dropout stream, deterministic and independent of batch
/// composition so parallel and sequential execution agree bitwise.
fn dropout_stream(seed: u64, phase: u64, epoch: usize, seq_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (phase.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    rng.set_stream(STREAM_DROPOUT_BASE + ((epoch as u64) << 24 | seq_index as u64));
    rng
}

fn check_dataset(dataset: &[LabeledSequence]) -> Result<(usize, usize)> {
    if dataset.is_empty() {
        return Err(Error::Validation("empty training dataset".into()));
    }
    let d = dataset[0].features.cols();
    let k = dataset[0].targets.cols();
    for seq in dataset {
        if seq.features.cols() != d {
            return Err(Error::shape(
                format!("feature dim for {}", seq.video_id),
                d,
                seq.features.cols(),
            ));
        }
        if seq.targets.cols() != k {
            return Err(Error::shape(
                format!("state count for {}", seq.video_id),
                k,
                seq.targets.cols(),
            ));
        }
        if seq.features.rows() != seq.targets.rows() {
            return Err(Error::shape(
                format!("frame count for {}", seq.video_id),
                seq.features.rows(),
                seq.targets.rows(),
            ));
        }
    }
    if dataset.iter().map(|s| s.assigned_cells()).sum::<usize>() == 0 {
        return Err(Error::Validation("zero assigned cells".into()));
    }
    Ok((d, k))
}

struct SeqGrad {
    loss_sum: f64,
    n_valid: usize,
    grads: Vec<Tensor2<f32>>,
}

/// One optimizer step over a batch of whole sequences. Per-sequence loss
/// sums and raw gradients are normalized by the batch-wide valid count,
/// which is arithmetically identical to padding the batch to max T and
/// masking the padding out.
fn mlp_batch_step(
    model: &mut MlpModel<f32>,
    opt: &mut AdamW<f32>,
    batch: &[&LabeledSequence],
) -> (f64, usize) {
    let per_seq = exec::ordered_map(batch.len(), |i| {
        let seq = batch[i];
        let fwd = model.forward_train(&seq.features).expect("validated shapes");
        let (sum, dz, n) = masked_bce_sum_from_logits(&fwd.logits, &seq.targets, &seq.mask);
        SeqGrad {
            loss_sum: sum as f64,
            n_valid: n,
            grads: model.backward(&fwd, &dz),
        }
    });
    let n_total: usize = per_seq.iter().map(|sg| sg.n_valid).sum();
    if n_total == 0 {
        return (0.0, 0);
    }
    let loss: f64 = per_seq.iter().map(|sg| sg.loss_sum).sum::<f64>() / n_total as f64;
    let scale = 1.0f32 / n_total as f32;
    let mut total: Vec<Tensor2<f32>> = per_seq[0].grads.clone();
    for sg in &per_seq[1..] {
        for (acc, g) in total.iter_mut().zip(sg.grads.iter()) {
            acc.add_scaled(g, 1.0);
        }
    }
    for g in &mut total {
        g.scale(scale);
    }
    let mut params = model.params_mut();
    opt.step(&mut params, &total);
    (loss, n_total)
}

/// Same scheme for the TCN; the loss is summed over stages and dropout uses
/// a per-sequence derived stream.
#[allow(clippy::too_many_arguments)]
fn tcn_batch_step(
    model: &mut TcnModel<f32>,
    opt: &mut AdamW<f32>,
    batch: &[&LabeledSequence],
    batch_indices: &[usize],
    seed: u64,
    phase: u64,
    epoch: usize,
    soft_targets: Option<&[Tensor2<f32>]>,
    soft_mask: Option<&[Vec<bool>]>,
) -> (f64, usize) {
    let per_seq = exec::ordered_map(batch.len(), |i| {
        let seq = batch[i];
        let targets = soft_targets.map(|t| &t[i]).unwrap_or(&seq.targets);
        let mask: &[bool] = soft_mask.map(|m| m[i].as_slice()).unwrap_or(&seq.mask);
        let mut rng = dropout_stream(seed, phase, epoch, batch_indices[i]);
        let fwd = model
            .forward_train(&seq.features, &mut rng)
            .expect("validated shapes");
        let mut loss_sum = 0.0f64;
        let mut n_valid = 0usize;
        let mut dlogits = Vec::with_capacity(fwd.stage_logits.len());
        for z in &fwd.stage_logits {
            let (sum, dz, n) = masked_bce_sum_from_logits(z, targets, mask);
            loss_sum += sum as f64;
            n_valid = n;
            dlogits.push(dz);
        }
        SeqGrad {
            loss_sum,
            n_valid,
            grads: model.backward(&fwd, &dlogits),
        }
    });
    let n_total: usize = per_seq.iter().map(|sg| sg.n_valid).sum();
    if n_total == 0 {
        return (0.0, 0);
    }
    let loss: f64 = per_seq.iter().map(|sg| sg.loss_sum).sum::<f64>() / n_total as f64;
    let scale = 1.0f32 / n_total as f32;
    let mut total: Vec<Tensor2<f32>> = per_seq[0].grads.clone();
    for sg in &per_seq[1..] {
        for (acc, g) in total.iter_mut().zip(sg.grads.iter()) {
            acc.add_scaled(g, 1.0);
        }
    }
    for g in &mut total {
        g.scale(scale);
    }
    let mut params = model.params_mut();
    opt.step(&mut params, &total);
    (loss, n_total)
}

/// Phase one: fit both teachers to the pseudo-labels for `epochs_stage1`
/// epochs of seeded-shuffle batches of whole sequences.
pub fn train_teachers(dataset: &[LabeledSequence], cfg: &TrainConfig) -> Result<TrainedTeachers> {
    cfg.validate()?;
    let (d, k) = check_dataset(dataset)?;
    let mut mlp = MlpModel::new(&cfg.mlp_hyper(d, k), &mut stream(cfg.seed, STREAM_TEACHER_MLP_INIT))?;
    let mut tcn = TcnModel::new(&cfg.tcn_hyper(d, k), &mut stream(cfg.seed, STREAM_TEACHER_TCN_INIT))?;
    let mut mlp_opt = AdamW::new(cfg.optimizer());
    let mut tcn_opt = AdamW::new(cfg.optimizer());
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE_STAGE1);
    let mut mlp_loss = Vec::with_capacity(cfg.epochs_stage1);
    let mut tcn_loss = Vec::with_capacity(cfg.epochs_stage1);
    let mut steps = 0u64;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs_stage1 {
        order.shuffle(&mut shuffle_rng);
        let (mut mlp_sum, mut tcn_sum, mut cells) = (0.0f64, 0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (ml, n) = mlp_batch_step(&mut mlp, &mut mlp_opt, &batch);
            let (tl, _) = tcn_batch_step(
                &mut tcn, &mut tcn_opt, &batch, chunk, cfg.seed, 1, epoch, None, None,
            );
            mlp_sum += ml * n as f64;
            tcn_sum += tl * n as f64;
            cells += n;
            steps += 1;
        }
        if cells > 0 {
            mlp_loss.push(mlp_sum / cells as f64);
            tcn_loss.push(tcn_sum / cells as f64);
        } else {
            mlp_loss.push(0.0);
            tcn_loss.push(0.0);
        }
    }
    Ok(TrainedTeachers {
        mlp,
        tcn,
        mlp_loss,
        tcn_loss,
        steps,
    })
}

/// Stage one for the MLP alone. Initialization and shuffling use the same
/// streams as [`train_teachers`], so the returned model is bitwise identical
/// to the MLP that function produces; skipping the TCN just makes quick
/// diagnostics affordable.
pub fn train_mlp_teacher(
    dataset: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<(MlpModel<f32>, Vec<f64>)> {
    cfg.validate()?;
    let (d, k) = check_dataset(dataset)?;
    let mut mlp = MlpModel::new(&cfg.mlp_hyper(d, k), &mut stream(cfg.seed, STREAM_TEACHER_MLP_INIT))?;
    let mut opt = AdamW::new(cfg.optimizer());
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE_STAGE1);
    let mut history = Vec::with_capacity(cfg.epochs_stage1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.epochs_stage1 {
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut cells) = (0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, n) = mlp_batch_step(&mut mlp, &mut opt, &batch);
            sum += loss * n as f64;
            cells += n;
        }
        history.push(if cells > 0 { sum / cells as f64 } else { 0.0 });
    }
    Ok((mlp, history))
}

/// Convex combination of the two teachers' probabilities.
pub fn ensemble_target(
    tcn_out: &Tensor2<f32>,
    mlp_out: &Tensor2<f32>,
    alpha: f64,
) -> Result<Tensor2<f32>> {
    if tcn_out.shape() != mlp_out.shape() {
        return Err(Error::shape(
            "ensemble_target",
            format!("{:?}", tcn_out.shape()),
            format!("{:?}", mlp_out.shape()),
        ));
    }
    let a: f32 = s(alpha);
    Ok(tcn_out.zip_map(mlp_out, |t, m| a * t + (1.0 - a) * m))
}

fn ema_models(
    teacher_mlp: &mut MlpModel<f32>,
    student_mlp: &MlpModel<f32>,
    teacher_tcn: &mut TcnModel<f32>,
    student_tcn: &TcnModel<f32>,
    momentum: f32,
) {
    for (t, st) in teacher_mlp.params_mut().into_iter().zip(student_mlp.params()) {
        ema_update(t, st, momentum);
    }
    for (t, st) in teacher_tcn.params_mut().into_iter().zip(student_tcn.params()) {
        ema_update(t, st, momentum);
    }
}

/// Phase two: fresh students learn soft ensemble targets produced by the
/// teacher snapshot preceding each batch's step; teachers then track the
/// students by EMA. Only the student TCN is used for inference downstream.
pub fn self_train(
    teacher_mlp: &MlpModel<f32>,
    teacher_tcn: &TcnModel<f32>,
    dataset: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<SelfTrainRun> {
    cfg.validate()?;
    let (d, k) = check_dataset(dataset)?;
    if teacher_mlp.hyper().d_in != d || teacher_mlp.hyper().k != k {
        return Err(Error::shape(
            "self_train teacher mlp",
            format!("{d}x{k}"),
            format!("{}x{}", teacher_mlp.hyper().d_in, teacher_mlp.hyper().k),
        ));
    }
    let mut teacher_mlp = teacher_mlp.clone();
    let mut teacher_tcn = teacher_tcn.clone();
    let mut student_mlp =
        MlpModel::new(&cfg.mlp_hyper(d, k), &mut stream(cfg.seed, STREAM_STUDENT_MLP_INIT))?;
    let mut student_tcn =
        TcnModel::new(&cfg.tcn_hyper(d, k), &mut stream(cfg.seed, STREAM_STUDENT_TCN_INIT))?;
    let mut mlp_opt = AdamW::new(cfg.optimizer());
    let mut tcn_opt = AdamW::new(cfg.optimizer());
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE_STAGE2);
    let momentum = cfg.ema_momentum as f32;
    let mut mlp_loss_hist = Vec::with_capacity(cfg.epochs_stage2);
    let mut tcn_loss_hist = Vec::with_capacity(cfg.epochs_stage2);
    let mut steps = 0u64;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs_stage2 {
        order.shuffle(&mut shuffle_rng);
        let (mut mlp_sum, mut tcn_sum, mut cells) = (0.0f64, 0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &dataset[i]).collect();
            // Targets from the teacher snapshot preceding this step.
            let targets: Vec<Tensor2<f32>> = exec::ordered_map(batch.len(), |i| {
                let feats = &batch[i].features;
                let tcn_probs = teacher_tcn
                    .forward(feats)
                    .expect("validated shapes")
                    .pop()
                    .expect("at least one stage");
                let mlp_probs = teacher_mlp.forward(feats).expect("validated shapes");
                ensemble_target(&tcn_probs, &mlp_probs, cfg.alpha).expect("same shapes")
            });
            let masks: Vec<Vec<bool>> = batch
                .iter()
                .map(|seq| {
                    if cfg.targets_assigned_only {
                        seq.mask.clone()
                    } else {
                        vec![true; seq.mask.len()]
                    }
                })
                .collect();
            let (ml, n) = {
                let per_seq = exec::ordered_map(batch.len(), |i| {
                    let fwd = student_mlp
                        .forward_train(&batch[i].features)
                        .expect("validated shapes");
                    let (sum, dz, n) = masked_bce_sum_from_logits(&fwd.logits, &targets[i], &masks[i]);
                    SeqGrad {
                        loss_sum: sum as f64,
                        n_valid: n,
                        grads: student_mlp.backward(&fwd, &dz),
                    }
                });
                let n_total: usize = per_seq.iter().map(|sg| sg.n_valid).sum();
                if n_total == 0 {
                    (0.0, 0)
                } else {
                    let loss =
                        per_seq.iter().map(|sg| sg.loss_sum).sum::<f64>() / n_total as f64;
                    let mut total = per_seq[0].grads.clone();
                    for sg in &per_seq[1..] {
                        for (acc, g) in total.iter_mut().zip(sg.grads.iter()) {
                            acc.add_scaled(g, 1.0);
                        }
                    }
                    for g in &mut total {
                        g.scale(1.0 / n_total as f32);
                    }
                    let mut params = student_mlp.params_mut();
                    mlp_opt.step(&mut params, &total);
                    (loss, n_total)
                }
            };
            if !cfg.ema_per_epoch && n > 0 {
                for (t, st) in teacher_mlp.params_mut().into_iter().zip(student_mlp.params()) {
                    ema_update(t, st, momentum);
                }
            }
            let (tl, tn) = tcn_batch_step(
                &mut student_tcn,
                &mut tcn_opt,
                &batch,
                chunk,
                cfg.seed,
                2,
                epoch,
                Some(&targets),
                Some(&masks),
            );
            if !cfg.ema_per_epoch && tn > 0 {
                for (t, st) in teacher_tcn.params_mut().into_iter().zip(student_tcn.params()) {
                    ema_update(t, st, momentum);
                }
            }
            mlp_sum += ml * n as f64;
            tcn_sum += tl * tn as f64;
            cells += n.max(tn);
            steps += 1;
        }
        if cfg.ema_per_epoch {
            ema_models(
                &mut teacher_mlp,
                &student_mlp,
                &mut teacher_tcn,
                &student_tcn,
                momentum,
            );
        }
        if cells > 0 {
            mlp_loss_hist.push(mlp_sum / cells as f64);
            tcn_loss_hist.push(tcn_sum / cells as f64);
        } else {
            mlp_loss_hist.push(0.0);
            tcn_loss_hist.push(0.0);
        }
    }
    Ok(SelfTrainRun {
        student_tcn,
        student_mlp,
        student_tcn_loss: tcn_loss_hist,
        student_mlp_loss: mlp_loss_hist,
        steps,
    })
}
