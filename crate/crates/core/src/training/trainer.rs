use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint;
use super::config::{LossKind, Reduction, TrainConfig};
use super::report::{EpochRecord, RunReport};
use crate::data::{compose_sc_batch, BatchSampler, Dataset, ScBatch};
use crate::error::{Error, Result};
use crate::eval::{accuracy, evaluate};
use crate::losses::{
    ce_loss, mpsc_loss, psc_loss, sc_loss, CurriculumSchedule, LogitsBatch, Temperature,
};
use crate::model::{HybridModel, ParamGroup};
use crate::numerics::{Matrix, Sgd, SgdConfig};

/// Independent random streams derived from the run seed. Each consumer owns
/// its stream so that, e.g., disabling the contrastive branch leaves the
/// classifier branch's batches unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    ScSampler = 1,
    CeSampler = 2,
    Views = 3,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Both branches, weighted by the curriculum.
    Joint,
    /// Two-stage training, first half: contrastive branch only.
    Features,
    /// Two-stage training, second half: classifier only, features frozen.
    Classifier,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Joint => "joint",
            Stage::Features => "features",
            Stage::Classifier => "classifier",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub contrastive: Option<f64>,
    pub ce: Option<f64>,
    pub total: f64,
}

/// Forward and backward pass of the hybrid objective
/// `α·L_contrastive(sc) + (1−α)·L_CE(ce)`, accumulating gradients into the
/// model. Both batches share one backbone pass. Either branch may be absent.
pub fn hybrid_backward(
    model: &mut HybridModel,
    cfg: &TrainConfig,
    sc: Option<&ScBatch>,
    ce: Option<(&Matrix, &[usize])>,
    alpha: f64,
) -> Result<StepLosses> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha {alpha} is outside [0, 1]")));
    }
    let classes = model.config.num_classes;
    let n_sc = sc.map_or(0, ScBatch::len);
    let mut parts = Vec::new();
    if let Some(b) = sc {
        parts.push(&b.rows);
    }
    if let Some((x, _)) = ce {
        parts.push(x);
    }
    if parts.is_empty() {
        return Err(Error::config("hybrid step needs at least one branch"));
    }
    let x = Matrix::vstack(&parts)?;
    let r = model.backbone.forward(&x)?;
    let n = r.rows();
    let mut contrastive = None;
    let mut ce_value = None;

    let grad_r = if cfg.loss == LossKind::CeCe {
        // The feature branch is a second cross-entropy through the same classifier.
        let s = model.classifier.forward(&r)?;
        let mut grad_s = Matrix::zeros(n, classes);
        if let Some(b) = sc {
            let out = ce_loss(&LogitsBatch::new(s.slice_rows(0..n_sc), b.labels.clone())?);
            contrastive = Some(out.loss);
            write_rows(&mut grad_s, 0, &out.grad_logits.scale(alpha));
        }
        if let Some((_, y)) = ce {
            let out = ce_loss(&LogitsBatch::new(s.slice_rows(n_sc..n), y.to_vec())?);
            ce_value = Some(out.loss);
            write_rows(&mut grad_s, n_sc, &out.grad_logits.scale(1.0 - alpha));
        }
        model.classifier.backward(&grad_s)?
    } else {
        let mut grad_r = Matrix::zeros(n, r.cols());
        if let Some(b) = sc {
            let z = model.projection.forward(&r.slice_rows(0..n_sc))?;
            let eb = b.embedding_batch(z, classes)?;
            let tau = Temperature::new(cfg.tau)?;
            let (loss, grad_z, grad_p) = match cfg.loss {
                LossKind::Sc => {
                    let out = sc_loss(&eb, tau)?;
                    match cfg.sc_reduction {
                        Reduction::Sum => (out.loss, out.grad_z, None),
                        Reduction::Mean => {
                            let inv = 1.0 / n_sc as f64;
                            (out.loss * inv, out.grad_z.scale(inv), None)
                        }
                    }
                }
                LossKind::Psc => {
                    let out = psc_loss(&eb, &model.prototypes, tau)?;
                    (out.loss, out.grad_z, Some(out.grad_prototypes))
                }
                LossKind::Mpsc => {
                    let out = mpsc_loss(&eb, &model.prototypes, tau, cfg.affinity)?;
                    (out.loss, out.grad_z, Some(out.grad_prototypes))
                }
                LossKind::CeCe => unreachable!("handled above"),
            };
            contrastive = Some(loss);
            let g = model.projection.backward(&grad_z.scale(alpha))?;
            write_rows(&mut grad_r, 0, &g);
            if let Some(gp) = grad_p {
                model.prototypes.param.grad.add_assign(&gp.scale(alpha))?;
            }
        }
        if let Some((_, y)) = ce {
            let s = model.classifier.forward(&r.slice_rows(n_sc..n))?;
            let out = ce_loss(&LogitsBatch::new(s, y.to_vec())?);
            ce_value = Some(out.loss);
            let g = model.classifier.backward(&out.grad_logits.scale(1.0 - alpha))?;
            write_rows(&mut grad_r, n_sc, &g);
        }
        grad_r
    };
    model.backbone.backward(&grad_r)?;

    let total = alpha * contrastive.unwrap_or(0.0) + (1.0 - alpha) * ce_value.unwrap_or(0.0);
    Ok(StepLosses {
        contrastive,
        ce: ce_value,
        total,
    })
}

fn write_rows(dst: &mut Matrix, start: usize, src: &Matrix) {
    for i in 0..src.rows() {
        dst.row_mut(start + i).copy_from_slice(src.row(i));
    }
}

struct EpochPlan {
    stage: Stage,
    alpha: f64,
    lr: f64,
    groups: Vec<ParamGroup>,
}

/// Epoch-by-epoch driver for one training run.
pub struct Trainer<'a> {
    pub(crate) cfg: TrainConfig,
    pub(crate) model: HybridModel,
    pub(crate) optimizer: Sgd,
    pub(crate) sc_rng: ChaCha8Rng,
    pub(crate) ce_rng: ChaCha8Rng,
    pub(crate) view_rng: ChaCha8Rng,
    pub(crate) epoch: usize,
    pub(crate) records: Vec<EpochRecord>,
    sc_sampler: BatchSampler,
    ce_sampler: BatchSampler,
    train: &'a Dataset,
    test: Option<&'a Dataset>,
    checkpoint_path: Option<PathBuf>,
    elapsed: f64,
}

impl<'a> Trainer<'a> {
    /// Builds the model from `cfg.model` using the run seed.
    pub fn new(train: &'a Dataset, test: Option<&'a Dataset>, cfg: TrainConfig) -> Result<Self> {
        let mut init = stream_rng(cfg.seed, RngStream::Init);
        let model = HybridModel::new(cfg.model.clone(), &mut init)?;
        Self::with_model(model, train, test, cfg)
    }

    pub fn with_model(
        model: HybridModel,
        train: &'a Dataset,
        test: Option<&'a Dataset>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        if model.config != cfg.model {
            return Err(Error::config("model does not match the configured architecture"));
        }
        if train.dim() != cfg.model.input_dim || train.num_classes() != cfg.model.num_classes {
            return Err(Error::config(format!(
                "dataset is {} features x {} classes, model expects {} x {}",
                train.dim(),
                train.num_classes(),
                cfg.model.input_dim,
                cfg.model.num_classes
            )));
        }
        if let Some(t) = test {
            if t.dim() != train.dim() || t.num_classes() != train.num_classes() {
                return Err(Error::config("test set does not match the training set layout"));
            }
        }
        Ok(Self {
            sc_sampler: BatchSampler::new(cfg.sc_sampler, train)?,
            ce_sampler: BatchSampler::new(cfg.ce_sampler, train)?,
            sc_rng: stream_rng(cfg.seed, RngStream::ScSampler),
            ce_rng: stream_rng(cfg.seed, RngStream::CeSampler),
            view_rng: stream_rng(cfg.seed, RngStream::Views),
            optimizer: Sgd::new(),
            epoch: 0,
            records: Vec::new(),
            cfg,
            model,
            train,
            test,
            checkpoint_path: None,
            elapsed: 0.0,
        })
    }

    /// Saves a checkpoint to `path` after every completed epoch.
    pub fn checkpoint_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint_path = Some(path.into());
        self
    }

    /// Restores a run saved by [`Trainer::save_checkpoint`]. The checkpoint
    /// must have been written under the same configuration.
    pub fn resume(
        path: impl AsRef<std::path::Path>,
        train: &'a Dataset,
        test: Option<&'a Dataset>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        let state = checkpoint::load(path.as_ref())?;
        let mut trainer = Self::new(train, test, cfg)?;
        state.apply(&mut trainer)?;
        Ok(trainer)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(self, path.as_ref())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &HybridModel {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    fn plan(&self, epoch: usize) -> Result<EpochPlan> {
        let cfg = &self.cfg;
        let protos = cfg.loss.uses_prototypes();
        if cfg.two_stage {
            let s1 = cfg.stage_one_epochs();
            if epoch < s1 {
                let mut groups = vec![ParamGroup::Backbone, ParamGroup::Projection];
                if protos {
                    groups.push(ParamGroup::Prototypes);
                }
                Ok(EpochPlan {
                    stage: Stage::Features,
                    alpha: 1.0,
                    lr: cfg.stage_lr_at(epoch, s1),
                    groups,
                })
            } else {
                Ok(EpochPlan {
                    stage: Stage::Classifier,
                    alpha: 0.0,
                    lr: cfg.stage_lr_at(epoch - s1, cfg.epochs - s1),
                    groups: vec![ParamGroup::Classifier],
                })
            }
        } else {
            // The last epoch sits at T = T_max so the curriculum reaches its endpoint.
            let schedule = CurriculumSchedule::new(cfg.schedule, (cfg.epochs - 1).max(1))?;
            let mut groups = vec![
                ParamGroup::Backbone,
                ParamGroup::Projection,
                ParamGroup::Classifier,
            ];
            if protos {
                groups.push(ParamGroup::Prototypes);
            }
            Ok(EpochPlan {
                stage: Stage::Joint,
                alpha: schedule.alpha(epoch)?,
                lr: cfg.lr_at(epoch),
                groups,
            })
        }
    }

    /// Steps per epoch: one pass of the classifier branch over the training set.
    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.cfg.ce_batch)
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::State(format!(
                "all {} epochs have already run",
                self.cfg.epochs
            )));
        }
        let started = Instant::now();
        let epoch = self.epoch;
        let plan = self.plan(epoch)?;
        if self.cfg.two_stage && epoch == self.cfg.stage_one_epochs() {
            self.optimizer = Sgd::new();
        }
        let sgd = SgdConfig {
            learning_rate: plan.lr,
            ..self.cfg.sgd
        };
        self.sc_sampler.begin_epoch(&mut self.sc_rng);
        self.ce_sampler.begin_epoch(&mut self.ce_rng);

        let steps = self.steps_per_epoch();
        let (mut sum_c, mut sum_ce, mut sum_total) = (0.0, 0.0, 0.0);
        for step in 0..steps {
            let abort = |detail: String| Error::TrainingAborted {
                epoch,
                step,
                detail,
            };
            let sc = if plan.stage == Stage::Classifier {
                None
            } else {
                Some(compose_sc_batch(
                    self.train,
                    &mut self.sc_sampler,
                    self.cfg.sc_batch,
                    self.cfg.view_noise,
                    self.cfg.positives_per_anchor,
                    &mut self.sc_rng,
                    &mut self.view_rng,
                )?)
            };
            let ce = if plan.stage == Stage::Features {
                None
            } else {
                let idx = self
                    .ce_sampler
                    .next_batch(self.train, self.cfg.ce_batch, &mut self.ce_rng)?;
                Some(self.train.batch(&idx))
            };

            self.model.zero_grad();
            let losses = hybrid_backward(
                &mut self.model,
                &self.cfg,
                sc.as_ref(),
                ce.as_ref().map(|(x, y)| (x, y.as_slice())),
                plan.alpha,
            )
            .map_err(|e| abort(e.to_string()))?;
            if !losses.total.is_finite() {
                return Err(abort(format!("loss is {}", losses.total)));
            }
            let mut params = self.model.params_mut(&plan.groups);
            self.optimizer
                .step(&mut params, &sgd)
                .map_err(|e| abort(e.to_string()))?;
            if plan.groups.contains(&ParamGroup::Prototypes) {
                self.model
                    .prototypes
                    .renormalize()
                    .map_err(|e| abort(e.to_string()))?;
            }
            sum_c += losses.contrastive.unwrap_or(0.0);
            sum_ce += losses.ce.unwrap_or(0.0);
            sum_total += losses.total;
        }
        self.model.zero_grad();

        let n = steps as f64;
        let record = EpochRecord {
            epoch,
            stage: plan.stage,
            alpha: plan.alpha,
            lr: plan.lr,
            contrastive_loss: (plan.stage != Stage::Classifier).then_some(sum_c / n),
            ce_loss: (plan.stage != Stage::Features).then_some(sum_ce / n),
            hybrid_loss: sum_total / n,
            train_top1: accuracy(&self.model, self.train)?,
            test_top1: self.test.map(|t| accuracy(&self.model, t)).transpose()?,
        };
        self.records.push(record.clone());
        self.epoch += 1;
        self.elapsed += started.elapsed().as_secs_f64();
        if let Some(path) = &self.checkpoint_path {
            self.save_checkpoint(path)?;
        }
        Ok(record)
    }

    /// Runs the remaining epochs and evaluates on the test set when present.
    pub fn run(mut self) -> Result<(HybridModel, RunReport)> {
        while !self.is_finished() {
            self.run_epoch()?;
        }
        let final_eval = match self.test {
            Some(t) => Some(evaluate(&self.model, t, &self.train.class_counts())?),
            None => None,
        };
        let report = RunReport {
            loss: self.cfg.loss.to_string(),
            seed: self.cfg.seed,
            contrastive_reduction: self.cfg.sc_reduction.to_string(),
            config: self.cfg.to_kv(),
            epochs: self.records,
            final_eval,
            wall_clock_secs: self.elapsed,
        };
        Ok((self.model, report))
    }
}

/// Trains a freshly initialized model for `cfg.epochs` epochs.
pub fn train(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(HybridModel, RunReport)> {
    Trainer::new(train, test, cfg.clone())?.run()
}

/// Trains an existing model.
pub fn train_model(
    model: HybridModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(HybridModel, RunReport)> {
    Trainer::with_model(model, train, test, cfg.clone())?.run()
}

/// Features first with the contrastive loss alone, then a classifier on
/// frozen features.
pub fn train_two_stage(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(HybridModel, RunReport)> {
    if !cfg.two_stage {
        return Err(Error::config("train_two_stage requires two_stage = true"));
    }
    Trainer::new(train, test, cfg.clone())?.run()
}
