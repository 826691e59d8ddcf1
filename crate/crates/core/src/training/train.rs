use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{assemble_model, Dropout, Model, ModelError, ModelSpec, Preset, PresetParams};
use crate::graph::{Graph, Variant};
use crate::numeric::{AdamState, Rng, Tape, Tensor, TensorError, Var};

use super::{batch_graphs, BatchedGraph};

/// Graphs per forward pass when no gradient is needed.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        config: Box<TrainConfig>,
    },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Preset,
    pub variant: Variant,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub hidden_units: usize,
    pub attention_heads: usize,
    pub final_heads: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub layers: usize,
    pub dropout: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The selected GAT: batch 273, 129 hidden units, 2 heads (3 in the last
    /// layer), lr 5e-5, weight decay 1e-5, 4 layers, alpha 0.2114.
    fn default() -> Self {
        TrainConfig {
            preset: Preset::Gat,
            variant: Variant::Unlabelled,
            epochs: 1000,
            patience: 5,
            batch_size: 273,
            hidden_units: 129,
            attention_heads: 2,
            final_heads: 3,
            learning_rate: 5e-5,
            weight_decay: 1e-5,
            layers: 4,
            dropout: 0.0,
            alpha: 0.2114,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("epochs, patience and batch size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            ));
        }
        self.model_spec().map(|_| ())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, TrainError> {
        Ok(self.preset.build(&PresetParams {
            layers: self.layers,
            hidden: self.hidden_units,
            heads: self.attention_heads,
            final_heads: self.final_heads,
            alpha: self.alpha,
            dropout: self.dropout,
            variant: Some(self.variant),
        })?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub num_parameters: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    /// Training-set MSE of the returned parameters, dropout off.
    pub final_train_mse: f64,
    pub stopped_early: bool,
    pub wall_clock_seconds: f64,
}

/// Mean squared error between predictions and labels.
pub fn mse(predictions: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(TrainError::Data(format!(
            "mse needs equal non-empty inputs, got {} predictions and {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - l) * (p - l))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Differentiable [`mse`] of a `B x 1` prediction against `labels`.
pub fn mse_loss<'t>(predictions: Var<'t>, labels: &[f64]) -> Result<Var<'t>, TrainError> {
    if labels.is_empty() || predictions.rows() != labels.len() {
        return Err(TrainError::Data(format!(
            "mse needs equal non-empty inputs, got {} predictions and {} labels",
            predictions.rows(),
            labels.len()
        )));
    }
    let target = Tensor::new(vec![labels.len(), 1], labels.to_vec())?;
    let diff = predictions.sub(predictions.tape().constant(target))?;
    Ok(diff.mul(diff)?.mean())
}

/// Counts epochs without strict improvement of the monitored loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Verdict {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn labels_of(graphs: &[Graph], what: &str) -> Result<Vec<f64>, TrainError> {
    if graphs.is_empty() {
        return Err(TrainError::Data(format!("{what} set is empty")));
    }
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.label
                .ok_or_else(|| TrainError::Data(format!("{what} sample {i} has no label")))
        })
        .collect()
}

/// Content key that makes the pre-shuffle order independent of file order.
fn content_key(g: &Graph) -> Vec<u64> {
    let mut key: Vec<u64> = g.features.data().iter().map(|v| v.to_bits()).collect();
    key.push(u64::MAX);
    key.extend(g.edges.iter().flat_map(|&(s, r)| [s as u64, r as u64]));
    key.push(u64::MAX);
    key.extend(g.relations.iter().map(|r| r.id() as u64));
    key.push(g.robot_index as u64);
    key.push(g.label.map_or(u64::MAX, f64::to_bits));
    key
}

fn chunked_batches(graphs: &[Graph]) -> Result<Vec<BatchedGraph>, TrainError> {
    graphs
        .chunks(EVAL_CHUNK)
        .map(|c| {
            let refs: Vec<&Graph> = c.iter().collect();
            Ok(batch_graphs(&refs).map_err(ModelError::from)?)
        })
        .collect()
}

fn mse_over(model: &Model, batches: &[BatchedGraph], labels: &[f64]) -> Result<f64, TrainError> {
    let mut predictions = Vec::with_capacity(labels.len());
    for b in batches {
        predictions.extend(model.score_batched(b)?);
    }
    mse(&predictions, labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub record: EpochRecord,
    pub improved: bool,
    /// Early stopping fired or the epoch budget is spent.
    pub finished: bool,
}

/// Epoch-at-a-time training session; [`train`] drives it to completion.
pub struct Trainer {
    cfg: TrainConfig,
    model: Model,
    adam: AdamState,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    train: Vec<Graph>,
    train_labels: Vec<f64>,
    train_batches: Vec<BatchedGraph>,
    dev_batches: Vec<BatchedGraph>,
    dev_labels: Vec<f64>,
    stopper: EarlyStopping,
    best_params: Vec<Tensor>,
    history: Vec<EpochRecord>,
    finished: bool,
    stopped_early: bool,
}

impl Trainer {
    pub fn new(
        cfg: &TrainConfig,
        train_set: &[Graph],
        dev_set: &[Graph],
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        labels_of(train_set, "training")?;
        let dev_labels = labels_of(dev_set, "development")?;
        for (what, set) in [("training", train_set), ("development", dev_set)] {
            if let Some(i) = set.iter().position(|g| g.variant != cfg.variant) {
                return Err(TrainError::Data(format!(
                    "{what} sample {i} is a {} graph but the config asks for {}",
                    set[i].variant.name(),
                    cfg.variant.name()
                )));
            }
        }
        let mut train: Vec<Graph> = train_set.to_vec();
        train.sort_by_cached_key(content_key);
        let train_labels = labels_of(&train, "training")?;

        let mut root = Rng::new(cfg.seed);
        let model = assemble_model(&cfg.model_spec()?, &mut root.fork())?;
        let shuffle_rng = root.fork();
        let dropout_rng = root.fork();
        Ok(Trainer {
            cfg: cfg.clone(),
            adam: AdamState::new(model.params()),
            best_params: model.params().to_vec(),
            model,
            shuffle_rng,
            dropout_rng,
            train_batches: chunked_batches(&train)?,
            train,
            train_labels,
            dev_batches: chunked_batches(dev_set)?,
            dev_labels,
            stopper: EarlyStopping::new(cfg.patience),
            history: Vec::new(),
            finished: false,
            stopped_early: false,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Model with the latest (not necessarily best) parameters.
    pub fn current_model(&self) -> &Model {
        &self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn diverged(&self, epoch: usize, message: String) -> TrainError {
        TrainError::Diverged {
            epoch,
            message,
            config: Box::new(self.cfg.clone()),
        }
    }

    /// One pass over the shuffled training set followed by a dev evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochOutcome, TrainError> {
        if self.finished {
            return Err(TrainError::Config(
                "training session already finished".into(),
            ));
        }
        let epoch = self.history.len() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        self.shuffle_rng.shuffle(&mut order);

        let mut weighted_loss = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let members: Vec<&Graph> = chunk.iter().map(|&i| &self.train[i]).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| self.train_labels[i]).collect();
            let batch = batch_graphs(&members).map_err(ModelError::from)?;
            let grads = {
                let tape = Tape::new();
                let dropout = Some(Dropout {
                    rate: self.cfg.dropout,
                    rng: &mut self.dropout_rng,
                });
                let (pred, vars) = self.model.forward(&tape, &batch, dropout)?;
                let loss = mse_loss(pred, &labels)?;
                let value = loss.value().item();
                if !value.is_finite() {
                    return Err(self.diverged(epoch, format!("training loss is {value}")));
                }
                weighted_loss += value * chunk.len() as f64;
                let grads = tape.backward(loss)?;
                vars.iter()
                    .map(|v| grads.get_or_zeros(*v))
                    .collect::<Vec<_>>()
            };
            let (lr, wd) = (self.cfg.learning_rate, self.cfg.weight_decay);
            if let Err(e) = self.adam.step(self.model.params_mut(), &grads, lr, wd) {
                return Err(self.diverged(epoch, e.to_string()));
            }
        }
        let train_loss = weighted_loss / self.train.len() as f64;
        let dev_loss = mse_over(&self.model, &self.dev_batches, &self.dev_labels)?;
        if !dev_loss.is_finite() {
            return Err(self.diverged(epoch, format!("development loss is {dev_loss}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_loss,
        };
        self.history.push(record);
        let verdict = self.stopper.observe(epoch, dev_loss);
        if verdict.improved {
            self.best_params = self.model.params().to_vec();
        }
        self.stopped_early = verdict.stop;
        self.finished = verdict.stop || epoch >= self.cfg.epochs;
        Ok(EpochOutcome {
            record,
            improved: verdict.improved,
            finished: self.finished,
        })
    }

    /// Best-dev model and its report; `wall_clock_seconds` is left at 0.
    pub fn finish(mut self) -> Result<(Model, TrainReport), TrainError> {
        self.model.set_params(self.best_params)?;
        let final_train_mse = mse_over(&self.model, &self.train_batches, &self.train_labels)?;
        let report = TrainReport {
            config: self.cfg,
            num_parameters: self.model.num_scalars(),
            epochs: self.history,
            best_epoch: self.stopper.best_epoch(),
            best_dev_loss: self.stopper.best(),
            final_train_mse,
            stopped_early: self.stopped_early,
            wall_clock_seconds: 0.0,
        };
        Ok((self.model, report))
    }
}

/// Trains until early stopping or the epoch budget and returns the
/// parameters of the best development epoch.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Graph],
    dev_set: &[Graph],
) -> Result<(Model, TrainReport), TrainError> {
    let start = std::time::Instant::now();
    let mut trainer = Trainer::new(cfg, train_set, dev_set)?;
    while !trainer.run_epoch()?.finished {}
    let (model, mut report) = trainer.finish()?;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}
