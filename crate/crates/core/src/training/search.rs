use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::gnn::Preset;
use crate::graph::{Graph, Variant};
use crate::numeric::Rng;

use super::{TrainConfig, TrainError, Trainer};

/// Sampling ranges, all inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: (usize, usize),
    pub hidden_units: (usize, usize),
    pub attention_heads: (usize, usize),
    pub final_heads: (usize, usize),
    /// Log-uniform.
    pub learning_rate: (f64, f64),
    /// Zero with probability `weight_decay_zero`, log-uniform otherwise.
    pub weight_decay: (f64, f64),
    pub weight_decay_zero: f64,
    pub layers: (usize, usize),
    pub dropout: (f64, f64),
    pub alpha: (f64, f64),
    pub epochs: usize,
    pub patience: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            batch_size: (100, 1500),
            hidden_units: (50, 320),
            attention_heads: (2, 9),
            final_heads: (2, 9),
            learning_rate: (1e-6, 1e-4),
            weight_decay: (1e-9, 1e-6),
            weight_decay_zero: 0.25,
            layers: (2, 8),
            dropout: (0.0, 1e-6),
            alpha: (0.1, 0.3),
            epochs: 1000,
            patience: 5,
        }
    }
}

fn int(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    rng.int_inclusive(lo as i64, hi as i64) as usize
}

/// Draws one configuration; the session seed is drawn last.
pub fn sample_config(
    rng: &mut Rng,
    space: &SearchSpace,
    preset: Preset,
    variant: Variant,
) -> TrainConfig {
    let batch_size = int(rng, space.batch_size);
    let hidden_units = int(rng, space.hidden_units);
    let attention_heads = int(rng, space.attention_heads);
    let final_heads = int(rng, space.final_heads);
    let learning_rate = rng.log_uniform(space.learning_rate.0, space.learning_rate.1);
    let weight_decay = if rng.bernoulli(space.weight_decay_zero) {
        0.0
    } else {
        rng.log_uniform(space.weight_decay.0, space.weight_decay.1)
    };
    let layers = int(rng, space.layers);
    let dropout = rng.range(space.dropout.0, space.dropout.1);
    let alpha = rng.range(space.alpha.0, space.alpha.1);
    TrainConfig {
        preset,
        variant,
        epochs: space.epochs,
        patience: space.patience,
        batch_size,
        hidden_units,
        attention_heads,
        final_heads,
        learning_rate,
        weight_decay,
        layers,
        dropout,
        alpha,
        seed: rng.next_u64(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    /// Position in sampling order.
    pub session: usize,
    pub config: TrainConfig,
    /// `None` when the session failed.
    pub best_dev_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub space: SearchSpace,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            space: SearchSpace::default(),
            jobs: 1,
        }
    }
}

fn run_session(session: usize, cfg: TrainConfig, train: &[Graph], dev: &[Graph]) -> SessionResult {
    let mut epochs_run = 0;
    let outcome = (|| {
        let mut trainer = Trainer::new(&cfg, train, dev)?;
        loop {
            let step = trainer.run_epoch();
            epochs_run = trainer.history().len();
            if step?.finished {
                break;
            }
        }
        trainer.finish()
    })();
    match outcome {
        Ok((_, report)) => SessionResult {
            session,
            config: cfg,
            best_dev_loss: Some(report.best_dev_loss),
            best_epoch: Some(report.best_epoch),
            epochs_run,
            error: None,
        },
        Err(e) => SessionResult {
            session,
            config: cfg,
            best_dev_loss: None,
            best_epoch: None,
            epochs_run,
            error: Some(e.to_string()),
        },
    }
}

/// Samples `n_sessions` configurations from `seed`, trains each, and ranks
/// them by best development loss. Failed sessions are kept and ranked last.
pub fn random_search(
    n_sessions: usize,
    seed: u64,
    preset: Preset,
    variant: Variant,
    train: &[Graph],
    dev: &[Graph],
    opts: &SearchOptions,
) -> Result<Vec<SessionResult>, TrainError> {
    if n_sessions == 0 {
        return Err(TrainError::Config(
            "at least one search session is required".into(),
        ));
    }
    if opts.jobs == 0 {
        return Err(TrainError::Config("jobs must be at least 1".into()));
    }
    let mut rng = Rng::new(seed);
    let configs: Vec<TrainConfig> = (0..n_sessions)
        .map(|_| sample_config(&mut rng, &opts.space, preset, variant))
        .collect();

    let slots: Mutex<Vec<Option<SessionResult>>> = Mutex::new(vec![None; n_sessions]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n_sessions {
            break;
        }
        let result = run_session(i, configs[i].clone(), train, dev);
        slots.lock().expect("no worker panicked")[i] = Some(result);
    };
    let jobs = opts.jobs.min(n_sessions);
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut results: Vec<SessionResult> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every session ran"))
        .collect();
    results.sort_by(|a, b| match (a.best_dev_loss, b.best_dev_loss) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.session.cmp(&b.session)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.session.cmp(&b.session),
    });
    Ok(results)
}
