//! Score loss, RMSprop and the per-utterance training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{build_graph, forward_tensor, Dims, GraphOutput, ModelParams, ScoreOutput, Variant};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub dims: Dims,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    /// RMSprop moving-average coefficient for squared gradients.
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::LcAtt,
            dims: Dims::FULL,
            epochs: 50,
            initial_lr: 1e-3,
            lr_decay: 0.95,
            rho: 0.9,
            epsilon: 1e-7,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr.is_nan() || self.initial_lr <= 0.0 {
            return Err(Error::Config("initial learning rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("learning-rate decay must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("rho must lie in [0, 1) and epsilon be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        Ok(())
    }

    /// `initial_lr * lr_decay^epoch`, epochs counted from 0.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_lr * self.lr_decay.powi(epoch as i32)
    }
}

/// `(Q - Q'_u)^2 + mean_t (Q - Q'_t)^2` as a tape scalar.
///
/// Frames carry no labels of their own; every frame is pulled toward the
/// utterance target.
pub fn loss_graph(tape: &mut Tape, target: f64, out: &GraphOutput) -> Result<Var> {
    let q = tape.leaf(Tensor::scalar(target));
    let du = tape.sub(out.utterance_score, q)?;
    let utterance = tape.square(du)?;
    let df = tape.sub(out.frame_scores, q)?;
    let sq = tape.square(df)?;
    let frames = tape.mean(sq)?;
    tape.add(utterance, frames)
}

/// Plain evaluation of the same loss.
pub fn loss_value(target: f64, out: &ScoreOutput) -> f64 {
    let frames: f64 = out
        .frame_scores
        .iter()
        .map(|s| (target - s) * (target - s))
        .sum::<f64>()
        / out.frame_scores.len() as f64;
    (target - out.utterance_score).powi(2) + frames
}

/// RMSprop state: one running mean of squared gradients per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub rho: f64,
    pub epsilon: f64,
    mean_square: Vec<Tensor>,
    steps: u64,
}

impl RmsProp {
    pub fn new(params: &[Tensor], rho: f64, epsilon: f64) -> Self {
        Self {
            rho,
            epsilon,
            mean_square: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            steps: 0,
        }
    }

    pub fn mean_square(&self) -> &[Tensor] {
        &self.mean_square
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `v <- rho v + (1 - rho) g^2; p <- p - lr g / (sqrt(v) + eps)`.
    ///
    /// Nothing is modified when any gradient is non-finite; the error names
    /// the offending tensor (`names[i]`, or its index).
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], names: &[&str], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.mean_square.len() {
            return Err(Error::Shape {
                op: "rmsprop",
                detail: format!(
                    "{} params, {} grads, {} accumulators",
                    params.len(),
                    grads.len(),
                    self.mean_square.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).map_or_else(|| format!("#{i}"), |n| n.to_string());
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "rmsprop",
                    detail: format!("{name}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("gradient of {name}"),
                });
            }
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.mean_square) {
            for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *pi -= lr * gi / (vi.sqrt() + eps);
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// One training or evaluation utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    /// `[T, F]`
    pub input: Tensor,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_train_loss: f64,
    pub val_lcc: Option<f64>,
    pub val_srcc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: ModelParams,
    /// Highest validation LCC; the final parameters when no validation set was given.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Loss and parameter gradients for one utterance.
pub fn loss_and_gradients(params: &ModelParams, example: &Example) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let input = tape.leaf(example.input.clone());
    let out = build_graph(&mut tape, params.variant(), &vars, input)?;
    let loss = loss_graph(&mut tape, example.target, &out)?;
    let grads = tape.backward(loss)?;
    Ok((
        tape.value(loss).data()[0],
        vars.iter().map(|v| grads.wrt(*v)).collect(),
    ))
}

pub fn predict(params: &ModelParams, examples: &[Example]) -> Result<Vec<ScoreOutput>> {
    examples
        .iter()
        .map(|e| {
            forward_tensor(params, &e.input).map_err(|source| Error::Training {
                id: e.id.clone(),
                source: Box::new(source),
            })
        })
        .collect()
}

/// Batch-size-1 RMSprop training from a seeded initialisation.
///
/// Epoch `e` runs at `initial_lr * lr_decay^e` over a freshly shuffled
/// order. Parameters are kept at single precision after each step so that
/// checkpoints reproduce them exactly. `on_epoch` sees each log record as it
/// is produced.
pub fn train(
    examples: &[Example],
    validation: Option<&[Example]>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut params = ModelParams::init(config.variant, config.dims, config.seed);
    let names: Vec<&str> = params.specs().iter().map(|s| s.name).collect();
    let mut optimizer = RmsProp::new(params.tensors(), config.rho, config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_0de5);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for &i in &order {
            let ex = &examples[i];
            let wrap = |source: Error| Error::Training {
                id: ex.id.clone(),
                source: Box::new(source),
            };
            let (loss, grads) = loss_and_gradients(&params, ex).map_err(wrap)?;
            optimizer
                .step(params.tensors_mut(), &grads, &names, lr)
                .map_err(wrap)?;
            params.round_to_f32();
            total += loss;
        }
        let (val_lcc, val_srcc) = match validation {
            Some(val) if !val.is_empty() => {
                let preds: Vec<f64> = predict(&params, val)?.iter().map(|o| o.utterance_score).collect();
                let targets: Vec<f64> = val.iter().map(|e| e.target).collect();
                (
                    metrics::lcc(&targets, &preds).ok(),
                    metrics::srcc(&targets, &preds).ok(),
                )
            }
            _ => (None, None),
        };
        let record = EpochRecord {
            epoch,
            lr,
            mean_train_loss: total / examples.len() as f64,
            val_lcc,
            val_srcc,
        };
        match val_lcc {
            Some(v) => log::info!(
                "epoch {epoch} lr {lr:.3e} loss {:.5} val_lcc {v:.4}",
                record.mean_train_loss
            ),
            None => log::info!("epoch {epoch} lr {lr:.3e} loss {:.5}", record.mean_train_loss),
        }
        on_epoch(&record);
        if let Some(score) = val_lcc {
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch, params.clone()));
            }
        }
        log.push(record);
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (config.epochs - 1, params.clone()),
    };
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_epoch,
        log,
    })
}
