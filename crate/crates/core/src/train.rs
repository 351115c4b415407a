//! Minibatch training loop shared by both models.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::{AdamW, ParamSet, Scalar, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    /// Validation loss of the initial parameters.
    pub initial_valid_loss: f64,
}

/// Mean loss over `data` in inference mode, weighting each batch by its size.
pub fn evaluate_loss<F, T, L>(params: &ParamSet<F>, data: &[T], batch_size: usize, loss_fn: &L) -> Result<f64>
where
    F: Scalar,
    L: Fn(&mut Tape<F>, &ParamSet<F>, &[&T]) -> Result<Var>,
{
    if data.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&T> = chunk.iter().collect();
        let mut tape = Tape::inference();
        let loss = loss_fn(&mut tape, params, &refs)?;
        total += tape.value(loss).data()[0].as_f64() * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains `params` with AdamW on shuffled minibatches and leaves them at the
/// epoch with the lowest validation loss. An empty `valid` set means the
/// training set is scored instead (with dropout off).
pub fn fit<F, T, L>(
    params: &mut ParamSet<F>,
    train: &[T],
    valid: &[T],
    config: &TrainConfig,
    loss_fn: L,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport>
where
    F: Scalar,
    L: Fn(&mut Tape<F>, &ParamSet<F>, &[&T]) -> Result<Var>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let valid = if valid.is_empty() { train } else { valid };
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut optimizer = AdamW::new(config.optimizer, params);

    let initial = evaluate_loss(params, valid, config.batch_size, &loss_fn)?;
    let mut best = (0, initial, params.clone());
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&T> = chunk.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new(true, dropout_rng.gen());
            let loss = loss_fn(&mut tape, params, &batch)?;
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Config(format!("training loss became {value} at epoch {epoch}")));
            }
            train_total += value * batch.len() as f64;
            let grads = tape.backward(loss)?;
            let grads = tape.param_grads(&grads, params);
            optimizer.step(params, &grads)?;
        }
        let valid_loss = evaluate_loss(params, valid, config.batch_size, &loss_fn)?;
        let improved = valid_loss < best.1;
        if improved {
            best = (epoch, valid_loss, params.clone());
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_total / train.len() as f64,
            valid_loss,
            improved,
        };
        on_epoch(&record);
        epochs.push(record);
    }

    *params = best.2;
    Ok(TrainReport {
        epochs,
        best_epoch: best.0,
        best_valid_loss: best.1,
        initial_valid_loss: initial,
    })
}
