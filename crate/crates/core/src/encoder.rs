//! Recurrent encoders over padded id batches.

use crate::corpus::Batch;
use crate::error::Result;
use crate::numcore::{LstmParams, ParamSet, Scalar, Tape, Var};

/// Runs `lstm` over every row of `batch` and returns the hidden state at
/// each row's last live position (rows x hidden). Padded positions leave
/// the state untouched.
pub fn encode_final<F: Scalar>(
    tape: &mut Tape<F>,
    set: &ParamSet<F>,
    lstm: &LstmParams,
    embedding: Var,
    batch: &Batch,
    dropout: f64,
) -> Result<Var> {
    let (mut h, mut c) = lstm.zero_state(tape, batch.rows);
    for t in 0..batch.max_len {
        let live = batch.live(t);
        if !live.iter().any(|&l| l) {
            break;
        }
        let x = tape.embedding(embedding, &batch.column(t))?;
        let x = tape.dropout(x, dropout)?;
        let (h_new, c_new) = lstm.step(tape, set, x, h, c)?;
        if live.iter().all(|&l| l) {
            h = h_new;
            c = c_new;
        } else {
            h = tape.select_rows(h_new, h, &live)?;
            c = tape.select_rows(c_new, c, &live)?;
        }
    }
    Ok(h)
}

/// Runs `lstm` over a batch of variable-length sequences of dense inputs.
/// `steps[t]` is a (rows x in) matrix and `live[t]` marks which rows are
/// still inside their sequence. Returns the hidden state after every step.
pub fn run_dense<F: Scalar>(
    tape: &mut Tape<F>,
    set: &ParamSet<F>,
    lstm: &LstmParams,
    steps: &[Var],
    live: &[Vec<bool>],
    rows: usize,
) -> Result<Vec<Var>> {
    let (mut h, mut c) = lstm.zero_state(tape, rows);
    let mut out = Vec::with_capacity(steps.len());
    for (&x, live) in steps.iter().zip(live) {
        let (h_new, c_new) = lstm.step(tape, set, x, h, c)?;
        if live.iter().all(|&l| l) {
            h = h_new;
            c = c_new;
        } else {
            h = tape.select_rows(h_new, h, live)?;
            c = tape.select_rows(c_new, c, live)?;
        }
        out.push(h);
    }
    Ok(out)
}
