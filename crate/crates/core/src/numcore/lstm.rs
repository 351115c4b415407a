use rand::Rng;

use super::params::{Init, ParamId, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Weights of one LSTM layer. Gate blocks are laid out i, f, g, o along the
/// 4H axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn declare<F: Scalar, R: Rng>(
        set: &mut ParamSet<F>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let g = 4 * hidden_dim;
        Ok(Self {
            w_input: set.declare(&format!("{prefix}.w_input"), &[input_dim, g], Init::XavierUniform, rng)?,
            w_hidden: set.declare(&format!("{prefix}.w_hidden"), &[hidden_dim, g], Init::XavierUniform, rng)?,
            bias: set.declare(&format!("{prefix}.bias"), &[g], Init::Zeros, rng)?,
            input_dim,
            hidden_dim,
        })
    }

    pub fn step<F: Scalar>(&self, tape: &mut Tape<F>, set: &ParamSet<F>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let w_input = tape.param(set, self.w_input);
        let w_hidden = tape.param(set, self.w_hidden);
        let bias = tape.param(set, self.bias);
        lstm_cell(tape, x, h, c, w_input, w_hidden, bias)
    }

    /// Zero (h, c) for `rows` sequences.
    pub fn zero_state<F: Scalar>(&self, tape: &mut Tape<F>, rows: usize) -> (Var, Var) {
        let h = tape.constant(Tensor::zeros(&[rows, self.hidden_dim]));
        let c = tape.constant(Tensor::zeros(&[rows, self.hidden_dim]));
        (h, c)
    }
}

/// One LSTM step:
/// i, f, o = sigmoid(x·Wx + h·Wh + b), g = tanh(x·Wx + h·Wh + b),
/// c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c').
pub fn lstm_cell<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w_input: Var,
    w_hidden: Var,
    bias: Var,
) -> Result<(Var, Var)> {
    let hidden = tape.value(h_prev).cols();
    if tape.value(w_hidden).shape() != [hidden, 4 * hidden] || tape.value(c_prev).shape() != tape.value(h_prev).shape() {
        return Err(Error::shape(format!(
            "lstm: hidden state {:?}, cell {:?}, recurrent weights {:?}",
            tape.value(h_prev).shape(),
            tape.value(c_prev).shape(),
            tape.value(w_hidden).shape()
        )));
    }
    let xw = tape.matmul(x, w_input)?;
    let hw = tape.matmul(h_prev, w_hidden)?;
    let pre = tape.add(xw, hw)?;
    let gates = tape.add_row(pre, bias)?;

    let i = tape.slice_cols(gates, 0, hidden)?;
    let f = tape.slice_cols(gates, hidden, 2 * hidden)?;
    let g = tape.slice_cols(gates, 2 * hidden, 3 * hidden)?;
    let o = tape.slice_cols(gates, 3 * hidden, 4 * hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}
