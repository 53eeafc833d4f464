use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, Scalar, Tape};

/// Parameters of one LSTM direction; gate blocks are ordered input, forget,
/// cell, output along the columns.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// input_dim × 4·hidden
    pub w_ih: ParamId,
    /// hidden × 4·hidden
    pub w_hh: ParamId,
    /// 1 × 4·hidden
    pub bias: ParamId,
}

impl LstmParams {
    pub fn hidden_size<T: Scalar>(&self, tape: &Tape<'_, T>) -> usize {
        tape.params().get(self.w_hh).dims2().0
    }
}

/// One step of the gated recurrence. `x` is 1×input, `h` and `c` are 1×hidden.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<'_, T>,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    params: &LstmParams,
) -> Result<(NodeId, NodeId)> {
    let hidden = params.hidden_size(tape);
    let (hr, hc) = tape.shape(h);
    if (hr, hc) != (1, hidden) || tape.shape(c) != (1, hidden) {
        return Err(Error::Shape {
            op: "lstm_step",
            left: vec![1, hidden],
            right: vec![hr, hc],
        });
    }
    let w_ih = tape.param(params.w_ih);
    let w_hh = tape.param(params.w_hh);
    let bias = tape.param(params.bias);
    let xw = tape.matmul(x, w_ih)?;
    let hw = tape.matmul(h, w_hh)?;
    let pre = tape.add(xw, hw)?;
    let gates = tape.add_row(pre, bias)?;

    let i = tape.slice_cols(gates, 0, hidden)?;
    let f = tape.slice_cols(gates, hidden, hidden)?;
    let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);

    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs one direction over the rows of `xs` (l×input) and returns l×hidden
/// states aligned with the input positions. With `reverse`, the recurrence
/// starts at the last row; row `i` of the output is still the state at
/// position `i`.
pub fn run_lstm<T: Scalar>(
    tape: &mut Tape<'_, T>,
    xs: NodeId,
    params: &LstmParams,
    reverse: bool,
) -> Result<NodeId> {
    let (len, _) = tape.shape(xs);
    let hidden = params.hidden_size(tape);
    let mut h = tape.zeros(1, hidden);
    let mut c = tape.zeros(1, hidden);
    let mut states = vec![h; len];
    let order: Vec<usize> = if reverse {
        (0..len).rev().collect()
    } else {
        (0..len).collect()
    };
    for t in order {
        let x = tape.gather_rows(xs, &[t])?;
        let (h2, c2) = lstm_step(tape, x, h, c, params)?;
        h = h2;
        c = c2;
        states[t] = h;
    }
    tape.concat_rows(&states)
}
