//! Network building blocks, written as functions that extend a tape.
//!
//! Parameters arrive as tape handles (see [`crate::params`]); each function
//! wires up the forward graph and the tape provides gradients. Recurrent
//! cells follow the standard LSTM/GRU gate equations, composed from
//! primitive ops so every piece is covered by the op-level gradient tests.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Forward-pass mode. Training mode draws dropout masks from the supplied
/// generator; evaluation applies no noise at all.
pub enum Mode<'a> {
    Train(&'a mut SeededRng),
    Eval,
}

/// Token embedding matrix. Row 0 is the padding vector and is all zeros;
/// row 1 is the out-of-vocabulary vector. When `trainable` is false the
/// whole table is excluded from updates, otherwise only the padding row is.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    weights: Tensor,
    trainable: bool,
}

impl EmbeddingTable {
    pub fn new(weights: Tensor, trainable: bool) -> Result<EmbeddingTable> {
        if weights.shape().len() != 2 || weights.rows() < 2 || weights.cols() == 0 {
            return Err(Error::shape("embedding table must be [vocab >= 2, dim >= 1]"));
        }
        let e = weights.cols();
        if weights.data()[..e].iter().any(|&x| x != 0.0) {
            return Err(Error::invalid("embedding padding row must be zero"));
        }
        Ok(EmbeddingTable { weights, trainable })
    }

    /// Fresh table with rows drawn from U[-0.25, 0.25) and a zero padding
    /// row.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut SeededRng) -> Result<EmbeddingTable> {
        if vocab_size < 2 || dim == 0 {
            return Err(Error::invalid("embedding table needs vocab >= 2 and dim >= 1"));
        }
        let mut data = Vec::with_capacity(vocab_size * dim);
        data.extend(core::iter::repeat(0.0).take(dim));
        for _ in 1..vocab_size {
            for _ in 0..dim {
                data.push(rng.uniform(-0.25, 0.25));
            }
        }
        Ok(EmbeddingTable {
            weights: Tensor::new(alloc::vec![vocab_size, dim], data)?,
            trainable: true,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn into_weights(self) -> Tensor {
        self.weights
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Rows excluded from gradients when this table joins a parameter
    /// store: just the padding row if trainable, every row otherwise.
    pub fn frozen_rows(&self) -> usize {
        if self.trainable {
            1
        } else {
            self.vocab_size()
        }
    }
}

/// One convolution group: `filters` filters of one width, flattened to a
/// [filters, width * dim] weight plus per-filter bias.
#[derive(Debug, Clone, Copy)]
pub struct ConvGroup {
    pub width: usize,
    pub weight: Var,
    pub bias: Var,
}

/// Convolution + tanh + chunked max pooling over one utterance.
///
/// Each group maps the [n, e] embedding matrix to [filters, n - width + 1],
/// pools to [filters, p], and the flattened group outputs are concatenated
/// in the order given. The result is the utterance feature vector of length
/// sum(filters_g) * p.
pub fn conv_features(tape: &mut Tape, embedded: Var, groups: &[ConvGroup], p: usize) -> Result<Var> {
    if groups.is_empty() {
        return Err(Error::invalid("conv_features: no filter groups"));
    }
    let mut parts = Vec::with_capacity(groups.len());
    for g in groups {
        let fmap = tape.conv1d(embedded, g.weight, g.bias, g.width)?;
        let act = tape.tanh(fmap)?;
        let pooled = tape.kmax_pool(act, p)?;
        let len = tape.value(pooled).len();
        parts.push(tape.reshape(pooled, alloc::vec![len])?);
    }
    tape.concat(&parts)
}

/// LSTM parameters for one direction of one layer. Gate blocks are stacked
/// row-wise in the order input, forget, output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub hidden: usize,
}

/// GRU parameters for one direction of one layer. `w_x` stacks the update,
/// reset, and candidate input blocks; the recurrent weights stay separate
/// because the candidate applies its own to the reset-gated state.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_x: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_c: Var,
    pub b: Var,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum CellVars {
    Lstm(LstmVars),
    Gru(GruVars),
}

impl CellVars {
    pub fn hidden(&self) -> usize {
        match self {
            CellVars::Lstm(v) => v.hidden,
            CellVars::Gru(v) => v.hidden,
        }
    }
}

/// Recurrent state: hidden vector, plus the cell vector for LSTMs.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

pub fn cell_init_state(tape: &mut Tape, cell: &CellVars) -> CellState {
    let h = tape.zeros_leaf(alloc::vec![cell.hidden()]);
    let c = match cell {
        CellVars::Lstm(_) => Some(tape.zeros_leaf(alloc::vec![cell.hidden()])),
        CellVars::Gru(_) => None,
    };
    CellState { h, c }
}

/// One step of the recurrence.
///
/// LSTM: i,f,o = sigmoid gates, g = tanh candidate,
///       c' = f*c + i*g, h' = o * tanh(c').
/// GRU:  z,r = sigmoid gates, candidate = tanh(Wc x + Uc (r*h) + bc),
///       h' = (1-z)*h + z*candidate, computed as h + z*(candidate - h).
pub fn cell_step(tape: &mut Tape, cell: &CellVars, x: Var, state: CellState) -> Result<CellState> {
    match cell {
        CellVars::Lstm(v) => {
            let hsz = v.hidden;
            let c = state
                .c
                .ok_or_else(|| Error::invalid("lstm step without cell state"))?;
            let from_x = tape.matvec(v.w_x, x)?;
            let from_h = tape.matvec(v.w_h, state.h)?;
            let lin = tape.add(from_x, from_h)?;
            let pre = tape.add(lin, v.b)?;
            if tape.value(pre).len() != 4 * hsz {
                return Err(Error::shape(format!(
                    "lstm gates: expected {} pre-activations",
                    4 * hsz
                )));
            }
            let i_pre = tape.slice(pre, 0, hsz)?;
            let f_pre = tape.slice(pre, hsz, 2 * hsz)?;
            let o_pre = tape.slice(pre, 2 * hsz, 3 * hsz)?;
            let g_pre = tape.slice(pre, 3 * hsz, 4 * hsz)?;
            let i = tape.sigmoid(i_pre)?;
            let f = tape.sigmoid(f_pre)?;
            let o = tape.sigmoid(o_pre)?;
            let g = tape.tanh(g_pre)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            let c_next = tape.add(keep, write)?;
            let c_act = tape.tanh(c_next)?;
            let h_next = tape.mul(o, c_act)?;
            Ok(CellState {
                h: h_next,
                c: Some(c_next),
            })
        }
        CellVars::Gru(v) => {
            let hsz = v.hidden;
            let px = tape.matvec(v.w_x, x)?;
            let px = tape.add(px, v.b)?;
            if tape.value(px).len() != 3 * hsz {
                return Err(Error::shape(format!(
                    "gru gates: expected {} pre-activations",
                    3 * hsz
                )));
            }
            let z_in = tape.slice(px, 0, hsz)?;
            let r_in = tape.slice(px, hsz, 2 * hsz)?;
            let c_in = tape.slice(px, 2 * hsz, 3 * hsz)?;
            let z_rec = tape.matvec(v.u_z, state.h)?;
            let r_rec = tape.matvec(v.u_r, state.h)?;
            let z_pre = tape.add(z_in, z_rec)?;
            let r_pre = tape.add(r_in, r_rec)?;
            let z = tape.sigmoid(z_pre)?;
            let r = tape.sigmoid(r_pre)?;
            let gated = tape.mul(r, state.h)?;
            let c_rec = tape.matvec(v.u_c, gated)?;
            let c_pre = tape.add(c_in, c_rec)?;
            let cand = tape.tanh(c_pre)?;
            let delta = tape.sub(cand, state.h)?;
            let step = tape.mul(z, delta)?;
            let h_next = tape.add(state.h, step)?;
            Ok(CellState { h: h_next, c: None })
        }
    }
}

/// One bidirectional layer: independent forward and backward cells.
#[derive(Debug, Clone, Copy)]
pub struct BiLayer {
    pub fw: CellVars,
    pub bw: CellVars,
}

/// Stacked bidirectional recurrence over a sequence of vectors.
///
/// Output t is [forward state at t ++ backward state at t], so each output
/// conditions on the whole sequence. `inter_dropout` applies to the inputs
/// of every layer after the first, in training mode only.
pub fn bi_rnn(
    tape: &mut Tape,
    layers: &[BiLayer],
    inputs: &[Var],
    inter_dropout: f64,
    mode: &mut Mode,
) -> Result<Vec<Var>> {
    if layers.is_empty() {
        return Err(Error::invalid("bi_rnn: no layers"));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("bi_rnn: empty sequence"));
    }
    let s = inputs.len();
    let mut xs: Vec<Var> = inputs.to_vec();
    for (li, layer) in layers.iter().enumerate() {
        if li > 0 {
            let mut dropped = Vec::with_capacity(s);
            for &x in &xs {
                dropped.push(dropout(tape, x, inter_dropout, mode)?);
            }
            xs = dropped;
        }
        let mut fw_states = Vec::with_capacity(s);
        let mut state = cell_init_state(tape, &layer.fw);
        for &x in &xs {
            state = cell_step(tape, &layer.fw, x, state)?;
            fw_states.push(state.h);
        }
        let mut bw_states = alloc::vec![None; s];
        let mut state = cell_init_state(tape, &layer.bw);
        for t in (0..s).rev() {
            state = cell_step(tape, &layer.bw, xs[t], state)?;
            bw_states[t] = Some(state.h);
        }
        let mut outputs = Vec::with_capacity(s);
        for t in 0..s {
            let bw = bw_states[t].expect("filled above");
            outputs.push(tape.concat(&[fw_states[t], bw])?);
        }
        xs = outputs;
    }
    Ok(xs)
}

/// Ungated skip connection: the head sees the recurrent summary and the raw
/// utterance features side by side, so the feature path bypasses the
/// recurrence without attenuation.
pub fn highway_join(tape: &mut Tape, recurrent: Var, features: Var) -> Result<Var> {
    tape.concat(&[recurrent, features])
}

/// Dense layer into per-label probabilities.
pub fn dense_sigmoid(tape: &mut Tape, weight: Var, bias: Var, x: Var) -> Result<Var> {
    let lin = tape.matvec(weight, x)?;
    let pre = tape.add(lin, bias)?;
    tape.sigmoid(pre)
}

/// Inverted dropout. Identity in eval mode or at rate zero; in training
/// mode each element is dropped with probability `rate` and survivors are
/// scaled by 1/(1-rate), with one mask draw per element in order.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: &mut Mode) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    match mode {
        Mode::Eval => Ok(x),
        Mode::Train(_) if rate == 0.0 => Ok(x),
        Mode::Train(rng) => {
            let scale = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..tape.value(x).len())
                .map(|_| if rng.unit_f64() < rate { 0.0 } else { scale })
                .collect();
            tape.dropout(x, mask)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, DEFAULT_EPS, DEFAULT_TOL};
    use crate::params::{Evaluated, ParameterStore, StoreLeaves};
    use crate::rng::uniform_init;
    use alloc::vec;
    use alloc::vec::Vec;

    fn rand_store(shapes: &[(&str, Vec<usize>)], seed: u64) -> ParameterStore {
        let mut rng = SeededRng::new(seed);
        let mut store = ParameterStore::new();
        for (name, shape) in shapes {
            let t = uniform_init(shape, -0.7, 0.7, &mut rng).unwrap();
            store.push(*name, t).unwrap();
        }
        store
    }

    fn lstm_vars(leaves: &StoreLeaves, store: &ParameterStore, hidden: usize) -> CellVars {
        CellVars::Lstm(LstmVars {
            w_x: leaves.named(store, "w_x").unwrap(),
            w_h: leaves.named(store, "w_h").unwrap(),
            b: leaves.named(store, "b").unwrap(),
            hidden,
        })
    }

    fn gru_vars(leaves: &StoreLeaves, store: &ParameterStore, hidden: usize) -> CellVars {
        CellVars::Gru(GruVars {
            w_x: leaves.named(store, "w_x").unwrap(),
            u_z: leaves.named(store, "u_z").unwrap(),
            u_r: leaves.named(store, "u_r").unwrap(),
            u_c: leaves.named(store, "u_c").unwrap(),
            b: leaves.named(store, "b").unwrap(),
            hidden,
        })
    }

    #[test]
    fn embedding_table_validates_padding_row() {
        let bad = Tensor::new(vec![2, 2], vec![0.1, 0.0, 1.0, 1.0]).unwrap();
        assert!(EmbeddingTable::new(bad, true).is_err());
        let good = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let table = EmbeddingTable::new(good, true).unwrap();
        assert_eq!(table.frozen_rows(), 1);
    }

    #[test]
    fn embedding_table_random_is_bounded_with_zero_pad() {
        let mut rng = SeededRng::new(3);
        let table = EmbeddingTable::random(5, 4, &mut rng).unwrap();
        assert_eq!(table.weights().shape(), &[5, 4]);
        assert!(table.weights().data()[..4].iter().all(|&x| x == 0.0));
        assert!(table.weights().data()[4..]
            .iter()
            .all(|&x| (-0.25..0.25).contains(&x)));
        let frozen = EmbeddingTable::new(table.weights().clone(), false).unwrap();
        assert_eq!(frozen.frozen_rows(), 5);
    }

    #[test]
    fn lstm_step_shapes_and_gradient() {
        let hidden = 3;
        let input = 2;
        let mut store = rand_store(
            &[
                ("w_x", vec![4 * hidden, input]),
                ("w_h", vec![4 * hidden, hidden]),
                ("b", vec![4 * hidden]),
                ("x", vec![input]),
            ],
            11,
        );
        let report = grad_check(
            |s| {
                let mut tape = Tape::new();
                let leaves = s.leaves(&mut tape);
                let cell = lstm_vars(&leaves, s, hidden);
                let state = cell_init_state(&mut tape, &cell);
                let x = leaves.named(s, "x")?;
                let next = cell_step(&mut tape, &cell, x, state)?;
                let once_more = cell_step(&mut tape, &cell, x, next)?;
                let loss = tape.mean(once_more.h)?;
                Evaluated::new(tape, loss, leaves)
            },
            &mut store,
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(report.passed, "worst {:?}", report.worst);
    }

    #[test]
    fn gru_step_shapes_and_gradient() {
        let hidden = 3;
        let input = 2;
        let mut store = rand_store(
            &[
                ("w_x", vec![3 * hidden, input]),
                ("u_z", vec![hidden, hidden]),
                ("u_r", vec![hidden, hidden]),
                ("u_c", vec![hidden, hidden]),
                ("b", vec![3 * hidden]),
                ("x", vec![input]),
            ],
            12,
        );
        let report = grad_check(
            |s| {
                let mut tape = Tape::new();
                let leaves = s.leaves(&mut tape);
                let cell = gru_vars(&leaves, s, hidden);
                let state = cell_init_state(&mut tape, &cell);
                let x = leaves.named(s, "x")?;
                let next = cell_step(&mut tape, &cell, x, state)?;
                let again = cell_step(&mut tape, &cell, x, next)?;
                let loss = tape.mean(again.h)?;
                Evaluated::new(tape, loss, leaves)
            },
            &mut store,
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(report.passed, "worst {:?}", report.worst);
    }

    #[test]
    fn gru_interpolates_between_state_and_candidate() {
        // With reset letting everything through, large negative update-gate
        // bias keeps h' near h; large positive flips it near the candidate.
        let hidden = 1;
        for (bias_z, toward_candidate) in [(-30.0, false), (30.0, true)] {
            let mut tape = Tape::new();
            let w_x = tape.leaf(Tensor::new(vec![3, 1], vec![0.0, 0.0, 5.0]).unwrap());
            let u_z = tape.leaf(Tensor::zeros(vec![1, 1]));
            let u_r = tape.leaf(Tensor::zeros(vec![1, 1]));
            let u_c = tape.leaf(Tensor::zeros(vec![1, 1]));
            let b = tape.leaf(Tensor::new(vec![3], vec![bias_z, 30.0, 0.0]).unwrap());
            let cell = CellVars::Gru(GruVars { w_x, u_z, u_r, u_c, b, hidden });
            let h0 = tape.leaf(Tensor::new(vec![1], vec![0.9]).unwrap());
            let x = tape.leaf(Tensor::new(vec![1], vec![1.0]).unwrap());
            let next = cell_step(&mut tape, &cell, x, CellState { h: h0, c: None }).unwrap();
            let h1 = tape.value(next.h).data()[0];
            let cand = crate::math::tanh(5.0);
            if toward_candidate {
                assert!((h1 - cand).abs() < 1e-8, "h1 {h1} vs candidate {cand}");
            } else {
                assert!((h1 - 0.9).abs() < 1e-8, "h1 {h1} should stay near state");
            }
        }
    }

    #[test]
    fn lstm_forget_gate_controls_memory() {
        // Saturated forget gate with shut input gate keeps the cell intact.
        let hidden = 1;
        let mut tape = Tape::new();
        let w_x = tape.leaf(Tensor::zeros(vec![4, 1]));
        let w_h = tape.leaf(Tensor::zeros(vec![4, 1]));
        // Gates: input strongly off, forget strongly on, output strongly on.
        let b = tape.leaf(Tensor::new(vec![4], vec![-30.0, 30.0, 30.0, 0.0]).unwrap());
        let cell = CellVars::Lstm(LstmVars { w_x, w_h, b, hidden });
        let h0 = tape.zeros_leaf(vec![1]);
        let c0 = tape.leaf(Tensor::new(vec![1], vec![0.7]).unwrap());
        let x = tape.leaf(Tensor::new(vec![1], vec![1.0]).unwrap());
        let next = cell_step(&mut tape, &cell, x, CellState { h: h0, c: Some(c0) }).unwrap();
        let c1 = tape.value(next.c.unwrap()).data()[0];
        assert!((c1 - 0.7).abs() < 1e-8, "cell state {c1} should be preserved");
    }

    #[test]
    fn bi_rnn_single_step_is_two_cell_steps() {
        let hidden = 2;
        let input = 3;
        let store = rand_store(
            &[
                ("w_x", vec![4 * hidden, input]),
                ("w_h", vec![4 * hidden, hidden]),
                ("b", vec![4 * hidden]),
                ("x", vec![input]),
            ],
            21,
        );
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let fw = lstm_vars(&leaves, &store, hidden);
        let bw = lstm_vars(&leaves, &store, hidden);
        let x = leaves.named(&store, "x").unwrap();
        let outs = bi_rnn(
            &mut tape,
            &[BiLayer { fw, bw }],
            &[x],
            0.0,
            &mut Mode::Eval,
        )
        .unwrap();
        assert_eq!(outs.len(), 1);

        let state = cell_init_state(&mut tape, &fw);
        let manual = cell_step(&mut tape, &fw, x, state).unwrap();
        let manual_h = tape.value(manual.h).data();
        let out = tape.value(outs[0]).data();
        assert_eq!(out.len(), 2 * hidden);
        assert_eq!(&out[..hidden], manual_h);
        assert_eq!(&out[hidden..], manual_h); // same params both directions
    }

    #[test]
    fn bi_rnn_reversal_swaps_direction_halves() {
        // With identical forward/backward parameters, running the reversed
        // sequence mirrors the outputs and swaps the two halves.
        let hidden = 2;
        let input = 2;
        let store = rand_store(
            &[
                ("w_x", vec![3 * hidden, input]),
                ("u_z", vec![hidden, hidden]),
                ("u_r", vec![hidden, hidden]),
                ("u_c", vec![hidden, hidden]),
                ("b", vec![3 * hidden]),
                ("x0", vec![input]),
                ("x1", vec![input]),
                ("x2", vec![input]),
            ],
            22,
        );
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let cell = gru_vars(&leaves, &store, hidden);
        let layer = BiLayer { fw: cell, bw: cell };
        let xs: Vec<Var> = ["x0", "x1", "x2"]
            .iter()
            .map(|n| leaves.named(&store, n).unwrap())
            .collect();
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let out_f = bi_rnn(&mut tape, &[layer], &xs, 0.0, &mut Mode::Eval).unwrap();
        let out_r = bi_rnn(&mut tape, &[layer], &rev, 0.0, &mut Mode::Eval).unwrap();
        let s = xs.len();
        for t in 0..s {
            let a = tape.value(out_f[t]).data();
            let b = tape.value(out_r[s - 1 - t]).data();
            assert_eq!(&a[..hidden], &b[hidden..], "forward half at {t}");
            assert_eq!(&a[hidden..], &b[..hidden], "backward half at {t}");
        }
    }

    #[test]
    fn bi_rnn_output_sees_distant_input() {
        // Gradient of the last output with respect to the first input is
        // non-zero on a random initialization: the recurrence carries
        // long-range context.
        let hidden = 2;
        let input = 2;
        let mut store = rand_store(
            &[
                ("w_x", vec![4 * hidden, input]),
                ("w_h", vec![4 * hidden, hidden]),
                ("b", vec![4 * hidden]),
                ("x0", vec![input]),
                ("x1", vec![input]),
                ("x2", vec![input]),
                ("x3", vec![input]),
            ],
            23,
        );
        let report = grad_check(
            |s| {
                let mut tape = Tape::new();
                let leaves = s.leaves(&mut tape);
                let cell = lstm_vars(&leaves, s, hidden);
                let layer = BiLayer { fw: cell, bw: cell };
                let xs: Vec<Var> = ["x0", "x1", "x2", "x3"]
                    .iter()
                    .map(|n| leaves.named(s, n).unwrap())
                    .collect();
                let outs = bi_rnn(&mut tape, &[layer], &xs, 0.0, &mut Mode::Eval)?;
                let loss = tape.mean(*outs.last().unwrap())?;
                Evaluated::new(tape, loss, leaves)
            },
            &mut store,
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(report.passed, "worst {:?}", report.worst);

        // Rebuild once more to inspect the gradient at x0 directly.
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let cell = lstm_vars(&leaves, &store, hidden);
        let layer = BiLayer { fw: cell, bw: cell };
        let xs: Vec<Var> = ["x0", "x1", "x2", "x3"]
            .iter()
            .map(|n| leaves.named(&store, n).unwrap())
            .collect();
        let outs = bi_rnn(&mut tape, &[layer], &xs, 0.0, &mut Mode::Eval).unwrap();
        let loss = tape.mean(*outs.last().unwrap()).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gx0 = grads.get(xs[0]).unwrap();
        assert!(gx0.data().iter().any(|&g| g.abs() > 1e-12));
    }

    #[test]
    fn stacked_bi_rnn_changes_width_correctly() {
        let hidden = 2;
        let input = 3;
        let store = rand_store(
            &[
                ("w_x", vec![4 * hidden, input]),
                ("w_h", vec![4 * hidden, hidden]),
                ("b", vec![4 * hidden]),
                ("w_x2", vec![4 * hidden, 2 * hidden]),
                ("w_h2", vec![4 * hidden, hidden]),
                ("b2", vec![4 * hidden]),
                ("x0", vec![input]),
                ("x1", vec![input]),
            ],
            24,
        );
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let l1 = lstm_vars(&leaves, &store, hidden);
        let l2 = CellVars::Lstm(LstmVars {
            w_x: leaves.named(&store, "w_x2").unwrap(),
            w_h: leaves.named(&store, "w_h2").unwrap(),
            b: leaves.named(&store, "b2").unwrap(),
            hidden,
        });
        let xs = [
            leaves.named(&store, "x0").unwrap(),
            leaves.named(&store, "x1").unwrap(),
        ];
        let outs = bi_rnn(
            &mut tape,
            &[BiLayer { fw: l1, bw: l1 }, BiLayer { fw: l2, bw: l2 }],
            &xs,
            0.0,
            &mut Mode::Eval,
        )
        .unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!(tape.value(outs[0]).len(), 2 * hidden);
    }

    #[test]
    fn highway_join_passes_disjoint_gradients() {
        let mut tape = Tape::new();
        let r = tape.leaf(Tensor::new(vec![2], vec![0.3, -0.1]).unwrap());
        let v = tape.leaf(Tensor::new(vec![3], vec![0.5, 0.2, -0.4]).unwrap());
        let joined = highway_join(&mut tape, r, v).unwrap();
        assert_eq!(tape.value(joined).data(), &[0.3, -0.1, 0.5, 0.2, -0.4]);

        // Weight the joined vector so each position gets a distinct
        // gradient, then check the split is exact: the features see the
        // tail weights untouched by the recurrent half.
        let w = tape.leaf(Tensor::new(vec![5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let weighted = tape.mul(joined, w).unwrap();
        let loss = tape.sum(weighted).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(r).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(grads.get(v).unwrap().data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn dense_sigmoid_outputs_probabilities() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(vec![2, 3], vec![5.0, -80.0, 2.0, 1.0, 0.5, -2.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2], vec![100.0, -0.3]).unwrap());
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let p = dense_sigmoid(&mut tape, w, b, x).unwrap();
        for &v in tape.value(p).data() {
            assert!(v > 0.0 && v < 1.0, "probability {v} outside (0,1)");
        }
    }

    #[test]
    fn conv_features_dimension() {
        let mut tape = Tape::new();
        let mut rng = SeededRng::new(31);
        let emb = tape.leaf(uniform_init(&[6, 4], -0.5, 0.5, &mut rng).unwrap());
        let groups: Vec<ConvGroup> = [2usize, 3]
            .iter()
            .map(|&w| ConvGroup {
                width: w,
                weight: tape.leaf(uniform_init(&[5, w * 4], -0.5, 0.5, &mut rng).unwrap()),
                bias: tape.leaf(uniform_init(&[5], -0.1, 0.1, &mut rng).unwrap()),
            })
            .collect();
        let v = conv_features(&mut tape, emb, &groups, 2).unwrap();
        // 2 widths x 5 filters x p=2 chunks.
        assert_eq!(tape.value(v).len(), 20);
    }

    #[test]
    fn conv_features_gradient() {
        let mut store = rand_store(
            &[
                ("emb", vec![5, 3]),
                ("w2", vec![2, 6]),
                ("b2", vec![2]),
                ("w3", vec![2, 9]),
                ("b3", vec![2]),
            ],
            32,
        );
        let report = grad_check(
            |s| {
                let mut tape = Tape::new();
                let leaves = s.leaves(&mut tape);
                let groups = [
                    ConvGroup {
                        width: 2,
                        weight: leaves.named(s, "w2")?,
                        bias: leaves.named(s, "b2")?,
                    },
                    ConvGroup {
                        width: 3,
                        weight: leaves.named(s, "w3")?,
                        bias: leaves.named(s, "b3")?,
                    },
                ];
                let v = conv_features(&mut tape, leaves.named(s, "emb")?, &groups, 2)?;
                let loss = tape.mean(v)?;
                Evaluated::new(tape, loss, leaves)
            },
            &mut store,
            DEFAULT_EPS,
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(report.passed, "worst {:?}", report.worst);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = dropout(&mut tape, x, 0.4, &mut Mode::Eval).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_train_is_deterministic_per_seed() {
        let run = |seed: u64| {
            let mut tape = Tape::new();
            let mut rng = SeededRng::new(seed);
            let x = tape.leaf(Tensor::new(vec![8], vec![1.0; 8]).unwrap());
            let y = dropout(&mut tape, x, 0.5, &mut Mode::Train(&mut rng)).unwrap();
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut tape = Tape::new();
        let mut rng = SeededRng::new(1);
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        assert!(dropout(&mut tape, x, 1.0, &mut Mode::Train(&mut rng)).is_err());
        assert!(dropout(&mut tape, x, -0.1, &mut Mode::Train(&mut rng)).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        // Inverted scaling keeps E[output] = input; check by averaging many
        // seeds.
        let rate = 0.4;
        let trials = 4000;
        let mut sum = 0.0;
        for seed in 0..trials {
            let mut tape = Tape::new();
            let mut rng = SeededRng::new(seed);
            let x = tape.leaf(Tensor::new(vec![1], vec![1.0]).unwrap());
            let y = dropout(&mut tape, x, rate, &mut Mode::Train(&mut rng)).unwrap();
            sum += tape.value(y).data()[0];
        }
        let mean = sum / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }
}
