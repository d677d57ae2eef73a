//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Every forward operation evaluates eagerly, records what it needs for the
//! backward pass, and returns a [`Var`] handle. [`Tape::backward`] walks the
//! recorded nodes in reverse and accumulates gradients per node. The op set
//! is exactly what the dialogue models need; each op keeps its own backward
//! rule next to its forward loop so the pair can be reviewed in one place.
//!
//! Gradients are plain sums of contributions in recording order, so a given
//! graph yields bit-identical gradients on every run.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Clamp bound for probabilities inside the cross-entropy loss.
pub const BCE_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// y = W x, with W of shape [m, n] and x of shape [n].
    MatVec { w: Var, x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Tanh { x: Var },
    Sigmoid { x: Var },
    /// Contiguous sub-range of a vector.
    Slice { x: Var, lo: usize },
    Concat { parts: Vec<Var> },
    Reshape { x: Var },
    /// Row gather: output row r is table row tokens[r].
    Embed { table: Var, tokens: Vec<usize> },
    /// Narrow 1-d convolution over a [n, e] input with filters flattened to
    /// [f, width * e] and one bias per filter.
    Conv1d { input: Var, weight: Var, bias: Var, width: usize },
    /// Chunked max pooling; `argmax` holds the winning input column per
    /// output element, `None` for virtual zero padding.
    KMaxPool { input: Var, argmax: Vec<Option<usize>> },
    /// Elementwise product with a fixed mask (inverted dropout).
    Dropout { x: Var, mask: Vec<f64> },
    /// Mean binary cross-entropy of a probability vector against 0/1 refs.
    Bce { probs: Var, refs: Vec<f64> },
    Mean { x: Var },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`]. Nodes the loss does
/// not depend on have no entry.
#[derive(Debug)]
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.by_node.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros_leaf(&mut self, shape: Vec<usize>) -> Var {
        self.leaf(Tensor::zeros(shape))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wt, xt) = (self.value(w), self.value(x));
        if wt.shape().len() != 2 || xt.shape().len() != 1 || wt.cols() != xt.len() {
            return Err(Error::shape(format!(
                "matvec: {:?} x {:?}",
                wt.shape(),
                xt.shape()
            )));
        }
        let (m, n) = (wt.rows(), wt.cols());
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wt.data()[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xt.data()) {
                acc += a * b;
            }
            out[i] = acc;
        }
        Ok(self.push(Tensor::new(vec![m], out)?, Op::MatVec { w, x }))
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Var, Var)> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::shape(format!(
                "{name}: {:?} vs {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let data: Vec<f64> = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((Tensor::new(at.shape().to_vec(), data)?, a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, a, b) = self.elementwise(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, a, b) = self.elementwise(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, a, b) = self.elementwise(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul { a, b }))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| math::tanh(v)).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Tanh { x }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| math::sigmoid(v)).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Sigmoid { x }))
    }

    pub fn slice(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let xt = self.value(x);
        if xt.shape().len() != 1 {
            return Err(Error::shape("slice: expects a vector"));
        }
        if lo >= hi || hi > xt.len() {
            return Err(Error::invalid(format!(
                "slice: range {lo}..{hi} of length {}",
                xt.len()
            )));
        }
        let t = Tensor::new(vec![hi - lo], xt.data()[lo..hi].to_vec())?;
        Ok(self.push(t, Op::Slice { x, lo }))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat: no parts"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let pt = self.value(p);
            if pt.shape().len() != 1 {
                return Err(Error::shape("concat: expects vectors"));
            }
            data.extend_from_slice(pt.data());
        }
        let t = Tensor::new(vec![data.len()], data)?;
        Ok(self.push(t, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let xt = self.value(x);
        if shape.iter().product::<usize>() != xt.len() {
            return Err(Error::shape(format!(
                "reshape: {:?} -> {:?}",
                xt.shape(),
                shape
            )));
        }
        let t = Tensor::new(shape, xt.data().to_vec())?;
        Ok(self.push(t, Op::Reshape { x }))
    }

    pub fn embed(&mut self, table: Var, tokens: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.shape().len() != 2 {
            return Err(Error::shape("embed: table must be [vocab, dim]"));
        }
        if tokens.is_empty() {
            return Err(Error::invalid("embed: empty token list"));
        }
        let (v, e) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(tokens.len() * e);
        for &tok in tokens {
            if tok >= v {
                return Err(Error::invalid(format!(
                    "embed: token index {tok} outside vocabulary of {v}"
                )));
            }
            data.extend_from_slice(&tt.data()[tok * e..(tok + 1) * e]);
        }
        let t = Tensor::new(vec![tokens.len(), e], data)?;
        Ok(self.push(
            t,
            Op::Embed {
                table,
                tokens: tokens.to_vec(),
            },
        ))
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, width: usize) -> Result<Var> {
        let (it, wt, bt) = (self.value(input), self.value(weight), self.value(bias));
        if it.shape().len() != 2 || wt.shape().len() != 2 || bt.shape().len() != 1 {
            return Err(Error::shape("conv1d: input [n,e], weight [f,width*e], bias [f]"));
        }
        let (n, e) = (it.rows(), it.cols());
        let f = wt.rows();
        if width == 0 || n < width {
            return Err(Error::invalid(format!(
                "conv1d: width {width} does not fit input of {n} rows"
            )));
        }
        if wt.cols() != width * e || bt.len() != f {
            return Err(Error::shape(format!(
                "conv1d: weight {:?} / bias {:?} vs width {width}, dim {e}",
                wt.shape(),
                bt.shape()
            )));
        }
        let positions = n - width + 1;
        let span = width * e;
        let mut out = vec![0.0; f * positions];
        // Row-major [n, e] keeps each window contiguous: rows i..i+width of
        // the input occupy data[i*e .. (i+width)*e].
        for fi in 0..f {
            let wrow = &wt.data()[fi * span..(fi + 1) * span];
            let b = bt.data()[fi];
            for i in 0..positions {
                let window = &it.data()[i * e..i * e + span];
                let mut acc = b;
                for (a, x) in wrow.iter().zip(window) {
                    acc += a * x;
                }
                out[fi * positions + i] = acc;
            }
        }
        let t = Tensor::new(vec![f, positions], out)?;
        Ok(self.push(
            t,
            Op::Conv1d {
                input,
                weight,
                bias,
                width,
            },
        ))
    }

    /// Dynamic k-max pooling with p chunks per row.
    ///
    /// For a row of length m >= p, chunk j (1-based) covers 1-based columns
    /// floor((j-1)m/p)+1 ..= floor(jm/p) and contributes its maximum, first
    /// index winning ties. Rows shorter than p are right-padded with zeros
    /// first, which makes every chunk a single column. p = 1 is max over
    /// time.
    pub fn kmax_pool(&mut self, input: Var, p: usize) -> Result<Var> {
        let it = self.value(input);
        if it.shape().len() != 2 {
            return Err(Error::shape("kmax_pool: expects [rows, m]"));
        }
        if p == 0 {
            return Err(Error::invalid("kmax_pool: p must be positive"));
        }
        let (rows, m) = (it.rows(), it.cols());
        let mut out = vec![0.0; rows * p];
        let mut argmax = vec![None; rows * p];
        for r in 0..rows {
            let row = &it.data()[r * m..(r + 1) * m];
            for j in 1..=p {
                let slot = r * p + (j - 1);
                if m < p {
                    // Padded row: chunk j is the single column j-1, zero
                    // beyond the real data.
                    if j - 1 < m {
                        out[slot] = row[j - 1];
                        argmax[slot] = Some(j - 1);
                    }
                    continue;
                }
                let lo = (j - 1) * m / p;
                let hi = j * m / p;
                let mut best = lo;
                for c in lo + 1..hi {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                out[slot] = row[best];
                argmax[slot] = Some(best);
            }
        }
        let t = Tensor::new(vec![rows, p], out)?;
        Ok(self.push(t, Op::KMaxPool { input, argmax }))
    }

    /// Elementwise product with a precomputed dropout mask. The mask is
    /// treated as a constant; its entries are 0 or 1/(1-rate).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let xt = self.value(x);
        if mask.len() != xt.len() {
            return Err(Error::shape("dropout: mask length mismatch"));
        }
        let data: Vec<f64> = xt.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(xt.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { x, mask }))
    }

    /// Mean binary cross-entropy over one probability vector.
    ///
    /// Probabilities are clamped into [BCE_EPS, 1 - BCE_EPS] before the
    /// logs; the gradient is zero where the clamp is active.
    pub fn bce(&mut self, probs: Var, refs: &[f64]) -> Result<Var> {
        let pt = self.value(probs);
        if pt.shape().len() != 1 || pt.len() != refs.len() {
            return Err(Error::shape(format!(
                "bce: probs {:?} vs {} refs",
                pt.shape(),
                refs.len()
            )));
        }
        if refs.is_empty() {
            return Err(Error::invalid("bce: empty reference vector"));
        }
        if refs.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::invalid("bce: references must be 0 or 1"));
        }
        let c = refs.len() as f64;
        let mut acc = 0.0;
        for (&p, &y) in pt.data().iter().zip(refs) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            acc += y * math::ln(p) + (1.0 - y) * math::ln(1.0 - p);
        }
        let t = Tensor::scalar(-acc / c)?;
        Ok(self.push(
            t,
            Op::Bce {
                probs,
                refs: refs.to_vec(),
            },
        ))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.shape().len() != 1 || xt.is_empty() {
            return Err(Error::shape("mean: expects a non-empty vector"));
        }
        let m = xt.data().iter().sum::<f64>() / xt.len() as f64;
        let t = Tensor::scalar(m)?;
        Ok(self.push(t, Op::Mean { x }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.shape().len() != 1 || xt.is_empty() {
            return Err(Error::shape("sum: expects a non-empty vector"));
        }
        let t = Tensor::scalar(xt.data().iter().sum())?;
        Ok(self.push(t, Op::Sum { x }))
    }

    /// Reverse pass from a scalar node. Returns one gradient tensor per
    /// node the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid("backward: loss must be scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0)?);

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let (wt, xt) = (self.value(*w), self.value(*x));
                    let (m, n) = (wt.rows(), wt.cols());
                    {
                        let gw = self.slot(&mut grads, *w);
                        for r in 0..m {
                            let gr = g.data()[r];
                            for c in 0..n {
                                gw[r * n + c] += gr * xt.data()[c];
                            }
                        }
                    }
                    let gx = self.slot(&mut grads, *x);
                    for r in 0..m {
                        let gr = g.data()[r];
                        for c in 0..n {
                            gx[c] += gr * wt.data()[r * n + c];
                        }
                    }
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, *a, g.data(), 1.0);
                    self.accumulate(&mut grads, *b, g.data(), 1.0);
                }
                Op::Sub { a, b } => {
                    self.accumulate(&mut grads, *a, g.data(), 1.0);
                    self.accumulate(&mut grads, *b, g.data(), -1.0);
                }
                Op::Mul { a, b } => {
                    let bt = self.value(*b).data().to_vec();
                    let at = self.value(*a).data().to_vec();
                    {
                        let ga = self.slot(&mut grads, *a);
                        for (slot, (gv, bv)) in ga.iter_mut().zip(g.data().iter().zip(&bt)) {
                            *slot += gv * bv;
                        }
                    }
                    let gb = self.slot(&mut grads, *b);
                    for (slot, (gv, av)) in gb.iter_mut().zip(g.data().iter().zip(&at)) {
                        *slot += gv * av;
                    }
                }
                Op::Tanh { x } => {
                    let y = node.value.data();
                    let gx = self.slot(&mut grads, *x);
                    for (slot, (gv, yv)) in gx.iter_mut().zip(g.data().iter().zip(y)) {
                        *slot += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid { x } => {
                    let y = node.value.data();
                    let gx = self.slot(&mut grads, *x);
                    for (slot, (gv, yv)) in gx.iter_mut().zip(g.data().iter().zip(y)) {
                        *slot += gv * yv * (1.0 - yv);
                    }
                }
                Op::Slice { x, lo } => {
                    let gx = self.slot(&mut grads, *x);
                    for (k, gv) in g.data().iter().enumerate() {
                        gx[lo + k] += gv;
                    }
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = self.slot(&mut grads, p);
                        for k in 0..len {
                            gp[k] += g.data()[off + k];
                        }
                        off += len;
                    }
                }
                Op::Reshape { x } => {
                    self.accumulate(&mut grads, *x, g.data(), 1.0);
                }
                Op::Embed { table, tokens } => {
                    let e = self.value(*table).cols();
                    let gt = self.slot(&mut grads, *table);
                    for (r, &tok) in tokens.iter().enumerate() {
                        for c in 0..e {
                            gt[tok * e + c] += g.data()[r * e + c];
                        }
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    width,
                } => {
                    let it = self.value(*input);
                    let wt = self.value(*weight);
                    let (_, e) = (it.rows(), it.cols());
                    let f = wt.rows();
                    let span = width * e;
                    let positions = node.value.cols();
                    {
                        let gb = self.slot(&mut grads, *bias);
                        for fi in 0..f {
                            let mut acc = 0.0;
                            for i in 0..positions {
                                acc += g.data()[fi * positions + i];
                            }
                            gb[fi] += acc;
                        }
                    }
                    {
                        let gw = self.slot(&mut grads, *weight);
                        for fi in 0..f {
                            for i in 0..positions {
                                let go = g.data()[fi * positions + i];
                                let window = &it.data()[i * e..i * e + span];
                                let wrow = &mut gw[fi * span..(fi + 1) * span];
                                for (slot, x) in wrow.iter_mut().zip(window) {
                                    *slot += go * x;
                                }
                            }
                        }
                    }
                    let gi = self.slot(&mut grads, *input);
                    for fi in 0..f {
                        let wrow = &wt.data()[fi * span..(fi + 1) * span];
                        for i in 0..positions {
                            let go = g.data()[fi * positions + i];
                            let gwin = &mut gi[i * e..i * e + span];
                            for (slot, wv) in gwin.iter_mut().zip(wrow) {
                                *slot += go * wv;
                            }
                        }
                    }
                }
                Op::KMaxPool { input, argmax } => {
                    let m = self.value(*input).cols();
                    let p = node.value.cols();
                    let gi = self.slot(&mut grads, *input);
                    for r in 0..node.value.rows() {
                        for j in 0..p {
                            if let Some(c) = argmax[r * p + j] {
                                gi[r * m + c] += g.data()[r * p + j];
                            }
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = self.slot(&mut grads, *x);
                    for (slot, (gv, mv)) in gx.iter_mut().zip(g.data().iter().zip(mask)) {
                        *slot += gv * mv;
                    }
                }
                Op::Bce { probs, refs } => {
                    let go = g.data()[0];
                    let pt = self.value(*probs).data().to_vec();
                    let c = refs.len() as f64;
                    let gp = self.slot(&mut grads, *probs);
                    for (k, (&p, &y)) in pt.iter().zip(refs).enumerate() {
                        if p > BCE_EPS && p < 1.0 - BCE_EPS {
                            gp[k] += go * -(y / p - (1.0 - y) / (1.0 - p)) / c;
                        }
                    }
                }
                Op::Mean { x } => {
                    let len = self.value(*x).len();
                    let share = g.data()[0] / len as f64;
                    let gx = self.slot(&mut grads, *x);
                    for slot in gx.iter_mut() {
                        *slot += share;
                    }
                }
                Op::Sum { x } => {
                    let go = g.data()[0];
                    let gx = self.slot(&mut grads, *x);
                    for slot in gx.iter_mut() {
                        *slot += go;
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { by_node: grads })
    }

    /// Mutable gradient buffer for `v`, created as zeros on first touch.
    #[allow(clippy::mut_from_ref)]
    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut [f64] {
        if grads[v.0].is_none() {
            grads[v.0] = Some(Tensor::zeros(self.value(v).shape().to_vec()));
        }
        grads[v.0].as_mut().unwrap().data_mut()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, from: &[f64], scale: f64) {
        let slot = self.slot(grads, v);
        for (s, f) in slot.iter_mut().zip(from) {
            *s += f * scale;
        }
    }
}
