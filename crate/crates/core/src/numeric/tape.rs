//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values live on
//! the tape and are addressed through lightweight [`Var`] handles; calling
//! [`Tape::backward`] on a scalar walks the record in reverse and returns
//! [`Gradients`], which can be folded into the [`ParamSet`]s whose tensors
//! were bound with [`Tape::param`].
//!
//! Every value is a `rows x cols` matrix. Scalars are `1 x 1`.
//!
//! Nodes that do not depend on any parameter (data, noise, fixed
//! embeddings) are marked as not needing gradients, and backward skips them.
//! This matters for the convolution layers, whose inputs are constant word
//! embeddings.

use std::sync::atomic::{AtomicU64, Ordering};

use super::params::ParamSet;
use super::tensor::{self, Tensor};
use crate::error::{bail, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param { set: u64, slot: usize },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    ConcatCols(Vec<usize>),
    SliceCols { src: usize, start: usize },
    SliceRows { src: usize, start: usize },
    GatherRows { table: usize, index: Vec<usize> },
    Unfold { src: usize, seq_len: usize, window: usize },
    SegmentMax { src: usize, argmax: Vec<usize> },
    LogSoftmax(usize),
    Softmax(usize),
    Pick { src: usize, index: Vec<usize> },
    WeightedSum { src: usize, weights: Vec<f64> },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of the operations of one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// Drops every recorded node. Outstanding [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.idx]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// Value of a `1 x 1` variable.
    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        assert_eq!(n.value.len(), 1, "not a scalar");
        n.value[0]
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(data.len(), rows * cols, "constant data does not match shape");
        self.push(rows, cols, data, Op::Constant, false)
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Constant, false)
    }

    /// Binds the named tensor of `set` as a trainable leaf.
    pub fn param(&mut self, set: &ParamSet, name: &str) -> Result<Var> {
        let Some(slot) = set.slot(name) else {
            bail!(Usage, "parameter `{name}` not in set");
        };
        let t = set.tensor_at(slot);
        Ok(self.push(
            t.rows(),
            t.cols(),
            t.data().to_vec(),
            Op::Param { set: set.id(), slot },
            true,
        ))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let (rows, cols, ng) = (n.rows, n.cols, n.needs_grad);
        let value = n.value.iter().map(|&x| f(x)).collect();
        self.push(rows, cols, value, op, ng)
    }

    fn binary_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Var {
        let (na, nb) = (self.node(a), self.node(b));
        assert_eq!(
            (na.rows, na.cols),
            (nb.rows, nb.cols),
            "{what}: shape mismatch"
        );
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let (rows, cols, ng) = (na.rows, na.cols, na.needs_grad || nb.needs_grad);
        self.push(rows, cols, value, op, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (na, nb) = (self.node(a), self.node(b));
        assert_eq!(na.cols, nb.rows, "matmul: inner dimensions differ");
        let (r, k, n) = (na.rows, na.cols, nb.cols);
        let mut out = vec![0.0; r * n];
        tensor::matmul(&na.value, &nb.value, &mut out, r, k, n);
        let ng = na.needs_grad || nb.needs_grad;
        self.push(r, n, out, Op::MatMul(a.idx, b.idx), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, |x, y| x + y, Op::Add(a.idx, b.idx), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, |x, y| x - y, Op::Sub(a.idx, b.idx), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, |x, y| x * y, Op::Mul(a.idx, b.idx), "mul")
    }

    /// Adds the `1 x cols` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (na, nr) = (self.node(a), self.node(row));
        assert_eq!(nr.rows, 1, "add_row: bias must be a single row");
        assert_eq!(na.cols, nr.cols, "add_row: column mismatch");
        let cols = na.cols;
        let mut value = na.value.clone();
        for chunk in value.chunks_mut(cols) {
            for (v, b) in chunk.iter_mut().zip(&nr.value) {
                *v += b;
            }
        }
        let (rows, ng) = (na.rows, na.needs_grad || nr.needs_grad);
        self.push(rows, cols, value, Op::AddRow(a.idx, row.idx), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a.idx, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, tensor::sigmoid, Op::Sigmoid(a.idx))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.idx))
    }

    /// ReLU; the subgradient at zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a.idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.node(parts[0]).rows;
        let mut cols = 0;
        let mut ng = false;
        for &p in parts {
            let n = self.node(p);
            assert_eq!(n.rows, rows, "concat_cols: row mismatch");
            cols += n.cols;
            ng |= n.needs_grad;
        }
        let mut value = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let n = &self.nodes[p.idx];
                value.extend_from_slice(&n.value[r * n.cols..(r + 1) * n.cols]);
            }
        }
        let idx = parts.iter().map(|p| p.idx).collect();
        self.push(rows, cols, value, Op::ConcatCols(idx), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let n = self.node(a);
        assert!(start < end && end <= n.cols, "slice_cols out of range");
        let w = end - start;
        let mut value = Vec::with_capacity(n.rows * w);
        for r in 0..n.rows {
            value.extend_from_slice(&n.value[r * n.cols + start..r * n.cols + end]);
        }
        let (rows, ng) = (n.rows, n.needs_grad);
        self.push(rows, w, value, Op::SliceCols { src: a.idx, start }, ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let n = self.node(a);
        assert!(start < end && end <= n.rows, "slice_rows out of range");
        let value = n.value[start * n.cols..end * n.cols].to_vec();
        let (cols, ng) = (n.cols, n.needs_grad);
        self.push(end - start, cols, value, Op::SliceRows { src: a.idx, start }, ng)
    }

    /// Row lookup: output row `i` is `table[index[i]]`.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Var {
        let n = self.node(table);
        let cols = n.cols;
        let mut value = Vec::with_capacity(index.len() * cols);
        for &i in index {
            assert!(i < n.rows, "gather_rows: index {i} out of range");
            value.extend_from_slice(&n.value[i * cols..(i + 1) * cols]);
        }
        let ng = n.needs_grad;
        self.push(
            index.len(),
            cols,
            value,
            Op::GatherRows {
                table: table.idx,
                index: index.to_vec(),
            },
            ng,
        )
    }

    /// Sliding windows over stacked sequences.
    ///
    /// `a` holds `batch * seq_len` rows of width `E`; the result has
    /// `batch * (seq_len - window + 1)` rows of width `window * E`, where row
    /// `(b, p)` is the concatenation of input rows `p .. p + window` of
    /// sequence `b`.
    pub fn unfold(&mut self, a: Var, seq_len: usize, window: usize) -> Var {
        let n = self.node(a);
        assert!(window >= 1 && window <= seq_len, "unfold: bad window");
        assert_eq!(n.rows % seq_len, 0, "unfold: rows not a multiple of seq_len");
        let e = n.cols;
        let batch = n.rows / seq_len;
        let positions = seq_len - window + 1;
        let mut value = Vec::with_capacity(batch * positions * window * e);
        for b in 0..batch {
            for p in 0..positions {
                let start = (b * seq_len + p) * e;
                value.extend_from_slice(&n.value[start..start + window * e]);
            }
        }
        let ng = n.needs_grad;
        self.push(
            batch * positions,
            window * e,
            value,
            Op::Unfold {
                src: a.idx,
                seq_len,
                window,
            },
            ng,
        )
    }

    /// Column-wise max over consecutive groups of `seg` rows. Ties go to
    /// the lowest row.
    pub fn segment_max(&mut self, a: Var, seg: usize) -> Var {
        let n = self.node(a);
        assert!(seg >= 1 && n.rows.is_multiple_of(seg), "segment_max: bad segment");
        let cols = n.cols;
        let groups = n.rows / seg;
        let mut value = Vec::with_capacity(groups * cols);
        let mut argmax = Vec::with_capacity(groups * cols);
        for g in 0..groups {
            for c in 0..cols {
                let mut best = g * seg;
                let mut best_v = n.value[best * cols + c];
                for r in g * seg + 1..(g + 1) * seg {
                    let v = n.value[r * cols + c];
                    if v > best_v {
                        best = r;
                        best_v = v;
                    }
                }
                value.push(best_v);
                argmax.push(best);
            }
        }
        let ng = n.needs_grad;
        self.push(groups, cols, value, Op::SegmentMax { src: a.idx, argmax }, ng)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let mut value = n.value.clone();
        for row in value.chunks_mut(n.cols) {
            tensor::log_softmax_in_place(row);
        }
        let (rows, cols, ng) = (n.rows, n.cols, n.needs_grad);
        self.push(rows, cols, value, Op::LogSoftmax(a.idx), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let mut value = n.value.clone();
        for row in value.chunks_mut(n.cols) {
            tensor::softmax_in_place(row);
        }
        let (rows, cols, ng) = (n.rows, n.cols, n.needs_grad);
        self.push(rows, cols, value, Op::Softmax(a.idx), ng)
    }

    /// Picks `a[i, index[i]]` for each row, giving a column vector.
    pub fn pick(&mut self, a: Var, index: &[usize]) -> Var {
        let n = self.node(a);
        assert_eq!(index.len(), n.rows, "pick: one index per row");
        let value = index
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < n.cols, "pick: column {c} out of range");
                n.value[r * n.cols + c]
            })
            .collect();
        let (rows, ng) = (n.rows, n.needs_grad);
        self.push(
            rows,
            1,
            value,
            Op::Pick {
                src: a.idx,
                index: index.to_vec(),
            },
            ng,
        )
    }

    /// `sum_i weights[i] * a[i]` over all entries.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Var {
        let n = self.node(a);
        assert_eq!(weights.len(), n.value.len(), "weighted_sum: one weight per entry");
        let v = n.value.iter().zip(weights).map(|(x, w)| x * w).sum();
        let ng = n.needs_grad;
        self.push(
            1,
            1,
            vec![v],
            Op::WeightedSum {
                src: a.idx,
                weights: weights.to_vec(),
            },
            ng,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let v = n.value.iter().sum();
        let ng = n.needs_grad;
        self.push(1, 1, vec![v], Op::Sum(a.idx), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let len = self.node(a).value.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / len)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            bail!(Usage, "loss is not recorded on this tape");
        }
        if self.nodes[loss.idx].value.len() != 1 {
            bail!(Usage, "loss must be a scalar");
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.idx] = Some(vec![1.0]);

        for i in (0..=loss.idx).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        let bindings = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param { set, slot } => Some((i, set, slot)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
            bindings,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Accumulates into the gradient buffer of `j` when it needs one.
        let mut acc = |j: usize, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[j].needs_grad {
                let buf = grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.len()]);
                f(buf);
            }
        };
        match &node.op {
            Op::Constant | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let (na, nb) = (&nodes[*a], &nodes[*b]);
                let (r, k, n) = (na.rows, na.cols, nb.cols);
                acc(*a, &mut |buf| tensor::matmul_bt_acc(g, &nb.value, buf, r, k, n));
                acc(*b, &mut |buf| tensor::matmul_at_acc(&na.value, g, buf, r, k, n));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| {
                    for (x, y) in buf.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |buf| add_into(buf, g));
                let cols = node.cols;
                acc(*row, &mut |buf| {
                    for chunk in g.chunks(cols) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                acc(*a, &mut |buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(g).zip(vb) {
                        *x += gi * y;
                    }
                });
                acc(*b, &mut |buf| {
                    for ((x, gi), y) in buf.iter_mut().zip(g).zip(va) {
                        *x += gi * y;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |buf| {
                for (x, gi) in buf.iter_mut().zip(g) {
                    *x += gi * c;
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |buf| {
                for ((x, gi), y) in buf.iter_mut().zip(g).zip(&node.value) {
                    *x += gi * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |buf| {
                for ((x, gi), y) in buf.iter_mut().zip(g).zip(&node.value) {
                    *x += gi * (1.0 - y * y);
                }
            }),
            Op::Relu(a) => acc(*a, &mut |buf| {
                for ((x, gi), y) in buf.iter_mut().zip(g).zip(&node.value) {
                    if *y > 0.0 {
                        *x += gi;
                    }
                }
            }),
            Op::ConcatCols(parts) => {
                let rows = node.rows;
                let mut offset = 0;
                for &p in parts {
                    let pc = nodes[p].cols;
                    acc(p, &mut |buf| {
                        for r in 0..rows {
                            let src = &g[r * node.cols + offset..r * node.cols + offset + pc];
                            add_into(&mut buf[r * pc..(r + 1) * pc], src);
                        }
                    });
                    offset += pc;
                }
            }
            Op::SliceCols { src, start } => {
                let sc = nodes[*src].cols;
                let w = node.cols;
                acc(*src, &mut |buf| {
                    for r in 0..node.rows {
                        add_into(
                            &mut buf[r * sc + start..r * sc + start + w],
                            &g[r * w..(r + 1) * w],
                        );
                    }
                });
            }
            Op::SliceRows { src, start } => {
                let c = node.cols;
                acc(*src, &mut |buf| {
                    add_into(&mut buf[start * c..start * c + g.len()], g);
                });
            }
            Op::GatherRows { table, index } => {
                let c = node.cols;
                acc(*table, &mut |buf| {
                    for (r, &i) in index.iter().enumerate() {
                        add_into(&mut buf[i * c..(i + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::Unfold {
                src,
                seq_len,
                window,
            } => {
                let e = nodes[*src].cols;
                let positions = seq_len - window + 1;
                let batch = nodes[*src].rows / seq_len;
                let w = window * e;
                acc(*src, &mut |buf| {
                    for b in 0..batch {
                        for p in 0..positions {
                            let start = (b * seq_len + p) * e;
                            let row = b * positions + p;
                            add_into(&mut buf[start..start + w], &g[row * w..(row + 1) * w]);
                        }
                    }
                });
            }
            Op::SegmentMax { src, argmax } => {
                let c = node.cols;
                acc(*src, &mut |buf| {
                    for (k, &r) in argmax.iter().enumerate() {
                        buf[r * c + k % c] += g[k];
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let c = node.cols;
                acc(*a, &mut |buf| {
                    for ((brow, grow), yrow) in buf
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(node.value.chunks(c))
                    {
                        let gsum: f64 = grow.iter().sum();
                        for ((x, gi), y) in brow.iter_mut().zip(grow).zip(yrow) {
                            *x += gi - y.exp() * gsum;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let c = node.cols;
                acc(*a, &mut |buf| {
                    for ((brow, grow), yrow) in buf
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(node.value.chunks(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((x, gi), y) in brow.iter_mut().zip(grow).zip(yrow) {
                            *x += y * (gi - dot);
                        }
                    }
                });
            }
            Op::Pick { src, index } => {
                let c = nodes[*src].cols;
                acc(*src, &mut |buf| {
                    for (r, &i) in index.iter().enumerate() {
                        buf[r * c + i] += g[r];
                    }
                });
            }
            Op::WeightedSum { src, weights } => acc(*src, &mut |buf| {
                for (x, w) in buf.iter_mut().zip(weights) {
                    *x += g[0] * w;
                }
            }),
            Op::Sum(a) => acc(*a, &mut |buf| {
                for x in buf.iter_mut() {
                    *x += g[0];
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Result of a reverse pass.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    bindings: Vec<(usize, u64, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` influenced it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of every leaf bound from `set` into its grad
    /// slots. Parameters of `set` that did not influence the loss receive a
    /// zero gradient.
    pub fn accumulate_into(&self, set: &mut ParamSet) {
        set.ensure_grads();
        let id = set.id();
        for &(node, sid, slot) in &self.bindings {
            if sid != id {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                let buf = set.tensor_at_mut(slot).grad_mut();
                add_into(buf, g);
            }
        }
    }
}
