//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an arena of nodes. Forward methods (`matmul`, `softmax`,
//! ...) append a node holding the result and a record of the operation;
//! [`Graph::backward`] replays those records in reverse creation order, which
//! is a reverse topological order because an operation can only reference
//! nodes created before it. Nodes whose inputs do not require gradients are
//! stored as plain values and skipped during the backward sweep.
//!
//! The element type is generic so the same code runs at `f32` (model) and
//! `f64` (test oracles). All reductions use a fixed sequential order, so a
//! given graph is bit-for-bit deterministic.

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait Scalar:
    Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a finite f64 constant into the graph's element type.
pub fn cast<T: Scalar>(x: f64) -> T {
    <T as FromPrimitive>::from_f64(x).expect("finite f64 converts")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T> {
    Leaf,
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    /// a · bᵀ where `a` is m×k and `b` is n×k.
    MatmulNt {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    /// Row-broadcast: adds a length-n bias to every row of an m×n matrix.
    AddRow {
        a: NodeId,
        bias: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        a: NodeId,
        c: T,
    },
    Relu {
        a: NodeId,
    },
    Softmax {
        a: NodeId,
        axis: usize,
    },
    LayerNorm {
        a: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: T,
    },
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        pad: usize,
        count: usize,
    },
    SliceCols {
        a: NodeId,
        start: usize,
        width: usize,
    },
    ConcatCols {
        parts: Vec<NodeId>,
    },
    Sum {
        a: NodeId,
    },
    Mean {
        a: NodeId,
    },
}

struct Node<T> {
    data: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Vec<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last `backward` target with respect to `id`.
    pub fn grad(&self, id: NodeId) -> Result<&[T]> {
        if !self.backward_done {
            return Err(Error::Backward("gradients requested before backward"));
        }
        if !self.nodes[id.0].requires_grad {
            return Err(Error::Backward("node does not require gradients"));
        }
        Ok(&self.grads[id.0])
    }

    pub fn leaf(&mut self, data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> NodeId {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "leaf shape/data mismatch");
        self.push(data, shape, Op::Leaf, requires_grad)
    }

    /// Copies an f32 tensor in as a leaf, converting to the graph's element type.
    pub fn leaf_tensor(&mut self, t: &Tensor) -> NodeId {
        let data = t.data.iter().map(|&x| cast::<T>(x as f64)).collect();
        self.leaf(data, t.shape.clone(), t.requires_grad)
    }

    /// Reads a node back out as an f32 tensor.
    pub fn to_tensor(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.data.iter().map(|&x| x.to_f32().unwrap()).collect(),
            requires_grad: false,
        }
    }

    fn push(&mut self, data: Vec<T>, shape: Vec<usize>, op: Op<T>, requires_grad: bool) -> NodeId {
        // An op record is only kept when it can ever be replayed.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            data,
            shape,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn dims2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        match self.nodes[id.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::ShapeMismatch {
                op,
                lhs: other.to_vec(),
                rhs: vec![],
            }),
        }
    }

    /// Treats rank-1 as a single row, rank-2 as rows × cols.
    fn as_rows(&self, id: NodeId) -> (usize, usize) {
        match self.nodes[id.0].shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => panic!("expected rank 1 or 2, got {:?}", s),
        }
    }

    // ── forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        mm_nn(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, vec![m, n], Op::Matmul { a, b }, rg))
    }

    /// a · bᵀ: `a` is m×k, `b` is n×k, result m×n. Used for attention scores.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        mm_nt(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, vec![m, n], Op::MatmulNt { a, b }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, shape, Op::Add { a, b }, rg))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "add_row")?;
        if self.shape(bias) != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let mut out = self.value(a).to_vec();
        let b = self.value(bias);
        for r in 0..m {
            for j in 0..n {
                out[r * n + j] = out[r * n + j] + b[j];
            }
        }
        let rg = self.requires_grad(a) || self.requires_grad(bias);
        Ok(self.push(out, vec![m, n], Op::AddRow { a, bias }, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, shape, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let out: Vec<T> = self.value(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(out, shape, Op::Scale { a, c }, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out: Vec<T> = self
            .value(a)
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(out, shape, Op::Relu { a }, rg)
    }

    /// Numerically stable softmax along `axis` of a rank-1 or rank-2 node.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let rank = self.shape(a).len();
        if axis >= rank || rank > 2 {
            return Err(Error::InvalidAxis { axis, rank });
        }
        let (rows, cols) = self.as_rows(a);
        let x = self.value(a);
        let mut out = vec![T::zero(); x.len()];
        if rank == 1 || axis == 1 {
            for r in 0..rows {
                softmax_row(
                    &x[r * cols..(r + 1) * cols],
                    &mut out[r * cols..(r + 1) * cols],
                );
            }
        } else {
            // axis 0 of a matrix: softmax down each column
            for j in 0..cols {
                let col: Vec<T> = (0..rows).map(|r| x[r * cols + j]).collect();
                let mut o = vec![T::zero(); rows];
                softmax_row(&col, &mut o);
                for r in 0..rows {
                    out[r * cols + j] = o[r];
                }
            }
        }
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(out, shape, Op::Softmax { a, axis }, rg))
    }

    /// Per-row normalization to zero mean / unit population variance,
    /// followed by the affine transform `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, a: NodeId, gain: NodeId, bias: NodeId, eps: T) -> Result<NodeId> {
        let (rows, cols) = self.as_rows(a);
        if self.shape(gain) != [cols] || self.shape(bias) != [cols] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(gain).to_vec(),
            });
        }
        let x = self.value(a);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let (mean, inv_std) = row_stats(row, eps);
            for j in 0..cols {
                out[r * cols + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(gain) || self.requires_grad(bias);
        Ok(self.push(out, shape, Op::LayerNorm { a, gain, bias, eps }, rg))
    }

    /// Gathers rows of `table` (shape V×d) at `ids`, producing len(ids)×d.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let (v, d) = self.dims2(table, "embedding")?;
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::TokenOutOfRange {
                    id: id as u32,
                    vocab: v,
                });
            }
            out.extend_from_slice(&t[id * d..(id + 1) * d]);
        }
        let rg = self.requires_grad(table);
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        Ok(self.push(out, vec![ids.len(), d], Op::Embedding { table, ids }, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, averaged over non-pad positions.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32], pad: u32) -> Result<NodeId> {
        let (rows, vocab) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![rows, vocab],
                rhs: vec![targets.len()],
            });
        }
        for &t in targets {
            if t as usize >= vocab {
                return Err(Error::TokenOutOfRange { id: t, vocab });
            }
        }
        let x = self.value(logits);
        let mut sum = T::zero();
        let mut count = 0usize;
        for (r, &t) in targets.iter().enumerate() {
            if t == pad {
                continue;
            }
            let row = &x[r * vocab..(r + 1) * vocab];
            sum = sum + (log_sum_exp(row) - row[t as usize]);
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let loss = sum / cast::<T>(count as f64);
        let rg = self.requires_grad(logits);
        let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
        Ok(self.push(
            vec![loss],
            vec![1],
            Op::CrossEntropy {
                logits,
                targets,
                pad: pad as usize,
                count,
            },
            rg,
        ))
    }

    /// Copies columns [start, start+width) of an m×n matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "slice_cols")?;
        if start + width > n {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: vec![m, n],
                rhs: vec![start, width],
            });
        }
        let x = self.value(a);
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&x[r * n + start..r * n + start + width]);
        }
        let rg = self.requires_grad(a);
        Ok(self.push(out, vec![m, width], Op::SliceCols { a, start, width }, rg))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let (m, _) = self.dims2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for &p in parts {
            let (mp, np) = self.dims2(p, "concat_cols")?;
            if mp != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push(np);
            total += np;
        }
        let mut out = vec![T::zero(); m * total];
        let mut offset = 0usize;
        for (i, &p) in parts.iter().enumerate() {
            let x = self.value(p);
            let w = widths[i];
            for r in 0..m {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&x[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(
            out,
            vec![m, total],
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).iter().fold(T::zero(), |acc, &x| acc + x);
        let rg = self.requires_grad(a);
        self.push(vec![s], vec![1], Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len();
        let s = self.value(a).iter().fold(T::zero(), |acc, &x| acc + x);
        let rg = self.requires_grad(a);
        self.push(vec![s / cast::<T>(n as f64)], vec![1], Op::Mean { a }, rg)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Propagates adjoints from a scalar `loss` node back to every leaf that
    /// requires gradients. May be called once per graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.backward_seeded(loss, T::one())
    }

    /// `backward` with a caller-supplied seed adjoint, used when a graph's
    /// loss contributes a known fraction of a larger objective.
    pub fn backward_seeded(&mut self, loss: NodeId, seed: T) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward("backward called twice on one graph"));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::Backward("backward target must be a scalar"));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::Backward(
                "backward target does not require gradients",
            ));
        }
        self.backward_done = true;
        self.grads = self
            .nodes
            .iter()
            .map(|n| {
                if n.requires_grad {
                    vec![T::zero(); n.data.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        self.grads[loss.0][0] = seed;

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            // Take the grad buffer and op record out while accumulating;
            // an op never references its own output node.
            let gout = std::mem::take(&mut self.grads[i]);
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.accumulate(i, &op, &gout);
            self.nodes[i].op = op;
            self.grads[i] = gout;
        }
        Ok(())
    }

    fn accumulate(&mut self, node: usize, op: &Op<T>, gout: &[T]) {
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.as_rows(a);
                let n = self.as_rows(b).1;
                if self.requires_grad(a) {
                    let bdat = &self.nodes[b.0].data;
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    mm_nt(gout, bdat, &mut da, m, n, k);
                    self.grads[a.0] = da;
                }
                if self.requires_grad(b) {
                    let adat = &self.nodes[a.0].data;
                    let mut db = std::mem::take(&mut self.grads[b.0]);
                    mm_tn(adat, gout, &mut db, k, m, n);
                    self.grads[b.0] = db;
                }
            }
            Op::MatmulNt { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.as_rows(a);
                let n = self.as_rows(b).0;
                if self.requires_grad(a) {
                    let bdat = &self.nodes[b.0].data;
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    mm_nn(gout, bdat, &mut da, m, n, k);
                    self.grads[a.0] = da;
                }
                if self.requires_grad(b) {
                    let adat = &self.nodes[a.0].data;
                    let mut db = std::mem::take(&mut self.grads[b.0]);
                    mm_tn(gout, adat, &mut db, n, m, k);
                    self.grads[b.0] = db;
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                for &src in &[a, b] {
                    if self.requires_grad(src) {
                        for (g, &go) in self.grads[src.0].iter_mut().zip(gout) {
                            *g = *g + go;
                        }
                    }
                }
            }
            Op::AddRow { a, bias } => {
                let (a, bias) = (*a, *bias);
                let (m, n) = self.as_rows(a);
                if self.requires_grad(a) {
                    for (g, &go) in self.grads[a.0].iter_mut().zip(gout) {
                        *g = *g + go;
                    }
                }
                if self.requires_grad(bias) {
                    for r in 0..m {
                        for j in 0..n {
                            self.grads[bias.0][j] = self.grads[bias.0][j] + gout[r * n + j];
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                if self.requires_grad(a) {
                    let bdat = std::mem::take(&mut self.nodes[b.0].data);
                    for ((g, &go), &bv) in self.grads[a.0].iter_mut().zip(gout).zip(&bdat) {
                        *g = *g + go * bv;
                    }
                    self.nodes[b.0].data = bdat;
                }
                if self.requires_grad(b) {
                    let adat = std::mem::take(&mut self.nodes[a.0].data);
                    for ((g, &go), &av) in self.grads[b.0].iter_mut().zip(gout).zip(&adat) {
                        *g = *g + go * av;
                    }
                    self.nodes[a.0].data = adat;
                }
            }
            Op::Scale { a, c } => {
                let (a, c) = (*a, *c);
                if self.requires_grad(a) {
                    for (g, &go) in self.grads[a.0].iter_mut().zip(gout) {
                        *g = *g + go * c;
                    }
                }
            }
            Op::Relu { a } => {
                let a = *a;
                if self.requires_grad(a) {
                    let adat = std::mem::take(&mut self.nodes[a.0].data);
                    for ((g, &go), &av) in self.grads[a.0].iter_mut().zip(gout).zip(&adat) {
                        if av > T::zero() {
                            *g = *g + go;
                        }
                    }
                    self.nodes[a.0].data = adat;
                }
            }
            Op::Softmax { a, axis } => {
                let (a, axis) = (*a, *axis);
                if !self.requires_grad(a) {
                    return;
                }
                let y = std::mem::take(&mut self.nodes[node].data);
                let (rows, cols) = self.as_rows(a);
                let rank = self.nodes[a.0].shape.len();
                let mut da = std::mem::take(&mut self.grads[a.0]);
                if rank == 1 || axis == 1 {
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &gout[r * cols..(r + 1) * cols];
                        let dot = yr
                            .iter()
                            .zip(gr)
                            .fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                        for j in 0..cols {
                            da[r * cols + j] = da[r * cols + j] + yr[j] * (gr[j] - dot);
                        }
                    }
                } else {
                    for j in 0..cols {
                        let mut dot = T::zero();
                        for r in 0..rows {
                            dot = dot + y[r * cols + j] * gout[r * cols + j];
                        }
                        for r in 0..rows {
                            let idx = r * cols + j;
                            da[idx] = da[idx] + y[idx] * (gout[idx] - dot);
                        }
                    }
                }
                self.grads[a.0] = da;
                self.nodes[node].data = y;
            }
            Op::LayerNorm { a, gain, bias, eps } => {
                let (a, gain, bias, eps) = (*a, *gain, *bias, *eps);
                let (rows, cols) = self.as_rows(a);
                let inv_n = cast::<T>(1.0 / cols as f64);
                let x = std::mem::take(&mut self.nodes[a.0].data);
                let g = std::mem::take(&mut self.nodes[gain.0].data);
                for r in 0..rows {
                    let row = &x[r * cols..(r + 1) * cols];
                    let gr = &gout[r * cols..(r + 1) * cols];
                    let (mean, inv_std) = row_stats(row, eps);
                    // dxhat, plus the two row means needed for dx
                    let mut mean_dxhat = T::zero();
                    let mut mean_dxhat_xhat = T::zero();
                    for j in 0..cols {
                        let xhat = (row[j] - mean) * inv_std;
                        let dxhat = gr[j] * g[j];
                        mean_dxhat = mean_dxhat + dxhat;
                        mean_dxhat_xhat = mean_dxhat_xhat + dxhat * xhat;
                    }
                    mean_dxhat = mean_dxhat * inv_n;
                    mean_dxhat_xhat = mean_dxhat_xhat * inv_n;
                    if self.requires_grad(a) {
                        for j in 0..cols {
                            let xhat = (row[j] - mean) * inv_std;
                            let dxhat = gr[j] * g[j];
                            let dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std;
                            let idx = r * cols + j;
                            self.grads[a.0][idx] = self.grads[a.0][idx] + dx;
                        }
                    }
                    if self.requires_grad(gain) {
                        for j in 0..cols {
                            let xhat = (row[j] - mean) * inv_std;
                            self.grads[gain.0][j] = self.grads[gain.0][j] + gr[j] * xhat;
                        }
                    }
                    if self.requires_grad(bias) {
                        for j in 0..cols {
                            self.grads[bias.0][j] = self.grads[bias.0][j] + gr[j];
                        }
                    }
                }
                self.nodes[a.0].data = x;
                self.nodes[gain.0].data = g;
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                if self.requires_grad(table) {
                    let d = self.as_rows(table).1;
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            self.grads[table.0][id * d + j] =
                                self.grads[table.0][id * d + j] + gout[r * d + j];
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                pad,
                count,
            } => {
                let (logits, pad, count) = (*logits, *pad, *count);
                if !self.requires_grad(logits) {
                    return;
                }
                let (_, vocab) = self.as_rows(logits);
                let scale = gout[0] / cast::<T>(count as f64);
                let x = std::mem::take(&mut self.nodes[logits.0].data);
                for (r, &t) in targets.iter().enumerate() {
                    if t == pad {
                        continue;
                    }
                    let row = &x[r * vocab..(r + 1) * vocab];
                    let mut probs = vec![T::zero(); vocab];
                    softmax_row(row, &mut probs);
                    for j in 0..vocab {
                        let delta = if j == t { T::one() } else { T::zero() };
                        let idx = r * vocab + j;
                        self.grads[logits.0][idx] =
                            self.grads[logits.0][idx] + scale * (probs[j] - delta);
                    }
                }
                self.nodes[logits.0].data = x;
            }
            Op::SliceCols { a, start, width } => {
                let (a, start, width) = (*a, *start, *width);
                if self.requires_grad(a) {
                    let (m, n) = self.as_rows(a);
                    for r in 0..m {
                        for j in 0..width {
                            self.grads[a.0][r * n + start + j] =
                                self.grads[a.0][r * n + start + j] + gout[r * width + j];
                        }
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let total = self.nodes[node].shape[1];
                let m = self.nodes[node].shape[0];
                let mut offset = 0usize;
                for &p in parts {
                    let w = self.as_rows(p).1;
                    if self.requires_grad(p) {
                        for r in 0..m {
                            for j in 0..w {
                                self.grads[p.0][r * w + j] =
                                    self.grads[p.0][r * w + j] + gout[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Sum { a } => {
                let a = *a;
                if self.requires_grad(a) {
                    let go = gout[0];
                    for g in self.grads[a.0].iter_mut() {
                        *g = *g + go;
                    }
                }
            }
            Op::Mean { a } => {
                let a = *a;
                if self.requires_grad(a) {
                    let n = self.nodes[a.0].data.len();
                    let go = gout[0] / cast::<T>(n as f64);
                    for g in self.grads[a.0].iter_mut() {
                        *g = *g + go;
                    }
                }
            }
        }
    }
}

/// Central finite-difference gradients of a scalar-valued graph with respect
/// to every input tensor. Uses forward evaluation only, so it is independent
/// of the backward pass it is used to check.
///
/// `build` receives a fresh graph plus one leaf per (shape, data) pair and
/// must return a scalar node.
pub fn finite_difference_gradient<T, F>(
    shapes: &[Vec<usize>],
    data: &[Vec<T>],
    build: &F,
    h: T,
) -> Vec<Vec<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> NodeId,
{
    let eval = |bumped: &[Vec<T>]| -> T {
        let mut g = Graph::<T>::new();
        let ids: Vec<NodeId> = shapes
            .iter()
            .zip(bumped)
            .map(|(s, d)| g.leaf(d.clone(), s.clone(), false))
            .collect();
        let loss = build(&mut g, &ids);
        g.value(loss)[0]
    };
    let two_h = h + h;
    shapes
        .iter()
        .enumerate()
        .map(|(ti, _)| {
            (0..data[ti].len())
                .map(|k| {
                    let mut plus = data.to_vec();
                    plus[ti][k] = plus[ti][k] + h;
                    let mut minus = data.to_vec();
                    minus[ti][k] = minus[ti][k] - h;
                    (eval(&plus) - eval(&minus)) / two_h
                })
                .collect()
        })
        .collect()
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, floor): the usual gradient-check metric.
pub fn vector_rel_error<T: Scalar>(a: &[T], b: &[T], floor: f64) -> f64 {
    let mut diff = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(floor)
}

// ── kernels ─────────────────────────────────────────────────────────────

/// out[m×n] += a[m×k] · b[k×n]
fn mm_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + aip * brow[j];
            }
        }
    }
}

/// out[m×n] += a[m×k] · b[n×k]ᵀ
fn mm_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for p in 0..k {
                s = s + arow[p] * brow[p];
            }
            out[i * n + j] = out[i * n + j] + s;
        }
    }
}

/// out[m×n] += a[k×m]ᵀ · b[k×n]
fn mm_tn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + api * brow[j];
            }
        }
    }
}

fn softmax_row<T: Scalar>(x: &[T], out: &mut [T]) {
    let mut mx = x[0];
    for &v in &x[1..] {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - mx).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

fn log_sum_exp<T: Scalar>(x: &[T]) -> T {
    let mut mx = x[0];
    for &v in &x[1..] {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = T::zero();
    for &v in x {
        sum = sum + (v - mx).exp();
    }
    mx + sum.ln()
}

fn row_stats<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = cast::<T>(row.len() as f64);
    let mut mean = T::zero();
    for &v in row {
        mean = mean + v;
    }
    mean = mean / n;
    let mut var = T::zero();
    for &v in row {
        let d = v - mean;
        var = var + d * d;
    }
    var = var / n;
    (mean, T::one() / (var + eps).sqrt())
}
