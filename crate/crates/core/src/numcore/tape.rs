//! Reverse-mode tape over dense tensor primitives.
//!
//! A [`Tape`] borrows the parameter store for the duration of one forward
//! pass. `backward` walks the recorded nodes in exact reverse order and
//! returns per-slot gradients, which the caller folds into the store once the
//! tape is dropped.

use matrixmultiply::dgemm;

use super::params::{ParamId, ParamStore};
use super::softmax::{log_sum_exp, softmax_into};
use super::{NumError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    SliceCols { src: NodeId, start: usize },
    Gather { table: NodeId, ids: Vec<usize> },
    SoftmaxXent { logits: NodeId, targets: Vec<usize>, probs: Vec<f64> },
    Sum(NodeId),
    Scale(NodeId, f64),
    SumOf(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    checked: bool,
    fault: Option<usize>,
}

/// Gradients for every slot reached from the loss, in slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub(crate) Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0.get(id.0).and_then(|g| g.as_deref())
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), checked: false, fault: None }
    }

    /// Checked tapes flag the first node producing a NaN or infinity.
    pub fn checked(params: &'p ParamStore) -> Self {
        Self { checked: true, ..Self::new(params) }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.params.value(*p),
            (_, Some(v)) => v,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).item()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        if self.checked && self.fault.is_none() && !value.is_finite() {
            self.fault = Some(self.nodes.len());
        }
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        NodeId(self.nodes.len() - 1)
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out).expect("matmul shape"))
    }

    /// `[m, n] + [n]` broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (_, n) = xv.dims2();
        let b = self.value(bias).data();
        assert_eq!(b.len(), n, "bias width");
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(o, bb)| *o += bb);
        }
        let shape = xv.shape().to_vec();
        self.push(Op::AddBias(x, bias), Tensor::new(shape, out).expect("shape"))
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shapes");
        let out: Vec<f64> = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = av.shape().to_vec();
        self.push(op, Tensor::new(shape, out).expect("shape"))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|&v| f(v)).collect();
        let shape = xv.shape().to_vec();
        self.push(op, Tensor::new(shape, out).expect("shape"))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&mut self, src: NodeId, start: usize, width: usize) -> NodeId {
        let sv = self.value(src);
        let (m, n) = sv.dims2();
        assert!(start + width <= n, "slice out of range");
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&sv.data()[r * n + start..r * n + start + width]);
        }
        self.push(Op::SliceCols { src, start }, Tensor::new(vec![m, width], out).expect("shape"))
    }

    /// Rows of `table` selected by `ids`: an embedding lookup.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let tv = self.value(table);
        let (rows, d) = tv.dims2();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            assert!(i < rows, "gather index {i} >= {rows}");
            out.extend_from_slice(tv.row(i));
        }
        self.push(Op::Gather { table, ids: ids.to_vec() }, Tensor::new(vec![ids.len(), d], out).expect("shape"))
    }

    /// Sum over rows of `-ln softmax(row)[target]`, as a scalar.
    pub fn softmax_xent(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, NumError> {
        let lv = self.value(logits);
        let (m, n) = lv.dims2();
        assert_eq!(m, targets.len(), "one target per row");
        let mut probs = vec![0.0; m * n];
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(NumError::TargetOutOfRange { target: t, n });
            }
            let row = lv.row(r);
            total += log_sum_exp(row) - row[t];
            softmax_into(row, &mut probs[r * n..(r + 1) * n]);
        }
        Ok(self.push(Op::SoftmaxXent { logits, targets: targets.to_vec(), probs }, Tensor::scalar(total)))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum_of(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "sum_of needs inputs");
        let mut acc = self.value(xs[0]).clone();
        for &x in &xs[1..] {
            let v = self.value(x);
            assert_eq!(v.shape(), acc.shape(), "sum_of shapes");
            acc.data_mut().iter_mut().zip(v.data()).for_each(|(a, b)| *a += b);
        }
        self.push(Op::SumOf(xs.to_vec()), acc)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumError> {
        if self.nodes.is_empty() {
            return Err(NumError::EmptyTape);
        }
        if let Some(i) = self.fault {
            return Err(NumError::NonFinite { index: i });
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(p) => accumulate(&mut out[p.0], &g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2();
                    let (_, n) = self.value(*b).dims2();
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, &g, false, self.value(*b).data(), true, &mut ga, 0.0);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a).data(), true, &g, false, &mut gb, 0.0);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::AddBias(x, bias) => {
                    let n = self.value(*bias).len();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                    accumulate(&mut grads[bias.0], &gb);
                    accumulate(&mut grads[x.0], &g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(NodeId(i)).data();
                    let gx: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Tanh(x) => {
                    let y = self.value(NodeId(i)).data();
                    let gx: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::Scale(x, f) => {
                    let gx: Vec<f64> = g.iter().map(|v| v * f).collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                Op::SliceCols { src, start } => {
                    let (m, n) = self.value(*src).dims2();
                    let width = g.len() / m;
                    let slot = grads[src.0].get_or_insert_with(|| vec![0.0; m * n]);
                    for r in 0..m {
                        let dst = &mut slot[r * n + start..r * n + start + width];
                        dst.iter_mut().zip(&g[r * width..(r + 1) * width]).for_each(|(d, v)| *d += v);
                    }
                }
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let d = tv.dims2().1;
                    let slot = grads[table.0].get_or_insert_with(|| vec![0.0; tv.len()]);
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut slot[id * d..(id + 1) * d];
                        dst.iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(o, v)| *o += v);
                    }
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    let n = probs.len() / targets.len();
                    let upstream = g[0];
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * upstream).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[r * n + t] -= upstream;
                    }
                    accumulate(&mut grads[logits.0], &gl);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    accumulate(&mut grads[x.0], &vec![g[0]; n]);
                }
                Op::SumOf(xs) => {
                    for x in xs {
                        accumulate(&mut grads[x.0], &g);
                    }
                }
            }
        }
        Ok(Gradients(out))
    }
}

impl ParamStore {
    /// Adds tape gradients into the slot accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (i, g) in grads.0.iter().enumerate() {
            if let Some(g) = g {
                self.grad_mut(ParamId(i)).iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = op(a) * op(b) + beta * c` for row-major operands, where `op`
/// optionally transposes. Shapes are those of the (possibly transposed)
/// operands: `op(a)` is `[m, k]`, `op(b)` is `[k, n]`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths match the declared shapes and strides above.
    unsafe {
        dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}
