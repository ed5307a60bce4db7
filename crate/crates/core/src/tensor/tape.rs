use super::kernels::{axpy, dot, matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    StackRows(Vec<Var>),
    Conv1dSame {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    PairwiseAdd(Var, Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records executed operations in topological order so that
/// [`Tape::backward`] can replay them in reverse.
///
/// Gradients accumulate additively wherever a value fans out. A tape is
/// single-threaded; build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Broadcast of the right operand in `add`/`sub`/`mul`.
#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

fn bcast(op: &'static str, a: &Tensor, b: &Tensor, allow_row: bool) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if b.len() == 1 {
        Ok(Bcast::Scalar)
    } else if allow_row && b.len() == a.cols() && b.rows() == 1 {
        Ok(Bcast::Row)
    } else {
        Err(Error::Shape {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        })
    }
}

fn matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::Shape {
            op,
            detail: format!("expected a matrix, got {s:?}"),
        }),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `a[m,k] . b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix("matmul", self.value(a))?;
        let (k2, n) = matrix("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("[{m},{k}] x [{k2},{n}]"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `a[m,k] . b[n,k]^T`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix("matmul_t", self.value(a))?;
        let (n, k2) = matrix("matmul_t", self.value(b))?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul_t",
                detail: format!("[{m},{k}] x [{n},{k2}]^T"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_nt_acc(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        self.push("matmul_t", Tensor::new(vec![m, n], out)?, Op::MatMulT(a, b))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        allow_row: bool,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mode = bcast(name, ta, tb, allow_row)?;
        let cols = ta.cols();
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match mode {
                    Bcast::Same => bd[i],
                    Bcast::Row => bd[i % cols],
                    Bcast::Scalar => bd[0],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, value, op)
    }

    /// Elementwise sum; `b` may also be a row vector or a scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, true, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, true, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; `b` may be a scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, false, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, name: &str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let value = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())?;
        self.push(name, value, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    /// Softmax along `axis` of a matrix (1 = within each row).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        matrix("softmax", self.value(a))?;
        match axis {
            1 => self.softmax_rows(a),
            0 => {
                let t = self.transpose(a)?;
                let s = self.softmax_rows(t)?;
                self.transpose(s)
            }
            _ => Err(Error::Shape {
                op: "softmax",
                detail: format!("axis {axis} out of range for a matrix"),
            }),
        }
    }

    fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut data = Vec::with_capacity(ta.len());
        for r in 0..ta.rows() {
            data.extend(super::softmax(ta.row(r)));
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("softmax", value, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.push("transpose", value, Op::Transpose(a))
    }

    /// Joins two matrices with equal row counts along the last axis.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = matrix("concat", self.value(a))?;
        let (rb, cb) = matrix("concat", self.value(b))?;
        if ra != rb {
            return Err(Error::Shape {
                op: "concat",
                detail: format!("{ra} rows vs {rb} rows"),
            });
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        self.push("concat", Tensor::new(vec![ra, ca + cb], data)?, Op::ConcatCols(a, b))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = matrix("slice_rows", self.value(a))?;
        if len == 0 || start + len > r {
            return Err(Error::Shape {
                op: "slice_rows",
                detail: format!("rows {start}..{} of {r}", start + len),
            });
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        self.push("slice_rows", Tensor::new(vec![len, c], data)?, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = matrix("slice_cols", self.value(a))?;
        if len == 0 || start + len > c {
            return Err(Error::Shape {
                op: "slice_cols",
                detail: format!("cols {start}..{} of {c}", start + len),
            });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        self.push("slice_cols", Tensor::new(vec![r, len], data)?, Op::SliceCols(a, start))
    }

    /// Stacks equally sized row vectors into a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(first) = rows.first() else {
            return Err(Error::Shape {
                op: "stack_rows",
                detail: "nothing to stack".into(),
            });
        };
        let n = self.value(*first).len();
        let mut data = Vec::with_capacity(n * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.len() != n {
                return Err(Error::Shape {
                    op: "stack_rows",
                    detail: format!("row of {} values, expected {n}", t.len()),
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows.len(), n], data)?;
        self.push("stack_rows", value, Op::StackRows(rows.to_vec()))
    }

    /// Width-3 convolution over time with one frame of zero padding on each side.
    ///
    /// `input` is `[T, C]` (frames as rows), `kernel` is `[N, C, 3]` and `bias`
    /// is `[N]`. Tap `k` of a kernel meets frame `t + k - 1`, so the output is
    /// `[T, N]` with the same frame count as the input.
    pub fn conv1d_same(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (t_len, c) = matrix("conv1d", self.value(input))?;
        let ks = self.value(kernel).shape().to_vec();
        let (n, kc, width) = match ks[..] {
            [n, kc, w] => (n, kc, w),
            _ => {
                return Err(Error::Shape {
                    op: "conv1d",
                    detail: format!("kernel shape {ks:?}, expected [N, C, 3]"),
                })
            }
        };
        if width != 3 || kc != c || self.value(bias).len() != n {
            return Err(Error::Shape {
                op: "conv1d",
                detail: format!(
                    "input [{t_len},{c}], kernel {ks:?}, bias {:?}",
                    self.value(bias).shape()
                ),
            });
        }
        let taps = tap_major(self.value(kernel).data(), n, c);
        let x = self.value(input).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; t_len * n];
        for t in 0..t_len {
            let row = &mut out[t * n..(t + 1) * n];
            row.copy_from_slice(b);
            for (k, tap) in taps.iter().enumerate() {
                let Some(s) = (t + k).checked_sub(1).filter(|&s| s < t_len) else {
                    continue;
                };
                let xs = &x[s * c..(s + 1) * c];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += dot(xs, &tap[j * c..(j + 1) * c]);
                }
            }
        }
        let value = Tensor::new(vec![t_len, n], out)?;
        self.push(
            "conv1d",
            value,
            Op::Conv1dSame {
                input,
                kernel,
                bias,
            },
        )
    }

    /// All pairwise row sums: `out[t * T + u] = p[t] + q[u]` for `p, q` of shape `[T, A]`.
    pub fn pairwise_add(&mut self, p: Var, q: Var) -> Result<Var> {
        let (tp, a) = matrix("pairwise_add", self.value(p))?;
        let (tq, a2) = matrix("pairwise_add", self.value(q))?;
        if a != a2 || tp != tq {
            return Err(Error::Shape {
                op: "pairwise_add",
                detail: format!("[{tp},{a}] vs [{tq},{a2}]"),
            });
        }
        let (pd, qd) = (self.value(p).data(), self.value(q).data());
        let mut out = Vec::with_capacity(tp * tq * a);
        for t in 0..tp {
            let pr = &pd[t * a..(t + 1) * a];
            for u in 0..tq {
                out.extend(pr.iter().zip(&qd[u * a..(u + 1) * a]).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::new(vec![tp * tq, a], out)?;
        self.push("pairwise_add", value, Op::PairwiseAdd(p, q))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = mean_of(self.value(a).data());
        self.push("mean", Tensor::scalar(m), Op::Mean(a))
    }

    /// Reverse sweep from a scalar. Gradients are retained for leaves only;
    /// a leaf the loss does not depend on gets no entry, which
    /// [`Gradients::wrt`] reports as zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        op: format!("gradient of node {i}"),
                    });
                }
            }
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(&self.nodes[a.0].value);
                let n = node.value.cols();
                // dA += dC . B^T ; dB += A^T . dC
                matmul_nt_acc(g, val(*b), m, n, k, acc(grads, *a, len(*a)));
                matmul_tn_acc(val(*a), g, m, k, n, acc(grads, *b, len(*b)));
            }
            Op::MatMulT(a, b) => {
                let (m, k) = dims2(&self.nodes[a.0].value);
                let n = node.value.cols();
                // C = A . B^T: dA += dC . B ; dB += dC^T . A
                matmul_acc(g, val(*b), m, n, k, acc(grads, *a, len(*a)));
                matmul_tn_acc(g, val(*a), m, n, k, acc(grads, *b, len(*b)));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Add(..)) { 1.0 } else { -1.0 };
                axpy(1.0, g, acc(grads, *a, len(*a)));
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let mode = bcast("", ta, tb, true).expect("checked in forward");
                let gb = acc(grads, *b, tb.len());
                reduce_broadcast(mode, ta.cols(), g, sign, gb);
            }
            Op::Mul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let mode = bcast("", ta, tb, false).expect("checked in forward");
                {
                    let ga = acc(grads, *a, ta.len());
                    match mode {
                        Bcast::Scalar => axpy(tb.data()[0], g, ga),
                        _ => {
                            for ((o, gi), y) in ga.iter_mut().zip(g).zip(tb.data()) {
                                *o += gi * y;
                            }
                        }
                    }
                }
                let gb = acc(grads, *b, tb.len());
                match mode {
                    Bcast::Scalar => gb[0] += dot(g, ta.data()),
                    _ => {
                        for ((o, gi), x) in gb.iter_mut().zip(g).zip(ta.data()) {
                            *o += gi * x;
                        }
                    }
                }
            }
            Op::Scale(a, c) => axpy(*c, g, acc(grads, *a, len(*a))),
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, len(*a));
                for ((o, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                    *o += gi * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, *a, len(*a));
                for ((o, gi), y) in ga.iter_mut().zip(g).zip(node.value.data()) {
                    *o += gi * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                let ga = acc(grads, *a, x.len());
                for ((o, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                    if *xi > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::Square(a) => {
                let x = val(*a);
                let ga = acc(grads, *a, x.len());
                for ((o, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                    *o += 2.0 * xi * gi;
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let c = y.cols();
                let ga = acc(grads, *a, y.len());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g[r * c..(r + 1) * c];
                    let inner = dot(yr, gr);
                    for j in 0..c {
                        ga[r * c + j] += yr[j] * (gr[j] - inner);
                    }
                }
            }
            Op::Transpose(a) => {
                // node is [c, r]; a is [r, c]
                let (r, c) = dims2(&self.nodes[a.0].value);
                let ga = acc(grads, *a, r * c);
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[a.0].value.cols();
                let cb = self.nodes[b.0].value.cols();
                let rows = node.value.rows();
                {
                    let ga = acc(grads, *a, rows * ca);
                    for r in 0..rows {
                        axpy(1.0, &g[r * (ca + cb)..r * (ca + cb) + ca], &mut ga[r * ca..(r + 1) * ca]);
                    }
                }
                let gb = acc(grads, *b, rows * cb);
                for r in 0..rows {
                    axpy(
                        1.0,
                        &g[r * (ca + cb) + ca..(r + 1) * (ca + cb)],
                        &mut gb[r * cb..(r + 1) * cb],
                    );
                }
            }
            Op::SliceRows(a, start) => {
                let c = node.value.cols();
                let ga = acc(grads, *a, len(*a));
                axpy(1.0, g, &mut ga[start * c..start * c + g.len()]);
            }
            Op::SliceCols(a, start) => {
                let c = self.nodes[a.0].value.cols();
                let w = node.value.cols();
                let ga = acc(grads, *a, len(*a));
                for r in 0..node.value.rows() {
                    axpy(1.0, &g[r * w..(r + 1) * w], &mut ga[r * c + start..r * c + start + w]);
                }
            }
            Op::StackRows(rows) => {
                let n = node.value.cols();
                for (i, r) in rows.iter().enumerate() {
                    axpy(1.0, &g[i * n..(i + 1) * n], acc(grads, *r, n));
                }
            }
            Op::Conv1dSame {
                input,
                kernel,
                bias,
            } => {
                let (t_len, c) = dims2(&self.nodes[input.0].value);
                let n = node.value.cols();
                let x = val(*input);
                let taps = tap_major(val(*kernel), n, c);
                {
                    let gbias = acc(grads, *bias, n);
                    for t in 0..t_len {
                        axpy(1.0, &g[t * n..(t + 1) * n], gbias);
                    }
                }
                let mut gtaps = vec![vec![0.0; n * c]; 3];
                {
                    let gx = acc(grads, *input, t_len * c);
                    for t in 0..t_len {
                        let gt = &g[t * n..(t + 1) * n];
                        for k in 0..3 {
                            let Some(s) = (t + k).checked_sub(1).filter(|&s| s < t_len) else {
                                continue;
                            };
                            let xs = &x[s * c..(s + 1) * c];
                            let gxs = &mut gx[s * c..(s + 1) * c];
                            for (j, &gj) in gt.iter().enumerate() {
                                if gj != 0.0 {
                                    axpy(gj, &taps[k][j * c..(j + 1) * c], gxs);
                                    axpy(gj, xs, &mut gtaps[k][j * c..(j + 1) * c]);
                                }
                            }
                        }
                    }
                }
                let gk = acc(grads, *kernel, n * c * 3);
                for (k, gtap) in gtaps.iter().enumerate() {
                    for j in 0..n {
                        for ci in 0..c {
                            gk[(j * c + ci) * 3 + k] += gtap[j * c + ci];
                        }
                    }
                }
            }
            Op::PairwiseAdd(p, q) => {
                let (t_len, a) = dims2(&self.nodes[p.0].value);
                {
                    let gp = acc(grads, *p, t_len * a);
                    for t in 0..t_len {
                        for u in 0..t_len {
                            let src = &g[(t * t_len + u) * a..(t * t_len + u + 1) * a];
                            axpy(1.0, src, &mut gp[t * a..(t + 1) * a]);
                        }
                    }
                }
                let gq = acc(grads, *q, t_len * a);
                for t in 0..t_len {
                    for u in 0..t_len {
                        let src = &g[(t * t_len + u) * a..(t * t_len + u + 1) * a];
                        axpy(1.0, src, &mut gq[u * a..(u + 1) * a]);
                    }
                }
            }
            Op::Reshape(a) => axpy(1.0, g, acc(grads, *a, len(*a))),
            Op::Sum(a) => {
                let ga = acc(grads, *a, len(*a));
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Mean(a) => {
                let n = len(*a);
                let ga = acc(grads, *a, n);
                let share = g[0] / n as f64;
                ga.iter_mut().for_each(|o| *o += share);
            }
        }
    }
}

/// Mean with the same summation order everywhere it is computed.
pub fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn reduce_broadcast(mode: Bcast, cols: usize, g: &[f64], sign: f64, gb: &mut [f64]) {
    match mode {
        Bcast::Same => axpy(sign, g, gb),
        Bcast::Row => {
            for chunk in g.chunks(cols) {
                axpy(sign, chunk, gb);
            }
        }
        Bcast::Scalar => gb[0] += sign * g.iter().sum::<f64>(),
    }
}

/// `[N, C, 3]` kernel reorganised as three `[N, C]` tap matrices.
fn tap_major(kernel: &[f64], n: usize, c: usize) -> [Vec<f64>; 3] {
    let mut taps = [vec![0.0; n * c], vec![0.0; n * c], vec![0.0; n * c]];
    for j in 0..n {
        for ci in 0..c {
            for (k, tap) in taps.iter_mut().enumerate() {
                tap[j * c + ci] = kernel[(j * c + ci) * 3 + k];
            }
        }
    }
    taps
}

/// Per-leaf gradients from one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient with respect to `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches its value shape"),
            None => Tensor::zeros(&shape),
        }
    }
}
