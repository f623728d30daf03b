use std::collections::BTreeMap;
use std::sync::Arc;

use super::tensor::{matmul, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};
use crate::sigcore::twiddle;
use crate::xcorr::{ncc_kernel, SwmTable};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Precomputed rows of a real DFT restricted to a set of bins.
#[derive(Debug)]
pub struct DftBasis {
    n: usize,
    bins: Vec<usize>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl DftBasis {
    pub fn new(n: usize, bins: &[usize]) -> Arc<Self> {
        let mut cos = Vec::with_capacity(bins.len() * n);
        let mut sin = Vec::with_capacity(bins.len() * n);
        for &k in bins {
            for j in 0..n {
                let (c, s) = twiddle(k, j, n);
                cos.push(c);
                sin.push(s);
            }
        }
        Arc::new(Self {
            n,
            bins: bins.to_vec(),
            cos,
            sin,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    fn row(&self, f: usize, imag: bool) -> &[f64] {
        let src = if imag { &self.sin } else { &self.cos };
        &src[f * self.n..(f + 1) * self.n]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MulScalar(Var, Var),
    MatMul(Var, Var),
    AddColBias(Var, Var),
    Relu(Var),
    Log(Var),
    Sqrt(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Max(Var),
    Slice(Var, usize),
    Concat(Vec<Var>),
    Reshape(Var),
    Im2Col(Var, usize),
    Dft(Var, Arc<DftBasis>, bool),
    Ncc(Var, Var),
    Swm(Var, Var, Box<SwmTable>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. Values are never mutated after recording.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Builds a tape by running `f` and returns it with the output node.
pub fn record<F>(f: F) -> Result<(Tape, Var)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape)?;
    Ok((tape, out))
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input; gradients never flow into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// A named, differentiable input.
    pub fn param(&mut self, name: impl Into<String>, t: Tensor) -> Var {
        let v = self.push(Op::Leaf, t, true);
        self.params.insert(name.into(), v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{what}: shape mismatch"
        );
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(va.rows(), va.cols(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(op, t, rg)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = self.value(a);
        let t = Tensor::new(
            va.rows(),
            va.cols(),
            va.data().iter().map(|x| f(*x)).collect(),
        );
        let rg = self.rg(a);
        self.push(op, t, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "div");
        self.zip_with(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Offset(a), |x| x + c)
    }

    /// Tensor `a` times the `1 x 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        let va = self.value(a);
        let t = Tensor::new(
            va.rows(),
            va.cols(),
            va.data().iter().map(|x| x * sv).collect(),
        );
        let rg = self.rg(a) || self.rg(s);
        self.push(Op::MulScalar(a, s), t, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = matmul(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMul(a, b), t, rg)
    }

    /// Adds column vector `bias (m x 1)` to every column of `x (m x p)`.
    pub fn add_col_bias(&mut self, x: Var, bias: Var) -> Var {
        let vx = self.value(x);
        let vb = self.value(bias);
        assert_eq!(
            vb.shape(),
            (vx.rows(), 1),
            "add_col_bias: bias must be {}x1",
            vx.rows()
        );
        let p = vx.cols();
        let data = vx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + vb.data()[i / p])
            .collect();
        let t = Tensor::new(vx.rows(), p, data);
        let rg = self.rg(x) || self.rg(bias);
        self.push(Op::AddColBias(x, bias), t, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    /// `max(a, c)` elementwise against a constant floor.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::ClampMin(a, c), |x| x.max(c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Tensor::scalar(s), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Maximum entry. On exact ties the gradient is split equally.
    pub fn max(&mut self, a: Var) -> Var {
        let m = self
            .value(a)
            .data()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let rg = self.rg(a);
        self.push(Op::Max(a), Tensor::scalar(m), rg)
    }

    /// Contiguous range of the flattened tensor, as a column vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        assert!(start + len <= va.len(), "slice out of range");
        let t = Tensor::vector(va.data()[start..start + len].to_vec());
        let rg = self.rg(a);
        self.push(Op::Slice(a, start), t, rg)
    }

    /// Flattened concatenation, as a column vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rg |= self.rg(p);
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a).clone().reshaped(rows, cols);
        let rg = self.rg(a);
        self.push(Op::Reshape(a), t, rg)
    }

    /// Unfolds `x (C x L)` into `(C*K) x L` columns for a same-padded
    /// convolution with odd kernel width `K`.
    pub fn im2col(&mut self, x: Var, kernel: usize) -> Var {
        assert!(kernel % 2 == 1, "kernel width must be odd");
        let vx = self.value(x);
        let (c, l) = vx.shape();
        let pad = kernel / 2;
        let mut out = vec![0.0; c * kernel * l];
        for ch in 0..c {
            let row = vx.row(ch);
            for t in 0..kernel {
                let orow = &mut out[(ch * kernel + t) * l..(ch * kernel + t + 1) * l];
                for (i, o) in orow.iter_mut().enumerate() {
                    let src = i as i64 + t as i64 - pad as i64;
                    if src >= 0 && (src as usize) < l {
                        *o = row[src as usize];
                    }
                }
            }
        }
        let rg = self.rg(x);
        self.push(Op::Im2Col(x, kernel), Tensor::new(c * kernel, l, out), rg)
    }

    /// Real (`imag = false`) or imaginary part of the DFT of a vector at the
    /// basis bins. The imaginary part uses the `e^{-i...}` sign convention.
    pub fn dft(&mut self, x: Var, basis: &Arc<DftBasis>, imag: bool) -> Var {
        let vx = self.value(x);
        assert_eq!(vx.len(), basis.n, "dft: length mismatch");
        let sign = if imag { -1.0 } else { 1.0 };
        let out = (0..basis.bins.len())
            .map(|f| {
                sign * basis
                    .row(f, imag)
                    .iter()
                    .zip(vx.data())
                    .map(|(b, v)| b * v)
                    .sum::<f64>()
            })
            .collect();
        let rg = self.rg(x);
        self.push(Op::Dft(x, Arc::clone(basis), imag), Tensor::vector(out), rg)
    }

    /// Full-lag normalized running correlation of two equal-length vectors.
    pub fn ncc(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(Error::LengthMismatch {
                left: va.len(),
                right: vb.len(),
            });
        }
        let values = ncc_kernel(va.data(), vb.data()).ok_or(Error::ZeroNorm)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Ncc(a, b), Tensor::vector(values), rg))
    }

    /// Sliding-window-maximum correlation `m[tau]` of `short` along `long`.
    pub fn swm_ncc(&mut self, short: Var, long: Var) -> Result<Var> {
        let table = SwmTable::compute(self.value(short).data(), self.value(long).data())?;
        let values = Tensor::vector(table.m.clone());
        let rg = self.rg(short) || self.rg(long);
        Ok(self.push(Op::Swm(short, long, Box::new(table)), values, rg))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            let (r, c) = self.value(output).shape();
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar output, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut Tensor> {
        if !self.rg(v) {
            return None;
        }
        let shape = self.value(v).shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1)))
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, x) in gb.data_mut().iter_mut().zip(gd) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), y) in ga.data_mut().iter_mut().zip(gd).zip(vb) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, x), y) in gb.data_mut().iter_mut().zip(gd).zip(va) {
                        *o += x * y;
                    }
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), y) in ga.data_mut().iter_mut().zip(gd).zip(vb) {
                        *o += x / y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (i, o) in gb.data_mut().iter_mut().enumerate() {
                        *o -= gd[i] * va[i] / (vb[i] * vb[i]);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, x) in ga.data_mut().iter_mut().zip(gd) {
                        *o += c * x;
                    }
                }
            }
            Op::Offset(a) | Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.add_assign(g);
                }
            }
            Op::MulScalar(a, s) => {
                let sv = self.value(*s).item();
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, x) in ga.data_mut().iter_mut().zip(gd) {
                        *o += x * sv;
                    }
                }
                if let Some(gs) = self.acc(grads, *s) {
                    gs.data_mut()[0] += gd.iter().zip(va).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            Op::MatMul(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_acc(g, self.value(*b), ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_acc(self.value(*a), g, gb);
                }
            }
            Op::AddColBias(x, bias) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.add_assign(g);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    let p = g.cols();
                    for (r, o) in gb.data_mut().iter_mut().enumerate() {
                        *o += gd[r * p..(r + 1) * p].iter().sum::<f64>();
                    }
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), v) in ga.data_mut().iter_mut().zip(gd).zip(va) {
                        if *v > 0.0 {
                            *o += x;
                        }
                    }
                }
            }
            Op::Log(a) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), v) in ga.data_mut().iter_mut().zip(gd).zip(va) {
                        *o += x / v;
                    }
                }
            }
            Op::Sqrt(a) => {
                let out = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), y) in ga.data_mut().iter_mut().zip(gd).zip(out) {
                        *o += x / (2.0 * y);
                    }
                }
            }
            Op::ClampMin(a, c) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, x), v) in ga.data_mut().iter_mut().zip(gd).zip(va) {
                        if *v >= *c {
                            *o += x;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for o in ga.data_mut() {
                        *o += gd[0];
                    }
                }
            }
            Op::Max(a) => {
                let m = node.value.item();
                let va = self.value(*a).data();
                let ties = va.iter().filter(|v| **v == m).count();
                if let Some(ga) = self.acc(grads, *a) {
                    let share = gd[0] / ties as f64;
                    for (o, v) in ga.data_mut().iter_mut().zip(va) {
                        if *v == m {
                            *o += share;
                        }
                    }
                }
            }
            Op::Slice(a, start) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, x) in ga.data_mut()[*start..*start + gd.len()].iter_mut().zip(gd) {
                        *o += x;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if let Some(gp) = self.acc(grads, *p) {
                        for (o, x) in gp.data_mut().iter_mut().zip(&gd[off..off + n]) {
                            *o += x;
                        }
                    }
                    off += n;
                }
            }
            Op::Im2Col(x, kernel) => {
                let (c, l) = self.value(*x).shape();
                let pad = kernel / 2;
                if let Some(gx) = self.acc(grads, *x) {
                    let gxd = gx.data_mut();
                    for ch in 0..c {
                        for t in 0..*kernel {
                            let grow = &gd[(ch * kernel + t) * l..(ch * kernel + t + 1) * l];
                            for (i, v) in grow.iter().enumerate() {
                                let src = i as i64 + t as i64 - pad as i64;
                                if src >= 0 && (src as usize) < l {
                                    gxd[ch * l + src as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
            Op::Dft(x, basis, imag) => {
                let sign = if *imag { -1.0 } else { 1.0 };
                if let Some(gx) = self.acc(grads, *x) {
                    let gxd = gx.data_mut();
                    for (f, gf) in gd.iter().enumerate() {
                        if *gf == 0.0 {
                            continue;
                        }
                        for (o, b) in gxd.iter_mut().zip(basis.row(f, *imag)) {
                            *o += sign * gf * b;
                        }
                    }
                }
            }
            Op::Ncc(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let l = va.len() as i64;
                let na = va.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = vb.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut g_a = vec![0.0; va.len()];
                let mut g_b = vec![0.0; vb.len()];
                for (i, &gk) in gd.iter().enumerate() {
                    if gk == 0.0 {
                        continue;
                    }
                    let k = i as i64 - (l - 1);
                    let c = node.value.data()[i];
                    for n in 0.max(-k)..l.min(l - k) {
                        let (j, n) = ((n + k) as usize, n as usize);
                        g_a[j] += gk * vb[n] / (na * nb);
                        g_b[n] += gk * va[j] / (na * nb);
                    }
                    for j in 0..va.len() {
                        g_a[j] -= gk * c * va[j] / (na * na);
                        g_b[j] -= gk * c * vb[j] / (nb * nb);
                    }
                }
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, x) in ga.data_mut().iter_mut().zip(&g_a) {
                        *o += x;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, x) in gb.data_mut().iter_mut().zip(&g_b) {
                        *o += x;
                    }
                }
            }
            Op::Swm(short, long, table) => {
                let (vs, vl) = (self.value(*short).data(), self.value(*long).data());
                let mut g_s = vec![0.0; vs.len()];
                let mut g_l = vec![0.0; vl.len()];
                table.backward(vs, vl, gd, &mut g_s, &mut g_l);
                if let Some(gs) = self.acc(grads, *short) {
                    for (o, x) in gs.data_mut().iter_mut().zip(&g_s) {
                        *o += x;
                    }
                }
                if let Some(gl) = self.acc(grads, *long) {
                    for (o, x) in gl.data_mut().iter_mut().zip(&g_l) {
                        *o += x;
                    }
                }
            }
        }
    }
}

/// Gradients of one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    /// Gradient with respect to `v`, if any flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a named parameter (zeros are reported as `None`-free zeros).
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|v| self.get(*v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }
}
