use serde::{Deserialize, Serialize};

/// Dense row-major tensor of rank at most 2. Vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "tensor data does not match shape {rows}x{cols}"
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(n, 1, data)
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.data.len(),
            1,
            "item() on a {}x{} tensor",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    pub fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(
            rows * cols,
            self.data.len(),
            "cannot reshape {}x{} to {rows}x{cols}",
            self.rows,
            self.cols
        );
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a (m x n) * b (n x p)`.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        a.cols,
        b.rows,
        "matmul shape mismatch {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let (m, n, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * p..(k + 1) * p];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Tensor::new(m, p, out)
}

/// `g (m x p) * b^T` accumulated into `out (m x n)`.
pub(crate) fn matmul_bt_acc(g: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, p, n) = (g.rows, g.cols, b.rows);
    for i in 0..m {
        let grow = &g.data[i * p..(i + 1) * p];
        for k in 0..n {
            let brow = &b.data[k * p..(k + 1) * p];
            let s: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out.data[i * n + k] += s;
        }
    }
}

/// `a^T * g` accumulated into `out (n x p)` for `a (m x n)`, `g (m x p)`.
pub(crate) fn matmul_at_acc(a: &Tensor, g: &Tensor, out: &mut Tensor) {
    let (m, n, p) = (a.rows, a.cols, g.cols);
    for i in 0..m {
        let grow = &g.data[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let orow = &mut out.data[k * p..(k + 1) * p];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += aik * gv;
            }
        }
    }
}
