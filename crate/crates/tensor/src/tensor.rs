use crate::{Result, TensorError};

/// Row-major dense array of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self { shape: vec![rows, cols], data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1, 1], data: vec![value] }
    }

    /// `[n, 1]` column vector.
    pub fn column(values: Vec<f64>) -> Self {
        Self { shape: vec![values.len(), 1], data: values }
    }

    /// `[1, n]` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Self { shape: vec![1, values.len()], data: values }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(TensorError::ShapeMismatch { op: "from_rows", lhs: vec![cols], rhs: vec![r.len()] });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => Err(TensorError::NotMatrix { op, shape: self.shape.clone() }),
        }
    }

    /// Row count; panics on tensors that are not rank 2.
    pub fn rows(&self) -> usize {
        self.dims2("rows").expect("rank-2 tensor").0
    }

    /// Column count; panics on tensors that are not rank 2.
    pub fn cols(&self) -> usize {
        self.dims2("cols").expect("rank-2 tensor").1
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::matrix(c, r, out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch { op: "matmul", lhs: self.shape.clone(), rhs: other.shape.clone() });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::matrix(m, n, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub(crate) fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch { op, lhs: self.shape.clone(), rhs: other.shape.clone() });
        }
        Ok(Self { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}
