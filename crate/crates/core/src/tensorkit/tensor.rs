use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major tensor with an optional gradient buffer.
///
/// Values are held in `f64` so gradient checks run in double precision;
/// trained parameters are kept representable in `f32` (see
/// [`ParamSet::round_to_f32`]) which is what checkpoints store.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            data,
            grad: None,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// A 1 x n row.
    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self {
            dims: vec![1, n],
            data,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::row(vec![v])
    }

    /// Uniform in `[-b, b]` with `b = sqrt(6 / fan_in)`.
    pub fn kaiming_uniform<R: Rng>(dims: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| rng.random_range(-bound..=bound) as f32 as f64)
            .collect();
        Self {
            dims: dims.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension; 1 for rank-0/1 tensors.
    pub fn rows(&self) -> usize {
        match self.dims.len() {
            0 | 1 => 1,
            _ => self.dims[0],
        }
    }

    /// Product of all trailing dimensions.
    pub fn cols(&self) -> usize {
        match self.dims.len() {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[1..].iter().product(),
        }
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

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, g: Vec<f64>) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::Shape("gradient length differs from tensor".into()));
        }
        self.grad = Some(g);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

/// Named collection of tensors making up a model's parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a tensor and return its index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = value);
        }
    }

    /// Rebuild from named tensors, requiring the same names and shapes as `self`.
    pub fn load_matching(&mut self, named: Vec<(String, Tensor)>) -> Result<()> {
        for (name, t) in named {
            let i = self
                .index_of(&name)
                .ok_or_else(|| Error::format("checkpoint", format!("unexpected tensor {name}")))?;
            if self.tensors[i].dims != t.dims {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {name} has dims {:?}, expected {:?}", t.dims, self.tensors[i].dims),
                ));
            }
            self.tensors[i] = t;
        }
        Ok(())
    }
}

// Small dense kernels shared by the tape ops.

/// `a (n x k) * b (k x m)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a^T (k x n)^T * b (n x m)` where `a` is stored `n x k`.
pub(crate) fn matmul_at_b(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (n x m) * b^T` where `b` is stored `k x m`; result `n x k`.
pub(crate) fn matmul_a_bt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for j in 0..k {
            let brow = &b[j * m..(j + 1) * m];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}
