//! Reverse-mode differentiation over 2-D row-major values.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order, so `backward` is a single reverse sweep.

use super::tensor::{matmul, matmul_a_bt, matmul_at_b, Tensor};
use super::ContextSpec;
use crate::error::{Error, Result};

/// Variance floor inside the statistics-pooling square root.
pub const STATS_POOL_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Dense { x: Var, w: Var, b: Option<Var> },
    Unfold { x: Var, offsets: Vec<isize> },
    Relu(Var),
    StatsPool { x: Var, mean: Vec<f64>, std: Vec<f64> },
    Add(Var, Var),
    AddRow { x: Var, row: Var },
    Scale(Var, f64),
    Embed { table: Var, ids: Vec<usize> },
    Pad { x: Var, before: usize },
    Repeat { x: Var, counts: Vec<usize> },
    Mse { x: Var, target: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar loss with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or zeros of length `len` when `v` did not influence the loss.
    pub fn wrt_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.wrt(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.backward_done = false;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Record every tensor of a parameter set as a leaf, in order.
    pub fn params(&mut self, ps: &super::ParamSet) -> Vec<Var> {
        ps.tensors().iter().map(|t| self.leaf(t.clone())).collect()
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// `x (n x a) * w (a x b) + bias (b)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, a) = self.dims2(x);
        let (wa, m) = self.dims2(w);
        if a != wa {
            return Err(Error::Shape(format!("dense: input width {a} vs weight rows {wa}")));
        }
        let mut out = matmul(self.value(x).data(), self.value(w).data(), n, a, m);
        if let Some(b) = b {
            let bias = self.value(b).data();
            if bias.len() != m {
                return Err(Error::Shape(format!("dense: bias {} vs output {m}", bias.len())));
            }
            for row in out.chunks_mut(m) {
                row.iter_mut().zip(bias).for_each(|(o, bv)| *o += bv);
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Dense { x, w, b }))
    }

    /// Gather `x[t + o]` for each offset `o` into one row per valid output frame.
    pub fn unfold(&mut self, x: Var, ctx: &ContextSpec) -> Result<Var> {
        let (t_in, d) = self.dims2(x);
        let span = ctx.span();
        if t_in <= span {
            return Err(Error::InvalidInput(format!(
                "context span {span} needs more than {span} frames, got {t_in}"
            )));
        }
        let t_out = t_in - span;
        let min = ctx.min_offset();
        let offsets = ctx.offsets().to_vec();
        let xd = self.value(x).data();
        let width = offsets.len() * d;
        let mut out = Vec::with_capacity(t_out * width);
        for t in 0..t_out {
            for &o in &offsets {
                let src = (t as isize - min + o) as usize;
                out.extend_from_slice(&xd[src * d..(src + 1) * d]);
            }
        }
        Ok(self.push(Tensor::matrix(t_out, width, out)?, Op::Unfold { x, offsets }))
    }

    /// Time-delay layer: affine map of the concatenated context frames,
    /// evaluated only where every context frame exists.
    pub fn tdnn(&mut self, x: Var, ctx: &ContextSpec, w: Var, b: Var) -> Result<Var> {
        let (_, d) = self.dims2(x);
        let (wr, _) = self.dims2(w);
        if wr != ctx.len() * d {
            return Err(Error::Shape(format!(
                "tdnn: weight has {wr} rows, context {} x input {d} needs {}",
                ctx.len(),
                ctx.len() * d
            )));
        }
        let u = self.unfold(x, ctx)?;
        self.dense(u, w, Some(b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v.max(0.0)).collect();
        let out = Tensor::new(t.dims().to_vec(), data).expect("same shape");
        self.push(out, Op::Relu(x))
    }

    /// `[mean over rows || sqrt(population variance + eps)]` as a 1 x 2D row.
    pub fn stats_pool(&mut self, x: Var) -> Result<Var> {
        let (t, d) = self.dims2(x);
        if t == 0 {
            return Err(Error::InvalidInput("stats pooling over zero frames".into()));
        }
        let xd = self.value(x).data();
        let mut mean = vec![0.0; d];
        for row in xd.chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        let mut var = vec![0.0; d];
        for row in xd.chunks(d) {
            for j in 0..d {
                let c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|v| (v / t as f64 + STATS_POOL_EPS).sqrt())
            .collect();
        let mut out = mean.clone();
        out.extend_from_slice(&std);
        Ok(self.push(Tensor::row(out), Op::StatsPool { x, mean, std }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims() != tb.dims() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", ta.dims(), tb.dims())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.dims().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Add a 1 x d row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, d) = self.dims2(x);
        let r = self.value(row).data();
        if r.len() != d {
            return Err(Error::Shape(format!("add_row: row {} vs width {d}", r.len())));
        }
        let mut data = self.value(x).data().to_vec();
        for chunk in data.chunks_mut(d) {
            chunk.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        Ok(self.push(Tensor::matrix(n, d, data)?, Op::AddRow { x, row }))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * s).collect();
        let out = Tensor::new(t.dims().to_vec(), data).expect("same shape");
        self.push(out, Op::Scale(x, s))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (k, e) = self.dims2(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= k) {
            return Err(Error::InvalidInput(format!("id {bad} outside table of {k} rows")));
        }
        let td = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(&td[i * e..(i + 1) * e]);
        }
        let out = Tensor::matrix(ids.len(), e, data)?;
        Ok(self.push(out, Op::Embed { table, ids: ids.to_vec() }))
    }

    /// Zero rows before and after `x`.
    pub fn pad_rows(&mut self, x: Var, before: usize, after: usize) -> Result<Var> {
        let (n, d) = self.dims2(x);
        let mut data = vec![0.0; before * d];
        data.extend_from_slice(self.value(x).data());
        data.resize((before + n + after) * d, 0.0);
        let out = Tensor::matrix(before + n + after, d, data)?;
        Ok(self.push(out, Op::Pad { x, before }))
    }

    /// Repeat row `i` of `x` `counts[i]` times.
    pub fn repeat_rows(&mut self, x: Var, counts: &[usize]) -> Result<Var> {
        let (n, d) = self.dims2(x);
        if counts.len() != n {
            return Err(Error::Shape(format!("repeat_rows: {} counts for {n} rows", counts.len())));
        }
        let xd = self.value(x).data();
        let total: usize = counts.iter().sum();
        let mut data = Vec::with_capacity(total * d);
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                data.extend_from_slice(&xd[i * d..(i + 1) * d]);
            }
        }
        let out = Tensor::matrix(total, d, data)?;
        Ok(self.push(out, Op::Repeat { x, counts: counts.to_vec() }))
    }

    /// Mean squared difference between `x` and a constant target.
    pub fn mse(&mut self, x: Var, target: &[f64]) -> Result<Var> {
        let xd = self.value(x).data();
        if xd.len() != target.len() || xd.is_empty() {
            return Err(Error::Shape(format!("mse: {} values vs {} targets", xd.len(), target.len())));
        }
        let v = xd.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / xd.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Mse { x, target: target.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(x))
    }

    /// Reverse sweep from a scalar `loss`. May run once per recorded forward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g.to_vec()),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Dense { x, w, b } => {
                    let (n, a) = self.dims2(*x);
                    let m = node.value.cols();
                    let gx = matmul_a_bt(&gy, self.value(*w).data(), n, m, a);
                    let gw = matmul_at_b(self.value(*x).data(), &gy, n, a, m);
                    acc(&mut grads, *x, &gx);
                    acc(&mut grads, *w, &gw);
                    if let Some(b) = b {
                        let mut gb = vec![0.0; m];
                        for row in gy.chunks(m) {
                            gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                        }
                        acc(&mut grads, *b, &gb);
                    }
                }
                Op::Unfold { x, offsets } => {
                    let (t_in, d) = self.dims2(*x);
                    let min = *offsets.first().expect("non-empty context");
                    let t_out = node.value.rows();
                    let mut gx = vec![0.0; t_in * d];
                    let width = offsets.len() * d;
                    for t in 0..t_out {
                        for (j, &o) in offsets.iter().enumerate() {
                            let src = (t as isize - min + o) as usize;
                            let g = &gy[t * width + j * d..t * width + (j + 1) * d];
                            gx[src * d..(src + 1) * d]
                                .iter_mut()
                                .zip(g)
                                .for_each(|(a, b)| *a += b);
                        }
                    }
                    acc(&mut grads, *x, &gx);
                }
                Op::Relu(x) => {
                    let gx: Vec<f64> = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&gy)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::StatsPool { x, mean, std } => {
                    let (t, d) = self.dims2(*x);
                    let xd = self.value(*x).data();
                    let tf = t as f64;
                    let mut gx = vec![0.0; t * d];
                    for r in 0..t {
                        for j in 0..d {
                            gx[r * d + j] =
                                gy[j] / tf + gy[d + j] * (xd[r * d + j] - mean[j]) / (tf * std[j]);
                        }
                    }
                    acc(&mut grads, *x, &gx);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &gy);
                    acc(&mut grads, *b, &gy);
                }
                Op::AddRow { x, row } => {
                    let d = node.value.cols();
                    let mut gr = vec![0.0; d];
                    for chunk in gy.chunks(d) {
                        gr.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
                    }
                    acc(&mut grads, *x, &gy);
                    acc(&mut grads, *row, &gr);
                }
                Op::Scale(x, s) => {
                    let gx: Vec<f64> = gy.iter().map(|g| g * s).collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::Embed { table, ids } => {
                    let (k, e) = self.dims2(*table);
                    let mut gt = vec![0.0; k * e];
                    for (r, &id) in ids.iter().enumerate() {
                        gt[id * e..(id + 1) * e]
                            .iter_mut()
                            .zip(&gy[r * e..(r + 1) * e])
                            .for_each(|(a, b)| *a += b);
                    }
                    acc(&mut grads, *table, &gt);
                }
                Op::Pad { x, before } => {
                    let (n, d) = self.dims2(*x);
                    acc(&mut grads, *x, &gy[before * d..(before + n) * d]);
                }
                Op::Repeat { x, counts } => {
                    let (n, d) = self.dims2(*x);
                    let mut gx = vec![0.0; n * d];
                    let mut r = 0;
                    for (i, &c) in counts.iter().enumerate() {
                        for _ in 0..c {
                            gx[i * d..(i + 1) * d]
                                .iter_mut()
                                .zip(&gy[r * d..(r + 1) * d])
                                .for_each(|(a, b)| *a += b);
                            r += 1;
                        }
                    }
                    acc(&mut grads, *x, &gx);
                }
                Op::Mse { x, target } => {
                    let xd = self.value(*x).data();
                    let n = xd.len() as f64;
                    let gx: Vec<f64> = xd
                        .iter()
                        .zip(target)
                        .map(|(a, b)| gy[0] * 2.0 * (a - b) / n)
                        .collect();
                    acc(&mut grads, *x, &gx);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut grads, *x, &vec![gy[0]; n]);
                }
            }
            grads[i] = Some(gy);
        }
        self.backward_done = true;
        Ok(Gradients { grads })
    }
}
