use std::borrow::Cow;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{NnError, Params, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv {
        x: usize,
        w: usize,
        b: Option<usize>,
        kernel: usize,
        dilation: usize,
    },
    Gelu(usize),
    Concat(Vec<usize>),
    Add(usize, usize),
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Max(usize, usize),
}

struct Node<'p> {
    op: Op,
    value: Cow<'p, Tensor>,
}

/// Records a forward computation so that parameter gradients can be obtained
/// by reverse accumulation.
pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p Params {
        self.params
    }

    fn push(&mut self, op: Op, value: Cow<'p, Tensor>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, x: Tensor) -> Var {
        self.push(Op::Input, Cow::Owned(x))
    }

    pub fn param(&mut self, name: &str) -> Result<Var, NnError> {
        let id = self.params.id(name)?;
        Ok(self.push(Op::Param(id), Cow::Borrowed(self.params.tensor(id))))
    }

    /// Dilated same-length convolution. `w` has shape `(c_out, kernel·c_in)`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        kernel: usize,
        dilation: usize,
    ) -> Result<Var, NnError> {
        let y = dilated_conv1d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            kernel,
            dilation,
        )?;
        Ok(self.push(
            Op::Conv {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                kernel,
                dilation,
            },
            Cow::Owned(y),
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(gelu);
        self.push(Op::Gelu(x.0), Cow::Owned(y))
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(NnError::Shape("concat of tensors with different lengths".into()));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for t in 0..rows {
            let row = out.row_mut(t);
            let mut off = 0;
            for p in parts {
                let src = self.nodes[p.0].value.row(t);
                row[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(
            Op::Concat(parts.iter().map(|p| p.0).collect()),
            Cow::Owned(out),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::Shape(format!(
                "add {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(Op::Add(a.0, b.0), Cow::Owned(out)))
    }

    /// `y = x·Wᵀ + b` with `W` of shape `(out, in)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let y = linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
            Cow::Owned(y),
        ))
    }

    /// Element-wise maximum; the gradient flows to the first argument on ties.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NnError::Shape("max of differently shaped tensors".into()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| if x >= y { *x } else { *y })
            .collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(Op::Max(a.0, b.0), Cow::Owned(out)))
    }

    /// Reverse pass seeded with `d loss / d out`. Returns one gradient per
    /// parameter, in [`Params`] order; parameters not on the tape get zeros.
    pub fn backward(&self, out: Var, seed: &Tensor) -> Vec<Tensor> {
        let mut param_grads = self.params.zeros_like();
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed.clone());

        fn accumulate(grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
            match &mut grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => param_grads[*p].add_assign(&g),
                Op::Conv {
                    x,
                    w,
                    b,
                    kernel,
                    dilation,
                } => {
                    let (dx, dw, db) = conv1d_backward(
                        &self.nodes[*x].value,
                        &self.nodes[*w].value,
                        &g,
                        *kernel,
                        *dilation,
                    );
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    if let Some(b) = b {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Gelu(x) => {
                    let xv = &self.nodes[*x].value;
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gy)| gy * gelu_grad(v))
                        .collect();
                    let dx = Tensor::from_vec(xv.rows(), xv.cols(), data).expect("same shape");
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let width = self.nodes[p].value.cols();
                        let mut dp = Tensor::zeros(g.rows(), width);
                        for t in 0..g.rows() {
                            dp.row_mut(t).copy_from_slice(&g.row(t)[off..off + width]);
                        }
                        off += width;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let (dx, dw, db) = linear_backward(xv, wv, &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    if let Some(b) = b {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Max(a, b) => {
                    let va = &self.nodes[*a].value;
                    let vb = &self.nodes[*b].value;
                    let mut da = Tensor::zeros(g.rows(), g.cols());
                    let mut db = Tensor::zeros(g.rows(), g.cols());
                    for (k, &gy) in g.data().iter().enumerate() {
                        if va.data()[k] >= vb.data()[k] {
                            da.data_mut()[k] = gy;
                        } else {
                            db.data_mut()[k] = gy;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
            }
        }
        param_grads
    }
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Tap `j` (0-based) reads input frame `t + (j − (k−1)/2)·dilation`.
fn tap_offset(j: usize, kernel: usize, dilation: usize) -> isize {
    (j as isize - ((kernel as isize - 1) / 2)) * dilation as isize
}

/// Same-length dilated 1-D convolution over time with zero padding.
///
/// `x` is `(T, c_in)`, `w` is `(c_out, kernel·c_in)` laid out tap-major, and
/// the optional bias is `(1, c_out)`.
pub fn dilated_conv1d(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    kernel: usize,
    dilation: usize,
) -> Result<Tensor, NnError> {
    if dilation == 0 || kernel == 0 {
        return Err(NnError::Config("kernel and dilation must be at least 1".into()));
    }
    let (frames, c_in) = x.shape();
    let c_out = w.rows();
    if w.cols() != kernel * c_in {
        return Err(NnError::Shape(format!(
            "conv weight {:?} does not match kernel {kernel} × {c_in} input channels",
            w.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != (1, c_out) {
            return Err(NnError::Shape(format!("conv bias {:?}", b.shape())));
        }
    }
    let mut y = Tensor::zeros(frames, c_out);
    for t in 0..frames {
        let out = y.row_mut(t);
        if let Some(b) = bias {
            out.copy_from_slice(b.row(0));
        }
        for j in 0..kernel {
            let s = t as isize + tap_offset(j, kernel, dilation);
            if s < 0 || s >= frames as isize {
                continue;
            }
            let xs = x.row(s as usize);
            for (o, acc) in out.iter_mut().enumerate() {
                let wj = &w.row(o)[j * c_in..(j + 1) * c_in];
                *acc += dot(wj, xs);
            }
        }
    }
    Ok(y)
}

fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    kernel: usize,
    dilation: usize,
) -> (Tensor, Tensor, Tensor) {
    let (frames, c_in) = x.shape();
    let c_out = w.rows();
    let mut dx = Tensor::zeros(frames, c_in);
    let mut dw = Tensor::zeros(c_out, kernel * c_in);
    let mut db = Tensor::zeros(1, c_out);
    for t in 0..frames {
        let g = dy.row(t);
        for (acc, gv) in db.row_mut(0).iter_mut().zip(g) {
            *acc += gv;
        }
        for j in 0..kernel {
            let s = t as isize + tap_offset(j, kernel, dilation);
            if s < 0 || s >= frames as isize {
                continue;
            }
            let s = s as usize;
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let wj = &w.row(o)[j * c_in..(j + 1) * c_in];
                for (d, wv) in dx.row_mut(s).iter_mut().zip(wj) {
                    *d += go * wv;
                }
                let xs = x.row(s);
                let dwj = &mut dw.row_mut(o)[j * c_in..(j + 1) * c_in];
                for (d, xv) in dwj.iter_mut().zip(xs) {
                    *d += go * xv;
                }
            }
        }
    }
    (dx, dw, db)
}

fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, NnError> {
    if w.cols() != x.cols() {
        return Err(NnError::Shape(format!(
            "linear weight {:?} applied to width {}",
            w.shape(),
            x.cols()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != (1, w.rows()) {
            return Err(NnError::Shape(format!("linear bias {:?}", b.shape())));
        }
    }
    let mut y = Tensor::zeros(x.rows(), w.rows());
    for t in 0..x.rows() {
        let xs = x.row(t);
        let out = y.row_mut(t);
        for (o, acc) in out.iter_mut().enumerate() {
            *acc = dot(w.row(o), xs) + bias.map_or(0.0, |b| b.get(0, o));
        }
    }
    Ok(y)
}

fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let mut dx = Tensor::zeros(x.rows(), x.cols());
    let mut dw = Tensor::zeros(w.rows(), w.cols());
    let mut db = Tensor::zeros(1, w.rows());
    for t in 0..x.rows() {
        let xs = x.row(t);
        for (o, &go) in dy.row(t).iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            db.data_mut()[o] += go;
            for (d, wv) in dx.row_mut(t).iter_mut().zip(w.row(o)) {
                *d += go * wv;
            }
            for (d, xv) in dw.row_mut(o).iter_mut().zip(xs) {
                *d += go * xv;
            }
        }
    }
    (dx, dw, db)
}

// Four independent partial sums so the loop vectorises; the summation
// order is fixed, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}
