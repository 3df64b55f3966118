//! Reverse-mode automatic differentiation over dynamically shaped arrays.

use std::sync::Arc;

use ndarray::{concatenate, s, Array1, ArrayD, ArrayView3, Axis, Ix1, Ix2, Ix3, IxDyn, Slice};

use crate::error::{Error, Result};
use crate::neural::lstm::{lstm_backward, lstm_forward, LstmCache};
use crate::signal::{StftPlan, ATANH_CLIP_EPS};

pub type Tensor = ArrayD<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    AtanhClipped(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize, usize),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    PermuteSeq(Var, Arc<Vec<Vec<usize>>>),
    Sum(Var),
    L1(Var, Var),
    ComplexMagnitude(Var, Var),
    Lstm {
        x: Var,
        w: Var,
        r: Var,
        b: Var,
        cache: Box<LstmCache>,
    },
    Istft {
        re: Var,
        im: Var,
        plan: Arc<StftPlan>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Offset inside `sqrt(re² + im² + δ)` keeping the magnitude differentiable at 0.
pub const MAGNITUDE_DELTA: f64 = 1e-12;

/// Records operations for one forward pass and replays them backwards.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where no gradient flows.
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(context: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::shape(context, a.shape(), b.shape())
}

fn to2(t: &Tensor) -> ndarray::ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("checked rank")
}

fn to3(t: &Tensor) -> ArrayView3<'_, f64> {
    t.view().into_dimensionality::<Ix3>().expect("checked rank")
}

fn expect_rank(context: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.ndim() == rank {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{context}: expected rank {rank}, got shape {:?}",
            t.shape()
        )))
    }
}

/// Scatters `src` into rows `perm` of the sequence axis: `out[b, perm[b][l]] = src[b, l]`.
fn scatter_seq(src: &Tensor, perms: &[Vec<usize>]) -> Tensor {
    let mut out = Tensor::zeros(src.raw_dim());
    for (b, perm) in perms.iter().enumerate() {
        for (l, &p) in perm.iter().enumerate() {
            out.slice_mut(s![b, p, ..]).assign(&src.slice(s![b, l, ..]));
        }
    }
    out
}

fn gather_seq(src: &Tensor, perms: &[Vec<usize>]) -> Tensor {
    let mut out = Tensor::zeros(src.raw_dim());
    for (b, perm) in perms.iter().enumerate() {
        for (l, &p) in perm.iter().enumerate() {
            out.slice_mut(s![b, l, ..]).assign(&src.slice(s![b, p, ..]));
        }
    }
    out
}

impl Graph {
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
        self.value(v).iter().next().copied().unwrap_or(f64::NAN)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        expect_rank("matmul", va, 2)?;
        expect_rank("matmul", vb, 2)?;
        if va.shape()[1] != vb.shape()[0] {
            return Err(shape_err("matmul", va, vb));
        }
        let out = to2(va).dot(&to2(vb)).into_dyn();
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn same_shape(&self, context: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(context, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the vector `b` to every row of the matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        expect_rank("add_row", va, 2)?;
        if vb.ndim() != 1 || vb.len() != va.shape()[1] {
            return Err(shape_err("add_row", va, vb));
        }
        let out = &to2(va) + &vb.view().into_dimensionality::<Ix1>().expect("rank 1");
        Ok(self.push(out.into_dyn(), Op::AddRow(a, b), &[a, b]))
    }

    /// `scale·a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).mapv(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// `atanh` after clipping to `±(1 − ε)`; zero gradient where clipped.
    pub fn atanh_clipped(&mut self, a: Var) -> Var {
        let lim = 1.0 - ATANH_CLIP_EPS;
        let out = self.value(a).mapv(|x| x.clamp(-lim, lim).atanh());
        self.push(out, Op::AtanhClipped(a), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let out = concatenate(Axis(axis), &views).map_err(|e| Error::InvalidArgument(format!("concat: {e}")))?;
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if axis >= va.ndim() || start > end || end > va.shape()[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} on axis {axis} of shape {:?}",
                va.shape()
            )));
        }
        let out = va.slice_axis(Axis(axis), Slice::from(start..end)).to_owned();
        Ok(self.push(out, Op::Slice(a, axis, start, end), &[a]))
    }

    /// Axis permutation; output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let va = self.value(a);
        let mut seen = vec![false; va.ndim()];
        if perm.len() != va.ndim() || perm.iter().any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("invalid permutation {perm:?}")));
        }
        let out = va.view().permuted_axes(IxDyn(perm)).as_standard_layout().into_owned();
        Ok(self.push(out, Op::Permute(a, perm.to_vec()), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if va.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidArgument(format!(
                "cannot reshape {:?} into {shape:?}",
                va.shape()
            )));
        }
        let out = va
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("element count checked");
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Reorders the sequence axis of a (B × L × D) tensor independently per
    /// sequence: `out[b, l] = a[b, perms[b][l]]`.
    pub fn permute_sequences(&mut self, a: Var, perms: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let va = self.value(a);
        expect_rank("permute_sequences", va, 3)?;
        let (b, l) = (va.shape()[0], va.shape()[1]);
        if perms.len() != b || perms.iter().any(|p| p.len() != l) {
            return Err(Error::Arrangement(format!(
                "{} permutations for {b} sequences of length {l}",
                perms.len()
            )));
        }
        let out = gather_seq(va, &perms);
        Ok(self.push(out, Op::PermuteSeq(a, perms), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// `Σ |a − b|`; the subgradient at zero is zero.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1", a, b)?;
        let total: f64 = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        Ok(self.push(ArrayD::from_elem(IxDyn(&[]), total), Op::L1(a, b), &[a, b]))
    }

    /// `sqrt(re² + im² + δ)`.
    pub fn complex_magnitude(&mut self, re: Var, im: Var) -> Result<Var> {
        self.same_shape("complex_magnitude", re, im)?;
        let mut out = self.value(re).clone();
        out.zip_mut_with(self.value(im), |r, &i| *r = (*r * *r + i * i + MAGNITUDE_DELTA).sqrt());
        Ok(self.push(out, Op::ComplexMagnitude(re, im), &[re, im]))
    }

    /// One LSTM direction over (B × L × D); `w` (4H × D), `r` (4H × H), `b` (4H).
    pub fn lstm(&mut self, x: Var, w: Var, r: Var, b: Var, reverse: bool) -> Result<Var> {
        let (vx, vw, vr, vb) = (self.value(x), self.value(w), self.value(r), self.value(b));
        expect_rank("lstm input", vx, 3)?;
        expect_rank("lstm weights", vw, 2)?;
        expect_rank("lstm recurrent weights", vr, 2)?;
        let h4 = vw.shape()[0];
        if h4 % 4 != 0
            || vw.shape()[1] != vx.shape()[2]
            || vr.shape() != [h4, h4 / 4]
            || vb.shape() != [h4]
        {
            return Err(Error::InvalidArgument(format!(
                "lstm shapes: input {:?}, W {:?}, R {:?}, b {:?}",
                vx.shape(),
                vw.shape(),
                vr.shape(),
                vb.shape()
            )));
        }
        let (out, cache) = lstm_forward(
            to3(vx),
            to2(vw),
            to2(vr),
            vb.view().into_dimensionality::<Ix1>().expect("rank 1"),
            reverse,
        );
        Ok(self.push(
            out.into_dyn(),
            Op::Lstm {
                x,
                w,
                r,
                b,
                cache: Box::new(cache),
            },
            &[x, w, r, b],
        ))
    }

    /// Overlap-add synthesis of a (F × T) complex spectrogram given as real
    /// and imaginary parts, trimmed to `len` samples.
    pub fn istft(&mut self, re: Var, im: Var, plan: Arc<StftPlan>, len: usize) -> Result<Var> {
        self.same_shape("istft", re, im)?;
        let (vr, vi) = (self.value(re), self.value(im));
        expect_rank("istft", vr, 2)?;
        if vr.shape()[0] != plan.params().num_bins() {
            return Err(Error::shape("istft bins", &[plan.params().num_bins()], &[vr.shape()[0]]));
        }
        let spec = ndarray::Zip::from(&to2(vr))
            .and(&to2(vi))
            .map_collect(|&a, &b| num_complex::Complex64::new(a, b));
        let out = Array1::from(plan.synthesize(spec.view(), len)).into_dyn();
        Ok(self.push(out, Op::Istft { re, im, plan }, &[re, im]))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).raw_dim()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients(grads))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let g2 = to2(g);
                if self.nodes[a.0].requires_grad {
                    let ga = g2.dot(&to2(self.value(*b)).t()).into_dyn();
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = to2(self.value(*a)).t().dot(&g2).into_dyn();
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, g * self.value(*b));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, to2(g).sum_axis(Axis(0)).into_dyn());
                }
            }
            Op::Affine(a, scale) => self.accumulate(grads, *a, g * *scale),
            Op::Tanh(a) => {
                let mut d = out.mapv(|y| 1.0 - y * y);
                d *= g;
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = out.mapv(|y| y * (1.0 - y));
                d *= g;
                self.accumulate(grads, *a, d);
            }
            Op::AtanhClipped(a) => {
                let lim = 1.0 - ATANH_CLIP_EPS;
                let mut d = self.value(*a).mapv(|x| if x.abs() > lim { 0.0 } else { 1.0 / (1.0 - x * x) });
                d *= g;
                self.accumulate(grads, *a, d);
            }
            Op::Concat(parts, axis) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(*p).shape()[*axis];
                    if self.nodes[p.0].requires_grad {
                        let part = g.slice_axis(Axis(*axis), Slice::from(start..start + n)).to_owned();
                        self.accumulate(grads, *p, part);
                    }
                    start += n;
                }
            }
            Op::Slice(a, axis, start, end) => {
                let mut full = Tensor::zeros(self.value(*a).raw_dim());
                full.slice_axis_mut(Axis(*axis), Slice::from(*start..*end)).assign(g);
                self.accumulate(grads, *a, full);
            }
            Op::Permute(a, perm) => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                let back = g.view().permuted_axes(IxDyn(&inverse)).as_standard_layout().into_owned();
                self.accumulate(grads, *a, back);
            }
            Op::Reshape(a) => {
                let back = g
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(self.value(*a).raw_dim())
                    .expect("element count preserved");
                self.accumulate(grads, *a, back);
            }
            Op::PermuteSeq(a, perms) => self.accumulate(grads, *a, scatter_seq(g, perms)),
            Op::Sum(a) => {
                let s = g.iter().next().copied().unwrap_or(0.0);
                self.accumulate(grads, *a, Tensor::from_elem(self.value(*a).raw_dim(), s));
            }
            Op::L1(a, b) => {
                let s = g.iter().next().copied().unwrap_or(0.0);
                let mut d = self.value(*a) - self.value(*b);
                d.mapv_inplace(|x| if x > 0.0 { s } else if x < 0.0 { -s } else { 0.0 });
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, -&d);
                }
                self.accumulate(grads, *a, d);
            }
            Op::ComplexMagnitude(re, im) => {
                let scaled = g / out;
                if self.nodes[re.0].requires_grad {
                    self.accumulate(grads, *re, &scaled * self.value(*re));
                }
                if self.nodes[im.0].requires_grad {
                    self.accumulate(grads, *im, &scaled * self.value(*im));
                }
            }
            Op::Lstm { x, w, r, b, cache } => {
                let d = lstm_backward(cache, to3(self.value(*x)), to2(self.value(*w)), to2(self.value(*r)), to3(g));
                self.accumulate(grads, *x, d.x.into_dyn());
                self.accumulate(grads, *w, d.w.into_dyn());
                self.accumulate(grads, *r, d.r.into_dyn());
                self.accumulate(grads, *b, d.b.into_dyn());
            }
            Op::Istft { re, im, plan } => {
                let frames = self.value(*re).shape()[1];
                let grad = g.as_slice().expect("1-d output");
                let (d_re, d_im) = plan.synthesize_adjoint(grad, frames);
                self.accumulate(grads, *re, d_re.into_dyn());
                self.accumulate(grads, *im, d_im.into_dyn());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::gradient_error;
    use crate::seed::rng_from_seed;
    use crate::signal::StftParams;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        Tensor::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
    }

    /// Weighted sum so every output element gets a distinct gradient.
    fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
        let w = g.constant(random(g.value(v).shape(), seed));
        let p = g.mul(v, w)?;
        Ok(g.sum(p))
    }

    fn check<F>(inputs: &[Tensor], build: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    {
        let err = gradient_error(inputs, 1e-5, |g, v| {
            let out = build(g, v)?;
            project(g, out, 99)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn tanh_slope_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(IxDyn(&[1])));
        let y = g.tanh(x);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap()[[0]], 1.0);
    }

    #[test]
    fn l1_gradient_signs() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_shape_vec(IxDyn(&[3]), vec![2.0, 1.0, 0.5]).unwrap());
        let y = g.constant(Tensor::from_shape_vec(IxDyn(&[3]), vec![1.0, 1.0, 0.7]).unwrap());
        let l = g.l1(x, y).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().as_slice().unwrap(), &[1.0, 0.0, -1.0]);
        assert!((g.scalar(l) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn elementwise_primitives() {
        let a = random(&[5, 4], 1);
        let b = random(&[5, 4], 2);
        check(&[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
        check(&[a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
        check(&[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
        check(&[a.clone()], |g, v| Ok(g.affine(v[0], -2.5, 0.3)));
        check(&[a.clone()], |g, v| Ok(g.tanh(v[0])));
        check(&[a.clone()], |g, v| Ok(g.sigmoid(v[0])));
        check(&[a.mapv(|x| 0.9 * x)], |g, v| Ok(g.atanh_clipped(v[0])));
        check(&[a.clone(), b.clone()], |g, v| g.complex_magnitude(v[0], v[1]));
    }

    #[test]
    fn structural_primitives() {
        let a = random(&[5, 4], 3);
        let b = random(&[4, 3], 4);
        let row = random(&[4], 5);
        check(&[a.clone(), b], |g, v| g.matmul(v[0], v[1]));
        check(&[a.clone(), row], |g, v| g.add_row(v[0], v[1]));
        check(&[a.clone(), random(&[5, 2], 6)], |g, v| g.concat(&[v[0], v[1]], 1));
        check(&[a.clone()], |g, v| g.slice(v[0], 1, 1, 3));
        check(&[a.clone()], |g, v| g.permute(v[0], &[1, 0]));
        check(&[a.clone()], |g, v| g.reshape(v[0], &[2, 10]));
        let perms = Arc::new(vec![vec![2, 0, 1, 3], vec![3, 2, 1, 0]]);
        check(&[random(&[2, 4, 3], 7)], move |g, v| g.permute_sequences(v[0], perms.clone()));
    }

    #[test]
    fn l1_loss_gradient() {
        // keep all residuals away from the kink
        let a = random(&[5, 4], 8);
        let b = a.mapv(|x| x + if x > 0.0 { -0.5 } else { 0.5 });
        let err = gradient_error(&[a, b], 1e-5, |g, v| g.l1(v[0], v[1])).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn lstm_gradient() {
        let x = random(&[2, 3, 4], 9);
        let w = random(&[8, 4], 10);
        let r = random(&[8, 2], 11);
        let b = random(&[8], 12);
        for reverse in [false, true] {
            check(&[x.clone(), w.clone(), r.clone(), b.clone()], |g, v| {
                g.lstm(v[0], v[1], v[2], v[3], reverse)
            });
        }
    }

    #[test]
    fn istft_gradient() {
        let plan = Arc::new(StftPlan::new(StftParams::new(8, 16_000)).unwrap());
        let re = random(&[5, 4], 13);
        let im = random(&[5, 4], 14);
        check(&[re, im], |g, v| g.istft(v[0], v[1], plan.clone(), 10));
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.param(random(&[2, 3], 1));
        let b = g.param(random(&[2, 2], 2));
        assert!(g.add(a, b).is_err());
        assert!(g.matmul(a, b).is_err());
        assert!(g.reshape(a, &[4]).is_err());
        assert!(g.permute(a, &[0, 0]).is_err());
        assert!(g.backward(a).is_err());
    }
}
