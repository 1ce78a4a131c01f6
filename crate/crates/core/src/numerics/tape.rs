//! Reverse-mode differentiation over a linear record of tensor operations.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fft;
use super::param::{ParamId, Parameter};
use super::real::{gemm, Real};
use super::tensor::{
    broadcast_index, normal_cdf, normal_pdf, normalize_row, permute_into, Tensor,
};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Constant,
    Input,
    Param,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    BatchMatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { a: Var, bias: Var },
    Broadcast { a: Var, index: Vec<usize> },
    Scale { a: Var, factor: F },
    Reshape(Var),
    Permute { a: Var, perm: Vec<usize> },
    Softmax(Var),
    LayerNorm { a: Var, gamma: Var, beta: Var, xhat: Vec<F>, rstd: Vec<F> },
    Gelu(Var),
    Rdft { a: Var, len: usize },
    Irdft { a: Var, len: usize },
    LowPass { a: Var, bins: usize, keep: usize },
    Dropout { a: Var, mask: Vec<F> },
    Sum(Var),
    Mean(Var),
}

struct Node<F: Real> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated.
///
/// A tape is single-threaded and owned by one forward/backward pass;
/// independent tapes may run on different threads.
pub struct Tape<F: Real = f32> {
    nodes: Vec<Node<F>>,
    params: Vec<(ParamId, Var)>,
    scores: u64,
    rng: Option<ChaCha8Rng>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    /// Evaluation tape: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            scores: 0,
            rng: None,
        }
    }

    /// Training tape: dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of attention scores (query-key pairs) evaluated so far.
    pub fn scores(&self) -> u64 {
        self.scores
    }

    pub fn count_scores(&mut self, n: u64) {
        self.scores += n;
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A differentiable input that is not a parameter.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Loads a parameter; repeated loads of the same parameter share a node.
    pub fn param(&mut self, p: &Parameter<F>) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(id, _)| *id == p.id()) {
            return v;
        }
        let v = self.push(p.value.clone(), Op::Param, true);
        self.params.push((p.id(), v));
        v
    }

    /// `[.., k] · [k, n] → [.., n]`, leading axes of `a` flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() != 2 || sa.last() != Some(&sb[0]) {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (k, n) = (sb[0], sb[1]);
        let m = self.value(a).len() / k;
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![F::zero(); m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, m, k, n }, needs))
    }

    /// Batched product `[B, m, k] · [B, k, n]`, or `[B, m, k] · [B, n, k]ᵀ`
    /// when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::ShapeMismatch {
            op: "bmm",
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let kb = if trans_b { sb[2] } else { sb[1] };
        if kb != k {
            return Err(bad());
        }
        let mut out = vec![F::zero(); batch * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for bi in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &ad[bi * m * k..(bi + 1) * m * k],
                    false,
                    &bd[bi * k * n..(bi + 1) * k * n],
                    trans_b,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    false,
                );
            }
        }
        let needs = self.needs(a) || self.needs(b);
        let op = Op::BatchMatMul { a, b, batch, m, k, n, trans_b };
        Ok(self.push(Tensor::new([batch, m, n], out)?, op, needs))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: name,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        self.value(a).zip_map(self.value(b), f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul(a, b), needs))
    }

    /// Adds a `[n]` vector to every row of a `[.., n]` tensor.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let n = self.value(a).last_dim();
        if self.shape(bias) != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: self.shape(a).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let mut v = self.value(a).clone();
        let bd = self.value(bias).data();
        for row in v.data_mut().chunks_mut(n) {
            for (x, &b) in row.iter_mut().zip(bd) {
                *x = *x + b;
            }
        }
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(v, Op::AddBias { a, bias }, needs))
    }

    /// Expands axes of extent 1 to `shape` (ranks must agree).
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let src = self.shape(a).to_vec();
        if src.len() != shape.len() || src.iter().zip(shape).any(|(&s, &o)| s != o && s != 1) {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                left: src,
                right: shape.to_vec(),
            });
        }
        let index = broadcast_index(&src, shape);
        let data = {
            let d = self.value(a).data();
            index.iter().map(|&i| d[i]).collect()
        };
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape.to_vec(), data)?, Op::Broadcast { a, index }, needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let factor = F::cast(factor);
        let v = self.value(a).scale(factor);
        let needs = self.needs(a);
        self.push(v, Op::Scale { a, factor }, needs)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape.to_vec())?;
        let needs = self.needs(a);
        Ok(self.push(v, Op::Reshape(a), needs))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let v = self.value(a).permute(perm)?;
        let needs = self.needs(a);
        Ok(self.push(v, Op::Permute { a, perm: perm.to_vec() }, needs))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = super::tensor::softmax(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Softmax(a), needs)
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var> {
        let n = self.value(a).last_dim();
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: self.shape(a).to_vec(),
                right: self.shape(gamma).to_vec(),
            });
        }
        let mut xhat = self.value(a).clone();
        let mut rstd = Vec::with_capacity(xhat.len() / n);
        for row in xhat.data_mut().chunks_mut(n) {
            rstd.push(normalize_row(row).1);
        }
        let mut out = xhat.clone();
        {
            let (g, b) = (self.value(gamma).data(), self.value(beta).data());
            for row in out.data_mut().chunks_mut(n) {
                for ((x, &g), &b) in row.iter_mut().zip(g).zip(b) {
                    *x = *x * g + b;
                }
            }
        }
        let needs = self.needs(a) || self.needs(gamma) || self.needs(beta);
        let op = Op::LayerNorm {
            a,
            gamma,
            beta,
            xhat: xhat.into_data(),
            rstd,
        };
        Ok(self.push(out, op, needs))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = super::tensor::gelu(self.value(a));
        let needs = self.needs(a);
        self.push(v, Op::Gelu(a), needs)
    }

    pub fn rdft(&mut self, a: Var) -> Result<Var> {
        let len = self.value(a).last_dim();
        let v = fft::rdft(self.value(a))?;
        let needs = self.needs(a);
        Ok(self.push(v, Op::Rdft { a, len }, needs))
    }

    pub fn irdft(&mut self, a: Var, len: usize) -> Result<Var> {
        let v = fft::irdft(self.value(a), len)?;
        let needs = self.needs(a);
        Ok(self.push(v, Op::Irdft { a, len }, needs))
    }

    /// Zeroes spectrum bins `>= keep` of a `[.., bins, 2]` tensor.
    pub fn low_pass(&mut self, a: Var, keep: usize) -> Result<Var> {
        let shape = self.shape(a);
        if shape.len() < 2 || shape[shape.len() - 1] != 2 {
            return Err(Error::Shape(format!("low_pass: not a spectrum: {shape:?}")));
        }
        let bins = shape[shape.len() - 2];
        let v = fft::low_pass(self.value(a), keep);
        let needs = self.needs(a);
        Ok(self.push(v, Op::LowPass { a, bins, keep }, needs))
    }

    /// Inverted dropout; the identity on evaluation tapes or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        let Some(rng) = self.rng.as_mut() else {
            return a;
        };
        if p <= 0.0 {
            return a;
        }
        let keep = F::cast(1.0 / (1.0 - p));
        let n = self.nodes[a.0].value.len();
        let mask: Vec<F> = (0..n)
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect();
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().zip(&mask).for_each(|(x, &m)| *x = *x * m);
        let needs = self.needs(a);
        self.push(v, Op::Dropout { a, mask }, needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let needs = self.needs(a);
        self.push(v, Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / F::cast(t.len() as f64));
        let needs = self.needs(a);
        self.push(v, Op::Mean(a), needs)
    }

    /// Mean squared error between two equally shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Propagates `d loss / d ·` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<F>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
            if matches!(node.op, Op::Param | Op::Input) {
                grads[i] = Some(g);
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn backward_node(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        // gradient buffer of `v`, or None when `v` is not differentiable
        macro_rules! slot {
            ($v:expr) => {{
                let v: Var = $v;
                if self.nodes[v.0].needs_grad {
                    let len = self.nodes[v.0].value.len();
                    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); len]).as_mut_slice())
                } else {
                    None
                }
            }};
        }
        let add_into = |dst: &mut [F], src: &[F]| {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
        };

        match &node.op {
            Op::Constant | Op::Input | Op::Param => {}
            &Op::MatMul { a, b, m, k, n } => {
                if let Some(ga) = slot!(a) {
                    gemm(m, n, k, g, false, val(b), true, ga, true);
                }
                if let Some(gb) = slot!(b) {
                    gemm(k, m, n, val(a), true, g, false, gb, true);
                }
            }
            &Op::BatchMatMul { a, b, batch, m, k, n, trans_b } => {
                let (ad, bd) = (val(a), val(b));
                if let Some(ga) = slot!(a) {
                    for bi in 0..batch {
                        let gs = &g[bi * m * n..(bi + 1) * m * n];
                        let bs = &bd[bi * k * n..(bi + 1) * k * n];
                        let out = &mut ga[bi * m * k..(bi + 1) * m * k];
                        // trans_b: dA = G·B with B stored n×k; else dA = G·Bᵀ
                        gemm(m, n, k, gs, false, bs, !trans_b, out, true);
                    }
                }
                if let Some(gb) = slot!(b) {
                    for bi in 0..batch {
                        let gs = &g[bi * m * n..(bi + 1) * m * n];
                        let as_ = &ad[bi * m * k..(bi + 1) * m * k];
                        let out = &mut gb[bi * k * n..(bi + 1) * k * n];
                        if trans_b {
                            gemm(n, m, k, gs, true, as_, false, out, true);
                        } else {
                            gemm(k, m, n, as_, true, gs, false, out, true);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                if let Some(ga) = slot!(a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot!(b) {
                    add_into(gb, g);
                }
            }
            &Op::Sub(a, b) => {
                if let Some(ga) = slot!(a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot!(b) {
                    gb.iter_mut().zip(g).for_each(|(d, &s)| *d = *d - s);
                }
            }
            &Op::Mul(a, b) => {
                if let Some(ga) = slot!(a) {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(val(b)) {
                        *d = *d + s * y;
                    }
                }
                if let Some(gb) = slot!(b) {
                    for ((d, &s), &x) in gb.iter_mut().zip(g).zip(val(a)) {
                        *d = *d + s * x;
                    }
                }
            }
            &Op::AddBias { a, bias } => {
                if let Some(ga) = slot!(a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot!(bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Broadcast { a, index } => {
                if let Some(ga) = slot!(*a) {
                    for (&s, &i) in g.iter().zip(index) {
                        ga[i] = ga[i] + s;
                    }
                }
            }
            &Op::Scale { a, factor } => {
                if let Some(ga) = slot!(a) {
                    ga.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + s * factor);
                }
            }
            &Op::Reshape(a) => {
                if let Some(ga) = slot!(a) {
                    add_into(ga, g);
                }
            }
            Op::Permute { a, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let out_shape = node.value.shape().to_vec();
                if let Some(ga) = slot!(*a) {
                    permute_into(g, &out_shape, &inv, ga, true);
                }
            }
            &Op::Softmax(a) => {
                if let Some(ga) = slot!(a) {
                    let n = node.value.last_dim();
                    for ((gr, yr), dr) in g.chunks(n).zip(node.value.data().chunks(n)).zip(ga.chunks_mut(n)) {
                        let dot: F = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for ((d, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                            *d = *d + yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { a, gamma, beta, xhat, rstd } => {
                let n = node.value.last_dim();
                let inv_n = F::cast(1.0 / n as f64);
                if let Some(gg) = slot!(*gamma) {
                    for (gr, xr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for ((d, &gi), &xi) in gg.iter_mut().zip(gr).zip(xr) {
                            *d = *d + gi * xi;
                        }
                    }
                }
                if let Some(gb) = slot!(*beta) {
                    for gr in g.chunks(n) {
                        add_into(gb, gr);
                    }
                }
                let gamma_v = val(*gamma);
                if let Some(ga) = slot!(*a) {
                    let mut dxhat = vec![F::zero(); n];
                    for (((gr, xr), dr), &rs) in g.chunks(n).zip(xhat.chunks(n)).zip(ga.chunks_mut(n)).zip(rstd) {
                        let mut mean_d = F::zero();
                        let mut mean_dx = F::zero();
                        for j in 0..n {
                            dxhat[j] = gr[j] * gamma_v[j];
                            mean_d = mean_d + dxhat[j];
                            mean_dx = mean_dx + dxhat[j] * xr[j];
                        }
                        mean_d = mean_d * inv_n;
                        mean_dx = mean_dx * inv_n;
                        for j in 0..n {
                            dr[j] = dr[j] + rs * (dxhat[j] - mean_d - xr[j] * mean_dx);
                        }
                    }
                }
            }
            &Op::Gelu(a) => {
                let x = val(a);
                if let Some(ga) = slot!(a) {
                    for ((d, &s), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *d = *d + s * (normal_cdf(xi) + xi * normal_pdf(xi));
                    }
                }
            }
            &Op::Rdft { a, len } => {
                if let Some(ga) = slot!(a) {
                    fft::rdft_adjoint(g, len, ga);
                }
            }
            &Op::Irdft { a, len } => {
                if let Some(ga) = slot!(a) {
                    fft::irdft_adjoint(g, len, ga);
                }
            }
            &Op::LowPass { a, bins, keep } => {
                if let Some(ga) = slot!(a) {
                    let mut masked = g.to_vec();
                    fft::apply_low_pass(&mut masked, bins, keep);
                    add_into(ga, &masked);
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(ga) = slot!(*a) {
                    for ((d, &s), &m) in ga.iter_mut().zip(g).zip(mask) {
                        *d = *d + s * m;
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(ga) = slot!(a) {
                    ga.iter_mut().for_each(|d| *d = *d + g[0]);
                }
            }
            &Op::Mean(a) => {
                if let Some(ga) = slot!(a) {
                    let s = g[0] / F::cast(ga.len() as f64);
                    ga.iter_mut().for_each(|d| *d = *d + s);
                }
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<F: Real> {
    grads: Vec<Option<Tensor<F>>>,
    params: Vec<(ParamId, Var)>,
}

impl<F: Real> Gradients<F> {
    /// Gradient with respect to an input or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every parameter the loss depends on.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<F>)> {
        self.params
            .iter()
            .filter_map(|&(id, v)| self.grads[v.0].as_ref().map(|g| (id, g)))
    }
}
