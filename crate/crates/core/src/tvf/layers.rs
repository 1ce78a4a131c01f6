//! Dense layers shared by the sub-blocks.

use crate::error::{Error, Result};
use crate::numerics::{Allocator, Init, ParamId, ParamStore, Real, Tape, Var};

/// `x·W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn build(alloc: &mut dyn Allocator, name: &str, input: usize, output: usize, bias: bool) -> Self {
        Self {
            weight: alloc.alloc(&format!("{name}.weight"), &[input, output], Init::Uniform { fan_in: input }),
            bias: bias.then(|| alloc.alloc(&format!("{name}.bias"), &[output], Init::Zeros)),
        }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let w = tape.param(store.get(self.weight));
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(store.get(b));
                tape.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Affine layer normalisation over the last axis.
#[derive(Clone, Debug)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn build(alloc: &mut dyn Allocator, name: &str, width: usize) -> Self {
        Self {
            gamma: alloc.alloc(&format!("{name}.gamma"), &[width], Init::Ones),
            beta: alloc.alloc(&format!("{name}.beta"), &[width], Init::Zeros),
        }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let g = tape.param(store.get(self.gamma));
        let b = tape.param(store.get(self.beta));
        tape.layer_norm(x, g, b)
    }
}

/// Two linear layers with GELU between them and optional dropout on the
/// hidden activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn build(alloc: &mut dyn Allocator, name: &str, width: usize, hidden: usize, dropout: f64) -> Self {
        Self {
            fc1: Linear::build(alloc, &format!("{name}.fc1"), width, hidden, true),
            fc2: Linear::build(alloc, &format!("{name}.fc2"), hidden, width, true),
            dropout,
        }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.gelu(h);
        let h = tape.dropout(h, self.dropout);
        self.fc2.forward(tape, store, h)
    }
}

/// Head layout shared by every attention layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadConfig {
    pub heads: usize,
    pub d_qkv: usize,
}

impl HeadConfig {
    pub fn width(&self) -> usize {
        self.heads * self.d_qkv
    }
}

/// `[B, S, h·dq] → [B·h, S, dq]`.
pub(crate) fn split_heads<F: Real>(tape: &mut Tape<F>, x: Var, heads: HeadConfig) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (b, n) = (s[0], s[1]);
    if heads.heads == 1 {
        return Ok(x);
    }
    let x = tape.reshape(x, &[b, n, heads.heads, heads.d_qkv])?;
    let x = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(x, &[b * heads.heads, n, heads.d_qkv])
}

/// `[B·h, S, dq] → [B, S, h·dq]`.
pub(crate) fn merge_heads<F: Real>(tape: &mut Tape<F>, x: Var, heads: HeadConfig) -> Result<Var> {
    if heads.heads == 1 {
        return Ok(x);
    }
    let s = tape.shape(x).to_vec();
    let (b, n) = (s[0] / heads.heads, s[1]);
    let x = tape.reshape(x, &[b, heads.heads, n, heads.d_qkv])?;
    let x = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(x, &[b, n, heads.width()])
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value inputs.
#[derive(Clone, Debug)]
pub struct Mhsa {
    /// Absent when every call attends over a single key, where the scores
    /// cannot influence the output.
    pub w_q: Option<ParamId>,
    pub w_k: Option<ParamId>,
    pub w_v: ParamId,
    pub w_o: Linear,
    pub heads: HeadConfig,
}

/// Output of one attention call.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    /// `[B, Sq, d_model]`.
    pub out: Var,
    /// Softmax weights `[B·h, Sq, Sk]`, absent for single-key attention.
    pub probs: Option<Var>,
}

impl Mhsa {
    pub fn build(alloc: &mut dyn Allocator, name: &str, d_model: usize, heads: HeadConfig) -> Self {
        Self::build_inner(alloc, name, d_model, heads, true)
    }

    /// Attention whose key set always has length one; only the value and
    /// output projections are allocated.
    pub fn build_single_key(alloc: &mut dyn Allocator, name: &str, d_model: usize, heads: HeadConfig) -> Self {
        Self::build_inner(alloc, name, d_model, heads, false)
    }

    fn build_inner(alloc: &mut dyn Allocator, name: &str, d_model: usize, heads: HeadConfig, scores: bool) -> Self {
        let w = heads.width();
        let proj = |alloc: &mut dyn Allocator, what: &str| {
            alloc.alloc(&format!("{name}.{what}"), &[d_model, w], Init::Uniform { fan_in: d_model })
        };
        let w_q = scores.then(|| proj(alloc, "w_q"));
        let w_k = scores.then(|| proj(alloc, "w_k"));
        let w_v = proj(alloc, "w_v");
        Self {
            w_q,
            w_k,
            w_v,
            w_o: Linear::build(alloc, &format!("{name}.w_o"), w, d_model, true),
            heads,
        }
    }

    fn project<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var, w: ParamId) -> Result<Var> {
        let w = tape.param(store.get(w));
        let p = tape.matmul(x, w)?;
        split_heads(tape, p, self.heads)
    }

    /// `query: [B, Sq, d]`, `kv: [B, Sk, d]`. Counts `B·Sq·Sk` scores on
    /// the tape.
    pub fn attend<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, query: Var, kv: Var) -> Result<Attended> {
        let (sq, sk) = (tape.shape(query).to_vec(), tape.shape(kv).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sq[0] != sk[0] || sq[2] != sk[2] {
            return Err(Error::ShapeMismatch {
                op: "attention",
                left: sq,
                right: sk,
            });
        }
        tape.count_scores((sq[0] * sq[1] * sk[1]) as u64);
        let v = self.project(tape, store, kv, self.w_v)?;
        let (z, probs) = match (self.w_q, self.w_k) {
            (Some(wq), Some(wk)) => {
                let q = self.project(tape, store, query, wq)?;
                let k = self.project(tape, store, kv, wk)?;
                let scores = tape.bmm(q, k, true)?;
                let scores = tape.scale(scores, 1.0 / (self.heads.d_qkv as f64).sqrt());
                let p = tape.softmax(scores);
                (tape.bmm(p, v, false)?, Some(p))
            }
            _ => {
                if sk[1] != 1 {
                    return Err(Error::Shape(format!(
                        "single-key attention called with {} keys",
                        sk[1]
                    )));
                }
                let rows = sq[1];
                let z = if rows == 1 {
                    v
                } else {
                    let vs = tape.shape(v).to_vec();
                    tape.broadcast_to(v, &[vs[0], rows, vs[2]])?
                };
                (z, None)
            }
        };
        let z = merge_heads(tape, z, self.heads)?;
        let out = self.w_o.forward(tape, store, z)?;
        Ok(Attended { out, probs })
    }
}
