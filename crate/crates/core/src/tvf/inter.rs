//! Inter-series sub-block: mixing across variables at each patch index.

use std::fmt;
use std::str::FromStr;

use super::layers::{merge_heads, split_heads, HeadConfig, Linear, Mhsa};
use super::Dims;
use crate::error::{Error, Result};
use crate::numerics::{Allocator, Init, ParamId, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Full,
    Dictionary,
    LowRank,
    Additive,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Self::Full, Self::Dictionary, Self::LowRank, Self::Additive];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Dictionary => "dictionary",
            Self::LowRank => "lowrank",
            Self::Additive => "additive",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

/// Learned query set that first gathers from all variables and is then
/// read back by every variable.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub dic: ParamId,
    pub size: usize,
    pub gather: Mhsa,
    pub scatter: Mhsa,
}

impl Dictionary {
    fn build(alloc: &mut dyn Allocator, name: &str, size: usize, d_model: usize, heads: HeadConfig) -> Self {
        Self {
            dic: alloc.alloc(&format!("{name}.dic"), &[size, d_model], Init::Uniform { fan_in: d_model }),
            size,
            gather: Mhsa::build(alloc, &format!("{name}.gather"), d_model, heads),
            scatter: Mhsa::build(alloc, &format!("{name}.scatter"), d_model, heads),
        }
    }

    /// `tokens: [B, S, d]`.
    fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, tokens: Var) -> Result<Var> {
        let message = self.messages(tape, store, tokens)?;
        Ok(self.scatter.attend(tape, store, tokens, message)?.out)
    }

    /// Aggregated messages `[B, g, d]` for `tokens: [B, S, d]`.
    pub fn messages<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, tokens: Var) -> Result<Var> {
        let s = tape.shape(tokens).to_vec();
        let dic = tape.param(store.get(self.dic));
        let dic = tape.reshape(dic, &[1, self.size, s[2]])?;
        let dic = tape.broadcast_to(dic, &[s[0], self.size, s[2]])?;
        Ok(self.gather.attend(tape, store, dic, tokens)?.out)
    }
}

/// Keys and values compressed from `G` to `g` rows by a learned matrix.
#[derive(Clone, Debug)]
pub struct LowRank {
    pub w_lin: ParamId,
    pub rank: usize,
    pub attn: Mhsa,
}

/// Global query/key summaries, linear in the number of variables.
#[derive(Clone, Debug)]
pub struct Additive {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    /// Summary vectors shared across heads, `[d_qkv]`.
    pub q_score: ParamId,
    pub k_score: ParamId,
    pub w_1: ParamId,
    pub w_2: ParamId,
    pub w_o: Linear,
    pub heads: HeadConfig,
}

impl Additive {
    fn build(alloc: &mut dyn Allocator, name: &str, d_model: usize, heads: HeadConfig) -> Self {
        let (w, dq) = (heads.width(), heads.d_qkv);
        let mut a = |what: &str, shape: &[usize], fan_in: usize| {
            alloc.alloc(&format!("{name}.{what}"), shape, Init::Uniform { fan_in })
        };
        let w_q = a("w_q", &[d_model, w], d_model);
        let w_k = a("w_k", &[d_model, w], d_model);
        let w_v = a("w_v", &[d_model, w], d_model);
        let q_score = a("q_score", &[dq], dq);
        let k_score = a("k_score", &[dq], dq);
        let w_1 = a("w_1", &[dq, dq], dq);
        let w_2 = a("w_2", &[dq, dq], dq);
        Self {
            w_q,
            w_k,
            w_v,
            q_score,
            k_score,
            w_1,
            w_2,
            w_o: Linear::build(alloc, &format!("{name}.w_o"), w, d_model, true),
            heads,
        }
    }

    /// Softmax over the rows of `x: [B, G, dq]` scored against `w: [dq]`,
    /// followed by the weighted row sum broadcast back to every row.
    fn summarise<F: Real>(&self, tape: &mut Tape<F>, x: Var, w: Var) -> Result<(Var, Var)> {
        let s = tape.shape(x).to_vec();
        let (b, g, dq) = (s[0], s[1], s[2]);
        let w = tape.reshape(w, &[dq, 1])?;
        let logits = tape.matmul(x, w)?;
        let logits = tape.scale(logits, 1.0 / (dq as f64).sqrt());
        let logits = tape.reshape(logits, &[b, 1, g])?;
        tape.count_scores((b / self.heads.heads * g) as u64);
        let weights = tape.softmax(logits);
        let global = tape.bmm(weights, x, false)?;
        Ok((tape.broadcast_to(global, &[b, g, dq])?, weights))
    }

    /// `tokens: [B, G, d]`; also returns both weight vectors `[B·h, 1, G]`.
    pub fn attend<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, tokens: Var) -> Result<(Var, Var, Var)> {
        let proj = |tape: &mut Tape<F>, w: ParamId| -> Result<Var> {
            let w = tape.param(store.get(w));
            let p = tape.matmul(tokens, w)?;
            split_heads(tape, p, self.heads)
        };
        let q = proj(tape, self.w_q)?;
        let k = proj(tape, self.w_k)?;
        let v = proj(tape, self.w_v)?;
        let wq = tape.param(store.get(self.q_score));
        let wk = tape.param(store.get(self.k_score));
        let (global_q, alpha) = self.summarise(tape, q, wq)?;
        let p = tape.mul(global_q, k)?;
        let (global_k, beta) = self.summarise(tape, p, wk)?;
        let u = tape.mul(global_k, v)?;
        let w2 = tape.param(store.get(self.w_2));
        let u = tape.matmul(u, w2)?;
        let r = tape.add(q, u)?;
        let w1 = tape.param(store.get(self.w_1));
        let z = tape.matmul(r, w1)?;
        let z = merge_heads(tape, z, self.heads)?;
        Ok((self.w_o.forward(tape, store, z)?, alpha, beta))
    }
}

#[derive(Clone, Debug)]
pub enum InterSeries {
    Full(Mhsa),
    Dictionary(Dictionary),
    LowRank(LowRank),
    Additive(Additive),
    /// One dictionary attention over every (variable, patch) token.
    Joint(Dictionary),
}

impl InterSeries {
    /// `g` is the dictionary size or projection rank; ignored otherwise.
    pub fn build(
        alloc: &mut dyn Allocator,
        name: &str,
        mechanism: Mechanism,
        variables: usize,
        g: usize,
        d_model: usize,
        heads: HeadConfig,
    ) -> Self {
        match mechanism {
            Mechanism::Full => Self::Full(Mhsa::build(alloc, name, d_model, heads)),
            Mechanism::Dictionary => Self::Dictionary(Dictionary::build(alloc, name, g, d_model, heads)),
            Mechanism::LowRank => Self::LowRank(LowRank {
                w_lin: alloc.alloc(&format!("{name}.w_lin"), &[g, variables], Init::Uniform { fan_in: variables }),
                rank: g,
                attn: Mhsa::build(alloc, name, d_model, heads),
            }),
            Mechanism::Additive => Self::Additive(Additive::build(alloc, name, d_model, heads)),
        }
    }

    pub fn build_joint(alloc: &mut dyn Allocator, name: &str, g: usize, d_model: usize, heads: HeadConfig) -> Self {
        Self::Joint(Dictionary::build(alloc, name, g, d_model, heads))
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            Self::Full(_) => Mechanism::Full,
            Self::Dictionary(_) | Self::Joint(_) => Mechanism::Dictionary,
            Self::LowRank(_) => Mechanism::LowRank,
            Self::Additive(_) => Mechanism::Additive,
        }
    }

    /// `[.., G, N, d] → [B·N, G, d]`.
    fn by_patch<F: Real>(tape: &mut Tape<F>, x: Var, dims: &Dims) -> Result<Var> {
        let x = tape.reshape(x, &dims.shape4())?;
        let x = tape.permute(x, &[0, 2, 1, 3])?;
        tape.reshape(x, &[dims.b * dims.n, dims.g, dims.d])
    }

    fn from_patch<F: Real>(tape: &mut Tape<F>, x: Var, dims: &Dims) -> Result<Var> {
        let x = tape.reshape(x, &[dims.b, dims.n, dims.g, dims.d])?;
        let x = tape.permute(x, &[0, 2, 1, 3])?;
        tape.reshape(x, &dims.original)
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let dims = Dims::of(tape, x)?;
        if let Self::Joint(dict) = self {
            let tokens = tape.reshape(x, &[dims.b, dims.g * dims.n, dims.d])?;
            let out = dict.forward(tape, store, tokens)?;
            return tape.reshape(out, &dims.original);
        }
        let xt = Self::by_patch(tape, x, &dims)?;
        let out = match self {
            Self::Full(attn) => attn.attend(tape, store, xt, xt)?.out,
            Self::Dictionary(dict) => dict.forward(tape, store, xt)?,
            Self::LowRank(lr) => {
                let reduced = low_rank_keys(tape, store, lr, x, &dims)?;
                lr.attn.attend(tape, store, xt, reduced)?.out
            }
            Self::Additive(add) => add.attend(tape, store, xt)?.0,
            Self::Joint(_) => unreachable!(),
        };
        Self::from_patch(tape, out, &dims)
    }

    /// Head-averaged attention `[B, N, G, G]` of the full mechanism.
    pub fn attention_map<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Tensor<F>> {
        let Self::Full(attn) = self else {
            return Err(Error::UnsupportedMechanism(format!(
                "attention export needs full attention, block uses {}",
                self.mechanism()
            )));
        };
        let dims = Dims::of(tape, x)?;
        let xt = Self::by_patch(tape, x, &dims)?;
        let (g, h) = (dims.g, attn.heads.heads);
        let Some(probs) = attn.attend(tape, store, xt, xt)?.probs else {
            return Ok(Tensor::full([dims.b, dims.n, 1, 1], F::one()));
        };
        let p = tape.value(probs).data();
        let mut out = Tensor::zeros([dims.b, dims.n, g, g]);
        let inv = F::cast(1.0 / h as f64);
        for (bn, dst) in out.data_mut().chunks_mut(g * g).enumerate() {
            for head in 0..h {
                let src = &p[(bn * h + head) * g * g..][..g * g];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o = *o + s * inv;
                }
            }
        }
        Ok(out)
    }
}

/// `W_lin` applied along the variable axis: `[B·N, g, d]`.
fn low_rank_keys<F: Real>(tape: &mut Tape<F>, store: &ParamStore<F>, lr: &LowRank, x: Var, dims: &Dims) -> Result<Var> {
    let x = tape.reshape(x, &dims.shape4())?;
    let x = tape.permute(x, &[1, 0, 2, 3])?;
    let x = tape.reshape(x, &[dims.g, dims.b * dims.n * dims.d])?;
    let w = tape.param(store.get(lr.w_lin));
    let y = tape.matmul(w, x)?;
    let y = tape.reshape(y, &[lr.rank, dims.b, dims.n, dims.d])?;
    let y = tape.permute(y, &[1, 2, 0, 3])?;
    tape.reshape(y, &[dims.b * dims.n, lr.rank, dims.d])
}
