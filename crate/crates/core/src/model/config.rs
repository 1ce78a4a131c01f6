//! Variants and model hyper-parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tvf::{check_keep_bins, default_keep_bins, HeadConfig, Mechanism, TemporalKind};

/// The seven named architecture variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Ad,
    Md,
    Al,
    Aa,
    Af,
    Ts,
    Vit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tokenization {
    /// One token per (variable, temporal patch).
    SuperMv,
    /// One token per (spatial patch, temporal patch) tube.
    Tube,
}

/// What a variant is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantSpec {
    pub variant: Variant,
    pub temporal: TemporalKind,
    pub mechanism: Mechanism,
    pub tokenization: Tokenization,
    pub joint_tokens: bool,
}

impl Variant {
    pub const ALL: [Variant; 7] = [Self::Ad, Self::Md, Self::Al, Self::Aa, Self::Af, Self::Ts, Self::Vit];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ad => "AD",
            Self::Md => "MD",
            Self::Al => "AL",
            Self::Aa => "AA",
            Self::Af => "AF",
            Self::Ts => "TS",
            Self::Vit => "ViT",
        }
    }

    pub fn spec(self) -> VariantSpec {
        use Mechanism::*;
        let (temporal, mechanism) = match self {
            Self::Ad | Self::Vit => (TemporalKind::Attention, Dictionary),
            Self::Md => (TemporalKind::Mixer, Dictionary),
            Self::Al => (TemporalKind::Attention, LowRank),
            Self::Aa => (TemporalKind::Attention, Additive),
            Self::Af => (TemporalKind::Attention, Full),
            Self::Ts => (TemporalKind::None, Dictionary),
        };
        VariantSpec {
            variant: self,
            temporal,
            mechanism,
            tokenization: if self == Self::Vit { Tokenization::Tube } else { Tokenization::SuperMv },
            joint_tokens: self == Self::Ts,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix("SUMformer-").unwrap_or(s);
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Input length `T`.
    pub input_len: usize,
    /// Forecast horizon `τ`.
    pub horizon: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub l_seg: usize,
    pub d_model: usize,
    pub depth: usize,
    pub r_win: usize,
    /// Dictionary size or low-rank projection rank.
    pub g: usize,
    pub heads: usize,
    pub d_qkv: usize,
    /// `None` keeps the lower half of the rDFT bins.
    pub keep_bins: Option<usize>,
    /// Spatial patch side for the tube tokenisation.
    pub l_spatial: usize,
    /// Dropout inside the temporal mixer.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ad,
            input_len: 128,
            horizon: 128,
            channels: 2,
            height: 32,
            width: 32,
            l_seg: 16,
            d_model: 128,
            depth: 4,
            r_win: 2,
            g: 256,
            heads: 8,
            d_qkv: 16,
            keep_bins: None,
            l_spatial: 2,
            dropout: 0.1,
        }
    }
}

const KEYS: [&str; 16] = [
    "variant",
    "input_len",
    "horizon",
    "channels",
    "height",
    "width",
    "l_seg",
    "d_model",
    "depth",
    "r_win",
    "g",
    "heads",
    "d_qkv",
    "keep_bins",
    "l_spatial",
    "dropout",
];

pub(crate) fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ModelConfig {
    pub fn spec(&self) -> VariantSpec {
        self.variant.spec()
    }

    /// `C·H·W`.
    pub fn variables(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            heads: self.heads,
            d_qkv: self.d_qkv,
        }
    }

    pub fn keep_bins(&self) -> usize {
        self.keep_bins.unwrap_or_else(|| default_keep_bins(self.input_len))
    }

    /// The tube path with single-pixel patches is the plain variable path.
    pub fn tokenization(&self) -> Tokenization {
        match self.spec().tokenization {
            Tokenization::Tube if self.l_spatial == 1 => Tokenization::SuperMv,
            t => t,
        }
    }

    /// Number of tokens per temporal patch index.
    pub fn tokens(&self) -> usize {
        match self.tokenization() {
            Tokenization::SuperMv => self.variables(),
            Tokenization::Tube => self.height * self.width / (self.l_spatial * self.l_spatial),
        }
    }

    /// Values per token per frame.
    pub fn token_area(&self) -> usize {
        match self.tokenization() {
            Tokenization::SuperMv => 1,
            Tokenization::Tube => self.l_spatial * self.l_spatial * self.channels,
        }
    }

    /// Patch count entering each block, then the count reaching the head.
    pub fn n_seg_trace(&self) -> Result<Vec<usize>> {
        let mut n = self.input_len / self.l_seg.max(1);
        let mut trace = vec![n];
        for _ in 0..self.depth {
            n = crate::embedding::merged_len(n, self.r_win)?;
            trace.push(n);
        }
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("height", self.height),
            ("width", self.width),
            ("l_seg", self.l_seg),
            ("d_model", self.d_model),
            ("depth", self.depth),
            ("r_win", self.r_win),
            ("g", self.g),
            ("heads", self.heads),
            ("d_qkv", self.d_qkv),
            ("l_spatial", self.l_spatial),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.r_win < 2 {
            return Err(Error::Config("r_win must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !self.input_len.is_multiple_of(self.l_seg) {
            return Err(Error::Divisibility {
                what: "input_len",
                value: self.input_len,
                divisor: self.l_seg,
            });
        }
        if self.tokenization() == Tokenization::Tube {
            for (what, value) in [("height", self.height), ("width", self.width)] {
                if value % self.l_spatial != 0 {
                    return Err(Error::Divisibility {
                        what,
                        value,
                        divisor: self.l_spatial,
                    });
                }
            }
        }
        check_keep_bins(self.input_len, self.keep_bins())?;
        self.n_seg_trace()?;
        Ok(())
    }

    /// Sets one `key = value` field; returns `false` for keys this type
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let value = value.trim();
        match key {
            "variant" => self.variant = value.parse()?,
            "input_len" => self.input_len = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "channels" => self.channels = parse_num(key, value)?,
            "height" => self.height = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "l_seg" => self.l_seg = parse_num(key, value)?,
            "d_model" => self.d_model = parse_num(key, value)?,
            "depth" => self.depth = parse_num(key, value)?,
            "r_win" => self.r_win = parse_num(key, value)?,
            "g" => self.g = parse_num(key, value)?,
            "heads" => self.heads = parse_num(key, value)?,
            "d_qkv" => self.d_qkv = parse_num(key, value)?,
            "keep_bins" => {
                self.keep_bins = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "l_spatial" => self.l_spatial = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.to_string(),
            "input_len" => self.input_len.to_string(),
            "horizon" => self.horizon.to_string(),
            "channels" => self.channels.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "l_seg" => self.l_seg.to_string(),
            "d_model" => self.d_model.to_string(),
            "depth" => self.depth.to_string(),
            "r_win" => self.r_win.to_string(),
            "g" => self.g.to_string(),
            "heads" => self.heads.to_string(),
            "d_qkv" => self.d_qkv.to_string(),
            "keep_bins" => self.keep_bins.map_or_else(|| "auto".to_string(), |k| k.to_string()),
            "l_spatial" => self.l_spatial.to_string(),
            "dropout" => format!("{:?}", self.dropout),
            _ => return None,
        })
    }

    /// `key = value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Parses [`to_text`](Self::to_text) output; every line must name a
    /// model field.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in key_values(text)? {
            if !cfg.set(key, value)? {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn key_values(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}
