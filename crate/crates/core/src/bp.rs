//! Belief-propagation decoding on the original factor graph.
//!
//! Messages live in two `(n+1) × N` arrays. Column 0 is the `u` side,
//! column `n` the channel side; stage `j` joins columns `j` and `j+1` and
//! pairs rows `i` and `i + 2^j`. Right messages carry the frozen priors
//! forward, left messages carry channel LLRs back.
//!
//! One iteration is a right sweep over stages `0..n-1` followed by a left
//! sweep over stages `n-1..1`, so each costs `n - 1` cycles per sweep pair.
//! Left messages at column 0 are produced only when a decision is taken.

use serde::{Deserialize, Serialize};

use crate::channel::Quantizer;
use crate::error::{Error, Result};

/// Number arithmetic of the message memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arithmetic {
    Float,
    Fixed(Quantizer),
}

impl std::fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arithmetic::Float => f.write_str("float"),
            Arithmetic::Fixed(q) => write!(f, "{}", q.to_string().to_lowercase()),
        }
    }
}

impl std::str::FromStr for Arithmetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("float") {
            Ok(Arithmetic::Float)
        } else {
            Ok(Arithmetic::Fixed(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub i_max: usize,
    pub beta_r: f64,
    pub beta_l: f64,
    pub arithmetic: Arithmetic,
    /// Stop once the hard decision has been identical this many iterations
    /// in a row.
    pub sa_window: usize,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            i_max: 50,
            beta_r: 0.25,
            beta_l: 0.0,
            arithmetic: Arithmetic::Fixed(Quantizer::Q7_2),
            sa_window: 3,
        }
    }
}

impl BpConfig {
    pub fn float() -> Self {
        BpConfig {
            arithmetic: Arithmetic::Float,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::InvalidParameter("i_max must be at least 1".into()));
        }
        if self.sa_window == 0 {
            return Err(Error::InvalidParameter("sa_window must be at least 1".into()));
        }
        if !(self.beta_r >= 0.0 && self.beta_l >= 0.0) {
            return Err(Error::InvalidParameter("offsets must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BpOutput {
    /// Hard decision on `u` (the natural-order input of the graph decoded).
    pub u_hat: Vec<u8>,
    pub iterations: usize,
    /// Whether the decision settled before `i_max`.
    pub converged: bool,
}

trait Domain: Copy {
    type V: Copy + Default;

    fn from_llr(&self, x: f64) -> Self::V;
    fn frozen_prior(&self) -> Self::V;
    fn offset(&self, beta: f64) -> Self::V;
    fn add(&self, a: Self::V, b: Self::V) -> Self::V;
    fn g(&self, a: Self::V, b: Self::V, beta: Self::V) -> Self::V;
    fn bit(&self, r0: Self::V, l0: Self::V) -> u8;
    fn to_f64(&self, v: Self::V) -> f64;
}

#[derive(Clone, Copy)]
struct FloatDomain;

impl Domain for FloatDomain {
    type V = f64;

    fn from_llr(&self, x: f64) -> f64 {
        x
    }

    fn frozen_prior(&self) -> f64 {
        f64::INFINITY
    }

    fn offset(&self, beta: f64) -> f64 {
        beta
    }

    #[inline(always)]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    #[inline(always)]
    fn g(&self, a: f64, b: f64, beta: f64) -> f64 {
        let mag = (a.abs().min(b.abs()) - beta).max(0.0);
        if (a < 0.0) != (b < 0.0) {
            -mag
        } else {
            mag
        }
    }

    fn bit(&self, r0: f64, l0: f64) -> u8 {
        u8::from(r0 + l0 < 0.0)
    }

    fn to_f64(&self, v: f64) -> f64 {
        v
    }
}

#[derive(Clone, Copy)]
struct FixedDomain {
    q: Quantizer,
    lo: i32,
    hi: i32,
}

impl FixedDomain {
    fn new(q: Quantizer) -> Self {
        FixedDomain {
            q,
            lo: q.min_code(),
            hi: q.max_code(),
        }
    }

    #[inline(always)]
    fn sat(&self, x: i32) -> i16 {
        x.clamp(self.lo, self.hi) as i16
    }
}

impl Domain for FixedDomain {
    type V = i16;

    fn from_llr(&self, x: f64) -> i16 {
        self.q.to_code(x) as i16
    }

    /// The largest code stands in for a certain 0.
    fn frozen_prior(&self) -> i16 {
        self.hi as i16
    }

    fn offset(&self, beta: f64) -> i16 {
        self.q.to_code(beta) as i16
    }

    #[inline(always)]
    fn add(&self, a: i16, b: i16) -> i16 {
        self.sat(a as i32 + b as i32)
    }

    #[inline(always)]
    fn g(&self, a: i16, b: i16, beta: i16) -> i16 {
        let (a, b) = (a as i32, b as i32);
        let mag = (a.abs().min(b.abs()) - beta as i32).max(0);
        self.sat(if (a < 0) != (b < 0) { -mag } else { mag })
    }

    fn bit(&self, r0: i16, l0: i16) -> u8 {
        if r0 as i32 == self.hi {
            0
        } else {
            u8::from((r0 as i32 + l0 as i32) < 0)
        }
    }

    fn to_f64(&self, v: i16) -> f64 {
        self.q.from_code(v as i32)
    }
}

struct Engine<D: Domain> {
    d: D,
    n: usize,
    len: usize,
    l: Vec<D::V>,
    r: Vec<D::V>,
    beta_r: D::V,
    beta_l: D::V,
}

impl<D: Domain> Engine<D> {
    fn new(d: D, n: usize, cfg: &BpConfig) -> Self {
        let len = 1usize << n;
        Engine {
            d,
            n,
            len,
            l: vec![D::V::default(); (n + 1) * len],
            r: vec![D::V::default(); (n + 1) * len],
            beta_r: d.offset(cfg.beta_r),
            beta_l: d.offset(cfg.beta_l),
        }
    }

    fn init(&mut self, llr: &[f64], frozen: &[bool]) {
        let (len, n) = (self.len, self.n);
        self.l.fill(D::V::default());
        self.r.fill(D::V::default());
        for (dst, &x) in self.l[n * len..].iter_mut().zip(llr) {
            *dst = self.d.from_llr(x);
        }
        for (dst, &f) in self.r[..len].iter_mut().zip(frozen) {
            if f {
                *dst = self.d.frozen_prior();
            }
        }
    }

    /// Right messages of column `j + 1` from column `j`.
    fn update_right(&mut self, j: usize) {
        let (len, h, d, beta) = (self.len, 1usize << j, self.d, self.beta_r);
        let (lo, hi) = self.r.split_at_mut((j + 1) * len);
        let src = &lo[j * len..];
        let dst = &mut hi[..len];
        let lft = &self.l[(j + 1) * len..(j + 2) * len];
        for base in (0..len).step_by(2 * h) {
            for i in base..base + h {
                let (a, b) = (src[i], src[i + h]);
                let (la, lb) = (lft[i], lft[i + h]);
                dst[i] = d.g(a, d.add(lb, b), beta);
                dst[i + h] = d.add(d.g(a, la, beta), b);
            }
        }
    }

    /// Left messages of column `j` from column `j + 1`.
    fn update_left(&mut self, j: usize) {
        let (len, h, d, beta) = (self.len, 1usize << j, self.d, self.beta_l);
        let (lo, hi) = self.l.split_at_mut((j + 1) * len);
        let dst = &mut lo[j * len..];
        let src = &hi[..len];
        let rgt = &self.r[j * len..(j + 1) * len];
        for base in (0..len).step_by(2 * h) {
            for i in base..base + h {
                let (la, lb) = (src[i], src[i + h]);
                let (a, b) = (rgt[i], rgt[i + h]);
                dst[i] = d.g(la, d.add(lb, b), beta);
                dst[i + h] = d.add(d.g(la, a, beta), lb);
            }
        }
    }

    fn decide(&mut self, out: &mut [u8]) {
        self.update_left(0);
        let len = self.len;
        for (i, bit) in out.iter_mut().enumerate() {
            *bit = self.d.bit(self.r[i], self.l[i]);
        }
        debug_assert_eq!(out.len(), len);
    }

    fn run(&mut self, llr: &[f64], frozen: &[bool], cfg: &BpConfig) -> BpOutput {
        self.init(llr, frozen);
        let mut hat = vec![0u8; self.len];
        let mut prev = vec![0u8; self.len];
        let mut streak = 0;
        for t in 1..=cfg.i_max {
            for j in 0..self.n - 1 {
                self.update_right(j);
            }
            for j in (1..self.n).rev() {
                self.update_left(j);
            }
            self.decide(&mut hat);
            streak = if t > 1 && hat == prev { streak + 1 } else { 1 };
            if streak >= cfg.sa_window {
                return BpOutput {
                    u_hat: hat,
                    iterations: t,
                    converged: true,
                };
            }
            std::mem::swap(&mut hat, &mut prev);
        }
        BpOutput {
            u_hat: prev,
            iterations: cfg.i_max,
            converged: false,
        }
    }

    fn column(&self, mem: &[D::V], j: usize) -> Vec<f64> {
        mem[j * self.len..(j + 1) * self.len]
            .iter()
            .map(|&v| self.d.to_f64(v))
            .collect()
    }
}

enum EngineKind {
    Float(Engine<FloatDomain>),
    Fixed(Engine<FixedDomain>),
}

/// Reusable decoder for one code length. Holds the message memory so that
/// repeated decodes do not allocate it again.
pub struct BpDecoder {
    cfg: BpConfig,
    n: usize,
    engine: EngineKind,
}

impl BpDecoder {
    pub fn new(n: usize, cfg: BpConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 || n > crate::polar::MAX_LOG_LEN {
            return Err(Error::InvalidParameter(format!("unsupported log length {n}")));
        }
        let engine = match cfg.arithmetic {
            Arithmetic::Float => EngineKind::Float(Engine::new(FloatDomain, n, &cfg)),
            Arithmetic::Fixed(q) => EngineKind::Fixed(Engine::new(FixedDomain::new(q), n, &cfg)),
        };
        Ok(BpDecoder { cfg, n, engine })
    }

    pub fn config(&self) -> &BpConfig {
        &self.cfg
    }

    pub fn log_len(&self) -> usize {
        self.n
    }

    /// Decodes channel LLRs given the frozen pattern of the graph's inputs.
    pub fn decode(&mut self, llr: &[f64], frozen: &[bool]) -> Result<BpOutput> {
        let len = 1usize << self.n;
        if llr.len() != len {
            return Err(Error::length(len, llr.len()));
        }
        if frozen.len() != len {
            return Err(Error::length(len, frozen.len()));
        }
        Ok(match &mut self.engine {
            EngineKind::Float(e) => e.run(llr, frozen, &self.cfg),
            EngineKind::Fixed(e) => e.run(llr, frozen, &self.cfg),
        })
    }

    /// Left messages of column `j` after the last decode, as real values.
    pub fn left_column(&self, j: usize) -> Vec<f64> {
        match &self.engine {
            EngineKind::Float(e) => e.column(&e.l, j),
            EngineKind::Fixed(e) => e.column(&e.l, j),
        }
    }

    /// Right messages of column `j` after the last decode, as real values.
    pub fn right_column(&self, j: usize) -> Vec<f64> {
        match &self.engine {
            EngineKind::Float(e) => e.column(&e.r, j),
            EngineKind::Fixed(e) => e.column(&e.r, j),
        }
    }
}

/// One-shot decode.
pub fn bp_decode(llr: &[f64], frozen: &[bool], cfg: &BpConfig) -> Result<BpOutput> {
    if !llr.len().is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "LLR length {} is not a power of two",
            llr.len()
        )));
    }
    let n = llr.len().trailing_zeros() as usize;
    BpDecoder::new(n, *cfg)?.decode(llr, frozen)
}
