//! Permuted factor graphs as input shuffles.
//!
//! A permuted factor graph (PFG) with stage order `π = [π^0 … π^{n-1}]` puts
//! stage `m_{π^j}` at position `j`. Decoding it is equivalent to decoding the
//! original graph after routing every input LLR through a digit permutation of
//! its index. That routing factors into adjacent sub-shuffles `V_{i-1,i}`,
//! each of which swaps index bits `i-1` and `i`, so the whole thing runs on
//! `n - 1` fixed wirings.
//!
//! Vectors are shuffled in gather form: applying `V` to `v` gives `w` with
//! `w[k] = v[σ(k)]`. Under this convention `B_π^T · V_π = B^T`, where the
//! rows of `B_π` are the node labels of the permuted graph.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polar::validate_permutation;

/// Stage order of a factor graph. The identity is the original graph (OFG).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StagePermutation(Vec<usize>);

impl StagePermutation {
    pub fn new(stages: Vec<usize>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidPermutation {
                len: 0,
                reason: "empty stage order".into(),
            });
        }
        validate_permutation(&stages)?;
        Ok(StagePermutation(stages))
    }

    pub fn identity(n: usize) -> Self {
        StagePermutation((0..n).collect())
    }

    /// Number of stages `n`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn stages(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Row labels of `B_π`: node `r` of the PFG behaves like node `label[r]`
    /// of the original graph.
    pub fn row_labels(&self) -> Vec<usize> {
        let n = self.len();
        (0..1usize << n)
            .map(|r| {
                self.0
                    .iter()
                    .enumerate()
                    .fold(0, |acc, (j, &src)| acc | (((r >> src) & 1) << j))
            })
            .collect()
    }
}

impl fmt::Display for StagePermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for StagePermutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|e| Error::InvalidPermutation {
                    len: 0,
                    reason: format!("bad stage {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        StagePermutation::new(stages)
    }
}

/// `b_i`: `2^{n-i-1}` repetitions of `2^i` zeros followed by `2^i` ones,
/// i.e. bit `i` of every row index.
pub fn binary_column(n: usize, i: usize) -> Vec<u8> {
    (0..1usize << n).map(|r| ((r >> i) & 1) as u8).collect()
}

/// Columns of `B_π` keyed by position from the right: entry `j` is `b_{π^j}`.
pub fn binary_matrix(pi: &StagePermutation) -> Vec<Vec<u8>> {
    pi.stages()
        .iter()
        .map(|&s| binary_column(pi.len(), s))
        .collect()
}

fn check_sub_shuffle<T>(vec: &[T], i: usize) -> Result<usize> {
    let len = vec.len();
    if !len.is_power_of_two() || len < 2 {
        return Err(Error::InvalidParameter(format!(
            "vector length {len} is not a power of two >= 2"
        )));
    }
    let n = len.trailing_zeros() as usize;
    if i == 0 || i >= n {
        return Err(Error::InvalidParameter(format!(
            "sub-shuffle index {i} outside 1..{n}"
        )));
    }
    Ok(n)
}

/// In-place `V_{i-1,i}`: swaps index bits `i-1` and `i`. Within each group
/// of `2^{i+1}` elements `[A B C D]` becomes `[A C B D]`.
pub(crate) fn sub_shuffle_in_place<T>(vec: &mut [T], i: usize) {
    let quarter = 1usize << (i - 1);
    let group = quarter << 2;
    for base in (0..vec.len()).step_by(group) {
        for k in 0..quarter {
            vec.swap(base + quarter + k, base + 2 * quarter + k);
        }
    }
}

/// Applies `V_{i-1,i}` to `vec`, `1 <= i < n`.
pub fn sub_shuffle<T: Clone>(vec: &[T], i: usize) -> Result<Vec<T>> {
    check_sub_shuffle(vec, i)?;
    let mut out = vec.to_vec();
    sub_shuffle_in_place(&mut out, i);
    Ok(out)
}

/// Stage label after multiplying its column by `V_{s,e}`.
pub fn update_stage(pi_in: usize, s: usize, e: usize) -> usize {
    if pi_in == s {
        e
    } else if s != e && (s.min(e)..=s.max(e)).contains(&pi_in) {
        if s > e {
            pi_in + 1
        } else {
            pi_in - 1
        }
    } else {
        pi_in
    }
}

/// Sub-shuffle indices realizing `V_{s,e}`, in application order.
pub fn span_steps(s: usize, e: usize) -> Vec<usize> {
    if s < e {
        (s + 1..=e).collect()
    } else {
        (e + 1..=s).rev().collect()
    }
}

/// Decomposition of a stage permutation into adjacent sub-shuffles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShufflePlan {
    n: usize,
    s: Vec<usize>,
    steps: Vec<usize>,
    offsets: Vec<usize>,
}

impl ShufflePlan {
    pub fn log_len(&self) -> usize {
        self.n
    }

    /// `s[i]`: the stage label matched into column `i` at step `i`.
    pub fn s(&self) -> &[usize] {
        &self.s
    }

    /// Flattened sub-shuffle indices; `j` means `V_{j-1,j}`.
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Steps contributed by matching column `i`.
    pub fn group(&self, i: usize) -> &[usize] {
        &self.steps[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `Σ|s[i] - i|`.
    pub fn displacement(&self) -> usize {
        self.steps.len()
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// Applies every step as a bit swap to one index. Composing this over all
    /// indices gives the same routing as [`apply_plan`].
    #[cfg(test)]
    fn source_of(&self, mut k: usize) -> usize {
        for &j in self.steps.iter().rev() {
            let (lo, hi) = ((k >> (j - 1)) & 1, (k >> j) & 1);
            if lo != hi {
                k ^= 0b11 << (j - 1);
            }
        }
        k
    }
}

/// Right-to-left column matching: at step `i` the column currently holding
/// label `s[i]` is routed to label `i`, shifting the labels in between.
pub fn decompose(pi: &StagePermutation) -> ShufflePlan {
    decompose_with(pi, update_stage)
}

/// [`decompose`] with a substitute label-update rule.
pub(crate) fn decompose_with(
    pi: &StagePermutation,
    update: impl Fn(usize, usize, usize) -> usize,
) -> ShufflePlan {
    let n = pi.len();
    let mut labels = pi.stages().to_vec();
    let mut s = Vec::with_capacity(n);
    let mut steps = Vec::new();
    let mut offsets = Vec::with_capacity(n + 1);
    for i in 0..n {
        offsets.push(steps.len());
        let (from, to) = (labels[i], i);
        for label in &mut labels[i..] {
            *label = update(*label, from, to);
        }
        s.push(from);
        steps.extend(span_steps(from, to));
    }
    offsets.push(steps.len());
    ShufflePlan {
        n,
        s,
        steps,
        offsets,
    }
}

/// `Σ|s[i] - i|` without allocating, for stage counts up to 32.
pub(crate) fn displacement_of(stages: &[usize]) -> usize {
    let n = stages.len();
    let mut labels = [0usize; 32];
    labels[..n].copy_from_slice(stages);
    let mut total = 0;
    for i in 0..n {
        let from = labels[i];
        total += from.abs_diff(i);
        for label in &mut labels[i..n] {
            *label = update_stage(*label, from, i);
        }
    }
    total
}

fn check_len<T>(vec: &[T], plan: &ShufflePlan) -> Result<()> {
    let len = 1usize << plan.n;
    if vec.len() != len {
        return Err(Error::length(len, vec.len()));
    }
    Ok(())
}

/// In-place form of [`apply_plan`].
pub fn apply_plan_in_place<T>(vec: &mut [T], plan: &ShufflePlan) -> Result<()> {
    check_len(vec, plan)?;
    for &j in &plan.steps {
        sub_shuffle_in_place(vec, j);
    }
    Ok(())
}

/// In-place form of [`invert_plan`].
pub fn invert_plan_in_place<T>(vec: &mut [T], plan: &ShufflePlan) -> Result<()> {
    check_len(vec, plan)?;
    for &j in plan.steps.iter().rev() {
        sub_shuffle_in_place(vec, j);
    }
    Ok(())
}

/// Routes `vec` from PFG order to the original graph: multiplies by `V_π`.
pub fn apply_plan<T: Clone>(vec: &[T], plan: &ShufflePlan) -> Result<Vec<T>> {
    let mut out = vec.to_vec();
    apply_plan_in_place(&mut out, plan)?;
    Ok(out)
}

/// Undoes [`apply_plan`] by replaying the steps backwards.
pub fn invert_plan<T: Clone>(vec: &[T], plan: &ShufflePlan) -> Result<Vec<T>> {
    let mut out = vec.to_vec();
    invert_plan_in_place(&mut out, plan)?;
    Ok(out)
}

/// Routing of `[0, 1, …, N-1]` computed straight from the digit permutation:
/// entry `d` is the source index whose bit `π^j` equals bit `j` of `d`.
pub fn index_map_oracle(pi: &StagePermutation) -> Vec<usize> {
    let n = pi.len();
    (0..1usize << n)
        .map(|d| {
            pi.stages()
                .iter()
                .enumerate()
                .fold(0, |acc, (j, &src)| acc | (((d >> j) & 1) << src))
        })
        .collect()
}

/// Number of out-of-order pairs.
pub fn inversion_count(stages: &[usize]) -> usize {
    let mut count = 0;
    for i in 0..stages.len() {
        for j in i + 1..stages.len() {
            if stages[i] > stages[j] {
                count += 1;
            }
        }
    }
    count
}

/// Clock cycles of the shuffling unit for one input plane: `Σ|s_i - i| + n`.
pub fn plan_latency(plan: &ShufflePlan, n: usize) -> u32 {
    (plan.displacement() + n) as u32
}

/// Both input planes through the shared unit: `2·plan_latency - n`.
pub fn pgu_latency(plan: &ShufflePlan, n: usize) -> u32 {
    2 * plan_latency(plan, n) - n as u32
}

/// Rearranges `v` into the next permutation in lexicographic order; returns
/// `false` (leaving `v` sorted) after the last one.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub(crate) fn factorial(m: usize) -> u128 {
    (1..=m as u128).product()
}

/// Largest free-stage count whose permutations are enumerated.
pub const MAX_ENUMERATED_STAGES: usize = 10;

/// All stage orders fixing stages `0..p`, in lexicographic order starting
/// from the identity.
#[derive(Debug, Clone)]
pub struct Lexicographic {
    p: usize,
    next: Option<Vec<usize>>,
}

impl Lexicographic {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if n == 0 || p > n {
            return Err(Error::InvalidParameter(format!(
                "need n >= 1 and p <= n, got n = {n}, p = {p}"
            )));
        }
        Ok(Lexicographic {
            p,
            next: Some((0..n).collect()),
        })
    }
}

impl Iterator for Lexicographic {
    type Item = StagePermutation;

    fn next(&mut self) -> Option<StagePermutation> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        if next_permutation(&mut succ[self.p..]) {
            self.next = Some(succ);
        }
        Some(StagePermutation(cur))
    }
}

/// Exact latency statistics over every PFG that fixes the first `p` stages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyCensus {
    pub n: usize,
    pub p: usize,
    pub permutations: u64,
    /// `plan_latency` value -> number of permutations.
    pub plan_histogram: BTreeMap<u32, u64>,
    /// `pgu_latency` value -> number of permutations.
    pub pgu_histogram: BTreeMap<u32, u64>,
}

fn hist_mean(h: &BTreeMap<u32, u64>) -> f64 {
    let (sum, count) = h
        .iter()
        .fold((0u128, 0u128), |(s, c), (&v, &k)| {
            (s + v as u128 * k as u128, c + k as u128)
        });
    sum as f64 / count as f64
}

impl LatencyCensus {
    pub fn pgu_min(&self) -> u32 {
        *self.pgu_histogram.keys().next().unwrap_or(&0)
    }

    pub fn pgu_max(&self) -> u32 {
        *self.pgu_histogram.keys().next_back().unwrap_or(&0)
    }

    pub fn pgu_mean(&self) -> f64 {
        hist_mean(&self.pgu_histogram)
    }

    pub fn plan_min(&self) -> u32 {
        *self.plan_histogram.keys().next().unwrap_or(&0)
    }

    pub fn plan_max(&self) -> u32 {
        *self.plan_histogram.keys().next_back().unwrap_or(&0)
    }

    pub fn plan_mean(&self) -> f64 {
        hist_mean(&self.plan_histogram)
    }

    /// Fraction of PFGs whose `pgu_latency` is strictly below `threshold`.
    pub fn pgu_fraction_below(&self, threshold: u32) -> f64 {
        let below: u64 = self.pgu_histogram.range(..threshold).map(|(_, &c)| c).sum();
        below as f64 / self.permutations as f64
    }

    /// `latency,count` rows of the `pgu_latency` histogram.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "latency,count")?;
        for (lat, count) in &self.pgu_histogram {
            writeln!(out, "{lat},{count}")?;
        }
        Ok(())
    }
}

/// Enumerates all `(n-p)!` permutations of the free stages.
pub fn latency_census(n: usize, p: usize) -> Result<LatencyCensus> {
    if n == 0 || n > 32 || p > n {
        return Err(Error::InvalidParameter(format!(
            "census needs 1 <= n <= 32 and p <= n, got n = {n}, p = {p}"
        )));
    }
    let free = n - p;
    if free > MAX_ENUMERATED_STAGES {
        return Err(Error::EnumerationTooLarge {
            size: factorial(free),
            limit: factorial(MAX_ENUMERATED_STAGES),
        });
    }
    let first_choices: Vec<usize> = if free == 0 { vec![] } else { (p..n).collect() };
    let tally = |stages: &[usize], plan_h: &mut BTreeMap<u32, u64>, pgu_h: &mut BTreeMap<u32, u64>| {
        let plan = (displacement_of(stages) + n) as u32;
        *plan_h.entry(plan).or_default() += 1;
        *pgu_h.entry(2 * plan - n as u32).or_default() += 1;
    };

    let partials: Vec<(BTreeMap<u32, u64>, BTreeMap<u32, u64>, u64)> = if free == 0 {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        tally(&(0..n).collect::<Vec<_>>(), &mut a, &mut b);
        vec![(a, b, 1)]
    } else {
        // One task per choice of the first free stage; merged in order.
        first_choices
            .par_iter()
            .map(|&head| {
                let mut plan_h = BTreeMap::new();
                let mut pgu_h = BTreeMap::new();
                let mut stages: Vec<usize> = (0..p).collect();
                stages.push(head);
                let mut rest: Vec<usize> = (p..n).filter(|&s| s != head).collect();
                let mut count = 0u64;
                loop {
                    stages.truncate(p + 1);
                    stages.extend_from_slice(&rest);
                    tally(&stages, &mut plan_h, &mut pgu_h);
                    count += 1;
                    if !next_permutation(&mut rest) {
                        break;
                    }
                }
                (plan_h, pgu_h, count)
            })
            .collect()
    };

    let mut census = LatencyCensus {
        n,
        p,
        permutations: 0,
        plan_histogram: BTreeMap::new(),
        pgu_histogram: BTreeMap::new(),
    };
    for (plan_h, pgu_h, count) in partials {
        census.permutations += count;
        for (k, v) in plan_h {
            *census.plan_histogram.entry(k).or_default() += v;
        }
        for (k, v) in pgu_h {
            *census.pgu_histogram.entry(k).or_default() += v;
        }
    }
    Ok(census)
}

/// Reads a PFG list: one permutation per line, stage indices separated by
/// spaces. Blank lines and `#` comments are skipped.
pub fn read_pfg_list(path: impl AsRef<Path>) -> Result<Vec<StagePermutation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pfg_list(&text, path)
}

pub fn parse_pfg_list(text: &str, path: &Path) -> Result<Vec<StagePermutation>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perm = line.parse::<StagePermutation>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(perm);
    }
    Ok(out)
}

pub fn write_pfg_list<W: Write>(mut out: W, perms: &[StagePermutation]) -> std::io::Result<()> {
    for p in perms {
        writeln!(out, "{p}")?;
    }
    Ok(())
}
