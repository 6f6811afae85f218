//! Serial BP list decoding over an ordered list of permuted factor graphs.
//!
//! Attempt `l` shuffles the channel LLRs and the frozen priors with the plan
//! of `𝓖_l`, runs BP on the original graph, unshuffles the hard decision and
//! checks the CRC. The first passing attempt ends the frame.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::bp::{BpConfig, BpDecoder, BpOutput};
use crate::error::{Error, Result};
use crate::perm::{
    apply_plan, apply_plan_in_place, decompose, invert_plan_in_place, plan_latency, read_pfg_list,
    Lexicographic, ShufflePlan, StagePermutation,
};
use crate::polar::{crc_check, CodeSpec};

/// Ordered PFG list. Entry 0 is always the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PfgList {
    perms: Vec<StagePermutation>,
    plans: Vec<ShufflePlan>,
}

impl PfgList {
    pub fn new(perms: Vec<StagePermutation>) -> Result<Self> {
        let first = perms
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty PFG list".into()))?;
        if !first.is_identity() {
            return Err(Error::InvalidParameter(format!(
                "first PFG must be the identity, got [{first}]"
            )));
        }
        let n = first.len();
        let mut seen = HashSet::new();
        for p in &perms {
            if p.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "PFG [{p}] has {} stages, expected {n}",
                    p.len()
                )));
            }
            if !seen.insert(p.clone()) {
                return Err(Error::InvalidParameter(format!("duplicate PFG [{p}]")));
            }
        }
        let plans = perms.iter().map(decompose).collect();
        Ok(PfgList { perms, plans })
    }

    /// Just the original graph: plain BP.
    pub fn ofg(n: usize) -> Self {
        PfgList::new(vec![StagePermutation::identity(n)]).expect("identity list is valid")
    }

    /// The first `size` stage orders fixing stages `0..p`, lexicographically.
    pub fn lexicographic(n: usize, p: usize, size: usize) -> Result<Self> {
        let perms: Vec<_> = Lexicographic::new(n, p)?.take(size).collect();
        if perms.len() < size {
            return Err(Error::InvalidParameter(format!(
                "only {} stage orders fix {p} of {n} stages, {size} requested",
                perms.len()
            )));
        }
        PfgList::new(perms)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        PfgList::new(read_pfg_list(path)?)
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn log_len(&self) -> usize {
        self.perms[0].len()
    }

    pub fn perms(&self) -> &[StagePermutation] {
        &self.perms
    }

    pub fn plan(&self, l: usize) -> &ShufflePlan {
        &self.plans[l]
    }

    /// The first `m` entries.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix {m} outside 1..={}",
                self.len()
            )));
        }
        Ok(PfgList {
            perms: self.perms[..m].to_vec(),
            plans: self.plans[..m].to_vec(),
        })
    }

    /// `𝔏` of every entry.
    pub fn plan_latencies(&self) -> Vec<u32> {
        let n = self.log_len();
        self.plans.iter().map(|p| plan_latency(p, n)).collect()
    }
}

/// Frozen pattern as seen by the original graph when decoding through `plan`.
pub fn shuffle_priors(code: &CodeSpec, plan: &ShufflePlan) -> Result<Vec<bool>> {
    apply_plan(code.frozen_mask(), plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BplStatus {
    Success,
    ListExhausted,
}

/// One BP run within a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttemptRecord {
    pub pfg_index: usize,
    pub iterations: usize,
    pub converged: bool,
    pub crc_pass: bool,
    pub plan_latency: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BplOutcome {
    /// Message of the passing attempt.
    pub msg: Option<Vec<u8>>,
    pub pfg_index: Option<usize>,
    pub status: BplStatus,
    /// Passed the CRC with the wrong message. Only set by [`BplOutcome::mark_truth`].
    pub crc_miss: bool,
    pub total_iterations: usize,
    pub latency_cc: u64,
    pub attempts: Vec<AttemptRecord>,
    #[serde(skip)]
    payloads: Vec<Vec<u8>>,
}

impl BplOutcome {
    pub fn is_success(&self) -> bool {
        self.status == BplStatus::Success
    }

    /// What the decoder hands on: the passing message, otherwise the payload
    /// of the last attempt.
    pub fn decided(&self) -> &[u8] {
        self.payloads.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Flags a CRC miss against the transmitted message.
    pub fn mark_truth(&mut self, truth: &[u8]) {
        self.crc_miss = self.msg.as_deref().is_some_and(|m| m != truth);
    }

    /// The outcome a decoder holding only the first `m` list entries would
    /// have produced. Serial decoding never looks past its first success, so
    /// this is exact.
    pub fn restrict(&self, m: usize, latencies: &[u32], n: usize) -> BplOutcome {
        let m = m.clamp(1, latencies.len());
        let keep = m.min(self.attempts.len());
        let success = self.pfg_index.filter(|&k| k < m);
        let attempts = self.attempts[..keep].to_vec();
        let iters: Vec<usize> = attempts.iter().map(|a| a.iterations).collect();
        BplOutcome {
            msg: self.msg.clone().filter(|_| success.is_some()),
            pfg_index: success,
            status: if success.is_some() {
                BplStatus::Success
            } else {
                BplStatus::ListExhausted
            },
            crc_miss: self.crc_miss && success.is_some(),
            total_iterations: iters.iter().sum(),
            latency_cc: schedule_latency(&iters, &latencies[..m], n),
            attempts,
            payloads: self.payloads[..keep].to_vec(),
        }
    }

    pub fn trace_json(&self) -> String {
        serde_json::to_string(&self.attempts).expect("trace serializes")
    }
}

/// Decoder for one code and one PFG list. Not shared between threads.
pub struct BplDecoder<'a> {
    code: &'a CodeSpec,
    list: &'a PfgList,
    masks: Vec<Vec<bool>>,
    latencies: Vec<u32>,
    bp: BpDecoder,
    llr: Vec<f64>,
}

impl<'a> BplDecoder<'a> {
    pub fn new(code: &'a CodeSpec, list: &'a PfgList, cfg: BpConfig) -> Result<Self> {
        if list.log_len() != code.log_len() {
            return Err(Error::InvalidParameter(format!(
                "PFG list has {} stages, code has {}",
                list.log_len(),
                code.log_len()
            )));
        }
        let masks = (0..list.len())
            .map(|l| shuffle_priors(code, list.plan(l)))
            .collect::<Result<_>>()?;
        Ok(BplDecoder {
            code,
            list,
            masks,
            latencies: list.plan_latencies(),
            bp: BpDecoder::new(code.log_len(), cfg)?,
            llr: vec![0.0; code.len()],
        })
    }

    pub fn list(&self) -> &PfgList {
        self.list
    }

    /// One BP attempt on PFG `l`: returns the BP record and the recovered
    /// `K'` information bits.
    pub fn attempt(&mut self, llr: &[f64], l: usize) -> Result<(AttemptRecord, Vec<u8>)> {
        let (out, info) = run_attempt(
            &mut self.bp,
            self.code,
            self.list.plan(l),
            &self.masks[l],
            llr,
            &mut self.llr,
        )?;
        let record = AttemptRecord {
            pfg_index: l,
            iterations: out.iterations,
            converged: out.converged,
            crc_pass: crc_check(&info, self.code.crc()),
            plan_latency: self.latencies[l],
        };
        Ok((record, info))
    }

    pub fn decode(&mut self, llr: &[f64]) -> Result<BplOutcome> {
        self.decode_prefix(llr, self.list.len())
    }

    /// Decodes with only the first `m` list entries.
    pub fn decode_prefix(&mut self, llr: &[f64], m: usize) -> Result<BplOutcome> {
        let m = m.clamp(1, self.list.len());
        let k = self.code.message_bits();
        let mut attempts = Vec::new();
        let mut payloads = Vec::new();
        let mut success = None;
        for l in 0..m {
            let (rec, mut info) = self.attempt(llr, l)?;
            let pass = rec.crc_pass;
            attempts.push(rec);
            info.truncate(k);
            payloads.push(info);
            if pass {
                success = Some(l);
                break;
            }
        }
        let iters: Vec<usize> = attempts.iter().map(|a| a.iterations).collect();
        Ok(BplOutcome {
            msg: success.map(|_| payloads.last().cloned().unwrap_or_default()),
            pfg_index: success,
            status: if success.is_some() {
                BplStatus::Success
            } else {
                BplStatus::ListExhausted
            },
            crc_miss: false,
            total_iterations: iters.iter().sum(),
            latency_cc: schedule_latency(&iters, &self.latencies[..m], self.code.log_len()),
            attempts,
            payloads,
        })
    }
}

/// Decodes `llr` on the graph of `plan`, whose shuffled frozen pattern is
/// `mask`. Returns the BP result and the recovered `K'` information bits.
pub(crate) fn run_attempt(
    bp: &mut BpDecoder,
    code: &CodeSpec,
    plan: &ShufflePlan,
    mask: &[bool],
    llr: &[f64],
    scratch: &mut Vec<f64>,
) -> Result<(BpOutput, Vec<u8>)> {
    if llr.len() != code.len() {
        return Err(Error::length(code.len(), llr.len()));
    }
    scratch.clear();
    scratch.extend_from_slice(llr);
    apply_plan_in_place(scratch, plan)?;
    let mut out = bp.decode(scratch, mask)?;
    invert_plan_in_place(&mut out.u_hat, plan)?;
    let info = code.extract_info(&out.u_hat);
    Ok((out, info))
}

/// One-shot list decode.
pub fn bpl_decode(llr: &[f64], code: &CodeSpec, cfg: &BpConfig, pfgs: &PfgList) -> Result<BplOutcome> {
    BplDecoder::new(code, pfgs, *cfg)?.decode(llr)
}

/// Clock cycles of a serial decode whose attempts took `iterations`, given
/// `𝔏` for every entry of the list that was loaded. Shuffling the next
/// graph's inputs and recovering the previous decision overlap with the
/// current BP run; the final recovery does not.
pub fn schedule_latency(iterations: &[usize], latencies: &[u32], n: usize) -> u64 {
    if iterations.is_empty() {
        return 0;
    }
    let n = n as u64;
    let k = iterations.len() - 1;
    let recover = |l: usize| latencies.get(l).map_or(0, |&v| (v as u64).saturating_sub(n));
    let prepare = |l: usize| latencies.get(l).map_or(0, |&v| 2 * v as u64 - n);
    let mut total = 0;
    for (l, &it) in iterations.iter().enumerate() {
        let decode = (n - 1) * it as u64;
        let before = if l == 0 { 0 } else { recover(l - 1) };
        total += decode.max(prepare(l + 1)).max(before);
    }
    total + (k as u64 + 1) + recover(k)
}

/// `Σ (n-1)·I_l + k + 1 + 𝔏_k - n`.
pub fn schedule_latency_simplified(iterations: &[usize], latencies: &[u32], n: usize) -> u64 {
    if iterations.is_empty() {
        return 0;
    }
    let k = iterations.len() - 1;
    let decode: u64 = iterations.iter().map(|&i| (n as u64 - 1) * i as u64).sum();
    decode + k as u64 + 1 + (latencies[k] as u64).saturating_sub(n as u64)
}

/// Iterations a parallel list decoder spends when every graph runs to `i_max`.
pub fn iavg_parallel(list_size: usize, i_max: usize) -> usize {
    list_size * i_max
}
