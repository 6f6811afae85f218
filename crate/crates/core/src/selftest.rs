//! Executable checks of the permutation decomposition.
//!
//! Every check runs against the library's shuffling and stage-update
//! routines unless a fault is injected, in which case a deliberately broken
//! variant is substituted so the affected checks can be seen to fail.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::perm::{
    binary_column, decompose_with, index_map_oracle, inversion_count, next_permutation,
    span_steps, sub_shuffle_in_place, update_stage, ShufflePlan, StagePermutation,
};

/// Deliberate defect for exercising the self-test itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    None,
    /// The lowest sub-shuffle swaps the wrong quarter blocks.
    SubShuffle,
    /// Labels strictly between the two ends stop shifting.
    UpdateStage,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "sub-shuffle" | "sub_shuffle" => Ok(Fault::SubShuffle),
            "update-stage" | "update_stage" => Ok(Fault::UpdateStage),
            _ => Err(Error::InvalidParameter(format!("unknown fault {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub cases: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelfTestReport {
    pub n_max: usize,
    pub sampled_n: usize,
    pub samples: usize,
    pub fault: Fault,
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tally {
    name: &'static str,
    cases: u64,
    failures: u64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            cases: 0,
            failures: 0,
        }
    }

    fn record(&mut self, ok: bool) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn finish(self) -> Check {
        Check {
            name: self.name,
            passed: self.failures == 0 && self.cases > 0,
            cases: self.cases,
            failures: self.failures,
        }
    }
}

struct Kit {
    fault: Fault,
}

impl Kit {
    fn shuffle<T>(&self, v: &mut [T], i: usize) {
        if self.fault == Fault::SubShuffle && i == 1 {
            // swaps positions 1 and 3 of every group of four
            for base in (0..v.len()).step_by(4) {
                v.swap(base + 1, base + 3);
            }
        } else {
            sub_shuffle_in_place(v, i);
        }
    }

    fn update(&self, pi_in: usize, s: usize, e: usize) -> usize {
        match self.fault {
            Fault::UpdateStage if pi_in != s && pi_in != s.min(e) && pi_in != s.max(e) => pi_in,
            _ => update_stage(pi_in, s, e),
        }
    }

    fn decompose(&self, pi: &StagePermutation) -> ShufflePlan {
        decompose_with(pi, |p, s, e| self.update(p, s, e))
    }

    fn apply_steps<T>(&self, v: &mut [T], steps: &[usize]) {
        for &j in steps {
            self.shuffle(v, j);
        }
    }

    /// `V_{i,j}` as a chain of sub-shuffles.
    fn transport<T: Clone>(&self, v: &[T], i: usize, j: usize) -> Vec<T> {
        let mut out = v.to_vec();
        self.apply_steps(&mut out, &span_steps(i, j));
        out
    }
}

fn all_perms(n: usize) -> Vec<StagePermutation> {
    let mut v: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(StagePermutation::new(v.clone()).expect("permutation"));
        if !next_permutation(&mut v) {
            return out;
        }
    }
}

/// `V_{i-1,i}` is an involution and swaps `b_{i-1}` with `b_i`.
fn check_involution(kit: &Kit, n_max: usize) -> Check {
    let mut t = Tally::new("shuffle_involution");
    for n in 2..=n_max {
        let idx: Vec<usize> = (0..1 << n).collect();
        for i in 1..n {
            let mut v = idx.clone();
            kit.shuffle(&mut v, i);
            kit.shuffle(&mut v, i);
            t.record(v == idx);
            let mut lo = binary_column(n, i - 1);
            kit.shuffle(&mut lo, i);
            t.record(lo == binary_column(n, i));
            let mut hi = binary_column(n, i);
            kit.shuffle(&mut hi, i);
            t.record(hi == binary_column(n, i - 1));
        }
    }
    t.finish()
}

/// `b_i · V_{i,j} = b_j`.
fn check_transport(kit: &Kit, n_max: usize) -> Check {
    let mut t = Tally::new("column_transport");
    for n in 1..=n_max {
        for i in 0..n {
            for j in 0..n {
                t.record(kit.transport(&binary_column(n, i), i, j) == binary_column(n, j));
            }
        }
    }
    t.finish()
}

/// Columns outside `[min, max]` are untouched, the others shift by
/// one towards `i`; also the label rule used by the decomposition.
fn check_shift(kit: &Kit, n_max: usize) -> Check {
    let mut t = Tally::new("column_shift");
    for n in 2..=n_max {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in (0..n).filter(|&k| k != i) {
                    let inside = (i.min(j)..=i.max(j)).contains(&k);
                    let expect = if !inside {
                        k
                    } else if i > j {
                        k + 1
                    } else {
                        k - 1
                    };
                    t.record(kit.transport(&binary_column(n, k), i, j) == binary_column(n, expect));
                    t.record(kit.update(k, i, j) == expect);
                }
                t.record(kit.update(i, i, j) == j);
            }
        }
    }
    t.finish()
}

/// A sub-shuffle swaps two columns of `B_π`, so no two columns
/// ever coincide.
fn check_distinct(kit: &Kit, perms: &[StagePermutation]) -> Check {
    let mut t = Tally::new("distinct_columns");
    for pi in perms {
        let n = pi.len();
        for i in 1..n {
            let cols: Vec<Vec<u8>> = pi
                .stages()
                .iter()
                .map(|&s| {
                    let mut c = binary_column(n, s);
                    kit.shuffle(&mut c, i);
                    c
                })
                .collect();
            let swapped: Vec<Vec<u8>> = pi
                .stages()
                .iter()
                .map(|&s| {
                    let s = if s == i - 1 {
                        i
                    } else if s == i {
                        i - 1
                    } else {
                        s
                    };
                    binary_column(n, s)
                })
                .collect();
            let mut uniq = cols.clone();
            uniq.sort();
            uniq.dedup();
            t.record(cols == swapped && uniq.len() == n);
        }
    }
    t.finish()
}

/// Column `i` is matched at step `i` and earlier matches survive.
fn check_matched(kit: &Kit, perms: &[StagePermutation]) -> Check {
    let mut t = Tally::new("matched_columns");
    for pi in perms {
        let n = pi.len();
        let plan = kit.decompose(pi);
        let mut cols: Vec<Vec<u8>> = pi.stages().iter().map(|&s| binary_column(n, s)).collect();
        let mut ok = true;
        for i in 0..n {
            for c in cols.iter_mut() {
                kit.apply_steps(c, plan.group(i));
            }
            ok &= (0..=i).all(|j| cols[j] == binary_column(n, j));
        }
        t.record(ok);
    }
    t.finish()
}

fn plan_cases(kit: &Kit, pi: &StagePermutation, oracle: &mut Tally, labels: &mut Tally) {
    let plan = kit.decompose(pi);
    let mut idx: Vec<usize> = (0..1 << pi.len()).collect();
    kit.apply_steps(&mut idx, plan.steps());
    oracle.record(idx == index_map_oracle(pi));
    let mut rows = pi.row_labels();
    kit.apply_steps(&mut rows, plan.steps());
    labels.record(rows.iter().enumerate().all(|(i, &r)| i == r));
}

/// Runs every check exhaustively up to `n_max` stages, plus `samples`
/// random stage orders at `sampled_n` for the oracle and the checks that
/// take a permutation.
pub fn perm_selftest(
    n_max: usize,
    sampled_n: usize,
    samples: usize,
    seed: u64,
    fault: Fault,
) -> Result<SelfTestReport> {
    if n_max == 0 || n_max > 8 {
        return Err(Error::InvalidParameter(format!(
            "exhaustive self-test needs 1 <= n_max <= 8, got {n_max}"
        )));
    }
    if sampled_n > crate::polar::MAX_LOG_LEN {
        return Err(Error::InvalidParameter(format!(
            "sampled length {sampled_n} too large"
        )));
    }
    let kit = Kit { fault };
    let mut perms: Vec<StagePermutation> = (1..=n_max).flat_map(all_perms).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if sampled_n > 0 {
        for _ in 0..samples {
            let mut v: Vec<usize> = (0..sampled_n).collect();
            v.shuffle(&mut rng);
            perms.push(StagePermutation::new(v)?);
        }
    }

    let mut oracle = Tally::new("plan_matches_oracle");
    let mut labels = Tally::new("row_labels_restored");
    let mut inversions = Tally::new("inversion_identity");
    for pi in &perms {
        plan_cases(&kit, pi, &mut oracle, &mut labels);
        inversions.record(kit.decompose(pi).displacement() == inversion_count(pi.stages()));
    }

    Ok(SelfTestReport {
        n_max,
        sampled_n,
        samples,
        fault,
        checks: vec![
            check_involution(&kit, n_max.max(sampled_n)),
            check_transport(&kit, n_max.max(sampled_n)),
            check_shift(&kit, n_max.max(sampled_n)),
            check_distinct(&kit, &perms),
            check_matched(&kit, &perms),
            oracle.finish(),
            labels.finish(),
            inversions.finish(),
        ],
    })
}
