//! Greedy sequential (SG) selection of a PFG list from a failure dataset.
//!
//! The dataset holds frames that fail the CRC after BP on the original
//! graph. Every candidate graph is decoded once over the whole dataset,
//! giving one failure bit per (candidate, frame). The list then grows one
//! graph at a time: pick the row with the fewest failures among the frames
//! still uncorrected, and keep only the frames that row also fails.

use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{BpConfig, BpDecoder};
use crate::bpl::{run_attempt, shuffle_priors, BplDecoder, PfgList};
use crate::channel::{generate_frame, Quantizer};
use crate::error::{Error, Result};
use crate::perm::{decompose, factorial, Lexicographic, StagePermutation, MAX_ENUMERATED_STAGES};
use crate::polar::{crc_check, CodeSpec, CodeSpecRecord};

/// One stored failure: the decoder input and the transmitted message.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureFrame {
    pub llr: Vec<f32>,
    pub msg: Vec<u8>,
}

impl FailureFrame {
    pub fn llr_f64(&self) -> Vec<f64> {
        self.llr.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub code: CodeSpecRecord,
    pub snr_db: f64,
    pub seed: u64,
    /// Fixed-point format the LLRs were rounded to; absent for float.
    pub quantizer: Option<Quantizer>,
    pub frames: usize,
    /// Frames simulated to collect the failures.
    pub simulated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureDataset {
    pub meta: DatasetMeta,
    pub frames: Vec<FailureFrame>,
}

const MAGIC: &[u8; 8] = b"PBPLDS01";

impl FailureDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `PBPLDS01`, a little-endian `u32` header length, the JSON header,
    /// then per frame `N` little-endian `f32` LLRs and `K` message bytes.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut meta = self.meta.clone();
        meta.frames = self.frames.len();
        let header = serde_json::to_vec(&meta).map_err(std::io::Error::other)?;
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        for f in &self.frames {
            for v in &f.llr {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(&f.msg)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| fmt("truncated dataset"))?;
        if &magic != MAGIC {
            return Err(fmt("not a failure dataset"));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len).map_err(|_| fmt("truncated dataset"))?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header).map_err(|_| fmt("truncated header"))?;
        let meta: DatasetMeta =
            serde_json::from_slice(&header).map_err(|e| fmt(&format!("bad header: {e}")))?;
        let code = CodeSpec::from_record(&meta.code)?;
        let (n, k) = (code.len(), code.message_bits());
        let mut frames = Vec::with_capacity(meta.frames);
        let mut buf = vec![0u8; 4 * n + k];
        for i in 0..meta.frames {
            input
                .read_exact(&mut buf)
                .map_err(|_| fmt(&format!("truncated at frame {i}")))?;
            let llr = buf[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            frames.push(FailureFrame {
                llr,
                msg: buf[4 * n..].to_vec(),
            });
        }
        Ok(FailureDataset { meta, frames })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FailureDataset::read_from(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Leading stages kept in place.
    pub p: usize,
    pub list_size: usize,
    pub dataset_size: usize,
    pub snr_db: f64,
    pub seed: u64,
    /// Give up collecting failures after this many simulated frames.
    pub max_frames: u64,
}

impl SelectionConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p > n {
            return Err(Error::InvalidParameter(format!("p = {} exceeds n = {n}", self.p)));
        }
        if n - self.p > MAX_ENUMERATED_STAGES {
            return Err(Error::EnumerationTooLarge {
                size: factorial(n - self.p),
                limit: factorial(MAX_ENUMERATED_STAGES),
            });
        }
        if self.list_size == 0 {
            return Err(Error::InvalidParameter("list size must be at least 1".into()));
        }
        Ok(())
    }
}

/// LLRs as the decoder will see them after storage: quantized in fixed
/// mode, rounded to `f32` otherwise.
fn storable(llr: &[f64], bp: &BpConfig) -> Vec<f32> {
    match bp.arithmetic {
        crate::bp::Arithmetic::Fixed(q) => llr.iter().map(|&v| q.quantize(v) as f32).collect(),
        crate::bp::Arithmetic::Float => llr.iter().map(|&v| v as f32).collect(),
    }
}

const BATCH: u64 = 256;

/// Simulates frames until `dataset_size` of them fail the CRC after BP on
/// the original graph, or `max_frames` have been tried.
pub fn gen_dataset(code: &CodeSpec, cfg: &SelectionConfig, bp: &BpConfig) -> Result<FailureDataset> {
    bp.validate()?;
    let mut frames = Vec::with_capacity(cfg.dataset_size);
    let mut next = 0u64;
    while frames.len() < cfg.dataset_size && next < cfg.max_frames {
        let end = (next + BATCH).min(cfg.max_frames);
        let found: Vec<Option<FailureFrame>> = (next..end)
            .into_par_iter()
            .map_init(
                || BpDecoder::new(code.log_len(), *bp).expect("validated config"),
                |dec, i| {
                    let f = generate_frame(code, cfg.snr_db, cfg.seed, i);
                    let llr = storable(&f.llr, bp);
                    let input: Vec<f64> = llr.iter().map(|&v| f64::from(v)).collect();
                    let out = dec.decode(&input, code.frozen_mask()).expect("length matches");
                    let info = code.extract_info(&out.u_hat);
                    (!crc_check(&info, code.crc())).then_some(FailureFrame { llr, msg: f.msg })
                },
            )
            .collect();
        // Frames past the last failure kept do not count as simulated.
        let mut consumed = end - next;
        for (off, f) in found.into_iter().enumerate() {
            if let Some(f) = f {
                frames.push(f);
                if frames.len() == cfg.dataset_size {
                    consumed = off as u64 + 1;
                    break;
                }
            }
        }
        next += consumed;
        info!("dataset: {} failures after {next} frames", frames.len());
    }
    if frames.len() < cfg.dataset_size {
        warn!(
            "collected only {} of {} failures in {} frames",
            frames.len(),
            cfg.dataset_size,
            cfg.max_frames
        );
    }
    Ok(FailureDataset {
        meta: DatasetMeta {
            code: code.to_record(),
            snr_db: cfg.snr_db,
            seed: cfg.seed,
            quantizer: match bp.arithmetic {
                crate::bp::Arithmetic::Fixed(q) => Some(q),
                crate::bp::Arithmetic::Float => None,
            },
            frames: frames.len(),
            simulated: next,
        },
        frames,
    })
}

/// Every stage order fixing stages `0..p`, identity first.
pub fn enumerate_pfgs(n: usize, p: usize) -> Result<Vec<StagePermutation>> {
    if p > n {
        return Err(Error::InvalidParameter(format!("p = {p} exceeds n = {n}")));
    }
    if n - p > MAX_ENUMERATED_STAGES {
        return Err(Error::EnumerationTooLarge {
            size: factorial(n - p),
            limit: factorial(MAX_ENUMERATED_STAGES),
        });
    }
    Ok(Lexicographic::new(n, p)?.collect())
}

/// Failure bits: one row per candidate, one column per dataset frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureTable {
    rows: Vec<Vec<u64>>,
    cols: usize,
}

fn pack(bits: impl Iterator<Item = bool>, cols: usize) -> Vec<u64> {
    let mut words = vec![0u64; cols.div_ceil(64)];
    for (c, b) in bits.enumerate() {
        if b {
            words[c / 64] |= 1 << (c % 64);
        }
    }
    words
}

impl FailureTable {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::length(cols, r.len()));
        }
        Ok(FailureTable {
            rows: rows.into_iter().map(|r| pack(r.into_iter(), cols)).collect(),
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        (self.rows[row][col / 64] >> (col % 64)) & 1 == 1
    }

    pub fn weight(&self, row: usize) -> usize {
        self.rows[row].iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn row(&self, row: usize) -> Vec<bool> {
        (0..self.cols).map(|c| self.get(row, c)).collect()
    }
}

/// Failure row of one candidate over the dataset: bit set = CRC failed.
pub fn bp_evaluate(
    pfg: &StagePermutation,
    dataset: &FailureDataset,
    code: &CodeSpec,
    bp: &BpConfig,
) -> Result<Vec<bool>> {
    let plan = decompose(pfg);
    let mask = shuffle_priors(code, &plan)?;
    dataset
        .frames
        .par_iter()
        .map_init(
            || (BpDecoder::new(code.log_len(), *bp), Vec::new()),
            |(dec, scratch), f| {
                let dec = dec.as_mut().map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let (_, info) = run_attempt(dec, code, &plan, &mask, &f.llr_f64(), scratch)?;
                Ok(!crc_check(&info, code.crc()))
            },
        )
        .collect()
}

/// Evaluates every candidate; rows follow candidate order.
pub fn build_table(
    candidates: &[StagePermutation],
    dataset: &FailureDataset,
    code: &CodeSpec,
    bp: &BpConfig,
) -> Result<FailureTable> {
    let rows = candidates
        .iter()
        .map(|c| bp_evaluate(c, dataset, code, bp))
        .collect::<Result<Vec<_>>>()?;
    Ok(FailureTable {
        rows: rows.iter().map(|r| pack(r.iter().copied(), dataset.len())).collect(),
        cols: dataset.len(),
    })
}

/// Lowest-weight row not yet taken; ties go to the lowest index.
pub fn select_best_list(table: &FailureTable, taken: &[bool]) -> Result<usize> {
    (0..table.rows())
        .filter(|&r| !taken.get(r).copied().unwrap_or(false))
        .min_by_key(|&r| (table.weight(r), r))
        .ok_or(Error::NoCandidates)
}

/// Drops the frames the chosen row corrects, from both table and dataset.
pub fn update_dataset(
    table: &FailureTable,
    dataset: &FailureDataset,
    chosen: usize,
) -> (FailureTable, FailureDataset) {
    let keep: Vec<usize> = (0..table.cols).filter(|&c| table.get(chosen, c)).collect();
    let rows = table
        .rows
        .iter()
        .map(|r| pack(keep.iter().map(|&c| (r[c / 64] >> (c % 64)) & 1 == 1), keep.len()))
        .collect();
    let frames: Vec<FailureFrame> = keep.iter().map(|&c| dataset.frames[c].clone()).collect();
    let mut meta = dataset.meta.clone();
    meta.frames = frames.len();
    (
        FailureTable {
            rows,
            cols: keep.len(),
        },
        FailureDataset { meta, frames },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    pub candidate: usize,
    pub pfg: String,
    pub weight: usize,
    pub columns: usize,
    /// `weight / columns`: failure rate of this graph given all earlier ones failed.
    pub conditional_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    #[serde(skip)]
    pub list: PfgList,
    pub perms: Vec<String>,
    pub dataset_frames: usize,
    pub candidates: usize,
    pub steps: Vec<SelectionStep>,
    /// The dataset ran out before the requested list size was reached.
    pub truncated: bool,
}

/// Runs the greedy selection on an existing dataset.
pub fn sg_select(
    code: &CodeSpec,
    dataset: &FailureDataset,
    p: usize,
    list_size: usize,
    bp: &BpConfig,
) -> Result<SelectionReport> {
    let n = code.log_len();
    let candidates = enumerate_pfgs(n, p)?;
    let mut chosen = vec![0usize];
    let mut steps = Vec::new();
    let mut truncated = false;
    if list_size > 1 {
        let mut table = build_table(&candidates, dataset, code, bp)?;
        let mut data = dataset.clone();
        let mut taken = vec![false; candidates.len()];
        taken[0] = true;
        while chosen.len() < list_size {
            if table.cols() == 0 {
                warn!(
                    "dataset exhausted after {} graphs, list truncated",
                    chosen.len()
                );
                truncated = true;
                break;
            }
            let best = match select_best_list(&table, &taken) {
                Ok(b) => b,
                Err(Error::NoCandidates) => {
                    warn!("candidates exhausted after {} graphs", chosen.len());
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let weight = table.weight(best);
            steps.push(SelectionStep {
                candidate: best,
                pfg: candidates[best].to_string(),
                weight,
                columns: table.cols(),
                conditional_rate: weight as f64 / table.cols() as f64,
            });
            taken[best] = true;
            chosen.push(best);
            (table, data) = update_dataset(&table, &data, best);
        }
    }
    let perms: Vec<StagePermutation> = chosen.iter().map(|&c| candidates[c].clone()).collect();
    Ok(SelectionReport {
        perms: perms.iter().map(ToString::to_string).collect(),
        list: PfgList::new(perms)?,
        dataset_frames: dataset.len(),
        candidates: candidates.len(),
        steps,
        truncated,
    })
}

/// Collects a failure dataset and selects a list from it.
pub fn sg_run(
    code: &CodeSpec,
    cfg: &SelectionConfig,
    bp: &BpConfig,
) -> Result<(SelectionReport, FailureDataset)> {
    cfg.validate(code.log_len())?;
    let dataset = if cfg.list_size > 1 {
        gen_dataset(code, cfg, bp)?
    } else {
        FailureDataset {
            meta: DatasetMeta {
                code: code.to_record(),
                snr_db: cfg.snr_db,
                seed: cfg.seed,
                quantizer: None,
                frames: 0,
                simulated: 0,
            },
            frames: Vec::new(),
        }
    };
    let report = sg_select(code, &dataset, cfg.p, cfg.list_size, bp)?;
    Ok((report, dataset))
}

/// Paired comparison of two lists on the same failure frames. A frame counts
/// as corrected when the list recovers the transmitted message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairedComparison {
    pub frames: usize,
    pub a_corrected: usize,
    pub b_corrected: usize,
    pub only_a: usize,
    pub only_b: usize,
}

impl PairedComparison {
    /// McNemar-style check that `a` beats `b` at the two-sided 95% level.
    pub fn a_significantly_better(&self) -> bool {
        let (b, c) = (self.only_a as f64, self.only_b as f64);
        b > c && (b - c) > 1.96 * (b + c).sqrt()
    }
}

pub fn compare_lists(
    code: &CodeSpec,
    dataset: &FailureDataset,
    a: &PfgList,
    b: &PfgList,
    bp: &BpConfig,
) -> Result<PairedComparison> {
    let corrected = |list: &PfgList| -> Result<Vec<bool>> {
        dataset
            .frames
            .par_iter()
            .map_init(
                || BplDecoder::new(code, list, *bp),
                |dec, f| {
                    let dec = dec.as_mut().map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    let out = dec.decode(&f.llr_f64())?;
                    Ok(out.msg.as_deref() == Some(f.msg.as_slice()))
                },
            )
            .collect()
    };
    let ra = corrected(a)?;
    let rb = corrected(b)?;
    Ok(PairedComparison {
        frames: dataset.len(),
        a_corrected: ra.iter().filter(|&&x| x).count(),
        b_corrected: rb.iter().filter(|&&x| x).count(),
        only_a: ra.iter().zip(&rb).filter(|(&x, &y)| x && !y).count(),
        only_b: ra.iter().zip(&rb).filter(|(&x, &y)| !x && y).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{build_code, nr5g_sequence, CrcPoly};

    fn code() -> CodeSpec {
        build_code(5, 10, &nr5g_sequence(5).unwrap(), CrcPoly::CRC11_NR).unwrap()
    }

    fn cfg(size: usize) -> SelectionConfig {
        SelectionConfig {
            p: 1,
            list_size: 4,
            dataset_size: size,
            snr_db: 0.0,
            seed: 3,
            max_frames: 100_000,
        }
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(enumerate_pfgs(10, 4).unwrap().len(), 720);
        assert_eq!(enumerate_pfgs(5, 5).unwrap(), vec![StagePermutation::identity(5)]);
        let three = enumerate_pfgs(3, 0).unwrap();
        assert_eq!(three.len(), 6);
        assert!(three[0].is_identity());
        assert!(matches!(
            enumerate_pfgs(12, 1),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn best_row_and_update() {
        let t = FailureTable::from_rows(vec![
            vec![true, true, true, true, true],
            vec![true, false, true, false, true],
            vec![false, true, true, false, false],
            vec![false, true, false, true, true],
        ])
        .unwrap();
        assert_eq!(
            (0..4).map(|r| t.weight(r)).collect::<Vec<_>>(),
            vec![5, 3, 2, 3]
        );
        assert_eq!(select_best_list(&t, &[true]).unwrap(), 2);
        assert_eq!(select_best_list(&t, &[true, false, true]).unwrap(), 1);
        assert!(matches!(
            select_best_list(&t, &[true; 4]),
            Err(Error::NoCandidates)
        ));
        let w = FailureTable::from_rows(vec![vec![true; 5], vec![true, true, true, false, false], vec![true, true, true, false, false]]).unwrap();
        assert_eq!(select_best_list(&w, &[]).unwrap(), 1);

        let ds = FailureDataset {
            meta: DatasetMeta {
                code: code().to_record(),
                snr_db: 0.0,
                seed: 0,
                quantizer: None,
                frames: 5,
                simulated: 5,
            },
            frames: (0..5)
                .map(|i| FailureFrame {
                    llr: vec![i as f32; 32],
                    msg: vec![0; 10],
                })
                .collect(),
        };
        let (t2, d2) = update_dataset(&t, &ds, 1);
        assert_eq!(t2.cols(), 3);
        assert_eq!(d2.len(), 3);
        assert_eq!(d2.frames[1].llr[0], 2.0);
        assert_eq!(t2.row(2), vec![false, true, false]);
        let (t3, _) = update_dataset(&t, &ds, 0);
        assert_eq!(t3, t);
        let zero = FailureTable::from_rows(vec![vec![false; 5]]).unwrap();
        assert_eq!(update_dataset(&zero, &ds, 0).0.cols(), 0);
    }

    #[test]
    fn dataset_replays_and_round_trips() {
        let c = code();
        let bp = BpConfig::default();
        let ds = gen_dataset(&c, &cfg(20), &bp).unwrap();
        assert_eq!(ds.len(), 20);
        assert!(ds.meta.simulated >= 20);
        let row = bp_evaluate(&StagePermutation::identity(5), &ds, &c, &bp).unwrap();
        assert!(row.iter().all(|&b| b));

        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PBPLDS01");
        let back = FailureDataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert!(FailureDataset::read_from(&buf[..buf.len() - 1]).is_err());
        assert!(FailureDataset::read_from(&b"garbage!...."[..]).is_err());
    }

    #[test]
    fn max_frames_guard() {
        let c = code();
        let mut cfg = cfg(5);
        cfg.snr_db = 40.0;
        cfg.max_frames = 300;
        let ds = gen_dataset(&c, &cfg, &BpConfig::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.meta.simulated, 300);
    }

    #[test]
    fn greedy_selection_properties() {
        let c = code();
        let bp = BpConfig::default();
        let ds = gen_dataset(&c, &cfg(60), &bp).unwrap();
        let rep = sg_select(&c, &ds, 1, 4, &bp).unwrap();
        assert!(rep.list.perms()[0].is_identity());
        let cands = enumerate_pfgs(5, 1).unwrap();
        let table = build_table(&cands, &ds, &c, &bp).unwrap();
        if let Some(first) = rep.steps.first() {
            let min = (1..cands.len()).map(|r| table.weight(r)).min().unwrap();
            assert_eq!(first.weight, min);
            assert_eq!(first.columns, 60);
        }
        for w in rep.steps.windows(2) {
            assert_eq!(w[1].columns, w[0].weight);
        }
        assert_eq!(rep, sg_select(&c, &ds, 1, 4, &bp).unwrap());

        let one = sg_select(&c, &ds, 1, 1, &bp).unwrap();
        assert_eq!(one.list.len(), 1);
        assert!(one.steps.is_empty());
    }

    #[test]
    fn paired_significance() {
        let p = |only_a, only_b| PairedComparison {
            frames: 100,
            a_corrected: 0,
            b_corrected: 0,
            only_a,
            only_b,
        };
        assert!(p(30, 10).a_significantly_better());
        assert!(!p(12, 10).a_significantly_better());
        assert!(!p(10, 30).a_significantly_better());
    }
}
