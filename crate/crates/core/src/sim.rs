//! Monte-Carlo experiments: BLER and iteration counts per SNR, latency
//! censuses and SG selection runs, configured from TOML.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{Arithmetic, BpConfig};
use crate::bpl::{BplDecoder, PfgList};
use crate::channel::generate_frame;
use crate::error::{Error, Result};
use crate::perm::{latency_census, LatencyCensus};
use crate::polar::{
    build_code, gaussian_construct, load_sequence, nr5g_sequence, CodeSpec, CrcPoly,
    ReliabilitySequence,
};
use crate::selection::{sg_run, FailureDataset, SelectionConfig, SelectionReport};

pub use crate::selftest::{perm_selftest, Check, Fault, SelfTestReport};

fn default_crc() -> String {
    "0xE21".into()
}

fn default_sequence() -> String {
    "5g".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    /// `log2(N)`.
    pub n: usize,
    /// Message bits.
    pub k: usize,
    /// Generator polynomial in hex with the leading term, or `"none"`.
    #[serde(default = "default_crc")]
    pub crc_poly: String,
    /// `5g`, `ga:<design Es/N0 dB>` or `file:<path>`.
    #[serde(default = "default_sequence")]
    pub sequence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Eb/N0 points in dB.
    pub snr: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderSection {
    pub i_max: usize,
    pub beta_r: f64,
    pub beta_l: f64,
    /// `float` or a fixed-point format such as `q7.2`.
    pub arithmetic: String,
}

impl Default for DecoderSection {
    fn default() -> Self {
        DecoderSection {
            i_max: 50,
            beta_r: 0.25,
            beta_l: 0.0,
            arithmetic: "q7.2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgSection {
    pub dataset_size: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sg_max_frames")]
    pub max_frames: u64,
}

fn default_sg_max_frames() -> u64 {
    10_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BplSection {
    /// `lexicographic`, `sg` or `file:<path>`.
    pub source: String,
    /// Leading stages kept fixed by generated lists.
    pub p: usize,
    /// One result row per size; each is a prefix of the longest list.
    pub list_sizes: Vec<usize>,
    pub sg: Option<SgSection>,
}

impl Default for BplSection {
    fn default() -> Self {
        BplSection {
            source: "lexicographic".into(),
            p: 0,
            list_sizes: vec![1],
            sg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub min_frames: u64,
    pub min_frame_errors: u64,
    pub max_frames: u64,
    /// 0 uses every available core.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            min_frames: 1000,
            min_frame_errors: 100,
            max_frames: 1_000_000,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: CodeSection,
    pub channel: ChannelSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub bpl: BplSection,
    #[serde(default)]
    pub run: RunSection,
    /// Directory that relative `file:` paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=crate::polar::MAX_LOG_LEN).contains(&self.code.n) {
            return bad(format!("code.n = {} out of range", self.code.n));
        }
        if self.channel.snr.is_empty() {
            return bad("channel.snr must list at least one point".into());
        }
        if self.channel.snr.iter().any(|s| !s.is_finite()) {
            return bad("channel.snr values must be finite".into());
        }
        if self.run.min_frame_errors < 1 {
            return bad("run.min_frame_errors must be at least 1".into());
        }
        if self.run.max_frames < 1 || self.run.min_frames > self.run.max_frames {
            return bad("need 1 <= run.max_frames and run.min_frames <= run.max_frames".into());
        }
        if self.bpl.list_sizes.is_empty() || self.bpl.list_sizes.contains(&0) {
            return bad("bpl.list_sizes must be non-empty and positive".into());
        }
        if self.bpl.p > self.code.n {
            return bad(format!("bpl.p = {} exceeds code.n", self.bpl.p));
        }
        if self.bpl.source == "sg" && self.bpl.sg.is_none() {
            return bad("bpl.source = \"sg\" needs a [bpl.sg] table".into());
        }
        self.crc()?;
        self.bp_config()?;
        Ok(())
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = PathBuf::from(p);
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path,
        }
    }

    pub fn crc(&self) -> Result<CrcPoly> {
        if self.code.crc_poly.eq_ignore_ascii_case("none") {
            Ok(CrcPoly::NONE)
        } else {
            CrcPoly::from_hex(&self.code.crc_poly).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn sequence(&self) -> Result<ReliabilitySequence> {
        let s = self.code.sequence.as_str();
        if s.eq_ignore_ascii_case("5g") {
            nr5g_sequence(self.code.n)
        } else if let Some(snr) = s.strip_prefix("ga:") {
            let snr: f64 = snr
                .parse()
                .map_err(|_| Error::Config(format!("bad design SNR in {s:?}")))?;
            gaussian_construct(self.code.n, snr)
        } else if let Some(path) = s.strip_prefix("file:") {
            load_sequence(self.resolve(path))
        } else {
            Err(Error::Config(format!("unknown sequence source {s:?}")))
        }
    }

    pub fn build_code(&self) -> Result<CodeSpec> {
        build_code(self.code.n, self.code.k, &self.sequence()?, self.crc()?)
    }

    pub fn bp_config(&self) -> Result<BpConfig> {
        let d = &self.decoder;
        let cfg = BpConfig {
            i_max: d.i_max,
            beta_r: d.beta_r,
            beta_l: d.beta_l,
            arithmetic: d
                .arithmetic
                .parse::<Arithmetic>()
                .map_err(|e| Error::Config(e.to_string()))?,
            sa_window: 3,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn max_list_size(&self) -> usize {
        self.bpl.list_sizes.iter().copied().max().unwrap_or(1)
    }

    pub fn selection_config(&self) -> Result<SelectionConfig> {
        let sg = self
            .bpl
            .sg
            .as_ref()
            .ok_or_else(|| Error::Config("missing [bpl.sg] table".into()))?;
        Ok(SelectionConfig {
            p: self.bpl.p,
            list_size: self.max_list_size(),
            dataset_size: sg.dataset_size,
            snr_db: sg.snr_db,
            seed: sg.seed,
            max_frames: sg.max_frames,
        })
    }

    /// The longest list the run needs, plus the selection report when the
    /// list came from SG.
    pub fn build_list(&self, code: &CodeSpec) -> Result<(PfgList, Option<SelectionReport>)> {
        let size = self.max_list_size();
        let n = self.code.n;
        let src = self.bpl.source.as_str();
        if size == 1 {
            return Ok((PfgList::ofg(n), None));
        }
        if src == "lexicographic" {
            Ok((PfgList::lexicographic(n, self.bpl.p, size)?, None))
        } else if src == "sg" {
            let (report, _) = sg_run(code, &self.selection_config()?, &self.bp_config()?)?;
            Ok((report.list.clone(), Some(report)))
        } else if let Some(path) = src.strip_prefix("file:") {
            let list = PfgList::from_file(self.resolve(path))?;
            if list.len() < size {
                return Err(Error::Config(format!(
                    "list file has {} entries, {size} requested",
                    list.len()
                )));
            }
            Ok((list.prefix(size)?, None))
        } else {
            Err(Error::Config(format!("unknown list source {src:?}")))
        }
    }
}

/// One CSV row: a decoder variant at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub decoder: String,
    pub list_size: usize,
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub bler: f64,
    pub i_avg: f64,
    pub mean_latency_cc: f64,
    pub miss_count: u64,
}

pub const CSV_HEADER: &str =
    "snr_db,decoder,list_size,frames,frame_errors,bit_errors,bler,i_avg,mean_latency_cc,miss_count";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counters {
    frames: u64,
    frame_errors: u64,
    bit_errors: u64,
    iterations: u64,
    latency: u64,
    misses: u64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.frames += o.frames;
        self.frame_errors += o.frame_errors;
        self.bit_errors += o.bit_errors;
        self.iterations += o.iterations;
        self.latency += o.latency;
        self.misses += o.misses;
    }
}

/// Frames per work unit. Fixed so results do not depend on the worker count.
pub const BATCH_FRAMES: u64 = 256;

/// Stopping rule, list variants and decoder settings of one simulation.
#[derive(Debug, Clone)]
pub struct PointPlan<'a> {
    pub code: &'a CodeSpec,
    pub list: &'a PfgList,
    pub bp: BpConfig,
    pub variants: Vec<usize>,
    pub seed: u64,
    pub run: RunSection,
}

/// Simulates one SNR for every list prefix in `plan.variants`. Every frame
/// is decoded once with the full list; shorter lists are read off its trace.
pub fn simulate_point(plan: &PointPlan, snr_db: f64) -> Result<Vec<BlerPoint>> {
    let code = plan.code;
    let n = code.log_len();
    let latencies = plan.list.plan_latencies();
    let variants: Vec<usize> = plan
        .variants
        .iter()
        .map(|&m| m.min(plan.list.len()))
        .collect();
    let mut totals = vec![Counters::default(); variants.len()];
    let mut next = 0u64;
    loop {
        let done = totals[0].frames >= plan.run.min_frames
            && totals.iter().all(|t| t.frame_errors >= plan.run.min_frame_errors);
        if done || next >= plan.run.max_frames {
            break;
        }
        let end = (next + BATCH_FRAMES).min(plan.run.max_frames);
        let per_frame: Vec<Vec<Counters>> = (next..end)
            .into_par_iter()
            .map_init(
                || BplDecoder::new(code, plan.list, plan.bp),
                |dec, i| -> Result<Vec<Counters>> {
                    let dec = dec.as_mut().map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    let frame = generate_frame(code, snr_db, plan.seed, i);
                    let full = dec.decode(&frame.llr)?;
                    Ok(variants
                        .iter()
                        .map(|&m| {
                            let mut out = full.restrict(m, &latencies, n);
                            out.mark_truth(&frame.msg);
                            let bits = out
                                .decided()
                                .iter()
                                .zip(&frame.msg)
                                .filter(|(a, b)| a != b)
                                .count() as u64;
                            Counters {
                                frames: 1,
                                frame_errors: u64::from(out.decided() != frame.msg.as_slice()),
                                bit_errors: bits,
                                iterations: out.total_iterations as u64,
                                latency: out.latency_cc,
                                misses: u64::from(out.crc_miss),
                            }
                        })
                        .collect())
                },
            )
            .collect::<Result<_>>()?;
        for frame in &per_frame {
            for (t, c) in totals.iter_mut().zip(frame) {
                t.add(c);
            }
        }
        next = end;
    }
    info!(
        "snr {snr_db}: {} frames, errors {:?}",
        next,
        totals.iter().map(|t| t.frame_errors).collect::<Vec<_>>()
    );
    Ok(variants
        .iter()
        .zip(&totals)
        .map(|(&m, t)| BlerPoint {
            snr_db,
            decoder: if m == 1 { "bp".into() } else { "bpl".into() },
            list_size: m,
            frames: t.frames,
            frame_errors: t.frame_errors,
            bit_errors: t.bit_errors,
            bler: t.frame_errors as f64 / t.frames.max(1) as f64,
            i_avg: t.iterations as f64 / t.frames.max(1) as f64,
            mean_latency_cc: t.latency as f64 / t.frames.max(1) as f64,
            miss_count: t.misses,
        })
        .collect())
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Serialize)]
pub struct BlerRun {
    pub config: ExperimentConfig,
    pub pfg_list: Vec<String>,
    pub selection: Option<SelectionReport>,
    pub points: Vec<BlerPoint>,
}

pub fn run_bler(cfg: &ExperimentConfig) -> Result<BlerRun> {
    cfg.validate()?;
    let code = cfg.build_code()?;
    let bp = cfg.bp_config()?;
    let (list, selection) = cfg.build_list(&code)?;
    let mut variants = cfg.bpl.list_sizes.clone();
    if let Some(&m) = variants.iter().find(|&&m| m > list.len()) {
        warn!("list has only {} graphs; size {m} is capped", list.len());
    }
    variants.iter_mut().for_each(|m| *m = (*m).min(list.len()));
    variants.dedup();
    let plan = PointPlan {
        code: &code,
        list: &list,
        bp,
        variants,
        seed: cfg.channel.seed,
        run: cfg.run.clone(),
    };
    let mut points = Vec::new();
    for &snr in &cfg.channel.snr {
        points.extend(with_workers(cfg.run.workers, || simulate_point(&plan, snr))??);
    }
    Ok(BlerRun {
        config: cfg.clone(),
        pfg_list: list.perms().iter().map(ToString::to_string).collect(),
        selection,
        points,
    })
}

pub fn write_csv<W: Write>(points: &[BlerPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6e},{:.4},{:.4},{}",
            p.snr_db,
            p.decoder,
            p.list_size,
            p.frames,
            p.frame_errors,
            p.bit_errors,
            p.bler,
            p.i_avg,
            p.mean_latency_cc,
            p.miss_count
        )?;
    }
    Ok(())
}

/// Full run description, including the resolved config and list.
pub fn write_json<W: Write>(run: &BlerRun, out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(out, run).map_err(std::io::Error::other)
}

/// Census plus its histogram CSV.
pub fn run_latency_census(n: usize, p: usize) -> Result<(LatencyCensus, String)> {
    let census = latency_census(n, p)?;
    let mut csv = Vec::new();
    census.write_csv(&mut csv).expect("writing to memory");
    Ok((census, String::from_utf8(csv).expect("ascii")))
}

/// Generates the failure dataset and selects the list for `cfg`.
pub fn run_sg(cfg: &ExperimentConfig) -> Result<(SelectionReport, FailureDataset)> {
    cfg.validate()?;
    let code = cfg.build_code()?;
    let sel = cfg.selection_config()?;
    let bp = cfg.bp_config()?;
    with_workers(cfg.run.workers, || sg_run(&code, &sel, &bp))?
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[code]
n = 6
k = 20
sequence = "ga:1.0"

[channel]
snr = [1.0, 3.0]
seed = 5

[decoder]
i_max = 30
arithmetic = "q7.2"

[bpl]
source = "lexicographic"
p = 2
list_sizes = [1, 4]

[run]
min_frames = 300
min_frame_errors = 20
max_frames = 2000
"#;

    #[test]
    fn config_parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.code.crc_poly, "0xE21");
        assert_eq!(cfg.build_code().unwrap().info_bits(), 31);
        assert_eq!(cfg.max_list_size(), 4);
        assert!(ExperimentConfig::from_toml(&SMALL.replace("snr = [1.0, 3.0]", "snr = []")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("min_frame_errors = 20", "min_frame_errors = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("q7.2", "q1.5")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("seed = 5", "seed = 5\nbogus = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("\"lexicographic\"", "\"sg\"")).is_err());
        let none = SMALL.replace("sequence", "crc_poly = \"none\"\nsequence");
        assert_eq!(ExperimentConfig::from_toml(&none).unwrap().build_code().unwrap().info_bits(), 20);
    }

    #[test]
    fn stopping_rule_and_schema() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let run = run_bler(&cfg).unwrap();
        assert_eq!(run.points.len(), 4);
        for p in &run.points {
            assert!(p.frames >= 300);
            assert!(p.frame_errors >= 20 || p.frames == 2000);
            assert!(p.frames % BATCH_FRAMES == 0 || p.frames == 2000);
            assert!((0.0..=1.0).contains(&p.bler));
        }
        let bp = &run.points[0];
        let bpl = &run.points[1];
        assert_eq!((bp.decoder.as_str(), bpl.decoder.as_str()), ("bp", "bpl"));
        assert!(bpl.frame_errors <= bp.frame_errors);
        let mut csv = Vec::new();
        write_csv(&run.points, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn census_csv() {
        let (c, csv) = run_latency_census(2, 0).unwrap();
        assert_eq!(c.plan_histogram.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(csv, "latency,count\n2,1\n4,1\n");
    }
}
