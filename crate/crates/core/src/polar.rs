//! Polar code construction, encoding and CRC handling.
//!
//! Everything here uses natural (non-bit-reversed) indexing: `u` is encoded as
//! `x = u · F^{⊗n}` with `F = [1 0; 1 1]`, and stage `j` of the factor graph
//! pairs indices that differ in bit `j`.
//!
//! Bits are carried as `u8` values in `{0, 1}`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported `log2(N)`.
pub const MAX_LOG_LEN: usize = 20;

const NR5G_SEQUENCE: &str = include_str!("../assets/nr5g_reliability_1024.txt");

/// A binary CRC generator polynomial.
///
/// The coefficients are stored with bit `d` holding the coefficient of
/// `x^d`, so the leading term is included (CRC-11 of 5G NR is `0xE21`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrcPoly {
    coeffs: u64,
    degree: usize,
}

impl CrcPoly {
    /// `x^11 + x^10 + x^9 + x^5 + 1`, the 5G NR uplink CRC-11.
    pub const CRC11_NR: CrcPoly = CrcPoly {
        coeffs: 0xE21,
        degree: 11,
    };

    /// The trivial polynomial `1`: zero CRC bits, every word passes.
    pub const NONE: CrcPoly = CrcPoly {
        coeffs: 1,
        degree: 0,
    };

    pub fn new(coeffs: u64) -> Result<Self> {
        if coeffs == 0 {
            return Err(Error::InvalidParameter("CRC polynomial is zero".into()));
        }
        let degree = 63 - coeffs.leading_zeros() as usize;
        if coeffs & 1 == 0 {
            return Err(Error::InvalidParameter(format!(
                "CRC polynomial {coeffs:#x} has a zero constant term"
            )));
        }
        Ok(CrcPoly { coeffs, degree })
    }

    /// Parses `0x...` or bare hex digits.
    pub fn from_hex(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches("0x").trim_start_matches("0X");
        let coeffs = u64::from_str_radix(digits, 16)
            .map_err(|e| Error::InvalidParameter(format!("bad CRC polynomial {s:?}: {e}")))?;
        Self::new(coeffs)
    }

    pub fn to_hex(&self) -> String {
        format!("{:#x}", self.coeffs)
    }

    /// Number of CRC bits `P`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> u64 {
        self.coeffs
    }

    /// Remainder of `bits(x) · x^P mod g(x)`, first bit = highest power.
    /// Register starts at zero and no output XOR is applied.
    pub fn remainder(&self, bits: &[u8]) -> Vec<u8> {
        let p = self.degree;
        if p == 0 {
            return Vec::new();
        }
        let mask = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };
        let low = self.coeffs & mask;
        let mut reg = 0u64;
        for &b in bits {
            let top = ((reg >> (p - 1)) & 1) as u8 ^ (b & 1);
            reg = (reg << 1) & mask;
            if top == 1 {
                reg ^= low;
            }
        }
        (0..p).rev().map(|i| ((reg >> i) & 1) as u8).collect()
    }
}

impl fmt::Display for CrcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for d in (0..=self.degree).rev() {
            if (self.coeffs >> d) & 1 == 1 {
                if !first {
                    f.write_str(" + ")?;
                }
                first = false;
                match d {
                    0 => f.write_str("1")?,
                    1 => f.write_str("x")?,
                    _ => write!(f, "x^{d}")?,
                }
            }
        }
        Ok(())
    }
}

/// Appends the CRC of `msg` to it.
pub fn crc_attach(msg: &[u8], crc: &CrcPoly) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.len() + crc.degree());
    out.extend_from_slice(msg);
    out.extend(crc.remainder(msg));
    out
}

/// True iff the information word (message followed by CRC) divides evenly.
pub fn crc_check(info: &[u8], crc: &CrcPoly) -> bool {
    let p = crc.degree();
    if info.len() < p {
        return false;
    }
    let (msg, tail) = info.split_at(info.len() - p);
    crc.remainder(msg) == tail
}

/// Bit-channel indices ordered from least to most reliable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliabilitySequence {
    order: Vec<usize>,
}

impl ReliabilitySequence {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        validate_permutation(&order)?;
        Ok(ReliabilitySequence { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The nested sub-sequence for a shorter code: entries `< len`, in order.
    pub fn restrict(&self, len: usize) -> Result<Self> {
        if len > self.order.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot restrict a length-{} sequence to {len}",
                self.order.len()
            )));
        }
        Self::new(self.order.iter().copied().filter(|&i| i < len).collect())
    }
}

pub(crate) fn validate_permutation(values: &[usize]) -> Result<()> {
    let len = values.len();
    let mut seen = vec![false; len];
    for &v in values {
        if v >= len {
            return Err(Error::InvalidPermutation {
                len,
                reason: format!("entry {v} out of range"),
            });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::InvalidPermutation {
                len,
                reason: format!("entry {v} repeated"),
            });
        }
    }
    Ok(())
}

/// The 5G NR reliability sequence (TS 38.212 Table 5.3.1.2-1) restricted to
/// length `2^n`, `n <= 10`.
pub fn nr5g_sequence(n: usize) -> Result<ReliabilitySequence> {
    if !(1..=10).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "5G NR sequence exists for 1 <= n <= 10, got {n}"
        )));
    }
    let full = parse_sequence(NR5G_SEQUENCE, Path::new("<builtin 5G NR>"))?;
    full.restrict(1 << n)
}

/// Reads a sequence file: one index per line, least reliable first.
/// Blank lines and `#` comments are ignored.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<ReliabilitySequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text, path)
}

fn parse_sequence(text: &str, path: &Path) -> Result<ReliabilitySequence> {
    let mut order = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<usize>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("{line:?}: {e}"),
        })?;
        order.push(v);
    }
    ReliabilitySequence::new(order)
}

/// J-function approximation used by Gaussian-approximation density evolution.
fn ln_phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < 10.0 {
        (-0.4527 * x.powf(0.86) + 0.0218).min(0.0)
    } else {
        0.5 * (std::f64::consts::PI / x).ln() - x / 4.0 + (1.0 - 10.0 / (7.0 * x)).ln()
    }
}

fn inv_ln_phi(target: f64) -> f64 {
    if target >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while ln_phi(hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_phi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Check-node update of mean LLRs: `phi^-1(1 - (1 - phi(a))(1 - phi(b)))`.
fn check_mean(a: f64, b: f64) -> f64 {
    let (la, lb) = (ln_phi(a), ln_phi(b));
    let hi = la.max(lb);
    // ln(pa + pb)
    let lse = hi + ((la - hi).exp() + (lb - hi).exp()).ln();
    // ln(pa + pb - pa·pb)
    let target = lse + (-(la + lb - lse).exp()).ln_1p();
    inv_ln_phi(target.min(0.0))
}

/// Gaussian-approximation construction for a length-`2^n` code.
///
/// `design_snr_db` is the per-symbol SNR `Es/N0`; the channel mean LLR is
/// `4·Es/N0`. Ties are broken by ascending index.
pub fn gaussian_construct(n: usize, design_snr_db: f64) -> Result<ReliabilitySequence> {
    if !(1..=MAX_LOG_LEN).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "log2 length must be in 1..={MAX_LOG_LEN}, got {n}"
        )));
    }
    let len = 1usize << n;
    let m0 = 4.0 * 10f64.powf(design_snr_db / 10.0);
    let mut mean = vec![m0; len];
    for j in (0..n).rev() {
        let half = 1usize << j;
        for base in (0..len).step_by(2 * half) {
            for i in base..base + half {
                let (a, b) = (mean[i], mean[i + half]);
                mean[i] = check_mean(a, b);
                mean[i + half] = a + b;
            }
        }
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(a.cmp(&b)));
    ReliabilitySequence::new(order)
}

/// An `(N, K)` polar code with `P` CRC bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSpec {
    n: usize,
    k: usize,
    crc: CrcPoly,
    frozen: Vec<bool>,
    info_positions: Vec<usize>,
}

impl CodeSpec {
    /// Builds a code directly from a frozen mask.
    pub fn from_frozen_mask(n: usize, k: usize, crc: CrcPoly, frozen: Vec<bool>) -> Result<Self> {
        if !(1..=MAX_LOG_LEN).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "log2 length must be in 1..={MAX_LOG_LEN}, got {n}"
            )));
        }
        let len = 1usize << n;
        if frozen.len() != len {
            return Err(Error::length(len, frozen.len()));
        }
        let info_positions: Vec<usize> = (0..len).filter(|&i| !frozen[i]).collect();
        if info_positions.len() != k + crc.degree() {
            return Err(Error::InvalidParameter(format!(
                "frozen mask leaves {} unfrozen positions, expected K + P = {}",
                info_positions.len(),
                k + crc.degree()
            )));
        }
        Ok(CodeSpec {
            n,
            k,
            crc,
            frozen,
            info_positions,
        })
    }

    /// `log2(N)`.
    pub fn log_len(&self) -> usize {
        self.n
    }

    /// Code length `N`.
    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }

    /// Message bits `K`.
    pub fn message_bits(&self) -> usize {
        self.k
    }

    /// CRC bits `P`.
    pub fn crc_bits(&self) -> usize {
        self.crc.degree()
    }

    /// Information bits `K' = K + P`.
    pub fn info_bits(&self) -> usize {
        self.k + self.crc.degree()
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.len() as f64
    }

    pub fn crc(&self) -> &CrcPoly {
        &self.crc
    }

    /// `true` = frozen.
    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    /// Unfrozen indices in ascending order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Maps message bits onto the `u` vector (CRC attached, frozen = 0).
    pub fn u_vector(&self, msg: &[u8]) -> Result<Vec<u8>> {
        if msg.len() != self.k {
            return Err(Error::length(self.k, msg.len()));
        }
        let info = crc_attach(msg, &self.crc);
        let mut u = vec![0u8; self.len()];
        for (&pos, &bit) in self.info_positions.iter().zip(&info) {
            u[pos] = bit;
        }
        Ok(u)
    }

    /// Reads the `K'` information bits of a natural-order `u` estimate.
    pub fn extract_info(&self, u: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| u[p]).collect()
    }

    pub fn to_record(&self) -> CodeSpecRecord {
        CodeSpecRecord {
            n: self.n,
            k: self.k,
            p: self.crc.degree(),
            crc_poly: self.crc.to_hex(),
            frozen_mask: mask_to_hex(&self.frozen),
        }
    }

    pub fn from_record(rec: &CodeSpecRecord) -> Result<Self> {
        let crc = CrcPoly::from_hex(&rec.crc_poly)?;
        if crc.degree() != rec.p {
            return Err(Error::Config(format!(
                "P = {} disagrees with CRC polynomial degree {}",
                rec.p,
                crc.degree()
            )));
        }
        let frozen = mask_from_hex(&rec.frozen_mask, 1usize << rec.n)?;
        Self::from_frozen_mask(rec.n, rec.k, crc, frozen)
    }
}

/// Serializable form of a [`CodeSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpecRecord {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub crc_poly: String,
    /// Hex bitmap, index `4d` is the most significant bit of digit `d`.
    pub frozen_mask: String,
}

fn mask_to_hex(mask: &[bool]) -> String {
    mask.chunks(4)
        .map(|c| {
            let v = c
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << (3 - i)));
            char::from_digit(v, 16).unwrap_or('0')
        })
        .collect()
}

fn mask_from_hex(s: &str, len: usize) -> Result<Vec<bool>> {
    let digits: Vec<u32> = s
        .trim()
        .chars()
        .map(|c| {
            c.to_digit(16)
                .ok_or_else(|| Error::Config(format!("bad hex digit {c:?} in frozen mask")))
        })
        .collect::<Result<_>>()?;
    if digits.len() != len.div_ceil(4) {
        return Err(Error::Config(format!(
            "frozen mask has {} hex digits, expected {}",
            digits.len(),
            len.div_ceil(4)
        )));
    }
    Ok((0..len)
        .map(|i| (digits[i / 4] >> (3 - i % 4)) & 1 == 1)
        .collect())
}

/// Freezes the `N - K - P` least reliable positions of `seq`.
pub fn build_code(n: usize, k: usize, seq: &ReliabilitySequence, crc: CrcPoly) -> Result<CodeSpec> {
    if !(1..=MAX_LOG_LEN).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "log2 length must be in 1..={MAX_LOG_LEN}, got {n}"
        )));
    }
    let len = 1usize << n;
    if seq.len() != len {
        return Err(Error::length(len, seq.len()));
    }
    let k_prime = k + crc.degree();
    if k_prime > len {
        return Err(Error::InvalidParameter(format!(
            "K + P = {k_prime} exceeds N = {len}"
        )));
    }
    let mut frozen = vec![false; len];
    for &i in &seq.order()[..len - k_prime] {
        frozen[i] = true;
    }
    CodeSpec::from_frozen_mask(n, k, crc, frozen)
}

/// In-place `x = u · F^{⊗n}` over GF(2). Also its own inverse.
pub fn polar_transform(bits: &mut [u8]) {
    let len = bits.len();
    debug_assert!(len.is_power_of_two());
    let mut half = 1;
    while half < len {
        for base in (0..len).step_by(2 * half) {
            for i in base..base + half {
                bits[i] ^= bits[i + half];
            }
        }
        half <<= 1;
    }
}

/// Encodes `K` message bits into an `N`-bit codeword.
pub fn encode(code: &CodeSpec, msg: &[u8]) -> Result<Vec<u8>> {
    let mut u = code.u_vector(msg)?;
    polar_transform(&mut u);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits_of(v: u64, len: usize) -> Vec<u8> {
        (0..len).map(|i| ((v >> (len - 1 - i)) & 1) as u8).collect()
    }

    /// Plain long division over GF(2) on coefficient vectors.
    fn long_division_remainder(msg: &[u8], poly: &[u8]) -> Vec<u8> {
        let p = poly.len() - 1;
        let mut work: Vec<u8> = msg.to_vec();
        work.extend(std::iter::repeat_n(0, p));
        for i in 0..msg.len() {
            if work[i] == 1 {
                for (j, &c) in poly.iter().enumerate() {
                    work[i + j] ^= c;
                }
            }
        }
        work[msg.len()..].to_vec()
    }

    #[test]
    fn crc11_matches_long_division() {
        let poly = bits_of(0xE21, 12);
        assert_eq!(poly, vec![1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1]);
        let single = crc_attach(&[1], &CrcPoly::CRC11_NR);
        // x^11 mod g(x) = x^10 + x^9 + x^5 + 1
        assert_eq!(&single[1..], &[1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1]);
        assert_eq!(&single[1..], &long_division_remainder(&[1], &poly)[..]);
        for v in [0b1011u64, 0xdead_beef, 0x1234_5678_9abc] {
            let msg = bits_of(v, 48);
            assert_eq!(
                CrcPoly::CRC11_NR.remainder(&msg),
                long_division_remainder(&msg, &poly)
            );
        }
    }

    #[test]
    fn crc_zero_and_flip() {
        let zero = crc_attach(&[0; 20], &CrcPoly::CRC11_NR);
        assert!(zero[20..].iter().all(|&b| b == 0));
        assert!(crc_check(&zero, &CrcPoly::CRC11_NR));
        assert!(crc_check(&[0; 31], &CrcPoly::CRC11_NR));
        let mut word = crc_attach(&bits_of(0x5a5a5, 20), &CrcPoly::CRC11_NR);
        assert!(crc_check(&word, &CrcPoly::CRC11_NR));
        for i in 0..word.len() {
            word[i] ^= 1;
            assert!(!crc_check(&word, &CrcPoly::CRC11_NR), "flip at {i} undetected");
            word[i] ^= 1;
        }
    }

    #[test]
    fn crc_poly_validation() {
        assert!(CrcPoly::new(0).is_err());
        assert!(CrcPoly::new(0b110).is_err());
        assert_eq!(CrcPoly::from_hex("0xE21").unwrap(), CrcPoly::CRC11_NR);
        assert_eq!(CrcPoly::CRC11_NR.to_string(), "x^11 + x^10 + x^9 + x^5 + 1");
        assert_eq!(CrcPoly::NONE.degree(), 0);
        assert!(crc_check(&[1, 0, 1], &CrcPoly::NONE));
    }

    #[test]
    fn sequence_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.txt");
        std::fs::write(&ok, "0\n1\n2\n3\n").unwrap();
        assert_eq!(load_sequence(&ok).unwrap().order(), &[0, 1, 2, 3]);

        let missing = dir.path().join("missing.txt");
        std::fs::write(&missing, "0\n1\n3\n").unwrap();
        assert!(matches!(
            load_sequence(&missing),
            Err(Error::InvalidPermutation { .. })
        ));

        let dup = dir.path().join("dup.txt");
        std::fs::write(&dup, "0\n1\n1\n2\n").unwrap();
        assert!(load_sequence(&dup).is_err());

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "0\n1\nx\n2\n").unwrap();
        match load_sequence(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn nr5g_asset_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/nr5g_reliability_1024.txt");
        let seq = load_sequence(path).unwrap();
        assert_eq!(seq.len(), 1024);
        assert_eq!(&seq.order()[..10], &[0, 1, 2, 4, 8, 16, 32, 3, 5, 64]);
        assert_eq!(seq.order()[1023], 1023);
        let short = nr5g_sequence(3).unwrap();
        assert_eq!(short.order(), &[0, 1, 2, 4, 3, 5, 6, 7]);
    }

    #[test]
    fn small_constructions() {
        assert_eq!(gaussian_construct(1, -3.0).unwrap().order(), &[0, 1]);
        assert_eq!(gaussian_construct(1, 5.0).unwrap().order(), &[0, 1]);
        let s3 = gaussian_construct(3, 2.0).unwrap();
        assert_eq!(*s3.order().last().unwrap(), 7);
        assert_eq!(s3.order()[0], 0);
        assert!(gaussian_construct(0, 1.0).is_err());
        assert!(gaussian_construct(21, 1.0).is_err());
    }

    #[test]
    fn build_code_frozen_set() {
        let seq = gaussian_construct(3, 2.0).unwrap();
        let code = build_code(3, 4, &seq, CrcPoly::NONE).unwrap();
        let most_reliable: Vec<usize> = {
            let mut v = seq.order()[4..].to_vec();
            v.sort();
            v
        };
        assert_eq!(code.info_positions(), &most_reliable[..]);

        let crc1 = CrcPoly::new(0b11).unwrap();
        let code = build_code(3, 3, &seq, crc1).unwrap();
        assert_eq!(code.info_bits(), 4);
        assert_eq!(code.frozen_mask().iter().filter(|&&f| f).count(), 4);

        assert!(build_code(3, 8, &seq, crc1).is_err());
        assert!(build_code(4, 2, &seq, crc1).is_err());
    }

    #[test]
    fn baseline_1024_code() {
        let seq = nr5g_sequence(10).unwrap();
        let code = build_code(10, 512, &seq, CrcPoly::CRC11_NR).unwrap();
        assert_eq!(code.info_bits(), 523);
        assert_eq!(code.frozen_mask().iter().filter(|&&f| f).count(), 1024 - 523);
        assert_eq!(code.rate(), 0.5);
    }

    /// Explicit `F^{⊗n}` by Kronecker expansion.
    fn kron_power(n: usize) -> Vec<Vec<u8>> {
        let mut g = vec![vec![1u8]];
        for _ in 0..n {
            let m = g.len();
            let mut next = vec![vec![0u8; 2 * m]; 2 * m];
            for r in 0..m {
                for c in 0..m {
                    next[r][c] = g[r][c];
                    next[r + m][c] = g[r][c];
                    next[r + m][c + m] = g[r][c];
                }
            }
            g = next;
        }
        g
    }

    fn mul(u: &[u8], g: &[Vec<u8>]) -> Vec<u8> {
        (0..u.len())
            .map(|c| u.iter().zip(g).fold(0u8, |acc, (&ui, row)| acc ^ (ui & row[c])))
            .collect()
    }

    #[test]
    fn transform_matches_kronecker() {
        for n in 1..=4 {
            let g = kron_power(n);
            assert!(g[(1 << n) - 1].iter().all(|&b| b == 1));
            let mut e = vec![0u8; 1 << n];
            e[(1 << n) - 1] = 1;
            polar_transform(&mut e);
            assert!(e.iter().all(|&b| b == 1));
        }
        let g = kron_power(3);
        let u = [0, 0, 0, 1, 0, 1, 0, 1];
        let mut x = u.to_vec();
        polar_transform(&mut x);
        assert_eq!(x, mul(&u, &g));
        assert_eq!(x, vec![1, 1, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn encode_all_zero() {
        let seq = gaussian_construct(4, 1.0).unwrap();
        let code = build_code(4, 5, &seq, CrcPoly::new(0b1011).unwrap()).unwrap();
        assert_eq!(encode(&code, &[0; 5]).unwrap(), vec![0; 16]);
        assert!(encode(&code, &[0; 4]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let seq = gaussian_construct(5, 1.0).unwrap();
        let code = build_code(5, 10, &seq, CrcPoly::new(0b1011).unwrap()).unwrap();
        let rec = code.to_record();
        assert_eq!(rec.frozen_mask.len(), 8);
        let json = serde_json::to_string(&rec).unwrap();
        let back: CodeSpecRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(CodeSpec::from_record(&back).unwrap(), code);
    }

    fn scalar_mean(i: usize, n: usize, m0: f64) -> f64 {
        let mut m = m0;
        for j in (0..n).rev() {
            m = if (i >> j) & 1 == 0 { check_mean(m, m) } else { 2.0 * m };
        }
        m
    }

    #[test]
    fn ga_matches_scalar_recursion() {
        for snr in [-1.0, 0.0, 2.5] {
            let m0 = 4.0 * 10f64.powf(snr / 10.0);
            let mut order: Vec<usize> = (0..16).collect();
            order.sort_by(|&a, &b| {
                scalar_mean(a, 4, m0)
                    .total_cmp(&scalar_mean(b, 4, m0))
                    .then(a.cmp(&b))
            });
            assert_eq!(gaussian_construct(4, snr).unwrap().order(), order.as_slice());
        }
        assert!(check_mean(3.0, 5.0) < 3.0);
        assert!((inv_ln_phi(ln_phi(7.5)) - 7.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn transform_is_involution(n in 1usize..=6, seed in any::<u64>()) {
            let len = 1usize << n;
            let u: Vec<u8> = (0..len).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let mut x = u.clone();
            polar_transform(&mut x);
            polar_transform(&mut x);
            prop_assert_eq!(x, u);
        }

        #[test]
        fn transform_is_linear(a in any::<u8>(), b in any::<u8>()) {
            let bits = |v: u8| (0..8).map(|i| (v >> i) & 1).collect::<Vec<u8>>();
            let (mut ta, mut tb, mut tab) = (bits(a), bits(b), bits(a ^ b));
            polar_transform(&mut ta);
            polar_transform(&mut tb);
            polar_transform(&mut tab);
            let sum: Vec<u8> = ta.iter().zip(&tb).map(|(x, y)| x ^ y).collect();
            prop_assert_eq!(tab, sum);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn crc_round_trip(msg in proptest::collection::vec(0u8..2, 1..200)) {
            let info = crc_attach(&msg, &CrcPoly::CRC11_NR);
            prop_assert_eq!(info.len(), msg.len() + 11);
            prop_assert_eq!(&info[..msg.len()], msg.as_slice());
            prop_assert!(crc_check(&info, &CrcPoly::CRC11_NR));
        }

        #[test]
        fn frozen_count(n in 4usize..=10, frac in 0.0f64..1.0) {
            let len = 1usize << n;
            let k = ((len - 11) as f64 * frac) as usize;
            let code = build_code(n, k, &nr5g_sequence(n).unwrap(), CrcPoly::CRC11_NR).unwrap();
            prop_assert_eq!(code.frozen_mask().iter().filter(|&&f| f).count(), len - k - 11);
            prop_assert_eq!(code.info_positions().len(), k + 11);
        }
    }
}
