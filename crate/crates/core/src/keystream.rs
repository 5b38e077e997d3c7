//! Keystream generation `x^(t) = f^(t)(K)`.
//!
//! The keyed generator is a Fibonacci linear feedback register whose state
//! is the key itself. Block `t` of length `n` is the segment
//! `[(t-1) n, t n)` of one continuous output stream, so consecutive blocks
//! tile the stream without gaps.
//!
//! The register satisfies `s[i + L] = XOR_{e in taps} s[i + L - e]` and
//! outputs `s[i]`; the first `L` output bits are therefore the key bits,
//! which makes key -> stream injective for any block length `n >= L`. The
//! all-zero key yields the all-zero stream.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::gf2::BitVector;

/// Default limit for exhaustive key enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Largest register supported by the word-level implementation.
pub const MAX_REGISTER_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Key(BitVector);

impl Key {
    pub fn new(bits: BitVector) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParameter("key must have at least one bit".into()));
        }
        Ok(Key(bits))
    }

    /// Key number `index` in lexicographic order; the first key bit is the
    /// most significant.
    pub fn from_index(index: u64, key_bits: usize) -> Self {
        assert!((1..=64).contains(&key_bits));
        let mut v = BitVector::zeros(key_bits);
        for j in 0..key_bits {
            if (index >> (key_bits - 1 - j)) & 1 == 1 {
                v.set(j, true);
            }
        }
        Key(v)
    }

    /// Position of this key in [`enumerate_keys`] order.
    pub fn index(&self) -> u64 {
        let n = self.0.len();
        (0..n).fold(0u64, |acc, j| (acc << 1) | u64::from(self.0.get(j)))
    }

    pub fn bits(&self) -> &BitVector {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.0)
    }
}

/// Feedback taps of a maximal-length register for each size, given as the
/// exponents of the feedback polynomial.
fn default_taps(bits: usize) -> Option<&'static [usize]> {
    Some(match bits {
        1 => &[1],
        2 => &[2, 1],
        3 => &[3, 2],
        4 => &[4, 3],
        5 => &[5, 3],
        6 => &[6, 5],
        7 => &[7, 6],
        8 => &[8, 6, 5, 4],
        9 => &[9, 5],
        10 => &[10, 7],
        11 => &[11, 9],
        12 => &[12, 6, 4, 1],
        13 => &[13, 4, 3, 1],
        14 => &[14, 5, 3, 1],
        15 => &[15, 14],
        16 => &[16, 15, 13, 4],
        17 => &[17, 14],
        18 => &[18, 11],
        19 => &[19, 6, 2, 1],
        20 => &[20, 17],
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lfsr {
    bits: usize,
    taps: Vec<usize>,
    /// Bit `L - e` set for every tap `e`.
    feedback_mask: u64,
}

impl Lfsr {
    pub fn new(bits: usize, taps: &[usize]) -> Result<Self> {
        if bits == 0 || bits > MAX_REGISTER_BITS {
            return Err(Error::InvalidParameter(format!(
                "register size must be in 1..={MAX_REGISTER_BITS}, got {bits}"
            )));
        }
        if !taps.contains(&bits) {
            return Err(Error::InvalidParameter(format!(
                "taps must include the register size {bits} (polynomial degree)"
            )));
        }
        let mut sorted = taps.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.dedup();
        let mut feedback_mask = 0u64;
        for &e in &sorted {
            if e == 0 || e > bits {
                return Err(Error::InvalidParameter(format!(
                    "tap {e} outside 1..={bits}"
                )));
            }
            feedback_mask |= 1u64 << (bits - e);
        }
        Ok(Lfsr {
            bits,
            taps: sorted,
            feedback_mask,
        })
    }

    /// Maximal-length register of the given size from the built-in table.
    pub fn with_default_taps(bits: usize) -> Result<Self> {
        let taps = default_taps(bits).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no default taps for a {bits}-bit register; pass taps explicitly"
            ))
        })?;
        Self::new(bits, taps)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    fn initial_state(&self, key: &Key) -> Result<u64> {
        check_len("key length vs register size", self.bits, key.len())?;
        key.bits().to_u64()
    }

    fn step(&self, state: u64) -> (bool, u64) {
        let out = state & 1 == 1;
        let feedback = u64::from((state & self.feedback_mask).count_ones() % 2);
        (out, (state >> 1) | (feedback << (self.bits - 1)))
    }

    /// The first `len` output bits.
    pub fn stream(&self, key: &Key, len: usize) -> Result<BitVector> {
        self.segment(key, 0, len)
    }

    /// Output bits `skip..skip + len`.
    pub fn segment(&self, key: &Key, skip: usize, len: usize) -> Result<BitVector> {
        let mut state = self.initial_state(key)?;
        for _ in 0..skip {
            state = self.step(state).1;
        }
        let mut out = BitVector::zeros(len);
        for i in 0..len {
            let (bit, next) = self.step(state);
            if bit {
                out.set(i, true);
            }
            state = next;
        }
        Ok(out)
    }

    /// Number of steps until the state first returns to its start.
    pub fn period(&self, key: &Key) -> Result<u64> {
        let start = self.initial_state(key)?;
        let mut state = self.step(start).1;
        let mut steps = 1u64;
        while state != start {
            state = self.step(state).1;
            steps += 1;
        }
        Ok(steps)
    }
}

impl fmt::Display for Lfsr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let taps: Vec<String> = self.taps.iter().map(ToString::to_string).collect();
        write!(f, "lfsr:bits={},taps={}", self.bits, taps.join(","))
    }
}

/// The keystream source. `Ideal` has no sampling entry point: it stands for
/// i.i.d. uniform keystream bits and is only consumed by exact entropy
/// computations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeystreamModel {
    Ideal,
    Keyed(Lfsr),
}

impl KeystreamModel {
    pub fn is_ideal(&self) -> bool {
        matches!(self, KeystreamModel::Ideal)
    }

    pub fn lfsr(&self) -> Option<&Lfsr> {
        match self {
            KeystreamModel::Keyed(l) => Some(l),
            KeystreamModel::Ideal => None,
        }
    }

    /// Key length for the keyed model.
    pub fn key_bits(&self) -> Option<usize> {
        self.lfsr().map(Lfsr::bits)
    }

    pub fn label(&self) -> &'static str {
        match self {
            KeystreamModel::Ideal => "ideal",
            KeystreamModel::Keyed(_) => "keyed_fsm",
        }
    }
}

impl fmt::Display for KeystreamModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeystreamModel::Ideal => f.write_str("ideal"),
            KeystreamModel::Keyed(l) => write!(f, "{l}"),
        }
    }
}

impl FromStr for KeystreamModel {
    type Err = Error;

    /// `ideal`, `lfsr:bits=8` or `lfsr:bits=8,taps=8,6,5,4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ideal" {
            return Ok(KeystreamModel::Ideal);
        }
        let body = s
            .strip_prefix("lfsr:")
            .ok_or_else(|| Error::Parse(format!("unknown keystream spec {s:?}")))?;
        let (head, taps) = match body.split_once("taps=") {
            Some((head, taps)) => (head, Some(taps)),
            None => (body, None),
        };
        let mut bits = None;
        for part in head.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some(("bits", v)) => {
                    bits = Some(v.trim().parse::<usize>().map_err(|_| {
                        Error::Parse(format!("bits must be an integer, got {v:?}"))
                    })?)
                }
                _ => return Err(Error::Parse(format!("unknown keystream option {part:?}"))),
            }
        }
        let bits = bits.ok_or_else(|| Error::Parse("lfsr spec needs bits=<count>".into()))?;
        let lfsr = match taps {
            None => Lfsr::with_default_taps(bits)?,
            Some(list) => {
                let taps = list
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| Error::Parse(format!("tap must be an integer, got {t:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Lfsr::new(bits, &taps)?
            }
        };
        Ok(KeystreamModel::Keyed(lfsr))
    }
}

/// Block `t` (1-based) of length `n`: stream bits `[(t-1) n, t n)`.
pub fn keystream_block(model: &KeystreamModel, key: &Key, t: usize, n: usize) -> Result<BitVector> {
    if t < 1 {
        return Err(Error::InvalidParameter("time index starts at 1".into()));
    }
    if n < 1 {
        return Err(Error::InvalidParameter("block length must be positive".into()));
    }
    let lfsr = model.lfsr().ok_or_else(|| {
        Error::InvalidParameter("the ideal keystream model cannot be sampled".into())
    })?;
    lfsr.segment(key, (t - 1) * n, n)
}

pub fn enumerate_keys(key_bits: usize) -> Result<Vec<Key>> {
    enumerate_keys_with_cap(key_bits, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_keys_with_cap(key_bits: usize, cap: usize) -> Result<Vec<Key>> {
    if key_bits == 0 {
        return Err(Error::InvalidParameter("key must have at least one bit".into()));
    }
    if key_bits > cap {
        return Err(Error::EnumerationCap {
            what: "key enumeration",
            needed_log2: key_bits,
            cap_log2: cap,
            hint: "use Monte-Carlo sampling for larger keys",
        });
    }
    Ok((0..1u64 << key_bits)
        .map(|i| Key::from_index(i, key_bits))
        .collect())
}
