//! The two concatenated encoders: the coset (wire-tap) encoder that mixes
//! `l` data bits with `m - l` fresh random bits, and the `(k, n)` linear
//! error-correcting code applied to its output.

use std::collections::HashMap;
use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::gf2::{BitMatrix, BitVector};

/// Largest message length for which the minimum distance is computed by
/// enumerating every codeword.
pub const MAX_ENUMERATED_DIMENSION: usize = 20;

/// Largest syndrome table a decoder is allowed to build.
const MAX_SYNDROME_TABLE: usize = 1 << 22;

/// Coset encoder `[a || u] * G_H` with
///
/// ```text
///        | G1 (l x m-l)   G2 (l x l)   |
/// G_H =  | I  (m-l)       G4 (m-l x l) |
/// ```
///
/// The bottom `m - l` rows generate the inner `(m, m - l)` code whose cosets
/// carry the data.
#[derive(Clone, PartialEq, Eq)]
pub struct WiretapCode {
    l: usize,
    m: usize,
    gh: BitMatrix,
    gh_inv: BitMatrix,
}

/// Outcome of checking a coset generator against the three design
/// requirements. Sparsity is informational only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WiretapReport {
    pub invertible: bool,
    pub secure: bool,
    pub sparsity_gh: usize,
    /// `None` when the generator is singular.
    pub sparsity_gh_inv: Option<usize>,
}

impl WiretapCode {
    /// Default construction: `G1 = 0`, `G2 = I_l`, and the bottom rows taken
    /// from the systematic inner generator `[I_{m-l} | G4]`.
    pub fn build(l: usize, inner_gen: &BitMatrix) -> Result<Self> {
        let m = inner_gen.cols();
        if l >= m {
            return Err(Error::InvalidCode(format!(
                "coset encoder needs at least one random bit (l = {l}, m = {m})"
            )));
        }
        check_len("inner generator rows (m - l)", m - l, inner_gen.rows())?;
        let r = m - l;
        if inner_gen.block(0, r, 0, r) != BitMatrix::identity(r) {
            return Err(Error::InvalidCode(
                "inner generator is not in systematic form [I | G4]".into(),
            ));
        }
        if inner_gen.rank() != r {
            return Err(Error::InvalidCode("inner generator is rank deficient".into()));
        }
        let g4 = inner_gen.block(0, r, r, m);
        if l > 0 && g4.has_zero_column() {
            return Err(Error::SecurityRequirement(
                "G4 has an all-zero column, so some data bit is not masked by any random bit"
                    .into(),
            ));
        }
        let top = BitMatrix::zeros(l, r).hstack(&BitMatrix::identity(l))?;
        let gh = top.vstack(inner_gen)?;
        Self::from_generator(l, gh)
    }

    /// Default construction from the `(m - l) x l` block `G4` alone.
    pub fn from_g4(l: usize, g4: &BitMatrix) -> Result<Self> {
        check_len("G4 columns (l)", l, g4.cols())?;
        let inner = BitMatrix::identity(g4.rows()).hstack(g4)?;
        Self::build(l, &inner)
    }

    /// Default construction with a canonical `G4`: entry `(i, j)` is set when
    /// `j mod (m - l) == i`, so every column holds exactly one one. For
    /// `l = 2, m = 4` this is `G4 = I_2`.
    pub fn standard(l: usize, m: usize) -> Result<Self> {
        if l >= m {
            return Err(Error::InvalidCode(format!(
                "coset encoder needs l < m (l = {l}, m = {m})"
            )));
        }
        let r = m - l;
        let mut g4 = BitMatrix::zeros(r, l);
        for j in 0..l {
            g4.set(j % r, j, true);
        }
        Self::from_g4(l, &g4)
    }

    /// Accepts an arbitrary `m x m` generator; fails only if it is singular.
    /// Use [`validate_generator`] to check the remaining requirements.
    pub fn from_generator(l: usize, gh: BitMatrix) -> Result<Self> {
        if !gh.is_square() {
            return Err(Error::NotSquare {
                rows: gh.rows(),
                cols: gh.cols(),
            });
        }
        let m = gh.rows();
        if l > m {
            return Err(Error::InvalidCode(format!("l = {l} exceeds m = {m}")));
        }
        let gh_inv = gh
            .inverse()?
            .ok_or_else(|| Error::InvalidCode("coset generator is singular".into()))?;
        Ok(WiretapCode { l, m, gh, gh_inv })
    }

    /// Parses `coset:l=2`, `coset:l=2,g4=10;01` or
    /// `coset:l=2,inner=matrix:10;01|10;01` (identity part and `G4` split by `|`).
    /// `m` is the block length used when the string leaves it implicit.
    pub fn from_spec(spec: &str, m: usize) -> Result<Self> {
        let body = spec
            .trim()
            .strip_prefix("coset:")
            .ok_or_else(|| Error::Parse(format!("wiretap spec must start with 'coset:': {spec:?}")))?;
        let mut l = None;
        let mut code = None;
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in {part:?}")))?;
            match key.trim() {
                "l" => l = Some(parse_count("l", value)?),
                "g4" => code = Some(("g4", value.trim().to_string())),
                "inner" => code = Some(("inner", value.trim().to_string())),
                other => return Err(Error::Parse(format!("unknown wiretap key {other:?}"))),
            }
        }
        let l = l.ok_or_else(|| Error::Parse("wiretap spec needs l=<count>".into()))?;
        let built = match code {
            None => Self::standard(l, m)?,
            Some(("g4", lit)) => Self::from_g4(l, &BitMatrix::parse_literal(&lit)?)?,
            Some((_, lit)) => {
                let lit = lit.strip_prefix("matrix:").unwrap_or(&lit);
                let inner = match lit.split_once('|') {
                    Some((ident, g4)) => {
                        let ident = BitMatrix::parse_literal(ident)?;
                        let g4 = BitMatrix::parse_literal(g4)?;
                        ident.hstack(&g4)?
                    }
                    None => BitMatrix::parse_literal(lit)?,
                };
                Self::build(l, &inner)?
            }
        };
        check_len("wiretap block length m", m, built.m)?;
        Ok(built)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of random bits per block.
    pub fn randomness_bits(&self) -> usize {
        self.m - self.l
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.gh
    }

    pub fn inverse(&self) -> &BitMatrix {
        &self.gh_inv
    }

    /// The `(m - l) x l` block mixing random bits into the data positions.
    pub fn g4(&self) -> BitMatrix {
        self.gh.block(self.l, self.m, self.m - self.l, self.m)
    }

    /// Rows `h_1..h_l` selecting the coset of each data bit.
    pub fn coset_leaders(&self) -> BitMatrix {
        self.gh.block(0, self.l, 0, self.m)
    }

    /// Generator of the inner code, the bottom `m - l` rows.
    pub fn inner_generator(&self) -> BitMatrix {
        self.gh.block(self.l, self.m, 0, self.m)
    }

    pub fn encode(&self, a: &BitVector, u: &BitVector) -> Result<BitVector> {
        check_len("wiretap data bits", self.l, a.len())?;
        check_len("wiretap random bits", self.m - self.l, u.len())?;
        self.gh.left_mul(&a.concat(u))
    }

    /// `c * G_H^-1` split as `(a, u)`.
    pub fn decode(&self, c: &BitVector) -> Result<(BitVector, BitVector)> {
        check_len("wiretap codeword", self.m, c.len())?;
        let au = self.gh_inv.left_mul(c)?;
        Ok((au.slice(0, self.l), au.slice(self.l, self.m)))
    }

    pub fn validate(&self) -> WiretapReport {
        validate_generator(self.l, &self.gh)
    }
}

impl fmt::Debug for WiretapCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "WiretapCode(l={}, m={}, gh={})",
            self.l,
            self.m,
            self.gh.to_literal()
        )
    }
}

/// Checks invertibility and the masking requirement, and reports the number
/// of ones in `G_H` and its inverse.
///
/// An output bit is data-dependent when some of the top `l` rows has a one in
/// its column; masking requires each such column to also have a one in the
/// bottom `m - l` rows. For the default layout this is exactly "`G4` has no
/// all-zero column".
pub fn validate_generator(l: usize, gh: &BitMatrix) -> WiretapReport {
    let inverse = gh.inverse().ok().flatten();
    let m = gh.rows();
    let secure = gh.is_square() && l > 0 && l < m && {
        let (data, random) = (gh.block(0, l, 0, m), gh.block(l, m, 0, m));
        (0..m).all(|j| data.column(j).is_zero() || !random.column(j).is_zero())
    };
    WiretapReport {
        invertible: inverse.is_some(),
        secure,
        sparsity_gh: gh.count_ones(),
        sparsity_gh_inv: inverse.map(|inv| inv.count_ones()),
    }
}

pub fn build_wiretap(l: usize, inner_gen: &BitMatrix) -> Result<WiretapCode> {
    WiretapCode::build(l, inner_gen)
}

pub fn wiretap_encode(code: &WiretapCode, a: &BitVector, u: &BitVector) -> Result<BitVector> {
    code.encode(a, u)
}

pub fn wiretap_decode(code: &WiretapCode, c: &BitVector) -> Result<(BitVector, BitVector)> {
    code.decode(c)
}

pub fn validate_wiretap(code: &WiretapCode) -> WiretapReport {
    code.validate()
}

/// Result of bounded-distance decoding. The message is present exactly when
/// decoding did not report a failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutcome {
    message: Option<BitVector>,
}

impl DecodeOutcome {
    pub fn success(message: BitVector) -> Self {
        DecodeOutcome {
            message: Some(message),
        }
    }

    pub fn failure() -> Self {
        DecodeOutcome { message: None }
    }

    pub fn message(&self) -> Option<&BitVector> {
        self.message.as_ref()
    }

    pub fn into_message(self) -> Option<BitVector> {
        self.message
    }

    pub fn detected_failure(&self) -> bool {
        self.message.is_none()
    }
}

/// A small code decoded by syndrome lookup within its correction radius.
#[derive(Clone)]
struct Component {
    k: usize,
    n: usize,
    gen: BitMatrix,
    min_dist: usize,
    radius: usize,
    /// `n x (n - k)`; `word * parity_t` is the syndrome.
    parity_t: BitMatrix,
    syndromes: HashMap<BitVector, BitVector>,
    info_set: Vec<usize>,
    info_inv: BitMatrix,
}

impl Component {
    fn new(gen: BitMatrix) -> Result<Self> {
        let (k, n) = (gen.rows(), gen.cols());
        if k == 0 || n < k {
            return Err(Error::InvalidCode(format!("invalid code dimensions k={k}, n={n}")));
        }
        if gen.rank() != k {
            return Err(Error::InvalidCode("generator is rank deficient".into()));
        }
        if k > MAX_ENUMERATED_DIMENSION {
            return Err(Error::InvalidCode(format!(
                "k = {k} is too large to verify the minimum distance (max {MAX_ENUMERATED_DIMENSION})"
            )));
        }
        let min_dist = min_weight(&gen);
        let radius = (min_dist - 1) / 2;
        let parity_t = gen.null_space().transpose();

        let table_size: usize = (0..=radius).map(|w| binomial(n, w)).sum();
        if table_size > MAX_SYNDROME_TABLE {
            return Err(Error::InvalidCode(format!(
                "syndrome table for n={n}, t={radius} is too large"
            )));
        }
        let mut syndromes = HashMap::with_capacity(table_size);
        for_each_pattern(n, radius, |e| {
            let s = parity_t.left_mul(e).expect("pattern length equals n");
            syndromes.entry(s).or_insert_with(|| e.clone());
        });

        let info_set = gen.pivot_columns();
        let mut info = BitMatrix::zeros(k, k);
        for r in 0..k {
            for (c, &col) in info_set.iter().enumerate() {
                info.set(r, c, gen.get(r, col));
            }
        }
        let info_inv = info
            .inverse()?
            .ok_or_else(|| Error::Invariant("information set is singular".into()))?;
        Ok(Component {
            k,
            n,
            gen,
            min_dist,
            radius,
            parity_t,
            syndromes,
            info_set,
            info_inv,
        })
    }

    fn decode(&self, word: &BitVector) -> Option<BitVector> {
        let s = self.parity_t.left_mul(word).ok()?;
        let error = self.syndromes.get(&s)?;
        let codeword = word ^ error;
        let mut info = BitVector::zeros(self.k);
        for (i, &col) in self.info_set.iter().enumerate() {
            if codeword.get(col) {
                info.set(i, true);
            }
        }
        self.info_inv.left_mul(&info).ok()
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).unwrap_or(usize::MAX)
}

/// Calls `f` on every length-`n` pattern of weight at most `max_weight`,
/// in order of increasing weight.
fn for_each_pattern(n: usize, max_weight: usize, mut f: impl FnMut(&BitVector)) {
    fn rec(
        e: &mut BitVector,
        start: usize,
        left: usize,
        f: &mut dyn FnMut(&BitVector),
    ) {
        if left == 0 {
            f(e);
            return;
        }
        for i in start..e.len() {
            e.set(i, true);
            rec(e, i + 1, left - 1, f);
            e.set(i, false);
        }
    }
    let mut e = BitVector::zeros(n);
    for w in 0..=max_weight.min(n) {
        rec(&mut e, 0, w, &mut f);
    }
}

/// Minimum weight over the nonzero codewords, walking the message space in
/// Gray-code order so each step is one row XOR.
fn min_weight(gen: &BitMatrix) -> usize {
    let k = gen.rows();
    let mut word = BitVector::zeros(gen.cols());
    let mut best = usize::MAX;
    for i in 1u64..(1u64 << k) {
        let bit = i.trailing_zeros() as usize;
        word ^= gen.row(bit);
        best = best.min(word.weight());
    }
    best
}

/// Binary linear `(k, n)` code. Internally a direct sum of `blocks` copies of
/// one component code, each decoded independently within its own radius;
/// a repetition code is `k` copies of the `(1, r)` code.
#[derive(Clone)]
pub struct LinearBlockCode {
    name: String,
    k: usize,
    n: usize,
    gen: BitMatrix,
    component: Component,
    blocks: usize,
}

impl LinearBlockCode {
    /// Single-component code from an arbitrary full-rank generator.
    pub fn from_generator(gen: BitMatrix) -> Result<Self> {
        let name = format!("matrix:{}", gen.to_literal());
        Self::direct_sum(name, gen, 1)
    }

    fn direct_sum(name: String, component_gen: BitMatrix, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InvalidCode("code needs at least one block".into()));
        }
        let component = Component::new(component_gen)?;
        let (k, n) = (component.k * blocks, component.n * blocks);
        let mut gen = BitMatrix::zeros(k, n);
        for b in 0..blocks {
            for r in 0..component.k {
                for c in 0..component.n {
                    if component.gen.get(r, c) {
                        gen.set(b * component.k + r, b * component.n + c, true);
                    }
                }
            }
        }
        Ok(LinearBlockCode {
            name,
            k,
            n,
            gen,
            component,
            blocks,
        })
    }

    /// Each of the `k` message bits repeated `r` times in a contiguous block.
    pub fn repetition(k: usize, r: usize) -> Result<Self> {
        if r < 3 || r.is_multiple_of(2) {
            return Err(Error::InvalidCode(format!(
                "repetition factor must be odd and at least 3, got {r}"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidCode("repetition code needs k >= 1".into()));
        }
        let gen = BitMatrix::from_rows(vec![BitVector::ones(r)], r)?;
        Self::direct_sum(format!("rep:k={k},r={r}"), gen, k)
    }

    /// The systematic (7, 4) Hamming code.
    pub fn hamming_7_4() -> Self {
        let gen = BitMatrix::parse_literal("1000110;0100011;0010111;0001101")
            .expect("static literal");
        Self::direct_sum("hamming74".into(), gen, 1).expect("static code is valid")
    }

    /// Parses `rep:k=4,r=3`, `hamming74` or `matrix:<rows>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "hamming74" {
            return Ok(Self::hamming_7_4());
        }
        if let Some(lit) = spec.strip_prefix("matrix:") {
            return Self::from_generator(BitMatrix::parse_literal(lit)?);
        }
        if let Some(body) = spec.strip_prefix("rep:") {
            let (mut k, mut r) = (None, None);
            for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (key, value) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in {part:?}")))?;
                match key.trim() {
                    "k" => k = Some(parse_count("k", value)?),
                    "r" => r = Some(parse_count("r", value)?),
                    other => return Err(Error::Parse(format!("unknown repetition key {other:?}"))),
                }
            }
            let k = k.ok_or_else(|| Error::Parse("repetition spec needs k=<count>".into()))?;
            return Self::repetition(k, r.unwrap_or(3));
        }
        Err(Error::Parse(format!("unknown code spec {spec:?}")))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generator(&self) -> &BitMatrix {
        &self.gen
    }

    pub fn min_dist(&self) -> usize {
        self.component.min_dist
    }

    /// `floor((d - 1) / 2)` for the whole code. Each component block corrects
    /// this many errors independently.
    pub fn correct_radius(&self) -> usize {
        self.component.radius
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_length(&self) -> usize {
        self.component.n
    }

    pub fn encode(&self, msg: &BitVector) -> Result<BitVector> {
        check_len("ecc message", self.k, msg.len())?;
        self.gen.left_mul(msg)
    }

    /// Bounded-distance decoding per component block. Any block farther than
    /// the radius from every codeword makes the whole word a detected failure.
    pub fn decode(&self, word: &BitVector) -> Result<DecodeOutcome> {
        check_len("ecc received word", self.n, word.len())?;
        let (bk, bn) = (self.component.k, self.component.n);
        let mut msg = BitVector::zeros(self.k);
        for b in 0..self.blocks {
            let chunk = word.slice(b * bn, (b + 1) * bn);
            let Some(part) = self.component.decode(&chunk) else {
                return Ok(DecodeOutcome::failure());
            };
            for (i, bit) in part.iter().enumerate() {
                if bit {
                    msg.set(b * bk + i, true);
                }
            }
        }
        Ok(DecodeOutcome::success(msg))
    }
}

impl fmt::Debug for LinearBlockCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LinearBlockCode({}, k={}, n={}, d={})",
            self.name,
            self.k,
            self.n,
            self.min_dist()
        )
    }
}

pub fn make_repetition(k: usize, r: usize) -> Result<LinearBlockCode> {
    LinearBlockCode::repetition(k, r)
}

pub fn make_hamming_7_4() -> LinearBlockCode {
    LinearBlockCode::hamming_7_4()
}

pub fn ecc_encode(code: &LinearBlockCode, msg: &BitVector) -> Result<BitVector> {
    code.encode(msg)
}

pub fn ecc_decode(code: &LinearBlockCode, word: &BitVector) -> Result<DecodeOutcome> {
    code.decode(word)
}

/// `G = G_H * G_ECC`, the single `m x n` generator of both encodings.
pub fn combined_generator(w: &WiretapCode, e: &LinearBlockCode) -> Result<BitMatrix> {
    check_len("ecc dimension k vs wiretap length m", w.m(), e.k())?;
    w.generator().mul(e.generator())
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key} must be a non-negative integer, got {value:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    fn reference_code() -> WiretapCode {
        build_wiretap(2, &"1010;0101".parse().unwrap()).unwrap()
    }

    #[test]
    fn reference_layout() {
        let code = reference_code();
        assert_eq!(code.generator().to_literal(), "0010;0001;1010;0101");
        assert_eq!(code.g4(), BitMatrix::identity(2));
        assert_eq!(WiretapCode::standard(2, 4).unwrap(), code);
    }

    #[test]
    fn two_by_two_construction() {
        let code = build_wiretap(1, &"11".parse().unwrap()).unwrap();
        assert_eq!(code.generator().to_literal(), "01;11");
        let prod = code.generator().mul(code.inverse()).unwrap();
        assert_eq!(prod, BitMatrix::identity(2));
    }

    #[test]
    fn zero_column_in_g4_rejected() {
        let err = build_wiretap(2, &"1010;0100".parse().unwrap()).unwrap_err();
        assert!(matches!(err, Error::SecurityRequirement(_)));
        assert!(err.to_string().contains("security requirement violated"));
    }

    #[test]
    fn non_systematic_rejected() {
        let err = build_wiretap(2, &"0110;1001".parse().unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidCode(_)));
        assert!(build_wiretap(2, &"1010".parse().unwrap()).is_err());
    }

    #[test]
    fn encode_examples() {
        let code = reference_code();
        assert_eq!(code.encode(&bv("10"), &bv("11")).unwrap(), bv("1101"));
        assert!(code.encode(&bv("00"), &bv("00")).unwrap().is_zero());
        assert_eq!(code.encode(&bv("10"), &bv("00")).unwrap(), bv("0010"));
        assert!(code.encode(&bv("1"), &bv("00")).is_err());
    }

    #[test]
    fn default_construction_matches_closed_form() {
        // [a || u] G_H = [u, a + u G4]
        let code = WiretapCode::from_g4(3, &"101;011".parse().unwrap()).unwrap();
        for a in 0..8u64 {
            for u in 0..4u64 {
                let (a, u) = (BitVector::from_u64(a, 3), BitVector::from_u64(u, 2));
                let expected = u.concat(&(&a ^ &code.g4().left_mul(&u).unwrap()));
                assert_eq!(code.encode(&a, &u).unwrap(), expected);
            }
        }
    }

    #[test]
    fn decode_examples() {
        let code = reference_code();
        assert_eq!(code.decode(&bv("1101")).unwrap(), (bv("10"), bv("11")));
        assert_eq!(code.decode(&bv("0000")).unwrap(), (bv("00"), bv("00")));
        for x in 0..16u64 {
            let (a, u) = (BitVector::from_u64(x & 3, 2), BitVector::from_u64(x >> 2, 2));
            let c = code.encode(&a, &u).unwrap();
            assert_eq!(code.decode(&c).unwrap(), (a, u));
        }
    }

    #[test]
    fn validation_reports() {
        let r = reference_code().validate();
        assert!(r.invertible && r.secure);
        assert_eq!(r.sparsity_gh, 6);
        assert_eq!(r.sparsity_gh_inv, Some(6));

        let ident = validate_generator(2, &BitMatrix::identity(4));
        assert!(ident.invertible);
        assert!(!ident.secure);

        let singular = validate_generator(2, &"0010;0010;1010;0101".parse().unwrap());
        assert!(!singular.invertible);
        assert_eq!(singular.sparsity_gh_inv, None);
    }

    #[test]
    fn every_data_bit_masked_by_some_random_bit() {
        for code in [reference_code(), WiretapCode::standard(3, 5).unwrap()] {
            let (l, r) = (code.l(), code.randomness_bits());
            let a = BitVector::zeros(l);
            let base = code.encode(&a, &BitVector::zeros(r)).unwrap();
            for j in 0..r {
                let out = code.encode(&a, &BitVector::unit(r, j)).unwrap();
                assert_ne!(out, base);
            }
            for i in 0..l {
                let masked = (0..r).any(|j| {
                    let out = code.encode(&a, &BitVector::unit(r, j)).unwrap();
                    out.get(r + i) != base.get(r + i)
                });
                assert!(masked, "data bit {i} is not masked");
            }
            assert!(!code.g4().has_zero_column());
        }
    }

    #[test]
    fn wiretap_round_trip_exhaustive() {
        for (l, m) in [(1, 2), (2, 4), (3, 7), (4, 10), (5, 12)] {
            let code = WiretapCode::standard(l, m).unwrap();
            for x in 0..(1u64 << m) {
                let v = BitVector::from_u64(x, m);
                let (a, u) = (v.slice(0, l), v.slice(l, m));
                let c = code.encode(&a, &u).unwrap();
                assert_eq!(code.decode(&c).unwrap(), (a, u));
            }
        }
    }

    #[test]
    fn wiretap_spec_strings() {
        let e1 = reference_code();
        assert_eq!(WiretapCode::from_spec("coset:l=2", 4).unwrap(), e1);
        assert_eq!(WiretapCode::from_spec("coset:l=2,g4=10;01", 4).unwrap(), e1);
        assert_eq!(
            WiretapCode::from_spec("coset:l=2,inner=matrix:10;01|10;01", 4).unwrap(),
            e1
        );
        assert!(WiretapCode::from_spec("coset:l=2", 5).is_ok());
        assert!(WiretapCode::from_spec("coset:l=2,inner=matrix:10;01|10;01", 5).is_err());
        assert!(WiretapCode::from_spec("coset:q=1", 4).is_err());
        assert!(WiretapCode::from_spec("l=2", 4).is_err());
    }

    #[test]
    fn repetition_construction() {
        let c = make_repetition(4, 3).unwrap();
        assert_eq!((c.k(), c.n(), c.min_dist(), c.correct_radius()), (4, 12, 3, 1));
        let c = make_repetition(2, 5).unwrap();
        assert_eq!((c.n(), c.correct_radius()), (10, 2));
        let c = make_repetition(1, 3).unwrap();
        assert_eq!(c.encode(&bv("0")).unwrap(), bv("000"));
        assert_eq!(c.encode(&bv("1")).unwrap(), bv("111"));
        assert!(make_repetition(2, 4).is_err());
        assert!(make_repetition(2, 1).is_err());
    }

    #[test]
    fn hamming_properties() {
        let h = make_hamming_7_4();
        assert_eq!((h.k(), h.n(), h.min_dist(), h.correct_radius()), (4, 7, 3, 1));
        let mut min = usize::MAX;
        let mut corrected = 0;
        for x in 0..16u64 {
            let msg = BitVector::from_u64(x, 4);
            let c = h.encode(&msg).unwrap();
            if x != 0 {
                min = min.min(c.weight());
            }
            for i in 0..7 {
                let mut w = c.clone();
                w.flip(i);
                if h.decode(&w).unwrap().message() == Some(&msg) {
                    corrected += 1;
                }
            }
        }
        assert_eq!(min, 3);
        assert_eq!(corrected, 112);
        assert!(h.encode(&BitVector::zeros(4)).unwrap().is_zero());
        assert_eq!(&h.encode(&BitVector::unit(4, 0)).unwrap(), h.generator().row(0));
    }

    #[test]
    fn ecc_encode_examples() {
        let rep = make_repetition(2, 3).unwrap();
        assert_eq!(rep.encode(&bv("10")).unwrap(), bv("111000"));
        assert!(rep.encode(&bv("00")).unwrap().is_zero());
        assert!(rep.encode(&bv("1")).is_err());
    }

    #[test]
    fn ecc_decode_examples() {
        let rep = make_repetition(4, 3).unwrap();
        let msg = bv("1011");
        let c = rep.encode(&msg).unwrap();
        let out = rep.decode(&c).unwrap();
        assert_eq!(out.message(), Some(&msg));
        assert!(!out.detected_failure());

        let mut w = c.clone();
        for b in 0..4 {
            w.flip(3 * b + b % 3);
        }
        assert_eq!(rep.decode(&w).unwrap().message(), Some(&msg));

        // two flips in a length-3 block moves to the other codeword
        let rep1 = make_repetition(1, 3).unwrap();
        let out = rep1.decode(&bv("110")).unwrap();
        assert_eq!(out.message(), Some(&bv("1")));
        assert!(rep.decode(&bv("1")).is_err());
    }

    #[test]
    fn bounded_distance_reports_failure() {
        // (5, 2) code with d = 3: weight-2 patterns outside every radius-1 ball exist
        let code = LinearBlockCode::from_spec("matrix:10110;01011").unwrap();
        assert_eq!(code.min_dist(), 3);
        let mut failures = 0;
        for x in 0..32u64 {
            let out = code.decode(&BitVector::from_u64(x, 5)).unwrap();
            assert_eq!(out.detected_failure(), out.message().is_none());
            failures += usize::from(out.detected_failure());
        }
        // 4 codewords * 6 words in each radius-1 ball = 24 decodable words
        assert_eq!(failures, 32 - 24);
    }

    #[test]
    fn correction_within_radius_exhaustive() {
        let codes = [
            make_repetition(1, 3).unwrap(),
            make_repetition(2, 3).unwrap(),
            make_repetition(2, 5).unwrap(),
            make_repetition(4, 3).unwrap(),
            make_hamming_7_4(),
            LinearBlockCode::from_spec("matrix:10000111;01001011;00101101;00011110").unwrap(),
        ];
        for code in &codes {
            assert!(code.k() <= 8 && code.n() <= 14);
            let t = code.correct_radius();
            for x in 0..(1u64 << code.k()) {
                let msg = BitVector::from_u64(x, code.k());
                let c = code.encode(&msg).unwrap();
                for_each_pattern(code.n(), t, |v| {
                    let out = code.decode(&(&c ^ v)).unwrap();
                    assert_eq!(out.message(), Some(&msg), "{code:?} pattern {v}");
                });
            }
        }
    }

    #[test]
    fn code_spec_strings() {
        let c = LinearBlockCode::from_spec("rep:k=4,r=3").unwrap();
        assert_eq!((c.k(), c.n()), (4, 12));
        assert_eq!(LinearBlockCode::from_spec("hamming74").unwrap().n(), 7);
        let m = LinearBlockCode::from_spec("matrix:1000110;0100011;0010111;0001101").unwrap();
        assert_eq!(m.min_dist(), 3);
        assert!(LinearBlockCode::from_spec("golay").is_err());
        assert!(LinearBlockCode::from_spec("rep:r=3").is_err());
        assert!(LinearBlockCode::from_spec("matrix:11;11").is_err());
    }

    #[test]
    fn combined_generator_examples() {
        let w = reference_code();
        let rep = make_repetition(4, 3).unwrap();
        let g = combined_generator(&w, &rep).unwrap();
        assert_eq!((g.rows(), g.cols()), (4, 12));
        assert_eq!(g.row(0), &bv("000000111000"));

        let ident = WiretapCode::from_generator(2, BitMatrix::identity(4)).unwrap();
        assert_eq!(&combined_generator(&ident, &rep).unwrap(), rep.generator());

        for x in 0..16u64 {
            let (a, u) = (BitVector::from_u64(x & 3, 2), BitVector::from_u64(x >> 2, 2));
            let direct = g.left_mul(&a.concat(&u)).unwrap();
            let staged = rep.encode(&w.encode(&a, &u).unwrap()).unwrap();
            assert_eq!(direct, staged);
        }
        assert!(combined_generator(&w, &make_hamming_7_4()).is_ok());
        assert!(combined_generator(&w, &make_repetition(3, 3).unwrap()).is_err());
    }
}
