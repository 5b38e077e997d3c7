//! Conditional entropies of the adversary's view: an exact engine that
//! enumerates the joint distribution of small instances, the posterior over
//! keys given observed rounds, a Monte-Carlo estimator built on it, and the
//! Fano/bound evaluators.

use std::collections::HashMap;
use std::hash::Hash;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channel::{binary_entropy, plogp};
use crate::error::{check_len, Error, Result};
use crate::gf2::BitVector;
use crate::keystream::{enumerate_keys, Key, KeystreamModel};
use crate::system::{
    run_session, AdversaryStrategy, FlagMode, PlaintextSource, SystemParams, TransmissionRecord,
};

/// Largest joint state space (log2) the exact engine will enumerate.
pub const EXACT_STATE_CAP_LOG2: usize = 26;

/// Largest block length for the exact MAP error computation.
pub const EXACT_MAP_MAX_N: usize = 20;

pub const DEFAULT_EPSILON_FRAC: f64 = 0.05;

/// Likelihoods below this are treated as zero before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

const DENSE_RECEIVER_MAX_N: usize = 16;
const MAX_TABLE_BITS: usize = 20;
const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    A,
    U,
    X,
    V,
    VPrime,
    Z,
    K,
    F,
}

impl Var {
    pub const ALL: [Var; 8] = [
        Var::A,
        Var::U,
        Var::X,
        Var::V,
        Var::VPrime,
        Var::Z,
        Var::K,
        Var::F,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Var::A => "A",
            Var::U => "U",
            Var::X => "X",
            Var::V => "V",
            Var::VPrime => "V'",
            Var::Z => "Z",
            Var::K => "K",
            Var::F => "Fd",
        }
    }
}

impl FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "A" => Var::A,
            "U" => Var::U,
            "X" => Var::X,
            "V" => Var::V,
            "V'" | "Vp" => Var::VPrime,
            "Z" => Var::Z,
            "K" => Var::K,
            "F" | "Fd" => Var::F,
            other => return Err(Error::Parse(format!("unknown variable {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct VarSet(u8);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn of(vars: &[Var]) -> Self {
        VarSet(vars.iter().fold(0, |acc, v| acc | 1 << v.slot()))
    }

    pub fn contains(self, v: Var) -> bool {
        self.0 >> v.slot() & 1 == 1
    }

    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Var> {
        Var::ALL.into_iter().filter(move |v| self.contains(*v))
    }

    fn label(self) -> String {
        self.iter().map(Var::label).collect::<Vec<_>>().join(",")
    }
}

/// `H(target | given)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Quantity {
    pub target: VarSet,
    pub given: VarSet,
}

impl Quantity {
    pub fn new(target: &[Var], given: &[Var]) -> Self {
        Quantity {
            target: VarSet::of(target),
            given: VarSet::of(given),
        }
    }

    /// `H(K|A,Z)`, or `H(K|A,Z,Fd)` with the flag.
    pub fn key(with_flag: bool) -> Self {
        if with_flag {
            Quantity::new(&[Var::K], &[Var::A, Var::Z, Var::F])
        } else {
            Quantity::new(&[Var::K], &[Var::A, Var::Z])
        }
    }

    pub fn vars(&self) -> VarSet {
        self.target.union(self.given)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.given.is_empty() {
            write!(f, "H({})", self.target.label())
        } else {
            write!(f, "H({}|{})", self.target.label(), self.given.label())
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = s
            .strip_prefix("H(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("expected H(..|..), got {s:?}")))?;
        let (target, given) = inner.split_once('|').unwrap_or((inner, ""));
        let parse_set = |part: &str| -> Result<Vec<Var>> {
            part.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(str::parse)
                .collect()
        };
        let target = parse_set(target)?;
        if target.is_empty() {
            return Err(Error::Parse(format!("no target variable in {s:?}")));
        }
        Ok(Quantity::new(&target, &parse_set(given)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    MonteCarlo,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivocationReport {
    pub quantity: Quantity,
    pub value_bits: f64,
    pub stderr_bits: f64,
    pub mode: Mode,
    pub samples: usize,
    pub tau: usize,
    pub p: f64,
    pub key_bits: Option<usize>,
    pub model: &'static str,
    pub flag_mode: FlagMode,
    pub seed: Option<u64>,
}

impl EquivocationReport {
    fn new(params: &SystemParams, quantity: Quantity, tau: usize, mode: Mode) -> Self {
        EquivocationReport {
            quantity,
            value_bits: 0.0,
            stderr_bits: 0.0,
            mode,
            samples: 0,
            tau,
            p: params.channel().p(),
            key_bits: params.key_bits(),
            model: params.keystream().label(),
            flag_mode: params.flag_mode(),
            seed: None,
        }
    }
}

impl fmt::Display for EquivocationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "quantity={} value_bits={} stderr_bits={} mode={} samples={} tau={} p={} key_bits={} model={} flag_mode={} seed={}",
            self.quantity,
            self.value_bits,
            self.stderr_bits,
            self.mode.label(),
            self.samples,
            self.tau,
            self.p,
            self.key_bits.map_or("-".to_string(), |k| k.to_string()),
            self.model,
            self.flag_mode,
            self.seed.map_or("-".to_string(), |s| s.to_string()),
        )
    }
}

/// Sum in a fixed binary tree, keeping rounding error logarithmic in the
/// number of terms.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (left, right) = xs.split_at(xs.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}

fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Word-level encoding and receiver tables for one parameter set.
struct Codec {
    n: usize,
    l: usize,
    r: usize,
    /// `C(a, 0)` for every data word `a`.
    data: Vec<u64>,
    /// `C(0, u)` for every random word `u`.
    rand: Vec<u64>,
    /// Noise probability by weight for one block.
    pv: Vec<f64>,
    receiver: Option<Vec<Option<u64>>>,
    params: SystemParams,
}

impl Codec {
    fn new(params: &SystemParams) -> Result<Self> {
        let (n, l, r) = (params.n(), params.l(), params.randomness_bits());
        if n > 64 {
            return Err(Error::InvalidParameter(format!(
                "word-level engine supports blocks of at most 64 bits, got {n}"
            )));
        }
        for (what, bits) in [("data table", l), ("randomness table", r)] {
            if bits > MAX_TABLE_BITS {
                return Err(Error::EnumerationCap {
                    what,
                    needed_log2: bits,
                    cap_log2: MAX_TABLE_BITS,
                    hint: "reduce l or m",
                });
            }
        }
        let data = (0..1u64 << l)
            .map(|a| params.encode_data_part(&BitVector::from_u64(a, l))?.to_u64())
            .collect::<Result<Vec<_>>>()?;
        let rand = (0..1u64 << r)
            .map(|u| {
                params
                    .encode(&BitVector::zeros(l), &BitVector::from_u64(u, r))?
                    .to_u64()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut codec = Codec {
            n,
            l,
            r,
            data,
            rand,
            pv: params.channel().prob_by_weight(n),
            receiver: None,
            params: params.clone(),
        };
        if n <= DENSE_RECEIVER_MAX_N {
            let table = (0..1u64 << n)
                .map(|w| codec.decode_slow(w))
                .collect::<Result<Vec<_>>>()?;
            codec.receiver = Some(table);
        }
        Ok(codec)
    }

    fn decode_slow(&self, w: u64) -> Result<Option<u64>> {
        self.params
            .decode_data(&BitVector::from_u64(w, self.n))?
            .map(|a| a.to_u64())
            .transpose()
    }

    /// Data decoded from the decrypted word `c + v'`.
    fn decode(&self, w: u64) -> Option<u64> {
        match &self.receiver {
            Some(table) => table[w as usize],
            None => self.decode_slow(w).expect("word length fixed by construction"),
        }
    }

    fn flag(&self, w: u64, a: u64) -> bool {
        let decoded = self.decode(w);
        match self.params.flag_mode() {
            FlagMode::Genie => decoded == Some(a),
            FlagMode::Detected => decoded.is_some(),
        }
    }

    /// `2^{-r} sum_u P_V(b + C(0, u))`: the probability that the noise plus
    /// the coset randomness equals `b`.
    fn coset_likelihood(&self, b: u64) -> f64 {
        let total: f64 = self
            .rand
            .iter()
            .map(|g| self.pv[(b ^ g).count_ones() as usize])
            .sum();
        total / self.rand.len() as f64
    }
}

fn key_space(params: &SystemParams) -> Result<(usize, Vec<Key>)> {
    let lfsr = params.keystream().lfsr().ok_or_else(|| {
        Error::InvalidParameter("key quantities need the keyed keystream model".into())
    })?;
    let keys = enumerate_keys(lfsr.bits())?;
    Ok((lfsr.bits(), keys))
}

/// Keystream blocks `1..=tau` for every key, as words.
struct KeyTable {
    tau: usize,
    blocks: Vec<u64>,
}

impl KeyTable {
    fn new(params: &SystemParams, tau: usize) -> Result<Self> {
        let (_, keys) = key_space(params)?;
        let lfsr = params.keystream().lfsr().expect("checked by key_space");
        let n = params.n();
        let mut blocks = Vec::with_capacity(keys.len() * tau);
        for key in &keys {
            let stream = lfsr.stream(key, tau * n)?;
            for t in 0..tau {
                blocks.push(stream.slice(t * n, (t + 1) * n).to_u64()?);
            }
        }
        Ok(KeyTable { tau, blocks })
    }

    fn keys(&self) -> usize {
        self.blocks.len().checked_div(self.tau).unwrap_or(0)
    }

    /// Block `t` (1-based) of key `k`.
    fn block(&self, k: usize, t: usize) -> u64 {
        self.blocks[k * self.tau + t - 1]
    }
}
/// The full joint distribution of one small instance over `tau` rounds.
///
/// Every atom carries packed values for `A, U, X, V, V', Z, K, Fd`; rounds
/// are concatenated, round `t` occupying the `t`-th field of each word.
/// Atoms are regenerated on every pass rather than stored.
pub struct ExactJoint {
    tau: usize,
    codec: Codec,
    keys: Option<KeyTable>,
    src_bits: usize,
    key_bits: usize,
    noisy: bool,
    vstar: u64,
    pv_all: Vec<f64>,
    states_log2: usize,
}

impl ExactJoint {
    pub fn build(params: &SystemParams, tau: usize, strategy: &AdversaryStrategy) -> Result<Self> {
        if tau < 1 {
            return Err(Error::InvalidParameter("tau must be at least 1".into()));
        }
        let codec = Codec::new(params)?;
        let (n, l, r) = (codec.n, codec.l, codec.r);
        if tau * n > 64 {
            return Err(Error::EnumerationCap {
                what: "exact joint (tau * n bits)",
                needed_log2: tau * n,
                cap_log2: 64,
                hint: "use Monte-Carlo mode",
            });
        }
        let noisy = params.channel().p() > 0.0;
        let (src_bits, key_bits) = match params.keystream() {
            KeystreamModel::Ideal => (tau * n, 0),
            KeystreamModel::Keyed(lfsr) => (lfsr.bits(), lfsr.bits()),
        };
        let states_log2 = src_bits + tau * (l + r) + if noisy { tau * n } else { 0 };
        if states_log2 > EXACT_STATE_CAP_LOG2 {
            return Err(Error::EnumerationCap {
                what: "exact joint distribution",
                needed_log2: states_log2,
                cap_log2: EXACT_STATE_CAP_LOG2,
                hint: "use Monte-Carlo mode or a smaller instance, e.g. l=1, m=2, ecc rep:k=2,r=3, key_bits=3",
            });
        }
        let vstar_block = strategy.v_star(n)?.to_u64()?;
        let keys = match params.keystream() {
            KeystreamModel::Ideal => None,
            KeystreamModel::Keyed(_) => Some(KeyTable::new(params, tau)?),
        };
        Ok(ExactJoint {
            tau,
            codec,
            keys,
            src_bits,
            key_bits,
            noisy,
            vstar: (0..tau).fold(0u64, |acc, t| acc | vstar_block << (t * n)),
            pv_all: params.channel().prob_by_weight(tau * n),
            states_log2,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// log2 of the number of enumerated states.
    pub fn states_log2(&self) -> usize {
        self.states_log2
    }

    fn widths(&self) -> [usize; 8] {
        let (n, l, r, tau) = (self.codec.n, self.codec.l, self.codec.r, self.tau);
        [tau * l, tau * r, tau * n, tau * n, tau * n, tau * n, self.key_bits, tau]
    }

    fn for_each_atom(&self, mut f: impl FnMut(&[u64; 8], f64)) {
        let (n, l, r, tau) = (self.codec.n, self.codec.l, self.codec.r, self.tau);
        let (lmask, rmask, nmask) = (low_mask(l), low_mask(r), low_mask(n));
        let p_src = (-(self.src_bits as f64)).exp2();
        let p_au = (-((tau * (l + r)) as f64)).exp2();
        let v_count: u64 = if self.noisy { 1u64 << (tau * n) } else { 1 };
        for s in 0..1u64 << self.src_bits {
            let (x, k) = match &self.keys {
                None => (s, 0),
                Some(table) => {
                    let x = (0..tau).fold(0u64, |acc, t| {
                        acc | table.block(s as usize, t + 1) << (t * n)
                    });
                    (x, s)
                }
            };
            for a in 0..1u64 << (tau * l) {
                for u in 0..1u64 << (tau * r) {
                    let c = (0..tau).fold(0u64, |acc, t| {
                        let at = (a >> (t * l)) & lmask;
                        let ut = (u >> (t * r)) & rmask;
                        acc | (self.codec.data[at as usize] ^ self.codec.rand[ut as usize]) << (t * n)
                    });
                    for v in 0..v_count {
                        let prob = p_src * p_au * self.pv_all[v.count_ones() as usize];
                        if prob == 0.0 {
                            continue;
                        }
                        let vp = v ^ self.vstar;
                        let received = c ^ vp;
                        let flags = (0..tau).fold(0u64, |acc, t| {
                            let w = (received >> (t * n)) & nmask;
                            let at = (a >> (t * l)) & lmask;
                            acc | u64::from(self.codec.flag(w, at)) << t
                        });
                        f(&[a, u, x, v, vp, c ^ x ^ vp, k, flags], prob);
                    }
                }
            }
        }
    }

    fn grouped_entropy<K: Hash + Eq + Ord>(&self, key: impl Fn(&[u64; 8]) -> K) -> f64 {
        let mut groups: HashMap<K, f64> = HashMap::new();
        self.for_each_atom(|vals, prob| *groups.entry(key(vals)).or_insert(0.0) += prob);
        let mut entries: Vec<(K, f64)> = groups.into_iter().collect();
        entries.sort_unstable_by(|x, y| x.0.cmp(&y.0));
        let terms: Vec<f64> = entries.iter().map(|(_, p)| plogp(*p)).collect();
        pairwise_sum(&terms)
    }

    /// Joint entropy of a set of variables, in bits.
    pub fn entropy(&self, vars: VarSet) -> f64 {
        let widths = self.widths();
        let selected: Vec<(usize, usize)> = vars.iter().map(|v| (v.slot(), widths[v.slot()])).collect();
        if selected.iter().map(|(_, w)| w).sum::<usize>() <= 128 {
            self.grouped_entropy(|vals| {
                selected
                    .iter()
                    .fold(0u128, |acc, &(slot, w)| acc << w | u128::from(vals[slot]))
            })
        } else {
            self.grouped_entropy(|vals| {
                let mut key = [0u64; 8];
                for &(slot, _) in &selected {
                    key[slot] = vals[slot];
                }
                key
            })
        }
    }

    /// `H(target | given) = H(target, given) - H(given)`.
    pub fn conditional(&self, q: &Quantity) -> Result<f64> {
        if self.keys.is_none() && q.vars().contains(Var::K) {
            return Err(Error::InvalidParameter(
                "K is undefined under the ideal keystream model".into(),
            ));
        }
        Ok(self.entropy(q.vars()) - self.entropy(q.given))
    }
}

/// Clamps rounding noise and enforces `0 <= value <= prior`.
fn checked_entropy(value: f64, prior: f64, what: &str) -> Result<f64> {
    if value < -TOL || value > prior + TOL || value.is_nan() {
        return Err(Error::Invariant(format!(
            "{what} = {value} outside [0, {prior}]"
        )));
    }
    Ok(value.clamp(0.0, prior.max(0.0)))
}

pub fn conditional_entropy_exact(
    params: &SystemParams,
    quantity: &Quantity,
    tau: usize,
    strategy: &AdversaryStrategy,
) -> Result<EquivocationReport> {
    let joint = ExactJoint::build(params, tau, strategy)?;
    let value = joint.conditional(quantity)?;
    let prior = joint.entropy(quantity.target);
    let mut report = EquivocationReport::new(params, *quantity, tau, Mode::Exact);
    report.value_bits = checked_entropy(value, prior, &quantity.to_string())?;
    Ok(report)
}

/// Residuals of the two chain-rule decompositions of `H(X|A,Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRuleReport {
    pub h_x_given_az: f64,
    pub h_x_given_azf: f64,
    /// `|H(X|A,Z) - [H(U|A,Z) + H(V|A,U,Z) - H(U|A,X,Z)]|`.
    pub residual: f64,
    /// `|H(X|A,Z,Fd) - [H(U|A,Z,Fd) + H(V'|A,U,Z,Fd) - H(U|A,X,Z,Fd)]|`.
    pub flag_residual: f64,
    /// `H(Fd|A,Z)`: the gap between the flag-conditioned decomposition and
    /// the unconditioned `H(X|A,Z)`.
    pub flag_gap: f64,
}

impl ChainRuleReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.max(self.flag_residual)
    }
}

pub fn chain_rule_identity_check(
    params: &SystemParams,
    tau: usize,
    strategy: &AdversaryStrategy,
) -> Result<ChainRuleReport> {
    use Var::*;
    let joint = ExactJoint::build(params, tau, strategy)?;
    let h = |t: &[Var], g: &[Var]| joint.conditional(&Quantity::new(t, g));
    let lhs = h(&[X], &[A, Z])?;
    let rhs = h(&[U], &[A, Z])? + h(&[V], &[A, U, Z])? - h(&[U], &[A, X, Z])?;
    let lhs_f = h(&[X], &[A, Z, F])?;
    let rhs_f = h(&[U], &[A, Z, F])? + h(&[VPrime], &[A, U, Z, F])? - h(&[U], &[A, X, Z, F])?;
    Ok(ChainRuleReport {
        h_x_given_az: lhs,
        h_x_given_azf: lhs_f,
        residual: (lhs - rhs).abs(),
        flag_residual: (lhs_f - rhs_f).abs(),
        flag_gap: h(&[F], &[A, Z])?,
    })
}

/// One observed round: the data, the received word, the injected vector and
/// optionally the feedback flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedRound {
    pub a: BitVector,
    pub z: BitVector,
    pub v_star: BitVector,
    pub f_d: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationSet {
    rounds: Vec<ObservedRound>,
}

impl ObservationSet {
    pub fn new(params: &SystemParams, rounds: Vec<ObservedRound>) -> Result<Self> {
        for r in &rounds {
            check_len("observed data", params.l(), r.a.len())?;
            check_len("observed word", params.n(), r.z.len())?;
            check_len("observed injection", params.n(), r.v_star.len())?;
        }
        let flagged = rounds.iter().filter(|r| r.f_d.is_some()).count();
        if flagged != 0 && flagged != rounds.len() {
            return Err(Error::InvalidParameter(
                "feedback flags must be present for all rounds or none".into(),
            ));
        }
        Ok(ObservationSet { rounds })
    }

    pub fn from_records(
        params: &SystemParams,
        records: &[TransmissionRecord],
        with_flag: bool,
    ) -> Result<Self> {
        let rounds = records
            .iter()
            .map(|r| ObservedRound {
                a: r.a().clone(),
                z: r.z().clone(),
                v_star: r.v_star().clone(),
                f_d: with_flag.then_some(r.f_d()),
            })
            .collect();
        Self::new(params, rounds)
    }

    pub fn rounds(&self) -> &[ObservedRound] {
        &self.rounds
    }

    pub fn tau(&self) -> usize {
        self.rounds.len()
    }

    pub fn has_flags(&self) -> bool {
        self.rounds.first().is_some_and(|r| r.f_d.is_some())
    }
}

/// Running log2-likelihoods of every key.
struct KeyPosterior {
    loglik: Vec<f64>,
}

impl KeyPosterior {
    fn new(keys: usize) -> Self {
        KeyPosterior {
            loglik: vec![0.0; keys],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        codec: &Codec,
        table: &KeyTable,
        t: usize,
        a: u64,
        z: u64,
        v_star: u64,
        f_d: Option<bool>,
    ) {
        let base = z ^ codec.data[a as usize] ^ v_star;
        for (k, ll) in self.loglik.iter_mut().enumerate() {
            if *ll == f64::NEG_INFINITY {
                continue;
            }
            let x = table.block(k, t);
            if let Some(f) = f_d {
                if codec.flag(z ^ x, a) != f {
                    *ll = f64::NEG_INFINITY;
                    continue;
                }
            }
            let like = codec.coset_likelihood(base ^ x);
            *ll = if like < PROB_FLOOR {
                f64::NEG_INFINITY
            } else {
                *ll + like.log2()
            };
        }
    }

    fn distribution(&self) -> Result<Vec<f64>> {
        let max = self.loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Degenerate(
                "no key is consistent with the observations".into(),
            ));
        }
        let weights: Vec<f64> = self.loglik.iter().map(|ll| (ll - max).exp2()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }

    /// Entropy of the normalized posterior and the MAP key (lowest index on ties).
    fn summary(&self) -> Result<(f64, usize)> {
        let post = self.distribution()?;
        let h = post.iter().map(|q| plogp(*q)).sum();
        let map = post
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, q)| if *q > best.1 { (k, *q) } else { best })
            .0;
        Ok((h, map))
    }
}

/// `P(k | observations)` for every key in [`enumerate_keys`] order, under a
/// uniform key prior.
pub fn posterior_over_keys(params: &SystemParams, obs: &ObservationSet) -> Result<Vec<f64>> {
    let (_, keys) = key_space(params)?;
    let mut post = KeyPosterior::new(keys.len());
    if obs.tau() > 0 {
        let codec = Codec::new(params)?;
        let table = KeyTable::new(params, obs.tau())?;
        for (i, r) in obs.rounds().iter().enumerate() {
            post.update(
                &codec,
                &table,
                i + 1,
                r.a.to_u64()?,
                r.z.to_u64()?,
                r.v_star.to_u64()?,
                r.f_d,
            );
        }
    }
    post.distribution()
}

/// Per-sample posterior entropies along one session, with and without the
/// feedback flag, and whether the MAP key was wrong.
#[derive(Clone, Debug)]
struct SampleTrace {
    h: Vec<f64>,
    h_flag: Vec<f64>,
    wrong: Vec<bool>,
    wrong_flag: Vec<bool>,
}

/// Monte-Carlo equivocation curve over `tau = 1..=tau_max`.
///
/// Sample `i` draws its key and session from substream `i` of the seeded
/// generator, so per-sample values do not depend on the worker count and
/// sums are taken in sample order.
#[derive(Clone, Debug)]
pub struct McCurve {
    params: SystemParams,
    strategy: AdversaryStrategy,
    key_bits: usize,
    tau_max: usize,
    seed: u64,
    traces: Vec<SampleTrace>,
}

fn mean_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl McCurve {
    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn samples(&self) -> usize {
        self.traces.len()
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    fn column(&self, tau: usize, with_flag: bool) -> impl ExactSizeIterator<Item = f64> + Clone + '_ {
        assert!((1..=self.tau_max).contains(&tau), "tau {tau} outside the curve");
        self.traces.iter().map(move |s| {
            if with_flag {
                s.h_flag[tau - 1]
            } else {
                s.h[tau - 1]
            }
        })
    }

    /// Mean posterior entropy at `tau` with its standard error; `tau = 0`
    /// is the prior, `key_bits` exactly.
    pub fn report(&self, tau: usize, with_flag: bool) -> EquivocationReport {
        let mut report =
            EquivocationReport::new(&self.params, Quantity::key(with_flag), tau, Mode::MonteCarlo);
        report.samples = self.samples();
        report.seed = Some(self.seed);
        if tau == 0 {
            report.value_bits = self.key_bits as f64;
        } else {
            let (mean, se) = mean_stderr(self.column(tau, with_flag));
            report.value_bits = mean;
            report.stderr_bits = se;
        }
        report
    }

    pub fn reports(&self, with_flag: bool) -> Vec<EquivocationReport> {
        (1..=self.tau_max).map(|t| self.report(t, with_flag)).collect()
    }

    /// Paired `H(K|A,Z,Fd) - H(K|A,Z)` at `tau`: mean and standard error.
    pub fn flag_difference(&self, tau: usize) -> (f64, f64) {
        let d: Vec<f64> = self
            .column(tau, true)
            .zip(self.column(tau, false))
            .map(|(f, h)| f - h)
            .collect();
        mean_stderr(d.into_iter())
    }

    /// Paired step `H(tau + 1) - H(tau)`: mean and standard error.
    pub fn step_difference(&self, tau: usize, with_flag: bool) -> (f64, f64) {
        let d: Vec<f64> = self
            .column(tau + 1, with_flag)
            .zip(self.column(tau, with_flag))
            .map(|(next, cur)| next - cur)
            .collect();
        mean_stderr(d.into_iter())
    }

    /// Fraction of samples whose MAP key is wrong after `tau` rounds.
    pub fn map_key_error_rate(&self, tau: usize, with_flag: bool) -> f64 {
        let wrong = self
            .traces
            .iter()
            .filter(|s| {
                if with_flag {
                    s.wrong_flag[tau - 1]
                } else {
                    s.wrong[tau - 1]
                }
            })
            .count();
        wrong as f64 / self.samples() as f64
    }

    /// Fano term for jointly decoding the key and the coset randomness of
    /// `tau` rounds, using the empirical MAP key error as its error rate.
    pub fn fano_key_term(&self, tau: usize, with_flag: bool) -> f64 {
        let pe = self.map_key_error_rate(tau, with_flag);
        let bits = tau * self.params.randomness_bits() + self.key_bits;
        fano_term(bits, pe)
    }

    /// Smallest `tau` whose estimate is below `epsilon_frac * key_bits`.
    pub fn threshold(&self, epsilon_frac: f64, with_flag: bool) -> Option<usize> {
        let level = epsilon_frac * self.key_bits as f64;
        (1..=self.tau_max).find(|t| self.report(*t, with_flag).value_bits < level)
    }

    pub fn strategy(&self) -> &AdversaryStrategy {
        &self.strategy
    }
}

/// Everything shared by the samples of one curve.
struct McSetup<'a> {
    params: &'a SystemParams,
    strategy: &'a AdversaryStrategy,
    codec: Codec,
    table: KeyTable,
    key_bits: usize,
    tau_max: usize,
    seed: u64,
}

fn sample_trace(setup: &McSetup<'_>, index: u64) -> Result<SampleTrace> {
    let McSetup {
        params,
        strategy,
        codec,
        table,
        key_bits,
        tau_max,
        seed,
    } = setup;
    let (key_bits, tau_max) = (*key_bits, *tau_max);
    let mut rng = ChaCha20Rng::seed_from_u64(*seed);
    rng.set_stream(index);
    let key_index = rng.gen_range(0..1u64 << key_bits);
    let key = Key::from_index(key_index, key_bits);
    let records = run_session(params, &key, tau_max, &PlaintextSource::Uniform, strategy, &mut rng)?;

    let keys = table.keys();
    let (mut plain, mut flagged) = (KeyPosterior::new(keys), KeyPosterior::new(keys));
    let mut trace = SampleTrace {
        h: Vec::with_capacity(tau_max),
        h_flag: Vec::with_capacity(tau_max),
        wrong: Vec::with_capacity(tau_max),
        wrong_flag: Vec::with_capacity(tau_max),
    };
    for r in &records {
        let (a, z, vs) = (r.a().to_u64()?, r.z().to_u64()?, r.v_star().to_u64()?);
        plain.update(codec, table, r.t(), a, z, vs, None);
        flagged.update(codec, table, r.t(), a, z, vs, Some(r.f_d()));
        let (h, map) = plain.summary()?;
        let (hf, mapf) = flagged.summary()?;
        trace.h.push(h);
        trace.h_flag.push(hf);
        trace.wrong.push(map as u64 != key_index);
        trace.wrong_flag.push(mapf as u64 != key_index);
    }
    Ok(trace)
}

/// Runs `samples` independent sessions of `tau_max` rounds and records the
/// exact posterior entropy over keys after every round.
pub fn entropy_curve_mc(
    params: &SystemParams,
    strategy: &AdversaryStrategy,
    tau_max: usize,
    samples: usize,
    seed: u64,
) -> Result<McCurve> {
    if tau_max < 1 {
        return Err(Error::InvalidParameter("tau_max must be at least 1".into()));
    }
    if samples < 1 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let (key_bits, _) = key_space(params)?;
    let setup = McSetup {
        params,
        strategy,
        codec: Codec::new(params)?,
        table: KeyTable::new(params, tau_max)?,
        key_bits,
        tau_max,
        seed,
    };
    let traces = (0..samples as u64)
        .into_par_iter()
        .map(|i| sample_trace(&setup, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(McCurve {
        params: params.clone(),
        strategy: strategy.clone(),
        key_bits,
        tau_max,
        seed,
        traces,
    })
}

/// Monte-Carlo estimate of `H(K|A,Z)` or `H(K|A,Z,Fd)` after `tau` rounds.
pub fn conditional_entropy_mc(
    params: &SystemParams,
    quantity: &Quantity,
    tau: usize,
    samples: usize,
    strategy: &AdversaryStrategy,
    seed: u64,
) -> Result<EquivocationReport> {
    let with_flag = if *quantity == Quantity::key(false) {
        false
    } else if *quantity == Quantity::key(true) {
        true
    } else {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo mode supports H(K|A,Z) and H(K|A,Z,Fd), not {quantity}"
        )));
    };
    let (key_bits, _) = key_space(params)?;
    if tau == 0 {
        let mut report = EquivocationReport::new(params, *quantity, 0, Mode::MonteCarlo);
        report.value_bits = key_bits as f64;
        report.samples = samples;
        report.seed = Some(seed);
        return Ok(report);
    }
    let curve = entropy_curve_mc(params, strategy, tau, samples, seed)?;
    Ok(curve.report(tau, with_flag))
}

fn fano_term(bits: usize, pe: f64) -> f64 {
    let h = binary_entropy(pe).expect("error rate is a probability");
    if bits == 0 || pe == 0.0 {
        return h;
    }
    // log2(2^bits - 1) without overflowing for wide spaces
    let log_alphabet = bits as f64 + (-(-(bits as f64)).exp2()).ln_1p() / std::f64::consts::LN_2;
    h + pe * log_alphabet
}

/// `h(P_e) + P_e log2(2^{m-l} - 1)`.
pub fn delta_ecc(m_minus_l: usize, pe: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pe) {
        return Err(Error::InvalidParameter(format!(
            "error probability must lie in [0, 1], got {pe}"
        )));
    }
    Ok(fano_term(m_minus_l, pe))
}

/// Exact probability that MAP decoding of `C(0, U) + V` misses `U`:
/// `1 - sum_w max_u 2^{-r} P_V(w + C(0, u))`.
pub fn map_decode_error_rate(params: &SystemParams) -> Result<f64> {
    let n = params.n();
    if n > EXACT_MAP_MAX_N {
        return Err(Error::EnumerationCap {
            what: "exact MAP error rate",
            needed_log2: n,
            cap_log2: EXACT_MAP_MAX_N,
            hint: "use the sampled estimate",
        });
    }
    let codec = Codec::new(params)?;
    let scale = 1.0 / codec.rand.len() as f64;
    let correct: f64 = (0..1u64 << n)
        .map(|w| {
            codec
                .rand
                .iter()
                .map(|g| codec.pv[(w ^ g).count_ones() as usize])
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        * scale;
    Ok((1.0 - correct).max(0.0))
}

/// Sampled MAP error rate over `trials` draws of `(U, V)`.
pub fn map_decode_error_rate_sampled<R: Rng + ?Sized>(
    params: &SystemParams,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let codec = Codec::new(params)?;
    let mut errors = 0usize;
    for _ in 0..trials {
        let u = rng.gen_range(0..codec.rand.len());
        let v = crate::channel::sample_noise(params.channel(), codec.n, rng).to_u64()?;
        let w = codec.rand[u] ^ v;
        let decoded = codec
            .rand
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, g)| {
                let q = codec.pv[(w ^ g).count_ones() as usize];
                if q > best.1 {
                    (i, q)
                } else {
                    best
                }
            })
            .0;
        errors += usize::from(decoded != u);
    }
    Ok(errors as f64 / trials as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundTerms {
    pub h_u: f64,
    /// `H(V)`, or `H(V'|Fd)` for the flag-conditioned bound.
    pub h_v: f64,
    pub h_x: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub bound_bits: f64,
    pub terms: BoundTerms,
    /// Set once paired with an exact value: `exact >= bound - 1e-9`.
    pub satisfied: Option<bool>,
    pub exact_bits: Option<f64>,
}

impl BoundReport {
    pub fn against(mut self, exact: f64) -> Self {
        self.satisfied = Some(exact >= self.bound_bits - TOL);
        self.exact_bits = Some(exact);
        self
    }
}

/// `min{H_U, H_X + H_V} + min{H_V, H_X} - delta`. May be negative.
pub fn lemma_bound(terms: BoundTerms) -> BoundReport {
    BoundReport {
        bound_bits: terms.h_u.min(terms.h_x + terms.h_v) + terms.h_v.min(terms.h_x) - terms.delta,
        terms,
        satisfied: None,
        exact_bits: None,
    }
}

/// Evaluates the single-block lower bound on `H(X|A,Z)` with every term
/// computed exactly, and pairs it with the exact equivocation. With
/// `with_flag` the noise term is `H(V'|Fd)`.
pub fn lemma_check(
    params: &SystemParams,
    strategy: &AdversaryStrategy,
    with_flag: bool,
) -> Result<BoundReport> {
    use Var::*;
    let joint = ExactJoint::build(params, 1, strategy)?;
    let h_v = if with_flag {
        joint.conditional(&Quantity::new(&[VPrime], &[F]))?
    } else {
        joint.entropy(VarSet::of(&[V]))
    };
    let pe = map_decode_error_rate(params)?;
    let terms = BoundTerms {
        h_u: joint.entropy(VarSet::of(&[U])),
        h_v,
        h_x: joint.entropy(VarSet::of(&[X])),
        delta: delta_ecc(params.randomness_bits(), pe)?,
    };
    let exact = joint.conditional(&Quantity::new(&[X], &[A, Z]))?;
    Ok(lemma_bound(terms).against(exact))
}

#[derive(Clone, Debug)]
pub struct ThresholdResult {
    pub quantity: Quantity,
    /// `None` when the curve never drops below the level.
    pub tau_thres: Option<usize>,
    pub curve: Vec<EquivocationReport>,
}

/// Sweeps `tau = 1..=tau_max` and returns the first crossing below
/// `epsilon_frac * key_bits`. Active strategies use the flag-conditioned
/// quantity.
pub fn find_threshold(
    params: &SystemParams,
    strategy: &AdversaryStrategy,
    epsilon_frac: f64,
    tau_max: usize,
    samples: usize,
    seed: u64,
) -> Result<ThresholdResult> {
    if !(epsilon_frac > 0.0 && epsilon_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon_frac must lie in (0, 1), got {epsilon_frac}"
        )));
    }
    let with_flag = *strategy != AdversaryStrategy::Passive;
    let curve = entropy_curve_mc(params, strategy, tau_max, samples, seed)?;
    Ok(ThresholdResult {
        quantity: Quantity::key(with_flag),
        tau_thres: curve.threshold(epsilon_frac, with_flag),
        curve: curve.reports(with_flag),
    })
}
