//! End-to-end pipeline: coset encoding, error-correction encoding, keystream
//! XOR, the (possibly tampered) channel and the receiver with its feedback
//! flag, plus the adversary harnesses that drive whole sessions.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;

use crate::channel::{check_injection, sample_noise, ChannelParams, NoiseRecord};
use crate::coding::{LinearBlockCode, WiretapCode};
use crate::error::{check_len, Error, Result};
use crate::gf2::{BitMatrix, BitVector};
use crate::keystream::{keystream_block, Key, KeystreamModel};

/// How the receiver's feedback flag `f_d` is defined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FlagMode {
    /// `f_d = 1` iff the decoded data equals the data that was sent.
    #[default]
    Genie,
    /// `f_d = 1` iff the bounded-distance decoder did not report a failure.
    Detected,
}

impl FlagMode {
    pub fn label(&self) -> &'static str {
        match self {
            FlagMode::Genie => "genie",
            FlagMode::Detected => "detected",
        }
    }
}

impl fmt::Display for FlagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FlagMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "genie" => Ok(FlagMode::Genie),
            "detected" => Ok(FlagMode::Detected),
            other => Err(Error::Parse(format!("unknown flag mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SystemParams {
    wiretap: Option<WiretapCode>,
    ecc: LinearBlockCode,
    channel: ChannelParams,
    keystream: KeystreamModel,
    flag_mode: FlagMode,
    combined: BitMatrix,
}

impl SystemParams {
    /// Without a wiretap encoder the whole `k`-bit ECC message is data.
    pub fn new(
        wiretap: Option<WiretapCode>,
        ecc: LinearBlockCode,
        channel: ChannelParams,
        keystream: KeystreamModel,
        flag_mode: FlagMode,
    ) -> Result<Self> {
        let combined = match &wiretap {
            Some(w) => {
                check_len("ecc dimension k vs wiretap length m", w.m(), ecc.k())?;
                w.generator().mul(ecc.generator())?
            }
            None => ecc.generator().clone(),
        };
        Ok(SystemParams {
            wiretap,
            ecc,
            channel,
            keystream,
            flag_mode,
            combined,
        })
    }

    pub fn wiretap(&self) -> Option<&WiretapCode> {
        self.wiretap.as_ref()
    }

    pub fn ecc(&self) -> &LinearBlockCode {
        &self.ecc
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn keystream(&self) -> &KeystreamModel {
        &self.keystream
    }

    pub fn flag_mode(&self) -> FlagMode {
        self.flag_mode
    }

    pub fn key_bits(&self) -> Option<usize> {
        self.keystream.key_bits()
    }

    /// Data bits per block.
    pub fn l(&self) -> usize {
        self.wiretap.as_ref().map_or(self.ecc.k(), WiretapCode::l)
    }

    /// Coset-encoded block length, the ECC message length.
    pub fn m(&self) -> usize {
        self.ecc.k()
    }

    /// Random bits per block; zero without a wiretap encoder.
    pub fn randomness_bits(&self) -> usize {
        self.m() - self.l()
    }

    pub fn n(&self) -> usize {
        self.ecc.n()
    }

    /// `G = G_H G_ECC`, or `G_ECC` for the baseline.
    pub fn combined_generator(&self) -> &BitMatrix {
        &self.combined
    }

    pub fn with_channel(&self, channel: ChannelParams) -> Self {
        SystemParams {
            channel,
            ..self.clone()
        }
    }

    pub fn with_keystream(&self, keystream: KeystreamModel) -> Self {
        SystemParams {
            keystream,
            ..self.clone()
        }
    }

    pub fn with_flag_mode(&self, flag_mode: FlagMode) -> Self {
        SystemParams {
            flag_mode,
            ..self.clone()
        }
    }

    /// `C_ECC(C_H(a || u))`.
    pub fn encode(&self, a: &BitVector, u: &BitVector) -> Result<BitVector> {
        check_len("data bits", self.l(), a.len())?;
        check_len("random bits", self.randomness_bits(), u.len())?;
        self.combined.left_mul(&a.concat(u))
    }

    /// `C_ECC(C_{H,a}(a))`, the part of the codeword fixed by the data alone.
    pub fn encode_data_part(&self, a: &BitVector) -> Result<BitVector> {
        self.encode(a, &BitVector::zeros(self.randomness_bits()))
    }

    /// Decodes a decrypted word `c + v'` back to the data bits; `None` when
    /// the error-correcting decoder reports a failure.
    pub fn decode_data(&self, word: &BitVector) -> Result<Option<BitVector>> {
        let Some(msg) = self.ecc.decode(word)?.into_message() else {
            return Ok(None);
        };
        Ok(Some(match &self.wiretap {
            Some(w) => w.decode(&msg)?.0,
            None => msg,
        }))
    }

    /// The feedback flag for a decoding result.
    pub fn flag(&self, decoded: Option<&BitVector>, sent: &BitVector) -> bool {
        match self.flag_mode {
            FlagMode::Genie => decoded == Some(sent),
            FlagMode::Detected => decoded.is_some(),
        }
    }
}

/// Transmitter-side values of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub t: usize,
    pub a: BitVector,
    pub u: BitVector,
    pub x: BitVector,
    pub y: BitVector,
}

/// A fully observed round: transmitter values, channel noise, the received
/// word and the receiver's verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransmissionRecord {
    t: usize,
    a: BitVector,
    u: BitVector,
    x: BitVector,
    y: BitVector,
    noise: NoiseRecord,
    z: BitVector,
    a_hat: Option<BitVector>,
    f_d: bool,
}

impl TransmissionRecord {
    /// Assembles a record, checking `y = C(a, u) + x` and `z = y + v'`.
    pub fn new(
        params: &SystemParams,
        tx: Transmission,
        noise: NoiseRecord,
        z: BitVector,
        a_hat: Option<BitVector>,
        f_d: bool,
    ) -> Result<Self> {
        let expected_y = &params.encode(&tx.a, &tx.u)? ^ &tx.x;
        if expected_y != tx.y {
            return Err(Error::Invariant(format!("round {}: y != C(a,u) + x", tx.t)));
        }
        if tx.y.try_xor(noise.v_prime())? != z {
            return Err(Error::Invariant(format!("round {}: z != y + v'", tx.t)));
        }
        Ok(TransmissionRecord {
            t: tx.t,
            a: tx.a,
            u: tx.u,
            x: tx.x,
            y: tx.y,
            noise,
            z,
            a_hat,
            f_d,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn a(&self) -> &BitVector {
        &self.a
    }

    pub fn u(&self) -> &BitVector {
        &self.u
    }

    pub fn x(&self) -> &BitVector {
        &self.x
    }

    pub fn y(&self) -> &BitVector {
        &self.y
    }

    pub fn v(&self) -> &BitVector {
        self.noise.v()
    }

    pub fn v_star(&self) -> &BitVector {
        self.noise.v_star()
    }

    pub fn v_prime(&self) -> &BitVector {
        self.noise.v_prime()
    }

    pub fn z(&self) -> &BitVector {
        &self.z
    }

    pub fn a_hat(&self) -> Option<&BitVector> {
        self.a_hat.as_ref()
    }

    pub fn f_d(&self) -> bool {
        self.f_d
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum AdversaryStrategy {
    #[default]
    Passive,
    /// The same vector is XORed onto every block.
    ConstantVector(BitVector),
}

impl AdversaryStrategy {
    /// The injected vector for a block of length `n`; zero when passive.
    pub fn v_star(&self, n: usize) -> Result<BitVector> {
        match self {
            AdversaryStrategy::Passive => Ok(BitVector::zeros(n)),
            AdversaryStrategy::ConstantVector(v) => {
                check_injection(n, v)?;
                Ok(v.clone())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdversaryStrategy::Passive => "passive".into(),
            AdversaryStrategy::ConstantVector(v) => format!("constant_vector:{v}"),
        }
    }
}

/// Where each round's data bits come from.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum PlaintextSource {
    #[default]
    Uniform,
    Fixed(BitVector),
}

/// `C_ECC(C_H(a || u)) + f^(t)(K)`.
pub fn transmit(
    params: &SystemParams,
    key: &Key,
    a: &BitVector,
    u: &BitVector,
    t: usize,
) -> Result<Transmission> {
    let x = keystream_block(params.keystream(), key, t, params.n())?;
    transmit_with_keystream(params, x, a, u, t)
}

/// [`transmit`] with the keystream block supplied directly.
pub fn transmit_with_keystream(
    params: &SystemParams,
    x: BitVector,
    a: &BitVector,
    u: &BitVector,
    t: usize,
) -> Result<Transmission> {
    check_len("keystream block", params.n(), x.len())?;
    let y = &params.encode(a, u)? ^ &x;
    Ok(Transmission {
        t,
        a: a.clone(),
        u: u.clone(),
        x,
        y,
    })
}

/// Samples channel noise and returns it with `z = y + v + v_star`.
pub fn apply_channel<R: Rng + ?Sized>(
    params: &SystemParams,
    tx: &Transmission,
    v_star: &BitVector,
    rng: &mut R,
) -> Result<(NoiseRecord, BitVector)> {
    check_injection(params.n(), v_star)?;
    let v = sample_noise(params.channel(), params.n(), rng);
    let noise = NoiseRecord::new(v, v_star.clone())?;
    let z = &tx.y ^ noise.v_prime();
    Ok((noise, z))
}

/// Decrypts with the shared key and decodes. Returns the decoded data (if
/// decoding succeeded) and the feedback flag; `sent` is the harness's
/// knowledge of the true data, used by the genie flag.
pub fn receive(
    params: &SystemParams,
    key: &Key,
    z: &BitVector,
    t: usize,
    sent: &BitVector,
) -> Result<(Option<BitVector>, bool)> {
    let x = keystream_block(params.keystream(), key, t, params.n())?;
    receive_with_keystream(params, &x, z, sent)
}

pub fn receive_with_keystream(
    params: &SystemParams,
    x: &BitVector,
    z: &BitVector,
    sent: &BitVector,
) -> Result<(Option<BitVector>, bool)> {
    check_len("received word", params.n(), z.len())?;
    let a_hat = params.decode_data(&z.try_xor(x)?)?;
    let f_d = params.flag(a_hat.as_ref(), sent);
    Ok((a_hat, f_d))
}

/// What a known-plaintext adversary can strip from an observation:
/// `z + C_ECC(C_{H,a}(a))`. Without a wiretap encoder this is exactly
/// `x + v'`; with one, the coset randomness `C_ECC(C_{H,u}(u))` remains.
pub fn kpa_residual(params: &SystemParams, a: &BitVector, z: &BitVector) -> Result<BitVector> {
    z.try_xor(&params.encode_data_part(a)?)
}

/// Runs `tau` rounds. Per round the generator is drawn for the data (when
/// uniform), then the random bits, then the channel noise.
pub fn run_session<R: Rng + ?Sized>(
    params: &SystemParams,
    key: &Key,
    tau: usize,
    source: &PlaintextSource,
    strategy: &AdversaryStrategy,
    rng: &mut R,
) -> Result<Vec<TransmissionRecord>> {
    if tau < 1 {
        return Err(Error::InvalidParameter("a session needs at least one round".into()));
    }
    let lfsr = params.keystream().lfsr().ok_or_else(|| {
        Error::InvalidParameter("sessions need the keyed keystream model".into())
    })?;
    let n = params.n();
    let v_star = strategy.v_star(n)?;
    let stream = lfsr.stream(key, tau * n)?;
    let mut records = Vec::with_capacity(tau);
    for t in 1..=tau {
        let a = match source {
            PlaintextSource::Uniform => BitVector::random(params.l(), rng),
            PlaintextSource::Fixed(a) => {
                check_len("fixed plaintext", params.l(), a.len())?;
                a.clone()
            }
        };
        let u = BitVector::random(params.randomness_bits(), rng);
        let x = stream.slice((t - 1) * n, t * n);
        let tx = transmit_with_keystream(params, x, &a, &u, t)?;
        let (noise, z) = apply_channel(params, &tx, &v_star, rng)?;
        let (a_hat, f_d) = receive_with_keystream(params, &tx.x, &z, &a)?;
        records.push(TransmissionRecord::new(params, tx, noise, z, a_hat, f_d)?);
    }
    Ok(records)
}

/// Writes a session as CSV: `t,a,u,x,v,v_star,z,f_d`, vectors as bit strings.
pub fn write_trace<W: Write>(records: &[TransmissionRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "t,a,u,x,v,v_star,z,f_d")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.a,
            r.u,
            r.x,
            r.v(),
            r.v_star(),
            r.z,
            u8::from(r.f_d)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{make_repetition, WiretapCode};
    use crate::keystream::Lfsr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    fn example_params(p: f64) -> SystemParams {
        SystemParams::new(
            Some(WiretapCode::standard(2, 4).unwrap()),
            make_repetition(4, 3).unwrap(),
            ChannelParams::new(p).unwrap(),
            KeystreamModel::Keyed(Lfsr::with_default_taps(8).unwrap()),
            FlagMode::Genie,
        )
        .unwrap()
    }

    fn single_bit_params(flag_mode: FlagMode) -> SystemParams {
        SystemParams::new(
            None,
            make_repetition(1, 3).unwrap(),
            ChannelParams::noiseless(),
            KeystreamModel::Keyed(Lfsr::with_default_taps(3).unwrap()),
            flag_mode,
        )
        .unwrap()
    }

    #[test]
    fn dimension_gate() {
        let err = SystemParams::new(
            Some(WiretapCode::standard(2, 4).unwrap()),
            make_repetition(3, 3).unwrap(),
            ChannelParams::noiseless(),
            KeystreamModel::Ideal,
            FlagMode::Genie,
        );
        assert!(err.is_err());
    }

    #[test]
    fn transmit_examples() {
        let params = example_params(0.0);
        let zero = transmit_with_keystream(&params, BitVector::zeros(12), &bv("00"), &bv("00"), 1)
            .unwrap();
        assert!(zero.y.is_zero());

        let tx = transmit_with_keystream(&params, BitVector::zeros(12), &bv("10"), &bv("11"), 1)
            .unwrap();
        assert_eq!(tx.y, bv("111111000111"));

        let tx1 = transmit_with_keystream(&params, BitVector::ones(12), &bv("10"), &bv("11"), 1)
            .unwrap();
        assert_eq!(tx1.y, bv("000000111000"));
        assert!(transmit_with_keystream(&params, BitVector::zeros(11), &bv("10"), &bv("11"), 1)
            .is_err());
    }

    #[test]
    fn transmit_uses_the_block_keystream() {
        let params = example_params(0.0);
        let key = Key::from_index(0xa5, 8);
        let tx = transmit(&params, &key, &bv("01"), &bv("10"), 3).unwrap();
        assert_eq!(tx.x, keystream_block(params.keystream(), &key, 3, 12).unwrap());
    }

    #[test]
    fn channel_examples() {
        let params = example_params(0.0);
        let tx = transmit(&params, &Key::from_index(3, 8), &bv("10"), &bv("01"), 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (_, z) = apply_channel(&params, &tx, &BitVector::zeros(12), &mut rng).unwrap();
        assert_eq!(z, tx.y);
        let e1 = BitVector::unit(12, 0);
        let (_, z) = apply_channel(&params, &tx, &e1, &mut rng).unwrap();
        assert_eq!(z, &tx.y ^ &e1);

        let noisy = example_params(0.1);
        let (n1, z1) = apply_channel(&noisy, &tx, &e1, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let (n2, z2) = apply_channel(&noisy, &tx, &e1, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!((n1.clone(), z1.clone()), (n2, z2));
        assert_eq!(z1, &(&tx.y ^ n1.v()) ^ &e1);
    }

    #[test]
    fn receive_examples() {
        let params = example_params(0.0);
        let key = Key::from_index(77, 8);
        let (a, u) = (bv("11"), bv("01"));
        let tx = transmit(&params, &key, &a, &u, 2).unwrap();
        let (a_hat, f_d) = receive(&params, &key, &tx.y, 2, &a).unwrap();
        assert_eq!(a_hat.as_ref(), Some(&a));
        assert!(f_d);

        let mut z = tx.y.clone();
        for b in 0..4 {
            z.flip(3 * b + 1);
        }
        let (a_hat, f_d) = receive(&params, &key, &z, 2, &a).unwrap();
        assert_eq!(a_hat.as_ref(), Some(&a));
        assert!(f_d);
    }

    #[test]
    fn undetected_error_flags() {
        let sent = bv("0");
        let x = BitVector::zeros(3);
        let z = bv("110");
        let detected = single_bit_params(FlagMode::Detected);
        let (a_hat, f_d) = receive_with_keystream(&detected, &x, &z, &sent).unwrap();
        assert_eq!(a_hat, Some(bv("1")));
        assert!(f_d);
        let genie = single_bit_params(FlagMode::Genie);
        let (a_hat, f_d) = receive_with_keystream(&genie, &x, &z, &sent).unwrap();
        assert_eq!(a_hat, Some(bv("1")));
        assert!(!f_d);
    }

    #[test]
    fn kpa_residual_examples() {
        let baseline = SystemParams::new(
            None,
            make_repetition(2, 3).unwrap(),
            ChannelParams::new(0.2).unwrap(),
            KeystreamModel::Keyed(Lfsr::with_default_taps(6).unwrap()),
            FlagMode::Genie,
        )
        .unwrap();
        let key = Key::from_index(41, 6);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for r in run_session(&baseline, &key, 20, &PlaintextSource::Uniform, &AdversaryStrategy::Passive, &mut rng).unwrap() {
            let residual = kpa_residual(&baseline, r.a(), r.z()).unwrap();
            assert_eq!(&residual ^ r.x(), r.v().clone());
        }

        let enhanced = example_params(0.1);
        let key = Key::from_index(200, 8);
        let a = BitVector::zeros(2);
        let records = run_session(
            &enhanced,
            &key,
            20,
            &PlaintextSource::Fixed(a.clone()),
            &AdversaryStrategy::Passive,
            &mut rng,
        )
        .unwrap();
        for r in records {
            let residual = kpa_residual(&enhanced, &a, r.z()).unwrap();
            let coset = enhanced.encode(&a, r.u()).unwrap();
            assert_eq!(residual, &(r.x() ^ &coset) ^ r.v());
        }
    }

    #[test]
    fn session_strategies() {
        let params = example_params(0.1);
        let key = Key::from_index(19, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let one = run_session(&params, &key, 1, &PlaintextSource::Uniform, &AdversaryStrategy::Passive, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].v_star().is_zero());

        let vs = bv("110000000000");
        let active = AdversaryStrategy::ConstantVector(vs.clone());
        let recs = run_session(&params, &key, 30, &PlaintextSource::Uniform, &active, &mut rng).unwrap();
        assert!(recs.iter().all(|r| r.v_star() == &vs));
        assert!(recs.iter().all(|r| r.v_prime() == &(r.v() ^ &vs)));
        assert!(run_session(&params, &key, 0, &PlaintextSource::Uniform, &active, &mut rng).is_err());
        let bad = AdversaryStrategy::ConstantVector(bv("11"));
        assert!(run_session(&params, &key, 2, &PlaintextSource::Uniform, &bad, &mut rng).is_err());
    }

    #[test]
    fn record_identities_hold() {
        let params = example_params(0.25);
        let key = Key::from_index(123, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let strategy = AdversaryStrategy::ConstantVector(bv("100000000001"));
        for r in run_session(&params, &key, 50, &PlaintextSource::Uniform, &strategy, &mut rng).unwrap() {
            assert_eq!(r.y(), &(&params.encode(r.a(), r.u()).unwrap() ^ r.x()));
            assert_eq!(r.z(), &(r.y() ^ r.v_prime()));
            assert_eq!(&(r.z() ^ r.x()), &(&params.encode(r.a(), r.u()).unwrap() ^ r.v_prime()));
            assert_eq!(r.f_d(), r.a_hat() == Some(r.a()));
        }
    }

    #[test]
    fn noiseless_correction_within_radius_exhaustive() {
        let params = example_params(0.0);
        let key = Key::from_index(90, 8);
        for x in 0..16u64 {
            let (a, u) = (BitVector::from_u64(x & 3, 2), BitVector::from_u64(x >> 2, 2));
            let tx = transmit(&params, &key, &a, &u, 1).unwrap();
            // one flip per rep-3 block, every placement
            for pattern in 0..81u32 {
                let mut v_star = BitVector::zeros(12);
                let mut p = pattern;
                for b in 0..4 {
                    let pos = (p % 3) as usize;
                    p /= 3;
                    if pattern % 2 == 0 || b % 2 == 0 {
                        v_star.set(3 * b + pos, true);
                    }
                }
                let mut rng = ChaCha20Rng::seed_from_u64(0);
                let (_, z) = apply_channel(&params, &tx, &v_star, &mut rng).unwrap();
                let (a_hat, f_d) = receive(&params, &key, &z, 1, &a).unwrap();
                assert_eq!(a_hat.as_ref(), Some(&a));
                assert!(f_d);
            }
        }
    }

    #[test]
    fn trace_export() {
        let params = example_params(0.1);
        let key = Key::from_index(5, 8);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let recs = run_session(&params, &key, 3, &PlaintextSource::Uniform, &AdversaryStrategy::Passive, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_trace(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,a,u,x,v,v_star,z,f_d");
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[0], "1");
        assert_eq!(fields[3], recs[0].x().to_string());
    }

    #[test]
    fn flag_mode_parsing() {
        assert_eq!("genie".parse::<FlagMode>().unwrap(), FlagMode::Genie);
        assert_eq!("detected".parse::<FlagMode>().unwrap(), FlagMode::Detected);
        assert!("oracle".parse::<FlagMode>().is_err());
    }
}
