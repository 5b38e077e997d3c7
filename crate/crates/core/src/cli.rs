//! Experiment configuration and the scenario runner behind `wiretap-sim`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::channel::{ChannelParams, RNG_ALGORITHM};
use crate::coding::{LinearBlockCode, WiretapCode};
use crate::equivocation::{
    chain_rule_identity_check, conditional_entropy_exact, entropy_curve_mc, lemma_check,
    EquivocationReport, McCurve, Quantity, Var,
};
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::keystream::KeystreamModel;
use crate::system::{AdversaryStrategy, FlagMode, SystemParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance for the identities checked by the exact scenarios.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scenario {
    #[default]
    Passive,
    Active,
    Noisefree,
    Lemma1Check,
    ChainruleCheck,
    ThresholdSweep,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Passive => "passive",
            Scenario::Active => "active",
            Scenario::Noisefree => "noisefree",
            Scenario::Lemma1Check => "lemma1-check",
            Scenario::ChainruleCheck => "chainrule-check",
            Scenario::ThresholdSweep => "threshold-sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "passive" => Scenario::Passive,
            "active" => Scenario::Active,
            "noisefree" => Scenario::Noisefree,
            "lemma1-check" => Scenario::Lemma1Check,
            "chainrule-check" => Scenario::ChainruleCheck,
            "threshold-sweep" => Scenario::ThresholdSweep,
            other => return Err(Error::Parse(format!("unknown scenario {other:?}"))),
        })
    }
}

/// Every recognised configuration key, in echo order.
pub const CONFIG_KEYS: [&str; 16] = [
    "scenario",
    "l",
    "m",
    "ecc",
    "wiretap",
    "keystream",
    "p",
    "key_bits",
    "tau",
    "samples",
    "seed",
    "epsilon_frac",
    "flag_mode",
    "vstar",
    "workers",
    "out",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub l: usize,
    pub m: usize,
    pub ecc: String,
    /// `coset` (default generator for `l`, `m`), `none`, or a full
    /// `coset:l=..,g4=..` specification.
    pub wiretap: String,
    /// Explicit keystream; otherwise an LFSR of `key_bits` with default taps.
    pub keystream: Option<String>,
    pub p: f64,
    pub key_bits: Option<usize>,
    pub tau: (usize, usize),
    pub samples: usize,
    pub seed: u64,
    pub epsilon_frac: f64,
    pub flag_mode: FlagMode,
    /// Injected vector; defaults to weight two at the start of the block.
    pub vstar: Option<BitVector>,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    /// Output file; standard output when absent.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Passive,
            l: 2,
            m: 4,
            ecc: "rep:k=4,r=3".into(),
            wiretap: "coset".into(),
            keystream: None,
            p: 0.1,
            key_bits: None,
            tau: (1, 64),
            samples: 2000,
            seed: 42,
            epsilon_frac: 0.05,
            flag_mode: FlagMode::Genie,
            vstar: None,
            workers: 0,
            out: None,
        }
    }
}

const DEFAULT_KEY_BITS: usize = 8;

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {value:?}")))
}

fn parse_tau(value: &str) -> Result<(usize, usize)> {
    let (lo, hi) = match value.split_once("..") {
        Some((lo, hi)) => (parse_num("tau", lo)?, parse_num("tau", hi)?),
        None => {
            let t = parse_num("tau", value)?;
            (t, t)
        }
    };
    if hi < 1 {
        return Err(Error::InvalidParameter("tau_max must be at least 1".into()));
    }
    if lo > hi {
        return Err(Error::InvalidParameter(format!("empty tau range {lo}..{hi}")));
    }
    Ok((lo, hi))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Applies one setting. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "scenario" => self.scenario = value.parse()?,
            "l" => self.l = parse_num("l", value)?,
            "m" => self.m = parse_num("m", value)?,
            "ecc" => self.ecc = value.to_string(),
            "wiretap" => self.wiretap = value.to_string(),
            "keystream" => self.keystream = Some(value.to_string()),
            "p" => {
                let p: f64 = parse_num("p", value)?;
                ChannelParams::new(p)?;
                self.p = p;
            }
            "key_bits" => self.key_bits = Some(parse_num("key_bits", value)?),
            "tau" => self.tau = parse_tau(value)?,
            "samples" => {
                self.samples = parse_num("samples", value)?;
                if self.samples < 1 {
                    return Err(Error::InvalidParameter("samples must be at least 1".into()));
                }
            }
            "seed" => self.seed = parse_num("seed", value)?,
            "epsilon_frac" => {
                let e: f64 = parse_num("epsilon_frac", value)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "epsilon_frac must lie in (0, 1), got {e}"
                    )));
                }
                self.epsilon_frac = e;
            }
            "flag_mode" => self.flag_mode = value.parse()?,
            "vstar" => self.vstar = Some(value.parse()?),
            "workers" => self.workers = parse_num("workers", value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Parse(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults, then the file settings, then the flag settings.
    pub fn from_sources(file: &[(String, String)], flags: &[(String, String)]) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (k, v) in file.iter().chain(flags) {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that depends on several settings at once.
    pub fn validate(&self) -> Result<()> {
        let params = self.system_params()?;
        if let Some(v) = &self.vstar {
            crate::channel::check_injection(params.n(), v)?;
        }
        Ok(())
    }

    pub fn keystream_model(&self) -> Result<KeystreamModel> {
        match &self.keystream {
            None => format!("lfsr:bits={}", self.key_bits.unwrap_or(DEFAULT_KEY_BITS)).parse(),
            Some(spec) => {
                let model: KeystreamModel = spec.parse()?;
                if let (Some(k), Some(bits)) = (self.key_bits, model.key_bits()) {
                    if k != bits {
                        return Err(Error::InvalidParameter(format!(
                            "key_bits = {k} disagrees with keystream {spec:?}"
                        )));
                    }
                }
                Ok(model)
            }
        }
    }

    fn wiretap_code(&self) -> Result<Option<WiretapCode>> {
        let code = match self.wiretap.trim() {
            "none" => return Ok(None),
            "coset" => WiretapCode::standard(self.l, self.m)?,
            spec => WiretapCode::from_spec(spec, self.m)?,
        };
        if code.l() != self.l {
            return Err(Error::InvalidParameter(format!(
                "wiretap spec has l = {} but l = {}",
                code.l(),
                self.l
            )));
        }
        Ok(Some(code))
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let ecc = LinearBlockCode::from_spec(&self.ecc)?;
        let wiretap = self.wiretap_code()?;
        if wiretap.is_none() && ecc.k() != self.m {
            return Err(Error::DimensionMismatch {
                context: "ecc dimension k vs m",
                expected: self.m,
                found: ecc.k(),
            });
        }
        SystemParams::new(
            wiretap,
            ecc,
            ChannelParams::new(self.p)?,
            self.keystream_model()?,
            self.flag_mode,
        )
    }

    /// The injected vector used by active runs.
    pub fn effective_vstar(&self, n: usize) -> BitVector {
        self.vstar.clone().unwrap_or_else(|| {
            let mut v = BitVector::zeros(n);
            for i in 0..n.min(2) {
                v.set(i, true);
            }
            v
        })
    }

    /// `key = value` lines describing the effective configuration.
    pub fn effective_lines(&self) -> Result<Vec<String>> {
        let params = self.system_params()?;
        let (p, keystream) = match self.scenario {
            Scenario::Noisefree => (0.0, params.keystream().to_string()),
            _ => (self.p, params.keystream().to_string()),
        };
        let values = [
            self.scenario.to_string(),
            self.l.to_string(),
            self.m.to_string(),
            self.ecc.clone(),
            self.wiretap.clone(),
            keystream,
            p.to_string(),
            params.key_bits().map_or("-".into(), |k| k.to_string()),
            format!("{}..{}", self.tau.0, self.tau.1),
            self.samples.to_string(),
            self.seed.to_string(),
            self.epsilon_frac.to_string(),
            self.flag_mode.to_string(),
            self.effective_vstar(params.n()).to_string(),
            self.workers.to_string(),
            self.out
                .as_ref()
                .map_or("-".into(), |p| p.display().to_string()),
        ];
        Ok(CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}"))
            .collect())
    }
}

/// Result of a run: whether every checked invariant held and how many data
/// rows were written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub ok: bool,
    pub rows: usize,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.ok {
            0
        } else {
            1
        }
    }
}

const CURVE_HEADER: [&str; 9] = [
    "tau",
    "quantity",
    "value_bits",
    "stderr_bits",
    "samples",
    "scenario",
    "p",
    "key_bits",
    "seed",
];

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    let mag = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&mag) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn io_err(e: impl fmt::Display) -> Error {
    Error::InvalidParameter(format!("output error: {e}"))
}

struct Emitter<W: Write> {
    csv: csv::Writer<W>,
    rows: usize,
}

impl<W: Write> Emitter<W> {
    fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(header).map_err(io_err)?;
        Ok(Emitter { csv, rows: 0 })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.csv.write_record(fields).map_err(io_err)?;
        self.rows += 1;
        Ok(())
    }

    fn report(&mut self, config: &ExperimentConfig, r: &EquivocationReport) -> Result<()> {
        self.row([
            r.tau.to_string(),
            r.quantity.to_string(),
            num(r.value_bits),
            num(r.stderr_bits),
            r.samples.to_string(),
            config.scenario.to_string(),
            num(r.p),
            r.key_bits.map_or(String::new(), |k| k.to_string()),
            config.seed.to_string(),
        ])
    }

    fn finish(self) -> Result<usize> {
        self.csv.into_inner().map_err(io_err)?.flush().map_err(io_err)?;
        Ok(self.rows)
    }
}

fn curve_rows<W: Write>(
    out: &mut Emitter<W>,
    config: &ExperimentConfig,
    curve: &McCurve,
    flags: &[bool],
) -> Result<()> {
    for tau in config.tau.0..=config.tau.1 {
        for &with_flag in flags {
            out.report(config, &curve.report(tau, with_flag))?;
        }
    }
    Ok(())
}

fn threshold_row<W: Write>(
    out: &mut Emitter<W>,
    config: &ExperimentConfig,
    curve: &McCurve,
    with_flag: bool,
) -> Result<()> {
    let label = format!("tau_thres:{}", Quantity::key(with_flag));
    let params = config.system_params()?;
    let key_bits = curve.key_bits().to_string();
    match curve.threshold(config.epsilon_frac, with_flag) {
        Some(t) => {
            let r = curve.report(t, with_flag);
            out.row([
                t.to_string(),
                label,
                num(r.value_bits),
                num(r.stderr_bits),
                r.samples.to_string(),
                config.scenario.to_string(),
                num(params.channel().p()),
                key_bits,
                config.seed.to_string(),
            ])
        }
        None => out.row([
            "not_reached".to_string(),
            label,
            String::new(),
            String::new(),
            curve.samples().to_string(),
            config.scenario.to_string(),
            num(params.channel().p()),
            key_bits,
            config.seed.to_string(),
        ]),
    }
}

/// Writes the header comment block. The first line carries the timestamp and
/// is the only line that differs between identical runs.
pub fn write_header<W: Write>(config: &ExperimentConfig, workers: usize, out: &mut W) -> Result<()> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut lines = vec![
        format!("# generated_unix = {stamp}"),
        format!("# wiretap-sim {VERSION}"),
        format!("# rng = {RNG_ALGORITHM}"),
        format!("# worker_threads = {workers}"),
    ];
    lines.extend(config.effective_lines()?.into_iter().map(|l| format!("# {l}")));
    for line in lines {
        writeln!(out, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Runs the scenario and writes the CSV body (no header) to `out`.
pub fn run_body<W: Write>(config: &ExperimentConfig, out: W) -> Result<RunOutcome> {
    let base = config.system_params()?;
    let vstar = config.effective_vstar(base.n());
    let active = AdversaryStrategy::ConstantVector(vstar);
    let (lo, hi) = config.tau;
    match config.scenario {
        Scenario::Passive => {
            let mut emit = Emitter::new(out, &CURVE_HEADER)?;
            let curve = entropy_curve_mc(&base, &AdversaryStrategy::Passive, hi, config.samples, config.seed)?;
            curve_rows(&mut emit, config, &curve, &[false])?;
            Ok(RunOutcome { ok: true, rows: emit.finish()? })
        }
        Scenario::Active => {
            let mut emit = Emitter::new(out, &CURVE_HEADER)?;
            let curve = entropy_curve_mc(&base, &active, hi, config.samples, config.seed)?;
            curve_rows(&mut emit, config, &curve, &[false, true])?;
            Ok(RunOutcome { ok: true, rows: emit.finish()? })
        }
        Scenario::ThresholdSweep => {
            let mut emit = Emitter::new(out, &CURVE_HEADER)?;
            let curve = entropy_curve_mc(&base, &active, hi, config.samples, config.seed)?;
            curve_rows(&mut emit, config, &curve, &[false, true])?;
            threshold_row(&mut emit, config, &curve, false)?;
            threshold_row(&mut emit, config, &curve, true)?;
            Ok(RunOutcome { ok: true, rows: emit.finish()? })
        }
        Scenario::Noisefree => {
            let noiseless = base.with_channel(ChannelParams::noiseless());
            let mut emit = Emitter::new(out, &CURVE_HEADER)?;
            let ideal = noiseless.with_keystream(KeystreamModel::Ideal);
            let exact = conditional_entropy_exact(
                &ideal,
                &Quantity::new(&[Var::X], &[Var::A, Var::Z]),
                1,
                &AdversaryStrategy::Passive,
            )?;
            let expected = noiseless.randomness_bits() as f64;
            let ok = (exact.value_bits - expected).abs() <= IDENTITY_TOLERANCE;
            emit.report(config, &exact)?;
            if !noiseless.keystream().is_ideal() {
                let curve = entropy_curve_mc(&noiseless, &AdversaryStrategy::Passive, hi, config.samples, config.seed)?;
                curve_rows(&mut emit, config, &curve, &[false])?;
            }
            Ok(RunOutcome { ok, rows: emit.finish()? })
        }
        Scenario::ChainruleCheck => {
            let mut emit = Emitter::new(
                out,
                &[
                    "tau",
                    "model",
                    "p",
                    "key_bits",
                    "flag_mode",
                    "strategy",
                    "h_x_given_az",
                    "h_x_given_azf",
                    "residual",
                    "flag_residual",
                    "flag_gap",
                ],
            )?;
            let mut ok = true;
            for strategy in [AdversaryStrategy::Passive, active] {
                let report = chain_rule_identity_check(&base, lo.max(1), &strategy)?;
                ok &= report.max_residual() <= IDENTITY_TOLERANCE;
                emit.row([
                    lo.max(1).to_string(),
                    base.keystream().label().to_string(),
                    num(base.channel().p()),
                    base.key_bits().map_or(String::new(), |k| k.to_string()),
                    base.flag_mode().to_string(),
                    strategy.label(),
                    num(report.h_x_given_az),
                    num(report.h_x_given_azf),
                    num(report.residual),
                    num(report.flag_residual),
                    num(report.flag_gap),
                ])?;
            }
            Ok(RunOutcome { ok, rows: emit.finish()? })
        }
        Scenario::Lemma1Check => {
            let mut emit = Emitter::new(
                out,
                &[
                    "variant", "model", "p", "h_u", "h_v", "h_x", "delta", "bound_bits",
                    "exact_bits", "satisfied",
                ],
            )?;
            let ideal = base.with_keystream(KeystreamModel::Ideal);
            let mut ok = true;
            for (variant, strategy, with_flag) in [
                ("lemma1", AdversaryStrategy::Passive, false),
                ("lemma2_flag", active, true),
            ] {
                let report = lemma_check(&ideal, &strategy, with_flag)?;
                let satisfied = report.satisfied.unwrap_or(false);
                ok &= satisfied;
                emit.row([
                    variant.to_string(),
                    ideal.keystream().label().to_string(),
                    num(base.channel().p()),
                    num(report.terms.h_u),
                    num(report.terms.h_v),
                    num(report.terms.h_x),
                    num(report.terms.delta),
                    num(report.bound_bits),
                    num(report.exact_bits.unwrap_or(f64::NAN)),
                    u8::from(satisfied).to_string(),
                ])?;
            }
            Ok(RunOutcome { ok, rows: emit.finish()? })
        }
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<(usize, T)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    Ok((threads, pool.install(f)))
}

/// Runs the scenario into `out`: header comment lines, then the CSV body.
pub fn run_to_writer<W: Write>(config: &ExperimentConfig, mut out: W) -> Result<RunOutcome> {
    let (threads, body) = with_pool(config.workers, || {
        let mut body = Vec::new();
        run_body(config, &mut body).map(|outcome| (outcome, body))
    })?;
    let (outcome, body) = body?;
    write_header(config, threads, &mut out)?;
    out.write_all(&body).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    Ok(outcome)
}

/// Runs the scenario, writing to `config.out` or standard output.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    match &config.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot create {}: {e}", path.display())))?;
            run_to_writer(config, BufWriter::new(file))
        }
        None => run_to_writer(config, io::stdout().lock()),
    }
}

/// The part of a results file below the timestamp line.
pub fn body_after_timestamp(text: &str) -> &str {
    match text.split_once('\n') {
        Some((first, rest)) if first.starts_with("# generated_unix") => rest,
        _ => text,
    }
}
