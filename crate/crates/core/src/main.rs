use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use wiretap_core::cli::{parse_config_text, run_experiment, ExperimentConfig};

/// Runs equivocation experiments and writes CSV results.
#[derive(Parser, Debug)]
#[command(name = "wiretap-sim", version)]
struct Args {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// passive, active, noisefree, lemma1-check, chainrule-check or threshold-sweep
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// rep:k=4,r=3, hamming74 or matrix:<rows>
    #[arg(long)]
    ecc: Option<String>,
    /// coset, none, or coset:l=..,g4=..
    #[arg(long)]
    wiretap: Option<String>,
    /// ideal or lfsr:bits=..[,taps=..]
    #[arg(long)]
    keystream: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long = "key-bits")]
    key_bits: Option<String>,
    /// single value or a..b
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "epsilon-frac")]
    epsilon_frac: Option<String>,
    /// genie or detected
    #[arg(long = "flag-mode")]
    flag_mode: Option<String>,
    /// injected bit string for active runs
    #[arg(long)]
    vstar: Option<String>,
    /// worker threads, 0 for one per core
    #[arg(long)]
    workers: Option<String>,
    /// output file (standard output if omitted)
    #[arg(long)]
    out: Option<String>,
}

impl Args {
    fn flag_pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("scenario", &self.scenario),
            ("l", &self.l),
            ("m", &self.m),
            ("ecc", &self.ecc),
            ("wiretap", &self.wiretap),
            ("keystream", &self.keystream),
            ("p", &self.p),
            ("key_bits", &self.key_bits),
            ("tau", &self.tau),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("epsilon_frac", &self.epsilon_frac),
            ("flag_mode", &self.flag_mode),
            ("vstar", &self.vstar),
            ("workers", &self.workers),
            ("out", &self.out),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn load_config(args: &Args) -> Result<ExperimentConfig, String> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config_text(&text).map_err(|e| e.to_string())?
        }
        None => Vec::new(),
    };
    ExperimentConfig::from_sources(&file, &args.flag_pairs()).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&config) {
        Ok(outcome) if outcome.ok => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("invariant check failed; see the results file");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
