use std::process::Command;

use wiretap_core::cli::body_after_timestamp;

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wiretap-sim"))
}

const SMALL: [&str; 10] = [
    "--l", "1", "--m", "2", "--ecc", "rep:k=2,r=3", "--key-bits", "3", "--samples", "40",
];

#[test]
fn rejects_bad_crossover_probability() {
    let out = sim().args(["--p", "0.6"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[0, 0.5)"));
}

#[test]
fn rejects_ecc_dimension_mismatch() {
    let out = sim().args(["--ecc", "hamming74", "--m", "3", "--l", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let csv = dir.path().join("out.csv");
    std::fs::write(
        &cfg,
        "# small passive run\nscenario = passive\nl = 1\nm = 2\necc = rep:k=2,r=3\nkey_bits = 3\ntau = 1..4\nsamples = 30\nseed = 5\n",
    )
    .unwrap();
    let status = sim()
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "11", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("# seed = 11"));
    assert!(text.contains("# tau = 1..4"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau,quantity,value_bits,stderr_bits,samples,scenario,p,key_bits,seed");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].ends_with(",30,passive,0.1,3,11"));

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let out = sim().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chainrule_check_exits_cleanly() {
    let out = sim()
        .args(SMALL)
        .args(["--scenario", "chainrule-check", "--p", "0.25"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].contains(",residual,"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn cap_violation_is_a_runtime_error() {
    let out = sim()
        .args(["--scenario", "lemma1-check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Monte-Carlo"));
}

#[test]
fn active_run_is_independent_of_worker_count() {
    let run = |workers: &str| {
        let out = sim()
            .args(SMALL)
            .args(["--scenario", "active", "--tau", "1..5", "--vstar", "100100", "--workers", workers])
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let (one, three) = (run("1"), run("3"));
    let strip = |s: &str| {
        body_after_timestamp(s)
            .lines()
            .filter(|l| !l.starts_with("# worker") && !l.starts_with("# workers"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&one), strip(&three));
    assert!(one.contains("H(K|A,Z,Fd)"));
}
