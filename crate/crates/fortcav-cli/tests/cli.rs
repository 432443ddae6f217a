use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fortcav")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.as_ref().display()))
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect()
}

#[test]
fn magic_emits_one_provenance_stamped_line_and_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let o = run(&["magic", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read(out1.join("magic.csv"));
    let b = read(out2.join("magic.csv"));
    assert_eq!(a, b, "same config and seed must reproduce the same bytes");

    let head: Vec<&str> = a.lines().take(4).collect();
    assert!(head[0].starts_with("# fortcav "));
    assert_eq!(head[1], "# scenario: magic");
    assert_eq!(head[2], "# seed: 9");
    let digest = head[3].strip_prefix("# config-sha256: ").expect("hash line");
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));

    let rows = data_lines(&a);
    assert_eq!(rows.len(), 2, "header plus exactly one data line");
    let wavelength: f64 = rows[1].split(',').next().unwrap().parse().unwrap();
    assert!(
        (933.6..=937.6).contains(&wavelength),
        "magic wavelength {wavelength} nm"
    );
}

#[test]
fn config_file_and_subcommand_produce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scenario": "magic", "seed": 3}"#).unwrap();
    let from_file = dir.path().join("file");
    let from_args = dir.path().join("args");

    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", from_file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["magic", "--seed", "3", "--out", from_args.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(
        read(from_file.join("magic.csv")),
        read(from_args.join("magic.csv")),
        "both entry points share the parameter defaults and the config hash"
    );
}

#[test]
fn validation_failures_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");

    let o = run(&["lifetime", "--ensemble", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ensemble"), "field named in: {err}");
    assert!(!out.exists(), "nothing may be written on validation failure");

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": "magic", "params": {"bracke": [1, 2]}}"#).unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bracke"), "unknown field named in: {err}");
    assert!(!out.exists());

    let o = run(&["staircase", "--in", "no-such-record.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn module_errors_exit_1_with_the_module_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    // The bracket spans the 894 nm line, which the search refuses to cross.
    let o = run(&["magic", "--bracket", "880", "900", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("resonance"), "verbatim module message, got: {err}");
    assert!(!out.exists());
}

#[test]
fn staircase_record_reanalyzes_to_the_same_segments() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("synth");
    let again = dir.path().join("again");

    let o = run(&["staircase", "--seed", "5", "--out", synth.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record = synth.join("record.csv");
    assert!(synth.join("record.csv.meta.json").is_file());

    let o = run(&["staircase", "--in", record.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let first = read(synth.join("segments.csv"));
    let second = read(again.join("segments.csv"));
    assert_eq!(
        data_lines(&first),
        data_lines(&second),
        "the emitted record must carry everything the analyzer needs"
    );
    // Defaults plant losses at 0.25/0.5/0.75 s with atoms 3..=0.
    let rows = data_lines(&first);
    assert_eq!(rows.len(), 5);
    let atoms: Vec<&str> = rows[1..].iter().map(|r| r.split(',').last().unwrap()).collect();
    assert_eq!(atoms, ["3", "2", "1", "0"]);
}

#[test]
fn survival_output_feeds_the_standalone_fitter() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");

    let o = run(&[
        "lifetime", "--ensemble", "150", "--delays", "0.2,0.9,1.8",
        "--seed", "2", "--out", sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let survival = sim.join("survival.csv");
    let o = run(&["fit-lifetime", "--in", survival.to_str().unwrap(), "--out", fit.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let tau_of = |text: &str| -> f64 {
        data_lines(text)[1].split(',').next().unwrap().parse().unwrap()
    };
    let tau_sim = tau_of(&read(sim.join("lifetime_fit.csv")));
    let tau_refit = tau_of(&read(fit.join("lifetime_fit.csv")));
    assert!(tau_sim > 0.0);
    // The simulation fits by weighted least squares, the refit by binomial
    // deviance; at 150 trials per delay the estimators differ by a few
    // percent, not more.
    assert!(
        ((tau_refit - tau_sim) / tau_sim).abs() < 0.10,
        "independent refit {tau_refit} s vs {tau_sim} s"
    );
}

#[test]
fn schema_documents_every_scenario_tag() {
    let o = run(&["schema"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).expect("schema is valid JSON");
    let defaults = json["params_defaults"].as_object().unwrap();
    for tag in ["stark-scan", "magic", "transmit", "lifetime", "repump", "staircase", "heating-budget"] {
        assert!(defaults.contains_key(tag), "missing defaults for {tag}");
    }
}
