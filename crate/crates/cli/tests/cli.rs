use std::path::Path;
use std::process::{Command, Output};

use snsqkd::exec::Execution;
use snsqkd_cli::commands::{build_config, CommonArgs};
use snsqkd_cli::config::{Origin, RunConfig};
use snsqkd_cli::scan;

fn snsqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snsqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_variant_list_is_a_validation_error() {
    let o = snsqkd(&["scan", "--variant", ""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("variants"), "{}", stderr(&o));

    let o = snsqkd(&["scan", "--variant", "plob"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_variant_and_mode_mismatch_are_rejected() {
    let o = snsqkd(&["point", "--variant", "bfer,nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonsense"));

    let o = snsqkd(&["point", "--mode", "asymptotic", "--variant", "bfer-finite"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mode = finite"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = snsqkd(&[
            "scan",
            "--preset",
            "rowC",
            "--range",
            "0:300:100",
            "--variant",
            "original,refined,bfer,odd-sift,aopp",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert!(a.contains("seed=7"));
    assert_eq!(a, b);
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let args = CommonArgs {
        preset: Some("rowF".into()),
        range: Some("0:300:150".into()),
        variant: vec!["bfer".into(), "aopp".into()],
        ..CommonArgs::default()
    };
    let cfg = build_config(&args).unwrap();
    let rows = scan::run_scan(&cfg, Execution::Sequential).unwrap();
    let mut file = std::fs::File::create(&path).unwrap();
    scan::write_csv(&cfg, &rows, &mut file).unwrap();
    drop(file);

    let parsed = scan::read_csv(&path).unwrap();
    assert_eq!(parsed.len(), rows.len());
    for (p, r) in parsed.iter().zip(&rows) {
        assert_eq!(p.distance, r.distance);
        for ((name, rate), point) in p.rates.iter().zip(&r.points) {
            assert_eq!(name, point.variant.name());
            assert_eq!(rate.to_bits(), point.rate.to_bits());
        }
        assert_eq!(p.plob1, r.plob1.unwrap_or(f64::INFINITY));
        assert_eq!(p.plob2, r.plob2.unwrap_or(f64::INFINITY));
    }
    assert!(parsed[0].plob1.is_infinite());
}

#[test]
fn scan_is_independent_of_execution_mode() {
    let cfg = build_config(&CommonArgs {
        preset: Some("rowD".into()),
        range: Some("100:400:100".into()),
        variant: vec!["aopp".into()],
        ..CommonArgs::default()
    })
    .unwrap();
    let seq = scan::run_scan(&cfg, Execution::Sequential).unwrap();
    let par = scan::run_scan(&cfg, Execution::default()).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn plob_values() {
    let o = snsqkd(&["plob", "--range", "0:200:100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "distance_km,plob1,plob2");
    assert!(lines[1].starts_with("0,unbounded,"));
    // eta = 10^-2 at 100 km: -log2(0.99)
    let plob1: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((plob1 - 1.44996e-2).abs() < 1e-7, "{plob1}");
    let plob1_200: f64 = lines[3].split(',').nth(1).unwrap().parse().unwrap();
    assert!((plob1_200 - 1.44277e-4).abs() < 1e-9);
}

#[test]
fn point_report_lists_budget_and_terms() {
    let o = snsqkd(&["point", "--preset", "rowA", "--distance", "150"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for needle in [
        "eps_tot = eps_cor + eps_sec = 22 xi = 2.2e-9",
        "decoy statistics",
        "Chernoff bounds",
        "class 1",
        "key length N_f",
        "PLOB at 150 km",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn optimize_lists_restarts() {
    let o = snsqkd(&["optimize", "--preset", "rowC", "--distance", "200", "--variant", "bfer"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let restarts = text.lines().filter(|l| l.starts_with("16,")).count();
    assert_eq!(restarts, 7, "{text}");
}

#[test]
fn injected_faults_exit_nonzero() {
    let o = snsqkd(&[
        "mc-verify",
        "--set",
        "mc_seeds=2",
        "--set",
        "mc_bits=100000",
        "--inject-fault",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = snsqkd(&["mc-verify", "--set", "mc_seeds=2", "--set", "mc_bits=100000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = snsqkd(&["qubit-check", "--set", "qubit_grid=20", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).ends_with("FAIL\n"));
    let o = snsqkd(&["qubit-check", "--set", "qubit_grid=20"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn mc_verify_csv_carries_seed_and_prng() {
    let o = snsqkd(&[
        "mc-verify",
        "--seed",
        "11",
        "--set",
        "mc_seeds=1",
        "--set",
        "mc_bits=50000",
    ]);
    let text = stdout(&o);
    assert!(text.contains("prng=ChaCha8Rng"));
    assert!(text.lines().any(|l| l.starts_with("11,n_CC,")), "{text}");
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_errors_name_file_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.cfg", "preset = rowB\n# comment\nmisalignment = lots\n");
    let o = snsqkd(&["point", "--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.cfg:3"), "{err}");
    assert!(err.contains("`misalignment`"), "{err}");

    let p = write(dir.path(), "unknown.cfg", "colour = blue\n");
    let err = stderr(&snsqkd(&["point", "--config", &p]));
    assert!(err.contains("unknown.cfg:1") && err.contains("unknown field"), "{err}");

    let p = write(dir.path(), "late.cfg", "distance = 50\npreset = rowA\n");
    let err = stderr(&snsqkd(&["point", "--config", &p]));
    assert!(err.contains("late.cfg:2") && err.contains("precede"), "{err}");
}

#[test]
fn flags_override_file_and_file_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "run.cfg",
        "preset = rowB\nmisalignment = 0.07\ndistance = 120\n",
    );
    let cfg = build_config(&CommonArgs {
        config: Some(p.clone().into()),
        distance: Some(80.0),
        ..CommonArgs::default()
    })
    .unwrap();
    assert_eq!(cfg.preset, "rowB");
    assert_eq!(cfg.exp.misalignment, 0.07);
    assert_eq!(cfg.distance, 80.0);

    let cfg = build_config(&CommonArgs {
        config: Some(p.into()),
        preset: Some("rowE".into()),
        ..CommonArgs::default()
    })
    .unwrap();
    assert_eq!(cfg.preset, "rowE");
    assert_eq!(cfg.exp.misalignment, 0.07);
    assert_eq!(cfg.distance, 120.0);
}

#[test]
fn fixed_protocol_skips_the_optimizer() {
    let mut cfg = RunConfig::default();
    for (k, v) in [("p", "0.1"), ("mu_z", "0.35"), ("distance", "100")] {
        cfg.set(k, v, &Origin::Flag).unwrap();
    }
    cfg.finish().unwrap();
    let r = scan::solve(&cfg, snsqkd::pipeline::Variant::Bfer, 100.0, Execution::Sequential).unwrap();
    assert!(r.runs.is_empty());
    assert_eq!(r.best.p_send, 0.1);
    assert!(r.rate > 0.0);
}
