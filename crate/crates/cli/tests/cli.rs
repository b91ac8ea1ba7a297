//! End-to-end tests of the `acausal` binary: exit codes, report shape and
//! byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acausal_core::format::{self, ProcessFile, StateFile, SubsystemRepr, UnitaryFile};
use acausal_core::tensor::{StateVector, Subsystem};
use acausal_core::C64;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_acausal")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn validate_accepts_bundled_switch() {
    let file = data_dir().join("w_switch2.json");
    let out = run(&["validate", file.to_str().unwrap(), "--samples", "40"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"valid\": true"));
}

#[test]
fn validate_rejects_bundled_counterexample() {
    let file = data_dir().join("counterexample_uw.json");
    let out = run(&["validate", file.to_str().unwrap(), "--samples", "40"]);
    assert_eq!(exit_code(&out), 1);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"valid\": false"));
}

#[test]
fn validate_rejects_malformed_json_with_exit_2() {
    let dir = std::env::temp_dir().join("acausal_cli_test_malformed");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn switch_equivalence_passes_for_small_n() {
    for n in ["2", "3"] {
        let out = run(&["switch", "--n", n, "--check-equivalence"]);
        assert_eq!(exit_code(&out), 0, "n = {n}");
    }
}

#[test]
fn switch_hits_resource_limit_for_large_n() {
    let out = run(&["switch", "--n", "9"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn switch_emits_gate_list() {
    let out = run(&["switch", "--n", "2", "--emit-circuit"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"name\": \"CSWAP\""));
    assert!(!text.contains("\"matrix\""));
}

#[test]
fn det_both_random_is_below_tolerance() {
    let out = run(&["det", "--n", "3", "--simulate", "both", "--channels", "random:7"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["choi_distance"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["party_queries"].as_u64().unwrap(), 9);
}

#[test]
fn det_acausal_only_reports_cptp_diagnostics() {
    let out = run(&["det", "--n", "3", "--simulate", "acausal", "--channels", "random:5"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["acausal_tp_deviation"].as_f64().unwrap() < 1e-9);
}

#[test]
fn det_identity_four_parties_matches() {
    let out = run(&["det", "--n", "4", "--simulate", "both", "--channels", "identity"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["choi_distance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn game_csv_table_contains_expected_values() {
    let out = run(&["game", "--n", "3", "--strategy", "all", "--format", "csv"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,process,causal_guess,brute_force\n"));
    assert!(text.contains("3,1,0.6666666666666666,0.6666666666666666"));
}

#[test]
fn game_brute_force_rejects_large_n() {
    let out = run(&["game", "--n", "4", "--strategy", "brute-force"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn teleport_demo_reports_inverse_square_probability() {
    let out = run(&["pctc", "--teleport-demo", "--dim", "3", "--seed", "11"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((report["probability"].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-12);
    assert!(report["fidelity"].as_f64().unwrap() > 1.0 - 1e-12);
}

#[test]
fn pctc_swap_acts_as_identity_channel() {
    let out = run(&[
        "pctc",
        "--unitary",
        data_dir().join("swap_pctc.json").to_str().unwrap(),
        "--state",
        data_dir().join("plus_state.json").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    // K = 1/2, so ||K psi||^2 = 1/4 and the state is unchanged
    assert!((report["probability"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let amps = report["state"]["amplitudes"].as_array().unwrap();
    let a0 = amps[0].as_array().unwrap()[0].as_f64().unwrap();
    assert!((a0 - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn pctc_traceless_unitary_fails_with_exit_1() {
    let out = run(&[
        "pctc",
        "--unitary",
        data_dir().join("traceless_pctc.json").to_str().unwrap(),
        "--state",
        data_dir().join("plus_state.json").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("undefined"), "stderr: {err}");
}

#[test]
fn identical_seeds_produce_byte_identical_reports() {
    let file = data_dir().join("w_det3.json");
    let args =
        ["validate", file.to_str().unwrap(), "--samples", "30", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(exit_code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    // thread count must not matter either
    let c = Command::new(bin())
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .unwrap();
    let d = Command::new(bin())
        .args(args)
        .env("RAYON_NUM_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(c.stdout, d.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn budget_env_var_is_honored() {
    let out = Command::new(bin())
        .args(["switch", "--n", "3"])
        .env("ACAUSAL_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 3);
    // an explicit flag wins over the environment
    let out = Command::new(bin())
        .args(["switch", "--n", "3", "--budget", "33554432"])
        .env("ACAUSAL_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn validate_basis_mode_certifies_switch() {
    let file = data_dir().join("w_switch2.json");
    let out = run(&["validate", file.to_str().unwrap(), "--samples", "10", "--basis"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("basis_max_tp_deviation"));
}

#[test]
fn timings_flag_adds_wall_time() {
    let out = run(&["switch", "--n", "2", "--timings"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("wall_ms"));
}

/// Regenerates the bundled data files. Run explicitly with
/// `cargo test -p acausal-cli -- --ignored regenerate_bundled_data`.
#[test]
#[ignore]
fn regenerate_bundled_data() {
    let dir = data_dir();
    std::fs::create_dir_all(&dir).unwrap();

    let sw = acausal_core::switch::switch_vector(2, 2).unwrap();
    let file = ProcessFile::from_process(&sw.process).unwrap();
    std::fs::write(dir.join("w_switch2.json"), format::to_json_string(&file)).unwrap();

    let det = acausal_core::det::det_process(3).unwrap();
    let file = ProcessFile::from_process(&det.process).unwrap();
    std::fs::write(dir.join("w_det3.json"), format::to_json_string(&file)).unwrap();

    // U with |tr U| = 1: diag(1, exp(2 pi i/3))
    let omega = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let mut u = ndarray::Array2::<C64>::eye(2);
    u[[1, 1]] = omega;
    let w = acausal_core::process::uw_counterexample(&u, 2).unwrap();
    let file = ProcessFile::from_process(&w).unwrap();
    std::fs::write(dir.join("counterexample_uw.json"), format::to_json_string(&file)).unwrap();

    // SWAP on (P, C) with the CTC on C: contracts to 1/2 on P
    let mut swap = ndarray::Array2::<C64>::zeros((4, 4));
    for i in 0..2 {
        for j in 0..2 {
            swap[[i * 2 + j, j * 2 + i]] = C64::new(1.0, 0.0);
        }
    }
    let ufile = UnitaryFile {
        subsystems: vec![
            SubsystemRepr { label: "P".into(), dim: 2 },
            SubsystemRepr { label: "C".into(), dim: 2 },
        ],
        matrix: format::matrix_to_repr(&swap),
        ctc_pairs: vec![("C".into(), "C".into())],
    };
    std::fs::write(dir.join("swap_pctc.json"), format::to_json_string(&ufile)).unwrap();

    // 1 (x) X on (P, C): contracts to zero, evolution undefined
    let mut ix = ndarray::Array2::<C64>::zeros((4, 4));
    for p in 0..2 {
        for c in 0..2 {
            ix[[p * 2 + (1 - c), p * 2 + c]] = C64::new(1.0, 0.0);
        }
    }
    let ufile = UnitaryFile {
        subsystems: vec![
            SubsystemRepr { label: "P".into(), dim: 2 },
            SubsystemRepr { label: "C".into(), dim: 2 },
        ],
        matrix: format::matrix_to_repr(&ix),
        ctc_pairs: vec![("C".into(), "C".into())],
    };
    std::fs::write(dir.join("traceless_pctc.json"), format::to_json_string(&ufile)).unwrap();

    let plus = StateVector::new(
        vec![Subsystem::new("P", 2)],
        ndarray::Array1::from_vec(vec![
            C64::new(0.5f64.sqrt(), 0.0),
            C64::new(0.5f64.sqrt(), 0.0),
        ]),
    )
    .unwrap();
    std::fs::write(
        dir.join("plus_state.json"),
        format::to_json_string(&StateFile::from_state(&plus)),
    )
    .unwrap();
}
