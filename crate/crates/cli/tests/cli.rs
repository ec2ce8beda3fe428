use std::path::Path;
use std::process::{Command, Output};

use qtomo_cli::config::{parse_config_with_env, Task};
use qtomo_cli::output::{FitReport, FitVariable, Provenance};

fn qtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtomo"))
        .args(args)
        .env_remove("QTOMO_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = qtomo(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_run_writes_csv_fit_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "run",
        "--protocol",
        "static",
        "--state",
        "eq7",
        "--n",
        "1000",
        "--reps",
        "5",
        "--seed",
        "7",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("static N=1000 reps=5 "));
    let csv = String::from_utf8(read(dir.path(), "campaign.csv")).unwrap();
    assert!(csv.starts_with("protocol,N,reps,mean_infidelity,stderr,seed\r\n"));
    let prov: Provenance = serde_json::from_slice(&read(dir.path(), "provenance.json")).unwrap();
    let Task::Run(c) = prov.config.task else {
        panic!()
    };
    assert_eq!(c.error_model, qtomo::ErrorModelSpec::None);
    assert_eq!(prov.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn exit_status_two_for_usage_errors() {
    let out = qtomo(&["run", "--protocol", "adaptive", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("`alpha`"));
    assert_eq!(qtomo(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(qtomo(&[]).status.code(), Some(2));
    assert_eq!(qtomo(&["run", "--reps", "ten"]).status.code(), Some(2));
    assert_eq!(qtomo(&["fit"]).status.code(), Some(2));
}

#[test]
fn help_and_version_exit_zero() {
    assert!(ok(&["--help"]).contains("sweep-noise"));
    assert!(ok(&["run", "--help"]).contains("--threads"));
    assert!(ok(&["--version"]).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn harness_failures_exit_one_and_name_the_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = qtomo(&[
        "run",
        "--protocol",
        "adaptive",
        "--n",
        "4,100",
        "--reps",
        "3",
        "--model",
        "1",
        "--e",
        "0.02",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr_of(&out);
    assert!(
        msg.contains("protocol adaptive(alpha=0.5)")
            && msg.contains("N 4")
            && msg.contains("E 0.02"),
        "{msg}"
    );
    assert!(!dir.path().join("campaign.csv").exists());

    let out = qtomo(&[
        "sweep-noise",
        "--protocols",
        "reduced-adaptive",
        "--start-n",
        "3",
        "--e-grid",
        "0.01,0.02",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr_of(&out);
    assert!(
        msg.contains("protocol reduced-adaptive(alpha=0.5)")
            && msg.contains("N 3")
            && msg.contains("E 0.01"),
        "{msg}"
    );
}

#[test]
fn unreadable_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        qtomo(&["fit", "--input", s(&missing), "--out-dir", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b\n1,2\n").unwrap();
    assert_eq!(
        qtomo(&["fit", "--input", s(&junk), "--out-dir", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    std::fs::write(
        &cfg,
        "reps = 150\nn = [200, 400]\nseed = 3\nalphas = [0.2]\n",
    )
    .unwrap();
    ok(&[
        "run",
        "--config",
        s(&cfg),
        "--reps",
        "10",
        "--out-dir",
        s(dir.path()),
    ]);
    let prov: Provenance = serde_json::from_slice(&read(dir.path(), "provenance.json")).unwrap();
    let Task::Run(c) = prov.config.task else {
        panic!()
    };
    assert_eq!((c.reps, c.seed, c.n_grid), (10, 3, vec![200, 400]));
    let csv = String::from_utf8(read(dir.path(), "campaign.csv")).unwrap();
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("10")));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "reps = 10\nrepetitions = 5\n").unwrap();
    let out = qtomo(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("`repetitions`"));
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qtomo"))
        .args(["run", "--n", "300", "--reps", "2"])
        .env("QTOMO_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("campaign.csv").exists());
}

#[test]
fn equal_seeds_give_identical_csv_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        ok(&[
            "run",
            "--protocol",
            "adaptive",
            "--model",
            "2",
            "--n-min",
            "100",
            "--n-max",
            "3000",
            "--n-points",
            "4",
            "--reps",
            "2",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out-dir",
            s(&out),
        ]);
        read(&out, "campaign.csv")
    };
    let first = run("a", "1");
    assert_eq!(first, run("b", "1"));
    assert_eq!(first, run("c", "4"));
}

#[test]
fn csv_is_rfc4180_with_exact_decimals() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "sweep-alpha",
        "--alphas",
        "0.3,0.7",
        "--n",
        "100,1000,10000",
        "--reps",
        "4",
        "--out-dir",
        s(dir.path()),
    ]);
    let bytes = read(dir.path(), "campaign.csv");
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.ends_with("\r\n"));
    assert!(!text.replace("\r\n", "").contains('\n'));
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(&bytes[..]);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.unwrap();
        rows += 1;
        for col in [3, 4] {
            let field = &record[col];
            assert!(!field.contains(['e', 'E']), "{field}");
            let digits = field
                .trim_start_matches(['0', '.'])
                .chars()
                .filter(char::is_ascii_digit)
                .count();
            assert!(digits >= 12, "{field}");
        }
    }
    assert_eq!(rows, 6);
    let report: FitReport = serde_json::from_slice(&read(dir.path(), "fit.json")).unwrap();
    let labels: Vec<&str> = report.fits.iter().map(|f| f.protocol.as_str()).collect();
    assert_eq!(labels, ["adaptive(alpha=0.3)", "adaptive(alpha=0.7)"]);
}

#[test]
fn provenance_reproduces_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cases: [&[&str]; 3] = [
        &[
            "run",
            "--protocol",
            "adaptive-pow",
            "--exponent",
            "0.6",
            "--state",
            "0.1,-0.2,0.3",
            "--model",
            "3",
            "--axis",
            "0,1,1",
            "--e",
            "0.02",
            "--n",
            "100,200,400",
            "--reps",
            "3",
        ],
        &[
            "sweep-alpha",
            "--alphas",
            "0.25",
            "--state",
            "eq10",
            "--n",
            "120,1200",
            "--reps",
            "2",
            "--threads",
            "2",
            "--gnuplot",
        ],
        &[
            "sweep-noise",
            "--protocols",
            "static",
            "--e-grid",
            "0.01,0.03",
            "--reps",
            "4",
            "--model",
            "2",
            "--seed",
            "18446744073709551615",
        ],
    ];
    for args in cases {
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out-dir", s(&out_dir)]);
        ok(&full);
        let prov: Provenance = serde_json::from_slice(&read(&out_dir, "provenance.json")).unwrap();
        let expected =
            parse_config_with_env(std::iter::once("qtomo").chain(full.iter().copied()), None)
                .unwrap();
        assert_eq!(prov.config, expected, "{args:?}");
        let again = serde_json::to_vec_pretty(&prov).unwrap();
        assert_eq!(serde_json::from_slice::<Provenance>(&again).unwrap(), prov);
    }
}

#[test]
fn refitting_a_campaign_csv_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "run",
        "--protocol",
        "adaptive",
        "--n-min",
        "100",
        "--n-max",
        "10000",
        "--n-points",
        "6",
        "--reps",
        "8",
        "--out-dir",
        s(&a),
        "--gnuplot",
    ]);
    let stdout = ok(&[
        "fit",
        "--input",
        s(&a.join("campaign.csv")),
        "--out-dir",
        s(&b),
    ]);
    assert!(stdout.starts_with("adaptive(alpha=0.5) beta="));
    assert_eq!(read(&a, "fit.json"), read(&b, "fit.json"));
    let script = String::from_utf8(read(&a, "plot.gp")).unwrap();
    assert!(script.contains("\"campaign.csv\"") && script.contains("adaptive(alpha=0.5)"));
}

#[test]
fn noise_sweep_reports_two_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "sweep-noise",
        "--model",
        "1",
        "--protocols",
        "static,adaptive",
        "--e-grid",
        "1e-3:1e-1.5:6",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(stdout.lines().count(), 12);
    let fit_json = read(dir.path(), "fit.json");
    let report: FitReport = serde_json::from_slice(&fit_json).unwrap();
    assert_eq!(report.variable, FitVariable::E);
    let slopes: Vec<f64> = report.fits.iter().map(|f| f.fit.unwrap().p).collect();
    assert_eq!(slopes.len(), 2);
    assert!((0.85..=1.2).contains(&slopes[0]), "{slopes:?}");
    assert!((1.75..=2.25).contains(&slopes[1]), "{slopes:?}");

    let refit = dir.path().join("refit");
    ok(&[
        "fit",
        "--input",
        s(&dir.path().join("noise_floors.csv")),
        "--out-dir",
        s(&refit),
    ]);
    assert_eq!(read(&refit, "fit.json"), fit_json);
}

#[test]
fn fixtures_prints_reference_values() {
    let stdout = ok(&["fixtures"]);
    let value = |label: &str| -> f64 {
        let line = stdout.lines().find(|l| l.starts_with(label)).unwrap();
        line.rsplit(' ').next().unwrap().parse().unwrap()
    };
    assert!((value("purity(eq10) =") - 0.991).abs() <= 1e-3);
    assert!((value("F(eq10, eq7) =") - 0.992).abs() <= 1e-3);
}

#[test]
fn output_directory_holds_only_result_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "run",
        "--n",
        "300,3000",
        "--reps",
        "2",
        "--gnuplot",
        "--out-dir",
        s(dir.path()),
    ]);
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["campaign.csv", "fit.json", "plot.gp", "provenance.json"]
    );
}
