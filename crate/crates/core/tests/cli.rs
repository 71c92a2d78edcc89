use std::path::Path;
use std::process::{Command, Output};

use nnkrylov::harness::{preset, read_history_csv, ExperimentConfig, Summary, PRESETS};
use nnkrylov::problems::ProblemInstance;

fn nnkrylov(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nnkrylov"));
    cmd.args(args);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().unwrap()
}

#[test]
fn presets_are_listed() {
    let out = nnkrylov(&["presets"], None);
    assert!(out.status.success());
    let listed: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(listed, PRESETS);
}

#[test]
fn shown_config_runs_as_a_config_file() {
    let out = nnkrylov(&["show-config", "--preset", "deblur1d"], None);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deblur.toml");
    std::fs::write(&path, &out.stdout).unwrap();

    let parsed = ExperimentConfig::load(&path).unwrap();
    let original = preset("deblur1d").unwrap();
    assert_eq!(parsed.to_toml(), original.to_toml());

    let results = dir.path().join("results");
    let run = nnkrylov(
        &[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--budget",
            "15",
            "--seeds",
            "4",
            "--solvers",
            "nn-fcgls,mrnsd",
        ],
        Some(&results),
    );
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary: Summary =
        serde_json::from_str(&std::fs::read_to_string(results.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.solvers.len(), 2);
    assert!(results.join("report.md").exists());

    let mut csvs = 0;
    for entry in std::fs::read_dir(&results).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            csvs += 1;
            let rows = read_history_csv(&path).unwrap();
            assert_eq!(rows.len(), 16, "{}", path.display());
            assert_eq!(rows[0].iter, 0);
            assert!(rows.iter().all(|r| r.rel_err.is_some()));
        }
    }
    assert_eq!(csvs, 2);
}

#[test]
fn generated_problem_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = nnkrylov(
        &["generate", "--preset", "tomo64-under", "--seed", "3"],
        Some(dir.path()),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let p = ProblemInstance::load(dir.path()).unwrap();
    let cfg = preset("tomo64-under").unwrap();
    let direct = cfg
        .problem
        .build(&nnkrylov::noise::NoiseSpec {
            seed: 3,
            ..cfg.noise
        })
        .unwrap();
    assert_eq!(p.b, direct.b);
    assert_eq!(p.x_exact, direct.x_exact);
}

#[test]
fn bad_input_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_solver = nnkrylov(
        &["run", "--preset", "deblur1d", "--solvers", "nope"],
        Some(dir.path()),
    );
    assert_eq!(unknown_solver.status.code(), Some(2));
    let unknown_preset = nnkrylov(&["run", "--preset", "nope"], Some(dir.path()));
    assert_eq!(unknown_preset.status.code(), Some(2));
    let missing = nnkrylov(
        &[
            "run",
            "--config",
            dir.path().join("missing.toml").to_str().unwrap(),
        ],
        None,
    );
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn stop_at_rule_ends_runs_early() {
    let dir = tempfile::tempdir().unwrap();
    let out = nnkrylov(
        &[
            "run",
            "--preset",
            "deblur1d",
            "--seeds",
            "1",
            "--solvers",
            "nn-fcgls",
            "--stop-at-rule",
        ],
        Some(dir.path()),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let budget = preset("deblur1d").unwrap().budget;
    let csv = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let rows = read_history_csv(&csv).unwrap();
    assert!(rows.len() <= budget);
    assert!(rows.last().unwrap().stop_discr || rows.last().unwrap().stop_stab);
}
