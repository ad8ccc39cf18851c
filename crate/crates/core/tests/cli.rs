use std::fs;
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polyagraph"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn simulate_writes_run_directory() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let (code, stdout, _) = run(&[
        "simulate", "--graph", "complete:3", "--alpha", "1", "--steps", "100000", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("final "));
    let csv = fs::read_to_string(out.join("trajectories/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,x_1,x_2,x_3"));
    assert!(csv.lines().last().unwrap().starts_with("100000,"));
    let spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["master_seed"], 7);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["spec_hash"], spec["spec_hash"]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let read = |name: &str| {
        let out = dir.path().join(name);
        let (code, _, _) = run(&[
            "simulate", "--graph", "star:3", "--alpha", "2", "--steps", "1000", "--seed", "3",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        fs::read(out.join("trajectories/trajectory.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn disconnected_graph_file_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.edges");
    fs::write(&path, "4\n1 2\n3 4\n").unwrap();
    let (code, _, stderr) = run(&[
        "simulate", "--graph", path.to_str().unwrap(), "--steps", "10", "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("disconnected"), "{stderr}");
}

#[test]
fn bad_flags_exit_one() {
    let (code, _, _) = run(&["simulate", "--graph", "complete:3", "--alpha", "-1"]);
    assert_eq!(code, 1);
    let (code, _, stderr) = run(&["simulate", "--graph", "nonsense:3"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("invalid generator"), "{stderr}");
}

#[test]
fn equilibria_of_k3() {
    let dir = TempDir::new().unwrap();
    let (code, stdout, _) = run(&[
        "equilibria", "--graph", "complete:3", "--alpha", "1", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("equilibria.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("support,x_1,x_2,x_3,classification,max_real_part_nonzero_eig\n"));
    assert_eq!(stdout.matches("unstable").count(), 3);
}

#[test]
fn equilibria_of_c4_report_continuum_and_flags() {
    let dir = TempDir::new().unwrap();
    let (code, stdout, _) = run(&[
        "equilibria", "--graph", "cycle:4", "--alpha", "1", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("continuum support=1 2 3 4 dimension=1"), "{stdout}");
    assert_eq!(stdout.matches("flags=true").count(), 5, "{stdout}");
}

#[test]
fn equilibria_of_star_interior() {
    let dir = TempDir::new().unwrap();
    let (code, stdout, _) = run(&[
        "equilibria", "--graph", "star:5", "--alpha", "0.5", "--interior-only", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<f64> = rows[0].split(',').skip(1).take(5).map(|v| v.parse().unwrap()).collect();
    let want = [0.05, 0.05, 0.05, 0.05, 0.8];
    for (a, b) in fields.iter().zip(want) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn montecarlo_summary_and_csv() {
    let dir = TempDir::new().unwrap();
    let (code, stdout, _) = run(&[
        "montecarlo", "--graph", "complete:3", "--alpha", "1", "--trials", "6", "--steps",
        "2000", "--target", "uniform", "--seed", "11", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("fraction_within_tolerance"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["master_seed"], 11);
    assert_eq!(summary["labels"].as_array().unwrap().len(), 4);
    let hits: u64 = summary["label_hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(hits, 6);
    let csv = fs::read_to_string(dir.path().join("trajectories/trials.csv")).unwrap();
    assert!(csv.contains("trial,checkpoint,dist_target,nearest_label,noise_tail"));
}

#[test]
fn montecarlo_thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let summary = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let result = bin()
            .args([
                "montecarlo", "--graph", "cycle:4", "--trials", "5", "--steps", "1000",
                "--target", "omega", "--threads", threads, "--out", out.to_str().unwrap(),
            ])
            .env("POLYAGRAPH_THREADS", "2")
            .output()
            .unwrap();
        assert!(result.status.success());
        fs::read(out.join("summary.json")).unwrap()
    };
    assert_eq!(summary("1", "one"), summary("4", "four"));
}

#[test]
fn verify_quick_passes() {
    let (code, stdout, _) = run(&["verify", "--quick"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn verify_single_graphs() {
    let (code, stdout, _) = run(&["verify", "--quick", "--graph", "cycle:6", "--alpha", "1"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS spectral_flags_hold"));
    let (code, stdout, _) = run(&["verify", "--quick", "--graph", "hyper:one-edge:4"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS continuum_detected"));
}
