use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hycat_cli::spec::{load_system, load_system_spec, SystemSpec};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn hycat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hycat"))
        .args(args)
        .output()
        .expect("run hycat")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&hycat(&["validate", &model("sawtooth.json")])), 0);
    let dir = tempfile::tempdir().unwrap();
    let outside = dir.path().join("outside.json");
    let text = fs::read_to_string(model("sawtooth.json"))
        .unwrap()
        .replace("[[[0], [1]]]", "[[[2], [1]]]");
    fs::write(&outside, text).unwrap();
    let o = hycat(&["validate", outside.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("violation"));
    let malformed = dir.path().join("malformed.json");
    fs::write(&malformed, "{ \"format\": \"hybrid-cat/1\", ").unwrap();
    assert_eq!(code(&hycat(&["validate", malformed.to_str().unwrap()])), 2);
    let wrong_format = dir.path().join("format.json");
    fs::write(
        &wrong_format,
        fs::read_to_string(model("sawtooth.json"))
            .unwrap()
            .replace("hybrid-cat/1", "other/2"),
    )
    .unwrap();
    assert_eq!(
        code(&hycat(&["validate", wrong_format.to_str().unwrap()])),
        2
    );
}

#[test]
fn simulate_sawtooth_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("saw.csv");
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "3.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("3 jump(s)"), "{s}");
    assert!(
        s.contains("1.000000000") || s.contains("0.999999999"),
        "{s}"
    );
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,segment,node,x1\n"));
}

#[test]
fn simulate_point_horizon_and_bad_start() {
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0.25",
        "--t0",
        "1",
        "--horizon",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "5",
        "--horizon",
        "1",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside"));
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--horizon",
        "1",
    ]);
    assert_eq!(code(&o), 2);
    let o = hycat(&["simulate", &model("sawtooth.json"), "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_one_file_per_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex.csv");
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0.5",
        "--horizon",
        "2.2",
        "--step",
        "1e-2",
        "--policy",
        "exhaustive",
        "--max-branches",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    for i in 0..4 {
        assert!(dir.path().join(format!("ex.{i}.csv")).exists());
    }
    assert!(!dir.path().join("ex.4.csv").exists());
}

#[test]
fn blocked_everywhere_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noreset.json");
    let text = fs::read_to_string(model("sawtooth.json"))
        .unwrap()
        .replace("[[[0], [1]]]", "[]");
    fs::write(&path, text).unwrap();
    let o = hycat(&[
        "simulate",
        path.to_str().unwrap(),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "2",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn script_policy() {
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "1.5",
        "--policy",
        "script",
        "--script",
        "gamma@0",
    ]);
    assert_eq!(code(&o), 0);
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "1.5",
        "--policy",
        "script",
        "--script",
        "nope",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_morphism_exit_codes() {
    for (file, want) in [
        ("diagonal.morphism.json", 0),
        ("diagonal_decay.morphism.json", 0),
        ("identity.morphism.json", 0),
        ("perturbed.morphism.json", 1),
    ] {
        let o = hycat(&["check-morphism", &model(file)]);
        assert_eq!(code(&o), want, "{file}: {}", stdout(&o));
    }
    let o = hycat(&["check-morphism", &model("diagonal.morphism.json")]);
    assert!(stdout(&o).contains("tier: EXACT"));
    let o = hycat(&["check-morphism", &model("perturbed.morphism.json")]);
    let s = stdout(&o);
    assert!(s.contains("tier: SAMPLED") && s.contains("residual"), "{s}");
}

#[test]
fn push_sawtooth_along_diagonal_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let saw = dir.path().join("saw.csv");
    let o = hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "3.5",
        "--out",
        saw.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let sq = dir.path().join("sq.csv");
    let o = hycat(&[
        "push",
        &model("diagonal.morphism.json"),
        "--execution",
        saw.to_str().unwrap(),
        "--out",
        sq.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("valid execution"));
    let o = hycat(&[
        "check-execution",
        &model("square.json"),
        sq.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let same = dir.path().join("same.csv");
    let o = hycat(&[
        "push",
        &model("identity.morphism.json"),
        "--execution",
        saw.to_str().unwrap(),
        "--out",
        same.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&saw).unwrap(), fs::read(&same).unwrap());
}

#[test]
fn push_replaying_a_simulation() {
    let o = hycat(&[
        "push",
        &model("diagonal_decay.morphism.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("t,segment,node,x1,x2\n"));
}

#[test]
fn push_rejects_foreign_executions() {
    let dir = tempfile::tempdir().unwrap();
    let th = dir.path().join("th.csv");
    let o = hycat(&[
        "simulate",
        &model("thermostat.json"),
        "--node",
        "on",
        "--x0",
        "20",
        "--horizon",
        "5",
        "--out",
        th.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = hycat(&[
        "push",
        &model("diagonal.morphism.json"),
        "--execution",
        th.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_execution_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let saw = dir.path().join("saw.csv");
    hycat(&[
        "simulate",
        &model("sawtooth.json"),
        "--node",
        "*",
        "--x0",
        "0",
        "--horizon",
        "2.5",
        "--out",
        saw.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&hycat(&[
            "check-execution",
            &model("sawtooth.json"),
            saw.to_str().unwrap()
        ])),
        0
    );
    let text = fs::read_to_string(&saw).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let fields: Vec<&str> = lines[last].split(',').collect();
    lines[last] = format!("{},{},{},{}", fields[0], fields[1], fields[2], "0.99");
    fs::write(&saw, lines.join("\n") + "\n").unwrap();
    let o = hycat(&[
        "check-execution",
        &model("sawtooth.json"),
        saw.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("clause 4"));
}

#[test]
fn compose_writes_a_checkable_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("composite.morphism.json");
    let o = hycat(&[
        "compose",
        &model("identity.morphism.json"),
        &model("diagonal.morphism.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(code(&hycat(&["check-morphism", out.to_str().unwrap()])), 0);
    let o = hycat(&[
        "compose",
        &model("diagonal.morphism.json"),
        &model("identity.morphism.json"),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn quiet_suppresses_reports() {
    let o = hycat(&[
        "--quiet",
        "check-morphism",
        &model("diagonal.morphism.json"),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn specs_round_trip() {
    for name in [
        "sawtooth.json",
        "square.json",
        "decay.json",
        "square_decay.json",
        "thermostat.json",
    ] {
        let path = models().join(name);
        let system = load_system(&path).unwrap();
        let spec = SystemSpec::from_system(&system).unwrap();
        let again: SystemSpec = serde_json::from_str(&spec.to_json()).unwrap();
        assert_eq!(again, spec, "{name}");
        let reloaded = again.build().unwrap();
        assert!(reloaded.same_as(&system), "{name}");
        let original = load_system_spec(&path).unwrap();
        assert_eq!(original.graph, spec.graph);
    }
}

#[test]
fn numbers_may_be_expressions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pi.json");
    let text = fs::read_to_string(model("sawtooth.json"))
        .unwrap()
        .replace("[[0, 1]]", "[[0, \"pi/pi\"]]");
    fs::write(&path, text).unwrap();
    let system = load_system(&path).unwrap();
    assert_eq!(system.region("*").unwrap().bounds(), &[(0.0, 1.0)]);
}

#[test]
fn all_commands_are_deterministic() {
    let runs: Vec<Output> = (0..2)
        .map(|_| {
            hycat(&[
                "--seed",
                "7",
                "check-morphism",
                &model("perturbed.morphism.json"),
                "--samples",
                "33",
            ])
        })
        .collect();
    assert_eq!(runs[0].stdout, runs[1].stdout);
}
