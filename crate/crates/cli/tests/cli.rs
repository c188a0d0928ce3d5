use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const SQUARE: &str = r#"{"shape": {"edges": [[0, 1], [1, 2], [2, 3], [3, 0]%s],
    "reference_positions": [[0, 0], [1, 0], [1, 1], [0, 1]]}}"#;

fn formation(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formation"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn rigidity_exit_codes_follow_the_classification() {
    let dir = tempfile::tempdir().unwrap();
    let o = formation(&["check-rigidity", "--scenario", "square-1m"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("infinitesimally-rigid"));

    let ring = write(dir.path(), "ring.json", &SQUARE.replace("%s", ""));
    let o = formation(&["check-rigidity", "--scenario", &ring]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("flexible"));

    let line = r#"{"shape": {"edges": [[0, 1], [1, 2], [0, 2]], "reference_positions": [[0, 0], [1, 0], [2, 0]]}}"#;
    let line = write(dir.path(), "line.json", line);
    let o = formation(&["check-rigidity", "--scenario", &line, "--json"]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["classification"], "degenerate-collinear");

    let broken = write(dir.path(), "broken.json", "{\"shape\": ");
    let o = formation(&["check-rigidity", "--scenario", &broken]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert_eq!(
        code(&formation(&["check-rigidity", "--scenario", "no-such-scenario"])),
        2
    );
}

#[test]
fn unknown_flags_print_usage() {
    let o = formation(&["run", "--scenario", "square-1m", "--log", "x.csv", "--bogus"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn solve_motion_tables_and_failures() {
    let o = formation(&["solve-motion", "--scenario", "square-1m"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let sigmas: Vec<f64> = text
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(sigmas.len(), 10);
    assert!(sigmas.iter().all(|s| *s == 0.0));

    let o = formation(&["solve-motion", "--scenario", "square-1m", "--vx", "0.1", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["residuals"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r.as_f64().unwrap() < 1e-9));

    let dir = tempfile::tempdir().unwrap();
    let ring = write(dir.path(), "ring.json", &SQUARE.replace("%s", ""));
    let o = formation(&["solve-motion", "--scenario", &ring, "--omega", "-0.1"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn run_writes_logs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let run_to = |p: &Path| {
        formation(&[
            "run",
            "--scenario",
            "square-1m-biased",
            "--seed",
            "4",
            "--duration",
            "30",
            "--log",
            p.to_str().unwrap(),
        ])
    };
    let oa = run_to(&a);
    let ob = run_to(&b);
    assert_eq!(code(&oa), 0);
    assert_eq!(code(&ob), 0);
    let la = std::fs::read(&a).unwrap();
    assert_eq!(la, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8_lossy(&la).lines().count(), 152);
    assert!(stdout(&oa).contains("ticks                 150"));

    // The stored log gives the same metrics as the run printed.
    let m = formation(&["metrics", "--log", a.to_str().unwrap()]);
    assert_eq!(code(&m), 0);
    let tail = |s: &str| {
        s.lines()
            .skip_while(|l| !l.starts_with("ticks"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(tail(&stdout(&m)), tail(&stdout(&oa)));
}

#[test]
fn zero_duration_writes_a_header_only_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.csv");
    let o = formation(&[
        "run",
        "--scenario",
        "office-tour",
        "--duration",
        "0",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("# formation-log v1 scenario_digest="));
}

#[test]
fn estimator_run_reports_the_bias_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("est.csv");
    let o = formation(&[
        "run",
        "--scenario",
        "square-1m-estimator",
        "--log",
        log.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mu_hat = v["edges"][0]["mu_hat_mean"].as_f64().unwrap();
    assert!((mu_hat - 0.006).abs() < 6e-4, "{mu_hat}");
}

#[test]
fn broken_formation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"shape": {"edges": [[0, 1], [1, 2], [2, 3], [3, 0], [1, 3]],
        "reference_positions": [[0, 0], [1, 0], [1, 1], [0, 1]]},
        "robots": {"initial_positions": [[0, 0], [1, 0], [40, 40], [0, 1]]},
        "sim": {"duration": 2}}"#;
    let path = write(dir.path(), "far.json", text);
    let o = formation(&[
        "run",
        "--scenario",
        &path,
        "--log",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn metrics_of_a_bad_log_exits_2_and_a_missing_one_5() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "# formation-log v9 scenario_digest=00\nt\n");
    assert_eq!(code(&formation(&["metrics", "--log", &bad])), 2);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&formation(&["metrics", "--log", missing.to_str().unwrap()])), 5);
}

#[test]
fn unreachable_server_exits_5() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let o = formation(&["--server", &url, "check-rigidity", "--scenario", "square-1m"]);
    assert_eq!(code(&o), 5);
}

/// Starts `formation serve` and returns the child with its base URL.
fn spawn_serve(extra: &[&str]) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_formation"))
        .args(["serve", "--port", "0"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    (child, url)
}

#[test]
fn serve_hosts_a_session_that_other_invocations_can_use() {
    let (mut child, url) = spawn_serve(&["--scenario", "square-1m", "--time-scale", "10"]);
    let o = formation(&["--server", &url, "check-rigidity", "--scenario", "square-1m"]);
    assert_eq!(code(&o), 0);
    // The same port cannot be taken twice.
    let port = url.rsplit(':').next().unwrap();
    let o = formation(&["serve", "--port", port]);
    assert_eq!(code(&o), 5);
    child.kill().unwrap();
    child.wait().unwrap();
}

#[test]
fn replay_checks_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sq.csv");
    assert_eq!(
        code(&formation(&[
            "run",
            "--scenario",
            "square-1m",
            "--duration",
            "2",
            "--log",
            log.to_str().unwrap()
        ])),
        0
    );
    let ring = write(dir.path(), "ring.json", &SQUARE.replace("%s", ""));
    let o = formation(&[
        "replay",
        "--log",
        log.to_str().unwrap(),
        "--scenario",
        &ring,
        "--port",
        "0",
    ]);
    assert_eq!(code(&o), 2);
}
