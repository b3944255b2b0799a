use std::path::Path;
use std::process::{Command, Output};

fn vrhybrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrhybrid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn toy(dir: &Path) -> String {
    let path = dir.join("toy.svm");
    std::fs::write(&path, "+1 1:1.0\n-1 1:-0.5\n").unwrap();
    path.display().to_string()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let at = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(at).unwrap().to_string())
        .collect()
}

#[test]
fn gradient_descent_on_toy_data_descends() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("gd.csv");
    let run = vrhybrid(&[
        "--data",
        &data,
        "--method",
        "gd",
        "--kmax",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let events = column(&csv, "event");
    assert_eq!(events[0], "start");
    assert_eq!(events[1..], vec!["basic".to_string(); 10][..]);
    let objective: Vec<f64> = column(&csv, "objective")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(objective.windows(2).all(|w| w[1] < w[0]), "{objective:?}");
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("accepted"), "{stdout}");
}

#[test]
fn repeated_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.csv"));
        let status = vrhybrid(&[
            "--data",
            &data,
            "--method",
            "lsvrg",
            "--seed",
            "42",
            "--kmax",
            "300",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let config = dir.path().join("run.cfg");
    let out = dir.path().join("cfg.csv");
    std::fs::write(
        &config,
        format!(
            "data = {data}\nmethod = saga\nkmax = 7\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let run = vrhybrid(&["--config", config.to_str().unwrap(), "--kmax", "4"]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(column(&csv, "k").last().unwrap(), "4");
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path());
    let missing = vrhybrid(&["--data", dir.path().join("nope.svm").to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    for args in [
        vec!["--data", data.as_str(), "--method", "newton"],
        vec!["--data", data.as_str(), "--rho", "0"],
        vec!["--data", data.as_str(), "--lambda", "100"],
        vec!["--method", "gd"],
    ] {
        assert!(!vrhybrid(&args).status.success(), "{args:?}");
    }
}
