use std::path::Path;
use std::process::{Command, Output};

fn jumpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpflow"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn grid_prints_points() {
    let out = jumpflow(&["grid", "--K", "2", "--delta", "0.25", "--kind", "optimal"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "0\n0.5\n0.75\n");

    let out = jumpflow(&["grid", "--K", "4", "--delta", "0.2"]);
    let points: Vec<f64> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(points.len(), 5);
    assert_eq!(points[4], 0.8);
}

#[test]
fn grid_constant_product_cosine() {
    let out = jumpflow(&[
        "grid",
        "--K",
        "6",
        "--delta",
        "0.01",
        "--schedule",
        "cosine",
        "--kind",
        "constant-product",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let points: Vec<f64> = stdout(&out).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(points.len(), 7);
    assert!(points.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        jumpflow(&["grid", "--K", "3", "--delta", "0.1", "--kind", "wavy"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        jumpflow(&["grid", "--K", "0", "--delta", "0.1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        jumpflow(&["grid", "--K", "3", "--delta", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(jumpflow(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        jumpflow(&["--threads", "0", "check"]).status.code(),
        Some(2)
    );
}

#[test]
fn check_lines_follow_grammar() {
    let out = jumpflow(&["check"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 10);
    for line in text.lines() {
        let fields: Vec<&str> = line.splitn(4, ' ').collect();
        assert_eq!(fields[0], "CHECK", "{line}");
        assert_eq!(fields[2], "PASS", "{line}");
    }
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\ndist = ar1(3, 8)\nsource = masked\ndelta = 0.01\nK_list = 2, x\nseeds = 0\nn_samples = 10\n\n[sampler]\nkind = euler\n");
    let out = jumpflow(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("K_list"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "[sweep]\ndist = ar1(3, 8)\nsource = masked\ndelta = 0.01\nK_list = 2\nseeds = 0\nn_samples = 10\n\n[sampler]\nkind = midpoint\n");
    let out = jumpflow(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kind"), "{}", stderr(&out));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[sweep]\ndist = ar1(3, 5)\nsource = uniform\ndelta = 0.01\nK_list = 1, 4\nseeds = 5\nn_samples = 300\nout = result.csv\n\n\
         [sampler]\nkind = time-corrected\nlabel = tc\n",
    );
    let out = jumpflow(&["sweep", cfg.to_str().unwrap(), "--no-timing"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 2);
    let csv = std::fs::read_to_string(dir.path().join("result.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "sampler,K,seed,n_samples,tv,nfe_mean,wall_seconds"
    );
    assert_eq!(lines.len(), 3);
    assert!(
        lines[1].starts_with("tc,1,5,300,") && lines[1].ends_with(",0"),
        "{}",
        lines[1]
    );
    assert!(lines[2].starts_with("tc,4,5,300,"));
}
