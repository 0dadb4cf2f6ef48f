use std::process::Command;

use smpm_schur::bench::CSV_HEADER;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smpm-bench"))
}

#[test]
fn sweep_mx_writes_csv_with_ratio_rows() {
    let out = bench()
        .args([
            "sweep-mx", "--n", "4", "--mz", "2", "--lz", "2", "--trials", "2", "--values", "3,4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 12));
    // 4 methods x (2 trials + mean) + ratio, per m_x
    assert_eq!(rows.len(), 2 * (4 * 3 + 1));
    assert_eq!(rows.iter().filter(|r| r[6] == "ratio").count(), 2);
    assert!(rows.iter().all(|r| r[11] == "ok"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = std::env::temp_dir().join(format!("smpm-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    let csv = dir.join("out.csv");
    std::fs::write(
        &cfg,
        "# small run\nn = 3\nmx = 3\nmz = 2\nlx = 3\nlz = 2\ntrials = 5\nmethod = bj\n",
    )
    .unwrap();
    let status = bench()
        .args(["sweep-aspect", "--config"])
        .arg(&cfg)
        .args(["--trials", "1", "--values", "1,2", "--methods", "bj", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.starts_with("bj,3,3,2,1,")));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn validate_and_convergence_run() {
    let out = bench()
        .args(["validate", "--n", "4", "--mx", "3", "--mz", "2", "--rhs", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass")));

    let out = bench()
        .args([
            "convergence",
            "--mx",
            "2",
            "--mz",
            "2",
            "--lx",
            "1",
            "--lz",
            "1",
            "--values",
            "4,6",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = bench().args(["sweep-mx", "--method", "cg"]).output().unwrap();
    assert!(!out.status.success());
    let out = bench()
        .args(["sweep-3d", "--my", "12", "--values", "3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
}
