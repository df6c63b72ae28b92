use std::path::Path;
use std::process::{Command, Output};

fn semiboost(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semiboost"));
    cmd.args(args).env_remove("SEMIBOOST_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn params_table_to_stdout() {
    let o = semiboost(&["params", "--nu", "2"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("# kind = params"));
    assert!(s.contains("2,0,2,1,2,3,4"));
    assert!(s.contains("q_nu,2,4"));
    assert!(s.contains("l_max,2,2"));
}

#[test]
fn expand_prints_words() {
    let o = semiboost(&["expand", "--nu", "2", "--n-list", "4"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count() > 1);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "nu = 1\nn = 2\nn = 4\n").unwrap();
    let o = semiboost(&["matrix-convergence", "--nu", "3", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("\n2,1,1.3533528324e-1,"), "{s}");
    assert!(!s.contains(",3,"));
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "nu = two\n").unwrap();
    let out = dir.path().join("out.csv");
    let o = semiboost(&["params", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unknown_key_and_bad_order_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(semiboost(&["params", "--config", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(semiboost(&["params", "--alpha", "0"], &[]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_io_error() {
    let o = semiboost(&["params", "--out", "/nonexistent-dir/sub/out.csv"], &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numerical_invariant_exit_code() {
    let o = semiboost(&["splitting-check", "--noise", "rademacher", "--samples", "100"], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = semiboost(&["params"], &[("SEMIBOOST_OUT_DIR", dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let written = std::fs::read_to_string(dir.path().join("params.csv")).unwrap();
    assert!(written.starts_with("# kind = params"));
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = semiboost(
            &[
                "sde-weak-error",
                "--workers",
                workers,
                "--nu",
                "2",
                "--n-list",
                "2,4",
                "--samples",
                "9000",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    // only the out key differs
    let strip = |v: Vec<u8>| String::from_utf8(v).unwrap().lines().filter(|l| !l.starts_with("# out")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(a), strip(b));
}

#[test]
fn splitting_check_passes_for_gaussian() {
    let o = semiboost(&["splitting-check", "--samples", "20000", "--r-star", "1"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(",true")).count(), 5);
}

#[test]
fn density_compare_has_summary_rows() {
    let o = semiboost(
        &["density-compare", "--nu", "1", "--n-list", "2,4", "--samples", "4000", "--grid", "-1:1:5"],
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("sup_error,1,")).count(), 2);
    assert_eq!(s.lines().filter(|l| l.starts_with("1,2,")).count(), 5);
}

#[test]
fn hypothesis_report_flags_degenerate_diffusion() {
    let o = semiboost(&["hypothesis-report", "--sigma", "0", "--samples", "1000"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ellipticity violated, Proposition inapplicable"));
}

#[test]
fn base_error_and_tv_study_run() {
    let o = semiboost(&["sde-base-error", "--n-list", "2,4", "--samples", "2000"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("n,estimate,stderr,exact,error"));
    let o = semiboost(&["tv-study", "--n-list", "2,4", "--samples", "2000"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("nu2_below_nu1_at_usable_n,"));
}
