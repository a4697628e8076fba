use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bzap::bench::{derive_seed, gen_matrix, gen_signal, Role};
use bzap::block::{read_vector, write_vector, BlockStructure};
use bzap::projection::write_matrix;

fn bzap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bzap")).args(args).output().unwrap()
}

fn fig1_small(out: &Path, threads: &str) -> String {
    let o = bzap(&[
        "fig1", "--k-min", "1", "--k-max", "3", "--trials", "12", "--threads", threads, "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out.join("fig1.csv")).unwrap()
}

#[test]
fn fig1_writes_csv_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = fig1_small(&dir.path().join("a"), "1");
    let b = fig1_small(&dir.path().join("b"), "3");
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("algorithm,K,trials,successes,rate"));
    // four default algorithms, three sparsity levels
    assert_eq!(lines.count(), 12);
}

#[test]
fn fig2_and_bound_check_write_their_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bzap(&["fig2", "--trials", "5", "--snr", "30", "--snr", "inf", "--algorithms", "bzap,oracle", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    assert!(csv.starts_with("algorithm,snr_db,trials,msd_linear,msd_db\n"));
    assert!(csv.contains("oracle_formula,30,"));
    assert!(csv.contains("bzap,inf,"));

    let o = bzap(&["bound-check", "--trials", "4", "--trace", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("bound.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("trial_id,in_ball,error,bound,slack"));
    assert_eq!(csv.lines().count(), 5);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,kappa,cost,feasibility_residual\n"));
}

#[test]
fn solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let structure = BlockStructure::new(25, 4).unwrap();
    let a = gen_matrix(40, 100, derive_seed(7, 0, 0, Role::Matrix));
    let (xbar, support) = gen_signal(structure, 2, derive_seed(7, 0, 2, Role::Signal)).unwrap();
    let y = &a * xbar.values();
    let (mp, yp) = (dir.path().join("a.txt"), dir.path().join("y.txt"));
    fs::write(&mp, write_matrix(&a)).unwrap();
    fs::write(&yp, write_vector(&y)).unwrap();
    let (m, yv) = (mp.to_str().unwrap(), yp.to_str().unwrap());

    let blocks: Vec<String> = support.indices().iter().map(|k| k.to_string()).collect();
    let blocks = blocks.join(",");
    let runs: [&[&str]; 3] = [
        &["--algorithm", "bzap"],
        &["--algorithm", "bomp", "--k", "2"],
        &["--algorithm", "oracle", "--support", &blocks],
    ];
    for extra in runs {
        let xp = dir.path().join("x.txt");
        let tp = dir.path().join("t.csv");
        let mut args = vec!["solve", "--matrix", m, "--measurement", yv, "--out", xp.to_str().unwrap()];
        args.extend_from_slice(extra);
        if extra[1] == "bzap" {
            args.extend_from_slice(&["--trace", tp.to_str().unwrap()]);
        }
        let o = bzap(&args);
        assert!(o.status.success(), "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        let xhat = read_vector(&fs::read_to_string(&xp).unwrap()).unwrap();
        let rel = (&xhat - xbar.values()).norm_squared() / xbar.values().norm_squared();
        assert!(rel < 1e-6, "{extra:?}: {rel}");
        if extra[1] == "bzap" {
            assert!(fs::read_to_string(&tp).unwrap().lines().count() > 2);
        }
    }
}

#[test]
fn bad_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["fig1", "--block-size", "3", "--out", out],
        &["fig1", "--eta", "1.5", "--out", out],
        &["fig1", "--k-min", "4", "--k-max", "2", "--out", out],
        &["fig1", "--m", "120", "--out", out],
        &["solve", "--matrix", "/nonexistent/a.txt", "--measurement", "/nonexistent/y.txt"],
    ];
    for args in cases {
        let o = bzap(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "), "{args:?}");
    }
    assert!(!dir.path().join("fig1.csv").exists());
}
