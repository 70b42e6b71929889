use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ihr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ihr"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_spec(dir: &Path, n: usize) -> String {
    fs::write(dir.join("gamma.csv"), "0,0.5,1,1.4\n0.5,0,0.5,0.9\n1,0.5,0,0.4\n1.4,0.9,0.4,0\n").unwrap();
    fs::write(dir.join("psi.txt"), "1 2 0.4\n2 3 -0.3\n3 4 0.5\n").unwrap();
    let spec = dir.join("spec.toml");
    fs::write(&spec, format!("d = 4\ngamma = \"gamma.csv\"\npsi = \"psi.txt\"\nn = {n}\nseed = 3\n")).unwrap();
    spec.to_str().unwrap().to_string()
}

#[test]
fn stepwise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write_spec(d, 3000);
    let o = ihr(d, &["simulate", "--spec", &spec]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let panel = d.join("increments.csv");
    let text = fs::read_to_string(&panel).unwrap();
    assert_eq!(text.lines().count(), 3001);

    let o = ihr(d, &["estimate-variogram", "--panel", panel.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["gamma_hat.csv", "gamma_hat_raw.csv", "diagnostics.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let raw = d.join("gamma_hat_raw.csv");
    let o = ihr(d, &["learn-graph", "--gamma", raw.to_str().unwrap(), "--n", "3000", "--truth", d.join("psi.txt").to_str().unwrap()]);
    assert_ne!(code(&o), 0, "psi file is not an edge list");
    fs::write(d.join("truth.edges"), "1 2\n2 3\n3 4\n").unwrap();
    let o = ihr(d, &["learn-graph", "--gamma", raw.to_str().unwrap(), "--n", "3000", "--truth", d.join("truth.edges").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = fs::read_to_string(d.join("penalty_path.csv")).unwrap();
    assert!(path.starts_with("rho,n_edges,AIC,BIC,F1\n"));
    assert!(path.lines().skip(1).all(|l| !l.ends_with(',')));

    let o = ihr(d, &["fit-ising", "--panel", panel.to_str().unwrap(), "--graph", d.join("truth.edges").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let psi = fs::read_to_string(d.join("psi_fit.csv")).unwrap();
    assert_eq!(psi.lines().count(), 4);
    let weights = fs::read_to_string(d.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 1 + 16);
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write_spec(d, 200);
    let run = |seed: &str, name: &str| {
        let o = ihr(d, &["--seed", seed, "simulate", "--spec", &spec, "--output", name]);
        assert_eq!(code(&o), 0);
        fs::read_to_string(d.join(name)).unwrap()
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "a.csv"), run("6", "c.csv"));
}

#[test]
fn fit_data_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write_spec(d, 4000);
    assert_eq!(code(&ihr(d, &["simulate", "--spec", &spec])), 0);
    let out = d.join("report");
    let o = Command::new(env!("CARGO_BIN_EXE_ihr"))
        .args(["--out-dir", out.to_str().unwrap(), "fit-data", "--panel", d.join("increments.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ihr::pipeline::REPORT_FILES {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn run_study_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("study.toml");
    fs::write(&cfg, "seed = 2\nreplications = 2\nn = [300]\n[graph]\nd = 4\nattachment = 1\n[selection]\ngrid_len = 5\n").unwrap();
    let a = d.join("a");
    let b = d.join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = Command::new(env!("CARGO_BIN_EXE_ihr"))
            .args(["--out-dir", out.to_str().unwrap(), "--threads", threads, "run-study", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("study_results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("study_results.csv")).unwrap());
    let rows = String::from_utf8(ra).unwrap().lines().count() - 1;
    assert_eq!(rows, 2 * (6 + 2 * 5));
    assert!(a.join("study_timing.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    fs::write(d.join("bad.toml"), "seed = 1\nreplications = 0\nn = [300]\n[graph]\nd = 4\nattachment = 1\n").unwrap();
    assert_eq!(code(&ihr(d, &["run-study", "--config", d.join("bad.toml").to_str().unwrap()])), 2);

    let mut csv = String::from("a,b\n");
    for s in 0..150 {
        csv.push_str(&format!("{s},{}\n", (s * 7 % 11) as f64 - 5.0));
    }
    csv.push_str("1,oops\n");
    fs::write(d.join("malformed.csv"), &csv).unwrap();
    let o = ihr(d, &["estimate-variogram", "--panel", d.join("malformed.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("152"));

    let mut csv = String::from("a,b\n");
    for s in 0..150 {
        csv.push_str(&format!("{s},2.5\n"));
    }
    fs::write(d.join("constant.csv"), &csv).unwrap();
    assert_eq!(code(&ihr(d, &["fit-data", "--panel", d.join("constant.csv").to_str().unwrap()])), 3);

    assert_eq!(code(&ihr(d, &["simulate"])), 2);
}

#[test]
fn help_lists_configuration_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = ihr(dir.path(), &["run-study", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for key in ["graph.attachment", "model.psi_intervals", "sampling.q_exponent", "selection.rho_grid", "ising.penalty"] {
        assert!(text.contains(key), "{key}");
    }
    let o = ihr(dir.path(), &["simulate", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("uncompensated drift"));
    assert!(text.contains("c_minus"));
}
