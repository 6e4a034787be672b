use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_netdiff");

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

const STAR: &str = "\
[network]
vertices = 4
edges = [[0, 3], [1, 3], [2, 3]]
dirichlet = 3

[coupling]
B = [[-2, 0.5, 0.5], [0.5, -2, 0.5], [0.5, 0.5, -2]]

[mesh]
elements_per_edge = 8

[run]
t_end = 0.1
dt = 0.01
times = [0.01, 0.1]
samples = 3
";

const PATH: &str = "\
[network]
vertices = 3
edges = [[0, 1], [1, 2]]
dirichlet = 2

[mesh]
elements_per_edge = 10

[run]
times = [0.01, 0.1, 1.0]
";

#[test]
fn verify_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "star.toml", STAR);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_in("verify", &cfg, &a, &["--seed", "7"]).0, 0);
    assert_eq!(run_in("verify", &cfg, &b, &["--seed", "7"]).0, 0);
    let first = fs::read(a.join("verdicts.jsonl")).unwrap();
    assert_eq!(first, fs::read(b.join("verdicts.jsonl")).unwrap());
    let text = String::from_utf8(first).unwrap();
    let names: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["property"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["realness", "positivity", "linf_contractivity", "l1_contractivity", "self_adjointness", "irreducibility"]
    );
    assert!(text.contains("\"seed\":7"));
}

#[test]
fn simulate_is_deterministic_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "star.toml", STAR);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_in("simulate", &cfg, &a, &[]).0, 0);
    assert_eq!(run_in("simulate", &cfg, &b, &[]).0, 0);
    for f in ["trajectory.csv", "norms.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("time,dof,x,value,value_im\n"));
    // 11 time levels, 21 interior nodes and 3 leaf vertices
    assert_eq!(traj.lines().count(), 1 + 11 * 24);
    let c = run_in("simulate", &cfg, &dir.path().join("c"), &["--seed", "1"]);
    assert_eq!(c.0, 0);
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(dir.path().join("c/trajectory.csv")).unwrap());
}

#[test]
fn spectrum_single_edge() {
    let dir = TempDir::new().unwrap();
    let text = "[network]\nvertices = 2\nedges = [[0, 1]]\ndirichlet = 1\n[mesh]\nelements_per_edge = 200\n[run]\nk = 3\n";
    let cfg = write_config(dir.path(), "edge.toml", text);
    assert_eq!(run_in("spectrum", &cfg, dir.path(), &[]).0, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    let ev: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|e| e[0].as_f64().unwrap()).collect();
    for (got, want) in ev.iter().zip([2.467, 22.21, 61.69]) {
        assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn check_matrix_conservative_pair_is_all_true() {
    let dir = TempDir::new().unwrap();
    let text = "[network]\nvertices = 3\nedges = [[0, 1], [1, 2]]\ndirichlet = 2\n[coupling]\nB = [[-1, 1], [1, -1]]\n[mesh]\nelements_per_edge = 4\n";
    let cfg = write_config(dir.path(), "cm.toml", text);
    assert_eq!(run_in("check-matrix", &cfg, dir.path(), &[]).0, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("check_matrix.json")).unwrap()).unwrap();
    for flag in ["is_real", "is_dissipative", "is_self_adjoint", "positive_offdiagonal", "row_criterion", "column_criterion"] {
        assert_eq!(v["report"][flag], true, "{flag}");
    }
    assert_eq!(v["criteria_agree"], true);
    assert_eq!(v["linf_contractivity"]["holds"], true);
}

#[test]
fn kernel_and_gaussian_outputs() {
    let dir = TempDir::new().unwrap();
    let text = "[network]\nvertices = 3\nedges = [[0, 1], [1, 2]]\ndirichlet = 2\n[coupling]\nB = [[-1, 0], [0, -1]]\n\
                [mesh]\nelements_per_edge = 20\n[run]\ntimes = [0.001, 0.01, 0.1]\n";
    let cfg = write_config(dir.path(), "p.toml", text);
    assert_eq!(run_in("kernel", &cfg, dir.path(), &[]).0, 0);
    let kernel = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    assert!(kernel.starts_with("t,p,q,x,y,K,K_im\n"));
    assert_eq!(kernel.lines().count(), 1 + 3 * 40 * 40);
    assert_eq!(run_in("gaussian-fit", &cfg, dir.path(), &[]).0, 0);
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("gaussian_fit.json")).unwrap()).unwrap();
    assert!(fit["fit"]["coverage"].as_f64().unwrap() >= 0.99);
    assert!(fs::read_to_string(dir.path().join("gaussian_samples.csv")).unwrap().starts_with("t,x,y,K,bound,holdout\n"));
}

#[test]
fn domination_with_paired_config() {
    let dir = TempDir::new().unwrap();
    let d = write_config(dir.path(), "d.toml", PATH);
    let k = write_config(dir.path(), "k.toml", &PATH.replace("[mesh]", "[coupling]\nkirchhoff_full = true\n\n[mesh]"));
    let out = dir.path().join("o");
    let paired = ["--paired", k.to_str().unwrap()];
    let (code, _, err) = run_in("verify", &d, &out, &paired);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join("verdicts.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["property"], "domination");
    assert_eq!(last["holds"], true);

    let coarse = write_config(
        dir.path(),
        "coarse.toml",
        &PATH.replace("elements_per_edge = 10", "elements_per_edge = 6").replace("[mesh]", "[coupling]\nkirchhoff_full = true\n\n[mesh]"),
    );
    let paired = ["--paired", coarse.to_str().unwrap()];
    assert_eq!(run_in("verify", &d, &out, &paired).0, 4);
}

#[test]
fn failing_verdict_exits_one() {
    let dir = TempDir::new().unwrap();
    let text = STAR.replace("B = [[-2, 0.5, 0.5], [0.5, -2, 0.5], [0.5, 0.5, -2]]", "B = [[-1, 1.5, 0], [1.5, -1, 0], [0, 0, -1]]");
    let cfg = write_config(dir.path(), "bad.toml", &text);
    let (code, _, _) = run_in("verify", &cfg, dir.path(), &[]);
    assert_eq!(code, 1);
    let verdicts = fs::read_to_string(dir.path().join("verdicts.jsonl")).unwrap();
    assert!(verdicts.contains("\"property\":\"linf_contractivity\",\"holds\":false"));
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let parse = write_config(dir.path(), "parse.toml", "[network\nvertices = 2\n");
    let (code, _, err) = run_in("spectrum", &parse, &out, &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");

    let wrong_b = write_config(dir.path(), "b.toml", &PATH.replace("[mesh]", "[coupling]\nB = [[1]]\n[mesh]"));
    let (code, _, err) = run_in("spectrum", &wrong_b, &out, &[]);
    assert_eq!(code, 3);
    assert!(err.contains("coupling.B"), "{err}");

    let zero_c = write_config(dir.path(), "c.toml", &PATH.replace("[mesh]", "[coefficients]\nconstant = 0.0\n[mesh]"));
    let (code, _, err) = run_in("spectrum", &zero_c, &out, &[]);
    assert_eq!(code, 3);
    assert!(err.contains("positive"), "{err}");

    let missing = dir.path().join("missing.toml");
    assert_eq!(run_in("spectrum", &missing, &out, &[]).0, 7);

    let blowup = write_config(
        dir.path(),
        "blow.toml",
        "[network]\nvertices = 2\nedges = [[0, 1]]\ndirichlet = 1\n[mesh]\nelements_per_edge = 8\n\
         [run]\nt_end = 1.0\ndt = 0.1\n[initial]\nprofile = \"constant 1\"\n[semilinear]\npsi = \"quadratic 1\"\nblowup_cap = 0.5\n",
    );
    assert_eq!(run_in("semilinear", &blowup, &out, &[]).0, 6);

    assert_eq!(run(&["spectrum"]).0, 2);
    assert_eq!(run(&["frobnicate", "--config", "x"]).0, 2);
}

#[test]
fn semilinear_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let text = "[network]\nvertices = 2\nedges = [[0, 1]]\ndirichlet = 1\n[mesh]\nelements_per_edge = 10\n\
                [run]\nt_end = 0.1\ndt = 0.01\n[initial]\nprofile = \"mode 1\"\n[semilinear]\npsi = \"cubic -1\"\n";
    let cfg = write_config(dir.path(), "s.toml", text);
    let (code, _, err) = run_in("semilinear", &cfg, dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("semilinear.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11 * 10);
}
