use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kelly_cli::commands::bounds::{read_rows, BoundsRow};
use kelly_cli::files::{read_csv, save_instance, ManifestRow};
use kelly_core::datagen::gen_instance;
use kelly_core::transform::{solve_itm, TransformOptions};
use kelly_core::{bet_from_contract, Contract, ProblemInstance, Regime, VarianceLevel};

fn kelly(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kelly")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_instance(dir: &Path, name: &str, inst: &ProblemInstance) -> PathBuf {
    let p = dir.join(name);
    save_instance(&p, inst).unwrap();
    p
}

fn solve_json(dir: &Path, path: &Path, method: &str) -> serde_json::Value {
    let o = kelly(dir, &["solve", path.to_str().unwrap(), "--method", method]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn single_bet_weight() {
    let dir = tempfile::tempdir().unwrap();
    let c = Contract { p: 0.6, q: 0.5 };
    let mut inst = gen_instance(Regime::Normal, VarianceLevel::Low, 1, 0, 0, None).unwrap();
    inst.contracts = Some(vec![c]);
    inst.bets = vec![bet_from_contract(&c).unwrap()];
    assert_eq!(inst.bets[0].b, 1.0);
    let path = write_instance(dir.path(), "one.json", &inst);
    for method in ["exhaustive", "itm"] {
        let v = solve_json(dir.path(), &path, method);
        assert!((v["weights"]["w"][0].as_f64().unwrap() - 0.2).abs() < 1e-8, "{method}");
        assert!((v["f_star"].as_f64().unwrap() - 0.020135513550688863).abs() < 1e-10);
    }
}

#[test]
fn methods_agree_at_ten_bets() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(Regime::Laplace, VarianceLevel::High, 10, 3, 7, None).unwrap();
    let path = write_instance(dir.path(), "ten.json", &inst);
    let a = solve_json(dir.path(), &path, "exhaustive")["f_star"].as_f64().unwrap();
    let b = solve_json(dir.path(), &path, "itm")["f_star"].as_f64().unwrap();
    assert!((a - b).abs() / a < 1e-6);

    let out = dir.path().join("res.json");
    let o = kelly(dir.path(), &["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let again = kelly(dir.path(), &["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&again), 1, "refuses to overwrite without --force");
}

#[test]
fn capacity_and_convergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(Regime::Normal, VarianceLevel::Medium, 25, 1, 0, None).unwrap();
    let path = write_instance(dir.path(), "big.json", &inst);
    let o = kelly(dir.path(), &["solve", path.to_str().unwrap(), "--method", "exhaustive"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    std::fs::write(dir.path().join("c.toml"), "[solver.transform.newton]\nmax_iter = 1\n").unwrap();
    let o = kelly(dir.path(), &["--config", "c.toml", "solve", path.to_str().unwrap(), "--method", "itm"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"schema_version":1,"metadata":{"regime":"Normal","variance_level":"Low","seed":0,"index":0,"N":1},"bets":[{"p":0.6}]}"#).unwrap();
    let o = kelly(dir.path(), &["solve", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`b`"), "{}", stderr(&o));

    let o = kelly(dir.path(), &["solve", "missing.json"]);
    assert_eq!(code(&o), 1);
    let o = kelly(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
}

fn small_config(dir: &Path, extra: &str) {
    let text = format!(
        "out = \"run\"\n[grid]\nregimes = [\"Normal\", \"GND6\"]\nvariance_levels = [\"Low\"]\nn_list = [20]\ninstances = 1000\n{extra}"
    );
    std::fs::write(dir.join("c.toml"), text).unwrap();
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_deterministic_and_scaled() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), "");
    let o = kelly(dir.path(), &["--config", "c.toml", "--scale", "0.01", "gen"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<ManifestRow> = read_csv(&dir.path().join("run/manifest.csv"), "manifest").unwrap();
    // 2 regimes x 1 level x 2 sizes (20 and the validation 10) x 10 instances
    assert_eq!(rows.len(), 2 * 1 * 2 * 10);
    let first = tree(&dir.path().join("run"));

    let o = kelly(dir.path(), &["--config", "c.toml", "--scale", "0.01", "gen"]);
    assert_eq!(code(&o), 1, "non-empty output needs --force");
    let o = kelly(dir.path(), &["--config", "c.toml", "--scale", "0.01", "--force", "--jobs", "3", "gen"]);
    assert_eq!(code(&o), 0);
    assert_eq!(tree(&dir.path().join("run")), first);

    let o = kelly(dir.path(), &["--config", "c.toml", "--scale", "0.05", "--force", "gen"]);
    assert_eq!(code(&o), 0);
    let rows: Vec<ManifestRow> = read_csv(&dir.path().join("run/manifest.csv"), "manifest").unwrap();
    assert_eq!(rows.iter().filter(|r| r.n == 20 && r.regime == Regime::Normal).count(), 50);
}

#[test]
fn validate_without_instances_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), "");
    let o = kelly(dir.path(), &["--config", "c.toml", "validate"]);
    assert_eq!(code(&o), 1);
    let o = kelly(dir.path(), &["--config", "c.toml", "scaling"]);
    assert_eq!(code(&o), 1);
}

fn n40(dir: &Path) -> (PathBuf, ProblemInstance) {
    let inst = gen_instance(Regime::Normal, VarianceLevel::High, 40, 5, 2, None).unwrap();
    (write_instance(dir, "n40.json", &inst), inst)
}

#[test]
fn bounds_profile_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let (path, inst) = n40(dir.path());
    let out = dir.path().join("b.csv");
    let o = kelly(dir.path(), &["bounds", path.to_str().unwrap(), "--n-grid", "N/20", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<BoundsRow> = read_rows(&out).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), (1..=20).map(|k| 2 * k).collect::<Vec<_>>());
    let full = solve_itm(&inst.bets, &TransformOptions::default()).unwrap().result.f_star;
    for r in &rows {
        assert!(r.f_lower - 1e-12 <= full && full <= r.f_upper + 1e-12, "n={}", r.n);
    }
    assert!(rows.windows(2).all(|w| w[1].f_lower >= w[0].f_lower));
    assert!((rows.last().unwrap().shortfall - 1.0).abs() < 1e-9);
    // bit-exact round trip: re-encoding the parsed rows reproduces the file
    let bytes = kelly_cli::commands::bounds::to_csv(&rows).unwrap();
    assert_eq!(bytes, std::fs::read(&out).unwrap());
}

#[test]
fn bounds_target_gap_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = n40(dir.path());
    let o = kelly(dir.path(), &["bounds", path.to_str().unwrap(), "--target-gap", "0.99"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f = dir.path().join("t.csv");
    std::fs::write(&f, &o.stdout).unwrap();
    let rows = read_rows(&f).unwrap();
    let last = rows.last().unwrap();
    assert!(last.shortfall >= 0.99 || last.n == 40);
    assert!(rows[..rows.len() - 1].iter().all(|r| r.shortfall < 0.99));
    let o = kelly(dir.path(), &["bounds", path.to_str().unwrap(), "--target-gap", "1.5"]);
    assert_eq!(code(&o), 1);
}
