use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langevin-error")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn theory_prints_one_breakdown_row() {
    let o = cli(&["theory", "--spectrum", "1,0.5", "--sigma", "0.8", "--tau", "1e-3", "--gamma", "1e-2", "--N", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,tau,gamma,N,term0,term_tau,term_tauN,term_N,total");
    assert_eq!(lines.len(), 2);
    let cells: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    let sum: f64 = cells[4..8].iter().sum();
    assert!((sum - cells[8]).abs() <= 1e-12 * cells[8].abs());
}

#[test]
fn sweep_csv_has_fixed_columns_and_one_row_per_point() {
    let dir = tempdir();
    let cfg = dir.join("sweep.toml");
    std::fs::write(
        &cfg,
        "spectrum = [1.0, 0.25]\n[[sweep.axes]]\nname = \"sigma\"\ngrid = { log = { lo = 0.1, hi = 2.0, points = 5 } }\n[[sweep.axes]]\nname = \"N\"\ngrid = [100, 1000, 10000]\n",
    )
    .unwrap();
    let out = dir.join("sweep.csv");
    let o = cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,tau,gamma,N,term0,term_tau,term_tauN,term_N,total");
    assert_eq!(lines.len(), 1 + 15);
    assert!(lines[1].starts_with("0.1,") && lines[1].split(',').nth(3) == Some("100"));
    assert!(lines[2].split(',').nth(3) == Some("1000"));
}

#[test]
fn sweep_marks_infeasible_points_with_an_error_code() {
    let o = cli(&["sweep", "--config", &write_cfg("spectrum = [1.0]\n[[sweep.axes]]\nname = \"gamma\"\ngrid = [0.01, 5.0]\n")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let bad = text.lines().nth(2).unwrap();
    assert!(bad.ends_with(",,,,E_DOMAIN"), "{bad}");
}

#[test]
fn flags_override_config_values() {
    let path = write_cfg("spectrum = [1.0]\n[params]\nsigma = 0.5\n");
    let o = cli(&["theory", "--config", &path, "--sigma", "0.9", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["params"]["sigma"], 0.9);
    assert_eq!(v["tables"][0]["rows"][0][0], 0.9);
}

#[test]
fn invalid_config_exits_nonzero_naming_the_bound() {
    let o = cli(&["theory", "--tau", "3.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2/max(max_k λ_k + σ², 1)"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_key_reports_its_line() {
    let o = cli(&["theory", "--config", &write_cfg("seed = 1\n\n[params]\nsgima = 1.0\n")]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("sgima"), "{err}");
}

#[test]
fn simulation_output_is_reproducible_under_a_seed() {
    let args = ["simulate-ula", "--spectrum", "1,0.5", "--sigma", "0.5", "--gamma", "0.05", "--n-steps", "20000", "--seed", "7", "--format", "json"];
    let a = cli(&args);
    let b = cli(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let mut other = args.to_vec();
    other[10] = "8";
    assert_ne!(cli(&other).stdout, a.stdout);
}

#[test]
fn verify_exit_code_follows_suite_outcome() {
    let o = cli(&["verify", "--only", "1,5,8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert_eq!(err.lines().filter(|l| l.starts_with("PASS [")).count(), 3);
    let o = cli(&["verify", "--only", "12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sigma_opt_reports_an_interior_optimum() {
    let o = cli(&["sigma-opt", "--spectrum", "1,0.5,0.25", "--N", "1000", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let opt = &v["tables"][1];
    assert_eq!(opt["name"], "sigma_opt");
    assert_eq!(opt["rows"][0][2], true);
    let s = opt["rows"][0][0].as_f64().unwrap();
    assert!(s > 0.05 && s < 5.0);
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("langevin-error-cli-{}-{}", std::process::id(), next_id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn next_id() -> usize {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static N: AtomicUsize = AtomicUsize::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

fn write_cfg(text: &str) -> String {
    let p = tempdir().join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(&path).unwrap();
            langevin_error::harness::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
