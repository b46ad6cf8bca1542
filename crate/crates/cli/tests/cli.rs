use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdfrontier::estimators::EstimatorKind;
use hdfrontier::frontier::{frontier_params, ConcentrationRatio};
use hdfrontier::inference::asymptotic_variances;
use hdfrontier::rmt::standard_normal_matrix;
use hdfrontier::rng::{stream, Domain};
use hdfrontier::simulator::{generate, Population, ScenarioKind, ScenarioSpec};
use serde_json::Value;

fn hdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdfrontier"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The run directory printed on the last `output` line.
fn run_dir(o: &Output) -> PathBuf {
    let out = stdout(o);
    let line = out.lines().rev().find(|l| l.starts_with("output ")).expect("output line");
    PathBuf::from(line.trim_start_matches("output "))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// `days` days of `per_day` one-minute rows for `p` assets, i.i.d. normal.
fn write_panel(path: &Path, days: usize, per_day: usize, p: usize, seed: u64) {
    let mut rng = stream(seed, Domain::Panel, 0);
    let x = standard_normal_matrix(p, days * per_day, &mut rng);
    let mut f = fs::File::create(path).unwrap();
    let labels: Vec<String> = (0..p).map(|j| format!("A{j}")).collect();
    writeln!(f, "timestamp,{}", labels.join(",")).unwrap();
    for d in 0..days {
        for i in 0..per_day {
            let t = d * per_day + i;
            let cells: Vec<String> = (0..p).map(|j| (0.01 * x[(j, t)]).to_string()).collect();
            writeln!(f, "2024-03-{:02}T{:02}:{:02}:00,{}", d + 1, 9 + (46 + i) / 60, (46 + i) % 60, cells.join(",")).unwrap();
        }
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn frontier_two_asset_example() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&["frontier", "--mu", "0,0.3", "--sigma", "1,0;0,2", "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("r_gmv  0.1\n"), "{out}");
    assert!(out.contains("v_gmv  0.666667\n"), "{out}");
    assert!(out.contains("slope  0.03\n"), "{out}");
    let dir = run_dir(&o);
    assert!(dir.starts_with(tmp.path().join("frontier")));
    let m = manifest(&dir);
    assert_eq!(m["subcommand"], "frontier");
    assert_eq!(m["config"]["mu"], serde_json::json!([0.0, 0.3]));
    assert!(m["finished"].is_string());
}

#[test]
fn frontier_identity_zero_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&[
        "frontier", "--mu", "0,0,0,0", "--sigma", "1,0,0,0;0,1,0,0;0,0,1,0;0,0,0,1", "--outdir", s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(run_dir(&o).join("frontier.json")).unwrap()).unwrap();
    assert_eq!(v["params"]["r_gmv"], 0.0);
    assert_eq!(v["params"]["v_gmv"], 0.25);
    assert_eq!(v["params"]["slope"], 0.0);
}

#[test]
fn frontier_from_files_and_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let mu = tmp.path().join("mu.csv");
    let sigma = tmp.path().join("sigma.csv");
    fs::write(&mu, "0\n0.3\n").unwrap();
    fs::write(&sigma, "1,0\n0,2\n").unwrap();
    let o = hdf(&[
        "frontier", "--mu-file", s(&mu), "--sigma-file", s(&sigma), "--curve-points", "5", "--outdir", s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(run_dir(&o).join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 6);
    assert!(curve.starts_with("V,R\n"));
}

#[test]
fn frontier_malformed_csv_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    fs::write(&sigma, "1,0\n0,abc\n").unwrap();
    let o = hdf(&["frontier", "--mu", "0,0.3", "--sigma-file", s(&sigma), "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    // nothing is written for a rejected configuration
    assert!(!tmp.path().join("frontier").exists());
}

#[test]
fn missing_inputs_and_bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&["frontier", "--mu", "0,0.3", "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma"));
    let o = hdf(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_needs_more_observations_than_assets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("r.csv");
    write_panel(&data, 1, 8, 10, 1);
    let o = hdf(&["estimate", "--input", s(&data), "--kinds", "sample", "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("n > p"), "{}", stderr(&o));

    let o = hdf(&["estimate", "--input", s(&data), "--kinds", "rte", "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("rte"));
}

#[test]
fn estimate_recovers_known_frontier() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, n) = (20, 400);
    let spec = ScenarioSpec::new(ScenarioKind::Normal, p, n, 11);
    let pop = Population::build(&spec).unwrap();
    let truth = frontier_params(&pop.mu, &pop.sigma).unwrap();
    let y = generate(&spec, &pop, &mut stream(11, Domain::Replication, 0)).unwrap();
    let data = tmp.path().join("r.csv");
    let mut f = fs::File::create(&data).unwrap();
    writeln!(f, "timestamp,{}", (0..p).map(|j| format!("A{j}")).collect::<Vec<_>>().join(",")).unwrap();
    for t in 0..n {
        let cells: Vec<String> = (0..p).map(|j| y.values()[(j, t)].to_string()).collect();
        writeln!(f, "2024-01-01T{:02}:{:02}:00,{}", t / 60, t % 60, cells.join(",")).unwrap();
    }
    drop(f);

    let o = hdf(&["estimate", "--input", s(&data), "--kinds", "sample,consistent", "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let est: Value = serde_json::from_str(&fs::read_to_string(run_dir(&o).join("estimates.json")).unwrap()).unwrap();
    let cons = est.as_array().unwrap().iter().find(|e| e["report"]["kind"] == "consistent").unwrap();
    assert!(cons["ci"].is_object());
    let fp = &cons["report"]["params"];
    let vars = asymptotic_variances(truth, ConcentrationRatio::from_dims(p, n).unwrap());
    let rn = (n as f64).sqrt();
    let c = p as f64 / n as f64;
    let z = [
        rn * (fp["r_gmv"].as_f64().unwrap() - truth.r_gmv) / vars.var_r.sqrt(),
        rn * (fp["v_gmv"].as_f64().unwrap() - truth.v_gmv) / vars.var_v.sqrt(),
        rn * (fp["slope"].as_f64().unwrap() - truth.slope - c) / vars.var_s.sqrt(),
    ];
    assert!(z.iter().all(|z| z.abs() < 3.0), "{z:?}");
}

#[test]
fn simulate_smoke_emits_losses() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&[
        "simulate", "--scenario", "normal", "--c", "0.5", "--p", "200", "--reps", "100", "--seed", "5", "--outdir",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let losses = fs::read_to_string(run_dir(&o).join("losses.csv")).unwrap();
    assert!(losses.starts_with("p,n,c,scenario,estimator,param,mean_loss,q05,q95\n"));
    assert_eq!(losses.lines().count(), 1 + 2 * 3);
}

#[test]
fn simulate_frontiers_has_truth_plus_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&[
        "simulate", "--c", "0.5", "--p", "30", "--reps", "1", "--outputs", "frontiers", "--kinds",
        "sample,consistent,sse,ebe,rte", "--seed", "2", "--outdir", s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(run_dir(&o).join("frontiers.csv")).unwrap();
    let mut kinds: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    kinds.dedup();
    assert_eq!(kinds, vec!["population", "sample", "consistent", "sse", "ebe", "rte"]);
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_is_reproducible_from_seed_manifest_and_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let base = [
        "simulate", "--scenario", "t3", "--c", "0.5", "--p", "20", "--reps", "120", "--outputs",
        "losses,histograms,replications", "--seed", "9", "--outdir", s(tmp.path()),
    ];
    let a = hdf(&base);
    assert!(a.status.success(), "{}", stderr(&a));
    let mut with_jobs = base.to_vec();
    with_jobs.extend(["--jobs", "1"]);
    let b = hdf(&with_jobs);
    assert!(b.status.success(), "{}", stderr(&b));
    let first = files_of(&run_dir(&a));
    assert_eq!(first.len(), 1 + 1 + 6);
    assert_eq!(first, files_of(&run_dir(&b)));

    let replay = hdf(&["simulate", "--config", s(&run_dir(&a).join("manifest.json")), "--outdir", s(tmp.path())]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(first, files_of(&run_dir(&replay)));
    assert_eq!(manifest(&run_dir(&replay))["seed"], 9);
}

#[test]
fn entropy_seed_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&["simulate", "--c", "0.5", "--p", "4", "--reps", "3", "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&run_dir(&o));
    assert!(m["seed"].is_u64());
    let replay = hdf(&["simulate", "--config", s(&run_dir(&o).join("manifest.json")), "--outdir", s(tmp.path())]);
    assert_eq!(files_of(&run_dir(&o)), files_of(&run_dir(&replay)));
}

#[test]
fn theory_check_reports_and_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&["theory-check", "--checks", "transforms", "--seed", "1", "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("m(0+) = 2 at c = 0.5"));
    let d: Value = serde_json::from_str(&fs::read_to_string(run_dir(&o).join("diagnostics.json")).unwrap()).unwrap();
    let residuals: Vec<&Value> = d["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["check"] == "transforms.residual")
        .collect();
    assert_eq!(residuals.len(), 4);
    assert!(residuals.iter().all(|r| r["value"].as_f64().unwrap() < 1e-12));

    // an impossible threshold fails the check with exit code 1
    let o = hdf(&[
        "theory-check", "--checks", "lemma2", "--p", "50", "--seeds", "3", "--threshold", "1e-9", "--seed", "1",
        "--outdir", s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(run_dir(&o).join("diagnostics.json").exists());
}

#[test]
fn theory_check_lemma2_large_p_mean_and_cross_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdf(&["theory-check", "--checks", "lemma2", "--p", "500", "--seeds", "5", "--seed", "3", "--outdir", s(tmp.path())]);
    let d: Value = serde_json::from_str(&fs::read_to_string(run_dir(&o).join("diagnostics.json")).unwrap()).unwrap();
    let get = |name: &str| {
        d["diagnostics"].as_array().unwrap().iter().find(|r| r["check"] == name).unwrap()["pass"].as_bool().unwrap()
    };
    assert!(get("lemma2.xbar"));
    assert!(get("lemma2.cross"));
}

fn pipeline_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn pipeline_window_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("panel.csv");
    // 10 days of 30 rows; a 50-row window spans 2 days: 10 - 2 + 1 windows
    write_panel(&data, 10, 30, 25, 4);
    let cfg = pipeline_config(tmp.path(), &format!(r#"{{"input": "{}", "rolling": {{"p": 20, "n": 50}}}}"#, s(&data)));
    let o = hdf(&["pipeline", "--config", s(&cfg), "--outdir", s(tmp.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(run_dir(&o).join("rolling.csv")).unwrap();
    assert!(text.starts_with(
        "date,estimator,r_gmv,v_gmv,slope,ci_r_lo,ci_r_hi,ci_v_lo,ci_v_hi,ci_s_lo,ci_s_hi,p,n,frequency_minutes\n"
    ));
    for kind in [EstimatorKind::Sample, EstimatorKind::Consistent, EstimatorKind::Ebe, EstimatorKind::Rte] {
        let count = text.lines().filter(|l| l.split(',').nth(1) == Some(kind.name())).count();
        assert_eq!(count, 9, "{kind}");
    }
}

#[test]
fn pipeline_trivial_winsor_bounds_match_no_winsorization() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("panel.csv");
    write_panel(&data, 4, 30, 6, 5);
    let common = ["pipeline", "--input", s(&data), "--p", "5", "--n", "40", "--seed", "1", "--outdir", s(tmp.path())];
    let mut a = common.to_vec();
    a.extend(["--winsor", "0,1"]);
    let mut b = common.to_vec();
    b.push("--no-winsor");
    let (a, b) = (hdf(&a), hdf(&b));
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    assert_eq!(files_of(&run_dir(&a)), files_of(&run_dir(&b)));

    let replay = hdf(&["pipeline", "--config", s(&run_dir(&a).join("manifest.json")), "--outdir", s(tmp.path())]);
    assert_eq!(files_of(&run_dir(&a)), files_of(&run_dir(&replay)));
}

#[test]
fn pipeline_missing_field_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = pipeline_config(tmp.path(), r#"{"rolling": {"p": 5, "n": 40}}"#);
    let o = hdf(&["pipeline", "--config", s(&cfg), "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`input`"), "{}", stderr(&o));

    let cfg = pipeline_config(tmp.path(), r#"{"input": "x.csv", "rolling": {"window": 5}}"#);
    let o = hdf(&["pipeline", "--config", s(&cfg), "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("window"), "{}", stderr(&o));
}

#[test]
fn pipeline_data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("panel.csv");
    write_panel(&data, 1, 20, 6, 5);
    let o = hdf(&["pipeline", "--input", s(&data), "--p", "5", "--n", "40", "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("window needs 40"), "{}", stderr(&o));

    fs::write(&data, "timestamp,A\n2024-01-01T10:00:00,0.1\n2024-01-01T09:00:00,0.2\n").unwrap();
    let o = hdf(&["pipeline", "--input", s(&data), "--p", "1", "--n", "2", "--outdir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}
