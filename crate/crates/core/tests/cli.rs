use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ehspc::scenario::{ScenarioBounds, FEATURE_NAMES};
use ehspc::surrogate::{arch, save_bundle};

fn ehspc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehspc"))
        .args(args)
        .env_remove("EHSPC_WORKERS")
        .output()
        .expect("spawn ehspc")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn simulate_reports_metrics() {
    let out = stdout(&ehspc(&["simulate", "--realizations", "2000", "--set", "sigma2=1e-7"]));
    let e2e: f64 = value(&out, "e2e_bler").parse().unwrap();
    assert!((0.0..=1.0).contains(&e2e));
    assert_eq!(value(&out, "per_hop_bler").split(';').count(), 4);
    assert_eq!(value(&out, "n_realizations"), "2000");
    assert!(out.starts_with("# invocation: "));
}

#[test]
fn simulate_dumps_draws() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.csv");
    stdout(&ehspc(&["simulate", "--realizations", "3", "--dump-draws", path.to_str().unwrap()]));
    let text = fs::read_to_string(&path).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "realization,class,node,element,gain");
    assert!(body[1..].iter().any(|l| l.starts_with("2,")));
    assert!(!body[1..].iter().any(|l| l.starts_with("3,")));
}

#[test]
fn sweep_over_threshold_is_monotone() {
    let out = stdout(&ehspc(&[
        "sweep", "--axis", "i_th_db", "--grid", "0:30:5", "--realizations", "2000", "--set", "sigma2=1e-7",
    ]));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 7);
    let thr: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(thr.windows(2).all(|w| w[1] >= w[0]), "{thr:?}");
    assert_eq!(rows[6][1], "30");
}

#[test]
fn sweep_scheme_list_concatenates() {
    let out = stdout(&ehspc(&[
        "sweep", "--axis", "m", "--grid", "2000,3000", "--schemes", "PT,Sum", "--realizations", "500",
    ]));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][2], "PT");
    assert_eq!(rows[3][2], "Sum");
}

#[test]
fn exit_codes() {
    let unknown = ehspc(&["simulate", "--no-such-flag"]);
    assert_eq!(unknown.status.code(), Some(2));

    let bad = ehspc(&["simulate", "--set", "K=0"]);
    assert_eq!(bad.status.code(), Some(3));
    let err = String::from_utf8(bad.stderr).unwrap();
    assert!(err.starts_with("error: code=config message="), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let missing = ehspc(&["simulate", "--config", "/nonexistent/ehspc.toml"]);
    assert_eq!(missing.status.code(), Some(4));

    let missing_bundle = ehspc(&["predict", "--bundle", "/nonexistent/b.json", "--input", "/nonexistent/x.csv"]);
    assert_eq!(missing_bundle.status.code(), Some(4));
}

fn without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) if !l.starts_with('#') => head.to_string(),
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn worker_count_does_not_change_output() {
    let run = |w: &str| {
        stdout(&ehspc(&[
            "sweep", "--axis", "i_th_db", "--grid", "0:20:10", "--realizations", "3000", "--workers", w, "--set",
            "sigma2=1e-7",
        ]))
    };
    assert_eq!(without_wall_time(&run("1")), without_wall_time(&run("8")));
}

#[test]
fn dataset_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let files = ["dataset.csv", "manifest.toml", "train.csv", "test.csv"];
    let mut first = Vec::new();
    for workers in ["1", "4"] {
        stdout(&ehspc(&[
            "gen-dataset", "-n", "12", "--realizations", "200", "--seed", "9", "--out", out.to_str().unwrap(),
            "--workers", workers,
        ]));
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
        if first.is_empty() {
            first = bytes;
        } else {
            for (file, (x, y)) in files.iter().zip(first.iter().zip(&bytes)) {
                assert_eq!(x, y, "{file} differs");
            }
        }
    }
    let text = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
}

fn micro_bundle(dir: &Path) -> String {
    let fb = ScenarioBounds::dataset_ranges().feature_bounds();
    let path = dir.join("micro.json");
    save_bundle(&path, &arch::identity_micro(&fb)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn predict_matches_micro_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = micro_bundle(dir.path());
    let fb = ScenarioBounds::dataset_ranges().feature_bounds();
    let mid: Vec<String> = (0..FEATURE_NAMES.len()).map(|i| ((fb.lo[i] + fb.hi[i]) / 2.0).to_string()).collect();
    let mut outside = fb.hi;
    outside[0] += 1.0;
    let outside: Vec<String> = outside.iter().map(|v| v.to_string()).collect();
    let input = dir.path().join("in.csv");
    fs::write(&input, format!("# scenarios\n{}\n{}\n{}\n", FEATURE_NAMES.join(","), mid.join(","), outside.join(","))).unwrap();

    let out = stdout(&ehspc(&["predict", "--bundle", &bundle, "--input", input.to_str().unwrap()]));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 2);
    let g = ehspc::surrogate::gate_mul(arch::MICRO_GATE_BIAS).powi(arch::CHI_BLOCKS as i32);
    let n = FEATURE_NAMES.len();
    for k in 0..2 {
        let want = arch::MICRO_OUT_WEIGHT[k] * g * 0.5 + arch::MICRO_OUT_BIAS[k];
        let got: f64 = rows[0][n + k].parse().unwrap();
        assert!((got - want).abs() < 1e-12, "output {k}: {got} vs {want}");
    }
    assert_eq!(rows[0][n + 2], "");
    assert_eq!(rows[1][n + 2], FEATURE_NAMES[0]);
}

#[test]
fn evaluate_reports_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = micro_bundle(dir.path());
    let data = dir.path().join("data");
    stdout(&ehspc(&["gen-dataset", "-n", "6", "--realizations", "100", "--out", data.to_str().unwrap()]));
    let out = stdout(&ehspc(&["evaluate", "--bundle", &bundle, "--data", data.join("dataset.csv").to_str().unwrap()]));
    assert_eq!(value(&out, "n"), "6");
    let rmse: f64 = value(&out, "rmse").parse().unwrap();
    assert!(rmse.is_finite() && rmse > 0.0);
    assert_eq!(value(&out, "extrapolated_rows"), "0");
}
