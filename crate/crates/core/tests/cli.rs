use std::path::Path;
use std::process::{Command, Output};

fn adlight(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adlight"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn catalog_lists_all_intersections() {
    let dir = tempfile::tempdir().unwrap();
    let o = adlight(dir.path(), &["catalog"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().any(|l| l.starts_with("INT6\ttest\t3")));
}

#[test]
fn exported_scenario_simulates_like_the_catalog_id() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("scenarios");
    assert!(adlight(dir.path(), &["catalog", "--export", export.to_str().unwrap()]).status.success());
    let file = export.join("INT3-1.json");
    assert!(file.exists());
    let trace = dir.path().join("trace.csv");
    let by_file = adlight(dir.path(), &["simulate", "--scenario", file.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    let by_id = adlight(dir.path(), &["simulate", "--scenario", "INT3-1"]);
    assert!(by_file.status.success() && by_id.status.success());
    assert_eq!(stdout(&by_file), stdout(&by_id));
    assert!(stdout(&by_id).starts_with("avg_waiting_s\t"));
    // header plus one row per simulated second
    assert_eq!(std::fs::read_to_string(trace).unwrap().lines().count(), 3601);
}

#[test]
fn failures_print_a_json_error_and_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--scenario", "INT9"][..],
        &["simulate", "--scenario", "INT1-1", "--plan", "bogus"][..],
        &["evaluate", "--checkpoint", "missing.ckpt", "--scenarios", "INT4"][..],
    ] {
        let o = adlight(dir.path(), args);
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr).into_owned();
        let line = err.lines().last().unwrap_or_default();
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{line:?}: {e}"));
        assert!(v["error"].is_string());
    }
}

#[test]
fn train_retrain_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("ppo.json");
    std::fs::write(&cfg, r#"{"rollout_len": 16, "curve_window": 1}"#).unwrap();
    let model = d.join("uni.ckpt");
    let o = adlight(
        d,
        &["train", "--scenarios", "INT1-1", "INT3-1", "--steps", "64", "--augment", "--config", cfg.to_str().unwrap(), "--out", model.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(model.exists() && d.join("curve_uni.csv").exists());

    let tuned = d.join("tuned.ckpt");
    let o = adlight(
        d,
        &["retrain", "--checkpoint", model.to_str().unwrap(), "--scenario", "INT5", "--steps", "32", "--config", cfg.to_str().unwrap(), "--out", tuned.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("curve_tuned.csv").exists());

    let eval = |ckpt: &Path| {
        let o = adlight(d, &["evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--scenarios", "INT4", "INT6", "--episodes", "1", "--eval-seeds", "0", "--duration", "300"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), std::fs::read_to_string(d.join("eval.csv")).unwrap())
    };
    let (text, csv) = eval(&tuned);
    assert_eq!(text.lines().count(), 2);
    assert!(csv.starts_with("scenario,controller,seed,episode,avg_waiting_s"));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(eval(&tuned), (text, csv));
}

#[test]
fn baseline_writes_eval_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = adlight(dir.path(), &["baseline", "--method", "webster", "--scenario", "INT2-3", "--episodes", "1", "--eval-seeds", "0", "1", "--duration", "600"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
