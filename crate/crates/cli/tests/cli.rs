use std::path::Path;
use std::process::{Command, Output};

use mapfusion_core::synthetic;

fn mapfusion(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapfusion"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn staged() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    synthetic::scenario().write_inputs(dir.path()).unwrap();
    dir
}

const CFG: [&str; 2] = ["--config", "config.toml"];

fn with_cfg<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(CFG);
    v.extend(extra);
    v
}

#[test]
fn full_pipeline() {
    let dir = staged();
    let d = dir.path();
    let align = mapfusion(d, &with_cfg("align", &[]));
    assert_eq!(code(&align), 0, "{}", String::from_utf8_lossy(&align.stderr));
    assert!(json(&align)["rmse"].as_f64().unwrap() < 1e-6);

    let conflate = mapfusion(d, &with_cfg("conflate", &[]));
    assert_eq!(code(&conflate), 0, "{}", String::from_utf8_lossy(&conflate.stderr));
    assert_eq!(json(&conflate)["match_rate"], 1.0);

    assert_eq!(code(&mapfusion(d, &with_cfg("georeference", &[]))), 0);
    let eval = mapfusion(d, &with_cfg("evaluate", &[]));
    assert_eq!(code(&eval), 0);
    let e = json(&eval);
    assert_eq!(e["matching"]["precision"], 1.0);
    assert!(e["matching"]["recall"].is_null());
    for f in ["town_aligned.osm", "town_conflated.osm", "town_georef.osm", "town_georef.pcd", "evaluation.json"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn flags_override_the_file() {
    let dir = staged();
    let d = dir.path();
    let out = d.join("elsewhere");
    let o = mapfusion(d, &with_cfg("align", &["--out", out.to_str().unwrap()]));
    assert_eq!(code(&o), 0);
    assert!(out.join("alignment_report.json").is_file());
    assert!(!d.join("out").exists());

    std::fs::write(d.join("none.json"), "[]").unwrap();
    let o = mapfusion(d, &with_cfg("align", &["--control-points", d.join("none.json").to_str().unwrap()]));
    assert_eq!(json(&o)["triangles"], 0);

    assert_eq!(code(&mapfusion(d, &with_cfg("conflate", &["--score-threshold", "0.999999"]))), 0);
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("out/conflation_report.json")).unwrap()).unwrap();
    assert!(r["metrics"]["match_rate"].as_f64().unwrap() < 1.0);
}

#[test]
fn config_errors_exit_2() {
    let dir = staged();
    let d = dir.path();
    assert_eq!(code(&mapfusion(d, &["align", "--config", "missing.toml"])), 2);
    assert_eq!(code(&mapfusion(d, &["align", "--config", "config.toml", "--bogus"])), 2);
    assert_eq!(code(&mapfusion(d, &with_cfg("conflate", &[]))), 2, "conflate before align");
    assert_eq!(code(&mapfusion(d, &with_cfg("align", &["--buffer-growth", "0.5"]))), 2);
    std::fs::write(d.join("bad.toml"), "[inputs]\nvm = \"town.osm\"\n").unwrap();
    assert_eq!(code(&mapfusion(d, &["align", "--config", "bad.toml"])), 2);
    std::fs::remove_file(d.join("slam.csv")).unwrap();
    assert_eq!(code(&mapfusion(d, &with_cfg("align", &[]))), 2);
}

#[test]
fn malformed_input_exits_3() {
    let dir = staged();
    let d = dir.path();
    std::fs::write(d.join("town.osm"), "<osm><node id='1'").unwrap();
    let o = mapfusion(d, &with_cfg("align", &[]));
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("town.osm"));
}

#[test]
fn control_point_outside_coverage_exits_4() {
    let dir = staged();
    let d = dir.path();
    std::fs::write(d.join("far.json"), r#"[{"source": [100000.0, 0.0], "target": [100000.0, 0.0]}]"#).unwrap();
    let o = mapfusion(d, &with_cfg("align", &["--control-points", d.join("far.json").to_str().unwrap()]));
    assert_eq!(code(&o), 4);
}

#[test]
fn labels_enable_recall() {
    let dir = staged();
    let d = dir.path();
    std::fs::write(d.join("labels.json"), r#"{"0": "FN"}"#).unwrap();
    assert_eq!(code(&mapfusion(d, &with_cfg("align", &[]))), 0);
    assert_eq!(code(&mapfusion(d, &with_cfg("conflate", &[]))), 0);
    let o = mapfusion(d, &with_cfg("evaluate", &["--labels", d.join("labels.json").to_str().unwrap()]));
    assert_eq!(json(&o)["matching"]["recall"], 1.0);
}

#[test]
fn serve_with_unusable_address_exits_2() {
    let dir = staged();
    assert_eq!(code(&mapfusion(dir.path(), &with_cfg("serve", &["--bind", "256.0.0.1:1"]))), 2);
}
