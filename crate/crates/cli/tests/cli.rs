use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fastquery::costmodel::CSV_HEADER;
use fastquery::io::read_quantized_table;
use fastquery::quantizer::reconstruction_error;
use serde_json::Value;
use tempfile::TempDir;

fn fastquery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastquery"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = fastquery(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, seed: &str) {
    ok(&["--out", s(dir), "--seed", seed, "gen", "--m", "512", "--n", "48", "--qkv-dim", "8"]);
}

#[test]
fn gen_is_deterministic_and_replayable() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    gen(&a, "7");
    gen(&b, "7");
    for f in ["table.fqm", "qkv.fqm", "freqs.txt", "gen_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ra = json(&a.join("resolved_config.json"));
    let rb = json(&b.join("resolved_config.json"));
    assert_eq!(ra["gen"], rb["gen"]);
    assert!(ra["timestamps"]["started_unix_ms"].is_u64());

    ok(&["--config", s(&a.join("resolved_config.json")), "--out", s(&c), "gen"]);
    assert_eq!(fs::read(a.join("table.fqm")).unwrap(), fs::read(c.join("table.fqm")).unwrap());
}

#[test]
fn gen_defaults_have_channel_spread() {
    let tmp = TempDir::new().unwrap();
    ok(&["--out", s(tmp.path()), "gen"]);
    let summary = json(&tmp.path().join("gen_summary.json"));
    assert_eq!(summary["m"], 8192);
    assert!(summary["channel_spread"].as_f64().unwrap() >= 10.0);
    assert!(!tmp.path().join("qkv.fqm").exists());
}

#[test]
fn zipf_counts_are_monotone() {
    let tmp = TempDir::new().unwrap();
    ok(&["--out", s(tmp.path()), "gen", "--m", "300", "--n", "4", "--zipf-exponent", "1.0"]);
    let counts: Vec<f64> = fs::read_to_string(tmp.path().join("freqs.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 300);
    assert!(counts.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn quantize_reports_module_error() {
    let tmp = TempDir::new().unwrap();
    let (g, q) = (tmp.path().join("g"), tmp.path().join("q"));
    gen(&g, "1");
    ok(&["--out", s(&q), "quantize", "--table", s(&g.join("table.fqm")), "--freqs", s(&g.join("freqs.txt")), "--bit-combo", "5,3,2"]);
    let metrics = json(&q.join("quant_metrics.json"));
    let table = read_quantized_table::<f64>(&q.join("quantized")).unwrap();
    let w = fastquery::io::read_matrix::<f64>(&g.join("table.fqm")).unwrap();
    assert_eq!(metrics["reconstruction_error"].as_f64().unwrap(), reconstruction_error(w.view(), &table, None).unwrap());
    assert_eq!(table.bit_combo, vec![5, 3, 2]);
    assert!(metrics["weighted_reconstruction_error"].as_f64().is_some());
}

#[test]
fn compare_mode_tabulates_criteria_by_combo() {
    let tmp = TempDir::new().unwrap();
    let (g, c) = (tmp.path().join("g"), tmp.path().join("c"));
    gen(&g, "2");
    ok(&["--out", s(&c), "quantize", "--table", s(&g.join("table.fqm")), "--compare"]);
    let rows = json(&c.join("comparison.json"));
    assert_eq!(rows.as_array().unwrap().len(), 15);
    let csv = fs::read_to_string(c.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("criterion,bit_combo,error"));
    assert_eq!(csv.lines().count(), 16);
    assert!(csv.contains("hessian,6-2-2,"));
}

#[test]
fn finetune_best_curve_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let (g, f) = (tmp.path().join("g"), tmp.path().join("f"));
    gen(&g, "3");
    ok(&[
        "--out", s(&f), "finetune",
        "--table", s(&g.join("table.fqm")),
        "--qkv", s(&g.join("qkv.fqm")),
        "--freqs", s(&g.join("freqs.txt")),
        "--iterations", "40",
    ]);
    let m = json(&f.join("finetune_metrics.json"));
    let curve: Vec<f64> = m["best_loss_curve"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(curve.len(), 41);
    assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*curve.last().unwrap(), m["best_loss"].as_f64().unwrap());
    assert!(m["best_loss"].as_f64().unwrap() <= m["initial_loss"].as_f64().unwrap());
    assert!(read_quantized_table::<f64>(&f.join("finetuned")).is_ok());
}

#[test]
fn online_query_is_exact_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |dir: &Path| vec!["--out".to_string(), s(dir).into(), "--seed".into(), "7".into(), "query".into(), "--tokens".into(), "200".into(), "--m".into(), "512".into(), "--n".into(), "48".into()];
    for dir in [&a, &b] {
        let argv = args(dir);
        let out = fastquery(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let summary = fs::read(a.join("query_summary.json")).unwrap();
    assert_eq!(summary, fs::read(b.join("query_summary.json")).unwrap());
    let v = json(&a.join("query_summary.json"));
    assert_eq!(v["matched"], 200);
    assert_eq!(v["all_validated"], true);
    assert_eq!(json(&a.join("validation.json"))["passed"], true);
    assert!(json(&a.join("transcript.json"))["entries"].as_array().unwrap().len() > 2);
}

#[test]
fn online_query_over_quantized_table() {
    let tmp = TempDir::new().unwrap();
    let (g, q, r) = (tmp.path().join("g"), tmp.path().join("q"), tmp.path().join("r"));
    gen(&g, "4");
    ok(&["--out", s(&q), "quantize", "--table", s(&g.join("table.fqm"))]);
    ok(&["--out", s(&r), "query", "--table", s(&q.join("quantized")), "--tokens", "5"]);
    let v = json(&r.join("query_summary.json"));
    assert_eq!((v["m"].as_u64(), v["n"].as_u64(), v["matched"].as_u64()), (Some(512), Some(48), Some(5)));
}

#[test]
fn baseline_mode_and_scale_limit() {
    let tmp = TempDir::new().unwrap();
    ok(&["--out", s(tmp.path()), "query", "--mode", "baseline", "--m", "64", "--tokens", "3"]);
    let v = json(&tmp.path().join("query_summary.json"));
    assert_eq!(v["matched"], 3);
    assert!(v["transcript"]["offline_bytes"].as_u64() > v["transcript"]["online_bytes"].as_u64());
    let out = fastquery(&["--out", s(tmp.path()), "query", "--mode", "baseline", "--m", "4096"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn cost_ladder_outputs() {
    let tmp = TempDir::new().unwrap();
    ok(&["--out", s(tmp.path()), "cost"]);
    let report = json(&tmp.path().join("cost.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    assert_eq!((report["m"].as_u64(), report["n"].as_u64()), (Some(32000), Some(4096)));
    assert!(report["final_over_baseline"].as_f64().unwrap() >= 20.0);
    let csv = fs::read_to_string(tmp.path().join("cost.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, CSV_HEADER);
    assert_eq!(
        header,
        "name,label,m,n,n_eff,degree_n,q_bits,p_bits,packlwes,chunk_cols,input_polys,output_polys,input_bits,output_bits,total_bits,total_bytes,total_mib,ratio_vs_baseline"
    );
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 3, "cost": {"m": 1000, "n": 64}}"#).unwrap();
    ok(&["--config", s(&cfg), "--out", s(tmp.path()), "cost", "--n", "128"]);
    let r = json(&tmp.path().join("resolved_config.json"));
    assert_eq!((r["seed"].as_u64(), r["cost"]["m"].as_u64(), r["cost"]["n"].as_u64()), (Some(3), Some(1000), Some(128)));
}

#[test]
fn configuration_errors_exit_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"cost": {"bogus": 1}}"#).unwrap();
    assert_eq!(fastquery(&["--config", s(&cfg), "--out", s(tmp.path()), "cost"]).status.code(), Some(3));
    assert_eq!(fastquery(&["--out", s(tmp.path()), "quantize"]).status.code(), Some(3));
    assert_eq!(fastquery(&["--out", s(tmp.path()), "gen", "--m", "0"]).status.code(), Some(3));
    assert_eq!(fastquery(&["--out", s(tmp.path()), "query", "--bit-combo", "9,3,1", "--m", "16", "--n", "3"]).status.code(), Some(3));
}
