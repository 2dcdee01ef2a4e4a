use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lobshape(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobshape"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = lobshape(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()))).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn empty_stream_gives_empty_outputs() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("empty.csv"), "seq,wall_time,kind,order_ref,size,price\n").unwrap();
    ok(&["build", "empty.csv", "--out", "out"], tmp.path());
    let out = tmp.path().join("out");
    assert_eq!(fs::read_to_string(out.join("snapshots.csv")).unwrap(), "t,side,delta,volume\n");
    assert_eq!(fs::read_to_string(out.join("trades.csv")).unwrap(), "t,trade_price,trade_size\n");
    let report = json(out.join("stream_report.json"));
    assert_eq!(report["stream"]["total_records"], 0);
    assert_eq!(report["applied_events"], 0);
    assert_eq!(report["final_book"]["resting_orders"], 0);
    assert!(report["final_book"]["best_bid"].is_null());
}

#[test]
fn hand_walked_ten_event_stream() {
    let tmp = TempDir::new().unwrap();
    let events = fixture("ten_events/events.csv");
    ok(&["build", events.to_str().unwrap(), "--out", "out"], tmp.path());
    let out = tmp.path().join("out");
    assert_eq!(
        fs::read_to_string(out.join("snapshots.csv")).unwrap(),
        fs::read_to_string(fixture("ten_events/snapshots.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(out.join("trades.csv")).unwrap(),
        fs::read_to_string(fixture("ten_events/trades.csv")).unwrap()
    );
    let report = json(out.join("stream_report.json"));
    assert_eq!(report["stream"]["buy_orders"], 4);
    assert_eq!(report["stream"]["sell_orders"], 4);
    assert_eq!(report["stream"]["cancels"], 2);
    assert_eq!(report["book_errors"]["cancel_unknown"], 1);
    assert_eq!(report["applied_events"], 9);
    assert_eq!(report["traded_volume"], 550);
    assert_eq!(report["final_book"]["best_bid"], "10.01");
    assert_eq!(report["final_book"]["best_ask"], "10.02");
    assert_eq!(report["final_book"]["resting_orders"], 4);
    assert_eq!(report["final_book"]["bid_volume"], 200);
    assert_eq!(report["final_book"]["ask_volume"], 150);

    // A 150-share market sell walks the bids after each applied event:
    // impacts 1 (saturated), 0, 0, 0, 0, 1, 2, 2, 2.
    ok(
        &["impact", events.to_str().unwrap(), "--side", "sell", "--omega", "150", "--out", "imp"],
        tmp.path(),
    );
    let imp = json(tmp.path().join("imp/impact.json"));
    assert_eq!(imp["saturated_events"], 1);
    assert!((imp["mean_ticks"].as_f64().unwrap() - 8.0 / 9.0).abs() < 1e-12);
    assert_eq!(
        fs::read_to_string(tmp.path().join("imp/impact.csv")).unwrap(),
        format!("interval_index,value\n0,{}\n", 8.0f64 / 9.0)
    );
}

#[test]
fn generated_stream_matches_ledger() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen", "flow", "--seed", "4", "--events", "20000", "--inject", "0.02", "--out", "gen"], tmp.path());
    ok(&["build", "gen/events.csv", "--out", "out"], tmp.path());
    let ledger = json(tmp.path().join("gen/ledger.json"));
    let report = json(tmp.path().join("out/stream_report.json"));
    for (a, b) in [("buy_orders", "buy_orders"), ("sell_orders", "sell_orders"), ("cancels", "cancels")] {
        assert_eq!(report["stream"][a], ledger["ledger"][b]);
    }
    let injected = &ledger["injected"];
    let total = injected["malformed"].as_u64().unwrap()
        + injected["off_grid"].as_u64().unwrap()
        + injected["out_of_band"].as_u64().unwrap();
    assert!(total > 0);
    assert_eq!(report["stream"]["invalid_count"].as_u64().unwrap(), total);
    assert_eq!(report["applied_events"], 20000);
    assert_eq!(report["traded_volume"], ledger["ledger"]["traded_volume"]);
    assert!(report["book_errors"].as_object().unwrap().is_empty());
}

#[test]
fn flat_book_gives_flat_shape() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen", "shape", "--profile", "flat", "--amplitude", "500", "--depth", "30", "--out", "planted"], tmp.path());
    ok(&["shape", "planted/shape.csv", "--side", "buy", "--out", "out"], tmp.path());
    let table = fs::read_to_string(tmp.path().join("out/shape.csv")).unwrap();
    assert_eq!(table.lines().count(), 31);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",500,0")));
    assert_eq!(json(tmp.path().join("out/shape.json"))["delta_max"], 1);
    let peaks = json(tmp.path().join("out/peaks.json"));
    assert_eq!(peaks["has_peaks"], false);
    assert!(!tmp.path().join("out/fit.json").exists());
}

#[test]
fn planted_shape_parameters_recovered() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen", "shape", "--profile", "exponential", "--beta", "0.025", "--out", "exp"], tmp.path());
    ok(&["shape", "exp/shape.csv", "--side", "sell", "--range", "1:100", "--out", "fit"], tmp.path());
    let fit = json(tmp.path().join("fit/fit.json"));
    assert!((fit["beta"].as_f64().unwrap() - 0.025).abs() < 1e-12);
    assert_eq!(fit["range"], serde_json::json!([1, 100]));
    assert!(fit["manifest"]["inputs"][0]["sha256"].is_string());

    ok(&["gen", "shape", "--profile", "mode", "--delta-max", "11", "--beta", "0.025", "--out", "mode"], tmp.path());
    ok(&["shape", "mode/shape.csv", "--side", "sell", "--out", "m"], tmp.path());
    assert_eq!(json(tmp.path().join("m/shape.json"))["delta_max"], 11);

    ok(&["gen", "shape", "--profile", "exponential", "--boost", "5:1.3", "--out", "boost"], tmp.path());
    ok(&["shape", "boost/shape.csv", "--side", "buy", "--out", "b"], tmp.path());
    assert_eq!(json(tmp.path().join("b/peaks.json"))["has_peaks"], true);
}

#[test]
fn series_commands_recover_planted_values() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen", "fgn", "--seed", "2", "--hurst", "0.76", "--out", "fgn"], tmp.path());
    ok(&["dfa", "fgn/series.csv", "--range", "128:1024", "--out", "dfa"], tmp.path());
    let d = json(tmp.path().join("dfa/dfa.json"));
    assert!((d["H"].as_f64().unwrap() - 0.76).abs() < 0.06);
    assert!((d["gamma"].as_f64().unwrap() - (2.0 - 2.0 * d["H"].as_f64().unwrap())).abs() < 1e-12);
    let dfa_csv = fs::read_to_string(tmp.path().join("dfa/dfa.csv")).unwrap();
    assert!(dfa_csv.starts_with("ell,F\n8,"));

    ok(&["gen", "lognormal", "--seed", "3", "--mu", "8", "--sigma", "1", "--out", "ln"], tmp.path());
    ok(&["fit", "ln/series.csv", "--kind", "lognormal", "--out", "lnfit"], tmp.path());
    let f = json(tmp.path().join("lnfit/fit.json"));
    assert!((f["mu"].as_f64().unwrap() - 8.0).abs() < 0.08);
    assert!((f["sigma"].as_f64().unwrap() - 1.0).abs() < 0.02);

    ok(
        &[
            "gen", "lognormal", "--seed", "5", "--mu", "8.75", "--sigma", "0.8", "--n", "1000000", "--tail-beta", "4.19",
            "--knee", "3.5", "--floor", "1.5", "--out", "tail",
        ],
        tmp.path(),
    );
    ok(&["fit", "tail/series.csv", "--kind", "powerlaw", "--range", "2.2:3.5", "--out", "pl"], tmp.path());
    let p = json(tmp.path().join("pl/fit.json"));
    assert!((p["beta"].as_f64().unwrap() - 4.19).abs() / 4.19 < 0.1);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let runs: &[&[&str]] = &[
        &["gen", "flow", "--seed", "8", "--events", "5000", "--out", "o"],
        &["build", "o/events.csv", "--out", "o2"],
        &["shape", "o/events.csv", "--side", "sell", "--range", "5:40", "--out", "o3"],
        &["impact", "o/events.csv", "--side", "buy", "--omega", "2000", "--out", "o4"],
        &["volumes", "o/events.csv", "--side", "buy", "--delta", "2", "--out", "o5"],
        &["gen", "fgn", "--seed", "1", "--hurst", "0.7", "--n", "4096", "--out", "o6"],
        &["dfa", "o6/series.csv", "--range", "16:256", "--out", "o7"],
        &["fit", "o6/series.csv", "--kind", "acf", "--range", "2:20", "--out", "o8"],
    ];
    for args in runs {
        ok(args, tmp.path());
        let out = tmp.path().join(args[args.len() - 1]);
        let first = dir_contents(&out);
        ok(args, tmp.path());
        assert_eq!(first, dir_contents(&out), "{args:?} is not reproducible");
        assert!(first.contains_key("manifest.json"));
    }
}

#[test]
fn jobs_build_matches_sequential_build() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen", "flow", "--seed", "1", "--events", "3000", "--out", "a"], tmp.path());
    ok(&["gen", "flow", "--seed", "2", "--events", "3000", "--out", "b"], tmp.path());
    fs::copy(tmp.path().join("a/events.csv"), tmp.path().join("first.csv")).unwrap();
    fs::copy(tmp.path().join("b/events.csv"), tmp.path().join("second.csv")).unwrap();
    ok(&["build", "first.csv", "second.csv", "--out", "par", "--jobs", "2"], tmp.path());
    ok(&["build", "first.csv", "--out", "seq"], tmp.path());
    assert_eq!(
        fs::read(tmp.path().join("par/first/snapshots.csv")).unwrap(),
        fs::read(tmp.path().join("seq/snapshots.csv")).unwrap()
    );
    assert!(tmp.path().join("par/second/stream_report.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(lobshape(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(lobshape(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(lobshape(&["shape", "x.csv", "--out", "o"], tmp.path()).status.code(), Some(1));

    fs::write(tmp.path().join("v.csv"), "interval_index,value\n0,1\n1,2\n2,3\n").unwrap();
    assert_eq!(lobshape(&["fit", "v.csv", "--kind", "powerlaw", "--out", "o"], tmp.path()).status.code(), Some(1));
    assert_eq!(lobshape(&["fit", "v.csv", "--kind", "acf", "--out", "o"], tmp.path()).status.code(), Some(1));

    assert_eq!(lobshape(&["build", "missing.csv", "--out", "o"], tmp.path()).status.code(), Some(2));
    fs::write(
        tmp.path().join("backwards.csv"),
        "1,10:00:00.00,B,1,100,10.00\n2,09:59:00.00,B,2,100,10.00\n",
    )
    .unwrap();
    let out = lobshape(&["build", "backwards.csv", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regression"));
}
