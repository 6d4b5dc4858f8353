use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corpus() -> Vec<String> {
    ["arith", "lists", "sets", "bad"]
        .iter()
        .map(|f| fixtures().join(format!("corpus/{f}.lang")).display().to_string())
        .collect()
}

fn results() -> String {
    fixtures().join("results_t10.csv").display().to_string()
}

fn model() -> String {
    fixtures().join("model.json").display().to_string()
}

fn portfolio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_portfolio"))
        .args(args)
        .env_remove("PORTFOLIO_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = portfolio(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_corpus<'a>(head: &[&'a str], docs: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(docs.iter().map(String::as_str)).collect()
}

/// CSV rows keyed by their first column.
fn rows_by_key(text: &str) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let cells = headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect();
            (rec[0].to_string(), cells)
        })
        .collect()
}

#[test]
fn extract_reproduces_hand_counted_features() {
    let docs = corpus();
    let got = ok(&with_corpus(&["extract"], &docs));
    let want = std::fs::read_to_string(fixtures().join("expected/features.csv")).unwrap();
    let (gh, gr) = got.split_once('\n').unwrap();
    let (wh, wr) = want.split_once('\n').unwrap();
    assert_eq!(gh, wh);
    let mut g: Vec<&str> = gr.lines().collect();
    let mut w: Vec<&str> = wr.lines().collect();
    // Output is in task-id order.
    assert!(g.windows(2).all(|p| p[0] < p[1]));
    g.sort();
    w.sort();
    assert_eq!(g, w);
}

#[test]
fn predict_with_fixture_model_matches_hand_rankings() {
    let docs = corpus();
    let m = model();
    let got = rows_by_key(&ok(&with_corpus(&["predict", "--model", &m], &docs)));
    let want = rows_by_key(&std::fs::read_to_string(fixtures().join("expected/rankings.csv")).unwrap());
    assert_eq!(got.len(), want.len());
    for (task, row) in &want {
        assert_eq!(got[task]["ranking"], row["ranking"], "{task}");
    }
}

#[test]
fn train_then_predict_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let docs = corpus();
    let feats = dir.path().join("f.csv").display().to_string();
    ok(&with_corpus(&["extract", "--out", &feats], &docs));
    let r = results();
    let train = |jobs: &str, out: &str| {
        let out = dir.path().join(out).display().to_string();
        ok(&[
            "train", "--features", &feats, "--results", &r, "--timeout", "10", "--trees", "100", "--seed", "42",
            "--jobs", jobs, "--out", &out,
        ]);
        std::fs::read(out).unwrap()
    };
    let a = train("1", "a.json");
    assert_eq!(a, train("4", "b.json"));
    assert_eq!(a, train("1", "c.json"));
    let m = dir.path().join("a.json").display().to_string();
    let p1 = ok(&with_corpus(&["predict", "--model", &m], &docs));
    let p2 = ok(&with_corpus(&["predict", "--jobs", "3", "--model", &m], &docs));
    assert_eq!(p1, p2);
    assert_eq!(p1.lines().count(), 13);
    // A different seed gives a different forest.
    let other = dir.path().join("d.json").display().to_string();
    ok(&["train", "--features", &feats, "--results", &r, "--seed", "43", "--out", &other]);
    assert_ne!(a, std::fs::read(other).unwrap());
}

#[test]
fn prove_by_replay_matches_hand_traces() {
    let docs = corpus();
    let (m, backend) = (model(), format!("replay:{}", results()));
    let got = rows_by_key(&ok(&with_corpus(&["prove", "--model", &m, "--backend", &backend], &docs)));
    let expected: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected/prove_traces.json")).unwrap()).unwrap();
    assert_eq!(got.len(), expected.len());
    for e in &expected {
        let task = e["task"].as_str().unwrap();
        let row = &got[task];
        assert_eq!(row["answer"], e["answer"].as_str().unwrap(), "{task}");
        assert_eq!(row["time_s"].parse::<f64>().unwrap(), e["time"].as_f64().unwrap(), "{task}");
        let calls: Vec<String> = e["calls"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| format!("{}:{}:{}:{}", c[0].as_str().unwrap(), c[1], c[2].as_str().unwrap(), c[3]))
            .collect();
        assert_eq!(row["calls"], calls.join(" "), "{task}");
    }
}

#[test]
fn eval_cross_validated_best_row_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let docs = corpus();
    let (m, r) = (model(), results());
    let out = dir.path().display().to_string();
    ok(&with_corpus(
        &["eval", "--model", &m, "--results", &r, "--folds", "4", "--seed", "7", "--out-dir", &out],
        &docs,
    ));
    let report = rows_by_key(&std::fs::read_to_string(dir.path().join("strategy_report.csv")).unwrap());
    let keys: Vec<&str> = report.keys().map(String::as_str).collect();
    assert_eq!(keys, ["best", "learned", "random", "worst"]);
    let f = |s: &str, c: &str| report[s][c].parse::<f64>().unwrap();
    assert_eq!((f("best", "ndcg"), f("best", "mae")), (1.0, 0.0));
    assert_eq!((f("worst", "ndcg"), f("worst", "mae")), (0.0, 4.0));
    assert_eq!((f("random", "mae") * 100.0).round() / 100.0, 2.63);
    assert!(f("best", "mean_time_s") <= f("learned", "mean_time_s"));
    assert!(f("learned", "mean_time_s") <= f("worst", "mean_time_s"));
    for name in ["curve_best", "curve_random", "curve_worst", "curve_learned", "level_report", "threshold_sweep"] {
        assert!(dir.path().join(format!("{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn eval_level_report_with_fixture_model() {
    let dir = tempfile::tempdir().unwrap();
    let docs = corpus();
    let (m, r) = (model(), results());
    let out = dir.path().display().to_string();
    ok(&with_corpus(&["eval", "--model", &m, "--results", &r, "--out-dir", &out], &docs));
    let levels = rows_by_key(&std::fs::read_to_string(dir.path().join("level_report.csv")).unwrap());
    let p = &levels["portfolio"];
    let count = |l: &str| (p[&format!("{l}_proved")].as_str(), p[&format!("{l}_total")].as_str());
    assert_eq!((count("goal"), count("theory"), count("file")), (("10", "12"), ("4", "6"), ("2", "4")));
    assert_eq!(p["file_avg_time_s"], "15.3");
    let single = &levels["choose_single"];
    assert_eq!((single["theory_proved"].as_str(), single["theory_avg_time_s"].as_str()), ("1", "0.6"));
    assert_eq!(levels.len(), 8 + 6);

    // The curve ends at the number of conclusively answered goals.
    let curve = std::fs::read_to_string(dir.path().join("curve_best.csv")).unwrap();
    assert!(curve.lines().last().unwrap().ends_with(",10"));

    // Raising the threshold never loses goals on this data.
    let sweep = std::fs::read_to_string(dir.path().join("threshold_sweep.csv")).unwrap();
    let proved: Vec<u32> = sweep.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(proved.len(), 12);
    assert!(proved.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*proved.last().unwrap(), 10);
}

#[test]
fn eval_without_features_skips_learned_rows() {
    let dir = tempfile::tempdir().unwrap();
    let r = results();
    let out = dir.path().display().to_string();
    let o = portfolio(&["eval", "--results", &r, "--out-dir", &out]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped"));
    let report = rows_by_key(&std::fs::read_to_string(dir.path().join("strategy_report.csv")).unwrap());
    assert!(!report.contains_key("learned"));
    assert!(!dir.path().join("threshold_sweep.csv").exists());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let docs = corpus();
    let (m, r) = (model(), results());
    let backend = format!("replay:{r}");
    let run_all = |jobs: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        let mut texts = vec![
            ok(&with_corpus(&["extract", "--jobs", jobs], &docs)),
            ok(&with_corpus(&["prove", "--jobs", jobs, "--model", &m, "--backend", &backend], &docs)),
        ];
        ok(&with_corpus(
            &["eval", "--jobs", jobs, "--results", &r, "--folds", "4", "--out-dir", &out],
            &docs,
        ));
        let mut files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        texts.extend(files.iter().map(|f| std::fs::read_to_string(f).unwrap()));
        texts
    };
    assert_eq!(run_all("1"), run_all("4"));
}

#[test]
fn json_format_carries_the_same_rows() {
    let docs = corpus();
    let m = model();
    let csv_out = rows_by_key(&ok(&with_corpus(&["predict", "--model", &m], &docs)));
    let json_out: Vec<Value> =
        serde_json::from_str(&ok(&with_corpus(&["--format", "json", "predict", "--model", &m], &docs))).unwrap();
    assert_eq!(json_out.len(), csv_out.len());
    for item in json_out {
        let task = item["task_id"].as_str().unwrap();
        assert_eq!(item["ranking"].as_str().unwrap(), csv_out[task]["ranking"]);
    }
}

#[test]
fn out_files_are_written_whole_into_new_directories() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested/deeper/features.csv");
    let docs = corpus();
    let t = target.display().to_string();
    assert_eq!(ok(&with_corpus(&["extract", "--out", &t], &docs)), "");
    assert_eq!(std::fs::read_to_string(&target).unwrap().lines().count(), 13);
    let leftovers = std::fs::read_dir(target.parent().unwrap()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn calibrate_reports_every_solver() {
    let r = results();
    let rows = rows_by_key(&ok(&["calibrate", "--results", &r, "--timeout", "10"]));
    assert_eq!(rows.len(), 8);
    assert_eq!(rows["Alt-Ergo-1.01"]["limit_s"], "3.5");
    assert_eq!(rows["Alt-Ergo-1.01"]["useful_answers"], "8");
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let code = |args: &[&str]| portfolio(args).status.code().unwrap();
    let stderr = |args: &[&str]| String::from_utf8(portfolio(args).stderr).unwrap();
    let (m, r) = (model(), results());
    let arith = corpus()[0].clone();

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["train", "--features", "x.csv"]), 1);
    assert_eq!(code(&["train", "--features", "x.csv", "--results", &r, "--trees", "0"]), 1);
    assert!(stderr(&["train", "--features", "x.csv", "--results", &r, "--trees", "0"]).contains("--trees"));
    assert_eq!(code(&["prove", "--model", &m, "--backend", "ftp", &arith]), 1);
    assert!(stderr(&["prove", "--model", &m, "--backend", "ftp", &arith]).contains("--backend"));
    assert_eq!(code(&["eval", "--results", &r, "--folds", "4"]), 1);

    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("solvers.ini");
    std::fs::write(&ini, "[z]\nname = Z3\nversion = 4.4.1\ncommand = true\nvalid_pattern = ^unsat\ninvalid_pattern = ^sat\nunknown_pattern = ^unknown\n").unwrap();
    let ini = ini.display().to_string();
    assert_eq!(code(&["prove", "--model", &m, "--config", &ini, &arith]), 1);
    let rank = |rank: &str| code(&["prove", "--model", &m, "--config", &ini, "--static-ranking", rank, &arith]);
    assert_eq!(rank("Boolector"), 1);
    assert_eq!(rank("CVC4,CVC4"), 1);

    let missing = dir.path().join("missing.lang").display().to_string();
    assert_eq!(code(&["extract", &missing]), 2);
    assert!(stderr(&["extract", &missing]).contains("missing.lang"));
    let bad = dir.path().join("broken.lang");
    std::fs::write(&bad, "(theory T (goal g (and true").unwrap();
    let bad = bad.display().to_string();
    assert_eq!(code(&["extract", &bad]), 2);
    assert!(stderr(&["extract", &bad]).contains("broken.lang:1:"));
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"format_version\": 1").unwrap();
    let garbage = garbage.display().to_string();
    assert_eq!(code(&["predict", "--model", &garbage, &arith]), 2);
    assert!(stderr(&["predict", "--model", &garbage, &arith]).contains("garbage.json"));

    // Feature and result task sets that differ are refused, naming both sides.
    let feats = dir.path().join("f.csv");
    let all = ok(&["extract", &arith]);
    std::fs::write(&feats, all).unwrap();
    let feats = feats.display().to_string();
    let err = stderr(&["train", "--features", &feats, "--results", &r]);
    assert_eq!(code(&["train", "--features", &feats, "--results", &r]), 2);
    assert!(err.contains("only in results") && err.contains("lists.lang:List:nil_app"), "{err}");

    // Environment config is used when no flag is given, and the flag wins over it.
    let env_code = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_portfolio"))
            .args(["prove", "--model", &m, "--static-ranking", "Z3-4.4.1"])
            .args(extra)
            .arg(&arith)
            .env("PORTFOLIO_CONFIG", "/nonexistent/env.ini")
            .output()
            .unwrap()
    };
    let via_env = env_code(&[]);
    assert_eq!(via_env.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&via_env.stderr).contains("env.ini"));
    assert_eq!(env_code(&["--config", &ini]).status.code(), Some(0));
}
