//! End-to-end runs of the `ftsmoe` binary against the checked-in fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ftsmoe_cli::chart::{extract_data, ChartData};
use ftsmoe_cli::commands::{BacktestFile, ForecastFile, InspectFile, PrepareSummary};
use ftsmoe_core::data::{load_price_csv, PriceSeries};
use ftsmoe_core::eval::{backtest, PortfolioConfig, Strategy};
use ftsmoe_core::inference::{forecast, ForecastRequest};
use ftsmoe_core::model::count_params;
use ftsmoe_core::train::load_checkpoint;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn ftsmoe(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ftsmoe"));
    cmd.args(args).env_remove("FTSMOE_CONFIG").env_remove("FTSMOE_SEED").env_remove("FTSMOE_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = ftsmoe(args, &[]);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

/// Parses the error record and checks its shape.
fn error_record(o: &Output, code: i32) -> Value {
    assert_eq!(o.code, code, "stdout {} stderr {}", o.stdout, o.stderr);
    let v: Value = serde_json::from_str(o.stderr.trim()).expect("stderr is one JSON record");
    assert_eq!(v["code"], code);
    assert!(v["message"].is_string());
    assert!(v["context"].is_object());
    v
}

const SMALL_MODEL: &str = "
[model]
n_layers = 2
n_heads = 2
d_model = 8
d_ff = 16
n_experts = 4
top_k = 2
d_expert = 4
horizons = [1, 8]
d_text = 8
max_seq_len = 48
";

fn panel_config(dir: &Path, steps: usize) -> PathBuf {
    let text = format!(
        "seed = 5\nout_dir = \"{out}\"\n\n[data]\nprices_dir = \"{prices}\"\n\n[sectors]\nAAA = \"Materials\"\nBBB = \"Materials\"\nCCC = \"Energy\"\n{SMALL_MODEL}\n[train]\nsteps = {steps}\nbatch_size = 2\nmax_seq_len = 48\nlr = 1e-3\nwarmup_steps = 3\nlog_every = 5\n\n[portfolio]\nstrategy = \"positive_prediction\"\n\n[backtest]\ntest_days = 35\ntop_n = 2\n",
        out = dir.join("out").display(),
        prices = fixtures().join("panel").display(),
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn read_chart(path: &Path) -> ChartData {
    extract_data(&fs::read_to_string(path).unwrap()).expect("chart carries its data")
}

fn values(c: &ChartData, series: &str) -> Vec<f64> {
    let s = c.series.iter().find(|s| s.name == series).unwrap();
    s.values.iter().map(|v| v.unwrap()).collect()
}

#[test]
fn forecast_with_zero_steps_is_a_usage_error() {
    let o = ftsmoe(&["forecast", "--symbol", "BHP", "--steps", "0"], &[]);
    let v = error_record(&o, 2);
    assert_eq!(v["context"]["steps"], "0");
}

#[test]
fn usage_data_and_model_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    error_record(&ftsmoe(&["frobnicate"], &[]), 2);
    error_record(&ftsmoe(&["train"], &[]), 2);
    let missing = dir.path().join("missing.toml");
    error_record(&ftsmoe(&["--config", missing.to_str().unwrap(), "prepare"], &[]), 2);

    let cfg = dir.path().join("bad_dir.toml");
    fs::write(&cfg, format!("[data]\nprices_dir = \"{}\"\n", dir.path().join("nowhere").display())).unwrap();
    let v = error_record(&ftsmoe(&["--config", cfg.to_str().unwrap(), "prepare"], &[]), 3);
    assert!(v["context"]["path"].as_str().unwrap().ends_with("nowhere"));

    let ckpt = dir.path().join("junk.ckpt");
    fs::write(&ckpt, b"FTSMOECK\x01\x00garbage").unwrap();
    error_record(&ftsmoe(&["inspect", "--checkpoint", ckpt.to_str().unwrap()], &[]), 4);
}

#[test]
fn prepare_counts_match_a_recount_of_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let fx = fixtures();
    fs::write(
        &cfg,
        format!(
            "out_dir = \"{}\"\n[data]\nprices_dir = \"{}\"\nembeddings_dir = \"{}\"\nsymbols = [\"BHP\"]\n",
            dir.path().join("out").display(),
            fx.display(),
            fx.display()
        ),
    )
    .unwrap();
    ok(&["--config", cfg.to_str().unwrap(), "prepare"]);
    let summary: PrepareSummary =
        serde_json::from_slice(&fs::read(dir.path().join("out/prepare_summary.json")).unwrap()).unwrap();

    // recount straight from the raw files
    let csv = fs::read_to_string(fx.join("BHP.csv")).unwrap();
    let price_dates: BTreeSet<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    let text_dates: BTreeSet<String> = fs::read_to_string(fx.join("BHP.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["date"].as_str().unwrap().to_string())
        .collect();
    let overlap = price_dates.intersection(&text_dates).count();
    let s = &summary.symbols[0];
    assert_eq!(s.steps, price_dates.len());
    assert_eq!(s.text_steps, overlap);
    assert_eq!(s.text_coverage, overlap as f64 / price_dates.len() as f64);
    assert_eq!(summary.seed, 0);
}

#[test]
fn coverage_is_zero_without_text_and_full_with_complete_text() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::write(data.join("X.csv"), "Date,Adj Close\n2024-01-02,10\n2024-01-03,11\n2024-01-04,12\n").unwrap();
    let cfg = dir.path().join("run.toml");
    let write_cfg = |emb: bool| {
        let mut text = format!(
            "out_dir = \"{}\"\n[data]\nprices_dir = \"{}\"\n",
            dir.path().join("out").display(),
            data.display()
        );
        if emb {
            text.push_str(&format!("embeddings_dir = \"{}\"\n", data.display()));
        }
        fs::write(&cfg, text).unwrap();
    };
    write_cfg(false);
    assert!(ok(&["--config", cfg.to_str().unwrap(), "prepare"]).contains("0.0% with text"));

    let lines: String = ["2024-01-02", "2024-01-03", "2024-01-04"]
        .iter()
        .map(|d| format!("{{\"date\":\"{d}\",\"source\":\"news\",\"vector\":[0.5,0.5]}}\n"))
        .collect();
    fs::write(data.join("X.jsonl"), lines).unwrap();
    write_cfg(true);
    assert!(ok(&["--config", cfg.to_str().unwrap(), "prepare"]).contains("100.0% with text"));
}

#[test]
fn panel_pipeline_matches_library_oracles_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = panel_config(dir.path(), 30);
    let cfg = cfg_path.to_str().unwrap();
    let out = dir.path().join("out");
    let inputs_before = files_under(&fixtures().join("panel"));

    let commands: [&[&str]; 5] = [
        &["--config", cfg, "train"],
        &["--config", cfg, "backtest"],
        &["--config", cfg, "forecast", "--symbol", "CCC", "--steps", "10"],
        &["--config", cfg, "inspect"],
        &["--config", cfg, "report"],
    ];
    for args in commands {
        ok(args);
    }
    let first = files_under(&out);

    // inspect agrees with the closed-form count
    let params = load_checkpoint(out.join("model.ckpt")).unwrap();
    let inspect: InspectFile = serde_json::from_slice(&first[&out.join("inspect.json")]).unwrap();
    assert_eq!(inspect.params, count_params(&params.config));
    assert_eq!(inspect.stored_scalars, params.num_scalars());
    assert_eq!(inspect.seed, 5);
    let util = inspect.utilization.unwrap();
    assert_eq!(util.len(), 2);
    assert!(util.iter().all(|u| u.tokens == 3 * 261 && u.counts.iter().sum::<u64>() == 2 * u.tokens));

    // backtest equals a direct run of the evaluation module
    let test_days = 35;
    let sectors = [("AAA", "Materials"), ("BBB", "Materials"), ("CCC", "Energy")];
    let mut prices = Vec::new();
    let mut preds = Vec::new();
    for (sym, sector) in sectors {
        let full = load_price_csv(fixtures().join(format!("panel/{sym}.csv"))).unwrap();
        let w = full.len() - test_days - 1;
        prices.push(PriceSeries {
            symbol: sym.into(),
            sector: sector.into(),
            dates: full.dates[w..].to_vec(),
            values: full.values[w..].to_vec(),
        });
        let p: Vec<f64> = (0..test_days)
            .map(|i| {
                let end = w + i + 1;
                let ctx = &full.values[end.saturating_sub(params.config.max_seq_len)..end];
                forecast(&params, &ForecastRequest::from_values(ctx, 1)).unwrap().values[0]
            })
            .collect();
        preds.push(p);
    }
    let pcfg = PortfolioConfig { strategy: Strategy::PositivePrediction, ..PortfolioConfig::default() };
    let oracle = backtest(&prices, &preds, &pcfg, 2, &[1, 7, 30]).unwrap();
    let file: BacktestFile = serde_json::from_slice(&first[&out.join("backtest.json")]).unwrap();
    assert_eq!(file.report, oracle);
    assert_eq!(file.seed, 5);

    // chart data tables parse back to the report values
    let charts = out.join("charts");
    let returns = read_chart(&charts.join("backtest_returns.svg"));
    assert_eq!(values(&returns, "daily"), oracle.daily_returns.returns);
    assert_eq!(*values(&returns, "cumulative").last().unwrap(), oracle.overall);
    assert_eq!(returns.labels.len(), test_days);
    let attr = read_chart(&charts.join("backtest_attribution.svg"));
    let entries: Vec<_> =
        oracle.per_stock_attribution.gainers.iter().chain(&oracle.per_stock_attribution.losers).collect();
    assert_eq!(values(&attr, "contribution"), entries.iter().map(|e| e.contribution).collect::<Vec<_>>());
    assert_eq!(values(&attr, "proportion"), entries.iter().map(|e| e.proportion).collect::<Vec<_>>());
    let vol = read_chart(&charts.join("backtest_volatility.svg"));
    let sigma: Vec<f64> = oracle.volatility_by_sector.iter().flat_map(|v| v.sigma.clone()).collect();
    let sigma_fc: Vec<f64> = oracle.volatility_by_sector.iter().flat_map(|v| v.sigma_forecast.clone()).collect();
    assert_eq!(values(&vol, "truth"), sigma);
    assert_eq!(values(&vol, "forecast"), sigma_fc);
    let ccc = read_chart(&charts.join("backtest_CCC.svg"));
    assert_eq!(values(&ccc, "forecast"), preds[2]);
    assert_eq!(values(&ccc, "truth"), prices[2].values[1..].to_vec());

    let fc: ForecastFile = serde_json::from_slice(&first[&out.join("forecast_CCC.json")]).unwrap();
    assert_eq!(fc.schedule, vec![8, 1, 1]);
    let fchart = read_chart(&charts.join("forecast_CCC.svg"));
    let tail: Vec<f64> = fchart.series[1].values.iter().flatten().copied().collect();
    assert_eq!(tail, fc.values);

    // same seed, same inputs: byte-identical outputs, untouched inputs
    for args in commands {
        ok(args);
    }
    assert_eq!(files_under(&out), first);
    assert_eq!(files_under(&fixtures().join("panel")), inputs_before);
}

#[test]
fn seed_flag_and_env_reach_the_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = panel_config(dir.path(), 5);
    let cfg = cfg_path.to_str().unwrap();
    let out = dir.path().join("out");
    ok(&["--config", cfg, "--seed", "11", "train"]);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    let log = fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<Value>(l).unwrap()["seed"] == 11));
    let a = fs::read(out.join("model.ckpt")).unwrap();

    let other = dir.path().join("other");
    let o =
        ftsmoe(&["train"], &[("FTSMOE_CONFIG", cfg), ("FTSMOE_SEED", "12"), ("FTSMOE_OUT", other.to_str().unwrap())]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_ne!(fs::read(other.join("model.ckpt")).unwrap(), a);
}

#[test]
fn report_rejects_missing_and_empty_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    error_record(&ftsmoe(&["--out", out.to_str().unwrap(), "report"], &[]), 3);
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    error_record(&ftsmoe(&["--out", out.to_str().unwrap(), "report", empty.to_str().unwrap()], &[]), 3);
}
