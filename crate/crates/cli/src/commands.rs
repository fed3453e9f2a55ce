//! The six commands. Each writes its outputs under the run's output
//! directory and returns a short human-readable summary.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ftsmoe_core::data::{pack_sequences, AlignedDataset, PriceSeries};
use ftsmoe_core::eval::{backtest, BacktestReport};
use ftsmoe_core::inference::{forecast, ForecastRequest};
use ftsmoe_core::model::{
    count_params, embed_tokens, model_forward, ModelConfig, ModelParams, ParamCount, RoutingStats,
};
use ftsmoe_core::train::{load_checkpoint, normalize_row, save_checkpoint, train, LogRecord, PayloadType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{render, ChartData, ChartKind, ChartSeries};
use crate::config::RunConfig;
use crate::error::{io_error, CliError, CliResult};
use crate::load::{check_text_width, datasets, write_bytes, write_json};

/// Size of the model this architecture was first reported at.
pub const REFERENCE_PARAMS: ParamCount = ParamCount { total: 113_000_000, active: 50_000_000 };

/// Observed values kept in a forecast file for plotting.
const HISTORY_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSummary {
    pub symbol: String,
    pub sector: String,
    pub steps: usize,
    pub text_steps: usize,
    pub text_coverage: f64,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub seed: u64,
    pub symbols: Vec<SymbolSummary>,
    pub total_steps: usize,
    pub text_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub rows: usize,
    pub tokens: usize,
    pub steps: usize,
    pub params: ParamCount,
    pub last: Option<LogRecord>,
}

#[derive(Serialize)]
struct SeededRecord<'a> {
    seed: u64,
    #[serde(flatten)]
    record: &'a LogRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub seed: u64,
    pub symbol: String,
    pub horizon: usize,
    pub schedule: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    /// Tail of the observed series the forecast continues.
    pub history: Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockForecast {
    pub symbol: String,
    /// Trading days of the test window after the first.
    pub dates: Vec<NaiveDate>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestFile {
    pub seed: u64,
    pub report: BacktestReport,
    pub forecasts: Vec<StockForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerUtilization {
    pub layer: usize,
    pub tokens: u64,
    pub counts: Vec<u64>,
    /// `counts / (top_k · tokens)`.
    pub share: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectFile {
    pub seed: u64,
    pub checkpoint: String,
    pub params: ParamCount,
    pub stored_scalars: usize,
    pub reference: ParamCount,
    pub utilization: Option<Vec<LayerUtilization>>,
    pub config: ModelConfig,
}

fn load_model(path: &Path) -> CliResult<ModelParams> {
    if !path.is_file() {
        return Err(CliError::usage("checkpoint not found").with_path(path));
    }
    load_checkpoint(path).map_err(|e| CliError::from(e).with_path(path))
}

fn coverage(steps: usize, text_steps: usize) -> f64 {
    if steps == 0 {
        0.0
    } else {
        text_steps as f64 / steps as f64
    }
}

/// Writes each aligned dataset and a per-symbol summary.
pub fn prepare(cfg: &RunConfig) -> CliResult<String> {
    let sets = datasets(cfg)?;
    let dir = cfg.out_dir.join("prepared");
    let mut symbols = Vec::new();
    for ds in &sets {
        write_json(&dir.join(format!("{}.json", ds.symbol)), ds)?;
        let text_steps = ds.steps.iter().filter(|s| s.text.is_some()).count();
        symbols.push(SymbolSummary {
            symbol: ds.symbol.clone(),
            sector: ds.sector.clone(),
            steps: ds.len(),
            text_steps,
            text_coverage: ds.text_coverage(),
            first: ds.steps[0].date,
            last: ds.steps[ds.len() - 1].date,
        });
    }
    let total_steps = symbols.iter().map(|s| s.steps).sum();
    let total_text = symbols.iter().map(|s| s.text_steps).sum();
    let summary =
        PrepareSummary { seed: cfg.seed, symbols, total_steps, text_coverage: coverage(total_steps, total_text) };
    write_json(&cfg.out_dir.join("prepare_summary.json"), &summary)?;

    let mut out = String::new();
    writeln!(out, "{:<10} {:<16} {:>7} {:>7} {:>9}", "symbol", "sector", "steps", "text", "coverage").unwrap();
    for s in &summary.symbols {
        writeln!(
            out,
            "{:<10} {:<16} {:>7} {:>7} {:>8.1}%",
            s.symbol,
            s.sector,
            s.steps,
            s.text_steps,
            100.0 * s.text_coverage
        )
        .unwrap();
    }
    write!(out, "total {} steps, {:.1}% with text", summary.total_steps, 100.0 * summary.text_coverage).unwrap();
    Ok(out)
}

/// Drops the backtest window from the end of every series.
fn training_split(sets: &[AlignedDataset], test_days: usize) -> CliResult<Vec<AlignedDataset>> {
    sets.iter()
        .map(|ds| {
            if ds.len() <= test_days {
                return Err(CliError::data(format!("{} steps cannot cover a {test_days}-day test window", ds.len()))
                    .with("symbol", &ds.symbol));
            }
            let mut train = ds.clone();
            train.steps.truncate(ds.len() - test_days);
            Ok(train)
        })
        .collect()
}

/// Trains from a fresh seeded init on everything before the test window.
pub fn train_cmd(cfg: &RunConfig) -> CliResult<String> {
    let sets = datasets(cfg)?;
    check_text_width(&sets, cfg.model.d_text)?;
    let train_sets = training_split(&sets, cfg.backtest.test_days)?;
    let rows = pack_sequences(&train_sets, cfg.train.max_seq_len.min(cfg.model.max_seq_len));
    let mut params = ModelParams::init(&cfg.model, cfg.seed)?;
    let log = train(&mut params, &rows, &cfg.train, &cfg.loss)?;

    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent() {
        crate::load::ensure_dir(parent)?;
    }
    save_checkpoint(&params, &ckpt, PayloadType::F64).map_err(|e| CliError::from(e).with_path(&ckpt))?;
    let mut lines = String::new();
    for r in &log.records {
        lines.push_str(&serde_json::to_string(&SeededRecord { seed: cfg.seed, record: r }).expect("record serializes"));
        lines.push('\n');
    }
    write_bytes(&cfg.out_dir.join("train_log.jsonl"), lines.as_bytes())?;
    let summary = TrainSummary {
        seed: cfg.seed,
        rows: rows.len(),
        tokens: rows.iter().map(|r| r.len()).sum(),
        steps: cfg.train.steps,
        params: count_params(&cfg.model),
        last: log.records.last().cloned(),
    };
    write_json(&cfg.out_dir.join("train_summary.json"), &summary)?;

    let mut out = format!("trained {} steps on {} rows ({} tokens)", summary.steps, summary.rows, summary.tokens);
    if let Some(r) = &summary.last {
        write!(out, "\nfinal loss {:.6} (ar {:.6}, aux {:.6})", r.loss, r.ar, r.aux).unwrap();
    }
    write!(out, "\ncheckpoint {}", ckpt.display()).unwrap();
    Ok(out)
}

/// Next `n` dates after `last`: weekdays for a weekday-only history,
/// calendar days otherwise.
pub fn future_dates(history: &[NaiveDate], n: usize) -> Vec<NaiveDate> {
    let weekdays_only = history.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun));
    let mut out = Vec::with_capacity(n);
    let Some(&last) = history.last() else { return out };
    let mut d = last;
    while out.len() < n {
        d = d + Days::new(1);
        if weekdays_only && matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            continue;
        }
        out.push(d);
    }
    out
}

/// The last `max_len` steps of `ds` up to and including index `end`.
fn request(ds: &AlignedDataset, end: usize, max_len: usize, horizon: usize) -> ForecastRequest {
    let start = (end + 1).saturating_sub(max_len);
    let steps = &ds.steps[start..=end];
    ForecastRequest {
        context: steps.iter().map(|s| s.value).collect(),
        texts: steps.iter().map(|s| s.text.clone()).collect(),
        horizon,
    }
}

pub fn forecast_cmd(cfg: &RunConfig, symbol: &str, steps: usize, checkpoint: Option<&Path>) -> CliResult<String> {
    if steps == 0 {
        return Err(CliError::usage("--steps must be at least 1").with("steps", 0));
    }
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.checkpoint_path());
    let params = load_model(&ckpt)?;
    let mut one = cfg.clone();
    one.data.symbols = vec![symbol.to_string()];
    let ds = datasets(&one)?.remove(0);
    check_text_width(std::slice::from_ref(&ds), params.config.d_text)?;

    let req = request(&ds, ds.len() - 1, params.config.max_seq_len, steps);
    let fc = forecast(&params, &req)?;
    let dates: Vec<NaiveDate> = ds.steps.iter().map(|s| s.date).collect();
    let tail = ds.len().saturating_sub(HISTORY_LEN);
    let file = ForecastFile {
        seed: cfg.seed,
        symbol: symbol.to_string(),
        horizon: steps,
        schedule: fc.schedule,
        dates: future_dates(&dates, steps),
        values: fc.values,
        history: Series { dates: dates[tail..].to_vec(), values: ds.values()[tail..].to_vec() },
    };
    let path = cfg.out_dir.join(format!("forecast_{symbol}.json"));
    write_json(&path, &file)?;
    Ok(format!(
        "{symbol}: {steps} steps via heads {:?}, {} to {}\nwrote {}",
        file.schedule,
        file.dates[0],
        file.dates[steps - 1],
        path.display()
    ))
}

/// One-step forecasts for every day of each symbol's test window.
pub fn backtest_forecasts(
    params: &ModelParams,
    sets: &[AlignedDataset],
    test_days: usize,
    workers: usize,
) -> CliResult<Vec<(PriceSeries, Vec<f64>)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        sets.par_iter()
            .map(|ds| {
                if ds.len() < test_days + 1 {
                    return Err(CliError::data(format!(
                        "{} steps cannot cover a {test_days}-day test window",
                        ds.len()
                    ))
                    .with("symbol", &ds.symbol));
                }
                let w = ds.len() - test_days - 1;
                let window = PriceSeries {
                    symbol: ds.symbol.clone(),
                    sector: ds.sector.clone(),
                    dates: ds.steps[w..].iter().map(|s| s.date).collect(),
                    values: ds.steps[w..].iter().map(|s| s.value).collect(),
                };
                let preds = (0..test_days)
                    .map(|i| Ok(forecast(params, &request(ds, w + i, params.config.max_seq_len, 1))?.values[0]))
                    .collect::<CliResult<Vec<f64>>>()?;
                Ok((window, preds))
            })
            .collect()
    })
}

pub fn backtest_cmd(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<String> {
    let test_days = cfg.backtest.test_days;
    if test_days < 2 {
        return Err(CliError::usage("backtest.test_days must be at least 2"));
    }
    if let Some(&p) = cfg.backtest.periods.iter().find(|&&p| p >= test_days) {
        return Err(CliError::usage(format!("volatility period {p} needs more than {p} test days"))
            .with("test_days", test_days));
    }
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.checkpoint_path());
    let params = load_model(&ckpt)?;
    let sets = datasets(cfg)?;
    check_text_width(&sets, params.config.d_text)?;
    let runs = backtest_forecasts(&params, &sets, test_days, cfg.data.workers)?;
    let (prices, preds): (Vec<PriceSeries>, Vec<Vec<f64>>) = runs.into_iter().unzip();
    let report = backtest(&prices, &preds, &cfg.portfolio, cfg.backtest.top_n, &cfg.backtest.periods)?;
    let forecasts = prices
        .iter()
        .zip(&preds)
        .map(|(p, f)| StockForecast {
            symbol: p.symbol.clone(),
            dates: p.dates[1..].to_vec(),
            truth: p.values[1..].to_vec(),
            predicted: f.clone(),
        })
        .collect();
    let file = BacktestFile { seed: cfg.seed, report, forecasts };
    let path = cfg.out_dir.join("backtest.json");
    write_json(&path, &file)?;

    let r = &file.report;
    let sharpe = r.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
    Ok(format!(
        "{:?} {} to {}: overall {:.6}, std {:.6}, sharpe {sharpe}\nwrote {}",
        r.strategy,
        r.start,
        r.end,
        r.overall,
        r.std_dev,
        path.display()
    ))
}

/// Routes every packed row through the model and tallies expert use.
pub fn utilization(params: &ModelParams, sets: &[AlignedDataset]) -> CliResult<Vec<LayerUtilization>> {
    let c = &params.config;
    let mut stats = vec![RoutingStats::new(c.n_experts); c.n_layers];
    for row in pack_sequences(sets, c.max_seq_len) {
        let row = normalize_row(&row);
        let fused = embed_tokens(&row, params)?;
        model_forward(&fused, &row.boundaries, params, &mut stats)?;
    }
    Ok(stats
        .iter()
        .enumerate()
        .map(|(layer, s)| {
            let denom = (c.top_k as u64 * s.tokens).max(1) as f64;
            LayerUtilization {
                layer,
                tokens: s.tokens,
                counts: s.select_counts.clone(),
                share: s.select_counts.iter().map(|&n| n as f64 / denom).collect(),
            }
        })
        .collect())
}

fn human_count(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{:.2}M", n as f64 / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}K", n as f64 / 1e3)
    } else {
        n.to_string()
    }
}

pub fn inspect_cmd(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<String> {
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.checkpoint_path());
    let params = load_model(&ckpt)?;
    let utilization = match cfg.data.prices_dir {
        Some(_) => {
            let sets = datasets(cfg)?;
            check_text_width(&sets, params.config.d_text)?;
            Some(utilization(&params, &sets)?)
        }
        None => None,
    };
    let counts = count_params(&params.config);
    let file = InspectFile {
        seed: cfg.seed,
        checkpoint: ckpt.display().to_string(),
        params: counts,
        stored_scalars: params.num_scalars(),
        reference: REFERENCE_PARAMS,
        utilization,
        config: params.config.clone(),
    };
    write_json(&cfg.out_dir.join("inspect.json"), &file)?;

    let mut out = String::new();
    writeln!(out, "checkpoint {}", file.checkpoint).unwrap();
    writeln!(out, "{:<10} {:>14} {:>14}", "", "this model", "reference").unwrap();
    writeln!(out, "{:<10} {:>14} {:>14}", "total", counts.total, human_count(REFERENCE_PARAMS.total)).unwrap();
    writeln!(out, "{:<10} {:>14} {:>14}", "active", counts.active, human_count(REFERENCE_PARAMS.active)).unwrap();
    writeln!(out, "stored scalars {}", file.stored_scalars).unwrap();
    if let Some(util) = &file.utilization {
        writeln!(out, "expert utilization (share of top-{} selections)", params.config.top_k).unwrap();
        let header: String = (0..params.config.n_experts).map(|e| format!(" {:>7}", format!("e{e}"))).collect();
        writeln!(out, "{:<6} {:>8}{header}", "layer", "tokens").unwrap();
        for u in util {
            let cells: String = u.share.iter().map(|s| format!(" {s:>7.3}")).collect();
            writeln!(out, "{:<6} {:>8}{cells}", u.layer, u.tokens).unwrap();
        }
    }
    writeln!(out, "config").unwrap();
    let echo = toml::to_string(&params.config).expect("model config serializes");
    for line in echo.lines() {
        writeln!(out, "  {line}").unwrap();
    }
    Ok(out.trim_end().to_string())
}

fn labels(dates: &[NaiveDate]) -> Vec<String> {
    dates.iter().map(|d| d.to_string()).collect()
}

fn series(name: &str, values: &[f64]) -> ChartSeries {
    ChartSeries { name: name.to_string(), values: values.iter().map(|&v| Some(v)).collect() }
}

/// Chart data for a backtest file, keyed by file-name suffix.
pub fn backtest_charts(file: &BacktestFile) -> Vec<(String, ChartData)> {
    let r = &file.report;
    let seed = file.seed;
    let mut running = 0.0;
    let cumulative: Vec<f64> = r
        .daily_returns
        .returns
        .iter()
        .map(|x| {
            running += x;
            running
        })
        .collect();
    let mut charts = vec![(
        "returns".to_string(),
        ChartData {
            title: format!("{:?} daily and cumulative return (seed {seed})", r.strategy),
            kind: ChartKind::Line,
            labels: labels(&r.daily_returns.dates),
            series: vec![series("daily", &r.daily_returns.returns), series("cumulative", &cumulative)],
        },
    )];

    let entries: Vec<_> = r.per_stock_attribution.gainers.iter().chain(&r.per_stock_attribution.losers).collect();
    charts.push((
        "attribution".to_string(),
        ChartData {
            title: format!("Per-stock contribution, top gainers and losers (seed {seed})"),
            kind: ChartKind::Bar,
            labels: entries.iter().map(|e| e.symbol.clone()).collect(),
            series: vec![
                series("contribution", &entries.iter().map(|e| e.contribution).collect::<Vec<_>>()),
                series("proportion", &entries.iter().map(|e| e.proportion).collect::<Vec<_>>()),
            ],
        },
    ));

    let mut vol_labels = Vec::new();
    let (mut truth, mut fc) = (Vec::new(), Vec::new());
    for v in &r.volatility_by_sector {
        for (k, p) in v.periods.iter().enumerate() {
            vol_labels.push(format!("{} {p}d", v.sector));
            truth.push(v.sigma[k]);
            fc.push(v.sigma_forecast[k]);
        }
    }
    charts.push((
        "volatility".to_string(),
        ChartData {
            title: format!("Volatility by sector and period (seed {seed})"),
            kind: ChartKind::Bar,
            labels: vol_labels,
            series: vec![series("truth", &truth), series("forecast", &fc)],
        },
    ));

    for f in &file.forecasts {
        charts.push((
            f.symbol.clone(),
            ChartData {
                title: format!("{} one-step forecast vs truth (seed {seed})", f.symbol),
                kind: ChartKind::Line,
                labels: labels(&f.dates),
                series: vec![series("truth", &f.truth), series("forecast", &f.predicted)],
            },
        ));
    }
    charts
}

pub fn forecast_chart(file: &ForecastFile) -> ChartData {
    let h = file.history.values.len();
    let n = file.values.len();
    let mut all = file.history.dates.clone();
    all.extend(&file.dates);
    let history = file.history.values.iter().map(|&v| Some(v)).chain(std::iter::repeat(None).take(n)).collect();
    let predicted = std::iter::repeat(None).take(h).chain(file.values.iter().map(|&v| Some(v))).collect();
    ChartData {
        title: format!("{} {}-step forecast (seed {})", file.symbol, file.horizon, file.seed),
        kind: ChartKind::Line,
        labels: labels(&all),
        series: vec![
            ChartSeries { name: "history".into(), values: history },
            ChartSeries { name: "forecast".into(), values: predicted },
        ],
    }
}

/// Report inputs: explicit paths, or the backtest and forecast files in
/// the output directory.
fn report_inputs(cfg: &RunConfig, inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    if !inputs.is_empty() {
        return Ok(inputs.to_vec());
    }
    let mut found = BTreeSet::new();
    if let Ok(entries) = fs::read_dir(&cfg.out_dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == "backtest.json" || (name.starts_with("forecast_") && name.ends_with(".json")) {
                found.insert(entry.path());
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Renders charts for each input. Returns the files written.
pub fn report_cmd(cfg: &RunConfig, inputs: &[PathBuf]) -> CliResult<String> {
    let inputs = report_inputs(cfg, inputs)?;
    if inputs.is_empty() {
        return Err(CliError::data("no report inputs").with("out_dir", cfg.out_dir.display()));
    }
    let dir = cfg.out_dir.join("charts");
    let mut written = Vec::new();
    for path in &inputs {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        if text.trim().is_empty() {
            return Err(CliError::data("report input is empty").with_path(path));
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::data(format!("invalid JSON: {e}")).with_path(path))?;
        let charts = if value.get("report").is_some() {
            let file: BacktestFile = serde_json::from_value(value)
                .map_err(|e| CliError::data(format!("invalid backtest file: {e}")).with_path(path))?;
            backtest_charts(&file).into_iter().map(|(suffix, c)| (format!("{stem}_{suffix}"), c)).collect()
        } else if value.get("schedule").is_some() {
            let file: ForecastFile = serde_json::from_value(value)
                .map_err(|e| CliError::data(format!("invalid forecast file: {e}")).with_path(path))?;
            vec![(stem, forecast_chart(&file))]
        } else {
            return Err(CliError::data("not a backtest or forecast file").with_path(path));
        };
        for (name, chart) in charts {
            let out = dir.join(format!("{name}.svg"));
            write_bytes(&out, render(&chart).as_bytes())?;
            written.push(out.display().to_string());
        }
    }
    Ok(format!("wrote {} charts\n{}", written.len(), written.join("\n")))
}
