//! Loading and aligning every configured symbol.

use std::fs;
use std::path::{Path, PathBuf};

use ftsmoe_core::data::{align, load_embedding_jsonl, load_price_csv, AlignedDataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_error, CliError, CliResult};

/// Symbols from the config, or every `*.csv` stem in the prices directory
/// in name order.
pub fn symbols(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let dir = cfg.prices_dir()?;
    if !cfg.data.symbols.is_empty() {
        return Ok(cfg.data.symbols.clone());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem() {
                out.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::data("no price files found").with_path(dir));
    }
    Ok(out)
}

fn load_one(cfg: &RunConfig, prices_dir: &Path, symbol: &str) -> CliResult<AlignedDataset> {
    let price_path = prices_dir.join(format!("{symbol}.csv"));
    if !price_path.is_file() {
        return Err(CliError::data("price file not found").with_path(&price_path).with("symbol", symbol));
    }
    let prices = load_price_csv(&price_path)
        .map_err(|e| CliError::from(e).with_path(&price_path).with("symbol", symbol))?
        .with_sector(cfg.sector_of(symbol));
    let texts = match &cfg.data.embeddings_dir {
        Some(dir) => {
            let p: PathBuf = dir.join(format!("{symbol}.jsonl"));
            if p.is_file() {
                load_embedding_jsonl(&p).map_err(|e| CliError::from(e).with_path(&p).with("symbol", symbol))?
            } else {
                Vec::new()
            }
        }
        None => Vec::new(),
    };
    Ok(align(&prices, &texts, cfg.data.missing_text))
}

/// Loads and aligns every symbol on a bounded worker pool; results keep
/// symbol order.
pub fn datasets(cfg: &RunConfig) -> CliResult<Vec<AlignedDataset>> {
    let dir = cfg.prices_dir()?;
    let names = symbols(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.data.workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| names.par_iter().map(|s| load_one(cfg, dir, s)).collect())
}

/// Fails when any text vector's width differs from the model's `d_text`.
pub fn check_text_width(datasets: &[AlignedDataset], d_text: usize) -> CliResult<()> {
    for ds in datasets {
        if let Some(step) = ds.steps.iter().find(|s| s.text.as_ref().is_some_and(|t| t.len() != d_text)) {
            let found = step.text.as_ref().map_or(0, Vec::len);
            return Err(CliError::data(format!("text vectors have width {found}, the model expects {d_text}"))
                .with("symbol", &ds.symbol)
                .with("date", step.date));
        }
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
