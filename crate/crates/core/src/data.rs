//! Price and text-embedding ingestion, date alignment, context normalization
//! and sequence packing.
//!
//! Price files are CSV with a header row; `Date` and `Adj Close` are
//! mandatory and every other column is ignored. Embedding files are JSON
//! lines, one `{"date":"YYYY-MM-DD","source":"news"|"tweet","vector":[..]}`
//! object per line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unparseable date `{value}` at line {line}")]
    UnparseableDate { line: usize, value: String },
    #[error("non-finite value `{value}` at line {line}")]
    NonFiniteValue { line: usize, value: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("series is empty")]
    EmptySeries,
    #[error("vector width {found} at line {line} does not match stream width {expected}")]
    WidthMismatch { line: usize, expected: usize, found: usize },
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("channel {channel} does not share the date index of channel 0")]
    DateIndexMismatch { channel: usize },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Accepts ISO-8601 (`2020-01-02`) and slash dates (`2020/1/2`).
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").or_else(|_| NaiveDate::parse_from_str(raw, "%Y/%m/%d")).ok()
}

/// One symbol's daily adjusted-close series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub symbol: String,
    pub sector: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from unordered rows; rows are sorted by date.
    pub fn from_rows(
        symbol: impl Into<String>,
        sector: impl Into<String>,
        mut rows: Vec<(NaiveDate, f64)>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(DataError::EmptySeries);
        }
        rows.sort_by_key(|(d, _)| *d);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DataError::DuplicateDate(w[0].0));
            }
        }
        if let Some((i, (_, v))) = rows.iter().enumerate().find(|(_, (_, v))| !v.is_finite()) {
            return Err(DataError::NonFiniteValue { line: i + 2, value: v.to_string() });
        }
        let (dates, values) = rows.into_iter().unzip();
        Ok(Self { symbol: symbol.into(), sector: sector.into(), dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Calendar days covered, first and last date inclusive.
    pub fn total_days(&self) -> i64 {
        match (self.dates.first(), self.dates.last()) {
            (Some(first), Some(last)) => (*last - *first).num_days() + 1,
            _ => 0,
        }
    }

    pub fn with_sector(mut self, sector: impl Into<String>) -> Self {
        self.sector = sector.into();
        self
    }
}

/// Loads a price CSV. The symbol is taken from the file stem.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    let symbol = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_price_csv(file, symbol)
}

pub fn read_price_csv<R: std::io::Read>(reader: R, symbol: impl Into<String>) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let date_col = column("Date")?;
    let close_col = column("Adj Close")?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = i + 2;
        let raw_date = record.get(date_col).unwrap_or("");
        let date =
            parse_date(raw_date).ok_or_else(|| DataError::UnparseableDate { line, value: raw_date.to_string() })?;
        let raw_value = record.get(close_col).unwrap_or("");
        let value = raw_value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DataError::NonFiniteValue { line, value: raw_value.to_string() })?;
        rows.push((date, value));
    }
    PriceSeries::from_rows(symbol, String::new(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    News,
    Tweet,
}

/// One dated embedding vector distilled from news or tweets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbeddingRecord {
    #[serde(with = "iso_date")]
    pub date: NaiveDate,
    pub source: TextSource,
    pub vector: Vec<f64>,
}

mod iso_date {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.format("%Y-%m-%d").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_date(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad date `{raw}`")))
    }
}

/// Loads an embedding JSONL stream. Blank lines are skipped; an empty file
/// is a valid text-free stream.
pub fn load_embedding_jsonl(path: impl AsRef<Path>) -> Result<Vec<TextEmbeddingRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_embedding_jsonl(BufReader::new(file))
}

pub fn read_embedding_jsonl<R: BufRead>(reader: R) -> Result<Vec<TextEmbeddingRecord>> {
    let mut out: Vec<TextEmbeddingRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DataError::MalformedLine { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextEmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| DataError::MalformedLine { line: line_no, message: e.to_string() })?;
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(DataError::MalformedLine { line: line_no, message: "non-finite vector component".into() });
        }
        if let Some(first) = out.first() {
            if first.vector.len() != rec.vector.len() {
                return Err(DataError::WidthMismatch {
                    line: line_no,
                    expected: first.vector.len(),
                    found: rec.vector.len(),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Width of an embedding stream, `None` when the stream is empty.
pub fn text_width(records: &[TextEmbeddingRecord]) -> Option<usize> {
    records.first().map(|r| r.vector.len())
}

pub fn group_by_date(records: &[TextEmbeddingRecord]) -> BTreeMap<NaiveDate, Vec<&TextEmbeddingRecord>> {
    let mut map: BTreeMap<NaiveDate, Vec<&TextEmbeddingRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.date).or_default().push(r);
    }
    map
}

/// What a step without text carries after alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingTextPolicy {
    /// The step has no text; fusion passes the time embedding through.
    #[default]
    Bypass,
    /// The step carries an all-zero vector, so fusion averages with zero.
    /// Only applies when the stream width is known.
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { mean: 0.0, std: 1.0 };

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedStep {
    #[serde(with = "iso_date")]
    pub date: NaiveDate,
    pub value: f64,
    pub text: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    pub symbol: String,
    pub sector: String,
    pub steps: Vec<AlignedStep>,
    pub norm_stats: Option<NormStats>,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value).collect()
    }

    pub fn texts(&self) -> Vec<Option<Vec<f64>>> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    /// Fraction of steps carrying a text vector.
    pub fn text_coverage(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.text.is_some()).count() as f64 / self.steps.len() as f64
    }
}

/// Element-wise mean of same-date vectors. Inputs are put in a canonical
/// order first so the result is bitwise independent of input order.
fn mean_vector(records: &[&TextEmbeddingRecord]) -> Vec<f64> {
    let mut sorted: Vec<&TextEmbeddingRecord> = records.to_vec();
    sorted.sort_by(|a, b| {
        a.source.cmp(&b.source).then_with(|| {
            a.vector
                .iter()
                .zip(&b.vector)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let width = sorted[0].vector.len();
    let mut acc = vec![0.0; width];
    for r in &sorted {
        for (a, v) in acc.iter_mut().zip(&r.vector) {
            *a += v;
        }
    }
    let n = sorted.len() as f64;
    acc.into_iter().map(|a| a / n).collect()
}

/// Keys text onto the price calendar. Text on non-trading dates is dropped.
pub fn align(price: &PriceSeries, texts: &[TextEmbeddingRecord], policy: MissingTextPolicy) -> AlignedDataset {
    let by_date = group_by_date(texts);
    let width = text_width(texts);
    let steps = price
        .dates
        .iter()
        .zip(&price.values)
        .map(|(&date, &value)| {
            let text = match by_date.get(&date) {
                Some(recs) => Some(mean_vector(recs)),
                None => match (policy, width) {
                    (MissingTextPolicy::ZeroFill, Some(w)) => Some(vec![0.0; w]),
                    _ => None,
                },
            };
            AlignedStep { date, value, text }
        })
        .collect();
    AlignedDataset { symbol: price.symbol.clone(), sector: price.sector.clone(), steps, norm_stats: None }
}

/// Splits a multivariate panel into its univariate channels.
pub fn channel_split(multivariate: &[PriceSeries]) -> Result<Vec<PriceSeries>> {
    if let Some(first) = multivariate.first() {
        for (channel, s) in multivariate.iter().enumerate().skip(1) {
            if s.dates != first.dates {
                return Err(DataError::DateIndexMismatch { channel });
            }
        }
    }
    Ok(multivariate.to_vec())
}

/// Z-scores a context window with its sample mean and sample (n − 1)
/// standard deviation. Zero-spread windows (including length 1) map to all
/// zeros with `std` recorded as 1.
pub fn normalize_context(window: &[f64]) -> (Vec<f64>, NormStats) {
    let stats = context_stats(window);
    (window.iter().map(|&x| stats.normalize(x)).collect(), stats)
}

pub fn context_stats(window: &[f64]) -> NormStats {
    let n = window.len();
    if n == 0 {
        return NormStats::IDENTITY;
    }
    let mean = window.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return NormStats { mean, std: 1.0 };
    }
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std > 0.0 && std.is_finite() {
        NormStats { mean, std }
    } else {
        NormStats { mean, std: 1.0 }
    }
}

pub fn denormalize(normalized: &[f64], stats: NormStats) -> Vec<f64> {
    normalized.iter().map(|&z| stats.denormalize(z)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedToken {
    pub value: f64,
    pub text: Option<Vec<f64>>,
}

/// Where a packed segment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOrigin {
    pub dataset: usize,
    pub offset: usize,
    pub len: usize,
}

/// One packed row: segments from one or more series laid end to end.
/// Attention never crosses a boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedBatch {
    pub tokens: Vec<PackedToken>,
    pub boundaries: Vec<usize>,
    pub origins: Vec<SegmentOrigin>,
    pub max_len: usize,
}

impl PackedBatch {
    /// A row holding a single segment.
    pub fn single(tokens: Vec<PackedToken>) -> Self {
        let len = tokens.len();
        Self {
            tokens,
            boundaries: vec![0],
            origins: vec![SegmentOrigin { dataset: 0, offset: 0, len }],
            max_len: len.max(1),
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        Self::single(values.iter().map(|&value| PackedToken { value, text: None }).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segments(&self) -> Vec<Range<usize>> {
        segment_ranges(&self.boundaries, self.tokens.len())
    }
}

/// Turns start offsets into half-open ranges covering `0..len`.
pub fn segment_ranges(boundaries: &[usize], len: usize) -> Vec<Range<usize>> {
    let mut starts: Vec<usize> = boundaries.iter().copied().filter(|&b| b < len).collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    starts.dedup();
    let mut out = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(len);
        if e > s {
            out.push(s..e);
        }
    }
    out
}

/// Cuts every series into chunks of at most `max_len` and places the chunks
/// first-fit, in input order, into rows of capacity `max_len`.
pub fn pack_sequences(datasets: &[AlignedDataset], max_len: usize) -> Vec<PackedBatch> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut rows: Vec<PackedBatch> = Vec::new();
    for (di, ds) in datasets.iter().enumerate() {
        let mut offset = 0;
        while offset < ds.steps.len() {
            let len = (ds.steps.len() - offset).min(max_len);
            let chunk =
                ds.steps[offset..offset + len].iter().map(|s| PackedToken { value: s.value, text: s.text.clone() });
            let origin = SegmentOrigin { dataset: di, offset, len };
            let slot = rows.iter_mut().find(|r| r.tokens.len() + len <= max_len);
            let row = match slot {
                Some(row) => row,
                None => {
                    rows.push(PackedBatch { tokens: Vec::new(), boundaries: Vec::new(), origins: Vec::new(), max_len });
                    rows.last_mut().expect("just pushed")
                }
            };
            row.boundaries.push(row.tokens.len());
            row.origins.push(origin);
            row.tokens.extend(chunk);
            offset += len;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn series(n: usize) -> PriceSeries {
        let rows = (0..n).map(|i| (d(2020, 1, 1) + chrono::Days::new(i as u64), i as f64 + 1.0)).collect();
        PriceSeries::from_rows("T", "", rows).unwrap()
    }

    fn dataset(n: usize) -> AlignedDataset {
        align(&series(n), &[], MissingTextPolicy::Bypass)
    }

    #[test]
    fn csv_three_rows() {
        let csv = "Date,Open,Adj Close\n2020-01-02,0,1.0\n2020-01-03,0,2.0\n2020-01-04,0,3.0\n";
        let s = read_price_csv(csv.as_bytes(), "X").unwrap();
        assert_eq!(s.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn csv_out_of_order_rows_are_sorted() {
        let sorted = "Date,Adj Close\n2020-01-02,1\n2020-01-03,2\n2020-01-04,3\n";
        let shuffled = "Date,Adj Close\n2020-01-04,3\n2020-01-02,1\n2020-01-03,2\n";
        assert_eq!(read_price_csv(sorted.as_bytes(), "X").unwrap(), read_price_csv(shuffled.as_bytes(), "X").unwrap());
    }

    #[test]
    fn csv_slash_dates() {
        let s = read_price_csv("Date,Adj Close\n2009/10/21,1.5\n".as_bytes(), "X").unwrap();
        assert_eq!(s.dates, vec![d(2009, 10, 21)]);
    }

    #[test]
    fn csv_errors() {
        let missing = read_price_csv("Date,Close\n2020-01-02,1\n".as_bytes(), "X");
        assert!(matches!(missing, Err(DataError::MissingColumn(c)) if c == "Adj Close"));
        let bad_date = read_price_csv("Date,Adj Close\nnope,1\n".as_bytes(), "X");
        assert!(matches!(bad_date, Err(DataError::UnparseableDate { line: 2, .. })));
        let nan = read_price_csv("Date,Adj Close\n2020-01-02,1\n2020-01-03,NaN\n".as_bytes(), "X");
        assert!(matches!(nan, Err(DataError::NonFiniteValue { line: 3, .. })));
        let null = read_price_csv("Date,Adj Close\n2020-01-02,null\n".as_bytes(), "X");
        assert!(matches!(null, Err(DataError::NonFiniteValue { .. })));
        let dup = read_price_csv("Date,Adj Close\n2020-01-02,1\n2020-01-02,2\n".as_bytes(), "X");
        assert!(matches!(dup, Err(DataError::DuplicateDate(_))));
        let empty = read_price_csv("Date,Adj Close\n".as_bytes(), "X");
        assert!(matches!(empty, Err(DataError::EmptySeries)));
    }

    #[test]
    fn jsonl_widths() {
        let two = "{\"date\":\"2020-01-02\",\"source\":\"news\",\"vector\":[1,2,3,4]}\n\
                   {\"date\":\"2020-01-03\",\"source\":\"tweet\",\"vector\":[1,2,3,4]}\n";
        let recs = read_embedding_jsonl(two.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(text_width(&recs), Some(4));
        assert_eq!(recs[1].source, TextSource::Tweet);

        assert!(read_embedding_jsonl("".as_bytes()).unwrap().is_empty());

        let bad = "{\"date\":\"2020-01-02\",\"source\":\"news\",\"vector\":[1,2,3,4]}\n\
                   {\"date\":\"2020-01-03\",\"source\":\"news\",\"vector\":[1,2,3]}\n";
        assert!(matches!(
            read_embedding_jsonl(bad.as_bytes()),
            Err(DataError::WidthMismatch { line: 2, expected: 4, found: 3 })
        ));
        let malformed = "{\"date\":\"2020-01-02\",\"source\":\"news\",\"vector\":[1]}\n{oops\n";
        assert!(matches!(read_embedding_jsonl(malformed.as_bytes()), Err(DataError::MalformedLine { line: 2, .. })));
        let bad_source = "{\"date\":\"2020-01-02\",\"source\":\"blog\",\"vector\":[1]}\n";
        assert!(matches!(read_embedding_jsonl(bad_source.as_bytes()), Err(DataError::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn align_sparse_text() {
        let p = series(3);
        let texts = vec![TextEmbeddingRecord { date: p.dates[1], source: TextSource::News, vector: vec![1.0, 2.0] }];
        let a = align(&p, &texts, MissingTextPolicy::Bypass);
        assert_eq!(a.steps.len(), 3);
        assert_eq!(a.steps[0].text, None);
        assert_eq!(a.steps[1].text, Some(vec![1.0, 2.0]));
        assert_eq!(a.steps[2].text, None);

        let z = align(&p, &texts, MissingTextPolicy::ZeroFill);
        assert_eq!(z.steps[0].text, Some(vec![0.0, 0.0]));
        // width unknown without any record
        assert_eq!(align(&p, &[], MissingTextPolicy::ZeroFill).steps[0].text, None);
    }

    #[test]
    fn align_averages_same_date_and_drops_non_trading_days() {
        let p = series(2);
        let texts = vec![
            TextEmbeddingRecord { date: p.dates[0], source: TextSource::News, vector: vec![1.0, 1.0] },
            TextEmbeddingRecord { date: p.dates[0], source: TextSource::Tweet, vector: vec![3.0, 3.0] },
            TextEmbeddingRecord { date: d(1999, 1, 1), source: TextSource::News, vector: vec![9.0, 9.0] },
        ];
        let a = align(&p, &texts, MissingTextPolicy::Bypass);
        assert_eq!(a.steps[0].text, Some(vec![2.0, 2.0]));
        assert_eq!(a.steps.len(), 2);
    }

    #[test]
    fn channel_split_cases() {
        let a = series(4);
        assert_eq!(channel_split(std::slice::from_ref(&a)).unwrap(), vec![a.clone()]);
        let three = vec![a.clone(), a.clone(), a.clone()];
        assert_eq!(channel_split(&three).unwrap().len(), 3);
        let short = series(3);
        assert!(matches!(channel_split(&[a, short]), Err(DataError::DateIndexMismatch { channel: 1 })));
    }

    #[test]
    fn normalize_constant_window() {
        let (z, st) = normalize_context(&[5.0, 5.0, 5.0]);
        assert_eq!(z, vec![0.0, 0.0, 0.0]);
        assert_eq!(st, NormStats { mean: 5.0, std: 1.0 });
        let (z1, st1) = normalize_context(&[7.0]);
        assert_eq!(z1, vec![0.0]);
        assert_eq!(st1.std, 1.0);
    }

    #[test]
    fn normalize_two_points_uses_sample_std() {
        // independent oracle: mean 2, sample variance ((1-2)^2 + (3-2)^2) / 1 = 2
        let (z, st) = normalize_context(&[1.0, 3.0]);
        assert_eq!(st.mean, 2.0);
        assert!((st.std - 2f64.sqrt()).abs() < 1e-15);
        assert!((z[0] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((z[1] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pack_two_halves_into_one_row() {
        let rows = pack_sequences(&[dataset(500), dataset(500)], 1024);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].tokens.len(), 1000);
        assert_eq!(rows[0].boundaries, vec![0, 500]);
    }

    #[test]
    fn pack_splits_long_series() {
        let rows = pack_sequences(&[dataset(1500)], 1024);
        let lens: Vec<usize> = rows.iter().map(|r| r.tokens.len()).collect();
        assert_eq!(lens, vec![1024, 476]);
        assert_eq!(rows[1].origins[0].offset, 1024);
    }

    #[test]
    fn segment_ranges_cover_row() {
        assert_eq!(segment_ranges(&[0, 3, 7], 10), vec![0..3, 3..7, 7..10]);
        assert_eq!(segment_ranges(&[4], 6), vec![0..4, 4..6]);
        assert_eq!(segment_ranges(&[], 2), vec![0..2]);
    }
}
