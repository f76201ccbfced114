//! Option-chain snapshots: loading, validation, derived quantities, and
//! train/test partitioning.
//!
//! The on-disk format is a CSV with header `strike,maturity_days,last_price`
//! plus a side-car JSON meta file `{"spot": .., "rate": .., "as_of": ".."}`.
//! Maturities are converted to year fractions with ACT/365.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

pub const DAYS_PER_YEAR: f64 = 365.0;

/// Minimum chain size accepted by `split_train_test`.
pub const MIN_QUOTES_FOR_SPLIT: usize = 5;

// Substream tag separating split shuffles from other consumers of a seed.
const SPLIT_STREAM: u64 = 0x53504C49;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("missing column '{0}' in chain CSV header")]
    MissingColumn(String),
    #[error("non-positive strike on row {row}: {value}")]
    NonPositiveStrike { row: usize, value: f64 },
    #[error("negative last price on row {row}: {value}")]
    NegativePrice { row: usize, value: f64 },
    #[error("non-positive maturity on row {row}: {value} days")]
    NonPositiveMaturity { row: usize, value: f64 },
    #[error("duplicate (maturity, strike) quote on row {row}")]
    DuplicateQuote { row: usize },
    #[error("chain contains no quotes")]
    EmptyChain,
    #[error("unparseable number in column '{column}' on row {row}")]
    InvalidNumber { row: usize, column: String },
    #[error("chain has {n} quotes; at least {min} required")]
    TooFewQuotes { n: usize, min: usize },
    #[error("test fraction {0} outside (0, 1)")]
    BadTestFraction(f64),
    #[error("spot and strike must be positive (got spot={spot}, strike={strike})")]
    DomainError { spot: f64, strike: f64 },
    #[error("invalid market state: {0}")]
    BadState(String),
    #[error("meta file {path}: {reason}")]
    BadMeta { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Underlying snapshot: spot level, risk-free rate, and the as-of date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub spot: f64,
    pub rate: f64,
    pub as_of: String,
}

impl MarketState {
    pub fn new(spot: f64, rate: f64, as_of: impl Into<String>) -> Result<Self, MarketDataError> {
        let as_of = as_of.into();
        if !(spot > 0.0) {
            return Err(MarketDataError::BadState(format!("spot must be > 0, got {spot}")));
        }
        if !rate.is_finite() {
            return Err(MarketDataError::BadState(format!("rate must be finite, got {rate}")));
        }
        if chrono::NaiveDate::parse_from_str(&as_of, "%Y-%m-%d").is_err() {
            return Err(MarketDataError::BadState(format!(
                "as_of '{as_of}' is not an ISO-8601 date"
            )));
        }
        Ok(Self { spot, rate, as_of })
    }
}

/// Call-only in v1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
}

/// One quoted option: strike, maturity in years, last traded premium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub maturity: f64,
    pub last_price: f64,
    pub kind: OptionKind,
}

impl OptionQuote {
    pub fn call(strike: f64, maturity: f64, last_price: f64) -> Self {
        Self {
            strike,
            maturity,
            last_price,
            kind: OptionKind::Call,
        }
    }

    /// Quotes at exactly zero price load fine but are excluded from MRE.
    pub fn has_zero_price(&self) -> bool {
        self.last_price <= 1e-12
    }
}

/// A validated snapshot: quotes sorted ascending by (maturity, strike),
/// no duplicates, never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionChain {
    pub state: MarketState,
    quotes: Vec<OptionQuote>,
}

impl OptionChain {
    /// Build a chain from unsorted quotes, enforcing every invariant.
    /// `rows` optionally maps each quote back to its 1-based CSV data row
    /// for error reporting; identity is assumed when absent.
    pub fn new(state: MarketState, quotes: Vec<OptionQuote>) -> Result<Self, MarketDataError> {
        Self::with_rows(state, quotes, None)
    }

    fn with_rows(
        state: MarketState,
        quotes: Vec<OptionQuote>,
        rows: Option<Vec<usize>>,
    ) -> Result<Self, MarketDataError> {
        if quotes.is_empty() {
            return Err(MarketDataError::EmptyChain);
        }
        let rows = rows.unwrap_or_else(|| (1..=quotes.len()).collect());
        for (quote, &row) in quotes.iter().zip(&rows) {
            if !(quote.strike > 0.0) {
                return Err(MarketDataError::NonPositiveStrike {
                    row,
                    value: quote.strike,
                });
            }
            if quote.last_price < 0.0 {
                return Err(MarketDataError::NegativePrice {
                    row,
                    value: quote.last_price,
                });
            }
            if !(quote.maturity > 0.0) {
                return Err(MarketDataError::NonPositiveMaturity {
                    row,
                    value: quote.maturity * DAYS_PER_YEAR,
                });
            }
        }
        let mut order: Vec<usize> = (0..quotes.len()).collect();
        order.sort_by(|&a, &b| {
            (quotes[a].maturity, quotes[a].strike)
                .partial_cmp(&(quotes[b].maturity, quotes[b].strike))
                .expect("validated quotes are comparable")
        });
        for pair in order.windows(2) {
            let (a, b) = (&quotes[pair[0]], &quotes[pair[1]]);
            if a.maturity == b.maturity && a.strike == b.strike {
                return Err(MarketDataError::DuplicateQuote {
                    row: rows[pair[0]].max(rows[pair[1]]),
                });
            }
        }
        let quotes = order.into_iter().map(|i| quotes[i]).collect();
        Ok(Self { state, quotes })
    }

    pub fn quotes(&self) -> &[OptionQuote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: a constructed chain is never empty
    }

    /// Distinct maturities in ascending order.
    pub fn maturities(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for q in &self.quotes {
            if out.last() != Some(&q.maturity) {
                out.push(q.maturity);
            }
        }
        out
    }

    /// Sub-chain holding only the quotes at one maturity.
    pub fn maturity_slice(&self, maturity: f64) -> Result<OptionChain, MarketDataError> {
        let quotes: Vec<OptionQuote> = self
            .quotes
            .iter()
            .copied()
            .filter(|q| q.maturity == maturity)
            .collect();
        OptionChain::new(self.state.clone(), quotes)
    }
}

/// How a chain was partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Interleaved,
    Random,
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitStrategy::Interleaved => write!(f, "interleaved"),
            SplitStrategy::Random => write!(f, "random"),
        }
    }
}

/// Train/test partition of a chain; union of the two sides is the original.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSplit {
    pub train: OptionChain,
    pub test: OptionChain,
    pub split_spec: String,
}

/// ln(spot / strike).
pub fn log_moneyness(spot: f64, strike: f64) -> Result<f64, MarketDataError> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return Err(MarketDataError::DomainError { spot, strike });
    }
    Ok((spot / strike).ln())
}

/// Partition a chain into train and test quotes.
///
/// `Interleaved` sends every k-th quote (k = round(1/test_fraction)) to the
/// test side so test points interpolate the train range; `Random` draws the
/// same number of test quotes without replacement from `seed`. Both are
/// deterministic for fixed inputs.
pub fn split_train_test(
    chain: &OptionChain,
    test_fraction: f64,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<ChainSplit, MarketDataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(MarketDataError::BadTestFraction(test_fraction));
    }
    let n = chain.len();
    if n < MIN_QUOTES_FOR_SPLIT {
        return Err(MarketDataError::TooFewQuotes {
            n,
            min: MIN_QUOTES_FOR_SPLIT,
        });
    }
    let k = (1.0 / test_fraction).round().max(2.0) as usize;
    let test_idx: Vec<usize> = match strategy {
        SplitStrategy::Interleaved => (0..n).filter(|i| i % k == k - 1).collect(),
        SplitStrategy::Random => {
            let n_test = (n / k).max(1);
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng = CounterRng::substream(seed, SPLIT_STREAM);
            rng.shuffle(&mut idx);
            let mut chosen: Vec<usize> = idx.into_iter().take(n_test).collect();
            chosen.sort_unstable();
            chosen
        }
    };
    if test_idx.is_empty() || test_idx.len() == n {
        return Err(MarketDataError::TooFewQuotes {
            n,
            min: MIN_QUOTES_FOR_SPLIT,
        });
    }
    let mut train = Vec::with_capacity(n - test_idx.len());
    let mut test = Vec::with_capacity(test_idx.len());
    let mut cursor = test_idx.iter().peekable();
    for (i, q) in chain.quotes().iter().enumerate() {
        if cursor.peek() == Some(&&i) {
            cursor.next();
            test.push(*q);
        } else {
            train.push(*q);
        }
    }
    Ok(ChainSplit {
        train: OptionChain::new(chain.state.clone(), train)?,
        test: OptionChain::new(chain.state.clone(), test)?,
        split_spec: format!("{strategy} fraction={test_fraction} k={k} seed={seed}"),
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct MetaFile {
    spot: f64,
    rate: f64,
    as_of: String,
}

/// Default side-car meta path for `chain.csv` -> `chain.meta.json`.
pub fn default_meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Load a chain from `csv_path` and its side-car meta file.
pub fn load_chain(csv_path: &Path, meta_path: &Path) -> Result<OptionChain, MarketDataError> {
    let meta_text = std::fs::read_to_string(meta_path)?;
    let meta: MetaFile =
        serde_json::from_str(&meta_text).map_err(|e| MarketDataError::BadMeta {
            path: meta_path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let state = MarketState::new(meta.spot, meta.rate, meta.as_of)?;

    let mut reader = csv::Reader::from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize, MarketDataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let strike_col = column("strike")?;
    let days_col = column("maturity_days")?;
    let price_col = column("last_price")?;

    let mut quotes = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1; // 1-based data row, header excluded
        let field = |col: usize, name: &str| -> Result<f64, MarketDataError> {
            record
                .get(col)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| MarketDataError::InvalidNumber {
                    row,
                    column: name.to_string(),
                })
        };
        let strike = field(strike_col, "strike")?;
        let days = field(days_col, "maturity_days")?;
        let price = field(price_col, "last_price")?;
        if !(strike > 0.0) {
            return Err(MarketDataError::NonPositiveStrike { row, value: strike });
        }
        if !(days > 0.0) {
            return Err(MarketDataError::NonPositiveMaturity { row, value: days });
        }
        if price < 0.0 {
            return Err(MarketDataError::NegativePrice { row, value: price });
        }
        quotes.push(OptionQuote::call(strike, days / DAYS_PER_YEAR, price));
        rows.push(row);
    }
    OptionChain::with_rows(state, quotes, Some(rows))
}

/// Write a chain to `csv_path` plus side-car meta. Inverse of `load_chain`.
pub fn save_chain(
    chain: &OptionChain,
    csv_path: &Path,
    meta_path: &Path,
) -> Result<(), MarketDataError> {
    let meta = MetaFile {
        spot: chain.state.spot,
        rate: chain.state.rate,
        as_of: chain.state.as_of.clone(),
    };
    let meta_text =
        serde_json::to_string_pretty(&meta).expect("meta serialization cannot fail");
    std::fs::write(meta_path, meta_text)?;

    let mut writer = csv::Writer::from_path(csv_path)?;
    writer.write_record(["strike", "maturity_days", "last_price"])?;
    for q in chain.quotes() {
        writer.write_record(&[
            format_f64(q.strike),
            format_f64(q.maturity * DAYS_PER_YEAR),
            format_f64(q.last_price),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn format_f64(x: f64) -> String {
    // Shortest representation that round-trips exactly.
    let mut buf = ryu_format(x);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(x: f64) -> String {
    // serde_json uses ryu internally; piggyback for exact round-trip text.
    serde_json::to_string(&x).expect("finite f64 serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state() -> MarketState {
        MarketState::new(100.0, 0.03, "2025-02-07").unwrap()
    }

    fn chain_of(strikes: &[f64], maturity: f64) -> OptionChain {
        let quotes = strikes
            .iter()
            .map(|&k| OptionQuote::call(k, maturity, (100.0 - k).max(0.5)))
            .collect();
        OptionChain::new(state(), quotes).unwrap()
    }

    #[test]
    fn log_moneyness_examples() {
        assert_eq!(log_moneyness(100.0, 100.0).unwrap(), 0.0);
        assert!((log_moneyness(100.0, 50.0).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
        let m = log_moneyness(6025.99, 6000.0).unwrap();
        assert!((m - (6025.99_f64 / 6000.0).ln()).abs() < 1e-15);
        assert!(log_moneyness(-1.0, 100.0).is_err());
        assert!(log_moneyness(100.0, 0.0).is_err());
    }

    #[test]
    fn chain_sorts_and_rejects_duplicates() {
        let quotes = vec![
            OptionQuote::call(110.0, 0.25, 1.0),
            OptionQuote::call(90.0, 0.25, 11.0),
            OptionQuote::call(100.0, 0.25, 4.0),
        ];
        let chain = OptionChain::new(state(), quotes).unwrap();
        let strikes: Vec<f64> = chain.quotes().iter().map(|q| q.strike).collect();
        assert_eq!(strikes, vec![90.0, 100.0, 110.0]);

        let dup = vec![
            OptionQuote::call(100.0, 0.25, 4.0),
            OptionQuote::call(100.0, 0.25, 4.1),
        ];
        assert!(matches!(
            OptionChain::new(state(), dup),
            Err(MarketDataError::DuplicateQuote { .. })
        ));
    }

    #[test]
    fn interleaved_split_positions() {
        let chain = chain_of(&[80., 85., 90., 95., 100., 105., 110., 115., 120., 125.], 0.25);
        let split = split_train_test(&chain, 0.2, SplitStrategy::Interleaved, 0).unwrap();
        let test_strikes: Vec<f64> = split.test.quotes().iter().map(|q| q.strike).collect();
        // positions {4, 9}, 0-based
        assert_eq!(test_strikes, vec![100.0, 125.0]);
        assert_eq!(split.train.len(), 8);
    }

    #[test]
    fn random_split_is_deterministic() {
        let chain = chain_of(&[80., 85., 90., 95., 100., 105., 110., 115., 120., 125.], 0.25);
        let a = split_train_test(&chain, 0.2, SplitStrategy::Random, 7).unwrap();
        let b = split_train_test(&chain, 0.2, SplitStrategy::Random, 7).unwrap();
        assert_eq!(a.test.quotes(), b.test.quotes());
        assert_eq!(a.train.quotes(), b.train.quotes());
    }

    #[test]
    fn too_few_quotes_rejected() {
        let chain = chain_of(&[80., 90., 100., 110.], 0.25);
        assert!(matches!(
            split_train_test(&chain, 0.2, SplitStrategy::Interleaved, 0),
            Err(MarketDataError::TooFewQuotes { n: 4, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        let meta = dir.path().join("chain.meta.json");
        let chain = chain_of(&[90.0, 100.0, 110.0], 91.0 / DAYS_PER_YEAR);
        save_chain(&chain, &csv, &meta).unwrap();
        let loaded = load_chain(&csv, &meta).unwrap();
        assert_eq!(chain, loaded);
    }

    #[test]
    fn loader_validation_errors_name_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        let meta = dir.path().join("chain.meta.json");
        std::fs::write(
            &meta,
            r#"{ "spot": 100.0, "rate": 0.03, "as_of": "2025-02-07" }"#,
        )
        .unwrap();

        std::fs::write(&csv, "strike,maturity_days,last_price\n90,91,11.2\n-5,91,3.0\n").unwrap();
        assert!(matches!(
            load_chain(&csv, &meta),
            Err(MarketDataError::NonPositiveStrike { row: 2, .. })
        ));

        std::fs::write(&csv, "strike,maturity_days,last_price\n100,91,4.0\n100,91,4.1\n").unwrap();
        assert!(matches!(
            load_chain(&csv, &meta),
            Err(MarketDataError::DuplicateQuote { row: 2 })
        ));

        std::fs::write(&csv, "strike,days,last_price\n100,91,4.0\n").unwrap();
        assert!(matches!(
            load_chain(&csv, &meta),
            Err(MarketDataError::MissingColumn(c)) if c == "maturity_days"
        ));

        std::fs::write(&csv, "strike,maturity_days,last_price\n").unwrap();
        assert!(matches!(load_chain(&csv, &meta), Err(MarketDataError::EmptyChain)));
    }

    #[test]
    fn well_formed_three_row_csv_loads_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("chain.csv");
        let meta = dir.path().join("chain.meta.json");
        std::fs::write(
            &meta,
            r#"{ "spot": 100.0, "rate": 0.03, "as_of": "2025-02-07" }"#,
        )
        .unwrap();
        std::fs::write(
            &csv,
            "strike,maturity_days,last_price\n110,91.25,1.1\n90,91.25,11.2\n100,91.25,4.3\n",
        )
        .unwrap();
        let chain = load_chain(&csv, &meta).unwrap();
        assert_eq!(chain.len(), 3);
        let strikes: Vec<f64> = chain.quotes().iter().map(|q| q.strike).collect();
        assert_eq!(strikes, vec![90.0, 100.0, 110.0]);
        assert!((chain.quotes()[0].maturity - 91.25 / 365.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn log_moneyness_antisymmetry(a in 1e-3..1e6_f64, b in 1e-3..1e6_f64) {
            let ab = log_moneyness(a, b).unwrap();
            let ba = log_moneyness(b, a).unwrap();
            prop_assert!((ab + ba).abs() < 1e-9_f64.max(1e-12 * ab.abs()));
        }

        #[test]
        fn split_union_is_original(n in 5usize..40, frac in 0.1..0.5_f64, seed in 0u64..1000, random in proptest::bool::ANY) {
            let strikes: Vec<f64> = (0..n).map(|i| 80.0 + i as f64).collect();
            let chain = chain_of(&strikes, 0.25);
            let strategy = if random { SplitStrategy::Random } else { SplitStrategy::Interleaved };
            if let Ok(split) = split_train_test(&chain, frac, strategy, seed) {
                let mut merged: Vec<OptionQuote> =
                    split.train.quotes().iter().chain(split.test.quotes()).copied().collect();
                merged.sort_by(|a, b| a.strike.partial_cmp(&b.strike).unwrap());
                prop_assert_eq!(merged.as_slice(), chain.quotes());
            }
        }
    }
}
