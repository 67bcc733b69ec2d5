//! Price series ingestion and daily log-returns.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::{format_f64, Error, Result};

/// Column names and date format of a price CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvConfig {
    pub date_column: String,
    pub price_column: String,
    /// `chrono` format string; ISO-8601 dates by default.
    pub date_format: String,
}

impl Default for CsvConfig {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            price_column: "close".to_string(),
            date_format: "%Y-%m-%d".to_string(),
        }
    }
}

/// Time-ordered strictly positive prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series, checking that dates strictly increase and prices are
    /// finite and positive.
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::Domain(format!(
                "{} dates but {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if let Some(bad) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Domain(format!("price {bad} is not strictly positive")));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        Ok(Self { dates, prices })
    }

    /// Series with consecutive calendar days starting at `start`.
    pub fn from_prices(start: NaiveDate, prices: Vec<f64>) -> Result<Self> {
        let dates = start.iter_days().take(prices.len()).collect();
        Self::new(dates, prices)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Writes `date,close` rows, readable by [`load_price_csv`] with the
    /// default configuration.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "close"])?;
        for (d, p) in self.dates.iter().zip(&self.prices) {
            w.write_record([d.to_string(), format_f64(*p)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of [`load_price_csv`]: the cleaned series and how many rows were
/// dropped for a missing or non-positive price.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPrices {
    pub series: PriceSeries,
    pub dropped: usize,
}

/// Parses a delimited price file.
///
/// Rows whose price is empty, unparsable or non-positive are dropped and
/// counted. Rows are sorted by date; for duplicate dates the last row in file
/// order wins.
pub fn load_price_csv<R: Read>(source: R, config: &CsvConfig) -> Result<LoadedPrices> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}` in header {headers:?}")))
    };
    let date_idx = column(&config.date_column)?;
    let price_idx = column(&config.price_column)?;

    let mut rows = BTreeMap::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let raw_date = record.get(date_idx).unwrap_or("");
        if raw_date.is_empty() && record.iter().all(str::is_empty) {
            continue;
        }
        let date = NaiveDate::parse_from_str(raw_date, &config.date_format).map_err(|e| {
            Error::Parse(format!("row {}: bad date {raw_date:?}: {e}", line + 2))
        })?;
        match record.get(price_idx).and_then(|s| s.parse::<f64>().ok()) {
            Some(p) if p.is_finite() && p > 0.0 => {
                rows.insert(date, p);
            }
            _ => dropped += 1,
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: rows.len(),
        });
    }
    let (dates, prices) = rows.into_iter().unzip();
    Ok(LoadedPrices {
        series: PriceSeries::new(dates, prices)?,
        dropped,
    })
}

/// Daily continuously compounded returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    /// Date of each return's closing observation, when known.
    pub dates: Option<Vec<NaiveDate>>,
    pub values: Vec<f64>,
    /// Time step in days.
    pub dt: f64,
}

impl ReturnSeries {
    /// Undated returns with a one-day step.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite return {bad}")));
        }
        Ok(Self {
            dates: None,
            values,
            dt: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `date,value` rows; the date is blank for undated series.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let date = match &self.dates {
                Some(d) => d[i].to_string(),
                None => String::new(),
            };
            w.write_record([date, format_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `date,value` format written by [`ReturnSeries::write_csv`].
    /// Dates are kept only if every row carries one.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let value_idx = headers
            .iter()
            .position(|h| h == "value")
            .ok_or_else(|| Error::Parse(format!("missing column `value` in header {headers:?}")))?;
        let date_idx = headers.iter().position(|h| h == "date");

        let mut values = Vec::new();
        let mut dates = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let raw = record.get(value_idx).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad value {raw:?}", line + 2)))?;
            values.push(v);
            if let Some(d) = date_idx
                .and_then(|i| record.get(i))
                .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            {
                dates.push(d);
            }
        }
        let mut series = Self::from_values(values)?;
        if !dates.is_empty() && dates.len() == series.values.len() {
            series.dates = Some(dates);
        }
        Ok(series)
    }
}

/// `values[i] = ln(prices[i+1] / prices[i])`, dated by the later observation.
pub fn log_returns(p: &PriceSeries) -> ReturnSeries {
    let values = p.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    ReturnSeries {
        dates: Some(p.dates[1..].to_vec()),
        values,
        dt: 1.0,
    }
}

/// Rescales the series so that its first price equals `base`.
pub fn normalize_prices(p: &PriceSeries, base: f64) -> Result<PriceSeries> {
    if !(base.is_finite() && base > 0.0) {
        return Err(Error::Domain(format!("normalisation base {base} must be positive")));
    }
    let Some(&first) = p.prices.first() else {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    };
    let factor = base / first;
    let mut prices: Vec<f64> = p.prices.iter().map(|x| x * factor).collect();
    prices[0] = base;
    Ok(PriceSeries {
        dates: p.dates.clone(),
        prices,
    })
}
