//! Observation datasets: strict CSV ingestion and per-indicator lookup.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::indicators::{Payload, Series};
use crate::period::Period;
use crate::scalar::Scalar;

/// Exact header every observation file must start with.
pub const CSV_HEADER: [&str; 7] = [
    "indicator_id",
    "entity",
    "period",
    "value",
    "unit",
    "source",
    "retrieved_at",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation<T> {
    pub indicator_id: String,
    pub entity: Option<String>,
    pub period: Period,
    pub value: T,
    pub unit: String,
    pub source: String,
    pub retrieved_at: String,
}

/// Parse an observation CSV. Every bad row is reported, with its line.
pub fn parse_observations<T: Scalar>(text: &str) -> Result<Vec<Observation<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::HeaderMismatch(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::HeaderMismatch(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(Error::RowParse {
                    line,
                    column: "*".into(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record) {
            Ok(obs) => rows.push(obs),
            Err((column, reason)) => errors.push(Error::RowParse {
                line,
                column: column.to_string(),
                reason,
            }),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Rows(errors))
    }
}

fn parse_row<T: Scalar>(
    record: &csv::StringRecord,
) -> std::result::Result<Observation<T>, (&'static str, String)> {
    let field = |i: usize| record.get(i).unwrap_or("");
    let indicator_id = field(0);
    if indicator_id.is_empty() {
        return Err(("indicator_id", "empty".into()));
    }
    let period: Period = field(2)
        .parse()
        .map_err(|e: Error| ("period", e.to_string()))?;
    let value = parse_decimal(field(3))
        .ok_or(("value", format!("`{}` is not a finite decimal", field(3))))?;
    let value = T::from_f64(value).filter(|v| v.is_finite()).ok_or((
        "value",
        format!("`{}` does not fit the scalar type", field(3)),
    ))?;
    let entity = match field(1) {
        "" => None,
        e => Some(e.to_string()),
    };
    Ok(Observation {
        indicator_id: indicator_id.to_string(),
        entity,
        period,
        value,
        unit: field(4).to_string(),
        source: field(5).to_string(),
        retrieved_at: field(6).to_string(),
    })
}

/// Plain decimal with `.` separator and optional exponent; no `inf`/`NaN`.
fn parse_decimal(s: &str) -> Option<f64> {
    let ok = !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if !ok {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Anything that can produce observation rows: a curated CSV file today,
/// a remote statistics API adapter later.
pub trait ObservationSource<T> {
    /// Short label used in diagnostics.
    fn name(&self) -> String;
    fn fetch(&self) -> Result<Vec<Observation<T>>>;
}

/// Observation CSV text already in memory.
#[derive(Debug, Clone)]
pub struct CsvText {
    pub name: String,
    pub text: String,
}

impl<T: Scalar> ObservationSource<T> for CsvText {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fetch(&self) -> Result<Vec<Observation<T>>> {
        parse_observations(&self.text)
    }
}

/// Observations grouped by indicator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset<T> {
    by_indicator: BTreeMap<String, Vec<Observation<T>>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(observations: impl IntoIterator<Item = Observation<T>>) -> Self {
        let mut by_indicator: BTreeMap<String, Vec<Observation<T>>> = BTreeMap::new();
        for o in observations {
            by_indicator
                .entry(o.indicator_id.clone())
                .or_default()
                .push(o);
        }
        Dataset { by_indicator }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Ok(Dataset::new(parse_observations(text)?))
    }

    /// Merge every source, failing on the first that cannot be read.
    pub fn from_sources(sources: &[&dyn ObservationSource<T>]) -> Result<Self> {
        let mut rows = Vec::new();
        for s in sources {
            rows.extend(s.fetch().map_err(|e| e.at(s.name()))?);
        }
        Ok(Dataset::new(rows))
    }

    pub fn extend(&mut self, other: Dataset<T>) {
        for (k, v) in other.by_indicator {
            self.by_indicator.entry(k).or_default().extend(v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.by_indicator.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_indicator.values().map(Vec::len).sum()
    }

    pub fn observations(&self, indicator_id: &str) -> &[Observation<T>] {
        self.by_indicator
            .get(indicator_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn indicator_ids(&self) -> impl Iterator<Item = &str> {
        self.by_indicator.keys().map(String::as_str)
    }

    /// Every period that appears anywhere in the dataset, ascending.
    pub fn periods(&self) -> BTreeSet<Period> {
        self.by_indicator
            .values()
            .flatten()
            .map(|o| o.period)
            .collect()
    }

    pub fn periods_for(&self, indicator_id: &str) -> BTreeSet<Period> {
        self.observations(indicator_id)
            .iter()
            .map(|o| o.period)
            .collect()
    }

    pub fn latest_period(&self) -> Option<Period> {
        self.periods().into_iter().next_back()
    }

    /// Calculator input for an indicator at `period`.
    ///
    /// Per-entity rows at `period` form an entity payload; otherwise all
    /// entity-less rows form a series.
    pub fn payload(&self, indicator_id: &str, period: Period) -> Result<Payload<T>> {
        let obs = self.observations(indicator_id);
        let entities: Vec<&Observation<T>> = obs
            .iter()
            .filter(|o| o.period == period && o.entity.is_some())
            .collect();
        if !entities.is_empty() {
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(entities.len());
            for o in entities {
                let entity = o.entity.clone().expect("filtered on entity");
                if !seen.insert(entity.clone()) {
                    return Err(Error::DuplicateId(format!(
                        "{indicator_id}/{entity}/{period}"
                    )));
                }
                out.push((entity, o.value));
            }
            return Ok(Payload::Entities(out));
        }
        let points: Vec<(Period, T)> = obs
            .iter()
            .filter(|o| o.entity.is_none())
            .map(|o| (o.period, o.value))
            .collect();
        if points.is_empty() {
            return Err(Error::MissingPeriod(period.to_string()));
        }
        Ok(Payload::Series(Series::new(points)?))
    }
}
