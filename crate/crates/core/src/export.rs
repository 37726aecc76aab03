//! Plot-ready per-period series of the index and its sub-index potentials.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Error;
use crate::model::IndexModel;
use crate::observations::Dataset;
use crate::period::Period;
use crate::scalar::Scalar;
use crate::scenario::{evaluate, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct SeriesRow<T> {
    pub period: Period,
    pub aivi: T,
    /// Sub-index id to potential; absent when the sub-index was dropped.
    pub potentials: BTreeMap<String, T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct IndexSeries<T> {
    pub sub_indexes: Vec<String>,
    pub rows: Vec<SeriesRow<T>>,
    /// Periods that could not be computed, with the reason.
    pub skipped: Vec<(Period, String)>,
}

/// Evaluate `template` at every period in the dataset.
pub fn index_series<T: Scalar>(
    model: &IndexModel<T>,
    dataset: &Dataset<T>,
    template: &Scenario<T>,
) -> IndexSeries<T> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for period in dataset.periods() {
        let scenario = Scenario {
            period: Some(period),
            ..template.clone()
        };
        match evaluate(model, dataset, &scenario) {
            Ok(r) => rows.push(SeriesRow {
                period,
                aivi: r.aivi.get(),
                potentials: r
                    .sub_indexes
                    .iter()
                    .map(|s| (s.id.clone(), s.potential.get()))
                    .collect(),
            }),
            Err(e) => skipped.push((period, Error::to_string(&e))),
        }
    }
    IndexSeries {
        sub_indexes: model.sub_indexes().iter().map(|s| s.id.clone()).collect(),
        rows,
        skipped,
    }
}

impl<T: Scalar> IndexSeries<T> {
    /// `period,aivi,pot_<id>...`; a dropped sub-index leaves an empty cell.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["period".to_string(), "aivi".to_string()];
        header.extend(self.sub_indexes.iter().map(|id| format!("pot_{id}")));
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.period.to_string(), fmt_num(row.aivi)];
            rec.extend(self.sub_indexes.iter().map(|id| {
                row.potentials
                    .get(id)
                    .map(|v| fmt_num(*v))
                    .unwrap_or_default()
            }));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Shortest round-trip decimal, matching the JSON output.
pub(crate) fn fmt_num<T: Scalar>(v: T) -> String {
    serde_json::to_string(&v).expect("finite number")
}
