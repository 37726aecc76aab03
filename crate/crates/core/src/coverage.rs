//! Dataset coverage: which components can be computed for which periods.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::compute::{missing_status, raw_value, resolve_bounds, MissingStatus};
use crate::indicators::ComponentKind;
use crate::model::IndexModel;
use crate::observations::Dataset;
use crate::period::Period;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageStatus {
    Present,
    Missing,
    InsufficientHistory,
    /// Data exists but a calculator rejected it; compute fails with that error.
    Invalid,
}

impl CoverageStatus {
    /// Statuses for which computing under the default policy raises
    /// `MissingComponent`.
    pub fn is_missing(self) -> bool {
        matches!(
            self,
            CoverageStatus::Missing | CoverageStatus::InsufficientHistory
        )
    }

    fn symbol(self) -> &'static str {
        match self {
            CoverageStatus::Present => "ok",
            CoverageStatus::Missing => "MISSING",
            CoverageStatus::InsufficientHistory => "HISTORY",
            CoverageStatus::Invalid => "INVALID",
        }
    }
}

impl From<MissingStatus> for CoverageStatus {
    fn from(s: MissingStatus) -> Self {
        match s {
            MissingStatus::Missing => CoverageStatus::Missing,
            MissingStatus::InsufficientHistory => CoverageStatus::InsufficientHistory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellNote {
    pub period: Period,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentCoverage {
    pub component_id: String,
    pub sub_index_id: String,
    pub indicator_id: String,
    pub kind: ComponentKind,
    pub statuses: BTreeMap<Period, CoverageStatus>,
    /// Why a cell is not present.
    pub notes: Vec<CellNote>,
    /// Empirical-bounds failure, if any; applies to every period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub periods: Vec<Period>,
    pub components: Vec<ComponentCoverage>,
    pub unknown_indicators: Vec<String>,
}

impl CoverageReport {
    /// Components that would be reported missing at `period`.
    pub fn missing_in(&self, period: Period) -> Vec<&ComponentCoverage> {
        self.components
            .iter()
            .filter(|c| self.status(c, period).is_missing())
            .collect()
    }

    pub fn status(&self, c: &ComponentCoverage, period: Period) -> CoverageStatus {
        c.statuses
            .get(&period)
            .copied()
            .unwrap_or(CoverageStatus::Missing)
    }

    /// True when every component is present at `period` with usable bounds.
    pub fn is_complete(&self, period: Period) -> bool {
        self.components
            .iter()
            .all(|c| self.status(c, period) == CoverageStatus::Present && c.bounds_error.is_none())
    }

    /// Fixed-width table for terminals.
    pub fn to_text(&self) -> String {
        let width = self
            .components
            .iter()
            .map(|c| c.component_id.len())
            .max()
            .unwrap_or(9)
            .max(9);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}  {:<10}", "component", "sub_index");
        for p in &self.periods {
            let _ = write!(out, "  {:<8}", p.to_string());
        }
        out.push('\n');
        for c in &self.components {
            let _ = write!(out, "{:<width$}  {:<10}", c.component_id, c.sub_index_id);
            for p in &self.periods {
                let _ = write!(out, "  {:<8}", self.status(c, *p).symbol());
            }
            out.push('\n');
        }
        for c in &self.components {
            for n in &c.notes {
                let _ = writeln!(out, "{} @ {}: {}", c.component_id, n.period, n.message);
            }
            if let Some(e) = &c.bounds_error {
                let _ = writeln!(out, "{}: bounds: {e}", c.component_id);
            }
        }
        for id in &self.unknown_indicators {
            let _ = writeln!(out, "warning: unknown indicator `{id}`");
        }
        out
    }
}

/// Component-by-period coverage over every period in the dataset.
pub fn validate_dataset<T: Scalar>(model: &IndexModel<T>, dataset: &Dataset<T>) -> CoverageReport {
    let periods: Vec<Period> = dataset.periods().into_iter().collect();
    let components = model
        .components()
        .map(|(sub, spec)| {
            let mut statuses = BTreeMap::new();
            let mut notes = Vec::new();
            for &p in &periods {
                let status = match raw_value(spec, dataset, p) {
                    Ok(_) => CoverageStatus::Present,
                    Err(e) => {
                        let status = missing_status(&e)
                            .map(CoverageStatus::from)
                            .unwrap_or(CoverageStatus::Invalid);
                        notes.push(CellNote {
                            period: p,
                            code: e.code().to_string(),
                            message: e.to_string(),
                        });
                        status
                    }
                };
                statuses.insert(p, status);
            }
            ComponentCoverage {
                component_id: spec.id.clone(),
                sub_index_id: sub.id.clone(),
                indicator_id: spec.indicator_id.clone(),
                kind: spec.kind,
                statuses,
                notes,
                bounds_error: resolve_bounds(spec, dataset).err().map(|e| e.to_string()),
            }
        })
        .collect();
    let known = model.indicator_ids();
    let unknown_indicators = dataset
        .indicator_ids()
        .filter(|id| !known.contains(id))
        .map(str::to_string)
        .collect();
    CoverageReport {
        periods,
        components,
        unknown_indicators,
    }
}
