//! End-to-end evaluation: observations to component values to potentials to
//! the aggregate index, with every clamp and renormalization reported.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{
    aivi, decompose, normalize, potential_sub_index, vulnerability_from_potential, BoundsKind,
    ClampSide, Contribution, NormalizationBounds, UnitValue, WeightVector,
};
use crate::indicators::component_raw_value;
use crate::model::{BoundsSpec, ComponentSpec, IndexModel, MissingPolicy};
use crate::observations::Dataset;
use crate::period::Period;
use crate::scalar::Scalar;

/// Structured, auditable warnings.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Warning<T> {
    /// A raw value fell outside its bounds and was pulled onto them.
    Clamped {
        component_id: String,
        period: Period,
        raw: T,
        side: ClampSide,
        bound: T,
    },
    /// A component had no usable data and was dropped.
    MissingComponent {
        component_id: String,
        sub_index_id: String,
        status: MissingStatus,
        reason: String,
    },
    /// Every component of a sub-index was dropped, so the sub-index was too.
    MissingSubIndex { sub_index_id: String },
    /// Weights of a group were rescaled after a drop.
    WeightsRenormalized {
        group: String,
        weights: WeightVector<T>,
    },
    /// The dataset names an indicator no component reads.
    UnknownIndicator { indicator_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingStatus {
    Missing,
    InsufficientHistory,
}

/// Classify an error as "no usable data" (the component is missing) rather
/// than a data defect.
pub fn missing_status(err: &Error) -> Option<MissingStatus> {
    match err.root() {
        Error::MissingPeriod(_) | Error::NonPositivePriorGrowth(_) => Some(MissingStatus::Missing),
        Error::MissingPredecessor(_) | Error::InsufficientHistory(_) => {
            Some(MissingStatus::InsufficientHistory)
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueOrigin {
    Dataset,
    RawOverride,
    NormalizedOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ComponentValue<T> {
    pub component_id: String,
    pub period: Period,
    pub raw: T,
    pub resolved_bounds: NormalizationBounds<T>,
    pub normalized: UnitValue<T>,
    /// Effective weight inside the sub-index, filled in by `compute_index`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<T>,
    pub origin: ValueOrigin,
    pub warnings: Vec<Warning<T>>,
}

/// One component's state for a period.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved<T> {
    Present(ComponentValue<T>),
    Missing {
        status: MissingStatus,
        reason: String,
    },
}

/// Component values for every model component at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedValues<T> {
    pub period: Period,
    /// In model component order.
    pub components: Vec<(String, Resolved<T>)>,
    /// Dataset-level notices, e.g. unknown indicators.
    pub notices: Vec<Warning<T>>,
}

impl<T: Scalar> ResolvedValues<T> {
    pub fn get(&self, component_id: &str) -> Option<&Resolved<T>> {
        self.components
            .iter()
            .find(|(id, _)| id == component_id)
            .map(|(_, r)| r)
    }

    pub(crate) fn get_mut(&mut self, component_id: &str) -> Option<&mut Resolved<T>> {
        self.components
            .iter_mut()
            .find(|(id, _)| id == component_id)
            .map(|(_, r)| r)
    }
}

/// Raw value of one component at one period.
pub fn raw_value<T: Scalar>(
    component: &ComponentSpec<T>,
    dataset: &Dataset<T>,
    period: Period,
) -> Result<T> {
    let payload = dataset.payload(&component.indicator_id, period)?;
    component_raw_value(component.kind, &payload, period, &component.params)
}

/// Normalization bounds for a component: fixed ones pass through, empirical
/// ones are the observed raw range over every period in the dataset.
pub fn resolve_bounds<T: Scalar>(
    component: &ComponentSpec<T>,
    dataset: &Dataset<T>,
) -> Result<NormalizationBounds<T>> {
    match component.bounds {
        BoundsSpec::Fixed(b) => Ok(b),
        BoundsSpec::Resolve(_) => {
            let mut values = Vec::new();
            for period in dataset.periods_for(&component.indicator_id) {
                match raw_value(component, dataset, period) {
                    Ok(v) => values.push(v),
                    Err(e) if missing_status(&e).is_some() => {}
                    Err(e) => return Err(e.at(component.id.clone())),
                }
            }
            if values.len() < 2 {
                return Err(Error::InsufficientData(component.id.clone()));
            }
            let min = values.iter().copied().fold(T::infinity(), T::min);
            let max = values.iter().copied().fold(T::neg_infinity(), T::max);
            NormalizationBounds::new(min, max, BoundsKind::Empirical)
                .map_err(|e| e.at(component.id.clone()))
        }
    }
}

/// Build a present component value, normalizing under the model's policy.
pub(crate) fn component_value<T: Scalar>(
    model: &IndexModel<T>,
    component_id: &str,
    period: Period,
    raw: T,
    bounds: NormalizationBounds<T>,
    origin: ValueOrigin,
) -> Result<ComponentValue<T>> {
    let (normalized, clamp) =
        normalize(raw, &bounds, model.clamp_policy).map_err(|e| e.at(component_id.to_string()))?;
    let warnings = clamp
        .map(|c| Warning::Clamped {
            component_id: component_id.to_string(),
            period,
            raw: c.raw,
            side: c.side,
            bound: c.bound,
        })
        .into_iter()
        .collect();
    Ok(ComponentValue {
        component_id: component_id.to_string(),
        period,
        raw,
        resolved_bounds: bounds,
        normalized,
        weight: None,
        origin,
        warnings,
    })
}

/// Compute every component's value for `period`.
///
/// Missing data is recorded, not raised; the missing-data policy is applied
/// later by [`compute_index`]. Data defects are errors.
pub fn resolve_values<T: Scalar>(
    model: &IndexModel<T>,
    dataset: &Dataset<T>,
    period: Period,
) -> Result<ResolvedValues<T>> {
    let mut components = Vec::new();
    for (_, spec) in model.components() {
        let resolved = match raw_value(spec, dataset, period) {
            Ok(raw) => {
                let bounds = resolve_bounds(spec, dataset).map_err(|e| e.at(spec.id.clone()))?;
                Resolved::Present(
                    component_value(model, &spec.id, period, raw, bounds, ValueOrigin::Dataset)
                        .map_err(|e| e.at(spec.id.clone()))?,
                )
            }
            Err(e) => match missing_status(&e) {
                Some(status) => Resolved::Missing {
                    status,
                    reason: e.to_string(),
                },
                None => return Err(e.at(spec.id.clone())),
            },
        };
        components.push((spec.id.clone(), resolved));
    }
    let known = model.indicator_ids();
    let notices = dataset
        .indicator_ids()
        .filter(|id| !known.contains(id))
        .map(|id| Warning::UnknownIndicator {
            indicator_id: id.to_string(),
        })
        .collect();
    Ok(ResolvedValues {
        period,
        components,
        notices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct SubIndexResult<T> {
    pub id: String,
    /// Effective top-level weight.
    pub weight: T,
    pub potential: UnitValue<T>,
    pub vulnerability: UnitValue<T>,
    pub components: Vec<ComponentValue<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ContributionEntry<T> {
    pub id: String,
    pub value: Contribution<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ComputeResult<T> {
    pub aivi: UnitValue<T>,
    pub period: Period,
    pub sub_indexes: Vec<SubIndexResult<T>>,
    pub contributions: Vec<ContributionEntry<T>>,
    pub top_weights: WeightVector<T>,
    pub warnings: Vec<Warning<T>>,
}

impl<T: Scalar> ComputeResult<T> {
    pub fn sub_index(&self, id: &str) -> Option<&SubIndexResult<T>> {
        self.sub_indexes.iter().find(|s| s.id == id)
    }

    pub fn potentials(&self) -> Vec<(String, UnitValue<T>)> {
        self.sub_indexes
            .iter()
            .map(|s| (s.id.clone(), s.potential))
            .collect()
    }
}

/// Aggregate resolved component values into the index.
///
/// Deterministic: identical inputs give bit-identical results.
pub fn compute_index<T: Scalar>(
    model: &IndexModel<T>,
    values: &ResolvedValues<T>,
) -> Result<ComputeResult<T>> {
    let period = values.period;
    let mut warnings = values.notices.clone();
    let mut sub_results = Vec::new();
    let mut kept_top = Vec::new();

    for sub in model.sub_indexes() {
        let mut present = Vec::new();
        let mut dropped = false;
        for spec in sub.components() {
            match values.get(&spec.id) {
                Some(Resolved::Present(v)) => {
                    warnings.extend(v.warnings.iter().cloned());
                    present.push((v.clone(), spec.weight));
                }
                Some(Resolved::Missing { status, reason }) => {
                    if model.missing_policy == MissingPolicy::Error {
                        return Err(Error::MissingComponent {
                            component: spec.id.clone(),
                            period: period.to_string(),
                            reason: reason.clone(),
                        });
                    }
                    warnings.push(Warning::MissingComponent {
                        component_id: spec.id.clone(),
                        sub_index_id: sub.id.clone(),
                        status: *status,
                        reason: reason.clone(),
                    });
                    dropped = true;
                }
                None => {
                    return Err(Error::IdMismatch(format!(
                        "no resolved value for component `{}`",
                        spec.id
                    )))
                }
            }
        }
        let weights = if !dropped {
            sub.weights().clone()
        } else {
            let remaining = present
                .iter()
                .map(|(v, w)| (v.component_id.clone(), *w))
                .collect();
            match WeightVector::renormalized(remaining) {
                Ok(w) => {
                    warnings.push(Warning::WeightsRenormalized {
                        group: sub.id.clone(),
                        weights: w.clone(),
                    });
                    w
                }
                // nothing left, or only zero-weight components
                Err(_) => {
                    warnings.push(Warning::MissingSubIndex {
                        sub_index_id: sub.id.clone(),
                    });
                    continue;
                }
            }
        };
        let normalized: Vec<UnitValue<T>> = present.iter().map(|(v, _)| v.normalized).collect();
        let potential = potential_sub_index(&normalized, &weights)?;
        let components = present
            .into_iter()
            .zip(weights.values())
            .map(|((mut v, _), w)| {
                v.weight = Some(w);
                v
            })
            .collect();
        kept_top.push((
            sub.id.clone(),
            model.top_weights().get(&sub.id).expect("validated model"),
        ));
        sub_results.push(SubIndexResult {
            id: sub.id.clone(),
            weight: T::zero(),
            potential,
            vulnerability: vulnerability_from_potential(potential),
            components,
        });
    }

    if sub_results.is_empty() {
        return Err(Error::NoData(period.to_string()));
    }
    let top_weights = if sub_results.len() == model.sub_indexes().len() {
        model.top_weights().clone()
    } else {
        let w =
            WeightVector::renormalized(kept_top).map_err(|_| Error::NoData(period.to_string()))?;
        warnings.push(Warning::WeightsRenormalized {
            group: "top".into(),
            weights: w.clone(),
        });
        w
    };
    for s in &mut sub_results {
        s.weight = top_weights.get(&s.id).expect("same ids");
    }

    let potentials: Vec<(String, UnitValue<T>)> = sub_results
        .iter()
        .map(|s| (s.id.clone(), s.potential))
        .collect();
    let index = aivi(&potentials, &top_weights)?;
    let contributions = decompose(&potentials, &top_weights)?
        .into_iter()
        .map(|(id, value)| ContributionEntry { id, value })
        .collect();
    Ok(ComputeResult {
        aivi: index,
        period,
        sub_indexes: sub_results,
        contributions,
        top_weights,
        warnings,
    })
}
