//! What-if scenarios: weight and component overrides on top of a loaded
//! model and dataset. The CLI and the HTTP service both evaluate through
//! here, which is what keeps their outputs byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compute::{
    component_value, compute_index, resolve_bounds, resolve_values, ComputeResult, Resolved,
    ResolvedValues, ValueOrigin,
};
use crate::error::{Error, Result};
use crate::index::{validate_weights, UnitValue};
use crate::model::IndexModel;
use crate::observations::Dataset;
use crate::period::Period;
use crate::scalar::Scalar;

/// Replacement weights. Entries not listed keep their model value; each
/// affected group must still sum to one after substitution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct WeightOverrides<T> {
    /// Sub-index id to weight.
    #[serde(default)]
    pub top: BTreeMap<String, T>,
    /// Component id to weight within its sub-index.
    #[serde(default)]
    pub components: BTreeMap<String, T>,
}

impl<T: Scalar> WeightOverrides<T> {
    pub fn is_empty(&self) -> bool {
        self.top.is_empty() && self.components.is_empty()
    }
}

/// A component value supplied by the caller instead of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields, bound = "T: Scalar")]
pub enum ComponentOverride<T> {
    /// Raw value, normalized with the component's resolved bounds.
    Raw(T),
    /// Already-normalized value in `[0, 1]`.
    Normalized(T),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Scenario<T> {
    /// Defaults to the latest period in the dataset.
    #[serde(default)]
    pub period: Option<Period>,
    #[serde(default)]
    pub weight_overrides: Option<WeightOverrides<T>>,
    #[serde(default)]
    pub component_overrides: BTreeMap<String, ComponentOverride<T>>,
}

/// Model with the overrides substituted and every touched group revalidated.
pub fn apply_weight_overrides<T: Scalar>(
    model: &IndexModel<T>,
    overrides: &WeightOverrides<T>,
) -> Result<IndexModel<T>> {
    let mut model = model.clone();
    if !overrides.top.is_empty() {
        for id in overrides.top.keys() {
            if model.top_weights().get(id).is_none() {
                return Err(Error::UnknownId(id.clone()).at(format!("weight_overrides.top.{id}")));
            }
        }
        let entries = model
            .top_weights()
            .entries()
            .iter()
            .map(|(id, w)| (id.clone(), overrides.top.get(id).copied().unwrap_or(*w)))
            .collect();
        let top = validate_weights(entries, T::weight_tolerance())
            .map_err(|e| e.at("weight_overrides.top"))?;
        model = model.with_top_weights(top)?;
    }
    for id in overrides.components.keys() {
        if model.component(id).is_none() {
            return Err(
                Error::UnknownId(id.clone()).at(format!("weight_overrides.components.{id}"))
            );
        }
    }
    for i in 0..model.sub_indexes().len() {
        let sub = &model.sub_indexes()[i];
        if !sub
            .components()
            .iter()
            .any(|c| overrides.components.contains_key(&c.id))
        {
            continue;
        }
        let entries = sub
            .weights()
            .entries()
            .iter()
            .map(|(id, w)| {
                (
                    id.clone(),
                    overrides.components.get(id).copied().unwrap_or(*w),
                )
            })
            .collect();
        let weights = validate_weights(entries, T::weight_tolerance())
            .map_err(|e| e.at(format!("weight_overrides.components[{}]", sub.id)))?;
        model = model.with_component_weights(i, weights)?;
    }
    Ok(model)
}

/// Replace resolved values with caller-supplied ones.
pub fn apply_component_overrides<T: Scalar>(
    model: &IndexModel<T>,
    dataset: &Dataset<T>,
    values: &mut ResolvedValues<T>,
    overrides: &BTreeMap<String, ComponentOverride<T>>,
) -> Result<()> {
    let period = values.period;
    for (id, ov) in overrides {
        let path = format!("component_overrides.{id}");
        let spec = model
            .component(id)
            .ok_or_else(|| Error::UnknownId(id.clone()).at(path.clone()))?;
        let bounds = match values.get(id) {
            Some(Resolved::Present(v)) => v.resolved_bounds,
            _ => resolve_bounds(spec, dataset)?,
        };
        let value = match *ov {
            ComponentOverride::Raw(raw) => {
                if !raw.is_finite() {
                    return Err(Error::NonFiniteInput(raw.as_f64()).at(path));
                }
                component_value(model, id, period, raw, bounds, ValueOrigin::RawOverride)?
            }
            ComponentOverride::Normalized(n) => {
                let normalized = UnitValue::new(n).map_err(|e| e.at(path))?;
                let raw = bounds.min() + n * (bounds.max() - bounds.min());
                let mut v = component_value(
                    model,
                    id,
                    period,
                    raw,
                    bounds,
                    ValueOrigin::NormalizedOverride,
                )?;
                v.normalized = normalized;
                v.warnings.clear();
                v
            }
        };
        *values.get_mut(id).expect("component in model") = Resolved::Present(value);
    }
    Ok(())
}

/// Evaluate a scenario end to end.
pub fn evaluate<T: Scalar>(
    model: &IndexModel<T>,
    dataset: &Dataset<T>,
    scenario: &Scenario<T>,
) -> Result<ComputeResult<T>> {
    let (model, values) = prepare(model, dataset, scenario)?;
    compute_index(&model, &values)
}

/// Model and resolved values for a scenario, before aggregation.
pub fn prepare<T: Scalar>(
    model: &IndexModel<T>,
    dataset: &Dataset<T>,
    scenario: &Scenario<T>,
) -> Result<(IndexModel<T>, ResolvedValues<T>)> {
    let period = match scenario.period {
        Some(p) => p,
        None => dataset
            .latest_period()
            .ok_or_else(|| Error::NoData("dataset is empty".into()))?,
    };
    let model = match &scenario.weight_overrides {
        Some(w) => apply_weight_overrides(model, w)?,
        None => model.clone(),
    };
    let mut values = resolve_values(&model, dataset, period)?;
    apply_component_overrides(&model, dataset, &mut values, &scenario.component_overrides)?;
    Ok((model, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    const MODEL: &str = r#"{
        "version": 1,
        "top_weights": {"a": 0.5, "b": 0.5},
        "sub_indexes": [
            {"id": "a", "components": [
                {"id": "a1", "indicator_id": "shares", "kind": "hhi", "weight": 0.5},
                {"id": "a2", "indicator_id": "rate", "kind": "level", "weight": 0.5,
                 "bounds": {"min": 0, "max": 1, "kind": "theoretical"}}
            ]},
            {"id": "b", "components": [
                {"id": "b1", "indicator_id": "cost", "kind": "level", "weight": 1.0,
                 "bounds": {"min": 0, "max": 200, "kind": "empirical"}}
            ]}
        ]
    }"#;

    const DATA: &str = "indicator_id,entity,period,value,unit,source,retrieved_at
shares,X,2025,0.5,frac,s,t
shares,Y,2025,0.5,frac,s,t
rate,,2025,0.3,frac,s,t
cost,,2025,100,MUSD,s,t
";

    fn setup() -> (IndexModel<f64>, Dataset<f64>) {
        (
            parse_model(MODEL).unwrap(),
            Dataset::from_csv(DATA).unwrap(),
        )
    }

    fn scenario(json: &str) -> Scenario<f64> {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn empty_scenario_uses_latest_period() {
        let (m, d) = setup();
        let r = evaluate(&m, &d, &Scenario::default()).unwrap();
        assert_eq!(r.period, Period::Year(2025));
    }

    #[test]
    fn top_weight_override() {
        let (m, d) = setup();
        let r = evaluate(
            &m,
            &d,
            &scenario(r#"{"weight_overrides": {"top": {"a": 1.0, "b": 0.0}}}"#),
        )
        .unwrap();
        let a = r.sub_index("a").unwrap();
        assert_eq!(r.aivi.get(), a.vulnerability.get());
    }

    #[test]
    fn bad_override_sum_has_path() {
        let (m, d) = setup();
        let err = evaluate(
            &m,
            &d,
            &scenario(r#"{"weight_overrides": {"top": {"a": 0.6}}}"#),
        )
        .unwrap_err();
        assert_eq!(err.code(), "WeightSumViolation");
        assert_eq!(err.path(), Some("weight_overrides.top"));
        let err = evaluate(
            &m,
            &d,
            &scenario(r#"{"weight_overrides": {"components": {"a1": 0.9}}}"#),
        )
        .unwrap_err();
        assert_eq!(err.path(), Some("weight_overrides.components[a]"));
    }

    #[test]
    fn unknown_ids_rejected() {
        let (m, d) = setup();
        let err = evaluate(
            &m,
            &d,
            &scenario(r#"{"weight_overrides": {"top": {"zz": 0.1}}}"#),
        )
        .unwrap_err();
        assert_eq!(err.code(), "UnknownId");
        let err = evaluate(
            &m,
            &d,
            &scenario(r#"{"component_overrides": {"zz": {"raw": 1}}}"#),
        )
        .unwrap_err();
        assert_eq!(err.path(), Some("component_overrides.zz"));
    }

    #[test]
    fn normalized_overrides_drive_index() {
        let (m, d) = setup();
        let r = evaluate(
            &m,
            &d,
            &scenario(
                r#"{"component_overrides": {
                    "a1": {"normalized": 0}, "a2": {"normalized": 0}, "b1": {"normalized": 0}}}"#,
            ),
        )
        .unwrap();
        assert_eq!(r.aivi.get(), 0.0);
        let err = evaluate(
            &m,
            &d,
            &scenario(r#"{"component_overrides": {"a1": {"normalized": 1.5}}}"#),
        )
        .unwrap_err();
        assert_eq!(err.code(), "NotUnitInterval");
    }

    #[test]
    fn raw_override_normalizes_and_clamps() {
        let (m, d) = setup();
        let r = evaluate(
            &m,
            &d,
            &scenario(r#"{"component_overrides": {"b1": {"raw": 400}}}"#),
        )
        .unwrap();
        let b1 = &r.sub_index("b").unwrap().components[0];
        assert_eq!(b1.normalized.get(), 1.0);
        assert_eq!(b1.origin, ValueOrigin::RawOverride);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn override_fills_missing_component() {
        let (m, d) = setup();
        let d2 = Dataset::from_csv(&DATA.replace("rate,,2025,0.3,frac,s,t\n", "")).unwrap();
        assert_eq!(
            evaluate(&m, &d2, &Scenario::default()).unwrap_err().code(),
            "MissingComponent"
        );
        let with = scenario(r#"{"component_overrides": {"a2": {"raw": 0.3}}}"#);
        assert_eq!(
            evaluate(&m, &d2, &with).unwrap().aivi,
            evaluate(&m, &d, &Scenario::default()).unwrap().aivi
        );
    }
}
