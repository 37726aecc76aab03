//! Declarative index model: sub-indexes, components, weights, bounds and
//! policies, loaded from strict versioned JSON.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{from_json, to_canonical_json};
use crate::error::{Error, Result};
use crate::index::{validate_weights, ClampPolicy, NormalizationBounds, WeightVector};
use crate::indicators::{ComponentKind, ComponentParams};
use crate::scalar::Scalar;

pub const MODEL_VERSION: u32 = 1;

/// Behaviour when a component has no usable data for the requested period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Error,
    /// Drop the component, rescale the remaining weights and warn.
    RenormalizeWarn,
}

/// Bounds as written in the model: fixed limits, or `"empirical"` to take
/// the observed range from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum BoundsSpec<T> {
    Resolve(EmpiricalMarker),
    Fixed(NormalizationBounds<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmpiricalMarker {
    #[serde(rename = "empirical")]
    Empirical,
}

impl<T> BoundsSpec<T> {
    pub const EMPIRICAL: BoundsSpec<T> = BoundsSpec::Resolve(EmpiricalMarker::Empirical);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec<T> {
    pub id: String,
    pub indicator_id: String,
    pub kind: ComponentKind,
    pub weight: T,
    pub bounds: BoundsSpec<T>,
    pub params: ComponentParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubIndexSpec<T> {
    pub id: String,
    components: Vec<ComponentSpec<T>>,
    weights: WeightVector<T>,
}

impl<T: Scalar> SubIndexSpec<T> {
    pub fn components(&self) -> &[ComponentSpec<T>] {
        &self.components
    }

    /// Component weights, in component order.
    pub fn weights(&self) -> &WeightVector<T> {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexModel<T> {
    pub version: u32,
    sub_indexes: Vec<SubIndexSpec<T>>,
    top_weights: WeightVector<T>,
    pub clamp_policy: ClampPolicy,
    pub missing_policy: MissingPolicy,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct RawModel<T> {
    version: u32,
    #[serde(default)]
    clamp_policy: ClampPolicy,
    #[serde(default)]
    missing_policy: MissingPolicy,
    top_weights: BTreeMap<String, T>,
    sub_indexes: Vec<RawSubIndex<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct RawSubIndex<T> {
    id: String,
    components: Vec<RawComponent<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct RawComponent<T> {
    id: String,
    indicator_id: String,
    kind: ComponentKind,
    weight: T,
    #[serde(default)]
    bounds: Option<BoundsSpec<T>>,
    #[serde(default, skip_serializing_if = "ComponentParams::is_empty")]
    params: ComponentParams<T>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

/// Parse and validate a model file.
pub fn parse_model<T: Scalar>(text: &str) -> Result<IndexModel<T>> {
    let raw: RawModel<T> = from_json(text)?;
    IndexModel::from_raw(raw)
}

impl<T: Scalar> IndexModel<T> {
    fn from_raw(raw: RawModel<T>) -> Result<Self> {
        if raw.version != MODEL_VERSION {
            return Err(schema(
                "version",
                format!(
                    "unsupported version {} (expected {MODEL_VERSION})",
                    raw.version
                ),
            ));
        }
        if raw.sub_indexes.is_empty() {
            return Err(schema("sub_indexes", "at least one sub-index is required"));
        }
        let mut sub_indexes = Vec::with_capacity(raw.sub_indexes.len());
        let mut sub_ids = BTreeSet::new();
        let mut component_ids = BTreeSet::new();
        for (i, sub) in raw.sub_indexes.into_iter().enumerate() {
            let path = format!("sub_indexes[{i}]");
            if !sub_ids.insert(sub.id.clone()) {
                return Err(schema(
                    format!("{path}.id"),
                    format!("duplicate sub-index id `{}`", sub.id),
                ));
            }
            if sub.components.is_empty() {
                return Err(schema(
                    format!("{path}.components"),
                    "at least one component is required",
                ));
            }
            let mut components = Vec::with_capacity(sub.components.len());
            for (j, c) in sub.components.into_iter().enumerate() {
                let cpath = format!("{path}.components[{j}]");
                if !component_ids.insert(c.id.clone()) {
                    return Err(schema(
                        format!("{cpath}.id"),
                        format!("duplicate component id `{}`", c.id),
                    ));
                }
                c.params.check(c.kind).map_err(|e| match e {
                    Error::SchemaViolation { path, message } => {
                        schema(format!("{cpath}.params.{path}"), message)
                    }
                    e => e.at(cpath.clone()),
                })?;
                let bounds = match (c.bounds, c.kind) {
                    (Some(b), _) => b,
                    (None, ComponentKind::Level) => {
                        return Err(schema(
                            format!("{cpath}.bounds"),
                            "level components need explicit bounds or \"empirical\"",
                        ))
                    }
                    (None, _) => BoundsSpec::Fixed(NormalizationBounds::unit()),
                };
                components.push(ComponentSpec {
                    id: c.id,
                    indicator_id: c.indicator_id,
                    kind: c.kind,
                    weight: c.weight,
                    bounds,
                    params: c.params,
                });
            }
            let weights = validate_weights(
                components
                    .iter()
                    .map(|c| (c.id.clone(), c.weight))
                    .collect(),
                T::weight_tolerance(),
            )
            .map_err(|e| e.at(format!("{path}.components")))?;
            sub_indexes.push(SubIndexSpec {
                id: sub.id,
                components,
                weights,
            });
        }
        let top_ids: BTreeSet<String> = raw.top_weights.keys().cloned().collect();
        if top_ids != sub_ids {
            let missing: Vec<_> = sub_ids.difference(&top_ids).cloned().collect();
            let extra: Vec<_> = top_ids.difference(&sub_ids).cloned().collect();
            return Err(schema(
                "top_weights",
                format!("must list exactly the sub-index ids (missing {missing:?}, unexpected {extra:?})"),
            ));
        }
        // weights follow sub-index order so parse -> serialize -> parse is stable
        let top_weights = validate_weights(
            sub_indexes
                .iter()
                .map(|s| (s.id.clone(), raw.top_weights[&s.id]))
                .collect(),
            T::weight_tolerance(),
        )
        .map_err(|e| e.at("top_weights"))?;
        Ok(IndexModel {
            version: raw.version,
            sub_indexes,
            top_weights,
            clamp_policy: raw.clamp_policy,
            missing_policy: raw.missing_policy,
        })
    }

    fn to_raw(&self) -> RawModel<T> {
        RawModel {
            version: self.version,
            clamp_policy: self.clamp_policy,
            missing_policy: self.missing_policy,
            top_weights: self
                .top_weights
                .entries()
                .iter()
                .map(|(id, w)| (id.clone(), *w))
                .collect(),
            sub_indexes: self
                .sub_indexes
                .iter()
                .map(|s| RawSubIndex {
                    id: s.id.clone(),
                    components: s
                        .components
                        .iter()
                        .map(|c| RawComponent {
                            id: c.id.clone(),
                            indicator_id: c.indicator_id.clone(),
                            kind: c.kind,
                            weight: c.weight,
                            bounds: Some(c.bounds),
                            params: c.params.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Canonical JSON: sorted keys, shortest round-trip floats, explicit bounds.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(&self.to_raw())
    }

    pub fn sub_indexes(&self) -> &[SubIndexSpec<T>] {
        &self.sub_indexes
    }

    pub fn top_weights(&self) -> &WeightVector<T> {
        &self.top_weights
    }

    pub fn components(&self) -> impl Iterator<Item = (&SubIndexSpec<T>, &ComponentSpec<T>)> {
        self.sub_indexes
            .iter()
            .flat_map(|s| s.components.iter().map(move |c| (s, c)))
    }

    pub fn component(&self, id: &str) -> Option<&ComponentSpec<T>> {
        self.components().map(|(_, c)| c).find(|c| c.id == id)
    }

    pub fn indicator_ids(&self) -> BTreeSet<&str> {
        self.components()
            .map(|(_, c)| c.indicator_id.as_str())
            .collect()
    }

    /// Copy of the model with the given top weights (already validated).
    pub(crate) fn with_top_weights(&self, top_weights: WeightVector<T>) -> Result<Self> {
        let expected: Vec<&str> = self.top_weights.ids().collect();
        let got: Vec<&str> = top_weights.ids().collect();
        if expected != got {
            return Err(Error::IdMismatch(
                "top weights must keep sub-index order".into(),
            ));
        }
        Ok(IndexModel {
            top_weights,
            ..self.clone()
        })
    }

    /// Copy of the model with one sub-index's component weights replaced.
    pub(crate) fn with_component_weights(
        &self,
        sub_index: usize,
        weights: WeightVector<T>,
    ) -> Result<Self> {
        let mut model = self.clone();
        let sub = &mut model.sub_indexes[sub_index];
        let expected: Vec<&str> = sub.weights.ids().collect();
        let got: Vec<&str> = weights.ids().collect();
        if expected != got {
            return Err(Error::IdMismatch(format!(
                "component weights for `{}` must keep component order",
                sub.id
            )));
        }
        for (c, (_, w)) in sub.components.iter_mut().zip(weights.entries()) {
            c.weight = *w;
        }
        sub.weights = weights;
        Ok(model)
    }
}
