//! Computation core for the AI Vulnerability Index.
//!
//! The index aggregates sub-index potentials with a weighted geometric mean:
//! `AIVI = 1 - Π Pot_i^w_i`. Each potential is one minus a weighted sum of
//! normalized component values computed from raw observations.
//!
//! Everything is generic over [`Scalar`] (`f64` or `f32`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the CLI and service use.

pub mod canonical;
pub mod compute;
pub mod coverage;
pub mod error;
pub mod export;
pub mod index;
pub mod indicators;
pub mod model;
pub mod observations;
pub mod period;
pub mod scalar;
pub mod scenario;
pub mod sensitivity;

pub use canonical::{from_json, to_canonical_json};
pub use compute::{compute_index, resolve_values, MissingStatus, ValueOrigin};
pub use coverage::{validate_dataset, CoverageReport, CoverageStatus};
pub use error::{Error, Result};
pub use export::index_series;
pub use index::{aivi, decompose, normalize, potential_sub_index, validate_weights};
pub use index::{BoundsKind, ClampPolicy, ClampSide};
pub use indicators::{hhi, max_share, top_k_share, ComponentKind};
pub use model::{parse_model, MissingPolicy, MODEL_VERSION};
pub use observations::{parse_observations, CSV_HEADER};
pub use period::{Granularity, Period};
pub use scalar::Scalar;
pub use scenario::{evaluate, prepare};
pub use sensitivity::{compare_aggregators, monte_carlo, tornado, Layer};

pub type UnitValue = index::UnitValue<f64>;
pub type NormalizationBounds = index::NormalizationBounds<f64>;
pub type WeightVector = index::WeightVector<f64>;
pub type Contribution = index::Contribution<f64>;
pub type ClampEvent = index::ClampEvent<f64>;
pub type ShareVector = indicators::ShareVector<f64>;
pub type Series = indicators::Series<f64>;
pub type IndexModel = model::IndexModel<f64>;
pub type SubIndexSpec = model::SubIndexSpec<f64>;
pub type ComponentSpec = model::ComponentSpec<f64>;
pub type Observation = observations::Observation<f64>;
pub type Dataset = observations::Dataset<f64>;
pub type ResolvedValues = compute::ResolvedValues<f64>;
pub type ComponentValue = compute::ComponentValue<f64>;
pub type SubIndexResult = compute::SubIndexResult<f64>;
pub type ComputeResult = compute::ComputeResult<f64>;
pub type Warning = compute::Warning<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type WeightOverrides = scenario::WeightOverrides<f64>;
pub type ComponentOverride = scenario::ComponentOverride<f64>;
pub type IndexSeries = export::IndexSeries<f64>;
pub type SensitivityReport = sensitivity::SensitivityReport<f64>;
pub type TornadoEntry = sensitivity::TornadoEntry<f64>;
pub type Aggregates = sensitivity::Aggregates<f64>;
