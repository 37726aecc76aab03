//! Raw component calculators: concentration, shares, levels, growth and
//! deceleration.
//!
//! Shares are fractions in `[0, 1]`, not the 0-10,000 point scale, so an HHI
//! is natively unit-interval.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::Period;
use crate::scalar::{ordered_sum, Scalar};

/// How the unlisted remainder of a market is treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualPolicy<T> {
    /// The remainder contributes nothing to concentration.
    Ignore,
    /// Listed shares must cover at least `min_coverage` of the market.
    Error { min_coverage: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareVector<T> {
    entries: Vec<(String, T)>,
    residual: ResidualPolicy<T>,
}

impl<T: Scalar> ShareVector<T> {
    pub fn new(entries: Vec<(String, T)>, residual: ResidualPolicy<T>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyShares);
        }
        for (entity, s) in &entries {
            if !s.is_finite() || *s < T::zero() || *s > T::one() {
                return Err(Error::InvalidShare {
                    entity: entity.clone(),
                    share: s.as_f64(),
                });
            }
        }
        let total = ordered_sum(entries.iter().map(|(_, s)| *s));
        if total > T::one() + T::lit(1e-9).max(T::weight_tolerance()) {
            return Err(Error::ShareSumExceeded(total.as_f64()));
        }
        Ok(ShareVector { entries, residual })
    }

    pub fn entries(&self) -> &[(String, T)] {
        &self.entries
    }

    pub fn coverage(&self) -> T {
        ordered_sum(self.entries.iter().map(|(_, s)| *s))
    }

    fn check_residual(&self) -> Result<()> {
        if let ResidualPolicy::Error { min_coverage } = self.residual {
            let coverage = self.coverage();
            if coverage < min_coverage {
                return Err(Error::ResidualTooLarge {
                    coverage: coverage.as_f64(),
                    floor: min_coverage.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Herfindahl-Hirschman index `Σ s²`.
///
/// Accumulated as if in twice the working precision (compensated dot
/// product), so `n` equal shares of `1/n` give `1/n` exactly for the share
/// counts seen in practice.
pub fn hhi<T: Scalar>(shares: &ShareVector<T>) -> Result<T> {
    shares.check_residual()?;
    Ok(dot2(shares.entries.iter().map(|(_, s)| *s)))
}

/// `Σ x²` with error-free products and sums (Ogita, Rump and Oishi's Dot2).
fn dot2<T: Scalar>(xs: impl Iterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut err = T::zero();
    for x in xs {
        let p = x * x;
        let p_err = x.mul_add(x, -p);
        // TwoSum
        let s = sum + p;
        let z = s - sum;
        let s_err = (sum - (s - z)) + (p - z);
        sum = s;
        err = err + (p_err + s_err);
    }
    sum + err
}

/// Largest single share.
pub fn max_share<T: Scalar>(shares: &ShareVector<T>) -> Result<T> {
    shares.check_residual()?;
    Ok(shares
        .entries
        .iter()
        .map(|(_, s)| *s)
        .fold(T::zero(), T::max))
}

/// Fraction of total volume held by the `k` largest entities.
pub fn top_k_share<T: Scalar>(volumes: &[(String, T)], k: usize) -> Result<T> {
    if volumes.is_empty() {
        return Err(Error::EmptyList);
    }
    if k == 0 {
        return Err(Error::InvalidK);
    }
    for (entity, v) in volumes {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput(v.as_f64()));
        }
        if *v < T::zero() {
            return Err(Error::NegativeVolume {
                entity: entity.clone(),
                volume: v.as_f64(),
            });
        }
    }
    let mut sorted: Vec<T> = volumes.iter().map(|(_, v)| *v).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite volumes"));
    let total = ordered_sum(sorted.iter().copied());
    if total == T::zero() {
        return Err(Error::ZeroTotalVolume);
    }
    if k >= sorted.len() {
        return Ok(T::one());
    }
    let top = ordered_sum(sorted[..k].iter().copied());
    Ok((top / total).min(T::one()))
}

/// Time series with strictly increasing periods of one granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    points: Vec<(Period, T)>,
}

impl<T: Scalar> Series<T> {
    pub fn new(mut points: Vec<(Period, T)>) -> Result<Self> {
        for (_, v) in &points {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput(v.as_f64()));
            }
        }
        points.sort_by_key(|(p, _)| *p);
        for pair in points.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::DuplicatePeriod(pair[0].0.to_string()));
            }
            if pair[0].0.granularity() != pair[1].0.granularity() {
                return Err(Error::MixedGranularity);
            }
        }
        Ok(Series { points })
    }

    pub fn points(&self) -> &[(Period, T)] {
        &self.points
    }

    pub fn get(&self, period: Period) -> Option<T> {
        self.points
            .binary_search_by_key(&period, |(p, _)| *p)
            .ok()
            .map(|i| self.points[i].1)
    }
}

/// Period-over-period growth `(v_t - v_{t-1}) / v_{t-1}`.
pub fn growth_rate<T: Scalar>(series: &Series<T>, period: Period) -> Result<T> {
    let current = series
        .get(period)
        .ok_or_else(|| Error::MissingPeriod(period.to_string()))?;
    let prev = period.predecessor();
    let base = series
        .get(prev)
        .ok_or_else(|| Error::MissingPredecessor(prev.to_string()))?;
    if base <= T::zero() {
        return Err(Error::NonPositiveBase(prev.to_string()));
    }
    Ok((current - base) / base)
}

/// Slowdown of growth, `clamp(1 - g_t / g_{t-1}, 0, 1)`.
///
/// 0 means steady or accelerating growth; 1 means growth stalled or reversed.
pub fn deceleration<T: Scalar>(series: &Series<T>, period: Period) -> Result<T> {
    let history = |e: Error| match e {
        Error::MissingPeriod(_) | Error::MissingPredecessor(_) => {
            Error::InsufficientHistory(period.to_string())
        }
        e => e,
    };
    if series.get(period).is_none() {
        return Err(Error::MissingPeriod(period.to_string()));
    }
    let g_now = growth_rate(series, period).map_err(history)?;
    let g_prev = growth_rate(series, period.predecessor()).map_err(history)?;
    if g_prev <= T::zero() {
        return Err(Error::NonPositivePriorGrowth(period.to_string()));
    }
    let d = T::one() - g_now / g_prev;
    Ok(d.max(T::zero()).min(T::one()) + T::zero())
}

/// Which calculator produces a component's raw value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Hhi,
    MaxShare,
    TopKShare,
    Level,
    GrowthRate,
    Deceleration,
}

impl ComponentKind {
    /// Number of preceding periods the calculator reads.
    pub fn history_len(self) -> usize {
        match self {
            ComponentKind::GrowthRate => 1,
            ComponentKind::Deceleration => 2,
            _ => 0,
        }
    }

    pub fn uses_entities(self) -> bool {
        matches!(
            self,
            ComponentKind::Hhi | ComponentKind::MaxShare | ComponentKind::TopKShare
        )
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ComponentKind::Hhi => "hhi",
            ComponentKind::MaxShare => "max_share",
            ComponentKind::TopKShare => "top_k_share",
            ComponentKind::Level => "level",
            ComponentKind::GrowthRate => "growth_rate",
            ComponentKind::Deceleration => "deceleration",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    #[default]
    Ignore,
    Error,
}

/// Per-component calculator parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct ComponentParams<T> {
    /// Number of leading entities for `top_k_share`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_policy: Option<ResidualMode>,
    /// Coverage floor when `residual_policy` is `error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_coverage: Option<T>,
}

pub const DEFAULT_TOP_K: usize = 3;

impl<T: Scalar> ComponentParams<T> {
    pub fn is_empty(&self) -> bool {
        self.k.is_none() && self.residual_policy.is_none() && self.min_coverage.is_none()
    }

    /// Reject parameters that the kind does not read.
    pub fn check(&self, kind: ComponentKind) -> Result<()> {
        let schema = |path: &str, message: String| Error::SchemaViolation {
            path: path.to_string(),
            message,
        };
        if self.k.is_some() && kind != ComponentKind::TopKShare {
            return Err(schema("k", format!("not accepted by kind `{kind}`")));
        }
        if self.k == Some(0) {
            return Err(schema("k", "must be at least 1".into()));
        }
        let share_kind = matches!(kind, ComponentKind::Hhi | ComponentKind::MaxShare);
        if (self.residual_policy.is_some() || self.min_coverage.is_some()) && !share_kind {
            return Err(schema(
                "residual_policy",
                format!("not accepted by kind `{kind}`"),
            ));
        }
        match (self.residual_policy, self.min_coverage) {
            (Some(ResidualMode::Error), None) => Err(schema(
                "min_coverage",
                "required when residual_policy is `error`".into(),
            )),
            (Some(ResidualMode::Ignore) | None, Some(_)) => Err(schema(
                "min_coverage",
                "only meaningful when residual_policy is `error`".into(),
            )),
            (_, Some(c)) if !(c >= T::zero() && c <= T::one()) => {
                Err(schema("min_coverage", "must be in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    fn residual(&self) -> ResidualPolicy<T> {
        match (self.residual_policy, self.min_coverage) {
            (Some(ResidualMode::Error), Some(min_coverage)) => {
                ResidualPolicy::Error { min_coverage }
            }
            _ => ResidualPolicy::Ignore,
        }
    }
}

/// Data handed to a calculator.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload<T> {
    /// Per-entity values (shares or volumes) for a single period.
    Entities(Vec<(String, T)>),
    /// Entity-less values across periods.
    Series(Series<T>),
}

impl<T> Payload<T> {
    fn shape(&self) -> &'static str {
        match self {
            Payload::Entities(_) => "per-entity",
            Payload::Series(_) => "series",
        }
    }
}

/// Dispatch a component to its calculator.
pub fn component_raw_value<T: Scalar>(
    kind: ComponentKind,
    payload: &Payload<T>,
    period: Period,
    params: &ComponentParams<T>,
) -> Result<T> {
    let mismatch = || Error::ShapeMismatch {
        kind: kind.to_string(),
        found: payload.shape().to_string(),
    };
    match (kind, payload) {
        (ComponentKind::Hhi, Payload::Entities(e)) => {
            hhi(&ShareVector::new(e.clone(), params.residual())?)
        }
        (ComponentKind::MaxShare, Payload::Entities(e)) => {
            max_share(&ShareVector::new(e.clone(), params.residual())?)
        }
        (ComponentKind::TopKShare, Payload::Entities(e)) => {
            top_k_share(e, params.k.unwrap_or(DEFAULT_TOP_K))
        }
        (ComponentKind::Level, Payload::Series(s)) => s
            .get(period)
            .ok_or_else(|| Error::MissingPeriod(period.to_string())),
        (ComponentKind::GrowthRate, Payload::Series(s)) => growth_rate(s, period),
        (ComponentKind::Deceleration, Payload::Series(s)) => deceleration(s, period),
        _ => Err(mismatch()),
    }
}
