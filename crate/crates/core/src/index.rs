//! Aggregation mathematics: min-max normalization, weighted-average
//! potentials and the geometric vulnerability index.
//!
//! Every routine here is pure and deterministic.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};

/// A dimensionless value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct UnitValue<T>(T);

impl<T: Scalar> UnitValue<T> {
    pub fn new(value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFiniteInput(value.as_f64()));
        }
        if value < T::zero() || value > T::one() {
            return Err(Error::NotUnitInterval(value.as_f64()));
        }
        // collapse -0.0 so serialized output never shows a signed zero
        Ok(UnitValue(value + T::zero()))
    }

    pub fn zero() -> Self {
        UnitValue(T::zero())
    }

    pub fn one() -> Self {
        UnitValue(T::one())
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }

    /// `1 - self`, which is again in the unit interval.
    pub fn complement(self) -> Self {
        UnitValue(T::one() - self.0)
    }

    pub(crate) fn clamped(value: T) -> Self {
        UnitValue(value.max(T::zero()).min(T::one()) + T::zero())
    }
}

impl<'de, T: Scalar> Deserialize<'de> for UnitValue<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = T::deserialize(deserializer)?;
        UnitValue::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsKind {
    Theoretical,
    Empirical,
}

/// Limits for min-max normalization, with `min < max` strictly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds<T>", bound = "T: Scalar")]
pub struct NormalizationBounds<T> {
    min: T,
    max: T,
    kind: BoundsKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds<T> {
    min: T,
    max: T,
    kind: BoundsKind,
}

impl<T: Scalar> TryFrom<RawBounds<T>> for NormalizationBounds<T> {
    type Error = Error;

    fn try_from(raw: RawBounds<T>) -> Result<Self> {
        NormalizationBounds::new(raw.min, raw.max, raw.kind)
    }
}

impl<T: Scalar> NormalizationBounds<T> {
    pub fn new(min: T, max: T, kind: BoundsKind) -> Result<Self> {
        for v in [min, max] {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput(v.as_f64()));
            }
        }
        if min >= max {
            return Err(Error::DegenerateBounds {
                min: min.as_f64(),
                max: max.as_f64(),
            });
        }
        Ok(NormalizationBounds { min, max, kind })
    }

    /// Theoretical `[0, 1]` bounds, used by shares, HHI and rates.
    pub fn unit() -> Self {
        NormalizationBounds {
            min: T::zero(),
            max: T::one(),
            kind: BoundsKind::Theoretical,
        }
    }

    pub fn min(&self) -> T {
        self.min
    }

    pub fn max(&self) -> T {
        self.max
    }

    pub fn kind(&self) -> BoundsKind {
        self.kind
    }
}

/// What to do with a raw value that falls outside its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    #[default]
    ClampWarn,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampSide {
    Min,
    Max,
}

/// Record of a raw value pulled back onto its bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent<T> {
    pub raw: T,
    pub side: ClampSide,
    pub bound: T,
}

/// Min-max normalization `(x - min) / (max - min)`.
///
/// Values outside the bounds are clamped (with an event) or rejected,
/// depending on `policy`. The endpoints map to exactly 0 and 1.
pub fn normalize<T: Scalar>(
    x: T,
    bounds: &NormalizationBounds<T>,
    policy: ClampPolicy,
) -> Result<(UnitValue<T>, Option<ClampEvent<T>>)> {
    if !x.is_finite() {
        return Err(Error::NonFiniteInput(x.as_f64()));
    }
    let side = if x < bounds.min {
        Some((ClampSide::Min, bounds.min, T::zero()))
    } else if x > bounds.max {
        Some((ClampSide::Max, bounds.max, T::one()))
    } else {
        None
    };
    match (side, policy) {
        (None, _) => {
            let n = (x - bounds.min) / (bounds.max - bounds.min);
            Ok((UnitValue::clamped(n), None))
        }
        (Some(_), ClampPolicy::Error) => Err(Error::OutOfRange {
            value: x.as_f64(),
            min: bounds.min.as_f64(),
            max: bounds.max.as_f64(),
        }),
        (Some((side, bound, n)), ClampPolicy::ClampWarn) => Ok((
            UnitValue(n),
            Some(ClampEvent {
                raw: x,
                side,
                bound,
            }),
        )),
    }
}

/// Ordered, validated weights: every entry non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T> {
    entries: Vec<(String, T)>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn entries(&self) -> &[(String, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.entries.iter().map(|(_, w)| *w)
    }

    pub fn get(&self, id: &str) -> Option<T> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, w)| *w)
    }

    /// Equal weighting over `ids`.
    pub fn equal<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::EmptyWeights);
        }
        let w = T::one() / T::from_usize(ids.len()).expect("length fits in a float");
        validate_weights(
            ids.into_iter().map(|id| (id, w)).collect(),
            T::weight_tolerance(),
        )
    }

    /// Rescale entries so they sum to one.
    ///
    /// Only the missing-data policy, tornado perturbation and sampling call
    /// this; configured weights are never silently renormalized.
    pub(crate) fn renormalized(entries: Vec<(String, T)>) -> Result<Self> {
        let sum = ordered_sum(entries.iter().map(|(_, w)| *w));
        if sum.is_nan() || sum <= T::zero() {
            return Err(Error::WeightSumViolation {
                sum: sum.as_f64(),
                tolerance: T::weight_tolerance().as_f64(),
            });
        }
        let entries = entries.into_iter().map(|(id, w)| (id, w / sum)).collect();
        validate_weights(entries, T::weight_tolerance())
    }
}

impl<T: Scalar> Serialize for WeightVector<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (id, w) in &self.entries {
            map.serialize_entry(id, w)?;
        }
        map.end()
    }
}

/// Check a candidate weight list against the simplex constraint.
///
/// Never renormalizes: a sum off by more than `tolerance` is an error.
pub fn validate_weights<T: Scalar>(
    entries: Vec<(String, T)>,
    tolerance: T,
) -> Result<WeightVector<T>> {
    if entries.is_empty() {
        return Err(Error::EmptyWeights);
    }
    let mut seen = std::collections::BTreeSet::new();
    for (id, w) in &entries {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
        if !w.is_finite() {
            return Err(Error::NonFiniteInput(w.as_f64()).at(id.clone()));
        }
        if *w < T::zero() {
            return Err(Error::NegativeWeight {
                id: id.clone(),
                weight: w.as_f64(),
            });
        }
    }
    let sum = ordered_sum(entries.iter().map(|(_, w)| *w));
    if (sum - T::one()).abs() > tolerance {
        return Err(Error::WeightSumViolation {
            sum: sum.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    let entries = entries
        .into_iter()
        .map(|(id, w)| (id, w + T::zero()))
        .collect();
    Ok(WeightVector { entries })
}

/// Potential of one input: `1 - Σ w_j · n_j` over its normalized components.
///
/// `normalized[j]` pairs positionally with the j-th weight entry.
pub fn potential_sub_index<T: Scalar>(
    normalized: &[UnitValue<T>],
    weights: &WeightVector<T>,
) -> Result<UnitValue<T>> {
    if normalized.len() != weights.len() {
        return Err(Error::IdMismatch(format!(
            "{} normalized values for {} weights",
            normalized.len(),
            weights.len()
        )));
    }
    Ok(weighted_potential(normalized, weights.values()))
}

pub(crate) fn weighted_potential<T: Scalar>(
    normalized: &[UnitValue<T>],
    weights: impl Iterator<Item = T>,
) -> UnitValue<T> {
    // weighted mean of the complements: equals 1 - Σ w·n when Σ w = 1, and
    // lands exactly on 0 or 1 when every component sits at an endpoint even
    // though Σ w is only 1 within rounding
    let (mut num, mut den) = (T::zero(), T::zero());
    for (n, w) in normalized.iter().zip(weights) {
        num = num + w * (T::one() - n.get());
        den = den + w;
    }
    if den <= T::zero() {
        return UnitValue::one();
    }
    UnitValue::clamped(num / den)
}

pub fn vulnerability_from_potential<T: Scalar>(potential: UnitValue<T>) -> UnitValue<T> {
    potential.complement()
}

/// Log-scale contribution of one input to the aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contribution<T> {
    Finite(T),
    /// A zero potential with positive weight: the product collapses to zero.
    Infinite,
}

impl<T: Scalar> Contribution<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Contribution::Finite(c) => Some(c),
            Contribution::Infinite => None,
        }
    }
}

impl<T: Scalar> Serialize for Contribution<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Contribution::Finite(c) => c.serialize(serializer),
            Contribution::Infinite => serializer.serialize_str("+inf"),
        }
    }
}

/// Pair potentials with weights by id, in lexicographic id order so the
/// result does not depend on input order.
fn paired<'a, T: Scalar>(
    potentials: &'a [(String, UnitValue<T>)],
    weights: &'a WeightVector<T>,
) -> Result<Vec<(&'a str, UnitValue<T>, T)>> {
    if potentials.len() != weights.len() {
        return Err(Error::IdMismatch(format!(
            "{} potentials for {} weights",
            potentials.len(),
            weights.len()
        )));
    }
    let by_id: BTreeMap<&str, UnitValue<T>> =
        potentials.iter().map(|(id, p)| (id.as_str(), *p)).collect();
    if by_id.len() != potentials.len() {
        return Err(Error::IdMismatch("duplicate potential id".into()));
    }
    let mut out = Vec::with_capacity(potentials.len());
    for (id, w) in weights.entries() {
        let p = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no potential for weight `{id}`")))?;
        out.push((id.as_str(), *p, *w));
    }
    out.sort_by(|a, b| a.0.cmp(b.0));
    Ok(out)
}

fn contribution<T: Scalar>(potential: UnitValue<T>, weight: T) -> Contribution<T> {
    // 0^0 := 1, so a zero weight is a no-op whatever the potential
    if weight == T::zero() {
        return Contribution::Finite(T::zero());
    }
    if potential.get() == T::zero() {
        return Contribution::Infinite;
    }
    let ln = potential.get().ln();
    if ln == T::zero() {
        Contribution::Finite(T::zero())
    } else {
        Contribution::Finite(-weight * ln)
    }
}

/// Per-input contributions `c_i = -w_i · ln(Pot_i)`, returned in weight order.
///
/// `exp(-Σ c_i) = 1 - AIVI`.
pub fn decompose<T: Scalar>(
    potentials: &[(String, UnitValue<T>)],
    weights: &WeightVector<T>,
) -> Result<Vec<(String, Contribution<T>)>> {
    let pairs = paired(potentials, weights)?;
    let by_id: BTreeMap<&str, Contribution<T>> = pairs
        .iter()
        .map(|(id, p, w)| (*id, contribution(*p, *w)))
        .collect();
    Ok(weights
        .ids()
        .map(|id| (id.to_string(), by_id[id]))
        .collect())
}

/// AIVI = `1 - Π Pot_i^{w_i}`, evaluated in log space.
///
/// A zero potential carrying positive weight yields exactly 1.
pub fn aivi<T: Scalar>(
    potentials: &[(String, UnitValue<T>)],
    weights: &WeightVector<T>,
) -> Result<UnitValue<T>> {
    let pairs = paired(potentials, weights)?;
    Ok(geometric_vulnerability(
        pairs.into_iter().map(|(_, p, w)| (p, w)),
    ))
}

/// `1 - Π p^w` over pairs in the given order.
pub(crate) fn geometric_vulnerability<T: Scalar>(
    pairs: impl IntoIterator<Item = (UnitValue<T>, T)>,
) -> UnitValue<T> {
    let mut log_sum = T::zero();
    for (p, w) in pairs {
        match contribution(p, w) {
            Contribution::Infinite => return UnitValue::one(),
            Contribution::Finite(c) => log_sum = log_sum - c,
        }
    }
    UnitValue::clamped(-log_sum.exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(x: f64) -> UnitValue<f64> {
        UnitValue::new(x).unwrap()
    }

    fn wv(ws: &[f64]) -> WeightVector<f64> {
        let entries = ws
            .iter()
            .enumerate()
            .map(|(i, w)| (format!("s{i}"), *w))
            .collect();
        validate_weights(entries, 1e-9).unwrap()
    }

    fn pots(ps: &[f64]) -> Vec<(String, UnitValue<f64>)> {
        ps.iter()
            .enumerate()
            .map(|(i, p)| (format!("s{i}"), uv(*p)))
            .collect()
    }

    #[test]
    fn unit_value_rejects_out_of_range() {
        assert!(UnitValue::new(-0.1).is_err());
        assert!(UnitValue::new(1.0000001).is_err());
        assert!(UnitValue::new(f64::NAN).is_err());
        assert!(UnitValue::new(f64::INFINITY).is_err());
        assert_eq!(
            UnitValue::new(-0.0f64).unwrap().get().to_bits(),
            0.0f64.to_bits()
        );
    }

    #[test]
    fn bounds_reject_degenerate() {
        assert!(matches!(
            NormalizationBounds::new(1.0, 1.0, BoundsKind::Empirical),
            Err(Error::DegenerateBounds { .. })
        ));
        assert!(NormalizationBounds::new(2.0, 1.0, BoundsKind::Empirical).is_err());
        assert!(NormalizationBounds::new(0.0, f64::INFINITY, BoundsKind::Theoretical).is_err());
    }

    #[test]
    fn normalize_examples() {
        let b = NormalizationBounds::new(0.0, 10.0, BoundsKind::Theoretical).unwrap();
        let (n, w) = normalize(0.0, &b, ClampPolicy::Error).unwrap();
        assert_eq!((n.get(), w), (0.0, None));
        let (n, _) = normalize(5.0, &b, ClampPolicy::Error).unwrap();
        assert_eq!(n.get(), 0.5);
        let (n, w) = normalize(12.0, &b, ClampPolicy::ClampWarn).unwrap();
        assert_eq!(n.get(), 1.0);
        let w = w.unwrap();
        assert_eq!((w.raw, w.side, w.bound), (12.0, ClampSide::Max, 10.0));
        assert!(matches!(
            normalize(12.0, &b, ClampPolicy::Error),
            Err(Error::OutOfRange { .. })
        ));
        let (n, w) = normalize(-3.0, &b, ClampPolicy::ClampWarn).unwrap();
        assert_eq!(n.get(), 0.0);
        assert_eq!(w.unwrap().side, ClampSide::Min);
        assert!(matches!(
            normalize(f64::NAN, &b, ClampPolicy::ClampWarn),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn normalize_endpoints_exact() {
        let b = NormalizationBounds::new(0.1, 0.7, BoundsKind::Empirical).unwrap();
        assert_eq!(normalize(0.1, &b, ClampPolicy::Error).unwrap().0.get(), 0.0);
        assert_eq!(normalize(0.7, &b, ClampPolicy::Error).unwrap().0.get(), 1.0);
    }

    #[test]
    fn validate_weights_examples() {
        assert!(validate_weights((0..5).map(|i| (format!("w{i}"), 0.2)).collect(), 1e-9).is_ok());
        assert!(matches!(
            validate_weights(vec![("a".into(), 0.5), ("b".into(), 0.6)], 1e-9),
            Err(Error::WeightSumViolation { .. })
        ));
        let single = validate_weights(vec![("only".into(), 1.0)], 1e-9).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(
            validate_weights::<f64>(vec![], 1e-9),
            Err(Error::EmptyWeights)
        );
        assert!(matches!(
            validate_weights(vec![("a".into(), -0.5), ("b".into(), 1.5)], 1e-9),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            validate_weights(vec![("a".into(), 0.5), ("a".into(), 0.5)], 1e-9),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn validate_weights_does_not_renormalize() {
        let w = validate_weights(vec![("a".into(), 0.5), ("b".into(), 0.5 + 5e-10)], 1e-9).unwrap();
        assert_eq!(w.get("b"), Some(0.5 + 5e-10));
    }

    #[test]
    fn thirds_pass_tolerance() {
        let t = 0.3333333333333333;
        assert!(validate_weights(
            vec![("a".into(), t), ("b".into(), t), ("c".into(), t)],
            1e-9
        )
        .is_ok());
    }

    #[test]
    fn potential_examples() {
        let w = wv(&[0.5, 0.5]);
        assert_eq!(
            potential_sub_index(&[uv(0.0), uv(0.0)], &w).unwrap().get(),
            1.0
        );
        assert_eq!(
            potential_sub_index(&[uv(1.0), uv(1.0)], &w).unwrap().get(),
            0.0
        );
        assert_eq!(
            potential_sub_index(&[uv(0.4), uv(0.6)], &w).unwrap().get(),
            0.5
        );
        assert!(potential_sub_index(&[uv(0.4)], &w).is_err());
    }

    #[test]
    fn vulnerability_examples() {
        assert_eq!(vulnerability_from_potential(uv(1.0)).get(), 0.0);
        assert_eq!(vulnerability_from_potential(uv(0.0)).get(), 1.0);
        assert_eq!(vulnerability_from_potential(uv(0.25)).get(), 0.75);
    }

    // 1 - exp(0.5 ln 0.9 + 0.5 ln 0.6), evaluated at 40 significant digits
    const AIVI_09_06: f64 = 0.265_153_077_165_046_57;
    const C_09: f64 = 0.052_680_257_828_913_15;
    const C_06: f64 = 0.255_412_811_882_995_34;

    #[test]
    fn aivi_examples() {
        let w = wv(&[0.5, 0.5]);
        assert_eq!(aivi(&pots(&[1.0, 1.0]), &w).unwrap().get(), 0.0);
        assert_eq!(aivi(&pots(&[0.0, 0.7]), &w).unwrap().get(), 1.0);
        let a = aivi(&pots(&[0.9, 0.6]), &w).unwrap().get();
        assert!((a - AIVI_09_06).abs() < 1e-15, "{a}");
        assert!((a - 0.2651531).abs() < 1e-7);
    }

    #[test]
    fn aivi_zero_weight_ignores_zero_potential() {
        let w = wv(&[0.0, 1.0]);
        assert_eq!(aivi(&pots(&[0.0, 0.5]), &w).unwrap().get(), 0.5);
    }

    #[test]
    fn aivi_id_mismatch() {
        let w = wv(&[0.5, 0.5]);
        let p = vec![("s0".to_string(), uv(0.5)), ("zz".to_string(), uv(0.5))];
        assert!(matches!(aivi(&p, &w), Err(Error::IdMismatch(_))));
        assert!(matches!(aivi(&pots(&[0.5]), &w), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn decompose_examples() {
        let w = wv(&[0.5, 0.5]);
        let c = decompose(&pots(&[0.9, 0.6]), &w).unwrap();
        let c0 = c[0].1.finite().unwrap();
        let c1 = c[1].1.finite().unwrap();
        assert!((c0 - C_09).abs() < 1e-15);
        assert!((c1 - C_06).abs() < 1e-15);
        assert!((c0 + c1 - 0.3080931).abs() < 1e-7);
        assert!(((-(c0 + c1)).exp() - 0.7348469).abs() < 1e-7);

        let c = decompose(&pots(&[1.0, 1.0]), &w).unwrap();
        assert!(c.iter().all(|(_, c)| *c == Contribution::Finite(0.0)));

        let c = decompose(&pots(&[0.0, 0.3]), &wv(&[0.0, 1.0])).unwrap();
        assert_eq!(c[0].1, Contribution::Finite(0.0));
        let c = decompose(&pots(&[0.0, 0.3]), &w).unwrap();
        assert_eq!(c[0].1, Contribution::Infinite);
    }

    #[test]
    fn works_in_f32() {
        let w: WeightVector<f32> = WeightVector::equal(["a", "b", "c"]).unwrap();
        let p: Vec<(String, UnitValue<f32>)> = ["a", "b", "c"]
            .iter()
            .map(|id| (id.to_string(), UnitValue::new(0.4f32).unwrap()))
            .collect();
        let a = aivi(&p, &w).unwrap().get();
        assert!((a - 0.6).abs() < 1e-6);
    }

    #[test]
    fn weight_vector_serializes_as_map() {
        let w = wv(&[0.25, 0.75]);
        assert_eq!(
            serde_json::to_string(&w).unwrap(),
            r#"{"s0":0.25,"s1":0.75}"#
        );
    }
}
