//! Weight sensitivity: Dirichlet sampling over the weight simplex, Monte
//! Carlo summaries, one-at-a-time tornado analysis and a comparison of
//! aggregation rules.
//!
//! # Reproducibility
//!
//! Draws come from xoshiro256** (`rand_xoshiro` 0.7.0, pinned) seeded with
//! `seed_from_u64`, i.e. four SplitMix64 outputs. Uniforms are
//! `(next_u64 >> 11) * 2^-53`. Gamma variates use `-ln(1 - U)` for shape 1,
//! Marsaglia-Tsang with polar-method normals for shape > 1, and the
//! `Gamma(a + 1) * U^(1/a)` boost for shape < 1. Every weight vector of every
//! draw is generated sequentially from one stream; only the evaluation runs
//! in parallel, and results are reduced in draw order.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compute::{compute_index, ComputeResult, ResolvedValues};
use crate::error::{Error, Result};
use crate::export::fmt_num;
use crate::index::{
    geometric_vulnerability, validate_weights, weighted_potential, UnitValue, WeightVector,
};
use crate::model::IndexModel;
use crate::scalar::{ordered_sum, Scalar};

pub type SamplerRng = Xoshiro256StarStar;

pub fn sampler_rng(seed: u64) -> SamplerRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * uniform(rng) - 1.0;
        let v = 2.0 * uniform(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Gamma(shape, 1) variate.
pub fn gamma<R: RngCore + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape == 1.0 {
        return -(1.0 - uniform(rng)).ln();
    }
    if shape < 1.0 {
        let g = gamma(shape + 1.0, rng);
        return g * uniform(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = uniform(rng);
        if u < 1.0 - 0.0331 * x * x * x * x {
            return d * v;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

fn check_concentration(concentration: f64) -> Result<()> {
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(Error::InvalidConcentration(concentration));
    }
    Ok(())
}

/// Symmetric Dirichlet draw as normalized gamma variates.
fn dirichlet<T: Scalar, R: RngCore + ?Sized>(k: usize, concentration: f64, rng: &mut R) -> Vec<T> {
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma(concentration, rng)).collect();
        let sum: f64 = g.iter().sum();
        // all-zero only happens when tiny shapes underflow
        if sum > 0.0 {
            return g.into_iter().map(|x| T::lit(x / sum)).collect();
        }
    }
}

/// Weight vector drawn from the symmetric Dirichlet(`concentration`) on the
/// `dimension`-simplex; entry ids are `"0"`, `"1"`, ...
pub fn sample_weight_vector<T: Scalar, R: RngCore + ?Sized>(
    dimension: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<WeightVector<T>> {
    let ids: Vec<String> = (0..dimension).map(|i| i.to_string()).collect();
    sample_weights(&ids, concentration, rng)
}

/// Dirichlet weight vector over the given ids.
pub fn sample_weights<T: Scalar, R: RngCore + ?Sized>(
    ids: &[String],
    concentration: f64,
    rng: &mut R,
) -> Result<WeightVector<T>> {
    if ids.is_empty() {
        return Err(Error::InvalidDimension);
    }
    check_concentration(concentration)?;
    let w = dirichlet::<T, R>(ids.len(), concentration, rng);
    validate_weights(ids.iter().cloned().zip(w).collect(), T::weight_tolerance())
}

/// Which weight layer a Monte Carlo run resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    #[default]
    Top,
    Component,
    /// Top and component weights resampled jointly in each draw.
    Both,
}

impl Layer {
    fn top(self) -> bool {
        matches!(self, Layer::Top | Layer::Both)
    }

    fn component(self) -> bool {
        matches!(self, Layer::Component | Layer::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Quantiles<T> {
    pub p05: T,
    pub p25: T,
    pub p50: T,
    pub p75: T,
    pub p95: T,
}

/// Distribution of the index under sampled weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct SensitivityReport<T> {
    pub sample_count: u64,
    pub seed: u64,
    pub layer: Layer,
    pub concentration: f64,
    /// Index with the configured weights.
    pub baseline: T,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
    pub quantiles: Quantiles<T>,
    pub min: T,
    pub max: T,
}

impl<T: Scalar> SensitivityReport<T> {
    pub const CSV_HEADER: &'static str =
        "sample_count,seed,layer,concentration,baseline,mean,std,p05,p25,p50,p75,p95,min,max";

    pub fn to_csv(&self) -> String {
        let layer = match self.layer {
            Layer::Top => "top",
            Layer::Component => "component",
            Layer::Both => "both",
        };
        let q = &self.quantiles;
        let cells = [
            self.sample_count.to_string(),
            self.seed.to_string(),
            layer.to_string(),
            fmt_num(self.concentration),
            fmt_num(self.baseline),
            fmt_num(self.mean),
            fmt_num(self.std),
            fmt_num(q.p05),
            fmt_num(q.p25),
            fmt_num(q.p50),
            fmt_num(q.p75),
            fmt_num(q.p95),
            fmt_num(self.min),
            fmt_num(self.max),
        ];
        format!("{}\n{}\n", Self::CSV_HEADER, cells.join(","))
    }
}

/// Nearest-rank order statistic of sorted data for `percent` in 1..=100.
pub fn nearest_rank<T: Copy>(sorted: &[T], percent: usize) -> T {
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[rank.min(n) - 1]
}

/// Potentials and weights of a computed index, ordered by sub-index id as
/// the aggregate itself is evaluated.
struct Frame<T> {
    top_ids: Vec<String>,
    top: Vec<T>,
    subs: Vec<FrameSub<T>>,
}

struct FrameSub<T> {
    id: String,
    component_ids: Vec<String>,
    normalized: Vec<UnitValue<T>>,
    weights: Vec<T>,
    potential: UnitValue<T>,
}

impl<T: Scalar> Frame<T> {
    fn new(result: &ComputeResult<T>) -> Self {
        let mut subs: Vec<FrameSub<T>> = result
            .sub_indexes
            .iter()
            .map(|s| FrameSub {
                id: s.id.clone(),
                component_ids: s
                    .components
                    .iter()
                    .map(|c| c.component_id.clone())
                    .collect(),
                normalized: s.components.iter().map(|c| c.normalized).collect(),
                weights: s
                    .components
                    .iter()
                    .map(|c| c.weight.expect("computed components carry weights"))
                    .collect(),
                potential: s.potential,
            })
            .collect();
        subs.sort_by(|a, b| a.id.cmp(&b.id));
        let top = subs
            .iter()
            .map(|s| result.top_weights.get(&s.id).expect("same ids"))
            .collect();
        Frame {
            top_ids: subs.iter().map(|s| s.id.clone()).collect(),
            top,
            subs,
        }
    }

    fn component_slots(&self) -> usize {
        self.subs.iter().map(|s| s.weights.len()).sum()
    }

    /// Index for the given top weights and optional flat component weights.
    fn evaluate(&self, top: &[T], components: Option<&[T]>) -> T {
        let mut offset = 0;
        let pairs = self.subs.iter().zip(top).map(|(s, w)| {
            let p = match components {
                Some(c) => {
                    let k = s.weights.len();
                    let p =
                        weighted_potential(&s.normalized, c[offset..offset + k].iter().copied());
                    offset += k;
                    p
                }
                None => s.potential,
            };
            (p, *w)
        });
        geometric_vulnerability(pairs.collect::<Vec<_>>()).get()
    }
}

/// Monte Carlo distribution of the index with the selected weight layer
/// resampled from a symmetric Dirichlet.
pub fn monte_carlo<T: Scalar>(
    model: &IndexModel<T>,
    values: &ResolvedValues<T>,
    layer: Layer,
    samples: u64,
    seed: u64,
    concentration: f64,
) -> Result<SensitivityReport<T>> {
    if samples == 0 {
        return Err(Error::InvalidSampleCount {
            count: 0,
            cap: u64::MAX,
        });
    }
    check_concentration(concentration)?;
    let baseline = compute_index(model, values)?;
    let frame = Frame::new(&baseline);
    let n = samples as usize;

    let top_len = if layer.top() { frame.top.len() } else { 0 };
    let comp_len = if layer.component() {
        frame.component_slots()
    } else {
        0
    };
    let stride = top_len + comp_len;
    let mut draws: Vec<T> = Vec::with_capacity(n * stride);
    let mut rng = sampler_rng(seed);
    for _ in 0..n {
        if layer.top() {
            draws.extend(dirichlet::<T, _>(frame.top.len(), concentration, &mut rng));
        }
        if layer.component() {
            for s in &frame.subs {
                draws.extend(dirichlet::<T, _>(s.weights.len(), concentration, &mut rng));
            }
        }
    }

    let eval = |draw: &[T]| {
        let (top, comps) = draw.split_at(top_len);
        let top = if layer.top() { top } else { &frame.top[..] };
        frame.evaluate(top, layer.component().then_some(comps))
    };
    let mut results: Vec<T> = if stride == 0 {
        vec![eval(&[]); n]
    } else {
        draws.par_chunks(stride).map(eval).collect()
    };

    let count = T::from_usize(n).expect("sample count fits in a float");
    let mean = ordered_sum(results.iter().copied()) / count;
    let var = ordered_sum(results.iter().map(|x| (*x - mean) * (*x - mean))) / count;
    results.sort_by(|a, b| a.partial_cmp(b).expect("index values are finite"));
    let (min, max) = (results[0], results[n - 1]);
    Ok(SensitivityReport {
        sample_count: samples,
        seed,
        layer,
        concentration,
        baseline: baseline.aivi.get(),
        mean: mean.max(min).min(max),
        std: var.sqrt(),
        quantiles: Quantiles {
            p05: nearest_rank(&results, 5),
            p25: nearest_rank(&results, 25),
            p50: nearest_rank(&results, 50),
            p75: nearest_rank(&results, 75),
            p95: nearest_rank(&results, 95),
        },
        min,
        max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TornadoLayer {
    Top,
    Component,
}

/// Index with one weight moved down and up by `delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TornadoEntry<T> {
    pub layer: TornadoLayer,
    /// `"top"` or the owning sub-index id.
    pub group: String,
    pub target_id: String,
    pub weight: T,
    pub delta: T,
    pub baseline: T,
    pub aivi_low: T,
    pub aivi_high: T,
}

impl<T: Scalar> TornadoEntry<T> {
    pub fn impact(&self) -> T {
        (self.aivi_high - self.aivi_low).abs()
    }
}

/// Move entry `idx` to `target` (clamped to `[0, 1]`) and rescale the others
/// proportionally so the group still sums to one.
fn perturb<T: Scalar>(weights: &[T], idx: usize, target: T) -> Vec<T> {
    let target = target.max(T::zero()).min(T::one());
    if weights.len() == 1 || target == weights[idx] {
        return weights.to_vec();
    }
    let others = ordered_sum(
        weights
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, w)| *w),
    );
    let rest = T::one() - target;
    let even = rest / T::from_usize(weights.len() - 1).expect("small length");
    weights
        .iter()
        .enumerate()
        .map(|(j, w)| {
            if j == idx {
                target
            } else if others > T::zero() {
                *w * rest / others
            } else {
                even
            }
        })
        .collect()
}

/// One-at-a-time analysis over every top-level and component weight,
/// sorted by impact (largest first, ties in model order).
pub fn tornado<T: Scalar>(
    model: &IndexModel<T>,
    values: &ResolvedValues<T>,
    delta: T,
) -> Result<Vec<TornadoEntry<T>>> {
    if !(delta.is_finite() && delta > T::zero() && delta <= T::one()) {
        return Err(Error::DeltaOutOfRange(delta.as_f64()));
    }
    let baseline_result = compute_index(model, values)?;
    let frame = Frame::new(&baseline_result);
    let baseline = frame.evaluate(&frame.top, None);
    let mut entries = Vec::new();

    for (i, id) in frame.top_ids.iter().enumerate() {
        let w = frame.top[i];
        let low = frame.evaluate(&perturb(&frame.top, i, w - delta), None);
        let high = frame.evaluate(&perturb(&frame.top, i, w + delta), None);
        entries.push(TornadoEntry {
            layer: TornadoLayer::Top,
            group: "top".into(),
            target_id: id.clone(),
            weight: w,
            delta,
            baseline,
            aivi_low: low,
            aivi_high: high,
        });
    }

    let flat: Vec<T> = frame
        .subs
        .iter()
        .flat_map(|s| s.weights.iter().copied())
        .collect();
    let mut offset = 0;
    for s in &frame.subs {
        let k = s.weights.len();
        for (j, id) in s.component_ids.iter().enumerate() {
            let w = s.weights[j];
            let run = |target: T| {
                let mut c = flat.clone();
                c[offset..offset + k].copy_from_slice(&perturb(&s.weights, j, target));
                frame.evaluate(&frame.top, Some(&c))
            };
            entries.push(TornadoEntry {
                layer: TornadoLayer::Component,
                group: s.id.clone(),
                target_id: id.clone(),
                weight: w,
                delta,
                baseline,
                aivi_low: run(w - delta),
                aivi_high: run(w + delta),
            });
        }
        offset += k;
    }
    entries.sort_by(|a, b| b.impact().partial_cmp(&a.impact()).expect("finite impacts"));
    Ok(entries)
}

/// The index under three aggregation rules, for side-by-side comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Aggregates<T> {
    /// `1 - Π Pot^w`.
    pub geometric: T,
    /// `1 - Σ w · Pot` (perfect substitutes).
    pub additive: T,
    /// `1 - min Pot` (perfect complements).
    pub min_rule: T,
}

pub fn compare_aggregators<T: Scalar>(
    potentials: &[(String, UnitValue<T>)],
    weights: &WeightVector<T>,
) -> Result<Aggregates<T>> {
    let geometric = crate::index::aivi(potentials, weights)?.get();
    let additive = ordered_sum(weights.entries().iter().map(|(id, w)| {
        let p = potentials
            .iter()
            .find(|(pid, _)| pid == id)
            .map(|(_, p)| p.get())
            .expect("aivi checked the ids");
        *w * p
    }));
    let min_pot = potentials
        .iter()
        .map(|(_, p)| p.get())
        .fold(T::one(), T::min);
    Ok(Aggregates {
        geometric,
        additive: (T::one() - additive).max(T::zero()).min(T::one()),
        min_rule: T::one() - min_pot,
    })
}
