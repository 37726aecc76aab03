//! Acceptance gate. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aivi_core::compute::Warning;
use aivi_core::indicators::ResidualPolicy;
use aivi_core::sensitivity::{
    sample_weight_vector, sample_weights, sampler_rng, uniform, SamplerRng,
};
use aivi_core::{
    aivi, compare_aggregators, evaluate, hhi, parse_model, validate_dataset, ComponentOverride,
    CoverageStatus, Dataset, IndexModel, MissingPolicy, Period, Scenario, ShareVector, UnitValue,
};
use common::{aivi as run_cli, fixture, stdout, Server};
use serde_json::{json, Value};

const TRIALS: usize = 10_000;
const Y2025: Period = Period::Year(2025);

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("range and null output", range_and_null_output),
        ("equal-potential identity", equal_potential_identity),
        ("aggregator ordering", aggregator_ordering),
        ("naive-formula oracle", oracle_equivalence),
        ("HHI properties", hhi_properties),
        ("monotonicity", monotonicity),
        ("determinism and CLI/service parity", determinism_and_parity),
        ("golden end to end", golden_end_to_end),
        ("model round trip and coverage", schema_and_coverage),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome =
            panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(panic_message(&p)));
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        {
            let ok: bool = $cond;
            if !ok {
                return Err(format!($($msg)+));
            }
        }
    };
}

// -- random instances --

fn weight_map(ids: &[String], rng: &mut SamplerRng) -> BTreeMap<String, f64> {
    sample_weights::<f64, _>(ids, 1.0, rng)
        .unwrap()
        .entries()
        .iter()
        .cloned()
        .collect()
}

fn below(n: usize, rng: &mut SamplerRng) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n - 1)
}

/// A model of 1..=5 sub-indexes with 1..=4 unit-bounded `level` components
/// each, plus one normalized value per component.
struct Instance {
    model: IndexModel,
    values: BTreeMap<String, f64>,
}

fn random_instance(rng: &mut SamplerRng) -> Instance {
    let subs: Vec<String> = (0..1 + below(5, rng)).map(|i| format!("s{i}")).collect();
    let top = weight_map(&subs, rng);
    let mut values = BTreeMap::new();
    let sub_indexes: Vec<Value> = subs
        .iter()
        .map(|s| {
            let ids: Vec<String> = (0..1 + below(4, rng)).map(|j| format!("{s}c{j}")).collect();
            let w = weight_map(&ids, rng);
            let components: Vec<Value> = ids
                .iter()
                .map(|c| {
                    values.insert(c.clone(), uniform(rng));
                    json!({"id": c, "indicator_id": c, "kind": "level", "weight": w[c],
                           "bounds": {"min": 0.0, "max": 1.0, "kind": "theoretical"}})
                })
                .collect();
            json!({"id": s, "components": components})
        })
        .collect();
    let text = json!({"version": 1, "top_weights": top, "sub_indexes": sub_indexes}).to_string();
    Instance {
        model: parse_model(&text).unwrap(),
        values,
    }
}

fn score(model: &IndexModel, values: &BTreeMap<String, f64>) -> f64 {
    let scenario = Scenario {
        period: Some(Y2025),
        weight_overrides: None,
        component_overrides: values
            .iter()
            .map(|(id, v)| (id.clone(), ComponentOverride::Normalized(*v)))
            .collect(),
    };
    evaluate(model, &Dataset::new(Vec::new()), &scenario)
        .unwrap()
        .aivi
        .get()
}

fn potentials(ps: &[f64]) -> Vec<(String, UnitValue)> {
    ps.iter()
        .enumerate()
        .map(|(i, p)| (format!("p{i}"), UnitValue::new(*p).unwrap()))
        .collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

// -- criteria --

fn range_and_null_output() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = sampler_rng(1);
    let mut nulls = 0;
    for trial in 0..TRIALS {
        let mut inst = random_instance(&mut rng);
        let v = score(&inst.model, &inst.values);
        ensure!(
            (0.0..=1.0).contains(&v),
            "trial {trial}: AIVI {v} outside [0, 1]"
        );

        // drive one sub-index to zero potential: every component fully vulnerable
        let sub = &inst.model.sub_indexes()[below(inst.model.sub_indexes().len(), &mut rng)];
        if inst.model.top_weights().get(&sub.id).unwrap() > 0.0 {
            for c in sub.components() {
                inst.values.insert(c.id.clone(), 1.0);
            }
            let v = score(&inst.model, &inst.values);
            ensure!(
                v == 1.0,
                "trial {trial}: zero potential gave {v}, expected exactly 1"
            );
            nulls += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{TRIALS} models in range, {nulls} null-output cases exact, {elapsed:.2?}"
    ))
}

fn equal_potential_identity() -> Result<String, String> {
    let mut rng = sampler_rng(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + below(8, &mut rng);
        let w = sample_weights::<f64, _>(&ids(n), 1.0, &mut rng).unwrap();
        for step in 0..=10 {
            let p = f64::from(step) / 10.0;
            let v = aivi(&potentials(&vec![p; n]), &w).unwrap().get();
            worst = worst.max((v - (1.0 - p)).abs());
        }
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("11000 cases, max deviation {worst:e}"))
}

fn aggregator_ordering() -> Result<String, String> {
    let mut rng = sampler_rng(3);
    for trial in 0..TRIALS {
        let n = 1 + below(8, &mut rng);
        let ps: Vec<f64> = (0..n).map(|_| uniform(&mut rng)).collect();
        let w = sample_weights::<f64, _>(&ids(n), 1.0, &mut rng).unwrap();
        let r = compare_aggregators(&potentials(&ps), &w).unwrap();
        ensure!(
            r.additive <= r.geometric + 1e-12 && r.geometric <= r.min_rule + 1e-12,
            "trial {trial}: additive {} geometric {} min-rule {}",
            r.additive,
            r.geometric,
            r.min_rule
        );
    }
    Ok(format!("{TRIALS} instances ordered"))
}

fn oracle_equivalence() -> Result<String, String> {
    let text = fs::read_to_string(fixture("oracle-models.json")).map_err(|e| e.to_string())?;
    let oracle: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let cases = oracle["cases"].as_array().unwrap();
    ensure!(
        cases.len() == 1000,
        "expected 1000 cases, found {}",
        cases.len()
    );
    let mut worst = 0.0f64;
    let mut clamped = 0;
    for case in cases {
        let name = case["name"].as_str().unwrap();
        let model: IndexModel =
            parse_model(&case["model"].to_string()).map_err(|e| format!("{name}: {e}"))?;
        let scenario = Scenario {
            period: Some(Y2025),
            weight_overrides: None,
            component_overrides: case["raw"]
                .as_object()
                .unwrap()
                .iter()
                .map(|(id, x)| (id.clone(), ComponentOverride::Raw(x.as_f64().unwrap())))
                .collect(),
        };
        let r = evaluate(&model, &Dataset::new(Vec::new()), &scenario)
            .map_err(|e| format!("{name}: {e}"))?;
        clamped += r
            .warnings
            .iter()
            .filter(|w| matches!(w, Warning::Clamped { .. }))
            .count();
        let d = (r.aivi.get() - case["aivi"].as_f64().unwrap()).abs();
        ensure!(d <= 1e-12, "{name}: off by {d:e}");
        worst = worst.max(d);
    }
    Ok(format!(
        "1000 models, {clamped} clamp events, max deviation {worst:e}"
    ))
}

fn equal_shares(n: usize) -> ShareVector {
    let share = 1.0 / n as f64;
    let entries = (0..n).map(|i| (format!("e{i}"), share)).collect();
    ShareVector::new(entries, ResidualPolicy::Ignore).unwrap()
}

fn hhi_properties() -> Result<String, String> {
    for n in 1..=100usize {
        let h = hhi(&equal_shares(n)).unwrap();
        ensure!(h == 1.0 / n as f64, "n = {n}: {h} vs {}", 1.0 / n as f64);
    }

    let mut rng = sampler_rng(5);
    for trial in 0..TRIALS {
        let n = 2 + below(29, &mut rng);
        let w = sample_weight_vector::<f64, _>(n, 1.0, &mut rng).unwrap();
        let shares: Vec<f64> = w.values().collect();
        let before =
            hhi(&ShareVector::new(w.entries().to_vec(), ResidualPolicy::Ignore).unwrap()).unwrap();
        let (a, b) = (below(n, &mut rng), below(n - 1, &mut rng));
        let b = if b >= a { b + 1 } else { b };
        let merged: Vec<(String, f64)> = shares
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != b)
            .map(|(i, s)| {
                (
                    format!("e{i}"),
                    if i == a { (s + shares[b]).min(1.0) } else { *s },
                )
            })
            .collect();
        let merged = ShareVector::new(merged, ResidualPolicy::Ignore).map_err(|e| e.to_string())?;
        let after = hhi(&merged).unwrap();
        ensure!(
            after >= before - 4.0 * f64::EPSILON,
            "trial {trial}: merging lowered HHI from {before} to {after}"
        );
    }

    let researchers = ShareVector::new(
        vec![
            ("US".into(), 0.57),
            ("CN".into(), 0.12),
            ("UK".into(), 0.08),
        ],
        ResidualPolicy::Ignore,
    )
    .unwrap();
    let h = hhi(&researchers).unwrap();
    ensure!((h - 0.3457).abs() <= 1e-12, "three-country HHI {h}");
    Ok(format!(
        "1/n exact for n <= 100, {TRIALS} merges monotone, HHI {h}"
    ))
}

fn monotonicity() -> Result<String, String> {
    let mut rng = sampler_rng(6);
    for trial in 0..TRIALS {
        let mut inst = random_instance(&mut rng);
        let before = score(&inst.model, &inst.values);
        let keys: Vec<String> = inst.values.keys().cloned().collect();
        let id = &keys[below(keys.len(), &mut rng)];
        let v = inst.values[id];
        inst.values
            .insert(id.clone(), v + uniform(&mut rng) * (1.0 - v));
        let after = score(&inst.model, &inst.values);
        ensure!(
            after >= before,
            "trial {trial}: raising {id} moved AIVI from {before} to {after}"
        );
    }
    Ok(format!(
        "{TRIALS} single-component increases, none lowered the index"
    ))
}

fn golden_args(cmd: &str) -> Vec<String> {
    vec![
        cmd.into(),
        "--model".into(),
        fixture("model-equal.json"),
        "--data".into(),
        fixture("synthetic-2025.csv"),
    ]
}

fn cli(args: &[String]) -> Result<String, String> {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run_cli(&refs);
    ensure!(
        out.status.success(),
        "aivi {} exited with {:?}",
        args[0],
        out.status.code()
    );
    Ok(stdout(&out))
}

fn determinism_and_parity() -> Result<String, String> {
    let from_cli = cli(&golden_args("compute"))?;
    let server = Server::start(&[]);
    let (status, from_service) = server.post("/api/v1/compute", "{}");
    ensure!(status == 200, "service returned {status}");
    ensure!(
        from_cli == from_service,
        "CLI and service compute bodies differ"
    );

    let mut args = golden_args("sensitivity");
    args.extend(["--samples", "10000", "--seed", "42", "--layer", "top"].map(String::from));
    let first = cli(&args)?;
    let second = cli(&args)?;
    ensure!(first == second, "two seed-42 runs differ");

    let golden: Value =
        serde_json::from_str(&fs::read_to_string(fixture("sensitivity-golden.json")).unwrap())
            .unwrap();
    let g = &golden["monte_carlo"];
    let r = &serde_json::from_str::<Value>(&first).unwrap()["report"];
    for key in [
        "sample_count",
        "seed",
        "layer",
        "concentration",
        "mean",
        "std",
        "min",
        "max",
    ] {
        ensure!(r[key] == g[key], "{key}: {} vs golden {}", r[key], g[key]);
    }
    for q in ["p05", "p25", "p50", "p75", "p95"] {
        ensure!(
            r["quantiles"][q] == g[q],
            "{q}: {} vs golden {}",
            r["quantiles"][q],
            g[q]
        );
    }

    let (status, body) = server.post(
        "/api/v1/sensitivity",
        r#"{"samples": 10000, "seed": 42, "layer": "top"}"#,
    );
    ensure!(
        status == 200 && body == first,
        "service sensitivity differs from CLI"
    );
    Ok(format!(
        "compute bodies identical ({} bytes), seed-42 report matches golden",
        from_cli.len()
    ))
}

fn golden_end_to_end() -> Result<String, String> {
    let out: Value = serde_json::from_str(&cli(&golden_args("compute"))?).unwrap();
    let g: Value =
        serde_json::from_str(&fs::read_to_string(fixture("golden.json")).unwrap()).unwrap();
    let close = |a: &Value, b: &Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-12;

    ensure!(out["period"] == "2025", "period {}", out["period"]);
    ensure!(
        close(&out["aivi"], &g["aivi"]),
        "AIVI {} vs {}",
        out["aivi"],
        g["aivi"]
    );
    for s in out["sub_indexes"].as_array().unwrap() {
        let id = s["id"].as_str().unwrap();
        ensure!(
            close(&s["potential"], &g["potentials"][id]),
            "potential {id}"
        );
    }
    let contributions = out["contributions"].as_array().unwrap();
    ensure!(
        contributions.len() == 5,
        "{} contributions",
        contributions.len()
    );
    for c in contributions {
        let id = c["id"].as_str().unwrap();
        ensure!(
            close(&c["value"], &g["contributions"][id]),
            "contribution {id}"
        );
    }
    let clamps: Vec<&Value> = out["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|w| w["kind"] == "clamped")
        .collect();
    let expected = g["clamp_warnings"].as_array().unwrap();
    ensure!(
        clamps.len() == expected.len(),
        "{} clamp warnings",
        clamps.len()
    );
    for (w, e) in clamps.iter().zip(expected) {
        for key in ["component_id", "side"] {
            ensure!(w[key] == e[key], "clamp {key}: {} vs {}", w[key], e[key]);
        }
        ensure!(
            close(&w["raw"], &e["raw"]) && close(&w["bound"], &e["bound"]),
            "clamp values"
        );
    }
    Ok(format!(
        "AIVI {} with {} clamp warning",
        out["aivi"],
        clamps.len()
    ))
}

fn drop_rows(csv: &str, rng: &mut SamplerRng) -> Dataset {
    let mut lines = csv.lines();
    let mut text = format!("{}\n", lines.next().unwrap());
    let keep = 0.75 + 0.25 * uniform(rng);
    for line in lines {
        if uniform(rng) < keep {
            text.push_str(line);
            text.push('\n');
        }
    }
    Dataset::from_csv(&text).unwrap()
}

/// Components the coverage report flags at 2025, split into missing (data
/// absent) and invalid (data present but unusable).
fn flagged(model: &IndexModel, dataset: &Dataset) -> (BTreeSet<String>, Vec<String>) {
    let report = validate_dataset(model, dataset);
    let mut missing = BTreeSet::new();
    let mut invalid = Vec::new();
    for c in &report.components {
        match report.status(c, Y2025) {
            s if s.is_missing() => {
                missing.insert(c.component_id.clone());
            }
            CoverageStatus::Present if c.bounds_error.is_none() => {}
            _ => invalid.push(c.component_id.clone()),
        }
    }
    (missing, invalid)
}

fn schema_and_coverage() -> Result<String, String> {
    let text = fs::read_to_string(fixture("model-equal.json")).unwrap();
    let model: IndexModel = parse_model(&text).unwrap();
    let again: IndexModel = parse_model(&model.to_canonical_json()).unwrap();
    ensure!(model == again, "fixture model changed across a round trip");
    ensure!(
        model.to_canonical_json() == again.to_canonical_json(),
        "canonical text changed"
    );
    let mut rng = sampler_rng(9);
    for trial in 0..1000 {
        let m = random_instance(&mut rng).model;
        let back: IndexModel = parse_model(&m.to_canonical_json()).unwrap();
        ensure!(
            m == back,
            "random model {trial} changed across a round trip"
        );
    }

    let csv = fs::read_to_string(fixture("synthetic-2025.csv")).unwrap();
    let scenario = Scenario {
        period: Some(Y2025),
        ..Scenario::default()
    };
    let mut lenient = model.clone();
    lenient.missing_policy = MissingPolicy::RenormalizeWarn;
    let mut strict = model.clone();
    strict.missing_policy = MissingPolicy::Error;
    let (mut with_gaps, mut with_invalid) = (0, 0);
    for trial in 0..500 {
        let d = drop_rows(&csv, &mut rng);
        let (missing, invalid) = flagged(&model, &d);
        let lenient_run = evaluate(&lenient, &d, &scenario);
        let strict_run = evaluate(&strict, &d, &scenario);

        // an unusable component is rejected outright; the error names the
        // first one in model order
        let first_bad = model
            .components()
            .map(|(_, c)| c.id.clone())
            .find(|id| invalid.contains(id));
        if let Some(id) = first_bad {
            with_invalid += 1;
            for run in [&lenient_run, &strict_run] {
                let err = run
                    .as_ref()
                    .err()
                    .ok_or(format!("trial {trial}: {id} flagged but compute succeeded"))?;
                ensure!(
                    err.path() == Some(id.as_str()),
                    "trial {trial}: error at {:?}, flagged {id}",
                    err.path()
                );
            }
            continue;
        }

        match &strict_run {
            Ok(_) => ensure!(
                missing.is_empty(),
                "trial {trial}: strict compute ignored {missing:?}"
            ),
            Err(e) => {
                let named = match e {
                    aivi_core::Error::MissingComponent { component, .. } => component,
                    other => return Err(format!("trial {trial}: unexpected {other}")),
                };
                ensure!(
                    missing.contains(named),
                    "trial {trial}: compute rejected unflagged {named}"
                );
            }
        }
        if missing.len() == model.components().count() {
            ensure!(
                lenient_run.is_err(),
                "trial {trial}: nothing usable, but compute succeeded"
            );
            continue;
        }
        let r = lenient_run.map_err(|e| format!("trial {trial}: {e}"))?;
        let dropped: BTreeSet<String> = r
            .warnings
            .iter()
            .filter_map(|w| match w {
                Warning::MissingComponent { component_id, .. } => Some(component_id.clone()),
                _ => None,
            })
            .collect();
        ensure!(
            dropped == missing,
            "trial {trial}: dropped {dropped:?}, flagged {missing:?}"
        );
        if !missing.is_empty() {
            with_gaps += 1;
        }
    }
    Ok(format!(
        "1001 round trips; 500 datasets, {with_gaps} with gaps and {with_invalid} with unusable data, flags match compute"
    ))
}
