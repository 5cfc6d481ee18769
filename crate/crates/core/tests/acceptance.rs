//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use prl_core::asset_model::AssetFingerprint;
use prl_core::dimension::{DimValues, DimensionKey, ScoreVector};
use prl_core::evidence::{
    self, max_evidenced_level, required_kinds, EvidenceEntry, EvidenceIndex, EvidenceKind,
    RequirementMatrix,
};
use prl_core::gating::{self, determine_prl, LevelRow, ThresholdProfile};
use prl_core::registry::{verify_chain, RecordDraft, RegistryIndex};
use prl_core::scoring::{
    self, compute_prs, instability_penalty, summarize_batches, EvaluationBatch, ScoreSummary,
    ScoringConfig,
};

use common::{prl, reference_asset, reference_profile, FIXED_NOW};

const REFERENCE_TUPLE: &str =
    "(PRL=4, PRS=68, S=(78, 83, 62, 70, 55), theta=65, delta=(60, 60, 60, 50, 40))";
const REFERENCE_MEANS: [f64; 5] = [78.0, 83.0, 62.0, 70.0, 55.0];
const RANDOM_CASES: usize = 20_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "1 reference tuple reproduction",
            Some(Duration::from_secs(1)),
            reference_tuple,
        ),
        (
            "2 gating veto property",
            Some(Duration::from_secs(10)),
            veto_property,
        ),
        ("3 brute-force level oracle", None, level_oracle),
        ("4 PRS bounds and monotonicity", None, prs_bounds_monotone),
        ("5 summary statistics oracle", None, summary_oracle),
        (
            "6 evidence stage-gate",
            Some(Duration::from_secs(1)),
            evidence_stage_gate,
        ),
        ("7 registry tamper detection", None, registry_tamper),
        ("8 qualify determinism", None, determinism),
        ("9 penalty identities", None, penalty_identities),
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                Err(msg)
            })
            .and_then(|detail| match budget {
                Some(limit) if start.elapsed() > limit => Err(format!(
                    "{detail}; took {:?}, budget {limit:?}",
                    start.elapsed()
                )),
                _ => Ok(detail),
            });
        let ms = start.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({ms} ms)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail} ({ms} ms)");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}

// ---- generators ----

fn summary(means: [f64; 5], sigmas: [f64; 5]) -> ScoreSummary {
    ScoreSummary {
        means: ScoreVector::new(means).unwrap(),
        instabilities: DimValues(sigmas),
        batch_count: 5,
        degraded: false,
    }
}

fn sorted_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> [f64; 9] {
    let mut v = [0.0; 9];
    for x in &mut v {
        *x = quantize(rng.gen_range(lo..=hi));
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Half-point grid, so generated scores often land exactly on thresholds.
fn quantize(x: f64) -> f64 {
    (x * 2.0).round() / 2.0
}

fn random_weights(rng: &mut StdRng) -> DimValues {
    let raw: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let total: f64 = raw.iter().sum();
    let mut w = raw.map(|x| x / total);
    // Push any rounding residue into the largest weight.
    let residue = 1.0 - w.iter().sum::<f64>();
    let max = (0..5).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
    w[max] += residue;
    DimValues(w)
}

fn random_profile(rng: &mut StdRng) -> ThresholdProfile {
    let thetas = sorted_uniform(rng, 0.0, 100.0);
    let deltas: [[f64; 9]; 5] = std::array::from_fn(|_| sorted_uniform(rng, 0.0, 100.0));
    let levels = (0..9)
        .map(|i| LevelRow {
            n: i as u8 + 1,
            theta: thetas[i],
            delta: ScoreVector::new(std::array::from_fn(|d| deltas[d][i])).unwrap(),
        })
        .collect();
    let scoring = ScoringConfig {
        weights: random_weights(rng),
        lambda: rng.gen_range(0.0..0.1),
        min_batches: 3,
    };
    ThresholdProfile::new("random".into(), false, scoring, levels).unwrap()
}

/// Scores drawn uniformly or next to a random threshold of the profile;
/// some vectors sit on one row's minima so every level is reachable.
fn random_scores(rng: &mut StdRng, profile: &ThresholdProfile) -> [f64; 5] {
    if rng.gen_bool(0.25) {
        let row = &profile.levels()[rng.gen_range(0..9)];
        return std::array::from_fn(|d| {
            (row.delta[DimensionKey::ALL[d]] + [0.0, 0.5, 3.0][rng.gen_range(0..3)]).min(100.0)
        });
    }
    std::array::from_fn(|d| {
        if rng.gen_bool(0.5) {
            quantize(rng.gen_range(0.0..=100.0))
        } else {
            let row = &profile.levels()[rng.gen_range(0..9)];
            let key = DimensionKey::ALL[d];
            (row.delta[key] + [-0.5, 0.0, 0.0, 0.5][rng.gen_range(0..4)]).clamp(0.0, 100.0)
        }
    })
}

fn random_sigmas(rng: &mut StdRng) -> [f64; 5] {
    std::array::from_fn(|_| {
        if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.0..30.0)
        }
    })
}

// ---- criteria ----

/// Weight vectors on a 0.05 grid, summing to 1, whose weighted mean of the
/// reference scores is 68.
fn solve_fixture_weights() -> Vec<[f64; 5]> {
    let mut solutions = Vec::new();
    for a in 0..=20u32 {
        for b in 0..=20 - a {
            for c in 0..=20 - a - b {
                for d in 0..=20 - a - b - c {
                    let e = 20 - a - b - c - d;
                    let units = [a, b, c, d, e];
                    // Integer arithmetic: sum(units * S) = 68 * 20.
                    let total: u32 = units
                        .iter()
                        .zip(REFERENCE_MEANS)
                        .map(|(u, s)| u * s as u32)
                        .sum();
                    if total == 68 * 20 {
                        solutions.push(units.map(|u| f64::from(u) / 20.0));
                    }
                }
            }
        }
    }
    solutions
}

fn reference_tuple() -> Outcome {
    let fixture_weights = [0.1, 0.2, 0.3, 0.2, 0.2];
    let solutions = solve_fixture_weights();
    ensure(solutions.contains(&fixture_weights), || {
        format!("{fixture_weights:?} is not a solution of the weight search")
    })?;
    let profile =
        gating::load_profile(&fs::read(reference_profile()).unwrap()).map_err(|e| e.to_string())?;
    ensure(
        profile.scoring.weights == DimValues(fixture_weights),
        || format!("fixture profile weights are {:?}", profile.scoring.weights),
    )?;
    let canonical = ThresholdProfile::canonical();
    ensure(profile.levels() == canonical.levels(), || {
        "fixture thresholds differ from canonical".into()
    })?;

    let out = prl([
        "--now",
        FIXED_NOW,
        "--profile",
        reference_profile().to_str().unwrap(),
        "--format",
        "tuple",
        "qualify",
        reference_asset().to_str().unwrap(),
    ]);
    ensure(out.code == 0, || {
        format!("exit {}: {}", out.code, out.stderr)
    })?;
    let line = out.stdout_str();
    ensure(line == format!("{REFERENCE_TUPLE}\n"), || {
        format!("got {line:?}")
    })?;
    Ok(format!(
        "byte-exact; weights {fixture_weights:?} are 1 of {} grid solutions",
        solutions.len()
    ))
}

fn veto_property() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let mut vetoes = 0usize;
    for case in 0..RANDOM_CASES {
        let profile = random_profile(&mut rng);
        let s = summary(random_scores(&mut rng, &profile), random_sigmas(&mut rng));
        let prs = compute_prs(&s, &profile);
        let level = determine_prl(prs, &s.means, &profile);
        for row in profile.levels() {
            let weak = DimensionKey::ALL.iter().any(|&k| s.means[k] < row.delta[k]);
            if weak {
                vetoes += 1;
                ensure(level < row.n, || {
                    format!(
                        "case {case}: level {level} despite a weak dimension at level {}",
                        row.n
                    )
                })?;
            }
        }
    }
    Ok(format!(
        "{RANDOM_CASES} cases, {vetoes} vetoed (level, case) pairs, 0 violations"
    ))
}

/// Independent level scan: highest n whose threshold and all minima hold.
fn oracle_level(prs: f64, scores: &[f64; 5], thetas: &[f64], deltas: &[[f64; 5]]) -> u8 {
    for n in (1..=9usize).rev() {
        let minima_ok = (0..5).all(|i| scores[i] >= deltas[n - 1][i]);
        if prs >= thetas[n - 1] && minima_ok {
            return n as u8;
        }
    }
    0
}

fn level_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut levels_seen = BTreeSet::new();
    for case in 0..RANDOM_CASES {
        let profile = random_profile(&mut rng);
        let scores = random_scores(&mut rng, &profile);
        let thetas: Vec<f64> = profile.levels().iter().map(|r| r.theta).collect();
        let deltas: Vec<[f64; 5]> = profile
            .levels()
            .iter()
            .map(|r| r.delta.values().0)
            .collect();
        // Half the cases use a PRS sitting exactly on some theta.
        let prs = if rng.gen_bool(0.5) {
            thetas[rng.gen_range(0..9)]
        } else {
            quantize(rng.gen_range(0.0..=100.0))
        };
        let sv = ScoreVector::new(scores).unwrap();
        let got = determine_prl(prs, &sv, &profile);
        let want = oracle_level(prs, &scores, &thetas, &deltas);
        levels_seen.insert(got);
        ensure(got == want, || {
            format!("case {case}: determine_prl {got}, oracle {want}")
        })?;
    }
    Ok(format!(
        "{RANDOM_CASES} cases, 0 mismatches, levels covered {:?}",
        levels_seen
    ))
}

fn prs_bounds_monotone() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut checks = 0usize;
    for case in 0..RANDOM_CASES {
        let mut profile = random_profile(&mut rng);
        let mut scoring = profile.scoring.clone();
        scoring.lambda = rng.gen_range(0.001..0.2);
        profile = profile
            .modified(scoring, profile.levels().to_vec())
            .unwrap();
        let means = random_scores(&mut rng, &profile);
        let sigmas = random_sigmas(&mut rng);
        let base = compute_prs(&summary(means, sigmas), &profile);
        ensure((0.0..=100.0).contains(&base), || {
            format!("case {case}: PRS {base} out of range")
        })?;
        for i in 0..5 {
            let mut up = means;
            up[i] = (up[i] + rng.gen_range(0.0..20.0)).min(100.0);
            let raised = compute_prs(&summary(up, sigmas), &profile);
            ensure(raised >= base, || {
                format!("case {case}: raising mean {i} lowered PRS {base} -> {raised}")
            })?;
            let mut wider = sigmas;
            wider[i] += rng.gen_range(0.0..20.0);
            let widened = compute_prs(&summary(means, wider), &profile);
            ensure(widened <= base, || {
                format!("case {case}: raising sigma {i} raised PRS {base} -> {widened}")
            })?;
            checks += 2;
        }
    }
    Ok(format!(
        "{RANDOM_CASES} cases, {checks} monotonicity checks, 0 violations"
    ))
}

fn summary_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let config = ScoringConfig::default();
    let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let mut worst = 0.0f64;
    let sets = 5_000;
    for set in 0..sets {
        let count = rng.gen_range(1..=40);
        let spread = [0.001, 1.0, 25.0, 100.0][rng.gen_range(0..4)];
        let centre: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.0..=100.0));
        let batches: Vec<EvaluationBatch> = (0..count)
            .map(|i| EvaluationBatch {
                batch_id: format!("b{i}"),
                timestamp: t0,
                evaluator: "e".into(),
                sample_count: 10,
                scores: ScoreVector::new(std::array::from_fn(|d| {
                    (centre[d] + rng.gen_range(-spread..=spread)).clamp(0.0, 100.0)
                }))
                .unwrap(),
            })
            .collect();
        let s = summarize_batches(&batches, &config).map_err(|e| e.to_string())?;
        for d in 0..5 {
            let xs: Vec<f64> = batches.iter().map(|b| b.scores.values().0[d]).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            let dm = (s.means.values().0[d] - mean).abs();
            let ds = (s.instabilities.0[d] - sd).abs();
            worst = worst.max(dm).max(ds);
            ensure(dm <= 1e-9 && ds <= 1e-9, || {
                format!("set {set} dim {d}: mean diff {dm:e}, sigma diff {ds:e}")
            })?;
        }
    }
    Ok(format!(
        "{sets} batch sets, max abs deviation {worst:.3e} (tolerance 1e-9)"
    ))
}

fn index_of(kinds: &BTreeSet<EvidenceKind>) -> EvidenceIndex {
    let created = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    EvidenceIndex {
        entries: kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| EvidenceEntry {
                kind: kind.clone(),
                path: format!("evidence/doc{i}.md"),
                sha256: "0".repeat(64),
                created,
                note: None,
            })
            .collect(),
    }
}

fn evidence_stage_gate() -> Outcome {
    let matrix = RequirementMatrix::default_matrix();
    let mut removals = 0;
    for m in 1..=9u8 {
        let complete = required_kinds(m, &matrix);
        let level = max_evidenced_level(&index_of(&complete), &matrix);
        ensure(level == m, || {
            format!("complete index for level {m} gives {level}")
        })?;
        for kind in &complete {
            let mut reduced = complete.clone();
            reduced.remove(kind);
            let level = max_evidenced_level(&index_of(&reduced), &matrix);
            removals += 1;
            ensure(level < m, || {
                format!("removing {kind} at level {m} still gives level {level}")
            })?;
        }
    }

    // Score level 4 (canonical profile, reference means) capped by evidence level 2.
    let s = summary(REFERENCE_MEANS, [0.0; 5]);
    let canonical = ThresholdProfile::canonical();
    let index = index_of(&required_kinds(2, &matrix));
    let evidence_level = evidence::max_evidenced_level(&index, &matrix);
    let result = gating::qualify(&s, &canonical, evidence_level);
    ensure(
        result.score_level == 4 && evidence_level == 2 && result.effective_level == 2,
        || {
            format!(
                "score {} evidence {} effective {}",
                result.score_level, evidence_level, result.effective_level
            )
        },
    )?;
    Ok(format!(
        "{removals} single-kind removals over levels 1-9; score 4 + evidence 2 -> effective 2"
    ))
}

fn five_record_registry() -> Vec<u8> {
    let profile = ThresholdProfile::canonical();
    let mut index = RegistryIndex::default();
    let t0: DateTime<Utc> = Utc.with_ymd_and_hms(2026, 3, 1, 8, 0, 0).unwrap();
    for i in 0..5u32 {
        let means = REFERENCE_MEANS.map(|m| (m + f64::from(i) * 3.5).min(100.0));
        let s = summary(means, [0.5 * f64::from(i), 0.0, 1.25, 0.0, 2.0]);
        let draft = RecordDraft {
            asset_id: format!("asset-{}", i % 2),
            version: format!("1.{i}.0"),
            fingerprint: AssetFingerprint(prl_core::document::sha256_hex(&i.to_be_bytes())),
            result: gating::qualify(&s, &profile, 9),
            profile_id: profile.profile_id.clone(),
        };
        index
            .append(draft, t0 + chrono::Duration::minutes(i64::from(i) * 17))
            .unwrap();
    }
    index.to_jsonl()
}

fn registry_tamper() -> Outcome {
    let bytes = five_record_registry();
    let (clean, findings) = RegistryIndex::parse_jsonl(&bytes);
    ensure(
        findings.is_empty() && verify_chain(&clean).is_empty() && clean.records.len() == 5,
        || "pristine registry does not verify".into(),
    )?;

    let mut rng = StdRng::seed_from_u64(0x5eed_0007);
    let mut undetected = Vec::new();
    // Every byte position, each mutated to a random different byte.
    for pos in 0..bytes.len() {
        let mut mutated = bytes.clone();
        let delta = rng.gen_range(1..=255u8);
        mutated[pos] = mutated[pos].wrapping_add(delta);
        let (index, mut findings) = RegistryIndex::parse_jsonl(&mutated);
        findings.extend(verify_chain(&index));
        if findings.is_empty() {
            undetected.push(pos);
        }
    }
    ensure(undetected.is_empty(), || {
        format!(
            "{} undetected mutations, first at byte {}",
            undetected.len(),
            undetected[0]
        )
    })?;
    Ok(format!(
        "{} of {} byte positions mutated, all detected",
        bytes.len(),
        bytes.len()
    ))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut registries = Vec::new();
    for run in 0..2 {
        let reg = tmp.path().join(format!("registry-{run}"));
        let out = prl([
            "--now",
            FIXED_NOW,
            "--registry",
            reg.to_str().unwrap(),
            "qualify",
            reference_asset().to_str().unwrap(),
            "--record",
        ]);
        ensure(out.code == 0, || {
            format!("run {run}: exit {}: {}", out.code, out.stderr)
        })?;
        reports.push(out.stdout);
        registries.push(fs::read(reg.join("records.jsonl")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "JSON reports differ".into())?;
    ensure(registries[0] == registries[1], || {
        "registry records differ".into()
    })?;
    Ok(format!(
        "2 runs: {}-byte reports and {}-byte registries identical",
        reports[0].len(),
        registries[0].len()
    ))
}

/// e^x by Taylor series with range halving; independent of the libm `exp`.
fn series_exp(x: f64) -> f64 {
    let mut halvings = 0;
    let mut y = x;
    while y.abs() > 0.5 {
        y /= 2.0;
        halvings += 1;
    }
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..40 {
        term *= y / f64::from(k);
        sum += term;
    }
    for _ in 0..halvings {
        sum *= sum;
    }
    sum
}

fn penalty_identities() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0009);
    for _ in 0..10_000 {
        let sigma = rng.gen_range(0.0..1000.0);
        let lambda = rng.gen_range(0.0..10.0);
        ensure(instability_penalty(sigma, 0.0) == 1.0, || {
            format!("penalty({sigma}, 0) != 1")
        })?;
        ensure(instability_penalty(0.0, lambda) == 1.0, || {
            format!("penalty(0, {lambda}) != 1")
        })?;
    }
    let got = instability_penalty(14.142135, 0.02);
    let oracle = series_exp(-0.02 * 14.142135);
    ensure((got - 0.753638).abs() <= 1e-6, || {
        format!("penalty(14.142135, 0.02) = {got}")
    })?;
    ensure((oracle - 0.753638).abs() <= 1e-6, || {
        format!("series oracle gives {oracle}")
    })?;
    ensure((got - oracle).abs() <= 1e-12, || {
        format!("libm {got} vs series {oracle}")
    })?;
    // The default lambda is the one used above.
    ensure(scoring::DEFAULT_LAMBDA == 0.02, || {
        "default lambda changed".into()
    })?;
    Ok(format!(
        "identities exact over 10000 draws; penalty(14.142135, 0.02) = {got:.9}"
    ))
}
