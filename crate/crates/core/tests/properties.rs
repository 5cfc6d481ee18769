use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use prl_core::asset_model::AssetFingerprint;
use prl_core::dimension::{DimValues, DimensionKey, ScoreVector};
use prl_core::evidence::{
    max_evidenced_level, required_kinds, EvidenceEntry, EvidenceIndex, EvidenceKind,
    RequirementMatrix,
};
use prl_core::gating::{self, determine_prl, gate_passes, LevelRow, ThresholdProfile};
use prl_core::registry::{history, verify_chain, RecordDraft, RegistryIndex};
use prl_core::reporting::{determine_label, format_number, parse_tuple, render_tuple, LabelKind};
use prl_core::scoring::{summarize_batches, EvaluationBatch, ScoreSummary, ScoringConfig};

fn score() -> impl Strategy<Value = f64> {
    prop_oneof![
        0.0f64..=100.0,
        (0u32..=10_000).prop_map(|c| f64::from(c) / 100.0)
    ]
}

fn scores() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(score())
}

fn sigmas() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(0.0f64..40.0)
}

fn summary(means: [f64; 5], sigmas: [f64; 5]) -> ScoreSummary {
    ScoreSummary {
        means: ScoreVector::new(means).unwrap(),
        instabilities: DimValues(sigmas),
        batch_count: 3,
        degraded: false,
    }
}

prop_compose! {
    fn profile()(
        mut thetas in prop::array::uniform9(0.0f64..=100.0),
        mut deltas in prop::array::uniform5(prop::array::uniform9(0.0f64..=100.0)),
        raw_weights in prop::array::uniform5(0.01f64..1.0),
        lambda in 0.0f64..0.1,
    ) -> ThresholdProfile {
        thetas.sort_by(f64::total_cmp);
        for column in &mut deltas {
            column.sort_by(f64::total_cmp);
        }
        let total: f64 = raw_weights.iter().sum();
        let levels = (0..9)
            .map(|i| LevelRow {
                n: i as u8 + 1,
                theta: thetas[i],
                delta: ScoreVector::new(std::array::from_fn(|d| deltas[d][i])).unwrap(),
            })
            .collect();
        let scoring = ScoringConfig {
            weights: DimValues(raw_weights.map(|w| w / total)),
            lambda,
            min_batches: 3,
        };
        ThresholdProfile::new("generated".into(), false, scoring, levels).unwrap()
    }
}

fn kind() -> impl Strategy<Value = EvidenceKind> {
    prop_oneof![
        (0usize..12).prop_map(|i| EvidenceKind::BUILTIN[i].clone()),
        "[a-z]{1,6}".prop_map(|s| EvidenceKind::custom(&s).unwrap()),
    ]
}

fn matrix() -> impl Strategy<Value = RequirementMatrix> {
    prop::collection::vec(prop::collection::btree_set(kind(), 0..4), 9)
        .prop_map(|rows| RequirementMatrix::new(rows).unwrap())
}

fn index_of(kinds: &[EvidenceKind]) -> EvidenceIndex {
    let created = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    EvidenceIndex {
        entries: kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| EvidenceEntry {
                kind: kind.clone(),
                path: format!("evidence/{i}.md"),
                sha256: "a".repeat(64),
                created,
                note: None,
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tuple_round_trips(means in scores(), sig in sigmas(), p in profile(), evidence in 0u8..=9) {
        let result = gating::qualify(&summary(means, sig), &p, evidence);
        let text = render_tuple(&result);
        let parsed = parse_tuple(&text).unwrap();
        prop_assert_eq!(parsed.level, result.effective_level);
        // Parsing recovers exactly the displayed (2-decimal) values; values
        // already on the 0.01 grid therefore come back unchanged.
        let shown = |v: f64| format_number(v).parse::<f64>().unwrap();
        prop_assert_eq!(parsed.prs, shown(result.prs));
        for (got, want) in parsed.scores.iter().zip(result.score_vector.values().0) {
            prop_assert_eq!(*got, shown(want));
            if (want * 100.0).round() / 100.0 == want {
                prop_assert_eq!(*got, want);
            }
        }
        prop_assert_eq!(parsed.threshold.is_some(), result.effective_level > 0);
        prop_assert_eq!(render_tuple(&result), text);
    }

    #[test]
    fn label_is_never_conformant_with_deviations(
        deviations in prop::collection::vec("[ -~]{0,40}", 0..4),
        canonical in any::<bool>(),
        default_matrix in any::<bool>(),
    ) {
        let base = ThresholdProfile::canonical();
        let p = if canonical { base } else { base.derived("custom") };
        let label = determine_label(&p, default_matrix, &deviations);
        if !deviations.is_empty() {
            prop_assert_eq!(label.kind, LabelKind::PrlCompatible);
        } else if canonical && default_matrix {
            prop_assert_eq!(label.kind, LabelKind::PrlConformant);
        } else {
            prop_assert_eq!(label.kind, LabelKind::Unlabeled);
        }
    }

    #[test]
    fn gate_failure_persists_upward(means in scores(), p in profile()) {
        let sv = ScoreVector::new(means).unwrap();
        let mut failed = false;
        for row in p.levels() {
            let passed = gate_passes(&sv, row).passed;
            prop_assert!(!(failed && passed), "gate passes at {} after failing below", row.n);
            failed |= !passed;
        }
    }

    #[test]
    fn levels_are_total_and_capped(means in scores(), sig in sigmas(), p in profile(), evidence in 0u8..=9, prs in 0.0f64..=100.0) {
        let level = determine_prl(prs, &ScoreVector::new(means).unwrap(), &p);
        prop_assert!(level <= 9);
        let result = gating::qualify(&summary(means, sig), &p, evidence);
        prop_assert!(result.effective_level <= result.evidence_level);
        prop_assert!(result.effective_level <= result.score_level);
        prop_assert_eq!(result.effective_level, result.score_level.min(evidence));
    }

    #[test]
    fn batch_order_does_not_matter(
        rows in prop::collection::vec(scores(), 1..25),
        seed in any::<u64>(),
    ) {
        let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
        let batches: Vec<EvaluationBatch> = rows
            .iter()
            .enumerate()
            .map(|(i, s)| EvaluationBatch {
                batch_id: format!("b{i}"),
                timestamp: t0,
                evaluator: "e".into(),
                sample_count: 1,
                scores: ScoreVector::new(*s).unwrap(),
            })
            .collect();
        let mut shuffled = batches.clone();
        shuffled.shuffle(&mut StdRng::seed_from_u64(seed));
        let config = ScoringConfig::default();
        let a = summarize_batches(&batches, &config).unwrap();
        let b = summarize_batches(&shuffled, &config).unwrap();
        for key in DimensionKey::ALL {
            prop_assert_eq!(a.means[key].to_bits(), b.means[key].to_bits());
            prop_assert_eq!(a.instabilities[key].to_bits(), b.instabilities[key].to_bits());
        }
    }

    #[test]
    fn required_kinds_are_cumulative(m in matrix()) {
        for n in 1..9u8 {
            prop_assert!(required_kinds(n, &m).is_subset(&required_kinds(n + 1, &m)));
        }
    }

    #[test]
    fn removing_evidence_never_raises_level(m in matrix(), held in prop::collection::vec(kind(), 0..15), drop in any::<prop::sample::Index>()) {
        let full = max_evidenced_level(&index_of(&held), &m);
        if !held.is_empty() {
            let mut fewer = held.clone();
            fewer.remove(drop.index(held.len()));
            prop_assert!(max_evidenced_level(&index_of(&fewer), &m) <= full);
        }
        // Cap correctness: any level with a missing required kind is out of reach.
        let present: BTreeSet<EvidenceKind> = held.iter().cloned().collect();
        for level in 1..=9u8 {
            if !required_kinds(level, &m).is_subset(&present) {
                prop_assert!(full < level);
            }
        }
    }

    #[test]
    fn history_partitions_the_registry(assets in prop::collection::vec(0u8..4, 1..12)) {
        let p = ThresholdProfile::canonical();
        let t0 = Utc.with_ymd_and_hms(2026, 2, 1, 0, 0, 0).unwrap();
        let mut index = RegistryIndex::default();
        let mut twin = RegistryIndex::default();
        for (i, a) in assets.iter().enumerate() {
            let draft = RecordDraft {
                asset_id: format!("asset-{a}"),
                version: "1.0.0".into(),
                fingerprint: AssetFingerprint("f".repeat(64)),
                result: gating::qualify(&summary([50.0; 5], [0.0; 5]), &p, 9),
                profile_id: p.profile_id.clone(),
            };
            let at = t0 + chrono::Duration::seconds(i as i64);
            index.append(draft.clone(), at).unwrap();
            twin.append(draft, at).unwrap();
        }
        prop_assert!(verify_chain(&index).is_empty());
        prop_assert_eq!(index.to_jsonl(), twin.to_jsonl());

        let ids: BTreeSet<String> = index.records.iter().map(|r| r.asset_id.clone()).collect();
        let mut merged: Vec<_> = ids.iter().flat_map(|id| history(&index, id)).collect();
        merged.sort_by_key(|r| r.record_seq);
        let all: Vec<_> = index.records.iter().collect();
        prop_assert_eq!(merged, all);
    }
}
