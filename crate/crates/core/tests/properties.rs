use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use typedkb::diff::diff_from_json;
use typedkb::fixtures::{scaffold_kb, solved_kb};
use typedkb::fuzz::generate_doc;
use typedkb::ledger::{verify_chain, Ledger};
use typedkb::verify::{gate, BankMetrics, HealthVector, Verdict};
use typedkb::{apply_diff, canonical_serialize, parse_kb, resolve_references, type_check_kb};

fn metrics(successes: u64, total: u64, invalid: u64, steps: u64) -> BankMetrics {
    let mut health = HealthVector::from_trajectories(&[]);
    health.invalid_action_count = invalid;
    health.mean_success_steps = steps.into();
    BankMetrics {
        bank: "b".into(),
        seed: 0,
        kb_hash: String::new(),
        successes,
        total,
        health,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn applied_diffs_keep_the_kb_closed(seed in any::<u64>(), solved in any::<bool>()) {
        let kb = if solved { solved_kb() } else { scaffold_kb() };
        let hash = kb.hash();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (doc, _) = generate_doc(&kb, &mut rng, 0.5);
        if let Ok(d) = diff_from_json(&doc) {
            if let Ok((next, _)) = apply_diff(&kb, &d) {
                prop_assert!(type_check_kb(&next).is_ok());
                prop_assert!(resolve_references(&next).is_empty());
                prop_assert_eq!(next.version, kb.version + 1);
                let text = canonical_serialize(&next);
                prop_assert_eq!(canonical_serialize(&parse_kb(&text).unwrap()), text);
            }
        }
        prop_assert_eq!(kb.hash(), hash);
    }

    #[test]
    fn kept_never_regresses_protected(
        fb in 0u64..=10, fa in 0u64..=10, pb in 0u64..=10, pa in 0u64..=10,
        ib in 0u64..5, ia in 0u64..5, health in any::<bool>(),
    ) {
        let (v, _) = gate(&metrics(fb, 10, ib, 9), &metrics(fa, 10, ia, 9), &metrics(pb, 10, 0, 9), &metrics(pa, 10, 0, 9), health);
        if v == Verdict::Kept {
            prop_assert!(pa >= pb);
            prop_assert!(fa > fb || (fa == fb && health && ia < ib));
        } else {
            prop_assert!(pa < pb || fa < fb || (fa == fb && !(health && ia < ib)));
        }
    }

    #[test]
    fn health_order_is_a_total_order(a in (0u64..4, 1u64..4), b in (0u64..4, 1u64..4), c in (0u64..4, 1u64..4)) {
        let h = |(i, s): (u64, u64)| metrics(0, 0, i, s).health;
        let (x, y, z) = (h(a), h(b), h(c));
        prop_assert_eq!(x.compare(&y), y.compare(&x).reverse());
        if x.improves_on(&y) && y.improves_on(&z) {
            prop_assert!(x.improves_on(&z));
        }
        prop_assert!(!x.improves_on(&x));
    }

    #[test]
    fn ledger_detects_any_edit(records in prop::collection::vec(any::<u32>(), 1..8), victim in any::<prop::sample::Index>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let mut l = Ledger::open(&path).unwrap();
        for r in &records {
            l.append(r).unwrap();
        }
        prop_assert_eq!(verify_chain(&path).unwrap().len(), records.len());
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let i = victim.index(lines.len());
        let edited = records[i].wrapping_add(1);
        lines[i] = lines[i].replacen(&format!("\"record\":{}", records[i]), &format!("\"record\":{edited}"), 1);
        std::fs::write(&path, lines.join("\n")).unwrap();
        prop_assert!(verify_chain(&path).is_err());
    }
}
