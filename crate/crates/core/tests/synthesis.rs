use std::collections::BTreeSet;

use proptest::prelude::*;

use dstgen::dialogue_model::{category_of, compatible_pairs, enumerate_pairs, TransitionTable};
use dstgen::schema::SlotRole;
use dstgen::seed::{rng_from, SampleSeed};
use dstgen::structure_synth::{check_structure, synthesize_structure};
use dstgen::template_engine::{realize_acts, verify_grounding_all, TemplateBank};
use dstgen::{FlowCategory, Schema};

fn domains() -> Vec<String> {
    Schema::builtin().domain_names().map(str::to_string).collect()
}

#[test]
fn schema_round_trips_through_json() {
    let schema = Schema::builtin();
    let again = Schema::from_json(&schema.to_json()).unwrap();
    assert_eq!(again, schema);
    again.validate().unwrap();
}

#[test]
fn bank_round_trips_through_json() {
    let bank = TemplateBank::builtin();
    assert_eq!(TemplateBank::from_json(&bank.to_json()).unwrap(), bank);
}

#[test]
fn transition_export_lists_every_pair() {
    let doc: serde_json::Value = serde_json::from_str(&TransitionTable::standard().to_json()).unwrap();
    let n: usize = doc
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_array().unwrap().len())
        .sum();
    assert_eq!(n, enumerate_pairs().len());
    assert_eq!(n, 31);
}

#[test]
fn categories_partition_the_transitions() {
    let mut seen = BTreeSet::new();
    for c in FlowCategory::ALL {
        for pair in compatible_pairs(*c) {
            assert_eq!(category_of(pair.0, pair.1), *c);
            assert!(seen.insert(pair));
        }
    }
    assert_eq!(seen.len(), 31);
    assert_eq!(FlowCategory::ALL.iter().map(|c| c.percent()).sum::<u64>(), 100);
}

proptest! {
    #[test]
    fn sampled_values_are_valid(seed in any::<u64>(), d in 0usize..5, count in 1usize..4) {
        let schema = Schema::builtin();
        let domain = &domains()[d];
        let mut rng = rng_from(seed, &[]);
        let values = schema.sample_slot_values(domain, count, SlotRole::Informable, &mut rng).unwrap();
        prop_assert_eq!(values.len(), count);
        let slots: BTreeSet<_> = values.iter().map(|v| v.slot.clone()).collect();
        prop_assert_eq!(slots.len(), count);
        for v in &values {
            prop_assert!(schema.validate_value(v));
        }
    }

    #[test]
    fn structures_satisfy_invariants(seed in any::<u64>(), index in 0u64..1_000_000, c in 0usize..6, d in 0usize..5) {
        let schema = Schema::builtin();
        let category = FlowCategory::ALL[c];
        let s = synthesize_structure(&schema, category, &domains()[d], SampleSeed::new(seed, index)).unwrap();
        prop_assert_eq!(s.flow_category, category);
        let violations = check_structure(&schema, &s);
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }

    #[test]
    fn synthesis_is_a_function_of_the_seed(seed in any::<u64>(), index in any::<u64>(), c in 0usize..6) {
        let schema = Schema::builtin();
        let category = FlowCategory::ALL[c];
        let a = synthesize_structure(&schema, category, "hotel", SampleSeed::new(seed, index)).unwrap();
        let b = synthesize_structure(&schema, category, "hotel", SampleSeed::new(seed, index)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn realizations_are_grounded(seed in any::<u64>(), c in 0usize..6, d in 0usize..5) {
        let schema = Schema::builtin();
        let bank = TemplateBank::builtin();
        let s = synthesize_structure(&schema, FlowCategory::ALL[c], &domains()[d], SampleSeed::new(seed, 0)).unwrap();
        let mut rng = rng_from(seed, &[1]);
        let (system, ids) = realize_acts(&bank, &s.system_acts, &mut rng);
        prop_assert_eq!(ids.len(), s.system_acts.len());
        prop_assert!(verify_grounding_all(&s.system_acts, &system));
        let (user, _) = realize_acts(&bank, &s.user_acts, &mut rng);
        prop_assert!(verify_grounding_all(&s.user_acts, &user));
        prop_assert!(!user.contains("<v>") && !user.contains("<s>") && !user.contains("<d>"));
    }
}
