use std::collections::BTreeMap;

use proptest::prelude::*;

use dstgen::corpus_composer::{
    category_counts, compose, corpus_stats, enumerate_flows, estimate_cost, largest_remainder, read_corpus,
    read_corpus_str, refine_corpus, write_corpus, write_corpus_string, CompositionSpec, Corpus, Counts, Prices,
    RefinementMode, RefinerConfig, TokenAverages,
};
use dstgen::llm_refiner::MockBackend;
use dstgen::template_engine::TemplateBank;
use dstgen::Schema;

fn template_only(spec: CompositionSpec) -> Corpus {
    compose(
        &Schema::builtin(),
        &spec.with_refinement(RefinementMode::None),
        &TemplateBank::builtin(),
        None,
    )
    .unwrap()
}

fn small_spec(seed: u64) -> CompositionSpec {
    let targets: BTreeMap<String, u64> = [("hotel", 23), ("taxi", 11)]
        .into_iter()
        .map(|(d, n)| (d.to_string(), n))
        .collect();
    CompositionSpec::percentage("small", targets, seed)
}

#[test]
fn compose_is_deterministic_and_seed_sensitive() {
    let a = write_corpus_string(&template_only(small_spec(1)));
    let b = write_corpus_string(&template_only(small_spec(1)));
    let c = write_corpus_string(&template_only(small_spec(2)));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn refined_compose_is_deterministic() {
    let mock = MockBackend::new();
    let run = |jobs: usize| {
        let cfg = RefinerConfig {
            max_in_flight: jobs,
            ..RefinerConfig::new(&mock)
        };
        let corpus = compose(&Schema::builtin(), &small_spec(3), &TemplateBank::builtin(), Some(&cfg)).unwrap();
        write_corpus_string(&corpus)
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn refine_corpus_matches_direct_refinement() {
    let mock = MockBackend::new();
    let cfg = RefinerConfig::new(&mock);
    let plain = template_only(small_spec(4));
    assert!(plain.samples.iter().all(|s| s.provenance.refinement.is_none()));
    let refined = refine_corpus(&plain, &cfg).unwrap();
    let direct = compose(&Schema::builtin(), &small_spec(4), &TemplateBank::builtin(), Some(&cfg)).unwrap();
    assert_eq!(refined.samples, direct.samples);
    assert_eq!(refined.manifest.grounding_rate, 1.0);
}

#[test]
fn refinement_without_backend_is_rejected() {
    let spec = small_spec(0).with_refinement(RefinementMode::Full);
    assert!(compose(&Schema::builtin(), &spec, &TemplateBank::builtin(), None).is_err());
}

#[test]
fn unique_all_scales_with_copies() {
    let flows = enumerate_flows(&Schema::builtin());
    let one = template_only(CompositionSpec::unique_all(1, 9));
    let three = template_only(CompositionSpec::unique_all(3, 9));
    assert_eq!(one.samples.len(), flows.len());
    assert_eq!(three.samples.len(), 3 * flows.len());
    for (i, flow) in flows.iter().enumerate() {
        for s in &three.samples[3 * i..3 * i + 3] {
            assert_eq!(&s.flow(), flow);
        }
    }
}

#[test]
fn file_round_trip_and_stats() {
    let corpus = template_only(small_spec(5));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&corpus, &path).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), corpus);
    let stats = corpus_stats(&corpus);
    assert_eq!(stats.counts.total, 34);
    assert_eq!(stats.grounded, 34);
    assert!(stats.to_text().contains("hotel"));
}

#[test]
fn tampered_counts_are_rejected() {
    let mut corpus = template_only(small_spec(6));
    corpus.samples.pop();
    assert!(read_corpus_str(&write_corpus_string(&corpus)).is_err());
    corpus.manifest.counts = Counts::tally(&corpus.samples);
    assert!(read_corpus_str(&write_corpus_string(&corpus)).is_ok());
}

proptest! {
    #[test]
    fn apportionment_sums_and_stays_within_one(total in 0u64..100_000, weights in prop::collection::vec(0u64..50, 1..8)) {
        prop_assume!(weights.iter().sum::<u64>() > 0);
        let seats = largest_remainder(total, &weights);
        let w: u64 = weights.iter().sum();
        prop_assert_eq!(seats.iter().sum::<u64>(), total);
        for (s, x) in seats.iter().zip(&weights) {
            let exact = total as f64 * *x as f64 / w as f64;
            prop_assert!((*s as f64 - exact).abs() < 1.0);
        }
    }

    #[test]
    fn category_counts_cover_total(total in 0u64..20_000) {
        prop_assert_eq!(category_counts(total).iter().map(|(_, n)| n).sum::<u64>(), total);
    }

    #[test]
    fn cost_is_linear_in_sample_count(a in 0u64..100_000, b in 0u64..100_000, overhead in 0.0f64..3.0) {
        let row = TokenAverages::published("5pct").unwrap();
        let p = Prices::default();
        let ca = estimate_cost(a, &row, &p, overhead).unwrap();
        let cb = estimate_cost(b, &row, &p, overhead).unwrap();
        let cab = estimate_cost(a + b, &row, &p, overhead).unwrap();
        prop_assert!((cab.naive_usd - ca.naive_usd - cb.naive_usd).abs() < 1e-6);
        prop_assert!((cab.reported_usd - cab.naive_usd * overhead).abs() < 1e-6);
    }

    #[test]
    fn subset_corpora_round_trip(seed in any::<u64>(), keep in prop::collection::vec(any::<bool>(), 34)) {
        let mut corpus = template_only(small_spec(seed % 4));
        corpus.samples = corpus.samples.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
        corpus.manifest.counts = Counts::tally(&corpus.samples);
        corpus.manifest.spec.seed = seed;
        let back = read_corpus_str(&write_corpus_string(&corpus)).unwrap();
        prop_assert_eq!(back, corpus);
    }
}

#[test]
fn negative_prices_are_rejected() {
    let row = TokenAverages::published("1pct").unwrap();
    let prices = Prices {
        input_per_1k: -1.0,
        ..Prices::default()
    };
    assert!(estimate_cost(10, &row, &prices, 1.0).is_err());
}
