use std::collections::BTreeSet;

use proptest::prelude::*;

use pss_core::corpus::{generate_synthetic_streams, Label, SyntheticStreamParams};
use pss_core::pipeline::{evaluate_streams, SegmentationResult};
use pss_core::svm::{train_svm, FeatureSpec, StreamFeatures, SvmParams, PREV_PREFIX};
use pss_core::textproc::{build_vocabulary, count_vector, process, Language, SparseVector};
use pss_core::topics::{fit_lda, LdaParams, TopicFeaturizer};

fn small_streams(seed: u64) -> Vec<pss_core::corpus::PageStream> {
    generate_synthetic_streams(&SyntheticStreamParams {
        n_streams: 3,
        pages_per_stream: 10,
        seed,
        ..SyntheticStreamParams::default()
    })
    .unwrap()
}

fn label(nd: bool) -> Label {
    if nd {
        Label::NewDocument
    } else {
        Label::SameDocument
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmentation_partitions_the_stream(flags in prop::collection::vec(any::<bool>(), 1..60)) {
        let preds: Vec<Label> = flags.iter().map(|&f| label(f)).collect();
        let seg = SegmentationResult::from_predictions("s", &preds).unwrap();
        let mut next = 0;
        for doc in &seg.documents {
            prop_assert_eq!(*doc.start(), next);
            prop_assert!(doc.end() >= doc.start());
            next = doc.end() + 1;
        }
        prop_assert_eq!(next, preds.len());
        let mut forced = preds.clone();
        forced[0] = Label::NewDocument;
        prop_assert_eq!(seg.labels(), forced);
    }

    #[test]
    fn svm_dual_ascends_and_respects_the_box(
        rows in prop::collection::vec(prop::collection::vec((0usize..6, -3.0f64..3.0), 0..5), 4..30),
        c in 0.05f64..5.0,
        seed in any::<u64>(),
    ) {
        let examples: Vec<SparseVector<String>> = rows
            .iter()
            .map(|r| SparseVector::from_pairs(r.iter().map(|(k, v)| (format!("f{k}"), *v))))
            .collect();
        let labels: Vec<Label> = (0..examples.len()).map(|i| label(i % 3 == 0)).collect();
        let params = SvmParams { c, seed, ..SvmParams::default() };
        let (_, trace) = train_svm(&examples, &labels, &params).unwrap();
        prop_assert!(trace.dual_objective.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(trace.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        prop_assert_eq!(trace.box_violations, 0);
    }

    #[test]
    fn thetas_stay_on_the_simplex(
        docs in prop::collection::vec(prop::collection::vec(0u32..15, 0..20), 1..12),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let params = LdaParams { iterations: 5, fold_in_sweeps: 5, ..LdaParams::with_topics(k, seed) };
        let model = fit_lda(&docs, 15, &params).unwrap();
        let total: u32 = model.topic_totals().iter().sum();
        prop_assert_eq!(total as usize, docs.iter().map(Vec::len).sum::<usize>());
        for d in 0..docs.len() {
            let th = model.theta_of_document(d);
            prop_assert!((th.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let unseen = model.infer_theta(&docs[d], seed ^ 1);
            prop_assert!((unseen.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(unseen.iter().all(|&v| v > 0.0));
        }
    }
}

#[test]
fn count_vectors_recount_in_vocabulary_tokens() {
    for s in small_streams(5) {
        let texts: Vec<&str> = s.pages().iter().map(|p| p.text.as_str()).collect();
        let vocab = build_vocabulary(&texts, 2, Language::None).unwrap();
        for t in texts {
            let in_vocab = process(t, Language::None)
                .iter()
                .filter(|w| vocab.id(w).is_some())
                .count();
            assert_eq!(count_vector(t, &vocab).sum(), in_vocab as f64);
        }
    }
}

#[test]
fn predecessor_features_copy_the_previous_page() {
    let streams = small_streams(9);
    let texts: Vec<&str> = streams
        .iter()
        .flat_map(|s| s.pages().iter().map(|p| p.text.as_str()))
        .collect();
    let vocab = build_vocabulary(&texts, 1, Language::None).unwrap();
    let docs: Vec<Vec<u32>> = texts.iter().map(|t| vocab.ids_of_text(t)).collect();
    let model = fit_lda(&docs, vocab.len(), &LdaParams { iterations: 10, ..LdaParams::with_topics(4, 2) }).unwrap();
    let topics = TopicFeaturizer::new(model);
    let full = FeatureSpec::stages()[3];
    let base = FeatureSpec { predecessor: false, ..full };
    for s in &streams {
        let feats = StreamFeatures::compute(s, &vocab, Some(&topics));
        for p in 1..s.len() {
            let ids: BTreeSet<String> = feats.assemble(p, &full).unwrap().keys().cloned().collect();
            for k in feats.assemble(p - 1, &base).unwrap().keys() {
                assert!(ids.contains(&format!("{PREV_PREFIX}{k}")), "page {p} lacks copy of {k}");
            }
        }
        let first: Vec<String> = feats.assemble(0, &full).unwrap().keys().cloned().collect();
        assert!(first.iter().all(|k| !k.starts_with(PREV_PREFIX)));
    }
}

#[test]
fn first_page_is_forced_and_reported_both_ways() {
    let streams = small_streams(13);
    let preds: Vec<Vec<Label>> = streams.iter().map(|s| vec![Label::SameDocument; s.len()]).collect();
    let report = evaluate_streams(&streams, &preds).unwrap();
    let pages: usize = streams.iter().map(|s| s.len()).sum();
    assert_eq!(report.all_pages.confusion.total() as usize, pages);
    assert_eq!(report.excluding_first.confusion.total() as usize, pages - streams.len());
    assert_eq!(report.all_pages.confusion.tp, streams.len() as u64);
    assert_eq!(report.excluding_first.confusion.tp, 0);
}
