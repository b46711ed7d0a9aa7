//! Property tests for the tokenizer, corpus, and metric invariants.

use norbert_core::baselines::count_cooccurrence;
use norbert_core::corpus::{build_sequences, DnsEvent, StopList};
use norbert_core::downstream::weighted_f1;
use norbert_core::numerics::softmax_in_place;
use norbert_core::tokenizer::{truncate_fqdn, TokenizerConfig, TruncateMode, Vocabulary};
use proptest::prelude::*;

fn fqdn_strategy() -> impl Strategy<Value = String> {
    // 1..6 labels of 1..8 lowercase alphanumeric chars
    prop::collection::vec("[a-z0-9][a-z0-9-]{0,7}", 1..6).prop_map(|labels| labels.join("."))
}

proptest! {
    #[test]
    fn truncation_is_idempotent(fqdn in fqdn_strategy(), k in 1usize..5) {
        for mode in [TruncateMode::Rightmost, TruncateMode::LeftmostLiteral] {
            let once = truncate_fqdn(&fqdn, k, mode).unwrap();
            let twice = truncate_fqdn(&once, k, mode).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.split('.').count() <= k.max(1));
        }
    }

    #[test]
    fn truncation_result_is_substring_of_input(fqdn in fqdn_strategy(), k in 1usize..5) {
        let lower = fqdn.to_ascii_lowercase();
        let out = truncate_fqdn(&fqdn, k, TruncateMode::Rightmost).unwrap();
        prop_assert!(lower.ends_with(&out));
        let out = truncate_fqdn(&fqdn, k, TruncateMode::LeftmostLiteral).unwrap();
        prop_assert!(lower.starts_with(&out));
    }

    #[test]
    fn vocabulary_size_monotone_in_min_count(
        tokens in prop::collection::vec("[a-d]{1,2}", 1..60),
        c1 in 1u64..4,
        c2 in 1u64..4,
    ) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let (v_lo, _) = Vocabulary::build(tokens.iter().map(|s| s.as_str()), lo);
        let (v_hi, _) = Vocabulary::build(tokens.iter().map(|s| s.as_str()), hi);
        prop_assert!(v_hi.len() <= v_lo.len());
    }

    #[test]
    fn vocabulary_grows_with_truncation_level(
        fqdns in prop::collection::vec(fqdn_strategy(), 1..50),
        k in 1usize..4,
    ) {
        let tokens_k: Vec<String> = fqdns
            .iter()
            .map(|f| truncate_fqdn(f, k, TruncateMode::Rightmost).unwrap())
            .collect();
        let tokens_k1: Vec<String> = fqdns
            .iter()
            .map(|f| truncate_fqdn(f, k + 1, TruncateMode::Rightmost).unwrap())
            .collect();
        let (vk, _) = Vocabulary::build(tokens_k.iter().map(|s| s.as_str()), 1);
        let (vk1, _) = Vocabulary::build(tokens_k1.iter().map(|s| s.as_str()), 1);
        prop_assert!(vk1.len() >= vk.len());
    }

    #[test]
    fn encode_decode_round_trips(tokens in prop::collection::vec("[a-z]{1,6}", 1..30)) {
        let (vocab, _) = Vocabulary::build(tokens.iter().map(|s| s.as_str()), 1);
        for t in vocab.tokens() {
            let id = vocab.encode(t);
            prop_assert_eq!(vocab.decode(id).unwrap(), t.as_str());
        }
    }

    #[test]
    fn windows_partition_filtered_events(
        n_events in 1usize..120,
        window in 1usize..12,
    ) {
        let events: Vec<DnsEvent> = (0..n_events)
            .map(|i| DnsEvent {
                timestamp: i as f64,
                device_id: format!("dev{}", i % 3),
                fqdn: format!("h{i}.svc.example"),
            })
            .collect();
        let seqs = build_sequences(&events, window, &TokenizerConfig::default(), &StopList::default())
            .unwrap();
        // per device: count windows == floor(events / window), and windows
        // never mix devices
        for dev in 0..3 {
            let dev_id = format!("dev{dev}");
            let dev_events = events.iter().filter(|e| e.device_id == dev_id).count();
            let dev_windows = seqs.iter().filter(|s| s.device_id == dev_id).count();
            prop_assert_eq!(dev_windows, dev_events / window);
        }
        for s in &seqs {
            prop_assert_eq!(s.tokens.len(), window);
        }
    }

    #[test]
    fn softmax_normalizes_and_stays_positive(xs in prop::collection::vec(-50.0f32..50.0, 1..40)) {
        let mut v = xs.clone();
        softmax_in_place(&mut v);
        let sum: f32 = v.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-5);
        prop_assert!(v.iter().all(|p| *p >= 0.0 && p.is_finite()));
    }

    #[test]
    fn weighted_f1_bounded_and_exact_on_perfect(
        labels in prop::collection::vec(0u32..4, 1..60),
    ) {
        let classes: Vec<String> = (0..4).map(|c| format!("c{c}")).collect();
        let report = weighted_f1(&labels, &labels, &classes).unwrap();
        prop_assert_eq!(report.weighted_f1, 1.0);
        // scramble predictions: score must stay in [0, 1]
        let preds: Vec<u32> = labels.iter().map(|l| (l + 1) % 4).collect();
        let report = weighted_f1(&preds, &labels, &classes).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.weighted_f1));
    }

    #[test]
    fn cooccurrence_is_symmetric_with_zero_diagonal(
        seqs in prop::collection::vec(prop::collection::vec(0u32..12, 1..20), 1..10),
        window in 1usize..6,
    ) {
        let m = count_cooccurrence(&seqs, window).unwrap();
        for (i, j, x) in m.entries() {
            prop_assert_ne!(i, j);
            prop_assert!(i > 1 && j > 1, "reserved ids must be skipped");
            prop_assert_eq!(m.get(j, i), x);
        }
    }
}
