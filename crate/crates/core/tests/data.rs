use std::collections::HashSet;

use proptest::prelude::*;

use smorl_core::data::{
    decode_dataset, encode_dataset, make_examples, padded_window, popular_set_size, preprocess, read_events, split,
    EventLog, EventRecord, EventType, FormatDescriptor, ItemCatalog, PreprocessRules, PAD, SEQ_LEN,
};

fn arb_log() -> impl Strategy<Value = EventLog> {
    prop::collection::vec((0u8..30, 0i64..50, 0u8..25, 0u8..3), 1..300).prop_map(|rows| EventLog {
        records: rows
            .into_iter()
            .map(|(s, ts, item, ev)| EventRecord {
                session_id: format!("s{s}"),
                timestamp: ts,
                item_id: format!("i{item}"),
                event_type: [EventType::Click, EventType::View, EventType::Purchase][ev as usize],
            })
            .collect(),
        malformed: 0,
    })
}

fn arb_rules() -> impl Strategy<Value = PreprocessRules> {
    // Subsampling runs after the frequency filter and can push counts back under
    // it, so only one of the two is active at a time.
    (prop::option::of(1usize..5), 2usize..5, prop::option::of(1usize..20), any::<u64>()).prop_map(
        |(freq, len, sub, seed)| PreprocessRules {
            keep_events: vec![EventType::Click, EventType::View],
            min_item_frequency: freq,
            min_session_length: len,
            subsample: if freq.is_some() { None } else { sub },
            subsample_seed: seed,
        },
    )
}

proptest! {
    #[test]
    fn preprocessing_is_idempotent(log in arb_log(), rules in arb_rules()) {
        if let Ok(once) = preprocess(&log, &rules) {
            let twice = preprocess(&once.to_event_log(), &rules).unwrap();
            prop_assert_eq!(&once, &twice);
            for s in &once.sessions {
                prop_assert!(s.len() >= rules.min_session_length);
                prop_assert!(s.iter().all(|&i| i >= 1 && i <= once.n_items()));
            }
            if let Some(f) = rules.min_item_frequency {
                let mut counts = vec![0usize; once.n_items() + 1];
                for &i in once.sessions.iter().flatten() {
                    counts[i] += 1;
                }
                prop_assert!(counts[1..].iter().all(|&c| c >= f));
            }
        }
    }

    #[test]
    fn next_prefix_extends_prefix_by_target(
        sessions in prop::collection::vec(prop::collection::vec(1usize..40, 2..25), 1..20)
    ) {
        let ds = smorl_core::data::SessionDataset::from_indices(sessions);
        for ex in make_examples(&ds, SEQ_LEN) {
            let s = &ds.sessions[ex.session];
            prop_assert_eq!(ex.prefix.len(), SEQ_LEN);
            prop_assert_eq!(&ex.prefix, &padded_window(&s[..ex.position], SEQ_LEN));
            prop_assert_eq!(ex.target, s[ex.position]);
            let mut shifted: Vec<usize> = ex.prefix[1..].to_vec();
            shifted.push(ex.target);
            prop_assert_eq!(&ex.next_prefix, &shifted);
            prop_assert!(ex.prefix.iter().skip_while(|&&i| i == PAD).all(|&i| i != PAD));
        }
    }

    #[test]
    fn popular_partition_identity(counts in prop::collection::vec(0u64..1000, 1..400)) {
        let mut full = vec![0];
        full.extend(counts);
        let n = full.len() - 1;
        for x in [1.0, 5.0, 10.0, 50.0] {
            let cat = ItemCatalog::from_counts(full.clone(), x);
            let popular = cat.popular_items();
            prop_assert_eq!(popular.len(), popular_set_size(n, x));
            prop_assert_eq!(popular.len() + cat.long_tail_items().len(), n);
            let min_pop = popular.iter().map(|&i| full[i]).min().unwrap_or(u64::MAX);
            prop_assert!(cat.long_tail_items().iter().all(|&i| full[i] <= min_pop));
        }
    }
}

#[test]
fn popular_set_sizes() {
    assert_eq!(popular_set_size(26_702, 10.0), 2_671);
    assert_eq!(popular_set_size(100, 10.0), 10);
    assert_eq!(popular_set_size(101, 10.0), 11);
    assert_eq!(popular_set_size(7, 50.0), 4);
    assert_eq!(popular_set_size(1000, 1.0), 10);
}

#[test]
fn split_covers_1000_sessions_disjointly() {
    let s = split(1000, (8, 1, 1), 5, 42).unwrap();
    let mut test_union = HashSet::new();
    for f in &s.folds {
        let all: Vec<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
        let set: HashSet<usize> = all.iter().copied().collect();
        assert_eq!(all.len(), 1000);
        assert_eq!(set.len(), 1000);
        assert_eq!((f.validation.len(), f.test.len()), (100, 100));
        test_union.extend(f.test.iter().copied());
    }
    assert_eq!(test_union.len(), 500);
}

#[test]
fn dataset_text_round_trip_and_determinism() {
    let text = "1,2014-04-07T10:51:09.277Z,214536502,0\n1,2014-04-07T10:54:09.868Z,214536500,0\n\
                1,2014-04-07T10:54:46.998Z,214536506,0\n2,2014-04-07T13:56:37.614Z,214662742,0\n\
                2,2014-04-07T13:57:19.373Z,214662742,0\n2,2014-04-07T13:58:37.446Z,214825110,0\n";
    let log = read_events(text.as_bytes(), &FormatDescriptor::rc15()).unwrap();
    let ds = preprocess(&log, &PreprocessRules::rc15()).unwrap();
    assert_eq!(ds.stats().sequences, 2);
    assert_eq!(ds.stats().clicks, 6);
    let enc = encode_dataset(&ds).unwrap();
    assert_eq!(decode_dataset(&enc).unwrap(), ds);
    let again = encode_dataset(&preprocess(&log, &PreprocessRules::rc15()).unwrap()).unwrap();
    assert_eq!(enc, again);
}
