use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use litscout_core::analysis::{parse_question_ranking, CandidateQuestion};
use litscout_core::anchoring::{verify_anchor, AnchorMatch, AnchorRejection};
use litscout_core::document::{char_slice, segment_sentences};
use litscout_core::parallel::bounded_map;
use litscout_core::suggestions::{parse_recommendation_ranking, render_recommendation, SeenSet, SuggestionDraft};
use litscout_core::tracking::{RunLock, RunLockGuard, SchedulerState, UpdateFrequency};
use litscout_core::{Error, Parallelism};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = String> {
    "[A-Z][a-zé ]{3,30}[a-z][.?!]"
}

fn document() -> impl Strategy<Value = String> {
    prop::collection::vec(sentence(), 1..12).prop_map(|s| s.join(" "))
}

fn draft(i: usize) -> SuggestionDraft {
    SuggestionDraft {
        title: format!("Idea {i}"),
        text: format!("Consider approach number {i} for the ablation."),
        papers: Vec::new(),
        info: String::new(),
    }
}

proptest! {
    #[test]
    fn sentence_spans_are_char_offsets(text in document()) {
        let sentences = segment_sentences(&text);
        prop_assert!(!sentences.is_empty());
        let mut last_end = 0;
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert!(s.start >= last_end && s.end > s.start);
            prop_assert_eq!(char_slice(&text, s.start, s.end), s.content.as_str());
            last_end = s.end;
        }
    }

    #[test]
    fn every_real_sentence_anchors(text in document(), pick in any::<prop::sample::Index>()) {
        let sentences = segment_sentences(&text);
        let target = &sentences[pick.index(sentences.len())];
        let m = AnchorMatch {
            sentence_index: target.index as i64,
            quote: format!("{}  ", target.content),
            reasoning: "relevant".into(),
            location: "results".into(),
        };
        prop_assert_eq!(verify_anchor(&m, &sentences), Ok(()));

        let out_of_range = AnchorMatch { sentence_index: sentences.len() as i64, ..m.clone() };
        prop_assert_eq!(verify_anchor(&out_of_range, &sentences), Err(AnchorRejection::IndexOutOfRange));
        let altered = AnchorMatch { quote: format!("{} extra", target.content), ..m };
        prop_assert_eq!(verify_anchor(&altered, &sentences), Err(AnchorRejection::QuoteMismatch));
    }

    #[test]
    fn question_selection_is_bounded_and_distinct(
        order in Just((0..15usize).collect::<Vec<_>>()).prop_shuffle(),
        keep in 0..15usize,
        k in 1..13usize,
    ) {
        let candidates: Vec<CandidateQuestion> = (0..15)
            .map(|i| CandidateQuestion { question: format!("Which baseline {i} matters most?"), explanation: String::new() })
            .collect();
        let raw: String = order[..keep]
            .iter()
            .enumerate()
            .map(|(rank, &i)| format!("{}. {}\n", rank + 1, candidates[i].question))
            .collect();
        let sel = parse_question_ranking(&raw, &candidates, k);
        prop_assert!(sel.indices.len() <= k);
        prop_assert_eq!(sel.indices.iter().collect::<BTreeSet<_>>().len(), sel.indices.len());
        prop_assert!(sel.indices.iter().all(|&i| i < candidates.len()));
        if keep == 0 {
            prop_assert!(sel.fell_back);
            prop_assert_eq!(sel.indices, (0..k).collect::<Vec<_>>());
        } else {
            prop_assert!(!sel.fell_back);
            prop_assert_eq!(&sel.indices[..], &order[..keep.min(k)]);
        }
    }

    #[test]
    fn recommendation_order_is_injective(order in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), keep in 0..=8usize) {
        let batch: Vec<SuggestionDraft> = (0..8).map(draft).collect();
        let raw: String = order[..keep]
            .iter()
            .map(|&i| format!("Recommendation: {}\nReasoning: fits.\n", render_recommendation(&batch[i])))
            .collect();
        let ranking = parse_recommendation_ranking(&raw, &batch);
        prop_assert_eq!(ranking.order.iter().collect::<BTreeSet<_>>().len(), ranking.order.len());
        if keep * 2 < batch.len() {
            prop_assert!(ranking.fell_back);
            prop_assert_eq!(ranking.order, (0..8).collect::<Vec<_>>());
        } else {
            prop_assert_eq!(&ranking.order[..], &order[..keep]);
        }
    }

    #[test]
    fn seen_set_never_redelivers(batches in prop::collection::vec(prop::collection::vec(0u8..20, 0..10), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seen.txt");
        let mut seen = SeenSet::load(&path).unwrap();
        let mut delivered = Vec::new();
        for batch in batches {
            let hashes: Vec<String> = batch.iter().map(|b| format!("h{b}")).collect();
            let fresh = seen.filter(hashes, |h| h.as_str());
            seen.record_delivered(&path, &fresh).unwrap();
            delivered.extend(fresh);
        }
        let unique: BTreeSet<_> = delivered.iter().collect();
        prop_assert_eq!(unique.len(), delivered.len());
        prop_assert_eq!(SeenSet::load(&path).unwrap().len(), delivered.len());
    }

    #[test]
    fn fanout_preserves_input_order(items in prop::collection::vec(any::<u32>(), 0..64), width in 1..9usize) {
        let expected: Vec<u64> = items.iter().map(|&x| u64::from(x) * 3).collect();
        let got = bounded_map(Parallelism::from_width(width), items, |x| u64::from(x) * 3);
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn schedule_due_exactly_after_interval(hours in 0i64..24 * 30) {
        let t0 = Utc.with_ymd_and_hms(2025, 3, 3, 9, 0, 0).unwrap();
        let now = t0 + Duration::hours(hours);
        let mut state = SchedulerState::default();
        prop_assert!(state.is_due("p", UpdateFrequency::Weekly, t0));
        prop_assert!(!state.is_due("p", UpdateFrequency::Never, t0));
        state.mark_checked("p", UpdateFrequency::Weekly, t0);
        prop_assert_eq!(state.is_due("p", UpdateFrequency::Weekly, now), hours >= 24 * 7);
        state.reschedule("p", UpdateFrequency::Daily);
        prop_assert_eq!(state.is_due("p", UpdateFrequency::Daily, now), hours >= 24);
    }
}

#[test]
fn run_lock_is_exclusive_until_stale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p1").join("run.lock");
    let t0 = Utc.with_ymd_and_hms(2025, 3, 3, 9, 0, 0).unwrap();
    let lock = |run: &str, at| RunLock {
        project_id: "p1".into(),
        run_id: run.into(),
        acquired_at: at,
        pid: 1,
    };
    let staleness = Duration::minutes(30);

    let held = RunLockGuard::acquire(&path, lock("run-0001", t0), staleness).unwrap();
    let second = RunLockGuard::acquire(&path, lock("run-0002", t0 + Duration::minutes(5)), staleness);
    assert!(matches!(second, Err(Error::Busy(_))), "{second:?}");
    assert!(RunLockGuard::is_held(&path, t0 + Duration::minutes(5), staleness));

    // a crashed run leaves its lock behind; it is replaced once stale
    std::mem::forget(held);
    let taken = RunLockGuard::acquire(&path, lock("run-0003", t0 + Duration::minutes(31)), staleness).unwrap();
    assert_eq!(taken.lock().run_id, "run-0003");
    drop(taken);
    assert!(!path.exists());
}

#[test]
fn frequency_labels_round_trip() {
    for (label, f) in [
        ("daily", UpdateFrequency::Daily),
        ("every_2_days", UpdateFrequency::Every2Days),
        (" Weekly ", UpdateFrequency::Weekly),
        ("biweekly", UpdateFrequency::Biweekly),
        ("never", UpdateFrequency::Never),
    ] {
        assert_eq!(UpdateFrequency::parse(label), Some(f));
    }
    assert_eq!(UpdateFrequency::parse("hourly"), None);
}
