mod common;

use common::{desk_decoder, noisy_observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taptype::session::{apply, read_event_log, replay, taps_for, write_event_log, Feedback, Mode, Session, SessionEvent, SessionState};
use taptype::{FingerClass, Hand, TapObservation};

fn session() -> Session {
    Session::new(desk_decoder().clone())
}

fn type_word(s: &mut Session, word: &str) {
    for e in taps_for(s.decoder(), word).unwrap() {
        s.handle(&e).unwrap();
    }
}

/// Random event scripts covering every gesture.
fn random_script(rng: &mut ChaCha8Rng, len: usize) -> Vec<SessionEvent> {
    const TYPING: [FingerClass; 4] = [FingerClass::Index, FingerClass::Middle, FingerClass::Ring, FingerClass::Pinky];
    (0..len)
        .map(|_| match rng.gen_range(0..20) {
            0..=10 => {
                let hand = Hand::ALL[rng.gen_range(0..2)];
                let finger = TYPING[rng.gen_range(0..4)];
                SessionEvent::FingerTap {
                    obs: noisy_observation(rng, hand, finger),
                }
            }
            11..=13 => SessionEvent::Space,
            14 | 15 => SessionEvent::Cycle,
            16 | 17 => SessionEvent::DeleteWord,
            18 => SessionEvent::AcceptChar,
            _ => SessionEvent::Rejected,
        })
        .collect()
}

#[test]
fn space_on_an_empty_state_changes_nothing() {
    let mut s = session();
    let r = s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(s.state(), &SessionState::default());
    assert!(r.nothing_to_commit);
    assert_eq!(r.submitted, None);
    assert_eq!(r.feedback, Feedback::None);
}

#[test]
fn typing_the_and_space_commits_the_best_word() {
    let mut s = session();
    type_word(&mut s, "the");
    let r = s.render();
    assert_eq!(r.pending_mask, "***");
    // oracle: with one-hot taps the candidates are the words typed by the
    // same fingers, scored by the character and word models alone
    let d = s.decoder();
    let fingers = d.map().fingers_for_word("the");
    let best = d
        .word_lm()
        .words()
        .filter(|w| d.in_vocabulary(w) && d.map().fingers_for_word(w) == fingers)
        .map(|w| (w, d.char_lm().score_word(w).unwrap() + d.word_lm().log_prob(&[] as &[&str], w)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| b.0.cmp(a.0)))
        .unwrap();
    assert_eq!(best.0, "the");
    assert_eq!(r.current.as_deref(), Some("the"));
    s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(s.state().committed, vec!["the"]);
    assert!(s.state().pending.is_empty());
}

#[test]
fn cycle_after_delete_restores_the_previous_suggestions() {
    let mut s = session();
    type_word(&mut s, "the");
    let before = s.render().suggestions;
    assert!(before.len() > 1);
    s.handle(&SessionEvent::Space).unwrap();
    s.handle(&SessionEvent::DeleteWord).unwrap();
    assert!(s.state().committed.is_empty());
    let r = s.handle(&SessionEvent::Cycle).unwrap();
    assert_eq!(r.suggestions, before);
    assert_eq!(r.cursor, 1);
    assert_eq!(r.pending_mask, "***");
    // space now commits the newly selected entry
    s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(s.state().committed, vec![before[1].clone()]);
}

#[test]
fn cycle_wraps_and_space_commits_the_selection() {
    let mut s = session();
    type_word(&mut s, "and");
    let n = s.render().suggestions.len();
    for i in 1..=n {
        let r = s.handle(&SessionEvent::Cycle).unwrap();
        assert_eq!(r.cursor, i % n);
    }
    let r = s.handle(&SessionEvent::Cycle).unwrap();
    let chosen = r.current.unwrap();
    s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(s.state().committed, vec![chosen]);
}

#[test]
fn cycle_without_suggestions_is_a_no_op() {
    let mut s = session();
    let r = s.handle(&SessionEvent::Cycle).unwrap();
    assert_eq!(r.feedback, Feedback::None);
    assert_eq!(s.state(), &SessionState::default());
}

#[test]
fn double_space_submits_the_phrase() {
    let mut s = session();
    type_word(&mut s, "the");
    s.handle(&SessionEvent::Space).unwrap();
    type_word(&mut s, "end");
    s.handle(&SessionEvent::Space).unwrap();
    let r = s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(r.submitted.as_deref(), Some("the end"));
    assert!(s.state().committed.is_empty());
    assert_eq!(s.state().submitted, vec!["the end"]);
    // a third space has no word just committed
    let r = s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(r.submitted, None);
}

#[test]
fn repeated_delete_removes_pending_then_words() {
    let mut s = session();
    for w in ["the", "end"] {
        type_word(&mut s, w);
        s.handle(&SessionEvent::Space).unwrap();
    }
    type_word(&mut s, "of");
    s.handle(&SessionEvent::DeleteWord).unwrap();
    assert_eq!(s.state().committed.len(), 2);
    assert!(s.state().pending.is_empty());
    s.handle(&SessionEvent::DeleteWord).unwrap();
    assert_eq!(s.state().committed, vec!["the"]);
    s.handle(&SessionEvent::DeleteWord).unwrap();
    let r = s.handle(&SessionEvent::DeleteWord).unwrap();
    assert!(s.state().committed.is_empty());
    assert_eq!(r.feedback, Feedback::None);
}

#[test]
fn rejected_taps_leave_the_state_alone() {
    let mut s = session();
    type_word(&mut s, "th");
    let before = s.state().clone();
    let r = s.handle(&SessionEvent::Rejected).unwrap();
    assert_eq!(s.state(), &before);
    assert_eq!(r.feedback, Feedback::None);
}

#[test]
fn unknown_word_is_spelled_in_oov_mode() {
    let mut s = session();
    // "zq" is no word; accept the best characters for two taps
    type_word(&mut s, "zq");
    let r = s.handle(&SessionEvent::AcceptChar).unwrap();
    assert_eq!(r.mode, Mode::Oov);
    assert_eq!(r.oov_prefix.chars().count(), 2);
    assert!(r.pending_mask.is_empty());
    let prefix = r.oov_prefix.clone();
    // 'z' and 'q' share the left pinky
    assert!(prefix.chars().all(|c| s.decoder().map().finger_for(c) == Some((Hand::Left, FingerClass::Pinky))));
    // one more tap offers the best characters of its hand, ranked
    type_word(&mut s, "x");
    let r = s.render();
    let hand_chars = s.decoder().map().characters_of_hand(Hand::Left).len();
    assert_eq!(r.suggestions.len(), hand_chars.min(s.decoder().config().max_suggestions));
    let top = r.suggestions[0].clone();
    s.handle(&SessionEvent::Space).unwrap();
    assert_eq!(s.state().committed, vec![format!("{prefix}{top}")]);
    assert_eq!(s.state().mode, Mode::Normal);
}

#[test]
fn delete_in_oov_mode_abandons_the_word() {
    let mut s = session();
    type_word(&mut s, "zq");
    s.handle(&SessionEvent::AcceptChar).unwrap();
    s.handle(&SessionEvent::DeleteWord).unwrap();
    assert_eq!(s.state().mode, Mode::Normal);
    assert!(s.state().oov_prefix.is_empty());
    assert!(s.state().committed.is_empty());
}

#[test]
fn space_without_vocabulary_match_commits_the_raw_sequence() {
    let mut s = session();
    let obs = vec![TapObservation::one_hot(Hand::Left, FingerClass::Pinky); 14];
    for o in obs {
        s.handle(&SessionEvent::FingerTap { obs: o }).unwrap();
    }
    assert!(s.render().suggestions.is_empty());
    s.handle(&SessionEvent::Space).unwrap();
    let word = &s.state().committed[0];
    assert_eq!(word.chars().count(), 14);
    assert!(word.chars().all(|c| s.decoder().map().finger_for(c) == Some((Hand::Left, FingerClass::Pinky))));
}

#[test]
fn replay_is_deterministic_over_random_scripts() {
    let d = desk_decoder();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let len = rng.gen_range(1..40);
        let script = random_script(&mut rng, len);
        let (a, ra) = replay(d, &script).unwrap();
        let mut log = Vec::new();
        write_event_log(&script, &mut log).unwrap();
        let (b, rb) = replay(d, &read_event_log(log.as_slice()).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}

#[test]
fn taps_then_delete_restore_the_committed_text() {
    let d = desk_decoder();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..60 {
        let len = rng.gen_range(0..30);
        let (state, _) = replay(d, &random_script(&mut rng, len)).unwrap();
        let taps = rng.gen_range(1..6);
        let mut s = state.clone();
        for e in random_script(&mut rng, 200).into_iter().filter(|e| matches!(e, SessionEvent::FingerTap { .. })).take(taps) {
            s = apply(&s, &e, d).unwrap().0;
        }
        let (after, _) = apply(&s, &SessionEvent::DeleteWord, d).unwrap();
        assert_eq!(after.committed, state.committed);
        assert_eq!(after.oov_prefix, state.oov_prefix);
    }
}

#[test]
fn pending_counts_taps_and_committed_words_are_clean() {
    let d = desk_decoder();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let mut s = SessionState::default();
        for e in random_script(&mut rng, 40) {
            let (next, r) = apply(&s, &e, d).unwrap();
            if matches!(e, SessionEvent::FingerTap { .. }) {
                assert_eq!(next.pending.len(), s.pending.len() + 1);
                assert_eq!(next.cursor, 0);
            }
            if !next.suggestions.is_empty() {
                assert!(next.cursor < next.suggestions.len());
            }
            assert_eq!(r.pending_mask.len(), next.pending.len());
            for w in &next.committed {
                assert!(!w.is_empty() && w.chars().all(|c| d.map().finger_for(c).is_some()), "{w:?}");
            }
            s = next;
        }
    }
}
