mod common;

use chrono::Duration;
use common::*;
use orality_core::history::{EditDebouncer, Timeline, Trigger};
use orality_core::protocol::{Inbound, Outbound};
use orality_core::providers::mock::MockChat;
use orality_core::session::ManualClock;
use orality_core::{CanvasState, Error, Point};
use sha2::{Digest, Sha256};

fn digest(state: &CanvasState) -> [u8; 32] {
    Sha256::digest(serde_json::to_vec(state).unwrap()).into()
}

fn snapshot_digests(t: &Timeline) -> Vec<(u64, [u8; 32])> {
    t.snapshots().iter().map(|s| (s.id, digest(&s.state))).collect()
}

#[test]
fn thirty_mutations_keep_history_intact() {
    for seed in 0..4u64 {
        let clock = ManualClock::new(t0());
        let mut s = mock_session(&clock, MockChat::generative());
        let mut r = rng(seed);
        let mut recorded: Vec<(u64, [u8; 32])> = Vec::new();
        let mut prev_len = 0;
        for _ in 0..30 {
            let ev = random_event(&mut r, &s);
            s.handle_event(ev);
            clock.advance(Duration::seconds(3));
            s.tick();

            let t = &s.document().timeline;
            assert!(t.len() >= prev_len, "timeline shrank");
            prev_len = t.len();
            let now = snapshot_digests(t);
            assert_eq!(
                &now[..recorded.len()],
                &recorded[..],
                "seed {seed}: a stored snapshot changed"
            );
            assert!(now.windows(2).all(|w| w[0].0 < w[1].0));
            recorded = now;
        }
        assert!(recorded.len() >= 5, "seed {seed}: only {} snapshots", recorded.len());

        for &(id, hash) in recorded.iter().step_by(3) {
            let before = s.document().timeline.len();
            let out = s.handle_event(Inbound::RestoreSnapshot { snapshot_id: id });
            assert!(matches!(out[0], Outbound::CanvasUpdate(_)));
            assert_eq!(digest(s.canvas()), hash);
            let t = &s.document().timeline;
            assert_eq!(t.len(), before + 1);
            assert_eq!(t.head().unwrap().trigger, Trigger::Restore);
            assert_eq!(digest(&t.head().unwrap().state), hash);
        }
        assert_eq!(
            &snapshot_digests(&s.document().timeline)[..recorded.len()],
            &recorded[..]
        );
    }
}

#[test]
fn preview_is_detached() {
    let clock = ManualClock::new(t0());
    let mut s = mock_session(&clock, MockChat::generative());
    let mut r = rng(77);
    for _ in 0..8 {
        s.handle_event(Inbound::DictateContent {
            transcript: random_transcript(&mut r),
            selected_topic_ids: vec![],
        });
    }
    let first = s.document().timeline.snapshots()[0].id;
    let live = digest(s.canvas());
    let len = s.document().timeline.len();
    let out = s.handle_event(Inbound::GetPreview { snapshot_id: first });
    let Outbound::Preview { snapshot_id, state } = &out[0] else {
        panic!("{out:?}")
    };
    assert_eq!(*snapshot_id, first);
    assert_eq!(digest(state), digest(&s.document().timeline.snapshots()[0].state));
    assert_eq!(digest(s.canvas()), live);
    assert_eq!(s.document().timeline.len(), len);

    let mut copy = s.document().timeline.preview(first).unwrap();
    copy.topics[0].position = Point::new(1e6, 1e6);
    assert_ne!(digest(&copy), digest(&s.document().timeline.snapshots()[0].state));
}

#[test]
fn unknown_snapshot_is_an_error() {
    let mut t = Timeline::new();
    assert_eq!(t.preview(3).unwrap_err(), Error::UnknownSnapshot(3));
    assert_eq!(t.restore(3, t0()).unwrap_err(), Error::UnknownSnapshot(3));
    assert!(t.is_empty());
}

#[test]
fn identical_states_are_not_duplicated_but_restores_are() {
    let mut t = Timeline::new();
    let s = CanvasState::default();
    assert!(t.take_snapshot(&s, Trigger::Dictation, t0()).is_some());
    assert!(t.take_snapshot(&s, Trigger::Conflicts, t0()).is_none());
    let id = t.head().unwrap().id;
    t.restore(id, t0()).unwrap();
    t.restore(id, t0()).unwrap();
    assert_eq!(t.len(), 3);
}

#[test]
fn debouncer_settles_only_after_quiet_window() {
    let mut d = EditDebouncer::new(Duration::seconds(2));
    assert!(!d.settle(t0()));
    for ms in (0..1900).step_by(100) {
        d.record_edit(t0() + Duration::milliseconds(ms));
        assert!(!d.settle(t0() + Duration::milliseconds(ms + 50)));
    }
    assert!(!d.settle(t0() + Duration::milliseconds(1800 + 1999)));
    assert!(d.settle(t0() + Duration::milliseconds(1800 + 2000)));
    assert!(!d.settle(t0() + Duration::seconds(60)));
    d.record_edit(t0());
    assert!(d.flush());
    assert!(!d.flush());
}
