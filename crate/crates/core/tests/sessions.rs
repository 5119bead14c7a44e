mod common;

use common::checks::{assert_cycle_closure, check_golden};
use pta_core::kb::{Assignment, Expression};
use pta_core::session::{parse_trace, replay, SessionError, SessionParams};
use pta_core::{run_trace, ActionDirective, Input, ReasoningKind, ServerFrame, Session};

fn reasoning(session: &Session) -> Vec<ReasoningKind> {
    session.cycles().iter().map(|c| c.reasoning).collect()
}

fn cues(session: &Session) -> Vec<(String, Expression)> {
    session
        .cycles()
        .iter()
        .flat_map(|c| &c.directives)
        .filter_map(|d| match d {
            ActionDirective::DisplayCue { cue_id, expression, .. } => Some((cue_id.clone(), *expression)),
            _ => None,
        })
        .collect()
}

use ReasoningKind::{Persuasion, Practicability, Teachability};

#[test]
fn case1_refusing_to_learn() {
    let s = common::run_case("case1_not_learning");
    assert_eq!(reasoning(&s), [Persuasion]);
    assert_eq!(cues(&s), [("not_learning".to_string(), Expression::Encouraging)]);
    let a = s.cycles()[0].assessment.as_ref().unwrap();
    assert!(a.low_motivation() && a.low_ability());
    assert_cycle_closure(&s);
    check_golden("case1_not_learning", &s);
}

#[test]
fn case2_not_experimenting() {
    let s = common::run_case("case2_not_experimenting");
    assert_eq!(reasoning(&s), [Persuasion, Persuasion]);
    assert_eq!(cues(&s).last().unwrap().0, "not_experimenting");
    assert_cycle_closure(&s);
}

#[test]
fn case3_distraction() {
    let s = common::run_case("case3_distraction");
    assert_eq!(reasoning(&s), [Persuasion]);
    let a = s.cycles()[0].assessment.as_ref().unwrap();
    assert_eq!(a.route, pta_core::Route::Peripheral);
    assert_eq!((a.motivation, a.ability), (0.0, -1.0));
    assert_eq!(cues(&s), [("chat_animal".to_string(), Expression::Neutral)]);
    assert_cycle_closure(&s);
    check_golden("case3_distraction", &s);
}

#[test]
fn case4_teach_failure() {
    let s = common::run_case("case4_teach_failure");
    assert_eq!(reasoning(&s), [Teachability, Practicability, Persuasion]);
    let failure = &s.cycles()[1].directives;
    assert!(
        matches!(&failure[..], [ActionDirective::PracticeFailureFeedback { error_blanks }] if error_blanks.len() == 1 && error_blanks.contains("b2"))
    );
    assert!(s.cycles()[2].batch.contains(&"Teach Failure".to_string()));
    assert_eq!(cues(&s), [("teach_failure".to_string(), Expression::Sad)]);
    let learnt = s.agent().kb.learnt("diffusion_osmosis").unwrap();
    assert_eq!(learnt.error_blanks.iter().collect::<Vec<_>>(), ["b2"]);
    assert_cycle_closure(&s);
    check_golden("case4_teach_failure", &s);
}

#[test]
fn case5_teach_success() {
    let s = common::run_case("case5_teach_success");
    assert_eq!(
        reasoning(&s),
        [
            Teachability,
            Practicability,
            Persuasion,
            Persuasion,
            Teachability,
            Practicability,
            Persuasion
        ]
    );
    // Re-teaching highlights the earlier mistake.
    let show = &s.cycles()[4].directives;
    assert!(matches!(&show[..], [ActionDirective::ShowConceptMap { error_blanks, .. }] if error_blanks.contains("b2")));
    assert_eq!(s.cycles()[5].directives, [ActionDirective::PracticeSuccessFeedback]);
    assert_eq!(
        cues(&s),
        [
            ("teach_failure".to_string(), Expression::Sad),
            ("teach_success".to_string(), Expression::Happy)
        ]
    );
    assert!(s.cycles()[6].batch.contains(&"Teach Success".to_string()));
    assert_eq!(s.state().scene, "tree_revived");
    assert!(s
        .agent()
        .kb
        .learnt("diffusion_osmosis")
        .unwrap()
        .error_blanks
        .is_empty());
    assert_cycle_closure(&s);
    check_golden("case5_teach_success", &s);
}

#[test]
fn refusing_to_teach() {
    let s = common::run_case("refuse_teaching");
    assert_eq!(reasoning(&s), [Teachability, Persuasion]);
    assert_eq!(cues(&s), [("not_teach".to_string(), Expression::Sad)]);
    assert_cycle_closure(&s);
}

#[test]
fn idle_trace_times_out_once() {
    let s = common::run_case("idle_six_minutes");
    let timeouts = s
        .agent()
        .events
        .log()
        .all()
        .iter()
        .filter(|(e, _)| e.name == "Doing Nothing")
        .count();
    assert_eq!(timeouts, 1);
    assert_eq!(s.cycles().len(), 1);
    assert_eq!(cues(&s)[0].0, "doing_nothing");
}

#[test]
fn replay_is_deterministic() {
    for case in ["case4_teach_failure", "case5_teach_success"] {
        let a = common::run_case(case);
        let b = common::run_case(case);
        assert_eq!(a.report().to_json(), b.report().to_json());
        assert_eq!(a.traversal_jsonl(), b.traversal_jsonl());
        assert_eq!(a.events_jsonl(), b.events_jsonl());
    }
}

#[test]
fn every_event_is_processed_once() {
    let s = common::run_case("case5_teach_success");
    let log = s.agent().events.log();
    assert!(log.pending.is_empty());
    let mut ids: Vec<u64> = s.cycles().iter().flat_map(|c| c.batch_ids.iter().copied()).collect();
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), n);
    assert_eq!(n, log.processed.len());
}

#[test]
fn session_waits_for_the_student() {
    for case in [
        "case1_not_learning",
        "case3_distraction",
        "case4_teach_failure",
        "case5_teach_success",
    ] {
        let s = common::run_case(case);
        assert!(s.state().awaiting_input(), "{case}");
    }
}

#[test]
fn unknown_choice_is_rejected() {
    let mut s = Session::new(common::assets(), SessionParams::from(&common::config()));
    let err = s
        .apply_input(1_000, Input::Choice("no_such_choice".into()))
        .unwrap_err();
    assert!(
        matches!(err, SessionError::TraceInputMismatch { at_ms: 1_000, .. }),
        "{err}"
    );
}

#[test]
fn teach_without_open_map_is_rejected() {
    let mut s = Session::new(common::assets(), SessionParams::from(&common::config()));
    let err = s.apply_input(1_000, Input::Teach(Assignment::new())).unwrap_err();
    assert!(matches!(err, SessionError::TraceInputMismatch { .. }), "{err}");
}

#[test]
fn refusal_pushes_a_cue_frame() {
    let trace = parse_trace(&common::read_asset("traces/refuse_teaching.json")).unwrap();
    let mut s = replay(common::assets(), SessionParams::from(&common::config()), &trace).unwrap();
    let frames = s.take_frames();
    assert!(matches!(frames.first(), Some(ServerFrame::SessionState(_))));
    let cue = frames.iter().find_map(|f| match f {
        ServerFrame::Cue(c) => Some(c.cue_id.as_str()),
        _ => None,
    });
    assert_eq!(cue, Some("not_teach"));
    assert!(s.take_frames().is_empty());
}

#[test]
fn run_trace_writes_session_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::config();
    config.out_dir = dir.path().to_path_buf();
    let trace = parse_trace(&common::read_asset("traces/case4_teach_failure.json")).unwrap();
    let report = run_trace(&config, &trace).unwrap();
    for file in [
        "events.jsonl",
        "traversal.jsonl",
        "report.json",
        "learnt.json",
        "kb.json",
    ] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(written, report.to_json());
    assert!(report.completed);
}

#[test]
fn partial_replay_keeps_the_prefix() {
    let mut trace = parse_trace(&common::read_asset("traces/case1_not_learning.json")).unwrap();
    let last = trace.steps.last().unwrap().at_ms;
    trace.steps.push(pta_core::session::TraceStep {
        at_ms: last + 30_000,
        input: Input::Choice("no_such_choice".into()),
    });
    let (s, outcome) =
        pta_core::session::replay_partial(common::assets(), SessionParams::from(&common::config()), &trace);
    assert!(matches!(outcome, Err(SessionError::TraceInputMismatch { .. })));
    let report = s.report();
    assert!(!report.completed);
    assert_eq!(report.cue_ids(), ["not_learning"]);
}
