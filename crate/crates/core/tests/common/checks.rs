//! Traversal and golden-file checks shared by the session and acceptance
//! tests.

use std::path::PathBuf;

use pta_core::interpreter::LogEvent;
use pta_core::session::TraversalLine;
use pta_core::{ReasoningKind, Session};

const MAIN_HEAD: [&str; 8] = [
    "mr_s_start",
    "mr_t_detect",
    "mr_s_detected",
    "mr_t_interpret",
    "mr_s_interpreted",
    "mr_t_select",
    "mr_s_selected",
    "mr_t_dispatch",
];

const PERSUADE: [&[&str]; 2] = [
    &[
        "pe_s_start",
        "pe_t_fcm",
        "pe_s_assessed",
        "pe_t_check",
        "pe_s_needed",
        "pe_t_select",
        "pe_s_cue_selected",
        "pe_t_execute",
        "pe_s_cue_executed",
        "pe_t_finish",
        "pe_s_end",
    ],
    &[
        "pe_s_start",
        "pe_t_fcm",
        "pe_s_assessed",
        "pe_t_check",
        "pe_s_not_needed",
        "pe_t_finish_skip",
        "pe_s_end",
    ],
];

const LEARN: [&[&str]; 2] = [
    &[
        "te_s_start",
        "te_t_require",
        "te_s_required",
        "te_t_check",
        "te_s_accepted",
        "te_t_init",
        "te_s_initialized",
        "te_t_acquire",
        "te_s_acquired",
        "te_t_save",
        "te_s_saved",
        "te_t_finish",
        "te_s_end",
    ],
    &[
        "te_s_start",
        "te_t_require",
        "te_s_required",
        "te_t_check",
        "te_s_refused",
        "te_t_reject",
        "te_s_rejected",
        "te_t_finish_rejected",
        "te_s_end",
    ],
];

const PRACTICE: [&[&str]; 2] = [
    &[
        "pr_s_start",
        "pr_t_query",
        "pr_s_retrieved",
        "pr_t_reasoning",
        "pr_s_correct",
        "pr_t_carry",
        "pr_s_carried",
        "pr_t_finish",
        "pr_s_end",
    ],
    &[
        "pr_s_start",
        "pr_t_query",
        "pr_s_retrieved",
        "pr_t_reasoning",
        "pr_s_wrong",
        "pr_t_wrong",
        "pr_s_wrong_generated",
        "pr_t_finish_wrong",
        "pr_s_end",
    ],
];

fn path_of(lines: &[&TraversalLine]) -> Vec<String> {
    lines
        .iter()
        .filter(|l| matches!(l.entry.event, LogEvent::EnteredState | LogEvent::FiredTransition))
        .map(|l| l.entry.node.clone())
        .collect()
}

/// Each cycle walks the main routine from its start, through exactly one
/// composite along one of that sub-net's paths, to the main end. Cycles are
/// numbered consecutively, so the routine reloads after each end.
pub fn assert_cycle_closure(session: &Session) {
    let cycles = session.cycles();
    assert!(!cycles.is_empty());
    for (i, record) in cycles.iter().enumerate() {
        assert_eq!(record.cycle, i as u64);
        let lines: Vec<&TraversalLine> = session.traversal().iter().filter(|l| l.cycle == record.cycle).collect();
        let path = path_of(&lines);
        let (composite, finish, subs) = match record.reasoning {
            ReasoningKind::Persuasion => ("mr_s_persuade", "mr_t_finish_persuade", PERSUADE),
            ReasoningKind::Teachability => ("mr_s_learn", "mr_t_finish_learn", LEARN),
            ReasoningKind::Practicability => ("mr_s_practice", "mr_t_finish_practice", PRACTICE),
        };
        let entered: Vec<&str> = lines
            .iter()
            .filter(|l| l.entry.event == LogEvent::EnteredComposite)
            .map(|l| l.entry.node.as_str())
            .collect();
        assert_eq!(entered, [composite], "cycle {i}");
        let exited = lines
            .iter()
            .filter(|l| l.entry.event == LogEvent::ExitedComposite)
            .count();
        assert_eq!(exited, 1, "cycle {i}");

        assert_eq!(&path[..MAIN_HEAD.len()], MAIN_HEAD, "cycle {i}");
        assert_eq!(path[MAIN_HEAD.len()], composite);
        let sub = &path[MAIN_HEAD.len() + 1..path.len() - 2];
        assert!(subs.iter().any(|p| p == &sub), "cycle {i}: {sub:?}");
        assert_eq!(&path[path.len() - 2..], [finish, "mr_s_end"], "cycle {i}");
    }
}

fn golden_dir(case: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(case)
}

fn golden_files(session: &Session) -> [(&'static str, String); 2] {
    [
        ("traversal.jsonl", session.traversal_jsonl()),
        ("report.json", session.report().to_json()),
    ]
}

/// Compare against the stored files without rewriting them.
pub fn compare_golden(case: &str, session: &Session) -> Result<(), String> {
    let dir = golden_dir(case);
    for (name, text) in golden_files(session) {
        let path = dir.join(name);
        let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if want != text {
            return Err(format!("{case}/{name} differs from golden copy"));
        }
    }
    Ok(())
}

/// Compare against the stored files. `UPDATE_GOLDEN=1` rewrites them.
pub fn check_golden(case: &str, session: &Session) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let dir = golden_dir(case);
        std::fs::create_dir_all(&dir).unwrap();
        for (name, text) in golden_files(session) {
            std::fs::write(dir.join(name), text).unwrap();
        }
        return;
    }
    if let Err(e) = compare_golden(case, session) {
        panic!("{e}");
    }
}
