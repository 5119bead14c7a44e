mod common;

use proptest::prelude::*;
use pta_core::control::{nodes, TASK_NAMES};
use pta_core::goalnet::{NodeRef, StateKind};
use pta_core::interpreter::InterpreterError;
use pta_core::interpreter::LogEvent;
use pta_core::{load_goalnet, parse_goalnet, DecisionTable, GoalNet, Interpreter, TaskRegistry};

/// Every task appends its name to the context.
fn recording_registry() -> TaskRegistry<Vec<String>> {
    let mut reg = TaskRegistry::new();
    for name in TASK_NAMES {
        reg.register(name, move |calls: &mut Vec<String>| {
            calls.push(name.to_string());
            Ok(())
        })
        .unwrap();
    }
    reg
}

fn main_routine() -> GoalNet {
    load_goalnet(&common::asset("goalnets/main_routine.json")).unwrap()
}

const COIN: &str = r#"{
    "name": "coin",
    "states": [
        {"id": "S", "name": "S", "kind": "atomic", "is_start": true, "is_end": false},
        {"id": "A", "name": "A", "kind": "atomic", "is_start": false, "is_end": false},
        {"id": "B", "name": "B", "kind": "atomic", "is_start": false, "is_end": false},
        {"id": "E", "name": "E", "kind": "atomic", "is_start": false, "is_end": true}
    ],
    "transitions": [
        {"id": "flip", "name": "flip", "kind": "probabilistic", "tasks": [], "weights": {"A": 3, "B": 1}},
        {"id": "ta", "name": "ta", "kind": "direct", "tasks": []},
        {"id": "tb", "name": "tb", "kind": "direct", "tasks": []}
    ],
    "arcs": [
        {"from": "S", "to": "flip"}, {"from": "flip", "to": "A"}, {"from": "flip", "to": "B"},
        {"from": "A", "to": "ta"}, {"from": "ta", "to": "E"},
        {"from": "B", "to": "tb"}, {"from": "tb", "to": "E"}
    ],
    "branches": []
}"#;

fn coin_outcome(net: &GoalNet, seed: u64) -> String {
    let reg: TaskRegistry<()> = TaskRegistry::new();
    let mut it = Interpreter::start(net, &reg, seed).unwrap();
    let mut none = |_: &()| DecisionTable::new();
    let log = it.run_to_goal(&reg, &mut (), &mut none).unwrap();
    log.entries()
        .iter()
        .find_map(|e| match &e.event {
            LogEvent::DecisionResolved { state } => Some(state.clone()),
            _ => None,
        })
        .unwrap()
}

#[test]
fn weighted_draw_frequency() {
    let net = parse_goalnet(COIN).unwrap();
    let draws = 10_000;
    let hits = (0..draws).filter(|&seed| coin_outcome(&net, seed) == "A").count();
    let p = hits as f64 / draws as f64;
    assert!((p - 0.75).abs() <= 0.02, "p = {p}");
}

#[test]
fn same_seed_same_draw() {
    let net = parse_goalnet(COIN).unwrap();
    for seed in 0..50 {
        assert_eq!(coin_outcome(&net, seed), coin_outcome(&net, seed));
    }
}

fn run_main(net: &GoalNet, dispatch: &str, inner: &[(&str, &str)], seed: u64) -> (String, Vec<String>) {
    let reg = recording_registry();
    let mut table: DecisionTable = inner.iter().copied().collect();
    table.set(nodes::MAIN_DISPATCH, dispatch);
    let mut provider = move |_: &Vec<String>| table.clone();
    let mut calls = Vec::new();
    let mut it = Interpreter::start(net, &reg, seed).unwrap();
    let log = it.run_to_goal(&reg, &mut calls, &mut provider).unwrap();
    (log.to_jsonl(), calls)
}

#[test]
fn traversal_logs_are_byte_identical() {
    let net = main_routine();
    let decisions = [(nodes::PERSUASION_CHECK, "pe_s_needed")];
    let (first, _) = run_main(&net, nodes::TO_PERSUADE, &decisions, 7);
    for _ in 0..9 {
        assert_eq!(run_main(&net, nodes::TO_PERSUADE, &decisions, 7).0, first);
    }
}

/// Entered states and fired transitions, in order.
fn path(jsonl: &str) -> Vec<String> {
    pta_core::TraversalLog::from_jsonl(jsonl)
        .unwrap()
        .entries()
        .iter()
        .filter(|e| matches!(e.event, LogEvent::EnteredState | LogEvent::FiredTransition))
        .map(|e| e.node.clone())
        .collect()
}

#[test]
fn persuasion_path_order() {
    let net = main_routine();
    let (log, calls) = run_main(&net, nodes::TO_PERSUADE, &[(nodes::PERSUASION_CHECK, "pe_s_needed")], 1);
    let expected = [
        "mr_s_start",
        "mr_t_detect",
        "mr_s_detected",
        "mr_t_interpret",
        "mr_s_interpreted",
        "mr_t_select",
        "mr_s_selected",
        "mr_t_dispatch",
        "mr_s_persuade",
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
        "mr_t_finish_persuade",
        "mr_s_end",
    ];
    assert_eq!(path(&log), expected);
    assert_eq!(
        calls,
        [
            "DetectEvent",
            "InterpretEvent",
            "SelectReasoning",
            "FCMCalculation",
            "CheckMotAbi",
            "SelectCue",
            "ExecuteCue",
            "Finish",
            "Finish"
        ]
    );
}

#[test]
fn persuasion_not_needed_skips_cue() {
    let net = main_routine();
    let (_, calls) = run_main(
        &net,
        nodes::TO_PERSUADE,
        &[(nodes::PERSUASION_CHECK, "pe_s_not_needed")],
        1,
    );
    assert!(!calls.iter().any(|c| c == "SelectCue" || c == "ExecuteCue"));
}

#[test]
fn missing_decision_is_an_error() {
    let net = main_routine();
    let reg = recording_registry();
    let mut it = Interpreter::start(&net, &reg, 0).unwrap();
    let mut empty = |_: &Vec<String>| DecisionTable::new();
    let err = it.run_to_goal(&reg, &mut Vec::new(), &mut empty).unwrap_err();
    assert!(matches!(err, InterpreterError::MissingDecision { node } if node == nodes::MAIN_DISPATCH));
}

#[test]
fn decision_outside_successors_is_an_error() {
    let net = main_routine();
    let reg = recording_registry();
    let mut it = Interpreter::start(&net, &reg, 0).unwrap();
    let mut bad = |_: &Vec<String>| {
        [(nodes::MAIN_DISPATCH, "mr_s_end")]
            .into_iter()
            .collect::<DecisionTable>()
    };
    let err = it.run_to_goal(&reg, &mut Vec::new(), &mut bad).unwrap_err();
    assert!(matches!(err, InterpreterError::InvalidDecision { .. }));
}

const LOOP: &str = r#"{
    "name": "loop",
    "states": [
        {"id": "S", "name": "S", "kind": "atomic", "is_start": true, "is_end": false},
        {"id": "M", "name": "M", "kind": "atomic", "is_start": false, "is_end": false},
        {"id": "E", "name": "E", "kind": "atomic", "is_start": false, "is_end": true}
    ],
    "transitions": [
        {"id": "go", "name": "go", "kind": "direct", "tasks": []},
        {"id": "again", "name": "again", "kind": "conditional", "tasks": []}
    ],
    "arcs": [
        {"from": "S", "to": "go"}, {"from": "go", "to": "M"},
        {"from": "M", "to": "again"}, {"from": "again", "to": "S"}, {"from": "again", "to": "E"}
    ],
    "branches": []
}"#;

#[test]
fn endless_loop_hits_step_limit() {
    let net = parse_goalnet(LOOP).unwrap();
    assert!(pta_core::validate_goalnet(&net).is_valid());
    let reg: TaskRegistry<()> = TaskRegistry::new();
    let mut stay = |_: &()| [("again", "S")].into_iter().collect::<DecisionTable>();
    let mut it = Interpreter::start(&net, &reg, 0).unwrap();
    let err = it.run_to_goal(&reg, &mut (), &mut stay).unwrap_err();
    assert!(matches!(err, InterpreterError::StepLimitExceeded { limit: 10_000 }));

    let mut it = Interpreter::start(&net, &reg, 0).unwrap().with_step_limit(25);
    let err = it.run_to_goal(&reg, &mut (), &mut stay).unwrap_err();
    assert!(matches!(err, InterpreterError::StepLimitExceeded { limit: 25 }));
}

fn is_state(net: &GoalNet, id: &str) -> bool {
    matches!(net.level_of(id).and_then(|l| l.node(id)), Some(NodeRef::State(_)))
}

fn has_arc(net: &GoalNet, from: &str, to: &str) -> bool {
    net.level_of(from)
        .is_some_and(|l| l.arcs.iter().any(|a| a.from == from && a.to == to))
}

proptest! {
    #[test]
    fn stepping_alternates_and_balances(
        dispatch in 0usize..3,
        persuade in any::<bool>(),
        accept in any::<bool>(),
        correct in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let net = main_routine();
        let reg = recording_registry();
        let mut table = DecisionTable::new();
        table.set(nodes::MAIN_DISPATCH, [nodes::TO_LEARN, nodes::TO_PRACTICE, nodes::TO_PERSUADE][dispatch]);
        table.set(nodes::PERSUASION_CHECK, if persuade { "pe_s_needed" } else { "pe_s_not_needed" });
        table.set(nodes::RESPONSE_CHECK, if accept { "te_s_accepted" } else { "te_s_refused" });
        table.set(nodes::SOLUTION_CHECK, if correct { "pr_s_correct" } else { "pr_s_wrong" });
        let mut provider = |_: &Vec<String>| table.clone();
        let mut it = Interpreter::start(&net, &reg, seed).unwrap();
        let mut ctx = Vec::new();
        let mut prev = it.current().to_string();
        let mut prev_depth = it.depth();
        while !it.at_goal() {
            it.step(&reg, &mut ctx, &mut provider).unwrap();
            let cur = it.current().to_string();
            let depth = it.depth();
            match (is_state(&net, &prev), is_state(&net, &cur)) {
                (true, false) => {
                    prop_assert!(has_arc(&net, &prev, &cur));
                    prop_assert_eq!(depth, prev_depth);
                }
                (false, true) if depth == prev_depth => prop_assert!(has_arc(&net, &prev, &cur)),
                (false, true) => {
                    // Entered a composite: landed on its sub-net start.
                    prop_assert_eq!(depth, prev_depth + 1);
                    let sub = net.level_of(&cur).unwrap();
                    prop_assert_eq!(sub.start_state().map(|s| s.id.as_str()), Some(cur.as_str()));
                }
                (true, true) => {
                    // Left a sub-net: back on the composite, one level up.
                    prop_assert_eq!(depth + 1, prev_depth);
                    let composite = net.level_of(&cur).unwrap().state(&cur).unwrap();
                    prop_assert_eq!(composite.kind, StateKind::Composite);
                }
                (false, false) => prop_assert!(false, "{} -> {}", prev, cur),
            }
            prev = cur;
            prev_depth = depth;
        }
        prop_assert_eq!(it.depth(), 0);
        let entries = it.log().entries();
        let entered = entries.iter().filter(|e| e.event == LogEvent::EnteredComposite).count();
        let exited = entries.iter().filter(|e| e.event == LogEvent::ExitedComposite).count();
        prop_assert_eq!(entered, 1);
        prop_assert_eq!(exited, 1);
        prop_assert_eq!(ctx.last().map(String::as_str), Some("Finish"));
    }
}
