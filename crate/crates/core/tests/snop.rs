use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};
use snopkit::snop::{
    check_conformance, extract_params, parse_format, parse_snop, FormatError, Snop, ViolationKind,
};

const FORMATS: &[&str] = &[
    r#"{"cost": [c_i for i in 1..N], "budget": B}"#,
    r#"{"a": [[a_ij for j in 1..M] for i in 1..N]}"#,
    r#"{"x": x, "objective": obj}"#,
    r#"[v_i for i in 1 to K]"#,
];

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z][a-z0-9]{0,7}"
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,6}"
}

/// A trimmed single-line statement, optionally carrying `\param{}` markers.
fn statement() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            3 => word(),
            1 => ident().prop_map(|n| format!("\\param{{{n}}}")),
        ],
        1..8,
    )
    .prop_map(|ws| ws.join(" "))
}

fn snop() -> impl Strategy<Value = Snop> {
    (
        prop::sample::select(vec!["LP", "MILP", "ANY"]),
        prop::collection::vec(statement(), 1..5),
        prop::sample::select(FORMATS.to_vec()),
        prop::collection::vec(statement(), 0..4),
        prop::sample::select(FORMATS.to_vec()),
        statement(),
        prop::sample::select(vec!["cvxpy", "gurobipy", "ANY"]),
    )
        .prop_map(|(t, info, inf, oinfo, outf, obj, solver)| Snop {
            problem_type: t.into(),
            problem_info: info,
            input_format: inf.into(),
            output_info: oinfo,
            output_format: outf.into(),
            objective: obj,
            solver: solver.into(),
        })
}

fn balanced(s: &str) -> bool {
    let mut stack = Vec::new();
    for c in s.chars() {
        match c {
            '{' | '[' => stack.push(c),
            '}' => {
                if stack.pop() != Some('{') {
                    return false;
                }
            }
            ']' => {
                if stack.pop() != Some('[') {
                    return false;
                }
            }
            _ => {}
        }
    }
    stack.is_empty()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_then_parse_is_identity(s in snop()) {
        let text = s.serialize();
        prop_assert_eq!(parse_snop(&text).unwrap(), s);
    }

    #[test]
    fn unbalanced_brackets_are_always_rejected(
        parts in prop::collection::vec(
            prop::sample::select(vec!["{", "}", "[", "]", ",", ":", "x", " ", "\"k\"", " for i in 1..N"]),
            0..24,
        )
    ) {
        let src: String = parts.concat();
        let result = parse_format(&src);
        if balanced(&src) {
            prop_assert!(!matches!(result, Err(FormatError::UnbalancedBracket(_))), "{:?}: {:?}", src, result);
        } else {
            prop_assert!(matches!(result, Err(FormatError::UnbalancedBracket(_))), "{:?}: {:?}", src, result);
        }
    }

    #[test]
    fn parameter_set_matches_a_regex_scan(s in snop()) {
        let re = Regex::new(r"\\param\{([A-Za-z0-9_]+)\}").unwrap();
        let oracle: BTreeSet<String> = s
            .serialize()
            .lines()
            .flat_map(|l| re.captures_iter(l).map(|c| c[1].to_string()).collect::<Vec<_>>())
            .collect();
        let found: BTreeSet<String> = extract_params(&s).names().map(str::to_string).collect();
        prop_assert_eq!(found, oracle);
    }
}

#[derive(Deserialize)]
struct FormatNegative {
    name: String,
    format: String,
    document: Value,
    expect: ViolationKind,
}

#[test]
fn format_negatives_raise_their_violation_class() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/format_negatives.json");
    let cases: Vec<FormatNegative> =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cases.len(), 10);
    for case in cases {
        let tree = parse_format(&case.format).unwrap();
        let report = check_conformance(&tree, &case.document);
        assert!(
            report.kinds().contains(&case.expect),
            "{}: expected {:?}, got {:?}",
            case.name,
            case.expect,
            report.violations
        );
    }
}

#[test]
fn a_product_mix_document_round_trips_and_checks() {
    let raw = "problem_type: LP\n\
        problem_info:\n  - Product i yields \\param{p_i} per unit for \\param{N} products.\n  - Capacity is \\param{C}.\n\
        input_format: {\"profit\": [p_i for i in 1..N], \"capacity\": C}\n\
        output_info:\n  - x_i units of product i\n\
        output_format: {\"x\": [x_i for i in 1..N], \"objective\": obj}\n\
        objective: Maximize profit.\n\
        solver: cvxpy\n";
    let s = parse_snop(raw).unwrap();
    assert_eq!(
        s.param_names(),
        ["C", "N", "p_i"].iter().map(|s| s.to_string()).collect()
    );
    assert_eq!(parse_snop(&s.serialize()).unwrap(), s);
    let tree = s.input_tree().unwrap();
    assert!(check_conformance(&tree, &json!({"profit": [1, 2], "capacity": 4})).is_conformant());
    let bad = check_conformance(&tree, &json!({"profit": 3}));
    let mut kinds = bad.kinds();
    kinds.sort_by_key(|k| *k as u8);
    assert_eq!(
        kinds,
        vec![ViolationKind::MissingKey, ViolationKind::KindMismatch]
    );
}

#[test]
fn corpus_snops_parse_and_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus");
    let mut n = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let dir = entry.unwrap().path();
        let p = dir.join("snop.txt");
        if !p.exists() {
            continue;
        }
        let s = parse_snop(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert!(!extract_params(&s).is_empty(), "{}", p.display());
        assert_eq!(parse_snop(&s.serialize()).unwrap(), s);
        n += 1;
    }
    assert_eq!(n, 6);
}
