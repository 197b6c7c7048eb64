use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use snopkit::prompts::{
    instruction_block_for, Bindings, PromptError, PromptRegistry, TemplateName,
};
use snopkit::snop::parse_snop;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Fixed bindings for every slot any template declares.
fn sample_bindings(reg: &PromptRegistry, name: TemplateName) -> Bindings {
    let snop_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus/prod-plan-1/snop.txt");
    let snop = parse_snop(&fs::read_to_string(snop_path).unwrap()).unwrap();
    let block = reg.instruction_block_for(&snop.solver);
    let value = |slot: &str| -> String {
        match slot {
            "snop" => snop.serialize(),
            "formulation" => "maximize 3x + 2y\nsubject to x + y <= 4, x, y >= 0".into(),
            "solver" => snop.solver.clone(),
            "solver_instructions" => block.render(),
            "variables_code" => "x = cp.Variable()\ny = cp.Variable()\n".into(),
            "constraints_code" => "constraints = [x + y <= 4]\n".into(),
            "code" => "print(undefined_name)\n".into(),
            "error" => "NameError: name 'undefined_name' is not defined".into(),
            "test_errors" => "constraints: FAIL: quantities must be non-negative".into(),
            "index" => "2".into(),
            "previous" => "Rephrasing 1:\n  - Put differently, ...".into(),
            other => panic!("no sample for slot {other}"),
        }
    };
    reg.template(name)
        .slots()
        .map(|s| (s.to_string(), value(s)))
        .collect()
}

#[test]
fn rendered_templates_match_golden_files() {
    let reg = PromptRegistry::builtin();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for name in TemplateName::ALL {
        let ex = reg
            .exchange(name, &sample_bindings(&reg, name), "gpt-4o", 0.0)
            .unwrap();
        assert_eq!(ex.messages.len(), 2);
        assert_eq!(ex.messages[0].content, reg.system_preamble());
        let rendered = ex.messages[1].content.clone();
        assert!(!rendered.contains("{{"), "{name}: unfilled slot");
        let path = golden_dir().join(format!("{}.txt", name.as_str()));
        if update {
            fs::write(&path, &rendered).unwrap();
        } else {
            let golden =
                fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(
                rendered, golden,
                "{name} drifted; rerun with UPDATE_GOLDEN=1 if intended"
            );
        }
    }
}

#[test]
fn cvxpy_block_carries_the_generator_warning() {
    let text = instruction_block_for("cvxpy").render();
    assert!(
        text.contains("cvxpy.sum takes a list as input, and not a generator"),
        "{text}"
    );
    assert_eq!(instruction_block_for("no-such-solver").render(), "- none");
}

#[test]
fn missing_and_extra_bindings_are_rejected() {
    let reg = PromptRegistry::builtin();
    let err = reg
        .render(TemplateName::Formulation, &Bindings::new())
        .unwrap_err();
    assert!(matches!(err, PromptError::MissingSlot(s) if s == "snop"));
    let extra = Bindings::new().set("snop", "s").set("bogus", "b");
    assert!(matches!(
        reg.render(TemplateName::Formulation, &extra),
        Err(PromptError::UnknownSlot(s)) if s == "bogus"
    ));
    assert!(matches!(
        reg.get("nonexistent"),
        Err(PromptError::UnknownTemplate(_))
    ));
}

#[test]
fn override_directory_replaces_templates_and_blocks() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("formulation.tmpl"), "MODEL THIS: {{snop}}").unwrap();
    fs::create_dir(dir.path().join("solver_instructions")).unwrap();
    fs::write(
        dir.path().join("solver_instructions/mysolver.txt"),
        "use mysolver.sum\n",
    )
    .unwrap();
    let reg = PromptRegistry::with_overrides(dir.path()).unwrap();
    let out = reg
        .render(TemplateName::Formulation, &Bindings::new().set("snop", "P"))
        .unwrap();
    assert_eq!(out, "MODEL THIS: P");
    assert_eq!(
        reg.instruction_block_for("mysolver").render(),
        "- use mysolver.sum"
    );

    fs::write(dir.path().join("formulation.tmpl"), "no slots").unwrap();
    assert!(matches!(
        PromptRegistry::with_overrides(dir.path()),
        Err(PromptError::SlotMismatch { .. })
    ));
    fs::remove_file(dir.path().join("formulation.tmpl")).unwrap();
    fs::write(dir.path().join("unknown.tmpl"), "{{x}}").unwrap();
    assert!(matches!(
        PromptRegistry::with_overrides(dir.path()),
        Err(PromptError::UnknownTemplate(_))
    ));
}

proptest! {
    /// Distinct values for any one slot give distinct prompts.
    #[test]
    fn rendering_is_injective_per_slot(
        t in 0..TemplateName::ALL.len(),
        a in "[ -~\n]{0,40}",
        b in "[ -~\n]{0,40}",
    ) {
        prop_assume!(a != b);
        let reg = PromptRegistry::builtin();
        let name = TemplateName::ALL[t];
        let base = sample_bindings(&reg, name);
        for slot in reg.template(name).slots() {
            let ra = reg.render(name, &base.clone().set(slot, a.clone())).unwrap();
            let rb = reg.render(name, &base.clone().set(slot, b.clone())).unwrap();
            prop_assert_ne!(ra, rb, "{} / {}", name, slot);
        }
    }
}
