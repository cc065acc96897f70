mod common;

use std::path::PathBuf;

use clinannot::adjudication::{AgentOutcome, DebateTurn};
use clinannot::corpus::Transcript;
use clinannot::labels;
use clinannot::prompt::*;
use clinannot::taxonomy::{GuidelineSchema, TargetId};
use common::*;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compare against a checked-in file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}; rerun with UPDATE_GOLDEN=1 if intended");
}

fn history() -> Vec<DebateTurn> {
    vec![
        DebateTurn {
            round: 1,
            role: 1,
            agent_id: "glm".into(),
            text: "I defend null.".into(),
        },
        DebateTurn {
            round: 1,
            role: 2,
            agent_id: "gptoss".into(),
            text: "I concede to Annotator 1.".into(),
        },
    ]
}

#[test]
fn debate_judge_prompt_matches_golden() {
    let p = PromptEngine::default()
        .build_debate_judge_prompt(&watched_case(4), &history(), &GuidelineSchema::bundled())
        .unwrap();
    assert!(p.text.contains("If Annotator 1's original value (null) is correct"));
    assert!(p.text.contains("If Annotator 2's original value (Persecutory) is correct"));
    assert!(p.text.contains("Final delusion_type:"));
    check_golden("debate_judge_l4.txt", &p.text);
}

#[test]
fn direct_judge_prompt_carries_both_sides() {
    let case = watched_case(3);
    let schema = GuidelineSchema::bundled();
    let p = PromptEngine::default()
        .build_direct_judge_prompt(case.target, case.level, &case.transcript, &case.outcome_a, &case.outcome_b, &schema)
        .unwrap();
    assert!(p.text.contains("A parked car is not evidence of a fixed belief."));
    assert!(p.text.contains("surveillance belief"));
    assert!(p.text.contains(WATCHED));
    assert!(matches!(p.kind, PromptKind::DirectJudge { target: TargetId::DelusionType, .. }));
    check_golden("direct_judge_l3.txt", &p.text);
}

#[test]
fn direct_judge_rejects_agreement_and_blank_text() {
    let schema = GuidelineSchema::bundled();
    let engine = PromptEngine::default();
    let t = TargetId::DelusionType;
    let lvl = PromptLevel::new(1).unwrap();
    let a = AgentOutcome::from_labels("glm", t, labels!["Somatic"]);
    let b = AgentOutcome::from_labels("gptoss", t, labels!["Somatic"]);
    let c = AgentOutcome::from_labels("gptoss", t, labels![]);
    let text = Transcript::new("x", WATCHED);
    assert!(matches!(
        engine.build_direct_judge_prompt(t, lvl, &text, &a, &b, &schema),
        Err(PromptError::NoDisagreement(_))
    ));
    assert!(matches!(
        engine.build_direct_judge_prompt(t, lvl, &Transcript::new("x", "  "), &a, &c, &schema),
        Err(PromptError::EmptyTranscript)
    ));
    let p = engine.build_direct_judge_prompt(t, lvl, &text, &a, &c, &schema).unwrap();
    assert!(p.text.contains("(not provided)"));
}

#[test]
fn debate_turn_budget_and_roles() {
    let schema = GuidelineSchema::bundled();
    let engine = PromptEngine::default();
    let case = watched_case(2);
    let first = engine.build_debate_turn_prompt(1, &case, &[], 4, &schema).unwrap();
    assert!(first.text.contains("You are Annotator 1."));
    assert!(!first.text.contains("Discussion so far"));
    let second = engine.build_debate_turn_prompt(2, &case, &history()[..1], 4, &schema).unwrap();
    assert!(second.text.contains("You are Annotator 2."));
    assert!(second.text.contains("Round 1, Annotator 1:\nI defend null."));
    assert!(matches!(second.kind, PromptKind::DebateTurn { role: 2, turn: 2, .. }));
    assert!(matches!(
        engine.build_debate_turn_prompt(1, &case, &history(), 2, &schema),
        Err(PromptError::TurnBudgetExhausted { len: 2, budget: 2 })
    ));
    assert!(matches!(
        engine.build_debate_turn_prompt(3, &case, &[], 4, &schema),
        Err(PromptError::BadRole(3))
    ));
    assert!(matches!(
        engine.build_debate_judge_prompt(&case, &[], &schema),
        Err(PromptError::EmptyHistory)
    ));
}

#[test]
fn annotation_prompt_grows_with_level() {
    let schema = GuidelineSchema::bundled();
    let engine = PromptEngine::default();
    let t = Transcript::new("w", WATCHED);
    let texts: Vec<String> = PromptLevel::ALL
        .iter()
        .map(|&l| engine.build_annotation_prompt(&schema, l, &t).unwrap().text)
        .collect();
    for pair in texts.windows(2) {
        assert!(pair[1].len() > pair[0].len());
    }
    for text in &texts {
        assert!(text.ends_with(&format!("## input\n{WATCHED}\n## response template")));
        assert!(text.contains("delusion_type: Persecutory"));
    }
    assert!(!texts[0].contains("I don't leave my house anymore"));
    assert!(texts[3].contains("I don't leave my house anymore because I'm scared someone will follow me."));
    let again = engine.build_annotation_prompt(&schema, PromptLevel::ALL[3], &t).unwrap();
    assert_eq!(again.content_hash, sha256_hex(texts[3].as_bytes()));
}

#[test]
fn template_directory_overrides_bundled_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("annotation.txt"), "Label this.\n{guidelines}\n---\n{transcript}").unwrap();
    let engine = PromptEngine::from_dir(dir.path()).unwrap();
    let p = engine
        .build_annotation_prompt(&GuidelineSchema::bundled(), PromptLevel::new(1).unwrap(), &Transcript::new("w", WATCHED))
        .unwrap();
    assert!(p.text.starts_with("Label this.\n"));
    assert!(p.text.ends_with(WATCHED));
    std::fs::write(dir.path().join("annotation.txt"), "{guidelines} {nonsense}").unwrap();
    assert!(PromptEngine::from_dir(dir.path()).is_err());
}
