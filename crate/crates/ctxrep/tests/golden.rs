//! Byte comparisons of every template rendering against the reviewed
//! fixtures under tests/golden/. The fixtures are the normative transcripts;
//! regenerate only when the templates intentionally change.

use ctxrep::context::{ContextSpec, Document};
use ctxrep::prompt::{
    messages_from_fixture, messages_to_fixture, render_cot_prompts, render_decompose_prompt,
    render_qa_prompt, render_synthetic_prompt, render_user_role_prompt, ChatMessage, PromptPlan,
    TemplateKind,
};
use ctxrep::synthetic::{ChainList, SyntheticSample};
use std::path::PathBuf;

const QUESTION: &str = "Who directed the film that Alice Example starred in?";
const COT_RESPONSE: &str = "The film is Midnight Harbor, and it was directed by Jordan Vale.";

fn fixture_context() -> ContextSpec {
    ContextSpec::new(vec![
        Document::supporting(
            "d1",
            "Alice Example starred in the film Midnight Harbor.",
            1,
        )
        .unwrap(),
        Document::supporting("d2", "Midnight Harbor was directed by Jordan Vale.", 2).unwrap(),
    ])
    .unwrap()
}

fn fixture_sample() -> SyntheticSample {
    SyntheticSample::from_lists(
        "fixture-0",
        vec![
            ChainList {
                list_id: 0,
                elements: vec![381, 512, 1021],
            },
            ChainList {
                list_id: 1,
                elements: vec![7123, 34, 6397],
            },
        ],
        0,
    )
    .unwrap()
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn assert_matches_golden(name: &str, messages: &[ChatMessage]) {
    let path = golden_path(name);
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing fixture {name}: {e}"));
    let rendered = messages_to_fixture(messages);
    assert_eq!(
        rendered, expected,
        "rendering of {name} deviates from the reviewed fixture"
    );
    // the fixture itself parses back to the same message sequence
    let parsed = messages_from_fixture(&expected).unwrap();
    assert_eq!(&parsed, messages);
}

#[test]
fn qa_base_matches_golden() {
    let plan = PromptPlan::new(TemplateKind::QaBase, 2);
    let messages = render_qa_prompt(QUESTION, &fixture_context(), &plan).unwrap();
    assert_matches_golden("qa_base_k2.txt", &messages);
}

#[test]
fn qa_cot_matches_golden() {
    let messages = render_cot_prompts(QUESTION, &fixture_context(), 2, None).unwrap();
    assert_matches_golden("qa_cot_k2.txt", &messages);
}

#[test]
fn qa_cot_extract_matches_golden() {
    let messages = render_cot_prompts(QUESTION, &fixture_context(), 2, Some(COT_RESPONSE)).unwrap();
    assert_matches_golden("qa_cot_extract_k2.txt", &messages);
}

#[test]
fn synthetic_base_matches_golden() {
    let messages = render_synthetic_prompt(&fixture_sample(), 2).unwrap();
    assert_matches_golden("synthetic_base_k2.txt", &messages);
}

#[test]
fn qa_user_role_matches_golden() {
    let messages = render_user_role_prompt(QUESTION, &fixture_context()).unwrap();
    assert_matches_golden("qa_user_role.txt", &messages);
}

#[test]
fn decompose_matches_golden() {
    let messages = render_decompose_prompt(QUESTION).unwrap();
    assert_matches_golden("decompose.txt", &messages);
}
