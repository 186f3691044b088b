//! Chat prompt rendering for every repetition variant.
//!
//! The repetition turn is carried by the assistant role: after the user turn
//! presents the question and documents, a scripted assistant turn restates
//! them k̂-1 times before a final short user turn and an "Answer:" seed. All
//! renderings are byte-stable; the golden fixtures under `tests/golden/` are
//! the normative transcripts.

use crate::context::{ContextSpec, Document};
use crate::synthetic::{header_line, HeaderWording, SyntheticSample};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("context has no documents")]
    EmptyContext,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("plan template is {got}, expected {expected}")]
    TemplateMismatch {
        expected: TemplateKind,
        got: TemplateKind,
    },
    #[error("repetition count must be at least 1")]
    InvalidRepetition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl fmt::Display for ChatRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChatRole::System => f.write_str("system"),
            ChatRole::User => f.write_str("user"),
            ChatRole::Assistant => f.write_str("assistant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// The prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    QaBase,
    QaCot,
    QaCotExtract,
    SyntheticBase,
    QaUserRole,
    Decompose,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemplateKind::QaBase => "qa-base",
            TemplateKind::QaCot => "qa-cot",
            TemplateKind::QaCotExtract => "qa-cot-extract",
            TemplateKind::SyntheticBase => "synthetic-base",
            TemplateKind::QaUserRole => "qa-user-role",
            TemplateKind::Decompose => "decompose",
        };
        f.write_str(s)
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa-base" => Ok(TemplateKind::QaBase),
            "qa-cot" => Ok(TemplateKind::QaCot),
            "qa-cot-extract" => Ok(TemplateKind::QaCotExtract),
            "synthetic-base" => Ok(TemplateKind::SyntheticBase),
            "qa-user-role" => Ok(TemplateKind::QaUserRole),
            "decompose" => Ok(TemplateKind::Decompose),
            other => Err(format!("unknown template '{other}'")),
        }
    }
}

impl Serialize for TemplateKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TemplateKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How repeated blocks present their documents. The original user-turn block
/// is never restyled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RepetitionStyle {
    #[default]
    Verbatim,
    /// Deterministic shuffle under the given seed; the identity order is
    /// excluded whenever two or more documents are present.
    Shuffle(u64),
    Reverse,
}

impl fmt::Display for RepetitionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepetitionStyle::Verbatim => f.write_str("verbatim"),
            RepetitionStyle::Shuffle(seed) => write!(f, "shuffle:{seed}"),
            RepetitionStyle::Reverse => f.write_str("reverse"),
        }
    }
}

impl FromStr for RepetitionStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verbatim" => Ok(RepetitionStyle::Verbatim),
            "reverse" => Ok(RepetitionStyle::Reverse),
            other => {
                if let Some(seed) = other
                    .strip_prefix("shuffle:")
                    .or_else(|| other.strip_prefix("shuffle-"))
                {
                    seed.parse::<u64>()
                        .map(RepetitionStyle::Shuffle)
                        .map_err(|e| e.to_string())
                } else {
                    Err(format!("unknown repetition style '{other}'"))
                }
            }
        }
    }
}

impl Serialize for RepetitionStyle {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RepetitionStyle {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fully specified prompting condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub template: TemplateKind,
    pub k_hat: usize,
    pub repetition_style: RepetitionStyle,
}

impl PromptPlan {
    pub fn new(template: TemplateKind, k_hat: usize) -> Self {
        PromptPlan {
            template,
            k_hat,
            repetition_style: RepetitionStyle::Verbatim,
        }
    }

    pub fn with_style(mut self, style: RepetitionStyle) -> Self {
        self.repetition_style = style;
        self
    }
}

const QA_INSTRUCTION: &str =
    "Answer the question based on the given documents. Respond only the answer within a few words after 'Answer:'.";
const QA_NOW_ANSWER: &str =
    "Now answer the question based on the documents. Respond only the answer within a few words after 'Answer:'.";
const QA_COT_INSTRUCTION: &str = "Answer the question based on the given documents.";
const QA_COT_NOW_ANSWER: &str = "Now answer the question based on the documents.";
const COT_SEED: &str = "Let's think step by step.";
const COT_EXTRACT_INSTRUCTION: &str = "Respond only the answer in a few words after 'Answer:'.";
const SYNTHETIC_INSTRUCTION: &str =
    "Answer the question based on the given information. Respond only the answer without any explanation after 'Answer:'.";
const SYNTHETIC_NOW_ANSWER: &str =
    "Now answer the question based on the documents. Respond only the answer without any explanation after 'Answer:'.";
const LOOK_AGAIN: &str = "Look again the input prompt:";
const ANSWER_SEED: &str = "Answer:";

/// The assistant opener before the restated blocks. One extra pass is worded
/// "once more" in the QA templates; the synthetic template and any higher
/// count use the counted form.
fn reconsider_line(t: usize, counted_form: bool) -> String {
    if t == 1 && !counted_form {
        "Sure. Before answering the question, I'll reconsider the question and the documents once more."
            .to_string()
    } else {
        format!("Sure. Before answering the question, I'll reconsider the question and the documents {t} times more.")
    }
}

fn document_line(index: usize, doc: &Document) -> String {
    match &doc.title {
        Some(title) => format!("Document [{index}] (Title: {title}) {}", doc.text),
        None => format!("Document [{index}] {}", doc.text),
    }
}

fn documents_block(docs: &[&Document]) -> String {
    let mut out = String::from("Documents:");
    for (i, doc) in docs.iter().enumerate() {
        out.push('\n');
        out.push_str(&document_line(i, doc));
    }
    out
}

fn question_documents_block(question: &str, docs: &[&Document]) -> String {
    format!("Question: {question}\n\n{}", documents_block(docs))
}

/// Reorder a document sequence for a repeated block.
pub fn apply_repetition_style(documents: &[Document], style: RepetitionStyle) -> Vec<Document> {
    match style {
        RepetitionStyle::Verbatim => documents.to_vec(),
        RepetitionStyle::Reverse => documents.iter().rev().cloned().collect(),
        RepetitionStyle::Shuffle(seed) => {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..documents.len()).collect();
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            if documents.len() >= 2 && order.iter().enumerate().all(|(i, &v)| i == v) {
                order.swap(0, 1);
            }
            order.into_iter().map(|i| documents[i].clone()).collect()
        }
    }
}

/// Per-block style: every repeated block re-derives its shuffle seed so
/// successive blocks explore different orders.
fn block_style(style: RepetitionStyle, block: usize) -> RepetitionStyle {
    match style {
        RepetitionStyle::Shuffle(seed) => RepetitionStyle::Shuffle(seed.wrapping_add(block as u64)),
        other => other,
    }
}

fn validate_k_hat(k_hat: usize) -> Result<(), PromptError> {
    if k_hat == 0 {
        return Err(PromptError::InvalidRepetition);
    }
    Ok(())
}

/// The QA prompt. `k_hat == 1` renders a single user turn; larger values add
/// the scripted assistant restatement, a short user turn, and the answer
/// seed. Repeated blocks renumber their documents from zero and apply the
/// plan's repetition style.
pub fn render_qa_prompt(
    question: &str,
    context: &ContextSpec,
    plan: &PromptPlan,
) -> Result<Vec<ChatMessage>, PromptError> {
    if plan.template != TemplateKind::QaBase {
        return Err(PromptError::TemplateMismatch {
            expected: TemplateKind::QaBase,
            got: plan.template,
        });
    }
    render_qa_family(
        question,
        context,
        plan.k_hat,
        plan.repetition_style,
        QaWording::Base,
        None,
    )
}

enum QaWording {
    Base,
    Cot,
}

fn render_qa_family(
    question: &str,
    context: &ContextSpec,
    k_hat: usize,
    style: RepetitionStyle,
    wording: QaWording,
    cot_response: Option<&str>,
) -> Result<Vec<ChatMessage>, PromptError> {
    validate_k_hat(k_hat)?;
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if context.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    if k_hat > 3 {
        log::warn!("k_hat = {k_hat} is outside the evaluated QA range [1,3]");
    }
    let (instruction, now_answer) = match wording {
        QaWording::Base => (QA_INSTRUCTION, QA_NOW_ANSWER),
        QaWording::Cot => (QA_COT_INSTRUCTION, QA_COT_NOW_ANSWER),
    };
    let docs: Vec<&Document> = context.documents().iter().collect();
    let user = format!(
        "{}\n\n{instruction}",
        question_documents_block(question, &docs)
    );

    let mut messages = vec![ChatMessage::user(user)];
    if k_hat >= 2 {
        let t = k_hat - 1;
        let mut assistant = reconsider_line(t, false);
        for block in 0..t {
            let styled = apply_repetition_style(context.documents(), block_style(style, block));
            let refs: Vec<&Document> = styled.iter().collect();
            assistant.push_str("\n\n");
            assistant.push_str(&question_documents_block(question, &refs));
        }
        messages.push(ChatMessage::assistant(assistant));
        messages.push(ChatMessage::user(now_answer.to_string()));
    }
    match (wording, cot_response) {
        (QaWording::Base, _) => {
            if k_hat >= 2 {
                messages.push(ChatMessage::assistant(ANSWER_SEED));
            }
        }
        (QaWording::Cot, None) => messages.push(ChatMessage::assistant(COT_SEED)),
        (QaWording::Cot, Some(cot)) => {
            messages.push(ChatMessage::assistant(format!("{COT_SEED} {cot}")));
            messages.push(ChatMessage::user(COT_EXTRACT_INSTRUCTION));
            messages.push(ChatMessage::assistant(ANSWER_SEED));
        }
    }
    Ok(messages)
}

/// Two-phase chain-of-thought prompts. Without `cot_response` this renders
/// the reasoning prompt ending in "Let's think step by step."; with it, the
/// extraction prompt that embeds the reasoning and asks for the short answer.
pub fn render_cot_prompts(
    question: &str,
    context: &ContextSpec,
    k_hat: usize,
    cot_response: Option<&str>,
) -> Result<Vec<ChatMessage>, PromptError> {
    render_qa_family(
        question,
        context,
        k_hat,
        RepetitionStyle::Verbatim,
        QaWording::Cot,
        cot_response,
    )
}

/// The synthetic-task prompt. The information block is the header line plus
/// the pre-rendered fact lines; the assistant turn restates information and
/// question k̂-1 times.
pub fn render_synthetic_prompt(
    sample: &SyntheticSample,
    k_hat: usize,
) -> Result<Vec<ChatMessage>, PromptError> {
    validate_k_hat(k_hat)?;
    let header = header_line(
        sample.num_lists(),
        sample.elements_per_list(),
        HeaderWording::DescribedBelow,
    );
    let mut info = format!("Information:\n{header}");
    for line in &sample.fact_lines {
        info.push('\n');
        info.push_str(line);
    }
    let question = format!("Question: {}", sample.question_line);
    let user = format!("{info}\n\n{question}\n{SYNTHETIC_INSTRUCTION}");
    let mut messages = vec![ChatMessage::user(user)];
    if k_hat >= 2 {
        let t = k_hat - 1;
        let mut assistant = reconsider_line(t, true);
        for _ in 0..t {
            assistant.push_str("\n\n");
            assistant.push_str(&info);
            assistant.push_str("\n\n");
            assistant.push_str(&question);
        }
        messages.push(ChatMessage::assistant(assistant));
        messages.push(ChatMessage::user(SYNTHETIC_NOW_ANSWER.to_string()));
        messages.push(ChatMessage::assistant(ANSWER_SEED));
    }
    Ok(messages)
}

/// The user-role repetition variant: the whole block appears twice inside a
/// single user turn, separated by "Look again the input prompt:".
pub fn render_user_role_prompt(
    question: &str,
    context: &ContextSpec,
) -> Result<Vec<ChatMessage>, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if context.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let docs: Vec<&Document> = context.documents().iter().collect();
    let block = format!(
        "{}\n\n{QA_INSTRUCTION}",
        question_documents_block(question, &docs)
    );
    let user = format!("{block}\n\n{LOOK_AGAIN}\n\n{block}");
    Ok(vec![
        ChatMessage::user(user),
        ChatMessage::assistant(ANSWER_SEED),
    ])
}

/// The question-decomposition prompt.
pub fn render_decompose_prompt(question: &str) -> Result<Vec<ChatMessage>, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    Ok(vec![
        ChatMessage::user(format!(
            "Decompose the following question into several sub-questions.\nQuestion: {question}"
        )),
        ChatMessage::assistant("1. "),
    ])
}

/// Prompt constants for the paraphrase/summary repetition variants. Only the
/// templates are provided; producing transformed contexts requires a live
/// model and is not part of this crate's pipelines.
pub mod transforms {
    use super::ChatMessage;

    pub const PARAPHRASE_SYSTEM: &str = "You are a professional paraphraser. Your task is to paraphrase the given text based on the below instructions. Follow the instructions to achieve the desired output.\n\n- Objective: Rewrite the text more thoroughly, changing both vocabulary and sentence structure while preserving the original meaning.\n- Instructions:\n(MOST IMPORTANT) Use your own style for natural paraphrase\nIntroduce new expressions, alter sentence structure, and rearrange clauses.\nUse synonyms and change the form of words (e.g., verbs to nouns, or active to passive voice).\nRetain the original message but express it in a noticeably different way.\n\n- Example:\nOriginal: \"The quick brown fox jumps over the lazy dog.\"\nParaphrase: \"With swift movements, the brown fox leaps over the dog lying lazily.\"\n\n# Format of the paraphrasing task\n- Original: The original text.\n- Paraphrase: The paraphrased version of the text based on the above guideline. Provide the output text immediately.";

    pub const SUMMARY_SYSTEM: &str = "Summarize the following text while ensuring that no key information, factual accuracy, or essential meaning is lost. Follow these guidelines:\n\n- Maintain Key Details: All critical points, facts, and arguments from the original text must be preserved.\n- Conciseness: The summary should be significantly shorter than the original text while capturing its essence.\n- Clarity and Precision: Use clear, professional language. Avoid vague phrasing.\n- No Alteration of Meaning: Do not add, alter, or infer information that is not present in the original text.\n\nPlease follow below pattern of example. Provide the output text immediately.\n\n- Example:\nOriginal Text: The rapid development of artificial intelligence over the last decade has led to significant breakthroughs in various fields, including healthcare, finance, and transportation. However, these advancements also raise concerns about data privacy, job displacement, and the ethical use of AI technologies.\nSummary: AI advancements in healthcare, finance, and transportation have been substantial, though concerns about data privacy, job displacement, and ethical issues have emerged.";

    pub fn paraphrase_messages(input_text: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(PARAPHRASE_SYSTEM),
            ChatMessage::user(format!(
                "Paraphrase the original text below.\nOriginal: {input_text}"
            )),
            ChatMessage::assistant("Paraphrase:"),
        ]
    }

    pub fn summary_messages(input_text: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(SUMMARY_SYSTEM),
            ChatMessage::user(format!(
                "Summarize the following text below.\nOriginal Text: {input_text}"
            )),
            ChatMessage::assistant("Summary:"),
        ]
    }
}

/// Serialize messages in the fixture format: one `### ROLE ###` marker per
/// message followed by its content.
pub fn messages_to_fixture(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for message in messages {
        let role = match message.role {
            ChatRole::System => "SYSTEM",
            ChatRole::User => "USER",
            ChatRole::Assistant => "ASSISTANT",
        };
        out.push_str(&format!("### {role} ###\n"));
        out.push_str(&message.content);
        out.push('\n');
    }
    out
}

/// Parse the fixture format written by [`messages_to_fixture`].
pub fn messages_from_fixture(text: &str) -> Result<Vec<ChatMessage>, String> {
    let mut messages: Vec<(ChatRole, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        let role = match line {
            "### SYSTEM ###" => Some(ChatRole::System),
            "### USER ###" => Some(ChatRole::User),
            "### ASSISTANT ###" => Some(ChatRole::Assistant),
            _ => None,
        };
        match role {
            Some(role) => messages.push((role, Vec::new())),
            None => match messages.last_mut() {
                Some((_, lines)) => lines.push(line),
                None => return Err(format!("content before first role marker: '{line}'")),
            },
        }
    }
    Ok(messages
        .into_iter()
        .map(|(role, lines)| ChatMessage {
            role,
            content: lines.join("\n"),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Document;
    use crate::synthetic::{ChainList, SyntheticSample};

    fn two_doc_context() -> ContextSpec {
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

    fn two_list_fixture() -> SyntheticSample {
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

    const QUESTION: &str = "Who directed the film that Alice Example starred in?";

    #[test]
    fn qa_k1_is_single_user_message() {
        let plan = PromptPlan::new(TemplateKind::QaBase, 1);
        let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
        assert_eq!(messages.len(), 1);
        assert_eq!(messages[0].role, ChatRole::User);
        assert!(messages[0].content.starts_with("Question: Who directed"));
        assert!(messages[0].content.contains("Document [0] Alice Example"));
        assert!(messages[0].content.ends_with("after 'Answer:'."));
    }

    #[test]
    fn qa_k2_has_four_messages_and_opener() {
        let plan = PromptPlan::new(TemplateKind::QaBase, 2);
        let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
        assert_eq!(messages.len(), 4);
        assert_eq!(messages[1].role, ChatRole::Assistant);
        assert!(messages[1].content.starts_with(
            "Sure. Before answering the question, I'll reconsider the question and the documents once more."
        ));
        assert_eq!(messages[2].content, QA_NOW_ANSWER);
        assert_eq!(messages[3].content, "Answer:");
    }

    #[test]
    fn qa_k3_uses_counted_wording_and_two_blocks() {
        let plan = PromptPlan::new(TemplateKind::QaBase, 3);
        let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
        assert!(messages[1].content.contains("the documents 2 times more."));
        assert_eq!(messages[1].content.matches("Documents:").count(), 2);
    }

    #[test]
    fn qa_reverse_restyles_only_the_repeated_block() {
        let plan = PromptPlan::new(TemplateKind::QaBase, 2).with_style(RepetitionStyle::Reverse);
        let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
        let original = &messages[0].content;
        let repeated = &messages[1].content;
        assert!(
            original.contains("Document [0] Alice Example starred in the film Midnight Harbor.")
        );
        assert!(repeated.contains("Document [0] Midnight Harbor was directed by Jordan Vale."));
        assert!(
            repeated.contains("Document [1] Alice Example starred in the film Midnight Harbor.")
        );
    }

    #[test]
    fn qa_rejects_empty_context_and_wrong_template() {
        let empty = ContextSpec::new(vec![]).unwrap();
        let plan = PromptPlan::new(TemplateKind::QaBase, 1);
        assert!(matches!(
            render_qa_prompt(QUESTION, &empty, &plan),
            Err(PromptError::EmptyContext)
        ));
        let wrong = PromptPlan::new(TemplateKind::Decompose, 1);
        assert!(matches!(
            render_qa_prompt(QUESTION, &two_doc_context(), &wrong),
            Err(PromptError::TemplateMismatch { .. })
        ));
    }

    #[test]
    fn synthetic_k1_contains_fact_lines_verbatim() {
        let messages = render_synthetic_prompt(&two_list_fixture(), 1).unwrap();
        assert_eq!(messages.len(), 1);
        let content = &messages[0].content;
        let expected = "In the list 0, 381 is positioned immediately before 512.\nIn the list 1, 7123 is positioned immediately before 34.\nIn the list 0, 512 is positioned immediately before 1021.\nIn the list 1, 34 is positioned immediately before 6397.";
        assert!(content.contains(expected));
        assert!(content.contains("All the 2 lists described below contain exactly 3 elements."));
    }

    #[test]
    fn synthetic_k3_repeats_information_twice_in_assistant_turn() {
        let messages = render_synthetic_prompt(&two_list_fixture(), 3).unwrap();
        assert_eq!(messages.len(), 4);
        assert!(messages[1].content.starts_with(
            "Sure. Before answering the question, I'll reconsider the question and the documents 2 times more."
        ));
        assert_eq!(messages[1].content.matches("Information:").count(), 2);
    }

    #[test]
    fn synthetic_k11_has_ten_repetition_blocks() {
        let messages = render_synthetic_prompt(&two_list_fixture(), 11).unwrap();
        assert!(messages[1].content.contains("10 times more"));
        assert_eq!(messages[1].content.matches("Information:").count(), 10);
    }

    #[test]
    fn synthetic_counted_wording_even_for_one_repeat() {
        let messages = render_synthetic_prompt(&two_list_fixture(), 2).unwrap();
        assert!(messages[1].content.contains("the documents 1 times more."));
    }

    #[test]
    fn cot_phase_one_ends_with_step_by_step() {
        let messages = render_cot_prompts(QUESTION, &two_doc_context(), 2, None).unwrap();
        assert_eq!(
            messages.last().unwrap().content,
            "Let's think step by step."
        );
        assert_eq!(messages[0].content.matches("Respond only").count(), 0);
        assert_eq!(
            messages[2].content,
            "Now answer the question based on the documents."
        );
    }

    #[test]
    fn cot_phase_two_embeds_response() {
        let messages = render_cot_prompts(QUESTION, &two_doc_context(), 2, Some("X")).unwrap();
        let n = messages.len();
        assert_eq!(messages[n - 3].content, "Let's think step by step. X");
        assert_eq!(
            messages[n - 2].content,
            "Respond only the answer in a few words after 'Answer:'."
        );
        assert_eq!(messages[n - 1].content, "Answer:");
    }

    #[test]
    fn cot_k1_has_no_repetition_turn() {
        let messages = render_cot_prompts(QUESTION, &two_doc_context(), 1, None).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[1].content, "Let's think step by step.");
    }

    #[test]
    fn user_role_prompt_repeats_block_in_one_user_turn() {
        let messages = render_user_role_prompt(QUESTION, &two_doc_context()).unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].role, ChatRole::User);
        assert_eq!(messages[1].content, "Answer:");
        assert_eq!(messages[0].content.matches("Question:").count(), 2);
        assert_eq!(messages[0].content.matches(LOOK_AGAIN).count(), 1);
    }

    #[test]
    fn decompose_prompt_shape() {
        let messages = render_decompose_prompt("Who is X?").unwrap();
        assert_eq!(
            messages[0].content,
            "Decompose the following question into several sub-questions.\nQuestion: Who is X?"
        );
        assert_eq!(messages[1].content, "1. ");
        assert!(matches!(
            render_decompose_prompt("  "),
            Err(PromptError::EmptyQuestion)
        ));
    }

    #[test]
    fn style_reverse_and_singleton_shuffle() {
        let docs = vec![
            Document::noisy("a", "a text").unwrap(),
            Document::noisy("b", "b text").unwrap(),
            Document::noisy("c", "c text").unwrap(),
        ];
        let reversed = apply_repetition_style(&docs, RepetitionStyle::Reverse);
        let ids: Vec<&str> = reversed.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "b", "a"]);
        let single = apply_repetition_style(&docs[..1], RepetitionStyle::Shuffle(5));
        assert_eq!(single[0].id, "a");
    }

    #[test]
    fn shuffle_is_deterministic_and_never_identity() {
        let docs: Vec<Document> = (0..4)
            .map(|i| Document::noisy(format!("d{i}"), format!("t{i}")).unwrap())
            .collect();
        let a = apply_repetition_style(&docs, RepetitionStyle::Shuffle(41));
        let b = apply_repetition_style(&docs, RepetitionStyle::Shuffle(41));
        assert_eq!(a, b);
        for seed in 0..50 {
            let shuffled = apply_repetition_style(&docs, RepetitionStyle::Shuffle(seed));
            assert_ne!(shuffled, docs, "identity leaked through for seed {seed}");
            let mut sorted: Vec<&str> = shuffled.iter().map(|d| d.id.as_str()).collect();
            sorted.sort();
            assert_eq!(sorted, vec!["d0", "d1", "d2", "d3"]);
        }
    }

    #[test]
    fn repetition_block_count_equals_k_hat() {
        for k_hat in 1..=5 {
            let plan = PromptPlan::new(TemplateKind::QaBase, k_hat);
            let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
            let total: usize = messages
                .iter()
                .map(|m| m.content.matches("Documents:").count())
                .sum();
            assert_eq!(total, k_hat);

            let messages = render_synthetic_prompt(&two_list_fixture(), k_hat).unwrap();
            let total: usize = messages
                .iter()
                .map(|m| m.content.matches("Information:").count())
                .sum();
            assert_eq!(total, k_hat);
        }
    }

    #[test]
    fn rendered_length_strictly_increases_with_k_hat() {
        let mut last_qa = 0;
        let mut last_synth = 0;
        for k_hat in 1..=6 {
            let plan = PromptPlan::new(TemplateKind::QaBase, k_hat);
            let qa_len: usize = render_qa_prompt(QUESTION, &two_doc_context(), &plan)
                .unwrap()
                .iter()
                .map(|m| m.content.len())
                .sum();
            assert!(qa_len > last_qa);
            last_qa = qa_len;
            let synth_len: usize = render_synthetic_prompt(&two_list_fixture(), k_hat)
                .unwrap()
                .iter()
                .map(|m| m.content.len())
                .sum();
            assert!(synth_len > last_synth);
            last_synth = synth_len;
        }
    }

    #[test]
    fn titled_documents_render_with_title() {
        let ctx = ContextSpec::new(vec![Document::new(
            "d1",
            Some("A Title".into()),
            "Body text.",
            crate::context::Role::Supporting,
            Some(1),
        )
        .unwrap()])
        .unwrap();
        let plan = PromptPlan::new(TemplateKind::QaBase, 1);
        let messages = render_qa_prompt(QUESTION, &ctx, &plan).unwrap();
        assert!(messages[0]
            .content
            .contains("Document [0] (Title: A Title) Body text."));
    }

    #[test]
    fn fixture_format_round_trips() {
        let plan = PromptPlan::new(TemplateKind::QaBase, 2);
        let messages = render_qa_prompt(QUESTION, &two_doc_context(), &plan).unwrap();
        let fixture = messages_to_fixture(&messages);
        let parsed = messages_from_fixture(&fixture).unwrap();
        assert_eq!(parsed, messages);
    }

    #[test]
    fn style_string_round_trips() {
        for style in [
            RepetitionStyle::Verbatim,
            RepetitionStyle::Reverse,
            RepetitionStyle::Shuffle(41),
        ] {
            let s = style.to_string();
            assert_eq!(s.parse::<RepetitionStyle>().unwrap(), style);
        }
        for template in [
            TemplateKind::QaBase,
            TemplateKind::QaCot,
            TemplateKind::QaCotExtract,
            TemplateKind::SyntheticBase,
            TemplateKind::QaUserRole,
            TemplateKind::Decompose,
        ] {
            let s = template.to_string();
            assert_eq!(s.parse::<TemplateKind>().unwrap(), template);
        }
    }
}
