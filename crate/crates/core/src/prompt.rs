//! Few-shot prompt assembly and completion parsing.
//!
//! Each in-context example is a four-part record: input layout, instruction,
//! a short question/answer chain of thought, and the edited layout. Prompts
//! present the examples as alternating user/assistant chat turns, followed by
//! the query in the same framing, so the model only has to continue the
//! pattern. Completions are read back by the `Q:`/`A:` line convention and
//! the `OUTPUT LAYOUT:` sentinel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, PromptError};
use crate::instruction::{parse_instruction_text, serialize_instruction, MultimodalInstruction};
use crate::layout::Layout;
use crate::layout_text::{extract_layout_block, parse_layout, serialize_layout, OUTPUT_SENTINEL};
use crate::render::fnv1a64;

pub const MIN_CORPUS: usize = 10;
pub const MAX_CORPUS: usize = 30;
pub const DEFAULT_K: usize = 15;

pub const INPUT_MARKER: &str = "INPUT LAYOUT:";
pub const INSTRUCTION_MARKER: &str = "INSTRUCTION:";
pub const SCENE_MARKER: &str = "SCENE:";

pub const EDIT_SYSTEM_TEXT: &str = "You edit image layouts.\n\
A layout is a JSON document with the keys \"canvas\" ({\"width\", \"height\"}), \"background\" (a caption describing the scenery) and \"objects\", a list of {\"id\", \"caption\", \"box\": {\"x\", \"y\", \"width\", \"height\"}}. Coordinates are integer pixels with the origin at the top-left corner and y growing downward.\n\
Instructions mix words with shapes the user drew on the canvas. A point is written {x: X, y: Y}, a box {x: X, y: Y, width: W, height: H} and an arrow {from: {x: X, y: Y}, to: {x: X, y: Y}}. A drawn box selects the objects it mostly covers; a point marks a location or the object under it.\n\
Keep every object the instruction does not target exactly as it is, never change the canvas, keep boxes inside the canvas, and give new objects an id larger than every existing id.\n\
Reply by answering the questions one per line, each as \"Q: ...\" followed by \"A: ...\". Then write the line OUTPUT LAYOUT: followed by the complete edited layout JSON and nothing else.";

pub const SCENE_SYSTEM_TEXT: &str = "You design image layouts from scene descriptions.\n\
A layout is a JSON document with the keys \"canvas\" ({\"width\", \"height\"}), \"background\" (a caption describing the scenery) and \"objects\", a list of {\"id\", \"caption\", \"box\": {\"x\", \"y\", \"width\", \"height\"}}. Coordinates are integer pixels with the origin at the top-left corner and y growing downward. Ids start at 0 and increase by one; every box lies inside the canvas.\n\
Reply with the line OUTPUT LAYOUT: followed by the complete layout JSON and nothing else.";

const DEFAULT_CORPUS_JSON: &str = include_str!("../data/corpus.json");
const DEFAULT_SCENES_JSON: &str = include_str!("../data/scenes.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InContextExample {
    pub layout_text: String,
    pub instruction_text: String,
    pub chain_of_thought: Vec<QaPair>,
    pub output_layout_text: String,
}

impl InContextExample {
    fn check(&self) -> Result<(), String> {
        parse_layout(&self.layout_text).map_err(|e| format!("layout_text: {e}"))?;
        parse_layout(&self.output_layout_text).map_err(|e| format!("output_layout_text: {e}"))?;
        if self.instruction_text.trim().is_empty() || self.instruction_text.contains('\n') {
            return Err("instruction_text must be one non-empty line".into());
        }
        parse_instruction_text(&self.instruction_text).map_err(|e| format!("instruction_text: {e}"))?;
        if self.chain_of_thought.is_empty() {
            return Err("chain_of_thought is empty".into());
        }
        for (i, qa) in self.chain_of_thought.iter().enumerate() {
            let bad = |s: &str| s.trim().is_empty() || s.contains('\n');
            if bad(&qa.question) || bad(&qa.answer) {
                return Err(format!("chain_of_thought[{i}] must hold one-line question and answer"));
            }
        }
        Ok(())
    }

    /// The assistant turn this example teaches.
    pub fn assistant_text(&self) -> String {
        format_answer(&self.chain_of_thought, &self.output_layout_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleCorpus {
    pub examples: Vec<InContextExample>,
    pub version: String,
}

impl ExampleCorpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `min(15, len)`.
    pub fn default_k(&self) -> usize {
        DEFAULT_K.min(self.len())
    }
}

fn version_of(label: &str, text: &str) -> String {
    format!("{label}-{:016x}", fnv1a64(text.as_bytes()))
}

/// Parses and validates a corpus given as a JSON array of examples.
pub fn corpus_from_json(text: &str, label: &str) -> Result<ExampleCorpus, PromptError> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| PromptError::Schema(format!("expected a JSON array of examples: {e}")))?;
    let mut examples = Vec::with_capacity(raw.len());
    for (index, value) in raw.into_iter().enumerate() {
        let example: InContextExample = serde_json::from_value(value).map_err(|e| PromptError::Example {
            index,
            message: e.to_string(),
        })?;
        example.check().map_err(|message| PromptError::Example { index, message })?;
        examples.push(example);
    }
    if examples.len() < MIN_CORPUS {
        return Err(PromptError::CorpusTooSmall(examples.len()));
    }
    if examples.len() > MAX_CORPUS {
        return Err(PromptError::CorpusTooLarge(examples.len()));
    }
    Ok(ExampleCorpus {
        examples,
        version: version_of(label, text),
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<ExampleCorpus, PromptError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    corpus_from_json(&text, label)
}

/// The corpus shipped with the crate.
pub fn default_corpus() -> ExampleCorpus {
    corpus_from_json(DEFAULT_CORPUS_JSON, "default").expect("bundled corpus is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneExample {
    pub caption: String,
    pub layout_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneCorpus {
    pub examples: Vec<SceneExample>,
    pub version: String,
}

pub fn scene_corpus_from_json(text: &str, label: &str) -> Result<SceneCorpus, PromptError> {
    let examples: Vec<SceneExample> =
        serde_json::from_str(text).map_err(|e| PromptError::Schema(format!("expected a JSON array of scenes: {e}")))?;
    if examples.is_empty() {
        return Err(PromptError::Schema("scene corpus is empty".into()));
    }
    for (index, ex) in examples.iter().enumerate() {
        if ex.caption.trim().is_empty() || ex.caption.contains('\n') {
            return Err(PromptError::Example {
                index,
                message: "caption must be one non-empty line".into(),
            });
        }
        parse_layout(&ex.layout_text).map_err(|e| PromptError::Example {
            index,
            message: format!("layout_text: {e}"),
        })?;
    }
    Ok(SceneCorpus {
        examples,
        version: version_of(label, text),
    })
}

pub fn load_scene_corpus(path: impl AsRef<Path>) -> Result<SceneCorpus, PromptError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenes");
    scene_corpus_from_json(&text, label)
}

pub fn default_scene_corpus() -> SceneCorpus {
    scene_corpus_from_json(DEFAULT_SCENES_JSON, "default-scenes").expect("bundled scene corpus is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

impl Turn {
    fn user(content: String) -> Self {
        Self {
            role: Role::User,
            content,
        }
    }

    fn assistant(content: String) -> Self {
        Self {
            role: Role::Assistant,
            content,
        }
    }
}

/// A chat prompt: fixed system preamble plus alternating turns that end with
/// a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub turns: Vec<Turn>,
}

impl PromptBundle {
    /// Total characters across the system text and every turn.
    pub fn char_len(&self) -> usize {
        self.system_text.len() + self.turns.iter().map(|t| t.content.len()).sum::<usize>()
    }

    pub fn is_well_formed(&self) -> bool {
        let alternates = self.turns.iter().enumerate().all(|(i, t)| {
            t.role
                == if i % 2 == 0 {
                    Role::User
                } else {
                    Role::Assistant
                }
        });
        alternates && self.turns.last().is_some_and(|t| t.role == Role::User)
    }

    /// Appends the rejected completion and a user turn asking for a fix.
    pub fn with_correction(&self, rejected_completion: &str, problems: &[String]) -> PromptBundle {
        let mut next = self.clone();
        next.turns.push(Turn::assistant(rejected_completion.to_string()));
        let mut msg = String::from("Your previous answer was rejected:\n");
        for p in problems {
            msg.push_str("- ");
            msg.push_str(p);
            msg.push('\n');
        }
        msg.push_str("Answer again. Work through the questions, then write the line ");
        msg.push_str(OUTPUT_SENTINEL);
        msg.push_str(" followed by the complete corrected layout JSON.");
        next.turns.push(Turn::user(msg));
        next
    }
}

fn format_query(layout_text: &str, instruction_text: &str) -> String {
    format!("{INPUT_MARKER}\n{layout_text}\n{INSTRUCTION_MARKER}\n{instruction_text}")
}

fn format_answer(chain: &[QaPair], output_layout_text: &str) -> String {
    let mut out = String::new();
    for qa in chain {
        out.push_str("Q: ");
        out.push_str(&qa.question);
        out.push_str("\nA: ");
        out.push_str(&qa.answer);
        out.push('\n');
    }
    out.push_str(OUTPUT_SENTINEL);
    out.push('\n');
    out.push_str(output_layout_text);
    out
}

/// Few-shot prompt with the first `k` corpus examples and the query.
pub fn build_prompt(
    corpus: &ExampleCorpus,
    layout: &Layout,
    instruction: &MultimodalInstruction,
    k: usize,
) -> Result<PromptBundle, PromptError> {
    if k == 0 || k > corpus.len() {
        return Err(PromptError::KOutOfRange {
            k,
            available: corpus.len(),
        });
    }
    let mut turns = Vec::with_capacity(2 * k + 1);
    for ex in &corpus.examples[..k] {
        turns.push(Turn::user(format_query(&ex.layout_text, &ex.instruction_text)));
        turns.push(Turn::assistant(ex.assistant_text()));
    }
    let instruction_text = serialize_instruction(instruction)?;
    turns.push(Turn::user(format_query(&serialize_layout(layout), &instruction_text)));
    Ok(PromptBundle {
        system_text: EDIT_SYSTEM_TEXT.to_string(),
        turns,
    })
}

/// Prompt that asks for a fresh layout from a scene description.
pub fn build_scene_prompt(scenes: &SceneCorpus, caption: &str) -> PromptBundle {
    let mut turns = Vec::with_capacity(2 * scenes.examples.len() + 1);
    for ex in &scenes.examples {
        turns.push(Turn::user(format!("{SCENE_MARKER}\n{}", ex.caption)));
        turns.push(Turn::assistant(format!("{OUTPUT_SENTINEL}\n{}", ex.layout_text)));
    }
    turns.push(Turn::user(format!("{SCENE_MARKER}\n{}", caption.trim())));
    PromptBundle {
        system_text: SCENE_SYSTEM_TEXT.to_string(),
        turns,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCompletion {
    pub chain_of_thought: Vec<QaPair>,
    pub layout: Layout,
}

/// `Q:`/`A:` pairs that appear before the layout block.
pub fn extract_chain_of_thought(completion: &str) -> Vec<QaPair> {
    let mut pairs = Vec::new();
    let mut question: Option<String> = None;
    for line in completion.lines() {
        let t = line.trim();
        if t.starts_with(OUTPUT_SENTINEL) || t.starts_with('{') {
            break;
        }
        if let Some(q) = t.strip_prefix("Q:") {
            question = Some(q.trim().to_string());
        } else if let Some(a) = t.strip_prefix("A:") {
            if let Some(q) = question.take() {
                pairs.push(QaPair::new(q, a.trim()));
            }
        }
    }
    pairs
}

pub fn parse_completion(completion: &str) -> Result<ParsedCompletion, LayoutError> {
    let block = extract_layout_block(completion)?;
    let layout = parse_layout(&block)?;
    Ok(ParsedCompletion {
        chain_of_thought: extract_chain_of_thought(completion),
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, Canvas};
    use crate::instruction::parse_instruction_text;

    fn query_layout() -> Layout {
        Layout::new(Canvas::default(), "a park").with_object(0, "a white dog", BoundingBox::new(100, 200, 120, 90))
    }

    #[test]
    fn bundled_corpus_loads() {
        let corpus = default_corpus();
        assert_eq!(corpus.len(), 15);
        assert_eq!(corpus.default_k(), 15);
        assert!(corpus.version.starts_with("default-"));
        assert!(!default_scene_corpus().examples.is_empty());
    }

    #[test]
    fn turn_counts() {
        let corpus = default_corpus();
        let instr = parse_instruction_text("make the dog in {x: 100, y: 200, width: 120, height: 90} black").unwrap();
        let full = build_prompt(&corpus, &query_layout(), &instr, 15).unwrap();
        assert_eq!(full.turns.len(), 31);
        assert!(full.is_well_formed());
        let one = build_prompt(&corpus, &query_layout(), &instr, 1).unwrap();
        assert_eq!(one.turns.len(), 3);
        assert!(one.turns[2].content.starts_with("INPUT LAYOUT:\n{"));
        assert!(one.turns[2].content.ends_with("INSTRUCTION:\nmake the dog in {x: 100, y: 200, width: 120, height: 90} black"));
        assert!(matches!(
            build_prompt(&corpus, &query_layout(), &instr, 0),
            Err(PromptError::KOutOfRange { .. })
        ));
        assert!(build_prompt(&corpus, &query_layout(), &instr, 16).is_err());
    }

    #[test]
    fn prompt_is_deterministic_and_grows_with_k() {
        let corpus = default_corpus();
        let instr = parse_instruction_text("delete {x: 100, y: 200, width: 120, height: 90}").unwrap();
        let a = serde_json::to_vec(&build_prompt(&corpus, &query_layout(), &instr, 7).unwrap()).unwrap();
        let b = serde_json::to_vec(&build_prompt(&corpus, &query_layout(), &instr, 7).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut last = 0;
        for k in 1..=corpus.len() {
            let len = build_prompt(&corpus, &query_layout(), &instr, k).unwrap().char_len();
            assert!(len >= last);
            last = len;
        }
    }

    #[test]
    fn completion_with_three_pairs() {
        let doc = serialize_layout(&query_layout());
        let text = format!("Q: one?\nA: 1\nQ: two?\nA: 2\nQ: three?\nA: 3\nOUTPUT LAYOUT:\n{doc}");
        let parsed = parse_completion(&text).unwrap();
        assert_eq!(parsed.chain_of_thought.len(), 3);
        assert_eq!(parsed.chain_of_thought[1], QaPair::new("two?", "2"));
        assert_eq!(parsed.layout, query_layout());
    }

    #[test]
    fn completion_without_reasoning() {
        let doc = serialize_layout(&query_layout());
        let parsed = parse_completion(&format!("Sure, here it is:\n{doc}")).unwrap();
        assert!(parsed.chain_of_thought.is_empty());
        assert_eq!(parsed.layout, query_layout());
        assert_eq!(
            parse_completion("I am not sure what you mean."),
            Err(LayoutError::NoLayoutFound)
        );
    }

    #[test]
    fn examples_round_trip_through_their_assistant_turn() {
        for (i, ex) in default_corpus().examples.iter().enumerate() {
            let parsed = parse_completion(&ex.assistant_text()).unwrap();
            assert_eq!(parsed.chain_of_thought, ex.chain_of_thought, "example {i}");
            assert_eq!(parsed.layout, parse_layout(&ex.output_layout_text).unwrap(), "example {i}");
        }
    }

    #[test]
    fn corpus_errors() {
        let corpus = default_corpus();
        let one = serde_json::to_string(&corpus.examples[..1]).unwrap();
        assert!(matches!(corpus_from_json(&one, "t"), Err(PromptError::CorpusTooSmall(1))));

        let mut broken = corpus.examples.clone();
        broken[3].output_layout_text = "{ not json".into();
        let text = serde_json::to_string(&broken).unwrap();
        match corpus_from_json(&text, "t") {
            Err(PromptError::Example { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(corpus_from_json("{}", "t"), Err(PromptError::Schema(_))));
        assert!(matches!(load_corpus("/definitely/missing.json"), Err(PromptError::Io { .. })));
    }

    #[test]
    fn correction_keeps_alternation() {
        let corpus = default_corpus();
        let instr = parse_instruction_text("make it nicer").unwrap();
        let bundle = build_prompt(&corpus, &query_layout(), &instr, 2).unwrap();
        let fixed = bundle.with_correction("nonsense", &["no layout found in completion".into()]);
        assert_eq!(fixed.turns.len(), bundle.turns.len() + 2);
        assert!(fixed.is_well_formed());
        assert!(fixed.turns.last().unwrap().content.contains("- no layout found in completion"));
    }

    #[test]
    fn scene_prompt_shape() {
        let scenes = default_scene_corpus();
        let bundle = build_scene_prompt(&scenes, "a table with three oranges");
        assert!(bundle.is_well_formed());
        assert_eq!(bundle.turns.len(), 2 * scenes.examples.len() + 1);
        assert_eq!(bundle.turns.last().unwrap().content, "SCENE:\na table with three oranges");
    }
}
