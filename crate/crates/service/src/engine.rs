//! Instruction execution shared by the HTTP service and the CLI.

use std::time::Instant;

use pni_core::instruction::MultimodalInstruction;
use pni_core::layout::Layout;
use pni_core::oracle::{apply_command, parse_command};
use pni_core::prompt::{build_prompt, build_scene_prompt, parse_completion, ExampleCorpus, PromptBundle, SceneCorpus};
use pni_core::validator::{clamp_layout, validate_edit, validate_structure, ClampPolicy, ValidationPolicy, ValidationReport};
use pni_core::{LayoutError, OracleError};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::llm::LlmClient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    #[default]
    Auto,
    Oracle,
    Llm,
}

impl std::str::FromStr for EngineChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "oracle" => Ok(Self::Oracle),
            "llm" => Ok(Self::Llm),
            other => Err(format!("unknown engine {other:?} (expected auto, oracle or llm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Oracle,
    Llm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub engine: Engine,
    pub after: Layout,
    pub validation: ValidationReport,
    /// Completion of the returned attempt (LLM engine only).
    pub completion_text: Option<String>,
    /// Language-model calls made, including the corrective retry.
    pub llm_calls: u32,
    pub duration_ms: u64,
}

impl EditOutcome {
    /// Whether the result should become the session's current layout.
    pub fn applies(&self) -> bool {
        self.engine == Engine::Oracle || self.validation.ok
    }
}

struct Attempt {
    completion: String,
    parsed: Result<(Layout, ValidationReport), LayoutError>,
}

impl Attempt {
    fn problems(&self) -> Vec<String> {
        match &self.parsed {
            Err(e) => vec![e.to_string()],
            Ok((_, report)) => report.failed().map(|c| format!("{}: {}", c.rule_id, c.detail)).collect(),
        }
    }

    fn failures(&self) -> Option<usize> {
        self.parsed.as_ref().ok().map(|(_, r)| r.failed().count())
    }
}

#[derive(Debug)]
pub struct Editor {
    corpus: ExampleCorpus,
    scenes: SceneCorpus,
    k: usize,
    policy: ValidationPolicy,
    llm: Option<LlmClient>,
}

impl Editor {
    pub fn new(
        corpus: ExampleCorpus,
        scenes: SceneCorpus,
        k: Option<usize>,
        policy: ValidationPolicy,
        llm: Option<LlmClient>,
    ) -> Result<Self, ServiceError> {
        let k = k.unwrap_or_else(|| corpus.default_k());
        if k == 0 || k > corpus.len() {
            return Err(ServiceError::Config(format!(
                "prompting.k = {k} but the corpus holds {} examples",
                corpus.len()
            )));
        }
        Ok(Self {
            corpus,
            scenes,
            k,
            policy,
            llm,
        })
    }

    pub fn policy(&self) -> &ValidationPolicy {
        &self.policy
    }

    pub fn llm(&self) -> Option<&LlmClient> {
        self.llm.as_ref()
    }

    pub fn engines(&self) -> Vec<&'static str> {
        let mut names = vec!["oracle"];
        if self.llm.is_some() {
            names.push("llm");
        }
        names
    }

    fn client(&self) -> Result<&LlmClient, ServiceError> {
        self.llm
            .as_ref()
            .ok_or_else(|| ServiceError::Config("no language model is configured".into()))
    }

    /// Runs `instruction` against `before`.
    ///
    /// `Auto` uses the oracle when the instruction is an oracle command and
    /// the language model otherwise.
    pub async fn apply(
        &self,
        before: &Layout,
        instruction: &MultimodalInstruction,
        choice: EngineChoice,
    ) -> Result<EditOutcome, ServiceError> {
        instruction.validate()?;
        let started = Instant::now();
        let command = match (choice, parse_command(instruction)) {
            (EngineChoice::Llm, _) => None,
            (_, Ok(cmd)) => Some(cmd),
            (EngineChoice::Auto, Err(OracleError::NotOracleCommand)) => None,
            (_, Err(e)) => return Err(e.into()),
        };
        let mut outcome = match command {
            Some(cmd) => {
                let after = apply_command(before, &cmd)?;
                let validation = validate_edit(before, &after, instruction, &self.policy);
                EditOutcome {
                    engine: Engine::Oracle,
                    after,
                    validation,
                    completion_text: None,
                    llm_calls: 0,
                    duration_ms: 0,
                }
            }
            None => self.apply_llm(before, instruction).await?,
        };
        outcome.duration_ms = started.elapsed().as_millis() as u64;
        Ok(outcome)
    }

    async fn apply_llm(&self, before: &Layout, instruction: &MultimodalInstruction) -> Result<EditOutcome, ServiceError> {
        let client = self.client()?;
        let prompt = build_prompt(&self.corpus, before, instruction, self.k)?;
        let judge = |completion: String| {
            let parsed = parse_completion(&completion).map(|p| self.judge_edit(before, p.layout, instruction));
            Attempt { completion, parsed }
        };

        let first = judge(client.complete(&prompt).await?);
        if matches!(&first.parsed, Ok((_, r)) if r.ok) {
            return Ok(llm_outcome(first, 1));
        }
        tracing::info!(problems = ?first.problems(), "llm answer rejected; asking for a correction");
        let retry_prompt = prompt.with_correction(&first.completion, &first.problems());
        let second = judge(client.complete(&retry_prompt).await?);

        let best = match (first.failures(), second.failures()) {
            (Some(a), Some(b)) if a < b => first,
            (Some(_), None) => first,
            (None, None) => {
                let Err(e) = second.parsed else { unreachable!() };
                return Err(ServiceError::Completion(e));
            }
            _ => second,
        };
        Ok(llm_outcome(best, 2))
    }

    fn judge_edit(&self, before: &Layout, raw: Layout, instruction: &MultimodalInstruction) -> (Layout, ValidationReport) {
        let raw_report = validate_edit(before, &raw, instruction, &self.policy);
        if self.policy.clamp_policy == ClampPolicy::Reject {
            return (raw, raw_report);
        }
        let after = clamp_layout(&raw);
        let mut report = validate_edit(before, &after, instruction, &self.policy);
        carry_clamp_note(&raw_report, &mut report);
        (after, report)
    }

    /// Asks the language model for an initial layout matching `caption`,
    /// with one corrective retry.
    pub async fn layout_from_prompt(&self, caption: &str) -> Result<Layout, ServiceError> {
        if caption.trim().is_empty() {
            return Err(ServiceError::BadRequest("prompt must not be empty".into()));
        }
        let client = self.client()?;
        let prompt = build_scene_prompt(&self.scenes, caption);
        let mut last_error = None;
        let mut current: PromptBundle = prompt;
        for _ in 0..2 {
            let completion = client.complete(&current).await?;
            let problems = match parse_completion(&completion) {
                Ok(parsed) => {
                    let report = validate_structure(&parsed.layout, &self.policy);
                    if report.ok {
                        return Ok(match self.policy.clamp_policy {
                            ClampPolicy::Clamp => clamp_layout(&parsed.layout),
                            ClampPolicy::Reject => parsed.layout,
                        });
                    }
                    let problems: Vec<String> =
                        report.failed().map(|c| format!("{}: {}", c.rule_id, c.detail)).collect();
                    last_error = Some(ServiceError::RejectedLayout(problems.join("; ")));
                    problems
                }
                Err(e) => {
                    let problems = vec![e.to_string()];
                    last_error = Some(ServiceError::Completion(e));
                    problems
                }
            };
            current = current.with_correction(&completion, &problems);
        }
        Err(last_error.expect("two failed attempts"))
    }
}

fn llm_outcome(attempt: Attempt, llm_calls: u32) -> EditOutcome {
    let (after, validation) = attempt.parsed.expect("parsed attempt");
    EditOutcome {
        engine: Engine::Llm,
        after,
        validation,
        completion_text: Some(attempt.completion),
        llm_calls,
        duration_ms: 0,
    }
}

/// Keeps the "clamped object N" note from the pre-clamp report.
fn carry_clamp_note(raw: &ValidationReport, clamped: &mut ValidationReport) {
    let Some(note) = raw.check("in-canvas").filter(|c| c.passed && c.detail.contains("clamped")) else {
        return;
    };
    if let Some(c) = clamped.checks.iter_mut().find(|c| c.rule_id == "in-canvas") {
        c.detail = note.detail.clone();
    }
}
