//! The `pni` command line.
//!
//! Exit codes: 0 success, 1 validation or instruction failure, 2 environment
//! or configuration failure. Errors are written to stderr as
//! `{"error": {"code": ..., "message": ...}}`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pni_core::instruction::MultimodalInstruction;
use pni_core::layout::Layout;
use pni_core::render::render_mock;
use pni_core::validator::validate_structure;
use pni_core::{parse_instruction_text, parse_layout, serialize_layout};
use serde_json::{json, Value};

use crate::config::ServiceConfig;
use crate::diffusion::Renderer;
use crate::engine::{EngineChoice, Editor};
use crate::error::ServiceError;
use crate::{build_editor, serve};

#[derive(Debug, Parser)]
#[command(name = "pni", version, about = "Layout-grounded image editing with multimodal instructions")]
pub struct Cli {
    /// Config file; defaults to $PNI_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print JSON on a single line instead of pretty-printed.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        /// Overrides server.bind.
        #[arg(long)]
        bind: Option<String>,
        /// Overrides server.data_dir.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Apply one instruction to a layout file.
    Edit {
        layout: PathBuf,
        /// Instruction text with inline shape literals.
        instruction: String,
        #[arg(long, default_value = "auto")]
        engine: EngineChoice,
        /// Where to write the resulting canonical layout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a mock SVG render next to --out.
        #[arg(long, requires = "out")]
        render: bool,
    },
    /// Apply a script of edits in order.
    Replay {
        script: PathBuf,
        #[arg(long, default_value = "auto")]
        engine: EngineChoice,
    },
    /// Check a layout file's structural rules.
    Validate { layout: PathBuf },
    /// Render a layout file.
    Render {
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// mock or diffusion; defaults to the configured backend.
        #[arg(long)]
        backend: Option<String>,
    },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_tracing(matches!(cli.command, Command::Serve { .. }));
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return report_error(&ServiceError::Config(format!("cannot start runtime: {e}")), None),
    };
    match runtime.block_on(execute(cli)) {
        Ok(code) => code,
        Err(Failure { error, step }) => report_error(&error, step),
    }
}

fn init_tracing(serving: bool) {
    let default = if serving { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn report_error(error: &ServiceError, step: Option<usize>) -> i32 {
    let mut body = error.to_json();
    if let Some(step) = step {
        body["error"]["step"] = json!(step);
    }
    eprintln!("{body}");
    error.exit_code()
}

struct Failure {
    error: ServiceError,
    step: Option<usize>,
}

impl From<ServiceError> for Failure {
    fn from(error: ServiceError) -> Self {
        Self { error, step: None }
    }
}

fn print_json(value: &Value, compact: bool) {
    let text = if compact {
        value.to_string()
    } else {
        serde_json::to_string_pretty(value).expect("json value")
    };
    println!("{text}");
}

fn raw(layout: &Layout) -> Value {
    serde_json::from_str(&serialize_layout(layout)).expect("canonical layout")
}

fn read_text(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::Storage(format!("cannot read {}: {e}", path.display())))
}

fn read_layout(path: &Path) -> Result<Layout, ServiceError> {
    parse_layout(&read_text(path)?).map_err(ServiceError::InvalidLayout)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    std::fs::write(path, bytes).map_err(|e| ServiceError::Storage(format!("cannot write {}: {e}", path.display())))
}

async fn execute(cli: Cli) -> Result<i32, Failure> {
    let config = ServiceConfig::discover(cli.config.as_deref())?;
    let compact = cli.json;
    match cli.command {
        Command::Serve { bind, data_dir } => {
            let mut config = config;
            if let Some(dir) = data_dir {
                config.server.data_dir = dir;
            }
            let bind = bind.unwrap_or_else(|| config.server.bind.clone());
            serve(&config, &bind).await?;
            Ok(0)
        }
        Command::Edit {
            layout,
            instruction,
            engine,
            out,
            render,
        } => {
            let before = read_layout(&layout)?;
            let instr = parse_instruction_text(&instruction).map_err(ServiceError::InvalidInstruction)?;
            let editor = build_editor(&config)?;
            let outcome = editor.apply(&before, &instr, engine).await?;
            if let Some(out) = &out {
                write_file(out, serialize_layout(&outcome.after).as_bytes())?;
                if render {
                    write_file(&out.with_extension("svg"), &render_mock(&outcome.after).bytes)?;
                }
            }
            print_json(
                &json!({
                    "engine": outcome.engine,
                    "applied": outcome.applies(),
                    "validation": outcome.validation,
                    "layout": raw(&outcome.after),
                }),
                compact,
            );
            Ok(if outcome.validation.ok { 0 } else { 1 })
        }
        Command::Replay { script, engine } => {
            let text = read_text(&script)?;
            let parsed = Script::parse(&text)?;
            let base = script.parent().unwrap_or(Path::new("."));
            let initial = read_layout(&base.join(&parsed.layout))?;
            let editor = build_editor(&config)?;
            let summary = replay(&editor, initial, &parsed.edits, engine).await?;
            Ok(if summary.failed == 0 { 0 } else { 1 })
        }
        Command::Validate { layout } => {
            let layout = read_layout(&layout)?;
            let report = validate_structure(&layout, &config.validation_policy());
            print_json(&serde_json::to_value(&report).expect("report"), compact);
            Ok(if report.ok { 0 } else { 1 })
        }
        Command::Render { layout, out, backend } => {
            let layout = read_layout(&layout)?;
            let renderer = Renderer::new(&config.renderer).map_err(ServiceError::Render)?;
            let artifact = renderer.render(&layout, backend.as_deref()).await.map_err(ServiceError::Render)?;
            write_file(&out, &artifact.bytes)?;
            print_json(
                &json!({
                    "out": out.display().to_string(),
                    "media_type": artifact.media_type.as_str(),
                    "renderer_id": artifact.renderer_id,
                    "layout_hash": artifact.layout_hash,
                }),
                compact,
            );
            Ok(0)
        }
    }
}

/// A replay script: one `layout <path>` line, then `edit <instruction>` lines.
/// Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub layout: PathBuf,
    pub edits: Vec<(String, MultimodalInstruction)>,
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let mut layout: Option<PathBuf> = None;
        let mut edits = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match word {
                "layout" => {
                    if layout.is_some() {
                        return Err(ServiceError::BadRequest(format!("line {n}: only one layout line is allowed")));
                    }
                    if !edits.is_empty() {
                        return Err(ServiceError::BadRequest(format!("line {n}: layout line must precede edits")));
                    }
                    if rest.is_empty() {
                        return Err(ServiceError::BadRequest(format!("line {n}: layout needs a path")));
                    }
                    layout = Some(PathBuf::from(rest));
                }
                "edit" => {
                    if layout.is_none() {
                        return Err(ServiceError::BadRequest(format!("line {n}: edit before the layout line")));
                    }
                    let instr = parse_instruction_text(rest)
                        .map_err(|e| ServiceError::BadRequest(format!("line {n}: {e}")))?;
                    edits.push((rest.to_string(), instr));
                }
                other => return Err(ServiceError::BadRequest(format!("line {n}: unknown command {other:?}"))),
            }
        }
        let layout = layout.ok_or_else(|| ServiceError::BadRequest("no layout line".into()))?;
        Ok(Self { layout, edits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplaySummary {
    pub ok: usize,
    pub failed: usize,
}

/// Errors that fail a single step rather than the whole run.
fn is_step_failure(e: &ServiceError) -> bool {
    matches!(
        e,
        ServiceError::Completion(_)
            | ServiceError::RejectedLayout(_)
            | ServiceError::Oracle(_)
            | ServiceError::InvalidInstruction(_)
    )
}

async fn replay(
    editor: &Editor,
    initial: Layout,
    edits: &[(String, MultimodalInstruction)],
    engine: EngineChoice,
) -> Result<ReplaySummary, Failure> {
    let mut current = initial;
    let mut summary = ReplaySummary { ok: 0, failed: 0 };
    for (i, (text, instr)) in edits.iter().enumerate() {
        let step = i + 1;
        let line = match editor.apply(&current, instr, engine).await {
            Ok(outcome) => {
                if outcome.validation.ok {
                    summary.ok += 1;
                } else {
                    summary.failed += 1;
                }
                if outcome.applies() {
                    current = outcome.after.clone();
                }
                json!({
                    "step": step,
                    "instruction": text,
                    "engine": outcome.engine,
                    "ok": outcome.validation.ok,
                    "applied": outcome.applies(),
                    "validation": outcome.validation,
                    "layout": raw(&current),
                })
            }
            Err(e) if is_step_failure(&e) => {
                summary.failed += 1;
                json!({
                    "step": step,
                    "instruction": text,
                    "ok": false,
                    "error": e.to_json()["error"],
                    "layout": raw(&current),
                })
            }
            Err(error) => return Err(Failure { error, step: Some(step) }),
        };
        println!("{line}");
    }
    println!(
        "{}",
        json!({ "summary": { "steps": edits.len(), "ok": summary.ok, "failed": summary.failed } })
    );
    Ok(summary)
}
