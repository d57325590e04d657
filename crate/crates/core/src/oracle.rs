//! Deterministic interpreter for a small command language:
//!
//! ```text
//! move SHAPE to SHAPE
//! add <caption> at SHAPE
//! delete SHAPE
//! recaption SHAPE to <caption>
//! ```
//!
//! Verbs are case-insensitive. Anything else is left to the language model.

use crate::error::OracleError;
use crate::geometry::{clamp_to_canvas, move_center_to, BoundingBox, Canvas, Point};
use crate::instruction::{InstructionToken, MultimodalInstruction, Shape};
use crate::layout::{resolve_selection, Layout, SceneObject};

/// Side of the box created by `add ... at POINT`.
pub const DEFAULT_ADD_SIDE: u32 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Point(Point),
    Box(BoundingBox),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Move {
        selector: BoundingBox,
        destination: Destination,
    },
    Add {
        caption: String,
        destination: Destination,
    },
    Delete {
        selector: BoundingBox,
    },
    Recaption {
        selector: BoundingBox,
        caption: String,
    },
}

impl Command {
    pub fn selector(&self) -> Option<BoundingBox> {
        match self {
            Command::Move { selector, .. }
            | Command::Delete { selector }
            | Command::Recaption { selector, .. } => Some(*selector),
            Command::Add { .. } => None,
        }
    }

    pub fn verb(&self) -> &'static str {
        match self {
            Command::Move { .. } => "move",
            Command::Add { .. } => "add",
            Command::Delete { .. } => "delete",
            Command::Recaption { .. } => "recaption",
        }
    }
}

#[derive(Debug)]
enum Part<'a> {
    Text(String),
    Shape(&'a Shape),
}

/// Merges adjacent text tokens and drops whitespace-only text, so that
/// `["move ", s1, " to ", s2]` and `["move", s1, "to", s2]` look alike.
fn normalize(instr: &MultimodalInstruction) -> Result<Vec<Part<'_>>, OracleError> {
    let mut parts: Vec<Part<'_>> = Vec::new();
    for token in &instr.tokens {
        match token {
            InstructionToken::Text(t) => match parts.last_mut() {
                Some(Part::Text(prev)) => {
                    prev.push(' ');
                    prev.push_str(t);
                }
                _ => parts.push(Part::Text(t.clone())),
            },
            InstructionToken::Ref(id) => {
                let shape = instr.shapes.get(id).ok_or(OracleError::NotOracleCommand)?;
                parts.push(Part::Shape(shape));
            }
        }
    }
    Ok(parts
        .into_iter()
        .filter_map(|p| match p {
            Part::Text(t) if t.trim().is_empty() => None,
            Part::Text(t) => Some(Part::Text(t.trim().to_string())),
            other => Some(other),
        })
        .collect())
}

fn is_word(text: &str, word: &str) -> bool {
    let mut words = text.split_whitespace();
    matches!((words.next(), words.next()), (Some(w), None) if w.eq_ignore_ascii_case(word))
}

/// Splits off a leading keyword, returning the trimmed remainder.
fn strip_leading_word<'t>(text: &'t str, word: &str) -> Option<&'t str> {
    let first = text.split_whitespace().next()?;
    if !first.eq_ignore_ascii_case(word) {
        return None;
    }
    let rest = text.trim_start()[first.len()..].trim();
    (!rest.is_empty()).then_some(rest)
}

fn strip_trailing_word<'t>(text: &'t str, word: &str) -> Option<&'t str> {
    let last = text.split_whitespace().last()?;
    if !last.eq_ignore_ascii_case(word) {
        return None;
    }
    let trimmed = text.trim_end();
    let rest = trimmed[..trimmed.len() - last.len()].trim();
    (!rest.is_empty()).then_some(rest)
}

fn destination(shape: &Shape) -> Option<Destination> {
    match shape {
        Shape::Point { .. } => shape.as_point().map(Destination::Point),
        Shape::Box { .. } => shape.as_box().map(Destination::Box),
        Shape::Arrow { .. } => None,
    }
}

pub fn parse_command(instr: &MultimodalInstruction) -> Result<Command, OracleError> {
    let parts = normalize(instr)?;
    let command = match parts.as_slice() {
        [Part::Text(verb), Part::Shape(sel), Part::Text(to), Part::Shape(dest)]
            if is_word(verb, "move") && is_word(to, "to") =>
        {
            Command::Move {
                selector: sel.as_box().ok_or(OracleError::NotOracleCommand)?,
                destination: destination(dest).ok_or(OracleError::NotOracleCommand)?,
            }
        }
        [Part::Text(head), Part::Shape(dest)] if is_word(head, "delete") => Command::Delete {
            selector: dest.as_box().ok_or(OracleError::NotOracleCommand)?,
        },
        [Part::Text(head), Part::Shape(dest)] => {
            let caption = strip_leading_word(head, "add")
                .and_then(|rest| strip_trailing_word(rest, "at"))
                .ok_or(OracleError::NotOracleCommand)?;
            Command::Add {
                caption: caption.to_string(),
                destination: destination(dest).ok_or(OracleError::NotOracleCommand)?,
            }
        }
        [Part::Text(verb), Part::Shape(sel), Part::Text(tail)] if is_word(verb, "recaption") => {
            let caption = strip_leading_word(tail, "to").ok_or(OracleError::NotOracleCommand)?;
            Command::Recaption {
                selector: sel.as_box().ok_or(OracleError::NotOracleCommand)?,
                caption: caption.to_string(),
            }
        }
        _ => return Err(OracleError::NotOracleCommand),
    };
    Ok(command)
}

/// Box for a new object placed at `dest`.
pub fn placement_box(dest: Destination, canvas: Canvas) -> Result<BoundingBox, OracleError> {
    Ok(match dest {
        Destination::Point(p) => {
            let side_w = DEFAULT_ADD_SIDE.min(canvas.width);
            let side_h = DEFAULT_ADD_SIDE.min(canvas.height);
            move_center_to(BoundingBox::new(0, 0, side_w, side_h), p, canvas)?
        }
        Destination::Box(b) => clamp_to_canvas(b, canvas)?,
    })
}

fn selected(layout: &Layout, selector: &BoundingBox) -> Result<Vec<u64>, OracleError> {
    let ids = resolve_selection(layout, selector);
    if ids.is_empty() {
        Err(OracleError::EmptySelection)
    } else {
        Ok(ids)
    }
}

pub fn apply_command(layout: &Layout, cmd: &Command) -> Result<Layout, OracleError> {
    let mut out = layout.clone();
    let canvas = layout.canvas;
    match cmd {
        Command::Move {
            selector,
            destination,
        } => {
            let ids = selected(layout, selector)?;
            match *destination {
                Destination::Point(p) => {
                    for obj in out.objects.iter_mut().filter(|o| ids.contains(&o.id)) {
                        obj.bbox = move_center_to(obj.bbox, p, canvas)?;
                    }
                }
                Destination::Box(target) => {
                    let target = clamp_to_canvas(target, canvas)?;
                    let leader = layout.object(ids[0]).expect("selected id exists").bbox;
                    let (lx, ly) = leader.center();
                    let (tx, ty) = target.center();
                    let (dx, dy) = (tx - lx, ty - ly);
                    for obj in out.objects.iter_mut().filter(|o| ids.contains(&o.id)) {
                        obj.bbox = if obj.id == ids[0] {
                            target
                        } else {
                            let shifted = BoundingBox {
                                x: (i64::from(obj.bbox.x) + dx) as i32,
                                y: (i64::from(obj.bbox.y) + dy) as i32,
                                ..obj.bbox
                            };
                            clamp_to_canvas(shifted, canvas)?
                        };
                    }
                }
            }
        }
        Command::Add {
            caption,
            destination,
        } => {
            let bbox = placement_box(*destination, canvas)?;
            out.objects
                .push(SceneObject::new(layout.next_id(), caption.clone(), bbox));
        }
        Command::Delete { selector } => {
            let ids = selected(layout, selector)?;
            out.objects.retain(|o| !ids.contains(&o.id));
        }
        Command::Recaption { selector, caption } => {
            let ids = selected(layout, selector)?;
            for obj in out.objects.iter_mut().filter(|o| ids.contains(&o.id)) {
                obj.caption = caption.clone();
            }
        }
    }
    Ok(out)
}

/// Objects a command's selector picks up in `layout` (empty for `Add`).
pub fn command_targets(layout: &Layout, cmd: &Command) -> Vec<u64> {
    cmd.selector()
        .map(|s| resolve_selection(layout, &s))
        .unwrap_or_default()
}
