//! Rule-based checks on layouts and on edits between two layouts.
//!
//! Many instructions ("move the ball to the right") have no single correct
//! answer, so edits are judged by rules: the frame of untouched objects,
//! fixed canvas, fresh ids, and agreement with the oracle whenever the
//! instruction is an oracle command.

use std::collections::{BTreeSet, HashMap, HashSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::geometry::clamp_to_canvas;
use crate::instruction::{MultimodalInstruction, Shape};
use crate::layout::{resolve_selection, Layout};
use crate::oracle::{apply_command, command_targets, parse_command, Command};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub rule_id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn from_checks(checks: Vec<Check>) -> Self {
        Self {
            ok: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed_rules(&self) -> Vec<&str> {
        self.failed().map(|c| c.rule_id.as_str()).collect()
    }

    pub fn check(&self, rule_id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.rule_id == rule_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    /// Out-of-canvas boxes that fit are translated inside and noted.
    #[default]
    Clamp,
    /// Out-of-canvas boxes fail the `in-canvas` rule.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPolicy {
    /// Move tolerance as a fraction of the larger canvas side.
    pub epsilon_fraction: Ratio<u64>,
    pub clamp_policy: ClampPolicy,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            epsilon_fraction: Ratio::new(1, 20),
            clamp_policy: ClampPolicy::Clamp,
        }
    }
}

impl ValidationPolicy {
    /// Converts a decimal fraction such as `0.05` to an exact ratio
    /// (to 1e-6 precision).
    pub fn with_epsilon(mut self, fraction: f64) -> Self {
        let micros = (fraction.max(0.0) * 1_000_000.0).round() as u64;
        self.epsilon_fraction = Ratio::new(micros, 1_000_000);
        self
    }
}

fn check(rule_id: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        rule_id: rule_id.to_string(),
        passed,
        detail: detail.into(),
    }
}

fn join_ids(ids: impl IntoIterator<Item = u64>) -> String {
    ids.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn validate_structure(layout: &Layout, policy: &ValidationPolicy) -> ValidationReport {
    let mut checks = Vec::with_capacity(4);

    let mut seen = HashSet::new();
    let dups: BTreeSet<u64> = layout.objects.iter().map(|o| o.id).filter(|id| !seen.insert(*id)).collect();
    checks.push(if dups.is_empty() {
        check("unique-ids", true, "all object ids distinct")
    } else {
        check("unique-ids", false, format!("duplicate ids: {}", join_ids(dups)))
    });

    let flat: Vec<u64> = layout.objects.iter().filter(|o| !o.bbox.is_valid()).map(|o| o.id).collect();
    checks.push(if flat.is_empty() {
        check("positive-dims", true, "all boxes have positive size")
    } else {
        check("positive-dims", false, format!("non-positive box on objects {}", join_ids(flat)))
    });

    let mut clamped = Vec::new();
    let mut outside = Vec::new();
    for obj in layout.objects.iter().filter(|o| o.bbox.is_valid() && !o.bbox.fits_in(layout.canvas)) {
        match (policy.clamp_policy, clamp_to_canvas(obj.bbox, layout.canvas)) {
            (ClampPolicy::Clamp, Ok(_)) => clamped.push(obj.id),
            _ => outside.push(obj.id),
        }
    }
    checks.push(if !outside.is_empty() {
        check("in-canvas", false, format!("objects outside canvas: {}", join_ids(outside)))
    } else if !clamped.is_empty() {
        let detail = clamped.iter().map(|id| format!("clamped object {id}")).collect::<Vec<_>>().join("; ");
        check("in-canvas", true, detail)
    } else {
        check("in-canvas", true, "all boxes inside canvas")
    });

    let blank: Vec<u64> = layout.objects.iter().filter(|o| o.caption.trim().is_empty()).map(|o| o.id).collect();
    checks.push(if blank.is_empty() {
        check("non-empty-captions", true, "all captions non-empty")
    } else {
        check("non-empty-captions", false, format!("empty caption on objects {}", join_ids(blank)))
    });

    ValidationReport::from_checks(checks)
}

/// Applies the clamp policy: every clampable out-of-canvas box is moved in.
pub fn clamp_layout(layout: &Layout) -> Layout {
    let mut out = layout.clone();
    for obj in &mut out.objects {
        if obj.bbox.is_valid() {
            if let Ok(b) = clamp_to_canvas(obj.bbox, layout.canvas) {
                obj.bbox = b;
            }
        }
    }
    out
}

/// Ids an instruction's shapes point at in `layout`.
///
/// Boxes select through [`resolve_selection`]; points and arrow tails select
/// every object containing them.
pub fn instruction_targets(layout: &Layout, instruction: &MultimodalInstruction) -> BTreeSet<u64> {
    let mut ids = BTreeSet::new();
    for shape in instruction.referenced_shapes() {
        match shape {
            Shape::Box { .. } => {
                if let Some(b) = shape.as_box() {
                    ids.extend(resolve_selection(layout, &b));
                }
            }
            Shape::Point { .. } | Shape::Arrow { .. } => {
                let p = match *shape {
                    Shape::Arrow { from, .. } => from,
                    _ => shape.as_point().expect("point shape"),
                };
                ids.extend(layout.objects.iter().filter(|o| o.bbox.contains_point(p)).map(|o| o.id));
            }
        }
    }
    ids
}

pub fn validate_edit(
    before: &Layout,
    after: &Layout,
    instruction: &MultimodalInstruction,
    policy: &ValidationPolicy,
) -> ValidationReport {
    let mut checks = validate_structure(after, policy).checks;

    checks.push(if after.canvas == before.canvas {
        check("canvas-fixed", true, "canvas unchanged")
    } else {
        check(
            "canvas-fixed",
            false,
            format!(
                "canvas changed from {}x{} to {}x{}",
                before.canvas.width, before.canvas.height, after.canvas.width, after.canvas.height
            ),
        )
    });

    checks.push(background_check(before, after, instruction));

    let before_ids: HashSet<u64> = before.objects.iter().map(|o| o.id).collect();
    let max_before = before.max_id();
    let reused: Vec<u64> = after
        .objects
        .iter()
        .map(|o| o.id)
        .filter(|id| !before_ids.contains(id) && max_before.is_some_and(|m| *id <= m))
        .collect();
    checks.push(if reused.is_empty() {
        check("id-monotonic", true, "new objects use fresh ids")
    } else {
        check("id-monotonic", false, format!("new objects must use ids above {}: got {}", max_before.unwrap_or_default(), join_ids(reused)))
    });

    let command = parse_command(instruction).ok();
    checks.push(frame_check(before, after, instruction, command.as_ref()));

    if let Some(cmd) = &command {
        checks.push(oracle_check(before, after, cmd, policy));
    }

    ValidationReport::from_checks(checks)
}

fn background_check(before: &Layout, after: &Layout, instruction: &MultimodalInstruction) -> Check {
    if after.background == before.background {
        return check("background-fixed", true, "background unchanged");
    }
    let mentions = instruction.plain_text().to_lowercase().contains("background");
    if !instruction.has_refs() && mentions {
        check(
            "background-fixed",
            true,
            format!("background changed to {:?} as requested", after.background),
        )
    } else if instruction.has_refs() {
        check(
            "background-fixed",
            false,
            format!("background changed to {:?} by an object-targeted instruction", after.background),
        )
    } else {
        check(
            "background-fixed",
            true,
            format!("background changed to {:?} (not requested; reported only)", after.background),
        )
    }
}

fn frame_check(
    before: &Layout,
    after: &Layout,
    instruction: &MultimodalInstruction,
    command: Option<&Command>,
) -> Check {
    if !instruction.has_refs() {
        return check("frame", true, "no shape references; frame not constrained");
    }
    let targets: BTreeSet<u64> = match command {
        Some(cmd) => command_targets(before, cmd).into_iter().collect(),
        None => instruction_targets(before, instruction),
    };
    let after_by_id: HashMap<u64, _> = after.objects.iter().map(|o| (o.id, o)).collect();
    let mut changed = Vec::new();
    let mut missing = Vec::new();
    for obj in before.objects.iter().filter(|o| !targets.contains(&o.id)) {
        match after_by_id.get(&obj.id) {
            None => missing.push(obj.id),
            Some(a) if *a != obj => changed.push(obj.id),
            Some(_) => {}
        }
    }
    if changed.is_empty() && missing.is_empty() {
        check(
            "frame",
            true,
            format!("untouched objects preserved (targets: [{}])", join_ids(targets)),
        )
    } else {
        let mut parts = Vec::new();
        if !changed.is_empty() {
            parts.push(format!("non-selected objects changed: {}", join_ids(changed)));
        }
        if !missing.is_empty() {
            parts.push(format!("non-selected objects removed: {}", join_ids(missing)));
        }
        check("frame", false, parts.join("; "))
    }
}

fn oracle_check(before: &Layout, after: &Layout, cmd: &Command, policy: &ValidationPolicy) -> Check {
    let expected = match apply_command(before, cmd) {
        Ok(l) => l,
        Err(e) => return check("oracle-agreement", false, format!("oracle cannot apply {}: {e}", cmd.verb())),
    };
    let epsilon = policy.epsilon_fraction * Ratio::from_integer(u64::from(before.canvas.max_side()));
    let eps_sq = epsilon * epsilon;
    let within = |a: (i64, i64), b: (i64, i64)| {
        let (dx, dy) = ((a.0 - b.0).unsigned_abs(), (a.1 - b.1).unsigned_abs());
        Ratio::from_integer(dx * dx + dy * dy) <= eps_sq
    };

    match cmd {
        Command::Delete { .. } | Command::Recaption { .. } => {
            if *after == expected {
                check("oracle-agreement", true, format!("{} matches oracle exactly", cmd.verb()))
            } else {
                check("oracle-agreement", false, format!("{} result differs from oracle", cmd.verb()))
            }
        }
        Command::Move { .. } => {
            let moved = command_targets(before, cmd);
            let mut problems = Vec::new();
            for id in &moved {
                let want = expected.object(*id).expect("oracle keeps moved objects");
                match after.object(*id) {
                    None => problems.push(format!("object {id} missing")),
                    Some(got) if (got.bbox.width, got.bbox.height) != (want.bbox.width, want.bbox.height) => {
                        problems.push(format!("object {id} resized"))
                    }
                    Some(got) if !within(got.bbox.center(), want.bbox.center()) => {
                        problems.push(format!("object {id} center off by more than {epsilon}"))
                    }
                    Some(_) => {}
                }
            }
            if after.objects.len() != before.objects.len() {
                problems.push("object count changed".into());
            }
            if problems.is_empty() {
                check(
                    "oracle-agreement",
                    true,
                    format!("move within {epsilon} px of oracle for [{}]", join_ids(moved)),
                )
            } else {
                check("oracle-agreement", false, problems.join("; "))
            }
        }
        Command::Add { caption, .. } => {
            let want = expected.objects.last().expect("oracle appended an object");
            let before_ids: HashSet<u64> = before.objects.iter().map(|o| o.id).collect();
            let added: Vec<_> = after.objects.iter().filter(|o| !before_ids.contains(&o.id)).collect();
            let ok = match added.as_slice() {
                [one] => {
                    one.caption == *caption
                        && (one.bbox.width, one.bbox.height) == (want.bbox.width, want.bbox.height)
                        && within(one.bbox.center(), want.bbox.center())
                        && after.objects.len() == before.objects.len() + 1
                }
                _ => false,
            };
            if ok {
                check("oracle-agreement", true, "add matches oracle placement")
            } else {
                check("oracle-agreement", false, "added object differs from oracle placement")
            }
        }
    }
}
