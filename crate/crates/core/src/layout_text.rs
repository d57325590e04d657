//! Canonical JSON text for layouts.
//!
//! Output is byte-deterministic: fixed key order, two-space indentation and
//! one object per line. Input is lenient about key order, whitespace and
//! unknown keys but strict about types and layout invariants.

use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::error::LayoutError;
use crate::geometry::{BoundingBox, Canvas};
use crate::layout::{Layout, SceneObject};

/// Marker line that precedes the final layout in a model completion.
pub const OUTPUT_SENTINEL: &str = "OUTPUT LAYOUT:";

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

pub fn serialize_layout(layout: &Layout) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(
        out,
        "  \"canvas\": {{\"width\": {}, \"height\": {}}},",
        layout.canvas.width, layout.canvas.height
    );
    let _ = writeln!(out, "  \"background\": {},", json_string(&layout.background));
    if layout.objects.is_empty() {
        out.push_str("  \"objects\": []\n");
    } else {
        out.push_str("  \"objects\": [\n");
        for (i, obj) in layout.objects.iter().enumerate() {
            let b = obj.bbox;
            let _ = write!(
                out,
                "    {{\"id\": {}, \"caption\": {}, \"box\": {{\"x\": {}, \"y\": {}, \"width\": {}, \"height\": {}}}}}",
                obj.id,
                json_string(&obj.caption),
                b.x,
                b.y,
                b.width,
                b.height
            );
            out.push_str(if i + 1 < layout.objects.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ]\n");
    }
    out.push('}');
    out
}

pub fn parse_layout(text: &str) -> Result<Layout, LayoutError> {
    let value: Value = serde_json::from_str(text).map_err(|e| LayoutError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    layout_from_value(&value)
}

/// Builds and validates a layout from an already-parsed JSON value.
pub fn layout_from_value(value: &Value) -> Result<Layout, LayoutError> {
    let root = as_object(value, "$")?;
    let canvas_obj = as_object(field(root, "canvas", "$")?, "$.canvas")?;
    let canvas = Canvas::new(
        uint(field(canvas_obj, "width", "$.canvas")?, "$.canvas.width")?,
        uint(field(canvas_obj, "height", "$.canvas")?, "$.canvas.height")?,
    );
    let background = match field(root, "background", "$")? {
        Value::String(s) => s.clone(),
        _ => return Err(LayoutError::schema("$.background", "expected string")),
    };
    let objects_val = match field(root, "objects", "$")? {
        Value::Array(items) => items,
        _ => return Err(LayoutError::schema("$.objects", "expected array")),
    };
    let mut objects = Vec::with_capacity(objects_val.len());
    for (i, item) in objects_val.iter().enumerate() {
        let path = format!("$.objects[{i}]");
        let obj = as_object(item, &path)?;
        let id = match field(obj, "id", &path)? {
            Value::Number(n) => n
                .as_u64()
                .ok_or_else(|| LayoutError::schema(format!("{path}.id"), "expected non-negative integer"))?,
            _ => return Err(LayoutError::schema(format!("{path}.id"), "expected non-negative integer")),
        };
        let caption = match field(obj, "caption", &path)? {
            Value::String(s) => s.clone(),
            _ => return Err(LayoutError::schema(format!("{path}.caption"), "expected string")),
        };
        let box_path = format!("{path}.box");
        let b = as_object(field(obj, "box", &path)?, &box_path)?;
        let bbox = BoundingBox::new(
            int(field(b, "x", &box_path)?, &format!("{box_path}.x"))?,
            int(field(b, "y", &box_path)?, &format!("{box_path}.y"))?,
            uint(field(b, "width", &box_path)?, &format!("{box_path}.width"))?,
            uint(field(b, "height", &box_path)?, &format!("{box_path}.height"))?,
        );
        objects.push(SceneObject { id, caption, bbox });
    }
    let layout = Layout {
        canvas,
        background,
        objects,
    };
    layout.validate()?;
    Ok(layout)
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, LayoutError> {
    v.as_object()
        .ok_or_else(|| LayoutError::schema(path, "expected object"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, LayoutError> {
    obj.get(key)
        .ok_or_else(|| LayoutError::schema(path, format!("missing key \"{key}\"")))
}

fn uint(v: &Value, path: &str) -> Result<u32, LayoutError> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| LayoutError::schema(path, "expected non-negative integer"))
}

fn int(v: &Value, path: &str) -> Result<i32, LayoutError> {
    v.as_i64()
        .and_then(|n| i32::try_from(n).ok())
        .ok_or_else(|| LayoutError::schema(path, "expected integer"))
}

/// Pulls the layout text out of a model completion.
///
/// Everything after the last `OUTPUT LAYOUT:` line wins. Without the
/// sentinel, the last balanced top-level `{...}` in the text is used.
pub fn extract_layout_block(completion: &str) -> Result<String, LayoutError> {
    if let Some(after) = after_last_sentinel(completion) {
        let block = strip_fences(after.trim());
        if block.is_empty() {
            return Err(LayoutError::NoLayoutFound);
        }
        return Ok(block.to_string());
    }
    last_balanced_object(completion)
        .map(|(start, end)| completion[start..end].to_string())
        .ok_or(LayoutError::NoLayoutFound)
}

fn after_last_sentinel(text: &str) -> Option<&str> {
    let mut found = None;
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with(OUTPUT_SENTINEL) {
            let at = line_start + (line.len() - trimmed.len()) + OUTPUT_SENTINEL.len();
            found = Some(at);
        }
        line_start += line.len();
    }
    found.map(|at| &text[at..])
}

fn strip_fences(block: &str) -> &str {
    let mut s = block;
    if s.starts_with("```") {
        s = s.find('\n').map_or("", |nl| &s[nl + 1..]);
    }
    if let Some(stripped) = s.trim_end().strip_suffix("```") {
        s = stripped;
    }
    s.trim()
}

/// Byte span of the last top-level balanced brace pair, ignoring braces
/// inside JSON string literals. Stray closing braces are skipped.
pub fn last_balanced_object(text: &str) -> Option<(usize, usize)> {
    let mut stack: Vec<usize> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in text.bytes().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(i),
            b'}' => {
                if let Some(open) = stack.pop() {
                    best = Some((open, i + 1));
                }
            }
            _ => {}
        }
    }
    best
}
