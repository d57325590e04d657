//! Multimodal instructions: natural-language text interleaved with references
//! to shapes the user drew (boxes, points, arrows), and their textual form.
//!
//! Shapes serialize to brace literals such as `{x: 144, y: 132}` so the
//! whole instruction becomes one line of text that a language model can read.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{InstructionError, ShapeError};
use crate::geometry::{BoundingBox, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Point {
        x: u32,
        y: u32,
    },
    Box {
        x: i32,
        y: i32,
        width: u32,
        height: u32,
    },
    Arrow {
        from: Point,
        to: Point,
    },
}

impl Shape {
    pub fn point(p: Point) -> Self {
        Shape::Point { x: p.x, y: p.y }
    }

    pub fn bbox(b: BoundingBox) -> Self {
        Shape::Box {
            x: b.x,
            y: b.y,
            width: b.width,
            height: b.height,
        }
    }

    pub fn as_box(&self) -> Option<BoundingBox> {
        match *self {
            Shape::Box {
                x,
                y,
                width,
                height,
            } => Some(BoundingBox::new(x, y, width, height)),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<Point> {
        match *self {
            Shape::Point { x, y } => Some(Point::new(x, y)),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Point { .. } => "point",
            Shape::Box { .. } => "box",
            Shape::Arrow { .. } => "arrow",
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        match *self {
            Shape::Point { .. } => Ok(()),
            Shape::Box {
                x,
                y,
                width,
                height,
            } => {
                if x < 0 || y < 0 {
                    Err(ShapeError::Validation("negative coordinate".into()))
                } else if width == 0 || height == 0 {
                    Err(ShapeError::Validation("box width and height must be at least 1".into()))
                } else {
                    Ok(())
                }
            }
            Shape::Arrow { from, to } => {
                if from == to {
                    Err(ShapeError::Validation("arrow endpoints coincide".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstructionToken {
    Text(String),
    Ref(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MultimodalInstruction {
    pub tokens: Vec<InstructionToken>,
    #[serde(default)]
    pub shapes: BTreeMap<String, Shape>,
}

impl MultimodalInstruction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.tokens.push(InstructionToken::Text(text.into()));
        self
    }

    /// Appends a reference to `shape`, registering it under a fresh id.
    pub fn shape(mut self, shape: Shape) -> Self {
        let id = format!("s{}", self.shapes.len() + 1);
        self.shapes.insert(id.clone(), shape);
        self.tokens.push(InstructionToken::Ref(id));
        self
    }

    pub fn validate(&self) -> Result<(), InstructionError> {
        if self.tokens.is_empty() {
            return Err(InstructionError::Empty);
        }
        let mut used = std::collections::HashSet::new();
        for (i, token) in self.tokens.iter().enumerate() {
            match token {
                InstructionToken::Text(t) if t.is_empty() => return Err(InstructionError::EmptyText(i)),
                InstructionToken::Text(_) => {}
                InstructionToken::Ref(id) => {
                    let shape = self
                        .shapes
                        .get(id)
                        .ok_or_else(|| InstructionError::DanglingReference(id.clone()))?;
                    shape.validate().map_err(|source| InstructionError::InvalidShape {
                        id: id.clone(),
                        source,
                    })?;
                    if !used.insert(id.as_str()) {
                        return Err(InstructionError::RepeatedReference(id.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Shapes in the order their references appear.
    pub fn referenced_shapes(&self) -> impl Iterator<Item = &Shape> {
        self.tokens.iter().filter_map(|t| match t {
            InstructionToken::Ref(id) => self.shapes.get(id),
            InstructionToken::Text(_) => None,
        })
    }

    pub fn has_refs(&self) -> bool {
        self.tokens.iter().any(|t| matches!(t, InstructionToken::Ref(_)))
    }

    /// Concatenated text spans, shape references omitted.
    pub fn plain_text(&self) -> String {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                InstructionToken::Text(s) => Some(s.as_str()),
                InstructionToken::Ref(_) => None,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn serialize_shape(shape: &Shape) -> String {
    match *shape {
        Shape::Point { x, y } => format!("{{x: {x}, y: {y}}}"),
        Shape::Box {
            x,
            y,
            width,
            height,
        } => format!("{{x: {x}, y: {y}, width: {width}, height: {height}}}"),
        Shape::Arrow { from, to } => format!(
            "{{from: {{x: {}, y: {}}}, to: {{x: {}, y: {}}}}}",
            from.x, from.y, to.x, to.y
        ),
    }
}

/// Renders an instruction as one line of text with shape literals inlined.
pub fn serialize_instruction(instr: &MultimodalInstruction) -> Result<String, InstructionError> {
    let mut out = String::new();
    for token in &instr.tokens {
        let piece = match token {
            InstructionToken::Text(t) => t.clone(),
            InstructionToken::Ref(id) => serialize_shape(
                instr
                    .shapes
                    .get(id)
                    .ok_or_else(|| InstructionError::DanglingReference(id.clone()))?,
            ),
        };
        let left_ws = out.chars().last().is_some_and(char::is_whitespace);
        let right_ws = piece.chars().next().is_some_and(char::is_whitespace);
        if !out.is_empty() && !piece.is_empty() && !left_ws && !right_ws {
            out.push(' ');
        }
        out.push_str(&piece);
    }
    Ok(out)
}

enum Value {
    Int { negative: bool, magnitude: u64 },
    Object(Vec<(String, Value)>),
}

struct LiteralParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> LiteralParser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ShapeError> {
        Err(ShapeError::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8) -> Result<(), ShapeError> {
        self.skip_ws();
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", byte as char))
        }
    }

    fn key(&mut self) -> Result<String, ShapeError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_alphabetic() || b == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected key");
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn value(&mut self) -> Result<Value, ShapeError> {
        self.skip_ws();
        match self.peek() {
            Some(b'{') => self.object().map(Value::Object),
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(_) => self.err("expected number or '{'"),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Value, ShapeError> {
        let start = self.pos;
        let negative = self.peek() == Some(b'-');
        if negative {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if digits_start == self.pos {
            return self.err("expected digits");
        }
        if matches!(self.peek(), Some(b'.' | b'e' | b'E')) {
            return Err(ShapeError::Validation(format!(
                "fractional coordinate at byte {start}"
            )));
        }
        let text = std::str::from_utf8(&self.src[digits_start..self.pos]).unwrap_or_default();
        match text.parse::<u64>() {
            Ok(magnitude) => Ok(Value::Int {
                negative: negative && magnitude != 0,
                magnitude,
            }),
            Err(_) => {
                self.pos = start;
                self.err("number out of range")
            }
        }
    }

    fn object(&mut self) -> Result<Vec<(String, Value)>, ShapeError> {
        self.expect(b'{')?;
        let mut fields = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(fields);
        }
        loop {
            let key_at = self.pos;
            let key = self.key()?;
            if fields.iter().any(|(k, _)| *k == key) {
                self.pos = key_at;
                return self.err(format!("duplicate key '{key}'"));
            }
            self.expect(b':')?;
            let value = self.value()?;
            fields.push((key, value));
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(fields);
                }
                _ => return self.err("expected ',' or '}'"),
            }
        }
    }
}

fn take_field(fields: &mut Vec<(String, Value)>, key: &str) -> Option<Value> {
    let idx = fields.iter().position(|(k, _)| k == key)?;
    Some(fields.remove(idx).1)
}

fn coordinate(v: Value, key: &str) -> Result<u32, ShapeError> {
    match v {
        Value::Int { negative: true, .. } => {
            Err(ShapeError::Validation(format!("negative value for '{key}'")))
        }
        Value::Int { magnitude, .. } => u32::try_from(magnitude)
            .map_err(|_| ShapeError::Validation(format!("value for '{key}' out of range"))),
        Value::Object(_) => Err(ShapeError::Validation(format!("'{key}' must be a number"))),
    }
}

fn point_from(mut fields: Vec<(String, Value)>) -> Result<Point, ShapeError> {
    let x = take_field(&mut fields, "x");
    let y = take_field(&mut fields, "y");
    match (x, y, fields.is_empty()) {
        (Some(x), Some(y), true) => Ok(Point::new(coordinate(x, "x")?, coordinate(y, "y")?)),
        _ => Err(ShapeError::Validation("point needs exactly keys x and y".into())),
    }
}

fn shape_from(mut fields: Vec<(String, Value)>) -> Result<Shape, ShapeError> {
    let mut keys: Vec<&str> = fields.iter().map(|(k, _)| k.as_str()).collect();
    keys.sort_unstable();
    let shape = match keys.as_slice() {
        ["x", "y"] => Shape::point(point_from(fields)?),
        ["height", "width", "x", "y"] => {
            let x = coordinate(take_field(&mut fields, "x").unwrap(), "x")?;
            let y = coordinate(take_field(&mut fields, "y").unwrap(), "y")?;
            let width = coordinate(take_field(&mut fields, "width").unwrap(), "width")?;
            let height = coordinate(take_field(&mut fields, "height").unwrap(), "height")?;
            let as_i32 = |v: u32, k: &str| {
                i32::try_from(v).map_err(|_| ShapeError::Validation(format!("value for '{k}' out of range")))
            };
            Shape::Box {
                x: as_i32(x, "x")?,
                y: as_i32(y, "y")?,
                width,
                height,
            }
        }
        ["from", "to"] => {
            let mut endpoint = |key: &str| match take_field(&mut fields, key) {
                Some(Value::Object(inner)) => point_from(inner),
                _ => Err(ShapeError::Validation(format!("'{key}' must be a point"))),
            };
            let from = endpoint("from")?;
            let to = endpoint("to")?;
            Shape::Arrow { from, to }
        }
        _ => {
            return Err(ShapeError::Validation(format!(
                "unrecognized shape keys {{{}}}",
                keys.join(", ")
            )))
        }
    };
    shape.validate()?;
    Ok(shape)
}

/// Parses a single shape literal, tolerating arbitrary whitespace.
pub fn parse_shape(text: &str) -> Result<Shape, ShapeError> {
    let (shape, consumed) = parse_shape_prefix(text)?;
    let rest = &text[consumed..];
    if let Some(extra) = rest.find(|c: char| !c.is_whitespace()) {
        return Err(ShapeError::Parse {
            offset: consumed + extra,
            message: "trailing input after shape literal".into(),
        });
    }
    Ok(shape)
}

/// Parses a shape literal at the start of `text` (after optional whitespace)
/// and returns it with the number of bytes consumed.
fn parse_shape_prefix(text: &str) -> Result<(Shape, usize), ShapeError> {
    let mut parser = LiteralParser::new(text);
    parser.skip_ws();
    if parser.peek() != Some(b'{') {
        return parser.err("expected '{'");
    }
    let fields = parser.object()?;
    Ok((shape_from(fields)?, parser.pos))
}

/// Turns instruction text with inline shape literals into a
/// [`MultimodalInstruction`]. Text spans are kept verbatim; each literal
/// becomes a reference to a shape named `s1`, `s2`, ... in order of
/// appearance. Error offsets are relative to `text`.
pub fn parse_instruction_text(text: &str) -> Result<MultimodalInstruction, InstructionError> {
    let mut instr = MultimodalInstruction::new();
    let mut rest_start = 0;
    while let Some(rel) = text[rest_start..].find('{') {
        let brace = rest_start + rel;
        if brace > rest_start {
            instr = instr.text(&text[rest_start..brace]);
        }
        let (shape, consumed) = parse_shape_prefix(&text[brace..]).map_err(|e| match e {
            ShapeError::Parse { offset, message } => ShapeError::Parse {
                offset: offset + brace,
                message,
            },
            other => other,
        })?;
        instr = instr.shape(shape);
        rest_start = brace + consumed;
    }
    if rest_start < text.len() {
        instr = instr.text(&text[rest_start..]);
    }
    instr.validate()?;
    Ok(instr)
}
