use thiserror::Error;

use crate::geometry::{BoundingBox, Canvas, Point};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("unplaceable box: {bbox:?} does not fit in a {}x{} canvas", canvas.width, canvas.height)]
    UnplaceableBox { bbox: BoundingBox, canvas: Canvas },
    #[error("point outside canvas: ({}, {}) on a {}x{} canvas", point.x, point.y, canvas.width, canvas.height)]
    PointOutsideCanvas { point: Point, canvas: Canvas },
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnplaceableBox { .. } => "unplaceable-box",
            Self::PointOutsideCanvas { .. } => "point-outside-canvas",
        }
    }
}

/// A broken [`Layout`](crate::layout::Layout) invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantError {
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("non-positive box on object {0}")]
    NonPositiveBox(u64),
    #[error("empty caption on object {0}")]
    EmptyCaption(u64),
    #[error("canvas too small: {width}x{height} (minimum 16x16)")]
    CanvasTooSmall { width: u32, height: u32 },
}

impl InvariantError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateId(_) => "duplicate-id",
            Self::NonPositiveBox(_) => "non-positive-box",
            Self::EmptyCaption(_) => "empty-caption",
            Self::CanvasTooSmall { .. } => "canvas-too-small",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("json syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("no layout found in completion")]
    NoLayoutFound,
}

impl LayoutError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Syntax { .. } => "syntax",
            Self::Schema { .. } => "schema",
            Self::Invariant(inner) => inner.code(),
            Self::NoLayoutFound => "no-layout",
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("malformed shape literal at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid shape: {0}")]
    Validation(String),
}

impl ShapeError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "shape-parse",
            Self::Validation(_) => "shape-invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstructionError {
    #[error("dangling shape reference {0:?}")]
    DanglingReference(String),
    #[error("shape {0:?} referenced more than once")]
    RepeatedReference(String),
    #[error("instruction has no tokens")]
    Empty,
    #[error("empty text span at token {0}")]
    EmptyText(usize),
    #[error("shape {id:?}: {source}")]
    InvalidShape {
        id: String,
        #[source]
        source: ShapeError,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

impl InstructionError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DanglingReference(_) => "dangling-reference",
            Self::RepeatedReference(_) => "repeated-reference",
            Self::Empty => "empty-instruction",
            Self::EmptyText(_) => "empty-text",
            Self::InvalidShape { .. } => "shape-invalid",
            Self::Shape(inner) => inner.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("not an oracle command")]
    NotOracleCommand,
    #[error("selection resolves to no object")]
    EmptySelection,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotOracleCommand => "not-oracle-command",
            Self::EmptySelection => "empty-selection",
            Self::Geometry(inner) => inner.code(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus schema error: {0}")]
    Schema(String),
    #[error("corpus example {index}: {message}")]
    Example { index: usize, message: String },
    #[error("corpus too small: {0} examples (minimum 10)")]
    CorpusTooSmall(usize),
    #[error("corpus too large: {0} examples (maximum 30)")]
    CorpusTooLarge(usize),
    #[error("example count {k} out of range 1..={available}")]
    KOutOfRange { k: usize, available: usize },
    #[error(transparent)]
    Instruction(#[from] InstructionError),
}

impl PromptError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Schema(_) => "corpus-schema",
            Self::Example { .. } => "corpus-example",
            Self::CorpusTooSmall(_) => "corpus-too-small",
            Self::CorpusTooLarge(_) => "corpus-too-large",
            Self::KOutOfRange { .. } => "k-out-of-range",
            Self::Instruction(inner) => inner.code(),
        }
    }
}
