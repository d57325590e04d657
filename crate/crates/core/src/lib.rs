//! Layout-grounded image editing core.
//!
//! An image is edited through its layout: a canvas, a background caption and
//! a list of captioned boxes. Users combine drawn shapes with text into a
//! [`MultimodalInstruction`]; the instruction is either executed by the
//! deterministic [`oracle`] or handed to a language model through a few-shot
//! prompt built by [`prompt`]. Either way the resulting layout is checked by
//! the [`validator`] and can be previewed with the SVG [`render`]er.

pub mod error;
pub mod geometry;
pub mod instruction;
pub mod layout;
pub mod layout_text;
pub mod oracle;
pub mod prompt;
pub mod render;
pub mod validator;

pub use error::{GeometryError, InstructionError, InvariantError, LayoutError, OracleError, PromptError, ShapeError};
pub use geometry::{clamp_to_canvas, coverage, iou, move_center_to, BoundingBox, Canvas, Point};
pub use instruction::{
    parse_instruction_text, parse_shape, serialize_instruction, serialize_shape, InstructionToken,
    MultimodalInstruction, Shape,
};
pub use layout::{resolve_selection, Layout, SceneObject};
pub use layout_text::{extract_layout_block, layout_from_value, parse_layout, serialize_layout};
pub use oracle::{apply_command, parse_command, Command, Destination};
pub use prompt::{build_prompt, parse_completion, ExampleCorpus, InContextExample, PromptBundle};
pub use render::{render_mock, MediaType, RenderArtifact};
pub use validator::{validate_edit, validate_structure, ValidationPolicy, ValidationReport};
