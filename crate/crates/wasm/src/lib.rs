//! Browser bindings: run oracle edits, resolve drawn selections and render
//! SVG previews entirely client side.
//!
//! Each export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are usable (and tested) natively.

use pni_core::layout::resolve_selection;
use pni_core::oracle::{apply_command, command_targets, parse_command};
use pni_core::render::{layout_hash, render_svg};
use pni_core::validator::{validate_edit, ValidationPolicy};
use pni_core::{coverage, iou, parse_instruction_text, parse_layout, serialize_layout, BoundingBox};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Applies an oracle command written in the inline shape-literal syntax.
///
/// Returns `{"layout_text", "validation", "svg", "verb", "targets"}`.
pub fn apply_edit_json(layout_text: &str, instruction_text: &str) -> Result<String, String> {
    let before = parse_layout(layout_text).map_err(|e| e.to_string())?;
    let instruction = parse_instruction_text(instruction_text).map_err(|e| e.to_string())?;
    let command = parse_command(&instruction).map_err(|e| e.to_string())?;
    let targets = command_targets(&before, &command);
    let after = apply_command(&before, &command).map_err(|e| e.to_string())?;
    let report = validate_edit(&before, &after, &instruction, &ValidationPolicy::default());
    Ok(json!({
        "layout_text": serialize_layout(&after),
        "validation": report,
        "svg": render_svg(&after),
        "verb": command.verb(),
        "targets": targets,
    })
    .to_string())
}

/// Returns `{"svg", "layout_text", "layout_hash"}` for a layout.
pub fn render_json(layout_text: &str) -> Result<String, String> {
    let layout = parse_layout(layout_text).map_err(|e| e.to_string())?;
    Ok(json!({
        "svg": render_svg(&layout),
        "layout_text": serialize_layout(&layout),
        "layout_hash": layout_hash(&layout),
    })
    .to_string())
}

/// Objects a drawn box selects, with per-object coverage and IoU as
/// `"num/den"` strings.
pub fn select_json(layout_text: &str, x: i32, y: i32, width: u32, height: u32) -> Result<String, String> {
    let layout = parse_layout(layout_text).map_err(|e| e.to_string())?;
    let selector = BoundingBox::new(x, y, width, height);
    if !selector.is_valid() {
        return Err("selection box must have positive size".into());
    }
    let selected = resolve_selection(&layout, &selector);
    let scores: Vec<_> = layout
        .objects
        .iter()
        .map(|o| {
            json!({
                "id": o.id,
                "caption": o.caption,
                "coverage": coverage(&selector, &o.bbox).to_string(),
                "iou": iou(&selector, &o.bbox).to_string(),
            })
        })
        .collect();
    Ok(json!({ "selected": selected, "scores": scores }).to_string())
}

#[wasm_bindgen]
pub fn apply_edit(layout_text: &str, instruction_text: &str) -> Result<String, JsError> {
    apply_edit_json(layout_text, instruction_text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn render(layout_text: &str) -> Result<String, JsError> {
    render_json(layout_text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn select(layout_text: &str, x: i32, y: i32, width: u32, height: u32) -> Result<String, JsError> {
    select_json(layout_text, x, y, width, height).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const SCENE: &str = r#"{"canvas": {"width": 512, "height": 512}, "background": "a beach", "objects": [
        {"id": 0, "caption": "a sandcastle", "box": {"x": 150, "y": 400, "width": 100, "height": 100}},
        {"id": 1, "caption": "a seagull", "box": {"x": 300, "y": 60, "width": 60, "height": 40}}]}"#;

    #[test]
    fn apply_moves_and_validates() {
        let out: Value = serde_json::from_str(
            &apply_edit_json(SCENE, "move {x: 150, y: 400, width: 100, height: 100} to {x: 144, y: 132}").unwrap(),
        )
        .unwrap();
        assert_eq!(out["verb"], "move");
        assert_eq!(out["targets"], json!([0]));
        assert_eq!(out["validation"]["ok"], true);
        let after = parse_layout(out["layout_text"].as_str().unwrap()).unwrap();
        assert_eq!(after.objects[0].bbox, BoundingBox::new(94, 82, 100, 100));
        assert!(out["svg"].as_str().unwrap().contains("x=\"94\" y=\"82\""));
    }

    #[test]
    fn errors_are_messages() {
        assert!(apply_edit_json(SCENE, "make it night").unwrap_err().contains("not an oracle command"));
        assert!(apply_edit_json(SCENE, "delete {x: 0, y: 0, width: 5, height: 5}")
            .unwrap_err()
            .contains("selection resolves to no object"));
        assert!(apply_edit_json("{", "delete").is_err());
        assert!(select_json(SCENE, 0, 0, 0, 4).is_err());
    }

    #[test]
    fn selection_scores() {
        let out: Value = serde_json::from_str(&select_json(SCENE, 140, 390, 120, 120).unwrap()).unwrap();
        assert_eq!(out["selected"], json!([0]));
        assert_eq!(out["scores"][0]["coverage"], "1");
        assert_eq!(out["scores"][0]["iou"], "25/36");
        assert_eq!(out["scores"][1]["coverage"], "0");
    }

    #[test]
    fn render_is_canonical() {
        let out: Value = serde_json::from_str(&render_json(SCENE).unwrap()).unwrap();
        let layout = parse_layout(SCENE).unwrap();
        assert_eq!(out["layout_text"], serialize_layout(&layout));
        assert_eq!(out["svg"], render_svg(&layout));
        assert_eq!(out["layout_hash"].as_str().unwrap().len(), 64);
    }
}
