//! Layout rendering artifacts and the deterministic SVG preview renderer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::layout::Layout;
use crate::layout_text::serialize_layout;

pub const MOCK_RENDERER_ID: &str = "mock-svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "image/svg+xml")]
    Svg,
    #[serde(rename = "image/png")]
    Png,
}

impl MediaType {
    pub fn as_str(&self) -> &'static str {
        match self {
            MediaType::Svg => "image/svg+xml",
            MediaType::Png => "image/png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderArtifact {
    pub bytes: Vec<u8>,
    pub media_type: MediaType,
    pub renderer_id: String,
    /// Hex SHA-256 of the canonical layout text that was rendered.
    pub layout_hash: String,
}

pub fn layout_hash(layout: &Layout) -> String {
    let digest = Sha256::digest(serialize_layout(layout).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn caption_hue(caption: &str) -> u16 {
    (fnv1a64(caption.as_bytes()) % 360) as u16
}

fn hsl(hue: u16, saturation: u8, lightness: u8) -> String {
    format!("hsl({hue}, {saturation}%, {lightness}%)")
}

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders a layout as a flat SVG: a tinted background plus one translucent,
/// outlined rectangle and caption per object, in list order.
pub fn render_svg(layout: &Layout) -> String {
    let (w, h) = (layout.canvas.width, layout.canvas.height);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "  <title>{}</title>", escape_xml(&layout.background));
    let _ = writeln!(
        svg,
        "  <rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{}\"/>",
        hsl(caption_hue(&layout.background), 40, 85)
    );
    for obj in &layout.objects {
        let b = obj.bbox;
        let color = hsl(caption_hue(&obj.caption), 70, 60);
        let _ = writeln!(
            svg,
            "  <rect class=\"object\" data-id=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.3\" stroke=\"{color}\" stroke-width=\"2\"/>",
            obj.id, b.x, b.y, b.width, b.height
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" dominant-baseline=\"hanging\">{}</text>",
            b.x,
            b.y,
            escape_xml(&obj.caption)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn render_mock(layout: &Layout) -> RenderArtifact {
    RenderArtifact {
        bytes: render_svg(layout).into_bytes(),
        media_type: MediaType::Svg,
        renderer_id: MOCK_RENDERER_ID.to_string(),
        layout_hash: layout_hash(layout),
    }
}
