#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use pni_core::prompt::{default_corpus, default_scene_corpus};
use pni_core::validator::ValidationPolicy;
use pni_core::{serialize_layout, BoundingBox, Canvas, Layout};
use pni_service::diffusion::{RenderBackendConfig, Renderer};
use pni_service::llm::{Exhaustion, LlmClient, StubScript};
use pni_service::session::SessionStore;
use pni_service::{router, AppState, Editor};

pub const PNG_1X1: &[u8] = &[
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00,
    0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00, 0x0d, 0x49,
    0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60, 0x00, 0x00, 0x00, 0x02, 0x00, 0x01, 0xe2, 0x21, 0xbc, 0x33, 0x00, 0x00,
    0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

pub fn dog_layout() -> Layout {
    Layout::new(Canvas::default(), "a sunny park")
        .with_object(0, "a white dog", BoundingBox::new(100, 200, 120, 90))
        .with_object(1, "a red ball", BoundingBox::new(300, 330, 40, 40))
        .with_object(2, "a tree", BoundingBox::new(360, 40, 140, 260))
}

pub fn oranges_layout() -> Layout {
    Layout::new(Canvas::default(), "a wooden table in a kitchen")
        .with_object(0, "an orange", BoundingBox::new(120, 250, 80, 80))
        .with_object(1, "an orange", BoundingBox::new(216, 260, 80, 80))
        .with_object(2, "an orange", BoundingBox::new(312, 245, 80, 80))
}

/// A completion in the few-shot answer format: question/answer pairs, the
/// sentinel line, then the layout.
pub fn completion(layout: &Layout) -> String {
    format!(
        "Q: Which objects does the instruction refer to?\nA: the selected objects\n\
         Q: What should change?\nA: as instructed\n\
         Q: Which objects must stay the same?\nA: everything else\n\
         OUTPUT LAYOUT:\n{}",
        serialize_layout(layout)
    )
}

pub fn stub(completions: &[String], on_exhausted: Exhaustion) -> LlmClient {
    LlmClient::stub(StubScript::new(completions.to_vec(), on_exhausted).unwrap())
}

pub fn editor(llm: Option<LlmClient>) -> Editor {
    Editor::new(default_corpus(), default_scene_corpus(), None, ValidationPolicy::default(), llm).unwrap()
}

pub struct TestServer {
    pub addr: SocketAddr,
    pub state: AppState,
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

pub async fn spawn_router(router: axum::Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    addr
}

pub async fn spawn_service(data_dir: &std::path::Path, llm: Option<LlmClient>, renderer: RenderBackendConfig) -> TestServer {
    let state = AppState {
        editor: Arc::new(editor(llm)),
        store: Arc::new(SessionStore::open(data_dir).unwrap()),
        renderer: Arc::new(Renderer::new(&renderer).unwrap()),
    };
    let addr = spawn_router(router(state.clone())).await;
    TestServer { addr, state }
}

/// `(data-id, x, y, width, height)` of every object rectangle in a mock SVG.
pub fn svg_object_rects(svg: &str) -> Vec<(u64, i32, i32, u32, u32)> {
    let attr = |line: &str, name: &str| -> String {
        let key = format!(" {name}=\"");
        let start = line.find(&key).unwrap() + key.len();
        line[start..].split('"').next().unwrap().to_string()
    };
    svg.lines()
        .filter(|l| l.contains("class=\"object\""))
        .map(|l| {
            (
                attr(l, "data-id").parse().unwrap(),
                attr(l, "x").parse().unwrap(),
                attr(l, "y").parse().unwrap(),
                attr(l, "width").parse().unwrap(),
                attr(l, "height").parse().unwrap(),
            )
        })
        .collect()
}
