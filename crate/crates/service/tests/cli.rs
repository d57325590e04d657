mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use common::{completion, dog_layout};
use pni_core::{parse_layout, serialize_layout, BoundingBox, Layout};
use serde_json::Value;

const PAPER_MOVE: &str = "move {x: 150, y: 400, width: 100, height: 100} to {x: 144, y: 132}";

fn pni() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pni"));
    cmd.env_remove("PNI_CONFIG").env_remove("PNI_LLM_STUB").env_remove("PNI_LLM_API_KEY");
    cmd
}

fn scene() -> Layout {
    parse_layout(
        r#"{"canvas": {"width": 512, "height": 512}, "background": "a beach at noon", "objects": [
            {"id": 0, "caption": "a sandcastle", "box": {"x": 150, "y": 400, "width": 100, "height": 100}},
            {"id": 1, "caption": "a seagull", "box": {"x": 300, "y": 60, "width": 60, "height": 40}}]}"#,
    )
    .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn edit_literal_move_with_render() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let out_path = dir.path().join("out.json");
    let out = pni()
        .args(["edit", input.to_str().unwrap(), PAPER_MOVE, "--engine", "oracle", "--render", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let written = std::fs::read_to_string(&out_path).unwrap();
    let layout = parse_layout(&written).unwrap();
    assert_eq!(written, serialize_layout(&layout));
    assert_eq!(layout.objects[0].bbox, BoundingBox::new(94, 82, 100, 100));
    assert_eq!(layout.objects[1], scene().objects[1]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["validation"]["ok"], true);
    let svg = std::fs::read_to_string(dir.path().join("out.svg")).unwrap();
    assert!(svg.contains("x=\"94\" y=\"82\" width=\"100\" height=\"100\""));
}

#[test]
fn edit_with_stub_llm() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "dog.json", &serialize_layout(&dog_layout()));
    let mut black = dog_layout();
    black.objects[0].caption = "a black dog".into();
    let script = write(dir.path(), "stub.json", &serde_json::to_string(&vec![completion(&black)]).unwrap());
    let out = pni()
        .env("PNI_LLM_STUB", &script)
        .args(["--json", "edit", input.to_str().unwrap(), "make the dog in {x: 100, y: 200, width: 120, height: 90} black", "--engine", "llm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["engine"], "llm");
    assert_eq!(pni_core::layout_from_value(&v["layout"]).unwrap(), black);
}

#[test]
fn malformed_literal_exits_one_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let out = pni()
        .args(["edit", input.to_str().unwrap(), "move {x: 150, y: oops} to {x: 1, y: 1}"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert!(err["error"]["message"].as_str().unwrap().contains("at byte"), "{err}");
}

#[test]
fn edit_without_llm_is_config_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let out = pni().args(["edit", input.to_str().unwrap(), "make it sunset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["code"], "config");
}

#[test]
fn replay_scripts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let three = write(
        dir.path(),
        "three.txt",
        &format!(
            "# three oracle steps\nlayout scene.json\nedit {PAPER_MOVE}\nedit recaption {{x: 300, y: 60, width: 60, height: 40}} to a pelican\nedit add a beach ball at {{x: 400, y: 400}}\n"
        ),
    );
    let out = pni().args(["replay", three.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["summary"]["ok"], 3);
    assert_eq!(lines[3]["summary"]["failed"], 0);
    let last = pni_core::layout_from_value(&lines[2]["layout"]).unwrap();
    assert_eq!(last.objects.len(), 3);
    assert_eq!(last.objects[1].caption, "a pelican");

    let mixed = write(
        dir.path(),
        "mixed.txt",
        &format!("layout scene.json\nedit {PAPER_MOVE}\nedit make the sky stormy\nedit delete {{x: 300, y: 60, width: 60, height: 40}}\n"),
    );
    let prose = write(dir.path(), "prose.json", r#"{"completions": ["I am not sure."], "on_exhausted": "repeat_last"}"#);
    let out = pni().env("PNI_LLM_STUB", &prose).args(["replay", mixed.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let summary: Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(summary["summary"]["ok"], 2);
    assert_eq!(summary["summary"]["failed"], 1);

    let empty = write(dir.path(), "empty.txt", "");
    let out = pni().args(["replay", empty.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["message"], "invalid request: no layout line");
}

#[test]
fn replay_aborts_on_hard_error_with_step() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let script = write(dir.path(), "s.txt", &format!("layout scene.json\nedit {PAPER_MOVE}\nedit make it pretty\n"));
    let exhausted = write(dir.path(), "x.json", r#"{"completions": [], "on_exhausted": "error"}"#);
    let out = pni().env("PNI_LLM_STUB", &exhausted).args(["replay", script.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["code"], "llm-config");

    let once = write(dir.path(), "once.json", &serde_json::to_string(&vec!["prose"]).unwrap());
    let out = pni().env("PNI_LLM_STUB", &once).args(["replay", script.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["code"], "llm-stub-exhausted");
    assert_eq!(err["error"]["step"], 2);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", &serialize_layout(&scene()));
    let out = pni().args(["validate", good.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["ok"], true);

    let dup = write(
        dir.path(),
        "dup.json",
        r#"{"canvas": {"width": 64, "height": 64}, "background": "x", "objects": [
            {"id": 3, "caption": "a", "box": {"x": 0, "y": 0, "width": 5, "height": 5}},
            {"id": 3, "caption": "b", "box": {"x": 9, "y": 9, "width": 5, "height": 5}}]}"#,
    );
    let out = pni().args(["validate", dup.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("duplicate id 3"));

    let out = pni().args(["validate", dir.path().join("missing.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_command_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let svg = dir.path().join("scene.svg");
    let out = pni().args(["render", input.to_str().unwrap(), "--out"]).arg(&svg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&svg).unwrap(), pni_core::render::render_mock(&scene()).bytes);
}

struct Served(std::process::Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(args: &[&str], data_dir: &Path) -> (Served, String) {
    let mut child = pni()
        .arg("serve")
        .args(args)
        .arg("--data-dir")
        .arg(data_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected: {line:?}")).to_string();
    (Served(child), addr)
}

#[test]
fn serve_answers_health_and_reports_port_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let (_child, addr) = serve(&["--bind", "127.0.0.1:0"], dir.path());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let body: Value = rt.block_on(async {
        let text = reqwest::get(format!("http://{addr}/v1/health")).await.unwrap().text().await.unwrap();
        serde_json::from_str(&text).unwrap()
    });
    assert_eq!(body["status"], "ok");

    let out = pni()
        .args(["serve", "--bind", &addr, "--data-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("cannot bind"));
}

#[test]
fn serve_with_missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pni.json", r#"{"prompting": {"corpus_path": "nowhere/corpus.json"}}"#);
    let mut child = pni()
        .env("PNI_CONFIG", &cfg)
        .args(["serve", "--bind", "127.0.0.1:0"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(20);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(std::time::Instant::now() < deadline, "serve did not exit");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(status.code(), Some(2));
    let mut err = String::new();
    std::io::Read::read_to_string(&mut child.stderr.take().unwrap(), &mut err).unwrap();
    assert!(err.contains("nowhere/corpus.json"), "{err}");
}

#[test]
fn cli_and_service_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "scene.json", &serialize_layout(&scene()));
    let instruction = "recaption {x: 300, y: 60, width: 60, height: 40} to a pelican";
    let out = pni().args(["--json", "edit", input.to_str().unwrap(), instruction]).output().unwrap();
    let cli: Value = serde_json::from_slice(&out.stdout).unwrap();

    let (_child, addr) = serve(&["--bind", "127.0.0.1:0"], &dir.path().join("data"));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let service: Value = rt.block_on(async {
        let c = reqwest::Client::new();
        let created: Value = serde_json::from_str(
            &c.post(format!("http://{addr}/v1/sessions"))
                .body(serde_json::json!({ "layout": serialize_layout(&scene()) }).to_string())
                .send()
                .await
                .unwrap()
                .text()
                .await
                .unwrap(),
        )
        .unwrap();
        let id = created["session_id"].as_str().unwrap();
        let text = c
            .post(format!("http://{addr}/v1/sessions/{id}/instructions"))
            .body(serde_json::json!({ "text": instruction }).to_string())
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        serde_json::from_str(&text).unwrap()
    });
    assert_eq!(cli["layout"], service["layout"]);
    assert_eq!(cli["validation"], service["validation"]);
}
