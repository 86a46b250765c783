use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tonebridge_core::backends::mock::mock_music_clip;
use tonebridge_core::testutil::{png_bytes, write_frame_dir};

fn tonebridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonebridge"))
        .args(args)
        .env_remove("TONEBRIDGE_LOG")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stages(trace: &Path) -> Vec<String> {
    let v: Value = serde_json::from_slice(&std::fs::read(trace).unwrap()).unwrap();
    v["stage_records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["stage"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn generate_writes_audio_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    std::fs::write(&input, png_bytes(4, 4, [10, 20, 30])).unwrap();
    let (wav, trace) = (dir.path().join("out.wav"), dir.path().join("trace.json"));
    let out = tonebridge(&[
        "generate",
        "--input",
        p(&input),
        "--out",
        p(&wav),
        "--trace",
        p(&trace),
        "--duration",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(&std::fs::read(&wav).unwrap()[..4], b"RIFF");
    assert_eq!(stages(&trace), ["caption", "bridge", "music"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("caption: mock caption "), "{stdout}");
    assert!(stdout.contains("music prompt: mock music prompt "), "{stdout}");
}

#[test]
fn frame_directory_samples_requested_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    write_frame_dir(&frames, 10);
    let trace = dir.path().join("t.json");
    let out = tonebridge(&[
        "generate",
        "--input",
        p(&frames),
        "--frames",
        "4",
        "--out",
        p(&dir.path().join("a.wav")),
        "--trace",
        p(&trace),
        "--duration",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stages(&trace),
        [
            "caption",
            "caption",
            "caption",
            "caption",
            "aggregate",
            "bridge",
            "music"
        ]
    );
}

#[test]
fn bypass_skips_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    std::fs::write(&input, png_bytes(3, 3, [1, 2, 3])).unwrap();
    let trace = dir.path().join("t.json");
    let out = tonebridge(&[
        "generate",
        "--input",
        p(&input),
        "--out",
        p(&dir.path().join("a.wav")),
        "--trace",
        p(&trace),
        "--duration",
        "0.5",
        "--bypass-bridge",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stages(&trace), ["caption", "music"]);
}

#[test]
fn missing_input_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, trace) = (dir.path().join("a.wav"), dir.path().join("t.json"));
    let out = tonebridge(&[
        "generate",
        "--input",
        p(&dir.path().join("nope.png")),
        "--out",
        p(&wav),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
    assert!(!wav.exists() && !trace.exists());
}

#[test]
fn unreachable_backend_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    std::fs::write(&input, png_bytes(2, 2, [9, 9, 9])).unwrap();
    let config = dir.path().join("c.toml");
    let mut text = String::from("[pipeline.retry]\ndelays_ms = []\n");
    for kind in ["llm", "music", "embedder", "classifier"] {
        text.push_str(&format!("\n[backends.{kind}]\nbase_url = \"mock://\"\n"));
    }
    std::fs::write(&config, text).unwrap();
    let (wav, trace) = (dir.path().join("a.wav"), dir.path().join("t.json"));
    let out = tonebridge(&[
        "generate",
        "--config",
        p(&config),
        "--backend",
        "captioner=http://127.0.0.1:1",
        "--input",
        p(&input),
        "--out",
        p(&wav),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("caption stage failed"), "{}", stderr(&out));
    assert!(!wav.exists() && !trace.exists());
}

fn manifest(dir: &Path, duplicate: bool) -> std::path::PathBuf {
    let mut lines = Vec::new();
    for i in 0..5 {
        let media = format!("img{i}.png");
        std::fs::write(dir.join(&media), png_bytes(2 + i, 2, [i as u8 * 30, 1, 2])).unwrap();
        let reference = format!("ref{i}.wav");
        std::fs::write(
            dir.join(&reference),
            mock_music_clip(&format!("ref {i}"), 0.1).to_wav_bytes(),
        )
        .unwrap();
        let mut generated = serde_json::Map::new();
        for s in ["plain", "bridged"] {
            let name = format!("{s}{i}.wav");
            std::fs::write(
                dir.join(&name),
                mock_music_clip(&format!("{s} {i}"), 0.1).to_wav_bytes(),
            )
            .unwrap();
            generated.insert(s.into(), name.into());
        }
        let id = if duplicate && i == 3 {
            "item-1".to_string()
        } else {
            format!("item-{i}")
        };
        lines.push(
            serde_json::json!({
                "id": id,
                "media_path": media,
                "media_type": "image",
                "reference_audio_path": reference,
                "generated_audio_paths": generated,
            })
            .to_string(),
        );
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();
    path
}

#[test]
fn eval_reports_requested_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), false);
    let out_base = dir.path().join("report");
    let out = tonebridge(&["eval", "--manifest", p(&m), "--out", p(&out_base)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let plain = &report["systems"]["plain"];
    for key in ["fad", "kl", "ib_rank"] {
        assert!(plain[key].is_number(), "{key} missing in {report}");
    }

    let out = tonebridge(&[
        "eval",
        "--manifest",
        p(&m),
        "--out",
        p(&dir.path().join("kl.json")),
        "--metrics",
        "kl",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("kl.json")).unwrap()).unwrap();
    let keys: Vec<&String> = report["systems"]["bridged"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["kl"]);
}

#[test]
fn eval_markdown_output() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), false);
    let out = tonebridge(&[
        "eval",
        "--manifest",
        p(&m),
        "--out",
        p(&dir.path().join("r.md")),
        "--format",
        "md",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let md = std::fs::read_to_string(dir.path().join("r.md")).unwrap();
    assert!(md.starts_with("| Model | FAD↓ | KL↓ | IB Rank↑ |"), "{md}");
    assert_eq!(md.lines().count(), 4);
    assert!(dir.path().join("r.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("| Model |"));
}

#[test]
fn eval_rejects_duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), true);
    let out = tonebridge(&["eval", "--manifest", p(&m), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 4") && err.contains("duplicate id `item-1`"), "{err}");
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn help_for_every_subcommand() {
    for sub in [
        vec!["--help"],
        vec!["generate", "--help"],
        vec!["eval", "--help"],
        vec!["serve", "--help"],
        vec!["mock-backends", "--help"],
    ] {
        let out = tonebridge(&sub);
        assert_eq!(out.status.code(), Some(0), "{sub:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub:?}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(tonebridge(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        tonebridge(&["eval", "--manifest", "m.jsonl", "--out", "r", "--format", "xml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tonebridge(&["generate", "--input", "x", "--out", "y", "--backend", "nokind"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn occupied_port_fails() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = tonebridge(&["mock-backends", "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot listen"), "{}", stderr(&out));
}
