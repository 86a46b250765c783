use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use tonebridge_core::backends::mock::{mock_embedding, mock_music_clip};
use tonebridge_core::backends::{BackendError, BackendErrorKind, Backends, EmbedModality, Embedder, RetryPolicy};
use tonebridge_core::eval::{
    format_embedding_file, load_embedding_file, parse_metrics, run_eval, EvalError, EvalManifest, EvalSources, Metric,
    PrecomputedEmbeddings,
};
use tonebridge_core::metrics::EmbeddingVector;
use tonebridge_core::report::{emit_report, ReportFormat};
use tonebridge_core::templates::TemplateStore;
use tonebridge_core::testutil::{png_bytes, write_frame_dir};

const SYSTEMS: [&str; 3] = ["base", "bridged", "direct"];

fn corpus(dir: &Path, items: usize) -> EvalManifest {
    let mut lines = Vec::new();
    for i in 0..items {
        let (media, kind) = if i % 3 == 2 {
            let d = dir.join(format!("clip{i}"));
            write_frame_dir(&d, 3 + i);
            (format!("clip{i}"), "video")
        } else {
            let name = format!("img{i}.png");
            std::fs::write(dir.join(&name), png_bytes(2 + i as u32, 2, [i as u8 * 20, 40, 200])).unwrap();
            (name, "image")
        };
        let reference = format!("ref{i}.wav");
        std::fs::write(
            dir.join(&reference),
            mock_music_clip(&format!("reference {i}"), 0.1).to_wav_bytes(),
        )
        .unwrap();
        let mut generated = serde_json::Map::new();
        for s in SYSTEMS {
            let name = format!("{s}{i}.wav");
            std::fs::write(
                dir.join(&name),
                mock_music_clip(&format!("{s} {i}"), 0.1).to_wav_bytes(),
            )
            .unwrap();
            generated.insert(s.to_string(), name.into());
        }
        lines.push(
            serde_json::json!({
                "id": format!("item-{i}"),
                "media_path": media,
                "media_type": kind,
                "reference_audio_path": reference,
                "generated_audio_paths": generated,
            })
            .to_string(),
        );
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    EvalManifest::load(&path).unwrap()
}

fn mock_sources() -> EvalSources {
    let b = Backends::all_mock(TemplateStore::builtin());
    EvalSources {
        embedder: b.embedder,
        classifier: b.classifier,
        ..Default::default()
    }
}

#[test]
fn all_metrics_under_mocks() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 7);
    let metrics = parse_metrics("fad,kl,ibrank").unwrap();
    let report = run_eval(&manifest, &metrics, &mock_sources()).unwrap();
    assert_eq!(report.item_count, 7);
    assert_eq!(report.systems.len(), 3);
    let mut ib_sum = 0.0;
    for scores in report.systems.values() {
        assert!(scores.fad.unwrap().is_finite() && scores.fad.unwrap() >= 0.0);
        assert!(scores.kl.unwrap().is_finite() && scores.kl.unwrap() >= 0.0);
        ib_sum += scores.ib_rank.unwrap();
    }
    assert!((ib_sum - 1.5).abs() < 1e-12, "{ib_sum}");
    assert!(report.metadata["kl"].contains("KL(reference || generated)"));
    assert!(report.metadata["ib_rank"].starts_with("v1"));

    let again = run_eval(&manifest, &metrics, &mock_sources()).unwrap();
    assert_eq!(report.to_canonical_json(), again.to_canonical_json());
    let md = emit_report(&report, ReportFormat::Markdown);
    assert_eq!(md.lines().count(), 5);
}

#[test]
fn kl_only_omits_other_fields() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 3);
    let report = run_eval(&manifest, &BTreeSet::from([Metric::Kl]), &mock_sources()).unwrap();
    let json = report.to_canonical_json();
    assert!(json.contains("\"kl\""));
    assert!(!json.contains("\"fad\""));
    assert!(!json.contains("\"ib_rank\""));
    let md = emit_report(&report, ReportFormat::Markdown);
    assert!(md.starts_with("| Model | KL↓ |\n"));
}

#[test]
fn precomputed_embeddings_match_live_embedder() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 4);
    let audio = |p: &Path| mock_embedding(&std::fs::read(p).unwrap());
    let reference: Vec<EmbeddingVector> = manifest.items.iter().map(|i| audio(&i.reference_audio_path)).collect();
    std::fs::write(dir.path().join("ref.emb"), format_embedding_file(&reference)).unwrap();
    let mut pre = PrecomputedEmbeddings {
        reference: Some(load_embedding_file(&dir.path().join("ref.emb")).unwrap()),
        ..Default::default()
    };
    for s in SYSTEMS {
        let v = manifest
            .items
            .iter()
            .map(|i| audio(&i.generated_audio_paths[s]))
            .collect();
        pre.generated.insert(s.to_string(), v);
    }
    let metrics = BTreeSet::from([Metric::Fad]);
    let live = run_eval(&manifest, &metrics, &mock_sources()).unwrap();
    let offline = run_eval(
        &manifest,
        &metrics,
        &EvalSources {
            precomputed: pre,
            ..Default::default()
        },
    )
    .unwrap();
    for s in SYSTEMS {
        let (a, b) = (live.systems[s].fad.unwrap(), offline.systems[s].fad.unwrap());
        assert!((a - b).abs() < 1e-9 * a.max(1.0), "{s}: {a} vs {b}");
    }
}

#[test]
fn misaligned_precomputed_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 3);
    let sources = EvalSources {
        precomputed: PrecomputedEmbeddings {
            reference: Some(vec![mock_embedding(b"x")]),
            ..Default::default()
        },
        ..mock_sources()
    };
    let err = run_eval(&manifest, &BTreeSet::from([Metric::Fad]), &sources).unwrap_err();
    assert!(err.to_string().contains("1 vectors for 3 manifest items"), "{err}");
}

struct FailsOn(Vec<u8>);

impl Embedder for FailsOn {
    fn backend_id(&self) -> String {
        "failing".to_string()
    }

    fn embed(&self, _: EmbedModality, payload: &[u8]) -> Result<EmbeddingVector, BackendError> {
        if payload == self.0 {
            Err(BackendError::new(BackendErrorKind::HttpStatus, "boom"))
        } else {
            Ok(mock_embedding(payload))
        }
    }
}

#[test]
fn backend_errors_name_the_item() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 4);
    let poisoned = std::fs::read(&manifest.items[1].generated_audio_paths["direct"]).unwrap();
    let sources = EvalSources {
        embedder: Some(Arc::new(FailsOn(poisoned))),
        retry: RetryPolicy::none(),
        ..Default::default()
    };
    let err = run_eval(&manifest, &BTreeSet::from([Metric::Fad]), &sources).unwrap_err();
    assert!(
        matches!(&err, EvalError::Backend { item, .. } if item == "item-1"),
        "{err}"
    );
}

#[test]
fn ib_rank_needs_two_systems() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.png"), png_bytes(1, 1, [0, 0, 0])).unwrap();
    std::fs::write(dir.path().join("r.wav"), mock_music_clip("r", 0.1).to_wav_bytes()).unwrap();
    let line = r#"{"id":"a","media_path":"a.png","media_type":"image","reference_audio_path":"r.wav","generated_audio_paths":{"only":"r.wav"}}"#;
    let manifest = EvalManifest::parse(line, dir.path()).unwrap();
    let err = run_eval(&manifest, &BTreeSet::from([Metric::IbRank]), &mock_sources()).unwrap_err();
    assert!(err.to_string().contains("at least 2"));
}

#[test]
fn missing_classifier_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2);
    let sources = EvalSources {
        classifier: None,
        ..mock_sources()
    };
    let err = run_eval(&manifest, &BTreeSet::from([Metric::Kl]), &sources).unwrap_err();
    assert!(err.to_string().contains("classifier"));
}
