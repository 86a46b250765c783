use std::path::{Path, PathBuf};

use tonebridge_core::backends::BackendKind;
use tonebridge_core::eval::{
    load_embedding_file, parse_metrics, run_eval, EvalManifest, EvalSources, Metric, PrecomputedEmbeddings,
};
use tonebridge_core::report::{emit_report, ReportFormat};

use crate::settings::{build, resolve, EvalArgs};
use crate::Failure;

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    let metrics = parse_metrics(&args.metrics).map_err(Failure)?;
    let format: ReportFormat = args.format.parse().map_err(Failure)?;
    let manifest = EvalManifest::load(&args.manifest)?;

    let mut precomputed = PrecomputedEmbeddings::default();
    if let Some(p) = &args.reference_embeddings {
        precomputed.reference = Some(load_embedding_file(p)?);
    }
    if let Some(p) = &args.media_embeddings {
        precomputed.media = Some(load_embedding_file(p)?);
    }
    for entry in &args.generated_embeddings {
        let (system, path) = entry
            .split_once('=')
            .ok_or_else(|| Failure(format!("--generated-embeddings expects SYSTEM=PATH, got `{entry}`")))?;
        precomputed
            .generated
            .insert(system.to_string(), load_embedding_file(Path::new(path))?);
    }

    let systems = manifest.systems();
    let mut required = Vec::new();
    let needs_audio = metrics.contains(&Metric::Fad)
        && (precomputed.reference.is_none() || systems.iter().any(|s| !precomputed.generated.contains_key(s)));
    let needs_media = metrics.contains(&Metric::IbRank)
        && (precomputed.media.is_none() || systems.iter().any(|s| !precomputed.generated.contains_key(s)));
    if needs_audio || needs_media {
        required.push(BackendKind::Embedder);
    }
    if metrics.contains(&Metric::Kl) {
        required.push(BackendKind::Classifier);
    }
    let config = resolve(&args.backend)?;
    let (_, backends) = build(&config, &required)?;
    let sources = EvalSources {
        embedder: backends.embedder.clone(),
        classifier: backends.classifier.clone(),
        precomputed,
        retry: config.pipeline.retry.clone(),
    };
    let report = run_eval(&manifest, &metrics, &sources)?;

    let base = strip_report_extension(&args.out);
    let json_path = base.with_extension("json");
    std::fs::write(&json_path, emit_report(&report, ReportFormat::Json))
        .map_err(|e| Failure(format!("cannot write {}: {e}", json_path.display())))?;
    println!("wrote {}", json_path.display());
    if format == ReportFormat::Markdown {
        let md_path = base.with_extension("md");
        let table = emit_report(&report, ReportFormat::Markdown);
        std::fs::write(&md_path, &table).map_err(|e| Failure(format!("cannot write {}: {e}", md_path.display())))?;
        println!("wrote {}", md_path.display());
        print!("{table}");
    }
    Ok(())
}

fn strip_report_extension(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json" | "md") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}
