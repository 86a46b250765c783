//! Thin wasm-bindgen layer over the core metrics and prompt templates.
//!
//! Every export takes and returns JSON strings so the page needs no glue
//! beyond `wasm-bindgen --target web`. The `*_json` functions hold the logic
//! and are plain Rust, so they are tested natively.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use tonebridge_core::bridge::{enforce_length, render_bridge_messages, Modality, MAX_PROMPT_CHARS};
use tonebridge_core::captioning::Caption;
use tonebridge_core::eval::{EvalReport, Metric, SystemScores};
use tonebridge_core::metrics::{frechet_distance, ib_rank, GaussianStats};
use tonebridge_core::report::markdown_table;
use tonebridge_core::templates::TemplateStore;

#[derive(Deserialize)]
struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

#[derive(Deserialize)]
struct FadRequest {
    a: DiagonalGaussian,
    b: DiagonalGaussian,
}

#[derive(Deserialize)]
struct RankRequest {
    systems: Vec<String>,
    items: Vec<BTreeMap<String, f64>>,
}

#[derive(Deserialize)]
struct PreviewRequest {
    caption: String,
    #[serde(default)]
    video: bool,
    #[serde(default)]
    user_prompt: Option<String>,
}

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

fn stats(g: &DiagonalGaussian) -> Result<GaussianStats, String> {
    if g.mean.len() != g.variance.len() {
        return Err(format!(
            "mean has {} entries, variance {}",
            g.mean.len(),
            g.variance.len()
        ));
    }
    let cov = DMatrix::from_diagonal(&DVector::from_vec(g.variance.clone()));
    GaussianStats::from_moments(DVector::from_vec(g.mean.clone()), cov).map_err(|e| e.to_string())
}

/// `{"a": {"mean": [..], "variance": [..]}, "b": {..}}` -> `{"fad": x}`.
pub fn frechet_json(request: &str) -> String {
    let run = || -> Result<Value, String> {
        let req: FadRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
        let d = frechet_distance(&stats(&req.a)?, &stats(&req.b)?).map_err(|e| e.to_string())?;
        Ok(json!({ "fad": d }))
    };
    run().map(|v| v.to_string()).unwrap_or_else(error)
}

/// `{"systems": [..], "items": [{"sys": sim, ..}, ..]}` -> scores and a markdown table.
pub fn ib_rank_json(request: &str) -> String {
    let run = || -> Result<Value, String> {
        let req: RankRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
        let scores = ib_rank(&req.systems, &req.items).map_err(|e| e.to_string())?;
        let report = EvalReport {
            systems: scores
                .iter()
                .map(|(name, s)| {
                    let row = SystemScores {
                        ib_rank: Some(*s),
                        ..Default::default()
                    };
                    (name.clone(), row)
                })
                .collect(),
            item_count: req.items.len(),
            metrics: vec![Metric::IbRank],
            config_digest: String::new(),
            metadata: BTreeMap::new(),
        };
        Ok(json!({ "scores": scores, "table": markdown_table(&report) }))
    };
    run().map(|v| v.to_string()).unwrap_or_else(error)
}

/// Chat messages the bridge stage would send for a caption.
pub fn bridge_preview_json(request: &str) -> String {
    let run = || -> Result<Value, String> {
        let req: PreviewRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
        let caption = Caption::image(&req.caption).map_err(|e| e.to_string())?;
        let modality = if req.video { Modality::Video } else { Modality::Image };
        let messages = render_bridge_messages(
            &TemplateStore::builtin(),
            &caption,
            req.user_prompt.as_deref().filter(|p| !p.trim().is_empty()),
            modality,
        );
        Ok(json!({ "messages": messages }))
    };
    run().map(|v| v.to_string()).unwrap_or_else(error)
}

pub fn enforce_length_json(text: &str) -> String {
    let (text, truncated) = enforce_length(text, MAX_PROMPT_CHARS);
    json!({ "text": text, "truncated": truncated, "chars": text.chars().count() }).to_string()
}

#[wasm_bindgen]
pub fn frechet(request: &str) -> String {
    frechet_json(request)
}

#[wasm_bindgen]
pub fn rank_table(request: &str) -> String {
    ib_rank_json(request)
}

#[wasm_bindgen]
pub fn bridge_preview(request: &str) -> String {
    bridge_preview_json(request)
}

#[wasm_bindgen]
pub fn clip_prompt(text: &str) -> String {
    enforce_length_json(text)
}
