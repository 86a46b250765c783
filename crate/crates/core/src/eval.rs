//! Manifest-driven evaluation: FAD between pooled reference and generated
//! audio embeddings, mean per-pair KL between classifier label
//! distributions, and IB Rank from visual-to-audio cosine similarities.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Classifier, EmbedModality, Embedder, RetryPolicy, Retrying};
use crate::canonical;
use crate::captioning::{DirectoryFrameSource, FrameSource};
use crate::digest::sha256_hex;
use crate::metrics::{
    cosine_similarity, fit_gaussian, frechet_distance, ib_rank, kl_divergence, EmbeddingVector, LabelDistribution,
    MetricError,
};
use crate::trace::MediaKind;

pub const IB_RANK_FORMULA: &str =
    "v1: mean over items of (K - rank) / (K - 1), rank by cosine similarity descending, ties share their average rank";
pub const KL_DEFINITION: &str = "KL(reference || generated), natural log, epsilon 1e-10 smoothing";
pub const FAD_DEFINITION: &str =
    "Frechet distance between Gaussians fit to pooled reference and pooled generated audio embeddings";

/// Worker threads used for per-item backend calls.
const PARALLELISM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fad,
    Kl,
    IbRank,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Fad, Metric::Kl, Metric::IbRank];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Fad => "fad",
            Metric::Kl => "kl",
            Metric::IbRank => "ibrank",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "fad" => Ok(Metric::Fad),
            "kl" => Ok(Metric::Kl),
            "ibrank" => Ok(Metric::IbRank),
            other => Err(format!("unknown metric `{other}` (expected fad, kl or ibrank)")),
        }
    }
}

/// Parses a comma-separated metric list such as `fad,kl,ibrank`.
pub fn parse_metrics(list: &str) -> Result<BTreeSet<Metric>, String> {
    let metrics: BTreeSet<Metric> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if metrics.is_empty() {
        return Err("no metrics requested".to_string());
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub media_path: PathBuf,
    pub media_type: MediaKind,
    pub reference_audio_path: PathBuf,
    pub generated_audio_paths: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalManifest {
    pub items: Vec<ManifestItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineProblem {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest:\n{}", .0.iter().map(|p| format!("  line {}: {}", p.line, p.message)).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<LineProblem>),
}

impl EvalManifest {
    /// Loads a JSONL manifest. Relative paths resolve against the manifest's
    /// directory. All problems are collected before failing.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let mut problems = Vec::new();
        let mut items: Vec<(usize, ManifestItem)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ManifestItem>(line) {
                Ok(mut item) => {
                    let resolve = |p: &Path| {
                        if p.is_relative() {
                            base_dir.join(p)
                        } else {
                            p.to_path_buf()
                        }
                    };
                    item.media_path = resolve(&item.media_path);
                    item.reference_audio_path = resolve(&item.reference_audio_path);
                    for p in item.generated_audio_paths.values_mut() {
                        *p = resolve(p);
                    }
                    items.push((line_no, item));
                }
                Err(e) => problems.push(LineProblem {
                    line: line_no,
                    message: e.to_string(),
                }),
            }
        }
        let systems: BTreeSet<&String> = items.iter().flat_map(|(_, i)| i.generated_audio_paths.keys()).collect();
        let mut seen = HashSet::new();
        for (line, item) in &items {
            let mut problem = |message: String| {
                problems.push(LineProblem { line: *line, message });
            };
            if item.id.trim().is_empty() {
                problem("empty id".to_string());
            }
            if !seen.insert(item.id.as_str()) {
                problem(format!("duplicate id `{}`", item.id));
            }
            for system in &systems {
                if !item.generated_audio_paths.contains_key(*system) {
                    problem(format!(
                        "item `{}` has no generated audio for system `{system}`",
                        item.id
                    ));
                }
            }
            let paths = std::iter::once(("media", &item.media_path))
                .chain(std::iter::once(("reference audio", &item.reference_audio_path)))
                .chain(item.generated_audio_paths.iter().map(|(s, p)| (s.as_str(), p)));
            for (what, p) in paths {
                if !p.exists() {
                    problem(format!(
                        "item `{}`: {what} path {} does not exist",
                        item.id,
                        p.display()
                    ));
                }
            }
        }
        if items.is_empty() && problems.is_empty() {
            problems.push(LineProblem {
                line: 0,
                message: "manifest has no items".to_string(),
            });
        }
        if !problems.is_empty() {
            problems.sort_by_key(|p| p.line);
            return Err(ManifestError::Invalid(problems));
        }
        Ok(Self {
            items: items.into_iter().map(|(_, i)| i).collect(),
        })
    }

    pub fn systems(&self) -> Vec<String> {
        self.items
            .iter()
            .flat_map(|i| i.generated_audio_paths.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

/// Reads a precomputed-embedding file: a `dim=<d>` header, then one
/// whitespace-separated vector per line.
pub fn load_embedding_file(path: &Path) -> Result<Vec<EmbeddingVector>, EmbeddingFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| EmbeddingFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embedding_file(&text).map_err(|(line, message)| EmbeddingFileError::Parse {
        path: path.display().to_string(),
        line,
        message,
    })
}

pub fn parse_embedding_file(text: &str) -> Result<Vec<EmbeddingVector>, (usize, String)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or((1, "missing `dim=<d>` header".to_string()))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|d| *d > 0)
        .ok_or((1, format!("bad header `{}`, expected `dim=<d>`", header.trim())))?;
    lines
        .map(|(n, line)| {
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| (n + 1, format!("`{v}`: {e}"))))
                .collect::<Result<_, _>>()?;
            if values.len() != dim {
                return Err((n + 1, format!("expected {dim} values, found {}", values.len())));
            }
            EmbeddingVector::new(values).map_err(|e| (n + 1, e.to_string()))
        })
        .collect()
}

pub fn format_embedding_file(vectors: &[EmbeddingVector]) -> String {
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    let mut out = format!("dim={dim}\n");
    for v in vectors {
        let line: Vec<String> = v.values().iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Embeddings supplied offline, aligned with manifest order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedEmbeddings {
    pub reference: Option<Vec<EmbeddingVector>>,
    pub media: Option<Vec<EmbeddingVector>>,
    pub generated: BTreeMap<String, Vec<EmbeddingVector>>,
}

#[derive(Clone, Default)]
pub struct EvalSources {
    pub embedder: Option<Arc<dyn Embedder>>,
    pub classifier: Option<Arc<dyn Classifier>>,
    pub precomputed: PrecomputedEmbeddings,
    pub retry: RetryPolicy,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("item `{item}`: {source}")]
    Backend {
        item: String,
        #[source]
        source: BackendError,
    },
    #[error("item `{item}`: cannot read {path}: {source}")]
    Io {
        item: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("item `{item}`: {detail}")]
    Media { item: String, detail: String },
    #[error("{context}: {source}")]
    Metric {
        context: String,
        #[source]
        source: MetricError,
    },
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ib_rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub systems: BTreeMap<String, SystemScores>,
    pub item_count: usize,
    pub metrics: Vec<Metric>,
    pub config_digest: String,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_canonical_json(&self) -> String {
        canonical::to_canonical_string(self).expect("report serializes")
    }

    /// Checks score ranges: non-negative FAD and KL, IB Rank within [0, 1].
    pub fn validate(&self) -> Result<(), String> {
        for (name, s) in &self.systems {
            let bad = |what: &str, v: f64| Err(format!("system `{name}`: {what} = {v}"));
            if let Some(v) = s.fad.filter(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("fad", v);
            }
            if let Some(v) = s.kl.filter(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("kl", v);
            }
            if let Some(v) = s.ib_rank.filter(|v| !(0.0..=1.0).contains(v)) {
                return bad("ib_rank", v);
            }
        }
        Ok(())
    }
}

fn read(item: &ManifestItem, path: &Path) -> Result<Vec<u8>, EvalError> {
    std::fs::read(path).map_err(|source| EvalError::Io {
        item: item.id.clone(),
        path: path.display().to_string(),
        source,
    })
}

fn media_payload(item: &ManifestItem) -> Result<(EmbedModality, Vec<u8>), EvalError> {
    match item.media_type {
        MediaKind::Image => Ok((EmbedModality::Image, read(item, &item.media_path)?)),
        MediaKind::Video if item.media_path.is_dir() => {
            let media = |e: crate::PipelineError| EvalError::Media {
                item: item.id.clone(),
                detail: e.to_string(),
            };
            let source = DirectoryFrameSource::open(&item.media_path).map_err(media)?;
            let mut bytes = Vec::new();
            for i in 0..source.frame_count().map_err(media)? {
                bytes.extend(source.read_frame(i).map_err(media)?);
            }
            Ok((EmbedModality::Video, bytes))
        }
        MediaKind::Video => Ok((EmbedModality::Video, read(item, &item.media_path)?)),
    }
}

/// Per-item quantities gathered from backends (or precomputed files).
#[derive(Debug, Default)]
struct ItemData {
    reference_embedding: Option<EmbeddingVector>,
    media_embedding: Option<EmbeddingVector>,
    generated_embeddings: BTreeMap<String, EmbeddingVector>,
    reference_labels: Option<LabelDistribution>,
    generated_labels: BTreeMap<String, LabelDistribution>,
}

struct Needs {
    reference_embedding: bool,
    media_embedding: bool,
    generated_embeddings: bool,
    labels: bool,
}

fn gather_item(item: &ManifestItem, needs: &Needs, sources: &EvalSources) -> Result<ItemData, EvalError> {
    let backend = |source: BackendError| EvalError::Backend {
        item: item.id.clone(),
        source,
    };
    let mut data = ItemData::default();
    let embedder = sources.embedder.as_deref().map(|e| Retrying::new(e, &sources.retry));
    let classifier = sources.classifier.as_deref().map(|c| Retrying::new(c, &sources.retry));
    let need_embedder = || EvalError::Setup("an embedder backend or precomputed embeddings are required".to_string());

    if needs.reference_embedding || needs.labels {
        let reference = read(item, &item.reference_audio_path)?;
        if needs.reference_embedding {
            let e = embedder.as_ref().ok_or_else(need_embedder)?;
            data.reference_embedding = Some(e.embed(EmbedModality::Audio, &reference).map_err(backend)?);
        }
        if needs.labels {
            let c = classifier
                .as_ref()
                .ok_or_else(|| EvalError::Setup("KL needs a classifier backend".to_string()))?;
            data.reference_labels = Some(c.classify(&reference).map_err(backend)?);
        }
    }
    if needs.media_embedding {
        let e = embedder.as_ref().ok_or_else(need_embedder)?;
        let (modality, payload) = media_payload(item)?;
        data.media_embedding = Some(e.embed(modality, &payload).map_err(backend)?);
    }
    for (system, path) in &item.generated_audio_paths {
        let needs_embedding = needs.generated_embeddings && !sources.precomputed.generated.contains_key(system);
        if !(needs_embedding || needs.labels) {
            continue;
        }
        let audio = read(item, path)?;
        if needs_embedding {
            let e = embedder.as_ref().ok_or_else(need_embedder)?;
            data.generated_embeddings
                .insert(system.clone(), e.embed(EmbedModality::Audio, &audio).map_err(backend)?);
        }
        if needs.labels {
            let c = classifier
                .as_ref()
                .ok_or_else(|| EvalError::Setup("KL needs a classifier backend".to_string()))?;
            data.generated_labels
                .insert(system.clone(), c.classify(&audio).map_err(backend)?);
        }
    }
    Ok(data)
}

/// Runs `work` over items on a small thread pool; results keep item order.
fn gather_all(manifest: &EvalManifest, needs: &Needs, sources: &EvalSources) -> Result<Vec<ItemData>, EvalError> {
    let chunk = manifest.items.len().div_ceil(PARALLELISM).max(1);
    let chunks: Vec<Result<Vec<ItemData>, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = manifest
            .items
            .chunks(chunk)
            .map(|items| scope.spawn(move || items.iter().map(|i| gather_item(i, needs, sources)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("eval worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(manifest.items.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn aligned(role: &str, vectors: &[EmbeddingVector], expected: usize) -> Result<(), EvalError> {
    if vectors.len() != expected {
        return Err(EvalError::Setup(format!(
            "precomputed {role} embeddings: {} vectors for {expected} manifest items",
            vectors.len()
        )));
    }
    Ok(())
}

pub fn run_eval(
    manifest: &EvalManifest,
    metrics: &BTreeSet<Metric>,
    sources: &EvalSources,
) -> Result<EvalReport, EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Setup("no metrics requested".to_string()));
    }
    let systems = manifest.systems();
    if systems.is_empty() {
        return Err(EvalError::Setup("manifest names no generated systems".to_string()));
    }
    if metrics.contains(&Metric::IbRank) && systems.len() < 2 {
        return Err(EvalError::Setup(format!(
            "IB Rank ranks systems against each other and needs at least 2, manifest has {}",
            systems.len()
        )));
    }
    let n = manifest.items.len();
    let pre = &sources.precomputed;
    for (role, vectors) in [("reference", &pre.reference), ("media", &pre.media)] {
        if let Some(v) = vectors {
            aligned(role, v, n)?;
        }
    }
    for (system, v) in &pre.generated {
        if !systems.contains(system) {
            return Err(EvalError::Setup(format!(
                "precomputed embeddings for unknown system `{system}`"
            )));
        }
        aligned(system, v, n)?;
    }

    let fad = metrics.contains(&Metric::Fad);
    let ib = metrics.contains(&Metric::IbRank);
    let needs = Needs {
        reference_embedding: fad && pre.reference.is_none(),
        media_embedding: ib && pre.media.is_none(),
        generated_embeddings: fad || ib,
        labels: metrics.contains(&Metric::Kl),
    };
    let data = gather_all(manifest, &needs, sources)?;

    let generated = |system: &str, i: usize| -> &EmbeddingVector {
        match pre.generated.get(system) {
            Some(v) => &v[i],
            None => &data[i].generated_embeddings[system],
        }
    };
    let mut scores: BTreeMap<String, SystemScores> =
        systems.iter().map(|s| (s.clone(), SystemScores::default())).collect();
    let metric_err = |context: String| move |source: MetricError| EvalError::Metric { context, source };

    if fad {
        let reference: Vec<EmbeddingVector> = match &pre.reference {
            Some(v) => v.clone(),
            None => data
                .iter()
                .map(|d| d.reference_embedding.clone().expect("gathered"))
                .collect(),
        };
        let reference_stats = fit_gaussian(&reference).map_err(metric_err("reference embeddings".to_string()))?;
        for system in &systems {
            let set: Vec<EmbeddingVector> = (0..n).map(|i| generated(system, i).clone()).collect();
            let stats = fit_gaussian(&set).map_err(metric_err(format!("system `{system}` embeddings")))?;
            let value =
                frechet_distance(&reference_stats, &stats).map_err(metric_err(format!("system `{system}` FAD")))?;
            scores.get_mut(system).expect("known").fad = Some(value);
        }
    }
    if metrics.contains(&Metric::Kl) {
        for system in &systems {
            let mut total = 0.0;
            for (item, d) in manifest.items.iter().zip(&data) {
                let p = d.reference_labels.as_ref().expect("gathered");
                let q = &d.generated_labels[system];
                total += kl_divergence(p, q).map_err(metric_err(format!("item `{}` system `{system}`", item.id)))?;
            }
            scores.get_mut(system).expect("known").kl = Some(total / n as f64);
        }
    }
    if ib {
        let mut per_item = Vec::with_capacity(n);
        for (i, item) in manifest.items.iter().enumerate() {
            let media = match &pre.media {
                Some(v) => &v[i],
                None => data[i].media_embedding.as_ref().expect("gathered"),
            };
            let mut sims = BTreeMap::new();
            for system in &systems {
                let s = cosine_similarity(media, generated(system, i))
                    .map_err(metric_err(format!("item `{}` system `{system}`", item.id)))?;
                sims.insert(system.clone(), s);
            }
            per_item.push(sims);
        }
        let ranks = ib_rank(&systems, &per_item).map_err(metric_err("IB Rank".to_string()))?;
        for (system, value) in ranks {
            scores.get_mut(&system).expect("known").ib_rank = Some(value);
        }
    }

    let config = serde_json::json!({
        "metrics": metrics,
        "systems": systems,
        "items": manifest.items.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(),
        "embedder": sources.embedder.as_ref().map(|e| e.backend_id()),
        "classifier": sources.classifier.as_ref().map(|c| c.backend_id()),
        "precomputed": {
            "reference": pre.reference.is_some(),
            "media": pre.media.is_some(),
            "generated": pre.generated.keys().collect::<Vec<_>>(),
        },
        "ib_rank_formula": IB_RANK_FORMULA,
        "kl": KL_DEFINITION,
    });
    let config_digest = sha256_hex(&canonical::to_canonical_bytes(&config).expect("config serializes"));
    let mut metadata = BTreeMap::new();
    if fad {
        metadata.insert("fad".to_string(), FAD_DEFINITION.to_string());
    }
    if metrics.contains(&Metric::Kl) {
        metadata.insert("kl".to_string(), KL_DEFINITION.to_string());
    }
    if ib {
        metadata.insert("ib_rank".to_string(), IB_RANK_FORMULA.to_string());
    }
    let report = EvalReport {
        systems: scores,
        item_count: n,
        metrics: metrics.iter().copied().collect(),
        config_digest,
        metadata,
    };
    report.validate().map_err(EvalError::Setup)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_parsing() {
        assert_eq!(parse_metrics("fad,kl,ibrank").unwrap().len(), 3);
        assert_eq!(parse_metrics("KL").unwrap(), BTreeSet::from([Metric::Kl]));
        assert_eq!(parse_metrics("ib_rank").unwrap(), BTreeSet::from([Metric::IbRank]));
        assert!(parse_metrics("fad,bleu").is_err());
        assert!(parse_metrics(",").is_err());
    }

    #[test]
    fn embedding_file_round_trip() {
        let v = vec![
            EmbeddingVector::new(vec![0.5, -1.25, 3.0]).unwrap(),
            EmbeddingVector::new(vec![1e-3, 0.0, 2.0]).unwrap(),
        ];
        let text = format_embedding_file(&v);
        assert!(text.starts_with("dim=3\n"));
        assert_eq!(parse_embedding_file(&text).unwrap(), v);
    }

    #[test]
    fn embedding_file_errors() {
        assert_eq!(parse_embedding_file("1 2 3\n").unwrap_err().0, 1);
        assert_eq!(parse_embedding_file("dim=2\n1 2\n1 2 3\n").unwrap_err().0, 3);
        assert_eq!(parse_embedding_file("dim=2\n1 x\n").unwrap_err().0, 2);
        assert!(parse_embedding_file("").is_err());
    }

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), b"x").unwrap();
    }

    #[test]
    fn manifest_validation_collects_problems() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.png", "ref.wav", "g1.wav", "g2.wav"] {
            touch(dir.path(), f);
        }
        let good = r#"{"id":"a","media_path":"a.png","media_type":"image","reference_audio_path":"ref.wav","generated_audio_paths":{"s1":"g1.wav","s2":"g2.wav"}}"#;
        let m = EvalManifest::parse(good, dir.path()).unwrap();
        assert_eq!(m.systems(), vec!["s1".to_string(), "s2".to_string()]);
        assert_eq!(m.items[0].media_path, dir.path().join("a.png"));

        let dup = format!("{good}\n{good}\n");
        let ManifestError::Invalid(problems) = EvalManifest::parse(&dup, dir.path()).unwrap_err() else {
            panic!("expected invalid")
        };
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].line, 2);
        assert!(problems[0].message.contains("duplicate id `a`"));

        let missing_system = r#"{"id":"b","media_path":"a.png","media_type":"image","reference_audio_path":"ref.wav","generated_audio_paths":{"s1":"g1.wav"}}"#;
        let err = EvalManifest::parse(&format!("{good}\n{missing_system}"), dir.path()).unwrap_err();
        assert!(
            err.to_string()
                .contains("item `b` has no generated audio for system `s2`"),
            "{err}"
        );

        let missing_file = good.replace("g2.wav", "nope.wav");
        let err = EvalManifest::parse(&missing_file, dir.path()).unwrap_err();
        assert!(err.to_string().contains("nope.wav"));

        let err = EvalManifest::parse("{not json\n", dir.path()).unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(EvalManifest::parse("\n\n", dir.path()).is_err());
    }

    #[test]
    fn report_validation() {
        let mut r = EvalReport {
            systems: BTreeMap::from([(
                "a".to_string(),
                SystemScores {
                    fad: Some(1.0),
                    kl: Some(0.1),
                    ib_rank: Some(0.5),
                },
            )]),
            item_count: 1,
            metrics: Metric::ALL.to_vec(),
            config_digest: String::new(),
            metadata: BTreeMap::new(),
        };
        assert!(r.validate().is_ok());
        r.systems.get_mut("a").unwrap().ib_rank = Some(1.5);
        assert!(r.validate().is_err());
    }
}
