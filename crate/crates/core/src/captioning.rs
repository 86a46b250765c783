//! Image and video captioning.
//!
//! Images get one caption. Videos are sampled uniformly into frames, each
//! frame is captioned, and the frame captions are fused into one video
//! caption by a single LLM call.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::backends::{Captioner, ChatModel, ChatParams};
use crate::bridge::ChatMessage;
use crate::digest::sha256_hex;
use crate::error::{PipelineError, StageName};
use crate::templates::{TemplateId, TemplateStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Image,
    Frame,
    VideoAggregate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub source: CaptionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<usize>,
    /// Digests of the frame captions an aggregate was built from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parent_captions: Vec<String>,
}

impl Caption {
    fn checked(
        text: &str,
        source: CaptionSource,
        frame_index: Option<usize>,
        parent_captions: Vec<String>,
        stage: StageName,
    ) -> Result<Self, PipelineError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(PipelineError::EmptyCaption { stage, frame_index });
        }
        if source == CaptionSource::VideoAggregate && parent_captions.is_empty() {
            return Err(PipelineError::InvalidInput(
                "an aggregate caption needs at least one parent".to_string(),
            ));
        }
        Ok(Self {
            text: text.to_string(),
            source,
            frame_index,
            parent_captions,
        })
    }

    pub fn image(text: &str) -> Result<Self, PipelineError> {
        Self::checked(text, CaptionSource::Image, None, Vec::new(), StageName::Caption)
    }

    pub fn frame(text: &str, index: usize) -> Result<Self, PipelineError> {
        Self::checked(text, CaptionSource::Frame, Some(index), Vec::new(), StageName::Caption)
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Position of the frame in its source, zero-based.
    pub index: usize,
    pub image: Vec<u8>,
    pub timestamp_s: Option<f64>,
}

/// Indices of `min(n, total)` frames spread uniformly over `total` frames:
/// `floor(i * total / k)` for `i` in `0..k`.
pub fn sample_indices(total: usize, n: usize) -> Vec<usize> {
    let k = n.min(total);
    (0..k).map(|i| i * total / k).collect()
}

/// Returns the short format tag of a decodable raster image.
pub fn check_image(bytes: &[u8]) -> Result<&'static str, PipelineError> {
    if bytes.is_empty() {
        return Err(PipelineError::Decode("image payload is empty".to_string()));
    }
    let format = image::guess_format(bytes).map_err(|e| PipelineError::Decode(e.to_string()))?;
    let tag = match format {
        image::ImageFormat::Png => "png",
        image::ImageFormat::Jpeg => "jpeg",
        other => return Err(PipelineError::Decode(format!("unsupported image format {other:?}"))),
    };
    image::load_from_memory_with_format(bytes, format).map_err(|e| PipelineError::Decode(e.to_string()))?;
    Ok(tag)
}

/// Something that can enumerate and read video frames.
pub trait FrameSource: Send + Sync {
    fn frame_count(&self) -> Result<usize, PipelineError>;
    fn read_frame(&self, index: usize) -> Result<Vec<u8>, PipelineError>;
    /// Content digest over all frames, in order.
    fn digest(&self) -> Result<String, PipelineError>;
}

pub fn sample_frames(source: &dyn FrameSource, n: usize) -> Result<Vec<Frame>, PipelineError> {
    if n == 0 {
        return Err(PipelineError::InvalidInput(
            "frame count must be at least 1".to_string(),
        ));
    }
    let total = source.frame_count()?;
    if total == 0 {
        return Err(PipelineError::Decode("video has no frames".to_string()));
    }
    sample_indices(total, n)
        .into_iter()
        .map(|index| {
            Ok(Frame {
                index,
                image: source.read_frame(index)?,
                timestamp_s: None,
            })
        })
        .collect()
}

/// A directory of `frame_NNNNNN.png` files; lexicographic order is frame
/// order. Other files are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryFrameSource {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

pub fn is_frame_file_name(name: &str) -> bool {
    name.strip_prefix("frame_")
        .and_then(|rest| rest.strip_suffix(".png"))
        .is_some_and(|digits| digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit()))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

impl DirectoryFrameSource {
    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| PipelineError::Decode(format!("cannot list frames in {}: {e}", dir.display())))?;
        let mut files = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| PipelineError::Decode(e.to_string()))?;
            let name = entry.file_name();
            if name.to_str().is_some_and(is_frame_file_name) {
                files.push(entry.path());
            }
        }
        files.sort();
        Ok(Self {
            dir: dir.to_path_buf(),
            files,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl FrameSource for DirectoryFrameSource {
    fn frame_count(&self) -> Result<usize, PipelineError> {
        Ok(self.files.len())
    }

    fn read_frame(&self, index: usize) -> Result<Vec<u8>, PipelineError> {
        let path = self
            .files
            .get(index)
            .ok_or_else(|| PipelineError::Decode(format!("frame {index} out of range")))?;
        std::fs::read(path).map_err(|e| PipelineError::Decode(format!("{}: {e}", path.display())))
    }

    fn digest(&self) -> Result<String, PipelineError> {
        let mut listing = String::new();
        for (i, _) in self.files.iter().enumerate() {
            listing.push_str(&sha256_hex(&self.read_frame(i)?));
            listing.push('\n');
        }
        Ok(sha256_hex(listing.as_bytes()))
    }
}

/// Runs a configured frame-extraction command. Arguments may contain the
/// placeholders `{input}`, `{output_dir}` and `{frames}`; the command must
/// write `frame_NNNNNN.png` files into the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalDecoder {
    pub command: Vec<String>,
}

impl ExternalDecoder {
    pub fn extract(
        &self,
        input: &Path,
        output_dir: &Path,
        frames: usize,
    ) -> Result<DirectoryFrameSource, PipelineError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| PipelineError::Decode("frame decoder command is empty".to_string()))?;
        std::fs::create_dir_all(output_dir)?;
        let fill = |arg: &String| {
            arg.replace("{input}", &input.display().to_string())
                .replace("{output_dir}", &output_dir.display().to_string())
                .replace("{frames}", &frames.to_string())
        };
        let output = Command::new(fill(program))
            .args(args.iter().map(fill))
            .output()
            .map_err(|e| PipelineError::Decode(format!("cannot run frame decoder `{program}`: {e}")))?;
        if !output.status.success() {
            return Err(PipelineError::Decode(format!(
                "frame decoder exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        DirectoryFrameSource::open(output_dir)
    }
}

pub fn caption_image(image: &[u8], captioner: &dyn Captioner) -> Result<Caption, PipelineError> {
    let format = check_image(image)?;
    let text = captioner
        .caption(image, format)
        .map_err(PipelineError::backend(StageName::Caption, None))?;
    Caption::image(&text)
}

/// Captions one sampled frame; errors carry the frame index.
pub fn caption_frame(frame: &Frame, captioner: &dyn Captioner) -> Result<Caption, PipelineError> {
    let tag = |e: PipelineError| match e {
        PipelineError::BackendUnavailable { stage, source, .. } => PipelineError::BackendUnavailable {
            stage,
            frame_index: Some(frame.index),
            source,
        },
        PipelineError::Decode(detail) => PipelineError::Decode(format!("frame {}: {detail}", frame.index)),
        other => other,
    };
    let caption = caption_image(&frame.image, captioner).map_err(tag)?;
    Caption::frame(&caption.text, frame.index)
}

/// Captions every frame, fanning out across threads. Output order matches
/// input order; the first failing frame (in order) decides the error.
pub fn caption_frames(frames: &[Frame], captioner: &dyn Captioner) -> Result<Vec<Caption>, PipelineError> {
    fan_out(frames, |frame| caption_frame(frame, captioner))
}

/// Applies `work` to every frame on its own thread and reassembles the
/// results in frame order.
pub fn fan_out<T, F>(frames: &[Frame], work: F) -> Result<Vec<T>, PipelineError>
where
    T: Send,
    F: Fn(&Frame) -> Result<T, PipelineError> + Sync,
{
    if frames.is_empty() {
        return Err(PipelineError::InvalidInput("no frames to caption".to_string()));
    }
    let work = &work;
    let results: Vec<Result<T, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = frames.iter().map(|frame| scope.spawn(move || work(frame))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("caption worker panicked"))
            .collect()
    });
    results.into_iter().collect()
}

pub fn aggregation_messages(templates: &TemplateStore, frame_captions: &[Caption]) -> Vec<ChatMessage> {
    let joined = frame_captions
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    vec![
        ChatMessage::system(templates.get(TemplateId::VideoAggregate).system_text.clone()),
        ChatMessage::user(joined),
    ]
}

pub fn aggregate_captions(
    templates: &TemplateStore,
    frame_captions: &[Caption],
    llm: &dyn ChatModel,
    params: &ChatParams,
) -> Result<Caption, PipelineError> {
    if frame_captions.is_empty() {
        return Err(PipelineError::InvalidInput(
            "no frame captions to aggregate".to_string(),
        ));
    }
    if let Some(c) = frame_captions.iter().find(|c| c.source != CaptionSource::Frame) {
        return Err(PipelineError::InvalidInput(format!(
            "aggregate expects frame captions, got {:?}",
            c.source
        )));
    }
    let messages = aggregation_messages(templates, frame_captions);
    let text = llm
        .chat(&messages, params)
        .map_err(PipelineError::backend(StageName::Aggregate, None))?;
    Caption::checked(
        &text,
        CaptionSource::VideoAggregate,
        None,
        frame_captions.iter().map(Caption::digest).collect(),
        StageName::Aggregate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, MockBackends};
    use crate::digest::hex8;
    use crate::testutil::{png_bytes, write_frame_dir};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn sample_indices_examples() {
        assert_eq!(sample_indices(10, 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(sample_indices(3, 5), vec![0, 1, 2]);
        // floor(i * 100 / 8): 0, 12.5, 25, 37.5, 50, 62.5, 75, 87.5
        assert_eq!(sample_indices(100, 8), vec![0, 12, 25, 37, 50, 62, 75, 87]);
        assert_eq!(sample_indices(1, 8), vec![0]);
    }

    proptest! {
        #[test]
        fn sample_indices_bounds(total in 1usize..5000, n in 1usize..200) {
            let idx = sample_indices(total, n);
            prop_assert_eq!(idx.len(), n.min(total));
            prop_assert_eq!(idx[0], 0);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*idx.last().unwrap() < total);
            if n >= total {
                prop_assert_eq!(idx, (0..total).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn directory_source_ignores_other_files() {
        let dir = tempfile::tempdir().unwrap();
        write_frame_dir(dir.path(), 3);
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        std::fs::write(dir.path().join("frame_1.png"), "x").unwrap();
        let src = DirectoryFrameSource::open(dir.path()).unwrap();
        assert_eq!(src.frame_count().unwrap(), 3);
        let frames = sample_frames(&src, 8).unwrap();
        assert_eq!(frames.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_directory_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = DirectoryFrameSource::open(dir.path()).unwrap();
        assert!(matches!(sample_frames(&src, 4), Err(PipelineError::Decode(_))));
        assert!(matches!(
            DirectoryFrameSource::open(&dir.path().join("missing")),
            Err(PipelineError::Decode(_))
        ));
    }

    #[test]
    fn image_caption_under_mock() {
        let png = png_bytes(1, 1, [255, 0, 0]);
        let mock = MockBackends::default();
        let c = caption_image(&png, &mock).unwrap();
        assert_eq!(c.text, format!("mock caption {}", hex8(&png)));
        assert_eq!(c.source, CaptionSource::Image);
    }

    #[test]
    fn undecodable_image() {
        let mock = MockBackends::default();
        assert!(matches!(caption_image(b"nope", &mock), Err(PipelineError::Decode(_))));
        assert!(matches!(caption_image(&[], &mock), Err(PipelineError::Decode(_))));
    }

    struct Reply(&'static str);

    impl Captioner for Reply {
        fn backend_id(&self) -> String {
            "reply".into()
        }

        fn caption(&self, _: &[u8], _: &str) -> Result<String, BackendError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn whitespace_caption_is_empty_error_and_surrounding_space_trimmed() {
        let png = png_bytes(1, 1, [0, 0, 0]);
        assert!(matches!(
            caption_image(&png, &Reply(" \t\n")),
            Err(PipelineError::EmptyCaption {
                stage: StageName::Caption,
                ..
            })
        ));
        assert_eq!(caption_image(&png, &Reply("  a  cat \n")).unwrap().text, "a  cat");
    }

    #[test]
    fn frame_captions_keep_order_and_index() {
        let png = png_bytes(2, 2, [10, 20, 30]);
        let frames: Vec<Frame> = (0..3)
            .map(|index| Frame {
                index,
                image: png.clone(),
                timestamp_s: None,
            })
            .collect();
        let caps = caption_frames(&frames, &MockBackends::default()).unwrap();
        assert_eq!(caps.len(), 3);
        assert_eq!(
            caps.iter().map(|c| c.frame_index).collect::<Vec<_>>(),
            vec![Some(0), Some(1), Some(2)]
        );
        assert!(caps
            .iter()
            .all(|c| c.text == caps[0].text && c.source == CaptionSource::Frame));
        assert!(matches!(
            caption_frames(&[], &MockBackends::default()),
            Err(PipelineError::InvalidInput(_))
        ));
    }

    #[test]
    fn frame_errors_name_the_frame() {
        let frames = vec![
            Frame {
                index: 4,
                image: png_bytes(1, 1, [1, 1, 1]),
                timestamp_s: None,
            },
            Frame {
                index: 9,
                image: b"broken".to_vec(),
                timestamp_s: None,
            },
        ];
        let e = caption_frames(&frames, &MockBackends::default()).unwrap_err();
        assert!(e.to_string().contains("frame 9"), "{e}");
    }

    struct Counting {
        calls: AtomicUsize,
        seen: std::sync::Mutex<Vec<Vec<ChatMessage>>>,
    }

    impl ChatModel for Counting {
        fn backend_id(&self) -> String {
            "counting".into()
        }

        fn chat(&self, messages: &[ChatMessage], _: &ChatParams) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.seen.lock().unwrap().push(messages.to_vec());
            Ok("a person walks then runs".into())
        }
    }

    #[test]
    fn aggregation_joins_with_newline_in_one_call() {
        let store = TemplateStore::builtin();
        let llm = Counting {
            calls: AtomicUsize::new(0),
            seen: Default::default(),
        };
        let caps = vec![
            Caption::frame("a man walks", 0).unwrap(),
            Caption::frame("a man runs", 5).unwrap(),
        ];
        let agg = aggregate_captions(&store, &caps, &llm, &ChatParams::default()).unwrap();
        assert_eq!(llm.calls.load(Ordering::SeqCst), 1);
        let seen = llm.seen.lock().unwrap();
        assert_eq!(seen[0][0].content, store.get(TemplateId::VideoAggregate).system_text);
        assert_eq!(seen[0][1].content, "a man walks\na man runs");
        assert_eq!(agg.source, CaptionSource::VideoAggregate);
        assert_eq!(agg.parent_captions, vec![caps[0].digest(), caps[1].digest()]);
    }

    #[test]
    fn aggregation_single_caption_under_mock() {
        let store = TemplateStore::builtin();
        let mock = MockBackends::new(store.clone());
        let caps = vec![Caption::frame("mock caption 01234567", 0).unwrap()];
        let agg = aggregate_captions(&store, &caps, &mock, &ChatParams::default()).unwrap();
        assert_eq!(
            agg.text,
            format!("mock video caption {}", hex8(b"mock caption 01234567"))
        );
    }

    #[test]
    fn aggregation_rejects_non_frame_captions() {
        let store = TemplateStore::builtin();
        let caps = vec![Caption::image("x").unwrap()];
        assert!(aggregate_captions(&store, &caps, &MockBackends::default(), &ChatParams::default()).is_err());
        assert!(aggregate_captions(&store, &[], &MockBackends::default(), &ChatParams::default()).is_err());
    }

    #[test]
    fn external_decoder_runs_command() {
        let src_dir = tempfile::tempdir().unwrap();
        write_frame_dir(src_dir.path(), 5);
        let out = tempfile::tempdir().unwrap();
        let decoder = ExternalDecoder {
            command: vec![
                "sh".into(),
                "-c".into(),
                "cp \"$0\"/frame_*.png \"$1\"/ && test \"$2\" = 3".into(),
                "{input}".into(),
                "{output_dir}".into(),
                "{frames}".into(),
            ],
        };
        let src = decoder.extract(src_dir.path(), out.path(), 3).unwrap();
        assert_eq!(src.frame_count().unwrap(), 5);

        let failing = ExternalDecoder {
            command: vec!["sh".into(), "-c".into(), "echo nope >&2; exit 3".into()],
        };
        let e = failing.extract(src_dir.path(), out.path(), 3).unwrap_err();
        assert!(e.to_string().contains("nope"), "{e}");
    }
}
