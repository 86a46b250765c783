use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use tonebridge_core::backends::BackendKind;
use tonebridge_core::captioning::DirectoryFrameSource;
use tonebridge_core::pipeline::{derive_job_id, MediaInput, Pipeline, PipelineOptions};
use tonebridge_core::trace::MediaKind;
use tonebridge_service::media::sniff;

use crate::settings::{build, resolve, GenerateArgs};
use crate::Failure;

pub fn run(args: GenerateArgs) -> Result<(), Failure> {
    if !args.input.exists() {
        return Err(Failure(format!("input {} does not exist", args.input.display())));
    }
    let mut config = resolve(&args.backend)?;
    if args.no_timing {
        config.pipeline.record_timing = false;
    }
    let (templates, backends) = build(&config, &[BackendKind::Captioner, BackendKind::Llm, BackendKind::Music])?;
    let pipeline = Pipeline::new(templates, &backends, config.pipeline.pipeline_config())?;
    let options = PipelineOptions {
        frame_count: args.frames.unwrap_or(config.pipeline.frame_count),
        bypass_bridge: args.bypass_bridge || config.pipeline.bypass_bridge,
    };
    let duration_s = args.duration.unwrap_or(config.pipeline.duration_s);

    // Frames decoded from a video file live here until the run ends.
    let scratch = tempfile::tempdir()?;
    let payload = if args.input.is_dir() {
        MediaInput::video(Arc::new(DirectoryFrameSource::open(&args.input)?))
    } else {
        let bytes = std::fs::read(&args.input)?;
        match sniff(&bytes) {
            Some((MediaKind::Image, _)) => MediaInput::image(bytes),
            Some((MediaKind::Video, _)) => {
                let decoder = config.decoder.as_ref().ok_or_else(|| {
                    Failure("video files need `[decoder]` in the config; pass a frame directory instead".to_string())
                })?;
                let source = decoder.extract(&args.input, scratch.path(), options.frame_count)?;
                MediaInput::video(Arc::new(source))
            }
            None => return Err(Failure(format!("{}: unrecognized media type", args.input.display()))),
        }
    };
    let input = payload.with_prompt(args.prompt.clone()).with_duration(duration_s);
    let job_id = derive_job_id(&input.digest()?, input.user_prompt.as_deref(), &options, duration_s);

    let result = pipeline.run(&job_id, &input, &options).map_err(|f| {
        let stage = f.error.stage().map_or("pipeline".to_string(), |s| format!("{s} stage"));
        Failure(format!("{stage} failed: {}", f.error))
    })?;

    let mut outputs = vec![(args.out.as_path(), result.wav.clone())];
    if let Some(trace) = &args.trace {
        outputs.push((trace.as_path(), result.trace.to_canonical_bytes()));
    }
    write_all_or_nothing(&outputs)?;

    let mut stdout = std::io::stdout().lock();
    if let Some(caption) = &result.caption {
        writeln!(stdout, "caption: {}", caption.text)?;
    }
    writeln!(stdout, "music prompt: {}", result.music_prompt.text)?;
    Ok(())
}

/// Stages every file next to its destination, then renames them all. A
/// failure before the renames leaves no output behind.
fn write_all_or_nothing(files: &[(&Path, Vec<u8>)]) -> Result<(), Failure> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| Failure(format!("cannot write {}: {}", path.display(), e.error)))?;
    }
    Ok(())
}
