//! File-system job workspace: `<root>/<job_id>/{input.*, job.json, trace.json, output.wav}`.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::job::Job;

pub const JOB_FILE: &str = "job.json";

#[derive(Debug, Clone)]
pub struct JobStore {
    root: PathBuf,
}

impl JobStore {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, job_id: &str) -> PathBuf {
        self.root.join(job_id)
    }

    pub fn create_dir(&self, job_id: &str) -> std::io::Result<PathBuf> {
        let dir = self.job_dir(job_id);
        std::fs::create_dir(&dir)?;
        Ok(dir)
    }

    /// Replaces `job.json` atomically.
    pub fn save(&self, job: &Job) -> std::io::Result<()> {
        let dir = self.job_dir(&job.job_id);
        let tmp = dir.join(format!(".{JOB_FILE}.tmp"));
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(&serde_json::to_vec_pretty(job).map_err(std::io::Error::other)?)?;
        file.sync_all()?;
        std::fs::rename(&tmp, dir.join(JOB_FILE))
    }

    /// Every readable job record. Unreadable ones are logged and skipped.
    pub fn load_all(&self) -> std::io::Result<Vec<Job>> {
        let mut jobs = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let path = entry?.path().join(JOB_FILE);
            if !path.is_file() {
                continue;
            }
            match std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<Job>(&b).map_err(|e| e.to_string()))
            {
                Ok(job) => jobs.push(job),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable job record"),
            }
        }
        jobs.sort_by(|a, b| (a.created_at, &a.job_id).cmp(&(b.created_at, &b.job_id)));
        Ok(jobs)
    }
}
