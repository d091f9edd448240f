//! SME reference performances, indexed by task.
//!
//! A reference manifest lists recordings with their quality rating:
//!
//! ```text
//! ref hydrometer-sme.rec quality=1.0
//! ref hydrometer-alt.rec quality=0.8 tasks=T1,T2
//! ```
//!
//! Paths are relative to the manifest's directory. Without `tasks=`, every
//! task marked in the recording is taken.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{parse_session, slice_task, RecordingError, SessionRecording, SkeletonStats, SliceError, TaskSlice};
use crate::model::TaskId;

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub slice: TaskSlice,
    pub quality: f64,
    pub stats: Option<SkeletonStats>,
    /// Recording the slice came from.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSet {
    tasks: BTreeMap<TaskId, Vec<Reference>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReferenceError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("quality {0} is outside [0, 1]")]
    Quality(f64),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Recording { path: PathBuf, source: RecordingError },
    #[error("{source_name}: {source}")]
    Slice { source_name: String, source: SliceError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub quality: f64,
    pub tasks: Option<Vec<TaskId>>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, ReferenceError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |message: String| ReferenceError::Manifest { line, message };
        let mut words = content.split_whitespace();
        if words.next() != Some("ref") {
            return Err(err("expected 'ref <path> quality=<q> [tasks=<id,...>]'".into()));
        }
        let path = words.next().ok_or_else(|| err("missing recording path".into()))?;
        let mut quality = None;
        let mut tasks = None;
        for w in words {
            match w.split_once('=') {
                Some(("quality", v)) => {
                    let q: f64 = v.parse().map_err(|_| err(format!("bad quality '{v}'")))?;
                    if !(0.0..=1.0).contains(&q) {
                        return Err(ReferenceError::Quality(q));
                    }
                    quality = Some(q);
                }
                Some(("tasks", v)) => tasks = Some(v.split(',').map(String::from).collect()),
                _ => return Err(err(format!("unknown field '{w}'"))),
            }
        }
        out.push(ManifestEntry {
            path: PathBuf::from(path),
            quality: quality.ok_or_else(|| err("missing quality=<q>".into()))?,
            tasks,
        });
    }
    Ok(out)
}

impl ReferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one reference performance for its task.
    pub fn insert(&mut self, slice: TaskSlice, quality: f64, source: impl Into<String>) -> Result<(), ReferenceError> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(ReferenceError::Quality(quality));
        }
        let stats = SkeletonStats::from_slice(&slice);
        self.tasks.entry(slice.task.clone()).or_default().push(Reference {
            slice,
            quality,
            stats,
            source: source.into(),
        });
        Ok(())
    }

    /// Slices `rec` for the given tasks (all marked tasks when None).
    pub fn add_recording(
        &mut self,
        rec: &SessionRecording,
        quality: f64,
        tasks: Option<&[TaskId]>,
        source: &str,
    ) -> Result<(), ReferenceError> {
        let tasks = match tasks {
            Some(t) => t.to_vec(),
            None => rec.marked_tasks(),
        };
        for task in tasks {
            let slice = slice_task(rec, &task)
                .map_err(|e| ReferenceError::Slice { source_name: source.to_string(), source: e })?;
            self.insert(slice, quality, source)?;
        }
        Ok(())
    }

    pub fn load_manifest(path: &Path) -> Result<Self, ReferenceError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut set = Self::new();
        for entry in parse_manifest(&text)? {
            let rec_path = base.join(&entry.path);
            let rec = parse_session(&read(&rec_path)?)
                .map_err(|source| ReferenceError::Recording { path: rec_path.clone(), source })?;
            set.add_recording(&rec, entry.quality, entry.tasks.as_deref(), &entry.path.display().to_string())?;
        }
        Ok(set)
    }

    pub fn get(&self, task: &str) -> &[Reference] {
        self.tasks.get(task).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, task: &str) -> bool {
        !self.get(task).is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.keys()
    }

    /// The reference driving live trajectory targets: highest quality, first
    /// listed on ties.
    pub fn best(&self, task: &str) -> Option<(usize, &Reference)> {
        self.get(task)
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &Reference)>, (i, r)| match best {
                Some((_, b)) if b.quality >= r.quality => best,
                _ => Some((i, r)),
            })
    }
}

fn read(path: &Path) -> Result<String, ReferenceError> {
    std::fs::read_to_string(path).map_err(|source| ReferenceError::Io { path: path.to_path_buf(), source })
}
