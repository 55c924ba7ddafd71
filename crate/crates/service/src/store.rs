//! File-backed persistence: `datasets/<id>.csv` and `stories/<id>.json`
//! under the persistence root. Every write goes through a temp file and a
//! rename so a crash never leaves a half-written document behind.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use storyweave::data::{load_dataset, load_dataset_with_id, Dataset};
use storyweave::story::Story;
use storyweave::DataError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt document {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no {0} `{1}`")]
    NotFound(&'static str, String),
    #[error("story `{id}` is at version {current}, not {expected}")]
    VersionConflict { id: String, expected: u64, current: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoryRecord {
    pub story: Story,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
    pub version: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub struct Store {
    root: PathBuf,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    stories: Mutex<BTreeMap<String, StoryRecord>>,
    running: Mutex<HashSet<String>>,
}

/// Marks an interpolation in flight for one story until dropped.
pub struct InterpolationGuard {
    store: Arc<Store>,
    id: String,
}

impl Drop for InterpolationGuard {
    fn drop(&mut self) {
        self.store.running.lock().unwrap().remove(&self.id);
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Arc<Store>, StoreError> {
        let root = root.into();
        for dir in ["datasets", "stories"] {
            let p = root.join(dir);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let mut stories = BTreeMap::new();
        let dir = root.join("stories");
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let record: StoryRecord = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            stories.insert(record.story.id.clone(), record);
        }
        Ok(Arc::new(Store {
            root,
            datasets: RwLock::new(HashMap::new()),
            stories: Mutex::new(stories),
            running: Mutex::new(HashSet::new()),
        }))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    fn story_path(&self, id: &str) -> PathBuf {
        self.root.join("stories").join(format!("{id}.json"))
    }

    /// Parse and persist an uploaded table. The id is a content hash, so
    /// uploading the same bytes twice yields the same dataset.
    pub fn put_dataset(&self, bytes: &[u8]) -> Result<Arc<Dataset>, StoreError> {
        let ds = Arc::new(load_dataset(bytes)?);
        let path = self.dataset_path(ds.id());
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        self.datasets
            .write()
            .unwrap()
            .insert(ds.id().to_string(), Arc::clone(&ds));
        Ok(ds)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, StoreError> {
        if let Some(ds) = self.datasets.read().unwrap().get(id) {
            return Ok(Arc::clone(ds));
        }
        // ids are hex hashes; anything else cannot name a file of ours
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(StoreError::NotFound("dataset", id.to_string()));
        }
        let path = self.dataset_path(id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound("dataset", id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let ds = Arc::new(load_dataset_with_id(id, &bytes)?);
        self.datasets
            .write()
            .unwrap()
            .insert(id.to_string(), Arc::clone(&ds));
        Ok(ds)
    }

    pub fn story(&self, id: &str) -> Result<StoryRecord, StoreError> {
        self.stories
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound("story", id.to_string()))
    }

    pub fn create_story(&self, title: String, dataset_id: String) -> Result<StoryRecord, StoreError> {
        let mut stories = self.stories.lock().unwrap();
        let next = stories
            .keys()
            .filter_map(|k| k.strip_prefix("story-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0)
            + 1;
        let now = now_ms();
        let record = StoryRecord {
            story: Story::new(format!("story-{next}"), title, dataset_id),
            created_at: now,
            updated_at: now,
            version: 1,
        };
        self.persist(&record)?;
        stories.insert(record.story.id.clone(), record.clone());
        Ok(record)
    }

    /// Apply `edit` to the story if it is still at `expected` (any version
    /// when `None`), bump the version and persist.
    pub fn update<E>(
        &self,
        id: &str,
        expected: Option<u64>,
        edit: impl FnOnce(&mut Story) -> Result<(), E>,
    ) -> Result<Result<StoryRecord, E>, StoreError> {
        let mut stories = self.stories.lock().unwrap();
        let current = stories
            .get(id)
            .ok_or_else(|| StoreError::NotFound("story", id.to_string()))?;
        if let Some(expected) = expected {
            if expected != current.version {
                return Err(StoreError::VersionConflict {
                    id: id.to_string(),
                    expected,
                    current: current.version,
                });
            }
        }
        let mut record = current.clone();
        if let Err(e) = edit(&mut record.story) {
            return Ok(Err(e));
        }
        record.version += 1;
        record.updated_at = now_ms().max(record.updated_at);
        self.persist(&record)?;
        stories.insert(id.to_string(), record.clone());
        Ok(Ok(record))
    }

    fn persist(&self, record: &StoryRecord) -> Result<(), StoreError> {
        let text = serde_json::to_vec_pretty(record).expect("records serialize");
        write_atomic(&self.story_path(&record.story.id), &text)
    }

    /// Claim the story for one interpolation; `None` while another runs.
    pub fn begin_interpolation(self: &Arc<Self>, id: &str) -> Option<InterpolationGuard> {
        let mut running = self.running.lock().unwrap();
        running.insert(id.to_string()).then(|| InterpolationGuard {
            store: Arc::clone(self),
            id: id.to_string(),
        })
    }
}
