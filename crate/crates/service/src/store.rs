//! In-memory instance store keyed by content hash, with memoized
//! single-flight scenario results and an optional write-through directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::StatusCode;
use kes_core::ingest::{load, serialize_group_points, serialize_pb, LoadError};
use kes_core::wire::{InstanceSummary, UploadConfig};
use kes_core::{AgentKind, AllocationResult, Overrides, Rule, ValidatedInstance};
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use crate::error::ApiError;

/// Memoized scenarios per instance before the cache is reset.
const CACHE_LIMIT: usize = 4096;

/// A scenario instance together with its allocation.
#[derive(Debug)]
pub struct Computed {
    pub instance: ValidatedInstance,
    pub result: AllocationResult,
}

type Slot = Arc<OnceCell<Arc<Computed>>>;

pub struct Stored {
    pub id: String,
    pub frozen: bool,
    pub instance: ValidatedInstance,
    pub summary: InstanceSummary,
    cache: Mutex<HashMap<String, Slot>>,
}

/// Canonical upload contents: what the id is hashed from and what the
/// write-through directory stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub pb: Vec<u8>,
    pub groups: Option<Vec<u8>>,
    pub config: Vec<u8>,
}

impl Canonical {
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, part) in [(b'p', Some(&self.pb)), (b'g', self.groups.as_ref()), (b'c', Some(&self.config))] {
            if let Some(bytes) = part {
                hasher.update([tag]);
                hasher.update((bytes.len() as u64).to_be_bytes());
                hasher.update(bytes);
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

impl Stored {
    /// Parses and validates an upload. Returns the stored entry and its
    /// canonical form.
    pub fn build(pb: &[u8], groups: Option<&[u8]>, config: &UploadConfig) -> Result<(Stored, Canonical), LoadError> {
        let loaded = load(pb, groups, &config.options)?;
        let canonical = Canonical {
            pb: serialize_pb(&loaded.file),
            groups: loaded.sheet.as_ref().map(serialize_group_points),
            config: serde_json::to_vec(config).expect("config serializes"),
        };
        let id = canonical.id();
        let instance = loaded.instance;
        let fields = instance.agents().iter().filter(|a| a.kind == AgentKind::Field).count();
        let summary = InstanceSummary {
            id: id.clone(),
            frozen: config.frozen,
            projects: instance.projects().len(),
            individuals: instance.agents().len() - fields,
            fields,
            config: instance.config().clone(),
            warnings: loaded.warnings,
        };
        let stored = Stored { id, frozen: config.frozen, instance, summary, cache: Mutex::new(HashMap::new()) };
        Ok((stored, canonical))
    }

    /// Result for `(rule, overrides)`, computed at most once even under
    /// concurrent identical requests.
    pub async fn scenario(&self, rule: Rule, overrides: &Overrides) -> Result<Arc<Computed>, ApiError> {
        let key = format!("{rule}|{}", serde_json::to_string(overrides).expect("overrides serialize"));
        let slot: Slot = {
            let mut cache = self.cache.lock().expect("cache lock");
            if cache.len() >= CACHE_LIMIT && !cache.contains_key(&key) {
                cache.clear();
            }
            cache.entry(key).or_default().clone()
        };
        if let Some(done) = slot.get() {
            return Ok(done.clone());
        }
        let base = self.instance.clone();
        let overrides = overrides.clone();
        let computed = slot
            .get_or_try_init(|| async move {
                let joined = tokio::task::spawn_blocking(move || {
                    let instance = overrides.apply(&base)?;
                    let result = rule.run(&instance);
                    Ok::<_, kes_core::ModelError>(Arc::new(Computed { instance, result }))
                })
                .await;
                match joined {
                    Ok(Ok(done)) => Ok(done),
                    Ok(Err(e)) => Err(ApiError::invalid(crate::error::variant_name(&e), e.to_string())),
                    Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())),
                }
            })
            .await?;
        Ok(computed.clone())
    }
}

#[derive(Default)]
pub struct Store {
    instances: RwLock<HashMap<String, Arc<Stored>>>,
    fixtures_dir: Option<PathBuf>,
}

impl Store {
    pub fn new(fixtures_dir: Option<PathBuf>) -> Self {
        Store { instances: RwLock::new(HashMap::new()), fixtures_dir }
    }

    pub fn get(&self, id: &str) -> Option<Arc<Stored>> {
        self.instances.read().expect("store lock").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.instances.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts unless an entry with the same id exists; returns the entry
    /// kept in the store.
    pub fn insert(&self, stored: Stored) -> Arc<Stored> {
        let mut map = self.instances.write().expect("store lock");
        map.entry(stored.id.clone()).or_insert_with(|| Arc::new(stored)).clone()
    }

    pub fn fixtures_dir(&self) -> Option<&Path> {
        self.fixtures_dir.as_deref()
    }
}

/// File names used for one instance in the write-through directory.
pub fn fixture_paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [dir.join(format!("{id}.pb")), dir.join(format!("{id}.groups.csv")), dir.join(format!("{id}.config.json"))]
}

pub fn write_fixture(dir: &Path, id: &str, canonical: &Canonical) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let [pb, groups, config] = fixture_paths(dir, id);
    std::fs::write(pb, &canonical.pb)?;
    if let Some(sheet) = &canonical.groups {
        std::fs::write(groups, sheet)?;
    }
    std::fs::write(config, &canonical.config)
}

/// Reloads every `<id>.pb` in `dir` with its sheet and config.
pub fn read_fixtures(dir: &Path) -> std::io::Result<Vec<Stored>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pb"))
        .collect();
    entries.sort();
    for path in entries {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let [_, groups_path, config_path] = fixture_paths(dir, stem);
        let pb = std::fs::read(&path)?;
        let groups = groups_path.exists().then(|| std::fs::read(&groups_path)).transpose()?;
        let config: UploadConfig = if config_path.exists() {
            serde_json::from_slice(&std::fs::read(&config_path)?).map_err(std::io::Error::other)?
        } else {
            UploadConfig::default()
        };
        match Stored::build(&pb, groups.as_deref(), &config) {
            Ok((stored, _)) => {
                if stored.id != stem {
                    tracing::warn!(file = %path.display(), id = %stored.id, "fixture content hashes to a different id");
                }
                out.push(stored);
            }
            Err(e) => tracing::warn!(file = %path.display(), error = %e, "skipping unreadable fixture"),
        }
    }
    Ok(out)
}
