//! Append-only experiment ledger: one JSON record per line in
//! `<root>/<experiment_id>/ledger.jsonl`, plus best-epoch checkpoints.
//!
//! Writers take an exclusive advisory lock on the ledger file, pick up any
//! records appended by other processes, check key uniqueness and append a
//! single line. Readers parse complete lines only; a torn trailing line left
//! by a crash is ignored on load and truncated by the next writer.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arch::ArchSpec;
use crate::error::{Result, ZcpError};
use crate::nn::{Model, TensorValue};
use crate::proxies::{ProxyName, ProxyScore};
use crate::train::RunRecord;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Spec,
    ProxyScore,
    RunRecord,
    Report,
}

/// Uniqueness key of a record within its kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy: Option<String>,
    /// Report name and content digest, `name:digest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreRecord {
    pub experiment_id: String,
    pub kind: RecordKind,
    pub key: RecordKey,
    pub payload: Value,
    pub created_at_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| ZcpError::Schema(e.to_string()))
}

fn from_value<T: for<'de> Deserialize<'de>>(kind: RecordKind, v: &Value) -> Result<T> {
    T::deserialize(v).map_err(|e| ZcpError::Schema(format!("{kind:?} payload: {e}")))
}

/// Hex SHA-256 of a byte string.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl StoreRecord {
    pub fn spec(experiment_id: &str, spec: &ArchSpec) -> Result<Self> {
        Ok(Self {
            experiment_id: experiment_id.into(),
            kind: RecordKind::Spec,
            key: RecordKey {
                spec_hash: Some(spec.spec_hash()),
                ..Default::default()
            },
            payload: to_value(spec)?,
            created_at_ms: now_ms(),
        })
    }

    pub fn proxy_score(experiment_id: &str, spec_hash: &str, score: &ProxyScore) -> Result<Self> {
        Ok(Self {
            experiment_id: experiment_id.into(),
            kind: RecordKind::ProxyScore,
            key: RecordKey {
                spec_hash: Some(spec_hash.into()),
                proxy: Some(score.proxy.to_string()),
                ..Default::default()
            },
            payload: to_value(score)?,
            created_at_ms: now_ms(),
        })
    }

    pub fn run_record(experiment_id: &str, run: &RunRecord) -> Result<Self> {
        Ok(Self {
            experiment_id: experiment_id.into(),
            kind: RecordKind::RunRecord,
            key: RecordKey {
                spec_hash: Some(run.spec_hash.clone()),
                ..Default::default()
            },
            payload: to_value(run)?,
            created_at_ms: now_ms(),
        })
    }

    /// A report keyed by `name` and the digest of its serialized payload, so
    /// re-deriving an identical report is a duplicate.
    pub fn report<T: Serialize>(experiment_id: &str, name: &str, report: &T) -> Result<Self> {
        let payload = to_value(report)?;
        let digest = content_digest(payload.to_string().as_bytes());
        Ok(Self {
            experiment_id: experiment_id.into(),
            kind: RecordKind::Report,
            key: RecordKey {
                report: Some(format!("{name}:{digest}")),
                ..Default::default()
            },
            payload,
            created_at_ms: now_ms(),
        })
    }

    /// Checks the payload against its kind and the key against the payload.
    pub fn validate(&self) -> Result<()> {
        let k = &self.key;
        let bad_key = || ZcpError::Schema(format!("{:?} record has inconsistent key {k:?}", self.kind));
        match self.kind {
            RecordKind::Spec => {
                let spec: ArchSpec = from_value(self.kind, &self.payload)?;
                spec.validate_structure()?;
                if k.proxy.is_some() || k.report.is_some() || k.spec_hash.as_deref() != Some(&spec.spec_hash()) {
                    return Err(bad_key());
                }
            }
            RecordKind::ProxyScore => {
                let s: ProxyScore = from_value(self.kind, &self.payload)?;
                if k.spec_hash.is_none() || k.report.is_some() || k.proxy.as_deref() != Some(s.proxy.as_str()) {
                    return Err(bad_key());
                }
            }
            RecordKind::RunRecord => {
                let r: RunRecord = from_value(self.kind, &self.payload)?;
                if k.proxy.is_some() || k.report.is_some() || k.spec_hash.as_deref() != Some(&r.spec_hash) {
                    return Err(bad_key());
                }
            }
            RecordKind::Report => {
                if k.spec_hash.is_some() || k.proxy.is_some() || k.report.is_none() {
                    return Err(bad_key());
                }
            }
        }
        Ok(())
    }

    fn unique_key(&self) -> (RecordKind, RecordKey) {
        (self.kind, self.key.clone())
    }
}

/// Work remaining for a set of sampled specs.
#[derive(Clone, Debug, PartialEq)]
pub struct ResumePlan {
    /// Specs missing at least one requested proxy score.
    pub to_score: Vec<ArchSpec>,
    /// Specs without a run record.
    pub to_train: Vec<ArchSpec>,
}

#[derive(Default)]
struct Loaded {
    records: Vec<StoreRecord>,
    keys: HashSet<(RecordKind, RecordKey)>,
    /// Bytes of complete lines consumed so far.
    offset: u64,
}

impl Loaded {
    /// Parses complete lines from `file` past `offset`. Returns whether a
    /// torn trailing fragment was seen.
    fn refresh(&mut self, file: &mut File, path: &Path) -> Result<bool> {
        let mut buf = Vec::new();
        file.seek(SeekFrom::Start(self.offset)).map_err(|e| ZcpError::io(path, e))?;
        file.read_to_end(&mut buf).map_err(|e| ZcpError::io(path, e))?;
        let complete = buf.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        for (n, line) in buf[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec: StoreRecord = serde_json::from_slice(line).map_err(|e| ZcpError::Parse {
                context: format!("{} (line {} after byte {})", path.display(), n + 1, self.offset),
                message: e.to_string(),
            })?;
            self.keys.insert(rec.unique_key());
            self.records.push(rec);
        }
        self.offset += complete as u64;
        Ok(complete < buf.len())
    }
}

/// Handle on one experiment's ledger. Safe to share across threads; other
/// processes may append to the same ledger concurrently.
pub struct ResultsStore {
    experiment_id: String,
    dir: PathBuf,
    ledger: PathBuf,
    state: Mutex<Loaded>,
}

impl std::fmt::Debug for ResultsStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResultsStore").field("ledger", &self.ledger).finish()
    }
}

fn check_experiment_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ZcpError::InvalidArgument(format!(
            "experiment id {id:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"
        )))
    }
}

impl ResultsStore {
    /// Opens the experiment, creating its directory and empty ledger if
    /// needed.
    pub fn create(root: &Path, experiment_id: &str) -> Result<Self> {
        check_experiment_id(experiment_id)?;
        let dir = root.join(experiment_id);
        fs::create_dir_all(&dir).map_err(|e| ZcpError::io(&dir, e))?;
        let ledger = dir.join(LEDGER_FILE);
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger)
            .map_err(|e| ZcpError::io(&ledger, e))?;
        Self::open(root, experiment_id)
    }

    /// Opens an existing experiment.
    pub fn open(root: &Path, experiment_id: &str) -> Result<Self> {
        check_experiment_id(experiment_id)?;
        let dir = root.join(experiment_id);
        let ledger = dir.join(LEDGER_FILE);
        if !ledger.is_file() {
            return Err(ZcpError::UnknownExperiment(experiment_id.into()));
        }
        let store = Self {
            experiment_id: experiment_id.into(),
            dir,
            ledger,
            state: Mutex::new(Loaded::default()),
        };
        store.reload()?;
        Ok(store)
    }

    pub fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ledger_path(&self) -> &Path {
        &self.ledger
    }

    fn lock_state(&self) -> std::sync::MutexGuard<'_, Loaded> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Reads records appended since the last load, including those written
    /// by other handles or processes.
    pub fn reload(&self) -> Result<()> {
        let mut file = File::open(&self.ledger).map_err(|e| ZcpError::io(&self.ledger, e))?;
        file.lock_shared().map_err(|e| ZcpError::io(&self.ledger, e))?;
        let torn = self.lock_state().refresh(&mut file, &self.ledger)?;
        if torn {
            warn!("{}: ignoring incomplete trailing record", self.ledger.display());
        }
        Ok(())
    }

    /// Appends one record. Fails on schema violations, a foreign experiment
    /// id and keys already present in the ledger.
    pub fn append(&self, record: &StoreRecord) -> Result<()> {
        self.append_all(std::slice::from_ref(record))
    }

    /// Appends records under one lock acquisition. All-or-nothing with
    /// respect to validation and duplicate checks.
    pub fn append_all(&self, records: &[StoreRecord]) -> Result<()> {
        let mut lines = Vec::new();
        for r in records {
            if r.experiment_id != self.experiment_id {
                return Err(ZcpError::Schema(format!(
                    "record for experiment {:?} appended to {:?}",
                    r.experiment_id, self.experiment_id
                )));
            }
            r.validate()?;
            let mut line = serde_json::to_vec(r).map_err(|e| ZcpError::Schema(e.to_string()))?;
            line.push(b'\n');
            lines.extend_from_slice(&line);
        }
        if records.is_empty() {
            return Ok(());
        }
        let path = &self.ledger;
        let mut state = self.lock_state();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(|e| ZcpError::io(path, e))?;
        file.lock().map_err(|e| ZcpError::io(path, e))?;
        if state.refresh(&mut file, path)? {
            warn!("{}: truncating incomplete trailing record", path.display());
            file.set_len(state.offset).map_err(|e| ZcpError::io(path, e))?;
        }
        let mut batch = HashSet::new();
        for r in records {
            let key = r.unique_key();
            if state.keys.contains(&key) || !batch.insert(key.clone()) {
                return Err(ZcpError::DuplicateKey(format!("{:?} {:?}", key.0, key.1)));
            }
        }
        file.seek(SeekFrom::Start(state.offset)).map_err(|e| ZcpError::io(path, e))?;
        file.write_all(&lines).map_err(|e| ZcpError::io(path, e))?;
        file.sync_data().map_err(|e| ZcpError::io(path, e))?;
        state.offset += lines.len() as u64;
        for r in records {
            state.keys.insert(r.unique_key());
            state.records.push(r.clone());
        }
        Ok(())
    }

    /// Appends records whose keys are not yet present and returns how many
    /// were written.
    pub fn append_new(&self, records: &[StoreRecord]) -> Result<usize> {
        self.reload()?;
        let fresh: Vec<StoreRecord> = {
            let state = self.lock_state();
            let mut seen = HashSet::new();
            records
                .iter()
                .filter(|r| !state.keys.contains(&r.unique_key()) && seen.insert(r.unique_key()))
                .cloned()
                .collect()
        };
        self.append_all(&fresh)?;
        Ok(fresh.len())
    }

    pub fn contains(&self, kind: RecordKind, key: &RecordKey) -> bool {
        self.lock_state().keys.contains(&(kind, key.clone()))
    }

    /// All records in ledger order.
    pub fn records(&self) -> Vec<StoreRecord> {
        self.lock_state().records.clone()
    }

    pub fn len(&self) -> usize {
        self.lock_state().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn payloads<T: for<'de> Deserialize<'de>>(&self, kind: RecordKind) -> Result<Vec<(RecordKey, T)>> {
        self.lock_state()
            .records
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| Ok((r.key.clone(), from_value(kind, &r.payload)?)))
            .collect()
    }

    /// Sampled specs in the order they were recorded.
    pub fn specs(&self) -> Result<Vec<ArchSpec>> {
        Ok(self.payloads(RecordKind::Spec)?.into_iter().map(|(_, s)| s).collect())
    }

    /// Proxy scores by spec hash.
    pub fn proxy_scores(&self) -> Result<BTreeMap<String, BTreeMap<ProxyName, ProxyScore>>> {
        let mut out: BTreeMap<String, BTreeMap<ProxyName, ProxyScore>> = BTreeMap::new();
        for (key, score) in self.payloads::<ProxyScore>(RecordKind::ProxyScore)? {
            let hash = key.spec_hash.unwrap_or_default();
            out.entry(hash).or_default().insert(score.proxy, score);
        }
        Ok(out)
    }

    /// Run records by spec hash.
    pub fn run_records(&self) -> Result<BTreeMap<String, RunRecord>> {
        Ok(self
            .payloads::<RunRecord>(RecordKind::RunRecord)?
            .into_iter()
            .map(|(_, r)| (r.spec_hash.clone(), r))
            .collect())
    }

    /// Reports whose key starts with `name:`, in ledger order.
    pub fn reports(&self, name: &str) -> Vec<Value> {
        let prefix = format!("{name}:");
        self.lock_state()
            .records
            .iter()
            .filter(|r| r.kind == RecordKind::Report && r.key.report.as_deref().is_some_and(|k| k.starts_with(&prefix)))
            .map(|r| r.payload.clone())
            .collect()
    }

    /// Specs lacking any of `proxies`, and specs lacking a run record.
    pub fn resume_plan(&self, specs: &[ArchSpec], proxies: &[ProxyName]) -> Result<ResumePlan> {
        self.reload()?;
        let scores = self.proxy_scores()?;
        let runs = self.run_records()?;
        let mut to_score = Vec::new();
        let mut to_train = Vec::new();
        for spec in specs {
            let h = spec.spec_hash();
            let have = scores.get(&h);
            if proxies.iter().any(|p| have.is_none_or(|m| !m.contains_key(p))) {
                to_score.push(spec.clone());
            }
            if !runs.contains_key(&h) {
                to_train.push(spec.clone());
            }
        }
        Ok(ResumePlan { to_score, to_train })
    }

    fn checkpoint_path(&self, spec_hash: &str) -> Result<PathBuf> {
        if spec_hash.is_empty() || !spec_hash.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(ZcpError::InvalidArgument(format!("not a spec hash: {spec_hash:?}")));
        }
        Ok(self.dir.join(CHECKPOINT_DIR).join(format!("{spec_hash}.bin")))
    }

    /// Writes parameters as little-endian f64 via write-then-rename.
    pub fn save_checkpoint(&self, spec_hash: &str, params: &[TensorValue]) -> Result<()> {
        let path = self.checkpoint_path(spec_hash)?;
        let dir = path.parent().expect("checkpoint path has a parent");
        fs::create_dir_all(dir).map_err(|e| ZcpError::io(dir, e))?;
        let mut bytes = Vec::with_capacity(params.iter().map(|p| p.len() * 8).sum());
        for v in params.iter().flat_map(|p| p.data()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, &bytes).map_err(|e| ZcpError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ZcpError::io(&path, e))
    }

    pub fn has_checkpoint(&self, spec_hash: &str) -> bool {
        self.checkpoint_path(spec_hash).is_ok_and(|p| p.is_file())
    }

    /// Loads a checkpoint into `model`, whose parameter shapes must match.
    pub fn load_checkpoint(&self, spec_hash: &str, model: &mut Model) -> Result<()> {
        let path = self.checkpoint_path(spec_hash)?;
        if !path.is_file() {
            return Err(ZcpError::MissingCheckpoint(spec_hash.into()));
        }
        let bytes = fs::read(&path).map_err(|e| ZcpError::io(&path, e))?;
        let expected = model.params().num_scalars() * 8;
        if bytes.len() != expected {
            return Err(ZcpError::Schema(format!(
                "checkpoint {} has {} bytes, model needs {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let tensors = model
            .params()
            .iter()
            .map(|p| TensorValue::new(p.value.shape().to_vec(), values.by_ref().take(p.value.len()).collect()))
            .collect::<Result<Vec<_>>>()?;
        model.params_mut().restore(&tensors)
    }
}

/// Opens `experiment_id` under `root` and computes its resume plan.
pub fn resume_plan(root: &Path, experiment_id: &str, specs: &[ArchSpec], proxies: &[ProxyName]) -> Result<ResumePlan> {
    ResultsStore::open(root, experiment_id)?.resume_plan(specs, proxies)
}
