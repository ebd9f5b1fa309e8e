//! On-disk dataset layout: one CSV per user (`timestamp,ax,ay,az,label`)
//! plus a TOML manifest naming the files, sample rate and class table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::RawRecording;
use crate::error::{Result, ZcpError};

pub const CSV_HEADER: [&str; 5] = ["timestamp", "ax", "ay", "az", "label"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestUser {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub sample_rate_hz: f64,
    pub class_names: Vec<String>,
    pub users: Vec<ManifestUser>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    timestamp: f64,
    ax: f64,
    ay: f64,
    az: f64,
    label: usize,
}

pub fn read_user_csv(path: &Path, user_id: &str, sample_rate_hz: f64) -> Result<RawRecording> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != CSV_HEADER {
        return Err(ZcpError::Parse {
            context: path.display().to_string(),
            message: format!("expected header {}, got {}", CSV_HEADER.join(","), header.join(",")),
        });
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.timestamp < last_t {
            return Err(ZcpError::Parse {
                context: format!("{} row {}", path.display(), i + 2),
                message: "timestamps must be monotone".into(),
            });
        }
        last_t = row.timestamp;
        samples.push([row.ax, row.ay, row.az]);
        labels.push(row.label);
    }
    Ok(RawRecording {
        user_id: user_id.to_owned(),
        sample_rate_hz,
        samples,
        labels,
    })
}

pub fn write_user_csv(path: &Path, rec: &RawRecording) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (i, (s, &label)) in rec.samples.iter().zip(&rec.labels).enumerate() {
        w.serialize(CsvRow {
            timestamp: i as f64 / rec.sample_rate_hz,
            ax: s[0],
            ay: s[1],
            az: s[2],
            label,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ZcpError::io(path, e))
}

/// Loads every recording listed in a manifest.
pub fn load_manifest(path: &Path) -> Result<(Vec<RawRecording>, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| ZcpError::io(path, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| ZcpError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let recs = manifest
        .users
        .iter()
        .map(|u| read_user_csv(&base.join(&u.path), &u.id, manifest.sample_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    Ok((recs, manifest.class_names))
}

/// Writes one CSV per recording plus `manifest.toml` into `dir`.
pub fn write_dataset(dir: &Path, recordings: &[RawRecording], class_names: &[String]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| ZcpError::io(dir, e))?;
    let rate = recordings.first().map_or(50.0, |r| r.sample_rate_hz);
    let mut users = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let file = PathBuf::from(format!("{}.csv", rec.user_id));
        write_user_csv(&dir.join(&file), rec)?;
        users.push(ManifestUser {
            id: rec.user_id.clone(),
            path: file,
        });
    }
    let manifest = DatasetManifest {
        sample_rate_hz: rate,
        class_names: class_names.to_vec(),
        users,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| ZcpError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| ZcpError::io(&path, e))?;
    Ok(path)
}

fn csv_err(path: &Path, e: csv::Error) -> ZcpError {
    ZcpError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}
