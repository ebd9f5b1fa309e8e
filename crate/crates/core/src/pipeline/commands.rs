use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::arch::{instantiate, sample_distinct_architectures, ArchSpec};
use crate::data::{
    generate_synthetic_with, load_manifest, prepare_datasets, score_batch, write_dataset, DatasetSplits, WINDOW_LEN,
};
use crate::error::{Result, ZcpError};
use crate::eval::{evaluate_table, noise_robustness, EvalReport, NoiseReport, ResultsTable, TableRow};
use crate::proxies::{ensemble, score_model, ProxyName, ProxyScore};
use crate::store::{ResultsStore, StoreRecord};
use crate::train::{evaluate_f1, train, RunRecord};

use super::config::ExperimentConfig;

pub const SCORES_CSV: &str = "scores.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const RANDOM_SEARCH_CSV: &str = "random_search.csv";
pub const REPORT_JSON: &str = "report.json";
pub const NOISE_REPORT_CSV: &str = "noise_report.csv";

/// Seed for one architecture: the first 8 bytes (little endian) of
/// SHA-256 over the base seed's little-endian bytes followed by the hash.
pub fn arch_seed(base: u64, spec_hash: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(spec_hash.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Which sampled architectures to train.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainSubset {
    All,
    /// The `k` best by one proxy (ties by spec hash).
    TopK { k: usize, proxy: ProxyName },
    Hashes(Vec<String>),
}

/// Records written by a stage and work units found already complete.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub added: usize,
    pub skipped: usize,
}

/// One experiment: its validated configuration and worker pool.
pub struct Experiment {
    cfg: ExperimentConfig,
    pool: rayon::ThreadPool,
}

fn stage_err(msg: impl Into<String>) -> ZcpError {
    ZcpError::StageOrder(msg.into())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| ZcpError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ZcpError::io(path, e))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| ZcpError::Schema(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| ZcpError::Schema(e.to_string()))
}

/// First error of a batch of worker results, after all have run.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs())
            .build()
            .map_err(|e| ZcpError::Config(format!("worker pool: {e}")))?;
        Ok(Self { cfg, pool })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn dir(&self) -> PathBuf {
        self.cfg.output_dir.join(&self.cfg.experiment_id)
    }

    fn open_store(&self, stage: &str) -> Result<ResultsStore> {
        ResultsStore::open(&self.cfg.output_dir, &self.cfg.experiment_id).map_err(|e| match e {
            ZcpError::UnknownExperiment(id) => stage_err(format!("{stage}: experiment {id:?} has not been sampled")),
            other => other,
        })
    }

    fn load_data(&self) -> Result<DatasetSplits> {
        let (recordings, names) = match (&self.cfg.data.manifest, &self.cfg.data.synthetic) {
            (Some(m), _) => load_manifest(m)?,
            (None, Some(s)) => (
                generate_synthetic_with(s, self.cfg.seeds.synthetic.expect("validated"))?,
                s.class_names(),
            ),
            (None, None) => unreachable!("validated"),
        };
        if names.len() != self.cfg.search_space.num_classes {
            return Err(ZcpError::Config(format!(
                "dataset has {} classes but search_space.num_classes = {}",
                names.len(),
                self.cfg.search_space.num_classes
            )));
        }
        prepare_datasets(&recordings, &names, self.cfg.seeds.data)
    }

    fn sampled_specs(&self, store: &ResultsStore, stage: &str) -> Result<Vec<ArchSpec>> {
        let specs = store.specs()?;
        if specs.is_empty() {
            return Err(stage_err(format!("{stage}: no sampled architectures")));
        }
        Ok(specs)
    }

    fn model_for(&self, spec: &ArchSpec) -> Result<crate::nn::Model> {
        instantiate(
            spec,
            self.cfg.search_space.num_classes,
            WINDOW_LEN,
            arch_seed(self.cfg.seeds.init, &spec.spec_hash()),
        )
    }

    /// Draws the architectures and records them. Re-running with the same
    /// settings adds nothing; different settings on an existing experiment
    /// are rejected.
    pub fn sample(&self) -> Result<StageSummary> {
        let specs = sample_distinct_architectures(&self.cfg.search_space, self.cfg.seeds.sampler)?;
        let store = ResultsStore::create(&self.cfg.output_dir, &self.cfg.experiment_id)?;
        let existing = store.specs()?;
        if !existing.is_empty() {
            if existing != specs {
                return Err(ZcpError::Config(format!(
                    "experiment {:?} was sampled with different settings",
                    self.cfg.experiment_id
                )));
            }
            return Ok(StageSummary {
                added: 0,
                skipped: specs.len(),
            });
        }
        let records = specs
            .iter()
            .map(|s| StoreRecord::spec(&self.cfg.experiment_id, s))
            .collect::<Result<Vec<_>>>()?;
        let added = store.append_new(&records)?;
        info!("sampled {added} architectures into {}", store.dir().display());
        Ok(StageSummary {
            added,
            skipped: specs.len() - added,
        })
    }

    /// Scores every sampled architecture lacking a proxy value, then the
    /// ensemble, and writes `scores.csv`.
    pub fn score(&self) -> Result<StageSummary> {
        let store = self.open_store("score")?;
        let specs = self.sampled_specs(&store, "score")?;
        let components = self.cfg.component_proxies();
        let plan = store.resume_plan(&specs, &components)?;
        let mut summary = StageSummary {
            skipped: specs.len() - plan.to_score.len(),
            ..Default::default()
        };
        if !plan.to_score.is_empty() {
            let data = self.load_data()?;
            let (batch, labels) = score_batch(&data.train, self.cfg.seeds.score_batch)?;
            let id = &self.cfg.experiment_id;
            let results: Vec<Result<usize>> = self.pool.install(|| {
                plan.to_score
                    .par_iter()
                    .map(|spec| {
                        let hash = spec.spec_hash();
                        let mut model = self.model_for(spec)?;
                        let scores = score_model(&mut model, &batch, &labels, &data.val, &components)?;
                        let records = scores
                            .iter()
                            .map(|s| StoreRecord::proxy_score(id, &hash, s))
                            .collect::<Result<Vec<_>>>()?;
                        let n = store.append_new(&records)?;
                        info!("scored {hash}");
                        Ok(n)
                    })
                    .collect()
            });
            summary.added += first_error(results)?.iter().sum::<usize>();
        }
        if self.cfg.wants_ensemble() {
            summary.added += self.score_ensemble(&store, &specs)?;
        }
        self.write_scores_csv(&store, &specs)?;
        Ok(summary)
    }

    fn score_ensemble(&self, store: &ResultsStore, specs: &[ArchSpec]) -> Result<usize> {
        let all = store.proxy_scores()?;
        let hashes: Vec<String> = specs.iter().map(ArchSpec::spec_hash).collect();
        let mut columns: BTreeMap<ProxyName, Vec<ProxyScore>> = BTreeMap::new();
        for p in ProxyName::COMPONENTS {
            let col = hashes
                .iter()
                .map(|h| all.get(h).and_then(|m| m.get(&p)).copied())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| stage_err(format!("ensemble: {p} scores incomplete")))?;
            columns.insert(p, col);
        }
        let values = ensemble(&columns, &ProxyName::COMPONENTS)?;
        let records = hashes
            .iter()
            .zip(values)
            .map(|(h, v)| StoreRecord::proxy_score(&self.cfg.experiment_id, h, &ProxyScore::checked(ProxyName::Ensemble, v)))
            .collect::<Result<Vec<_>>>()?;
        store.append_new(&records)
    }

    fn write_scores_csv(&self, store: &ResultsStore, specs: &[ArchSpec]) -> Result<()> {
        let all = store.proxy_scores()?;
        let proxies = self.cfg.all_proxies();
        let mut rows = Vec::new();
        for spec in specs {
            let h = spec.spec_hash();
            for p in &proxies {
                if let Some(s) = all.get(&h).and_then(|m| m.get(p)) {
                    rows.push(vec![h.clone(), p.to_string(), s.value.to_string(), s.degenerate.to_string()]);
                }
            }
        }
        let text = csv_text(&["spec_hash", "proxy", "value", "degenerate_flag"], rows)?;
        write_file(&store.dir().join(SCORES_CSV), &text)
    }

    fn complete_scores(
        &self,
        store: &ResultsStore,
        specs: &[ArchSpec],
        stage: &str,
    ) -> Result<BTreeMap<String, BTreeMap<ProxyName, ProxyScore>>> {
        let all = store.proxy_scores()?;
        let proxies = self.cfg.all_proxies();
        for s in specs {
            let h = s.spec_hash();
            if proxies.iter().any(|p| all.get(&h).is_none_or(|m| !m.contains_key(p))) {
                return Err(stage_err(format!("{stage}: scoring incomplete (run `score` first)")));
            }
        }
        Ok(all)
    }

    /// Resolves a subset to specs in sampling (or proxy-rank) order.
    fn select(
        &self,
        specs: &[ArchSpec],
        scores: &BTreeMap<String, BTreeMap<ProxyName, ProxyScore>>,
        subset: &TrainSubset,
    ) -> Result<Vec<ArchSpec>> {
        match subset {
            TrainSubset::All => Ok(specs.to_vec()),
            TrainSubset::TopK { k, proxy } => {
                if !self.cfg.all_proxies().contains(proxy) {
                    return Err(ZcpError::MissingProxy(format!("{proxy} is not configured for this experiment")));
                }
                if *k == 0 || *k > specs.len() {
                    return Err(ZcpError::InvalidArgument(format!("top-k {k} outside 1..={}", specs.len())));
                }
                let mut keyed: Vec<(f64, String, &ArchSpec)> = specs
                    .iter()
                    .map(|s| {
                        let h = s.spec_hash();
                        (scores[&h][proxy].rank_key(), h, s)
                    })
                    .collect();
                keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
                Ok(keyed.into_iter().take(*k).map(|(_, _, s)| s.clone()).collect())
            }
            TrainSubset::Hashes(hashes) => hashes
                .iter()
                .map(|h| {
                    specs
                        .iter()
                        .find(|s| &s.spec_hash() == h)
                        .cloned()
                        .ok_or_else(|| ZcpError::InvalidArgument(format!("{h} is not a sampled spec hash")))
                })
                .collect(),
        }
    }

    /// Trains the selected architectures lacking a run record, storing the
    /// best-epoch checkpoint, and writes `runs.csv`.
    pub fn train(&self, subset: &TrainSubset) -> Result<StageSummary> {
        let store = self.open_store("train")?;
        let specs = self.sampled_specs(&store, "train")?;
        let scores = self.complete_scores(&store, &specs, "train")?;
        let chosen = self.select(&specs, &scores, subset)?;
        let plan = store.resume_plan(&chosen, &[])?;
        let mut summary = StageSummary {
            skipped: chosen.len() - plan.to_train.len(),
            ..Default::default()
        };
        if !plan.to_train.is_empty() {
            let data = self.load_data()?;
            let id = &self.cfg.experiment_id;
            let results: Vec<Result<usize>> = self.pool.install(|| {
                plan.to_train
                    .par_iter()
                    .map(|spec| {
                        let hash = spec.spec_hash();
                        let mut model = self.model_for(spec)?;
                        let cfg = self.cfg.train.with_seed(arch_seed(self.cfg.seeds.train, &hash));
                        let mut outcome = train(&mut model, &hash, &data, &cfg)?;
                        outcome.record.proxy_scores =
                            scores[&hash].iter().map(|(p, s)| (p.to_string(), s.value)).collect();
                        store.save_checkpoint(&hash, &outcome.checkpoint)?;
                        let n = store.append_new(&[StoreRecord::run_record(id, &outcome.record)?])?;
                        info!(
                            "trained {hash}: val {:.4} test {:.4}{}",
                            outcome.record.best_val_f1,
                            outcome.record.test_f1_at_best_val,
                            if outcome.record.diverged { " (diverged)" } else { "" }
                        );
                        Ok(n)
                    })
                    .collect()
            });
            summary.added = first_error(results)?.iter().sum();
        }
        self.write_runs_csv(&store, &specs)?;
        Ok(summary)
    }

    fn write_runs_csv(&self, store: &ResultsStore, specs: &[ArchSpec]) -> Result<()> {
        let runs = store.run_records()?;
        let rows = specs.iter().filter_map(|s| runs.get(&s.spec_hash())).map(|r| {
            vec![
                r.spec_hash.clone(),
                r.seed.to_string(),
                r.best_val_f1.to_string(),
                r.test_f1_at_best_val.to_string(),
                r.best_epoch.to_string(),
                r.epochs_completed.to_string(),
                r.diverged.to_string(),
                r.wall_time_s.to_string(),
            ]
        });
        let header = [
            "spec_hash",
            "seed",
            "best_val_f1",
            "test_f1_at_best_val",
            "best_epoch",
            "epochs_completed",
            "diverged",
            "wall_time_s",
        ];
        let text = csv_text(&header, rows)?;
        write_file(&store.dir().join(RUNS_CSV), &text)
    }

    /// Trained architectures joined with their proxy scores, in sampling
    /// order.
    pub fn results_table(&self) -> Result<ResultsTable> {
        let store = self.open_store("evaluate")?;
        self.table_from(&store).map(|(t, _)| t)
    }

    fn table_from(&self, store: &ResultsStore) -> Result<(ResultsTable, Vec<ArchSpec>)> {
        let specs = self.sampled_specs(store, "evaluate")?;
        let scores = self.complete_scores(store, &specs, "evaluate")?;
        let runs: BTreeMap<String, RunRecord> = store.run_records()?;
        let proxies = self.cfg.all_proxies();
        let mut rows = Vec::new();
        let mut trained = Vec::new();
        for spec in &specs {
            let h = spec.spec_hash();
            if let Some(r) = runs.get(&h) {
                rows.push(TableRow {
                    spec_hash: h.clone(),
                    scores: proxies.iter().map(|p| (*p, scores[&h][p])).collect(),
                    best_val_f1: r.best_val_f1,
                    test_f1: r.test_f1_at_best_val,
                    diverged: r.diverged,
                });
                trained.push(spec.clone());
            }
        }
        if rows.len() < 2 {
            return Err(stage_err(format!(
                "evaluate: need at least 2 trained architectures, found {} (run `train` first)",
                rows.len()
            )));
        }
        Ok((ResultsTable::new(rows)?, trained))
    }

    /// Computes all metrics and writes `report.csv`, `random_search.csv`
    /// and `report.json`.
    pub fn evaluate(&self) -> Result<EvalReport> {
        let store = self.open_store("evaluate")?;
        let (table, _) = self.table_from(&store)?;
        let report = evaluate_table(&table, &self.cfg.eval_settings())?;
        let dir = store.dir();
        write_file(&dir.join(REPORT_CSV), report.to_csv().as_bytes())?;
        write_file(&dir.join(RANDOM_SEARCH_CSV), report.random_search_csv().as_bytes())?;
        #[derive(Serialize)]
        struct Summary<'a> {
            report: &'a EvalReport,
            table: &'a [TableRow],
        }
        let json = serde_json::to_string_pretty(&Summary {
            report: &report,
            table: table.rows(),
        })
        .map_err(|e| ZcpError::Schema(e.to_string()))?;
        write_file(&dir.join(REPORT_JSON), json.as_bytes())?;
        store.append_new(&[StoreRecord::report(&self.cfg.experiment_id, "evaluation", &report)?])?;
        Ok(report)
    }

    /// Re-evaluates every trained architecture's checkpoint on noisy test
    /// data and writes `noise_report.csv`.
    pub fn noise_eval(&self) -> Result<NoiseReport> {
        let store = self.open_store("noise-eval")?;
        let (table, trained) = self.table_from(&store)?;
        for s in &trained {
            if !store.has_checkpoint(&s.spec_hash()) {
                return Err(ZcpError::MissingCheckpoint(s.spec_hash()));
            }
        }
        let data = self.load_data()?;
        let report = self.pool.install(|| {
            noise_robustness(&table, &data.test, &self.cfg.noise.variances, self.cfg.seeds.noise, |i, ds| {
                let spec = &trained[i];
                let mut model = self.model_for(spec)?;
                store.load_checkpoint(&spec.spec_hash(), &mut model)?;
                evaluate_f1(&model, ds)
            })
        })?;
        for level in report.levels.iter().filter(|l| l.variance == 0.0) {
            let stored = table.rows().iter().map(|r| r.test_f1);
            if !level.test_f1.iter().copied().eq(stored) {
                warn!("noiseless re-evaluation differs from stored test F1");
            }
        }
        write_file(&store.dir().join(NOISE_REPORT_CSV), report.to_csv().as_bytes())?;
        store.append_new(&[StoreRecord::report(&self.cfg.experiment_id, "noise", &report)?])?;
        Ok(report)
    }
}

/// Writes the configured synthetic corpus as per-user CSVs plus a manifest
/// under `<output_dir>/<experiment_id>/data/` and returns the manifest path.
pub fn synth(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let (Some(s), Some(seed)) = (&cfg.data.synthetic, cfg.seeds.synthetic) else {
        return Err(ZcpError::Config("synth needs [data.synthetic] and seeds.synthetic".into()));
    };
    let recordings = generate_synthetic_with(s, seed)?;
    let dir = cfg.output_dir.join(&cfg.experiment_id).join("data");
    let manifest = write_dataset(&dir, &recordings, &s.class_names())?;
    info!("wrote {} synthetic recordings to {}", recordings.len(), dir.display());
    Ok(manifest)
}
