//! Single runs and random search with an append-only, resumable run ledger.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::Checkpoint;
use super::config::HyperConfig;
use super::model::{Approach, Model};
use super::trainer::train;
use crate::datamodel::{DataSplit, EntailmentInstance, Source};
use crate::error::{LiicError, Result};
use crate::evaluation::{tune_threshold, RunMetrics};
use crate::lmbackend::{BackendSpec, LmBackend};

pub const LEDGER_FILE: &str = "runs.jsonl";

/// Everything a run needs besides its hyperparameters.
pub struct RunContext<'a> {
    pub backend: Arc<dyn LmBackend>,
    /// Recorded in checkpoints so they can rebuild their backend.
    pub backend_spec: Option<BackendSpec>,
    pub approach: Approach,
    pub train: &'a DataSplit,
    pub dev2: &'a DataSplit,
    pub source: Option<Source>,
    /// Ledger and checkpoint directory; `None` keeps everything in memory.
    pub run_dir: Option<PathBuf>,
    pub interpolate_auc: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub approach: String,
    pub config: HyperConfig,
    pub pattern_set_hash: Option<String>,
    pub train_hash: String,
    pub dev2_hash: String,
    /// Present iff the run completed.
    pub dev2: Option<RunMetrics>,
    /// Mean dev₂ loss; breaks AUC ties in model selection.
    #[serde(default)]
    pub dev2_loss: Option<f64>,
    pub epoch_losses: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub wall_time_s: f64,
    pub error: Option<String>,
    pub truncations: u64,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.dev2.is_some()
    }
}

/// Moves a tuned threshold into the model's domain. Sentinels outside the
/// score range only ever clamp onto values no score can cross differently.
pub fn clamp_threshold(model: &Model, threshold: f64) -> f64 {
    let (lo, hi) = model.threshold_domain();
    threshold.clamp(lo, hi)
}

/// Tunes ϑ for F1 on `dev` and stores it in the model.
pub fn tune_on(model: &mut Model, dev: &[EntailmentInstance]) -> Result<(f64, Vec<f64>)> {
    let scores = model.score_instances(dev)?;
    let labels: Vec<bool> = dev.iter().map(|i| i.label).collect();
    let (raw, _) = tune_threshold(&scores, &labels)?;
    let t = clamp_threshold(model, raw);
    if t != raw {
        log::debug!("tuned threshold {raw} clamped to {t}");
    }
    model.set_threshold(t)?;
    Ok((t, scores))
}

pub fn evaluate(model: &Model, split: &[EntailmentInstance], threshold: f64, interpolate: bool) -> Result<RunMetrics> {
    let scores = model.score_instances(split)?;
    let labels: Vec<bool> = split.iter().map(|i| i.label).collect();
    RunMetrics::compute(&scores, &labels, threshold, interpolate)
}

/// Content address of a run: approach, config, data, backend and patterns.
pub fn run_id(ctx: &RunContext<'_>, cfg: &HyperConfig) -> String {
    let mut h = Sha256::new();
    h.update(ctx.approach.label());
    h.update(serde_json::to_string(cfg).expect("config serializes"));
    h.update(ctx.train.content_hash());
    h.update(ctx.dev2.content_hash());
    h.update(ctx.backend.id());
    if let Some(set) = ctx.approach.pattern_set() {
        h.update(set.content_hash());
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Trains one config, tunes ϑ on dev₂ and records dev₂ metrics. Training
/// failures produce a failed record rather than an error.
pub fn fit(ctx: &RunContext<'_>, cfg: &HyperConfig) -> Result<(RunRecord, Option<Model>)> {
    let start = Instant::now();
    let truncations_before = ctx.backend.truncation_count();
    let mut record = RunRecord {
        run_id: run_id(ctx, cfg),
        approach: ctx.approach.label(),
        config: *cfg,
        pattern_set_hash: ctx.approach.pattern_set().map(|s| s.content_hash()),
        train_hash: ctx.train.content_hash(),
        dev2_hash: ctx.dev2.content_hash(),
        dev2: None,
        dev2_loss: None,
        epoch_losses: Vec::new(),
        checkpoint: None,
        wall_time_s: 0.0,
        error: None,
        truncations: 0,
    };
    let mut model = ctx.approach.build(Arc::clone(&ctx.backend), cfg.seed);
    let result = train(&mut model, &ctx.train.instances, cfg).and_then(|out| {
        record.epoch_losses = out.epoch_losses;
        let (t, scores) = tune_on(&mut model, &ctx.dev2.instances)?;
        record.dev2_loss = Some(model.mean_loss(&ctx.dev2.instances)?);
        RunMetrics::compute(&scores, &ctx.dev2.labels(), t, ctx.interpolate_auc)
    });
    record.wall_time_s = start.elapsed().as_secs_f64();
    record.truncations = ctx.backend.truncation_count() - truncations_before;
    match result {
        Ok(metrics) => {
            record.dev2 = Some(metrics);
            Ok((record, Some(model)))
        }
        Err(e @ (LiicError::Numeric(_) | LiicError::Metric(_))) => {
            log::warn!("run {} failed: {e}", record.run_id);
            record.error = Some(e.to_string());
            Ok((record, None))
        }
        Err(e) => Err(e),
    }
}

pub struct SearchOutcome {
    pub records: Vec<RunRecord>,
    /// Index into `records` of the completed run chosen by [`select_best`].
    pub best: Option<usize>,
    pub best_model: Option<Model>,
}

impl SearchOutcome {
    /// Dev₂ AUCs of completed runs in config order.
    pub fn auc_scores(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.dev2.as_ref().map(|m| m.auc)).collect()
    }
}

/// Index of the completed record with the highest dev₂ AUC. Ties go to the
/// lower dev₂ loss, then to the earlier record.
pub fn select_best(records: &[RunRecord]) -> Option<usize> {
    let key = |r: &RunRecord| r.dev2.as_ref().map(|m| (m.auc, r.dev2_loss.unwrap_or(f64::INFINITY)));
    let mut best: Option<(usize, (f64, f64))> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some((auc, loss)) = key(r) {
            let better = match best {
                None => true,
                Some((_, (b_auc, b_loss))) => auc > b_auc || (auc == b_auc && loss < b_loss),
            };
            if better {
                best = Some((i, (auc, loss)));
            }
        }
    }
    best.map(|(i, _)| i)
}

pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LiicError::parse(path, i + 1, e.to_string())))
        .collect()
}

fn append_ledger(path: &Path, record: &RunRecord) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

/// Trains every config, evaluates on dev₂ and selects by restricted AUC.
/// With a run directory, completed runs already in the ledger (and with a
/// checkpoint on disk) are reused instead of retrained.
pub fn run_search(ctx: &RunContext<'_>, configs: &[HyperConfig]) -> Result<SearchOutcome> {
    if configs.is_empty() {
        return Err(LiicError::Config("run_search needs at least one config".into()));
    }
    let ledger_path = ctx.run_dir.as_ref().map(|d| d.join(LEDGER_FILE));
    if let Some(dir) = &ctx.run_dir {
        std::fs::create_dir_all(dir)?;
    }
    let previous: HashMap<String, RunRecord> = match &ledger_path {
        Some(p) => read_ledger(p)?.into_iter().map(|r| (r.run_id.clone(), r)).collect(),
        None => HashMap::new(),
    };
    let mut records = Vec::with_capacity(configs.len());
    let mut best_model: Option<(usize, Model)> = None;
    for (i, cfg) in configs.iter().enumerate() {
        let id = run_id(ctx, cfg);
        if let Some(prev) = previous.get(&id) {
            let reusable = prev.error.is_some() || prev.checkpoint.as_ref().is_some_and(|c| c.exists());
            if reusable {
                log::info!("reusing run {id}");
                records.push(prev.clone());
                continue;
            }
        }
        let (mut record, model) = fit(ctx, cfg)?;
        if let (Some(dir), Some(m)) = (&ctx.run_dir, &model) {
            let path = dir.join(format!("{id}.json"));
            Checkpoint::from_model(m, ctx.backend_spec.as_ref(), Some(cfg), ctx.source).save(&path)?;
            record.checkpoint = Some(path);
        }
        if let Some(p) = &ledger_path {
            append_ledger(p, &record)?;
        }
        records.push(record);
        if let Some(m) = model {
            if select_best(&records) == Some(i) {
                best_model = Some((i, m));
            }
        }
    }
    let best = select_best(&records);
    let best_model = match (best, best_model) {
        (Some(b), Some((i, m))) if b == i => Some(m),
        (Some(b), _) => match &records[b].checkpoint {
            Some(path) => Some(Checkpoint::load(path)?.into_model(Arc::clone(&ctx.backend))?),
            None => None,
        },
        (None, _) => None,
    };
    Ok(SearchOutcome {
        records,
        best,
        best_model,
    })
}
