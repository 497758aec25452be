//! Cross-dataset evaluation at standard thresholds, and pattern-count sweeps.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::HyperConfig;
use super::model::{Approach, Model};
use super::search::{fit, RunContext};
use crate::datamodel::{DataSplit, EntailmentInstance, Source};
use crate::error::{LiicError, Result};
use crate::evaluation::RunMetrics;
use crate::mining::top_n_patterns;
use crate::pattern::{Pattern, PatternModel, PatternSet, Polarity, ScoringMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Inputs,
    Labels,
}

/// A split whose labels are held apart from its inputs; every access is logged.
pub struct AuditedSplit {
    source: Source,
    inputs: Vec<EntailmentInstance>,
    labels: Vec<bool>,
    log: Mutex<Vec<Access>>,
}

impl AuditedSplit {
    /// Copies `split`, blanking the labels of the input view.
    pub fn new(split: &DataSplit, source: Source) -> Self {
        let labels = split.labels();
        let inputs = split
            .instances
            .iter()
            .cloned()
            .map(|mut i| {
                i.label = false;
                i
            })
            .collect();
        AuditedSplit {
            source,
            inputs,
            labels,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn inputs(&self) -> &[EntailmentInstance] {
        self.log.lock().expect("audit log").push(Access::Inputs);
        &self.inputs
    }

    pub fn labels(&self) -> &[bool] {
        self.log.lock().expect("audit log").push(Access::Labels);
        &self.labels
    }

    pub fn access_log(&self) -> Vec<Access> {
        self.log.lock().expect("audit log").clone()
    }
}

/// Scores the target split at the standard threshold (0.5 or 0). Labels are
/// read once, after all scores exist. Pattern sets mined on the target
/// dataset are rejected.
pub fn transfer_eval(model: &Model, target: &AuditedSplit, interpolate: bool) -> Result<RunMetrics> {
    if let Some(mined_on) = model.pattern_set().and_then(|s| s.mined_on) {
        if mined_on == target.source() {
            return Err(LiicError::Contract(format!(
                "patterns were mined on {mined_on}, the transfer target"
            )));
        }
    }
    let scores = model.score_instances(target.inputs())?;
    RunMetrics::compute(&scores, target.labels(), model.standard_threshold(), interpolate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub mode: ScoringMode,
    pub train_n: usize,
    pub eval_n: usize,
    /// Patterns actually used at evaluation after clamping to the pool.
    pub eval_n_used: usize,
    pub test: Option<RunMetrics>,
    pub error: Option<String>,
}

fn top_set(ranked: &[Pattern], n: usize, mode: ScoringMode, source: Option<Source>) -> Result<PatternSet> {
    let (pats, antis) = top_n_patterns(ranked, n)?;
    let set = PatternSet::new(pats, antis, mode)?;
    Ok(match source {
        Some(s) => set.with_mined_on(s),
        None => set,
    })
}

/// Trains with the top `train_n` patterns and evaluates each with the top
/// `eval_n` (threshold re-tuned on dev₂ for the evaluation set), for every
/// pair of values in `n_values`. `ranked` is in rank order, both polarities.
pub fn n_sweep(
    ctx: &RunContext<'_>,
    ranked: &[Pattern],
    n_values: &[usize],
    cfg: &HyperConfig,
    mode: ScoringMode,
    test: &DataSplit,
) -> Result<Vec<SweepCell>> {
    let pool = ranked.iter().filter(|p| p.polarity == Polarity::Pattern).count();
    let mut grid = Vec::with_capacity(n_values.len() * n_values.len());
    for &train_n in n_values {
        let train_ctx = RunContext {
            backend: std::sync::Arc::clone(&ctx.backend),
            backend_spec: ctx.backend_spec.clone(),
            approach: Approach::Pattern(top_set(ranked, train_n, mode, ctx.source)?),
            train: ctx.train,
            dev2: ctx.dev2,
            source: ctx.source,
            run_dir: None,
            interpolate_auc: ctx.interpolate_auc,
        };
        let (record, model) = fit(&train_ctx, cfg)?;
        for &eval_n in n_values {
            let eval_n_used = if eval_n > pool {
                log::warn!("eval_n = {eval_n} exceeds the pool of {pool} patterns; clamping");
                pool
            } else {
                eval_n
            };
            let mut cell = SweepCell {
                mode,
                train_n,
                eval_n,
                eval_n_used,
                test: None,
                error: record.error.clone(),
            };
            if let Some(Model::Pattern(m)) = &model {
                let mut eval_model = Model::Pattern(PatternModel::new(
                    std::sync::Arc::clone(&m.backend),
                    m.params.clone(),
                    top_set(ranked, eval_n_used, mode, ctx.source)?,
                ));
                let (t, _) = super::search::tune_on(&mut eval_model, &ctx.dev2.instances)?;
                cell.test = Some(super::search::evaluate(&eval_model, &test.instances, t, ctx.interpolate_auc)?);
            }
            grid.push(cell);
        }
    }
    Ok(grid)
}
