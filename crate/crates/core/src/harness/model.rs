//! The two classifier families behind one interface.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datamodel::{EntailmentInstance, PairInput};
use crate::error::{LiicError, Result};
use crate::lmbackend::{Example, LmBackend, ModelParams};
use crate::nli::{training_example, NliModel};
use crate::pattern::{chunked_training_view, PatternChunk, PatternModel, PatternSet, DEFAULT_CHUNK_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproachKind {
    Nli,
    Pattern,
}

/// What to train: the NLI classifier or a pattern classifier over a set.
#[derive(Clone, Debug, PartialEq)]
pub enum Approach {
    Nli,
    Pattern(PatternSet),
}

impl Approach {
    pub fn kind(&self) -> ApproachKind {
        match self {
            Approach::Nli => ApproachKind::Nli,
            Approach::Pattern(_) => ApproachKind::Pattern,
        }
    }

    /// Short label such as `nli` or `pattern:phi_psi:<hash prefix>`.
    pub fn label(&self) -> String {
        match self {
            Approach::Nli => "nli".into(),
            Approach::Pattern(set) => {
                let mode = match set.mode {
                    crate::pattern::ScoringMode::PhiPsi => "phi_psi",
                    crate::pattern::ScoringMode::PhiOnly => "phi_only",
                };
                format!("pattern:{mode}:{}", &set.content_hash()[..12])
            }
        }
    }

    pub fn pattern_set(&self) -> Option<&PatternSet> {
        match self {
            Approach::Nli => None,
            Approach::Pattern(set) => Some(set),
        }
    }

    pub fn build(&self, backend: Arc<dyn LmBackend>, seed: u64) -> Model {
        let params = ModelParams::init(backend.as_ref(), seed);
        match self {
            Approach::Nli => Model::Nli(NliModel::new(backend, params)),
            Approach::Pattern(set) => Model::Pattern(PatternModel::new(backend, params, set.clone())),
        }
    }
}

pub enum Model {
    Nli(NliModel),
    Pattern(PatternModel),
}

impl Model {
    pub fn kind(&self) -> ApproachKind {
        match self {
            Model::Nli(_) => ApproachKind::Nli,
            Model::Pattern(_) => ApproachKind::Pattern,
        }
    }

    pub fn backend(&self) -> &Arc<dyn LmBackend> {
        match self {
            Model::Nli(m) => &m.backend,
            Model::Pattern(m) => &m.backend,
        }
    }

    pub fn params(&self) -> &ModelParams {
        match self {
            Model::Nli(m) => &m.params,
            Model::Pattern(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        match self {
            Model::Nli(m) => &mut m.params,
            Model::Pattern(m) => &mut m.params,
        }
    }

    pub fn pattern_set(&self) -> Option<&PatternSet> {
        match self {
            Model::Nli(_) => None,
            Model::Pattern(m) => Some(&m.pattern_set),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Model::Nli(m) => m.threshold,
            Model::Pattern(m) => m.threshold,
        }
    }

    /// Threshold without tuning: 0.5 for probabilities, 0 for margins.
    pub fn standard_threshold(&self) -> f64 {
        match self {
            Model::Nli(_) => 0.5,
            Model::Pattern(_) => 0.0,
        }
    }

    /// Admissible thresholds: [0, 1] for NLI, [−1, 1] for margins.
    pub fn threshold_domain(&self) -> (f64, f64) {
        match self {
            Model::Nli(_) => (0.0, 1.0),
            Model::Pattern(_) => (-1.0, 1.0),
        }
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let (lo, hi) = self.threshold_domain();
        if !(lo..=hi).contains(&threshold) {
            return Err(LiicError::Contract(format!("threshold {threshold} outside [{lo}, {hi}]")));
        }
        match self {
            Model::Nli(m) => m.threshold = threshold,
            Model::Pattern(m) => m.threshold = threshold,
        }
        Ok(())
    }

    /// Decision scores: `P_NLI(y=1)` or the margin `s`.
    pub fn scores(&self, inputs: &[PairInput<'_>]) -> Result<Vec<f64>> {
        match self {
            Model::Nli(m) => m.p_nli_batch(inputs),
            Model::Pattern(m) => inputs.iter().map(|i| m.score(i).map(|s| s.s)).collect(),
        }
    }

    pub fn score_instances(&self, instances: &[EntailmentInstance]) -> Result<Vec<f64>> {
        let inputs: Vec<PairInput<'_>> = instances.iter().map(EntailmentInstance::input).collect();
        self.scores(&inputs)
    }

    /// Mean evaluation-mode loss per instance.
    pub fn mean_loss(&self, instances: &[EntailmentInstance]) -> Result<f64> {
        if instances.is_empty() {
            return Err(LiicError::Contract("mean loss of an empty set".into()));
        }
        let batch: Vec<(PairInput<'_>, bool)> = instances.iter().map(|i| (i.input(), i.label)).collect();
        let total = match self {
            Model::Nli(m) => m.loss(&batch)?,
            Model::Pattern(m) => m.loss(&batch)?,
        };
        Ok(total / instances.len() as f64)
    }

    /// Training units, each a list of weighted NLL terms. NLI has one unit
    /// per instance; a pattern model has one per instance and chunk, with
    /// chunks of five only when Φ or Ψ exceeds five.
    pub fn training_units(&self, instances: &[EntailmentInstance]) -> Result<Vec<Vec<Example>>> {
        match self {
            Model::Nli(_) => Ok(instances
                .iter()
                .map(|i| vec![training_example(&i.input(), i.label)])
                .collect()),
            Model::Pattern(m) => {
                let set = &m.pattern_set;
                let chunks = if set.patterns().len() > DEFAULT_CHUNK_SIZE
                    || set.active_antipatterns().len() > DEFAULT_CHUNK_SIZE
                {
                    chunked_training_view(set, DEFAULT_CHUNK_SIZE)?
                } else {
                    vec![PatternChunk::from(set)]
                };
                Ok(instances
                    .iter()
                    .flat_map(|i| chunks.iter().map(move |c| c.training_examples(&i.input(), i.label)))
                    .collect())
            }
        }
    }
}
