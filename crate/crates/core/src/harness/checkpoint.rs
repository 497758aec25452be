//! Self-describing JSON checkpoints.
//!
//! ```text
//! {
//!   "format": "liic-checkpoint-v1",
//!   "approach": "nli" | "pattern",
//!   "params": {"head": {w1, b1, w2, b2, dropout_p}, "embeddings": {"rows": {...}} | null},
//!   "threshold": f64,
//!   "backend_id": "mock(d=16,seed=0)",
//!   "backend": {"kind": "mock", ...} | {"kind": "service", "url": ...} | null,
//!   "config": HyperConfig | null,
//!   "pattern_set": {"patterns": [...], "antipatterns": [...], "mode": ..., "mined_on": ...} | null,
//!   "trained_on": "sherliic" | "levyholt" | null
//! }
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::HyperConfig;
use super::model::{ApproachKind, Model};
use crate::datamodel::Source;
use crate::error::{LiicError, Result};
use crate::lmbackend::{BackendSpec, LmBackend, ModelParams};
use crate::nli::NliModel;
use crate::pattern::{Pattern, PatternModel, PatternSet, ScoringMode};

pub const CHECKPOINT_FORMAT: &str = "liic-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSetRecord {
    pub patterns: Vec<Pattern>,
    pub antipatterns: Vec<Pattern>,
    pub mode: ScoringMode,
    pub mined_on: Option<Source>,
}

impl PatternSetRecord {
    pub fn into_set(self) -> Result<PatternSet> {
        let set = PatternSet::new(self.patterns, self.antipatterns, self.mode)?;
        Ok(match self.mined_on {
            Some(s) => set.with_mined_on(s),
            None => set,
        })
    }
}

impl From<&PatternSet> for PatternSetRecord {
    fn from(set: &PatternSet) -> Self {
        PatternSetRecord {
            patterns: set.patterns().to_vec(),
            antipatterns: set.antipatterns().to_vec(),
            mode: set.mode,
            mined_on: set.mined_on,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub approach: ApproachKind,
    pub params: ModelParams,
    pub threshold: f64,
    pub backend_id: String,
    pub backend: Option<BackendSpec>,
    pub config: Option<HyperConfig>,
    pub pattern_set: Option<PatternSetRecord>,
    pub trained_on: Option<Source>,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        backend: Option<&BackendSpec>,
        config: Option<&HyperConfig>,
        trained_on: Option<Source>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            approach: model.kind(),
            params: model.params().clone(),
            threshold: model.threshold(),
            backend_id: model.backend().id(),
            backend: backend.cloned(),
            config: config.copied(),
            pattern_set: model.pattern_set().map(PatternSetRecord::from),
            trained_on,
        }
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_slice(&std::fs::read(path.as_ref())?)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(LiicError::Config(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        Ok(ckpt)
    }

    /// Rebuilds the model on `backend`, which must match the recorded id.
    pub fn into_model(self, backend: Arc<dyn LmBackend>) -> Result<Model> {
        if backend.id() != self.backend_id {
            return Err(LiicError::Contract(format!(
                "checkpoint was trained on {} but backend is {}",
                self.backend_id,
                backend.id()
            )));
        }
        let mut model = match (self.approach, self.pattern_set) {
            (ApproachKind::Nli, _) => Model::Nli(NliModel::new(backend, self.params)),
            (ApproachKind::Pattern, Some(rec)) => {
                Model::Pattern(PatternModel::new(backend, self.params, rec.into_set()?))
            }
            (ApproachKind::Pattern, None) => {
                return Err(LiicError::Config("pattern checkpoint without pattern set".into()));
            }
        };
        model.set_threshold(self.threshold)?;
        Ok(model)
    }

    /// Builds the recorded backend and the model on it.
    pub fn restore(self) -> Result<Model> {
        let spec = self
            .backend
            .clone()
            .ok_or_else(|| LiicError::Config("checkpoint does not describe its backend".into()))?;
        let backend: Arc<dyn LmBackend> = Arc::from(spec.build()?);
        self.into_model(backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::model::Approach;
    use crate::lmbackend::MockConfig;

    #[test]
    fn round_trip_preserves_scores() {
        let spec = BackendSpec::Mock(MockConfig {
            dim: 6,
            ..MockConfig::default()
        });
        let backend: Arc<dyn LmBackend> = Arc::from(spec.build().unwrap());
        let set = PatternSet::manual(ScoringMode::PhiPsi).unwrap().with_mined_on(Source::Sherliic);
        let mut model = Approach::Pattern(set).build(backend, 4);
        model.set_threshold(-0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::from_model(&model, Some(&spec), None, Some(Source::Sherliic))
            .save(&path)
            .unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.pattern_set.as_ref().unwrap().mined_on, Some(Source::Sherliic));
        let restored = back.restore().unwrap();
        assert_eq!(restored.threshold(), -0.25);
        let e = |t: &str| crate::datamodel::VerbalExpression::from_text(t, None, Source::LevyHolt).unwrap();
        let (p, h) = (e("beat"), e("fought"));
        let input = crate::datamodel::PairInput {
            prem: &p,
            hypo: &h,
            arg_left: "A",
            arg_right: "B",
        };
        assert_eq!(model.scores(&[input]).unwrap(), restored.scores(&[input]).unwrap());
    }

    #[test]
    fn backend_mismatch_rejected() {
        let spec = BackendSpec::Mock(MockConfig::default());
        let backend: Arc<dyn LmBackend> = Arc::from(spec.build().unwrap());
        let model = Approach::Nli.build(backend, 0);
        let ckpt = Checkpoint::from_model(&model, Some(&spec), None, None);
        let other: Arc<dyn LmBackend> = Arc::from(
            BackendSpec::Mock(MockConfig {
                seed: 1,
                ..MockConfig::default()
            })
            .build()
            .unwrap(),
        );
        assert!(matches!(ckpt.into_model(other), Err(LiicError::Contract(_))));
    }
}
