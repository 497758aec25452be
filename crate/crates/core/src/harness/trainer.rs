//! Fixed-epoch AdamW training with gradient accumulation and linear decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{lr_schedule, HyperConfig};
use super::model::Model;
use crate::datamodel::EntailmentInstance;
use crate::error::{LiicError, Result};
use crate::lmbackend::{Adam, AdamConfig, Example, ModelGrads};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Summed loss per epoch divided by the number of training units.
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: usize,
    pub units: usize,
    pub clamped: usize,
}

/// Optimizer steps per epoch: `⌈⌈units / batch⌉ / c⌉`.
pub fn steps_per_epoch(units: usize, batch_size: usize, grad_accum: usize) -> usize {
    units.div_ceil(batch_size).div_ceil(grad_accum)
}

/// Sum of the per-batch gradients; equals the gradient of the concatenated batch.
pub fn accumulated_gradient(model: &Model, batches: &[Vec<Example>]) -> Result<ModelGrads> {
    let mut acc = ModelGrads::zeros(model.params().head.dim());
    for batch in batches {
        let lg = model.params().loss_and_grad(model.backend().as_ref(), batch, None)?;
        acc.add_assign(&lg.grads);
    }
    Ok(acc)
}

/// Trains `model` in place. Instances are reshuffled every epoch from the
/// config seed; dropout draws from a second stream of the same seed. The
/// final partial accumulation group of an epoch still triggers a step.
pub fn train(model: &mut Model, train: &[EntailmentInstance], cfg: &HyperConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let units = model.training_units(train)?;
    if units.is_empty() {
        return Err(LiicError::Contract("empty training set".into()));
    }
    let per_epoch = steps_per_epoch(units.len(), cfg.batch_size, cfg.grad_accum);
    let total_steps = per_epoch * cfg.epochs;
    let backend = std::sync::Arc::clone(model.backend());
    let dim = model.params().head.dim();
    let mut adam = Adam::new(dim, AdamConfig::default());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let mut outcome = TrainOutcome {
        units: units.len(),
        ..TrainOutcome::default()
    };
    let mut order: Vec<usize> = (0..units.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let mut epoch_loss = 0.0;
        let mut acc = ModelGrads::zeros(dim);
        let mut pending = 0;
        for (b, idx) in batches.iter().enumerate() {
            let examples: Vec<Example> = idx.iter().flat_map(|&i| units[i].iter().cloned()).collect();
            let lg = model
                .params()
                .loss_and_grad(backend.as_ref(), &examples, Some(&mut dropout_rng))?;
            epoch_loss += lg.loss;
            outcome.clamped += lg.clamped;
            acc.add_assign(&lg.grads);
            pending += 1;
            if pending == cfg.grad_accum || b + 1 == batches.len() {
                let lr = lr_schedule(outcome.optimizer_steps, total_steps, cfg.lr);
                adam.step(backend.as_ref(), model.params_mut(), &acc, lr, cfg.weight_decay)?;
                outcome.optimizer_steps += 1;
                acc = ModelGrads::zeros(dim);
                pending = 0;
            }
        }
        let mean = epoch_loss / units.len() as f64;
        if !mean.is_finite() {
            return Err(LiicError::Numeric(format!("non-finite loss in epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        outcome.epoch_losses.push(mean);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Source, VerbalExpression};
    use crate::harness::config::BatchProfile;
    use crate::harness::model::Approach;
    use crate::lmbackend::{LmBackend, MockBackend, MockConfig};
    use std::sync::Arc;

    fn backend() -> Arc<dyn LmBackend> {
        Arc::new(MockBackend::new(MockConfig {
            dim: 8,
            ..MockConfig::default()
        }))
    }

    fn toy(n: usize) -> Vec<EntailmentInstance> {
        let pos = [("bought", "owns"), ("won", "played"), ("married", "knows"), ("defeated", "fought")];
        let neg = [("visited", "hates"), ("met", "married"), ("owns", "bought"), ("praised", "attacked")];
        (0..n)
            .map(|i| {
                let (p, h) = if i % 2 == 0 { pos[i / 2 % 4] } else { neg[i / 2 % 4] };
                EntailmentInstance {
                    id: format!("t{i}"),
                    prem: VerbalExpression::from_text(p, None, Source::LevyHolt).unwrap(),
                    hypo: VerbalExpression::from_text(h, None, Source::LevyHolt).unwrap(),
                    arg_left: "Ann".into(),
                    arg_right: "Bob".into(),
                    label: i % 2 == 0,
                    source: Source::LevyHolt,
                    arg_candidates_left: None,
                    arg_candidates_right: None,
                }
            })
            .collect()
    }

    #[test]
    fn accumulation_arithmetic() {
        assert_eq!(steps_per_epoch(40, 10, 2), 2);
        assert_eq!(steps_per_epoch(41, 10, 2), 3);
        assert_eq!(steps_per_epoch(5, 10, 10), 1);
        let mut m = Approach::Nli.build(backend(), 1);
        let cfg = HyperConfig {
            grad_accum: 2,
            ..HyperConfig::new(1e-3, 0.0, 2, BatchProfile::Base, 1)
        };
        let out = train(&mut m, &toy(40), &cfg).unwrap();
        assert_eq!(out.optimizer_steps, 10);
        assert_eq!(out.epoch_losses.len(), 5);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let mut m = Approach::Nli.build(backend(), 1);
        let before = m.params().clone();
        train(&mut m, &toy(8), &HyperConfig::new(0.0, 0.0, 1, BatchProfile::Large, 1)).unwrap();
        assert_eq!(m.params().head, before.head);
        let emb = m.params().embeddings.as_ref().unwrap();
        let b = m.backend();
        assert!(emb.rows.iter().all(|(k, v)| *v == b.embedding_row(k).unwrap()));
    }

    #[test]
    fn separable_toy_set_reaches_full_f1() {
        let data = toy(16);
        let mut m = Approach::Nli.build(backend(), 3);
        let cfg = HyperConfig::new(5e-2, 1e-4, 1, BatchProfile::Large, 3);
        let out = train(&mut m, &data, &cfg).unwrap();
        assert!(out.epoch_losses.last() < out.epoch_losses.first());
        let scores = m.score_instances(&data).unwrap();
        let preds: Vec<bool> = scores.iter().map(|&p| p > 0.5).collect();
        let metrics = crate::evaluation::prf1(&preds, &crate::datamodel::DataSplit::new(
            crate::datamodel::SplitName::Train,
            data.clone(),
        )
        .labels())
        .unwrap();
        assert_eq!(metrics.f1, 1.0, "{scores:?} {:?}", out.epoch_losses);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = HyperConfig::new(1e-2, 1e-3, 2, BatchProfile::Large, 5);
        let run = || {
            let mut m = Approach::Nli.build(backend(), 5);
            let out = train(&mut m, &toy(12), &cfg).unwrap();
            (out, m.score_instances(&toy(12)).unwrap())
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(
            sa.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            sb.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn chunked_units_for_large_sets() {
        use crate::pattern::{Origin, Pattern, PatternSet, Polarity, ScoringMode};
        let pats: Vec<Pattern> = (0..7)
            .map(|i| Pattern::new(&format!("{{PREM}} w{i} {{HYPO}}"), Polarity::Pattern, Origin::Auto).unwrap())
            .collect();
        let set = PatternSet::new(pats, vec![], ScoringMode::PhiOnly).unwrap();
        let m = Approach::Pattern(set).build(backend(), 0);
        let units = m.training_units(&toy(3)).unwrap();
        assert_eq!(units.len(), 6);
        assert_eq!(units[0].len(), 5);
        assert_eq!(units[1].len(), 2);
        assert!((units[1][0].weight - 0.5).abs() < 1e-15);
    }
}
