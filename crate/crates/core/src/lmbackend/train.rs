//! Trainable state (head plus, where the backend allows it, the embedding
//! table), weighted negative log-likelihood gradients, and AdamW stepping.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{HeadGrads, HeadParams};
use super::{EncodeInput, LmBackend};
use crate::error::{LiicError, Result};

/// Gold probabilities below this are clamped before taking the log.
pub const LOG_EPS: f64 = 1e-12;

/// Fine-tuned embedding rows; rows never touched by training are read from
/// the backend.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub rows: BTreeMap<String, Array1<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub head: HeadParams,
    pub embeddings: Option<EmbeddingTable>,
}

/// A representation together with what produced it, kept for backprop.
#[derive(Clone, Debug)]
pub struct Represented {
    pub vector: Array1<f64>,
    pooled: Option<Vec<(String, f64)>>,
}

/// One weighted term `weight · (−log p_target(input))` of a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: EncodeInput,
    pub target: bool,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub head: HeadGrads,
    pub embeddings: BTreeMap<String, Array1<f64>>,
}

impl ModelGrads {
    pub fn zeros(d: usize) -> Self {
        ModelGrads {
            head: HeadGrads::zeros(d),
            embeddings: BTreeMap::new(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        self.head.add_assign(&other.head);
        for (k, g) in &other.embeddings {
            match self.embeddings.get_mut(k) {
                Some(acc) => *acc += g,
                None => {
                    self.embeddings.insert(k.clone(), g.clone());
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossAndGrad {
    /// Sum of weighted negative log-likelihood terms.
    pub loss: f64,
    pub grads: ModelGrads,
    /// Terms whose gold probability fell below [`LOG_EPS`].
    pub clamped: usize,
}

impl ModelParams {
    /// Fresh parameters for `backend`. The embedding table is enabled only
    /// when the backend exposes a pooled decomposition.
    pub fn init(backend: &dyn LmBackend, seed: u64) -> Self {
        let trainable_embeddings = backend.pooled_tokens(&EncodeInput::single("probe")).is_some();
        ModelParams {
            head: HeadParams::init(backend.dim(), seed),
            embeddings: trainable_embeddings.then(EmbeddingTable::default),
        }
    }

    pub fn represent_batch(&self, backend: &dyn LmBackend, inputs: &[EncodeInput]) -> Result<Vec<Represented>> {
        if let Some(table) = &self.embeddings {
            let pooled: Option<Vec<_>> = inputs.iter().map(|i| backend.pooled_tokens(i)).collect();
            if let Some(pooled) = pooled {
                for i in inputs {
                    i.check_non_empty()?;
                }
                return pooled
                    .into_iter()
                    .map(|p| {
                        let mut v = Array1::zeros(backend.dim());
                        for (key, c) in &p.entries {
                            match table.rows.get(key) {
                                Some(row) => v.scaled_add(*c, row),
                                None => {
                                    let row = backend.embedding_row(key).ok_or_else(|| {
                                        LiicError::Contract(format!("backend has no embedding row {key:?}"))
                                    })?;
                                    v.scaled_add(*c, &row);
                                }
                            }
                        }
                        Ok(Represented {
                            vector: v,
                            pooled: Some(p.entries),
                        })
                    })
                    .collect();
            }
        }
        Ok(backend
            .encode_batch(inputs)?
            .into_iter()
            .map(|e| Represented {
                vector: e.repr.vector,
                pooled: None,
            })
            .collect())
    }

    /// `(p0, p1)` for each input, evaluation mode.
    pub fn probs(&self, backend: &dyn LmBackend, inputs: &[EncodeInput]) -> Result<Vec<[f64; 2]>> {
        self.represent_batch(backend, inputs)?
            .iter()
            .map(|r| self.head.forward(&r.vector))
            .collect()
    }

    /// Weighted NLL over `examples` and its gradient. Dropout is active iff
    /// `dropout` is supplied.
    pub fn loss_and_grad(
        &self,
        backend: &dyn LmBackend,
        examples: &[Example],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<LossAndGrad> {
        let inputs: Vec<EncodeInput> = examples.iter().map(|e| e.input.clone()).collect();
        let reprs = self.represent_batch(backend, &inputs)?;
        let mut grads = ModelGrads::zeros(self.head.dim());
        let mut loss = 0.0;
        let mut clamped = 0;
        let max_nll = -LOG_EPS.ln();
        for (ex, rep) in examples.iter().zip(&reprs) {
            let trace = self.head.forward_trace(&rep.vector, dropout.as_deref_mut())?;
            let nll = -trace.log_prob(ex.target);
            if nll > max_nll {
                clamped += 1;
                loss += ex.weight * max_nll;
                continue;
            }
            loss += ex.weight * nll;
            let dr = self.head.backward(&trace, ex.target, ex.weight, &mut grads.head);
            if let (Some(pooled), Some(_)) = (&rep.pooled, &self.embeddings) {
                for (key, c) in pooled {
                    let g = grads
                        .embeddings
                        .entry(key.clone())
                        .or_insert_with(|| Array1::zeros(dr.len()));
                    g.scaled_add(*c, &dr);
                }
            }
        }
        if clamped > 0 {
            log::warn!("{clamped} gold probabilities clamped at {LOG_EPS:e}");
        }
        if !loss.is_finite() {
            return Err(LiicError::Numeric(format!("non-finite loss {loss}")));
        }
        Ok(LossAndGrad { loss, grads, clamped })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One AdamW update of a flat parameter block at (1-based) step `t`.
/// Weight decay is decoupled: `θ ← θ − lr·λ·θ` precedes the Adam step.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    weight_decay: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((p, &g), m), v) in theta.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *p -= lr * weight_decay * *p;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    m: ModelGrads,
    v: ModelGrads,
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

impl Adam {
    pub fn new(d: usize, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: ModelGrads::zeros(d),
            v: ModelGrads::zeros(d),
        }
    }

    /// Applies one optimizer step with the given (already accumulated) gradient.
    pub fn step(
        &mut self,
        backend: &dyn LmBackend,
        params: &mut ModelParams,
        grads: &ModelGrads,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if lr < 0.0 || !lr.is_finite() {
            return Err(LiicError::Contract(format!("learning rate must be >= 0, got {lr}")));
        }
        self.t += 1;
        let (t, cfg) = (self.t, self.cfg);
        let h = &mut params.head;
        let (gm, gv, g) = (&mut self.m.head, &mut self.v.head, &grads.head);
        adam_update(slice_mut(&mut h.w1), slice(&g.w1), slice_mut(&mut gm.w1), slice_mut(&mut gv.w1), t, lr, weight_decay, &cfg);
        adam_update(slice_mut(&mut h.b1), slice(&g.b1), slice_mut(&mut gm.b1), slice_mut(&mut gv.b1), t, lr, weight_decay, &cfg);
        adam_update(slice_mut(&mut h.w2), slice(&g.w2), slice_mut(&mut gm.w2), slice_mut(&mut gv.w2), t, lr, weight_decay, &cfg);
        adam_update(slice_mut(&mut h.b2), slice(&g.b2), slice_mut(&mut gm.b2), slice_mut(&mut gv.b2), t, lr, weight_decay, &cfg);

        if let Some(table) = params.embeddings.as_mut() {
            for key in grads.embeddings.keys() {
                if !table.rows.contains_key(key) {
                    let row = backend
                        .embedding_row(key)
                        .ok_or_else(|| LiicError::Contract(format!("backend has no embedding row {key:?}")))?;
                    table.rows.insert(key.clone(), row);
                }
            }
            let d = params.head.dim();
            for (key, row) in table.rows.iter_mut() {
                let zero;
                let g = match grads.embeddings.get(key) {
                    Some(g) => g,
                    None => {
                        zero = Array1::zeros(d);
                        &zero
                    }
                };
                let m = self.m.embeddings.entry(key.clone()).or_insert_with(|| Array1::zeros(d));
                let v = self.v.embeddings.entry(key.clone()).or_insert_with(|| Array1::zeros(d));
                adam_update(slice_mut(row), slice(g), slice_mut(m), slice_mut(v), t, lr, weight_decay, &cfg);
            }
        }
        Ok(())
    }
}

/// Gradient of one batch followed by one AdamW step. Returns the mean loss
/// per example.
pub fn train_step(
    backend: &dyn LmBackend,
    params: &mut ModelParams,
    optimizer: &mut Adam,
    batch: &[Example],
    lr: f64,
    weight_decay: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let lg = params.loss_and_grad(backend, batch, dropout)?;
    optimizer.step(backend, params, &lg.grads, lr, weight_decay)?;
    Ok(if batch.is_empty() { 0.0 } else { lg.loss / batch.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmbackend::{MockBackend, MockConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn adam_matches_hand_stepped_oracle() {
        // f(θ) = (θ − 3)², θ₀ = 0, lr = 0.1, two steps, no decay.
        let cfg = AdamConfig::default();
        let (mut theta, mut m, mut v) = ([0.0f64], [0.0f64], [0.0f64]);
        for t in 1..=2 {
            let g = [2.0 * (theta[0] - 3.0)];
            adam_update(&mut theta, &g, &mut m, &mut v, t, 0.1, 0.0, &cfg);
        }
        // Step 1: g = −6, m̂ = −6, v̂ = 36 → θ = 0.1·6/(6+1e-8).
        let th1 = 0.1 * 6.0 / (6.0 + 1e-8);
        // Step 2 by hand.
        let g2 = 2.0 * (th1 - 3.0);
        let m2 = 0.9 * (0.1 * -6.0) + 0.1 * g2;
        let v2 = 0.999 * (0.001 * 36.0) + 0.001 * g2 * g2;
        let m_hat = m2 / (1.0 - 0.81);
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        let th2 = th1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert_abs_diff_eq!(theta[0], th2, epsilon = 1e-15);
        assert!(theta[0] > th1 && th1 > 0.0);
    }

    fn examples() -> Vec<Example> {
        vec![
            Example { input: EncodeInput::pair("a b", "c"), target: true, weight: 1.0 },
            Example { input: EncodeInput::single("d e f"), target: false, weight: 0.5 },
        ]
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let b = MockBackend::new(MockConfig { dim: 4, ..MockConfig::default() });
        let mut p = ModelParams::init(&b, 1);
        let mut adam = Adam::new(4, AdamConfig::default());
        let before = p.clone();
        train_step(&b, &mut p, &mut adam, &examples(), 0.0, 0.01, None).unwrap();
        assert_eq!(p.head, before.head);
        for (k, row) in &p.embeddings.as_ref().unwrap().rows {
            assert_eq!(row, &b.embedding_row(k).unwrap());
        }
    }

    #[test]
    fn decay_only_step_shrinks_norm() {
        let b = MockBackend::new(MockConfig { dim: 4, ..MockConfig::default() });
        let norm = |p: &ModelParams| p.head.w1.iter().chain(p.head.w2.iter()).map(|x| x * x).sum::<f64>();
        let zero = ModelGrads::zeros(4);
        let mut plain = ModelParams::init(&b, 1);
        let mut decayed = plain.clone();
        Adam::new(4, AdamConfig::default()).step(&b, &mut plain, &zero, 0.1, 0.0).unwrap();
        Adam::new(4, AdamConfig::default()).step(&b, &mut decayed, &zero, 0.1, 0.05).unwrap();
        assert!(norm(&decayed) < norm(&plain));
        assert!(Adam::new(4, AdamConfig::default()).step(&b, &mut plain, &zero, -1.0, 0.0).is_err());
    }

    #[test]
    fn training_reduces_loss() {
        let b = MockBackend::new(MockConfig { dim: 8, ..MockConfig::default() });
        let mut p = ModelParams::init(&b, 2);
        let mut adam = Adam::new(8, AdamConfig::default());
        let batch = examples();
        let first = p.loss_and_grad(&b, &batch, None).unwrap().loss;
        for _ in 0..50 {
            train_step(&b, &mut p, &mut adam, &batch, 0.01, 0.0, None).unwrap();
        }
        let last = p.loss_and_grad(&b, &batch, None).unwrap().loss;
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn accumulated_gradient_equals_concatenated_batch() {
        let b = MockBackend::new(MockConfig { dim: 6, ..MockConfig::default() });
        let p = ModelParams::init(&b, 4);
        let batch = examples();
        let whole = p.loss_and_grad(&b, &batch, None).unwrap();
        let mut acc = p.loss_and_grad(&b, &batch[..1], None).unwrap().grads;
        acc.add_assign(&p.loss_and_grad(&b, &batch[1..], None).unwrap().grads);
        let diff = (&whole.grads.head.w1 - &acc.head.w1).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= 1e-12);
        for (k, g) in &whole.grads.embeddings {
            let d = (g - &acc.embeddings[k]).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(d <= 1e-12);
        }
    }
}
