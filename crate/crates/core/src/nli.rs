//! Sequence-pair entailment classifier over rendered premise/hypothesis sentences.

use std::sync::Arc;

use crate::datamodel::PairInput;
use crate::error::{LiicError, Result};
use crate::lmbackend::train::LOG_EPS;
use crate::lmbackend::{EncodeInput, Example, LmBackend, ModelParams};

pub struct NliModel {
    pub backend: Arc<dyn LmBackend>,
    pub params: ModelParams,
    /// Decision threshold in [0, 1].
    pub threshold: f64,
}

/// Sum of `−log p` over gold-label probabilities, with each `p` clamped at
/// [`LOG_EPS`]. Returns the loss and the number of clamped terms.
pub fn nll_sum(gold_probs: &[f64]) -> (f64, usize) {
    let mut clamped = 0;
    let loss = gold_probs
        .iter()
        .map(|&p| {
            if p < LOG_EPS {
                clamped += 1;
            }
            -p.max(LOG_EPS).ln()
        })
        .sum();
    if clamped > 0 {
        log::warn!("{clamped} gold probabilities clamped at {LOG_EPS:e}");
    }
    (loss, clamped)
}

/// 1 iff `p > ϑ`.
pub fn decide_nli(p: f64, threshold: f64) -> bool {
    p > threshold
}

/// The encoder input for one pair: premise and hypothesis sentences in that order.
pub fn nli_input(input: &PairInput<'_>) -> EncodeInput {
    EncodeInput::Pair(input.premise_sentence(), input.hypothesis_sentence())
}

pub fn training_example(input: &PairInput<'_>, label: bool) -> Example {
    Example {
        input: nli_input(input),
        target: label,
        weight: 1.0,
    }
}

impl NliModel {
    pub fn new(backend: Arc<dyn LmBackend>, params: ModelParams) -> Self {
        NliModel {
            backend,
            params,
            threshold: 0.5,
        }
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(LiicError::Contract(format!("NLI threshold {threshold} outside [0, 1]")));
        }
        self.threshold = threshold;
        Ok(())
    }

    /// `P_NLI(y = 1 | x1, x2)` for raw sentences.
    pub fn p_nli(&self, x1: &str, x2: &str) -> Result<f64> {
        let probs = self.params.probs(self.backend.as_ref(), &[EncodeInput::pair(x1, x2)])?;
        Ok(probs[0][1])
    }

    pub fn p_nli_batch(&self, inputs: &[PairInput<'_>]) -> Result<Vec<f64>> {
        let enc: Vec<EncodeInput> = inputs.iter().map(nli_input).collect();
        Ok(self
            .params
            .probs(self.backend.as_ref(), &enc)?
            .into_iter()
            .map(|p| p[1])
            .collect())
    }

    pub fn decide(&self, x1: &str, x2: &str, threshold: f64) -> Result<bool> {
        Ok(decide_nli(self.p_nli(x1, x2)?, threshold))
    }

    /// Summed NLL of the batch, evaluation mode.
    pub fn loss(&self, batch: &[(PairInput<'_>, bool)]) -> Result<f64> {
        let inputs: Vec<PairInput<'_>> = batch.iter().map(|(i, _)| *i).collect();
        let p1 = self.p_nli_batch(&inputs)?;
        let gold: Vec<f64> = p1
            .iter()
            .zip(batch)
            .map(|(&p, (_, y))| if *y { p } else { 1.0 - p })
            .collect();
        Ok(nll_sum(&gold).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Source, VerbalExpression};
    use crate::lmbackend::{Adam, AdamConfig, MockBackend, MockConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn mock_model() -> NliModel {
        let backend: Arc<dyn LmBackend> = Arc::new(MockBackend::new(MockConfig {
            dim: 8,
            ..MockConfig::default()
        }));
        let params = ModelParams::init(backend.as_ref(), 3);
        NliModel::new(backend, params)
    }

    #[test]
    fn nll_examples() {
        assert_abs_diff_eq!(nll_sum(&[0.5; 3]).0, 2.079_441_541_679_835_7, epsilon = 1e-12);
        assert_eq!(nll_sum(&[1.0]).0, 0.0);
        assert_abs_diff_eq!(nll_sum(&[0.9, 0.8]).0, 0.328_504_066_972_036, epsilon = 1e-12);
        let (loss, clamped) = nll_sum(&[0.0, 0.5]);
        assert_eq!(clamped, 1);
        assert!(loss.is_finite());
    }

    #[test]
    fn decision_examples() {
        assert!(decide_nli(0.7, 0.5));
        assert!(!decide_nli(0.5, 0.5));
        assert!(decide_nli(0.006, 0.0052));
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut m = mock_model();
        m.params.head.w2 = Array2::zeros((8, 2));
        assert_abs_diff_eq!(m.p_nli("a b", "c d").unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn p_nli_is_reproducible() {
        let a = mock_model().p_nli("Athena was worshipped in Athens", "Athena was the goddess of Athens");
        let b = mock_model().p_nli("Athena was worshipped in Athens", "Athena was the goddess of Athens");
        assert_eq!(a.unwrap().to_bits(), b.unwrap().to_bits());
    }

    #[test]
    fn threshold_range_enforced() {
        let mut m = mock_model();
        assert!(m.set_threshold(1.5).is_err());
        m.set_threshold(0.0052).unwrap();
        assert_eq!(m.threshold, 0.0052);
    }

    #[test]
    fn separable_toy_set_is_fit() {
        let mut m = mock_model();
        let e = |t: &str| VerbalExpression::from_text(t, None, Source::LevyHolt).unwrap();
        let pairs = [
            (e("bought"), e("owns"), true),
            (e("won"), e("played"), true),
            (e("visited"), e("hates"), false),
            (e("met"), e("married"), false),
        ];
        let batch: Vec<(PairInput<'_>, bool)> = pairs
            .iter()
            .map(|(p, h, y)| {
                (
                    PairInput {
                        prem: p,
                        hypo: h,
                        arg_left: "Ann",
                        arg_right: "Bob",
                    },
                    *y,
                )
            })
            .collect();
        let examples: Vec<Example> = batch.iter().map(|(i, y)| training_example(i, *y)).collect();
        let before = m.loss(&batch).unwrap();
        let mut adam = Adam::new(8, AdamConfig::default());
        for _ in 0..300 {
            let backend = Arc::clone(&m.backend);
            crate::lmbackend::train_step(backend.as_ref(), &mut m.params, &mut adam, &examples, 0.01, 0.0, None)
                .unwrap();
        }
        assert!(m.loss(&batch).unwrap() < before);
        let inputs: Vec<_> = batch.iter().map(|(i, _)| *i).collect();
        for (p, (_, y)) in m.p_nli_batch(&inputs).unwrap().iter().zip(&batch) {
            assert_eq!(*p > 0.5, *y, "p = {p}");
        }
    }
}
