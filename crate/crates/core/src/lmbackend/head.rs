//! Two-layer classification head over the aggregate representation:
//!
//! ```text
//! h = tanh(drop(r) W1 + b1)
//! p = softmax(drop(h) W2 + b2)
//! ```
//!
//! Row-vector convention throughout. `W1`/`b1` belong to the pretrained
//! model (here: a seeded orthogonal initialization), `W2`/`b2` are fresh.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LiicError, Result};

pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamOrigin {
    PretrainedInitialized,
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub dropout_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl HeadGrads {
    pub fn zeros(d: usize) -> Self {
        HeadGrads {
            w1: Array2::zeros((d, d)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, 2)),
            b2: Array1::zeros(2),
        }
    }

    pub fn add_assign(&mut self, other: &HeadGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }
}

/// Dropout masks drawn for one forward pass; `None` in evaluation mode.
struct Masks {
    input: Array1<f64>,
    hidden: Array1<f64>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardTrace {
    pub probs: [f64; 2],
    logits: [f64; 2],
    dropped_input: Array1<f64>,
    hidden: Array1<f64>,
    dropped_hidden: Array1<f64>,
    masks: Option<Masks>,
}

impl ForwardTrace {
    /// `log p_target`, computed from the logits rather than the rounded probability.
    pub fn log_prob(&self, target: bool) -> f64 {
        let z = self.logits;
        let m = z[0].max(z[1]);
        let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
        z[usize::from(target)] - lse
    }
}

impl HeadParams {
    /// Seeded initialization: `W1` orthogonal (Gram–Schmidt on a Gaussian
    /// matrix), `b1 = 0`, `W2 ~ N(0, 0.02²)`, `b2 = 0`.
    pub fn init(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w1 = Array2::<f64>::zeros((d, d));
        for v in w1.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        orthonormalize_columns(&mut w1);
        let mut w2 = Array2::<f64>::zeros((d, 2));
        for v in w2.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = 0.02 * g;
        }
        HeadParams {
            w1,
            b1: Array1::zeros(d),
            w2,
            b2: Array1::zeros(2),
            dropout_p: DEFAULT_DROPOUT,
        }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn origin(name: &str) -> Option<ParamOrigin> {
        match name {
            "w1" | "b1" => Some(ParamOrigin::PretrainedInitialized),
            "w2" | "b2" => Some(ParamOrigin::Fresh),
            _ => None,
        }
    }

    fn check_shapes(&self, r: &Array1<f64>) -> Result<()> {
        let d = self.dim();
        if r.len() != d || self.w1.dim() != (d, d) || self.w2.dim() != (d, 2) || self.b2.len() != 2 {
            return Err(LiicError::Contract(format!(
                "head shape mismatch: repr {} vs W1 {:?}, W2 {:?}",
                r.len(),
                self.w1.dim(),
                self.w2.dim()
            )));
        }
        Ok(())
    }

    fn norms(&self) -> String {
        let n = |a: f64| a.sqrt();
        format!(
            "|W1|={:.4e} |b1|={:.4e} |W2|={:.4e} |b2|={:.4e}",
            n(self.w1.iter().map(|v| v * v).sum()),
            n(self.b1.iter().map(|v| v * v).sum()),
            n(self.w2.iter().map(|v| v * v).sum()),
            n(self.b2.iter().map(|v| v * v).sum()),
        )
    }

    /// Forward pass. Dropout is applied only when an RNG is supplied.
    pub fn forward_trace<R: Rng>(&self, r: &Array1<f64>, dropout: Option<&mut R>) -> Result<ForwardTrace> {
        self.check_shapes(r)?;
        let d = self.dim();
        let masks = match dropout {
            Some(rng) if self.dropout_p > 0.0 => {
                let keep = 1.0 - self.dropout_p;
                let mut draw = || {
                    Array1::from_iter((0..d).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }))
                };
                Some(Masks {
                    input: draw(),
                    hidden: draw(),
                })
            }
            _ => None,
        };
        let dropped_input = match &masks {
            Some(m) => r * &m.input,
            None => r.clone(),
        };
        let hidden = (dropped_input.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let dropped_hidden = match &masks {
            Some(m) => &hidden * &m.hidden,
            None => hidden.clone(),
        };
        let z = dropped_hidden.dot(&self.w2) + &self.b2;
        let logits = [z[0], z[1]];
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];
        if !(probs[0].is_finite() && probs[1].is_finite()) {
            return Err(LiicError::Numeric(format!("non-finite head output; {}", self.norms())));
        }
        Ok(ForwardTrace {
            probs,
            logits,
            dropped_input,
            hidden,
            dropped_hidden,
            masks,
        })
    }

    /// `(p0, p1)` in evaluation mode.
    pub fn forward(&self, r: &Array1<f64>) -> Result<[f64; 2]> {
        Ok(self.forward_trace::<ChaCha8Rng>(r, None)?.probs)
    }

    /// Gradient of `weight · (−log p_target)` w.r.t. the head parameters
    /// (accumulated into `grads`) and w.r.t. the input representation
    /// (returned).
    pub fn backward(&self, trace: &ForwardTrace, target: bool, weight: f64, grads: &mut HeadGrads) -> Array1<f64> {
        let mut dz = Array1::from(vec![trace.probs[0], trace.probs[1]]);
        dz[usize::from(target)] -= 1.0;
        dz *= weight;

        grads.b2 += &dz;
        grads.w2 += &outer(&trace.dropped_hidden, &dz);

        let mut dh = self.w2.dot(&dz);
        if let Some(m) = &trace.masks {
            dh *= &m.hidden;
        }
        let da = dh * trace.hidden.mapv(|h| 1.0 - h * h);
        grads.b1 += &da;
        grads.w1 += &outer(&trace.dropped_input, &da);

        let mut dr = self.w1.dot(&da);
        if let Some(m) = &trace.masks {
            dr *= &m.input;
        }
        dr
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}

fn orthonormalize_columns(m: &mut Array2<f64>) {
    let cols = m.ncols();
    for j in 0..cols {
        for k in 0..j {
            let proj = m.column(j).dot(&m.column(k));
            let prev = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-proj, &prev);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        if norm > 1e-12 {
            m.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eval(p: &HeadParams, r: &[f64]) -> [f64; 2] {
        p.forward(&Array1::from(r.to_vec())).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let mut p = HeadParams::init(4, 1);
        p.w2.fill(0.0);
        p.b2.fill(0.0);
        let out = eval(&p, &[0.3, -2.0, 5.0, 1.0]);
        assert_eq!(out, [0.5, 0.5]);
    }

    #[test]
    fn hand_evaluated_forward() {
        let p = HeadParams {
            w1: Array2::eye(2),
            b1: Array1::zeros(2),
            w2: Array2::eye(2),
            b2: Array1::zeros(2),
            dropout_p: 0.1,
        };
        let out = eval(&p, &[1.0, 0.0]);
        let t = 1f64.tanh();
        let p1 = 1.0 / (t.exp() + 1.0);
        assert_abs_diff_eq!(out[0], t.exp() / (t.exp() + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], p1, epsilon = 1e-15);
    }

    #[test]
    fn eval_mode_is_deterministic_and_normalized() {
        let p = HeadParams::init(6, 3);
        let r = [0.1, 0.2, -0.3, 0.4, 0.9, -1.0];
        let a = eval(&p, &r);
        let b = eval(&p, &r);
        assert_eq!(a, b);
        assert_abs_diff_eq!(a[0] + a[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn init_is_orthogonal_and_flagged() {
        let p = HeadParams::init(5, 9);
        let gram = p.w1.t().dot(&p.w1);
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(gram[[i, j]], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
        assert_eq!(p.dropout_p, 0.1);
        assert_eq!(HeadParams::origin("w1"), Some(ParamOrigin::PretrainedInitialized));
        assert_eq!(HeadParams::origin("b2"), Some(ParamOrigin::Fresh));
    }

    #[test]
    fn nan_input_is_numeric_error() {
        let p = HeadParams::init(3, 0);
        let err = p.forward(&Array1::from(vec![f64::NAN, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, LiicError::Numeric(ref m) if m.contains("|W1|")));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = HeadParams::init(3, 0);
        assert!(p.forward(&Array1::zeros(4)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn outputs_form_a_distribution(seed in 0u64..500, r in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let p = HeadParams::init(4, seed);
            let out = eval(&p, &r);
            proptest::prop_assert!(out[0] >= 0.0 && out[1] >= 0.0);
            proptest::prop_assert!((out[0] + out[1] - 1.0).abs() <= 1e-9);
        }
    }
}
