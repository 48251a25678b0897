//! 3-D secondary-landmark predictor: an MLP mapping canonical primary
//! coordinates to canonical secondary coordinates. View invariance comes
//! for free because both sides live in the body frame.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::SimilarityTransform;
use crate::optim::ParamSet;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub num_primary: usize,
    pub num_secondary: usize,
    /// Width of each of the three hidden layers.
    pub hidden: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { num_primary: 13, num_secondary: 6, hidden: 128 }
    }
}

#[derive(Debug, Clone)]
pub struct Predictor {
    pub config: PredictorConfig,
    pub params: ParamSet,
}

impl Predictor {
    pub fn init(config: PredictorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [
            3 * config.num_primary,
            config.hidden,
            config.hidden,
            config.hidden,
            3 * config.num_secondary,
        ];
        let mut params = ParamSet::new();
        for (layer, w) in dims.windows(2).enumerate() {
            let (din, dout) = (w[0], w[1]);
            let std = (1.0 / din as f64).sqrt();
            let values: Vec<f64> = (0..din * dout)
                .map(|_| {
                    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.random_range(0.0..1.0);
                    std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect();
            params.insert(
                &format!("predictor/layer{layer}/weight"),
                Tensor::new(vec![dout, din], values).expect("shape"),
            );
            params.insert(&format!("predictor/layer{layer}/bias"), Tensor::zeros(&[dout]));
        }
        Self { config, params }
    }

    /// Forward pass on the tape: canonical primary `[3P]` -> canonical
    /// secondary `[3S]`. Three tanh hidden layers, linear output.
    pub fn forward(&self, tape: &mut Tape, vars: &BTreeMap<String, Var>, primary: Var) -> Result<Var> {
        let expect = 3 * self.config.num_primary;
        if tape.shape(primary) != [expect] {
            return Err(CoreError::ShapeMismatch {
                op: "predictor_forward".into(),
                lhs: tape.shape(primary).to_vec(),
                rhs: vec![expect],
            });
        }
        let mut h = primary;
        for layer in 0..4 {
            let w = vars[&format!("predictor/layer{layer}/weight")];
            let b = vars[&format!("predictor/layer{layer}/bias")];
            let wx = tape.matmul(w, h)?;
            let z = tape.add(wx, b)?;
            h = if layer < 3 { tape.tanh(z) } else { z };
        }
        Ok(h)
    }

    /// Plain inference: canonical primary points -> canonical secondary.
    pub fn predict_secondary(&self, primary: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        if primary.len() != self.config.num_primary {
            return Err(CoreError::LandmarkCountMismatch {
                expected: self.config.num_primary,
                got: primary.len(),
            });
        }
        let flat: Vec<f64> = primary.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { context: "predictor input".into() });
        }
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let input = tape.leaf(Tensor::from_vec(flat));
        let out = self.forward(&mut tape, &vars, input)?;
        let vals = tape.values(out);
        Ok((0..self.config.num_secondary)
            .map(|k| Vector3::new(vals[3 * k], vals[3 * k + 1], vals[3 * k + 2]))
            .collect())
    }
}

/// Map a canonical-frame prediction back to world coordinates using the
/// transform returned by pose normalization for the same frame.
pub fn denormalize_prediction(pred: &[Vector3<f64>], transform: &SimilarityTransform) -> Vec<Vector3<f64>> {
    let inv = transform.inverse();
    pred.iter().map(|p| inv.apply(p)).collect()
}
