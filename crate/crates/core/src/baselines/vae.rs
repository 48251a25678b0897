//! Variational autoencoder over flattened pose vectors, used to impute
//! missing secondary coordinates.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::optim::{Adam, ParamSet};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight of the squared reconstruction term, i.e. the inverse variance
    /// of the Gaussian likelihood. Pose coordinates are O(1), so a tight
    /// likelihood keeps the latent code informative.
    pub recon_weight: f64,
    /// Columns from this index on are randomly mean-masked during training
    /// (with the full vector as the reconstruction target), so the encoder
    /// learns to work in the presence of missing entries. `None` trains on
    /// clean inputs only.
    pub corrupt_from: Option<usize>,
}

impl VaeConfig {
    pub fn for_dim(input_dim: usize) -> Self {
        Self {
            input_dim,
            latent_dim: 8,
            hidden: 64,
            steps: 4000,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 29,
            recon_weight: 50.0,
            corrupt_from: None,
        }
    }

    pub fn for_pose(input_dim: usize, primary_cols: usize) -> Self {
        Self { corrupt_from: Some(primary_cols), ..Self::for_dim(input_dim) }
    }
}

#[derive(Debug, Clone)]
pub struct Vae {
    pub config: VaeConfig,
    pub params: ParamSet,
    trained: bool,
    /// Training-set column means, the fill-in for missing query entries.
    column_means: Vec<f64>,
}

fn linear_init(rng: &mut ChaCha8Rng, params: &mut ParamSet, name: &str, din: usize, dout: usize) {
    let std = (1.0 / din as f64).sqrt();
    let values: Vec<f64> = (0..din * dout)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    params.insert(&format!("{name}/weight"), Tensor::new(vec![dout, din], values).expect("shape"));
    params.insert(&format!("{name}/bias"), Tensor::zeros(&[dout]));
}

fn linear(tape: &mut Tape, vars: &BTreeMap<String, Var>, name: &str, x: Var) -> Result<Var> {
    let wx = tape.matmul(vars[&format!("{name}/weight")], x)?;
    tape.add(wx, vars[&format!("{name}/bias")])
}

impl Vae {
    pub fn init(config: VaeConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        linear_init(&mut rng, &mut params, "vae/enc_hidden", config.input_dim, config.hidden);
        linear_init(&mut rng, &mut params, "vae/enc_mu", config.hidden, config.latent_dim);
        linear_init(&mut rng, &mut params, "vae/enc_logvar", config.hidden, config.latent_dim);
        linear_init(&mut rng, &mut params, "vae/dec_hidden", config.latent_dim, config.hidden);
        linear_init(&mut rng, &mut params, "vae/dec_out", config.hidden, config.input_dim);
        Self { config, params, trained: false, column_means: Vec::new() }
    }

    fn encode(&self, tape: &mut Tape, vars: &BTreeMap<String, Var>, x: Var) -> Result<(Var, Var)> {
        let h_pre = linear(tape, vars, "vae/enc_hidden", x)?;
        let h = tape.tanh(h_pre);
        Ok((linear(tape, vars, "vae/enc_mu", h)?, linear(tape, vars, "vae/enc_logvar", h)?))
    }

    fn decode(&self, tape: &mut Tape, vars: &BTreeMap<String, Var>, z: Var) -> Result<Var> {
        let h_pre = linear(tape, vars, "vae/dec_hidden", z)?;
        let h = tape.tanh(h_pre);
        linear(tape, vars, "vae/dec_out", h)
    }

    /// Evidence lower bound with reparameterized sampling:
    /// `0.5 |x_target - x_hat|^2 + KL(q(z|x_in) || N(0, I))`.
    /// Encoding and reconstruction targets are separate so corrupted inputs
    /// reconstruct the complete vector.
    pub fn elbo_loss(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        x_in: Var,
        x_target: Var,
        noise: &[f64],
    ) -> Result<Var> {
        let (mu, logvar) = self.encode(tape, vars, x_in)?;
        let half_logvar = tape.scalar_mul(logvar, 0.5);
        let sigma = tape.exp(half_logvar);
        let eps = tape.leaf(Tensor::from_vec(noise.to_vec()));
        let scaled = tape.mul(sigma, eps)?;
        let z = tape.add(mu, scaled)?;
        let xhat = self.decode(tape, vars, z)?;

        let d = tape.sub(xhat, x_target)?;
        let sq = tape.square(d);
        let recon_sum = tape.sum(sq);
        let recon = tape.scalar_mul(recon_sum, 0.5 * self.config.recon_weight);

        let kl = kl_to_unit_gaussian(tape, mu, logvar)?;
        tape.add(recon, kl)
    }

    pub fn train(&mut self, poses: &[Vec<f64>]) -> Result<()> {
        if poses.len() < 2 {
            return Err(CoreError::InsufficientSamples { needed: 2, got: poses.len() });
        }
        let d = self.config.input_dim;
        for p in poses {
            if p.len() != d {
                return Err(CoreError::ShapeMismatch {
                    op: "vae_train".into(),
                    lhs: vec![p.len()],
                    rhs: vec![d],
                });
            }
        }
        self.column_means = (0..d)
            .map(|c| poses.iter().map(|p| p[c]).sum::<f64>() / poses.len() as f64)
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x7a3);
        let mut adam = Adam::new(self.config.learning_rate, 0.7, (self.config.steps / 5).max(1));
        for _ in 0..self.config.steps {
            let mut tape = Tape::new();
            let vars = self.params.register(&mut tape);
            let mut terms = Vec::new();
            for _ in 0..self.config.batch_size {
                let x = &poses[rng.random_range(0..poses.len())];
                let noise: Vec<f64> = (0..self.config.latent_dim)
                    .map(|_| {
                        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                        let u2: f64 = rng.random_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                let corrupt = match self.config.corrupt_from {
                    Some(from) => rng.random_range(0.0..1.0) < 0.5 && from < d,
                    None => false,
                };
                let x_target = tape.leaf(Tensor::from_vec(x.clone()));
                let x_in = if corrupt {
                    let from = self.config.corrupt_from.unwrap();
                    let mut masked = x.clone();
                    masked[from..].copy_from_slice(&self.column_means[from..]);
                    tape.leaf(Tensor::from_vec(masked))
                } else {
                    x_target
                };
                terms.push(self.elbo_loss(&mut tape, &vars, x_in, x_target, &noise)?);
            }
            let all = tape.concat(&terms)?;
            let loss = tape.mean(all);
            if !tape.value(loss).item().is_finite() {
                return Err(CoreError::TrainingAborted {
                    step: adam.steps_taken(),
                    reason: "VAE loss became non-finite".into(),
                });
            }
            let grads = tape.backward(loss)?;
            let mut acc = BTreeMap::new();
            ParamSet::accumulate_grads(&tape, &grads, &vars, &mut acc);
            adam.step(&mut self.params, &acc)?;
        }
        self.trained = true;
        Ok(())
    }

    /// Impute by encoding the query with missing entries set to the
    /// training column means, decoding the posterior mean, and reading the
    /// requested columns.
    pub fn impute(&self, query_primary: &[f64], primary_cols: usize) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(CoreError::InvalidConfig { reason: "VAE model is untrained".into() });
        }
        if query_primary.len() != primary_cols {
            return Err(CoreError::ShapeMismatch {
                op: "vae_impute".into(),
                lhs: vec![query_primary.len()],
                rhs: vec![primary_cols],
            });
        }
        let mut x = self.column_means.clone();
        x[..primary_cols].copy_from_slice(query_primary);
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let xv = tape.leaf(Tensor::from_vec(x));
        let (mu, _) = self.encode(&mut tape, &vars, xv)?;
        let xhat = self.decode(&mut tape, &vars, mu)?;
        Ok(tape.values(xhat)[primary_cols..].to_vec())
    }
}

/// Closed-form KL divergence of a diagonal Gaussian to the unit Gaussian:
/// `-0.5 * sum(1 + logvar - mu^2 - exp(logvar))`.
pub fn kl_to_unit_gaussian(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let mu_sq = tape.square(mu);
    let var = tape.exp(logvar);
    let one_plus = tape.add_const(logvar, 1.0);
    let a = tape.sub(one_plus, mu_sq)?;
    let inner = tape.sub(a, var)?;
    let total = tape.sum(inner);
    Ok(tape.scalar_mul(total, -0.5))
}
