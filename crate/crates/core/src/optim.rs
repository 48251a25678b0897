//! Named parameter sets and the adaptive-moment optimizer with the
//! exponential step-decay schedule used by the trainer.

use std::collections::BTreeMap;

use crate::checkpoint::Checkpoint;
use crate::error::{CoreError, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Ordered map of parameter-path -> tensor. Iteration order is the sorted
/// path order, which keeps every reduction deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, tensor: Tensor) {
        self.entries.insert(path.to_string(), tensor);
    }

    pub fn get(&self, path: &str) -> &Tensor {
        self.entries.get(path).unwrap_or_else(|| panic!("unknown parameter {path:?}"))
    }

    pub fn set(&mut self, path: &str, tensor: Tensor) {
        debug_assert!(self.entries.contains_key(path), "unknown parameter {path:?}");
        self.entries.insert(path.to_string(), tensor);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|t| t.is_finite())
    }

    /// Register every parameter as a tape leaf, returning path -> handle.
    pub fn register(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.entries.iter().map(|(k, v)| (k.clone(), tape.leaf(v.clone()))).collect()
    }

    /// Collect gradients for all registered parameters, summing into `acc`.
    /// Detached parameters contribute zeros.
    pub fn accumulate_grads(
        tape: &Tape,
        grads: &Gradients,
        handles: &BTreeMap<String, Var>,
        acc: &mut BTreeMap<String, Vec<f64>>,
    ) {
        for (path, &var) in handles {
            let (g, _) = grads.get_or_zero(tape, var);
            let slot = acc
                .entry(path.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (s, &v) in slot.iter_mut().zip(g.values()) {
                *s += v;
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        for (path, tensor) in &self.entries {
            ckpt.insert(path, tensor);
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut set = Self::new();
        for (path, entry) in &ckpt.params {
            set.insert(path, Tensor::new(entry.shape.clone(), entry.values.clone())?);
        }
        Ok(set)
    }
}

/// Adam with the exponential schedule `lr(step) = lr0 * decay^(step / decay_steps)`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    step: usize,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr0: f64, decay_rate: f64, decay_steps: usize) -> Self {
        Self {
            lr0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_rate,
            decay_steps: decay_steps.max(1),
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Learning rate that the *next* step will use.
    pub fn current_lr(&self) -> f64 {
        self.lr0 * self.decay_rate.powi((self.step / self.decay_steps) as i32)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);

        let paths: Vec<String> = params.iter().map(|(p, _)| p.clone()).collect();
        for path in paths {
            let Some(g) = grads.get(&path) else { continue };
            let old = params.get(&path);
            if g.len() != old.len() {
                return Err(CoreError::ShapeMismatch {
                    op: format!("adam step on {path}"),
                    lhs: old.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            let m = self.m.entry(path.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(path.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let mut next = old.values().to_vec();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                next[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            let shape = old.shape().to_vec();
            params.set(&path, Tensor::new(shape, next)?);
        }
        Ok(())
    }
}
