//! Alternating least squares matrix completion, plain and biased
//! (weighted-lambda regularization).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Rows are pose samples, columns flattened landmark coordinates, with an
/// observed-entry mask. Query rows observe the primary columns only.
#[derive(Debug, Clone)]
pub struct CompletionMatrix {
    pub values: DMatrix<f64>,
    pub observed: DMatrix<bool>,
}

impl CompletionMatrix {
    pub fn new(values: DMatrix<f64>, observed: DMatrix<bool>) -> Result<Self> {
        if values.shape() != observed.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "completion_matrix".into(),
                lhs: vec![values.nrows(), values.ncols()],
                rhs: vec![observed.nrows(), observed.ncols()],
            });
        }
        Ok(Self { values, observed })
    }

    pub fn fully_observed(values: DMatrix<f64>) -> Self {
        let observed = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self { values, observed }
    }

    fn column_counts(&self) -> Vec<usize> {
        (0..self.values.ncols())
            .map(|c| (0..self.values.nrows()).filter(|&r| self.observed[(r, c)]).count())
            .collect()
    }

    fn row_counts(&self) -> Vec<usize> {
        (0..self.values.nrows())
            .map(|r| (0..self.values.ncols()).filter(|&c| self.observed[(r, c)]).count())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlsConfig {
    pub rank: usize,
    pub iterations: usize,
    pub lambda: f64,
    /// Weighted-lambda regularization: the ridge of each row/column factor
    /// scales with its observation count.
    pub biased: bool,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self { rank: 8, iterations: 100, lambda: 1e-2, biased: false, seed: 17 }
    }
}

#[derive(Debug, Clone)]
pub struct AlsOutcome {
    /// Low-rank reconstruction `U W^T` over the full matrix.
    pub completed: DMatrix<f64>,
    /// Regularized objective after every half-sweep.
    pub objective_trace: Vec<f64>,
    /// Set when the masked error grew past ten times its initial value.
    pub diverged: bool,
}

/// Alternating minimization of the masked Frobenius error with ridge
/// regularization on both factors.
pub fn als_complete(m: &CompletionMatrix, config: &AlsConfig) -> Result<AlsOutcome> {
    let (rows, cols) = m.values.shape();
    if config.rank == 0 || config.rank > rows.min(cols) {
        return Err(CoreError::InvalidConfig {
            reason: format!("rank {} outside 1..={}", config.rank, rows.min(cols)),
        });
    }
    let col_counts = m.column_counts();
    if let Some(empty) = col_counts.iter().position(|&c| c == 0) {
        return Err(CoreError::Dataset { reason: format!("column {empty} has no observations") });
    }
    let row_counts = m.row_counts();

    let r = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut u = DMatrix::from_fn(rows, r, |_, _| rng.random_range(-0.1..0.1));
    let mut w = DMatrix::from_fn(cols, r, |_, _| rng.random_range(-0.1..0.1));

    let ridge_weight = |count: usize| if config.biased { count as f64 } else { 1.0 };
    let masked_error = |u: &DMatrix<f64>, w: &DMatrix<f64>| -> f64 {
        let mut err = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                if m.observed[(i, j)] {
                    let pred = u.row(i).dot(&w.row(j));
                    err += (m.values[(i, j)] - pred) * (m.values[(i, j)] - pred);
                }
            }
        }
        err
    };
    let objective = |u: &DMatrix<f64>, w: &DMatrix<f64>| -> f64 {
        let mut obj = masked_error(u, w);
        for i in 0..rows {
            obj += config.lambda * ridge_weight(row_counts[i]) * u.row(i).norm_squared();
        }
        for j in 0..cols {
            obj += config.lambda * ridge_weight(col_counts[j]) * w.row(j).norm_squared();
        }
        obj
    };

    let initial_error = masked_error(&u, &w).max(1e-12);
    let mut trace = Vec::with_capacity(2 * config.iterations);
    let mut diverged = false;

    // ridge solve for one factor row given the fixed other factor
    let solve_row = |other: &DMatrix<f64>, obs_idx: &[usize], targets: &[f64], lam: f64| -> DVector<f64> {
        let mut ata = DMatrix::zeros(r, r);
        let mut atb = DVector::zeros(r);
        for (&j, &y) in obs_idx.iter().zip(targets) {
            let row = other.row(j);
            for a in 0..r {
                atb[a] += row[a] * y;
                for b in 0..r {
                    ata[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..r {
            ata[(a, a)] += lam;
        }
        ata.cholesky()
            .map(|ch| ch.solve(&atb))
            .unwrap_or_else(|| DVector::zeros(r))
    };

    for _ in 0..config.iterations {
        for i in 0..rows {
            let obs: Vec<usize> = (0..cols).filter(|&j| m.observed[(i, j)]).collect();
            if obs.is_empty() {
                continue;
            }
            let targets: Vec<f64> = obs.iter().map(|&j| m.values[(i, j)]).collect();
            let sol = solve_row(&w, &obs, &targets, config.lambda * ridge_weight(row_counts[i]));
            for a in 0..r {
                u[(i, a)] = sol[a];
            }
        }
        trace.push(objective(&u, &w));
        for j in 0..cols {
            let obs: Vec<usize> = (0..rows).filter(|&i| m.observed[(i, j)]).collect();
            let targets: Vec<f64> = obs.iter().map(|&i| m.values[(i, j)]).collect();
            let sol = solve_row(&u, &obs, &targets, config.lambda * ridge_weight(col_counts[j]));
            for a in 0..r {
                w[(j, a)] = sol[a];
            }
        }
        trace.push(objective(&u, &w));
        if masked_error(&u, &w) > 10.0 * initial_error {
            diverged = true;
            break;
        }
    }
    Ok(AlsOutcome { completed: &u * w.transpose(), objective_trace: trace, diverged })
}

/// Append a query row (primary columns observed, the rest missing) to a
/// labeled matrix, reporting the nearest labeled row's distance over the
/// primary columns for diagnostics.
pub fn nearest_neighbor_query(
    labeled: &DMatrix<f64>,
    query_primary: &[f64],
    primary_cols: usize,
) -> Result<(CompletionMatrix, f64)> {
    if labeled.nrows() == 0 {
        return Err(CoreError::EmptyInput { context: "nearest_neighbor_query: labeled set".into() });
    }
    if query_primary.len() != primary_cols || primary_cols > labeled.ncols() {
        return Err(CoreError::ShapeMismatch {
            op: "nearest_neighbor_query".into(),
            lhs: vec![query_primary.len()],
            rhs: vec![primary_cols],
        });
    }
    let mut nn = f64::INFINITY;
    for i in 0..labeled.nrows() {
        let d: f64 = (0..primary_cols)
            .map(|c| (labeled[(i, c)] - query_primary[c]).powi(2))
            .sum::<f64>()
            .sqrt();
        nn = nn.min(d);
    }
    let rows = labeled.nrows() + 1;
    let cols = labeled.ncols();
    let mut values = DMatrix::zeros(rows, cols);
    let mut observed = DMatrix::from_element(rows, cols, true);
    values.view_mut((0, 0), (rows - 1, cols)).copy_from(labeled);
    for c in 0..primary_cols {
        values[(rows - 1, c)] = query_primary[c];
    }
    for c in primary_cols..cols {
        observed[(rows - 1, c)] = false;
    }
    Ok((CompletionMatrix { values, observed }, nn))
}

/// Batch variant: all queries appended at once so a single completion
/// serves every test pose.
pub fn batch_query_matrix(
    labeled: &DMatrix<f64>,
    queries: &[Vec<f64>],
    primary_cols: usize,
) -> Result<CompletionMatrix> {
    if labeled.nrows() == 0 {
        return Err(CoreError::EmptyInput { context: "batch_query_matrix: labeled set".into() });
    }
    let rows = labeled.nrows() + queries.len();
    let cols = labeled.ncols();
    let mut values = DMatrix::zeros(rows, cols);
    let mut observed = DMatrix::from_element(rows, cols, true);
    values.view_mut((0, 0), (labeled.nrows(), cols)).copy_from(labeled);
    for (qi, q) in queries.iter().enumerate() {
        if q.len() != primary_cols {
            return Err(CoreError::ShapeMismatch {
                op: "batch_query_matrix".into(),
                lhs: vec![q.len()],
                rhs: vec![primary_cols],
            });
        }
        let row = labeled.nrows() + qi;
        for c in 0..primary_cols {
            values[(row, c)] = q[c];
        }
        for c in primary_cols..cols {
            observed[(row, c)] = false;
        }
    }
    CompletionMatrix::new(values, observed)
}
