//! Empirical risk estimators: scenario losses with and without market
//! impact, value-at-risk, expected shortfall through its auxiliary
//! minimization objective, and maximal loss.

use thiserror::Error;

use crate::core::{Portfolio, ScenarioMatrix};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("loss sample must be non-empty with finite entries")]
    InvalidSample,
}

/// Losses over T scenarios, positive values are losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    losses: Vec<f64>,
}

impl LossSample {
    pub fn new(losses: Vec<f64>) -> Result<Self, RiskError> {
        if losses.is_empty() || !losses.iter().all(|l| l.is_finite()) {
            return Err(RiskError::InvalidSample);
        }
        Ok(Self { losses })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max(&self) -> f64 {
        self.losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Loss of `portfolio` under one scenario: `-sum_i w_i x_i + eta sum_i w_i^2`.
/// With `eta = 0` this is the plain linear loss.
pub fn portfolio_loss(
    portfolio: &Portfolio,
    scenario_column: &[f64],
    eta: f64,
) -> Result<f64, RiskError> {
    if portfolio.weights.len() != scenario_column.len() {
        return Err(RiskError::Dimension {
            expected: portfolio.weights.len(),
            got: scenario_column.len(),
        });
    }
    let mut dot = 0.0;
    let mut sq = 0.0;
    for (w, x) in portfolio.weights.iter().zip(scenario_column) {
        dot += w * x;
        sq += w * w;
    }
    Ok(-dot + eta * sq)
}

/// Losses of `portfolio` across all scenarios of the matrix.
pub fn loss_sample(
    portfolio: &Portfolio,
    scenarios: &ScenarioMatrix,
    eta: f64,
) -> Result<LossSample, RiskError> {
    if portfolio.weights.len() != scenarios.n_assets() {
        return Err(RiskError::Dimension {
            expected: scenarios.n_assets(),
            got: portfolio.weights.len(),
        });
    }
    let sq: f64 = portfolio.weights.iter().map(|w| w * w).sum();
    let impact = eta * sq;
    let losses = scenarios
        .scenarios()
        .map(|x| {
            let dot: f64 = portfolio.weights.iter().zip(x).map(|(w, x)| w * x).sum();
            -dot + impact
        })
        .collect();
    LossSample::new(losses)
}

/// Snaps `m` to the nearest integer when it is within `1e-9 * max(1, m)`,
/// absorbing representation error in products like `(1 - beta) * T`.
fn snap_count(m: f64) -> Option<usize> {
    let r = m.round();
    if r >= 0.0 && (m - r).abs() <= 1e-9 * m.abs().max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Empirical beta-VaR: the smallest sample value `l` such that the fraction
/// of losses `<= l` is at least `beta` (left-continuous empirical quantile).
pub fn empirical_var(sample: &LossSample, beta: f64) -> f64 {
    let t = sample.losses.len();
    let m = beta * t as f64;
    let k = match snap_count(m) {
        Some(r) => r.max(1),
        None => m.ceil() as usize,
    }
    .min(t);
    let mut sorted = sample.losses.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[k - 1]
}

/// The auxiliary objective whose minimum over `v` is the expected shortfall:
/// `v + (1 / ((1 - beta) T)) * sum_tau max(l_tau - v, 0)`. Convex and
/// piecewise linear in `v`.
pub fn ru_objective(sample: &LossSample, v: f64, beta: f64) -> f64 {
    let t = sample.losses.len() as f64;
    let hinge: f64 = sample.losses.iter().map(|l| (l - v).max(0.0)).sum();
    v + hinge / ((1.0 - beta) * t)
}

/// Expected shortfall of the sample at level `beta`, together with the
/// smallest minimizer `v_star` of [`ru_objective`].
///
/// When the tail count `(1 - beta) T` is an integer `k`, the shortfall is
/// computed as the exact mean of the `k` largest losses, so the identity
/// with the maximal loss at `beta = 1 - 1/T` holds without rounding error.
pub fn empirical_es(sample: &LossSample, beta: f64) -> (f64, f64) {
    let t = sample.losses.len();
    let m = (1.0 - beta) * t as f64;
    let mut desc = sample.losses.clone();
    desc.sort_by(|a, b| b.partial_cmp(a).unwrap());

    if let Some(k) = snap_count(m) {
        let k = k.min(t);
        if k >= 1 {
            let es = desc[..k].iter().sum::<f64>() / k as f64;
            let v_star = desc[k.min(t - 1)];
            return (es, v_star);
        }
        // Tail count below one half: the minimum sits at the largest loss.
        return (desc[0], desc[0]);
    }

    // Non-integer tail count: the minimum of the piecewise-linear objective
    // sits at the (floor(m) + 1)-th largest sample value.
    let k = (m.floor() as usize).min(t - 1);
    let v_star = desc[k];
    (ru_objective(sample, v_star, beta), v_star)
}

/// Worst-case loss over all scenarios, plus the impact penalty:
/// `max_tau(-sum_i w_i x_{i,tau}) + eta sum_i w_i^2`.
pub fn maximal_loss(portfolio: &Portfolio, scenarios: &ScenarioMatrix, eta: f64) -> f64 {
    let sq: f64 = portfolio.weights.iter().map(|w| w * w).sum();
    let worst = scenarios
        .scenarios()
        .map(|x| -portfolio.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    worst + eta * sq
}
