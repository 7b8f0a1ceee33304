//! Liquidation under linear price impact: selling pressure moves prices
//! against the seller, so the realized cash of a schedule depends on how
//! the position is split over time.

use std::io::{self, Write};

use thiserror::Error;

use crate::core::{fmt_sig12, ScenarioMatrix};

#[derive(Debug, Error)]
pub enum LiquidationError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Prices at a point in the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub prices: Vec<f64>,
    pub time: usize,
}

impl MarketState {
    pub fn new(prices: Vec<f64>) -> Result<Self, LiquidationError> {
        if prices.is_empty() || prices.iter().any(|p| !p.is_finite()) {
            return Err(LiquidationError::Domain(
                "prices must be a nonempty finite vector".into(),
            ));
        }
        Ok(Self { prices, time: 0 })
    }

    pub fn n_assets(&self) -> usize {
        self.prices.len()
    }
}

/// Price-impact coefficients, one shared value or one per asset.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpactParams {
    Uniform(f64),
    PerAsset(Vec<f64>),
}

impl ImpactParams {
    fn validate(&self, n_assets: usize) -> Result<(), LiquidationError> {
        match self {
            ImpactParams::Uniform(eta) => {
                if !(eta.is_finite() && *eta >= 0.0) {
                    return Err(LiquidationError::Domain(format!(
                        "impact must be nonnegative, got {eta}"
                    )));
                }
            }
            ImpactParams::PerAsset(etas) => {
                if etas.len() != n_assets {
                    return Err(LiquidationError::Dimension(format!(
                        "{} impact entries for {} assets",
                        etas.len(),
                        n_assets
                    )));
                }
                if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(LiquidationError::Domain(
                        "impact entries must be nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn eta(&self, i: usize) -> f64 {
        match self {
            ImpactParams::Uniform(eta) => *eta,
            ImpactParams::PerAsset(etas) => etas[i],
        }
    }
}

fn check_step(
    state: &MarketState,
    returns_t: &[f64],
    liquidated_t: &[f64],
    impact: &ImpactParams,
) -> Result<(), LiquidationError> {
    let n = state.n_assets();
    if returns_t.len() != n || liquidated_t.len() != n {
        return Err(LiquidationError::Dimension(format!(
            "state has {n} assets, returns {} and schedule {}",
            returns_t.len(),
            liquidated_t.len()
        )));
    }
    impact.validate(n)
}

/// Next prices `p' = p + x - eta w` componentwise: liquidating
/// (`w_i > 0`) pushes the price down, buying back pushes it up.
pub fn step_price(
    state: &MarketState,
    returns_t: &[f64],
    liquidated_t: &[f64],
    impact: &ImpactParams,
) -> Result<MarketState, LiquidationError> {
    check_step(state, returns_t, liquidated_t, impact)?;
    let prices = state
        .prices
        .iter()
        .enumerate()
        .map(|(i, p)| p + returns_t[i] - impact.eta(i) * liquidated_t[i])
        .collect();
    Ok(MarketState {
        prices,
        time: state.time + 1,
    })
}

/// Cash realized by one step, `w . p + w . (x - eta w)`: the first term is
/// deterministic at the current prices, the second carries the return risk
/// and the quadratic impact cost.
pub fn cash_flow(
    state: &MarketState,
    returns_t: &[f64],
    liquidated_t: &[f64],
    impact: &ImpactParams,
) -> Result<f64, LiquidationError> {
    check_step(state, returns_t, liquidated_t, impact)?;
    Ok(liquidated_t
        .iter()
        .enumerate()
        .map(|(i, w)| w * (state.prices[i] + returns_t[i] - impact.eta(i) * w))
        .sum())
}

/// Full run of a schedule against a return stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LiquidationRun {
    /// Cash per step, same length as the schedule.
    pub cash: Vec<f64>,
    /// Price states from the initial one through every post-step state;
    /// one entry longer than the schedule.
    pub price_path: Vec<MarketState>,
    pub total_proceeds: f64,
}

/// Folds the schedule through [`cash_flow`] and [`step_price`], consuming
/// return column `t` of `returns` at step `t`.
pub fn simulate_liquidation(
    schedule: &[Vec<f64>],
    returns: &ScenarioMatrix,
    p0: &[f64],
    impact: &ImpactParams,
) -> Result<LiquidationRun, LiquidationError> {
    let n = returns.n_assets();
    if p0.len() != n {
        return Err(LiquidationError::Dimension(format!(
            "{} initial prices for {} assets",
            p0.len(),
            n
        )));
    }
    if schedule.len() > returns.n_samples() {
        return Err(LiquidationError::Dimension(format!(
            "schedule of {} steps exceeds the {} available return columns",
            schedule.len(),
            returns.n_samples()
        )));
    }
    let mut state = MarketState::new(p0.to_vec())?;
    let mut cash = Vec::with_capacity(schedule.len());
    let mut price_path = Vec::with_capacity(schedule.len() + 1);
    price_path.push(state.clone());
    for (t, liquidated_t) in schedule.iter().enumerate() {
        let x_t = returns.scenario(t);
        cash.push(cash_flow(&state, x_t, liquidated_t, impact)?);
        state = step_price(&state, x_t, liquidated_t, impact)?;
        price_path.push(state.clone());
    }
    let total_proceeds = cash.iter().sum();
    Ok(LiquidationRun {
        cash,
        price_path,
        total_proceeds,
    })
}

/// Writes one row per executed step: the step index, its cash, and the
/// prices left after the trade.
pub fn write_liquidation_csv<W: Write>(
    run: &LiquidationRun,
    out: &mut W,
) -> io::Result<()> {
    let n = run.price_path[0].n_assets();
    let header: Vec<String> = (1..=n).map(|i| format!("price_{i}")).collect();
    writeln!(out, "t,cash,{}", header.join(","))?;
    for (t, c) in run.cash.iter().enumerate() {
        let prices: Vec<String> = run.price_path[t + 1]
            .prices
            .iter()
            .map(|&p| fmt_sig12(p))
            .collect();
        writeln!(out, "{},{},{}", t, fmt_sig12(*c), prices.join(","))?;
    }
    Ok(())
}
