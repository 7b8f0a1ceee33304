//! Shared domain types: scenario data, portfolios, risk parameters, and the
//! conversions between the impact parameter `eta`, the rescaled regularizer
//! `eta_tilde`, and the regularization constant `c_reg`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("scenario file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Return scenarios for `n_assets` assets observed over `n_samples` time
/// steps. Entry `(i, tau)` is the return of asset `i` in scenario `tau`.
///
/// Scenarios are stored contiguously so that the loss of a portfolio in one
/// scenario is a single dot product over a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMatrix {
    n_assets: usize,
    n_samples: usize,
    /// Scenario-major layout: `data[tau * n_assets + i]`.
    data: Vec<f64>,
}

impl ScenarioMatrix {
    /// Builds a matrix from scenario-major data (`data[tau * n_assets + i]`).
    pub fn new(n_assets: usize, n_samples: usize, data: Vec<f64>) -> Result<Self, CoreError> {
        if n_assets == 0 || n_samples == 0 {
            return Err(CoreError::Domain(
                "scenario matrix dimensions must be positive".into(),
            ));
        }
        if data.len() != n_assets * n_samples {
            return Err(CoreError::Dimension {
                expected: n_assets * n_samples,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(CoreError::Domain(
                "scenario matrix entries must be finite".into(),
            ));
        }
        Ok(Self {
            n_assets,
            n_samples,
            data,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Aspect ratio t = N/T.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets as f64 / self.n_samples as f64
    }

    /// Return of asset `i` in scenario `tau`.
    pub fn entry(&self, i: usize, tau: usize) -> f64 {
        self.data[tau * self.n_assets + i]
    }

    /// All asset returns of scenario `tau` as one contiguous slice.
    pub fn scenario(&self, tau: usize) -> &[f64] {
        let start = tau * self.n_assets;
        &self.data[start..start + self.n_assets]
    }

    /// Iterator over scenario slices in time order.
    pub fn scenarios(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_assets)
    }

    /// Reorders assets: new asset `i` is old asset `perm[i]`.
    pub fn permute_assets(&self, perm: &[usize]) -> Result<Self, CoreError> {
        if perm.len() != self.n_assets {
            return Err(CoreError::Dimension {
                expected: self.n_assets,
                got: perm.len(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len());
        for tau in 0..self.n_samples {
            let row = self.scenario(tau);
            data.extend(perm.iter().map(|&j| row[j]));
        }
        Self::new(self.n_assets, self.n_samples, data)
    }
}

/// A vector of positions together with the budget scale `w`. The budget
/// constraint is `sum_i weights_i = w * N`. Positive weights are positions
/// to be liquidated.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub weights: Vec<f64>,
    pub budget_scale: f64,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>, budget_scale: f64) -> Self {
        Self {
            weights,
            budget_scale,
        }
    }

    /// Uniform portfolio `w_i = w` (the minimum-norm budget-feasible point).
    pub fn uniform(n_assets: usize, budget_scale: f64) -> Self {
        Self {
            weights: vec![budget_scale; n_assets],
            budget_scale,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.weights.len()
    }

    /// Mean square weight, q0 = (1/N) sum_i w_i^2. Bounded below by the
    /// squared budget scale for any budget-feasible portfolio.
    pub fn q0(&self) -> f64 {
        let n = self.weights.len() as f64;
        self.weights.iter().map(|w| w * w).sum::<f64>() / n
    }

    /// Signed violation of the budget constraint, `sum_i w_i - w * N`.
    pub fn budget_residual(&self) -> f64 {
        let n = self.weights.len() as f64;
        self.weights.iter().sum::<f64>() - self.budget_scale * n
    }

    /// Checks `|sum_i w_i - w N| <= tol * N`.
    pub fn is_budget_feasible(&self, tol: f64) -> bool {
        self.budget_residual().abs() <= tol * self.weights.len() as f64
    }
}

/// Confidence level and impact parameters in their three equivalent
/// parameterizations. `eta` is the raw impact parameter, `eta_tilde` the
/// rescaled regularizer appearing in the quadratic cost, and `c_reg` the
/// regularization constant; they satisfy
/// `eta_tilde = (1 - beta) T eta` and `c_reg = 1 / (2 (1 - beta) eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    pub beta: f64,
    pub eta: f64,
    pub eta_tilde: f64,
    /// `f64::INFINITY` in the unregularized limit `eta = 0`.
    pub c_reg: f64,
}

impl RiskParams {
    /// Builds parameters from the impact parameter `eta >= 0`.
    pub fn from_eta(beta: f64, eta: f64, n_samples: usize) -> Result<Self, CoreError> {
        check_beta(beta)?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(CoreError::Domain(format!(
                "impact parameter must be finite and nonnegative, got {eta}"
            )));
        }
        let c_reg = if eta > 0.0 {
            c_from_eta(eta, beta)?
        } else {
            f64::INFINITY
        };
        Ok(Self {
            beta,
            eta,
            eta_tilde: eta_tilde_from_eta(eta, n_samples, beta),
            c_reg,
        })
    }

    /// Builds parameters from the rescaled regularizer `eta_tilde >= 0`.
    pub fn from_eta_tilde(beta: f64, eta_tilde: f64, n_samples: usize) -> Result<Self, CoreError> {
        check_beta(beta)?;
        if !(eta_tilde >= 0.0 && eta_tilde.is_finite()) {
            return Err(CoreError::Domain(format!(
                "regularizer must be finite and nonnegative, got {eta_tilde}"
            )));
        }
        let eta = eta_tilde / ((1.0 - beta) * n_samples as f64);
        Self::from_eta(beta, eta, n_samples)
    }
}

fn check_beta(beta: f64) -> Result<(), CoreError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(CoreError::Domain(format!(
            "confidence level must lie in (0, 1), got {beta}"
        )))
    }
}

/// Regularization constant `C = 1 / (2 (1 - beta) eta)`.
///
/// Rejects `eta <= 0`: the unregularized limit has `C = infinity` and must be
/// handled explicitly by the caller.
pub fn c_from_eta(eta: f64, beta: f64) -> Result<f64, CoreError> {
    check_beta(beta)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(CoreError::Domain(format!(
            "impact parameter must be positive for a finite regularization constant, got {eta}"
        )));
    }
    Ok(1.0 / (2.0 * (1.0 - beta) * eta))
}

/// Inverse of [`c_from_eta`].
pub fn eta_from_c(c_reg: f64, beta: f64) -> Result<f64, CoreError> {
    check_beta(beta)?;
    if !(c_reg > 0.0 && c_reg.is_finite()) {
        return Err(CoreError::Domain(format!(
            "regularization constant must be positive and finite, got {c_reg}"
        )));
    }
    Ok(1.0 / (2.0 * (1.0 - beta) * c_reg))
}

/// Rescaled regularizer `eta_tilde = (1 - beta) T eta`. With this value the
/// quadratic-penalty cost and the impact-constrained program have identical
/// minimizers.
pub fn eta_tilde_from_eta(eta: f64, n_samples: usize, beta: f64) -> f64 {
    (1.0 - beta) * n_samples as f64 * eta
}

/// Numerical tolerances used across solvers and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Constraint feasibility.
    pub constraint: f64,
    /// KKT residual norms on optimal solutions.
    pub kkt: f64,
    /// Stationarity residuals of the saddle-point equations.
    pub saddle_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            constraint: 1e-8,
            kkt: 1e-7,
            saddle_residual: 1e-10,
        }
    }
}

/// Formats `x` with 12 significant digits, locale independent. Used by the
/// CSV writers so that identical runs produce byte-identical files.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{:.11e}", x);
    // Normalize the exponent to at least two digits so columns line up
    // consistently across platforms.
    match s.split_once('e') {
        Some((mant, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ("-", d),
                None => ("", exp),
            };
            format!("{mant}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

/// Reads a scenario CSV: header `asset_1,...,asset_N`, one row per scenario.
pub fn read_scenarios<R: BufRead>(reader: R) -> Result<ScenarioMatrix, CoreError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse {
            line: 1,
            msg: "missing header row".into(),
        })??;
    let n_assets = header.trim().split(',').count();
    for (k, name) in header.trim().split(',').enumerate() {
        let expected = format!("asset_{}", k + 1);
        if name.trim() != expected {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("expected header column `{expected}`, got `{name}`"),
            });
        }
    }
    let mut data = Vec::new();
    let mut n_samples = 0;
    for (k, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lineno = k + 2;
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != n_assets {
            return Err(CoreError::Parse {
                line: lineno,
                msg: format!("expected {n_assets} fields, got {}", fields.len()),
            });
        }
        for field in fields {
            let value: f64 = field.trim().parse().map_err(|e| CoreError::Parse {
                line: lineno,
                msg: format!("invalid number `{field}`: {e}"),
            })?;
            data.push(value);
        }
        n_samples += 1;
    }
    ScenarioMatrix::new(n_assets, n_samples, data)
}

/// Writes the scenario CSV format accepted by [`read_scenarios`]. Values are
/// written in shortest round-trip form.
pub fn write_scenarios<W: Write>(mut out: W, scenarios: &ScenarioMatrix) -> Result<(), CoreError> {
    let header: Vec<String> = (1..=scenarios.n_assets())
        .map(|i| format!("asset_{i}"))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for tau in 0..scenarios.n_samples() {
        let row: Vec<String> = scenarios
            .scenario(tau)
            .iter()
            .map(|x| format!("{x}"))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn load_scenarios(path: &Path) -> Result<ScenarioMatrix, CoreError> {
    let file = std::fs::File::open(path)?;
    read_scenarios(std::io::BufReader::new(file))
}

pub fn save_scenarios(path: &Path, scenarios: &ScenarioMatrix) -> Result<(), CoreError> {
    let file = std::fs::File::create(path)?;
    write_scenarios(std::io::BufWriter::new(file), scenarios)
}

impl fmt::Display for ScenarioMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} assets x {} scenarios (t = {})",
            self.n_assets,
            self.n_samples,
            self.aspect_ratio()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regularization_constant_examples() {
        assert_eq!(c_from_eta(0.5, 0.5).unwrap(), 2.0);
        assert!((c_from_eta(1.0, 0.9).unwrap() - 5.0).abs() < 1e-12);
        // At beta = 1 - 1/T the constant reduces to C = T / (2 eta).
        let t_prime = 40.0;
        for eta in [0.5, 1.0 / (2.0 * t_prime), 0.03] {
            let c = c_from_eta(eta, 1.0 - 1.0 / t_prime).unwrap();
            let expected = t_prime / (2.0 * eta);
            assert!((c - expected).abs() <= 1e-9 * expected);
        }
        assert!(c_from_eta(0.0, 0.5).is_err());
        assert!(c_from_eta(-1.0, 0.5).is_err());
        assert!(c_from_eta(0.5, 1.0).is_err());
    }

    #[test]
    fn eta_round_trip() {
        for &eta in &[1e-6, 0.01, 0.5, 3.0, 1e4] {
            for &beta in &[0.1, 0.5, 0.7, 0.99] {
                let c = c_from_eta(eta, beta).unwrap();
                let back = eta_from_c(c, beta).unwrap();
                assert!((back - eta).abs() <= 1e-15 * eta);
            }
        }
    }

    #[test]
    fn eta_tilde_examples() {
        assert_eq!(eta_tilde_from_eta(0.0, 100, 0.7), 0.0);
        let v = eta_tilde_from_eta(0.01, 100, 0.7);
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn risk_params_consistency() {
        let p = RiskParams::from_eta(0.7, 0.01, 100).unwrap();
        assert!((p.c_reg - 1.0 / (2.0 * 0.3 * 0.01)).abs() < 1e-9);
        assert!((p.eta_tilde - 0.3).abs() < 1e-14);
        let q = RiskParams::from_eta_tilde(0.7, p.eta_tilde, 100).unwrap();
        assert!((q.eta - 0.01).abs() < 1e-16);
        let unreg = RiskParams::from_eta(0.7, 0.0, 100).unwrap();
        assert_eq!(unreg.eta_tilde, 0.0);
        assert!(unreg.c_reg.is_infinite());
    }

    #[test]
    fn portfolio_q0_budget() {
        let p = Portfolio::uniform(7, 1.0);
        assert_eq!(p.q0(), 1.0);
        assert_eq!(p.budget_residual(), 0.0);
        let q = Portfolio::new(vec![3.0, -1.0, 1.0, 1.0], 1.0);
        assert!(q.is_budget_feasible(1e-12));
        assert!(q.q0() >= q.budget_scale * q.budget_scale);
        let r = Portfolio::new(vec![1.0, 2.0], 1.0);
        assert!(!r.is_budget_feasible(1e-8));
    }

    #[test]
    fn scenario_matrix_accessors() {
        let m = ScenarioMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.entry(0, 0), 1.0);
        assert_eq!(m.entry(1, 0), 2.0);
        assert_eq!(m.entry(0, 2), 5.0);
        assert_eq!(m.scenario(1), &[3.0, 4.0]);
        assert!((m.aspect_ratio() - 2.0 / 3.0).abs() < 1e-16);
        assert!(ScenarioMatrix::new(2, 2, vec![0.0; 4]).is_ok());
        assert!(ScenarioMatrix::new(0, 2, vec![]).is_err());
        assert!(ScenarioMatrix::new(2, 2, vec![f64::NAN; 4]).is_err());
        assert!(ScenarioMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn permute_assets_reorders_rows() {
        let m = ScenarioMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = m.permute_assets(&[2, 0, 1]).unwrap();
        assert_eq!(p.scenario(0), &[3.0, 1.0, 2.0]);
        assert_eq!(p.scenario(1), &[6.0, 4.0, 5.0]);
    }

    #[test]
    fn csv_round_trip() {
        let m = ScenarioMatrix::new(
            3,
            2,
            vec![0.1, -0.25, 1e-7, -3.5e2, 0.333333333333333, 7.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("asset_1,asset_2,asset_3\n"));
        let back = read_scenarios(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let bad_header = "asset_1,asset_3\n0.1,0.2\n";
        assert!(read_scenarios(std::io::Cursor::new(bad_header)).is_err());
        let bad_field = "asset_1,asset_2\n0.1,abc\n";
        assert!(read_scenarios(std::io::Cursor::new(bad_field)).is_err());
        let ragged = "asset_1,asset_2\n0.1\n";
        assert!(read_scenarios(std::io::Cursor::new(ragged)).is_err());
    }

    #[test]
    fn sig12_formatting_is_stable() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(1.0), "1.00000000000e00");
        assert_eq!(fmt_sig12(-0.25), "-2.50000000000e-01");
        assert_eq!(fmt_sig12(1234.5678), "1.23456780000e03");
        assert_eq!(fmt_sig12(3.0e-12), "3.00000000000e-12");
    }
}
