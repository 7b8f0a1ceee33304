//! Scenario-based portfolio optimizers: expected shortfall and maximal
//! loss, each with and without quadratic market impact. Unbounded outcomes
//! carry the runaway direction in weight space.

use serde::Serialize;
use thiserror::Error;

use crate::core::{CoreError, Portfolio, ScenarioMatrix, Tolerances};
use crate::lpqp::{
    solve_lp_with, solve_qp_with, DenseMatrix, KktReport, LinearProgram, LpqpError,
    QuadraticProgram, Status,
};

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("solver failure: {0}")]
    Solver(#[from] LpqpError),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Optimal solution of an expected-shortfall program.
#[derive(Debug, Clone)]
pub struct EsSolution {
    pub portfolio: Portfolio,
    /// The quantile-like auxiliary variable `v`.
    pub v_star: f64,
    /// `epsilon = v - eta ||w||^2`; equals `v_star` when there is no impact.
    pub epsilon_star: f64,
    /// Hinge slacks, one per scenario.
    pub u: Vec<f64>,
    /// Objective value of the program that was solved.
    pub objective: f64,
    pub q0: f64,
    /// Expected shortfall of the optimal portfolio's loss sample
    /// (impact-adjusted when the program is regularized).
    pub es: f64,
    pub kkt: KktReport,
}

/// Optimal solution of a maximal-loss program.
#[derive(Debug, Clone)]
pub struct MlSolution {
    pub portfolio: Portfolio,
    /// Worst-case linear loss `u`.
    pub u_star: f64,
    /// `u_star` plus the impact penalty when regularized.
    pub objective: f64,
    pub q0: f64,
    pub kkt: KktReport,
}

/// Outcome of an unregularized solve: the optimum, or the runaway
/// direction (unit norm in weight space) when the program is unbounded.
#[derive(Debug, Clone)]
pub enum EsOutcome {
    Optimal(EsSolution),
    Unbounded { ray: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum MlOutcome {
    Optimal(MlSolution),
    Unbounded { ray: Vec<f64> },
}

impl EsOutcome {
    pub fn optimal(self) -> Option<EsSolution> {
        match self {
            EsOutcome::Optimal(s) => Some(s),
            EsOutcome::Unbounded { .. } => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, EsOutcome::Unbounded { .. })
    }
}

impl MlOutcome {
    pub fn optimal(self) -> Option<MlSolution> {
        match self {
            MlOutcome::Optimal(s) => Some(s),
            MlOutcome::Unbounded { .. } => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, MlOutcome::Unbounded { .. })
    }
}

/// Shared hinge rows `u_tau + v + sum_i x_{i,tau} w_i >= 0` and `u_tau >= 0`
/// over variables `(w, v, u)`, plus the budget row.
fn es_constraint_blocks(
    scenarios: &ScenarioMatrix,
    w_budget: f64,
) -> (DenseMatrix, Vec<f64>, DenseMatrix, Vec<f64>) {
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let m = n + 1 + t;
    let mut a = DenseMatrix::zeros(2 * t, m);
    for tau in 0..t {
        for (i, &x) in scenarios.scenario(tau).iter().enumerate() {
            a.set(tau, i, x);
        }
        a.set(tau, n, 1.0);
        a.set(tau, n + 1 + tau, 1.0);
        a.set(t + tau, n + 1 + tau, 1.0);
    }
    let b = vec![0.0; 2 * t];
    let mut eq = DenseMatrix::zeros(1, m);
    for i in 0..n {
        eq.set(0, i, 1.0);
    }
    let d = vec![w_budget * n as f64];
    (a, b, eq, d)
}

fn check_beta(beta: f64) -> Result<(), PortfolioError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(PortfolioError::Domain(format!(
            "confidence level must lie in (0, 1), got {beta}"
        )))
    }
}

fn weight_ray(full_ray: &[f64], n: usize) -> Result<Vec<f64>, PortfolioError> {
    let mut ray: Vec<f64> = full_ray[..n].to_vec();
    let norm: f64 = ray.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(PortfolioError::Domain(
            "unbounded direction does not move the weights".into(),
        ));
    }
    for r in ray.iter_mut() {
        *r /= norm;
    }
    Ok(ray)
}

fn emitted_portfolio(
    weights: Vec<f64>,
    w_budget: f64,
    tols: &Tolerances,
) -> Result<Portfolio, PortfolioError> {
    let p = Portfolio::new(weights, w_budget);
    if !p.is_budget_feasible(tols.constraint) {
        return Err(PortfolioError::Domain(format!(
            "optimizer violated the budget constraint by {}",
            p.budget_residual()
        )));
    }
    Ok(p)
}

/// Minimizes expected shortfall without impact: the linear program
/// `min (1-beta) T v + sum_tau u_tau` over the hinge constraints. An
/// unbounded outcome is the instability of the unregularized problem.
pub fn optimize_es(
    scenarios: &ScenarioMatrix,
    beta: f64,
    w_budget: f64,
) -> Result<EsOutcome, PortfolioError> {
    check_beta(beta)?;
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let (a_ineq, b_ineq, a_eq, b_eq) = es_constraint_blocks(scenarios, w_budget);
    let mut objective = vec![0.0; n + 1 + t];
    objective[n] = (1.0 - beta) * t as f64;
    for c in objective[n + 1..].iter_mut() {
        *c = 1.0;
    }
    let lp = LinearProgram {
        objective,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
    };
    let tols = Tolerances::default();
    let out = solve_lp_with(&lp, &tols)?;
    match out.status {
        Status::Optimal => {
            let z = out.z.unwrap();
            let portfolio = emitted_portfolio(z[..n].to_vec(), w_budget, &tols)?;
            let v_star = z[n];
            let u = z[n + 1..].to_vec();
            let objective = out.objective.unwrap();
            let q0 = portfolio.q0();
            let es = objective / ((1.0 - beta) * t as f64);
            Ok(EsOutcome::Optimal(EsSolution {
                portfolio,
                v_star,
                epsilon_star: v_star,
                u,
                objective,
                q0,
                es,
                kkt: out.kkt.unwrap(),
            }))
        }
        Status::Unbounded => Ok(EsOutcome::Unbounded {
            ray: weight_ray(out.ray.as_ref().unwrap(), n)?,
        }),
        Status::Infeasible => Err(PortfolioError::Domain(
            "budget-constrained feasible set is empty".into(),
        )),
    }
}

/// Minimizes the regularized expected-shortfall cost
/// `(1-beta) T epsilon + sum_tau u_tau + eta_tilde ||w||^2`. Strictly
/// convex on the budget hyperplane, so the outcome is always optimal.
pub fn optimize_regularized_es(
    scenarios: &ScenarioMatrix,
    beta: f64,
    eta_tilde: f64,
    w_budget: f64,
) -> Result<EsSolution, PortfolioError> {
    check_beta(beta)?;
    if !(eta_tilde > 0.0 && eta_tilde.is_finite()) {
        return Err(PortfolioError::Domain(format!(
            "regularizer must be positive, got {eta_tilde}; use the unregularized solver for zero"
        )));
    }
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let (a_ineq, b_ineq, a_eq, b_eq) = es_constraint_blocks(scenarios, w_budget);
    let m = n + 1 + t;
    let mut q = DenseMatrix::zeros(m, m);
    for i in 0..n {
        q.set(i, i, 2.0 * eta_tilde);
    }
    let mut objective = vec![0.0; m];
    objective[n] = (1.0 - beta) * t as f64;
    for c in objective[n + 1..].iter_mut() {
        *c = 1.0;
    }
    let qp = QuadraticProgram {
        q,
        objective,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
    };
    let tols = Tolerances::default();
    let out = solve_qp_with(&qp, &tols)?;
    if out.status != Status::Optimal {
        return Err(PortfolioError::Domain(format!(
            "regularized program reported {:?}, which contradicts strict convexity",
            out.status
        )));
    }
    let z = out.z.unwrap();
    assemble_regularized(z, out.objective.unwrap(), out.kkt.unwrap(), scenarios, beta, eta_tilde, w_budget)
}

fn assemble_regularized(
    z: Vec<f64>,
    objective: f64,
    kkt: KktReport,
    scenarios: &ScenarioMatrix,
    beta: f64,
    eta_tilde: f64,
    w_budget: f64,
) -> Result<EsSolution, PortfolioError> {
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let tols = Tolerances::default();
    let portfolio = emitted_portfolio(z[..n].to_vec(), w_budget, &tols)?;
    let epsilon_star = z[n];
    let u = z[n + 1..].to_vec();
    let eta = eta_tilde / ((1.0 - beta) * t as f64);
    let norm_sq = n as f64 * portfolio.q0();
    let v_star = epsilon_star + eta * norm_sq;
    let es = v_star + u.iter().sum::<f64>() / ((1.0 - beta) * t as f64);
    Ok(EsSolution {
        q0: portfolio.q0(),
        portfolio,
        v_star,
        epsilon_star,
        u,
        objective,
        es,
        kkt,
    })
}

/// Entry point parameterized by the impact parameter `eta`; converts to the
/// rescaled regularizer and reconstructs `v = epsilon + eta ||w||^2`.
pub fn optimize_regularized_es_from_eta(
    scenarios: &ScenarioMatrix,
    beta: f64,
    eta: f64,
    w_budget: f64,
) -> Result<EsSolution, PortfolioError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(PortfolioError::Domain(format!(
            "impact parameter must be positive, got {eta}"
        )));
    }
    let eta_tilde = crate::core::eta_tilde_from_eta(eta, scenarios.n_samples(), beta);
    optimize_regularized_es(scenarios, beta, eta_tilde, w_budget)
}

/// The scaled formulation `min (1/2)||w||^2 + C ((1/T) sum u + (1-beta) eps)`
/// over the same constraint rows. Minimizers agree with
/// [`optimize_regularized_es`] at `C = 1/(2 (1-beta) eta)`; the reported
/// objective is in the scaled units of this formulation.
pub fn optimize_regularized_es_cform(
    scenarios: &ScenarioMatrix,
    beta: f64,
    c_reg: f64,
    w_budget: f64,
) -> Result<EsSolution, PortfolioError> {
    check_beta(beta)?;
    if !(c_reg > 0.0 && c_reg.is_finite()) {
        return Err(PortfolioError::Domain(format!(
            "regularization constant must be positive and finite, got {c_reg}"
        )));
    }
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let (a_ineq, b_ineq, a_eq, b_eq) = es_constraint_blocks(scenarios, w_budget);
    let m = n + 1 + t;
    let mut q = DenseMatrix::zeros(m, m);
    for i in 0..n {
        q.set(i, i, 1.0);
    }
    let mut objective = vec![0.0; m];
    objective[n] = c_reg * (1.0 - beta);
    for c in objective[n + 1..].iter_mut() {
        *c = c_reg / t as f64;
    }
    let qp = QuadraticProgram {
        q,
        objective,
        a_ineq,
        b_ineq,
        a_eq,
        b_eq,
    };
    let tols = Tolerances::default();
    let out = solve_qp_with(&qp, &tols)?;
    if out.status != Status::Optimal {
        return Err(PortfolioError::Domain(format!(
            "regularized program reported {:?}, which contradicts strict convexity",
            out.status
        )));
    }
    let eta = crate::core::eta_from_c(c_reg, beta)?;
    let eta_tilde = crate::core::eta_tilde_from_eta(eta, t, beta);
    assemble_regularized(
        out.z.unwrap(),
        out.objective.unwrap(),
        out.kkt.unwrap(),
        scenarios,
        beta,
        eta_tilde,
        w_budget,
    )
}

/// Probes whether the shortfall program has a finite optimum without
/// solving it. The program is always feasible, so a finite optimum is
/// equivalent to feasibility of the dual system `sum_tau y_tau x_{i,tau} +
/// mu = 0`, `sum_tau y_tau = (1-beta) T`, `0 <= y <= 1`, which has one
/// basis row per asset rather than one per scenario. At large sample
/// counts this is orders of magnitude cheaper than the full solve.
pub fn es_is_bounded(scenarios: &ScenarioMatrix, beta: f64) -> Result<bool, PortfolioError> {
    check_beta(beta)?;
    let budget = (1.0 - beta) * scenarios.n_samples() as f64;
    dual_system_is_feasible(scenarios, budget, true)
}

/// Same probe for the maximal-loss program, whose dual constrains the
/// scenario weights to the simplex `sum_tau y_tau = 1`, `y >= 0`.
pub fn ml_is_bounded(scenarios: &ScenarioMatrix) -> Result<bool, PortfolioError> {
    dual_system_is_feasible(scenarios, 1.0, false)
}

fn dual_system_is_feasible(
    scenarios: &ScenarioMatrix,
    weight_budget: f64,
    capped: bool,
) -> Result<bool, PortfolioError> {
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let m = t + 1;
    let n_box = if capped { 2 * t } else { t };
    let mut a = DenseMatrix::zeros(n_box, m);
    let mut b = vec![0.0; n_box];
    for tau in 0..t {
        a.set(tau, tau, 1.0);
        if capped {
            a.set(t + tau, tau, -1.0);
            b[t + tau] = -1.0;
        }
    }
    let mut eq = DenseMatrix::zeros(n + 1, m);
    for i in 0..n {
        for tau in 0..t {
            eq.set(i, tau, scenarios.entry(i, tau));
        }
        eq.set(i, t, 1.0);
    }
    for tau in 0..t {
        eq.set(n, tau, 1.0);
    }
    let mut b_eq = vec![0.0; n + 1];
    b_eq[n] = weight_budget;
    let lp = LinearProgram {
        objective: vec![0.0; m],
        a_ineq: a,
        b_ineq: b,
        a_eq: eq,
        b_eq,
    };
    let out = solve_lp_with(&lp, &Tolerances::default())?;
    match out.status {
        Status::Optimal => Ok(true),
        Status::Infeasible => Ok(false),
        Status::Unbounded => Err(PortfolioError::Domain(
            "zero-objective probe cannot be unbounded".into(),
        )),
    }
}

/// Minimizes the worst-case loss `min u` s.t. `u + w . x_tau >= 0` and the
/// budget row.
pub fn optimize_ml(
    scenarios: &ScenarioMatrix,
    w_budget: f64,
) -> Result<MlOutcome, PortfolioError> {
    let (lp, n) = ml_program(scenarios, w_budget);
    let tols = Tolerances::default();
    let out = solve_lp_with(&lp, &tols)?;
    match out.status {
        Status::Optimal => {
            let z = out.z.unwrap();
            let portfolio = emitted_portfolio(z[..n].to_vec(), w_budget, &tols)?;
            let u_star = z[n];
            Ok(MlOutcome::Optimal(MlSolution {
                q0: portfolio.q0(),
                portfolio,
                u_star,
                objective: out.objective.unwrap(),
                kkt: out.kkt.unwrap(),
            }))
        }
        Status::Unbounded => Ok(MlOutcome::Unbounded {
            ray: weight_ray(out.ray.as_ref().unwrap(), n)?,
        }),
        Status::Infeasible => Err(PortfolioError::Domain(
            "budget-constrained feasible set is empty".into(),
        )),
    }
}

fn ml_program(scenarios: &ScenarioMatrix, w_budget: f64) -> (LinearProgram, usize) {
    let n = scenarios.n_assets();
    let t = scenarios.n_samples();
    let m = n + 1;
    let mut a = DenseMatrix::zeros(t, m);
    for tau in 0..t {
        for (i, &x) in scenarios.scenario(tau).iter().enumerate() {
            a.set(tau, i, x);
        }
        a.set(tau, n, 1.0);
    }
    let mut eq = DenseMatrix::zeros(1, m);
    for i in 0..n {
        eq.set(0, i, 1.0);
    }
    let mut objective = vec![0.0; m];
    objective[n] = 1.0;
    (
        LinearProgram {
            objective,
            a_ineq: a,
            b_ineq: vec![0.0; t],
            a_eq: eq,
            b_eq: vec![w_budget * n as f64],
        },
        n,
    )
}

/// Minimizes `u + eta ||w||^2` over the maximal-loss constraints; the
/// regularized maximal loss is the `beta -> 1 - 1/T` limit of the
/// regularized expected shortfall.
pub fn optimize_regularized_ml(
    scenarios: &ScenarioMatrix,
    eta: f64,
    w_budget: f64,
) -> Result<MlSolution, PortfolioError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(PortfolioError::Domain(format!(
            "impact parameter must be positive, got {eta}"
        )));
    }
    let (lp, n) = ml_program(scenarios, w_budget);
    let m = lp.objective.len();
    let mut q = DenseMatrix::zeros(m, m);
    for i in 0..n {
        q.set(i, i, 2.0 * eta);
    }
    let qp = QuadraticProgram {
        q,
        objective: lp.objective,
        a_ineq: lp.a_ineq,
        b_ineq: lp.b_ineq,
        a_eq: lp.a_eq,
        b_eq: lp.b_eq,
    };
    let tols = Tolerances::default();
    let out = solve_qp_with(&qp, &tols)?;
    if out.status != Status::Optimal {
        return Err(PortfolioError::Domain(format!(
            "regularized program reported {:?}, which contradicts strict convexity",
            out.status
        )));
    }
    let z = out.z.unwrap();
    let portfolio = emitted_portfolio(z[..n].to_vec(), w_budget, &tols)?;
    let u_star = z[n];
    Ok(MlSolution {
        q0: portfolio.q0(),
        portfolio,
        u_star,
        objective: out.objective.unwrap(),
        kkt: out.kkt.unwrap(),
    })
}

/// JSON-serializable report of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub es: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktResiduals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ray: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
}

impl From<KktReport> for KktResiduals {
    fn from(r: KktReport) -> Self {
        Self {
            stationarity: r.stationarity,
            primal_feasibility: r.primal_feasibility,
            dual_feasibility: r.dual_feasibility,
            complementarity: r.complementarity,
        }
    }
}

impl SolutionReport {
    pub fn from_es_outcome(outcome: &EsOutcome) -> Self {
        match outcome {
            EsOutcome::Optimal(s) => Self::from_es_solution(s),
            EsOutcome::Unbounded { ray } => Self::unbounded(ray.clone()),
        }
    }

    pub fn from_es_solution(s: &EsSolution) -> Self {
        Self {
            status: "Optimal".into(),
            w: Some(s.portfolio.weights.clone()),
            v: Some(s.v_star),
            epsilon: Some(s.epsilon_star),
            q0: Some(s.q0),
            objective: Some(s.objective),
            es: Some(s.es),
            kkt: Some(s.kkt.into()),
            ray: None,
        }
    }

    pub fn from_ml_outcome(outcome: &MlOutcome) -> Self {
        match outcome {
            MlOutcome::Optimal(s) => Self::from_ml_solution(s),
            MlOutcome::Unbounded { ray } => Self::unbounded(ray.clone()),
        }
    }

    pub fn from_ml_solution(s: &MlSolution) -> Self {
        Self {
            status: "Optimal".into(),
            w: Some(s.portfolio.weights.clone()),
            v: Some(s.u_star),
            epsilon: None,
            q0: Some(s.q0),
            objective: Some(s.objective),
            es: None,
            kkt: Some(s.kkt.into()),
            ray: None,
        }
    }

    fn unbounded(ray: Vec<f64>) -> Self {
        Self {
            status: "Unbounded".into(),
            w: None,
            v: None,
            epsilon: None,
            q0: None,
            objective: None,
            es: None,
            kkt: None,
            ray: Some(ray),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::eta_tilde_from_eta;
    use crate::risk::{empirical_es, loss_sample, maximal_loss};

    struct Lcg(u64);

    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }

        fn centered(&mut self) -> f64 {
            2.0 * self.next_f64() - 1.0
        }
    }

    fn random_scenarios(n: usize, t: usize, rng: &mut Lcg, scale: f64) -> ScenarioMatrix {
        let data: Vec<f64> = (0..n * t).map(|_| scale * rng.centered()).collect();
        ScenarioMatrix::new(n, t, data).unwrap()
    }

    /// Two copies of the same asset: every budget split is optimal and the
    /// shortfall equals the deterministic loss of the budget.
    #[test]
    fn identical_assets_pin_the_shortfall_value() {
        let scenarios = ScenarioMatrix::new(2, 2, vec![0.1, 0.1, 0.1, 0.1]).unwrap();
        let out = optimize_es(&scenarios, 0.5, 1.0).unwrap();
        let sol = out.optimal().expect("bounded by symmetry");
        assert!((sol.es + 0.2).abs() < 1e-9, "es = {}", sol.es);
        assert!(sol.portfolio.is_budget_feasible(1e-8));
    }

    /// One asset strictly dominating another makes the unregularized problem
    /// unbounded along a long-short direction that sums to zero.
    #[test]
    fn dominant_asset_is_reported_as_unbounded_direction() {
        let scenarios =
            ScenarioMatrix::new(2, 3, vec![0.10, 0.05, 0.20, 0.10, 0.10, 0.00]).unwrap();
        let out = optimize_es(&scenarios, 0.7, 1.0).unwrap();
        match out {
            EsOutcome::Unbounded { ray } => {
                assert!(ray[0] > 0.0 && ray[1] < 0.0, "ray = {ray:?}");
                assert!((ray[0] + ray[1]).abs() < 1e-9);
                let norm: f64 = ray.iter().map(|x| x * x).sum::<f64>();
                assert!((norm - 1.0).abs() < 1e-12);
            }
            EsOutcome::Optimal(_) => panic!("dominated instance must be unbounded"),
        }

        let ml = optimize_ml(&scenarios, 1.0).unwrap();
        assert!(ml.is_unbounded());
    }

    /// The optimizer's objective, the reported shortfall, and the empirical
    /// shortfall of the returned weights must all agree.
    #[test]
    fn reported_shortfall_matches_empirical_shortfall() {
        let mut rng = Lcg(99);
        for trial in 0..5 {
            let scenarios = random_scenarios(3, 50, &mut rng, 1.0);
            let beta = 0.6 + 0.05 * trial as f64;
            match optimize_es(&scenarios, beta, 1.0).unwrap() {
                EsOutcome::Optimal(sol) => {
                    let sample = loss_sample(&sol.portfolio, &scenarios, 0.0).unwrap();
                    let (es, _) = empirical_es(&sample, beta);
                    assert!(
                        (es - sol.es).abs() <= 1e-8 * (1.0 + es.abs()),
                        "trial {trial}: reported {} vs empirical {es}",
                        sol.es
                    );
                    let rebuilt = sol.objective / ((1.0 - beta) * 50.0);
                    assert!((rebuilt - sol.es).abs() <= 1e-12 * (1.0 + es.abs()));
                }
                EsOutcome::Unbounded { .. } => {
                    // Wide scenario clouds at N = 3, T = 50 are essentially
                    // always bounded; treat an unbounded draw as a failure.
                    panic!("trial {trial} unexpectedly unbounded");
                }
            }
        }
    }

    /// Regularization restores a finite optimum on an instance whose
    /// unregularized version is unbounded.
    #[test]
    fn impact_term_tames_the_dominant_asset_instance() {
        let scenarios =
            ScenarioMatrix::new(2, 3, vec![0.10, 0.05, 0.20, 0.10, 0.10, 0.00]).unwrap();
        let sol = optimize_regularized_es(&scenarios, 0.7, 0.1, 1.0).unwrap();
        assert!(sol.kkt.max() <= 1e-7);
        assert!(sol.portfolio.weights[0] > sol.portfolio.weights[1]);
        assert!(sol.portfolio.is_budget_feasible(1e-8));
        assert!((sol.v_star - sol.epsilon_star) > 0.0);
    }

    /// A huge regularizer forces the uniform portfolio; weaker regularizers
    /// let the weights spread, so the mean-square weight grows as the
    /// regularizer shrinks.
    #[test]
    fn weight_spread_shrinks_monotonically_with_the_regularizer() {
        let mut rng = Lcg(3);
        let scenarios = random_scenarios(4, 20, &mut rng, 0.5);

        let tight = optimize_regularized_es(&scenarios, 0.7, 1e6, 1.0).unwrap();
        for &w in &tight.portfolio.weights {
            assert!((w - 1.0).abs() < 1e-4, "w = {w}");
        }
        assert!((tight.q0 - 1.0).abs() < 1e-4);

        let grid = [3.0, 1.0, 0.3, 0.1, 0.03];
        let mut last = f64::NEG_INFINITY;
        for &eta_tilde in grid.iter() {
            let sol = optimize_regularized_es(&scenarios, 0.7, eta_tilde, 1.0).unwrap();
            assert!(
                sol.q0 >= last - 1e-10,
                "q0 must not increase with the regularizer: {} -> {} at {eta_tilde}",
                last,
                sol.q0
            );
            last = sol.q0;
        }
    }

    /// The penalty form, its scaled variant, and the impact-parameterized
    /// entry are three routes to the same minimizer.
    #[test]
    fn all_three_formulations_agree_on_the_minimizer() {
        let mut rng = Lcg(17);
        for _ in 0..4 {
            let scenarios = random_scenarios(5, 10, &mut rng, 0.8);
            let beta = 0.7;
            let eta = 0.05 + 0.1 * rng.next_f64();
            let t = scenarios.n_samples();
            let eta_tilde = eta_tilde_from_eta(eta, t, beta);
            let c_reg = crate::core::c_from_eta(eta, beta).unwrap();

            let a = optimize_regularized_es(&scenarios, beta, eta_tilde, 1.0).unwrap();
            let b = optimize_regularized_es_cform(&scenarios, beta, c_reg, 1.0).unwrap();
            let c = optimize_regularized_es_from_eta(&scenarios, beta, eta, 1.0).unwrap();

            for i in 0..5 {
                let wa = a.portfolio.weights[i];
                assert!((wa - b.portfolio.weights[i]).abs() <= 1e-6);
                assert!((wa - c.portfolio.weights[i]).abs() <= 1e-6);
            }
            let norm_sq = 5.0 * a.q0;
            assert!(
                (a.epsilon_star - (a.v_star - eta * norm_sq)).abs() <= 1e-10,
                "quantile shift identity violated"
            );
        }
    }

    /// Maximal loss with one asset is the worst scenario of that asset.
    #[test]
    fn single_asset_maximal_loss_is_the_worst_scenario() {
        let scenarios = ScenarioMatrix::new(1, 4, vec![0.3, -0.1, 0.2, 0.05]).unwrap();
        let sol = optimize_ml(&scenarios, 1.0).unwrap().optimal().unwrap();
        assert!((sol.u_star - 0.1).abs() < 1e-9);
        assert!((sol.portfolio.weights[0] - 1.0).abs() < 1e-9);
    }

    /// Cross-check the maximal-loss optimizer against a one-dimensional grid
    /// scan on the budget line.
    #[test]
    fn two_asset_maximal_loss_matches_grid_scan() {
        let mut rng = Lcg(23);
        for trial in 0..6 {
            let scenarios = random_scenarios(2, 4, &mut rng, 1.0);
            let out = optimize_ml(&scenarios, 1.0).unwrap();
            let grid_best = (0..=8000)
                .map(|k| {
                    let w1 = -20.0 + 0.005 * k as f64;
                    let p = Portfolio::new(vec![w1, 2.0 - w1], 1.0);
                    maximal_loss(&p, &scenarios, 0.0)
                })
                .fold(f64::INFINITY, f64::min);
            // Along the budget line the loss slope is bounded by the largest
            // scenario spread, so the grid value can exceed the true minimum
            // by at most half a step times that slope.
            let lip = (0..4)
                .map(|tau| (scenarios.entry(0, tau) - scenarios.entry(1, tau)).abs())
                .fold(0.0, f64::max);
            match out {
                MlOutcome::Optimal(sol) => {
                    assert!(
                        sol.u_star <= grid_best + 1e-9,
                        "trial {trial}: solver {} worse than grid {grid_best}",
                        sol.u_star
                    );
                    assert!(
                        grid_best <= sol.u_star + 0.0025 * lip + 1e-9,
                        "trial {trial}: grid {grid_best} unreachable from solver {}",
                        sol.u_star
                    );
                }
                MlOutcome::Unbounded { ray } => {
                    // Walking further along the reported direction must keep
                    // lowering the worst-case loss.
                    let f = |w1: f64| {
                        let p = Portfolio::new(vec![w1, 2.0 - w1], 1.0);
                        maximal_loss(&p, &scenarios, 0.0)
                    };
                    let step = 20.0 * ray[0].signum();
                    assert!(
                        f(1.0 + 2.0 * step) < f(1.0 + step) - 1e-9,
                        "trial {trial}: reported direction does not improve"
                    );
                    assert!(f(1.0 + 2.0 * step) < grid_best + 1e-9, "trial {trial}");
                }
            }
        }
    }

    /// At the confidence level `1 - 1/T` the regularized shortfall program
    /// and the regularized maximal-loss program pick the same weights.
    #[test]
    fn regularized_shortfall_at_the_top_quantile_equals_regularized_maximal_loss() {
        let mut rng = Lcg(41);
        for _ in 0..3 {
            let scenarios = random_scenarios(3, 5, &mut rng, 1.0);
            let t = scenarios.n_samples();
            let beta = 1.0 - 1.0 / t as f64;
            let eta = 0.2;
            let eta_tilde = eta_tilde_from_eta(eta, t, beta);
            let es = optimize_regularized_es(&scenarios, beta, eta_tilde, 1.0).unwrap();
            let ml = optimize_regularized_ml(&scenarios, eta, 1.0).unwrap();
            for i in 0..3 {
                assert!(
                    (es.portfolio.weights[i] - ml.portfolio.weights[i]).abs() <= 1e-6,
                    "weights diverge: {:?} vs {:?}",
                    es.portfolio.weights,
                    ml.portfolio.weights
                );
            }
            let norm_sq = 3.0 * ml.q0;
            assert!((ml.objective - (ml.u_star + eta * norm_sq)).abs() <= 1e-9);
        }
    }

    /// Relabeling assets permutes the optimal weights the same way.
    #[test]
    fn solutions_are_equivariant_under_asset_relabeling() {
        let mut rng = Lcg(7);
        let scenarios = random_scenarios(4, 12, &mut rng, 0.7);
        let perm = [2usize, 0, 3, 1];
        let permuted = scenarios.permute_assets(&perm).unwrap();

        let base = optimize_regularized_es(&scenarios, 0.8, 0.5, 1.0).unwrap();
        let moved = optimize_regularized_es(&permuted, 0.8, 0.5, 1.0).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!(
                (moved.portfolio.weights[j] - base.portfolio.weights[i]).abs() <= 1e-7,
                "asset {i} moved to slot {j} but weights diverge"
            );
        }
        assert!((moved.es - base.es).abs() <= 1e-9);
    }

    #[test]
    fn domain_errors_are_rejected_up_front() {
        let scenarios = ScenarioMatrix::new(1, 2, vec![0.1, -0.2]).unwrap();
        assert!(optimize_es(&scenarios, 0.0, 1.0).is_err());
        assert!(optimize_es(&scenarios, 1.0, 1.0).is_err());
        assert!(optimize_regularized_es(&scenarios, 0.5, 0.0, 1.0).is_err());
        assert!(optimize_regularized_es(&scenarios, 0.5, -1.0, 1.0).is_err());
        assert!(optimize_regularized_ml(&scenarios, 0.0, 1.0).is_err());
        assert!(optimize_regularized_es_cform(&scenarios, 0.5, f64::INFINITY, 1.0).is_err());
    }

    /// Reports serialize with a stable shape: optimal solves carry weights
    /// and residuals, unbounded ones carry only the ray.
    #[test]
    fn json_reports_expose_the_expected_fields() {
        let scenarios = ScenarioMatrix::new(1, 3, vec![0.1, -0.2, 0.05]).unwrap();
        let sol = optimize_regularized_es(&scenarios, 0.5, 0.3, 1.0).unwrap();
        let report = SolutionReport::from_es_solution(&sol);
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed["status"], "Optimal");
        assert_eq!(parsed["w"].as_array().unwrap().len(), 1);
        assert!(parsed["kkt"]["stationarity"].as_f64().unwrap() >= 0.0);
        assert!(parsed.get("ray").is_none());

        let dominated =
            ScenarioMatrix::new(2, 3, vec![0.10, 0.05, 0.20, 0.10, 0.10, 0.00]).unwrap();
        let out = optimize_es(&dominated, 0.7, 1.0).unwrap();
        let report = SolutionReport::from_es_outcome(&out);
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed["status"], "Unbounded");
        assert_eq!(parsed["ray"].as_array().unwrap().len(), 2);
        assert!(parsed.get("w").is_none());
    }

    /// The cheap boundedness probe must agree with the full solver on every
    /// instance, bounded or not.
    #[test]
    fn boundedness_probe_agrees_with_the_full_solver() {
        let mut rng = Lcg(71);
        let mut bounded = 0;
        let mut unbounded = 0;
        for trial in 0..40 {
            let t = 12 + (trial % 3) * 6;
            let scenarios = random_scenarios(8, t, &mut rng, 0.4);
            let beta = [0.5, 0.7, 0.9][trial % 3];
            let probe = es_is_bounded(&scenarios, beta).unwrap();
            let full = !optimize_es(&scenarios, beta, 1.0).unwrap().is_unbounded();
            assert_eq!(probe, full, "trial {trial} at beta {beta}, T {t}");
            let probe_ml = ml_is_bounded(&scenarios).unwrap();
            let full_ml = !optimize_ml(&scenarios, 1.0).unwrap().is_unbounded();
            assert_eq!(probe_ml, full_ml, "maximal loss, trial {trial}");
            if probe {
                bounded += 1;
            } else {
                unbounded += 1;
            }
        }
        assert!(
            bounded >= 5 && unbounded >= 5,
            "sample must exercise both outcomes: {bounded} bounded, {unbounded} unbounded"
        );

        let dominated =
            ScenarioMatrix::new(2, 3, vec![0.10, 0.05, 0.20, 0.10, 0.10, 0.00]).unwrap();
        assert!(!es_is_bounded(&dominated, 0.7).unwrap());
        assert!(!ml_is_bounded(&dominated).unwrap());
        let identical = ScenarioMatrix::new(2, 2, vec![0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(es_is_bounded(&identical, 0.5).unwrap());
    }

    /// At the top quantile the shortfall probe and the maximal-loss probe
    /// answer the same question.
    #[test]
    fn probes_coincide_at_the_top_quantile() {
        let mut rng = Lcg(83);
        for trial in 0..20 {
            let t = 10 + (trial % 4) * 5;
            let scenarios = random_scenarios(6, t, &mut rng, 0.6);
            let beta = 1.0 - 1.0 / t as f64;
            assert_eq!(
                es_is_bounded(&scenarios, beta).unwrap(),
                ml_is_bounded(&scenarios).unwrap(),
                "trial {trial}"
            );
        }
    }

    /// Budget scales other than one shift the whole solution linearly in the
    /// unregularized case.
    #[test]
    fn budget_scale_rescales_the_unregularized_solution() {
        let mut rng = Lcg(55);
        let scenarios = random_scenarios(3, 30, &mut rng, 1.0);
        let one = optimize_es(&scenarios, 0.7, 1.0).unwrap().optimal().unwrap();
        let two = optimize_es(&scenarios, 0.7, 2.0).unwrap().optimal().unwrap();
        for i in 0..3 {
            assert!(
                (two.portfolio.weights[i] - 2.0 * one.portfolio.weights[i]).abs() <= 1e-6,
                "homogeneity failed on asset {i}"
            );
        }
        assert!((two.es - 2.0 * one.es).abs() <= 1e-8);
    }
}
