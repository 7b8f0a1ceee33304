//! Random scenario ensembles for the finite-size optimizers: reproducible
//! Gaussian generation, ensemble statistics, feasibility curves across the
//! aspect ratio, and comparison against the large-system predictions.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::core::{fmt_sig12, ScenarioMatrix};
use crate::exec;
use crate::portfolio_opt::{
    es_is_bounded, ml_is_bounded, optimize_es, optimize_regularized_es, EsOutcome,
};
use crate::replica::{SaddleOutcome, SaddlePoint};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid ensemble spec: {0}")]
    Spec(String),
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("fit error: {0}")]
    Fit(String),
}

/// splitmix64 output stage.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-addressed Gaussian source. Draw `k` of stream `s` under a seed
/// is `mix(mix(seed + (s+1) G) + (k+1) G)` with `G` the splitmix64
/// increment, so every value is a pure function of `(seed, s, k)` and the
/// sequence is identical no matter how work is scheduled.
#[derive(Debug, Clone, Copy)]
pub struct GaussianStream {
    key: u64,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix(seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN))),
        }
    }

    /// Uniform draw in (0, 1] at counter `k`.
    fn uniform(&self, k: u64) -> f64 {
        let bits = mix(self.key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN)));
        ((bits >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal draw at element counter `e`: one Box-Muller pair on
    /// uniforms `2e` and `2e + 1`, cosine branch.
    pub fn normal(&self, e: u64) -> f64 {
        let u1 = self.uniform(2 * e);
        let u2 = self.uniform(2 * e + 1);
        (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
    }
}

/// Scenario matrix of i.i.d. Gaussians with mean 0 and variance `1/N`,
/// stream 0 of the seed.
pub fn generate_scenarios(
    n_assets: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ScenarioMatrix, McError> {
    generate_scenarios_stream(n_assets, n_samples, seed, 0)
}

/// Same distribution on an explicit stream index; distinct `(seed, stream)`
/// pairs give independent matrices, and at fixed `(seed, stream, N)` a
/// shorter sample window is a prefix of a longer one.
pub fn generate_scenarios_stream(
    n_assets: usize,
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Result<ScenarioMatrix, McError> {
    if n_assets == 0 || n_samples == 0 {
        return Err(McError::Spec(format!(
            "matrix dimensions must be positive, got {n_assets} x {n_samples}"
        )));
    }
    let src = GaussianStream::new(seed, stream);
    let scale = 1.0 / (n_assets as f64).sqrt();
    let data: Vec<f64> = (0..n_assets * n_samples)
        .map(|e| scale * src.normal(e as u64))
        .collect();
    ScenarioMatrix::new(n_assets, n_samples, data)
        .map_err(|e| McError::Spec(format!("generated matrix rejected: {e}")))
}

/// One ensemble: many independent scenario draws through the same
/// finite-size optimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub n_assets: usize,
    pub n_samples: usize,
    pub beta: f64,
    pub eta_tilde: f64,
    pub w_budget: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    fn validate(&self) -> Result<(), McError> {
        if self.n_assets == 0 || self.n_samples == 0 || self.n_realizations == 0 {
            return Err(McError::Spec(
                "assets, samples and realizations must all be at least 1".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(McError::Spec(format!(
                "confidence level must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.eta_tilde >= 0.0 && self.eta_tilde.is_finite()) {
            return Err(McError::Spec(format!(
                "regularizer must be nonnegative, got {}",
                self.eta_tilde
            )));
        }
        if !(self.w_budget.is_finite() && self.w_budget != 0.0) {
            return Err(McError::Spec(format!(
                "budget scale must be finite and nonzero, got {}",
                self.w_budget
            )));
        }
        Ok(())
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets as f64 / self.n_samples as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RealizationStatus {
    Optimal,
    Unbounded,
    Failed,
}

/// Outcome of one scenario draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub status: RealizationStatus,
    pub q0: Option<f64>,
    pub eps: Option<f64>,
}

/// Ensemble aggregates; the moments cover only realizations with a bounded
/// optimum and are absent when there are none.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub mean_q0: Option<f64>,
    pub stddev_q0: Option<f64>,
    pub mean_eps: Option<f64>,
    pub feasible_fraction: f64,
    pub records: Vec<RealizationRecord>,
}

fn realize(spec: &EnsembleSpec, index: usize) -> RealizationRecord {
    let matrix =
        match generate_scenarios_stream(spec.n_assets, spec.n_samples, spec.seed, index as u64) {
            Ok(m) => m,
            Err(_) => {
                return RealizationRecord {
                    index,
                    status: RealizationStatus::Failed,
                    q0: None,
                    eps: None,
                }
            }
        };
    let solved = if spec.eta_tilde == 0.0 {
        optimize_es(&matrix, spec.beta, spec.w_budget).map(|out| match out {
            EsOutcome::Optimal(sol) => Some(sol),
            EsOutcome::Unbounded { .. } => None,
        })
    } else {
        optimize_regularized_es(&matrix, spec.beta, spec.eta_tilde, spec.w_budget).map(Some)
    };
    match solved {
        Ok(Some(sol)) => RealizationRecord {
            index,
            status: RealizationStatus::Optimal,
            q0: Some(sol.q0),
            eps: Some(sol.epsilon_star),
        },
        Ok(None) => RealizationRecord {
            index,
            status: RealizationStatus::Unbounded,
            q0: None,
            eps: None,
        },
        Err(_) => RealizationRecord {
            index,
            status: RealizationStatus::Failed,
            q0: None,
            eps: None,
        },
    }
}

/// Runs every realization of the spec through the matching optimizer and
/// aggregates. Realizations are independent and merged by index, so the
/// result does not depend on execution order; solve failures are recorded
/// per realization instead of aborting the ensemble.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleStats, McError> {
    spec.validate()?;
    let records = exec::map_indexed(spec.n_realizations, |i| realize(spec, i));
    let feasible: Vec<&RealizationRecord> = records
        .iter()
        .filter(|r| r.status == RealizationStatus::Optimal)
        .collect();
    let feasible_fraction = feasible.len() as f64 / records.len() as f64;
    let moments = |pick: fn(&RealizationRecord) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let vals: Vec<f64> = feasible.iter().filter_map(|r| pick(r)).collect();
        if vals.is_empty() {
            return (None, None);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = if vals.len() < 2 {
            0.0
        } else {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() - 1) as f64)
                .sqrt()
        };
        (Some(mean), Some(sd))
    };
    let (mean_q0, stddev_q0) = moments(|r| r.q0);
    let (mean_eps, _) = moments(|r| r.eps);
    Ok(EnsembleStats {
        mean_q0,
        stddev_q0,
        mean_eps,
        feasible_fraction,
        records,
    })
}

/// Confidence-level rule for a feasibility sweep: either a fixed value or
/// the worst-case limit `1 - 1/T`, which turns expected shortfall into the
/// maximal loss row by row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSpec {
    Fixed(f64),
    MlLimit,
}

/// One point of a feasibility curve: the fraction of scenario draws whose
/// unregularized problem has a bounded optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityPoint {
    pub t: f64,
    pub feasible_fraction: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

/// Sweeps the aspect ratio `t = N/T` at fixed `N`, deciding each draw with
/// the dual boundedness certificate. Realization `r` reuses stream `r` at
/// every `t`, so neighboring grid points are coupled through the same
/// randomness and the curve is monotone up to pairing noise.
pub fn feasibility_curve(
    beta: BetaSpec,
    n_assets: usize,
    t_grid: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<Vec<FeasibilityPoint>, McError> {
    if n_assets == 0 || n_realizations == 0 || t_grid.is_empty() {
        return Err(McError::Spec(
            "need at least one asset, one realization and one grid point".into(),
        ));
    }
    if let BetaSpec::Fixed(b) = beta {
        if !(b > 0.0 && b < 1.0) {
            return Err(McError::Spec(format!(
                "confidence level must lie in (0, 1), got {b}"
            )));
        }
    }
    for &t in t_grid {
        if !(t > 0.0 && t.is_finite()) {
            return Err(McError::Spec(format!(
                "aspect ratio must be positive, got {t}"
            )));
        }
    }
    let t_grid = t_grid.to_vec();
    let points = exec::map_indexed(t_grid.len(), |k| {
        let t = t_grid[k];
        let n_samples = ((n_assets as f64 / t).round() as usize).max(1);
        let mut bounded = 0usize;
        for r in 0..n_realizations {
            let matrix = generate_scenarios_stream(n_assets, n_samples, seed, r as u64)
                .expect("validated dimensions");
            let ok = match beta {
                BetaSpec::Fixed(b) => es_is_bounded(&matrix, b),
                BetaSpec::MlLimit => ml_is_bounded(&matrix),
            };
            if ok.unwrap_or(false) {
                bounded += 1;
            }
        }
        FeasibilityPoint {
            t,
            feasible_fraction: bounded as f64 / n_realizations as f64,
            n_realizations,
            seed,
        }
    });
    Ok(points)
}

/// Writes curve points as CSV with 12-significant-digit numbers.
pub fn write_feasibility_csv<W: Write>(
    points: &[FeasibilityPoint],
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "t,feasible_fraction,n,seed")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_sig12(p.t),
            fmt_sig12(p.feasible_fraction),
            p.n_realizations,
            p.seed
        )?;
    }
    Ok(())
}

/// Least-squares fit of a decreasing logistic through `(t, fraction)`
/// points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Midpoint: the `t` where the fitted curve crosses 1/2.
    pub crossing: f64,
    /// Steepness of the transition.
    pub slope: f64,
    pub sse: f64,
}

/// Fits `f(t) = 1 / (1 + exp(slope (t - crossing)))` by nested grid
/// refinement of the squared error; deterministic and derivative-free,
/// which keeps it robust when the data sit at 0 and 1 for most of the
/// grid.
pub fn estimate_crossing(points: &[(f64, f64)]) -> Result<LogisticFit, McError> {
    if points.len() < 3 {
        return Err(McError::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    for &(t, f) in points {
        if !(t.is_finite() && t > 0.0 && (0.0..=1.0).contains(&f)) {
            return Err(McError::Fit(format!("invalid point ({t}, {f})")));
        }
    }
    let t_lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if t_hi <= t_lo {
        return Err(McError::Fit("degenerate abscissa range".into()));
    }
    let sse = |t0: f64, k: f64| -> f64 {
        points
            .iter()
            .map(|&(t, f)| {
                let model = 1.0 / (1.0 + (k * (t - t0)).exp());
                (model - f) * (model - f)
            })
            .sum()
    };

    let (mut a, mut b) = (t_lo, t_hi);
    let (mut lk_lo, mut lk_hi) = (0.25f64.ln(), 2048.0f64.ln());
    let mut best = (0.5 * (a + b), (lk_lo + lk_hi) / 2.0, f64::INFINITY);
    for _ in 0..5 {
        let m = 40usize;
        for i in 0..=m {
            let t0 = a + (b - a) * i as f64 / m as f64;
            for j in 0..=m {
                let lk = lk_lo + (lk_hi - lk_lo) * j as f64 / m as f64;
                let e = sse(t0, lk.exp());
                if e < best.2 {
                    best = (t0, lk, e);
                }
            }
        }
        let ht = 2.0 * (b - a) / m as f64;
        let hk = 2.0 * (lk_hi - lk_lo) / m as f64;
        a = best.0 - ht;
        b = best.0 + ht;
        lk_lo = best.1 - hk;
        lk_hi = best.1 + hk;
    }
    Ok(LogisticFit {
        crossing: best.0,
        slope: best.1.exp(),
        sse: best.2,
    })
}

/// Relative deviations of ensemble aggregates from a converged
/// large-system point, with pass flags against the given tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaComparison {
    pub mean_q0: f64,
    pub q0_predicted: f64,
    pub q0_rel_dev: f64,
    pub q0_pass: bool,
    pub mean_eps: f64,
    pub eps_predicted: f64,
    pub eps_rel_dev: f64,
    pub eps_pass: bool,
}

/// Compares ensemble means against a saddle point at matching parameters.
/// A diverged outcome has no finite prediction and is rejected, as is an
/// ensemble without a single feasible realization.
pub fn compare_to_replica(
    stats: &EnsembleStats,
    outcome: &SaddleOutcome,
    q0_tol: f64,
    eps_tol: f64,
) -> Result<ReplicaComparison, McError> {
    let point: &SaddlePoint = match outcome {
        SaddleOutcome::Converged(p) => p,
        SaddleOutcome::Diverged { .. } => {
            return Err(McError::Comparison(
                "cannot compare against a diverged saddle point".into(),
            ))
        }
    };
    let (Some(mean_q0), Some(mean_eps)) = (stats.mean_q0, stats.mean_eps) else {
        return Err(McError::Comparison(
            "ensemble has no feasible realizations".into(),
        ));
    };
    let rel = |mean: f64, pred: f64| (mean - pred).abs() / pred.abs().max(1e-12);
    let q0_rel_dev = rel(mean_q0, point.q0());
    let eps_rel_dev = rel(mean_eps, point.eps());
    Ok(ReplicaComparison {
        mean_q0,
        q0_predicted: point.q0(),
        q0_rel_dev,
        q0_pass: q0_rel_dev <= q0_tol,
        mean_eps,
        eps_predicted: point.eps(),
        eps_rel_dev,
        eps_pass: eps_rel_dev <= eps_tol,
    })
}

/// Self-contained ensemble report: the spec that produced it, every
/// realization, and the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport<'a> {
    pub schema: u32,
    pub version: &'a str,
    pub spec: &'a EnsembleSpec,
    pub mean_q0: Option<f64>,
    pub stddev_q0: Option<f64>,
    pub mean_eps: Option<f64>,
    pub feasible_fraction: f64,
    pub records: &'a [RealizationRecord],
}

impl<'a> EnsembleReport<'a> {
    pub fn new(spec: &'a EnsembleSpec, stats: &'a EnsembleStats, version: &'a str) -> Self {
        Self {
            schema: 1,
            version,
            spec,
            mean_q0: stats.mean_q0,
            stddev_q0: stats.stddev_q0,
            mean_eps: stats.mean_eps,
            feasible_fraction: stats.feasible_fraction,
            records: &stats.records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::write_scenarios;
    use crate::replica::{solve_saddle, SaddleInput};

    #[test]
    fn sample_moments_match_the_population() {
        let m = generate_scenarios(200, 200, 11).unwrap();
        let n = (200 * 200) as f64;
        let mean: f64 = m.scenarios().flatten().sum::<f64>() / n;
        let sigma = 1.0 / (200.0f64 * 200.0 * 200.0).sqrt();
        assert!(mean.abs() < 4.0 * sigma, "mean {mean:.2e} vs 4 sigma {sigma:.2e}");

        let m = generate_scenarios(100, 400, 12).unwrap();
        let n = (100 * 400) as f64;
        let var: f64 = m.scenarios().flatten().map(|x| x * x).sum::<f64>() / n;
        assert!((var - 0.01).abs() < 0.0005, "variance {var}");
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let a = generate_scenarios(17, 23, 99).unwrap();
        let b = generate_scenarios(17, 23, 99).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_scenarios(&mut buf_a, &a).unwrap();
        write_scenarios(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b, "same seed must export identical bytes");

        let c = generate_scenarios(17, 23, 100).unwrap();
        let differing = (0..17)
            .flat_map(|i| (0..23).map(move |tau| (i, tau)))
            .filter(|&(i, tau)| a.entry(i, tau) != c.entry(i, tau))
            .count();
        assert!(differing > 300, "different seeds barely differ");
    }

    #[test]
    fn streams_are_independent_and_sample_windows_nest() {
        let a = generate_scenarios_stream(10, 40, 5, 0).unwrap();
        let b = generate_scenarios_stream(10, 40, 5, 1).unwrap();
        assert!((0..10).any(|i| a.entry(i, 0) != b.entry(i, 0)));

        let long = generate_scenarios_stream(10, 60, 5, 3).unwrap();
        let short = generate_scenarios_stream(10, 40, 5, 3).unwrap();
        for tau in 0..40 {
            for i in 0..10 {
                assert_eq!(short.entry(i, tau), long.entry(i, tau));
            }
        }
    }

    #[test]
    fn normals_pass_a_coarse_tail_check() {
        let src = GaussianStream::new(4, 0);
        let n = 40_000;
        let beyond: usize = (0..n).filter(|&e| src.normal(e).abs() > 1.96).count();
        let frac = beyond as f64 / n as f64;
        assert!((frac - 0.05).abs() < 0.008, "two-sided 5% tail came out {frac}");
    }

    #[test]
    fn regularized_ensembles_are_always_feasible_and_deterministic() {
        let spec = EnsembleSpec {
            n_assets: 15,
            n_samples: 10,
            beta: 0.7,
            eta_tilde: 0.1,
            w_budget: 1.0,
            n_realizations: 12,
            seed: 21,
        };
        let stats = run_ensemble(&spec).unwrap();
        assert_eq!(stats.feasible_fraction, 1.0);
        assert_eq!(stats.records.len(), 12);
        assert!(stats.mean_q0.unwrap() >= 1.0 - 1e-9, "norm bound violated");
        assert!(stats.stddev_q0.unwrap() > 0.0);
        let again = run_ensemble(&spec).unwrap();
        assert_eq!(stats, again);
    }

    #[test]
    fn unregularized_phases_show_up_in_the_fraction() {
        let base = EnsembleSpec {
            n_assets: 25,
            n_samples: 250,
            beta: 0.7,
            eta_tilde: 0.0,
            w_budget: 1.0,
            n_realizations: 10,
            seed: 3,
        };
        let deep = run_ensemble(&base).unwrap();
        assert!(deep.feasible_fraction >= 0.9, "t=0.1 should be almost surely bounded");
        assert!(deep.mean_q0.unwrap() >= 1.0 - 1e-9);

        let shallow = EnsembleSpec {
            n_samples: 17,
            ..base
        };
        let stats = run_ensemble(&shallow).unwrap();
        assert!(stats.feasible_fraction <= 0.1, "t=1.5 should be almost surely unbounded");
        for r in &stats.records {
            assert_eq!(r.q0.is_some(), r.status == RealizationStatus::Optimal);
        }
    }

    #[test]
    fn curve_is_monotone_under_paired_streams() {
        let grid = [0.2, 0.35, 0.5, 0.65, 0.8];
        let pts = feasibility_curve(BetaSpec::Fixed(0.7), 40, &grid, 40, 8).unwrap();
        assert_eq!(pts.len(), grid.len());
        assert!(pts[0].feasible_fraction > pts[grid.len() - 1].feasible_fraction);
        for w in pts.windows(2) {
            assert!(
                w[1].feasible_fraction <= w[0].feasible_fraction + 0.075,
                "fraction rose from {} to {} between t={} and t={}",
                w[0].feasible_fraction,
                w[1].feasible_fraction,
                w[0].t,
                w[1].t
            );
        }
    }

    #[test]
    fn ml_limit_curve_crosses_near_one_half() {
        let grid: Vec<f64> = (3..=8).map(|k| 0.1 * k as f64).collect();
        let pts = feasibility_curve(BetaSpec::MlLimit, 40, &grid, 30, 17).unwrap();
        let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.t, p.feasible_fraction)).collect();
        let fit = estimate_crossing(&pairs).unwrap();
        assert!(
            (0.38..=0.62).contains(&fit.crossing),
            "crossing {} strayed from 1/2",
            fit.crossing
        );
    }

    #[test]
    fn logistic_fit_recovers_synthetic_parameters() {
        let gen = |t0: f64, k: f64| -> Vec<(f64, f64)> {
            (4..=16)
                .map(|i| {
                    let t = 0.05 * i as f64;
                    (t, 1.0 / (1.0 + (k * (t - t0)).exp()))
                })
                .collect()
        };
        let fit = estimate_crossing(&gen(0.45, 20.0)).unwrap();
        assert!((fit.crossing - 0.45).abs() < 1e-3, "crossing {}", fit.crossing);
        assert!((fit.slope / 20.0 - 1.0).abs() < 0.02, "slope {}", fit.slope);

        // perturbed fractions still give the midpoint to grid accuracy
        let noisy: Vec<(f64, f64)> = gen(0.45, 20.0)
            .into_iter()
            .enumerate()
            .map(|(i, (t, f))| {
                let bump = if i % 2 == 0 { 0.04 } else { -0.04 };
                (t, (f + bump).clamp(0.0, 1.0))
            })
            .collect();
        let fit = estimate_crossing(&noisy).unwrap();
        assert!((fit.crossing - 0.45).abs() < 0.05, "crossing {}", fit.crossing);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        assert!(estimate_crossing(&[(0.1, 1.0), (0.2, 0.0)]).is_err());
        assert!(estimate_crossing(&[(0.1, 1.0), (0.2, 0.5), (0.3, 1.5)]).is_err());
        assert!(estimate_crossing(&[(0.1, 1.0), (0.1, 0.5), (0.1, 0.0)]).is_err());
    }

    #[test]
    fn comparison_is_reflexive_and_rejects_divergence() {
        let input = SaddleInput::new(0.5, 0.7, 0.1).unwrap();
        let outcome = solve_saddle(&input, None).unwrap();
        let point = outcome.converged().unwrap();
        let stats = EnsembleStats {
            mean_q0: Some(point.q0()),
            stddev_q0: Some(0.0),
            mean_eps: Some(point.eps()),
            feasible_fraction: 1.0,
            records: vec![],
        };
        let cmp = compare_to_replica(&stats, &outcome, 0.1, 0.1).unwrap();
        assert_eq!(cmp.q0_rel_dev, 0.0);
        assert_eq!(cmp.eps_rel_dev, 0.0);
        assert!(cmp.q0_pass && cmp.eps_pass);

        let diverged = SaddleOutcome::Diverged { delta: f64::INFINITY };
        assert!(compare_to_replica(&stats, &diverged, 0.1, 0.1).is_err());

        let empty = EnsembleStats {
            mean_q0: None,
            stddev_q0: None,
            mean_eps: None,
            feasible_fraction: 0.0,
            records: vec![],
        };
        assert!(compare_to_replica(&empty, &outcome, 0.1, 0.1).is_err());
    }

    #[test]
    fn report_and_csv_have_the_documented_shape() {
        let spec = EnsembleSpec {
            n_assets: 6,
            n_samples: 9,
            beta: 0.8,
            eta_tilde: 0.2,
            w_budget: 1.0,
            n_realizations: 3,
            seed: 1,
        };
        let stats = run_ensemble(&spec).unwrap();
        let json = EnsembleReport::new(&spec, &stats, "0.0-test").to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["schema"], 1);
        assert_eq!(value["spec"]["n_assets"], 6);
        assert_eq!(value["records"].as_array().unwrap().len(), 3);
        assert!(value["feasible_fraction"].is_number());
        assert_eq!(value["records"][0]["status"], "optimal");

        let pts = vec![FeasibilityPoint {
            t: 0.25,
            feasible_fraction: 0.75,
            n_realizations: 4,
            seed: 9,
        }];
        let mut buf = Vec::new();
        write_feasibility_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,feasible_fraction,n,seed\n2.50000000000e-01,7.50000000000e-01,4,9\n"
        );
    }

    #[test]
    fn spec_validation_catches_nonsense() {
        let good = EnsembleSpec {
            n_assets: 5,
            n_samples: 5,
            beta: 0.5,
            eta_tilde: 0.0,
            w_budget: 1.0,
            n_realizations: 1,
            seed: 0,
        };
        assert!(run_ensemble(&EnsembleSpec { n_realizations: 0, ..good.clone() }).is_err());
        assert!(run_ensemble(&EnsembleSpec { beta: 1.0, ..good.clone() }).is_err());
        assert!(run_ensemble(&EnsembleSpec { eta_tilde: -0.1, ..good.clone() }).is_err());
        assert!(run_ensemble(&EnsembleSpec { w_budget: 0.0, ..good.clone() }).is_err());
        assert!(feasibility_curve(BetaSpec::Fixed(0.7), 5, &[], 3, 0).is_err());
        assert!(feasibility_curve(BetaSpec::Fixed(0.7), 5, &[-0.5], 3, 0).is_err());
        assert!(feasibility_curve(BetaSpec::Fixed(1.5), 5, &[0.5], 3, 0).is_err());
    }
}
