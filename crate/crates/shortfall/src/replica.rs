//! Large-system limit of the regularized shortfall problem: the variational
//! energy over (eps_tilde, q0_tilde, delta), its stationarity conditions,
//! a verified saddle-point solver, the zero-regularizer phase boundary, and
//! curve sweeps with warm-started continuation.

use std::io::{self, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::core::{fmt_sig12, Tolerances};
use crate::exec;

const SQRT_PI: f64 = 1.7724538509055160273;
const TWO_PI: f64 = core::f64::consts::TAU;
/// Susceptibilities above this are reported as divergent.
const DELTA_CAP: f64 = 1e8;
/// The Gaussian factor is below 1e-85 outside this range, so every
/// integrand is numerically zero there.
const S_RANGE: f64 = 14.0;

#[derive(Debug, Error)]
pub enum ReplicaError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("saddle solver did not converge: {0}")]
    NoConvergence(String),
}

/// Parameters of one saddle-point problem. `t` is the asset-to-sample
/// ratio N/T, the abscissa of the limit curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleInput {
    pub t: f64,
    pub beta: f64,
    pub eta_tilde: f64,
    pub w_budget: f64,
}

impl SaddleInput {
    pub fn new(t: f64, beta: f64, eta_tilde: f64) -> Result<Self, ReplicaError> {
        Self::with_budget(t, beta, eta_tilde, 1.0)
    }

    pub fn with_budget(
        t: f64,
        beta: f64,
        eta_tilde: f64,
        w_budget: f64,
    ) -> Result<Self, ReplicaError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ReplicaError::Domain(format!(
                "aspect ratio must be positive, got {t}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(ReplicaError::Domain(format!(
                "confidence level must lie in (0, 1), got {beta}"
            )));
        }
        if !(eta_tilde >= 0.0 && eta_tilde.is_finite()) {
            return Err(ReplicaError::Domain(format!(
                "regularizer must be nonnegative, got {eta_tilde}"
            )));
        }
        if !(w_budget.is_finite() && w_budget != 0.0) {
            return Err(ReplicaError::Domain(format!(
                "budget scale must be finite and nonzero, got {w_budget}"
            )));
        }
        Ok(Self {
            t,
            beta,
            eta_tilde,
            w_budget,
        })
    }
}

/// A stationary point of the variational energy in the rescaled variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddlePoint {
    pub eps_tilde: f64,
    pub q0_tilde: f64,
    pub delta: f64,
}

impl SaddlePoint {
    /// Mean squared weight `q0 = q0_tilde * delta^2`.
    pub fn q0(&self) -> f64 {
        self.q0_tilde * self.delta * self.delta
    }

    /// Quantile-shift variable `eps = eps_tilde * delta`.
    pub fn eps(&self) -> f64 {
        self.eps_tilde * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaddleOutcome {
    Converged(SaddlePoint),
    /// No finite-susceptibility solution; `delta` is the best lower bound
    /// reached before the cap (infinite when the divergence is analytic).
    Diverged { delta: f64 },
}

impl SaddleOutcome {
    pub fn converged(self) -> Option<SaddlePoint> {
        match self {
            SaddleOutcome::Converged(p) => Some(p),
            SaddleOutcome::Diverged { .. } => None,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, SaddleOutcome::Diverged { .. })
    }
}

/// Piecewise effective potential: zero for nonnegative arguments, quadratic
/// on [-1, 0], linear below -1. Continuously differentiable at both joints.
pub fn g(x: f64) -> f64 {
    if x >= 0.0 {
        0.0
    } else if x >= -1.0 {
        x * x
    } else {
        -2.0 * x - 1.0
    }
}

pub fn g_prime(x: f64) -> f64 {
    if x >= 0.0 {
        0.0
    } else if x >= -1.0 {
        2.0 * x
    } else {
        -2.0
    }
}

/// `erf(y) - erf(x)` for `x <= y`, routed through `erfc` when both ends sit
/// in the same tail so the difference keeps full relative precision.
fn delta_erf(x: f64, y: f64) -> f64 {
    if x >= 0.0 {
        libm::erfc(x) - libm::erfc(y)
    } else if y <= 0.0 {
        libm::erfc(-y) - libm::erfc(-x)
    } else {
        libm::erf(y) - libm::erf(x)
    }
}

/// Gaussian-weighted moments of the two regions where `g` is nonzero:
/// the linear tail `(-inf, s1]` and the quadratic band `[s1, s0]`, with
/// `s0 = -a/b`, `s1 = (-1-a)/b`.
struct Moments {
    e0m: f64,
    e1m: f64,
    e0c: f64,
    e1c: f64,
    e2c: f64,
}

fn moments(a: f64, b: f64) -> Moments {
    let s0 = -a / b;
    let s1 = (-1.0 - a) / b;
    let ex1 = (-s1 * s1).exp();
    let ex0 = (-s0 * s0).exp();
    let tail = libm::erfc(-s1);
    let span = delta_erf(s1, s0);
    Moments {
        e0m: 0.5 * SQRT_PI * tail,
        e1m: -0.5 * ex1,
        e0c: 0.5 * SQRT_PI * span,
        e1c: 0.5 * (ex1 - ex0),
        e2c: 0.5 * (s1 * ex1 - s0 * ex0) + 0.25 * SQRT_PI * span,
    }
}

/// The three Gaussian integrals of `g`, `g'`, and `s g'` evaluated in
/// closed form over the breakpoints.
fn closed_integrals(a: f64, b: f64) -> (f64, f64, f64) {
    let m = moments(a, b);
    let ig = (-2.0 * a - 1.0) * m.e0m - 2.0 * b * m.e1m
        + a * a * m.e0c
        + 2.0 * a * b * m.e1c
        + b * b * m.e2c;
    let igp = -2.0 * m.e0m + 2.0 * a * m.e0c + 2.0 * b * m.e1c;
    let isgp = -2.0 * m.e1m + 2.0 * a * m.e1c + 2.0 * b * m.e2c;
    (ig, igp, isgp)
}

fn check_integral_domain(eps_tilde: f64, q0_tilde: f64) -> Result<f64, ReplicaError> {
    if !eps_tilde.is_finite() {
        return Err(ReplicaError::Domain(format!(
            "eps_tilde must be finite, got {eps_tilde}"
        )));
    }
    if !(q0_tilde > 0.0 && q0_tilde.is_finite()) {
        return Err(ReplicaError::Domain(format!(
            "q0_tilde must be positive, got {q0_tilde}"
        )));
    }
    Ok((2.0 * q0_tilde).sqrt())
}

/// `int ds e^{-s^2} g(eps_tilde + s sqrt(2 q0_tilde))`.
pub fn j_g(eps_tilde: f64, q0_tilde: f64) -> Result<f64, ReplicaError> {
    let b = check_integral_domain(eps_tilde, q0_tilde)?;
    Ok(closed_integrals(eps_tilde, b).0)
}

/// `int ds e^{-s^2} g'(eps_tilde + s sqrt(2 q0_tilde))`.
pub fn j_gprime(eps_tilde: f64, q0_tilde: f64) -> Result<f64, ReplicaError> {
    let b = check_integral_domain(eps_tilde, q0_tilde)?;
    Ok(closed_integrals(eps_tilde, b).1)
}

/// `int ds e^{-s^2} s g'(eps_tilde + s sqrt(2 q0_tilde))`.
pub fn j_s_gprime(eps_tilde: f64, q0_tilde: f64) -> Result<f64, ReplicaError> {
    let b = check_integral_domain(eps_tilde, q0_tilde)?;
    Ok(closed_integrals(eps_tilde, b).2)
}

/// Nodes and weights via the symmetric tridiagonal eigenproblem of the
/// orthogonal-polynomial recurrence.
fn golub_welsch(n: usize, mu0: f64, off_diag: impl Fn(usize) -> f64) -> Vec<(f64, f64)> {
    if n == 1 {
        return vec![(0.0, mu0)];
    }
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = off_diag(k);
        jac[(k - 1, k)] = off;
        jac[(k, k - 1)] = off;
    }
    let eig = SymmetricEigen::new(jac);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * first * first)
        })
        .collect();
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// Hermite rule for `int e^{-x^2} f(x) dx ~ sum w_i f(x_i)`.
pub fn gauss_hermite(n: usize) -> Result<Vec<(f64, f64)>, ReplicaError> {
    if n == 0 {
        return Err(ReplicaError::Domain("node count must be positive".into()));
    }
    Ok(golub_welsch(n, SQRT_PI, |k| (k as f64 / 2.0).sqrt()))
}

fn legendre_32() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        golub_welsch(32, 2.0, |k| {
            let kf = k as f64;
            kf / (4.0 * kf * kf - 1.0).sqrt()
        })
    })
}

/// The three integrals by plain Gauss-Hermite quadrature. The integrands
/// have derivative kinks at the breakpoints, so this rule converges only
/// algebraically; it serves as a sanity route, not a precision one.
pub fn j_all_gauss_hermite(
    eps_tilde: f64,
    q0_tilde: f64,
    n_nodes: usize,
) -> Result<(f64, f64, f64), ReplicaError> {
    let b = check_integral_domain(eps_tilde, q0_tilde)?;
    let rule = gauss_hermite(n_nodes)?;
    let (mut ig, mut igp, mut isgp) = (0.0, 0.0, 0.0);
    for &(x, w) in &rule {
        let z = eps_tilde + b * x;
        ig += w * g(z);
        igp += w * g_prime(z);
        isgp += w * x * g_prime(z);
    }
    Ok((ig, igp, isgp))
}

/// The three integrals by composite Gauss-Legendre panels split at the
/// integrand breakpoints, so every panel sees a smooth function. Converges
/// to machine precision and is fully independent of the closed forms.
pub fn j_all_quadrature(
    eps_tilde: f64,
    q0_tilde: f64,
) -> Result<(f64, f64, f64), ReplicaError> {
    let b = check_integral_domain(eps_tilde, q0_tilde)?;
    let a = eps_tilde;
    let s0 = -a / b;
    let s1 = (-1.0 - a) / b;
    let mut cuts = vec![-S_RANGE];
    for s in [s1, s0] {
        if s > -S_RANGE && s < S_RANGE {
            cuts.push(s);
        }
    }
    cuts.push(S_RANGE);
    let rule = legendre_32();
    let (mut ig, mut igp, mut isgp) = (0.0, 0.0, 0.0);
    for seg in cuts.windows(2) {
        let n_panels = ((seg[1] - seg[0]) / 2.0).ceil().max(1.0) as usize;
        let h = (seg[1] - seg[0]) / n_panels as f64;
        for p in 0..n_panels {
            let lo = seg[0] + p as f64 * h;
            let center = lo + 0.5 * h;
            let radius = 0.5 * h;
            for &(x, w) in rule {
                let s = center + radius * x;
                let wt = w * radius * (-s * s).exp();
                let z = a + b * s;
                ig += wt * g(z);
                igp += wt * g_prime(z);
                isgp += wt * s * g_prime(z);
            }
        }
    }
    Ok((ig, igp, isgp))
}

/// Variational energy. The averaged equations scale with the number of
/// samples per asset `r = 1/t`:
/// `E = w^2/(2 delta) + delta [r (1-beta) eps_tilde - q0_tilde/2
///    + r/(2 sqrt(pi)) j_g] + eta_tilde q0_tilde delta^2`.
pub fn replica_energy(point: &SaddlePoint, input: &SaddleInput) -> Result<f64, ReplicaError> {
    if !(point.delta > 0.0 && point.delta.is_finite()) {
        return Err(ReplicaError::Domain(format!(
            "delta must be positive, got {}",
            point.delta
        )));
    }
    let ig = j_g(point.eps_tilde, point.q0_tilde)?;
    let r = 1.0 / input.t;
    let w2 = input.w_budget * input.w_budget;
    let bracket = r * (1.0 - input.beta) * point.eps_tilde - 0.5 * point.q0_tilde
        + r / (2.0 * SQRT_PI) * ig;
    Ok(w2 / (2.0 * point.delta)
        + point.delta * bracket
        + input.eta_tilde * point.q0_tilde * point.delta * point.delta)
}

/// Stationarity residuals `(r_q, r_v, r_delta)`; all three vanish at a
/// saddle. With `r = 1/t` they are proportional to the energy gradient:
/// `dE/deps_tilde = delta r r_v`, `dE/dq0_tilde = (delta/2) r_q`,
/// `dE/ddelta = r_delta`.
pub fn saddle_residuals(
    point: &SaddlePoint,
    input: &SaddleInput,
) -> Result<(f64, f64, f64), ReplicaError> {
    if !(point.delta > 0.0 && point.delta.is_finite()) {
        return Err(ReplicaError::Domain(format!(
            "delta must be positive, got {}",
            point.delta
        )));
    }
    let b = check_integral_domain(point.eps_tilde, point.q0_tilde)?;
    let (ig, igp, isgp) = closed_integrals(point.eps_tilde, b);
    let r = 1.0 / input.t;
    let w2 = input.w_budget * input.w_budget;
    let r_q = -1.0 + r / (TWO_PI * point.q0_tilde).sqrt() * isgp
        + 2.0 * input.eta_tilde * point.delta;
    let r_v = (1.0 - input.beta) + igp / (2.0 * SQRT_PI);
    let r_delta = -w2 / (2.0 * point.delta * point.delta)
        + r * (1.0 - input.beta) * point.eps_tilde
        - 0.5 * point.q0_tilde
        + r / (2.0 * SQRT_PI) * ig
        + 2.0 * input.eta_tilde * point.delta * point.q0_tilde;
    Ok((r_q, r_v, r_delta))
}

/// Root of `r_v` in `eps_tilde` at fixed `q0_tilde`. `r_v` is strictly
/// increasing with limits `-beta` and `1-beta`, so the root exists and is
/// unique; safeguarded Newton with a sign bracket.
fn eps_root(q0_tilde: f64, beta: f64, guess: f64) -> Result<f64, ReplicaError> {
    let b = (2.0 * q0_tilde).sqrt();
    let f = |a: f64| (1.0 - beta) + closed_integrals(a, b).1 / (2.0 * SQRT_PI);
    let fp = |a: f64| moments(a, b).e0c / SQRT_PI;

    let start = if guess.is_finite() { guess } else { -0.5 };
    let mut lo = start.min(-1.0);
    for k in 0.. {
        if f(lo) < 0.0 {
            break;
        }
        if k > 200 {
            return Err(ReplicaError::NoConvergence(format!(
                "no lower bracket for the quantile equation at q0_tilde = {q0_tilde}"
            )));
        }
        lo = 2.0 * lo - b - 1.0;
    }
    let mut hi = start.max(0.0);
    for k in 0.. {
        if f(hi) > 0.0 {
            break;
        }
        if k > 200 {
            return Err(ReplicaError::NoConvergence(format!(
                "no upper bracket for the quantile equation at q0_tilde = {q0_tilde}"
            )));
        }
        hi = 2.0 * hi + b + 1.0;
    }

    let mut x = start.clamp(lo, hi);
    for _ in 0..100 {
        let fx = f(x);
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if fx.abs() <= 1e-15 {
            return Ok(x);
        }
        let d = fp(x);
        let mut next = if d > 1e-300 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// State at one `q0_tilde` with the quantile equation already solved.
struct Slice {
    eps: f64,
    ig: f64,
    isgp: f64,
}

fn slice_at(q0_tilde: f64, beta: f64, eps_guess: f64) -> Result<Slice, ReplicaError> {
    let eps = eps_root(q0_tilde, beta, eps_guess)?;
    let b = (2.0 * q0_tilde).sqrt();
    let (ig, _igp, isgp) = closed_integrals(eps, b);
    Ok(Slice { eps, ig, isgp })
}

/// `r_q` without the `2 eta_tilde delta` term; `ratio` is the sample count
/// per asset `1/t`.
fn f_bare(q0_tilde: f64, ratio: f64, s: &Slice) -> f64 {
    -1.0 + ratio / (TWO_PI * q0_tilde).sqrt() * s.isgp
}

/// The delta-independent part of `r_delta`.
fn k_term(q0_tilde: f64, ratio: f64, beta: f64, s: &Slice) -> f64 {
    ratio * (1.0 - beta) * s.eps - 0.5 * q0_tilde + ratio / (2.0 * SQRT_PI) * s.ig
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| lo * 10f64.powf(decades * k as f64 / n as f64))
        .collect()
}

fn refine_root(
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    f: &mut impl FnMut(f64) -> Result<f64, ReplicaError>,
) -> Result<f64, ReplicaError> {
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if (hi - lo) <= 1e-15 * mid {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Without the regularizer the system decouples: `r_q = 0` pins `q0_tilde`
/// on its own, and `r_delta = 0` then gives `delta = |w|/sqrt(2 K)`, which
/// exists only while `K > 0`. Beyond the phase boundary no bracket with
/// positive `K` survives and the susceptibility diverges.
fn solve_eta_zero(input: &SaddleInput) -> Result<SaddleOutcome, ReplicaError> {
    let (ratio, beta, w) = (1.0 / input.t, input.beta, input.w_budget);
    let grid = log_grid(1e-8, 1e8, 8);
    let mut eps_guess = -0.5;
    let mut prev: Option<(f64, f64)> = None;
    let mut candidates: Vec<SaddlePoint> = Vec::new();
    for &q in &grid {
        let s = slice_at(q, beta, eps_guess)?;
        eps_guess = s.eps;
        let fv = f_bare(q, ratio, &s);
        if let Some((q_prev, f_prev)) = prev {
            if f_prev * fv < 0.0 {
                let mut guess = s.eps;
                let mut f = |x: f64| -> Result<f64, ReplicaError> {
                    let sl = slice_at(x, beta, guess)?;
                    guess = sl.eps;
                    Ok(f_bare(x, ratio, &sl))
                };
                let root = refine_root(q_prev, q, f_prev, &mut f)?;
                let sl = slice_at(root, beta, guess)?;
                let k = k_term(root, ratio, beta, &sl);
                if k > 0.0 {
                    candidates.push(SaddlePoint {
                        eps_tilde: sl.eps,
                        q0_tilde: root,
                        delta: w.abs() / (2.0 * k).sqrt(),
                    });
                }
            }
        }
        prev = Some((q, fv));
    }
    match candidates.len() {
        0 => Ok(SaddleOutcome::Diverged {
            delta: f64::INFINITY,
        }),
        1 => {
            let p = candidates[0];
            if p.delta > DELTA_CAP {
                Ok(SaddleOutcome::Diverged { delta: p.delta })
            } else {
                Ok(SaddleOutcome::Converged(p))
            }
        }
        _ => Err(ReplicaError::NoConvergence(format!(
            "multiple stationary branches at t = {}, beta = {beta}: {candidates:?}",
            input.t
        ))),
    }
}

/// With a positive regularizer, `r_q = 0` fixes
/// `delta = (1 - r j_sg' / sqrt(2 pi q0_tilde)) / (2 eta_tilde)` and the
/// remaining scalar equation in `q0_tilde` is bracketed and bisected; a
/// short damped Newton pass in `(log q0_tilde, log delta)` then polishes
/// both residuals to the verification tolerance.
fn solve_eta_pos(
    input: &SaddleInput,
    guess: Option<&SaddlePoint>,
) -> Result<SaddleOutcome, ReplicaError> {
    let (ratio, beta, eta, w) = (1.0 / input.t, input.beta, input.eta_tilde, input.w_budget);
    let w2 = w * w;
    let mut eps_guess = guess.map_or(-0.5, |p| p.eps_tilde);

    // G(q) = r_delta with delta eliminated through r_q = 0; sentinel when
    // that delta is nonpositive (outside the branch, where r_delta -> -inf).
    let g_fun = |q: f64, eps_seed: f64| -> Result<(f64, Slice, f64), ReplicaError> {
        let s = slice_at(q, beta, eps_seed)?;
        let delta = -f_bare(q, ratio, &s) / (2.0 * eta);
        if !(delta > 0.0) {
            return Ok((-1e300, s, delta));
        }
        let gv = -w2 / (2.0 * delta * delta)
            + k_term(q, ratio, beta, &s)
            + 2.0 * eta * delta * q;
        Ok((gv, s, delta))
    };

    let scan = |lo: f64, hi: f64, per_decade: usize, eps0: f64| -> Result<Option<(f64, f64, f64)>, ReplicaError> {
        let grid = log_grid(lo, hi, per_decade);
        let mut eps_seed = eps0;
        let mut prev: Option<(f64, f64)> = None;
        let g_fun = |q: f64, seed: f64| -> Result<(f64, Slice, f64), ReplicaError> {
            let s = slice_at(q, beta, seed)?;
            let delta = -f_bare(q, ratio, &s) / (2.0 * eta);
            if !(delta > 0.0) {
                return Ok((-1e300, s, delta));
            }
            let gv = -w2 / (2.0 * delta * delta)
                + k_term(q, ratio, beta, &s)
                + 2.0 * eta * delta * q;
            Ok((gv, s, delta))
        };
        for &q in &grid {
            let (gv, s, _) = g_fun(q, eps_seed)?;
            eps_seed = s.eps;
            if let Some((q_prev, g_prev)) = prev {
                if g_prev < 0.0 && gv > 0.0 {
                    return Ok(Some((q_prev, q, g_prev)));
                }
            }
            prev = Some((q, gv));
        }
        Ok(None)
    };

    // A warm start narrows the scan to the neighborhood of the previous
    // solution before falling back to the full range.
    let bracket = match guess {
        Some(p) => match scan(p.q0_tilde / 8.0, p.q0_tilde * 8.0, 24, p.eps_tilde)? {
            Some(b) => Some(b),
            None => scan(1e-10, 1e10, 8, -0.5)?,
        },
        None => scan(1e-10, 1e10, 8, -0.5)?,
    };
    let Some((lo, hi, g_lo)) = bracket else {
        return Err(ReplicaError::NoConvergence(format!(
            "no sign change of the reduced stationarity function for t = {}, \
             beta = {beta}, eta_tilde = {eta}",
            input.t
        )));
    };

    let mut f = |q: f64| -> Result<f64, ReplicaError> {
        let (gv, s, _) = g_fun(q, eps_guess)?;
        eps_guess = s.eps;
        Ok(gv)
    };
    let q_root = refine_root(lo, hi, g_lo, &mut f)?;
    let (_, s, delta) = g_fun(q_root, eps_guess)?;
    if !(delta > 0.0) {
        return Err(ReplicaError::NoConvergence(format!(
            "eliminated susceptibility became nonpositive at q0_tilde = {q_root}"
        )));
    }
    let mut point = SaddlePoint {
        eps_tilde: s.eps,
        q0_tilde: q_root,
        delta,
    };
    point = newton_polish(point, input)?;
    if point.delta > DELTA_CAP {
        return Ok(SaddleOutcome::Diverged { delta: point.delta });
    }
    Ok(SaddleOutcome::Converged(point))
}

/// Damped Newton on `(r_q, r_delta)` in `(log q0_tilde, log delta)` with a
/// finite-difference Jacobian; the quantile equation is re-solved at every
/// evaluation so `r_v` stays at machine precision throughout.
fn newton_polish(start: SaddlePoint, input: &SaddleInput) -> Result<SaddlePoint, ReplicaError> {
    let beta = input.beta;
    let mut eps_seed = start.eps_tilde;
    let residuals = |lq: f64, ld: f64, seed: f64| -> Result<(f64, f64, f64), ReplicaError> {
        let point = SaddlePoint {
            eps_tilde: eps_root(lq.exp(), beta, seed)?,
            q0_tilde: lq.exp(),
            delta: ld.exp(),
        };
        let (r_q, _r_v, r_d) = saddle_residuals(&point, input)?;
        Ok((r_q, r_d, point.eps_tilde))
    };

    let mut lq = start.q0_tilde.ln();
    let mut ld = start.delta.ln();
    for _ in 0..40 {
        let (rq, rd, eps) = residuals(lq, ld, eps_seed)?;
        eps_seed = eps;
        let norm = rq.abs().max(rd.abs());
        if norm <= 1e-13 {
            break;
        }
        let h = 1e-7;
        let (rq_q, rd_q, _) = residuals(lq + h, ld, eps_seed)?;
        let (rq_d, rd_d, _) = residuals(lq, ld + h, eps_seed)?;
        let j00 = (rq_q - rq) / h;
        let j01 = (rq_d - rq) / h;
        let j10 = (rd_q - rd) / h;
        let j11 = (rd_d - rd) / h;
        let det = j00 * j11 - j01 * j10;
        if det.abs() < 1e-300 {
            break;
        }
        let dq = -(j11 * rq - j01 * rd) / det;
        let dd = -(-j10 * rq + j00 * rd) / det;
        let mut improved = false;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let (rq_n, rd_n, eps_n) =
                residuals(lq + alpha * dq, ld + alpha * dd, eps_seed)?;
            if rq_n.abs().max(rd_n.abs()) < norm {
                lq += alpha * dq;
                ld += alpha * dd;
                eps_seed = eps_n;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(SaddlePoint {
        eps_tilde: eps_root(lq.exp(), beta, eps_seed)?,
        q0_tilde: lq.exp(),
        delta: ld.exp(),
    })
}

/// Solves the three stationarity equations. Every converged point is
/// re-verified against [`saddle_residuals`] at the configured tolerance
/// before being returned; `Diverged` reports susceptibilities beyond the
/// cap, which at `eta_tilde = 0` marks the infeasible phase.
pub fn solve_saddle(
    input: &SaddleInput,
    guess: Option<&SaddlePoint>,
) -> Result<SaddleOutcome, ReplicaError> {
    SaddleInput::with_budget(input.t, input.beta, input.eta_tilde, input.w_budget)?;
    let outcome = if input.eta_tilde == 0.0 {
        solve_eta_zero(input)?
    } else {
        solve_eta_pos(input, guess)?
    };
    if let SaddleOutcome::Converged(point) = &outcome {
        let (r_q, r_v, r_d) = saddle_residuals(point, input)?;
        let tol = Tolerances::default().saddle_residual;
        let worst = r_q.abs().max(r_v.abs()).max(r_d.abs());
        if !(worst <= tol) {
            return Err(ReplicaError::NoConvergence(format!(
                "residuals ({r_q:.3e}, {r_v:.3e}, {r_d:.3e}) exceed {tol:.1e} at \
                 eps_tilde = {}, q0_tilde = {}, delta = {}",
                point.eps_tilde, point.q0_tilde, point.delta
            )));
        }
        if !(point.q0_tilde > 0.0 && point.delta > 0.0) {
            return Err(ReplicaError::NoConvergence(
                "converged to a point outside the positive domain".into(),
            ));
        }
    }
    Ok(outcome)
}

/// Critical aspect ratio of the unregularized problem at fixed `beta`:
/// the `t` where the finite-susceptibility branch disappears, found by
/// parameterizing the `delta -> inf` limit of the stationarity system by
/// `q0_tilde` and locating the zero of the remaining scalar equation.
pub fn phase_boundary_unregularized(beta: f64) -> Result<f64, ReplicaError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ReplicaError::Domain(format!(
            "confidence level must lie in (0, 1), got {beta}"
        )));
    }
    // At the boundary r_q = 0 gives the sample ratio r(q) = sqrt(2 pi q)/j_sg'
    // and the k-term must vanish simultaneously; the returned abscissa is 1/r.
    let mut eps_seed = -0.5;
    let h_fun = |q: f64, seed: f64| -> Result<Option<(f64, f64, f64)>, ReplicaError> {
        let s = slice_at(q, beta, seed)?;
        if s.isgp <= 0.0 {
            return Ok(None);
        }
        let ratio = (TWO_PI * q).sqrt() / s.isgp;
        Ok(Some((k_term(q, ratio, beta, &s), ratio, s.eps)))
    };
    let grid = log_grid(1e-8, 1e8, 16);
    let mut prev: Option<(f64, f64)> = None;
    let mut brackets: Vec<(f64, f64, f64)> = Vec::new();
    for &q in &grid {
        match h_fun(q, eps_seed)? {
            Some((hv, _t, eps)) => {
                eps_seed = eps;
                if let Some((q_prev, h_prev)) = prev {
                    if h_prev * hv < 0.0 {
                        brackets.push((q_prev, q, h_prev));
                    }
                }
                prev = Some((q, hv));
            }
            None => {
                prev = None;
            }
        }
    }
    if brackets.len() != 1 {
        return Err(ReplicaError::NoConvergence(format!(
            "expected one boundary branch at beta = {beta}, found {}",
            brackets.len()
        )));
    }
    let (lo, hi, h_lo) = brackets[0];
    let mut f = |q: f64| -> Result<f64, ReplicaError> {
        match h_fun(q, eps_seed)? {
            Some((hv, _, eps)) => {
                eps_seed = eps;
                Ok(hv)
            }
            None => Err(ReplicaError::NoConvergence(
                "boundary branch lost its parameterization during refinement".into(),
            )),
        }
    };
    let q_root = refine_root(lo, hi, h_lo, &mut f)?;
    match h_fun(q_root, eps_seed)? {
        Some((_, ratio_star, _)) => Ok(1.0 / ratio_star),
        None => Err(ReplicaError::NoConvergence(
            "boundary root left the valid branch".into(),
        )),
    }
}

/// One point of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub beta: f64,
    pub eta_tilde: f64,
    pub t: f64,
    pub eps_tilde: Option<f64>,
    pub q0_tilde: Option<f64>,
    pub delta: Option<f64>,
    pub q0: Option<f64>,
    pub status: String,
}

/// Solves the saddle over the `eta_tilde x t` product grid. Rows within an
/// `eta_tilde` chain warm-start from their left neighbor; chains are
/// independent of each other and run in parallel.
pub fn sweep_curves(
    beta: f64,
    eta_tildes: &[f64],
    t_grid: &[f64],
) -> Result<Vec<CurveRow>, ReplicaError> {
    if eta_tildes.is_empty() || t_grid.is_empty() {
        return Err(ReplicaError::Domain("empty sweep grid".into()));
    }
    for &et in eta_tildes {
        SaddleInput::new(t_grid[0], beta, et)?;
    }
    for &t in t_grid {
        SaddleInput::new(t, beta, eta_tildes[0])?;
    }
    let t_grid = t_grid.to_vec();
    let eta_tildes = eta_tildes.to_vec();
    let chains = exec::map_indexed(eta_tildes.len(), |row| {
        let eta_tilde = eta_tildes[row];
        let mut prev: Option<SaddlePoint> = None;
        let mut rows = Vec::with_capacity(t_grid.len());
        for &t in &t_grid {
            let input = SaddleInput {
                t,
                beta,
                eta_tilde,
                w_budget: 1.0,
            };
            let row = match solve_saddle(&input, prev.as_ref()) {
                Ok(SaddleOutcome::Converged(p)) => {
                    prev = Some(p);
                    CurveRow {
                        beta,
                        eta_tilde,
                        t,
                        eps_tilde: Some(p.eps_tilde),
                        q0_tilde: Some(p.q0_tilde),
                        delta: Some(p.delta),
                        q0: Some(p.q0()),
                        status: "converged".into(),
                    }
                }
                Ok(SaddleOutcome::Diverged { .. }) => CurveRow {
                    beta,
                    eta_tilde,
                    t,
                    eps_tilde: None,
                    q0_tilde: None,
                    delta: None,
                    q0: None,
                    status: "diverged".into(),
                },
                Err(_) => CurveRow {
                    beta,
                    eta_tilde,
                    t,
                    eps_tilde: None,
                    q0_tilde: None,
                    delta: None,
                    q0: None,
                    status: "failed".into(),
                },
            };
            rows.push(row);
        }
        rows
    });
    Ok(chains.concat())
}

/// Writes sweep rows as CSV with 12-significant-digit numbers so repeated
/// runs diff cleanly.
pub fn write_curves_csv<W: Write>(rows: &[CurveRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "beta,eta_tilde,t,eps_tilde,q0_tilde,delta,q0,status")?;
    let opt = |v: Option<f64>| v.map(|x| fmt_sig12(x)).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_sig12(r.beta),
            fmt_sig12(r.eta_tilde),
            fmt_sig12(r.t),
            opt(r.eps_tilde),
            opt(r.q0_tilde),
            opt(r.delta),
            opt(r.q0),
            r.status
        )?;
    }
    Ok(())
}
