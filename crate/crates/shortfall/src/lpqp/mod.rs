//! Dense linear and convex quadratic programming with optimality
//! certificates.
//!
//! Problems are stated over free variables `z` with constraint blocks
//! `A z >= b` (inequalities) and `E z = d` (equalities); variable bounds are
//! expressed as singleton inequality rows. The LP objective is `c . z`, the
//! QP objective is `(1/2) z' Q z + c . z`.
//!
//! Every `Optimal` outcome carries dual multipliers and KKT residuals,
//! every `Unbounded` outcome a verified improving ray, and every
//! `Infeasible` outcome a verified Farkas certificate. Numerical breakdown
//! is an explicit error, never a silently wrong answer.

mod oracle;
mod qp;
mod qr;
mod simplex;

pub use oracle::{enumerate_qp_active_sets, enumerate_vertices, lp_from_parts, VertexSolution};

use thiserror::Error;

use crate::core::Tolerances;

#[derive(Debug, Error)]
pub enum LpqpError {
    #[error("malformed program: {0}")]
    BadProblem(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("operation requires an Optimal outcome")]
    NotOptimal,
}

/// Dense row-major matrix used for constraint blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LpqpError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(LpqpError::BadProblem("ragged constraint rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += scale * M' y` (accumulates rows weighted by `y`).
    pub fn add_transpose_mul(&self, y: &[f64], scale: f64, out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                let row = self.row(i);
                let s = scale * yi;
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += s * a;
                }
            }
        }
    }

    /// `M z` as a fresh vector.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| dot(self.row(i), z))
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `min c . z` subject to `a_ineq z >= b_ineq` and `a_eq z = d_eq`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ineq: DenseMatrix,
    pub b_ineq: Vec<f64>,
    pub a_eq: DenseMatrix,
    pub b_eq: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpqpError> {
        let m = self.n_vars();
        if m == 0 {
            return Err(LpqpError::BadProblem("no variables".into()));
        }
        if self.a_ineq.n_rows() != self.b_ineq.len() || self.a_eq.n_rows() != self.b_eq.len() {
            return Err(LpqpError::BadProblem(
                "constraint matrix and right-hand side disagree".into(),
            ));
        }
        if (self.a_ineq.n_rows() > 0 && self.a_ineq.n_cols() != m)
            || (self.a_eq.n_rows() > 0 && self.a_eq.n_cols() != m)
        {
            return Err(LpqpError::BadProblem("constraint width mismatch".into()));
        }
        let finite = self.objective.iter().all(|x| x.is_finite())
            && self.a_ineq.is_finite()
            && self.a_eq.is_finite()
            && self.b_ineq.iter().all(|x| x.is_finite())
            && self.b_eq.iter().all(|x| x.is_finite());
        if !finite {
            return Err(LpqpError::BadProblem("non-finite entries".into()));
        }
        Ok(())
    }
}

/// `min (1/2) z' Q z + c . z` with the same constraint blocks as
/// [`LinearProgram`]. `Q` must be symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub q: DenseMatrix,
    pub objective: Vec<f64>,
    pub a_ineq: DenseMatrix,
    pub b_ineq: Vec<f64>,
    pub a_eq: DenseMatrix,
    pub b_eq: Vec<f64>,
}

impl QuadraticProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<(), LpqpError> {
        self.as_lp_part().validate()?;
        let m = self.n_vars();
        if self.q.n_rows() != m || self.q.n_cols() != m || !self.q.is_finite() {
            return Err(LpqpError::BadProblem("bad quadratic term".into()));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if (self.q.get(i, j) - self.q.get(j, i)).abs() > 1e-10 {
                    return Err(LpqpError::BadProblem("quadratic term not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    fn as_lp_part(&self) -> LinearProgram {
        LinearProgram {
            objective: self.objective.clone(),
            a_ineq: self.a_ineq.clone(),
            b_ineq: self.b_ineq.clone(),
            a_eq: self.a_eq.clone(),
            b_eq: self.b_eq.clone(),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        0.5 * dot(&self.q.mul_vec(z), z) + dot(&self.objective, z)
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.q.mul_vec(z);
        for (gi, ci) in g.iter_mut().zip(&self.objective) {
            *gi += ci;
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Unbounded,
    Infeasible,
}

/// Max-norm KKT residuals of an optimal primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Result of a solve. Certificate fields are populated exactly for their
/// matching status: solution, duals, and residuals for `Optimal`; a
/// normalized improving ray for `Unbounded`; Farkas multipliers
/// `(lambda, mu)` with `A' lambda + E' mu = 0`, `lambda >= 0`,
/// `lambda . b + mu . d > 0` for `Infeasible`.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: Status,
    pub z: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub ineq_multipliers: Option<Vec<f64>>,
    pub eq_multipliers: Option<Vec<f64>>,
    pub ray: Option<Vec<f64>>,
    pub farkas: Option<(Vec<f64>, Vec<f64>)>,
    pub kkt: Option<KktReport>,
}

impl SolveOutcome {
    pub(crate) fn optimal(
        z: Vec<f64>,
        objective: f64,
        ineq_multipliers: Vec<f64>,
        eq_multipliers: Vec<f64>,
        kkt: KktReport,
    ) -> Self {
        Self {
            status: Status::Optimal,
            z: Some(z),
            objective: Some(objective),
            ineq_multipliers: Some(ineq_multipliers),
            eq_multipliers: Some(eq_multipliers),
            ray: None,
            farkas: None,
            kkt: Some(kkt),
        }
    }

    pub(crate) fn unbounded(ray: Vec<f64>) -> Self {
        Self {
            status: Status::Unbounded,
            z: None,
            objective: None,
            ineq_multipliers: None,
            eq_multipliers: None,
            ray: Some(ray),
            farkas: None,
            kkt: None,
        }
    }

    pub(crate) fn infeasible(lambda: Vec<f64>, mu: Vec<f64>) -> Self {
        Self {
            status: Status::Infeasible,
            z: None,
            objective: None,
            ineq_multipliers: None,
            eq_multipliers: None,
            ray: None,
            farkas: Some((lambda, mu)),
            kkt: None,
        }
    }
}

/// Either problem kind, for the shared KKT checker.
#[derive(Debug, Clone, Copy)]
pub enum ProgramRef<'a> {
    Linear(&'a LinearProgram),
    Quadratic(&'a QuadraticProgram),
}

impl<'a> From<&'a LinearProgram> for ProgramRef<'a> {
    fn from(lp: &'a LinearProgram) -> Self {
        ProgramRef::Linear(lp)
    }
}

impl<'a> From<&'a QuadraticProgram> for ProgramRef<'a> {
    fn from(qp: &'a QuadraticProgram) -> Self {
        ProgramRef::Quadratic(qp)
    }
}

impl ProgramRef<'_> {
    fn blocks(&self) -> (&DenseMatrix, &[f64], &DenseMatrix, &[f64], &[f64]) {
        match self {
            ProgramRef::Linear(lp) => (&lp.a_ineq, &lp.b_ineq, &lp.a_eq, &lp.b_eq, &lp.objective),
            ProgramRef::Quadratic(qp) => {
                (&qp.a_ineq, &qp.b_ineq, &qp.a_eq, &qp.b_eq, &qp.objective)
            }
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            ProgramRef::Linear(lp) => lp.objective.clone(),
            ProgramRef::Quadratic(qp) => qp.gradient(z),
        }
    }
}

/// Computes KKT residual norms of an `Optimal` outcome: stationarity
/// `grad f(z) - A' lambda - E' mu`, primal feasibility, dual feasibility
/// `lambda >= 0`, and complementarity `lambda_i (A z - b)_i`.
pub fn check_kkt<'a, P: Into<ProgramRef<'a>>>(
    problem: P,
    outcome: &SolveOutcome,
    tol: f64,
) -> Result<KktReport, LpqpError> {
    let problem = problem.into();
    if outcome.status != Status::Optimal {
        return Err(LpqpError::NotOptimal);
    }
    let z = outcome.z.as_ref().ok_or(LpqpError::NotOptimal)?;
    let lambda = outcome.ineq_multipliers.as_ref().ok_or(LpqpError::NotOptimal)?;
    let mu = outcome.eq_multipliers.as_ref().ok_or(LpqpError::NotOptimal)?;
    let report = kkt_residuals(problem, z, lambda, mu);
    let _ = tol;
    Ok(report)
}

pub(crate) fn kkt_residuals(
    problem: ProgramRef<'_>,
    z: &[f64],
    lambda: &[f64],
    mu: &[f64],
) -> KktReport {
    let (a_ineq, b_ineq, a_eq, b_eq, _) = problem.blocks();
    let mut stat = problem.gradient(z);
    a_ineq.add_transpose_mul(lambda, -1.0, &mut stat);
    a_eq.add_transpose_mul(mu, -1.0, &mut stat);
    let stationarity = stat.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for (i, &li) in lambda.iter().enumerate() {
        let slack = dot(a_ineq.row(i), z) - b_ineq[i];
        primal = primal.max(-slack);
        comp = comp.max((li * slack).abs());
    }
    for i in 0..a_eq.n_rows() {
        primal = primal.max((dot(a_eq.row(i), z) - b_eq[i]).abs());
    }
    let dual = lambda.iter().fold(0.0f64, |m, x| m.max(-x));

    KktReport {
        stationarity,
        primal_feasibility: primal,
        dual_feasibility: dual,
        complementarity: comp,
    }
}

/// Verifies an unboundedness certificate: `A r >= -tol`, `|E r| <= tol`,
/// `c . r <= -tol` (and `|Q r| <= tol` for quadratic programs), with `r`
/// normalized to unit length.
pub(crate) fn verify_ray(problem: ProgramRef<'_>, ray: &[f64], tol: f64) -> bool {
    let (a_ineq, _, a_eq, _, c) = problem.blocks();
    let n = norm2(ray);
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    let r: Vec<f64> = ray.iter().map(|x| x / n).collect();
    for i in 0..a_ineq.n_rows() {
        if dot(a_ineq.row(i), &r) < -tol {
            return false;
        }
    }
    for i in 0..a_eq.n_rows() {
        if dot(a_eq.row(i), &r).abs() > tol {
            return false;
        }
    }
    if let ProgramRef::Quadratic(qp) = problem {
        if qp.q.mul_vec(&r).iter().any(|x| x.abs() > tol.sqrt()) {
            return false;
        }
    }
    dot(c, &r) <= -tol
}

/// Verifies a Farkas infeasibility certificate.
pub(crate) fn verify_farkas(
    problem: ProgramRef<'_>,
    lambda: &[f64],
    mu: &[f64],
    tol: f64,
) -> bool {
    let (a_ineq, b_ineq, a_eq, b_eq, _) = problem.blocks();
    let m = match problem {
        ProgramRef::Linear(lp) => lp.n_vars(),
        ProgramRef::Quadratic(qp) => qp.n_vars(),
    };
    let scale = lambda
        .iter()
        .chain(mu)
        .fold(0.0f64, |mx, x| mx.max(x.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return false;
    }
    if lambda.iter().any(|&l| l < -tol * scale) {
        return false;
    }
    let mut combo = vec![0.0; m];
    a_ineq.add_transpose_mul(lambda, 1.0, &mut combo);
    a_eq.add_transpose_mul(mu, 1.0, &mut combo);
    if combo.iter().any(|x| x.abs() > tol * scale.max(1.0)) {
        return false;
    }
    dot(lambda, b_ineq) + dot(mu, b_eq) > tol * scale
}

/// Solves a linear program with default tolerances.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveOutcome, LpqpError> {
    solve_lp_with(lp, &Tolerances::default())
}

/// Solves a linear program by bounded-variable revised simplex, with
/// singleton inequality rows presolved into variable bounds.
pub fn solve_lp_with(lp: &LinearProgram, tols: &Tolerances) -> Result<SolveOutcome, LpqpError> {
    lp.validate()?;
    simplex::solve(lp, tols)
}

/// Solves a convex quadratic program with default tolerances.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<SolveOutcome, LpqpError> {
    solve_qp_with(qp, &Tolerances::default())
}

/// Solves a convex quadratic program by a primal active-set method seeded
/// from a feasible vertex.
pub fn solve_qp_with(qp: &QuadraticProgram, tols: &Tolerances) -> Result<SolveOutcome, LpqpError> {
    qp.validate()?;
    qp::solve(qp, tols)
}
