//! Bounded-variable revised simplex with an explicit basis inverse.
//!
//! Singleton inequality rows are presolved into variable bounds, each
//! remaining inequality row gets a surplus variable, and infeasibility or
//! unboundedness is always certified before being reported.

use super::{
    dot, kkt_residuals, norm2, verify_farkas, verify_ray, LinearProgram, LpqpError, ProgramRef,
    SolveOutcome,
};
use crate::core::Tolerances;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-11;
const BLAND_TRIGGER: usize = 40;
const REFACTOR_INTERVAL: usize = 400;

#[derive(Clone)]
struct SparseCol {
    idx: Vec<u32>,
    val: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum NonbasicAt {
    Lower,
    Upper,
    FreeZero,
}

enum RowOrigin {
    Ineq(usize),
    Eq(usize),
}

/// Origin of a recovered variable bound, for dual recovery.
#[derive(Clone, Copy)]
struct BoundSource {
    row: usize,
    coeff: f64,
}

struct Presolved {
    n_struct: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_src: Vec<Option<BoundSource>>,
    upper_src: Vec<Option<BoundSource>>,
    kept_rows: Vec<RowOrigin>,
    rhs: Vec<f64>,
}

enum PresolveOutcome {
    Reduced(Presolved),
    Infeasible { lambda: Vec<f64>, mu: Vec<f64> },
}

fn presolve(lp: &LinearProgram) -> PresolveOutcome {
    let m = lp.n_vars();
    let mut lower = vec![f64::NEG_INFINITY; m];
    let mut upper = vec![f64::INFINITY; m];
    let mut lower_src: Vec<Option<BoundSource>> = vec![None; m];
    let mut upper_src: Vec<Option<BoundSource>> = vec![None; m];
    let mut kept_rows = Vec::new();
    let mut rhs = Vec::new();

    let n_ineq = lp.a_ineq.n_rows();
    for i in 0..n_ineq {
        let row = lp.a_ineq.row(i);
        let b = lp.b_ineq[i];
        let mut nz = None;
        let mut count = 0;
        for (j, &a) in row.iter().enumerate() {
            if a != 0.0 {
                count += 1;
                nz = Some((j, a));
            }
        }
        match (count, nz) {
            (0, _) => {
                if b > 0.0 {
                    // Row reads 0 >= b with b positive: trivially infeasible.
                    let mut lambda = vec![0.0; n_ineq];
                    lambda[i] = 1.0;
                    return PresolveOutcome::Infeasible {
                        lambda,
                        mu: vec![0.0; lp.a_eq.n_rows()],
                    };
                }
            }
            (1, Some((j, a))) => {
                let src = BoundSource { row: i, coeff: a };
                if a > 0.0 {
                    let bound = b / a;
                    if bound > lower[j] {
                        lower[j] = bound;
                        lower_src[j] = Some(src);
                    }
                } else {
                    let bound = b / a;
                    if bound < upper[j] {
                        upper[j] = bound;
                        upper_src[j] = Some(src);
                    }
                }
            }
            _ => {
                kept_rows.push(RowOrigin::Ineq(i));
                rhs.push(b);
            }
        }
    }
    for j in 0..m {
        if lower[j] > upper[j] {
            // Two singleton rows demand an empty interval.
            let (ls, us) = (lower_src[j].unwrap(), upper_src[j].unwrap());
            let mut lambda = vec![0.0; n_ineq];
            lambda[ls.row] = 1.0 / ls.coeff;
            lambda[us.row] = -1.0 / us.coeff;
            return PresolveOutcome::Infeasible {
                lambda,
                mu: vec![0.0; lp.a_eq.n_rows()],
            };
        }
    }
    for i in 0..lp.a_eq.n_rows() {
        kept_rows.push(RowOrigin::Eq(i));
        rhs.push(lp.b_eq[i]);
    }
    PresolveOutcome::Reduced(Presolved {
        n_struct: m,
        lower,
        upper,
        lower_src,
        upper_src,
        kept_rows,
        rhs,
    })
}

struct Tableau {
    n_rows: usize,
    /// Structural, then surplus, then artificial columns.
    cols: Vec<SparseCol>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    /// Surplus column of each row, if the row is an inequality.
    surplus_of_row: Vec<Option<usize>>,
    first_artificial: usize,

    basis: Vec<usize>,
    basic_row_of: Vec<isize>,
    nb_at: Vec<NonbasicAt>,
    binv: Vec<f64>,
    x_basic: Vec<f64>,
    dense_col: Vec<f64>,
    work: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram, pre: &Presolved) -> Self {
        let n_rows = pre.kept_rows.len();
        let n_struct = pre.n_struct;
        let mut cols: Vec<SparseCol> = (0..n_struct)
            .map(|_| SparseCol {
                idx: Vec::new(),
                val: Vec::new(),
            })
            .collect();
        let mut surplus_of_row = vec![None; n_rows];
        for (k, origin) in pre.kept_rows.iter().enumerate() {
            let row = match origin {
                RowOrigin::Ineq(i) => lp.a_ineq.row(*i),
                RowOrigin::Eq(i) => lp.a_eq.row(*i),
            };
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    cols[j].idx.push(k as u32);
                    cols[j].val.push(a);
                }
            }
        }
        let mut lower = pre.lower.clone();
        let mut upper = pre.upper.clone();
        let mut cost = lp.objective.clone();
        for (k, origin) in pre.kept_rows.iter().enumerate() {
            if matches!(origin, RowOrigin::Ineq(_)) {
                surplus_of_row[k] = Some(cols.len());
                cols.push(SparseCol {
                    idx: vec![k as u32],
                    val: vec![-1.0],
                });
                lower.push(0.0);
                upper.push(f64::INFINITY);
                cost.push(0.0);
            }
        }
        let first_artificial = cols.len();
        Self {
            n_rows,
            cols,
            cost,
            lower,
            upper,
            rhs: pre.rhs.clone(),
            surplus_of_row,
            first_artificial,
            basis: Vec::new(),
            basic_row_of: Vec::new(),
            nb_at: Vec::new(),
            binv: Vec::new(),
            x_basic: Vec::new(),
            dense_col: vec![0.0; n_rows],
            work: vec![0.0; n_rows],
        }
    }

    fn n_cols(&self) -> usize {
        self.cols.len()
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.nb_at[j] {
            NonbasicAt::Lower => self.lower[j],
            NonbasicAt::Upper => self.upper[j],
            NonbasicAt::FreeZero => 0.0,
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        let r = self.basic_row_of[j];
        if r >= 0 {
            self.x_basic[r as usize]
        } else {
            self.nonbasic_value(j)
        }
    }

    /// `y = cost_B' B^-1` for the given per-column costs.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for (k, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                let row = &self.binv[k * self.n_rows..(k + 1) * self.n_rows];
                for (yi, &bi) in y.iter_mut().zip(row) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost: &[f64]) -> f64 {
        let col = &self.cols[j];
        let mut dot = 0.0;
        for (&r, &v) in col.idx.iter().zip(&col.val) {
            dot += y[r as usize] * v;
        }
        cost[j] - dot
    }

    /// `w = B^-1 g_j` through a densified copy of the column.
    fn ftran(&mut self, j: usize) -> &[f64] {
        for v in self.dense_col.iter_mut() {
            *v = 0.0;
        }
        let col = &self.cols[j];
        for (&r, &v) in col.idx.iter().zip(&col.val) {
            self.dense_col[r as usize] = v;
        }
        for k in 0..self.n_rows {
            let row = &self.binv[k * self.n_rows..(k + 1) * self.n_rows];
            self.work[k] = dot(row, &self.dense_col);
        }
        &self.work
    }

    /// Recomputes basic values from the basis inverse.
    fn recompute_basics(&mut self) {
        let mut eff = self.rhs.clone();
        for j in 0..self.n_cols() {
            if self.basic_row_of[j] < 0 {
                let xj = self.nonbasic_value(j);
                if xj != 0.0 {
                    let col = &self.cols[j];
                    for (&r, &v) in col.idx.iter().zip(&col.val) {
                        eff[r as usize] -= v * xj;
                    }
                }
            }
        }
        for k in 0..self.n_rows {
            let row = &self.binv[k * self.n_rows..(k + 1) * self.n_rows];
            self.x_basic[k] = dot(row, &eff);
        }
    }

    /// Rebuilds the basis inverse from scratch.
    fn refactor(&mut self) -> Result<(), LpqpError> {
        let n = self.n_rows;
        if n == 0 {
            return Ok(());
        }
        let mut b = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (k, &j) in self.basis.iter().enumerate() {
            let col = &self.cols[j];
            for (&r, &v) in col.idx.iter().zip(&col.val) {
                b[(r as usize, k)] = v;
            }
        }
        let inv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| LpqpError::Breakdown("singular basis during refactorization".into()))?;
        // binv rows follow basis order: row k of binv solves for basis[k].
        for k in 0..n {
            for i in 0..n {
                self.binv[k * n + i] = inv[(k, i)];
            }
        }
        self.recompute_basics();
        Ok(())
    }

    /// Pivot: entering column `q` replaces the basic variable of row `p`.
    /// `w` is `B^-1 g_q`, `t` the step length, `dir` the sign of the move.
    fn pivot(&mut self, q: usize, p: usize, w: &[f64], t: f64, dir: f64, leaving_to: NonbasicAt) {
        let n = self.n_rows;
        let wp = w[p];
        let leaving = self.basis[p];
        // Update basic values before changing the inverse.
        for k in 0..n {
            if k != p {
                self.x_basic[k] -= dir * t * w[k];
            }
        }
        self.x_basic[p] = self.nonbasic_value(q) + dir * t;
        // Eta update of the explicit inverse.
        let (head, tail) = self.binv.split_at_mut(p * n);
        let (prow, rest) = tail.split_at_mut(n);
        for v in prow.iter_mut() {
            *v /= wp;
        }
        for (k, chunk) in head.chunks_exact_mut(n).enumerate() {
            let f = w[k];
            if f != 0.0 {
                for (c, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * pv;
                }
            }
        }
        for (k0, chunk) in rest.chunks_exact_mut(n).enumerate() {
            let f = w[p + 1 + k0];
            if f != 0.0 {
                for (c, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *c -= f * pv;
                }
            }
        }
        self.basis[p] = q;
        self.basic_row_of[q] = p as isize;
        self.basic_row_of[leaving] = -1;
        self.nb_at[leaving] = leaving_to;
    }
}

enum PhaseResult {
    Optimal,
    Unbounded { entering: usize, dir: f64 },
}

struct Simplex {
    tab: Tableau,
    rhs_scale: f64,
    degenerate_streak: usize,
    pivots_since_refactor: usize,
}

impl Simplex {
    /// Runs one simplex phase with the given costs to optimality or
    /// unboundedness.
    fn run_phase(&mut self, cost: &[f64], iter_cap: usize) -> Result<PhaseResult, LpqpError> {
        let cost_mag = cost.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dual_tol = 1e-9 * (1.0 + cost_mag + self.rhs_scale);
        let mut bland = false;
        for _ in 0..iter_cap {
            let y = self.tab.duals(cost);
            // Pricing: most improving reduced cost, Bland's rule when the
            // iteration has been degenerate for a while.
            let mut entering = None;
            let mut best = dual_tol;
            for j in 0..self.tab.n_cols() {
                if self.tab.basic_row_of[j] >= 0 || self.tab.lower[j] == self.tab.upper[j] {
                    continue;
                }
                let r = self.tab.reduced_cost(j, &y, cost);
                let improving = match self.tab.nb_at[j] {
                    NonbasicAt::Lower => -r,
                    NonbasicAt::Upper => r,
                    NonbasicAt::FreeZero => r.abs(),
                };
                if improving > best {
                    let dir = match self.tab.nb_at[j] {
                        NonbasicAt::Lower => 1.0,
                        NonbasicAt::Upper => -1.0,
                        NonbasicAt::FreeZero => {
                            if r < 0.0 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    entering = Some((j, dir));
                    if bland {
                        break;
                    }
                    best = improving;
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(PhaseResult::Optimal);
            };

            self.tab.ftran(q);
            let w = self.tab.work.clone();

            // Ratio test over basic variables plus the entering variable's
            // own opposite bound.
            let mut t_max = f64::INFINITY;
            let mut blocking: Option<usize> = None;
            let range = self.tab.upper[q] - self.tab.lower[q];
            if range.is_finite() {
                t_max = range;
            }
            for (k, &wk) in w.iter().enumerate() {
                let delta = -dir * wk;
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.tab.basis[k];
                let xk = self.tab.x_basic[k];
                let limit = if delta > 0.0 {
                    let u = self.tab.upper[bj];
                    if u.is_finite() {
                        (u - xk) / delta
                    } else {
                        continue;
                    }
                } else {
                    let l = self.tab.lower[bj];
                    if l.is_finite() {
                        (l - xk) / delta
                    } else {
                        continue;
                    }
                };
                let limit = limit.max(0.0);
                let better = match blocking {
                    None => limit < t_max,
                    // Ties go to the larger pivot element for stability, or
                    // to the smallest variable index under Bland's rule.
                    Some(p) => {
                        limit < t_max - 1e-9
                            || (limit < t_max + 1e-9
                                && if bland {
                                    self.tab.basis[k] < self.tab.basis[p]
                                } else {
                                    wk.abs() > w[p].abs()
                                })
                    }
                };
                if better {
                    t_max = t_max.min(limit);
                    blocking = Some(k);
                }
            }

            if !t_max.is_finite() {
                return Ok(PhaseResult::Unbounded { entering: q, dir });
            }
            match blocking {
                None => {
                    // Bound-to-bound flip of the entering variable.
                    for (k, &wk) in w.iter().enumerate() {
                        self.tab.x_basic[k] -= dir * t_max * wk;
                    }
                    self.tab.nb_at[q] = match self.tab.nb_at[q] {
                        NonbasicAt::Lower => NonbasicAt::Upper,
                        NonbasicAt::Upper => NonbasicAt::Lower,
                        NonbasicAt::FreeZero => {
                            return Err(LpqpError::Breakdown(
                                "free variable blocked by its own bound".into(),
                            ))
                        }
                    };
                }
                Some(p) => {
                    let delta = -dir * w[p];
                    let leaving_to = if delta > 0.0 {
                        NonbasicAt::Upper
                    } else {
                        NonbasicAt::Lower
                    };
                    self.tab.pivot(q, p, &w, t_max, dir, leaving_to);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_INTERVAL {
                        self.tab.refactor()?;
                        self.pivots_since_refactor = 0;
                    }
                }
            }
            if t_max <= DEGENERATE_STEP {
                self.degenerate_streak += 1;
                if self.degenerate_streak >= BLAND_TRIGGER {
                    bland = true;
                }
            } else {
                self.degenerate_streak = 0;
                bland = false;
            }
        }
        Err(LpqpError::Breakdown("simplex iteration cap reached".into()))
    }
}

pub(super) fn solve(lp: &LinearProgram, tols: &Tolerances) -> Result<SolveOutcome, LpqpError> {
    let pre = match presolve(lp) {
        PresolveOutcome::Reduced(p) => p,
        PresolveOutcome::Infeasible { lambda, mu } => {
            if !verify_farkas(ProgramRef::Linear(lp), &lambda, &mu, 1e-10) {
                return Err(LpqpError::Breakdown(
                    "presolve infeasibility certificate failed verification".into(),
                ));
            }
            return Ok(SolveOutcome::infeasible(lambda, mu));
        }
    };
    let mut tab = Tableau::build(lp, &pre);
    let n_rows = tab.n_rows;

    // Initial point: every structural variable at its bound nearest zero,
    // free variables at zero.
    let mut nb_at = Vec::with_capacity(tab.n_cols());
    for j in 0..tab.n_cols() {
        let (l, u) = (tab.lower[j], tab.upper[j]);
        nb_at.push(if l.is_finite() && (!u.is_finite() || l.abs() <= u.abs()) {
            NonbasicAt::Lower
        } else if u.is_finite() {
            NonbasicAt::Upper
        } else {
            NonbasicAt::FreeZero
        });
    }
    tab.nb_at = nb_at;
    tab.basic_row_of = vec![-1; tab.n_cols()];

    // Row residuals at the initial point decide between a surplus start
    // and an artificial start for each row.
    let mut residual = tab.rhs.clone();
    for j in 0..tab.first_artificial {
        let xj = tab.nonbasic_value(j);
        if xj != 0.0 {
            let col = &tab.cols[j];
            for (&r, &v) in col.idx.iter().zip(&col.val) {
                residual[r as usize] -= v * xj;
            }
        }
    }
    tab.binv = vec![0.0; n_rows * n_rows];
    tab.basis = Vec::with_capacity(n_rows);
    tab.x_basic = vec![0.0; n_rows];
    let mut n_artificial = 0;
    for k in 0..n_rows {
        let surplus = tab.surplus_of_row[k];
        // Residual includes the surplus at its lower bound zero, so the
        // candidate surplus value is exactly the residual with sign fixed
        // by its -1 coefficient.
        let surplus_value = -residual[k];
        match surplus {
            Some(sj) if surplus_value >= 0.0 => {
                tab.basis.push(sj);
                tab.basic_row_of[sj] = k as isize;
                tab.x_basic[k] = surplus_value;
                tab.binv[k * n_rows + k] = -1.0;
            }
            _ => {
                let sigma = if residual[k] >= 0.0 { 1.0 } else { -1.0 };
                let aj = tab.cols.len();
                tab.cols.push(SparseCol {
                    idx: vec![k as u32],
                    val: vec![sigma],
                });
                tab.lower.push(0.0);
                tab.upper.push(f64::INFINITY);
                tab.cost.push(0.0);
                tab.nb_at.push(NonbasicAt::Lower);
                tab.basic_row_of.push(k as isize);
                tab.basis.push(aj);
                tab.x_basic[k] = residual[k].abs();
                tab.binv[k * n_rows + k] = sigma;
                n_artificial += 1;
            }
        }
    }

    let rhs_scale = lp
        .b_ineq
        .iter()
        .chain(&lp.b_eq)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = 1.0
        + rhs_scale
        + lp.objective.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let iter_cap = 200 * (n_rows + tab.n_cols()) + 2000;
    let mut sx = Simplex {
        tab,
        rhs_scale,
        degenerate_streak: 0,
        pivots_since_refactor: 0,
    };

    // Phase 1: drive artificial infeasibility to zero.
    if n_artificial > 0 {
        let mut phase1_cost = vec![0.0; sx.tab.n_cols()];
        for c in phase1_cost[sx.tab.first_artificial..].iter_mut() {
            *c = 1.0;
        }
        match sx.run_phase(&phase1_cost, iter_cap)? {
            PhaseResult::Optimal => {}
            PhaseResult::Unbounded { .. } => {
                return Err(LpqpError::Breakdown(
                    "phase 1 objective unbounded below".into(),
                ));
            }
        }
        let infeas: f64 = (sx.tab.first_artificial..sx.tab.n_cols())
            .map(|j| sx.tab.value_of(j))
            .sum();
        if infeas > 1e-9 * scale {
            let y = sx.tab.duals(&phase1_cost);
            let (lambda, mu) = recover_duals(lp, &pre, &sx.tab, &y, &phase1_cost);
            if !verify_farkas(ProgramRef::Linear(lp), &lambda, &mu, 1e-8) {
                return Err(LpqpError::Breakdown(
                    "infeasibility certificate failed verification".into(),
                ));
            }
            return Ok(SolveOutcome::infeasible(lambda, mu));
        }
        // Pin artificials at zero for phase 2; pivot basic ones out where
        // possible, otherwise their rows are redundant and they stay fixed.
        for k in 0..sx.tab.n_rows {
            let bj = sx.tab.basis[k];
            if bj >= sx.tab.first_artificial {
                let mut replaced = false;
                for j in 0..sx.tab.first_artificial {
                    if sx.tab.basic_row_of[j] >= 0 || sx.tab.lower[j] == sx.tab.upper[j] {
                        continue;
                    }
                    let w = sx.tab.ftran(j).to_vec();
                    if w[k].abs() > 1e-7 {
                        sx.tab.pivot(j, k, &w, 0.0, 1.0, NonbasicAt::Lower);
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    let bj = sx.tab.basis[k];
                    sx.tab.lower[bj] = 0.0;
                    sx.tab.upper[bj] = 0.0;
                }
            }
        }
        for j in sx.tab.first_artificial..sx.tab.n_cols() {
            sx.tab.lower[j] = 0.0;
            sx.tab.upper[j] = 0.0;
        }
        sx.tab.refactor()?;
        sx.pivots_since_refactor = 0;
    }

    // Phase 2 on the true objective.
    let cost = sx.tab.cost.clone();
    match sx.run_phase(&cost, iter_cap)? {
        PhaseResult::Optimal => {}
        PhaseResult::Unbounded { entering, dir } => {
            let w = sx.tab.ftran(entering).to_vec();
            let mut ray = vec![0.0; pre.n_struct];
            if entering < pre.n_struct {
                ray[entering] = dir;
            }
            for (k, &wk) in w.iter().enumerate() {
                let bj = sx.tab.basis[k];
                if bj < pre.n_struct {
                    ray[bj] = -dir * wk;
                }
            }
            let n = norm2(&ray);
            if n <= 0.0 {
                return Err(LpqpError::Breakdown("degenerate unbounded ray".into()));
            }
            for r in ray.iter_mut() {
                *r /= n;
            }
            if !verify_ray(ProgramRef::Linear(lp), &ray, 1e-10) {
                return Err(LpqpError::Breakdown(
                    "unboundedness ray failed certificate verification".into(),
                ));
            }
            return Ok(SolveOutcome::unbounded(ray));
        }
    }

    // Assemble the optimal solution and duals in the original problem space.
    sx.tab.refactor()?;
    let z: Vec<f64> = (0..pre.n_struct).map(|j| sx.tab.value_of(j)).collect();
    let objective = dot(&lp.objective, &z);
    let y = sx.tab.duals(&cost);
    let (lambda, mu) = recover_duals(lp, &pre, &sx.tab, &y, &cost);
    let kkt = kkt_residuals(ProgramRef::Linear(lp), &z, &lambda, &mu);
    if !kkt.within(tols.kkt * scale) {
        return Err(LpqpError::Breakdown(format!(
            "KKT residuals too large at reported optimum: {kkt:?}"
        )));
    }
    Ok(SolveOutcome::optimal(z, objective, lambda, mu, kkt))
}

/// Maps simplex duals back to multipliers on the original rows, recovering
/// multipliers of presolved singleton rows from reduced costs.
fn recover_duals(
    lp: &LinearProgram,
    pre: &Presolved,
    tab: &Tableau,
    y: &[f64],
    cost: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut lambda = vec![0.0; lp.a_ineq.n_rows()];
    let mut mu = vec![0.0; lp.a_eq.n_rows()];
    for (k, origin) in pre.kept_rows.iter().enumerate() {
        match origin {
            RowOrigin::Ineq(i) => lambda[*i] = y[k],
            RowOrigin::Eq(i) => mu[*i] = y[k],
        }
    }
    for j in 0..pre.n_struct {
        if tab.basic_row_of[j] >= 0 {
            continue;
        }
        let r = tab.reduced_cost(j, y, cost);
        let src = match tab.nb_at[j] {
            NonbasicAt::Lower => pre.lower_src[j],
            NonbasicAt::Upper => pre.upper_src[j],
            NonbasicAt::FreeZero => None,
        };
        if let Some(s) = src {
            lambda[s.row] = (r / s.coeff).max(0.0);
        }
    }
    (lambda, mu)
}
