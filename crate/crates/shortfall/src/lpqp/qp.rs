//! Primal active-set method for convex quadratic programs.
//!
//! The iterate starts at a feasible vertex found by the simplex phase 1 and
//! stays feasible throughout. The working set is held as an updatable QR
//! factorization; steps are computed in the nullspace of the working set,
//! where the reduced Hessian is small as long as the vertex start keeps the
//! working set nearly full rank.

use super::qr::UpdatableQr;
use super::{
    dot, kkt_residuals, norm2, simplex, verify_ray, LinearProgram, LpqpError, ProgramRef,
    QuadraticProgram, SolveOutcome, Status,
};
use crate::core::Tolerances;

const DEPENDENCE_TOL: f64 = 1e-10;

/// Identifier of a working constraint: equality rows first, then
/// inequality rows.
#[derive(Clone, Copy, PartialEq, Eq)]
enum WorkId {
    Eq(usize),
    Ineq(usize),
}

enum StepKind {
    /// Step to the minimizer of the equality-constrained subproblem.
    ToMinimum,
    /// Direction of zero curvature and strict descent.
    Ray,
}

pub(super) fn solve(qp: &QuadraticProgram, tols: &Tolerances) -> Result<SolveOutcome, LpqpError> {
    let m = qp.n_vars();
    let n_ineq = qp.a_ineq.n_rows();
    let n_eq = qp.a_eq.n_rows();

    // Feasible vertex from the linear phase.
    let seed_lp = LinearProgram {
        objective: vec![0.0; m],
        a_ineq: qp.a_ineq.clone(),
        b_ineq: qp.b_ineq.clone(),
        a_eq: qp.a_eq.clone(),
        b_eq: qp.b_eq.clone(),
    };
    let seed = simplex::solve(&seed_lp, tols)?;
    if seed.status == Status::Infeasible {
        return Ok(seed);
    }
    let mut z = seed.z.clone().ok_or_else(|| {
        LpqpError::Breakdown("feasibility phase returned no point".into())
    })?;

    let scale = 1.0
        + qp.objective.iter().fold(0.0f64, |mx, x| mx.max(x.abs()))
        + qp.b_ineq
            .iter()
            .chain(&qp.b_eq)
            .fold(0.0f64, |mx, x| mx.max(x.abs()));
    let act_tol = 1e-9 * scale;

    // Initial working set: all equality rows, then active inequality rows,
    // keeping only a linearly independent subset.
    let mut qr = UpdatableQr::new(m);
    let mut working: Vec<WorkId> = Vec::new();
    let mut in_working = vec![false; n_ineq];
    for i in 0..n_eq {
        if qr.try_append(qp.a_eq.row(i), DEPENDENCE_TOL) {
            working.push(WorkId::Eq(i));
        }
    }
    let slack = |z: &[f64], i: usize| dot(qp.a_ineq.row(i), z) - qp.b_ineq[i];
    for i in 0..n_ineq {
        if slack(&z, i).abs() <= act_tol && qr.try_append(qp.a_ineq.row(i), DEPENDENCE_TOL) {
            working.push(WorkId::Ineq(i));
            in_working[i] = true;
        }
    }

    let iter_cap = 100 * (m + n_ineq) + 1000;
    for _ in 0..iter_cap {
        let g = qp.gradient(&z);
        let dim = qr.nullity();

        // Direction in the nullspace of the working set.
        let mut step: Option<(Vec<f64>, StepKind)> = None;
        if dim > 0 {
            let gz: Vec<f64> = (0..dim).map(|i| dot(qr.null_col(i), &g)).collect();
            let qz: Vec<Vec<f64>> = (0..dim).map(|i| qp.q.mul_vec(qr.null_col(i))).collect();
            let mut hz = nalgebra::DMatrix::<f64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..=i {
                    let v = dot(&qz[j], qr.null_col(i));
                    hz[(i, j)] = v;
                    hz[(j, i)] = v;
                }
            }
            let eig = nalgebra::SymmetricEigen::new(hz);
            let eig_max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let eig_tol = 1e-12 * eig_max.max(1.0);
            let alpha: Vec<f64> = (0..dim)
                .map(|e| (0..dim).map(|i| eig.eigenvectors[(i, e)] * gz[i]).sum())
                .collect();
            let g_scale = 1.0 + g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            // A flat direction with a gradient component means the reduced
            // problem is linear and decreasing along it.
            let flat = (0..dim)
                .find(|&e| eig.eigenvalues[e] <= eig_tol && alpha[e].abs() > 1e-11 * g_scale);
            if let Some(e) = flat {
                let sgn = -alpha[e].signum();
                let mut d = vec![0.0; m];
                for i in 0..dim {
                    let c = sgn * eig.eigenvectors[(i, e)];
                    for (dk, zk) in d.iter_mut().zip(qr.null_col(i)) {
                        *dk += c * zk;
                    }
                }
                step = Some((d, StepKind::Ray));
            } else {
                let mut dz = vec![0.0; dim];
                for e in 0..dim {
                    if eig.eigenvalues[e] > eig_tol {
                        let c = -alpha[e] / eig.eigenvalues[e];
                        for i in 0..dim {
                            dz[i] += c * eig.eigenvectors[(i, e)];
                        }
                    }
                }
                let mut d = vec![0.0; m];
                for i in 0..dim {
                    if dz[i] != 0.0 {
                        for (dk, zk) in d.iter_mut().zip(qr.null_col(i)) {
                            *dk += dz[i] * zk;
                        }
                    }
                }
                if norm2(&d) > 1e-11 * (1.0 + norm2(&z)) {
                    step = Some((d, StepKind::ToMinimum));
                }
            }
        }

        match step {
            None => {
                // Stationary on the working set: check multipliers.
                let (lam_w, _resid) = qr.solve(&g);
                let mut worst: Option<(usize, f64)> = None;
                for (pos, id) in working.iter().enumerate() {
                    if let WorkId::Ineq(_) = id {
                        let l = lam_w[pos];
                        if l < worst.map_or(-act_tol, |(_, w)| w) {
                            worst = Some((pos, l));
                        }
                    }
                }
                match worst {
                    None => {
                        let mut lambda = vec![0.0; n_ineq];
                        let mut mu = vec![0.0; n_eq];
                        for (pos, id) in working.iter().enumerate() {
                            match id {
                                WorkId::Ineq(i) => lambda[*i] = lam_w[pos].max(0.0),
                                WorkId::Eq(i) => mu[*i] = lam_w[pos],
                            }
                        }
                        let kkt = kkt_residuals(ProgramRef::Quadratic(qp), &z, &lambda, &mu);
                        if !kkt.within(tols.kkt * scale) {
                            return Err(LpqpError::Breakdown(format!(
                                "KKT residuals too large at reported optimum: {kkt:?}"
                            )));
                        }
                        let objective = qp.value(&z);
                        return Ok(SolveOutcome::optimal(z, objective, lambda, mu, kkt));
                    }
                    Some((pos, _)) => {
                        if let WorkId::Ineq(i) = working[pos] {
                            in_working[i] = false;
                        }
                        qr.remove(pos);
                        working.remove(pos);
                    }
                }
            }
            Some((d, kind)) => {
                // Longest feasible step along d, capped at 1 for a step to
                // the subproblem minimum.
                let cap = match kind {
                    StepKind::ToMinimum => 1.0,
                    StepKind::Ray => f64::INFINITY,
                };
                let mut alpha = cap;
                let mut blocking = None;
                for i in 0..n_ineq {
                    if in_working[i] {
                        continue;
                    }
                    let ad = dot(qp.a_ineq.row(i), &d);
                    if ad < -1e-12 {
                        let ratio = (slack(&z, i).max(0.0)) / (-ad);
                        if ratio < alpha - 1e-15 {
                            alpha = ratio;
                            blocking = Some(i);
                        }
                    }
                }
                if !alpha.is_finite() {
                    let n = norm2(&d);
                    let ray: Vec<f64> = d.iter().map(|x| x / n).collect();
                    if !verify_ray(ProgramRef::Quadratic(qp), &ray, 1e-10) {
                        return Err(LpqpError::Breakdown(
                            "unboundedness ray failed certificate verification".into(),
                        ));
                    }
                    return Ok(SolveOutcome::unbounded(ray));
                }
                for (zk, dk) in z.iter_mut().zip(&d) {
                    *zk += alpha * dk;
                }
                if let Some(i) = blocking {
                    if qr.try_append(qp.a_ineq.row(i), DEPENDENCE_TOL) {
                        working.push(WorkId::Ineq(i));
                        in_working[i] = true;
                    }
                }
            }
        }
    }
    Err(LpqpError::Breakdown(
        "active-set iteration cap reached".into(),
    ))
}
