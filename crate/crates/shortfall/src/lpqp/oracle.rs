//! Brute-force reference solvers for small instances, used to cross-check
//! the simplex and active-set engines in tests.

use super::{dot, DenseMatrix, LinearProgram, QuadraticProgram};

/// Result of exhaustive vertex enumeration on a small LP.
#[derive(Debug, Clone)]
pub struct VertexSolution {
    /// Number of basic feasible solutions found.
    pub n_vertices: usize,
    pub best_objective: Option<f64>,
    pub best_vertex: Option<Vec<f64>>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost slot that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Enumerates all basic feasible solutions of `min c.z, A z >= b, E z = d`
/// by solving every square system of tight rows. Intended for instances
/// with at most a handful of variables.
pub fn enumerate_vertices(lp: &LinearProgram, feas_tol: f64) -> VertexSolution {
    let m = lp.n_vars();
    let n_ineq = lp.a_ineq.n_rows();
    let n_eq = lp.a_eq.n_rows();
    let mut rows: Vec<(&[f64], f64)> = Vec::with_capacity(n_ineq + n_eq);
    for i in 0..n_ineq {
        rows.push((lp.a_ineq.row(i), lp.b_ineq[i]));
    }
    for i in 0..n_eq {
        rows.push((lp.a_eq.row(i), lp.b_eq[i]));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut n_vertices = 0;
    for combo in combinations(rows.len(), m) {
        // Equality rows must all be tight anyway; a basis that omits one is
        // fine as long as the resulting point satisfies it, so no filtering
        // here beyond feasibility of the solved point.
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut rhs = nalgebra::DVector::<f64>::zeros(m);
        for (r, &row_idx) in combo.iter().enumerate() {
            for c in 0..m {
                a[(r, c)] = rows[row_idx].0[c];
            }
            rhs[r] = rows[row_idx].1;
        }
        let Some(sol) = a.lu().solve(&rhs) else {
            continue;
        };
        let z: Vec<f64> = sol.iter().cloned().collect();
        if !z.iter().all(|x| x.is_finite()) {
            continue;
        }
        let feasible = (0..n_ineq).all(|i| dot(lp.a_ineq.row(i), &z) >= lp.b_ineq[i] - feas_tol)
            && (0..n_eq).all(|i| (dot(lp.a_eq.row(i), &z) - lp.b_eq[i]).abs() <= feas_tol);
        if !feasible {
            continue;
        }
        n_vertices += 1;
        let obj = dot(&lp.objective, &z);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, z));
        }
    }
    let (best_objective, best_vertex) = match best {
        Some((o, v)) => (Some(o), Some(v)),
        None => (None, None),
    };
    VertexSolution {
        n_vertices,
        best_objective,
        best_vertex,
    }
}

/// Solves a small convex QP by enumerating active sets of inequality rows:
/// for each subset, the equality-constrained KKT system is solved directly
/// and the candidate is kept if it is primal feasible with nonnegative
/// multipliers. Returns the best candidate `(z, objective)`.
pub fn enumerate_qp_active_sets(qp: &QuadraticProgram, feas_tol: f64) -> Option<(Vec<f64>, f64)> {
    let m = qp.n_vars();
    let n_ineq = qp.a_ineq.n_rows();
    let n_eq = qp.a_eq.n_rows();
    assert!(n_ineq <= 20, "active-set enumeration is exponential");

    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1u32 << n_ineq) {
        let active: Vec<usize> = (0..n_ineq).filter(|i| mask >> i & 1 == 1).collect();
        let k = active.len() + n_eq;
        let dim = m + k;
        let mut kkt = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
        for i in 0..m {
            for j in 0..m {
                kkt[(i, j)] = qp.q.get(i, j);
            }
            rhs[i] = -qp.objective[i];
        }
        let stack = |r: usize| -> (&[f64], f64) {
            if r < n_eq {
                (qp.a_eq.row(r), qp.b_eq[r])
            } else {
                let i = active[r - n_eq];
                (qp.a_ineq.row(i), qp.b_ineq[i])
            }
        };
        for r in 0..k {
            let (row, b) = stack(r);
            for j in 0..m {
                kkt[(m + r, j)] = row[j];
                kkt[(j, m + r)] = -row[j];
            }
            rhs[m + r] = b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if !sol.iter().all(|x| x.is_finite()) {
            continue;
        }
        let z: Vec<f64> = sol.iter().take(m).cloned().collect();
        let lambda_ok = (0..active.len()).all(|r| sol[m + n_eq + r] >= -feas_tol);
        if !lambda_ok {
            continue;
        }
        let feasible = (0..n_ineq).all(|i| dot(qp.a_ineq.row(i), &z) >= qp.b_ineq[i] - feas_tol)
            && (0..n_eq).all(|i| (dot(qp.a_eq.row(i), &z) - qp.b_eq[i]).abs() <= feas_tol);
        if !feasible {
            continue;
        }
        let obj = qp.value(&z);
        if best.as_ref().map_or(true, |(_, b)| obj < *b) {
            best = Some((z, obj));
        }
    }
    best
}

/// Convenience builder for small dense instances in tests and oracles.
pub fn lp_from_parts(
    objective: Vec<f64>,
    a_ineq: Vec<Vec<f64>>,
    b_ineq: Vec<f64>,
    a_eq: Vec<Vec<f64>>,
    b_eq: Vec<f64>,
) -> LinearProgram {
    LinearProgram {
        objective,
        a_ineq: DenseMatrix::from_rows(&a_ineq).unwrap(),
        b_ineq,
        a_eq: DenseMatrix::from_rows(&a_eq).unwrap(),
        b_eq,
    }
}
