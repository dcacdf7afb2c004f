//! Oracles shared by the integration tests. They rely only on the public
//! LP interface and plain enumeration, never on the allocation code.

#![allow(dead_code)]

use coopgrid::games::CoalitionValueTable;
use coopgrid::model::Coalition;
use coopgrid::solver::{BackendKind, Problem, Sense, Solver, SolverConfig};

/// Least-core master over every coalition, solved on the native simplex:
/// min eps s.t. beta(A) = v(A), beta(C) + eps >= v(C), beta >= 0.
pub fn brute_force_epsilon(table: &CoalitionValueTable) -> f64 {
    let n = table.areas.len();
    let all = Coalition::all(n);
    let mut p = Problem::default();
    let b: Vec<_> = (0..n)
        .map(|a| p.add_var(format!("b{a}"), 0.0, f64::INFINITY, 0.0))
        .collect();
    let eps = p.add_var("eps", 0.0, f64::INFINITY, 1.0);
    p.add_row(
        "eff",
        b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
        Sense::Eq,
        table.get(all).unwrap(),
    );
    for c in Coalition::all_subsets(n).filter(|c| !c.is_empty() && *c != all) {
        let mut coefs: Vec<_> = c.members().map(|a| (b[a], 1.0)).collect();
        coefs.push((eps, 1.0));
        p.add_row(format!("c{c:?}"), coefs, Sense::Ge, table.get(c).unwrap());
    }
    let native = Solver::new(BackendKind::Native, SolverConfig::default()).unwrap();
    let sol = native.solve_lp(&p).unwrap();
    assert!(sol.is_optimal());
    sol.value(eps)
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Euclidean projection of `target` onto {x : 1'x = grand, G x >= h} by
/// trying every active set of size below the dimension and keeping the
/// closest feasible candidate. Only sensible for a handful of areas.
pub fn projection_by_enumeration(target: &[f64], grand: f64, g: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
    let n = target.len();
    let m = g.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u64..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if active.len() >= n {
            continue;
        }
        // Rows: equality plus active inequalities held tight.
        let mut rows = vec![vec![1.0; n]];
        let mut rhs = vec![grand];
        for &i in &active {
            rows.push(g[i].clone());
            rhs.push(h[i]);
        }
        let k = rows.len();
        // KKT: [I R'; R 0] [x; y] = [target; rhs].
        let dim = n + k;
        let mut a = vec![vec![0.0; dim]; dim];
        let mut b = vec![0.0; dim];
        for i in 0..n {
            a[i][i] = 1.0;
            b[i] = target[i];
            for (j, r) in rows.iter().enumerate() {
                a[i][n + j] = r[i];
                a[n + j][i] = r[i];
            }
        }
        b[n..].copy_from_slice(&rhs);
        let Some(z) = dense_solve(a, b) else { continue };
        let x = z[..n].to_vec();
        let feasible = g
            .iter()
            .zip(h)
            .all(|(gi, &hi)| gi.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() >= hi - 1e-7);
        if !feasible {
            continue;
        }
        let d: f64 = x.iter().zip(target).map(|(p, q)| (p - q).powi(2)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd - 1e-12) {
            best = Some((d, x));
        }
    }
    best.expect("least-core face is nonempty").1
}

/// Least-core selecting allocation from the fully enumerated table.
pub fn brute_force_least_core(table: &CoalitionValueTable, criterion: &[f64]) -> (f64, Vec<f64>) {
    let n = table.areas.len();
    let all = Coalition::all(n);
    let eps = brute_force_epsilon(table);
    let mut g = Vec::new();
    let mut h = Vec::new();
    for c in Coalition::all_subsets(n).filter(|c| !c.is_empty() && *c != all) {
        g.push((0..n).map(|a| if c.contains(a) { 1.0 } else { 0.0 }).collect());
        h.push(table.get(c).unwrap() - eps);
    }
    for a in 0..n {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        g.push(e);
        h.push(0.0);
    }
    (
        eps,
        projection_by_enumeration(criterion, table.get(all).unwrap(), &g, &h),
    )
}
