//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
//!
//! Solves `min 1/2 x'Gx + a'x` subject to `c_i'x = b_i` and `c_j'x >= b_j`.
//! Problem sizes here are tiny (one column per area), so every step works on
//! explicit dense matrices.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows, then the inequality rows.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, v)).collect()
}

/// Inverse by Gauss-Jordan; `None` when singular.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(c, piv);
        inv.swap(c, piv);
        let d = a[c][c];
        for k in 0..n {
            a[c][k] /= d;
            inv[c][k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..n {
                        a[r][k] -= f * a[c][k];
                        inv[r][k] -= f * inv[c][k];
                    }
                }
            }
        }
    }
    Some(inv)
}

struct Active {
    idx: usize,
    normal: Vec<f64>,
    equality: bool,
}

/// Goldfarb-Idnani. `g` must be symmetric positive definite.
pub fn solve_qp(g: &[Vec<f64>], a: &[f64], eq: &[(Vec<f64>, f64)], ineq: &[(Vec<f64>, f64)]) -> Result<QpSolution> {
    let n = a.len();
    let ginv = invert(g).ok_or_else(|| Error::SolverFailure("QP Hessian is singular".into()))?;
    let mut x: Vec<f64> = mat_vec(&ginv, a).iter().map(|v| -v).collect();
    let scale = 1.0 + eq.iter().chain(ineq).map(|(_, b)| b.abs()).fold(0.0f64, f64::max);
    let tol = 1e-10 * scale;
    let mut active: Vec<Active> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let max_iter = 50 * (n + eq.len() + ineq.len() + 1);

    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::SolverFailure("QP iteration limit".into()));
        }
        // Choose a violated constraint: equalities first.
        let mut pick: Option<(usize, Vec<f64>, f64, bool)> = None;
        for (i, (c, b)) in eq.iter().enumerate() {
            if active.iter().any(|s| s.idx == i) {
                continue;
            }
            let s = dot(c, &x) - b;
            if s.abs() > tol {
                let (nv, bv) = if s > 0.0 {
                    (c.iter().map(|v| -v).collect(), -b)
                } else {
                    (c.clone(), *b)
                };
                pick = Some((i, nv, bv, true));
                break;
            }
            // Already satisfied equalities still go into the active set so
            // later steps keep them.
            pick = Some((i, c.clone(), *b, true));
            break;
        }
        if pick.is_none() {
            let mut worst = -tol;
            for (j, (c, b)) in ineq.iter().enumerate() {
                let i = eq.len() + j;
                if active.iter().any(|s| s.idx == i) {
                    continue;
                }
                let s = dot(c, &x) - b;
                if s < worst {
                    worst = s;
                    pick = Some((i, c.clone(), *b, false));
                }
            }
        }
        let Some((p, np, bp, p_eq)) = pick else {
            break;
        };
        let mut u_new = 0.0;
        loop {
            // z = H np, r = (N'G^-1N)^-1 N'G^-1 np
            let ginv_np = mat_vec(&ginv, &np);
            let (z, r) = if active.is_empty() {
                (ginv_np.clone(), Vec::new())
            } else {
                let ginv_n: Vec<Vec<f64>> = active.iter().map(|s| mat_vec(&ginv, &s.normal)).collect();
                let k = active.len();
                let m: Vec<Vec<f64>> = (0..k)
                    .map(|i| (0..k).map(|j| dot(&active[i].normal, &ginv_n[j])).collect())
                    .collect();
                let minv = invert(&m).ok_or_else(|| Error::SolverFailure("dependent active set".into()))?;
                let rhs: Vec<f64> = active.iter().map(|s| dot(&s.normal, &ginv_np)).collect();
                let r = mat_vec(&minv, &rhs);
                let mut z = ginv_np.clone();
                for (i, gn) in ginv_n.iter().enumerate() {
                    for t in 0..n {
                        z[t] -= r[i] * gn[t];
                    }
                }
                (z, r)
            };
            // Partial step bound from dual feasibility of active inequalities.
            let mut t1 = f64::INFINITY;
            let mut drop_k: Option<usize> = None;
            for (i, s) in active.iter().enumerate() {
                if !s.equality && r[i] > 1e-12 {
                    let t = u[i] / r[i];
                    if t < t1 {
                        t1 = t;
                        drop_k = Some(i);
                    }
                }
            }
            let zn = dot(&z, &np);
            let z_zero = z.iter().all(|v| v.abs() < 1e-12) || zn.abs() < 1e-14;
            let t2 = if z_zero {
                f64::INFINITY
            } else {
                (bp - dot(&np, &x)) / zn
            };
            let t = t1.min(t2);
            if t == f64::INFINITY {
                return Err(Error::SolverFailure("QP is infeasible".into()));
            }
            if z_zero {
                for (i, ui) in u.iter_mut().enumerate() {
                    *ui -= t * r[i];
                }
                u_new += t;
                let k = drop_k.expect("finite partial step");
                active.remove(k);
                u.remove(k);
                continue;
            }
            for i in 0..n {
                x[i] += t * z[i];
            }
            for (i, ui) in u.iter_mut().enumerate() {
                *ui -= t * r[i];
            }
            u_new += t;
            if t2 <= t1 {
                active.push(Active {
                    idx: p,
                    normal: np.clone(),
                    equality: p_eq,
                });
                u.push(u_new);
                break;
            }
            let k = drop_k.expect("partial step has an index");
            active.remove(k);
            u.remove(k);
        }
    }
    let gx = mat_vec(g, &x);
    let objective = 0.5 * dot(&x, &gx) + dot(a, &x);
    let mut multipliers = vec![0.0; eq.len() + ineq.len()];
    for (s, ui) in active.iter().zip(&u) {
        // Flipped equalities carry a negated multiplier.
        let sign = if s.equality && s.idx < eq.len() && dot(&s.normal, &eq[s.idx].0) < 0.0 {
            -1.0
        } else {
            1.0
        };
        multipliers[s.idx] = sign * ui;
    }
    Ok(QpSolution {
        x,
        objective,
        multipliers,
        iterations,
    })
}

/// Euclidean projection of `c` onto `{x : eq rows hold, ineq rows hold}`.
pub fn project(c: &[f64], eq: &[(Vec<f64>, f64)], ineq: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let n = c.len();
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let a: Vec<f64> = c.iter().map(|v| -v).collect();
    Ok(solve_qp(&g, &a, eq, ineq)?.x)
}
