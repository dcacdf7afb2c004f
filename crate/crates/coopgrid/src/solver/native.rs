//! Dense bounded-variable primal simplex with a depth-first branch and bound
//! on top. Meant for small instances: the browser build, where no C solver
//! is available, and cross-checks against the reference backend in tests.

use super::{Backend, ObjSense, Problem, Solution, SolverConfig, Status};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Debug)]
pub struct NativeBackend {
    pub max_iterations: usize,
    pub max_nodes: usize,
}

impl Default for NativeBackend {
    fn default() -> Self {
        NativeBackend {
            max_iterations: 200_000,
            max_nodes: 200_000,
        }
    }
}

impl Backend for NativeBackend {
    fn name(&self) -> &'static str {
        "native"
    }

    fn solve_lp(&self, p: &Problem, cfg: &SolverConfig) -> Result<Solution> {
        let lb: Vec<f64> = p.vars.iter().map(|v| v.lb).collect();
        let ub: Vec<f64> = p.vars.iter().map(|v| v.ub).collect();
        let out = self.simplex(p, &lb, &ub, cfg)?;
        Ok(out.into_solution(p))
    }

    fn solve_milp(&self, p: &Problem, rel_gap: f64, cfg: &SolverConfig) -> Result<Solution> {
        self.branch_and_bound(p, rel_gap, cfg)
    }
}

struct LpOutcome {
    status: Status,
    objective: f64,
    x: Vec<f64>,
    duals: Vec<f64>,
}

impl LpOutcome {
    fn into_solution(self, p: &Problem) -> Solution {
        let mut s = Solution::new(p, self.status, self.objective, self.x);
        if self.status == Status::Optimal {
            s.duals = Some(self.duals);
        }
        s
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Pos {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic column held at zero.
    Zero,
}

/// Working state: columns are structurals, then one slack per row (`-e_i`),
/// then one artificial per row (`sign_i * e_i`).
struct Tableau<'a> {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    pos: Vec<Pos>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    tol: f64,
    _p: std::marker::PhantomData<&'a ()>,
}

impl<'a> Tableau<'a> {
    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn binv_row(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    /// `B^-1 a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for r in 0..m {
                out[r] += self.binv[r * m + i] * a;
            }
        }
        out
    }

    /// Simplex multipliers `c_B B^-1`.
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = self.binv_row(r);
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    /// Recomputes basic values from the nonbasic ones.
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.ncols() {
            if self.pos[j] != Pos::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let row = self.binv_row(r);
            let v: f64 = row.iter().zip(&rhs).map(|(b, c)| b * c).sum();
            let j = self.basis[r];
            self.x[j] = v;
        }
    }

    /// Rebuilds `B^-1` by Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + r] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-13 {
                return Err(Error::SolverFailure("singular basis".into()));
            }
            if piv != c {
                for k in 0..m {
                    a.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        Ok(())
    }

    /// Replaces basic position `r` with column `j`, given `alpha = B^-1 a_j`.
    fn pivot(&mut self, r: usize, j: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let pr = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= pr;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.basis[r] = j;
        self.pos[j] = Pos::Basic;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Runs primal simplex on the current cost vector. Returns false when unbounded.
    fn optimize(&mut self, max_iter: usize) -> Result<bool> {
        let tol = self.tol;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        for _ in 0..max_iter {
            self.recompute_basics();
            let obj: f64 = (0..self.ncols()).map(|j| self.cost[j] * self.x[j]).sum();
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                stall = 0;
                last_obj = obj;
            } else {
                stall += 1;
            }
            let bland = stall > 30;
            let y = self.duals();
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols() {
                let p = self.pos[j];
                if p == Pos::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y);
                let dir = match p {
                    Pos::Lower if d < -tol => 1.0,
                    Pos::Upper if d > tol => -1.0,
                    Pos::Zero if d.abs() > tol => -d.signum(),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((j, dir)) = enter else {
                return Ok(true);
            };
            let alpha = self.ftran(j);
            // Ratio test: x_B moves by -dir * t * alpha.
            let mut t_max = self.ub[j] - self.lb[j];
            let mut leave: Option<usize> = None;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for r in 0..self.m {
                let a = alpha[r];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[r];
                let rate = -dir * a;
                let lim = if rate < 0.0 {
                    if self.lb[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    ((self.x[b] - self.lb[b]).max(0.0)) / -rate
                } else {
                    if self.ub[b] == f64::INFINITY {
                        continue;
                    }
                    ((self.ub[b] - self.x[b]).max(0.0)) / rate
                };
                cands.push((r, lim, a.abs()));
            }
            let t_rows = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if t_rows < t_max {
                t_max = t_rows;
                let slack = 1e-12 + 1e-9 * t_rows.abs();
                let mut best_a = 0.0;
                for &(r, lim, a) in &cands {
                    if lim <= t_rows + slack {
                        let pick = if bland {
                            leave.is_none_or(|l| self.basis[r] < self.basis[l])
                        } else {
                            a > best_a
                        };
                        if pick {
                            best_a = a;
                            leave = Some(r);
                        }
                    }
                }
            }
            if t_max == f64::INFINITY {
                return Ok(false);
            }
            match leave {
                None => {
                    // Bound flip of the entering column.
                    self.pos[j] = if dir > 0.0 { Pos::Upper } else { Pos::Lower };
                    self.x[j] = if dir > 0.0 { self.ub[j] } else { self.lb[j] };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let rate = -dir * alpha[r];
                    if rate < 0.0 {
                        self.pos[b] = Pos::Lower;
                        self.x[b] = self.lb[b];
                    } else {
                        self.pos[b] = Pos::Upper;
                        self.x[b] = self.ub[b];
                    }
                    self.x[j] += dir * t_max;
                    self.pivot(r, j, &alpha)?;
                }
            }
        }
        Err(Error::SolverFailure("simplex iteration limit".into()))
    }
}

impl NativeBackend {
    fn simplex(&self, p: &Problem, lb: &[f64], ub: &[f64], cfg: &SolverConfig) -> Result<LpOutcome> {
        let n = p.vars.len();
        let m = p.rows.len();
        let sign = if p.sense == ObjSense::Maximize { -1.0 } else { 1.0 };
        let infeasible = |status| LpOutcome {
            status,
            objective: f64::NAN,
            x: vec![f64::NAN; n],
            duals: vec![f64::NAN; m],
        };
        for j in 0..n {
            if lb[j] > ub[j] + cfg.primal_feas_tol {
                return Ok(infeasible(Status::Infeasible));
            }
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 2 * m];
        for (i, row) in p.rows.iter().enumerate() {
            for &(v, a) in &row.coefs {
                cols[v.0].push((i, a));
            }
            cols[n + i].push((i, -1.0));
        }
        let mut lbv = Vec::with_capacity(n + 2 * m);
        let mut ubv = Vec::with_capacity(n + 2 * m);
        let mut x = vec![0.0; n + 2 * m];
        let mut pos = vec![Pos::Lower; n + 2 * m];
        for j in 0..n {
            lbv.push(lb[j]);
            ubv.push(ub[j].max(lb[j]));
            if lb[j].is_finite() {
                x[j] = lb[j];
                pos[j] = Pos::Lower;
            } else if ub[j].is_finite() {
                x[j] = ub[j];
                pos[j] = Pos::Upper;
            } else {
                pos[j] = Pos::Zero;
            }
        }
        let mut basis = vec![0usize; m];
        let mut binv = vec![0.0; m * m];
        let mut art_bounds = Vec::with_capacity(m);
        for (i, row) in p.rows.iter().enumerate() {
            let (lo, hi) = row.bounds();
            lbv.push(lo);
            ubv.push(hi);
            let r: f64 = row.coefs.iter().map(|&(v, a)| a * x[v.0]).sum();
            let s = n + i;
            let a = n + m + i;
            if r >= lo - 1e-12 && r <= hi + 1e-12 {
                basis[i] = s;
                pos[s] = Pos::Basic;
                x[s] = r;
                binv[i * m + i] = -1.0;
                cols[a].push((i, 1.0));
                pos[a] = Pos::Lower;
                art_bounds.push(0.0);
            } else {
                let target = if r < lo { lo } else { hi };
                x[s] = target;
                pos[s] = if r < lo { Pos::Lower } else { Pos::Upper };
                let sg = if target > r { 1.0 } else { -1.0 };
                cols[a].push((i, sg));
                basis[i] = a;
                pos[a] = Pos::Basic;
                x[a] = (target - r).abs();
                binv[i * m + i] = sg;
                art_bounds.push(f64::INFINITY);
            }
        }
        for ab in &art_bounds {
            lbv.push(0.0);
            ubv.push(*ab);
        }
        let mut cost = vec![0.0; n + 2 * m];
        for j in n + m..n + 2 * m {
            cost[j] = 1.0;
        }
        let mut t = Tableau {
            m,
            cols,
            lb: lbv,
            ub: ubv,
            cost,
            x,
            pos,
            basis,
            binv,
            since_refactor: 0,
            tol: cfg.dual_feas_tol.max(1e-9),
            _p: std::marker::PhantomData,
        };
        if art_bounds.iter().any(|b| b.is_infinite()) {
            t.optimize(self.max_iterations)?;
            t.recompute_basics();
            let infeas: f64 = (n + m..n + 2 * m).map(|j| t.x[j]).sum();
            let scale = 1.0 + p.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeas > 1e-7 * scale {
                return Ok(infeasible(Status::Infeasible));
            }
        }
        // Phase 2: artificials pinned at zero, driven out of the basis where possible.
        for j in n + m..n + 2 * m {
            t.ub[j] = 0.0;
            t.cost[j] = 0.0;
            if t.pos[j] != Pos::Basic {
                t.x[j] = 0.0;
                t.pos[j] = Pos::Lower;
            }
        }
        for r in 0..m {
            let b = t.basis[r];
            if b < n + m {
                continue;
            }
            let row = t.binv_row(r).to_vec();
            let mut pick = None;
            let mut best = 1e-8;
            for j in 0..n + m {
                if t.pos[j] == Pos::Basic {
                    continue;
                }
                let v: f64 = t.cols[j].iter().map(|&(i, a)| row[i] * a).sum::<f64>().abs();
                if v > best {
                    best = v;
                    pick = Some(j);
                }
            }
            if let Some(j) = pick {
                let alpha = t.ftran(j);
                t.pos[b] = Pos::Lower;
                t.x[b] = 0.0;
                t.pivot(r, j, &alpha)?;
            }
        }
        t.refactor()?;
        for j in 0..n {
            t.cost[j] = sign * p.vars[j].obj;
        }
        let bounded = t.optimize(self.max_iterations)?;
        if !bounded {
            return Ok(infeasible(Status::Unbounded));
        }
        t.recompute_basics();
        let xs: Vec<f64> = t.x[..n].to_vec();
        let y = t.duals();
        let duals: Vec<f64> = y.iter().map(|v| sign * v).collect();
        let objective = p.objective_at(&xs);
        Ok(LpOutcome {
            status: Status::Optimal,
            objective,
            x: xs,
            duals,
        })
    }

    fn branch_and_bound(&self, p: &Problem, rel_gap: f64, cfg: &SolverConfig) -> Result<Solution> {
        let sign = if p.sense == ObjSense::Maximize { -1.0 } else { 1.0 };
        let int_cols: Vec<usize> = (0..p.vars.len()).filter(|&j| p.vars[j].integer).collect();
        let lb0: Vec<f64> = p
            .vars
            .iter()
            .map(|v| if v.integer { v.lb.ceil() } else { v.lb })
            .collect();
        let ub0: Vec<f64> = p
            .vars
            .iter()
            .map(|v| if v.integer { v.ub.floor() } else { v.ub })
            .collect();
        // Stack of (lb, ub, parent bound in minimisation sense).
        let mut stack: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![(lb0, ub0, f64::NEG_INFINITY)];
        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        let mut nodes = 0usize;
        let mut root_unbounded = false;
        let gap_ok = |inc: f64, bound: f64| (inc - bound) <= rel_gap * inc.abs().max(1.0) + 1e-9;
        while let Some((lb, ub, parent)) = stack.pop() {
            if let Some((inc, _)) = &incumbent {
                if gap_ok(*inc, parent) {
                    continue;
                }
            }
            nodes += 1;
            if nodes > self.max_nodes {
                break;
            }
            let out = self.simplex(p, &lb, &ub, cfg)?;
            match out.status {
                Status::Infeasible => continue,
                Status::Unbounded => {
                    if nodes == 1 {
                        root_unbounded = true;
                    }
                    break;
                }
                _ => {}
            }
            let z = sign * out.objective;
            if let Some((inc, _)) = &incumbent {
                if gap_ok(*inc, z) {
                    continue;
                }
            }
            let mut branch: Option<(usize, f64)> = None;
            let mut most = cfg.integrality_tol;
            for &j in &int_cols {
                let v = out.x[j];
                let f = (v - v.floor()).min(v.ceil() - v);
                if f > most {
                    most = f;
                    branch = Some((j, v));
                }
            }
            match branch {
                None => {
                    let mut x = out.x;
                    for &j in &int_cols {
                        x[j] = x[j].round();
                    }
                    if incumbent.as_ref().is_none_or(|(inc, _)| z < *inc) {
                        incumbent = Some((z, x));
                    }
                }
                Some((j, v)) => {
                    let mut ub_down = ub.clone();
                    ub_down[j] = v.floor();
                    let mut lb_up = lb.clone();
                    lb_up[j] = v.ceil();
                    // Explore the nearer side first.
                    if v - v.floor() < 0.5 {
                        stack.push((lb_up, ub, z));
                        stack.push((lb, ub_down, z));
                    } else {
                        stack.push((lb, ub_down, z));
                        stack.push((lb_up, ub, z));
                    }
                }
            }
        }
        if root_unbounded {
            return Ok(Solution::infeasible(p, Status::Unbounded));
        }
        let open_bound = stack.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
        match incumbent {
            None => Ok(Solution::infeasible(p, Status::Infeasible)),
            Some((z, x)) => {
                let bound = open_bound.min(z);
                let gap = (z - bound).max(0.0) / z.abs().max(1.0);
                let status = if stack.is_empty() || gap <= rel_gap {
                    Status::Optimal
                } else {
                    Status::GapLimit
                };
                let mut s = Solution::new(p, status, p.objective_at(&x), x);
                s.mip_gap = Some(if stack.is_empty() { 0.0 } else { gap });
                Ok(s)
            }
        }
    }
}
