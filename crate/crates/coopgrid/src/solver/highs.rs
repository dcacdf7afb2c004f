//! HiGHS adapter, the reference backend.

use highs::{ColProblem, HighsModelStatus, Model};

use super::{Backend, ObjSense, Problem, Solution, SolverConfig, Status};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

fn build(p: &Problem, cfg: &SolverConfig, mip: bool) -> Model {
    let mut hp = ColProblem::default();
    let rows: Vec<_> = p
        .rows
        .iter()
        .map(|r| {
            let (lo, hi) = r.bounds();
            hp.add_row(lo..=hi)
        })
        .collect();
    let mut by_col: Vec<Vec<(highs::Row, f64)>> = vec![Vec::new(); p.vars.len()];
    for (i, r) in p.rows.iter().enumerate() {
        for &(v, a) in &r.coefs {
            by_col[v.0].push((rows[i], a));
        }
    }
    for (v, col) in p.vars.iter().zip(by_col) {
        let int = mip && v.integer;
        hp.add_column_with_integrality(v.obj, v.lb..=v.ub, col, int);
    }
    let sense = match p.sense {
        ObjSense::Minimize => highs::Sense::Minimise,
        ObjSense::Maximize => highs::Sense::Maximise,
    };
    let mut m = hp.optimise(sense);
    m.make_quiet();
    m.set_option("primal_feasibility_tolerance", cfg.primal_feas_tol);
    m.set_option("dual_feasibility_tolerance", cfg.dual_feas_tol);
    m.set_option("mip_feasibility_tolerance", cfg.integrality_tol);
    m.set_option("time_limit", cfg.milp_time_limit);
    m.set_option("random_seed", 0);
    m.set_option("threads", cfg.threads.max(1) as i32);
    m
}

fn status_of(s: HighsModelStatus) -> Result<Status> {
    match s {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => Ok(Status::Optimal),
        HighsModelStatus::Infeasible => Ok(Status::Infeasible),
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => Ok(Status::Unbounded),
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => Ok(Status::GapLimit),
        other => Err(Error::SolverFailure(format!("HiGHS returned {other:?}"))),
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_lp(&self, p: &Problem, cfg: &SolverConfig) -> Result<Solution> {
        let mut m = build(p, cfg, false);
        m.set_option("solver", "simplex");
        let solved = m
            .try_solve()
            .map_err(|e| Error::SolverFailure(format!("HiGHS: {e:?}")))?;
        let status = status_of(solved.status())?;
        if status != Status::Optimal {
            return Ok(Solution::infeasible(p, status));
        }
        let sol = solved.get_solution();
        let x = sol.columns().to_vec();
        let obj = p.objective_at(&x);
        let mut out = Solution::new(p, status, obj, x);
        out.duals = Some(sol.dual_rows().to_vec());
        Ok(out)
    }

    fn solve_milp(&self, p: &Problem, rel_gap: f64, cfg: &SolverConfig) -> Result<Solution> {
        let mut m = build(p, cfg, true);
        m.set_option("mip_rel_gap", rel_gap);
        m.set_option("mip_abs_gap", 1e-9);
        let solved = m
            .try_solve()
            .map_err(|e| Error::SolverFailure(format!("HiGHS: {e:?}")))?;
        let status = status_of(solved.status())?;
        let sol = solved.get_solution();
        let x = sol.columns().to_vec();
        if status == Status::GapLimit && x.len() != p.vars.len() {
            return Err(Error::SolverFailure("time limit reached without an incumbent".into()));
        }
        if !matches!(status, Status::Optimal | Status::GapLimit) {
            return Ok(Solution::infeasible(p, status));
        }
        if status == Status::GapLimit && p.max_violation(&x) > 1e-5 {
            return Err(Error::SolverFailure(
                "time limit reached without a feasible incumbent".into(),
            ));
        }
        let obj = p.objective_at(&x);
        let mut out = Solution::new(p, status, obj, x);
        out.mip_gap = Some(solved.mip_gap());
        Ok(out)
    }
}
