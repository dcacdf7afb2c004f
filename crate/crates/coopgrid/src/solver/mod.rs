//! Backend-neutral LP/MILP construction and solution.
//!
//! A [`Problem`] is a list of bounded columns and named range rows. Backends
//! return a [`Solution`] with primal values and, for pure LPs, row duals in
//! the `d objective / d rhs` convention (a binding `>=` row in a minimisation
//! has a nonnegative dual).

mod lpfile;
pub mod native;
pub mod qp;

#[cfg(feature = "highs")]
pub mod highs;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lpfile::write_lp;

/// Index of a column in a [`Problem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a row in a [`Problem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct Var {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
    pub integer: bool,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    /// Row activity bounds `(lo, hi)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Ge => (self.rhs, f64::INFINITY),
            Sense::Eq => (self.rhs, self.rhs),
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, c)| c * x[v.0]).sum()
    }
}

/// LP/MILP under construction.
#[derive(Clone, Debug)]
pub struct Problem {
    pub sense: ObjSense,
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
    pub obj_offset: f64,
    row_names: HashMap<String, RowId>,
    var_names: HashMap<String, VarId>,
}

impl Default for Problem {
    fn default() -> Self {
        Self::new(ObjSense::Minimize)
    }
}

impl Problem {
    pub fn new(sense: ObjSense) -> Self {
        Problem {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            obj_offset: 0.0,
            row_names: HashMap::new(),
            var_names: HashMap::new(),
        }
    }

    /// Adds a continuous column. Panics on a duplicate name, which is a
    /// programming error in the model builders.
    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64, obj: f64) -> VarId {
        self.push_var(name.into(), lb, ub, obj, false)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> VarId {
        self.push_var(name.into(), 0.0, 1.0, obj, true)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lb: f64, ub: f64, obj: f64) -> VarId {
        self.push_var(name.into(), lb, ub, obj, true)
    }

    fn push_var(&mut self, name: String, lb: f64, ub: f64, obj: f64, integer: bool) -> VarId {
        let id = VarId(self.vars.len());
        let prev = self.var_names.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable name {name}");
        self.vars.push(Var {
            name,
            lb,
            ub,
            obj,
            integer,
        });
        id
    }

    /// Adds a row; repeated variables in `coefs` are merged.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let name = name.into();
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, c) in coefs {
            assert!(v.0 < self.vars.len(), "row {name} references undeclared column");
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(e) => e.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        let id = RowId(self.rows.len());
        let prev = self.row_names.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate row name {name}");
        self.rows.push(Row {
            name,
            coefs: merged,
            sense,
            rhs,
        });
        id
    }

    pub fn set_obj(&mut self, v: VarId, c: f64) {
        self.vars[v.0].obj = c;
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn row_id(&self, name: &str) -> Option<RowId> {
        self.row_names.get(name).copied()
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lb - xi).max(xi - v.ub);
        }
        for r in &self.rows {
            let a = r.activity(x);
            let (lo, hi) = r.bounds();
            worst = worst.max(lo - a).max(a - hi);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time or node limit reached with an incumbent whose gap exceeds the target.
    GapLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::GapLimit => "gap limit",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row duals, LPs only.
    pub duals: Option<Vec<f64>>,
    pub mip_gap: Option<f64>,
    row_index: HashMap<String, RowId>,
}

impl Solution {
    pub fn new(p: &Problem, status: Status, objective: f64, primal: Vec<f64>) -> Self {
        Solution {
            status,
            objective,
            primal,
            duals: None,
            mip_gap: None,
            row_index: p.row_names.clone(),
        }
    }

    pub fn infeasible(p: &Problem, status: Status) -> Self {
        Self::new(p, status, f64::NAN, vec![f64::NAN; p.vars.len()])
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn row_dual(&self, r: RowId) -> f64 {
        self.duals.as_ref().map(|d| d[r.0]).unwrap_or(f64::NAN)
    }

    /// Dual of the named row, `None` for MILPs or unknown names.
    pub fn dual(&self, name: &str) -> Option<f64> {
        let r = self.row_index.get(name)?;
        self.duals.as_ref().map(|d| d[r.0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Tolerances and limits shared by all backends.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub primal_feas_tol: f64,
    pub dual_feas_tol: f64,
    pub rel_gap: f64,
    pub integrality_tol: f64,
    /// Wall clock limit for a single MILP, seconds.
    pub milp_time_limit: f64,
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            primal_feas_tol: 1e-8,
            dual_feas_tol: 1e-8,
            rel_gap: 1e-6,
            integrality_tol: 1e-6,
            milp_time_limit: 600.0,
            threads: 1,
        }
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve_lp(&self, p: &Problem, cfg: &SolverConfig) -> Result<Solution>;
    fn solve_milp(&self, p: &Problem, rel_gap: f64, cfg: &SolverConfig) -> Result<Solution>;
}

/// Environment variable that selects the backend (`highs` or `native`).
pub const BACKEND_ENV: &str = "COOPGRID_SOLVER";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Highs,
    Native,
}

impl BackendKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "highs" => Ok(BackendKind::Highs),
            "native" | "simplex" => Ok(BackendKind::Native),
            other => Err(Error::SolverFailure(format!("unknown solver backend {other:?}"))),
        }
    }

    /// Backend named by the environment, else the compiled-in default.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BACKEND_ENV) {
            Ok(s) if !s.is_empty() => Self::parse(&s),
            _ => Ok(Self::default()),
        }
    }
}

impl Default for BackendKind {
    fn default() -> Self {
        if cfg!(feature = "highs") {
            BackendKind::Highs
        } else {
            BackendKind::Native
        }
    }
}

pub fn backend(kind: BackendKind) -> Result<Box<dyn Backend>> {
    match kind {
        #[cfg(feature = "highs")]
        BackendKind::Highs => Ok(Box::new(highs::HighsBackend)),
        #[cfg(not(feature = "highs"))]
        BackendKind::Highs => Err(Error::SolverFailure("built without the `highs` feature".into())),
        BackendKind::Native => Ok(Box::new(native::NativeBackend::default())),
    }
}

/// Solver handle carried through the model layers.
pub struct Solver {
    backend: Box<dyn Backend>,
    pub config: SolverConfig,
}

impl fmt::Debug for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solver")
            .field("backend", &self.backend.name())
            .field("config", &self.config)
            .finish()
    }
}

impl Default for Solver {
    fn default() -> Self {
        Solver::new(BackendKind::default(), SolverConfig::default()).expect("default backend")
    }
}

impl Solver {
    pub fn new(kind: BackendKind, config: SolverConfig) -> Result<Self> {
        Ok(Solver {
            backend: backend(kind)?,
            config,
        })
    }

    pub fn from_env(config: SolverConfig) -> Result<Self> {
        Self::new(BackendKind::from_env()?, config)
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn solve_lp(&self, p: &Problem) -> Result<Solution> {
        if p.is_mip() {
            return Err(Error::SolverFailure(
                "solve_lp called on a problem with integer columns".into(),
            ));
        }
        self.backend.solve_lp(p, &self.config)
    }

    pub fn solve_milp(&self, p: &Problem, rel_gap: f64) -> Result<Solution> {
        if !(rel_gap >= 0.0) {
            return Err(Error::SolverFailure(format!("invalid relative gap {rel_gap}")));
        }
        if !p.is_mip() {
            return self.backend.solve_lp(p, &self.config);
        }
        let mut sol = self.backend.solve_milp(p, rel_gap, &self.config)?;
        sol.duals = None;
        Ok(sol)
    }
}

/// Free-standing helpers that match the operation names used in the docs.
pub fn solve_lp(solver: &Solver, p: &Problem) -> Result<Solution> {
    solver.solve_lp(p)
}

pub fn solve_milp(solver: &Solver, p: &Problem, rel_gap: f64) -> Result<Solution> {
    solver.solve_milp(p, rel_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_merge_repeated_columns() {
        let mut p = Problem::default();
        let x = p.add_var("x", 0.0, 1.0, 1.0);
        let r = p.add_row("r", [(x, 1.0), (x, 2.0)], Sense::Ge, 1.0);
        assert_eq!(p.rows[r.0].coefs, vec![(x, 3.0)]);
    }

    #[test]
    #[should_panic]
    fn duplicate_row_names_rejected() {
        let mut p = Problem::default();
        let x = p.add_var("x", 0.0, 1.0, 1.0);
        p.add_row("r", [(x, 1.0)], Sense::Ge, 1.0);
        p.add_row("r", [(x, 1.0)], Sense::Ge, 1.0);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!(BackendKind::parse("HiGHS").unwrap(), BackendKind::Highs);
        assert_eq!(BackendKind::parse("native").unwrap(), BackendKind::Native);
        assert!(BackendKind::parse("cplex").is_err());
    }
}
