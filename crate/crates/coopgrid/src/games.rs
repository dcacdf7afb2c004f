//! Coalitional games over areas: value tables, core diagnostics and the
//! benefit allocation mechanisms (Shapley, prenucleolus, marginal
//! contribution, equal shares, least-core selection by constraint
//! generation, and the scenario-specific split).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::{debug, info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markets;
use crate::model::{CaseData, Coalition};
use crate::preemptive::{self, PreemptiveConfig};
use crate::solver::{qp, Problem, Sense, Solver, Status, VarId};

const INF: f64 = f64::INFINITY;

// ---------------------------------------------------------------------------
// Value tables

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ValueKind {
    Expected,
    Scenario(usize),
}

/// Anything that can answer `v(C)`.
pub trait CoalitionValues {
    fn n_areas(&self) -> usize;
    fn value(&self, c: Coalition) -> Result<f64>;

    fn grand(&self) -> Result<f64> {
        self.value(Coalition::all(self.n_areas()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalitionValueTable {
    pub kind: ValueKind,
    pub areas: Vec<String>,
    values: Vec<Option<f64>>,
}

impl CoalitionValueTable {
    pub fn new(kind: ValueKind, areas: Vec<String>) -> Self {
        assert!(areas.len() < 20, "coalition tables are enumerated in full");
        let size = 1usize << areas.len();
        CoalitionValueTable {
            kind,
            areas,
            values: vec![None; size],
        }
    }

    /// Complete table from a value function. Small coalitions are forced to 0.
    pub fn from_fn(kind: ValueKind, areas: Vec<String>, mut f: impl FnMut(Coalition) -> f64) -> Self {
        let mut t = Self::new(kind, areas);
        for c in Coalition::all_subsets(t.areas.len()) {
            t.values[c.0 as usize] = Some(if c.len() <= 1 { 0.0 } else { f(c) });
        }
        t
    }

    pub fn set(&mut self, c: Coalition, v: f64) {
        self.values[c.0 as usize] = Some(v);
    }

    pub fn get(&self, c: Coalition) -> Option<f64> {
        if c.len() <= 1 {
            return Some(0.0);
        }
        self.values.get(c.0 as usize).copied().flatten()
    }

    pub fn is_complete(&self) -> bool {
        Coalition::all_subsets(self.areas.len()).all(|c| self.get(c).is_some())
    }

    fn require_complete(&self) -> Result<()> {
        if let Some(c) = Coalition::all_subsets(self.areas.len()).find(|&c| self.get(c).is_none()) {
            return Err(Error::IncompleteTable(format!("no value for coalition {:#b}", c.0)));
        }
        Ok(())
    }

    pub fn label(&self, c: Coalition) -> String {
        let ids: Vec<&str> = c.members().map(|a| self.areas[a].as_str()).collect();
        format!("{{{}}}", ids.join(","))
    }

    /// `coalition,value` rows, coalitions in bitmask order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("coalition,size,value\n");
        for c in Coalition::all_subsets(self.areas.len()) {
            if let Some(v) = self.get(c) {
                let _ = writeln!(s, "\"{}\",{},{v:.4}", self.label(c), c.len());
            }
        }
        s
    }
}

impl CoalitionValues for CoalitionValueTable {
    fn n_areas(&self) -> usize {
        self.areas.len()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.get(c)
            .ok_or_else(|| Error::IncompleteTable(format!("no value for coalition {}", self.label(c))))
    }
}

// ---------------------------------------------------------------------------
// Value oracle backed by the market models

/// Costs of one coalition's preemptive optimum.
#[derive(Clone, Debug, Serialize)]
pub struct CoalitionOutcome {
    pub coalition: Coalition,
    pub chi: Vec<f64>,
    pub expected_cost: f64,
    pub scenario_costs: Vec<f64>,
}

/// Computes and caches `J(C)` per coalition. Coalitions of at most one area
/// share the sequential outcome.
pub struct ValueOracle<'a> {
    pub case: &'a CaseData,
    pub solver: &'a Solver,
    pub config: PreemptiveConfig,
    cache: Mutex<HashMap<Coalition, Arc<CoalitionOutcome>>>,
    solves: AtomicUsize,
}

impl<'a> ValueOracle<'a> {
    pub fn new(case: &'a CaseData, solver: &'a Solver, config: PreemptiveConfig) -> Self {
        ValueOracle {
            case,
            solver,
            config,
            cache: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        }
    }

    /// Number of market models solved so far (cache misses).
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn outcome(&self, c: Coalition) -> Result<Arc<CoalitionOutcome>> {
        let key = if c.len() <= 1 { Coalition::EMPTY } else { c };
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let out = if key.is_empty() {
            let seq = markets::run_sequential(self.case, &self.case.existing_chi, key, self.solver)?;
            CoalitionOutcome {
                coalition: key,
                chi: seq.chi,
                expected_cost: seq.expected_cost,
                scenario_costs: seq.scenario_costs,
            }
        } else {
            let sol = preemptive::solve_preemptive(self.case, key, &self.config, self.solver)?;
            debug!("J({}) = {:.4}", key.label(self.case), sol.expected_cost);
            CoalitionOutcome {
                coalition: key,
                chi: sol.chi,
                expected_cost: sol.expected_cost,
                scenario_costs: sol.scenario_costs,
            }
        };
        let out = Arc::new(out);
        self.cache.lock().unwrap().entry(key).or_insert_with(|| out.clone());
        Ok(out)
    }

    pub fn j_empty(&self) -> Result<f64> {
        Ok(self.outcome(Coalition::EMPTY)?.expected_cost)
    }

    /// `J(empty) - J(C)`, zero for coalitions of at most one area.
    pub fn value_expected(&self, c: Coalition) -> Result<f64> {
        if c.len() <= 1 {
            return Ok(0.0);
        }
        Ok(self.j_empty()? - self.outcome(c)?.expected_cost)
    }

    /// `J^s(empty) - J^s(C)`.
    pub fn value_scenario(&self, c: Coalition, s: usize) -> Result<f64> {
        if s >= self.case.scenarios.len() {
            return Err(Error::validation("scenario", format!("index {s} out of range")));
        }
        if c.len() <= 1 {
            return Ok(0.0);
        }
        Ok(self.outcome(Coalition::EMPTY)?.scenario_costs[s] - self.outcome(c)?.scenario_costs[s])
    }

    /// Solves every coalition of two or more areas on `threads` workers.
    pub fn populate(&self, threads: usize) -> Result<()> {
        let n = self.case.n_areas();
        let mut todo: Vec<Coalition> = vec![Coalition::EMPTY];
        todo.extend(Coalition::all_subsets(n).filter(|c| c.len() >= 2));
        let next = AtomicUsize::new(0);
        let first_err: Mutex<Option<Error>> = Mutex::new(None);
        std::thread::scope(|scope| {
            for _ in 0..threads.max(1).min(todo.len()) {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= todo.len() || first_err.lock().unwrap().is_some() {
                        break;
                    }
                    if let Err(e) = self.outcome(todo[k]) {
                        first_err.lock().unwrap().get_or_insert(e);
                    }
                });
            }
        });
        match first_err.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn expected_table(&self, threads: usize) -> Result<CoalitionValueTable> {
        self.populate(threads)?;
        let mut t = CoalitionValueTable::new(ValueKind::Expected, self.case.areas.clone());
        for c in Coalition::all_subsets(self.case.n_areas()) {
            t.set(c, self.value_expected(c)?);
        }
        Ok(t)
    }

    pub fn scenario_table(&self, s: usize, threads: usize) -> Result<CoalitionValueTable> {
        self.populate(threads)?;
        let mut t = CoalitionValueTable::new(ValueKind::Scenario(s), self.case.areas.clone());
        for c in Coalition::all_subsets(self.case.n_areas()) {
            t.set(c, self.value_scenario(c, s)?);
        }
        Ok(t)
    }

    /// Full coalition outcomes, in bitmask order, for reports.
    pub fn outcomes(&self) -> Vec<Arc<CoalitionOutcome>> {
        let mut v: Vec<_> = self.cache.lock().unwrap().values().cloned().collect();
        v.sort_by_key(|o| o.coalition);
        v
    }
}

impl CoalitionValues for ValueOracle<'_> {
    fn n_areas(&self) -> usize {
        self.case.n_areas()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.value_expected(c)
    }
}

// ---------------------------------------------------------------------------
// Allocations

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Shapley,
    Nucleolus,
    MarginalContribution,
    EqualShares,
    LeastCore,
    ScenarioSplit,
}

impl Mechanism {
    pub fn tag(self) -> &'static str {
        match self {
            Mechanism::Shapley => "shapley",
            Mechanism::Nucleolus => "nucleolus",
            Mechanism::MarginalContribution => "marginal",
            Mechanism::EqualShares => "equal",
            Mechanism::LeastCore => "least-core",
            Mechanism::ScenarioSplit => "scenario-split",
        }
    }
}

/// One constraint-generation iteration.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub coalition: Coalition,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenefitAllocation {
    pub mechanism: Mechanism,
    pub beta: Vec<f64>,
    /// Least-core relaxation at the returned point.
    pub epsilon: Option<f64>,
    pub criterion: Option<String>,
    pub iterations: usize,
    pub family: Vec<Coalition>,
    pub log: Vec<IterationRecord>,
}

impl BenefitAllocation {
    fn plain(mechanism: Mechanism, beta: Vec<f64>) -> Self {
        BenefitAllocation {
            mechanism,
            beta,
            epsilon: None,
            criterion: None,
            iterations: 0,
            family: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.beta.iter().sum()
    }
}

fn beta_of(beta: &[f64], c: Coalition) -> f64 {
    c.members().map(|a| beta[a]).sum()
}

/// Excess `v(C) - beta(C)`.
pub fn excess(values: &dyn CoalitionValues, beta: &[f64], c: Coalition) -> Result<f64> {
    Ok(values.value(c)? - beta_of(beta, c))
}

/// Largest excess over all coalitions (the empty one counts, so it is >= 0).
pub fn max_excess(table: &CoalitionValueTable, beta: &[f64]) -> Result<(f64, Coalition)> {
    table.require_complete()?;
    let mut best = (0.0, Coalition::EMPTY);
    for c in Coalition::all_subsets(table.areas.len()) {
        let e = excess(table, beta, c)?;
        if e > best.0 {
            best = (e, c);
        }
    }
    Ok(best)
}

pub fn shapley(table: &CoalitionValueTable) -> Result<BenefitAllocation> {
    table.require_complete()?;
    let n = table.areas.len();
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |f, k| {
            if k > 0 {
                *f *= k as f64;
            }
            Some(*f)
        })
        .collect();
    let mut beta = vec![0.0; n];
    for c in Coalition::all_subsets(n) {
        let s = c.len();
        for (a, b) in beta.iter_mut().enumerate() {
            if c.contains(a) {
                continue;
            }
            let w = fact[s] * fact[n - s - 1] / fact[n];
            *b += w * (table.value(c.with(a))? - table.value(c)?);
        }
    }
    Ok(BenefitAllocation::plain(Mechanism::Shapley, beta))
}

/// `beta_a = v(A) - v(A \ a)`, needing only `|A| + 1` values.
pub fn marginal_contribution(values: &dyn CoalitionValues) -> Result<BenefitAllocation> {
    let n = values.n_areas();
    let all = Coalition::all(n);
    let grand = values.value(all)?;
    let beta = (0..n)
        .map(|a| Ok(grand - values.value(all.without(a))?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BenefitAllocation::plain(Mechanism::MarginalContribution, beta))
}

pub fn equal_shares(values: &dyn CoalitionValues) -> Result<BenefitAllocation> {
    let n = values.n_areas();
    let grand = values.grand()?;
    Ok(BenefitAllocation::plain(
        Mechanism::EqualShares,
        vec![grand / n as f64; n],
    ))
}

fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| m[i][c].abs() > 1e-9) else {
            continue;
        };
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r && m[i][c].abs() > 1e-12 {
                let f = m[i][c] / m[r][c];
                for k in 0..cols {
                    m[i][k] -= f * m[r][k];
                }
            }
        }
        r += 1;
    }
    r
}

fn incidence(c: Coalition, n: usize) -> Vec<f64> {
    (0..n).map(|a| if c.contains(a) { 1.0 } else { 0.0 }).collect()
}

/// Prenucleolus over efficient allocations by a sequence of LPs. After each
/// stage every coalition that is tight on the whole optimal face is fixed.
pub fn nucleolus(table: &CoalitionValueTable, solver: &Solver) -> Result<BenefitAllocation> {
    table.require_complete()?;
    let n = table.areas.len();
    let all = Coalition::all(n);
    let grand = table.value(all)?;
    if n == 1 {
        return Ok(BenefitAllocation::plain(Mechanism::Nucleolus, vec![grand]));
    }
    let scale = Coalition::all_subsets(n)
        .map(|c| table.get(c).unwrap_or(0.0).abs())
        .fold(1.0, f64::max);
    let tol = 1e-7 * scale;
    let mut fixed: Vec<(Coalition, f64)> = Vec::new();
    let mut free: Vec<Coalition> = Coalition::all_subsets(n)
        .filter(|c| !c.is_empty() && *c != all)
        .collect();
    let mut basis = vec![incidence(all, n)];
    let mut beta = vec![grand / n as f64; n];
    let mut stages = 0;

    // Variables: beta (free), t. `t_cap` pins t for the face checks.
    let build = |fixed: &[(Coalition, f64)], free: &[Coalition], t_cap: Option<f64>| {
        let mut p = Problem::default();
        let b: Vec<VarId> = (0..n).map(|a| p.add_var(format!("beta{a}"), -INF, INF, 0.0)).collect();
        let (tlo, thi) = t_cap.map_or((-INF, INF), |t| (-INF, t + 1e-3 * tol));
        let t = p.add_var("t", tlo, thi, if t_cap.is_some() { 0.0 } else { 1.0 });
        p.add_row("eff", b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), Sense::Eq, grand);
        for (k, &(c, e)) in fixed.iter().enumerate() {
            let coefs: Vec<_> = c.members().map(|a| (b[a], 1.0)).collect();
            p.add_row(format!("fix{k}"), coefs, Sense::Eq, table.get(c).unwrap() - e);
        }
        for (k, &c) in free.iter().enumerate() {
            let mut coefs: Vec<_> = c.members().map(|a| (b[a], 1.0)).collect();
            coefs.push((t, 1.0));
            p.add_row(format!("ex{k}"), coefs, Sense::Ge, table.get(c).unwrap());
        }
        (p, b, t)
    };

    while rank(&basis) < n && !free.is_empty() {
        stages += 1;
        let (p, b, t) = build(&fixed, &free, None);
        let sol = solver.solve_lp(&p)?;
        if sol.status != Status::Optimal {
            return Err(Error::DegenerateStage(format!(
                "stage {stages} LP reported {}",
                sol.status
            )));
        }
        let t_star = sol.value(t);
        beta = b.iter().map(|&v| sol.value(v)).collect();
        let mut newly = Vec::new();
        for &c in &free {
            let e = table.get(c).unwrap() - beta_of(&beta, c);
            if e < t_star - tol {
                continue;
            }
            // Can the excess of `c` drop below t* anywhere on the face?
            let (mut q, qb, _) = build(&fixed, &free, Some(t_star));
            for a in c.members() {
                q.set_obj(qb[a], -1.0);
            }
            let s2 = solver.solve_lp(&q)?;
            if s2.status != Status::Optimal {
                return Err(Error::DegenerateStage(format!(
                    "face check at stage {stages} reported {}",
                    s2.status
                )));
            }
            let min_excess = table.get(c).unwrap() + s2.objective;
            if min_excess >= t_star - tol {
                newly.push(c);
            }
        }
        if newly.is_empty() {
            return Err(Error::DegenerateStage(format!(
                "no coalition is tight on the whole optimal face at stage {stages} (t* = {t_star})"
            )));
        }
        for c in newly {
            free.retain(|&x| x != c);
            basis.push(incidence(c, n));
            fixed.push((c, t_star));
        }
    }
    // Unique point: one more LP with everything fixed.
    let (p, b, _) = build(&fixed, &free, None);
    let sol = solver.solve_lp(&p)?;
    if sol.status == Status::Optimal {
        beta = b.iter().map(|&v| sol.value(v)).collect();
    }
    let mut out = BenefitAllocation::plain(Mechanism::Nucleolus, beta);
    out.iterations = stages;
    out.epsilon = fixed.first().map(|f| f.1);
    Ok(out)
}

/// Scales an expected-game allocation to scenario `s`:
/// `beta_a(v^s) = beta_a(v) / v(A) * v^s(A)`.
pub fn scenario_allocation(
    beta: &BenefitAllocation,
    grand_expected: f64,
    grand_scenario: f64,
) -> Result<BenefitAllocation> {
    if grand_expected.abs() < 1e-9 {
        return Err(Error::ZeroGrandValue);
    }
    let total = beta.total();
    if (total - grand_expected).abs() > 1e-6 * grand_expected.abs().max(1.0) {
        return Err(Error::validation(
            "beta",
            format!("allocation sums to {total}, not to the grand value {grand_expected}"),
        ));
    }
    if beta.beta.iter().any(|&b| b < -1e-6) {
        return Err(Error::validation(
            "beta",
            "scenario split needs a nonnegative allocation",
        ));
    }
    let split = beta.beta.iter().map(|b| b / grand_expected * grand_scenario).collect();
    let mut out = BenefitAllocation::plain(Mechanism::ScenarioSplit, split);
    out.criterion = Some(beta.mechanism.tag().to_string());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Least-core selection by constraint generation

#[derive(Clone, Debug, Serialize)]
pub struct Separation {
    pub coalition: Coalition,
    pub value: f64,
    /// `v(C) - beta(C)`.
    pub violation: f64,
}

/// Finds the coalition of largest excess for a candidate allocation.
pub trait Separator {
    fn separate(&self, beta: &[f64]) -> Result<Separation>;
}

/// Enumerates a complete table.
pub struct TableSeparator<'t>(pub &'t CoalitionValueTable);

impl Separator for TableSeparator<'_> {
    fn separate(&self, beta: &[f64]) -> Result<Separation> {
        let (violation, coalition) = max_excess(self.0, beta)?;
        Ok(Separation {
            coalition,
            value: self.0.value(coalition)?,
            violation,
        })
    }
}

/// One separation MILP per call.
pub struct MilpSeparator<'o, 'a> {
    pub oracle: &'o ValueOracle<'a>,
}

impl Separator for MilpSeparator<'_, '_> {
    fn separate(&self, beta: &[f64]) -> Result<Separation> {
        let o = self.oracle;
        let sep = preemptive::solve_separation(o.case, beta, o.j_empty()?, &o.config, o.solver)?;
        Ok(Separation {
            coalition: sep.coalition,
            value: sep.value,
            violation: sep.violation,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyInit {
    Empty,
    /// `{A \ a : a in A}`
    Marginal,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeastCoreConfig {
    /// Stop when `eta <= epsilon + cg_tol`.
    pub cg_tol: f64,
    pub max_iterations: usize,
    pub init: FamilyInit,
    /// Restrict to `beta >= 0`.
    pub nonnegative: bool,
}

impl Default for LeastCoreConfig {
    fn default() -> Self {
        LeastCoreConfig {
            cg_tol: 1e-4,
            max_iterations: 50,
            init: FamilyInit::Empty,
            nonnegative: true,
        }
    }
}

/// Master problem over family `family`: least `epsilon`, then the point
/// closest to `criterion` at that `epsilon`.
pub fn least_core_master(
    values: &dyn CoalitionValues,
    family: &[Coalition],
    criterion: &[f64],
    nonnegative: bool,
    solver: &Solver,
) -> Result<(f64, Vec<f64>)> {
    let n = values.n_areas();
    let grand = values.grand()?;
    let vals: Vec<f64> = family.iter().map(|&c| values.value(c)).collect::<Result<_>>()?;
    let mut p = Problem::default();
    let lb = if nonnegative { 0.0 } else { -INF };
    let b: Vec<VarId> = (0..n).map(|a| p.add_var(format!("beta{a}"), lb, INF, 0.0)).collect();
    let eps = p.add_var("eps", 0.0, INF, 1.0);
    p.add_row("eff", b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), Sense::Eq, grand);
    for (k, (&c, &v)) in family.iter().zip(&vals).enumerate() {
        let mut coefs: Vec<_> = c.members().map(|a| (b[a], 1.0)).collect();
        coefs.push((eps, 1.0));
        p.add_row(format!("c{k}"), coefs, Sense::Ge, v);
    }
    let sol = solver.solve_lp(&p)?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "least-core master reported {}",
            sol.status
        )));
    }
    let epsilon = sol.value(eps).max(0.0);
    let slack = 1e-11 * grand.abs().max(1.0);
    let eq = vec![(vec![1.0; n], grand)];
    let mut ineq: Vec<(Vec<f64>, f64)> = family
        .iter()
        .zip(&vals)
        .map(|(&c, &v)| (incidence(c, n), v - epsilon - slack))
        .collect();
    if nonnegative {
        ineq.extend((0..n).map(|a| {
            let mut e = vec![0.0; n];
            e[a] = 1.0;
            (e, 0.0)
        }));
    }
    let beta = qp::project(criterion, &eq, &ineq)?;
    Ok((epsilon, beta))
}

/// Least-core selecting allocation by constraint generation.
pub fn least_core_select(
    values: &dyn CoalitionValues,
    separator: &dyn Separator,
    criterion: &[f64],
    criterion_tag: &str,
    cfg: &LeastCoreConfig,
    solver: &Solver,
) -> Result<BenefitAllocation> {
    let n = values.n_areas();
    if criterion.len() != n {
        return Err(Error::validation("criterion", format!("expected {n} values")));
    }
    let all = Coalition::all(n);
    let mut family: Vec<Coalition> = match cfg.init {
        FamilyInit::Empty => Vec::new(),
        FamilyInit::Marginal => (0..n).map(|a| all.without(a)).filter(|c| !c.is_empty()).collect(),
    };
    let mut log = Vec::new();
    let mut last_gap = INF;
    for k in 1..=cfg.max_iterations {
        let (epsilon, beta) = least_core_master(values, &family, criterion, cfg.nonnegative, solver)?;
        let sep = separator.separate(&beta)?;
        let eta = sep.violation;
        info!("iteration {k}: epsilon = {epsilon:.4}, eta = {eta:.4}");
        log.push(IterationRecord {
            iteration: k,
            epsilon,
            eta,
            coalition: sep.coalition,
            beta: beta.clone(),
        });
        last_gap = eta - epsilon;
        let repeated = family.contains(&sep.coalition);
        if eta <= epsilon + cfg.cg_tol || repeated {
            if repeated && eta > epsilon + cfg.cg_tol {
                warn!("separation returned a coalition already in the family; stopping at gap {last_gap:e}");
            }
            return Ok(BenefitAllocation {
                mechanism: Mechanism::LeastCore,
                beta,
                epsilon: Some(epsilon),
                criterion: Some(criterion_tag.to_string()),
                iterations: k,
                family,
                log,
            });
        }
        family.push(sep.coalition);
    }
    Err(Error::IterationLimit {
        iterations: cfg.max_iterations,
        gap: last_gap,
    })
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Clone, Debug, Serialize)]
pub struct SupermodularityViolation {
    pub area: usize,
    pub smaller: Coalition,
    pub larger: Coalition,
    /// `v(T + a) - v(T)`
    pub gain_larger: f64,
    /// `v(S + a) - v(S)`
    pub gain_smaller: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Areas with `v(A \ a) = 0`; any one certifies a nonempty core.
    pub veto_areas: Vec<usize>,
    pub core_nonempty_certificate: bool,
    /// Coalitions worth more than the grand coalition; any one certifies an
    /// empty core.
    pub empty_core_certificates: Vec<(Coalition, f64)>,
    pub supermodularity_violations: Vec<SupermodularityViolation>,
    /// Areas with no marginal contribution to the grand coalition.
    pub dummy_areas: Vec<usize>,
    pub max_excess: Option<(f64, Coalition)>,
    pub in_core: Option<bool>,
    /// Dummy areas that receive a positive benefit under the given core
    /// allocation.
    pub dummy_violations: Vec<usize>,
}

pub fn diagnostics(table: &CoalitionValueTable, beta: Option<&[f64]>) -> Result<Diagnostics> {
    table.require_complete()?;
    let n = table.areas.len();
    let all = Coalition::all(n);
    let grand = table.value(all)?;
    let tol = 1e-6 * grand.abs().max(1.0);
    let veto_areas: Vec<usize> = (0..n)
        .filter(|&a| table.value(all.without(a)).unwrap().abs() <= tol)
        .collect();
    let empty_core_certificates = Coalition::all_subsets(n)
        .filter(|&c| c != all)
        .filter_map(|c| {
            let v = table.value(c).unwrap();
            (v > grand + tol).then_some((c, v))
        })
        .collect();
    let mut supermodularity_violations = Vec::new();
    for larger in Coalition::all_subsets(n) {
        for smaller in Coalition::all_subsets(n).filter(|s| s.is_subset_of(larger) && *s != larger) {
            for a in (0..n).filter(|&a| !larger.contains(a)) {
                let gl = table.value(larger.with(a))? - table.value(larger)?;
                let gs = table.value(smaller.with(a))? - table.value(smaller)?;
                if gl < gs - tol {
                    supermodularity_violations.push(SupermodularityViolation {
                        area: a,
                        smaller,
                        larger,
                        gain_larger: gl,
                        gain_smaller: gs,
                    });
                }
            }
        }
    }
    let dummy_areas: Vec<usize> = (0..n)
        .filter(|&a| (grand - table.value(all.without(a)).unwrap()).abs() <= tol)
        .collect();
    let (max_excess, in_core, dummy_violations) = match beta {
        Some(b) => {
            let me = max_excess(table, b)?;
            let efficient = (b.iter().sum::<f64>() - grand).abs() <= tol;
            let core = efficient && me.0 <= tol;
            let dv = if core {
                dummy_areas.iter().copied().filter(|&a| b[a] > tol).collect()
            } else {
                Vec::new()
            };
            (Some(me), Some(core), dv)
        }
        None => (None, None, Vec::new()),
    };
    Ok(Diagnostics {
        core_nonempty_certificate: !veto_areas.is_empty(),
        veto_areas,
        empty_core_certificates,
        supermodularity_violations,
        dummy_areas,
        max_excess,
        in_core,
        dummy_violations,
    })
}

// ---------------------------------------------------------------------------
// Reports

/// Rows are areas, one column per allocation.
pub fn allocation_csv(areas: &[String], allocations: &[BenefitAllocation]) -> String {
    let mut s = String::from("area");
    for al in allocations {
        let _ = write!(s, ",{}", al.mechanism.tag());
    }
    s.push('\n');
    for (a, id) in areas.iter().enumerate() {
        s.push_str(id);
        for al in allocations {
            let _ = write!(s, ",{:.4}", al.beta[a]);
        }
        s.push('\n');
    }
    s.push_str("total");
    for al in allocations {
        let _ = write!(s, ",{:.4}", al.total());
    }
    s.push('\n');
    s
}

/// Long format `mechanism,area,value` for plotting.
pub fn allocation_tidy_csv(areas: &[String], allocations: &[BenefitAllocation]) -> String {
    let mut s = String::from("mechanism,area,value\n");
    for al in allocations {
        for (a, id) in areas.iter().enumerate() {
            let _ = writeln!(s, "{},{id},{:.4}", al.mechanism.tag(), al.beta[a]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{BackendKind, SolverConfig};

    fn solver() -> Solver {
        Solver::new(BackendKind::Native, SolverConfig::default()).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|a| format!("a{a}")).collect()
    }

    #[test]
    fn two_player_split_evenly() {
        let t = CoalitionValueTable::from_fn(ValueKind::Expected, names(2), |_| 10.0);
        assert_eq!(shapley(&t).unwrap().beta, vec![5.0, 5.0]);
        let nu = nucleolus(&t, &solver()).unwrap().beta;
        assert!((nu[0] - 5.0).abs() < 1e-9 && (nu[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn dummy_gets_nothing_under_shapley() {
        // Area 3 adds nothing anywhere.
        let t = CoalitionValueTable::from_fn(ValueKind::Expected, names(3), |c| {
            if c.contains(0) && c.contains(1) {
                6.0
            } else {
                0.0
            }
        });
        let b = shapley(&t).unwrap().beta;
        assert!(b[2].abs() < 1e-12);
        assert!((b[0] - 3.0).abs() < 1e-12);
        let d = diagnostics(&t, Some(&b)).unwrap();
        assert_eq!(d.dummy_areas, vec![2]);
    }

    #[test]
    fn incomplete_table_rejected() {
        let mut t = CoalitionValueTable::new(ValueKind::Expected, names(3));
        t.set(Coalition::all(3), 1.0);
        assert!(matches!(shapley(&t), Err(Error::IncompleteTable(_))));
    }

    #[test]
    fn scenario_split_needs_grand_value() {
        let b = BenefitAllocation::plain(Mechanism::EqualShares, vec![0.0, 0.0]);
        assert!(matches!(scenario_allocation(&b, 0.0, 3.0), Err(Error::ZeroGrandValue)));
    }

    #[test]
    fn ranks() {
        assert_eq!(rank(&[vec![1.0, 1.0], vec![2.0, 2.0]]), 1);
        assert_eq!(rank(&[vec![1.0, 1.0], vec![1.0, 0.0]]), 2);
    }
}
