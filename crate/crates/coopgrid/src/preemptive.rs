//! The coalition-dependent preemptive allocation model: the upper level picks
//! the shares `chi` on links inside the coalition and carries the balancing
//! floor of every scenario; the reserve and day-ahead markets sit in the
//! lower level and are replaced by their KKT conditions with big-M
//! complementarity. The same construction, with area selection binaries,
//! gives the separation problem used by constraint generation.

use std::path::PathBuf;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markets::{self, DayAheadSolution, ReserveSolution, SequentialOutcome};
use crate::model::{CaseData, Coalition};
use crate::solver::{write_lp, Problem, Sense, Solution, Solver, Status, VarId};

const INF: f64 = f64::INFINITY;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PreemptiveConfig {
    /// Scalar bound on every lower-level dual. Derived from the offer
    /// prices when absent.
    pub big_m: Option<f64>,
    /// Multiplier on the largest offer price for the derived dual bound.
    pub dual_bound_factor: f64,
    /// Tolerance on normalised complementarity products.
    pub comp_tol: f64,
    pub rel_gap: f64,
    /// Times the dual bound is multiplied by ten after a binding pair.
    pub max_retries: usize,
    /// Write every MILP built to this path in LP format.
    pub dump_lp: Option<PathBuf>,
}

impl Default for PreemptiveConfig {
    fn default() -> Self {
        PreemptiveConfig {
            big_m: None,
            dual_bound_factor: 30.0,
            comp_tol: 1e-6,
            rel_gap: 1e-6,
            max_retries: 2,
            dump_lp: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Generic KKT emission for a parametric LP `min c'x s.t. A x (>=|=) b + D y`

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Ge,
    Eq,
}

/// One lower-level row. Its right-hand side is `rhs + sum(param)` where the
/// parameters are upper-level columns.
#[derive(Clone, Debug)]
pub struct ParamRow {
    pub name: String,
    pub coefs: Vec<(VarId, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
    pub rhs_param: Vec<(VarId, f64)>,
    /// Upper bound on the slack, from the data.
    pub slack_bound: f64,
}

impl ParamRow {
    fn ge(name: String, coefs: Vec<(VarId, f64)>, rhs: f64, rhs_param: Vec<(VarId, f64)>, slack_bound: f64) -> Self {
        ParamRow {
            name,
            coefs,
            kind: RowKind::Ge,
            rhs,
            rhs_param,
            slack_bound,
        }
    }

    fn eq(name: String, coefs: Vec<(VarId, f64)>, rhs: f64) -> Self {
        ParamRow {
            name,
            coefs,
            kind: RowKind::Eq,
            rhs,
            rhs_param: Vec::new(),
            slack_bound: 0.0,
        }
    }

    /// `A_k x - b_k - D_k y`, at a full MILP point.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>()
            - self.rhs
            - self.rhs_param.iter().map(|&(v, d)| d * x[v.0]).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct LowerLevel {
    pub tag: &'static str,
    /// Lower-level columns (free in the MILP) with their cost.
    pub vars: Vec<(VarId, f64)>,
    pub rows: Vec<ParamRow>,
}

#[derive(Clone, Debug)]
pub struct ComplementarityPair {
    pub row: usize,
    pub dual: VarId,
    pub binary: VarId,
    pub slack_bound: f64,
    pub dual_bound: f64,
}

/// Dual columns and complementarity pairs emitted for one lower level.
#[derive(Clone, Debug)]
pub struct KktBlock {
    pub tag: &'static str,
    pub rows: Vec<ParamRow>,
    /// Dual column of each row (nonnegative for `Ge`, free for `Eq`).
    pub duals: Vec<VarId>,
    pub pairs: Vec<ComplementarityPair>,
    pub vars: Vec<(VarId, f64)>,
}

impl KktBlock {
    pub fn dual_of(&self, name: &str) -> Option<VarId> {
        self.rows.iter().position(|r| r.name == name).map(|k| self.duals[k])
    }

    /// Lower-level objective at a MILP point.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Largest `slack * dual` over the pairs, raw and normalised by the bounds.
    pub fn complementarity_residual(&self, x: &[f64]) -> (f64, f64) {
        let mut raw: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for p in &self.pairs {
            let s = self.rows[p.row].slack(x).max(0.0);
            let d = x[p.dual.0].max(0.0);
            raw = raw.max(s * d);
            norm = norm.max((s / p.slack_bound.max(1e-9)) * (d / p.dual_bound));
        }
        (raw, norm)
    }

    /// Pairs whose dual sits at the big-M bound.
    pub fn binding_pairs(&self, x: &[f64]) -> usize {
        self.pairs
            .iter()
            .filter(|p| x[p.dual.0] >= p.dual_bound * (1.0 - 1e-6))
            .count()
            + self
                .rows
                .iter()
                .zip(&self.duals)
                .filter(|(r, _)| r.kind == RowKind::Eq)
                .filter(|(_, &d)| {
                    let b = self.pairs.first().map_or(INF, |p| p.dual_bound);
                    x[d.0].abs() >= b * (1.0 - 1e-6)
                })
                .count()
    }

    /// Max violation of stationarity `c - A'u = 0` at a MILP point.
    pub fn stationarity_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &(v, c) in &self.vars {
            let mut s = c;
            for (k, r) in self.rows.iter().enumerate() {
                for &(w, a) in &r.coefs {
                    if w == v {
                        s -= a * x[self.duals[k].0];
                    }
                }
            }
            worst = worst.max(s.abs());
        }
        worst
    }
}

/// Adds primal feasibility, dual feasibility, stationarity and big-M
/// complementarity rows of `ll` to `p`.
pub fn emit_kkt(p: &mut Problem, ll: LowerLevel, dual_bound: f64) -> KktBlock {
    let tag = ll.tag;
    let mut duals = Vec::with_capacity(ll.rows.len());
    let mut pairs = Vec::new();
    for (k, r) in ll.rows.iter().enumerate() {
        let mut coefs = r.coefs.clone();
        coefs.extend(r.rhs_param.iter().map(|&(v, d)| (v, -d)));
        match r.kind {
            RowKind::Eq => {
                let d = p.add_var(format!("{tag}:dual:{}", r.name), -dual_bound, dual_bound, 0.0);
                p.add_row(format!("{tag}:pf:{}", r.name), coefs, Sense::Eq, r.rhs);
                duals.push(d);
            }
            RowKind::Ge => {
                let d = p.add_var(format!("{tag}:dual:{}", r.name), 0.0, dual_bound, 0.0);
                let u = p.add_binary(format!("{tag}:u:{}", r.name), 0.0);
                p.add_row(format!("{tag}:pf:{}", r.name), coefs.clone(), Sense::Ge, r.rhs);
                // slack <= S (1 - u)
                let s = r.slack_bound.max(1e-6);
                let mut c2 = coefs;
                c2.push((u, s));
                p.add_row(format!("{tag}:cs_slack:{}", r.name), c2, Sense::Le, r.rhs + s);
                // dual <= M u
                p.add_row(
                    format!("{tag}:cs_dual:{}", r.name),
                    [(d, 1.0), (u, -dual_bound)],
                    Sense::Le,
                    0.0,
                );
                duals.push(d);
                pairs.push(ComplementarityPair {
                    row: k,
                    dual: d,
                    binary: u,
                    slack_bound: s,
                    dual_bound,
                });
            }
        }
    }
    for &(v, c) in &ll.vars {
        let mut coefs = Vec::new();
        for (k, r) in ll.rows.iter().enumerate() {
            for &(w, a) in &r.coefs {
                if w == v {
                    coefs.push((duals[k], -a));
                }
            }
        }
        let name = p.vars[v.0].name.clone();
        p.add_row(format!("{tag}:stat:{name}"), coefs, Sense::Eq, -c);
    }
    KktBlock {
        tag,
        rows: ll.rows,
        duals,
        pairs,
        vars: ll.vars,
    }
}

// ---------------------------------------------------------------------------
// Market-specific lower levels

#[derive(Clone, Debug)]
pub struct ReserveVars {
    /// `None` for units that offer no reserve in that direction.
    pub r_up: Vec<Option<VarId>>,
    pub r_down: Vec<Option<VarId>>,
    pub link_up: Vec<VarId>,
    pub link_down: Vec<VarId>,
}

#[derive(Clone, Debug)]
pub struct DayAheadVars {
    pub p: Vec<VarId>,
    pub w: Vec<VarId>,
    pub angle: Vec<VarId>,
    pub flow: Vec<VarId>,
}

/// KKT system of the reserve market, with `chi` given as MILP columns.
pub fn emit_kkt_reserve(p: &mut Problem, case: &CaseData, chi: &[VarId], dual_bound: f64) -> (ReserveVars, KktBlock) {
    let rr = case.reserve_requirements();
    let mut vars = Vec::new();
    let mut rows = Vec::new();
    let mut r_up = Vec::new();
    let mut r_down = Vec::new();
    for g in &case.generators {
        for (dir, cap, cost, store) in [
            ("up", g.reserve_up, g.reserve_cost_up, &mut r_up),
            ("dn", g.reserve_down, g.reserve_cost_down, &mut r_down),
        ] {
            if cap <= 0.0 {
                store.push(None);
                continue;
            }
            let v = p.add_var(format!("R:r_{dir}[{}]", g.id), -INF, INF, cost);
            vars.push((v, cost));
            rows.push(ParamRow::ge(
                format!("r_{dir}_lo[{}]", g.id),
                vec![(v, 1.0)],
                0.0,
                vec![],
                cap,
            ));
            rows.push(ParamRow::ge(
                format!("r_{dir}_hi[{}]", g.id),
                vec![(v, -1.0)],
                -cap,
                vec![],
                cap,
            ));
            store.push(Some(v));
        }
    }
    let mut link_up = Vec::new();
    let mut link_down = Vec::new();
    for (e, k) in case.links.iter().enumerate() {
        for (dir, store) in [("up", &mut link_up), ("dn", &mut link_down)] {
            let v = p.add_var(format!("R:re_{dir}[{}]", k.id), -INF, INF, 0.0);
            vars.push((v, 0.0));
            let t = k.capacity;
            rows.push(ParamRow::ge(
                format!("re_{dir}_lo[{}]", k.id),
                vec![(v, 1.0)],
                0.0,
                vec![(chi[e], -t)],
                2.0 * t,
            ));
            rows.push(ParamRow::ge(
                format!("re_{dir}_hi[{}]", k.id),
                vec![(v, -1.0)],
                0.0,
                vec![(chi[e], -t)],
                2.0 * t,
            ));
            store.push(v);
        }
    }
    for (a, id) in case.areas.iter().enumerate() {
        for (dir, store, req) in [("up", &r_up, rr.up[a]), ("dn", &r_down, rr.down[a])] {
            let mut coefs = Vec::new();
            let mut smax = 0.0;
            for (i, g) in case.generators.iter().enumerate() {
                if case.gen_area(i) == a {
                    if let Some(v) = store[i] {
                        coefs.push((v, 1.0));
                        smax += if dir == "up" { g.reserve_up } else { g.reserve_down };
                    }
                }
            }
            let links = if dir == "up" { &link_up } else { &link_down };
            for (e, k) in case.links.iter().enumerate() {
                let h = k.incidence(a);
                if h != 0.0 {
                    coefs.push((links[e], h));
                    smax += k.capacity;
                }
            }
            rows.push(ParamRow::ge(
                format!("rr_{dir}[{id}]"),
                coefs,
                req,
                vec![],
                smax.max(req),
            ));
        }
    }
    let block = emit_kkt(p, LowerLevel { tag: "R", vars, rows }, dual_bound);
    (
        ReserveVars {
            r_up,
            r_down,
            link_up,
            link_down,
        },
        block,
    )
}

/// KKT system of the day-ahead market given reserve columns and `chi`.
pub fn emit_kkt_day_ahead(
    p: &mut Problem,
    case: &CaseData,
    chi: &[VarId],
    reserve: &ReserveVars,
    dual_bound: f64,
) -> (DayAheadVars, KktBlock) {
    let mut vars = Vec::new();
    let mut rows = Vec::new();
    let mut pv = Vec::new();
    for (i, g) in case.generators.iter().enumerate() {
        let v = p.add_var(format!("D:p[{}]", g.id), -INF, INF, g.cost);
        vars.push((v, g.cost));
        let lo_par = reserve.r_down[i].map(|r| vec![(r, 1.0)]).unwrap_or_default();
        let hi_par = reserve.r_up[i].map(|r| vec![(r, 1.0)]).unwrap_or_default();
        rows.push(ParamRow::ge(
            format!("p_lo[{}]", g.id),
            vec![(v, 1.0)],
            0.0,
            lo_par,
            g.capacity,
        ));
        rows.push(ParamRow::ge(
            format!("p_hi[{}]", g.id),
            vec![(v, -1.0)],
            -g.capacity,
            hi_par,
            g.capacity,
        ));
        pv.push(v);
    }
    let mut wv = Vec::new();
    for w in &case.wind_farms {
        let v = p.add_var(format!("D:w[{}]", w.id), -INF, INF, 0.0);
        vars.push((v, 0.0));
        rows.push(ParamRow::ge(
            format!("w_lo[{}]", w.id),
            vec![(v, 1.0)],
            0.0,
            vec![],
            w.expected,
        ));
        rows.push(ParamRow::ge(
            format!("w_hi[{}]", w.id),
            vec![(v, -1.0)],
            -w.expected,
            vec![],
            w.expected,
        ));
        wv.push(v);
    }
    let angle: Vec<VarId> = case
        .nodes
        .iter()
        .map(|n| {
            let v = p.add_var(format!("D:delta[{}]", n.id), -INF, INF, 0.0);
            vars.push((v, 0.0));
            v
        })
        .collect();
    rows.push(ParamRow::eq("ref".into(), vec![(angle[0], 1.0)], 0.0));
    let mut flow = Vec::new();
    for line in &case.lines {
        let f = p.add_var(format!("D:f[{}]", line.id), -INF, INF, 0.0);
        vars.push((f, 0.0));
        let b = line.susceptance;
        rows.push(ParamRow::eq(
            format!("fdef[{}]", line.id),
            vec![(f, 1.0), (angle[line.from], -b), (angle[line.to], b)],
            0.0,
        ));
        let t = line.capacity;
        let par = line.tie_link.map(|e| vec![(chi[e], t)]).unwrap_or_default();
        rows.push(ParamRow::ge(
            format!("f_lo[{}]", line.id),
            vec![(f, 1.0)],
            -t,
            par.clone(),
            2.0 * t,
        ));
        rows.push(ParamRow::ge(
            format!("f_hi[{}]", line.id),
            vec![(f, -1.0)],
            -t,
            par,
            2.0 * t,
        ));
        flow.push(f);
    }
    for (n, node) in case.nodes.iter().enumerate() {
        let mut coefs = Vec::new();
        for (i, g) in case.generators.iter().enumerate() {
            if g.node == n {
                coefs.push((pv[i], 1.0));
            }
        }
        for (j, w) in case.wind_farms.iter().enumerate() {
            if w.node == n {
                coefs.push((wv[j], 1.0));
            }
        }
        for (l, line) in case.lines.iter().enumerate() {
            if line.from == n {
                coefs.push((flow[l], -1.0));
            }
            if line.to == n {
                coefs.push((flow[l], 1.0));
            }
        }
        rows.push(ParamRow::eq(format!("bal[{}]", node.id), coefs, node.demand));
    }
    let block = emit_kkt(p, LowerLevel { tag: "D", vars, rows }, dual_bound);
    (
        DayAheadVars {
            p: pv,
            w: wv,
            angle,
            flow,
        },
        block,
    )
}

/// Which flow-fixing regime the upper level applies.
#[derive(Clone, Debug)]
enum Regime {
    Coalition(Coalition),
    /// Separation: area binaries with activation fees.
    Separation {
        fees: Vec<f64>,
    },
}

struct BalancingVars {
    p_up: Vec<Option<VarId>>,
    p_down: Vec<Option<VarId>>,
    shed: Vec<VarId>,
    spill: Vec<VarId>,
    flow: Vec<VarId>,
}

struct Built {
    problem: Problem,
    chi: Vec<VarId>,
    select: Vec<VarId>,
    reserve: ReserveVars,
    day_ahead: DayAheadVars,
    balancing: Vec<BalancingVars>,
    kkt: [KktBlock; 2],
}

fn default_dual_bound(case: &CaseData, cfg: &PreemptiveConfig) -> f64 {
    if let Some(m) = cfg.big_m {
        return m;
    }
    let max_price = case
        .generators
        .iter()
        .flat_map(|g| [g.cost, g.reserve_cost_up, g.reserve_cost_down])
        .fold(1.0, f64::max);
    cfg.dual_bound_factor * max_price
}

fn build(case: &CaseData, regime: &Regime, dual_bound: f64) -> Built {
    let mut p = Problem::default();
    let existing = &case.existing_chi;
    let select: Vec<VarId> = match regime {
        Regime::Separation { fees } => case
            .areas
            .iter()
            .enumerate()
            .map(|(a, id)| p.add_binary(format!("b[{id}]"), fees[a]))
            .collect(),
        Regime::Coalition(_) => Vec::new(),
    };
    let chi: Vec<VarId> = case
        .links
        .iter()
        .enumerate()
        .map(|(e, k)| match regime {
            Regime::Coalition(c) => {
                if c.contains(k.sending) && c.contains(k.receiving) {
                    p.add_var(format!("chi[{}]", k.id), 0.0, 1.0, 0.0)
                } else {
                    p.add_var(format!("chi[{}]", k.id), existing[e], existing[e], 0.0)
                }
            }
            Regime::Separation { .. } => {
                let x = p.add_var(format!("chi[{}]", k.id), 0.0, 1.0, 0.0);
                let ce = existing[e];
                for a in [k.sending, k.receiving] {
                    let b = select[a];
                    // (1 - b) chi_e <= x <= (1 - b) chi_e + b
                    p.add_row(
                        format!("chi_lo[{}|{}]", k.id, case.areas[a]),
                        [(x, 1.0), (b, ce)],
                        Sense::Ge,
                        ce,
                    );
                    p.add_row(
                        format!("chi_hi[{}|{}]", k.id, case.areas[a]),
                        [(x, 1.0), (b, ce - 1.0)],
                        Sense::Le,
                        ce,
                    );
                }
                x
            }
        })
        .collect();
    let (rv, rk) = emit_kkt_reserve(&mut p, case, &chi, dual_bound);
    let (dv, dk) = emit_kkt_day_ahead(&mut p, case, &chi, &rv, dual_bound);

    let probs = case.probabilities();
    let mut balancing = Vec::new();
    for (s, sc) in case.scenarios.iter().enumerate() {
        let pi = probs[s];
        let tag = format!("B{}", sc.id);
        let mut p_up = Vec::new();
        let mut p_down = Vec::new();
        for (i, g) in case.generators.iter().enumerate() {
            p_up.push(rv.r_up[i].map(|r| {
                let v = p.add_var(format!("{tag}:p_up[{}]", g.id), 0.0, INF, pi * g.cost);
                p.add_row(
                    format!("{tag}:p_up_max[{}]", g.id),
                    [(v, 1.0), (r, -1.0)],
                    Sense::Le,
                    0.0,
                );
                v
            }));
            p_down.push(rv.r_down[i].map(|r| {
                let v = p.add_var(format!("{tag}:p_dn[{}]", g.id), 0.0, INF, -pi * g.cost);
                p.add_row(
                    format!("{tag}:p_dn_max[{}]", g.id),
                    [(v, 1.0), (r, -1.0)],
                    Sense::Le,
                    0.0,
                );
                v
            }));
        }
        let shed: Vec<VarId> = case
            .nodes
            .iter()
            .map(|n| p.add_var(format!("{tag}:shed[{}]", n.id), 0.0, n.demand, pi * case.shed_cost))
            .collect();
        let spill: Vec<VarId> = case
            .wind_farms
            .iter()
            .map(|w| p.add_var(format!("{tag}:spill[{}]", w.id), 0.0, w.production[s], 0.0))
            .collect();
        let angle: Vec<VarId> = case
            .nodes
            .iter()
            .enumerate()
            .map(|(n, node)| {
                let (lo, hi) = if n == 0 { (0.0, 0.0) } else { (-INF, INF) };
                p.add_var(format!("{tag}:delta[{}]", node.id), lo, hi, 0.0)
            })
            .collect();
        let mut flow = Vec::new();
        for (l, line) in case.lines.iter().enumerate() {
            let f = p.add_var(format!("{tag}:f[{}]", line.id), -line.capacity, line.capacity, 0.0);
            let b = line.susceptance;
            p.add_row(
                format!("{tag}:fdef[{}]", line.id),
                [(f, 1.0), (angle[line.from], -b), (angle[line.to], b)],
                Sense::Eq,
                0.0,
            );
            if let Some(e) = line.tie_link {
                let k = &case.links[e];
                if existing[e] == 0.0 {
                    match regime {
                        Regime::Coalition(c) => {
                            if !(c.contains(k.sending) && c.contains(k.receiving)) {
                                p.add_row(
                                    format!("{tag}:fix[{}]", line.id),
                                    [(f, 1.0), (dv.flow[l], -1.0)],
                                    Sense::Eq,
                                    0.0,
                                );
                            }
                        }
                        Regime::Separation { .. } => {
                            let m = 2.0 * line.capacity;
                            for a in [k.sending, k.receiving] {
                                let b = select[a];
                                let an = &case.areas[a];
                                p.add_row(
                                    format!("{tag}:dev_hi[{}|{an}]", line.id),
                                    [(f, 1.0), (dv.flow[l], -1.0), (b, -m)],
                                    Sense::Le,
                                    0.0,
                                );
                                p.add_row(
                                    format!("{tag}:dev_lo[{}|{an}]", line.id),
                                    [(f, 1.0), (dv.flow[l], -1.0), (b, m)],
                                    Sense::Ge,
                                    0.0,
                                );
                            }
                        }
                    }
                }
            }
            flow.push(f);
        }
        for (n, node) in case.nodes.iter().enumerate() {
            let mut coefs: Vec<(VarId, f64)> = vec![(shed[n], 1.0)];
            let mut rhs = 0.0;
            for (i, g) in case.generators.iter().enumerate() {
                if g.node == n {
                    if let Some(v) = p_up[i] {
                        coefs.push((v, 1.0));
                    }
                    if let Some(v) = p_down[i] {
                        coefs.push((v, -1.0));
                    }
                }
            }
            for (j, w) in case.wind_farms.iter().enumerate() {
                if w.node == n {
                    coefs.push((spill[j], -1.0));
                    coefs.push((dv.w[j], -1.0));
                    rhs -= w.production[s];
                }
            }
            for (l, line) in case.lines.iter().enumerate() {
                if line.from == n {
                    coefs.push((flow[l], -1.0));
                    coefs.push((dv.flow[l], 1.0));
                }
                if line.to == n {
                    coefs.push((flow[l], 1.0));
                    coefs.push((dv.flow[l], -1.0));
                }
            }
            p.add_row(format!("{tag}:bal[{}]", node.id), coefs, Sense::Eq, rhs);
        }
        balancing.push(BalancingVars {
            p_up,
            p_down,
            shed,
            spill,
            flow,
        });
    }
    Built {
        problem: p,
        chi,
        select,
        reserve: rv,
        day_ahead: dv,
        balancing,
        kkt: [rk, dk],
    }
}

/// Stage quantities recovered from a MILP point (or a sequential run).
#[derive(Clone, Debug, Serialize)]
pub struct EmbeddedStages {
    pub r_up: Vec<f64>,
    pub r_down: Vec<f64>,
    pub link_up: Vec<f64>,
    pub link_down: Vec<f64>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub flow: Vec<f64>,
    pub reserve_cost: f64,
    pub day_ahead_cost: f64,
    pub balancing_cost: Vec<f64>,
    pub p_balancing: Vec<Vec<f64>>,
    pub shed: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    pub balancing_flow: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PreemptiveSolution {
    pub coalition: Coalition,
    pub chi: Vec<f64>,
    /// Expected cost `J(C)`.
    pub expected_cost: f64,
    /// `J^s(C)` from the embedded stage solutions.
    pub scenario_costs: Vec<f64>,
    pub stages: EmbeddedStages,
    pub mip_gap: f64,
    /// Max normalised complementarity product.
    pub complementarity_residual: f64,
    pub dual_bound: f64,
    /// True when no MILP was solved (coalitions of at most one area).
    pub sequential: bool,
}

fn extract(case: &CaseData, b: &Built, x: &[f64]) -> EmbeddedStages {
    let val = |v: &Option<VarId>| v.map_or(0.0, |v| x[v.0]);
    let r_up: Vec<f64> = b.reserve.r_up.iter().map(val).collect();
    let r_down: Vec<f64> = b.reserve.r_down.iter().map(val).collect();
    let p: Vec<f64> = b.day_ahead.p.iter().map(|v| x[v.0]).collect();
    let reserve_cost = b.kkt[0].objective(x);
    let day_ahead_cost = b.kkt[1].objective(x);
    let mut balancing_cost = Vec::new();
    let mut p_balancing = Vec::new();
    let mut shed = Vec::new();
    let mut spill = Vec::new();
    let mut balancing_flow = Vec::new();
    for bv in &b.balancing {
        balancing_flow.push(bv.flow.iter().map(|v| x[v.0]).collect());
        let adj: Vec<f64> = (0..case.generators.len())
            .map(|i| val(&bv.p_up[i]) - val(&bv.p_down[i]))
            .collect();
        let sh: Vec<f64> = bv.shed.iter().map(|v| x[v.0]).collect();
        let cost = case.generators.iter().zip(&adj).map(|(g, a)| g.cost * a).sum::<f64>()
            + case.shed_cost * sh.iter().sum::<f64>();
        balancing_cost.push(cost);
        p_balancing.push(adj);
        shed.push(sh);
        spill.push(bv.spill.iter().map(|v| x[v.0]).collect());
    }
    EmbeddedStages {
        r_up,
        r_down,
        link_up: b.reserve.link_up.iter().map(|v| x[v.0]).collect(),
        link_down: b.reserve.link_down.iter().map(|v| x[v.0]).collect(),
        p,
        w: b.day_ahead.w.iter().map(|v| x[v.0]).collect(),
        flow: b.day_ahead.flow.iter().map(|v| x[v.0]).collect(),
        reserve_cost,
        day_ahead_cost,
        balancing_cost,
        p_balancing,
        shed,
        spill,
        balancing_flow,
    }
}

fn stages_from_sequential(case: &CaseData, out: &SequentialOutcome) -> EmbeddedStages {
    let _ = case;
    EmbeddedStages {
        r_up: out.reserve.r_up.clone(),
        r_down: out.reserve.r_down.clone(),
        link_up: out.reserve.link_up.clone(),
        link_down: out.reserve.link_down.clone(),
        p: out.day_ahead.p.clone(),
        w: out.day_ahead.w.clone(),
        flow: out.day_ahead.flow.clone(),
        reserve_cost: out.reserve.cost,
        day_ahead_cost: out.day_ahead.cost,
        balancing_cost: out.balancing.iter().map(|b| b.cost).collect(),
        p_balancing: out
            .balancing
            .iter()
            .map(|b| b.p_up.iter().zip(&b.p_down).map(|(u, d)| u - d).collect())
            .collect(),
        shed: out.balancing.iter().map(|b| b.shed.clone()).collect(),
        spill: out.balancing.iter().map(|b| b.spill.clone()).collect(),
        balancing_flow: out.balancing.iter().map(|b| b.flow.clone()).collect(),
    }
}

/// Solves a built MILP with dual-bound escalation. Returns the built model
/// that produced the accepted point.
fn solve_with_retries(
    case: &CaseData,
    regime: &Regime,
    cfg: &PreemptiveConfig,
    solver: &Solver,
) -> Result<(Built, Solution, f64)> {
    let mut m = default_dual_bound(case, cfg);
    for attempt in 0..=cfg.max_retries {
        let b = build(case, regime, m);
        if let Some(path) = &cfg.dump_lp {
            std::fs::write(path, write_lp(&b.problem))?;
        }
        let sol = solver.solve_milp(&b.problem, cfg.rel_gap)?;
        match sol.status {
            Status::Optimal | Status::GapLimit => {}
            Status::Infeasible => {
                return Err(Error::InfeasibleMarket("preemptive model has no feasible point".into()));
            }
            Status::Unbounded => return Err(Error::SolverFailure("preemptive model is unbounded".into())),
        }
        if sol.status == Status::GapLimit {
            warn!("preemptive MILP stopped at gap {:?}", sol.mip_gap);
        }
        let binding: usize = b.kkt.iter().map(|k| k.binding_pairs(&sol.primal)).sum();
        if binding == 0 {
            return Ok((b, sol, m));
        }
        debug!("attempt {attempt}: {binding} dual(s) at bound {m}, escalating");
        if attempt == cfg.max_retries {
            return Err(Error::BigMViolation {
                pairs: binding,
                retries: cfg.max_retries,
            });
        }
        m *= 10.0;
    }
    unreachable!()
}

fn finish(
    case: &CaseData,
    coalition: Coalition,
    b: &Built,
    sol: &Solution,
    m: f64,
    cfg: &PreemptiveConfig,
) -> PreemptiveSolution {
    let x = &sol.primal;
    let stages = extract(case, b, x);
    let scenario_costs: Vec<f64> = stages
        .balancing_cost
        .iter()
        .map(|bc| stages.reserve_cost + stages.day_ahead_cost + bc)
        .collect();
    let expected_cost = case
        .probabilities()
        .iter()
        .zip(&scenario_costs)
        .map(|(p, j)| p * j)
        .sum();
    let residual = b
        .kkt
        .iter()
        .map(|k| k.complementarity_residual(x).1)
        .fold(0.0, f64::max);
    if residual > cfg.comp_tol {
        warn!(
            "complementarity residual {residual:e} above tolerance {:e}",
            cfg.comp_tol
        );
    }
    PreemptiveSolution {
        coalition,
        chi: b.chi.iter().map(|v| x[v.0].clamp(0.0, 1.0)).collect(),
        expected_cost,
        scenario_costs,
        stages,
        mip_gap: sol.mip_gap.unwrap_or(0.0),
        complementarity_residual: residual,
        dual_bound: m,
        sequential: false,
    }
}

/// Solves the preemptive model for `coalition`. Coalitions of at most one
/// area cannot coordinate and get the sequential outcome at the existing
/// allocation.
pub fn solve_preemptive(
    case: &CaseData,
    coalition: Coalition,
    cfg: &PreemptiveConfig,
    solver: &Solver,
) -> Result<PreemptiveSolution> {
    if coalition.len() <= 1 {
        let out = markets::run_sequential(case, &case.existing_chi, coalition, solver)?;
        return Ok(PreemptiveSolution {
            coalition,
            chi: case.existing_chi.clone(),
            expected_cost: out.expected_cost,
            scenario_costs: out.scenario_costs.clone(),
            stages: stages_from_sequential(case, &out),
            mip_gap: 0.0,
            complementarity_residual: 0.0,
            dual_bound: 0.0,
            sequential: true,
        });
    }
    solve_preemptive_milp(case, coalition, cfg, solver)
}

/// The MILP route for any coalition, including those of size at most one.
pub fn solve_preemptive_milp(
    case: &CaseData,
    coalition: Coalition,
    cfg: &PreemptiveConfig,
    solver: &Solver,
) -> Result<PreemptiveSolution> {
    let regime = Regime::Coalition(coalition);
    let (b, sol, m) = solve_with_retries(case, &regime, cfg, solver)?;
    Ok(finish(case, coalition, &b, &sol, m, cfg))
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub chi: Vec<f64>,
    pub reserve_embedded: f64,
    pub reserve_resolved: f64,
    pub day_ahead_embedded: f64,
    pub day_ahead_resolved: f64,
}

impl ConsistencyReport {
    pub fn reserve_gap(&self) -> f64 {
        rel_gap(self.reserve_embedded, self.reserve_resolved)
    }

    pub fn day_ahead_gap(&self) -> f64 {
        rel_gap(self.day_ahead_embedded, self.day_ahead_resolved)
    }

    pub fn max_gap(&self) -> f64 {
        self.reserve_gap().max(self.day_ahead_gap())
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Re-clears the reserve and day-ahead LPs at `chi` (the day-ahead with the
/// embedded reserve schedule) and reports both objectives next to the
/// embedded ones.
pub fn consistency_at(
    case: &CaseData,
    sol: &PreemptiveSolution,
    chi: &[f64],
    solver: &Solver,
) -> Result<ConsistencyReport> {
    let rr = case.reserve_requirements();
    let reserve = markets::clear_reserve(case, chi, &rr, solver)?;
    let embedded = ReserveSolution {
        r_up: sol.stages.r_up.clone(),
        r_down: sol.stages.r_down.clone(),
        ..reserve.clone()
    };
    let day_ahead: DayAheadSolution = markets::clear_day_ahead(case, chi, &embedded, solver)?;
    Ok(ConsistencyReport {
        chi: chi.to_vec(),
        reserve_embedded: sol.stages.reserve_cost,
        reserve_resolved: reserve.cost,
        day_ahead_embedded: sol.stages.day_ahead_cost,
        day_ahead_resolved: day_ahead.cost,
    })
}

/// Checks that the embedded lower-level values are optimal for the plain
/// LPs at the returned allocation.
pub fn verify_bilevel_consistency(
    case: &CaseData,
    sol: &PreemptiveSolution,
    solver: &Solver,
) -> Result<ConsistencyReport> {
    let report = consistency_at(case, sol, &sol.chi, solver)?;
    if report.reserve_gap() > 1e-6 {
        return Err(Error::ConsistencyFailure {
            stage: "reserve".into(),
            embedded: report.reserve_embedded,
            resolved: report.reserve_resolved,
        });
    }
    if report.day_ahead_gap() > 1e-6 {
        return Err(Error::ConsistencyFailure {
            stage: "day-ahead".into(),
            embedded: report.day_ahead_embedded,
            resolved: report.day_ahead_resolved,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationSolution {
    pub selected: Vec<bool>,
    pub coalition: Coalition,
    /// `J(C) + sum_{a in C} beta_a` at the optimum.
    pub objective: f64,
    /// Largest stability violation `v(C) - beta(C)`.
    pub violation: f64,
    /// `v(C)` of the returned coalition.
    pub value: f64,
    pub chi: Vec<f64>,
    pub mip_gap: f64,
}

/// Finds the coalition with the largest violation `v(C) - beta(C)` in one
/// MILP, where `v(C) = J(empty) - J(C)`.
pub fn solve_separation(
    case: &CaseData,
    beta: &[f64],
    j_empty: f64,
    cfg: &PreemptiveConfig,
    solver: &Solver,
) -> Result<SeparationSolution> {
    if beta.len() != case.n_areas() {
        return Err(Error::validation("beta", "one value per area expected"));
    }
    if beta.iter().any(|&b| b < -1e-9) {
        return Err(Error::validation("beta", "activation fees must be nonnegative"));
    }
    let regime = Regime::Separation { fees: beta.to_vec() };
    let (b, sol, _) = solve_with_retries(case, &regime, cfg, solver)?;
    let x = &sol.primal;
    let selected: Vec<bool> = b.select.iter().map(|v| x[v.0] > 0.5).collect();
    let coalition = Coalition::from_areas(selected.iter().enumerate().filter(|(_, &s)| s).map(|(a, _)| a));
    let fees: f64 = coalition.members().map(|a| beta[a]).sum();
    let objective = sol.objective;
    let j_c = objective - fees;
    // Coalitions of at most one area have zero value by definition.
    let value = if coalition.len() <= 1 { 0.0 } else { j_empty - j_c };
    Ok(SeparationSolution {
        selected,
        coalition,
        objective,
        violation: value - fees,
        value,
        chi: b.chi.iter().map(|v| x[v.0]).collect(),
        mip_gap: sol.mip_gap.unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{BackendKind, SolverConfig};

    /// One area, one flexible unit, upward requirement 5: r = 5, price 2.
    fn one_unit() -> CaseData {
        CaseData::from_json(
            r#"{
              "areas": ["a"],
              "nodes": [{"id": "n", "area": "a", "demand": 0}],
              "lines": [],
              "generators": [{"id": "g", "node": "n", "cost": 10, "capacity": 20,
                              "reserve_cost_up": 2, "reserve_up": 10, "flexible": true}],
              "scenarios": [{"id": "s", "probability": 1}],
              "shed_cost": 1000,
              "reserve_requirements": {"a": {"up": 5, "down": 0}}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn reserve_kkt_of_single_unit() {
        let case = one_unit();
        let mut p = Problem::default();
        let (rv, block) = emit_kkt_reserve(&mut p, &case, &[], 100.0);
        let solver = Solver::new(BackendKind::Native, SolverConfig::default()).unwrap();
        let sol = solver.solve_milp(&p, 1e-9).unwrap();
        let x = &sol.primal;
        assert!((x[rv.r_up[0].unwrap().0] - 5.0).abs() < 1e-6);
        let mu = block.dual_of("rr_up[a]").unwrap();
        assert!((x[mu.0] - 2.0).abs() < 1e-6);
        assert!(block.stationarity_residual(x) < 1e-9);
    }
}
