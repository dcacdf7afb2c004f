//! Sequential clearing of the reserve, day-ahead and balancing floors at a
//! fixed transmission allocation, and the surplus-based split of each
//! floor's cost between areas.

use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CaseData, Coalition, ReserveRequirements};
use crate::solver::{Problem, RowId, Sense, Solution, Solver, Status, VarId};

const INF: f64 = f64::INFINITY;

#[derive(Clone, Debug, Serialize)]
pub struct ReserveSolution {
    pub r_up: Vec<f64>,
    pub r_down: Vec<f64>,
    /// Exchange over each link, positive towards the receiving area.
    pub link_up: Vec<f64>,
    pub link_down: Vec<f64>,
    /// Zonal requirement duals per area.
    pub price_up: Vec<f64>,
    pub price_down: Vec<f64>,
    /// Rent on each link: bound shadow price times the reserved capacity.
    pub link_rent: Vec<f64>,
    pub requirements: ReserveRequirements,
    pub cost: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DayAheadSolution {
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub angle: Vec<f64>,
    pub flow: Vec<f64>,
    /// Nodal prices.
    pub price: Vec<f64>,
    /// Rent per line: flow-limit shadow price times the available capacity.
    pub line_rent: Vec<f64>,
    pub cost: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BalancingSolution {
    pub scenario: usize,
    pub p_up: Vec<f64>,
    pub p_down: Vec<f64>,
    pub shed: Vec<f64>,
    pub spill: Vec<f64>,
    pub flow: Vec<f64>,
    pub angle: Vec<f64>,
    pub price: Vec<f64>,
    pub line_rent: Vec<f64>,
    /// Lines whose flow was held at the day-ahead value.
    pub fixed_lines: Vec<usize>,
    pub cost: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SequentialOutcome {
    pub chi: Vec<f64>,
    pub coalition: Coalition,
    pub reserve: ReserveSolution,
    pub day_ahead: DayAheadSolution,
    pub balancing: Vec<BalancingSolution>,
    pub scenario_costs: Vec<f64>,
    pub expected_cost: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Surplus {
    pub cs: f64,
    pub ps: f64,
    pub cr: f64,
}

impl Surplus {
    pub fn total(&self) -> f64 {
        self.cs + self.ps + self.cr
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AreaCostAllocation {
    /// Per area.
    pub reserve: Vec<Surplus>,
    pub day_ahead: Vec<Surplus>,
    /// Per scenario, per area.
    pub balancing: Vec<Vec<Surplus>>,
    /// `J^s_a`, per scenario then area.
    pub area_cost: Vec<Vec<f64>>,
    /// Probability-weighted `J^s_a`.
    pub expected_area_cost: Vec<f64>,
    pub degenerate: bool,
}

fn is_degenerate(p: &Problem, sol: &Solution) -> bool {
    let Some(d) = &sol.duals else { return false };
    p.rows
        .iter()
        .enumerate()
        .any(|(i, r)| r.sense != Sense::Eq && (r.activity(&sol.primal) - r.rhs).abs() < 1e-7 && d[i].abs() < 1e-9)
}

fn optimal(sol: Solution, what: &str) -> Result<Solution> {
    match sol.status {
        Status::Optimal => Ok(sol),
        Status::Infeasible => Err(Error::InfeasibleMarket(format!("{what} has no feasible clearing"))),
        other => Err(Error::SolverFailure(format!("{what}: {other}"))),
    }
}

/// Reserve capacity market.
pub fn clear_reserve(
    case: &CaseData,
    chi: &[f64],
    rr: &ReserveRequirements,
    solver: &Solver,
) -> Result<ReserveSolution> {
    case.check_chi(chi)?;
    let mut p = Problem::default();
    let ng = case.generators.len();
    let mut up = Vec::with_capacity(ng);
    let mut dn = Vec::with_capacity(ng);
    for g in &case.generators {
        up.push(p.add_var(format!("r_up[{}]", g.id), 0.0, g.reserve_up, g.reserve_cost_up));
        dn.push(p.add_var(format!("r_dn[{}]", g.id), 0.0, g.reserve_down, g.reserve_cost_down));
    }
    let mut lu = Vec::new();
    let mut ld = Vec::new();
    let mut bounds: Vec<[RowId; 4]> = Vec::new();
    for (e, k) in case.links.iter().enumerate() {
        let cap = chi[e] * k.capacity;
        let u = p.add_var(format!("re_up[{}]", k.id), -INF, INF, 0.0);
        let d = p.add_var(format!("re_dn[{}]", k.id), -INF, INF, 0.0);
        bounds.push([
            p.add_row(format!("re_up_max[{}]", k.id), [(u, 1.0)], Sense::Le, cap),
            p.add_row(format!("re_up_min[{}]", k.id), [(u, 1.0)], Sense::Ge, -cap),
            p.add_row(format!("re_dn_max[{}]", k.id), [(d, 1.0)], Sense::Le, cap),
            p.add_row(format!("re_dn_min[{}]", k.id), [(d, 1.0)], Sense::Ge, -cap),
        ]);
        lu.push(u);
        ld.push(d);
    }
    let mut req_up = Vec::new();
    let mut req_dn = Vec::new();
    for (a, id) in case.areas.iter().enumerate() {
        let mut cu: Vec<(VarId, f64)> = Vec::new();
        let mut cd: Vec<(VarId, f64)> = Vec::new();
        for i in (0..ng).filter(|&i| case.gen_area(i) == a) {
            cu.push((up[i], 1.0));
            cd.push((dn[i], 1.0));
        }
        for (e, k) in case.links.iter().enumerate() {
            let h = k.incidence(a);
            if h != 0.0 {
                cu.push((lu[e], h));
                cd.push((ld[e], h));
            }
        }
        req_up.push(p.add_row(format!("rr_up[{id}]"), cu, Sense::Ge, rr.up[a]));
        req_dn.push(p.add_row(format!("rr_dn[{id}]"), cd, Sense::Ge, rr.down[a]));
    }
    let sol = optimal(solver.solve_lp(&p)?, "reserve market")?;
    let degenerate = is_degenerate(&p, &sol);
    let link_rent = case
        .links
        .iter()
        .enumerate()
        .map(|(e, k)| {
            let b = bounds[e];
            let cap = chi[e] * k.capacity;
            (-sol.row_dual(b[0]) + sol.row_dual(b[1]) - sol.row_dual(b[2]) + sol.row_dual(b[3])) * cap
        })
        .collect();
    Ok(ReserveSolution {
        r_up: up.iter().map(|&v| sol.value(v)).collect(),
        r_down: dn.iter().map(|&v| sol.value(v)).collect(),
        link_up: lu.iter().map(|&v| sol.value(v)).collect(),
        link_down: ld.iter().map(|&v| sol.value(v)).collect(),
        price_up: req_up.iter().map(|&r| sol.row_dual(r)).collect(),
        price_down: req_dn.iter().map(|&r| sol.row_dual(r)).collect(),
        link_rent,
        requirements: rr.clone(),
        cost: sol.objective,
        degenerate,
    })
}

struct Network {
    angle: Vec<VarId>,
    flow: Vec<VarId>,
    fmax: Vec<RowId>,
    fmin: Vec<RowId>,
}

/// Angles, flows, flow definitions and flow limits. `caps[l]` is the
/// symmetric limit of line `l`.
fn add_network(p: &mut Problem, case: &CaseData, caps: &[f64], tag: &str) -> Network {
    let angle: Vec<VarId> = case
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| {
            let (lo, hi) = if n == 0 { (0.0, 0.0) } else { (-INF, INF) };
            p.add_var(format!("{tag}delta[{}]", node.id), lo, hi, 0.0)
        })
        .collect();
    let mut flow = Vec::new();
    let mut fmax = Vec::new();
    let mut fmin = Vec::new();
    for (l, line) in case.lines.iter().enumerate() {
        let f = p.add_var(format!("{tag}f[{}]", line.id), -INF, INF, 0.0);
        let b = line.susceptance;
        p.add_row(
            format!("{tag}fdef[{}]", line.id),
            [(f, 1.0), (angle[line.from], -b), (angle[line.to], b)],
            Sense::Eq,
            0.0,
        );
        fmax.push(p.add_row(format!("{tag}fmax[{}]", line.id), [(f, 1.0)], Sense::Le, caps[l]));
        fmin.push(p.add_row(format!("{tag}fmin[{}]", line.id), [(f, 1.0)], Sense::Ge, -caps[l]));
        flow.push(f);
    }
    Network {
        angle,
        flow,
        fmax,
        fmin,
    }
}

fn line_rents(sol: &Solution, net: &Network, caps: &[f64]) -> Vec<f64> {
    caps.iter()
        .enumerate()
        .map(|(l, &c)| (-sol.row_dual(net.fmax[l]) + sol.row_dual(net.fmin[l])) * c)
        .collect()
}

/// Day-ahead energy market with DC network constraints.
pub fn clear_day_ahead(
    case: &CaseData,
    chi: &[f64],
    reserve: &ReserveSolution,
    solver: &Solver,
) -> Result<DayAheadSolution> {
    case.check_chi(chi)?;
    let mut p = Problem::default();
    let mut pv = Vec::new();
    for (i, g) in case.generators.iter().enumerate() {
        let lo = reserve.r_down[i];
        let hi = g.capacity - reserve.r_up[i];
        if lo > hi + 1e-9 {
            return Err(Error::InfeasibleMarket(format!(
                "unit {} reserves exceed its capacity",
                g.id
            )));
        }
        pv.push(p.add_var(format!("p[{}]", g.id), lo, hi.max(lo), g.cost));
    }
    let wv: Vec<VarId> = case
        .wind_farms
        .iter()
        .map(|w| p.add_var(format!("w[{}]", w.id), 0.0, w.expected, 0.0))
        .collect();
    let caps: Vec<f64> = (0..case.lines.len())
        .map(|l| (1.0 - case.line_chi(chi, l)) * case.lines[l].capacity)
        .collect();
    let net = add_network(&mut p, case, &caps, "");
    let mut bal = Vec::new();
    for (n, node) in case.nodes.iter().enumerate() {
        let mut c: Vec<(VarId, f64)> = Vec::new();
        for (i, g) in case.generators.iter().enumerate() {
            if g.node == n {
                c.push((pv[i], 1.0));
            }
        }
        for (j, w) in case.wind_farms.iter().enumerate() {
            if w.node == n {
                c.push((wv[j], 1.0));
            }
        }
        for (l, line) in case.lines.iter().enumerate() {
            if line.from == n {
                c.push((net.flow[l], -1.0));
            }
            if line.to == n {
                c.push((net.flow[l], 1.0));
            }
        }
        bal.push(p.add_row(format!("bal[{}]", node.id), c, Sense::Eq, node.demand));
    }
    let sol = optimal(solver.solve_lp(&p)?, "day-ahead market")?;
    let degenerate = is_degenerate(&p, &sol);
    Ok(DayAheadSolution {
        p: pv.iter().map(|&v| sol.value(v)).collect(),
        w: wv.iter().map(|&v| sol.value(v)).collect(),
        angle: net.angle.iter().map(|&v| sol.value(v)).collect(),
        flow: net.flow.iter().map(|&v| sol.value(v)).collect(),
        price: bal.iter().map(|&r| sol.row_dual(r)).collect(),
        line_rent: line_rents(&sol, &net, &caps),
        cost: sol.objective,
        degenerate,
    })
}

/// Tie-lines whose balancing flow stays at the day-ahead value: members of
/// links with `chi_e = 0` that touch an area outside the coalition.
pub fn fixed_flow_lines(case: &CaseData, chi: &[f64], coalition: Coalition) -> Vec<usize> {
    let mut out = Vec::new();
    for (e, k) in case.links.iter().enumerate() {
        let inside = coalition.contains(k.sending) && coalition.contains(k.receiving);
        if chi[e] == 0.0 && !inside {
            out.extend(k.lines.iter().copied());
        }
    }
    out.sort_unstable();
    out
}

/// Balancing market of one scenario.
pub fn clear_balancing(
    case: &CaseData,
    chi: &[f64],
    reserve: &ReserveSolution,
    day_ahead: &DayAheadSolution,
    scenario: usize,
    coalition: Coalition,
    solver: &Solver,
) -> Result<BalancingSolution> {
    case.check_chi(chi)?;
    if scenario >= case.scenarios.len() {
        return Err(Error::validation("scenario", format!("index {scenario} out of range")));
    }
    let mut p = Problem::default();
    let mut up = Vec::new();
    let mut dn = Vec::new();
    for (i, g) in case.generators.iter().enumerate() {
        up.push(p.add_var(format!("p_up[{}]", g.id), 0.0, reserve.r_up[i], g.cost));
        dn.push(p.add_var(format!("p_dn[{}]", g.id), 0.0, reserve.r_down[i], -g.cost));
    }
    let shed: Vec<VarId> = case
        .nodes
        .iter()
        .map(|n| p.add_var(format!("shed[{}]", n.id), 0.0, n.demand, case.shed_cost))
        .collect();
    let spill: Vec<VarId> = case
        .wind_farms
        .iter()
        .map(|w| p.add_var(format!("spill[{}]", w.id), 0.0, w.production[scenario], 0.0))
        .collect();
    let caps: Vec<f64> = case.lines.iter().map(|l| l.capacity).collect();
    let net = add_network(&mut p, case, &caps, "");
    let fixed = fixed_flow_lines(case, chi, coalition);
    for &l in &fixed {
        p.add_row(
            format!("fix[{}]", case.lines[l].id),
            [(net.flow[l], 1.0)],
            Sense::Eq,
            day_ahead.flow[l],
        );
    }
    let mut bal = Vec::new();
    for (n, node) in case.nodes.iter().enumerate() {
        let mut c: Vec<(VarId, f64)> = vec![(shed[n], 1.0)];
        let mut rhs = 0.0;
        for (i, g) in case.generators.iter().enumerate() {
            if g.node == n {
                c.push((up[i], 1.0));
                c.push((dn[i], -1.0));
            }
        }
        for (j, w) in case.wind_farms.iter().enumerate() {
            if w.node == n {
                c.push((spill[j], -1.0));
                rhs -= w.production[scenario] - day_ahead.w[j];
            }
        }
        for (l, line) in case.lines.iter().enumerate() {
            if line.from == n {
                c.push((net.flow[l], -1.0));
                rhs -= day_ahead.flow[l];
            }
            if line.to == n {
                c.push((net.flow[l], 1.0));
                rhs += day_ahead.flow[l];
            }
        }
        bal.push(p.add_row(format!("bal[{}]", node.id), c, Sense::Eq, rhs));
    }
    let sol = solver.solve_lp(&p)?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "balancing market of scenario {} reported {}; shedding and spillage should make it feasible",
            case.scenarios[scenario].id, sol.status
        )));
    }
    let degenerate = is_degenerate(&p, &sol);
    let price: Vec<f64> = bal.iter().map(|&r| sol.row_dual(r)).collect();
    // Limit shadow prices times the headroom left by the day-ahead schedule;
    // that schedule was already settled in its own floor.
    let line_rent = caps
        .iter()
        .enumerate()
        .map(|(l, &t)| {
            let f0 = day_ahead.flow[l];
            -sol.row_dual(net.fmax[l]) * (t - f0) + sol.row_dual(net.fmin[l]) * (t + f0)
        })
        .collect();
    Ok(BalancingSolution {
        scenario,
        p_up: up.iter().map(|&v| sol.value(v)).collect(),
        p_down: dn.iter().map(|&v| sol.value(v)).collect(),
        shed: shed.iter().map(|&v| sol.value(v)).collect(),
        spill: spill.iter().map(|&v| sol.value(v)).collect(),
        flow: net.flow.iter().map(|&v| sol.value(v)).collect(),
        angle: net.angle.iter().map(|&v| sol.value(v)).collect(),
        price,
        line_rent,
        fixed_lines: fixed,
        cost: sol.objective,
        degenerate,
    })
}

/// Clears the three floors in order at allocation `chi`, with the balancing
/// flow regime of `coalition`.
pub fn run_sequential(
    case: &CaseData,
    chi: &[f64],
    coalition: Coalition,
    solver: &Solver,
) -> Result<SequentialOutcome> {
    let rr = case.reserve_requirements();
    let reserve = clear_reserve(case, chi, &rr, solver)?;
    let day_ahead = clear_day_ahead(case, chi, &reserve, solver)?;
    let balancing = (0..case.scenarios.len())
        .map(|s| clear_balancing(case, chi, &reserve, &day_ahead, s, coalition, solver))
        .collect::<Result<Vec<_>>>()?;
    let scenario_costs: Vec<f64> = balancing
        .iter()
        .map(|b| reserve.cost + day_ahead.cost + b.cost)
        .collect();
    let expected_cost = case
        .probabilities()
        .iter()
        .zip(&scenario_costs)
        .map(|(p, j)| p * j)
        .sum();
    Ok(SequentialOutcome {
        chi: chi.to_vec(),
        coalition,
        reserve,
        day_ahead,
        balancing,
        scenario_costs,
        expected_cost,
    })
}

/// Expected balancing cost of an outcome.
pub fn expected_balancing_cost(case: &CaseData, out: &SequentialOutcome) -> f64 {
    case.probabilities()
        .iter()
        .zip(&out.balancing)
        .map(|(p, b)| p * b.cost)
        .sum()
}

fn split_rent(case: &CaseData, line: usize, rent: f64, into: &mut [Surplus]) {
    let l = &case.lines[line];
    let (a, b) = (case.nodes[l.from].area, case.nodes[l.to].area);
    if a == b {
        into[a].cr += rent;
    } else {
        into[a].cr += rent / 2.0;
        into[b].cr += rent / 2.0;
    }
}

/// Splits each floor's cost into consumer surplus, producer surplus and
/// congestion rent per area. Consumers pay the nodal price on their demand
/// (reserve: the zonal price on the requirement); producers earn price minus
/// offer; rents go to the owning area or half to each end of a tie-line.
/// Shed load is settled on the producer side in the balancing floor, so the
/// balancing consumer surplus is zero.
pub fn decompose_surpluses(case: &CaseData, out: &SequentialOutcome) -> AreaCostAllocation {
    let na = case.n_areas();
    let r = &out.reserve;
    let mut reserve = vec![Surplus::default(); na];
    for a in 0..na {
        reserve[a].cs = -(r.price_up[a] * r.requirements.up[a] + r.price_down[a] * r.requirements.down[a]);
    }
    for (i, g) in case.generators.iter().enumerate() {
        let a = case.gen_area(i);
        reserve[a].ps +=
            (r.price_up[a] - g.reserve_cost_up) * r.r_up[i] + (r.price_down[a] - g.reserve_cost_down) * r.r_down[i];
    }
    for (e, k) in case.links.iter().enumerate() {
        reserve[k.sending].cr += r.link_rent[e] / 2.0;
        reserve[k.receiving].cr += r.link_rent[e] / 2.0;
    }

    let d = &out.day_ahead;
    let mut day_ahead = vec![Surplus::default(); na];
    for (n, node) in case.nodes.iter().enumerate() {
        day_ahead[node.area].cs -= d.price[n] * node.demand;
    }
    for (i, g) in case.generators.iter().enumerate() {
        day_ahead[case.gen_area(i)].ps += (d.price[g.node] - g.cost) * d.p[i];
    }
    for (j, w) in case.wind_farms.iter().enumerate() {
        day_ahead[case.wind_area(j)].ps += d.price[w.node] * d.w[j];
    }
    for (l, &rent) in d.line_rent.iter().enumerate() {
        split_rent(case, l, rent, &mut day_ahead);
    }

    let mut balancing = Vec::new();
    for b in &out.balancing {
        let s = b.scenario;
        let mut floor = vec![Surplus::default(); na];
        for (i, g) in case.generators.iter().enumerate() {
            floor[case.gen_area(i)].ps += (b.price[g.node] - g.cost) * (b.p_up[i] - b.p_down[i]);
        }
        for (j, w) in case.wind_farms.iter().enumerate() {
            floor[case.wind_area(j)].ps += b.price[w.node] * (w.production[s] - d.w[j] - b.spill[j]);
        }
        for (n, node) in case.nodes.iter().enumerate() {
            floor[node.area].ps += (b.price[n] - case.shed_cost) * b.shed[n];
        }
        for (l, &rent) in b.line_rent.iter().enumerate() {
            split_rent(case, l, rent, &mut floor);
        }
        balancing.push(floor);
    }

    let area_cost: Vec<Vec<f64>> = balancing
        .iter()
        .map(|floor| {
            (0..na)
                .map(|a| -(reserve[a].total() + day_ahead[a].total() + floor[a].total()))
                .collect()
        })
        .collect();
    let probs = case.probabilities();
    let expected_area_cost = (0..na)
        .map(|a| probs.iter().zip(&area_cost).map(|(p, j)| p * j[a]).sum())
        .collect();
    let degenerate = r.degenerate || d.degenerate || out.balancing.iter().any(|b| b.degenerate);
    if degenerate {
        warn!("degenerate LP basis in at least one floor; surplus split uses the returned basic duals");
    }
    AreaCostAllocation {
        reserve,
        day_ahead,
        balancing,
        area_cost,
        expected_area_cost,
        degenerate,
    }
}

impl AreaCostAllocation {
    /// Largest per-floor deviation from `sum_a (CS + PS + CR) + cost = 0`.
    pub fn budget_residual(&self, out: &SequentialOutcome) -> f64 {
        let sum = |v: &[Surplus]| v.iter().map(Surplus::total).sum::<f64>();
        let mut worst = (sum(&self.reserve) + out.reserve.cost).abs();
        worst = worst.max((sum(&self.day_ahead) + out.day_ahead.cost).abs());
        for (floor, b) in self.balancing.iter().zip(&out.balancing) {
            worst = worst.max((sum(floor) + b.cost).abs());
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// CSV tables

fn scenario_header(case: &CaseData, first: &str) -> String {
    let mut h = String::from(first);
    for s in &case.scenarios {
        let _ = write!(h, ",{}", s.id);
    }
    h.push_str(",expected\n");
    h
}

/// Stage costs per scenario: reserve, day-ahead, balancing, total.
pub fn cost_table_csv(case: &CaseData, out: &SequentialOutcome) -> String {
    let mut s = scenario_header(case, "quantity");
    let probs = case.probabilities();
    let mut row = |name: &str, vals: Vec<f64>| {
        let e: f64 = probs.iter().zip(&vals).map(|(p, v)| p * v).sum();
        let _ = write!(s, "{name}");
        for v in vals {
            let _ = write!(s, ",{v:.4}");
        }
        let _ = writeln!(s, ",{e:.4}");
    };
    let ns = case.scenarios.len();
    row("reserve_cost", vec![out.reserve.cost; ns]);
    row("day_ahead_cost", vec![out.day_ahead.cost; ns]);
    row("balancing_cost", out.balancing.iter().map(|b| b.cost).collect());
    row("total_cost", out.scenario_costs.clone());
    s
}

/// `J^s_a` per area and scenario.
pub fn area_cost_csv(case: &CaseData, alloc: &AreaCostAllocation) -> String {
    let mut s = scenario_header(case, "area");
    for (a, id) in case.areas.iter().enumerate() {
        let _ = write!(s, "{id}");
        for row in &alloc.area_cost {
            let _ = write!(s, ",{:.4}", row[a]);
        }
        let _ = writeln!(s, ",{:.4}", alloc.expected_area_cost[a]);
    }
    s
}

/// Surplus components per floor, scenario and area.
pub fn surplus_csv(case: &CaseData, alloc: &AreaCostAllocation) -> String {
    let mut s = String::from("floor,scenario,area,cs,ps,cr\n");
    let mut put = |floor: &str, scen: &str, v: &[Surplus]| {
        for (a, id) in case.areas.iter().enumerate() {
            let _ = writeln!(s, "{floor},{scen},{id},{:.4},{:.4},{:.4}", v[a].cs, v[a].ps, v[a].cr);
        }
    };
    put("reserve", "all", &alloc.reserve);
    put("day_ahead", "all", &alloc.day_ahead);
    for (k, floor) in alloc.balancing.iter().enumerate() {
        put("balancing", &case.scenarios[k].id, floor);
    }
    s
}

/// Quantities per unit: reserves, day-ahead schedule and balancing
/// adjustment per scenario (wind: `W - w - spill`), plus shedding per node.
pub fn quantities_csv(case: &CaseData, out: &SequentialOutcome) -> String {
    let mut s = String::from("unit,r_down,r_up,day_ahead");
    for sc in &case.scenarios {
        let _ = write!(s, ",balancing_{}", sc.id);
    }
    s.push('\n');
    for (i, g) in case.generators.iter().enumerate() {
        let _ = write!(
            s,
            "{},{:.4},{:.4},{:.4}",
            g.id, out.reserve.r_down[i], out.reserve.r_up[i], out.day_ahead.p[i]
        );
        for b in &out.balancing {
            let _ = write!(s, ",{:.4}", b.p_up[i] - b.p_down[i]);
        }
        s.push('\n');
    }
    for (j, w) in case.wind_farms.iter().enumerate() {
        let _ = write!(s, "{},0,0,{:.4}", w.id, out.day_ahead.w[j]);
        for b in &out.balancing {
            let _ = write!(s, ",{:.4}", w.production[b.scenario] - out.day_ahead.w[j] - b.spill[j]);
        }
        s.push('\n');
    }
    for (n, node) in case.nodes.iter().enumerate() {
        if out.balancing.iter().any(|b| b.shed[n] > 1e-9) {
            let _ = write!(s, "shed[{}],0,0,0", node.id);
            for b in &out.balancing {
                let _ = write!(s, ",{:.4}", b.shed[n]);
            }
            s.push('\n');
        }
    }
    s
}
