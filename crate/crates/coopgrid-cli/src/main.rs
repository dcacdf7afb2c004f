use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use coopgrid::games::{
    self, BenefitAllocation, CoalitionValues, FamilyInit, LeastCoreConfig, MilpSeparator, TableSeparator, ValueOracle,
};
use coopgrid::markets;
use coopgrid::model::{load_case, load_case_with_scenarios, CaseData, Coalition};
use coopgrid::preemptive::{self, PreemptiveConfig};
use coopgrid::solver::{BackendKind, Solver, SolverConfig, BACKEND_ENV};
use coopgrid::{fixtures, Error};

/// Sequential market clearing, preemptive tie-line allocation and benefit
/// sharing between control areas.
#[derive(Parser, Debug)]
#[command(name = "coopgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a case file, then print a summary.
    Validate(CaseArgs),
    /// Clear the three floors at a given allocation and split costs by area.
    Clear {
        #[command(flatten)]
        common: Common,
        /// Per-link allocation in link order, e.g. `0,0.0592`. Defaults to the
        /// existing allocation.
        #[arg(long)]
        chi: Option<String>,
        /// Coalition whose internal tie-line flows may be re-dispatched in
        /// balancing: comma-separated area ids, `ALL` or empty.
        #[arg(long, default_value = "")]
        coalition: String,
    },
    /// Solve the preemptive model for one coalition, or sweep one link's allocation.
    Preempt {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ALL")]
        coalition: String,
        /// Sequential cost for a grid of allocations on one link instead.
        #[arg(long)]
        sweep: bool,
        /// Link to sweep (defaults to the first link).
        #[arg(long)]
        link: Option<String>,
        /// Number of grid intervals for `--sweep`.
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Solve every coalition and write the value tables.
    Values {
        #[command(flatten)]
        common: Common,
    },
    /// Compute benefit allocations.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alloc: AllocArgs,
    },
    /// Everything: costs, surpluses, value tables and all allocations.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alloc: AllocArgs,
    },
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// Case JSON file, or the name of a bundled fixture.
    case: String,
    /// Scenario CSV (`scenario,probability,<farm ids>`) overriding the case scenarios.
    #[arg(long)]
    scenarios: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Common {
    #[command(flatten)]
    case: CaseArgs,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Solver backend.
    #[arg(long, env = BACKEND_ENV, default_value = "highs")]
    solver: String,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 1e-6)]
    rel_gap: f64,
    /// MILP time limit in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    /// Scalar bound on lower-level duals (derived from prices when omitted).
    #[arg(long)]
    big_m: Option<f64>,
    /// Tolerance on normalised complementarity products.
    #[arg(long, default_value_t = 1e-6)]
    comp_tol: f64,
    /// Write each preemptive MILP in LP format to this path.
    #[arg(long)]
    lp_dump: Option<PathBuf>,
    /// Worker threads for coalition solves.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Shapley,
    Nucleolus,
    LeastCore,
    Marginal,
    Equal,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SeparatorKind {
    /// One separation MILP per iteration.
    Milp,
    /// Enumerate the full coalition table.
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Init {
    Empty,
    Marginal,
}

#[derive(Args, Debug)]
struct AllocArgs {
    #[arg(long, value_enum, default_value = "all")]
    method: Method,
    /// Criterion for least-core selection: `marginal`, `equal` or a
    /// comma-separated vector in area order.
    #[arg(long, default_value = "marginal")]
    criterion: String,
    /// Also split the expected-game allocations for this scenario id.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum, default_value = "milp")]
    separator: SeparatorKind,
    /// Initial coalition family for constraint generation.
    #[arg(long, value_enum, default_value = "empty")]
    init: Init,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
}

/// An invariant check failed after a successful solve.
#[derive(Debug)]
struct InvariantFailure(String);

impl std::fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant check failed: {}", self.0)
    }
}

impl std::error::Error for InvariantFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Parse(_)) | Some(Error::Validation { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::Clear { common, chi, coalition } => cmd_clear(&common, chi.as_deref(), &coalition),
        Command::Preempt {
            common,
            coalition,
            sweep,
            link,
            steps,
        } => {
            if sweep {
                cmd_sweep(&common, link.as_deref(), steps)
            } else {
                cmd_preempt(&common, &coalition)
            }
        }
        Command::Values { common } => cmd_values(&common),
        Command::Allocate { common, alloc } => cmd_allocate(&common, &alloc),
        Command::Report { common, alloc } => {
            cmd_clear(&common, None, "")?;
            cmd_preempt(&common, "ALL")?;
            cmd_values(&common)?;
            cmd_allocate(&common, &alloc)
        }
    }
}

fn load(args: &CaseArgs) -> Result<CaseData> {
    let path = Path::new(&args.case);
    let case = if !path.exists() && fixtures::source(&args.case).is_some() {
        let mut f = coopgrid::model::CaseFile::from_json(fixtures::source(&args.case).unwrap())?;
        if let Some(csv) = &args.scenarios {
            let text = fs::read_to_string(csv).map_err(|e| Error::Parse(format!("{}: {e}", csv.display())))?;
            f.apply_scenario_csv(&text)?;
        }
        CaseData::from_file(f)?
    } else {
        match &args.scenarios {
            Some(csv) => load_case_with_scenarios(path, csv)?,
            None => load_case(path)?,
        }
    };
    Ok(case)
}

fn solver(common: &Common) -> Result<Solver> {
    let cfg = SolverConfig {
        rel_gap: common.rel_gap,
        milp_time_limit: common.time_limit,
        ..SolverConfig::default()
    };
    Ok(Solver::new(BackendKind::parse(&common.solver)?, cfg)?)
}

fn preemptive_config(common: &Common) -> PreemptiveConfig {
    PreemptiveConfig {
        big_m: common.big_m,
        comp_tol: common.comp_tol,
        rel_gap: common.rel_gap,
        dump_lp: common.lp_dump.clone(),
        ..PreemptiveConfig::default()
    }
}

fn write_out(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    info!("wrote {}", p.display());
    Ok(())
}

fn parse_chi(spec: &str, case: &CaseData) -> Result<Vec<f64>> {
    let chi: Vec<f64> = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::validation("chi", format!("{spec:?}: {e}")))?;
    case.check_chi(&chi)?;
    Ok(chi)
}

fn cmd_validate(args: &CaseArgs) -> Result<()> {
    let case = load(args)?;
    let rr = case.reserve_requirements();
    println!("case {:?}: valid", case.name);
    println!(
        "  {} areas, {} nodes, {} lines, {} links, {} generators, {} wind farms, {} scenarios",
        case.n_areas(),
        case.nodes.len(),
        case.lines.len(),
        case.links.len(),
        case.generators.len(),
        case.wind_farms.len(),
        case.scenarios.len()
    );
    for (a, id) in case.areas.iter().enumerate() {
        println!(
            "  reserve requirement {id}: up {:.2} MW, down {:.2} MW",
            rr.up[a], rr.down[a]
        );
    }
    Ok(())
}

fn cmd_clear(common: &Common, chi: Option<&str>, coalition: &str) -> Result<()> {
    let case = load(&common.case)?;
    let s = solver(common)?;
    let chi = match chi {
        Some(spec) => parse_chi(spec, &case)?,
        None => case.existing_chi.clone(),
    };
    let coalition = Coalition::parse(coalition, &case)?;
    let out = markets::run_sequential(&case, &chi, coalition, &s)?;
    let alloc = markets::decompose_surpluses(&case, &out);
    let costs = markets::cost_table_csv(&case, &out);
    write_out(&common.out, "costs.csv", &costs)?;
    write_out(&common.out, "area_costs.csv", &markets::area_cost_csv(&case, &alloc))?;
    write_out(&common.out, "surplus.csv", &markets::surplus_csv(&case, &alloc))?;
    write_out(&common.out, "quantities.csv", &markets::quantities_csv(&case, &out))?;
    print!("{costs}");
    println!("expected cost J = {:.4}", out.expected_cost);
    let residual = alloc.budget_residual(&out);
    if residual > 1e-6 {
        return Err(InvariantFailure(format!("surplus budget residual {residual:e}")).into());
    }
    Ok(())
}

fn cmd_preempt(common: &Common, coalition: &str) -> Result<()> {
    let case = load(&common.case)?;
    let s = solver(common)?;
    let coalition = Coalition::parse(coalition, &case)?;
    let sol = preemptive::solve_preemptive(&case, coalition, &preemptive_config(common), &s)?;
    let report = preemptive::verify_bilevel_consistency(&case, &sol, &s)?;
    let mut txt = String::from("link,chi\n");
    for (k, c) in case.links.iter().zip(&sol.chi) {
        let _ = writeln!(txt, "{},{c:.6}", k.id);
    }
    write_out(&common.out, "preempt_chi.csv", &txt)?;
    write_out(&common.out, "preempt.json", &serde_json::to_string_pretty(&sol)?)?;
    println!("coalition {}: J = {:.4}", coalition.label(&case), sol.expected_cost);
    print!("{txt}");
    println!(
        "stage costs: reserve {:.4}, day-ahead {:.4}, balancing {:?}",
        sol.stages.reserve_cost,
        sol.stages.day_ahead_cost,
        sol.stages
            .balancing_cost
            .iter()
            .map(|b| (b * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    println!("consistency gap {:.2e}, MIP gap {:.2e}", report.max_gap(), sol.mip_gap);
    if sol.complementarity_residual > common.comp_tol {
        return Err(InvariantFailure(format!("complementarity residual {:e}", sol.complementarity_residual)).into());
    }
    Ok(())
}

fn cmd_sweep(common: &Common, link: Option<&str>, steps: usize) -> Result<()> {
    let case = load(&common.case)?;
    let s = solver(common)?;
    if case.links.is_empty() {
        bail!("case has no inter-area links to sweep");
    }
    let e = match link {
        Some(id) => case
            .link_index(id)
            .ok_or_else(|| Error::validation("link", format!("unknown link {id:?}")))?,
        None => 0,
    };
    let steps = steps.max(1);
    let mut txt = String::from("chi,reserve,day_ahead,expected_balancing,expected_cost\n");
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let x = k as f64 / steps as f64;
        let mut chi = case.existing_chi.clone();
        chi[e] = x;
        let out = match markets::run_sequential(&case, &chi, Coalition::EMPTY, &s) {
            Ok(o) => o,
            Err(Error::InfeasibleMarket(m)) => {
                log::warn!("chi = {x}: {m}");
                continue;
            }
            Err(err) => return Err(err.into()),
        };
        let bal = markets::expected_balancing_cost(&case, &out);
        let _ = writeln!(
            txt,
            "{x:.4},{:.4},{:.4},{bal:.4},{:.4}",
            out.reserve.cost, out.day_ahead.cost, out.expected_cost
        );
        if out.expected_cost < best.0 {
            best = (out.expected_cost, x);
        }
    }
    write_out(&common.out, "sweep.csv", &txt)?;
    print!("{txt}");
    println!(
        "lowest cost {:.4} at chi = {:.4} on link {}",
        best.0, best.1, case.links[e].id
    );
    Ok(())
}

fn value_tables(case: &CaseData, oracle: &ValueOracle, threads: usize) -> Result<String> {
    let expected = oracle.expected_table(threads)?;
    let scen: Vec<_> = (0..case.scenarios.len())
        .map(|s| oracle.scenario_table(s, threads))
        .collect::<coopgrid::Result<_>>()?;
    let mut txt = String::from("coalition,size,expected_cost,expected_value");
    for s in &case.scenarios {
        let _ = write!(txt, ",value_{}", s.id);
    }
    for k in &case.links {
        let _ = write!(txt, ",chi_{}", k.id);
    }
    txt.push('\n');
    for c in Coalition::all_subsets(case.n_areas()).filter(|c| !c.is_empty()) {
        let o = oracle.outcome(c)?;
        let _ = write!(
            txt,
            "\"{}\",{},{:.4},{:.4}",
            c.label(case),
            c.len(),
            o.expected_cost,
            expected.value(c)?
        );
        for t in &scen {
            let _ = write!(txt, ",{:.4}", t.value(c)?);
        }
        for x in &o.chi {
            let _ = write!(txt, ",{x:.6}");
        }
        txt.push('\n');
    }
    Ok(txt)
}

fn cmd_values(common: &Common) -> Result<()> {
    let case = load(&common.case)?;
    let s = solver(common)?;
    let oracle = ValueOracle::new(&case, &s, preemptive_config(common));
    let txt = value_tables(&case, &oracle, common.threads)?;
    write_out(&common.out, "values.csv", &txt)?;
    print!("{txt}");
    let table = oracle.expected_table(common.threads)?;
    let diag = games::diagnostics(&table, None)?;
    write_out(&common.out, "diagnostics.json", &serde_json::to_string_pretty(&diag)?)?;
    Ok(())
}

fn criterion(spec: &str, values: &dyn CoalitionValues) -> Result<(Vec<f64>, String)> {
    Ok(match spec.trim() {
        "marginal" => (games::marginal_contribution(values)?.beta, "marginal".into()),
        "equal" => (games::equal_shares(values)?.beta, "equal".into()),
        other => {
            let v: Vec<f64> = other
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::validation("criterion", format!("{other:?}: {e}")))?;
            if v.len() != values.n_areas() {
                return Err(Error::validation("criterion", format!("expected {} values", values.n_areas())).into());
            }
            (v, "custom".into())
        }
    })
}

fn cmd_allocate(common: &Common, args: &AllocArgs) -> Result<()> {
    let case = load(&common.case)?;
    let s = solver(common)?;
    let oracle = ValueOracle::new(&case, &s, preemptive_config(common));
    let scenario = match &args.scenario {
        Some(id) => Some(
            case.scenario_index(id)
                .ok_or_else(|| Error::validation("scenario", format!("unknown scenario {id:?}")))?,
        ),
        None => None,
    };
    let want = |m: Method| args.method == m || args.method == Method::All;
    // Only the table-based mechanisms need every coalition solved.
    let needs_table = want(Method::Shapley) || want(Method::Nucleolus) || args.separator == SeparatorKind::Table;
    let table = if needs_table {
        Some(oracle.expected_table(common.threads)?)
    } else {
        None
    };

    let mut allocations: Vec<BenefitAllocation> = Vec::new();
    if want(Method::Marginal) {
        allocations.push(games::marginal_contribution(&oracle)?);
    }
    if want(Method::Equal) {
        allocations.push(games::equal_shares(&oracle)?);
    }
    if want(Method::Shapley) {
        allocations.push(games::shapley(table.as_ref().unwrap())?);
    }
    if want(Method::Nucleolus) {
        allocations.push(games::nucleolus(table.as_ref().unwrap(), &s)?);
    }
    let mut log_json = None;
    if want(Method::LeastCore) {
        let (crit, tag) = criterion(&args.criterion, &oracle)?;
        let cfg = LeastCoreConfig {
            max_iterations: args.max_iterations,
            init: match args.init {
                Init::Empty => FamilyInit::Empty,
                Init::Marginal => FamilyInit::Marginal,
            },
            ..LeastCoreConfig::default()
        };
        let lc = match args.separator {
            SeparatorKind::Milp => {
                games::least_core_select(&oracle, &MilpSeparator { oracle: &oracle }, &crit, &tag, &cfg, &s)?
            }
            SeparatorKind::Table => {
                let t = table.as_ref().unwrap();
                games::least_core_select(t, &TableSeparator(t), &crit, &tag, &cfg, &s)?
            }
        };
        println!(
            "least-core ({tag}): epsilon = {:.4} after {} iteration(s)",
            lc.epsilon.unwrap_or(0.0),
            lc.iterations
        );
        log_json = Some(serde_json::to_string_pretty(&lc)?);
        allocations.push(lc);
    }

    let grand = oracle.grand()?;
    for al in &allocations {
        let promised = !matches!(al.mechanism, games::Mechanism::MarginalContribution);
        if promised && (al.total() - grand).abs() > 1e-6 * grand.abs().max(1.0) {
            return Err(InvariantFailure(format!("{} allocation is not efficient", al.mechanism.tag())).into());
        }
    }
    if let Some(t) = &table {
        for al in &allocations {
            let (e, c) = games::max_excess(t, &al.beta)?;
            println!("{}: max excess {e:.4} at {}", al.mechanism.tag(), c.label(&case));
        }
    }

    let mut txt = games::allocation_csv(&case.areas, &allocations);
    let mut tidy = games::allocation_tidy_csv(&case.areas, &allocations);
    if let Some(sc) = scenario {
        let grand_s = oracle.value_scenario(Coalition::all(case.n_areas()), sc)?;
        let split: Vec<BenefitAllocation> = allocations
            .iter()
            .filter(|a| a.mechanism != games::Mechanism::MarginalContribution)
            .filter_map(|a| match games::scenario_allocation(a, grand, grand_s) {
                Ok(x) => Some(Ok(x)),
                // A negative share has no scenario split; report the rest.
                Err(Error::Validation { message, .. }) => {
                    log::warn!("{}: no scenario split: {message}", a.mechanism.tag());
                    None
                }
                Err(e) => Some(Err(e)),
            })
            .collect::<coopgrid::Result<_>>()?;
        let id = &case.scenarios[sc].id;
        let mut st = String::from("area");
        for a in &split {
            let _ = write!(st, ",{}", a.criterion.as_deref().unwrap_or(""));
        }
        st.push('\n');
        for (k, area) in case.areas.iter().enumerate() {
            st.push_str(area);
            for a in &split {
                let _ = write!(st, ",{:.4}", a.beta[k]);
            }
            st.push('\n');
        }
        write_out(&common.out, &format!("allocation_{id}.csv"), &st)?;
        println!("scenario {id} (v = {grand_s:.4}):");
        print!("{st}");
        for a in &split {
            for (k, area) in case.areas.iter().enumerate() {
                let _ = writeln!(
                    tidy,
                    "{}@{id},{area},{:.4}",
                    a.criterion.as_deref().unwrap_or(""),
                    a.beta[k]
                );
            }
        }
    }
    let _ = writeln!(
        txt,
        "grand_value,{}",
        vec![format!("{grand:.4}"); allocations.len()].join(",")
    );
    write_out(&common.out, "allocation.csv", &txt)?;
    write_out(&common.out, "allocation_tidy.csv", &tidy)?;
    if let Some(j) = log_json {
        write_out(&common.out, "least_core_log.json", &j)?;
    }
    print!("{txt}");
    Ok(())
}
