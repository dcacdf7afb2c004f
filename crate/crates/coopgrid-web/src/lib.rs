//! WebAssembly bindings for the static demo page in `www/`. Every entry
//! point takes and returns JSON strings; errors come back as `{"error": ..}`.
//! Solves use the built-in simplex backend.

use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

use coopgrid::fixtures;
use coopgrid::games::{self, CoalitionValueTable, LeastCoreConfig, TableSeparator, ValueKind};
use coopgrid::markets;
use coopgrid::model::{CaseData, Coalition};
use coopgrid::solver::{BackendKind, Solver, SolverConfig};

fn solver() -> Solver {
    Solver::new(BackendKind::Native, SolverConfig::default()).expect("native backend is always available")
}

fn respond(r: Result<serde_json::Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Names of the bundled cases.
#[wasm_bindgen]
pub fn fixture_names() -> String {
    json!(fixtures::NAMES).to_string()
}

/// JSON text of a bundled case.
#[wasm_bindgen]
pub fn fixture_source(name: &str) -> String {
    fixtures::source(name).unwrap_or("").to_string()
}

#[derive(Serialize)]
struct SweepPoint {
    chi: f64,
    reserve: f64,
    day_ahead: f64,
    balancing: f64,
    expected: f64,
}

/// Sequential cost for `steps + 1` allocations of link `link` in [0, 1];
/// other links stay at their existing allocation.
#[wasm_bindgen]
pub fn sweep(case_json: &str, link: usize, steps: usize) -> String {
    respond(sweep_inner(case_json, link, steps))
}

fn sweep_inner(case_json: &str, link: usize, steps: usize) -> Result<serde_json::Value, String> {
    let case = CaseData::from_json(case_json).map_err(|e| e.to_string())?;
    if link >= case.links.len() {
        return Err(format!("case has {} link(s)", case.links.len()));
    }
    let s = solver();
    let steps = steps.clamp(1, 200);
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..=steps {
        let x = k as f64 / steps as f64;
        let mut chi = case.existing_chi.clone();
        chi[link] = x;
        match markets::run_sequential(&case, &chi, Coalition::EMPTY, &s) {
            Ok(out) => points.push(SweepPoint {
                chi: x,
                reserve: out.reserve.cost,
                day_ahead: out.day_ahead.cost,
                balancing: markets::expected_balancing_cost(&case, &out),
                expected: out.expected_cost,
            }),
            Err(e) => skipped.push(json!({ "chi": x, "reason": e.to_string() })),
        }
    }
    Ok(json!({
        "link": case.links[link].id,
        "points": points,
        "skipped": skipped,
    }))
}

#[derive(Deserialize)]
struct TableInput {
    areas: Vec<String>,
    /// Values keyed by comma-separated area ids; missing coalitions count as 0.
    values: std::collections::BTreeMap<String, f64>,
}

/// All allocation mechanisms on an editable expected-value table.
#[wasm_bindgen]
pub fn allocate(table_json: &str) -> String {
    respond(allocate_inner(table_json))
}

fn allocate_inner(table_json: &str) -> Result<serde_json::Value, String> {
    let input: TableInput = serde_json::from_str(table_json).map_err(|e| e.to_string())?;
    let n = input.areas.len();
    if !(2..=8).contains(&n) {
        return Err("between 2 and 8 areas are supported".into());
    }
    let mut keyed = std::collections::HashMap::new();
    for (k, v) in &input.values {
        let mut c = Coalition::EMPTY;
        for id in k.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let a = input
                .areas
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| format!("unknown area {id:?} in key {k:?}"))?;
            c = c.with(a);
        }
        keyed.insert(c, *v);
    }
    let table = CoalitionValueTable::from_fn(ValueKind::Expected, input.areas.clone(), |c| {
        keyed.get(&c).copied().unwrap_or(0.0)
    });
    let s = solver();
    let err = |e: coopgrid::Error| e.to_string();
    let marginal = games::marginal_contribution(&table).map_err(err)?;
    let mut out = vec![
        games::shapley(&table).map_err(err)?,
        games::nucleolus(&table, &s).map_err(err)?,
        games::equal_shares(&table).map_err(err)?,
    ];
    let lc = games::least_core_select(
        &table,
        &TableSeparator(&table),
        &marginal.beta,
        "marginal",
        &LeastCoreConfig::default(),
        &s,
    )
    .map_err(err)?;
    out.push(lc);
    out.push(marginal);
    let rows: Vec<_> = out
        .iter()
        .map(|a| {
            let (e, c) = games::max_excess(&table, &a.beta).unwrap_or((f64::NAN, Coalition::EMPTY));
            json!({
                "mechanism": a.mechanism.tag(),
                "beta": a.beta,
                "total": a.total(),
                "epsilon": a.epsilon,
                "max_excess": e,
                "worst_coalition": table.label(c),
            })
        })
        .collect();
    let diag = games::diagnostics(&table, None).map_err(err)?;
    Ok(json!({
        "grand": table.get(Coalition::all(n)),
        "allocations": rows,
        "veto_areas": diag.veto_areas.iter().map(|&a| &input.areas[a]).collect::<Vec<_>>(),
        "supermodular": diag.supermodularity_violations.is_empty(),
    }))
}

#[derive(Deserialize)]
struct SplitInput {
    beta: Vec<f64>,
    grand_expected: f64,
    /// `v^s(A)` per scenario.
    grand_scenarios: Vec<f64>,
    #[serde(default)]
    probabilities: Vec<f64>,
}

/// Scales an expected allocation to each scenario's grand-coalition value.
#[wasm_bindgen]
pub fn scenario_split(input_json: &str) -> String {
    respond(split_inner(input_json))
}

fn split_inner(input_json: &str) -> Result<serde_json::Value, String> {
    let input: SplitInput = serde_json::from_str(input_json).map_err(|e| e.to_string())?;
    let base = games::BenefitAllocation {
        mechanism: games::Mechanism::LeastCore,
        beta: input.beta.clone(),
        epsilon: None,
        criterion: None,
        iterations: 0,
        family: Vec::new(),
        log: Vec::new(),
    };
    let mut rows = Vec::new();
    for &g in &input.grand_scenarios {
        let a = games::scenario_allocation(&base, input.grand_expected, g).map_err(|e| e.to_string())?;
        let total = a.total();
        rows.push(json!({
            "grand": g,
            "beta": a.beta,
            // Positive when the areas are promised more than the scenario delivers.
            "deficit": input.grand_expected - total,
        }));
    }
    let mean: Option<Vec<f64>> = (input.probabilities.len() == input.grand_scenarios.len()).then(|| {
        (0..input.beta.len())
            .map(|k| {
                rows.iter()
                    .zip(&input.probabilities)
                    .map(|(r, p)| p * r["beta"][k].as_f64().unwrap_or(0.0))
                    .sum()
            })
            .collect()
    });
    Ok(json!({ "scenarios": rows, "expected": mean }))
}

/// Expected values of the three-area base case from `coopgrid values`. The
/// page starts from these rather than solving the MILPs in the browser.
#[wasm_bindgen]
pub fn default_table() -> String {
    json!({
        "areas": ["a1", "a2", "a3"],
        "values": { "a1,a2": 4460.5029, "a2,a3": 826.8, "a1,a3": 0.0, "a1,a2,a3": 4633.1097 }
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocate_default_table() {
        let v: serde_json::Value = serde_json::from_str(&allocate(&default_table())).unwrap();
        assert!(v.get("error").is_none(), "{v}");
        let lc = v["allocations"]
            .as_array()
            .unwrap()
            .iter()
            .find(|a| a["mechanism"] == "least-core")
            .unwrap();
        assert!((lc["beta"][2].as_f64().unwrap()).abs() < 1e-6);
    }

    #[test]
    fn split_keeps_expectation() {
        let r = scenario_split(
            r#"{"beta": [3, 1], "grand_expected": 4, "grand_scenarios": [2, 6], "probabilities": [0.5, 0.5]}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&r).unwrap();
        assert_eq!(v["expected"][0].as_f64().unwrap(), 3.0);
    }

    #[test]
    fn sweep_two_area() {
        let v: serde_json::Value = serde_json::from_str(&sweep(fixtures::TWO_AREA, 0, 4)).unwrap();
        assert_eq!(
            v["points"].as_array().unwrap().len() + v["skipped"].as_array().unwrap().len(),
            5
        );
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(allocate("{").contains("error"));
    }
}
