//! Case data: areas, network, offers, wind scenarios and the current
//! transmission allocation. Files are JSON; see [`CaseFile`] for the schema.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;
const EXPECTED_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub area: usize,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcLine {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    /// Absolute susceptance, p.u.
    pub susceptance: f64,
    /// Link this line belongs to, set iff it crosses an area border.
    pub tie_link: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterAreaLink {
    pub id: String,
    pub sending: usize,
    pub receiving: usize,
    pub lines: Vec<usize>,
    /// Sum of member tie-line capacities.
    pub capacity: f64,
}

impl InterAreaLink {
    /// Incidence of this link with `area`: +1 receiving, -1 sending.
    pub fn incidence(&self, area: usize) -> f64 {
        if area == self.receiving {
            1.0
        } else if area == self.sending {
            -1.0
        } else {
            0.0
        }
    }

    pub fn touches(&self, area: usize) -> bool {
        area == self.sending || area == self.receiving
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub id: String,
    pub node: usize,
    pub cost: f64,
    pub reserve_cost_up: f64,
    pub reserve_cost_down: f64,
    pub capacity: f64,
    pub reserve_up: f64,
    pub reserve_down: f64,
    pub flexible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindFarm {
    pub id: String,
    pub node: usize,
    pub capacity: f64,
    /// Day-ahead point forecast.
    pub expected: f64,
    /// Production per scenario, aligned with `CaseData::scenarios`.
    pub production: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReserveRequirements {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseData {
    pub name: String,
    pub areas: Vec<String>,
    pub nodes: Vec<Node>,
    pub lines: Vec<AcLine>,
    pub links: Vec<InterAreaLink>,
    pub generators: Vec<Generator>,
    pub wind_farms: Vec<WindFarm>,
    pub scenarios: Vec<Scenario>,
    pub shed_cost: f64,
    pub existing_chi: Vec<f64>,
    /// Exogenous requirements; computed from scenarios when absent.
    pub reserve_requirements: Option<ReserveRequirements>,
}

/// Line-to-node incidence `A` (+1 at the sending node) and link-to-area
/// incidence `H` (+1 at the receiving area).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkMatrices {
    pub line_node: Vec<Vec<i8>>,
    pub link_area: Vec<Vec<i8>>,
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default)]
    pub name: String,
    pub areas: Vec<String>,
    pub nodes: Vec<NodeRec>,
    pub lines: Vec<LineRec>,
    #[serde(default)]
    pub links: Vec<LinkRec>,
    pub generators: Vec<GeneratorRec>,
    #[serde(default)]
    pub wind_farms: Vec<WindRec>,
    pub scenarios: Vec<ScenarioRec>,
    pub shed_cost: f64,
    #[serde(default)]
    pub existing_chi: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserve_requirements: Option<BTreeMap<String, RequirementRec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRec {
    pub id: String,
    pub area: String,
    #[serde(default)]
    pub demand: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub susceptance: Option<f64>,
    /// Alternative to `susceptance`: reactance in p.u.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRec {
    pub id: String,
    pub from_area: String,
    pub to_area: String,
    pub lines: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRec {
    pub id: String,
    pub node: String,
    pub cost: f64,
    pub capacity: f64,
    #[serde(default)]
    pub reserve_cost_up: f64,
    #[serde(default)]
    pub reserve_cost_down: f64,
    #[serde(default)]
    pub reserve_up: f64,
    #[serde(default)]
    pub reserve_down: f64,
    #[serde(default)]
    pub flexible: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindRec {
    pub id: String,
    pub node: String,
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    /// Production keyed by scenario id. May be left empty when a scenario
    /// CSV is supplied.
    #[serde(default)]
    pub production: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRec {
    pub id: String,
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementRec {
    pub up: f64,
    pub down: f64,
}

impl CaseFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Replaces scenarios and wind productions from CSV text with header
    /// `scenario,probability,<farm id>...`.
    pub fn apply_scenario_csv(&mut self, text: &str) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "scenario" || &header[1] != "probability" {
            return Err(Error::Parse(
                "scenario CSV must start with columns scenario,probability".into(),
            ));
        }
        let farms: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut scenarios = Vec::new();
        let mut prod: HashMap<String, BTreeMap<String, f64>> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let sid = rec[0].to_string();
            let p: f64 = rec[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad probability {:?}", &rec[1])))?;
            scenarios.push(ScenarioRec {
                id: sid.clone(),
                probability: p,
            });
            for (k, f) in farms.iter().enumerate() {
                let v: f64 = rec
                    .get(k + 2)
                    .ok_or_else(|| Error::Parse(format!("scenario {sid}: missing column {f}")))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("scenario {sid}: bad value for {f}")))?;
                prod.entry(f.clone()).or_default().insert(sid.clone(), v);
            }
        }
        for w in &mut self.wind_farms {
            w.production = prod
                .remove(&w.id)
                .ok_or_else(|| Error::validation(format!("wind_farms.{}", w.id), "no column in scenario CSV"))?;
            w.expected = None;
        }
        if let Some(extra) = prod.keys().next() {
            return Err(Error::validation(
                "scenarios",
                format!("CSV column {extra} is not a wind farm"),
            ));
        }
        self.scenarios = scenarios;
        Ok(())
    }
}

fn index_of(map: &HashMap<&str, usize>, id: &str, field: &str) -> Result<usize> {
    map.get(id)
        .copied()
        .ok_or_else(|| Error::validation(field, format!("unknown id {id:?}")))
}

fn unique<'a>(ids: impl Iterator<Item = &'a str>, field: &str) -> Result<HashMap<&'a str, usize>> {
    let mut m = HashMap::new();
    for (i, id) in ids.enumerate() {
        if m.insert(id, i).is_some() {
            return Err(Error::validation(field, format!("duplicate id {id:?}")));
        }
    }
    Ok(m)
}

fn nonneg(v: f64, field: impl Into<String>) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be finite and nonnegative, got {v}"),
        ))
    }
}

impl CaseData {
    /// Validates a parsed file and resolves ids to indices.
    pub fn from_file(f: CaseFile) -> Result<Self> {
        if f.areas.is_empty() {
            return Err(Error::validation("areas", "no areas"));
        }
        if f.nodes.is_empty() {
            return Err(Error::validation("nodes", "no nodes"));
        }
        if f.areas.len() > 63 {
            return Err(Error::validation("areas", "at most 63 areas are supported"));
        }
        let area_ix = unique(f.areas.iter().map(String::as_str), "areas")?;
        let node_ix = unique(f.nodes.iter().map(|n| n.id.as_str()), "nodes")?;
        let line_ix = unique(f.lines.iter().map(|l| l.id.as_str()), "lines")?;
        let _ = unique(f.links.iter().map(|l| l.id.as_str()), "links")?;
        let _ = unique(f.generators.iter().map(|g| g.id.as_str()), "generators")?;
        let _ = unique(f.wind_farms.iter().map(|w| w.id.as_str()), "wind_farms")?;
        let scen_ix = unique(f.scenarios.iter().map(|s| s.id.as_str()), "scenarios")?;

        let mut nodes = Vec::with_capacity(f.nodes.len());
        for n in &f.nodes {
            let field = format!("nodes.{}", n.id);
            nonneg(n.demand, format!("{field}.demand"))?;
            nodes.push(Node {
                id: n.id.clone(),
                area: index_of(&area_ix, &n.area, &format!("{field}.area"))?,
                demand: n.demand,
            });
        }

        let mut lines = Vec::with_capacity(f.lines.len());
        for l in &f.lines {
            let field = format!("lines.{}", l.id);
            let from = index_of(&node_ix, &l.from, &format!("{field}.from"))?;
            let to = index_of(&node_ix, &l.to, &format!("{field}.to"))?;
            if from == to {
                return Err(Error::validation(field, "line connects a node to itself"));
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return Err(Error::validation(format!("{field}.capacity"), "must be positive"));
            }
            let b = match (l.susceptance, l.reactance) {
                (Some(b), None) => b,
                (None, Some(x)) if x > 0.0 => 1.0 / x,
                (None, Some(_)) => return Err(Error::validation(format!("{field}.reactance"), "must be positive")),
                (Some(_), Some(_)) => {
                    return Err(Error::validation(
                        field,
                        "give either susceptance or reactance, not both",
                    ))
                }
                (None, None) => return Err(Error::validation(field, "missing susceptance")),
            };
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::validation(format!("{field}.susceptance"), "must be positive"));
            }
            lines.push(AcLine {
                id: l.id.clone(),
                from,
                to,
                capacity: l.capacity,
                susceptance: b,
                tie_link: None,
            });
        }

        let mut links = Vec::with_capacity(f.links.len());
        for (e, k) in f.links.iter().enumerate() {
            let field = format!("links.{}", k.id);
            let s = index_of(&area_ix, &k.from_area, &format!("{field}.from_area"))?;
            let r = index_of(&area_ix, &k.to_area, &format!("{field}.to_area"))?;
            if s == r {
                return Err(Error::validation(field, "sending and receiving area coincide"));
            }
            if k.lines.is_empty() {
                return Err(Error::validation(
                    format!("{field}.lines"),
                    "link has no tie-lines (capacity would be 0)",
                ));
            }
            let mut members = Vec::new();
            let mut cap = 0.0;
            for lid in &k.lines {
                let li = index_of(&line_ix, lid, &format!("{field}.lines"))?;
                let line = &mut lines[li];
                if line.tie_link.is_some() {
                    return Err(Error::validation(
                        format!("{field}.lines"),
                        format!("line {lid} is in two links"),
                    ));
                }
                let (a, b) = (nodes[line.from].area, nodes[line.to].area);
                if !((a == s && b == r) || (a == r && b == s)) {
                    return Err(Error::validation(
                        format!("{field}.lines"),
                        format!("line {lid} does not connect areas {} and {}", k.from_area, k.to_area),
                    ));
                }
                line.tie_link = Some(e);
                members.push(li);
                cap += line.capacity;
            }
            links.push(InterAreaLink {
                id: k.id.clone(),
                sending: s,
                receiving: r,
                lines: members,
                capacity: cap,
            });
        }
        for l in &lines {
            if l.tie_link.is_none() && nodes[l.from].area != nodes[l.to].area {
                return Err(Error::validation(
                    format!("lines.{}", l.id),
                    "crosses an area border but is in no link",
                ));
            }
        }

        if f.scenarios.is_empty() {
            return Err(Error::validation("scenarios", "no scenarios"));
        }
        let mut total = 0.0;
        for s in &f.scenarios {
            nonneg(s.probability, format!("scenarios.{}.probability", s.id))?;
            total += s.probability;
        }
        if (total - 1.0).abs() > PROB_TOL {
            let shown = (total * 1e9).round() / 1e9;
            return Err(Error::validation("scenarios", format!("probabilities sum to {shown}")));
        }
        let scenarios: Vec<Scenario> = f
            .scenarios
            .iter()
            .map(|s| Scenario {
                id: s.id.clone(),
                probability: s.probability,
            })
            .collect();

        let mut generators = Vec::with_capacity(f.generators.len());
        for g in &f.generators {
            let field = format!("generators.{}", g.id);
            let node = index_of(&node_ix, &g.node, &format!("{field}.node"))?;
            for (v, name) in [
                (g.cost, "cost"),
                (g.capacity, "capacity"),
                (g.reserve_cost_up, "reserve_cost_up"),
                (g.reserve_cost_down, "reserve_cost_down"),
                (g.reserve_up, "reserve_up"),
                (g.reserve_down, "reserve_down"),
            ] {
                nonneg(v, format!("{field}.{name}"))?;
            }
            if g.reserve_up > g.capacity || g.reserve_down > g.capacity {
                return Err(Error::validation(field, "reserve offer exceeds capacity"));
            }
            if !g.flexible && (g.reserve_up > 0.0 || g.reserve_down > 0.0) {
                return Err(Error::validation(field, "inflexible unit offers reserve"));
            }
            generators.push(Generator {
                id: g.id.clone(),
                node,
                cost: g.cost,
                reserve_cost_up: g.reserve_cost_up,
                reserve_cost_down: g.reserve_cost_down,
                capacity: g.capacity,
                reserve_up: g.reserve_up,
                reserve_down: g.reserve_down,
                flexible: g.flexible,
            });
        }

        let mut wind_farms = Vec::with_capacity(f.wind_farms.len());
        for w in &f.wind_farms {
            let field = format!("wind_farms.{}", w.id);
            let node = index_of(&node_ix, &w.node, &format!("{field}.node"))?;
            nonneg(w.capacity, format!("{field}.capacity"))?;
            let mut production = vec![f64::NAN; scenarios.len()];
            for (sid, &v) in &w.production {
                let s = index_of(&scen_ix, sid, &format!("{field}.production"))?;
                if !(0.0..=w.capacity).contains(&v) {
                    return Err(Error::validation(
                        format!("{field}.production.{sid}"),
                        format!("{v} outside [0, {}]", w.capacity),
                    ));
                }
                production[s] = v;
            }
            if let Some(s) = production.iter().position(|v| v.is_nan()) {
                return Err(Error::validation(
                    format!("{field}.production"),
                    format!("missing scenario {}", scenarios[s].id),
                ));
            }
            let mean: f64 = scenarios.iter().zip(&production).map(|(s, v)| s.probability * v).sum();
            let expected = match w.expected {
                Some(e) if (e - mean).abs() > EXPECTED_TOL => {
                    return Err(Error::validation(
                        format!("{field}.expected"),
                        format!("{e} differs from the scenario mean {mean}"),
                    ))
                }
                Some(e) => e,
                None => mean,
            };
            wind_farms.push(WindFarm {
                id: w.id.clone(),
                node,
                capacity: w.capacity,
                expected,
                production,
            });
        }

        nonneg(f.shed_cost, "shed_cost")?;
        let link_ix: HashMap<&str, usize> = f.links.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
        let mut existing_chi = vec![0.0; links.len()];
        for (k, &v) in &f.existing_chi {
            let e = index_of(&link_ix, k, "existing_chi")?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(
                    format!("existing_chi.{k}"),
                    format!("{v} outside [0, 1]"),
                ));
            }
            existing_chi[e] = v;
        }

        let reserve_requirements = match &f.reserve_requirements {
            None => None,
            Some(m) => {
                let mut rr = ReserveRequirements {
                    up: vec![0.0; f.areas.len()],
                    down: vec![0.0; f.areas.len()],
                };
                for (a, r) in m {
                    let ai = index_of(&area_ix, a, "reserve_requirements")?;
                    nonneg(r.up, format!("reserve_requirements.{a}.up"))?;
                    nonneg(r.down, format!("reserve_requirements.{a}.down"))?;
                    rr.up[ai] = r.up;
                    rr.down[ai] = r.down;
                }
                Some(rr)
            }
        };

        Ok(CaseData {
            name: f.name,
            areas: f.areas,
            nodes,
            lines,
            links,
            generators,
            wind_farms,
            scenarios,
            shed_cost: f.shed_cost,
            existing_chi,
            reserve_requirements,
        })
    }

    /// Serializable form; `load(to_file(c)) == c`.
    pub fn to_file(&self) -> CaseFile {
        let node_id = |i: usize| self.nodes[i].id.clone();
        CaseFile {
            name: self.name.clone(),
            areas: self.areas.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRec {
                    id: n.id.clone(),
                    area: self.areas[n.area].clone(),
                    demand: n.demand,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRec {
                    id: l.id.clone(),
                    from: node_id(l.from),
                    to: node_id(l.to),
                    capacity: l.capacity,
                    susceptance: Some(l.susceptance),
                    reactance: None,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|k| LinkRec {
                    id: k.id.clone(),
                    from_area: self.areas[k.sending].clone(),
                    to_area: self.areas[k.receiving].clone(),
                    lines: k.lines.iter().map(|&l| self.lines[l].id.clone()).collect(),
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorRec {
                    id: g.id.clone(),
                    node: node_id(g.node),
                    cost: g.cost,
                    capacity: g.capacity,
                    reserve_cost_up: g.reserve_cost_up,
                    reserve_cost_down: g.reserve_cost_down,
                    reserve_up: g.reserve_up,
                    reserve_down: g.reserve_down,
                    flexible: g.flexible,
                })
                .collect(),
            wind_farms: self
                .wind_farms
                .iter()
                .map(|w| WindRec {
                    id: w.id.clone(),
                    node: node_id(w.node),
                    capacity: w.capacity,
                    expected: Some(w.expected),
                    production: self
                        .scenarios
                        .iter()
                        .map(|s| s.id.clone())
                        .zip(w.production.iter().copied())
                        .collect(),
                })
                .collect(),
            scenarios: self
                .scenarios
                .iter()
                .map(|s| ScenarioRec {
                    id: s.id.clone(),
                    probability: s.probability,
                })
                .collect(),
            shed_cost: self.shed_cost,
            existing_chi: self
                .links
                .iter()
                .map(|k| k.id.clone())
                .zip(self.existing_chi.iter().copied())
                .collect(),
            reserve_requirements: self.reserve_requirements.as_ref().map(|rr| {
                self.areas
                    .iter()
                    .enumerate()
                    .map(|(a, id)| {
                        (
                            id.clone(),
                            RequirementRec {
                                up: rr.up[a],
                                down: rr.down[a],
                            },
                        )
                    })
                    .collect()
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("case serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(CaseFile::from_json(text)?)
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn area_index(&self, id: &str) -> Option<usize> {
        self.areas.iter().position(|a| a == id)
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    pub fn gen_area(&self, i: usize) -> usize {
        self.nodes[self.generators[i].node].area
    }

    pub fn wind_area(&self, j: usize) -> usize {
        self.nodes[self.wind_farms[j].node].area
    }

    /// χ of the link a line belongs to, 0 for intra-area lines.
    pub fn line_chi(&self, chi: &[f64], l: usize) -> f64 {
        self.lines[l].tie_link.map_or(0.0, |e| chi[e])
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    pub fn scenario_index(&self, id: &str) -> Option<usize> {
        self.scenarios.iter().position(|s| s.id == id)
    }

    /// Checks a χ vector against the link count and the unit interval.
    pub fn check_chi(&self, chi: &[f64]) -> Result<()> {
        if chi.len() != self.links.len() {
            return Err(Error::validation(
                "chi",
                format!("expected {} values, got {}", self.links.len(), chi.len()),
            ));
        }
        for (k, &v) in chi.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(
                    format!("chi.{}", self.links[k].id),
                    format!("{v} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Requirements given in the file, else computed from the scenarios.
    pub fn reserve_requirements(&self) -> ReserveRequirements {
        self.reserve_requirements
            .clone()
            .unwrap_or_else(|| compute_reserve_requirements(self))
    }
}

/// Reads and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<CaseData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    CaseData::from_json(&text)
}

/// Reads a case and overrides its scenarios with a CSV file.
pub fn load_case_with_scenarios(path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<CaseData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut f = CaseFile::from_json(&text)?;
    let csv_path = csv_path.as_ref();
    let csv_text =
        std::fs::read_to_string(csv_path).map_err(|e| Error::Parse(format!("{}: {e}", csv_path.display())))?;
    f.apply_scenario_csv(&csv_text)?;
    CaseData::from_file(f)
}

/// Per area: `RR+ = mean - min_s total`, `RR- = max_s total - mean`, where
/// totals are the area's wind production in each scenario.
pub fn compute_reserve_requirements(case: &CaseData) -> ReserveRequirements {
    let na = case.n_areas();
    let mut up = vec![0.0; na];
    let mut down = vec![0.0; na];
    for a in 0..na {
        let farms: Vec<&WindFarm> = case
            .wind_farms
            .iter()
            .filter(|w| case.nodes[w.node].area == a)
            .collect();
        if farms.is_empty() {
            continue;
        }
        let mean: f64 = farms.iter().map(|w| w.expected).sum();
        let totals: Vec<f64> = (0..case.scenarios.len())
            .map(|s| farms.iter().map(|w| w.production[s]).sum())
            .collect();
        let lo = totals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Snap rounding noise from the probability-weighted mean.
        let clean = |v: f64| if v < 1e-9 { 0.0 } else { v };
        up[a] = clean(mean - lo);
        down[a] = clean(hi - mean);
    }
    ReserveRequirements { up, down }
}

pub fn build_incidence(case: &CaseData) -> NetworkMatrices {
    let nn = case.nodes.len();
    let line_node = case
        .lines
        .iter()
        .map(|l| {
            let mut row = vec![0i8; nn];
            row[l.from] = 1;
            row[l.to] = -1;
            row
        })
        .collect();
    let link_area = case
        .links
        .iter()
        .map(|k| (0..case.n_areas()).map(|a| k.incidence(a) as i8).collect())
        .collect();
    NetworkMatrices { line_node, link_area }
}

/// Set of areas, stored as a bitmask over area indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition(pub u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn all(n: usize) -> Self {
        Coalition(if n >= 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn singleton(a: usize) -> Self {
        Coalition(1 << a)
    }

    pub fn from_areas(areas: impl IntoIterator<Item = usize>) -> Self {
        Coalition(areas.into_iter().fold(0, |m, a| m | (1 << a)))
    }

    pub fn contains(self, a: usize) -> bool {
        self.0 >> a & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn without(self, a: usize) -> Self {
        Coalition(self.0 & !(1 << a))
    }

    pub fn with(self, a: usize) -> Self {
        Coalition(self.0 | (1 << a))
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&a| self.contains(a))
    }

    /// Every subset of the `n`-area grand coalition, in bitmask order.
    pub fn all_subsets(n: usize) -> impl Iterator<Item = Coalition> {
        (0..=Coalition::all(n).0).map(Coalition)
    }

    /// Links with both endpoint areas in the coalition.
    pub fn internal_links(self, case: &CaseData) -> Vec<usize> {
        (0..case.links.len())
            .filter(|&e| self.contains(case.links[e].sending) && self.contains(case.links[e].receiving))
            .collect()
    }

    /// Parses `ALL` or a comma-separated list of area ids.
    pub fn parse(spec: &str, case: &CaseData) -> Result<Self> {
        let spec = spec.trim();
        if spec.eq_ignore_ascii_case("all") {
            return Ok(Coalition::all(case.n_areas()));
        }
        if spec.is_empty() || spec.eq_ignore_ascii_case("none") {
            return Ok(Coalition::EMPTY);
        }
        let mut seen = HashSet::new();
        let mut c = Coalition::EMPTY;
        for tok in spec.split(',') {
            let tok = tok.trim();
            let a = case
                .area_index(tok)
                .ok_or_else(|| Error::validation("coalition", format!("unknown area {tok:?}")))?;
            if !seen.insert(a) {
                return Err(Error::validation("coalition", format!("area {tok} listed twice")));
            }
            c = c.with(a);
        }
        Ok(c)
    }

    pub fn label(self, case: &CaseData) -> String {
        if self.is_empty() {
            return "{}".into();
        }
        let ids: Vec<&str> = self.members().map(|a| case.areas[a].as_str()).collect();
        format!("{{{}}}", ids.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> &'static str {
        r#"{
          "areas": ["a"],
          "nodes": [{"id": "n1", "area": "a"}, {"id": "n2", "area": "a", "demand": 10}],
          "lines": [{"id": "l1", "from": "n1", "to": "n2", "capacity": 50, "reactance": 0.1}],
          "generators": [{"id": "g", "node": "n1", "cost": 10, "capacity": 20}],
          "scenarios": [{"id": "s1", "probability": 0.7}, {"id": "s2", "probability": 0.3}],
          "shed_cost": 1000
        }"#
    }

    #[test]
    fn toy_incidence() {
        let c = CaseData::from_json(toy()).unwrap();
        let m = build_incidence(&c);
        assert_eq!(m.line_node, vec![vec![1, -1]]);
        assert!((c.lines[0].susceptance - 10.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let bad = toy().replace("0.3", "0.2");
        let err = CaseData::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("probabilities sum to 0.9"), "{err}");
    }

    #[test]
    fn deterministic_wind_needs_no_reserve() {
        let txt = toy().replace(
            r#""shed_cost""#,
            r#""wind_farms": [{"id": "w", "node": "n2", "capacity": 30, "production": {"s1": 12, "s2": 12}}], "shed_cost""#,
        );
        let c = CaseData::from_json(&txt).unwrap();
        let rr = compute_reserve_requirements(&c);
        assert_eq!(rr.up, vec![0.0]);
        assert_eq!(rr.down, vec![0.0]);
    }

    #[test]
    fn inconsistent_expected_wind_rejected() {
        let txt = toy().replace(
            r#""shed_cost""#,
            r#""wind_farms": [{"id": "w", "node": "n2", "capacity": 30, "expected": 5, "production": {"s1": 12, "s2": 12}}], "shed_cost""#,
        );
        assert!(matches!(CaseData::from_json(&txt), Err(Error::Validation { .. })));
    }

    #[test]
    fn coalition_parsing() {
        let c = CaseData::from_json(toy()).unwrap();
        assert_eq!(Coalition::parse("ALL", &c).unwrap(), Coalition(1));
        assert!(Coalition::parse("b", &c).is_err());
        assert_eq!(Coalition::from_areas([0, 2]).members().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn scenario_csv_replaces_scenarios() {
        let txt = toy().replace(
            r#""shed_cost""#,
            r#""wind_farms": [{"id": "w", "node": "n2", "capacity": 30}], "shed_cost""#,
        );
        let mut f = CaseFile::from_json(&txt).unwrap();
        f.apply_scenario_csv("scenario,probability,w\nx,0.5,10\ny,0.5,20\n")
            .unwrap();
        let c = CaseData::from_file(f).unwrap();
        assert_eq!(c.scenarios.len(), 2);
        assert!((c.wind_farms[0].expected - 15.0).abs() < 1e-12);
    }
}
