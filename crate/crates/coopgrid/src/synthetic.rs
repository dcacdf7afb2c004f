//! Seeded generator for a six-area test system shaped like the three-area
//! IEEE RTS interconnection graph: a ring of buses per area (seven by
//! default, optionally with two chords), seven inter-area links, gas peakers offering half their capacity
//! as reserve, and wind in four areas.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{CaseData, CaseFile, GeneratorRec, LineRec, LinkRec, NodeRec, ScenarioRec, WindRec};

/// Area pairs and aggregate capacity (MW) of the seven links.
pub const LINKS: [(usize, usize, f64); 7] = [
    (0, 1, 1900.0),
    (1, 3, 200.0),
    (0, 3, 500.0),
    (1, 4, 200.0),
    (1, 2, 700.0),
    (3, 4, 1900.0),
    (4, 5, 700.0),
];

const WIND_AREAS: [usize; 4] = [0, 1, 3, 4];

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub nodes_per_area: usize,
    pub scenarios: usize,
    /// Multiplier on the link capacities in [`LINKS`].
    pub link_scale: f64,
    /// Add two chords across each area ring.
    pub chords: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            nodes_per_area: 7,
            scenarios: 10,
            link_scale: 0.05,
            chords: false,
        }
    }
}

fn r1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn generate(cfg: &SyntheticConfig) -> CaseFile {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.nodes_per_area.max(4);
    let areas: Vec<String> = (1..=6).map(|a| format!("a{a}")).collect();
    let node = |a: usize, i: usize| format!("{}n{}", areas[a], i + 1);

    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut generators = Vec::new();
    let mut wind_farms = Vec::new();
    let scenarios: Vec<ScenarioRec> = (1..=cfg.scenarios)
        .map(|s| ScenarioRec {
            id: format!("s{s}"),
            probability: 1.0 / cfg.scenarios as f64,
        })
        .collect();
    // A common weather factor per scenario, with area noise on top.
    let weather: Vec<f64> = (0..cfg.scenarios).map(|_| rng.gen_range(0.15..0.85)).collect();

    for a in 0..6 {
        let total: f64 = rng.gen_range(300.0..600.0);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
        let wsum: f64 = weights.iter().sum();
        for (i, w) in weights.iter().enumerate() {
            nodes.push(NodeRec {
                id: node(a, i),
                area: areas[a].clone(),
                demand: r1(total * w / wsum),
            });
        }
        let mut intra: Vec<(usize, usize)> = (0..k).map(|i| (i, (i + 1) % k)).collect();
        if cfg.chords {
            intra.push((0, k / 2));
            intra.push((k / 4, 3 * k / 4));
        }
        for (f, t) in intra {
            lines.push(LineRec {
                id: format!("{}l{}-{}", areas[a], f + 1, t + 1),
                from: node(a, f),
                to: node(a, t),
                capacity: r1(total),
                susceptance: None,
                reactance: Some(r1(rng.gen_range(0.05..0.15) * 100.0) / 100.0),
            });
        }
        let price = rng.gen_range(0.7..1.3);
        let mut add_gen = |tag: &str, at: usize, cost: f64, cap: f64, gas: bool| {
            let cost = r1(cost * price);
            let cap = r1(cap);
            generators.push(GeneratorRec {
                id: format!("{}{tag}", areas[a]),
                node: node(a, at),
                cost,
                capacity: cap,
                reserve_cost_up: if gas { r1(0.2 * cost) } else { 0.0 },
                reserve_cost_down: if gas { r1(0.2 * cost) } else { 0.0 },
                reserve_up: if gas { r1(0.5 * cap) } else { 0.0 },
                reserve_down: if gas { r1(0.5 * cap) } else { 0.0 },
                flexible: gas,
            });
        };
        add_gen("base", 0, 15.0, 0.6 * total, false);
        add_gen("ccgt", k / 2, 35.0, 0.6 * total, true);
        add_gen("peak", k / 4, 70.0, 0.5 * total, true);
        if WIND_AREAS.contains(&a) {
            let cap = r1(0.4 * total);
            let production = scenarios
                .iter()
                .zip(&weather)
                .map(|(s, w)| {
                    let f: f64 = (w + rng.gen_range(-0.15..0.15)).clamp(0.02, 0.98);
                    (s.id.clone(), r1(f * cap))
                })
                .collect::<BTreeMap<_, _>>();
            wind_farms.push(WindRec {
                id: format!("{}w", areas[a]),
                node: node(a, 3 * k / 4),
                capacity: cap,
                expected: None,
                production,
            });
        }
    }

    let mut links = Vec::new();
    let mut existing_chi = BTreeMap::new();
    for (e, &(from, to, cap)) in LINKS.iter().enumerate() {
        let n_lines = if cap >= 1000.0 { 2 } else { 1 };
        let mut ids = Vec::new();
        for m in 0..n_lines {
            let f = rng.gen_range(0..k);
            let t = rng.gen_range(0..k);
            let id = format!("t{}-{}", e + 1, m + 1);
            lines.push(LineRec {
                id: id.clone(),
                from: node(from, f),
                to: node(to, t),
                capacity: r1(cap * cfg.link_scale / n_lines as f64),
                susceptance: None,
                reactance: Some(r1(rng.gen_range(0.05..0.15) * 100.0) / 100.0),
            });
            ids.push(id);
        }
        let id = format!("e{}", e + 1);
        existing_chi.insert(id.clone(), 0.0);
        links.push(LinkRec {
            id,
            from_area: areas[from].clone(),
            to_area: areas[to].clone(),
            lines: ids,
        });
    }

    CaseFile {
        name: format!("synthetic six-area (seed {})", cfg.seed),
        areas,
        nodes,
        lines,
        links,
        generators,
        wind_farms,
        scenarios,
        shed_cost: 1000.0,
        existing_chi,
        reserve_requirements: None,
    }
}

pub fn generate_case(cfg: &SyntheticConfig) -> Result<CaseData> {
    CaseData::from_file(generate(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let c = generate_case(&SyntheticConfig::default()).unwrap();
        assert_eq!(c.n_areas(), 6);
        assert!(c.nodes.len() >= 40);
        assert_eq!(c.scenarios.len(), 10);
        assert_eq!(c.links.len(), 7);
    }

    #[test]
    fn seeded() {
        let a = serde_json::to_string(&generate(&SyntheticConfig::default())).unwrap();
        let b = serde_json::to_string(&generate(&SyntheticConfig::default())).unwrap();
        assert_eq!(a, b);
    }
}
