//! Bundled case files, compiled into the library so that tests, the CLI and
//! the browser demo share one copy.
//!
//! Each tie-line link in the three-area cases holds two 20 MW lines, so
//! every link has 40 MW of aggregate capacity.

use crate::model::CaseData;

pub const THREE_AREA_BASE: &str = include_str!("../fixtures/three_area_base.json");
pub const THREE_AREA_CONNECTED: &str = include_str!("../fixtures/three_area_connected.json");
pub const THREE_AREA_EMPTYCORE: &str = include_str!("../fixtures/three_area_emptycore.json");
pub const THREE_AREA_NOFLEX_A2: &str = include_str!("../fixtures/three_area_noflex_a2.json");
pub const TWO_AREA: &str = include_str!("../fixtures/two_area.json");
pub const TWO_AREA_273: &str = include_str!("../fixtures/two_area_273.json");
pub const TWO_AREA_234: &str = include_str!("../fixtures/two_area_234.json");

/// Fixture names accepted by [`by_name`].
pub const NAMES: [&str; 7] = [
    "three_area_base",
    "three_area_connected",
    "three_area_emptycore",
    "three_area_noflex_a2",
    "two_area",
    "two_area_273",
    "two_area_234",
];

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name.trim_end_matches(".json") {
        "three_area_base" => THREE_AREA_BASE,
        "three_area_connected" => THREE_AREA_CONNECTED,
        "three_area_emptycore" => THREE_AREA_EMPTYCORE,
        "three_area_noflex_a2" => THREE_AREA_NOFLEX_A2,
        "two_area" => TWO_AREA,
        "two_area_273" => TWO_AREA_273,
        "two_area_234" => TWO_AREA_234,
        _ => return None,
    })
}

/// Parses a bundled fixture. Panics only if the bundled file is broken.
pub fn by_name(name: &str) -> Option<CaseData> {
    source(name).map(|s| CaseData::from_json(s).unwrap_or_else(|e| panic!("fixture {name}: {e}")))
}

pub fn three_area_base() -> CaseData {
    by_name("three_area_base").unwrap()
}

pub fn three_area_connected() -> CaseData {
    by_name("three_area_connected").unwrap()
}

pub fn three_area_emptycore() -> CaseData {
    by_name("three_area_emptycore").unwrap()
}

pub fn three_area_noflex_a2() -> CaseData {
    by_name("three_area_noflex_a2").unwrap()
}

pub fn two_area() -> CaseData {
    by_name("two_area").unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_load() {
        for n in NAMES {
            assert!(by_name(n).is_some(), "{n}");
        }
    }
}
