//! Sequential reserve, day-ahead and balancing market clearing for a set of
//! control areas, the preemptive tie-line allocation model solved as a
//! MILP, and benefit-sharing mechanisms for coalitions of areas.
//!
//! ```no_run
//! use coopgrid::{fixtures, markets, model::Coalition, solver::Solver};
//!
//! let case = fixtures::three_area_base();
//! let solver = Solver::default();
//! let out = markets::run_sequential(&case, &case.existing_chi, Coalition::EMPTY, &solver).unwrap();
//! println!("expected cost {:.1}", out.expected_cost);
//! ```

pub mod error;
pub mod fixtures;
pub mod games;
pub mod markets;
pub mod model;
pub mod preemptive;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
