//! Bundled example models and distributions.

use crate::model::{parse_model, ParametricModel};
use crate::sampler::{parse_dist, DistSpec};

pub const EXAMPLE1_MODEL: &str = include_str!("../fixtures/example1.json");
pub const EXAMPLE1_DIST: &str = include_str!("../fixtures/example1_dist.json");
pub const TWO_ROUTE_MODEL: &str = include_str!("../fixtures/two_route.json");
/// Calibrated so that `p > q` holds with probability about 0.992.
pub const TWO_ROUTE_DIST: &str = include_str!("../fixtures/two_route_dist.json");
/// p ~ U[0.11, 0.51], q ~ U[0.3, 0.7].
pub const TWO_ROUTE_ALT_DIST: &str = include_str!("../fixtures/two_route_alt_dist.json");

pub fn example1_model() -> ParametricModel {
    parse_model(EXAMPLE1_MODEL).expect("bundled model parses")
}

pub fn example1_dist() -> DistSpec {
    parse_dist(EXAMPLE1_DIST, example1_model().params()).expect("bundled distribution parses")
}

pub fn two_route_model() -> ParametricModel {
    parse_model(TWO_ROUTE_MODEL).expect("bundled model parses")
}

pub fn two_route_dist() -> DistSpec {
    parse_dist(TWO_ROUTE_DIST, two_route_model().params()).expect("bundled distribution parses")
}

pub fn two_route_alt_dist() -> DistSpec {
    parse_dist(TWO_ROUTE_ALT_DIST, two_route_model().params()).expect("bundled distribution parses")
}
