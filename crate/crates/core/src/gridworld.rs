//! Grid-world benchmark models with slippery movement.
//!
//! Cells are `(x, y)` with `y` pointing up. A move succeeds with probability
//! `p0` and slips to each perpendicular neighbour with `(1 - p0) / 2`; moves
//! into obstacles or off the grid leave the robot in place. Red cells are
//! terminal and form the effect set. A risky cell enters its adjacent red
//! cell with its own parameter whatever the action, and otherwise performs
//! the intended move. Cells next to red cells (other than risky ones) move
//! deterministically.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr};
use crate::model::{ParamSpace, ParametricModel, Skeleton, Transition};

pub type Cell = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Right,
    Down,
    Left,
    Stay,
}

pub const ACTIONS: [Action; 5] = [Action::Up, Action::Right, Action::Down, Action::Left, Action::Stay];

impl Action {
    fn delta(self) -> Cell {
        match self {
            Action::Up => (0, 1),
            Action::Right => (1, 0),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Stay => (0, 0),
        }
    }

    fn perpendicular(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
            Action::Stay => [Action::Stay, Action::Stay],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "Up",
            Action::Right => "Right",
            Action::Down => "Down",
            Action::Left => "Left",
            Action::Stay => "Stay",
        }
    }
}

/// A single cell `[x, y]` or an inclusive rectangle `{"rect": [x0, y0, x1, y1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSel {
    Cell([i32; 2]),
    Rect { rect: [i32; 4] },
}

fn expand(sels: &[CellSel]) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for s in sels {
        match *s {
            CellSel::Cell([x, y]) => {
                out.insert((x, y));
            }
            CellSel::Rect { rect: [x0, y0, x1, y1] } => {
                for x in x0.min(x1)..=x0.max(x1) {
                    for y in y0.min(y1)..=y0.max(y1) {
                        out.insert((x, y));
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Risky {
    pub cell: [i32; 2],
    pub param: String,
}

/// Cells whose enabled actions are restricted. Later regions override
/// earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub cells: Vec<CellSel>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: i32,
    pub height: i32,
    pub start: [i32; 2],
    pub obstacles: Vec<CellSel>,
    pub red: Vec<CellSel>,
    pub risky: Vec<Risky>,
    /// Deterministic cells; derived from the red cells when absent.
    #[serde(default)]
    pub careful: Option<Vec<CellSel>>,
    #[serde(default)]
    pub regions: Vec<Region>,
    pub slip_param: String,
}

pub fn cell_name((x, y): Cell) -> String {
    format!("({x},{y})")
}

pub const ENV_A: &str = include_str!("../fixtures/grid_env_a.json");
pub const ENV_B: &str = include_str!("../fixtures/grid_env_b.json");
pub const GRID_DIST: &str = include_str!("../fixtures/grid_dist.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Env {
    A,
    B,
}

pub fn builtin_env(which: Env) -> GridSpec {
    let text = match which {
        Env::A => ENV_A,
        Env::B => ENV_B,
    };
    GridSpec::parse(text).expect("bundled grid parses")
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    Expr::Bin(op, Box::new(l), Box::new(r))
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Grid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid spec serializes")
    }

    fn in_range(&self, (x, y): Cell) -> bool {
        (0..self.width).contains(&x) && (0..self.height).contains(&y)
    }

    pub fn obstacle_cells(&self) -> BTreeSet<Cell> {
        expand(&self.obstacles)
    }

    pub fn red_cells(&self) -> BTreeSet<Cell> {
        expand(&self.red)
    }

    fn risky_map(&self) -> BTreeMap<Cell, String> {
        self.risky
            .iter()
            .map(|r| ((r.cell[0], r.cell[1]), r.param.clone()))
            .collect()
    }

    fn neighbours((x, y): Cell) -> [Cell; 4] {
        [(x, y + 1), (x + 1, y), (x, y - 1), (x - 1, y)]
    }

    pub fn careful_cells(&self) -> BTreeSet<Cell> {
        if let Some(c) = &self.careful {
            return expand(c);
        }
        let red = self.red_cells();
        let obstacles = self.obstacle_cells();
        let risky = self.risky_map();
        let mut out = BTreeSet::new();
        for &r in &red {
            for n in Self::neighbours(r) {
                if self.in_range(n) && !red.contains(&n) && !obstacles.contains(&n) && !risky.contains_key(&n) {
                    out.insert(n);
                }
            }
        }
        out
    }

    /// Enabled actions per cell after applying the regions in order.
    pub fn enabled(&self) -> BTreeMap<Cell, Vec<Action>> {
        let mut out = BTreeMap::new();
        for region in &self.regions {
            let mut acts = region.actions.clone();
            acts.sort();
            acts.dedup();
            for c in expand(&region.cells) {
                out.insert(c, acts.clone());
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.width <= 0 || self.height <= 0 {
            return Err(Error::Grid("grid must have positive size".into()));
        }
        let obstacles = self.obstacle_cells();
        let red = self.red_cells();
        let start = (self.start[0], self.start[1]);
        let all_sets = [("obstacle", &obstacles), ("red", &red)];
        for (kind, set) in all_sets {
            if let Some(c) = set.iter().find(|&&c| !self.in_range(c)) {
                return Err(Error::Grid(format!("{kind} cell {} out of range", cell_name(*c))));
            }
        }
        if !self.in_range(start) || obstacles.contains(&start) || red.contains(&start) {
            return Err(Error::Grid("start must be a free, non-red cell".into()));
        }
        if red.is_empty() {
            return Err(Error::Grid("at least one red cell is required".into()));
        }
        for (cell, _) in self.risky_map() {
            if !self.in_range(cell) || obstacles.contains(&cell) || red.contains(&cell) {
                return Err(Error::Grid(format!("risky cell {} must be free", cell_name(cell))));
            }
            if !Self::neighbours(cell).iter().any(|n| red.contains(n)) {
                return Err(Error::Grid(format!("risky cell {} is not next to a red cell", cell_name(cell))));
            }
        }
        for region in &self.regions {
            if region.actions.is_empty() {
                return Err(Error::Grid("a region must enable at least one action".into()));
            }
            if let Some(c) = expand(&region.cells).into_iter().find(|&c| !self.in_range(c)) {
                return Err(Error::Grid(format!("region cell {} out of range", cell_name(c))));
            }
        }
        if self.slip_param.is_empty() {
            return Err(Error::Grid("slip parameter name is empty".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<ParametricModel> {
        self.validate()?;
        let obstacles = self.obstacle_cells();
        let red = self.red_cells();
        let risky = self.risky_map();
        let careful = self.careful_cells();
        let enabled = self.enabled();

        let mut cells = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if !obstacles.contains(&(x, y)) {
                    cells.push((x, y));
                }
            }
        }
        let index: BTreeMap<Cell, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        let mut names = vec![self.slip_param.clone()];
        for r in &self.risky {
            if !names.contains(&r.param) {
                names.push(r.param.clone());
            }
        }
        let params = ParamSpace::new(names).map_err(|e| Error::Grid(e.to_string()))?;
        let slip = Expr::Param(0);
        let param_of = |name: &str| Expr::Param(params.index_of(name).expect("declared above"));

        let target = |c: Cell, a: Action| {
            let d = a.delta();
            let t = (c.0 + d.0, c.1 + d.1);
            if self.in_range(t) && !obstacles.contains(&t) {
                t
            } else {
                c
            }
        };

        let mut transitions = Vec::new();
        for &c in &cells {
            if red.contains(&c) {
                continue;
            }
            let acts = enabled.get(&c).cloned().unwrap_or_else(|| ACTIONS.to_vec());
            for a in acts {
                let mut terms: BTreeMap<usize, Vec<Expr>> = BTreeMap::new();
                let mut add = |cell: Cell, e: Expr| terms.entry(index[&cell]).or_default().push(e);
                if let Some(pname) = risky.get(&c) {
                    let into = Self::neighbours(c)
                        .into_iter()
                        .find(|n| red.contains(n))
                        .expect("validated");
                    let pi = param_of(pname);
                    add(into, pi.clone());
                    add(target(c, a), bin(BinOp::Sub, num(1.0), pi));
                } else if a == Action::Stay {
                    add(c, num(1.0));
                } else if careful.contains(&c) {
                    add(target(c, a), num(1.0));
                } else {
                    add(target(c, a), slip.clone());
                    let half = bin(BinOp::Div, bin(BinOp::Sub, num(1.0), slip.clone()), num(2.0));
                    for p in a.perpendicular() {
                        add(target(c, p), half.clone());
                    }
                }
                for (to, es) in terms {
                    let prob = es
                        .into_iter()
                        .reduce(|l, r| bin(BinOp::Add, l, r))
                        .expect("nonempty");
                    transitions.push(Transition {
                        from: index[&c],
                        action: a as usize,
                        to,
                        prob,
                    });
                }
            }
        }
        let skel = Skeleton {
            states: cells.iter().map(|&c| cell_name(c)).collect(),
            actions: ACTIONS.iter().map(|a| a.name().to_string()).collect(),
            initial: index[&(self.start[0], self.start[1])],
            effect: red.iter().map(|c| index[c]).collect(),
        };
        ParametricModel::new(skel, params, transitions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateSet;

    fn tiny() -> GridSpec {
        GridSpec {
            width: 2,
            height: 1,
            start: [0, 0],
            obstacles: vec![],
            red: vec![CellSel::Cell([1, 0])],
            risky: vec![],
            careful: Some(vec![]),
            regions: vec![],
            slip_param: "p0".into(),
        }
    }

    #[test]
    fn boundary_folding() {
        let m = tiny().generate().unwrap();
        let c = m.instantiate(&[0.8]).unwrap();
        let sk = m.skeleton();
        let left = sk.state_index("(0,0)").unwrap();
        let right = sk.state_index("(1,0)").unwrap();
        let k = c.choices()[left].iter().position(|ch| sk.actions[ch.action] == "Right").unwrap();
        let row = c.row(left, k);
        assert!((row[right] - 0.8).abs() < 1e-15);
        assert!((row[left] - 0.2).abs() < 1e-15);
        let k = c.choices()[left].iter().position(|ch| sk.actions[ch.action] == "Stay").unwrap();
        assert_eq!(c.row(left, k)[left], 1.0);
    }

    #[test]
    fn env_a_structure() {
        let spec = builtin_env(Env::A);
        let m = spec.generate().unwrap();
        let n = m.skeleton().num_states();
        assert_eq!(n, 100 - spec.obstacle_cells().len());
        assert_eq!(m.skeleton().effect.len(), spec.red_cells().len());
        let c = m.instantiate(&[0.875, 0.5, 0.6]).unwrap();
        for s in 0..n {
            for k in 0..c.choices()[s].len() {
                assert!((c.row(s, k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aisle_actions() {
        let a = builtin_env(Env::A).generate().unwrap();
        let b = builtin_env(Env::B).generate().unwrap();
        let names = |m: &ParametricModel, cell: &str| -> BTreeSet<String> {
            let s = m.skeleton().state_index(cell).unwrap();
            m.enabled_actions(s).into_iter().map(|k| m.skeleton().actions[k].clone()).collect()
        };
        assert_eq!(names(&a, "(4,7)"), ["Up".to_string()].into());
        let nb = names(&b, "(4,7)");
        assert!(nb.contains("Up") && nb.contains("Down"));
    }

    #[test]
    fn risky_parameters() {
        for env in [Env::A, Env::B] {
            let spec = builtin_env(env);
            let m = spec.generate().unwrap();
            assert_eq!(m.params().names(), ["p0", "p1", "p2"]);
            let sk = m.skeleton();
            let c = m.instantiate(&[0.875, 0.3, 0.7]).unwrap();
            for (cell, red, p) in [("(9,5)", "(9,6)", 0.3), ("(8,9)", "(8,8)", 0.7)] {
                let s = sk.state_index(cell).unwrap();
                let r = sk.state_index(red).unwrap();
                for k in 0..c.choices()[s].len() {
                    assert_eq!(c.row(s, k)[r], p);
                }
            }
        }
    }

    #[test]
    fn rows_sum_to_one_symbolically() {
        use proptest::prelude::*;
        use proptest::test_runner::TestRunner;
        let m = builtin_env(Env::A).generate().unwrap();
        let mut runner = TestRunner::deterministic();
        runner
            .run(&(0.01f64..0.99, 0.01f64..0.99, 0.01f64..0.99), |(a, b, c)| {
                let cm = m.instantiate(&[a, b, c]).unwrap();
                for s in 0..cm.num_states() {
                    for k in 0..cm.choices()[s].len() {
                        prop_assert!((cm.row(s, k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn careful_cells_derived() {
        let spec = builtin_env(Env::A);
        let careful = spec.careful_cells();
        assert!(careful.contains(&(7, 8)));
        assert!(careful.contains(&(8, 5)));
        assert!(!careful.contains(&(9, 5)));
        assert!(!careful.contains(&(8, 9)));
        let m = spec.generate().unwrap();
        let c = m.instantiate(&[0.875, 0.5, 0.6]).unwrap();
        let s = m.skeleton().state_index("(7,8)").unwrap();
        for k in 0..c.choices()[s].len() {
            assert!(c.row(s, k).contains(&1.0));
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = tiny();
        s.start = [1, 0];
        assert!(matches!(s.generate(), Err(Error::Grid(_))));
        let mut s = tiny();
        s.risky = vec![Risky { cell: [0, 0], param: "p1".into() }];
        s.red = vec![CellSel::Cell([1, 0])];
        assert!(s.generate().is_ok());
        s.width = 3;
        s.red = vec![CellSel::Cell([2, 0])];
        assert!(matches!(s.generate(), Err(Error::Grid(_))));
        let mut s = tiny();
        s.obstacles = vec![CellSel::Cell([5, 5])];
        assert!(matches!(s.generate(), Err(Error::Grid(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn route_regimes(p0 in 0.85f64..0.9, p1 in 0.45f64..0.6, p2 in 0.5f64..0.7) {
            proptest::prop_assume!((p1 - p2).abs() > 1e-3);
            let m = builtin_env(Env::A).generate().unwrap();
            let sk = m.skeleton();
            let all: StateSet = (0..sk.num_states()).collect();
            let canon = crate::spr::canonical_cause(&m.instantiate(&[p0, p1, p2]).unwrap(), &all).unwrap();
            let lower = sk.state_set(&["(3,5)", "(5,5)", "(7,8)"]).unwrap();
            if p1 < p2 {
                proptest::prop_assert!(!canon.is_empty());
                proptest::prop_assert!(canon.is_disjoint(&lower));
            } else {
                proptest::prop_assert!(canon.contains(&sk.state_index("(7,8)").unwrap()));
            }
        }
    }

    #[test]
    fn spec_round_trip() {
        let spec = builtin_env(Env::A);
        assert_eq!(GridSpec::parse(&spec.to_json()).unwrap(), spec);
    }
}
