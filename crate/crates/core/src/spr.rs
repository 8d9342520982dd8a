//! Strict probability-raising causes.
//!
//! A singleton `{c}` is checked by comparing the minimal probability of
//! reaching the effect from `c` with the maximal probability of reaching it
//! in a modified model where `c` is replaced by a coin flip between the
//! effect and a fresh non-effect sink. Sets are characterized through their
//! members: a nonempty set is a cause iff every member is a singleton cause
//! and every member is reachable without passing through the others.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph::SupportGraph;
use crate::model::{Choice, ConcreteModel, RationalModel, StateSet};
use crate::reach::{exact_optimal_choices, exact_reach, reach, Objective, ReachConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprConfig {
    /// Half-width of the band in which `w_c` and `q_s0` count as equal.
    pub kappa: f64,
    pub reach: ReachConfig,
    /// Re-decide verdicts inside the band with exact arithmetic when the
    /// model is small enough.
    pub exact_corners: bool,
}

impl Default for SprConfig {
    fn default() -> Self {
        Self {
            kappa: 1e-7,
            reach: ReachConfig::default(),
            exact_corners: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    StrictGreater,
    StrictLess,
    CornerReachable,
    CornerUnreachable,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::StrictGreater => "strict-greater",
            Branch::StrictLess => "strict-less",
            Branch::CornerReachable => "corner-reachable",
            Branch::CornerUnreachable => "corner-unreachable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauseVerdict {
    pub tau: i8,
    pub branch: Branch,
    pub w_c: f64,
    pub q_s0: f64,
}

impl CauseVerdict {
    fn new(branch: Branch, w_c: f64, q_s0: f64) -> Self {
        let tau = match branch {
            Branch::StrictGreater | Branch::CornerUnreachable => 1,
            Branch::StrictLess | Branch::CornerReachable => -1,
        };
        Self { tau, branch, w_c, q_s0 }
    }

    pub fn is_cause(&self) -> bool {
        self.tau == 1
    }

    pub fn is_corner(&self) -> bool {
        matches!(self.branch, Branch::CornerReachable | Branch::CornerUnreachable)
    }
}

/// The base model with every action of `pivot` replaced by a single action
/// leading to `eff` with probability `w_c` and to the fresh sink `noeff`
/// (the last state) otherwise.
#[derive(Debug, Clone)]
pub struct ModifiedModel<P = f64> {
    pub choices: Vec<Vec<Choice<P>>>,
    pub pivot: usize,
    pub eff: usize,
    pub noeff: usize,
    pub w_c: P,
}

/// Action index used for the replacement action at the pivot.
pub const GAMMA: usize = usize::MAX;

fn modify<P: Clone + PartialEq + Zero + One + std::ops::Sub<Output = P>>(
    choices: &[Vec<Choice<P>>],
    pivot: usize,
    eff: usize,
    w_c: P,
) -> ModifiedModel<P> {
    let noeff = choices.len();
    let mut out: Vec<Vec<Choice<P>>> = choices.to_vec();
    let mut succ = Vec::with_capacity(2);
    if !w_c.is_zero() {
        succ.push((eff, w_c.clone()));
    }
    let rest = P::one() - w_c.clone();
    if !rest.is_zero() {
        succ.push((noeff, rest));
    }
    out[pivot] = vec![Choice { action: GAMMA, succ }];
    out.push(Vec::new());
    ModifiedModel {
        choices: out,
        pivot,
        eff,
        noeff,
        w_c,
    }
}

fn check_pivot(model_effect: &StateSet, names: &[String], c: usize) -> Result<()> {
    if model_effect.contains(&c) {
        return Err(Error::StateInEffect(names[c].clone()));
    }
    Ok(())
}

/// Minimal probabilities of reaching the effect, from every state.
pub fn min_effect_values(model: &ConcreteModel, cfg: &SprConfig) -> Result<Vec<f64>> {
    Ok(reach(model.choices(), model.effect(), Objective::Min, &cfg.reach)?.values)
}

pub fn build_modified(model: &ConcreteModel, c: usize) -> Result<ModifiedModel> {
    check_pivot(model.effect(), &model.skeleton().states, c)?;
    let w = min_effect_values(model, &SprConfig::default())?;
    Ok(modify(model.choices(), c, effect_rep(model.effect()), w[c]))
}

fn effect_rep(effect: &StateSet) -> usize {
    *effect.iter().next().expect("effect set is nonempty")
}

/// Whether `target` is reachable from `from` using only the listed choices.
fn reachable_via<P>(choices: &[Vec<Choice<P>>], allowed: &[Vec<usize>], from: usize, target: usize) -> bool {
    let mut seen = vec![false; choices.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(s) = stack.pop() {
        if s == target {
            return true;
        }
        for &k in &allowed[s] {
            for (t, _) in &choices[s][k].succ {
                if !seen[*t] {
                    seen[*t] = true;
                    stack.push(*t);
                }
            }
        }
    }
    false
}

fn tau_with(model: &ConcreteModel, c: usize, w_c: f64, cfg: &SprConfig) -> Result<CauseVerdict> {
    let m = modify(model.choices(), c, effect_rep(model.effect()), w_c);
    let q = reach(&m.choices, model.effect(), Objective::Max, &cfg.reach)?;
    let s0 = model.initial();
    let q_s0 = q.values[s0];
    let d = w_c - q_s0;
    let branch = if d > cfg.kappa {
        Branch::StrictGreater
    } else if d < -cfg.kappa {
        Branch::StrictLess
    } else if reachable_via(&m.choices, &q.optimal, s0, c) {
        Branch::CornerReachable
    } else {
        Branch::CornerUnreachable
    };
    Ok(CauseVerdict::new(branch, w_c, q_s0))
}

pub fn tau(model: &ConcreteModel, c: usize) -> Result<CauseVerdict> {
    tau_cfg(model, c, &SprConfig::default())
}

pub fn tau_cfg(model: &ConcreteModel, c: usize, cfg: &SprConfig) -> Result<CauseVerdict> {
    check_pivot(model.effect(), &model.skeleton().states, c)?;
    let w = min_effect_values(model, cfg)?;
    tau_with(model, c, w[c], cfg)
}

/// Verdicts for every non-effect state (`None` on effect states).
pub fn tau_all(model: &ConcreteModel, cfg: &SprConfig) -> Result<Vec<Option<CauseVerdict>>> {
    let w = min_effect_values(model, cfg)?;
    (0..model.num_states())
        .map(|c| {
            if model.effect().contains(&c) {
                Ok(None)
            } else {
                tau_with(model, c, w[c], cfg).map(Some)
            }
        })
        .collect()
}

/// All singleton causes over the full state space.
pub fn singleton_causes(model: &ConcreteModel, cfg: &SprConfig) -> Result<StateSet> {
    Ok(tau_all(model, cfg)?
        .into_iter()
        .enumerate()
        .filter_map(|(c, v)| v.filter(CauseVerdict::is_cause).map(|_| c))
        .collect())
}

/// Singleton causes restricted to `restrict`.
pub fn singleton_cause_set(model: &ConcreteModel, restrict: &StateSet) -> Result<StateSet> {
    let cfg = SprConfig::default();
    let w = min_effect_values(model, &cfg)?;
    let mut out = StateSet::new();
    for &c in restrict {
        if !model.effect().contains(&c) && tau_with(model, c, w[c], &cfg)?.is_cause() {
            out.insert(c);
        }
    }
    Ok(out)
}

/// Every member is reachable from the initial state without touching the
/// other members.
pub fn check_m(graph: &SupportGraph, initial: usize, set: &StateSet) -> bool {
    set.iter().all(|&c| {
        let mut others = set.clone();
        others.remove(&c);
        graph.reachable_avoiding(initial, &others).contains(&c)
    })
}

pub fn is_spr_cause(model: &ConcreteModel, set: &StateSet) -> Result<bool> {
    if set.is_empty() {
        return Err(Error::EmptyCause);
    }
    for &c in set {
        check_pivot(model.effect(), &model.skeleton().states, c)?;
    }
    let singles = singleton_cause_set(model, set)?;
    Ok(set.is_subset(&singles) && check_m(&model.support_graph(), model.initial(), set))
}

/// The members of `causes` reachable without first passing another member.
pub fn canonical_from(graph: &SupportGraph, initial: usize, causes: &StateSet) -> StateSet {
    graph
        .reachable_avoiding(initial, causes)
        .intersection(causes)
        .copied()
        .collect()
}

pub fn canonical_cause(model: &ConcreteModel, restrict: &StateSet) -> Result<StateSet> {
    let causes = singleton_cause_set(model, restrict)?;
    Ok(canonical_from(&model.support_graph(), model.initial(), &causes))
}

/// Every path that visits `reference` and reaches the effect also visits `set`.
pub fn recall_covers(graph: &SupportGraph, initial: usize, effect: &StateSet, set: &StateSet, reference: &StateSet) -> bool {
    !graph.exists_path_via(initial, reference, effect, set)
}

/// Exact counterpart of [`CauseVerdict`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactVerdict {
    pub tau: i8,
    pub branch: Branch,
    pub w_c: BigRational,
    pub q_s0: BigRational,
}

/// The singleton check with exact arithmetic and exact equality in place of
/// the tolerance band.
pub fn tau_exact(model: &RationalModel, c: usize) -> Result<ExactVerdict> {
    let sk = model.skeleton();
    check_pivot(&sk.effect, &sk.states, c)?;
    let w = exact_reach(model.choices(), &sk.effect, Objective::Min)?;
    let m = modify(model.choices(), c, effect_rep(&sk.effect), w[c].clone());
    let q = exact_reach_modified(&m, &sk.effect)?;
    let s0 = sk.initial;
    let w_c = w[c].clone();
    let q_s0 = q[s0].clone();
    let branch = if w_c > q_s0 {
        Branch::StrictGreater
    } else if w_c < q_s0 {
        Branch::StrictLess
    } else if reachable_via(&m.choices, &exact_optimal_choices(&m.choices, &q), s0, c) {
        Branch::CornerReachable
    } else {
        Branch::CornerUnreachable
    };
    let tau = CauseVerdict::new(branch, 0.0, 0.0).tau;
    Ok(ExactVerdict { tau, branch, w_c, q_s0 })
}

fn exact_reach_modified(m: &ModifiedModel<BigRational>, effect: &StateSet) -> Result<Vec<BigRational>> {
    // the extra sink does not count against the cap
    crate::reach::exact_reach_capped(
        &m.choices,
        effect,
        Objective::Max,
        crate::reach::EXACT_STATE_CAP + 1,
    )
}

pub fn singleton_causes_exact(model: &RationalModel) -> Result<StateSet> {
    let sk = model.skeleton();
    let mut out = StateSet::new();
    for c in 0..model.num_states() {
        if !sk.effect.contains(&c) && tau_exact(model, c)?.tau == 1 {
            out.insert(c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Skeleton;
    use proptest::prelude::*;

    fn set(xs: &[usize]) -> StateSet {
        xs.iter().copied().collect()
    }

    fn ex1(p: f64, q: f64) -> ConcreteModel {
        fixtures::example1_model().instantiate(&[p, q]).unwrap()
    }

    fn named(m: &ConcreteModel, names: &[&str]) -> StateSet {
        m.skeleton().state_set(names).unwrap()
    }

    fn ix(m: &ConcreteModel, n: &str) -> usize {
        m.skeleton().state_index(n).unwrap()
    }

    #[test]
    fn example1_members_are_singleton_causes() {
        let m = ex1(0.3, 0.6);
        assert_eq!(tau(&m, ix(&m, "s2")).unwrap().tau, 1);
        let v3 = tau(&m, ix(&m, "s3")).unwrap();
        assert_eq!(v3.tau, 1);
        assert_eq!(v3.w_c, 1.0);
        assert!(is_spr_cause(&m, &named(&m, &["s2", "s3"])).unwrap());
    }

    #[test]
    fn modified_rows() {
        let m = ex1(0.3, 0.6);
        let s3 = ix(&m, "s3");
        let mm = build_modified(&m, s3).unwrap();
        assert_eq!(mm.choices[s3][0].succ, vec![(mm.eff, 1.0)]);
        assert_eq!(mm.noeff, m.num_states());
        assert!(mm.choices[mm.noeff].is_empty());
        let s4 = ix(&m, "s4");
        let mm = build_modified(&m, s4).unwrap();
        assert_eq!(mm.choices[s4][0].succ, vec![(mm.noeff, 1.0)]);
        assert!(matches!(build_modified(&m, ix(&m, "s5")), Err(Error::StateInEffect(_))));
    }

    #[test]
    fn example1_regimes() {
        for (p, q, expect) in [
            (0.3, 0.6, vec!["s2", "s3"]),
            (0.45, 0.35, vec!["s1", "s3"]),
            (0.5, 0.5, vec!["s3"]),
        ] {
            let m = ex1(p, q);
            let all: StateSet = (0..m.num_states()).collect();
            assert_eq!(canonical_cause(&m, &all).unwrap(), named(&m, &expect), "p={p} q={q}");
        }
    }

    #[test]
    fn two_route_verdicts() {
        let model = fixtures::two_route_model();
        let m = model.instantiate(&[0.5, 0.3]).unwrap();
        let s1 = ix(&m, "s1");
        assert_eq!(tau(&m, s1).unwrap().tau, 1);
        let all: StateSet = (0..m.num_states()).collect();
        assert_eq!(canonical_cause(&m, &all).unwrap(), set(&[s1]));
        let m = model.instantiate(&[0.2, 0.6]).unwrap();
        assert_eq!(tau(&m, s1).unwrap().tau, -1);
        assert!(!is_spr_cause(&m, &set(&[s1])).unwrap());
        assert!(canonical_cause(&m, &all).unwrap().is_empty());
    }

    #[test]
    fn two_route_s2_hits_corner() {
        // with q >= p^2 the s2 check lands exactly on the equality branch
        let m = fixtures::two_route_model().instantiate(&[0.5, 0.3]).unwrap();
        let v = tau(&m, ix(&m, "s2")).unwrap();
        assert_eq!(v.branch, Branch::CornerReachable);
    }

    #[test]
    fn unreachable_pivot_strict_branch() {
        // s0 -> e w.p. 1/2 else sink; x (unreachable) -> e surely
        let skel = Skeleton {
            states: vec!["s0".into(), "x".into(), "sink".into(), "e".into()],
            actions: vec!["a".into()],
            initial: 0,
            effect: set(&[3]),
        };
        let choices = vec![
            vec![Choice { action: 0, succ: vec![(2, 0.5), (3, 0.5)] }],
            vec![Choice { action: 0, succ: vec![(3, 1.0)] }],
            vec![Choice { action: 0, succ: vec![(2, 1.0)] }],
            vec![],
        ];
        let m = ConcreteModel::from_parts(skel, choices).unwrap();
        let v = tau(&m, 1).unwrap();
        assert_eq!((v.tau, v.branch), (1, Branch::StrictGreater));
    }

    #[test]
    fn effect_member_rejected() {
        let m = ex1(0.3, 0.6);
        assert!(matches!(is_spr_cause(&m, &named(&m, &["s5"])), Err(Error::StateInEffect(_))));
        assert!(matches!(is_spr_cause(&m, &StateSet::new()), Err(Error::EmptyCause)));
    }

    #[test]
    fn minimality() {
        let m = ex1(0.3, 0.6);
        let g = m.support_graph();
        let s0 = m.initial();
        assert!(check_m(&g, s0, &named(&m, &["s0"])));
        assert!(check_m(&g, s0, &named(&m, &["s2", "s3"])));
        // every path to s3 goes through s1 or s2
        assert!(!check_m(&g, s0, &named(&m, &["s1", "s2", "s3"])));
        assert!(!check_m(&g, s0, &named(&m, &["s2", "s1", "s3"])));
    }

    #[test]
    fn recall() {
        let m = ex1(0.3, 0.6);
        let g = m.support_graph();
        let (s0, e) = (m.initial(), m.effect().clone());
        let c23 = named(&m, &["s2", "s3"]);
        assert!(recall_covers(&g, s0, &e, &c23, &c23));
        assert!(recall_covers(&g, s0, &e, &named(&m, &["s3"]), &c23));
        assert!(!recall_covers(&g, s0, &e, &named(&m, &["s2"]), &c23));
        assert!(!g.exists_path_via(s0, &c23, &e, &named(&m, &["s3"])));
    }

    #[test]
    fn deterministic_verdicts() {
        let m = ex1(0.5, 0.5);
        for c in 0..5 {
            assert_eq!(tau(&m, c).unwrap(), tau(&m, c).unwrap());
        }
    }

    #[test]
    fn exact_matches_float_on_fixtures() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        for (p, q) in [(30, 60), (45, 35), (50, 50), (20, 70)] {
            let pm = fixtures::example1_model();
            let fm = pm.instantiate(&[p as f64 / 100.0, q as f64 / 100.0]).unwrap();
            let rm = pm.instantiate_rational(&[r(p, 100), r(q, 100)]).unwrap();
            assert_eq!(
                singleton_causes(&fm, &SprConfig::default()).unwrap(),
                singleton_causes_exact(&rm).unwrap()
            );
        }
    }

    /// Random small rational models: last state is the effect.
    fn arb_rational(max_states: usize) -> impl Strategy<Value = RationalModel> {
        (3..=max_states).prop_flat_map(|n| {
            let choice = prop::collection::vec((0..n, 1u32..4), 1..4).prop_map(|es| {
                let mut w = std::collections::BTreeMap::new();
                for (t, k) in es {
                    *w.entry(t).or_insert(0u32) += k;
                }
                let total: u32 = w.values().sum();
                w.into_iter()
                    .map(|(t, k)| (t, BigRational::new(k.into(), total.into())))
                    .collect::<Vec<_>>()
            });
            prop::collection::vec(prop::collection::vec(choice, 1..=2), n - 1).prop_map(move |rows| {
                let mut choices: Vec<Vec<Choice<BigRational>>> = rows
                    .into_iter()
                    .map(|cs| cs.into_iter().enumerate().map(|(a, succ)| Choice { action: a, succ }).collect())
                    .collect();
                choices.push(Vec::new());
                let skel = Skeleton {
                    states: (0..n).map(|i| format!("s{i}")).collect(),
                    actions: vec!["a".into(), "b".into()],
                    initial: 0,
                    effect: [n - 1].into_iter().collect(),
                };
                RationalModel::from_parts(skel, choices)
            })
        })
    }

    /// All subsets of non-effect states that are causes per the set-level
    /// characterization, computed with the exact singleton check.
    fn all_causes_exact(m: &RationalModel) -> Vec<StateSet> {
        let singles = singleton_causes_exact(m).unwrap();
        let g = m.support_graph();
        let cand: Vec<usize> = singles.iter().copied().collect();
        (1u32..(1 << cand.len()))
            .map(|mask| (0..cand.len()).filter(|i| mask >> i & 1 == 1).map(|i| cand[i]).collect::<StateSet>())
            .filter(|c| check_m(&g, m.skeleton().initial, c))
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn canonical_cause_dominates_recall(m in arb_rational(6)) {
            let fm = m.to_float();
            let g = fm.support_graph();
            let all: StateSet = (0..fm.num_states()).collect();
            let canon = canonical_cause(&fm, &all).unwrap();
            let exact_canon = canonical_from(&g, 0, &singleton_causes_exact(&m).unwrap());
            prop_assert_eq!(&canon, &exact_canon);
            for c in all_causes_exact(&m) {
                prop_assert!(recall_covers(&g, 0, fm.effect(), &canon, &c));
            }
        }

        #[test]
        fn set_causes_satisfy_both_conditions(m in arb_rational(6)) {
            let fm = m.to_float();
            let g = fm.support_graph();
            for c in all_causes_exact(&m) {
                prop_assert!(is_spr_cause(&fm, &c).unwrap());
                prop_assert!(check_m(&g, 0, &c));
                for &x in &c {
                    prop_assert_eq!(tau(&fm, x).unwrap().tau, 1);
                }
            }
        }
    }
}
