//! Parametric MDPs, their JSON format, and instantiation at parameter points.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::graph::SupportGraph;

/// Sets of states, by index. Ordered so that iteration and serialization
/// are deterministic.
pub type StateSet = BTreeSet<usize>;

const ENTRY_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpace {
    names: Vec<String>,
}

impl ParamSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Format("empty parameter name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Format(format!("duplicate parameter `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One enabled action at a state together with its successor distribution.
/// Successors with probability zero are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice<P = f64> {
    pub action: usize,
    pub succ: Vec<(usize, P)>,
}

/// Names, initial state and effect set shared between a parametric model and
/// all of its instantiations.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial: usize,
    pub effect: StateSet,
}

impl Skeleton {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "state",
                name: name.to_string(),
            })
    }

    pub fn state_set(&self, names: &[impl AsRef<str>]) -> Result<StateSet> {
        names.iter().map(|n| self.state_index(n.as_ref())).collect()
    }

    /// Identifiers of a state set, sorted by identifier.
    pub fn names_of(&self, set: &StateSet) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|&i| self.states[i].clone()).collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub action: usize,
    pub to: usize,
    pub prob: Expr,
}

#[derive(Debug, Clone)]
pub struct ParametricModel {
    skel: Arc<Skeleton>,
    params: ParamSpace,
    transitions: Vec<Transition>,
    /// Per state: (action, transition indices), actions in file order.
    groups: Vec<Vec<(usize, Vec<usize>)>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial: String,
    pub terminal_effect: Vec<String>,
    pub params: Vec<String>,
    pub transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: String,
}

pub fn parse_model(document: &str) -> Result<ParametricModel> {
    let doc: ModelDoc = serde_json::from_str(document).map_err(|e| Error::Format(e.to_string()))?;
    ParametricModel::from_doc(doc)
}

fn unique_index(names: &[String], kind: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(Error::Format(format!("duplicate {kind} `{n}`")));
        }
    }
    Ok(map)
}

impl ParametricModel {
    pub fn from_doc(doc: ModelDoc) -> Result<Self> {
        if doc.states.is_empty() {
            return Err(Error::Format("no states declared".into()));
        }
        let state_ix = unique_index(&doc.states, "state")?;
        let action_ix = unique_index(&doc.actions, "action")?;
        let params = ParamSpace::new(doc.params)?;
        let lookup = |map: &HashMap<String, usize>, kind: &'static str, name: &str| {
            map.get(name).copied().ok_or_else(|| Error::UnknownName {
                kind,
                name: name.to_string(),
            })
        };
        let initial = lookup(&state_ix, "state", &doc.initial)?;
        if doc.terminal_effect.is_empty() {
            return Err(Error::Format("effect set must be nonempty".into()));
        }
        let effect = doc
            .terminal_effect
            .iter()
            .map(|n| lookup(&state_ix, "state", n))
            .collect::<Result<StateSet>>()?;

        let mut seen = BTreeSet::new();
        let mut transitions = Vec::with_capacity(doc.transitions.len());
        for t in &doc.transitions {
            let from = lookup(&state_ix, "state", &t.from)?;
            let action = lookup(&action_ix, "action", &t.action)?;
            let to = lookup(&state_ix, "state", &t.to)?;
            if !seen.insert((from, action, to)) {
                return Err(Error::DuplicateTransition {
                    from: t.from.clone(),
                    action: t.action.clone(),
                    to: t.to.clone(),
                });
            }
            let prob = parse_expr(&t.prob, &params)?;
            transitions.push(Transition {
                from,
                action,
                to,
                prob,
            });
        }
        let skel = Skeleton {
            states: doc.states,
            actions: doc.actions,
            initial,
            effect,
        };
        Self::new(skel, params, transitions)
    }

    /// Builds and validates a model from already-indexed parts.
    pub fn new(skel: Skeleton, params: ParamSpace, transitions: Vec<Transition>) -> Result<Self> {
        let n = skel.num_states();
        if skel.effect.is_empty() {
            return Err(Error::Format("effect set must be nonempty".into()));
        }
        let mut groups: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); n];
        for (k, t) in transitions.iter().enumerate() {
            if t.from >= n || t.to >= n || t.action >= skel.actions.len() {
                return Err(Error::Format(format!("transition {k} references an undeclared index")));
            }
            groups[t.from].entry(t.action).or_default().push(k);
        }
        let dim = params.dim();
        let groups: Vec<Vec<(usize, Vec<usize>)>> = groups
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .filter(|(_, ks)| ks.iter().any(|&k| !transitions[k].prob.is_identically_zero(dim)))
                    .collect()
            })
            .collect();
        for (s, g) in groups.iter().enumerate() {
            let terminal = skel.effect.contains(&s);
            if terminal && !g.is_empty() {
                return Err(Error::Format(format!(
                    "effect state `{}` must not have enabled actions",
                    skel.states[s]
                )));
            }
            if !terminal && g.is_empty() {
                return Err(Error::Format(format!(
                    "state `{}` has no enabled action but is not in the effect set",
                    skel.states[s]
                )));
            }
        }
        Ok(Self {
            skel: Arc::new(skel),
            params,
            transitions,
            groups,
        })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skel
    }

    pub fn params(&self) -> &ParamSpace {
        &self.params
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Actions whose expressions are not all identically zero.
    pub fn enabled_actions(&self, s: usize) -> Vec<usize> {
        self.groups[s].iter().map(|(a, _)| *a).collect()
    }

    pub fn to_doc(&self) -> ModelDoc {
        let s = &self.skel;
        ModelDoc {
            states: s.states.clone(),
            actions: s.actions.clone(),
            initial: s.states[s.initial].clone(),
            terminal_effect: s.effect.iter().map(|&e| s.states[e].clone()).collect(),
            params: self.params.names().to_vec(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionDoc {
                    from: s.states[t.from].clone(),
                    action: s.actions[t.action].clone(),
                    to: s.states[t.to].clone(),
                    prob: t.prob.display(&self.params).to_string(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model document serializes")
    }

    fn ill_defined(&self, s: usize, a: usize, detail: String) -> Error {
        Error::IllDefined {
            state: self.skel.states[s].clone(),
            action: self.skel.actions[a].clone(),
            detail,
        }
    }

    pub fn instantiate(&self, u: &[f64]) -> Result<ConcreteModel> {
        if u.len() != self.params.dim() {
            return Err(Error::Dimension {
                expected: self.params.dim(),
                got: u.len(),
            });
        }
        let mut choices = Vec::with_capacity(self.groups.len());
        for (s, group) in self.groups.iter().enumerate() {
            let mut row_choices = Vec::with_capacity(group.len());
            for (a, ks) in group {
                let mut succ = Vec::with_capacity(ks.len());
                let mut sum = 0.0;
                for &k in ks {
                    let t = &self.transitions[k];
                    let v = t.prob.eval(u);
                    if !(-ENTRY_TOL..=1.0 + ENTRY_TOL).contains(&v) {
                        return Err(self.ill_defined(
                            s,
                            *a,
                            format!("entry to `{}` evaluates to {v}", self.skel.states[t.to]),
                        ));
                    }
                    let v = v.clamp(0.0, 1.0);
                    sum += v;
                    if v > 0.0 {
                        succ.push((t.to, v));
                    }
                }
                if succ.is_empty() {
                    // disabled at this particular parameter point
                    continue;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(self.ill_defined(s, *a, format!("row sums to {sum}")));
                }
                succ.sort_by_key(|&(t, _)| t);
                row_choices.push(Choice { action: *a, succ });
            }
            choices.push(row_choices);
        }
        Ok(ConcreteModel {
            skel: Arc::clone(&self.skel),
            u: u.to_vec(),
            choices,
        })
    }

    /// Exact instantiation; rows must sum to exactly one.
    pub fn instantiate_rational(&self, u: &[BigRational]) -> Result<RationalModel> {
        if u.len() != self.params.dim() {
            return Err(Error::Dimension {
                expected: self.params.dim(),
                got: u.len(),
            });
        }
        let one = BigRational::one();
        let mut choices = Vec::with_capacity(self.groups.len());
        for (s, group) in self.groups.iter().enumerate() {
            let mut row_choices = Vec::new();
            for (a, ks) in group {
                let mut succ = Vec::new();
                let mut sum = BigRational::zero();
                for &k in ks {
                    let t = &self.transitions[k];
                    let v = t
                        .prob
                        .eval_rational(u)
                        .ok_or_else(|| self.ill_defined(s, *a, "division by zero".into()))?;
                    if v < BigRational::zero() || v > one {
                        return Err(self.ill_defined(s, *a, format!("entry {v} outside [0,1]")));
                    }
                    sum += &v;
                    if !v.is_zero() {
                        succ.push((t.to, v));
                    }
                }
                if succ.is_empty() {
                    continue;
                }
                if sum != one {
                    return Err(self.ill_defined(s, *a, format!("row sums to {sum}")));
                }
                succ.sort_by_key(|(t, _)| *t);
                row_choices.push(Choice { action: *a, succ });
            }
            choices.push(row_choices);
        }
        Ok(RationalModel {
            skel: Arc::clone(&self.skel),
            choices,
        })
    }
}

/// A parametric model instantiated at a parameter point.
#[derive(Debug, Clone)]
pub struct ConcreteModel {
    skel: Arc<Skeleton>,
    u: Vec<f64>,
    choices: Vec<Vec<Choice>>,
}

impl ConcreteModel {
    /// Builds a concrete model directly; rows are validated like instantiation.
    pub fn from_parts(skel: Skeleton, choices: Vec<Vec<Choice>>) -> Result<Self> {
        if choices.len() != skel.num_states() {
            return Err(Error::Format("one choice list per state required".into()));
        }
        for (s, cs) in choices.iter().enumerate() {
            for c in cs {
                let sum: f64 = c.succ.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || c.succ.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::IllDefined {
                        state: skel.states[s].clone(),
                        action: skel.actions.get(c.action).cloned().unwrap_or_default(),
                        detail: format!("row sums to {sum}"),
                    });
                }
            }
        }
        Ok(Self {
            skel: Arc::new(skel),
            u: Vec::new(),
            choices,
        })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skel
    }

    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    pub fn initial(&self) -> usize {
        self.skel.initial
    }

    pub fn effect(&self) -> &StateSet {
        &self.skel.effect
    }

    pub fn point(&self) -> &[f64] {
        &self.u
    }

    pub fn choices(&self) -> &[Vec<Choice>] {
        &self.choices
    }

    /// Dense probability row of the `k`-th enabled choice at `s`.
    pub fn row(&self, s: usize, k: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.num_states()];
        for &(t, p) in &self.choices[s][k].succ {
            r[t] = p;
        }
        r
    }

    pub fn support_graph(&self) -> SupportGraph {
        SupportGraph::from_choices(&self.choices)
    }
}

/// A model with exact rational probabilities, used by the oracles.
#[derive(Debug, Clone)]
pub struct RationalModel {
    skel: Arc<Skeleton>,
    choices: Vec<Vec<Choice<BigRational>>>,
}

impl RationalModel {
    pub fn from_parts(skel: Skeleton, choices: Vec<Vec<Choice<BigRational>>>) -> Self {
        Self {
            skel: Arc::new(skel),
            choices,
        }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skel
    }

    pub fn num_states(&self) -> usize {
        self.choices.len()
    }

    pub fn choices(&self) -> &[Vec<Choice<BigRational>>] {
        &self.choices
    }

    /// Float image of the model, for comparing against the float pipeline.
    pub fn to_float(&self) -> ConcreteModel {
        use num_traits::ToPrimitive;
        let choices = self
            .choices
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|c| Choice {
                        action: c.action,
                        succ: c.succ.iter().map(|(t, p)| (*t, p.to_f64().unwrap_or(f64::NAN))).collect(),
                    })
                    .collect()
            })
            .collect();
        ConcreteModel {
            skel: Arc::clone(&self.skel),
            u: Vec::new(),
            choices,
        }
    }

    pub fn support_graph(&self) -> SupportGraph {
        SupportGraph::from_choices(&self.choices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    const TWO_STATE: &str = r#"{
        "states": ["s0", "e"], "actions": ["a"], "initial": "s0",
        "terminal_effect": ["e"], "params": ["p"],
        "transitions": [
            {"from": "s0", "action": "a", "to": "e", "prob": "p"},
            {"from": "s0", "action": "a", "to": "s0", "prob": "1-p"}
        ]}"#;

    #[test]
    fn two_state_model() {
        let m = parse_model(TWO_STATE).unwrap();
        assert_eq!(m.enabled_actions(0), vec![0]);
        assert!(m.enabled_actions(1).is_empty());
        let c = m.instantiate(&[0.25]).unwrap();
        assert_eq!(c.row(0, 0), vec![0.75, 0.25]);
        assert!(c.choices()[1].is_empty());
    }

    #[test]
    fn out_of_range_parameter() {
        let m = parse_model(TWO_STATE).unwrap();
        match m.instantiate(&[1.3]) {
            Err(Error::IllDefined { state, action, .. }) => {
                assert_eq!((state.as_str(), action.as_str()), ("s0", "a"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(m.instantiate(&[0.1, 0.2]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn tiny_overshoot_is_clamped() {
        let m = parse_model(&TWO_STATE.replace("\"p\"}", "\"p + 0.0000000000001\"}")).unwrap();
        let c = m.instantiate(&[1.0]).unwrap();
        assert_eq!(c.row(0, 0), vec![0.0, 1.0]);
    }

    #[test]
    fn missing_effect_key() {
        let doc = TWO_STATE.replace("\"terminal_effect\": [\"e\"],", "");
        assert!(matches!(parse_model(&doc), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let doc = TWO_STATE.replace("\"initial\"", "\"rewards\": [], \"initial\"");
        assert!(matches!(parse_model(&doc), Err(Error::Format(_))));
    }

    #[test]
    fn empty_effect_rejected() {
        let doc = TWO_STATE.replace("\"terminal_effect\": [\"e\"]", "\"terminal_effect\": []");
        assert!(matches!(parse_model(&doc), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_transition() {
        let doc = TWO_STATE.replace(
            "\"prob\": \"1-p\"}",
            "\"prob\": \"1-p\"}, {\"from\": \"s0\", \"action\": \"a\", \"to\": \"e\", \"prob\": \"0\"}",
        );
        assert!(matches!(parse_model(&doc), Err(Error::DuplicateTransition { .. })));
    }

    #[test]
    fn dangling_reference() {
        let doc = TWO_STATE.replace("\"to\": \"e\"", "\"to\": \"x\"");
        assert!(matches!(parse_model(&doc), Err(Error::UnknownName { kind: "state", .. })));
        let doc = TWO_STATE.replace("\"action\": \"a\", \"to\": \"e\"", "\"action\": \"b\", \"to\": \"e\"");
        assert!(matches!(parse_model(&doc), Err(Error::UnknownName { kind: "action", .. })));
    }

    #[test]
    fn example1_enabled_actions() {
        let m = fixtures::example1_model();
        let sk = m.skeleton();
        let a = sk.actions.iter().position(|x| x == "a").unwrap();
        let b = sk.actions.iter().position(|x| x == "b").unwrap();
        for (s, name) in sk.states.iter().enumerate() {
            let en = m.enabled_actions(s);
            match name.as_str() {
                "s0" => assert_eq!(en, vec![a, b]),
                "s5" => assert!(en.is_empty()),
                _ => assert_eq!(en, vec![a]),
            }
        }
    }

    #[test]
    fn two_route_rows_sum_to_one() {
        let m = fixtures::two_route_model();
        let c = m.instantiate(&[0.5, 0.3]).unwrap();
        for s in 0..c.num_states() {
            for k in 0..c.choices()[s].len() {
                assert_eq!(c.row(s, k).iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let m = fixtures::example1_model();
        let back = parse_model(&m.to_json()).unwrap();
        assert_eq!(back.transitions(), m.transitions());
        assert_eq!(back.skeleton(), m.skeleton());
    }

    #[test]
    fn rational_instantiation_is_exact() {
        let m = fixtures::example1_model();
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let rm = m.instantiate_rational(&[r(3, 10), r(6, 10)]).unwrap();
        let s0 = &rm.choices()[0][0];
        let total: BigRational = s0.succ.iter().map(|(_, p)| p.clone()).sum();
        assert_eq!(total, BigRational::one());
    }

    fn pair_model(es: &[f64]) -> String {
        // chain s0 -> s1 -> ... -> e, each row {next: e_i, self: 1 - e_i}
        let n = es.len();
        let mut states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        states.push("e".into());
        let mut trans = Vec::new();
        for i in 0..n {
            let next = &states[i + 1];
            trans.push(format!(
                r#"{{"from":"s{i}","action":"a","to":"{next}","prob":"{:?}*x"}}"#,
                es[i]
            ));
            trans.push(format!(
                r#"{{"from":"s{i}","action":"a","to":"s{i}","prob":"1 - {:?}*x"}}"#,
                es[i]
            ));
        }
        format!(
            r#"{{"states":{},"actions":["a"],"initial":"s0","terminal_effect":["e"],"params":["x"],"transitions":[{}]}}"#,
            serde_json::to_string(&states).unwrap(),
            trans.join(",")
        )
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(es in prop::collection::vec(0.01f64..1.0, 1..6), x in 0.0f64..1.0) {
            let m = parse_model(&pair_model(&es)).unwrap();
            let c = m.instantiate(&[x]).unwrap();
            for (s, cs) in c.choices().iter().enumerate() {
                for k in 0..cs.len() {
                    let sum: f64 = c.row(s, k).iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-9);
                }
            }
        }
    }
}
