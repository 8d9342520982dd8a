//! Extremal reachability probabilities.
//!
//! Floating point values come from Gauss-Seidel value iteration after pinning
//! the qualitatively determined states; exact values come from policy
//! iteration over rationals and serve as an independent oracle.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::{Choice, StateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachConfig {
    pub residual: f64,
    pub max_sweeps: usize,
    /// Tolerance deciding whether an action attains the optimum.
    pub kappa_act: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            max_sweeps: 1_000_000,
            kappa_act: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualitativeSets {
    pub prob0: Vec<bool>,
    pub prob1: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachValues {
    pub objective: Objective,
    pub target: StateSet,
    pub values: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
    /// Per state, indices (into the state's choice list) of optimal choices.
    pub optimal: Vec<Vec<usize>>,
}

/// States from which `target` can be reached at all.
fn can_reach<P>(choices: &[Vec<Choice<P>>], target: &StateSet) -> Vec<bool> {
    let n = choices.len();
    let mut pred = vec![Vec::new(); n];
    for (s, cs) in choices.iter().enumerate() {
        for c in cs {
            for (t, _) in &c.succ {
                pred[*t].push(s);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = target.iter().copied().collect();
    for &t in target {
        seen[t] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &pred[s] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// States that can avoid `target` forever with probability one: the greatest
/// set X outside the target where every state of X is terminal or has an
/// action staying inside X.
fn min_prob0<P>(choices: &[Vec<Choice<P>>], target: &StateSet) -> Vec<bool> {
    let n = choices.len();
    let mut x: Vec<bool> = (0..n).map(|s| !target.contains(&s)).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !x[s] || choices[s].is_empty() {
                continue;
            }
            let stays = choices[s].iter().any(|c| c.succ.iter().all(|(t, _)| x[*t]));
            if !stays {
                x[s] = false;
                changed = true;
            }
        }
        if !changed {
            return x;
        }
    }
}

/// States from which every policy reaches `target` almost surely: those that
/// cannot reach a [`min_prob0`] state through non-target states.
fn min_prob1<P>(choices: &[Vec<Choice<P>>], target: &StateSet, prob0: &[bool]) -> Vec<bool> {
    let n = choices.len();
    let mut pred = vec![Vec::new(); n];
    for (s, cs) in choices.iter().enumerate() {
        for c in cs {
            for (t, _) in &c.succ {
                pred[*t].push(s);
            }
        }
    }
    let mut escape = prob0.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| prob0[s]).collect();
    while let Some(s) = stack.pop() {
        for &p in &pred[s] {
            if !escape[p] && !target.contains(&p) {
                escape[p] = true;
                stack.push(p);
            }
        }
    }
    escape.into_iter().map(|b| !b).collect()
}

/// States from which some policy reaches `target` almost surely.
fn max_prob1<P>(choices: &[Vec<Choice<P>>], target: &StateSet) -> Vec<bool> {
    let n = choices.len();
    let mut u = vec![true; n];
    loop {
        let mut r: Vec<bool> = (0..n).map(|s| target.contains(&s)).collect();
        loop {
            let mut changed = false;
            for s in 0..n {
                if r[s] || !u[s] {
                    continue;
                }
                let ok = choices[s].iter().any(|c| {
                    c.succ.iter().all(|(t, _)| u[*t]) && c.succ.iter().any(|(t, _)| r[*t])
                });
                if ok {
                    r[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if r == u {
            return u;
        }
        u = r;
    }
}

pub fn qualitative<P>(choices: &[Vec<Choice<P>>], target: &StateSet, objective: Objective) -> QualitativeSets {
    match objective {
        Objective::Max => QualitativeSets {
            prob0: can_reach(choices, target).into_iter().map(|b| !b).collect(),
            prob1: max_prob1(choices, target),
        },
        Objective::Min => {
            let prob0 = min_prob0(choices, target);
            let prob1 = min_prob1(choices, target, &prob0);
            QualitativeSets { prob0, prob1 }
        }
    }
}

fn expect(c: &Choice, x: &[f64]) -> f64 {
    c.succ.iter().map(|&(t, p)| p * x[t]).sum()
}

pub fn reach(
    choices: &[Vec<Choice>],
    target: &StateSet,
    objective: Objective,
    cfg: &ReachConfig,
) -> Result<ReachValues> {
    let n = choices.len();
    let q = qualitative(choices, target, objective);
    let mut x = vec![0.0; n];
    let mut free = Vec::new();
    for s in 0..n {
        if target.contains(&s) || q.prob1[s] {
            x[s] = 1.0;
        } else if !q.prob0[s] {
            free.push(s);
        }
    }
    let mut residual = 0.0;
    let mut sweeps = 0;
    if !free.is_empty() {
        loop {
            if sweeps >= cfg.max_sweeps {
                return Err(Error::NoConvergence(cfg.max_sweeps));
            }
            sweeps += 1;
            residual = 0.0f64;
            for &s in &free {
                let vals = choices[s].iter().map(|c| expect(c, &x));
                let v = match objective {
                    Objective::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                    Objective::Min => vals.fold(f64::INFINITY, f64::min),
                };
                residual = residual.max((v - x[s]).abs());
                x[s] = v;
            }
            if residual <= cfg.residual {
                break;
            }
        }
    }
    for v in &mut x {
        *v = v.clamp(0.0, 1.0);
    }
    let optimal = (0..n)
        .map(|s| {
            (0..choices[s].len())
                .filter(|&k| (x[s] - expect(&choices[s][k], &x)).abs() <= cfg.kappa_act)
                .collect()
        })
        .collect();
    Ok(ReachValues {
        objective,
        target: target.clone(),
        values: x,
        residual,
        sweeps,
        optimal,
    })
}

pub fn max_reach(choices: &[Vec<Choice>], target: &StateSet) -> Result<ReachValues> {
    reach(choices, target, Objective::Max, &ReachConfig::default())
}

pub fn min_reach(choices: &[Vec<Choice>], target: &StateSet) -> Result<ReachValues> {
    reach(choices, target, Objective::Min, &ReachConfig::default())
}

/// Cap on the state count accepted by [`exact_reach`].
pub const EXACT_STATE_CAP: usize = 12;

/// Solves `A x = b` exactly; `a` is square and assumed nonsingular.
pub(crate) fn solve_linear(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("policy evaluation system is nonsingular");
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = BigRational::one() / &a[col][col];
        for k in col..n {
            a[col][k] = &a[col][k] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for k in col..n {
                let d = &f * &a[col][k];
                a[r][k] -= d;
            }
            let d = &f * &b[col];
            b[r] -= d;
        }
    }
    b
}

/// Exact reachability probabilities of the Markov chain induced by picking
/// one successor distribution per state (`None` for terminal states).
pub fn chain_reach_exact(rows: &[Option<&[(usize, BigRational)]>], target: &StateSet) -> Vec<BigRational> {
    let n = rows.len();
    let choices: Vec<Vec<Choice<BigRational>>> = rows
        .iter()
        .map(|r| match r {
            Some(succ) => vec![Choice {
                action: 0,
                succ: succ.to_vec(),
            }],
            None => Vec::new(),
        })
        .collect();
    let reach = can_reach(&choices, target);
    let unknown: Vec<usize> = (0..n).filter(|&s| reach[s] && !target.contains(&s)).collect();
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in unknown.iter().enumerate() {
        pos[s] = i;
    }
    let m = unknown.len();
    let mut a = vec![vec![BigRational::zero(); m]; m];
    let mut b = vec![BigRational::zero(); m];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = BigRational::one();
        for (t, p) in rows[s].expect("a state that reaches the target is not terminal") {
            if target.contains(t) {
                b[i] += p;
            } else if pos[*t] != usize::MAX {
                a[i][pos[*t]] -= p;
            }
        }
    }
    let sol = solve_linear(a, b);
    (0..n)
        .map(|s| {
            if target.contains(&s) {
                BigRational::one()
            } else if pos[s] != usize::MAX {
                sol[pos[s]].clone()
            } else {
                BigRational::zero()
            }
        })
        .collect()
}

fn expect_exact(c: &Choice<BigRational>, x: &[BigRational]) -> BigRational {
    c.succ.iter().map(|(t, p)| p * &x[*t]).sum()
}

/// Exact optimal reachability values by policy iteration.
pub fn exact_reach(
    choices: &[Vec<Choice<BigRational>>],
    target: &StateSet,
    objective: Objective,
) -> Result<Vec<BigRational>> {
    exact_reach_capped(choices, target, objective, EXACT_STATE_CAP)
}

pub fn exact_reach_capped(
    choices: &[Vec<Choice<BigRational>>],
    target: &StateSet,
    objective: Objective,
    cap: usize,
) -> Result<Vec<BigRational>> {
    let n = choices.len();
    if n > cap {
        return Err(Error::CapExceeded(format!("{n} states exceed the exact-solver cap of {cap}")));
    }
    let q = qualitative(choices, target, objective);
    let active = |s: usize| !target.contains(&s) && !q.prob0[s] && !choices[s].is_empty();
    let mut policy = vec![0usize; n];
    loop {
        let rows: Vec<Option<&[(usize, BigRational)]>> = (0..n)
            .map(|s| active(s).then(|| choices[s][policy[s]].succ.as_slice()))
            .collect();
        let x = chain_reach_exact(&rows, target);
        let mut changed = false;
        for s in (0..n).filter(|&s| active(s)) {
            let mut best = policy[s];
            let mut best_v = expect_exact(&choices[s][best], &x);
            for (k, c) in choices[s].iter().enumerate() {
                let v = expect_exact(c, &x);
                let better = match objective {
                    Objective::Max => v > best_v,
                    Objective::Min => v < best_v,
                };
                if better {
                    best = k;
                    best_v = v;
                }
            }
            if best != policy[s] {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(x);
        }
    }
}

/// Choices attaining the exact optimum `x` at every state.
pub fn exact_optimal_choices(choices: &[Vec<Choice<BigRational>>], x: &[BigRational]) -> Vec<Vec<usize>> {
    choices
        .iter()
        .enumerate()
        .map(|(s, cs)| {
            (0..cs.len())
                .filter(|&k| (expect_exact(&cs[k], x) - &x[s]).abs().is_zero())
                .collect()
        })
        .collect()
}
