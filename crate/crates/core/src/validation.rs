//! Independent estimates of cause and recall-optimal probabilities, naive
//! baselines, and an interventional diagnostic.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ParametricModel, RationalModel, StateSet};
use crate::reach::chain_reach_exact;
use crate::sampler::{sample, DistSpec};
use crate::spr::{canonical_cause, canonical_from, check_m, is_spr_cause, recall_covers, singleton_cause_set};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub m: usize,
    pub half_width: f64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_hits(hits: usize, m: usize, seed: u64) -> Self {
        let p = hits as f64 / m as f64;
        Self {
            estimate: p,
            m,
            half_width: 3.0 * (p * (1.0 - p) / m as f64).sqrt(),
            seed,
        }
    }
}

/// Fraction of fresh samples on which `set` is a cause.
pub fn mc_f(model: &ParametricModel, dist: &DistSpec, set: &StateSet, m: usize, seed: u64) -> Result<Estimate> {
    if set.is_empty() {
        return Err(Error::EmptyCause);
    }
    let batch = sample(dist, m, seed)?;
    let hits: Vec<bool> = batch
        .points
        .par_iter()
        .map(|u| is_spr_cause(&model.instantiate(u)?, set))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_hits(hits.iter().filter(|&&h| h).count(), m, seed))
}

/// For every fresh sample and every member of `collection`, whether that
/// member is a cause within `restrict` covering every effect path through
/// the sample's canonical cause.
pub fn recall_indicators(
    model: &ParametricModel,
    dist: &DistSpec,
    collection: &[StateSet],
    restrict: &StateSet,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let batch = sample(dist, m, seed)?;
    let s0 = model.skeleton().initial;
    let effect = &model.skeleton().effect;
    batch
        .points
        .par_iter()
        .map(|u| {
            let cm = model.instantiate(u)?;
            let causes = singleton_cause_set(&cm, restrict)?;
            let g = cm.support_graph();
            let canon = canonical_from(&g, s0, &causes);
            Ok(collection
                .iter()
                .map(|c| {
                    !canon.is_empty()
                        && !c.is_empty()
                        && c.is_subset(&causes)
                        && check_m(&g, s0, c)
                        && recall_covers(&g, s0, effect, c, &canon)
                })
                .collect())
        })
        .collect()
}

/// Fraction of fresh samples on which the collection contains a
/// recall-optimal cause.
pub fn mc_r(
    model: &ParametricModel,
    dist: &DistSpec,
    collection: &[StateSet],
    restrict: &StateSet,
    m: usize,
    seed: u64,
) -> Result<Estimate> {
    let ind = recall_indicators(model, dist, collection, restrict, m, seed)?;
    let hits = ind.iter().filter(|row| row.iter().any(|&b| b)).count();
    Ok(Estimate::from_hits(hits, m, seed))
}

pub const SUBSET_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetGap {
    pub r: Estimate,
    /// Every proper subset (as member indices) with its estimate.
    pub subsets: Vec<(Vec<usize>, Estimate)>,
    pub max_sub: f64,
    pub gap: f64,
}

/// Recall-optimal probability of the whole collection against all its
/// proper subsets, evaluated on one common set of fresh samples.
pub fn subset_r_gap(
    model: &ParametricModel,
    dist: &DistSpec,
    members: &[StateSet],
    restrict: &StateSet,
    m: usize,
    seed: u64,
) -> Result<SubsetGap> {
    let k = members.len();
    if k > SUBSET_CAP {
        return Err(Error::CapExceeded(format!("{k} members exceed the subset cap of {SUBSET_CAP}")));
    }
    let ind = recall_indicators(model, dist, members, restrict, m, seed)?;
    let est = |mask: u32| {
        let hits = ind
            .iter()
            .filter(|row| (0..k).any(|i| mask >> i & 1 == 1 && row[i]))
            .count();
        Estimate::from_hits(hits, m, seed)
    };
    let full = (1u32 << k) - 1;
    let r = est(full);
    let subsets: Vec<(Vec<usize>, Estimate)> = (0..full)
        .map(|mask| ((0..k).filter(|i| mask >> i & 1 == 1).collect(), est(mask)))
        .collect();
    let max_sub = subsets.iter().map(|(_, e)| e.estimate).fold(0.0, f64::max);
    Ok(SubsetGap {
        r,
        subsets,
        max_sub,
        gap: r.estimate - max_sub,
    })
}

/// Canonical cause at the mean parameter.
pub fn baseline_na1(model: &ParametricModel, dist: &DistSpec) -> Result<StateSet> {
    let m = model.instantiate(&dist.mean_param())?;
    let all: StateSet = (0..m.num_states()).collect();
    canonical_cause(&m, &all)
}

/// Distinct canonical causes at the corners of the support box, in order of
/// first appearance.
pub fn baseline_na2(model: &ParametricModel, dist: &DistSpec) -> Result<Vec<StateSet>> {
    let mut out: Vec<StateSet> = Vec::new();
    for u in dist.vertex_params() {
        let m = model.instantiate(&u)?;
        let all: StateSet = (0..m.num_states()).collect();
        let c = canonical_cause(&m, &all)?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalDiff {
    pub max: BigRational,
    pub min: BigRational,
    /// Choice index per state (0 at terminal states) and the resulting
    /// difference, for every deterministic memoryless policy.
    pub per_policy: Vec<(Vec<usize>, BigRational)>,
}

pub const DIFF_STATE_CAP: usize = 10;
pub const DIFF_ACTION_CAP: usize = 2;

/// `Pr(<>E | <>C) - Pr(<>E | !<>C)` over deterministic memoryless policies,
/// with an undefined conditional read as zero. A heuristic diagnostic only:
/// extremes over general policies may differ.
pub fn interventional_diff(model: &RationalModel, set: &StateSet) -> Result<InterventionalDiff> {
    let n = model.num_states();
    let choices = model.choices();
    if n > DIFF_STATE_CAP || choices.iter().any(|cs| cs.len() > DIFF_ACTION_CAP) {
        return Err(Error::CapExceeded(format!(
            "policy enumeration needs at most {DIFF_STATE_CAP} states and {DIFF_ACTION_CAP} actions per state"
        )));
    }
    let sk = model.skeleton();
    let s0 = sk.initial;
    let mut per_policy = Vec::new();
    let mut pol = vec![0usize; n];
    loop {
        let rows: Vec<Option<&[(usize, BigRational)]>> = (0..n)
            .map(|s| (!choices[s].is_empty()).then(|| choices[s][pol[s]].succ.as_slice()))
            .collect();
        let x = chain_reach_exact(&rows, &sk.effect);
        let stopped: Vec<Option<&[(usize, BigRational)]>> = (0..n)
            .map(|s| if set.contains(&s) { None } else { rows[s] })
            .collect();
        let p_c = chain_reach_exact(&stopped, set)[s0].clone();
        let mut p_ce = BigRational::zero();
        for &c in set {
            let first: StateSet = [c].into_iter().collect();
            p_ce += chain_reach_exact(&stopped, &first)[s0].clone() * &x[c];
        }
        let p_e = x[s0].clone();
        let cond_c = if p_c.is_zero() { BigRational::zero() } else { &p_ce / &p_c };
        let not_c = BigRational::one() - &p_c;
        let cond_not = if not_c.is_zero() {
            BigRational::zero()
        } else {
            (p_e - &p_ce) / not_c
        };
        per_policy.push((pol.clone(), cond_c - cond_not));

        let mut i = 0;
        loop {
            if i == n {
                let max = per_policy.iter().map(|(_, d)| d.clone()).max().expect("one policy");
                let min = per_policy.iter().map(|(_, d)| d.clone()).min().expect("one policy");
                return Ok(InterventionalDiff { max, min, per_policy });
            }
            if pol[i] + 1 < choices[i].len() {
                pol[i] += 1;
                break;
            }
            pol[i] = 0;
            i += 1;
        }
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
