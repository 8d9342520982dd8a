//! End-to-end identification: candidate filtering, per-sample canonical
//! causes, cover sets, index selection and the final bounds.

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{analyze, count_m, count_n, t_star, Frame, SampleAnalysis};
use crate::error::{Error, Result};
use crate::model::{ParametricModel, Skeleton, StateSet};
use crate::sampler::{sample, DistSpec};
use crate::spr::SprConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub n: usize,
    pub delta: f64,
    pub beta: f64,
    pub seed: u64,
    /// Keep candidates with `eta >= delta` instead of `eta > delta`.
    pub geq_filter: bool,
    pub spr: SprConfig,
}

impl SolveConfig {
    pub fn new(n: usize, delta: f64, beta: f64, seed: u64) -> Self {
        Self {
            n,
            delta,
            beta,
            seed,
            geq_filter: false,
            spr: SprConfig::default(),
        }
    }

    fn passes(&self, eta: f64) -> bool {
        if self.geq_filter {
            eta >= self.delta
        } else {
            eta > self.delta
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedMember {
    pub set: StateSet,
    pub eta: f64,
    pub filter: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauseSolution {
    pub members: Vec<StateSet>,
    pub eta: Vec<f64>,
    pub n: Vec<usize>,
    pub zeta: f64,
    pub m: usize,
    pub s_n: StateSet,
    /// Selected sample indices (0-based) with the sizes of their cover sets.
    pub indices: Vec<usize>,
    pub cover_sizes: Vec<usize>,
    pub delta: f64,
    pub beta: f64,
    pub big_n: usize,
    pub seed: u64,
    pub empty_canonical_samples: usize,
    pub excluded: Vec<ExcludedMember>,
    /// Canonical cause of every sample over `s_n`.
    pub canonical: Vec<StateSet>,
}

impl CauseSolution {
    pub fn no_cause(&self) -> bool {
        self.members.is_empty()
    }
}

/// States whose singleton lower bound clears `delta`.
pub fn filter_states(analyses: &[SampleAnalysis], skel: &Skeleton, cfg: &SolveConfig) -> Result<StateSet> {
    let n = analyses.len();
    let mut counts = vec![0usize; skel.num_states()];
    for a in analyses {
        for &c in &a.singles {
            counts[c] += 1;
        }
    }
    let mut out = StateSet::new();
    for c in (0..skel.num_states()).filter(|c| !skel.effect.contains(c)) {
        // a singleton always satisfies minimality, so the count is the
        // number of samples where c is a singleton cause
        if cfg.passes(t_star(n - counts[c], n, cfg.beta)?) {
            out.insert(c);
        }
    }
    Ok(out)
}

/// Cover set of a candidate cause: samples where it is a recall-covering
/// cause within `s_n`, plus samples without a canonical cause.
pub fn cover_of(
    set: &StateSet,
    canonical: &[StateSet],
    analyses: &[SampleAnalysis],
    s_n: &StateSet,
    frame: Frame<'_>,
) -> FixedBitSet {
    let mut bits = FixedBitSet::with_capacity(analyses.len());
    for (j, a) in analyses.iter().enumerate() {
        if canonical[j].is_empty() || a.covers(frame, set, s_n, &canonical[j]) {
            bits.insert(j);
        }
    }
    bits
}

pub fn cover_set(
    i: usize,
    canonical: &[StateSet],
    analyses: &[SampleAnalysis],
    s_n: &StateSet,
    frame: Frame<'_>,
) -> FixedBitSet {
    cover_of(&canonical[i], canonical, analyses, s_n, frame)
}

/// Greedy cover followed by removal of redundant indices. `covers[i]` is
/// `None` for indices that are not candidates; `universe` is the set of
/// indices that must be covered.
pub fn select_indices(covers: &[Option<FixedBitSet>], universe: &FixedBitSet) -> Vec<usize> {
    let mut uncovered = universe.clone();
    let mut chosen = Vec::new();
    while uncovered.count_ones(..) > 0 {
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, c) in covers.iter().enumerate() {
            let Some(c) = c else { continue };
            let gain = c.intersection(&uncovered).count();
            let size = c.count_ones(..);
            if gain > 0 && best.is_none_or(|(g, s, _)| (gain, size) > (g, s)) {
                best = Some((gain, size, i));
            }
        }
        let (_, _, i) = best.expect("every index to cover has a cover set containing it");
        uncovered.difference_with(covers[i].as_ref().expect("chosen index is a candidate"));
        chosen.push(i);
    }
    let mut order = chosen.clone();
    order.sort_by_key(|&i| (covers[i].as_ref().map_or(0, |c| c.count_ones(..)), i));
    let mut kept: BTreeSet<usize> = chosen.into_iter().collect();
    for i in order {
        let mut others = FixedBitSet::with_capacity(universe.len());
        for &j in kept.iter().filter(|&&j| j != i) {
            others.union_with(covers[j].as_ref().expect("kept index is a candidate"));
        }
        let mine = covers[i].as_ref().expect("kept index is a candidate");
        if mine.intersection(universe).all(|b| others.contains(b)) {
            kept.remove(&i);
        }
    }
    kept.into_iter().collect()
}

pub fn solve(model: &ParametricModel, dist: &DistSpec, cfg: &SolveConfig) -> Result<CauseSolution> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.delta) {
        return Err(Error::InvalidArgument(format!("delta = {} outside [0, 1)", cfg.delta)));
    }
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {} outside (0, 1)", cfg.beta)));
    }
    let batch = sample(dist, cfg.n, cfg.seed)?;
    let analyses = analyze(model, &batch, &cfg.spr)?;
    solve_analyses(model, &analyses, cfg)
}

/// Identification on precomputed sample analyses.
pub fn solve_analyses(model: &ParametricModel, analyses: &[SampleAnalysis], cfg: &SolveConfig) -> Result<CauseSolution> {
    let skel = model.skeleton();
    let frame = Frame::of(model);
    let n = analyses.len();
    let s_n = filter_states(analyses, skel, cfg)?;
    let canonical: Vec<StateSet> = analyses.par_iter().map(|a| a.canonical(frame, &s_n)).collect();

    let distinct: BTreeSet<&StateSet> = canonical.iter().filter(|c| !c.is_empty()).collect();
    let cover_by_set: BTreeMap<&StateSet, FixedBitSet> = distinct
        .into_par_iter()
        .map(|c| (c, cover_of(c, &canonical, analyses, &s_n, frame)))
        .collect();
    let covers: Vec<Option<FixedBitSet>> = canonical
        .iter()
        .map(|c| cover_by_set.get(c).cloned())
        .collect();
    let mut universe = FixedBitSet::with_capacity(n);
    for (j, c) in canonical.iter().enumerate() {
        if !c.is_empty() {
            universe.insert(j);
        }
    }
    let indices = select_indices(&covers, &universe);
    let cover_sizes = indices
        .iter()
        .map(|&i| covers[i].as_ref().map_or(0, |c| c.count_ones(..)))
        .collect();

    let mut candidates: Vec<StateSet> = indices.iter().map(|&i| canonical[i].clone()).collect();
    candidates.sort_by_key(|c| skel.names_of(c));
    candidates.dedup();

    let mut members = Vec::new();
    let mut etas = Vec::new();
    let mut counts = Vec::new();
    let mut excluded = Vec::new();
    for set in candidates {
        let k = count_n(&set, analyses, frame);
        let eta = t_star(n - k, n, cfg.beta)?;
        if cfg.passes(eta) {
            members.push(set);
            etas.push(eta);
            counts.push(k);
        } else {
            excluded.push(ExcludedMember {
                set,
                eta,
                filter: if cfg.geq_filter { "eta >= delta" } else { "eta > delta" },
            });
        }
    }
    let m = count_m(&members, &s_n, analyses, frame);
    let zeta = t_star(n - m, n, cfg.beta)?;
    let empty_canonical_samples = canonical.iter().filter(|c| c.is_empty()).count();
    Ok(CauseSolution {
        members,
        eta: etas,
        n: counts,
        zeta,
        m,
        s_n,
        indices,
        cover_sizes,
        delta: cfg.delta,
        beta: cfg.beta,
        big_n: n,
        seed: cfg.seed,
        empty_canonical_samples,
        excluded,
        canonical,
    })
}

/// Canonical JSON form; state lists are sorted by identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub members: Vec<Vec<String>>,
    pub eta: Vec<f64>,
    pub n: Vec<usize>,
    pub zeta: f64,
    pub m: usize,
    #[serde(rename = "S_N")]
    pub s_n: Vec<String>,
    pub indices: Vec<usize>,
    pub delta: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    pub empty_canonical_samples: usize,
    pub cover_sizes: Vec<usize>,
    pub no_cause: bool,
    pub excluded_members: Vec<ExcludedDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_causes: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedDoc {
    pub member: Vec<String>,
    pub eta: f64,
    pub filter: String,
}

impl CauseSolution {
    pub fn to_doc(&self, skel: &Skeleton, verbose: bool) -> SolutionDoc {
        SolutionDoc {
            members: self.members.iter().map(|c| skel.names_of(c)).collect(),
            eta: self.eta.clone(),
            n: self.n.clone(),
            zeta: self.zeta,
            m: self.m,
            s_n: skel.names_of(&self.s_n),
            indices: self.indices.clone(),
            delta: self.delta,
            beta: self.beta,
            big_n: self.big_n,
            seed: self.seed,
            empty_canonical_samples: self.empty_canonical_samples,
            cover_sizes: self.cover_sizes.clone(),
            no_cause: self.no_cause(),
            excluded_members: self
                .excluded
                .iter()
                .map(|e| ExcludedDoc {
                    member: skel.names_of(&e.set),
                    eta: e.eta,
                    filter: e.filter.to_string(),
                })
                .collect(),
            canonical_causes: verbose.then(|| self.canonical.iter().map(|c| skel.names_of(c)).collect()),
        }
    }

    pub fn to_json(&self, skel: &Skeleton, verbose: bool) -> String {
        serde_json::to_string_pretty(&self.to_doc(skel, verbose)).expect("solution serializes")
    }
}

impl SolutionDoc {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("solution document: {e}")))
    }

    /// Members and S_N resolved against a model's state names.
    pub fn resolve(&self, skel: &Skeleton) -> Result<(Vec<StateSet>, StateSet)> {
        let members = self
            .members
            .iter()
            .map(|c| skel.state_set(c))
            .collect::<Result<Vec<_>>>()?;
        Ok((members, skel.state_set(&self.s_n)?))
    }
}
