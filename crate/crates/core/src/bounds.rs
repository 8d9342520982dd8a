//! Scenario bounds on cause probabilities from sample counts.

use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::graph::SupportGraph;
use crate::model::{ParametricModel, StateSet};
use crate::sampler::SampleBatch;
use crate::expr::decimal_to_rational;
use crate::reach::EXACT_STATE_CAP;
use crate::spr::{canonical_from, check_m, recall_covers, tau_all, tau_exact, SprConfig};

const BISECT_TOL: f64 = 1e-12;

/// Binomial tail `sum_{i<=k} C(N,i) (1-t)^i t^(N-i)`, increasing in `t`.
pub fn binomial_tail(k: usize, n: usize, t: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    beta_reg((n - k) as f64, (k + 1) as f64, t)
}

fn validate(k: usize, n: usize, beta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidBound("N must be positive".into()));
    }
    if k > n {
        return Err(Error::InvalidBound(format!("k = {k} exceeds N = {n}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidBound(format!("beta = {beta} outside (0, 1]")));
    }
    Ok(())
}

/// Lower bound after discarding `k` of `n` samples at confidence `beta`.
pub fn t_star(k: usize, n: usize, beta: f64) -> Result<f64> {
    validate(k, n, beta)?;
    if k == 0 {
        return Ok((1.0 - beta).powf(1.0 / n as f64));
    }
    if k == n {
        return Ok(0.0);
    }
    let target = (1.0 - beta) / n as f64;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if binomial_tail(k, n, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-sample artifacts shared by all counting queries.
#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub point: Vec<f64>,
    /// Singleton causes over the full state space.
    pub singles: StateSet,
    pub graph: SupportGraph,
}

/// Instantiates and analyzes every sample, in index order.
pub fn analyze(model: &ParametricModel, batch: &SampleBatch, cfg: &SprConfig) -> Result<Vec<SampleAnalysis>> {
    batch
        .points
        .par_iter()
        .map(|u| {
            let m = model.instantiate(u)?;
            Ok(SampleAnalysis {
                point: u.clone(),
                singles: singles_at(model, u, &m, cfg)?,
                graph: m.support_graph(),
            })
        })
        .collect()
}

fn singles_at(model: &ParametricModel, u: &[f64], m: &crate::model::ConcreteModel, cfg: &SprConfig) -> Result<StateSet> {
    let verdicts = tau_all(m, cfg)?;
    let refine = cfg.exact_corners
        && m.num_states() <= EXACT_STATE_CAP
        && verdicts.iter().flatten().any(|v| v.is_corner());
    let exact = if refine {
        // decimal parameter values are taken literally; rows that do not sum
        // to one exactly keep their float verdicts
        u.iter()
            .map(|&x| decimal_to_rational(x))
            .collect::<Option<Vec<_>>>()
            .and_then(|ru| model.instantiate_rational(&ru).ok())
    } else {
        None
    };
    let mut out = StateSet::new();
    for (c, v) in verdicts.iter().enumerate() {
        let Some(v) = v else { continue };
        let tau = match &exact {
            Some(rm) if v.is_corner() => tau_exact(rm, c)?.tau,
            _ => v.tau,
        };
        if tau == 1 {
            out.insert(c);
        }
    }
    Ok(out)
}

/// Shared context for counting: the initial state and the effect set.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub initial: usize,
    pub effect: &'a StateSet,
}

impl<'a> Frame<'a> {
    pub fn of(model: &'a ParametricModel) -> Self {
        Self {
            initial: model.skeleton().initial,
            effect: &model.skeleton().effect,
        }
    }
}

impl SampleAnalysis {
    /// Whether `set` is a cause on this sample.
    pub fn is_cause(&self, frame: Frame<'_>, set: &StateSet) -> bool {
        !set.is_empty() && set.is_subset(&self.singles) && check_m(&self.graph, frame.initial, set)
    }

    /// Canonical cause over the candidate states `restrict`.
    pub fn canonical(&self, frame: Frame<'_>, restrict: &StateSet) -> StateSet {
        let causes: StateSet = self.singles.intersection(restrict).copied().collect();
        canonical_from(&self.graph, frame.initial, &causes)
    }

    /// Whether `set` is a cause within `restrict` covering every effect
    /// path through `reference`.
    pub fn covers(&self, frame: Frame<'_>, set: &StateSet, restrict: &StateSet, reference: &StateSet) -> bool {
        !set.is_empty()
            && set.is_subset(restrict)
            && set.is_subset(&self.singles)
            && check_m(&self.graph, frame.initial, set)
            && recall_covers(&self.graph, frame.initial, frame.effect, set, reference)
    }
}

pub fn count_n(set: &StateSet, analyses: &[SampleAnalysis], frame: Frame<'_>) -> usize {
    analyses.iter().filter(|a| a.is_cause(frame, set)).count()
}

pub fn eta(set: &StateSet, analyses: &[SampleAnalysis], frame: Frame<'_>, beta: f64) -> Result<f64> {
    let n = count_n(set, analyses, frame);
    t_star(analyses.len() - n, analyses.len(), beta)
}

/// Samples on which the collection contains a recall-covering cause, plus
/// samples with no canonical cause over `restrict` (nothing to cover).
pub fn count_m(collection: &[StateSet], restrict: &StateSet, analyses: &[SampleAnalysis], frame: Frame<'_>) -> usize {
    analyses
        .iter()
        .filter(|a| {
            let canon = a.canonical(frame, restrict);
            canon.is_empty() || collection.iter().any(|c| a.covers(frame, c, restrict, &canon))
        })
        .count()
}

pub fn zeta(
    collection: &[StateSet],
    restrict: &StateSet,
    analyses: &[SampleAnalysis],
    frame: Frame<'_>,
    beta: f64,
) -> Result<f64> {
    let m = count_m(collection, restrict, analyses, frame);
    t_star(analyses.len() - m, analyses.len(), beta)
}
