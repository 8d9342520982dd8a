//! Parameter distributions and reproducible sample batches.
//!
//! Sample `i` of a batch is drawn from a ChaCha20 stream keyed by the batch
//! seed with stream id `i`, so every point is a pure function of `(seed, i)`
//! and batches can be generated in parallel in any order.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::ParamSpace;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Marginal {
    Uniform([f64; 2]),
    Point(f64),
}

impl Marginal {
    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform([lo, hi]) => 0.5 * (lo + hi),
            Marginal::Point(v) => v,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform([lo, hi]) => (lo, hi),
            Marginal::Point(v) => (v, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    /// One marginal per parameter, in parameter order.
    pub marginals: Vec<Marginal>,
}

/// A finite mixture of products of independent marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    pub components: Vec<Component>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    weight: f64,
    marginals: BTreeMap<String, Marginal>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DistDoc {
    Mixture {
        mixture: Vec<ComponentDoc>,
    },
    Single {
        marginals: BTreeMap<String, Marginal>,
    },
}

pub fn parse_dist(document: &str, params: &ParamSpace) -> Result<DistSpec> {
    let doc: DistDoc = serde_json::from_str(document)
        .map_err(|e| Error::Distribution(format!("malformed distribution document: {e}")))?;
    let comps = match doc {
        DistDoc::Mixture { mixture } => mixture,
        DistDoc::Single { marginals } => vec![ComponentDoc {
            weight: 1.0,
            marginals,
        }],
    };
    let components = comps
        .into_iter()
        .map(|c| {
            for name in c.marginals.keys() {
                if params.index_of(name).is_none() {
                    return Err(Error::Distribution(format!("unknown parameter `{name}`")));
                }
            }
            let marginals = params
                .names()
                .iter()
                .map(|n| {
                    c.marginals
                        .get(n)
                        .copied()
                        .ok_or_else(|| Error::Distribution(format!("component lacks parameter `{n}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Component {
                weight: c.weight,
                marginals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DistSpec::new(components)
}

impl DistSpec {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Distribution("mixture has no components".into()));
        }
        let dim = components[0].marginals.len();
        let mut total = 0.0;
        for c in &components {
            if !(c.weight > 0.0) {
                return Err(Error::Distribution(format!("non-positive weight {}", c.weight)));
            }
            if c.marginals.len() != dim {
                return Err(Error::Distribution("components differ in dimension".into()));
            }
            for m in &c.marginals {
                let (lo, hi) = m.bounds();
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Distribution(format!("invalid interval [{lo}, {hi}]")));
                }
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Distribution(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Product of independent uniforms (or points), single component.
    pub fn product(marginals: Vec<Marginal>) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            marginals,
        }])
    }

    pub fn dim(&self) -> usize {
        self.components[0].marginals.len()
    }

    /// Draws the point with index `i` of the stream keyed by `seed`.
    pub fn draw(&self, seed: u64, i: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i);
        let mut unit = || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = unit();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if r < acc {
                chosen = k;
                break;
            }
        }
        self.components[chosen]
            .marginals
            .iter()
            .map(|m| match *m {
                Marginal::Uniform([lo, hi]) => lo + (hi - lo) * unit(),
                Marginal::Point(v) => v,
            })
            .collect()
    }

    pub fn mean_param(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.components.iter().map(|c| c.weight * c.marginals[j].mean()).sum())
            .collect()
    }

    /// Corners of the bounding box of the support, in lexicographic order.
    /// Axes of zero width contribute a single coordinate.
    pub fn vertex_params(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|j| {
                let lo = self
                    .components
                    .iter()
                    .map(|c| c.marginals[j].bounds().0)
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .components
                    .iter()
                    .map(|c| c.marginals[j].bounds().1)
                    .fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn sample(dist: &DistSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let points = (0..n as u64).into_par_iter().map(|i| dist.draw(seed, i)).collect();
    Ok(SampleBatch { seed, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ps(names: &[&str]) -> ParamSpace {
        ParamSpace::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn point_mass() {
        let d = parse_dist(r#"{"marginals":{"p":{"point":0.3}}}"#, &ps(&["p"])).unwrap();
        let b = sample(&d, 3, 7).unwrap();
        assert_eq!(b.points, vec![vec![0.3]; 3]);
        assert_eq!(d.mean_param(), vec![0.3]);
    }

    #[test]
    fn reproducible_and_index_addressed() {
        let d = fixtures::example1_dist();
        let a = sample(&d, 200, 42).unwrap();
        let b = sample(&d, 200, 42).unwrap();
        assert_eq!(a, b);
        let longer = sample(&d, 300, 42).unwrap();
        assert_eq!(&longer.points[..200], &a.points[..]);
        assert_eq!(d.draw(42, 17), a.points[17]);
        assert_ne!(sample(&d, 200, 43).unwrap(), a);
    }

    #[test]
    fn rejects_bad_documents() {
        let p = ps(&["p", "q"]);
        assert!(parse_dist(r#"{"marginals":{"p":{"point":0.3}}}"#, &p).is_err());
        assert!(parse_dist(r#"{"marginals":{"p":{"point":0.3},"q":{"point":1},"r":{"point":1}}}"#, &p).is_err());
        assert!(parse_dist(r#"{"marginals":{"p":{"uniform":[0.5,0.1]},"q":{"point":1}}}"#, &p).is_err());
        assert!(parse_dist(
            r#"{"mixture":[{"weight":0.5,"marginals":{"p":{"point":0.3},"q":{"point":1}}}]}"#,
            &p
        )
        .is_err());
    }

    #[test]
    fn point_mass_fraction_example1() {
        let d = fixtures::example1_dist();
        let b = sample(&d, 100_000, 1).unwrap();
        let hits = b.points.iter().filter(|u| u[0] == 0.5 && u[1] == 0.5).count();
        assert!((hits as f64 / 1e5 - 0.1).abs() <= 3e-3);
    }

    /// Midpoint-rule quadrature of P(p < q) for independent uniforms.
    fn quad_p_less_q(p: (f64, f64), q: (f64, f64)) -> f64 {
        let k = 4000;
        let h = (p.1 - p.0) / k as f64;
        (0..k)
            .map(|i| {
                let x = p.0 + (i as f64 + 0.5) * h;
                ((q.1 - x) / (q.1 - q.0)).clamp(0.0, 1.0)
            })
            .sum::<f64>()
            / k as f64
    }

    #[test]
    fn uniform_product_order_probability() {
        let d = DistSpec::product(vec![Marginal::Uniform([0.11, 0.51]), Marginal::Uniform([0.3, 0.7])]).unwrap();
        let b = sample(&d, 100_000, 5).unwrap();
        let frac = b.points.iter().filter(|u| u[0] < u[1]).count() as f64 / 1e5;
        assert!((frac - quad_p_less_q((0.11, 0.51), (0.3, 0.7))).abs() <= 0.005);
    }

    #[test]
    fn means() {
        let d = DistSpec::product(vec![Marginal::Uniform([0.45, 0.6])]).unwrap();
        assert!((d.mean_param()[0] - 0.525).abs() < 1e-15);
        let m = fixtures::example1_dist().mean_param();
        assert!((m[0] - 0.329).abs() < 1e-12);
        assert!((m[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vertices() {
        let d = DistSpec::product(vec![Marginal::Uniform([0.1, 0.5])]).unwrap();
        assert_eq!(d.vertex_params(), vec![vec![0.1], vec![0.5]]);
        let d = DistSpec::product(vec![
            Marginal::Uniform([0.85, 0.9]),
            Marginal::Uniform([0.45, 0.6]),
            Marginal::Uniform([0.5, 0.7]),
        ])
        .unwrap();
        let v = d.vertex_params();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], vec![0.85, 0.45, 0.5]);
        assert_eq!(v[1], vec![0.85, 0.45, 0.7]);
        assert_eq!(v[7], vec![0.9, 0.6, 0.7]);
        let d = DistSpec::product(vec![Marginal::Point(0.3), Marginal::Uniform([0.1, 0.2])]).unwrap();
        assert_eq!(d.vertex_params(), vec![vec![0.3, 0.1], vec![0.3, 0.2]]);
    }

    /// Kolmogorov-Smirnov statistic against Uniform(lo, hi).
    fn ks(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x - lo) / (hi - lo);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn uniform_marginals_pass_ks() {
        let d = DistSpec::product(vec![Marginal::Uniform([0.85, 0.9]), Marginal::Uniform([0.45, 0.6])]).unwrap();
        let b = sample(&d, 100_000, 99).unwrap();
        // asymptotic 1% critical value 1.628 / sqrt(n)
        let crit = 1.628 / (1e5f64).sqrt();
        for (j, (lo, hi)) in [(0.85, 0.9), (0.45, 0.6)].into_iter().enumerate() {
            let xs = b.points.iter().map(|u| u[j]).collect();
            assert!(ks(xs, lo, hi) < crit);
        }
    }
}
