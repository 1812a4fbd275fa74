use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::model::{DistKind, DistributionSpec};
use crate::num::Scalar;

use super::SimError;

pub type CustomSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Samplers for `custom` distributions, looked up by name.
#[derive(Clone, Default)]
pub struct SamplerRegistry {
    custom: HashMap<String, CustomSampler>,
}

impl fmt::Debug for SamplerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.custom.keys().collect();
        names.sort();
        f.debug_struct("SamplerRegistry")
            .field("custom", &names)
            .finish()
    }
}

impl SamplerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) {
        self.custom.insert(name.into(), Arc::new(f));
    }

    pub fn with(
        mut self,
        name: impl Into<String>,
        f: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.register(name, f);
        self
    }

    pub(crate) fn compile(&self, d: &DistributionSpec) -> Result<Sampler, SimError> {
        let f = |r: &crate::Rational| r.to_f64_lossy();
        Ok(match &d.kind {
            DistKind::Normal { mean, stddev } => Sampler::Normal(
                Normal::new(f(mean), f(stddev))
                    .map_err(|e| SimError::BadDistribution(e.to_string()))?,
            ),
            DistKind::Uniform { lo, hi } => Sampler::Uniform(f(lo), f(hi)),
            DistKind::DiscreteFinite(points) => {
                let mut acc = 0.0;
                let table = points
                    .iter()
                    .map(|(v, p)| {
                        acc += f(p);
                        (acc, f(v))
                    })
                    .collect();
                Sampler::Discrete(table)
            }
            DistKind::Bernoulli(p) => Sampler::Bernoulli(f(p)),
            DistKind::Custom { sampler } => Sampler::Custom(
                self.custom
                    .get(sampler)
                    .cloned()
                    .ok_or_else(|| SimError::UnknownSampler(sampler.clone()))?,
            ),
        })
    }
}

/// A distribution ready to draw from.
#[derive(Clone)]
pub(crate) enum Sampler {
    /// Ziggurat method from `rand_distr`.
    Normal(Normal<f64>),
    /// Inverse transform on one uniform draw: `lo + (hi - lo)·u`.
    Uniform(f64, f64),
    /// Cumulative probabilities with their values.
    Discrete(Vec<(f64, f64)>),
    Bernoulli(f64),
    Custom(CustomSampler),
}

impl Sampler {
    pub(crate) fn draw<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal(n) => n.sample(rng),
            Sampler::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
            Sampler::Discrete(table) => {
                let u: f64 = rng.random();
                table
                    .iter()
                    .find(|(c, _)| u < *c)
                    .or(table.last())
                    .map_or(0.0, |(_, v)| *v)
            }
            Sampler::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Custom(f) => f(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_of(s: &Sampler, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n).map(|_| s.draw(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn empirical_means_match_declared_means() {
        let reg = SamplerRegistry::new();
        let cases = [
            DistributionSpec::normal(int(2), int(3)),
            DistributionSpec::uniform(int(-7), int(1)),
            DistributionSpec::discrete(vec![(int(-1), ratio(1, 4)), (int(5), ratio(3, 4))]),
            DistributionSpec::bernoulli(ratio(1, 3)),
        ];
        for d in cases {
            let s = reg.compile(&d).unwrap();
            let m = mean_of(&s, 200_000);
            assert!(
                (m - d.mean.to_f64_lossy()).abs() < 0.05,
                "{} {m}",
                d.kind_name()
            );
        }
    }

    #[test]
    fn uniform_stays_in_support() {
        let s = Sampler::Uniform(-7.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000)
            .map(|_| s.draw(&mut rng))
            .all(|v| (-7.0..1.0).contains(&v)));
    }

    #[test]
    fn custom_samplers_are_looked_up() {
        let d = DistributionSpec::custom("two", int(2), Some(int(2)), Some(int(2)));
        assert!(matches!(
            SamplerRegistry::new().compile(&d),
            Err(SimError::UnknownSampler(_))
        ));
        let reg = SamplerRegistry::new().with("two", |_| 2.0);
        let s = reg.compile(&d).unwrap();
        assert_eq!(mean_of(&s, 10), 2.0);
    }
}
