use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Curvature;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// When false, batches are drawn uniformly from the corpus.
    pub class_balance: bool,
    pub straight_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { class_balance: true, straight_fraction: 0.3 }
    }
}

/// `(straight, curve)` counts for a batch: `round(fraction * batch)` straight,
/// the rest curve.
pub fn split_counts(batch: usize, straight_fraction: f64) -> (usize, usize) {
    let straight = ((straight_fraction * batch as f64).round() as usize).min(batch);
    (straight, batch - straight)
}

/// Cycles through a shuffled index list, reshuffling each time it runs out.
#[derive(Clone, Debug)]
struct Queue {
    items: Vec<usize>,
    pos: usize,
}

impl Queue {
    fn new(items: Vec<usize>) -> Self {
        let pos = items.len();
        Self { items, pos }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.items.len() {
            self.items.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.items[self.pos - 1]
    }
}

/// Batches with a fixed straight/curve split. A class exhausted before the
/// other is reshuffled and reused, so small classes repeat within an epoch.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    straight: Queue,
    curve: Queue,
    counts: (usize, usize),
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(labels: &[Curvature], batch: usize, straight_fraction: f64, seed: u64) -> Result<Self> {
        if batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let pick = |c| labels.iter().enumerate().filter(|(_, l)| **l == c).map(|(i, _)| i).collect::<Vec<_>>();
        let (straight, curve) = (pick(Curvature::Straight), pick(Curvature::Curve));
        let counts = split_counts(batch, straight_fraction);
        for (class, items, need) in [("straight", &straight, counts.0), ("curve", &curve, counts.1)] {
            if items.is_empty() && need > 0 {
                return Err(Error::Config(format!("class-balanced sampling needs {class} scenes but the corpus has none")));
            }
        }
        Ok(Self { straight: Queue::new(straight), curve: Queue::new(curve), counts, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn counts(&self) -> (usize, usize) {
        self.counts
    }

    /// Straight indices first, then curve indices.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.counts.0 + self.counts.1);
        for _ in 0..self.counts.0 {
            out.push(self.straight.next(&mut self.rng));
        }
        for _ in 0..self.counts.1 {
            out.push(self.curve.next(&mut self.rng));
        }
        out
    }
}

/// Label-blind batches over a reshuffled corpus.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    queue: Queue,
    batch: usize,
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if len == 0 || batch == 0 {
            return Err(Error::Config("uniform sampling needs a non-empty corpus and positive batch".into()));
        }
        Ok(Self { queue: Queue::new((0..len).collect()), batch, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        (0..self.batch).map(|_| self.queue.next(&mut self.rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: usize, c: usize) -> Vec<Curvature> {
        let mut v = vec![Curvature::Straight; s];
        v.extend(vec![Curvature::Curve; c]);
        v
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(split_counts(64, 0.3), (19, 45));
        assert_eq!(split_counts(10, 0.3), (3, 7));
        for b in 2..=256 {
            let (s, c) = split_counts(b, 0.3);
            assert_eq!(s, (0.3 * b as f64).round() as usize);
            assert_eq!(s + c, b);
        }
    }

    #[test]
    fn every_batch_is_split() {
        let l = labels(100, 100);
        let mut s = BalancedSampler::new(&l, 64, 0.3, 9).unwrap();
        for _ in 0..50 {
            let b = s.next_batch();
            assert_eq!(b.iter().filter(|&&i| l[i] == Curvature::Straight).count(), 19);
            assert_eq!(b.iter().filter(|&&i| l[i] == Curvature::Curve).count(), 45);
        }
    }

    #[test]
    fn no_repeats_until_class_exhausted() {
        let l = labels(19, 200);
        let mut s = BalancedSampler::new(&l, 64, 0.3, 1).unwrap();
        let mut first = s.next_batch()[..19].to_vec();
        first.sort();
        assert_eq!(first, (0..19).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_errors() {
        let l = labels(30, 70);
        let a: Vec<_> = {
            let mut s = BalancedSampler::new(&l, 16, 0.3, 5).unwrap();
            (0..10).map(|_| s.next_batch()).collect()
        };
        let b: Vec<_> = {
            let mut s = BalancedSampler::new(&l, 16, 0.3, 5).unwrap();
            (0..10).map(|_| s.next_batch()).collect()
        };
        assert_eq!(a, b);
        let err = BalancedSampler::new(&labels(0, 10), 64, 0.3, 0).unwrap_err();
        assert!(err.to_string().contains("straight"));
        let err = BalancedSampler::new(&labels(10, 0), 64, 0.3, 0).unwrap_err();
        assert!(err.to_string().contains("curve"));
    }

    #[test]
    fn uniform_covers_corpus_each_epoch() {
        let mut s = UniformSampler::new(10, 5, 3).unwrap();
        let mut seen: Vec<usize> = s.next_batch().into_iter().chain(s.next_batch()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
