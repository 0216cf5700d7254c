//! Uniform without-replacement minibatches and batch-size / regularization
//! schedules.
//!
//! All randomness flows through [`SsnRng`], xoshiro256++ seeded from a
//! single `u64` through SplitMix64 (`SeedableRng::seed_from_u64`). Both
//! algorithms are fully specified, so seeded runs reproduce bit-for-bit on
//! every platform.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type SsnRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> SsnRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Sorted, duplicate-free sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Batch(Vec<usize>);

impl Batch {
    /// Validates that `indices` is strictly increasing, nonempty and `< n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("batch indices must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::BatchIndex { index: last, n });
            }
        }
        Ok(Self(indices))
    }

    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Partial Fisher-Yates sampler over a persistent index buffer; each draw
/// costs O(b) plus the sort of the result.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    buffer: Vec<usize>,
}

impl BatchSampler {
    pub fn new(n: usize) -> Self {
        Self {
            buffer: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.buffer.len()
    }

    pub fn draw(&mut self, b: usize, rng: &mut SsnRng) -> Result<Batch> {
        let n = self.buffer.len();
        if b == 0 || b > n {
            return Err(invalid(format!("batch size {b} not in [1, {n}]")));
        }
        if b == n {
            return Ok(Batch::full(n));
        }
        for i in 0..b {
            let j = rng.random_range(i..n);
            self.buffer.swap(i, j);
        }
        let mut idx = self.buffer[..b].to_vec();
        idx.sort_unstable();
        Ok(Batch(idx))
    }
}

/// One uniformly random size-`b` subset of `0..n`.
pub fn draw_batch(n: usize, b: usize, rng: &mut SsnRng) -> Result<Batch> {
    BatchSampler::new(n).draw(b, rng)
}

/// Batch-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSchedule {
    Constant {
        b: usize,
    },
    /// `min(cap, ceil(b0 * factor^k))`
    Geometric { b0: usize, factor: f64, cap: usize },
    /// Gradient batch lower bound `n / ((n-1)/(rho-1) * |g|^2 + 1)`.
    GradientAdaptiveGrad { rho: f64, n: usize },
    /// Hessian batch lower bound `n / ((n/sigma^2) * |g| + 1)`.
    GradientAdaptiveHess { sigma: f64, n: usize },
}

impl BatchSchedule {
    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = match *self {
            BatchSchedule::Constant { b } => (1..=n).contains(&b),
            BatchSchedule::Geometric { b0, factor, cap } => {
                (1..=n).contains(&b0) && cap >= 1 && factor > 1.0
            }
            BatchSchedule::GradientAdaptiveGrad { rho, n: m } => rho >= 1.0 && m >= 1,
            BatchSchedule::GradientAdaptiveHess { sigma, n: m } => sigma > 0.0 && m >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid batch schedule {self:?} for n = {n}")))
        }
    }

    /// Batch size for iteration `k`. Adaptive kinds use `grad_norm` (an
    /// estimate of the full gradient norm); the others ignore it. The
    /// result is always in `[1, n]` where `n` is the dataset size.
    pub fn next_batch_size(&self, k: u64, grad_norm: f64, n: usize) -> usize {
        let n = n.max(1);
        let raw = match *self {
            BatchSchedule::Constant { b } => b as f64,
            BatchSchedule::Geometric { b0, factor, cap } => {
                let grown = (b0 as f64 * factor.powf(k as f64)).ceil();
                grown.min(cap as f64)
            }
            BatchSchedule::GradientAdaptiveGrad { rho, n: m } => {
                let m = m as f64;
                let g2 = grad_norm * grad_norm;
                if rho <= 1.0 {
                    // no gradient noise: any batch works
                    1.0
                } else {
                    (m / ((m - 1.0) / (rho - 1.0) * g2 + 1.0)).ceil()
                }
            }
            BatchSchedule::GradientAdaptiveHess { sigma, n: m } => {
                let m = m as f64;
                (m / ((m / (sigma * sigma)) * grad_norm + 1.0)).ceil()
            }
        };
        if raw.is_nan() {
            return n;
        }
        (raw.max(1.0) as usize).clamp(1, n)
    }
}

/// Levenberg-Marquardt regularization rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizationSchedule {
    Constant { tau0: f64 },
    /// `min(tau0, |g|)`
    GradientProportional { tau0: f64 },
}

impl RegularizationSchedule {
    pub fn tau0(&self) -> f64 {
        match *self {
            RegularizationSchedule::Constant { tau0 }
            | RegularizationSchedule::GradientProportional { tau0 } => tau0,
        }
    }

    pub fn next_tau(&self, grad_norm: f64) -> f64 {
        match *self {
            RegularizationSchedule::Constant { tau0 } => tau0,
            RegularizationSchedule::GradientProportional { tau0 } => tau0.min(grad_norm.max(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn full_batch() {
        let mut rng = rng_from_seed(1);
        assert_eq!(draw_batch(5, 5, &mut rng).unwrap().indices(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn singleton_in_range() {
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let b = draw_batch(7, 1, &mut rng).unwrap();
            assert_eq!(b.len(), 1);
            assert!(b.indices()[0] < 7);
        }
    }

    #[test]
    fn oversize_batch_is_error() {
        let mut rng = rng_from_seed(3);
        assert!(draw_batch(3, 4, &mut rng).is_err());
        assert!(draw_batch(3, 0, &mut rng).is_err());
    }

    #[test]
    fn pair_frequencies_are_uniform() {
        let mut rng = rng_from_seed(4);
        let mut sampler = BatchSampler::new(4);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            let b = sampler.draw(2, &mut rng).unwrap();
            *counts.entry(b.indices().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (subset, c) in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "{subset:?}: {freq}");
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        let mut sa = BatchSampler::new(50);
        let mut sb = BatchSampler::new(50);
        for _ in 0..20 {
            assert_eq!(sa.draw(7, &mut a).unwrap(), sb.draw(7, &mut b).unwrap());
        }
    }

    #[test]
    fn batch_validation() {
        assert!(Batch::new(vec![], 3).is_err());
        assert!(Batch::new(vec![1, 1], 3).is_err());
        assert!(Batch::new(vec![2, 1], 3).is_err());
        assert!(Batch::new(vec![0, 3], 3).is_err());
        assert!(Batch::new(vec![0, 2], 3).is_ok());
    }

    #[test]
    fn geometric_schedule() {
        let s = BatchSchedule::Geometric {
            b0: 100,
            factor: 1.01,
            cap: 8192,
        };
        assert_eq!(s.next_batch_size(0, 0.0, 100_000), 100);
        assert_eq!(s.next_batch_size(1, 0.0, 100_000), 101);
        assert_eq!(s.next_batch_size(1000, 0.0, 100_000), 8192);
        // dataset size binds before the cap
        assert_eq!(s.next_batch_size(1000, 0.0, 1000), 1000);
        let mut prev = 0;
        for k in 0..1000 {
            let b = s.next_batch_size(k, 0.0, 100_000);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn adaptive_grad_schedule() {
        let s = BatchSchedule::GradientAdaptiveGrad { rho: 2.0, n: 1000 };
        assert_eq!(s.next_batch_size(0, 1.0, 1000), 1);
        assert_eq!(s.next_batch_size(0, 0.0, 1000), 1000);
        assert_eq!(s.next_batch_size(0, 1e-9, 1000), 1000);
        let mut prev = usize::MAX;
        for g in [0.0, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 10.0] {
            let b = s.next_batch_size(0, g, 1000);
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn adaptive_hess_schedule() {
        let s = BatchSchedule::GradientAdaptiveHess { sigma: 1.0, n: 500 };
        assert_eq!(s.next_batch_size(0, 0.0, 500), 500);
        // 500 / (500 * 0.1 + 1) = 9.8
        assert_eq!(s.next_batch_size(0, 0.1, 500), 10);
        assert!(s.next_batch_size(0, 1.0, 500) <= s.next_batch_size(0, 0.5, 500));
    }

    #[test]
    fn tau_schedules() {
        let p = RegularizationSchedule::GradientProportional { tau0: 1.0 };
        assert_eq!(p.next_tau(0.3), 0.3);
        let p = RegularizationSchedule::GradientProportional { tau0: 0.1 };
        assert_eq!(p.next_tau(5.0), 0.1);
        let c = RegularizationSchedule::Constant { tau0: 0.05 };
        assert_eq!(c.next_tau(123.0), 0.05);
        assert_eq!(c.next_tau(0.0), 0.05);
    }
}
