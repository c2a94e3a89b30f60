use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_arm, check_unit, Result};

/// Rewards observed while non-certified strategies were executing, kept per
/// arm and handed out to a certified strategy without replacement.
///
/// Crediting is disabled until every arm has at least one cached entry.
/// Lists are unbounded, so memory grows with the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCache {
    entries: Vec<Vec<f64>>,
}

impl ReplayCache {
    pub fn new(arm_count: usize) -> Self {
        Self {
            entries: vec![Vec::new(); arm_count],
        }
    }

    pub fn arm_count(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self, arm: usize) -> usize {
        self.entries[arm].len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Vec::is_empty)
    }

    pub fn entries(&self, arm: usize) -> &[f64] {
        &self.entries[arm]
    }

    /// True when every arm has a cached reward.
    pub fn can_credit(&self) -> bool {
        self.entries.iter().all(|e| !e.is_empty())
    }

    pub fn push(&mut self, arm: usize, reward: f64) -> Result<()> {
        check_arm(arm, self.arm_count())?;
        check_unit("reward", reward)?;
        self.entries[arm].push(reward);
        Ok(())
    }

    /// Removes and returns a uniformly chosen cached reward of
    /// `certified_arm`, or `None` while some arm's list is still empty.
    pub fn credit<R: Rng + ?Sized>(&mut self, certified_arm: usize, rng: &mut R) -> Option<f64> {
        if certified_arm >= self.arm_count() || !self.can_credit() {
            return None;
        }
        let list = &mut self.entries[certified_arm];
        let idx = rng.random_range(0..list.len());
        Some(list.swap_remove(idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn push_examples() {
        let mut c = ReplayCache::new(2);
        c.push(0, 0.5).unwrap();
        assert_eq!(c.len(0), 1);

        let mut c = ReplayCache::new(2);
        c.push(1, 1.0).unwrap();
        assert!(!c.can_credit());
        assert_eq!(c.credit(1, &mut rng_from_seed(0)), None);

        let mut c = ReplayCache::new(2);
        c.push(1, 0.2).unwrap();
        c.push(1, 0.7).unwrap();
        assert_eq!(c.entries(1), &[0.2, 0.7]);
        assert!(c.push(2, 0.5).is_err());
        assert!(c.push(0, 1.5).is_err());
    }

    #[test]
    fn credit_examples() {
        let mut rng = rng_from_seed(1);
        let mut c = ReplayCache::new(2);
        c.push(0, 0.2).unwrap();
        c.push(1, 0.9).unwrap();
        assert_eq!(c.credit(0, &mut rng), Some(0.2));
        assert_eq!(c.len(0), 0);
        assert_eq!(c.entries(1), &[0.9]);
        // arm 0 now empty
        assert_eq!(c.credit(1, &mut rng), None);
        assert_eq!(c.len(1), 1);
    }

    #[test]
    fn credit_is_uniform_without_replacement() {
        let mut rng = rng_from_seed(2);
        let n = 20_000;
        let mut first_a = 0;
        for _ in 0..n {
            let mut c = ReplayCache::new(2);
            c.push(0, 0.25).unwrap();
            c.push(0, 0.75).unwrap();
            c.push(1, 1.0).unwrap();
            let got = c.credit(0, &mut rng).unwrap();
            assert_eq!(c.len(0), 1);
            assert_ne!(c.entries(0)[0], got);
            if got == 0.25 {
                first_a += 1;
            }
        }
        assert!((first_a as f64 / n as f64 - 0.5).abs() < 0.015);
    }
}
