use rand::seq::SliceRandom;

use crate::csi::InteractionLabel;
use crate::error::{Error, Result};
use crate::rng;

/// Stratified partition of sample indices into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KFoldPlan {
    k: usize,
    seed: u64,
    folds: Vec<Vec<usize>>,
}

impl KFoldPlan {
    /// Each class is shuffled with its own stream and dealt round-robin,
    /// continuing where the previous class stopped so fold sizes stay within
    /// one of each other.
    pub fn new(labels: &[InteractionLabel], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("k-fold needs k ≥ 2, got {k}")));
        }
        if k > labels.len() {
            return Err(Error::InvalidArgument(format!("{k} folds for {} samples", labels.len())));
        }
        let mut folds = vec![Vec::new(); k];
        let mut next = 0;
        for class in InteractionLabel::all() {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            members.shuffle(&mut rng::stream(seed, "kfold", &[class.id() as u64]));
            for i in members {
                folds[next % k].push(i);
                next += 1;
            }
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        Ok(KFoldPlan { k, seed, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn validation(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.folds.iter().enumerate().filter(|&(f, _)| f != fold).flat_map(|(_, v)| v.iter().copied()).collect();
        idx.sort_unstable();
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(counts: &[usize]) -> Vec<InteractionLabel> {
        counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(InteractionLabel::new(c).unwrap(), n)).collect()
    }

    #[test]
    fn four_balanced_samples_two_folds() {
        let l = labels(&[2, 2]);
        let plan = KFoldPlan::new(&l, 2, 3).unwrap();
        for f in plan.folds() {
            assert_eq!(f.len(), 2);
            assert_ne!(l[f[0]], l[f[1]]);
        }
    }

    #[test]
    fn errors() {
        assert!(KFoldPlan::new(&labels(&[3]), 1, 0).is_err());
        assert!(KFoldPlan::new(&labels(&[3]), 4, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            counts in proptest::collection::vec(0usize..25, 1..12),
            k in 2usize..11,
            seed in any::<u64>(),
        ) {
            let l = labels(&counts);
            prop_assume!(l.len() >= k);
            let plan = KFoldPlan::new(&l, k, seed).unwrap();
            let mut all: Vec<usize> = plan.folds().concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..l.len()).collect::<Vec<_>>());
            for (c, &n) in counts.iter().enumerate() {
                for f in plan.folds() {
                    let here = f.iter().filter(|&&i| l[i].id() == c).count() as f64;
                    prop_assert!((here - n as f64 / k as f64).abs() < 1.0 + 1e-9);
                }
                if n >= k {
                    for f in 0..k {
                        prop_assert!(plan.training(f).iter().any(|&i| l[i].id() == c));
                    }
                }
            }
            let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
