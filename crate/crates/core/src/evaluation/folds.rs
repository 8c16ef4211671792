use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ItemId, Rating, UserId};

pub const NUM_FOLDS: usize = 5;

/// How ratings are dealt into folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitPolicy {
    /// Each movie's ratings are shuffled and dealt round-robin, so every
    /// movie is spread almost evenly over the folds.
    #[default]
    PerItem,
    /// One global shuffle dealt round-robin.
    Global,
}

/// splitmix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold index of every (user, item) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub seed: u64,
    pub policy: SplitPolicy,
    fold_of: HashMap<(UserId, ItemId), u8>,
}

impl FoldAssignment {
    pub fn fold(&self, user: UserId, item: ItemId) -> Option<usize> {
        self.fold_of.get(&(user, item)).map(|&f| f as usize)
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    /// Splits `ratings` into (train, test) for `fold`. Ratings the assignment
    /// does not know go to training.
    pub fn train_test(&self, ratings: &[Rating], fold: usize) -> (Vec<Rating>, Vec<Rating>) {
        ratings
            .iter()
            .partition(|r| self.fold(r.user, r.item) != Some(fold))
    }
}

/// Per-item stratified 5-fold split.
pub fn split_folds(ratings: &[Rating], seed: u64) -> FoldAssignment {
    split_folds_with(ratings, seed, SplitPolicy::PerItem)
}

pub fn split_folds_with(ratings: &[Rating], seed: u64, policy: SplitPolicy) -> FoldAssignment {
    let mut fold_of = HashMap::with_capacity(ratings.len());
    match policy {
        SplitPolicy::PerItem => {
            let mut by_item: BTreeMap<ItemId, Vec<UserId>> = BTreeMap::new();
            for r in ratings {
                by_item.entry(r.item).or_default().push(r.user);
            }
            for (item, mut users) in by_item {
                users.sort_unstable();
                users.dedup();
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, item.0 as u64));
                users.shuffle(&mut rng);
                let offset = rng.random_range(0..NUM_FOLDS);
                for (pos, user) in users.into_iter().enumerate() {
                    fold_of.insert((user, item), ((pos + offset) % NUM_FOLDS) as u8);
                }
            }
        }
        SplitPolicy::Global => {
            let mut pairs: Vec<(UserId, ItemId)> = ratings.iter().map(|r| (r.user, r.item)).collect();
            pairs.sort_unstable();
            pairs.dedup();
            pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, u64::MAX)));
            for (pos, pair) in pairs.into_iter().enumerate() {
                fold_of.insert(pair, (pos % NUM_FOLDS) as u8);
            }
        }
    }
    FoldAssignment {
        seed,
        policy,
        fold_of,
    }
}
