use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cf::{Denominator, NeighborScorer, PredictionSums, DEFAULT_K};
use crate::evaluation::folds::{mix, split_folds_with, SplitPolicy, NUM_FOLDS};
use crate::evaluation::{mae, EvalError};
use crate::ingest::ProfileStore;
use crate::model::{ItemId, Rating, RatingMatrix, UserId};
use crate::weighting::{ContentWeights, TargetWeightCache, ZeroOverlapWeight, DEFAULT_CACHE_TARGETS};

/// Similarity used for neighbor selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain Pearson correlation.
    Pc,
    /// Content-weighted Pearson correlation.
    Wpc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pc => "PC",
            Method::Wpc => "WPC",
        })
    }
}

/// Neighborhood sizes evaluated by default.
pub const DEFAULT_K_VALUES: [usize; 5] = [5, 10, 20, 30, 50];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub k_values: Vec<usize>,
    pub seed: u64,
    pub split: SplitPolicy,
    pub zero_overlap: ZeroOverlapWeight,
    pub denominator: Denominator,
    pub min_sim: Option<f64>,
    /// Evaluate a seeded subsample of this many ratings per test fold.
    pub sample_test: Option<usize>,
    pub workers: usize,
    pub weight_cache_targets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::Pc],
            k_values: DEFAULT_K_VALUES.to_vec(),
            seed: 42,
            split: SplitPolicy::PerItem,
            zero_overlap: ZeroOverlapWeight::Mv,
            denominator: Denominator::Abs,
            min_sim: None,
            sample_test: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            weight_cache_targets: DEFAULT_CACHE_TARGETS,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.methods.is_empty() {
            return Err(EvalError::InvalidConfig("no method selected".into()));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(EvalError::InvalidConfig(
                "k values must be non-empty and each at least 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(EvalError::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Results of one (method, k) cell over all folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub method: Method,
    pub k: usize,
    /// MAE of each fold. NaN when a fold produced no prediction.
    pub fold_mae: [f64; NUM_FOLDS],
    pub fold_predictions: [usize; NUM_FOLDS],
    pub fold_skipped: [usize; NUM_FOLDS],
    /// Total absolute error over total predictions.
    pub mae: f64,
    /// Unweighted mean of the fold MAEs.
    pub mean_fold_mae: f64,
    pub predictions: usize,
    pub fallbacks: usize,
    pub skipped: usize,
}

/// Prediction and fallback flag for each configured k.
type Outcome = Option<Vec<(f64, bool)>>;

struct FoldRun<'a> {
    train: &'a RatingMatrix,
    test: &'a [Rating],
    config: &'a ExperimentConfig,
    /// Ascending k with each entry's position in `config.k_values`.
    ks: Vec<(usize, usize)>,
}

impl FoldRun<'_> {
    fn max_k(&self) -> usize {
        self.ks.last().map_or(DEFAULT_K, |&(k, _)| k)
    }

    fn outcomes(
        &self,
        scorer: &mut NeighborScorer<'_>,
        user: UserId,
        tests: &[Rating],
        weights: Option<&TargetWeightCache<'_>>,
    ) -> Result<Vec<Outcome>, EvalError> {
        let Some(mean) = self.train.user_mean(user) else {
            return Ok(vec![None; tests.len()]);
        };
        if weights.is_none() {
            scorer.accumulate(user, None)?;
        }
        let mut out = Vec::with_capacity(tests.len());
        for t in tests {
            if let Some(cache) = weights {
                let w = cache.get(t.item)?;
                scorer.accumulate(user, Some(&w))?;
            }
            let ranked = scorer.rank(t.item, self.max_k(), self.config.min_sim);
            let mut sums = PredictionSums::new(mean, self.config.denominator);
            let mut predicted = vec![(0.0, false); self.ks.len()];
            let mut next = 0;
            for (n, neighbor) in ranked.iter().enumerate() {
                while next < self.ks.len() && self.ks[next].0 == n {
                    let p = sums.prediction();
                    predicted[self.ks[next].1] = (p.value, p.fallback);
                    next += 1;
                }
                sums.push(neighbor.rating, neighbor.mean, neighbor.score.value);
            }
            let p = sums.prediction();
            for &(_, slot) in &self.ks[next..] {
                predicted[slot] = (p.value, p.fallback);
            }
            out.push(Some(predicted));
        }
        Ok(out)
    }

    fn run(&self, weights: Option<&TargetWeightCache<'_>>) -> Result<Vec<Outcome>, EvalError> {
        let mut groups: Vec<&[Rating]> = Vec::new();
        let mut start = 0;
        for i in 1..=self.test.len() {
            if i == self.test.len() || self.test[i].user != self.test[start].user {
                groups.push(&self.test[start..i]);
                start = i;
            }
        }
        let per_user: Vec<Vec<Outcome>> = groups
            .par_iter()
            .map_init(
                || NeighborScorer::new(self.train),
                |scorer, group| self.outcomes(scorer, group[0].user, group, weights),
            )
            .collect::<Result<_, _>>()?;
        Ok(per_user.into_iter().flatten().collect())
    }
}

fn sample_fold(test: &mut Vec<Rating>, n: usize, seed: u64, fold: usize) {
    if n >= test.len() {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5EED_0000 + fold as u64));
    let mut picked = rand::seq::index::sample(&mut rng, test.len(), n).into_vec();
    picked.sort_unstable();
    *test = picked.into_iter().map(|i| test[i]).collect();
}

/// Cross-validated MAE for every (method, k) in `config`.
///
/// Each fold trains on the other four, predicts every held-out rating whose
/// user has training ratings, and skips (and counts) the rest. Results are
/// reduced in (user, item) order, so they do not depend on `workers`.
pub fn run_experiment(
    ratings: &[Rating],
    profiles: Option<&ProfileStore>,
    config: &ExperimentConfig,
) -> Result<Vec<ExperimentReport>, EvalError> {
    config.validate()?;
    if ratings.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let content = if config.methods.contains(&Method::Wpc) {
        let store = profiles.ok_or(EvalError::NoProfiles)?;
        let mut rated: Vec<ItemId> = ratings.iter().map(|r| r.item).collect();
        rated.sort_unstable();
        rated.dedup();
        if let Some(&missing) = store.missing(&rated).first() {
            return Err(EvalError::MissingProfile(missing));
        }
        Some(ContentWeights::with_cache_capacity(
            store.iter(),
            config.zero_overlap,
            config.weight_cache_targets,
        ))
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;

    let mut ks: Vec<(usize, usize)> = config.k_values.iter().copied().zip(0..).collect();
    ks.sort_unstable();

    let folds = split_folds_with(ratings, config.seed, config.split);
    // pairs[method][k][fold] = (actual, predicted)
    let cells = config.methods.len() * config.k_values.len();
    let mut pairs: Vec<[Vec<(f64, f64)>; NUM_FOLDS]> = (0..cells).map(|_| Default::default()).collect();
    let mut fallbacks = vec![0usize; cells];
    let mut fold_predictions = [0usize; NUM_FOLDS];
    let mut fold_skipped = [0usize; NUM_FOLDS];

    for fold in 0..NUM_FOLDS {
        let (train, mut test) = folds.train_test(ratings, fold);
        test.sort_unstable_by_key(|r| (r.user, r.item));
        if let Some(n) = config.sample_test {
            sample_fold(&mut test, n, config.seed, fold);
        }
        let train = RatingMatrix::new(&train)?;
        let run = FoldRun {
            train: &train,
            test: &test,
            config,
            ks: ks.clone(),
        };
        log::info!(
            "fold {}/{}: {} training, {} test ratings",
            fold + 1,
            NUM_FOLDS,
            train.len(),
            test.len()
        );

        for (mi, method) in config.methods.iter().enumerate() {
            let cache = match method {
                Method::Pc => None,
                Method::Wpc => Some(TargetWeightCache::new(
                    content.as_ref().expect("profiles checked above"),
                    train.items(),
                    config.weight_cache_targets,
                )?),
            };
            let outcomes = pool.install(|| run.run(cache.as_ref()))?;

            let (mut made, mut skipped) = (0, 0);
            for (t, outcome) in test.iter().zip(&outcomes) {
                let Some(predictions) = outcome else {
                    skipped += 1;
                    continue;
                };
                made += 1;
                for (ki, &(predicted, fallback)) in predictions.iter().enumerate() {
                    let cell = mi * config.k_values.len() + ki;
                    pairs[cell][fold].push((t.value as f64, predicted));
                    fallbacks[cell] += fallback as usize;
                }
            }
            fold_predictions[fold] = made;
            fold_skipped[fold] = skipped;
            log::info!("fold {}: {method} done, {made} predicted, {skipped} skipped", fold + 1);
        }
    }

    let mut reports = Vec::with_capacity(cells);
    for (mi, &method) in config.methods.iter().enumerate() {
        for (ki, &k) in config.k_values.iter().enumerate() {
            let cell = mi * config.k_values.len() + ki;
            let mut fold_mae = [f64::NAN; NUM_FOLDS];
            for (f, p) in pairs[cell].iter().enumerate() {
                if !p.is_empty() {
                    fold_mae[f] = mae(p)?;
                }
            }
            let all: Vec<(f64, f64)> = pairs[cell].iter().flatten().copied().collect();
            let overall = if all.is_empty() { f64::NAN } else { mae(&all)? };
            let finite: Vec<f64> = fold_mae.iter().copied().filter(|m| m.is_finite()).collect();
            reports.push(ExperimentReport {
                method,
                k,
                fold_mae,
                fold_predictions,
                fold_skipped,
                mae: overall,
                mean_fold_mae: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
                predictions: fold_predictions.iter().sum(),
                fallbacks: fallbacks[cell],
                skipped: fold_skipped.iter().sum(),
            });
        }
    }
    Ok(reports)
}
