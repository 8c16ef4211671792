//! User-user similarity, neighbor selection and rating prediction.
//!
//! Similarities are Pearson correlations over co-rated items, with each
//! user's deviations measured from their mean over *all* of their ratings.
//! The weighted variant scales every deviation by the co-rated item's content
//! weight relative to the target item. Both are damped by a significance
//! factor of `min(overlap, 50) / 50`.
//!
//! Every co-rated sum is accumulated in ascending item order so the pairwise
//! functions here and the batched [`NeighborScorer`] produce bit-identical
//! scores.

use std::cmp::Ordering;

use thiserror::Error;

use crate::model::{ItemId, RatingMatrix, UserId, MAX_RATING, MIN_RATING};
use crate::weighting::WeightVector;

/// Overlap at which the significance factor saturates.
pub const SIGNIFICANCE_THRESHOLD: usize = 50;

/// Default neighborhood size.
pub const DEFAULT_K: usize = 50;

/// Denominator magnitudes below this fall back to the user's mean.
const MIN_DENOMINATOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CfError {
    #[error("{0} has no ratings in the training matrix")]
    UnknownUser(UserId),
    #[error("weight vector does not cover co-rated {0}")]
    MissingWeight(ItemId),
    #[error("neighbor {user} did not rate {item}")]
    NotARater { user: UserId, item: ItemId },
}

/// Normalization of the prediction's weighted deviation sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `sum |sim|`
    #[default]
    Abs,
    /// `sum sim`, as literally written in the GroupLens-style formula.
    Signed,
}

/// A correlation and the number of co-rated items it was computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub raw: f64,
    pub overlap: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    cross: f64,
    active_sq: f64,
    other_sq: f64,
    overlap: u32,
}

impl PairSums {
    #[inline]
    fn add(&mut self, x: f64, y: f64) {
        self.cross += x * y;
        self.active_sq += x * x;
        self.other_sq += y * y;
        self.overlap += 1;
    }

    fn correlation(&self) -> Correlation {
        let raw = if self.overlap == 0 || self.active_sq == 0.0 || self.other_sq == 0.0 {
            0.0
        } else {
            (self.cross / (self.active_sq * self.other_sq).sqrt()).clamp(-1.0, 1.0)
        };
        Correlation {
            raw,
            overlap: self.overlap as usize,
        }
    }
}

fn pair_sums(
    matrix: &RatingMatrix,
    a: u32,
    u: u32,
    mut weight: impl FnMut(u32) -> Result<f64, CfError>,
) -> Result<PairSums, CfError> {
    let (row_a, row_u) = (matrix.row(a), matrix.row(u));
    let (mean_a, mean_u) = (matrix.mean_at(a), matrix.mean_at(u));
    let mut sums = PairSums::default();
    let (mut i, mut j) = (0, 0);
    while i < row_a.len() && j < row_u.len() {
        match row_a[i].0.cmp(&row_u[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                let w = weight(row_a[i].0)?;
                let x = w * (row_a[i].1 as f64 - mean_a);
                let y = w * (row_u[j].1 as f64 - mean_u);
                sums.add(x, y);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(sums)
}

fn user_idx(matrix: &RatingMatrix, user: UserId) -> Result<u32, CfError> {
    matrix.user_idx(user).ok_or(CfError::UnknownUser(user))
}

/// Pearson correlation of `a` and `u` over their co-rated items.
///
/// No co-rated items, or zero deviation mass for either user, yields `raw = 0`.
pub fn pearson(a: UserId, u: UserId, matrix: &RatingMatrix) -> Result<Correlation, CfError> {
    let (ai, ui) = (user_idx(matrix, a)?, user_idx(matrix, u)?);
    Ok(pair_sums(matrix, ai, ui, |_| Ok(1.0))?.correlation())
}

/// Pearson correlation over weight-scaled deviations, weights taken relative
/// to `target`.
pub fn weighted_pearson(
    a: UserId,
    u: UserId,
    target: ItemId,
    matrix: &RatingMatrix,
    weights: &WeightVector,
) -> Result<Correlation, CfError> {
    debug_assert_eq!(weights.target, target);
    let (ai, ui) = (user_idx(matrix, a)?, user_idx(matrix, u)?);
    let sums = pair_sums(matrix, ai, ui, |i| {
        let item = matrix.item_at(i);
        weights.get(item).ok_or(CfError::MissingWeight(item))
    })?;
    Ok(sums.correlation())
}

/// `1` above 50 co-rated items, `overlap / 50` otherwise.
pub fn significance_factor(overlap: usize) -> f64 {
    if overlap > SIGNIFICANCE_THRESHOLD {
        1.0
    } else {
        overlap as f64 / SIGNIFICANCE_THRESHOLD as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub user: UserId,
    pub raw: f64,
    pub cf: f64,
    /// `raw * cf`, the ranking key.
    pub value: f64,
    pub overlap: usize,
}

impl SimilarityScore {
    fn new(user: UserId, corr: Correlation) -> Self {
        let cf = significance_factor(corr.overlap);
        SimilarityScore {
            user,
            raw: corr.raw,
            cf,
            value: corr.raw * cf,
            overlap: corr.overlap,
        }
    }
}

/// Descending by value, then ascending by user.
pub fn rank_order(a: &SimilarityScore, b: &SimilarityScore) -> Ordering {
    b.value.total_cmp(&a.value).then(a.user.cmp(&b.user))
}

/// Keeps the `k` best entries under `cmp`, sorted.
fn top_k_by<T>(items: &mut Vec<T>, k: usize, mut cmp: impl FnMut(&T, &T) -> Ordering) {
    if k == 0 {
        items.clear();
        return;
    }
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &mut cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub target_item: ItemId,
    pub active_user: UserId,
    pub neighbors: Vec<SimilarityScore>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Picks the `k` users most similar to `a` among the raters of `target`.
///
/// Uses weighted Pearson when `weights` is given, plain Pearson otherwise.
/// Candidates sharing no rated item with `a` are dropped, as are those below
/// `min_sim` when set.
pub fn select_neighbors(
    a: UserId,
    target: ItemId,
    matrix: &RatingMatrix,
    k: usize,
    weights: Option<&WeightVector>,
    min_sim: Option<f64>,
) -> Result<NeighborSet, CfError> {
    let ai = user_idx(matrix, a)?;
    let mut scored = Vec::new();
    if let Some(ti) = matrix.item_idx(target) {
        for &(ui, _) in matrix.col(ti) {
            if ui == ai {
                continue;
            }
            let sums = match weights {
                Some(wv) => pair_sums(matrix, ai, ui, |i| {
                    let item = matrix.item_at(i);
                    wv.get(item).ok_or(CfError::MissingWeight(item))
                })?,
                None => pair_sums(matrix, ai, ui, |_| Ok(1.0))?,
            };
            if sums.overlap == 0 {
                continue;
            }
            let score = SimilarityScore::new(matrix.user_at(ui), sums.correlation());
            if min_sim.is_some_and(|floor| score.value < floor) {
                continue;
            }
            scored.push(score);
        }
    }
    top_k_by(&mut scored, k, rank_order);
    Ok(NeighborSet {
        target_item: target,
        active_user: a,
        neighbors: scored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Predicted rating, clamped to the rating scale.
    pub value: f64,
    /// True when the user's mean was returned for lack of usable neighbors.
    pub fallback: bool,
    pub neighbors: usize,
}

/// Running sums of the mean-centered prediction. Feeding neighbors one at a
/// time lets callers read off the prediction for every prefix length.
#[derive(Debug, Clone, Copy)]
pub struct PredictionSums {
    active_mean: f64,
    denominator: Denominator,
    weighted_deviation: f64,
    normalizer: f64,
    count: usize,
}

impl PredictionSums {
    pub fn new(active_mean: f64, denominator: Denominator) -> Self {
        PredictionSums {
            active_mean,
            denominator,
            weighted_deviation: 0.0,
            normalizer: 0.0,
            count: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, neighbor_rating: u8, neighbor_mean: f64, sim: f64) {
        self.weighted_deviation += (neighbor_rating as f64 - neighbor_mean) * sim;
        self.normalizer += match self.denominator {
            Denominator::Abs => sim.abs(),
            Denominator::Signed => sim,
        };
        self.count += 1;
    }

    pub fn prediction(&self) -> Prediction {
        let (lo, hi) = (MIN_RATING as f64, MAX_RATING as f64);
        if self.count == 0 || self.normalizer.abs() < MIN_DENOMINATOR {
            return Prediction {
                value: self.active_mean.clamp(lo, hi),
                fallback: true,
                neighbors: self.count,
            };
        }
        Prediction {
            value: (self.active_mean + self.weighted_deviation / self.normalizer).clamp(lo, hi),
            fallback: false,
            neighbors: self.count,
        }
    }
}

/// Mean-centered weighted average of the neighbors' deviations on `target`.
pub fn predict(
    a: UserId,
    target: ItemId,
    neighbors: &NeighborSet,
    matrix: &RatingMatrix,
    denominator: Denominator,
) -> Result<Prediction, CfError> {
    let mean_a = matrix.user_mean(a).ok_or(CfError::UnknownUser(a))?;
    let mut sums = PredictionSums::new(mean_a, denominator);
    for n in &neighbors.neighbors {
        let r = matrix.rating(n.user, target).ok_or(CfError::NotARater {
            user: n.user,
            item: target,
        })?;
        let mean_u = matrix.user_mean(n.user).ok_or(CfError::UnknownUser(n.user))?;
        sums.push(r, mean_u, n.value);
    }
    Ok(sums.prediction())
}

/// A ranked neighbor together with its rating of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedNeighbor {
    pub score: SimilarityScore,
    pub rating: u8,
    pub mean: f64,
}

/// Batched similarity of one active user against everyone.
///
/// [`accumulate`](Self::accumulate) walks the active user's row once and, for
/// every co-rater of every item, adds that item's contribution to the
/// co-rater's sums. Each pair's terms still arrive in ascending item order,
/// so the resulting scores equal [`pearson`] / [`weighted_pearson`] exactly.
/// One scorer is reused across active users; it holds no shared state.
pub struct NeighborScorer<'m> {
    matrix: &'m RatingMatrix,
    active: Option<u32>,
    sums: Vec<PairSums>,
    touched: Vec<u32>,
    candidates: Vec<RankedNeighbor>,
}

impl<'m> NeighborScorer<'m> {
    pub fn new(matrix: &'m RatingMatrix) -> Self {
        NeighborScorer {
            matrix,
            active: None,
            sums: vec![PairSums::default(); matrix.num_users()],
            touched: Vec::new(),
            candidates: Vec::new(),
        }
    }

    /// Recomputes all pair sums for `active`. `weights`, when given, is
    /// aligned with [`RatingMatrix::items`].
    pub fn accumulate(&mut self, active: UserId, weights: Option<&[f64]>) -> Result<(), CfError> {
        let ai = user_idx(self.matrix, active)?;
        for &u in &self.touched {
            self.sums[u as usize] = PairSums::default();
        }
        self.touched.clear();
        self.active = Some(ai);

        let mean_a = self.matrix.mean_at(ai);
        for &(ii, ra) in self.matrix.row(ai) {
            let w = weights.map_or(1.0, |w| w[ii as usize]);
            let x = w * (ra as f64 - mean_a);
            for &(ui, ru) in self.matrix.col(ii) {
                if ui == ai {
                    continue;
                }
                let y = w * (ru as f64 - self.matrix.mean_at(ui));
                let s = &mut self.sums[ui as usize];
                if s.overlap == 0 {
                    self.touched.push(ui);
                }
                s.add(x, y);
            }
        }
        Ok(())
    }

    /// The `k` best raters of `target` under the last accumulation, best first.
    pub fn rank(&mut self, target: ItemId, k: usize, min_sim: Option<f64>) -> &[RankedNeighbor] {
        self.candidates.clear();
        let (Some(ai), Some(ti)) = (self.active, self.matrix.item_idx(target)) else {
            return &self.candidates;
        };
        for &(ui, rating) in self.matrix.col(ti) {
            let sums = &self.sums[ui as usize];
            if ui == ai || sums.overlap == 0 {
                continue;
            }
            let score = SimilarityScore::new(self.matrix.user_at(ui), sums.correlation());
            if min_sim.is_some_and(|floor| score.value < floor) {
                continue;
            }
            self.candidates.push(RankedNeighbor {
                score,
                rating,
                mean: self.matrix.mean_at(ui),
            });
        }
        top_k_by(&mut self.candidates, k, |a, b| rank_order(&a.score, &b.score));
        &self.candidates
    }
}
