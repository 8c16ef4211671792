//! Content weights of catalog items relative to a target item.
//!
//! Each movie is described by its genres, directors and actors. Two movies
//! are compared over a shared 0/1 feature universe in which actors only
//! appear when both movies list them. The weight of movie `M` for target `T`
//! is `(1 + k) / (|M| |T|)` when they share `k >= 1` features, and a small
//! floor otherwise (see [`ZeroOverlapWeight`]).

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use thiserror::Error;

use crate::model::{ItemId, MovieProfile};

/// Default number of targets kept by the weight caches.
pub const DEFAULT_CACHE_TARGETS: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("{0} has no content profile")]
    Unprofiled(ItemId),
    #[error("cannot normalize an all-zero feature vector")]
    ZeroVector,
    #[error("feature vectors are over different universes")]
    UniverseMismatch,
}

/// Weight given to a pair of movies with no feature in common.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroOverlapWeight {
    /// `1 / max_feature_count`, where the maximum is taken over the catalog.
    #[default]
    Mv,
    /// `1 / (|M| |T|)` over the pair's own vectors.
    Literal,
}

/// One coordinate of a feature universe. Variant order puts genres first,
/// then directors, then actors; labels sort lexicographically within each.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Genre(String),
    Director(String),
    Actor(String),
}

/// Case-folded, trimmed label used for every feature comparison.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

fn normalized_set(labels: &[String]) -> BTreeSet<String> {
    labels
        .iter()
        .map(|l| normalize_label(l))
        .filter(|l| !l.is_empty())
        .collect()
}

/// 0/1 presence indicators over an explicit universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub universe: Vec<Feature>,
    pub components: Vec<u8>,
}

impl FeatureVector {
    pub fn ones(&self) -> usize {
        self.components.iter().filter(|&&c| c == 1).count()
    }
}

/// Number of distinct features a profile carries on its own (no trimming).
pub fn feature_count(profile: &MovieProfile) -> usize {
    normalized_set(&profile.genres).len()
        + normalized_set(&profile.directors).len()
        + normalized_set(&profile.actors).len()
}

/// Builds the pair's vectors over the union of genres and directors plus
/// the actors the two profiles have in common.
pub fn build_vectors(m: &MovieProfile, t: &MovieProfile) -> (FeatureVector, FeatureVector) {
    let (gm, gt) = (normalized_set(&m.genres), normalized_set(&t.genres));
    let (dm, dt) = (normalized_set(&m.directors), normalized_set(&t.directors));
    let (am, at) = (normalized_set(&m.actors), normalized_set(&t.actors));

    let mut universe: BTreeSet<Feature> = BTreeSet::new();
    universe.extend(gm.union(&gt).cloned().map(Feature::Genre));
    universe.extend(dm.union(&dt).cloned().map(Feature::Director));
    universe.extend(am.intersection(&at).cloned().map(Feature::Actor));
    let universe: Vec<Feature> = universe.into_iter().collect();

    let indicator = |g: &BTreeSet<String>, d: &BTreeSet<String>, a: &BTreeSet<String>| {
        universe
            .iter()
            .map(|f| {
                let present = match f {
                    Feature::Genre(x) => g.contains(x),
                    Feature::Director(x) => d.contains(x),
                    Feature::Actor(x) => a.contains(x),
                };
                present as u8
            })
            .collect::<Vec<u8>>()
    };
    let mv = indicator(&gm, &dm, &am);
    let tv = indicator(&gt, &dt, &at);
    (
        FeatureVector {
            universe: universe.clone(),
            components: mv,
        },
        FeatureVector {
            universe,
            components: tv,
        },
    )
}

fn dot_and_norms(a: &FeatureVector, b: &FeatureVector) -> Result<(f64, f64, f64), WeightError> {
    if a.universe != b.universe || a.components.len() != b.components.len() {
        return Err(WeightError::UniverseMismatch);
    }
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (&x, &y) in a.components.iter().zip(&b.components) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    Ok((dot, aa, bb))
}

/// Cosine similarity of two feature vectors over the same universe.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64, WeightError> {
    let (dot, aa, bb) = dot_and_norms(a, b)?;
    if aa == 0.0 || bb == 0.0 {
        return Err(WeightError::ZeroVector);
    }
    Ok(dot / (aa * bb).sqrt())
}

/// Smoothed content weight of `m` relative to `t`.
pub fn item_weight(
    m: &MovieProfile,
    t: &MovieProfile,
    max_feature_count: usize,
    zero_overlap: ZeroOverlapWeight,
) -> f64 {
    let (vm, vt) = build_vectors(m, t);
    let (shared, mm, tt) = dot_and_norms(&vm, &vt).expect("vectors share a universe");
    if shared >= 1.0 {
        (1.0 + shared) / (mm * tt).sqrt()
    } else {
        match zero_overlap {
            ZeroOverlapWeight::Mv => 1.0 / max_feature_count.max(1) as f64,
            ZeroOverlapWeight::Literal => 1.0 / (mm * tt).sqrt(),
        }
    }
}

/// Per-target weights over a set of catalog items.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub target: ItemId,
    pub weights: HashMap<ItemId, f64>,
    pub max_feature_count: usize,
}

impl WeightVector {
    pub fn get(&self, item: ItemId) -> Option<f64> {
        self.weights.get(&item).copied()
    }
}

/// Interned feature sets, sorted, one per profiled item.
#[derive(Debug, Clone)]
struct Encoded {
    genres: Vec<u32>,
    directors: Vec<u32>,
    actors: Vec<u32>,
}

fn intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Content-weight model over a profiled catalog.
///
/// Holds interned feature sets so a single pair weight reduces to three
/// sorted-list intersections. `weights_for_target` memoizes per target with
/// an LRU bound; concurrent callers may compute the same entry twice.
pub struct ContentWeights {
    encoded: HashMap<ItemId, Encoded>,
    max_feature_count: usize,
    zero_overlap: ZeroOverlapWeight,
    memo: Mutex<LruCache<ItemId, HashMap<ItemId, f64>>>,
}

impl ContentWeights {
    pub fn new<'a>(
        profiles: impl IntoIterator<Item = &'a MovieProfile>,
        zero_overlap: ZeroOverlapWeight,
    ) -> Self {
        Self::with_cache_capacity(profiles, zero_overlap, DEFAULT_CACHE_TARGETS)
    }

    pub fn with_cache_capacity<'a>(
        profiles: impl IntoIterator<Item = &'a MovieProfile>,
        zero_overlap: ZeroOverlapWeight,
        cache_targets: usize,
    ) -> Self {
        let mut interner: HashMap<String, u32> = HashMap::new();
        let mut intern = |labels: &[String]| {
            let mut ids: Vec<u32> = normalized_set(labels)
                .into_iter()
                .map(|l| {
                    let next = interner.len() as u32;
                    *interner.entry(l).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            ids
        };
        let mut encoded = HashMap::new();
        let mut max_feature_count = 1;
        for p in profiles {
            let e = Encoded {
                genres: intern(&p.genres),
                directors: intern(&p.directors),
                actors: intern(&p.actors),
            };
            max_feature_count =
                max_feature_count.max(e.genres.len() + e.directors.len() + e.actors.len());
            encoded.insert(p.item_id, e);
        }
        let cap = NonZeroUsize::new(cache_targets.max(1)).unwrap();
        ContentWeights {
            encoded,
            max_feature_count,
            zero_overlap,
            memo: Mutex::new(LruCache::new(cap)),
        }
    }

    /// Largest feature count of any catalog movie.
    pub fn max_feature_count(&self) -> usize {
        self.max_feature_count
    }

    pub fn zero_overlap(&self) -> ZeroOverlapWeight {
        self.zero_overlap
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.encoded.contains_key(&item)
    }

    /// Weight of `item` relative to `target`.
    pub fn weight(&self, item: ItemId, target: ItemId) -> Result<f64, WeightError> {
        let m = self.encoded.get(&item).ok_or(WeightError::Unprofiled(item))?;
        let t = self.encoded.get(&target).ok_or(WeightError::Unprofiled(target))?;
        Ok(self.pair_weight(m, t))
    }

    fn pair_weight(&self, m: &Encoded, t: &Encoded) -> f64 {
        let common_actors = intersection_len(&m.actors, &t.actors);
        let shared = intersection_len(&m.genres, &t.genres)
            + intersection_len(&m.directors, &t.directors)
            + common_actors;
        let m_ones = (m.genres.len() + m.directors.len() + common_actors) as f64;
        let t_ones = (t.genres.len() + t.directors.len() + common_actors) as f64;
        if shared >= 1 {
            (1.0 + shared as f64) / (m_ones * t_ones).sqrt()
        } else {
            match self.zero_overlap {
                ZeroOverlapWeight::Mv => 1.0 / self.max_feature_count as f64,
                ZeroOverlapWeight::Literal => 1.0 / (m_ones * t_ones).sqrt(),
            }
        }
    }

    /// Weights of `candidates` relative to `target`, computed on demand and
    /// memoized per target.
    pub fn weights_for_target(
        &self,
        target: ItemId,
        candidates: impl IntoIterator<Item = ItemId>,
    ) -> Result<WeightVector, WeightError> {
        let t = self
            .encoded
            .get(&target)
            .ok_or(WeightError::Unprofiled(target))?;
        let candidates: Vec<ItemId> = candidates.into_iter().collect();
        if let Some(&missing) = candidates.iter().find(|c| !self.encoded.contains_key(c)) {
            return Err(WeightError::Unprofiled(missing));
        }

        let known = {
            let mut memo = self.memo.lock().unwrap();
            memo.get(&target).cloned().unwrap_or_default()
        };
        let mut weights = HashMap::with_capacity(candidates.len());
        let mut fresh = Vec::new();
        for c in candidates {
            let w = match known.get(&c) {
                Some(&w) => w,
                None => {
                    let w = self.pair_weight(&self.encoded[&c], t);
                    fresh.push((c, w));
                    w
                }
            };
            weights.insert(c, w);
        }
        if !fresh.is_empty() {
            let mut memo = self.memo.lock().unwrap();
            let entry = memo.get_or_insert_mut(target, HashMap::new);
            entry.extend(fresh);
        }
        Ok(WeightVector {
            target,
            weights,
            max_feature_count: self.max_feature_count,
        })
    }
}

/// Dense per-target weights aligned with a fixed item list (for instance,
/// the items of a training matrix), memoized with an LRU bound.
pub struct TargetWeightCache<'a> {
    weights: &'a ContentWeights,
    items: Vec<ItemId>,
    cache: Mutex<LruCache<ItemId, Arc<[f64]>>>,
}

impl<'a> TargetWeightCache<'a> {
    pub fn new(weights: &'a ContentWeights, items: &[ItemId], capacity: usize) -> Result<Self, WeightError> {
        if let Some(&missing) = items.iter().find(|i| !weights.contains(**i)) {
            return Err(WeightError::Unprofiled(missing));
        }
        Ok(TargetWeightCache {
            weights,
            items: items.to_vec(),
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).unwrap())),
        })
    }

    /// Weight of every item in the aligned list relative to `target`.
    pub fn get(&self, target: ItemId) -> Result<Arc<[f64]>, WeightError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&target) {
            return Ok(Arc::clone(hit));
        }
        let t = self
            .weights
            .encoded
            .get(&target)
            .ok_or(WeightError::Unprofiled(target))?;
        let dense: Arc<[f64]> = self
            .items
            .iter()
            .map(|i| self.weights.pair_weight(&self.weights.encoded[i], t))
            .collect();
        self.cache.lock().unwrap().put(target, Arc::clone(&dense));
        Ok(dense)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProfileSource;
    use proptest::prelude::*;

    fn profile(id: u32, genres: &[&str], directors: &[&str], actors: &[&str]) -> MovieProfile {
        MovieProfile::new(
            ItemId(id),
            format!("movie {id}"),
            genres.iter().copied(),
            directors.iter().copied(),
            actors.iter().copied(),
            ProfileSource::Dataset,
        )
        .unwrap()
    }

    fn worked_pair() -> (MovieProfile, MovieProfile) {
        (
            profile(1, &["G1", "G2"], &["D1", "D2"], &["A1", "A2", "A3"]),
            profile(2, &["G1", "G2", "G3"], &["D3"], &["A2", "A3"]),
        )
    }

    #[test]
    fn worked_example_vectors() {
        let (m, t) = worked_pair();
        let (vm, vt) = build_vectors(&m, &t);
        assert_eq!(vm.components, vec![1, 1, 0, 1, 1, 0, 1, 1]);
        assert_eq!(vt.components, vec![1, 1, 1, 0, 0, 1, 1, 1]);
        assert_eq!(vm.universe.len(), 8);
        assert_eq!(vm.universe[0], Feature::Genre("g1".into()));
        assert_eq!(vm.universe[3], Feature::Director("d1".into()));
        assert_eq!(vm.universe[6], Feature::Actor("a2".into()));
        assert_eq!(cosine(&vm, &vt).unwrap(), 4.0 / 6.0);
        assert_eq!(item_weight(&m, &t, 25, ZeroOverlapWeight::Mv), 5.0 / 6.0);
    }

    #[test]
    fn identical_profiles_give_all_ones() {
        let p = profile(1, &["Drama"], &["X"], &["Y", "Z"]);
        let (a, b) = build_vectors(&p, &p);
        assert_eq!(a, b);
        assert!(a.components.iter().all(|&c| c == 1));
        assert_eq!(cosine(&a, &b).unwrap(), 1.0);
        // (1 + n) / n with n = 4
        assert_eq!(item_weight(&p, &p, 4, ZeroOverlapWeight::Mv), 5.0 / 4.0);
    }

    #[test]
    fn disjoint_profiles() {
        let m = profile(1, &["Drama"], &["X"], &["Y"]);
        let t = profile(2, &["Comedy"], &[], &["Q"]);
        let (a, b) = build_vectors(&m, &t);
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
        assert_eq!(item_weight(&m, &t, 25, ZeroOverlapWeight::Mv), 0.04);
        // literal: |M|^2 = 2 (genre + director, actor trimmed), |T|^2 = 1
        assert_eq!(
            item_weight(&m, &t, 25, ZeroOverlapWeight::Literal),
            1.0 / 2f64.sqrt()
        );
    }

    #[test]
    fn labels_compare_case_insensitively() {
        let m = profile(1, &["Drama "], &["steven spielberg"], &[]);
        let t = profile(2, &["drama"], &["Steven Spielberg"], &[]);
        let (a, b) = build_vectors(&m, &t);
        assert_eq!(a, b);
    }

    #[test]
    fn director_and_actor_namespaces_are_distinct() {
        let m = profile(1, &["Drama"], &["Clint Eastwood"], &[]);
        let t = profile(2, &["Western"], &[], &["Clint Eastwood"]);
        let (a, b) = build_vectors(&m, &t);
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let v = FeatureVector {
            universe: vec![Feature::Genre("a".into())],
            components: vec![0],
        };
        assert_eq!(cosine(&v, &v), Err(WeightError::ZeroVector));
    }

    #[test]
    fn weights_for_target_singleton_and_memo() {
        let (m, t) = worked_pair();
        let cw = ContentWeights::new([&m, &t], ZeroOverlapWeight::Mv);
        let wv = cw.weights_for_target(ItemId(2), [ItemId(2)]).unwrap();
        assert_eq!(wv.weights.len(), 1);
        assert_eq!(wv.get(ItemId(2)), Some(item_weight(&t, &t, 7, ZeroOverlapWeight::Mv)));
        assert_eq!(cw.max_feature_count(), 7);

        let a = cw.weights_for_target(ItemId(2), [ItemId(1), ItemId(2)]).unwrap();
        let b = cw.weights_for_target(ItemId(2), [ItemId(1), ItemId(2)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(ItemId(1)), Some(5.0 / 6.0));
    }

    #[test]
    fn unprofiled_candidate_is_named() {
        let (m, t) = worked_pair();
        let cw = ContentWeights::new([&m, &t], ZeroOverlapWeight::Mv);
        assert_eq!(
            cw.weights_for_target(ItemId(2), [ItemId(9)]).unwrap_err(),
            WeightError::Unprofiled(ItemId(9))
        );
        assert!(TargetWeightCache::new(&cw, &[ItemId(1), ItemId(5)], 4).is_err());
    }

    const GENRES: [&str; 6] = ["Action", "Comedy", "Drama", "Horror", "Sci-Fi", "War"];
    const PEOPLE: [&str; 8] = ["p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7"];

    prop_compose! {
        fn arb_profile(id: u32)(
            g in proptest::sample::subsequence(GENRES.to_vec(), 1..4),
            d in proptest::sample::subsequence(PEOPLE.to_vec(), 0..3),
            a in proptest::sample::subsequence(PEOPLE.to_vec(), 0..6),
        ) -> MovieProfile {
            profile(id, &g, &d, &a)
        }
    }

    proptest! {
        #[test]
        fn fast_route_matches_vector_route(
            catalog in proptest::collection::vec(arb_profile(0), 2..20),
            literal in any::<bool>(),
        ) {
            let catalog: Vec<MovieProfile> = catalog
                .into_iter()
                .enumerate()
                .map(|(i, mut p)| { p.item_id = ItemId(i as u32); p })
                .collect();
            let rule = if literal { ZeroOverlapWeight::Literal } else { ZeroOverlapWeight::Mv };
            let cw = ContentWeights::new(&catalog, rule);
            let max = catalog.iter().map(feature_count).max().unwrap();
            prop_assert_eq!(cw.max_feature_count(), max);

            let target = catalog[0].item_id;
            let ids: Vec<ItemId> = catalog.iter().map(|p| p.item_id).collect();
            let wv = cw.weights_for_target(target, ids.clone()).unwrap();
            let dense = TargetWeightCache::new(&cw, &ids, 8).unwrap().get(target).unwrap();
            for (p, &d) in catalog.iter().zip(dense.iter()) {
                let direct = item_weight(p, &catalog[0], max, rule);
                prop_assert_eq!(wv.get(p.item_id).unwrap().to_bits(), direct.to_bits());
                prop_assert_eq!(d.to_bits(), direct.to_bits());
            }
        }
    }
}
