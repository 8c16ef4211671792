//! Ratings, movie profiles and the immutable sparse rating matrix.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest score on the rating scale.
pub const MIN_RATING: u8 = 1;
/// Highest score on the rating scale.
pub const MAX_RATING: u8 = 5;

/// Number of genre labels a profile may carry at most.
pub const MAX_GENRES: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "user {}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item {}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("rating {0} is out of range (expected 1..=5)")]
    RatingOutOfRange(u8),
    #[error("duplicate rating for ({user}, {item})")]
    DuplicateRating { user: UserId, item: ItemId },
    #[error("cannot build a rating matrix from zero ratings")]
    EmptyRatings,
    #[error("{item} has no genres")]
    NoGenres { item: ItemId },
    #[error("{item} has {count} genres, at most 19 are allowed")]
    TooManyGenres { item: ItemId, count: usize },
}

/// A single 1-5 score given by a user to a movie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rating {
    pub user: UserId,
    pub item: ItemId,
    pub value: u8,
    /// Seconds since the epoch. Carried through, never used by the math.
    pub timestamp: i64,
}

impl Rating {
    pub fn new(user: UserId, item: ItemId, value: u8, timestamp: i64) -> Result<Self, ModelError> {
        if !(MIN_RATING..=MAX_RATING).contains(&value) {
            return Err(ModelError::RatingOutOfRange(value));
        }
        Ok(Rating {
            user,
            item,
            value,
            timestamp,
        })
    }
}

/// Where a profile's people (directors and actors) came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileSource {
    Dataset,
    LinkedData,
    Override,
}

/// The content description of one movie.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovieProfile {
    pub item_id: ItemId,
    pub title: String,
    pub genres: Vec<String>,
    pub directors: Vec<String>,
    pub actors: Vec<String>,
    pub source: ProfileSource,
}

impl MovieProfile {
    /// Builds a profile, dropping duplicate labels while keeping first-seen order.
    pub fn new(
        item_id: ItemId,
        title: impl Into<String>,
        genres: impl IntoIterator<Item = impl Into<String>>,
        directors: impl IntoIterator<Item = impl Into<String>>,
        actors: impl IntoIterator<Item = impl Into<String>>,
        source: ProfileSource,
    ) -> Result<Self, ModelError> {
        let profile = MovieProfile {
            item_id,
            title: title.into(),
            genres: dedup(genres),
            directors: dedup(directors),
            actors: dedup(actors),
            source,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.genres.len() {
            0 => Err(ModelError::NoGenres { item: self.item_id }),
            n if n > MAX_GENRES => Err(ModelError::TooManyGenres {
                item: self.item_id,
                count: n,
            }),
            _ => Ok(()),
        }
    }
}

fn dedup(labels: impl IntoIterator<Item = impl Into<String>>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for label in labels {
        let label = label.into().trim().to_string();
        if !label.is_empty() && !out.contains(&label) {
            out.push(label);
        }
    }
    out
}

/// Immutable sparse user x item store.
///
/// Users and items are assigned dense indices in ascending id order, so
/// iterating a user's row visits items in ascending [`ItemId`] order. Every
/// co-rated summation in the crate relies on that order.
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_index: HashMap<UserId, u32>,
    item_index: HashMap<ItemId, u32>,
    /// Per user: (item index, value), ascending item index.
    rows: Vec<Vec<(u32, u8)>>,
    /// Per item: (user index, value), ascending user index.
    cols: Vec<Vec<(u32, u8)>>,
    means: Vec<f64>,
    len: usize,
}

impl RatingMatrix {
    pub fn new<I>(ratings: I) -> Result<Self, ModelError>
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<Rating>,
    {
        use std::borrow::Borrow;

        let mut triples: Vec<(UserId, ItemId, u8)> = Vec::new();
        for r in ratings {
            let r = r.borrow();
            if !(MIN_RATING..=MAX_RATING).contains(&r.value) {
                return Err(ModelError::RatingOutOfRange(r.value));
            }
            triples.push((r.user, r.item, r.value));
        }
        if triples.is_empty() {
            return Err(ModelError::EmptyRatings);
        }
        triples.sort_unstable();
        if let Some(w) = triples
            .windows(2)
            .find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(ModelError::DuplicateRating {
                user: w[0].0,
                item: w[0].1,
            });
        }

        let mut users: Vec<UserId> = triples.iter().map(|t| t.0).collect();
        users.dedup();
        let mut items: Vec<ItemId> = triples.iter().map(|t| t.1).collect();
        items.sort_unstable();
        items.dedup();

        let user_index: HashMap<UserId, u32> =
            users.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let item_index: HashMap<ItemId, u32> =
            items.iter().enumerate().map(|(i, &it)| (it, i as u32)).collect();

        let mut rows = vec![Vec::new(); users.len()];
        let mut cols = vec![Vec::new(); items.len()];
        // triples are sorted by (user, item), so both pushes stay ascending.
        for &(u, i, v) in &triples {
            let ui = user_index[&u];
            let ii = item_index[&i];
            rows[ui as usize].push((ii, v));
            cols[ii as usize].push((ui, v));
        }

        let means = rows
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().map(|&(_, v)| v as u64).sum();
                sum as f64 / row.len() as f64
            })
            .collect();

        Ok(RatingMatrix {
            users,
            items,
            user_index,
            item_index,
            rows,
            cols,
            means,
            len: triples.len(),
        })
    }

    /// Total number of ratings.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// All users, ascending.
    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    /// All items, ascending.
    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn contains_user(&self, user: UserId) -> bool {
        self.user_index.contains_key(&user)
    }

    pub fn contains_item(&self, item: ItemId) -> bool {
        self.item_index.contains_key(&item)
    }

    /// Mean over all of the user's ratings in this matrix.
    pub fn user_mean(&self, user: UserId) -> Option<f64> {
        self.user_index.get(&user).map(|&u| self.means[u as usize])
    }

    pub fn rating(&self, user: UserId, item: ItemId) -> Option<u8> {
        let u = *self.user_index.get(&user)?;
        let i = *self.item_index.get(&item)?;
        let row = &self.rows[u as usize];
        row.binary_search_by_key(&i, |&(ii, _)| ii)
            .ok()
            .map(|pos| row[pos].1)
    }

    /// The user's ratings as (item, value), ascending by item.
    pub fn user_ratings(&self, user: UserId) -> impl Iterator<Item = (ItemId, u8)> + '_ {
        self.user_index
            .get(&user)
            .map(|&u| self.rows[u as usize].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&(i, v)| (self.items[i as usize], v))
    }

    /// Users who rated `item`, ascending.
    pub fn item_raters(&self, item: ItemId) -> impl Iterator<Item = UserId> + '_ {
        self.item_ratings(item).map(|(u, _)| u)
    }

    /// Ratings of `item` as (user, value), ascending by user.
    pub fn item_ratings(&self, item: ItemId) -> impl Iterator<Item = (UserId, u8)> + '_ {
        self.item_index
            .get(&item)
            .map(|&i| self.cols[i as usize].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&(u, v)| (self.users[u as usize], v))
    }

    // Index-level access for the similarity kernels.

    pub(crate) fn user_idx(&self, user: UserId) -> Option<u32> {
        self.user_index.get(&user).copied()
    }

    pub(crate) fn item_idx(&self, item: ItemId) -> Option<u32> {
        self.item_index.get(&item).copied()
    }

    pub(crate) fn row(&self, user_idx: u32) -> &[(u32, u8)] {
        &self.rows[user_idx as usize]
    }

    pub(crate) fn col(&self, item_idx: u32) -> &[(u32, u8)] {
        &self.cols[item_idx as usize]
    }

    pub(crate) fn mean_at(&self, user_idx: u32) -> f64 {
        self.means[user_idx as usize]
    }

    pub(crate) fn user_at(&self, user_idx: u32) -> UserId {
        self.users[user_idx as usize]
    }

    pub(crate) fn item_at(&self, item_idx: u32) -> ItemId {
        self.items[item_idx as usize]
    }
}
