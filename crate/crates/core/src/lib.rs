//! User-based collaborative filtering in which the similarity of two users is
//! a Pearson correlation with every co-rated movie weighted by how closely
//! its content (genres, directors, actors) matches the movie being predicted.
//!
//! The crate is split along the pipeline:
//!
//! - [`model`]: ratings, movie profiles, and the sparse [`RatingMatrix`].
//! - [`ingest`]: MovieLens readers, the SPARQL metadata client, profile files.
//! - [`weighting`]: feature vectors, cosine similarity, smoothed item weights.
//! - [`cf`]: plain and weighted Pearson, significance damping, neighbor
//!   selection, prediction.
//! - [`evaluation`]: per-item 5-fold cross-validation, MAE, reports.
//!
//! ```
//! use contentcf::{cf, model::{ItemId, Rating, RatingMatrix, UserId}};
//!
//! let ratings = [(1, 1, 5), (1, 2, 3), (2, 1, 4), (2, 2, 2), (2, 3, 5)]
//!     .map(|(u, i, v)| Rating::new(UserId(u), ItemId(i), v, 0).unwrap());
//! let matrix = RatingMatrix::new(&ratings).unwrap();
//! let neighbors = cf::select_neighbors(UserId(1), ItemId(3), &matrix, 50, None, None).unwrap();
//! let p = cf::predict(UserId(1), ItemId(3), &neighbors, &matrix, cf::Denominator::Abs).unwrap();
//! assert!((1.0..=5.0).contains(&p.value));
//! ```

pub mod cf;
pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod weighting;

pub use model::{ItemId, MovieProfile, Rating, RatingMatrix, UserId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ratings.md")]
    mod ratings {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/weighting.md")]
    mod weighting {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
