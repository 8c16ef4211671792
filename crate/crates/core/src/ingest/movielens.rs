//! Readers for the MovieLens-1M `::`-separated files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::ingest::IngestError;
use crate::model::{ItemId, Rating, UserId};

/// Genre labels used by the MovieLens catalogs.
pub const GENRE_VOCABULARY: [&str; 19] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
    "unknown",
];

/// Title and genres of one catalog entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovieEntry {
    pub title: String,
    pub genres: Vec<String>,
}

/// Decodes a line as UTF-8, falling back to Latin-1 byte-for-char.
fn decode_lenient(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(n, l)| (n + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace))
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses one `UserID::MovieID::Rating::Timestamp` line.
pub fn parse_rating_line(line: &str, line_no: usize) -> Result<Rating, IngestError> {
    let malformed = |reason: &str| IngestError::Malformed {
        line: line_no,
        reason: reason.to_owned(),
    };
    let mut fields = line.trim().split("::");
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| malformed(&format!("missing {name} field")))
    };
    let user: u32 = next("user")?.parse().map_err(|_| malformed("bad user id"))?;
    let item: u32 = next("movie")?.parse().map_err(|_| malformed("bad movie id"))?;
    let value: i64 = next("rating")?.parse().map_err(|_| malformed("bad rating"))?;
    let timestamp: i64 = next("timestamp")?
        .parse()
        .map_err(|_| malformed("bad timestamp"))?;
    if fields.next().is_some() {
        return Err(malformed("too many fields"));
    }
    if !(1..=5).contains(&value) {
        return Err(IngestError::RatingOutOfRange {
            line: line_no,
            value,
        });
    }
    Ok(Rating {
        user: UserId(user),
        item: ItemId(item),
        value: value as u8,
        timestamp,
    })
}

/// Reads every rating in `ratings.dat`, in file order.
pub fn parse_ratings(path: impl AsRef<Path>) -> Result<Vec<Rating>, IngestError> {
    let bytes = read(path.as_ref())?;
    let mut out = Vec::with_capacity(bytes.len() / 22);
    for (line_no, line) in lines(&bytes) {
        let text = std::str::from_utf8(line).map_err(|_| IngestError::Malformed {
            line: line_no,
            reason: "not valid text".into(),
        })?;
        out.push(parse_rating_line(text, line_no)?);
    }
    Ok(out)
}

/// Parses one `MovieID::Title::Genre|Genre` line. Titles may contain `::`
/// only in theory; the last field is always the genre list.
pub fn parse_movie_line(line: &str, line_no: usize) -> Result<(ItemId, MovieEntry), IngestError> {
    let malformed = |reason: &str| IngestError::Malformed {
        line: line_no,
        reason: reason.to_owned(),
    };
    let line = line.trim_end();
    let (id, rest) = line.split_once("::").ok_or_else(|| malformed("missing title"))?;
    let (title, genres) = rest.rsplit_once("::").ok_or_else(|| malformed("missing genres"))?;
    let id: u32 = id.trim().parse().map_err(|_| malformed("bad movie id"))?;
    let mut labels: Vec<String> = Vec::new();
    for g in genres.split('|').map(str::trim).filter(|g| !g.is_empty()) {
        if !GENRE_VOCABULARY.contains(&g) {
            log::warn!("line {line_no}: unknown genre label {g:?} kept verbatim");
        }
        if !labels.iter().any(|l| l == g) {
            labels.push(g.to_owned());
        }
    }
    if labels.is_empty() {
        return Err(IngestError::NoGenres {
            line: line_no,
            item: ItemId(id),
        });
    }
    Ok((
        ItemId(id),
        MovieEntry {
            title: title.trim().to_owned(),
            genres: labels,
        },
    ))
}

/// Reads `movies.dat`. Lines that are not valid UTF-8 are decoded as Latin-1.
pub fn parse_movies(path: impl AsRef<Path>) -> Result<BTreeMap<ItemId, MovieEntry>, IngestError> {
    let bytes = read(path.as_ref())?;
    let mut out = BTreeMap::new();
    for (line_no, line) in lines(&bytes) {
        let (id, entry) = parse_movie_line(&decode_lenient(line), line_no)?;
        out.insert(id, entry);
    }
    Ok(out)
}
