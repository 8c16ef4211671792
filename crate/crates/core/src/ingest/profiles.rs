//! Override records, profile assembly and the line-delimited profile file.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::ingest::movielens::MovieEntry;
use crate::ingest::sparql::{FetchRecord, FetchStatus};
use crate::ingest::IngestError;
use crate::model::{ItemId, MovieProfile, ProfileSource};

/// Actor cap applied to override records unless configured otherwise.
pub const DEFAULT_OVERRIDE_ACTOR_CAP: usize = 7;

/// Provenance entry of the profile store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchLogEntry {
    pub status: FetchStatus,
    #[serde(default)]
    pub multi_film: bool,
}

/// Every catalog movie's profile plus where its people came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileStore {
    pub profiles: BTreeMap<ItemId, MovieProfile>,
    pub fetch_log: BTreeMap<ItemId, FetchLogEntry>,
}

impl ProfileStore {
    /// Genre-only profiles straight from the catalog.
    pub fn from_movies(movies: &BTreeMap<ItemId, MovieEntry>) -> Result<Self, IngestError> {
        assemble_profiles(movies, &[], &[], &AssembleOptions::default())
    }

    pub fn get(&self, item: ItemId) -> Option<&MovieProfile> {
        self.profiles.get(&item)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MovieProfile> {
        self.profiles.values()
    }

    /// Items in `items` with no profile.
    pub fn missing<'a>(&'a self, items: impl IntoIterator<Item = &'a ItemId>) -> Vec<ItemId> {
        items
            .into_iter()
            .filter(|i| !self.profiles.contains_key(i))
            .copied()
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideRecord {
    item_id: ItemId,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    directors: Vec<String>,
    #[serde(default)]
    actors: Vec<String>,
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| IngestError::Malformed {
            line: n + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for r in records {
        let line = serde_json::to_string(&r).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads hand-curated people for catalog movies.
///
/// One JSON object per line: `{"item_id": 1, "directors": [...], "actors": [...]}`
/// with an optional `title`. Actor lists longer than `actor_cap` keep their
/// first entries. Records for movies not in `movies` are skipped with a warning.
pub fn load_overrides(
    path: impl AsRef<Path>,
    movies: &BTreeMap<ItemId, MovieEntry>,
    actor_cap: Option<usize>,
) -> Result<Vec<MovieProfile>, IngestError> {
    let records: Vec<OverrideRecord> = parse_jsonl(&read_text(path.as_ref())?)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let Some(entry) = movies.get(&rec.item_id) else {
            log::warn!("override for unknown {} skipped", rec.item_id);
            continue;
        };
        let mut profile = MovieProfile::new(
            rec.item_id,
            rec.title.unwrap_or_else(|| entry.title.clone()),
            entry.genres.iter().cloned(),
            rec.directors,
            rec.actors,
            ProfileSource::Override,
        )?;
        if let Some(cap) = actor_cap {
            profile.actors.truncate(cap);
        }
        out.push(profile);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Cap on linked-data actors; `None` keeps them all.
    pub fetched_actor_cap: Option<usize>,
}

/// Merges catalog genres with fetched and overridden people.
///
/// Genres always come from the catalog. People come from an override when
/// one exists, else from a successful fetch, else stay empty.
pub fn assemble_profiles(
    movies: &BTreeMap<ItemId, MovieEntry>,
    fetched: &[FetchRecord],
    overrides: &[MovieProfile],
    opts: &AssembleOptions,
) -> Result<ProfileStore, IngestError> {
    let fetched: BTreeMap<ItemId, &FetchRecord> = fetched.iter().map(|r| (r.item_id, r)).collect();
    let overrides: BTreeMap<ItemId, &MovieProfile> = overrides.iter().map(|p| (p.item_id, p)).collect();

    let mut store = ProfileStore::default();
    for (&id, entry) in movies {
        let genres = entry.genres.iter().cloned();
        let (profile, log) = if let Some(ov) = overrides.get(&id) {
            let multi_film = fetched.get(&id).is_some_and(|f| f.multi_film);
            (
                MovieProfile::new(
                    id,
                    entry.title.clone(),
                    genres,
                    ov.directors.iter().cloned(),
                    ov.actors.iter().cloned(),
                    ProfileSource::Override,
                )?,
                Some(FetchLogEntry {
                    status: FetchStatus::Overridden,
                    multi_film,
                }),
            )
        } else if let Some(f) = fetched.get(&id) {
            let log = FetchLogEntry {
                status: f.status,
                multi_film: f.multi_film,
            };
            if f.status == FetchStatus::FetchedOk {
                let mut p = MovieProfile::new(
                    id,
                    entry.title.clone(),
                    genres,
                    f.directors.iter().cloned(),
                    f.actors.iter().cloned(),
                    ProfileSource::LinkedData,
                )?;
                if let Some(cap) = opts.fetched_actor_cap {
                    p.actors.truncate(cap);
                }
                (p, Some(log))
            } else {
                (dataset_profile(id, entry)?, Some(log))
            }
        } else {
            (dataset_profile(id, entry)?, None)
        };
        store.profiles.insert(id, profile);
        store.fetch_log.insert(
            id,
            log.unwrap_or(FetchLogEntry {
                status: FetchStatus::NotFetched,
                multi_film: false,
            }),
        );
    }
    Ok(store)
}

fn dataset_profile(id: ItemId, entry: &MovieEntry) -> Result<MovieProfile, IngestError> {
    Ok(MovieProfile::new(
        id,
        entry.title.clone(),
        entry.genres.iter().cloned(),
        Vec::<String>::new(),
        Vec::<String>::new(),
        ProfileSource::Dataset,
    )?)
}

/// Writes one profile per line, ascending item id.
pub fn write_profiles(path: impl AsRef<Path>, store: &ProfileStore) -> Result<(), IngestError> {
    write_jsonl(path.as_ref(), store.profiles.values())
}

/// Reads a profile file back into a store. The fetch log is reconstructed
/// from each profile's source.
pub fn read_profiles(path: impl AsRef<Path>) -> Result<ProfileStore, IngestError> {
    let profiles: Vec<MovieProfile> = parse_jsonl(&read_text(path.as_ref())?)?;
    let mut store = ProfileStore::default();
    let mut seen = HashSet::new();
    for p in profiles {
        p.validate()?;
        if !seen.insert(p.item_id) {
            return Err(IngestError::DuplicateProfile(p.item_id));
        }
        let status = match p.source {
            ProfileSource::Override => FetchStatus::Overridden,
            ProfileSource::LinkedData => FetchStatus::FetchedOk,
            ProfileSource::Dataset => FetchStatus::NotFetched,
        };
        store.fetch_log.insert(
            p.item_id,
            FetchLogEntry {
                status,
                multi_film: false,
            },
        );
        store.profiles.insert(p.item_id, p);
    }
    Ok(store)
}

pub fn write_fetch_records(path: impl AsRef<Path>, records: &[FetchRecord]) -> Result<(), IngestError> {
    write_jsonl(path.as_ref(), records)
}

pub fn read_fetch_records(path: impl AsRef<Path>) -> Result<Vec<FetchRecord>, IngestError> {
    parse_jsonl(&read_text(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> BTreeMap<ItemId, MovieEntry> {
        let mut m = BTreeMap::new();
        m.insert(
            ItemId(1),
            MovieEntry {
                title: "Toy Story (1995)".into(),
                genres: vec!["Animation".into(), "Children's".into(), "Comedy".into()],
            },
        );
        m.insert(
            ItemId(2),
            MovieEntry {
                title: "Heat (1995)".into(),
                genres: vec!["Action".into(), "Crime".into(), "Thriller".into()],
            },
        );
        m
    }

    fn fetched(id: u32, directors: &[&str], actors: &[&str]) -> FetchRecord {
        FetchRecord {
            item_id: ItemId(id),
            title: String::new(),
            query_title: String::new(),
            status: FetchStatus::FetchedOk,
            directors: directors.iter().map(|s| s.to_string()).collect(),
            actors: actors.iter().map(|s| s.to_string()).collect(),
            multi_film: false,
            error: None,
        }
    }

    #[test]
    fn genres_only_fallback() {
        let store = ProfileStore::from_movies(&catalog()).unwrap();
        let p = store.get(ItemId(2)).unwrap();
        assert_eq!(p.source, ProfileSource::Dataset);
        assert!(p.directors.is_empty() && p.actors.is_empty());
        assert_eq!(store.fetch_log[&ItemId(2)].status, FetchStatus::NotFetched);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn override_wins_over_fetch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overrides.jsonl");
        fs::write(
            &path,
            r#"{"item_id": 2, "directors": ["Michael Mann"], "actors": ["Al Pacino","Robert De Niro","Val Kilmer","Jon Voight","Tom Sizemore","Diane Venora","Amy Brenneman","Ashley Judd","Mykelti Williamson"]}
{"item_id": 99, "directors": ["Nobody"]}
"#,
        )
        .unwrap();
        let overrides = load_overrides(&path, &catalog(), Some(DEFAULT_OVERRIDE_ACTOR_CAP)).unwrap();
        assert_eq!(overrides.len(), 1);
        assert_eq!(overrides[0].actors.len(), 7);
        assert_eq!(overrides[0].actors[6], "Amy Brenneman");

        let store = assemble_profiles(
            &catalog(),
            &[fetched(2, &["Someone Else"], &["X"]), fetched(1, &["John Lasseter"], &["Tom Hanks"])],
            &overrides,
            &AssembleOptions::default(),
        )
        .unwrap();
        let heat = store.get(ItemId(2)).unwrap();
        assert_eq!(heat.source, ProfileSource::Override);
        assert_eq!(heat.directors, vec!["Michael Mann"]);
        assert_eq!(heat.genres, vec!["Action", "Crime", "Thriller"]);
        assert_eq!(store.fetch_log[&ItemId(2)].status, FetchStatus::Overridden);
        let toy = store.get(ItemId(1)).unwrap();
        assert_eq!(toy.source, ProfileSource::LinkedData);
        assert_eq!(toy.actors, vec!["Tom Hanks"]);
    }

    #[test]
    fn failed_fetch_keeps_genres() {
        let mut f = fetched(1, &[], &[]);
        f.status = FetchStatus::FetchFailed;
        let store = assemble_profiles(&catalog(), &[f], &[], &AssembleOptions::default()).unwrap();
        assert_eq!(store.get(ItemId(1)).unwrap().genres.len(), 3);
        assert_eq!(store.fetch_log[&ItemId(1)].status, FetchStatus::FetchFailed);
    }

    #[test]
    fn empty_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_overrides(&path, &catalog(), Some(7)).unwrap().is_empty());
    }

    #[test]
    fn malformed_override_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"item_id\": 1}\n{\"item_id\": \n").unwrap();
        assert!(matches!(
            load_overrides(&path, &catalog(), Some(7)),
            Err(IngestError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn assembly_is_idempotent_and_file_round_trips() {
        let inputs = [fetched(1, &["John Lasseter"], &["Tom Hanks", "Tim Allen"])];
        let a = assemble_profiles(&catalog(), &inputs, &[], &AssembleOptions::default()).unwrap();
        let b = assemble_profiles(&catalog(), &inputs, &[], &AssembleOptions::default()).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_profiles(&p1, &a).unwrap();
        write_profiles(&p2, &b).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let back = read_profiles(&p1).unwrap();
        assert_eq!(back.profiles, a.profiles);

        let first = fs::read_to_string(&p1).unwrap().lines().next().unwrap().to_owned();
        assert_eq!(
            first,
            r#"{"item_id":1,"title":"Toy Story (1995)","genres":["Animation","Children's","Comedy"],"directors":["John Lasseter"],"actors":["Tom Hanks","Tim Allen"],"source":"linked-data"}"#
        );
    }

    #[test]
    fn fetched_actor_cap_is_configurable() {
        let inputs = [fetched(1, &["D"], &["a", "b", "c"])];
        let store = assemble_profiles(
            &catalog(),
            &inputs,
            &[],
            &AssembleOptions { fetched_actor_cap: Some(2) },
        )
        .unwrap();
        assert_eq!(store.get(ItemId(1)).unwrap().actors, vec!["a", "b"]);
    }
}
