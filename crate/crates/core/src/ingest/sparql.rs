//! Director and actor lookup against a SPARQL endpoint (DBpedia by default).

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::ingest::movielens::MovieEntry;
use crate::ingest::IngestError;
use crate::model::ItemId;

pub const DEFAULT_ENDPOINT: &str = "https://dbpedia.org/sparql";

/// Environment variable that overrides the endpoint URL.
pub const ENDPOINT_ENV: &str = "CONTENTCF_SPARQL_ENDPOINT";

const TITLE_PLACEHOLDER: &str = "\"Film Name\"";

const QUERY_TEMPLATE: &str = r#"SELECT ?film_title ?star_name ?nameDirector {
  {
    SELECT DISTINCT ?movies ?film_title
    WHERE {
      ?movies rdf:type <http://dbpedia.org/ontology/Film>;
      rdfs:label ?film_title.
    }
  }.
  ?movies dbpedia-owl:starring ?star;
  dbpedia-owl:director ?director.
  ?director foaf:name ?nameDirector.
  ?star foaf:name ?star_name.

  FILTER ((str(?film_title) IN ("Film Name"))
  &&(LANGMATCHES(LANG(?film_title),"en")))
}
ORDER BY ?film_title"#;

/// Quotes `s` as a SPARQL string literal.
pub fn escape_sparql_string(s: &str) -> Result<String, IngestError> {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => return Err(IngestError::UnescapableTitle(s.to_owned())),
            c => out.push(c),
        }
    }
    out.push('"');
    Ok(out)
}

/// The film lookup query with `title` substituted for the placeholder.
pub fn build_sparql_query(title: &str) -> Result<String, IngestError> {
    if title.trim().is_empty() {
        return Err(IngestError::EmptyTitle);
    }
    Ok(QUERY_TEMPLATE.replace(TITLE_PLACEHOLDER, &escape_sparql_string(title)?))
}

/// Strips a trailing `(yyyy)` from a MovieLens title.
pub fn query_title(title: &str) -> &str {
    let t = title.trim_end();
    if let Some(open) = t.rfind('(') {
        let inner = &t[open + 1..];
        if let Some(year) = inner.strip_suffix(')') {
            if year.len() == 4 && year.bytes().all(|b| b.is_ascii_digit()) {
                let stripped = t[..open].trim_end();
                if !stripped.is_empty() {
                    return stripped;
                }
            }
        }
    }
    t
}

/// One row of a SPARQL result set: variable name to lexical value.
pub type Binding = HashMap<String, String>;

/// Parses the `application/sparql-results+xml` format into rows.
pub fn parse_results_xml(xml: &str) -> Result<Vec<Binding>, IngestError> {
    let mut reader = Reader::from_str(xml);

    let err = |reader: &Reader<&[u8]>, reason: String| IngestError::Xml {
        offset: reader.buffer_position() as usize,
        reason,
    };

    let mut rows = Vec::new();
    let mut current: Option<Binding> = None;
    let mut binding_name: Option<String> = None;
    let mut value: Option<String> = None;
    let mut depth = 0usize;
    let mut saw_root = false;

    loop {
        let event = match reader.read_event() {
            Ok(e) => e,
            Err(e) => {
                return Err(IngestError::Xml {
                    offset: reader.error_position() as usize,
                    reason: e.to_string(),
                })
            }
        };
        match event {
            Event::Start(e) => {
                depth += 1;
                match e.local_name().as_ref() {
                    b"sparql" => saw_root = true,
                    b"result" => current = Some(Binding::new()),
                    b"binding" => {
                        let mut name = None;
                        for attr in e.attributes() {
                            let attr = attr.map_err(|e| IngestError::Xml {
                                offset: reader.buffer_position() as usize,
                                reason: e.to_string(),
                            })?;
                            if attr.key.as_ref() == b"name" {
                                name = Some(
                                    attr.unescape_value()
                                        .map_err(|e| err(&reader, e.to_string()))?
                                        .into_owned(),
                                );
                            }
                        }
                        binding_name = name;
                    }
                    b"literal" | b"uri" | b"bnode" => value = Some(String::new()),
                    _ => {}
                }
            }
            Event::Empty(e) => {
                if e.local_name().as_ref() == b"sparql" {
                    saw_root = true;
                }
            }
            Event::Text(t) => {
                if let Some(v) = value.as_mut() {
                    v.push_str(&t.decode().map_err(|e| err(&reader, e.to_string()))?);
                }
            }
            Event::CData(t) => {
                if let Some(v) = value.as_mut() {
                    v.push_str(&t.decode().map_err(|e| err(&reader, e.to_string()))?);
                }
            }
            Event::GeneralRef(r) => {
                if let Some(v) = value.as_mut() {
                    if let Some(c) = r.resolve_char_ref().map_err(|e| err(&reader, e.to_string()))? {
                        v.push(c);
                    } else {
                        let name = r.decode().map_err(|e| err(&reader, e.to_string()))?;
                        let resolved = quick_xml::escape::resolve_predefined_entity(&name)
                            .ok_or_else(|| IngestError::Xml {
                                offset: reader.buffer_position() as usize,
                                reason: format!("unknown entity &{name};"),
                            })?;
                        v.push_str(resolved);
                    }
                }
            }
            Event::End(e) => {
                depth = depth.saturating_sub(1);
                match e.local_name().as_ref() {
                    b"literal" | b"uri" | b"bnode" => {
                        if let (Some(row), Some(name), Some(v)) =
                            (current.as_mut(), binding_name.as_ref(), value.take())
                        {
                            row.insert(name.clone(), v);
                        }
                    }
                    b"binding" => binding_name = None,
                    b"result" => {
                        if let Some(row) = current.take() {
                            rows.push(row);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if depth != 0 {
        return Err(IngestError::Xml {
            offset: reader.buffer_position() as usize,
            reason: "unexpected end of document".into(),
        });
    }
    if !saw_root {
        return Err(IngestError::Xml {
            offset: 0,
            reason: "missing <sparql> root element".into(),
        });
    }
    Ok(rows)
}

/// Directors and starring actors of one film, aggregated over result rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlMovieResult {
    pub film_title: String,
    pub directors: Vec<String>,
    pub actors: Vec<String>,
    /// Number of distinct `?film_title` values seen. More than one means the
    /// label matched several resources.
    pub matched_titles: usize,
}

fn push_distinct(v: &mut Vec<String>, s: &str) {
    if !s.is_empty() && !v.iter().any(|x| x == s) {
        v.push(s.to_owned());
    }
}

/// Collapses one-row-per-(director, star) results. `None` when there are no rows.
pub fn aggregate_rows(rows: &[Binding]) -> Option<SparqlMovieResult> {
    if rows.is_empty() {
        return None;
    }
    let mut titles = Vec::new();
    let mut directors = Vec::new();
    let mut actors = Vec::new();
    for row in rows {
        if let Some(t) = row.get("film_title") {
            push_distinct(&mut titles, t);
        }
        if let Some(d) = row.get("nameDirector") {
            push_distinct(&mut directors, d);
        }
        if let Some(a) = row.get("star_name") {
            push_distinct(&mut actors, a);
        }
    }
    Some(SparqlMovieResult {
        film_title: titles.first().cloned().unwrap_or_default(),
        directors,
        actors,
        matched_titles: titles.len(),
    })
}

/// Raw HTTP answer from an endpoint.
#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// Something that can POST a query to an endpoint.
pub trait SparqlTransport: Sync {
    /// Sends `query` as the `query` form field. `Err` means the request never
    /// produced a response.
    fn post_query(&self, endpoint: &str, query: &str) -> Result<TransportResponse, String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("contentcf/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IngestError::Http(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl SparqlTransport for HttpTransport {
    fn post_query(&self, endpoint: &str, query: &str) -> Result<TransportResponse, String> {
        let resp = self
            .client
            .post(endpoint)
            .header(reqwest::header::ACCEPT, "application/sparql-results+xml")
            .form(&[("query", query)])
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Found(SparqlMovieResult),
    NotFound,
    /// Transport failure or non-success status.
    Failed(String),
}

/// Runs the film query for `title` and aggregates the answer.
///
/// Network problems come back as [`FetchOutcome::Failed`]; a response that is
/// not well-formed results XML is an error.
pub fn fetch_profile(
    title: &str,
    endpoint: &str,
    transport: &dyn SparqlTransport,
) -> Result<FetchOutcome, IngestError> {
    let query = build_sparql_query(title)?;
    let resp = match transport.post_query(endpoint, &query) {
        Ok(r) => r,
        Err(e) => return Ok(FetchOutcome::Failed(e)),
    };
    if !(200..300).contains(&resp.status) {
        return Ok(FetchOutcome::Failed(format!("HTTP status {}", resp.status)));
    }
    let rows = parse_results_xml(&resp.body)?;
    Ok(match aggregate_rows(&rows) {
        Some(r) => FetchOutcome::Found(r),
        None => FetchOutcome::NotFound,
    })
}

/// Per-movie provenance of linked-data metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchStatus {
    FetchedOk,
    NotFound,
    FetchFailed,
    Overridden,
    NotFetched,
}

/// One line of a fetched-metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub item_id: ItemId,
    pub title: String,
    /// The title string that produced the recorded outcome.
    pub query_title: String,
    pub status: FetchStatus,
    #[serde(default)]
    pub directors: Vec<String>,
    #[serde(default)]
    pub actors: Vec<String>,
    #[serde(default)]
    pub multi_film: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub concurrency: usize,
    pub retries: usize,
    /// Pause before every request, per worker.
    pub delay: Duration,
    pub limit: Option<usize>,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            concurrency: 4,
            retries: 2,
            delay: Duration::from_millis(250),
            limit: None,
        }
    }
}

fn fetch_with_retry(
    title: &str,
    endpoint: &str,
    transport: &dyn SparqlTransport,
    opts: &FetchOptions,
) -> Result<FetchOutcome, IngestError> {
    let mut attempt = 0;
    loop {
        if !opts.delay.is_zero() {
            std::thread::sleep(opts.delay);
        }
        match fetch_profile(title, endpoint, transport)? {
            FetchOutcome::Failed(e) if attempt < opts.retries => {
                log::debug!("retrying {title:?} after failure: {e}");
                attempt += 1;
            }
            outcome => return Ok(outcome),
        }
    }
}

/// Looks up one catalog movie, first by its year-stripped title, then by
/// the raw title if the first attempt found nothing.
pub fn fetch_movie(
    item_id: ItemId,
    entry: &MovieEntry,
    endpoint: &str,
    transport: &dyn SparqlTransport,
    opts: &FetchOptions,
) -> FetchRecord {
    let stripped = query_title(&entry.title);
    let mut attempts = vec![stripped];
    if stripped != entry.title {
        attempts.push(entry.title.as_str());
    }
    let mut record = FetchRecord {
        item_id,
        title: entry.title.clone(),
        query_title: stripped.to_owned(),
        status: FetchStatus::NotFound,
        directors: Vec::new(),
        actors: Vec::new(),
        multi_film: false,
        error: None,
    };
    for title in attempts {
        record.query_title = title.to_owned();
        match fetch_with_retry(title, endpoint, transport, opts) {
            Ok(FetchOutcome::Found(r)) => {
                record.status = FetchStatus::FetchedOk;
                record.multi_film = r.matched_titles > 1;
                record.directors = r.directors;
                record.actors = r.actors;
                return record;
            }
            Ok(FetchOutcome::NotFound) => continue,
            Ok(FetchOutcome::Failed(e)) => {
                record.status = FetchStatus::FetchFailed;
                record.error = Some(e);
                return record;
            }
            Err(e) => {
                record.status = FetchStatus::FetchFailed;
                record.error = Some(e.to_string());
                return record;
            }
        }
    }
    record
}

/// Fetches metadata for the catalog with bounded parallelism. Records come
/// back sorted by item id regardless of completion order.
pub fn fetch_catalog(
    movies: &BTreeMap<ItemId, MovieEntry>,
    endpoint: &str,
    transport: &dyn SparqlTransport,
    opts: &FetchOptions,
) -> Vec<FetchRecord> {
    let work: Vec<(&ItemId, &MovieEntry)> = movies
        .iter()
        .take(opts.limit.unwrap_or(usize::MAX))
        .collect();
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(work.len()));
    std::thread::scope(|s| {
        for _ in 0..opts.concurrency.max(1).min(work.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(&id, entry)) = work.get(i) else { break };
                let record = fetch_movie(id, entry, endpoint, transport, opts);
                log::info!("{} {:?}: {:?}", id, entry.title, record.status);
                done.lock().unwrap().push(record);
            });
        }
    });
    let mut records = done.into_inner().unwrap();
    records.sort_by_key(|r| r.item_id);
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_ROWS: &str = r#"<?xml version="1.0"?>
<sparql xmlns="http://www.w3.org/2005/sparql-results#">
  <head>
    <variable name="film_title"/><variable name="star_name"/><variable name="nameDirector"/>
  </head>
  <results distinct="false" ordered="true">
    <result>
      <binding name="film_title"><literal xml:lang="en">Toy Story</literal></binding>
      <binding name="star_name"><literal xml:lang="en">A1</literal></binding>
      <binding name="nameDirector"><literal xml:lang="en">D1</literal></binding>
    </result>
    <result>
      <binding name="film_title"><literal xml:lang="en">Toy Story</literal></binding>
      <binding name="star_name"><literal xml:lang="en">A2</literal></binding>
      <binding name="nameDirector"><literal xml:lang="en">D1</literal></binding>
    </result>
  </results>
</sparql>"#;

    const EMPTY: &str = r#"<?xml version="1.0"?>
<sparql xmlns="http://www.w3.org/2005/sparql-results#">
  <head><variable name="film_title"/></head>
  <results></results>
</sparql>"#;

    struct Canned(u16, &'static str);

    impl SparqlTransport for Canned {
        fn post_query(&self, _: &str, _: &str) -> Result<TransportResponse, String> {
            Ok(TransportResponse {
                status: self.0,
                body: self.1.to_owned(),
            })
        }
    }

    struct Down;

    impl SparqlTransport for Down {
        fn post_query(&self, _: &str, _: &str) -> Result<TransportResponse, String> {
            Err("connection refused".into())
        }
    }

    #[test]
    fn query_substitutes_title() {
        let q = build_sparql_query("Toy Story").unwrap();
        assert!(q.contains(r#"FILTER ((str(?film_title) IN ("Toy Story"))"#));
        assert!(q.starts_with("SELECT ?film_title ?star_name ?nameDirector {"));
        assert!(q.ends_with("ORDER BY ?film_title"));
    }

    #[test]
    fn query_rejects_empty_and_control_characters() {
        assert!(matches!(build_sparql_query(""), Err(IngestError::EmptyTitle)));
        assert!(matches!(
            build_sparql_query("bad\u{7}title"),
            Err(IngestError::UnescapableTitle(_))
        ));
    }

    #[test]
    fn query_escapes_quotes() {
        let q = build_sparql_query(r#"The "Best" Film"#).unwrap();
        assert!(q.contains(r#"IN ("The \"Best\" Film")"#));
    }

    #[test]
    fn year_is_stripped_from_titles() {
        assert_eq!(query_title("Toy Story (1995)"), "Toy Story");
        assert_eq!(query_title("Heat"), "Heat");
        assert_eq!(query_title("City of Lost Children, The (Cité des enfants perdus, La) (1995)"),
            "City of Lost Children, The (Cité des enfants perdus, La)");
        assert_eq!(query_title("(1995)"), "(1995)");
    }

    #[test]
    fn rows_aggregate_into_sets() {
        let out = fetch_profile("Toy Story", DEFAULT_ENDPOINT, &Canned(200, TWO_ROWS)).unwrap();
        let FetchOutcome::Found(r) = out else { panic!("expected a result") };
        assert_eq!(r.directors, vec!["D1"]);
        assert_eq!(r.actors, vec!["A1", "A2"]);
        assert_eq!(r.film_title, "Toy Story");
        assert_eq!(r.matched_titles, 1);
    }

    #[test]
    fn same_response_same_result() {
        let a = fetch_profile("x", "e", &Canned(200, TWO_ROWS)).unwrap();
        let b = fetch_profile("x", "e", &Canned(200, TWO_ROWS)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_results_are_not_found() {
        let out = fetch_profile("Nothing", DEFAULT_ENDPOINT, &Canned(200, EMPTY)).unwrap();
        assert_eq!(out, FetchOutcome::NotFound);
    }

    #[test]
    fn failures_are_outcomes() {
        assert!(matches!(
            fetch_profile("x", "e", &Down).unwrap(),
            FetchOutcome::Failed(_)
        ));
        assert_eq!(
            fetch_profile("x", "e", &Canned(503, "")).unwrap(),
            FetchOutcome::Failed("HTTP status 503".into())
        );
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let broken = "<sparql><results><result><binding name=\"a\"><literal>x</uri>";
        let err = fetch_profile("x", "e", &Canned(200, broken)).unwrap_err();
        let IngestError::Xml { offset, .. } = err else { panic!("expected xml error, got {err:?}") };
        assert!(offset > 0 && offset <= broken.len());

        let truncated = &TWO_ROWS[..TWO_ROWS.len() - 30];
        assert!(matches!(parse_results_xml(truncated), Err(IngestError::Xml { .. })));
        assert!(matches!(parse_results_xml("not xml at all"), Err(IngestError::Xml { .. })));
    }

    #[test]
    fn entities_are_resolved() {
        let xml = r#"<sparql><results><result><binding name="star_name"><literal>Tom &amp; Jerry&#33;</literal></binding></result></results></sparql>"#;
        let rows = parse_results_xml(xml).unwrap();
        assert_eq!(rows[0]["star_name"], "Tom & Jerry!");
    }

    #[test]
    fn catalog_fetch_retries_raw_title_and_limits() {
        struct ByTitle;
        impl SparqlTransport for ByTitle {
            fn post_query(&self, _: &str, q: &str) -> Result<TransportResponse, String> {
                let body = if q.contains("\"Toy Story (1995)\"") { TWO_ROWS } else { EMPTY };
                Ok(TransportResponse { status: 200, body: body.into() })
            }
        }
        let mut movies = BTreeMap::new();
        for (i, t) in ["Toy Story (1995)", "Heat (1995)", "Other (1990)"].iter().enumerate() {
            movies.insert(
                ItemId(i as u32 + 1),
                MovieEntry { title: t.to_string(), genres: vec!["Drama".into()] },
            );
        }
        let opts = FetchOptions { delay: Duration::ZERO, limit: Some(2), ..Default::default() };
        let records = fetch_catalog(&movies, "e", &ByTitle, &opts);
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].status, FetchStatus::FetchedOk);
        assert_eq!(records[0].query_title, "Toy Story (1995)");
        assert_eq!(records[1].status, FetchStatus::NotFound);
    }
}
