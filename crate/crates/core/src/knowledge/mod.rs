//! Local guidance corpus: a directory of JSON documents standing in for the
//! AHDB/BCPC/EU-FarmBook websites, with structured threshold facts and
//! deterministic lexical search.
//!
//! Scoring is term frequency weighted by reciprocal document frequency
//! (`tf x 1/df`). Reciprocal df keeps scores independent of corpus size, so
//! adding a document that shares no token with a query can never reorder the
//! existing results for that query.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Quantity, Source, ThresholdRecord, UnitRegistry};
use crate::error::{Error, Result};
use crate::util::{normalize_ws, sha256_hex};

/// Structured threshold fact as stored in a corpus document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdFact {
    pub pest: String,
    pub crop: String,
    pub value: f64,
    pub unit: String,
    pub raw_text: String,
}

/// One guidance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeDoc {
    pub doc_id: String,
    pub publisher: String,
    pub title: String,
    pub url: String,
    pub body: String,
    #[serde(default)]
    pub thresholds: Vec<ThresholdFact>,
}

/// A ranked search hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub doc_id: String,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug)]
struct DocTerms {
    counts: BTreeMap<String, usize>,
    len: usize,
}

/// Immutable, indexed corpus. Safe to share between threads.
#[derive(Debug)]
pub struct Corpus {
    docs: BTreeMap<String, KnowledgeDoc>,
    terms: BTreeMap<String, DocTerms>,
    df: BTreeMap<String, usize>,
    registry: UnitRegistry,
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

impl Corpus {
    /// Builds a corpus from documents, validating each one.
    pub fn from_docs(docs: Vec<KnowledgeDoc>, registry: UnitRegistry) -> Result<Self> {
        let mut map = BTreeMap::new();
        for doc in docs {
            validate_doc(&doc, &registry).map_err(|e| Error::MalformedDoc {
                path: doc.doc_id.clone().into(),
                cause: e.to_string(),
            })?;
            let id = doc.doc_id.clone();
            if map.insert(id.clone(), doc).is_some() {
                return Err(Error::MalformedDoc {
                    path: id.into(),
                    cause: "duplicate doc_id".into(),
                });
            }
        }
        let mut terms = BTreeMap::new();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for (id, doc) in &map {
            let toks = tokenize(&format!("{} {}", doc.title, doc.body));
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for t in &toks {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
            for t in counts.keys() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
            terms.insert(
                id.clone(),
                DocTerms {
                    counts,
                    len: toks.len().max(1),
                },
            );
        }
        Ok(Corpus {
            docs: map,
            terms,
            df,
            registry,
        })
    }

    /// Loads every `*.json` file under `path` as one document. A malformed
    /// file fails the whole load with its path and cause; nothing is skipped
    /// silently.
    pub fn load(path: &Path, registry: UnitRegistry) -> Result<Self> {
        if !path.is_dir() {
            return Err(Error::CorpusNotFound(path.to_path_buf()));
        }
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let mut docs = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::MalformedDoc {
                path: file.clone(),
                cause: e.to_string(),
            })?;
            let doc: KnowledgeDoc =
                serde_json::from_str(&text).map_err(|e| Error::MalformedDoc {
                    path: file.clone(),
                    cause: e.to_string(),
                })?;
            validate_doc(&doc, &registry).map_err(|e| Error::MalformedDoc {
                path: file.clone(),
                cause: e.to_string(),
            })?;
            if !seen.insert(doc.doc_id.clone()) {
                return Err(Error::MalformedDoc {
                    path: file,
                    cause: format!("duplicate doc_id {:?}", doc.doc_id),
                });
            }
            docs.push(doc);
        }
        Corpus::from_docs(docs, registry)
    }

    /// The built-in seed corpus shipped with the crate.
    pub fn seed(registry: UnitRegistry) -> Arc<Corpus> {
        let docs = seed_docs();
        Arc::new(Corpus::from_docs(docs, registry).expect("seed corpus is valid"))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, doc_id: &str) -> Option<&KnowledgeDoc> {
        self.docs.get(doc_id)
    }

    pub fn docs(&self) -> impl Iterator<Item = &KnowledgeDoc> {
        self.docs.values()
    }

    pub fn registry(&self) -> &UnitRegistry {
        &self.registry
    }

    /// Digest over the canonical serialization of all documents.
    pub fn digest(&self) -> String {
        let docs: Vec<&KnowledgeDoc> = self.docs.values().collect();
        sha256_hex(
            serde_json::to_string(&docs)
                .expect("corpus serialization is infallible")
                .as_bytes(),
        )
    }

    /// Case-insensitive, whitespace-normalized threshold lookup. When several
    /// documents carry a record for the same (pest, crop), the one from the
    /// lexicographically smallest doc_id wins.
    pub fn lookup_threshold(&self, pest: &str, crop: &str) -> Option<ThresholdRecord> {
        self.lookup_threshold_with_doc(pest, crop)
            .map(|(record, _)| record)
    }

    /// Like [`Corpus::lookup_threshold`] but also reports the supplying doc.
    pub fn lookup_threshold_with_doc(
        &self,
        pest: &str,
        crop: &str,
    ) -> Option<(ThresholdRecord, &KnowledgeDoc)> {
        let pest_key = normalize_ws(pest);
        let crop_key = normalize_ws(crop);
        // BTreeMap iteration order gives the doc_id tie-break for free.
        for doc in self.docs.values() {
            for fact in &doc.thresholds {
                if normalize_ws(&fact.pest) == pest_key && normalize_ws(&fact.crop) == crop_key {
                    return Some((self.record_from_fact(doc, fact), doc));
                }
            }
        }
        None
    }

    fn record_from_fact(&self, doc: &KnowledgeDoc, fact: &ThresholdFact) -> ThresholdRecord {
        let unit = self
            .registry
            .token(&fact.unit)
            .expect("validated at corpus load");
        ThresholdRecord {
            pest: fact.pest.clone(),
            crop_name: fact.crop.clone(),
            threshold: Quantity::new(fact.value, unit).expect("validated at corpus load"),
            source: Source {
                publisher: doc.publisher.clone(),
                reference: doc.url.clone(),
            },
            raw_text: fact.raw_text.clone(),
        }
    }

    /// Top-k lexical search. Pure function of (corpus, query, k): scores are
    /// term frequency times reciprocal document frequency, summed over the
    /// query tokens; ties break on ascending doc_id; zero-score documents are
    /// dropped.
    pub fn search(&self, query: &str, k: usize) -> Vec<SearchResult> {
        let query_tokens = tokenize(query);
        if query_tokens.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut scored: Vec<(f64, &String)> = Vec::new();
        for (id, terms) in &self.terms {
            let mut score = 0.0;
            for t in &query_tokens {
                let df = self.df.get(t).copied().unwrap_or(0);
                if df == 0 {
                    continue;
                }
                let count = terms.counts.get(t).copied().unwrap_or(0);
                if count == 0 {
                    continue;
                }
                score += (count as f64 / terms.len as f64) / df as f64;
            }
            if score > 0.0 {
                scored.push((score, id));
            }
        }
        scored.sort_by(|(sa, ia), (sb, ib)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| ia.cmp(ib))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(score, id)| {
                let doc = &self.docs[id];
                SearchResult {
                    doc_id: id.clone(),
                    score,
                    snippet: self.snippet(doc, &query_tokens),
                }
            })
            .collect()
    }

    /// Text window around the rarest query token present in the document.
    fn snippet(&self, doc: &KnowledgeDoc, query_tokens: &[String]) -> String {
        let body_lower = doc.body.to_lowercase();
        let mut best: Option<(usize, &String, usize)> = None; // (df, token, pos)
        for t in query_tokens {
            let df = self.df.get(t).copied().unwrap_or(0);
            if df == 0 {
                continue;
            }
            if let Some(pos) = find_token(&body_lower, t) {
                let better = match &best {
                    None => true,
                    Some((bdf, bt, _)) => df < *bdf || (df == *bdf && t < *bt),
                };
                if better {
                    best = Some((df, t, pos));
                }
            }
        }
        let Some((_, token, pos)) = best else {
            // Query matched the title only; fall back to the body head.
            return window(&doc.body, 0, 240);
        };
        let start = pos.saturating_sub(120 - token.len().min(120));
        window(&doc.body, start, 240)
    }
}

fn find_token(haystack_lower: &str, token: &str) -> Option<usize> {
    // Word-boundary match so "ant" does not hit "plant".
    let bytes = haystack_lower.as_bytes();
    let mut from = 0;
    while let Some(rel) = haystack_lower[from..].find(token) {
        let start = from + rel;
        let end = start + token.len();
        let left_ok = start == 0 || !(bytes[start - 1] as char).is_alphanumeric();
        let right_ok = end >= bytes.len() || !(bytes[end] as char).is_alphanumeric();
        if left_ok && right_ok {
            return Some(start);
        }
        from = end;
    }
    None
}

fn window(text: &str, start: usize, width: usize) -> String {
    let mut s = start.min(text.len());
    while s > 0 && !text.is_char_boundary(s) {
        s -= 1;
    }
    let mut e = (s + width).min(text.len());
    while e < text.len() && !text.is_char_boundary(e) {
        e += 1;
    }
    text[s..e].trim().to_string()
}

fn validate_doc(doc: &KnowledgeDoc, registry: &UnitRegistry) -> Result<()> {
    if doc.doc_id.trim().is_empty() {
        return Err(Error::SchemaViolation {
            field: "doc_id".into(),
            cause: "must be non-empty".into(),
        });
    }
    if doc.publisher.trim().is_empty() {
        return Err(Error::SchemaViolation {
            field: "publisher".into(),
            cause: "must be non-empty".into(),
        });
    }
    for fact in &doc.thresholds {
        if fact.value <= 0.0 || !fact.value.is_finite() {
            return Err(Error::SchemaViolation {
                field: "thresholds.value".into(),
                cause: format!("must be > 0, got {}", fact.value),
            });
        }
        if fact.pest.trim().is_empty() || fact.crop.trim().is_empty() {
            return Err(Error::SchemaViolation {
                field: "thresholds.pest/crop".into(),
                cause: "must be non-empty".into(),
            });
        }
        registry.token(&fact.unit)?;
    }
    Ok(())
}

/// The documents backing [`Corpus::seed`]; also shipped as JSON files under
/// `assets/corpus/`.
pub fn seed_docs() -> Vec<KnowledgeDoc> {
    [
        include_str!("../../assets/corpus/ahdb-beet-cyst-nematode.json"),
        include_str!("../../assets/corpus/ahdb-free-living-nematodes.json"),
        include_str!("../../assets/corpus/bcpc-sugar-beet-monitoring.json"),
    ]
    .iter()
    .map(|text| serde_json::from_str(text).expect("seed doc is valid JSON"))
    .collect()
}
