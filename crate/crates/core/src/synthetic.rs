//! Offline stand-ins for hosted models and real policy documents.
//!
//! [`SyntheticBackend`] answers extraction and diff prompts deterministically
//! from keyword matches, so a full pipeline run can be recorded into a
//! fixture store and replayed without network access. [`synthetic_corpus`]
//! writes documents whose sentences carry taxonomy keywords.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::{CorpusError, CorpusManifest, DocumentRecord, ManifestEntry};
use crate::crosswalk::{consistent_cell, DiffTable};
use crate::extraction::{
    activities_to_xml, parse_extraction, ActivityItem, CategoryRef, ExtractionResult, PageNumber,
};
use crate::gateway::{Backend, BackendError, ModelSpec};
use crate::taxonomy::{AspectId, Taxonomy};

/// Endpoint tag that selects [`SyntheticBackend`].
pub const SYNTHETIC_ENDPOINT: &str = "synthetic";

fn hash64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Fraction in `[0, 1)` derived from `parts`.
fn unit(parts: &[&str]) -> f64 {
    (hash64(parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Keyword hit counts per category, best first; ties keep taxonomy order.
fn classify(taxonomy: &Taxonomy, sentence: &str) -> Vec<(AspectId, usize)> {
    let lower = sentence.to_lowercase();
    let mut hits: Vec<(AspectId, usize)> = taxonomy
        .iter()
        .map(|c| {
            let n = c
                .keywords
                .iter()
                .filter(|k| lower.contains(&k.to_lowercase()))
                .count();
            (c.id, n)
        })
        .filter(|&(_, n)| n > 0)
        .collect();
    hits.sort_by(|a, b| b.1.cmp(&a.1));
    hits
}

/// A keyword-matching "model". Each model id drops and scores sentences
/// differently, so several synthetic models disagree the way real ones do.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    taxonomy: Taxonomy,
}

impl SyntheticBackend {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self { taxonomy }
    }

    fn extract(&self, model: &str, body: &str) -> String {
        let mut items = Vec::new();
        for sentence in body
            .split(['.', '\n', '\u{c}'])
            .map(str::trim)
            .filter(|s| s.len() > 20)
        {
            let hits = classify(&self.taxonomy, sentence);
            let Some(&(cat, n)) = hits.first() else { continue };
            if unit(&[model, "drop", sentence]) < 0.12 {
                continue;
            }
            let tied = hits.get(1).filter(|&&(_, m)| m == n).map(|&(id, _)| id);
            let name = |id| self.taxonomy.get(id).map(|c| c.name_en.clone()).unwrap_or_default();
            let extent = 2 + (hash64(&[model, "extent", sentence]) % 4) as u32;
            let mut confidence = 0.65 + 0.3 * unit(&[model, "conf", sentence]);
            if tied.is_some() {
                confidence = 0.45 + 0.1 * unit(&[model, "conf", sentence]);
            }
            let confidence = (confidence * 100.0).round() / 100.0;
            items.push(ActivityItem {
                title: sentence.chars().take(48).collect(),
                description: format!("Activity described as: {sentence}"),
                page_number: PageNumber::Unknown,
                excerpts: vec![sentence.to_string()],
                mapped_category: CategoryRef { id: cat, name: name(cat) },
                extra_categories: vec![],
                extent_score: f64::from(extent),
                confidence,
                reasoning: format!("The text states: {sentence}"),
                ambiguous: tied.is_some(),
                alternative_category: tied.map(|id| CategoryRef { id, name: name(id) }),
            });
        }
        let xml = activities_to_xml(&items);
        match hash64(&[model, "wrap"]) % 3 {
            0 => format!("```xml\n{xml}\n```"),
            1 => format!("Here are the extracted activities.\n\n{xml}\n"),
            _ => xml,
        }
    }

    fn diff(&self, model: &str, side_a: &str, side_b: &str) -> String {
        let side = |label: &str, text: &str| {
            let items = parse_extraction(text).unwrap_or_default();
            ExtractionResult::from_items(label, model, items, &self.taxonomy, "")
        };
        let a = side("A", side_a);
        let b = side("B", side_b);
        let mut table = DiffTable::default();
        for id in self.taxonomy.ids() {
            let ea: Vec<f64> = a.items_for(id).map(|i| i.extent_score).collect();
            let eb: Vec<f64> = b.items_for(id).map(|i| i.extent_score).collect();
            let score = if ea.is_empty() || eb.is_empty() {
                0
            } else {
                let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let gap = (avg(&ea) - avg(&eb)).abs().round() as i64;
                let titles: String = a.items_for(id).chain(b.items_for(id)).map(|i| i.title.as_str()).collect();
                let jitter = (hash64(&[model, "score", &id.to_string(), &titles]) % 3) as i64 - 1;
                (4 - gap + jitter).clamp(1, 5)
            };
            let mut cell = consistent_cell(&self.taxonomy, id, &a, &b, score);
            // Models round their reported statistics.
            let r2 = |v: &mut Option<f64>| *v = v.map(|x| (x * 100.0).round() / 100.0);
            if let Some(c) = cell.confidence_doc_a.as_mut() {
                c.avg = (c.avg * 100.0).round() / 100.0;
            }
            if let Some(c) = cell.confidence_doc_b.as_mut() {
                c.avg = (c.avg * 100.0).round() / 100.0;
            }
            r2(&mut cell.confidence_delta);
            table.cells.insert(id, cell);
        }
        let json = table.to_json();
        match hash64(&[model, "wrap"]) % 3 {
            0 => format!("```json\n{json}\n```"),
            _ => json,
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(&rest[..rest.find(end)?])
}

impl Backend for SyntheticBackend {
    fn generate(&self, model: &ModelSpec, prompt: &str) -> Result<String, BackendError> {
        let id = model.model_id.as_str();
        if let (Some(a), Some(b)) = (
            between(prompt, "id=\"document_A_xml\"", "id=\"document_B_xml\""),
            between(prompt, "id=\"document_B_xml\"", "id=\"AMAIS_categories\""),
        ) {
            return Ok(self.diff(id, a, b));
        }
        if let Some(body) = between(prompt, "<![CDATA[", "]]>") {
            return Ok(self.extract(id, body));
        }
        Err(BackendError::Fatal("synthetic backend does not recognise the prompt".into()))
    }
}

const VERBS: [&str; 6] = [
    "will expand work on",
    "commits to strengthening",
    "is developing guidance on",
    "will fund programmes on",
    "plans to review",
    "is piloting",
];

const FILLER: [&str; 4] = [
    "The document also sets out its general mission and organisational structure.",
    "Further details will be published in subsequent reports.",
    "This section summarises the background and context of the initiative.",
    "Stakeholders were consulted during the drafting process.",
];

/// Keywords that classify unambiguously into their own category.
fn clean_keywords(taxonomy: &Taxonomy, id: AspectId) -> Vec<String> {
    let cat = taxonomy.get(id).expect("id from taxonomy");
    cat.keywords
        .iter()
        .filter(|k| {
            let hits = classify(taxonomy, k);
            hits.first().map(|h| h.0) == Some(id) && hits.get(1).map_or(true, |h| h.1 < hits[0].1)
        })
        .cloned()
        .collect()
}

/// `n` documents labelled `A`, `B`, ... with three form-feed separated pages
/// each. Every document covers a seeded subset of the taxonomy.
pub fn synthetic_corpus(taxonomy: &Taxonomy, n: usize, seed: u64) -> Vec<DocumentRecord> {
    let seed = seed.to_string();
    (0..n)
        .map(|d| {
            let label = label_for(d);
            let entity = format!("Synthetic Agency {label}");
            let mut pages = vec![String::new(), String::new(), String::new()];
            for cat in taxonomy.iter() {
                let key = cat.id.to_string();
                if unit(&[&seed, &label, "cover", &key]) < 0.35 {
                    continue;
                }
                let words = clean_keywords(taxonomy, cat.id);
                if words.is_empty() {
                    continue;
                }
                let count = 1 + (hash64(&[&seed, &label, "count", &key]) % 2) as usize;
                for k in 0..count {
                    let ks = k.to_string();
                    let word = &words[(hash64(&[&seed, &label, "word", &key, &ks]) as usize) % words.len()];
                    let verb = VERBS[(hash64(&[&seed, &label, "verb", &key, &ks]) as usize) % VERBS.len()];
                    let page = (hash64(&[&seed, &label, "page", &key, &ks]) % 3) as usize;
                    let _ = write!(pages[page], "{entity} {verb} {} in partnership with national bodies. ", word.to_lowercase());
                }
            }
            for (i, page) in pages.iter_mut().enumerate() {
                page.push_str(FILLER[(d + i) % FILLER.len()]);
                page.push('\n');
            }
            let body = pages.join("\u{c}");
            DocumentRecord::new(&label, format!("Synthetic policy document {label}"), entity, body)
                .expect("generated label and body are valid")
        })
        .collect()
}

fn label_for(i: usize) -> String {
    let letters = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if i < 26 {
        (letters[i] as char).to_string()
    } else {
        format!("D{i}")
    }
}

/// Writes `docs/<label>.txt` files plus `manifest.json` under `dir`.
pub fn write_corpus(dir: &Path, docs: &[DocumentRecord]) -> Result<std::path::PathBuf, CorpusError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CorpusError::Io { path, source }
    };
    let doc_dir = dir.join("docs");
    std::fs::create_dir_all(&doc_dir).map_err(io(&doc_dir))?;
    let mut manifest = CorpusManifest { documents: Vec::new() };
    for d in docs {
        let rel = format!("docs/{}.txt", d.label);
        let path = dir.join(&rel);
        std::fs::write(&path, &d.body).map_err(io(&path))?;
        manifest.documents.push(ManifestEntry {
            label: d.label.clone(),
            title: d.title.clone(),
            entity: d.entity.clone(),
            path: rel.into(),
        });
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(io(&path))?;
    Ok(path)
}
