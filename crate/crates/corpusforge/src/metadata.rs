//! Episode metadata parsing, speaker-name normalization, and linking of name
//! variants to canonical speaker records.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Parsed episode-level metadata. Raw strings are kept verbatim; any
/// normalized form lives alongside them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub program_name: String,
    pub episode_title: String,
    pub episode_date: String,
    pub speaker_entries: Vec<String>,
    pub topics: Vec<String>,
}

/// A canonical speaker with the set of raw name variants that map to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub canonical_name: String,
    pub variants: Vec<String>,
    pub segment_count: usize,
}

/// Outcome of metadata parsing. Parsing is total: it never fails, it only
/// accumulates warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub metadata: EpisodeMetadata,
    pub warnings: Vec<String>,
    pub unrecognized_lines: usize,
}

/// Metadata key vocabulary. The broadcast metadata field names are not
/// standardized, so the accepted spellings per field are configurable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyVocabulary {
    pub program: Vec<String>,
    pub title: Vec<String>,
    pub date: Vec<String>,
    pub speaker: Vec<String>,
    pub topic: Vec<String>,
}

impl Default for KeyVocabulary {
    fn default() -> Self {
        // Default list for an MGB-2 style layout.
        KeyVocabulary {
            program: vec!["program".into(), "program_name".into(), "show".into()],
            title: vec!["title".into(), "episode".into(), "episode_title".into()],
            date: vec!["date".into(), "episode_date".into(), "aired".into()],
            speaker: vec!["speaker".into(), "speakers".into(), "guest".into(), "anchor".into()],
            topic: vec!["topic".into(), "topics".into(), "subject".into()],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("empty speaker name")]
    EmptyName,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Options controlling name normalization and linking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Fold Arabic orthographic variants (alef forms to bare alef,
    /// ta-marbuta to ha).
    pub arabic_folding: bool,
    /// Merge records whose normalized forms are within this normalized edit
    /// distance. Disabled by default; residual variants were resolved
    /// manually in the source workflow.
    pub fuzzy_threshold: Option<f64>,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            arabic_folding: true,
            fuzzy_threshold: None,
        }
    }
}

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.2;

/// Extracts key:value metadata lines from episode text. Recognized keys may
/// appear anywhere in the document, including lines embedded inside the
/// transcription body. Never fails.
pub fn parse_metadata(raw_text: &str, vocab: &KeyVocabulary) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for line in raw_text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((key_part, value_part)) = trimmed.split_once(':') else {
            out.unrecognized_lines += 1;
            continue;
        };
        let key = key_part.trim().to_lowercase();
        let value = value_part.trim();
        if value.is_empty() {
            out.warnings.push(format!("empty value for key '{key}'"));
            continue;
        }
        if vocab.program.iter().any(|k| k == &key) {
            out.metadata.program_name = value.to_string();
        } else if vocab.title.iter().any(|k| k == &key) {
            out.metadata.episode_title = value.to_string();
        } else if vocab.date.iter().any(|k| k == &key) {
            out.metadata.episode_date = value.to_string();
        } else if vocab.speaker.iter().any(|k| k == &key) {
            // A speaker line may carry several names separated by ';' or ','.
            for name in value.split([';', ',']) {
                let name = name.trim();
                if !name.is_empty() {
                    out.metadata.speaker_entries.push(name.to_string());
                }
            }
        } else if vocab.topic.iter().any(|k| k == &key) {
            for topic in value.split([';', ',']) {
                let topic = topic.trim();
                if !topic.is_empty() {
                    out.metadata.topics.push(topic.to_string());
                }
            }
        } else {
            out.unrecognized_lines += 1;
        }
    }
    out
}

fn fold_arabic(c: char) -> char {
    match c {
        '\u{0622}' | '\u{0623}' | '\u{0625}' | '\u{0671}' => '\u{0627}', // alef variants -> bare alef
        '\u{0629}' => '\u{0647}',                                        // ta-marbuta -> ha
        other => other,
    }
}

fn is_trim_punct(c: char) -> bool {
    c.is_whitespace() || (c.is_ascii_punctuation() && c != '\'') || matches!(c, '\u{060C}' | '\u{061B}' | '\u{061F}' | '\u{00AB}' | '\u{00BB}')
}

/// Canonicalizes one raw speaker-name string: Unicode NFC, role suffix after
/// the first '/' removed, edge punctuation stripped, whitespace collapsed,
/// and optional Arabic orthographic folding.
pub fn normalize_name(raw: &str, opts: &NormalizeOptions) -> Result<String, MetadataError> {
    if raw.trim().is_empty() {
        return Err(MetadataError::EmptyName);
    }
    let nfc: String = raw.nfc().collect();
    let head = nfc.split('/').next().unwrap_or("");
    let trimmed = head.trim_matches(is_trim_punct);
    let mut collapsed = String::with_capacity(trimmed.len());
    let mut last_space = false;
    for c in trimmed.chars() {
        let c = if opts.arabic_folding { fold_arabic(c) } else { c };
        if c.is_whitespace() {
            if !last_space {
                collapsed.push(' ');
                last_space = true;
            }
        } else {
            collapsed.push(c);
            last_space = false;
        }
    }
    if collapsed.is_empty() {
        return Err(MetadataError::EmptyName);
    }
    Ok(collapsed)
}

fn normalized_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    crate::eval::edit_distance(&a, &b) as f64 / longest as f64
}

/// Groups raw name entries by normalized form into speaker records. Output
/// order is deterministic: descending segment count, then lexicographic
/// canonical name. An optional override map (raw -> canonical) replays manual
/// standardization decisions before normalization.
pub fn link_speakers(
    entries: &[String],
    opts: &NormalizeOptions,
    overrides: &BTreeMap<String, String>,
) -> Vec<SpeakerRecord> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for raw in entries {
        let canonical = match overrides.get(raw) {
            Some(c) => c.clone(),
            None => match normalize_name(raw, opts) {
                Ok(c) => c,
                Err(_) => continue,
            },
        };
        groups.entry(canonical).or_default().push(raw.clone());
    }

    if let Some(threshold) = opts.fuzzy_threshold {
        groups = merge_fuzzy(groups, threshold);
    }

    let mut records: Vec<SpeakerRecord> = groups
        .into_iter()
        .map(|(canonical_name, raws)| {
            let segment_count = raws.len();
            let mut variants: Vec<String> = raws;
            variants.sort();
            variants.dedup();
            SpeakerRecord {
                canonical_name,
                variants,
                segment_count,
            }
        })
        .collect();
    records.sort_by(|a, b| {
        b.segment_count
            .cmp(&a.segment_count)
            .then_with(|| a.canonical_name.cmp(&b.canonical_name))
    });
    records
}

/// Single-link merge of groups whose keys are within the normalized edit
/// distance threshold. Smaller group absorbs into the larger; ties go to the
/// lexicographically smaller canonical name.
fn merge_fuzzy(
    groups: BTreeMap<String, Vec<String>>,
    threshold: f64,
) -> BTreeMap<String, Vec<String>> {
    let mut keys: Vec<String> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| {
        groups[b]
            .len()
            .cmp(&groups[a].len())
            .then_with(|| a.cmp(b))
    });
    let mut merged: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for key in keys {
        let target = merged
            .keys()
            .find(|existing| normalized_distance(existing, &key) <= threshold)
            .cloned();
        let raws = groups[&key].clone();
        match target {
            Some(t) => merged.get_mut(&t).unwrap().extend(raws),
            None => {
                merged.insert(key, raws);
            }
        }
    }
    merged
}

/// Writes the speakers report: CSV of (canonical_name, n_variants,
/// segment_count) in record order.
pub fn write_speakers_csv(records: &[SpeakerRecord], path: &Path) -> Result<(), MetadataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "canonical_name,n_variants,segment_count")?;
    for r in records {
        writeln!(
            out,
            "{},{},{}",
            csv_escape(&r.canonical_name),
            r.variants.len(),
            r.segment_count
        )?;
    }
    out.flush()?;
    Ok(())
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
