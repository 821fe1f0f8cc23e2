//! Labeled corpus ingestion: manifests and audio loading.
//!
//! A manifest is UTF-8 CSV with header `id,label,source_dataset,algorithm,path`.
//! Fields may be double-quoted; quoted fields can contain commas and doubled
//! quotes. `algorithm` may be empty.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio::{fix_length, normalize_audio, AudioBuffer, AudioError, FIXED_SAMPLES, PIPELINE_RATE};
use crate::wav;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("row {row}: bad label {label:?}, expected bonafide or fake")]
    BadLabel { row: usize, label: String },
    #[error("row {row}: expected {expected} fields, got {got}")]
    BadFieldCount { row: usize, expected: usize, got: usize },
    #[error("row {row}: empty {field}")]
    EmptyField { row: usize, field: &'static str },
    #[error("bad header {0:?}")]
    BadHeader(String),
    #[error("row {row}: unterminated quote")]
    UnterminatedQuote { row: usize },
    #[error("manifest is not valid UTF-8")]
    NotUtf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Fake => "fake",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "bonafide" => Some(Label::Bonafide),
            "fake" => Some(Label::Fake),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub label: Label,
    pub source_dataset: String,
    /// Generation algorithm tag; absent for most bonafide entries.
    pub algorithm: Option<String>,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<Utterance>,
    /// Totals per (label, source_dataset), kept in sync with `entries`.
    counts: BTreeMap<(Label, String), usize>,
}

pub const MANIFEST_HEADER: &str = "id,label,source_dataset,algorithm,path";

impl Manifest {
    pub fn from_entries(entries: Vec<Utterance>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for u in &entries {
            if !seen.insert(u.id.clone()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
        }
        let counts = recount(&entries);
        Ok(Self { entries, counts })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label, source: &str) -> usize {
        self.counts
            .get(&(label, source.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<(Label, String), usize> {
        &self.counts
    }

    /// Distinct source dataset tags in first-appearance order.
    pub fn source_tags(&self) -> Vec<String> {
        let mut tags = Vec::new();
        for u in &self.entries {
            if !tags.contains(&u.source_dataset) {
                tags.push(u.source_dataset.clone());
            }
        }
        tags
    }

    /// Parse manifest text. Duplicate ids and unknown labels are rejected.
    pub fn parse_str(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| CorpusError::BadHeader(String::new()))?;
        let header_fields = split_csv_row(header, 0)?;
        let expected: Vec<&str> = MANIFEST_HEADER.split(',').collect();
        if header_fields != expected {
            return Err(CorpusError::BadHeader(header.trim_end().to_string()));
        }

        let mut entries = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = idx + 1; // 1-based, counting the header as row 1
            let fields = split_csv_row(line, row)?;
            if fields.len() != 5 {
                return Err(CorpusError::BadFieldCount {
                    row,
                    expected: 5,
                    got: fields.len(),
                });
            }
            let id = fields[0].clone();
            if id.is_empty() {
                return Err(CorpusError::EmptyField { row, field: "id" });
            }
            let label = Label::parse(&fields[1]).ok_or_else(|| CorpusError::BadLabel {
                row,
                label: fields[1].clone(),
            })?;
            if fields[2].is_empty() {
                return Err(CorpusError::EmptyField {
                    row,
                    field: "source_dataset",
                });
            }
            if fields[4].is_empty() {
                return Err(CorpusError::EmptyField { row, field: "path" });
            }
            let algorithm = if fields[3].is_empty() {
                None
            } else {
                Some(fields[3].clone())
            };
            entries.push(Utterance {
                id,
                label,
                source_dataset: fields[2].clone(),
                algorithm,
                path: PathBuf::from(&fields[4]),
            });
        }
        Manifest::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        if !path.exists() {
            return Err(CorpusError::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::NotUtf8)?;
        Self::parse_str(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for u in &self.entries {
            out.push_str(&csv_field(&u.id));
            out.push(',');
            out.push_str(u.label.as_str());
            out.push(',');
            out.push_str(&csv_field(&u.source_dataset));
            out.push(',');
            out.push_str(&csv_field(u.algorithm.as_deref().unwrap_or("")));
            out.push(',');
            out.push_str(&csv_field(&u.path.to_string_lossy()));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn recount(entries: &[Utterance]) -> BTreeMap<(Label, String), usize> {
    let mut counts = BTreeMap::new();
    for u in entries {
        *counts.entry((u.label, u.source_dataset.clone())).or_insert(0) += 1;
    }
    counts
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

pub(crate) fn split_csv_row(line: &str, row: usize) -> Result<Vec<String>, CorpusError> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    loop {
        match chars.next() {
            None => {
                if in_quotes {
                    return Err(CorpusError::UnterminatedQuote { row });
                }
                fields.push(cur);
                return Ok(fields);
            }
            Some('"') if in_quotes => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    in_quotes = false;
                }
            }
            Some('"') if cur.is_empty() && !in_quotes => in_quotes = true,
            Some(',') if !in_quotes => fields.push(std::mem::take(&mut cur)),
            Some(c) => cur.push(c),
        }
    }
}

/// Read, normalize and length-fix one utterance's audio.
///
/// Broken or empty audio files resolve to silence instead of failing the
/// whole run; a warning is logged.
pub fn load_utterance_audio(path: &Path) -> Result<AudioBuffer, CorpusError> {
    let decoded = wav::read_wav(path).map_err(CorpusError::Io)?;
    let buf = match decoded {
        Ok(raw) => match normalize_audio(&raw) {
            Ok(buf) => buf,
            Err(AudioError::EmptyAudio) => {
                log::warn!("{}: empty audio, substituting silence", path.display());
                AudioBuffer::new(vec![], PIPELINE_RATE)
            }
            Err(AudioError::UnsupportedRate(r)) => {
                log::warn!("{}: bad rate {r}, substituting silence", path.display());
                AudioBuffer::new(vec![], PIPELINE_RATE)
            }
        },
        Err(e) => {
            log::warn!("{}: undecodable audio ({e}), substituting silence", path.display());
            AudioBuffer::new(vec![], PIPELINE_RATE)
        }
    };
    Ok(fix_length(&buf, FIXED_SAMPLES))
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "\
id,label,source_dataset,algorithm,path
u1,bonafide,FoR,,audio/u1.wav
u2,fake,FoR,tts_a,audio/u2.wav
u3,bonafide,ASV,,audio/u3.wav
u4,fake,ASV,vc_b,audio/u4.wav
";

    #[test]
    fn parses_well_formed_manifest() {
        let m = Manifest::parse_str(WELL_FORMED).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.entries[1].algorithm.as_deref(), Some("tts_a"));
        assert_eq!(m.entries[0].algorithm, None);
        assert_eq!(m.count(Label::Bonafide, "FoR"), 1);
        assert_eq!(m.count(Label::Fake, "ASV"), 1);
        assert_eq!(m.source_tags(), vec!["FoR".to_string(), "ASV".to_string()]);
    }

    #[test]
    fn rejects_duplicate_id() {
        let text = "\
id,label,source_dataset,algorithm,path
u1,bonafide,FoR,,a.wav
u1,fake,FoR,x,b.wav
";
        match Manifest::parse_str(text) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "u1"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_label() {
        let text = "\
id,label,source_dataset,algorithm,path
u1,spoofed,FoR,,a.wav
";
        match Manifest::parse_str(text) {
            Err(CorpusError::BadLabel { row, label }) => {
                assert_eq!(row, 2);
                assert_eq!(label, "spoofed");
            }
            other => panic!("expected BadLabel, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        match Manifest::load(Path::new("/nonexistent/manifest.csv")) {
            Err(CorpusError::MissingFile(_)) => {}
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn quoted_fields_roundtrip() {
        let entries = vec![Utterance {
            id: "u,1".into(),
            label: Label::Fake,
            source_dataset: "W&L".into(),
            algorithm: Some("melgan \"v2\"".into()),
            path: PathBuf::from("dir with space/u1.wav"),
        }];
        let m = Manifest::from_entries(entries.clone()).unwrap();
        let back = Manifest::parse_str(&m.to_csv()).unwrap();
        assert_eq!(back.entries, entries);
    }

    #[test]
    fn counts_are_reorder_stable() {
        let m = Manifest::parse_str(WELL_FORMED).unwrap();
        let mut reordered = m.entries.clone();
        reordered.reverse();
        let m2 = Manifest::from_entries(reordered).unwrap();
        assert_eq!(m.counts(), m2.counts());
    }

    #[test]
    fn rejects_wrong_header_and_field_count() {
        assert!(matches!(
            Manifest::parse_str("id,label,path\n"),
            Err(CorpusError::BadHeader(_))
        ));
        let text = "id,label,source_dataset,algorithm,path\nu1,bonafide,FoR,x\n";
        assert!(matches!(
            Manifest::parse_str(text),
            Err(CorpusError::BadFieldCount { got: 4, .. })
        ));
    }
}
