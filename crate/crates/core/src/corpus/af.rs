use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::inventory::{CONSONANTS, DIPHTHONGS, MONOPHTHONGS};
use crate::error::{Error, Result};

/// Attribute token marking a phone as excluded in AF table files.
pub const EXCLUDED_TOKEN: &str = "__EXCLUDED__";

pub const BUILTIN_AF_TABLES: [&str; 4] = [
    "english-moa",
    "english-poa",
    "english-height",
    "english-backness",
];

const MOA: &[(&str, &[&str])] = &[
    ("Affricate", &["CH", "JH"]),
    ("Approximant", &["W", "L", "R", "Y"]),
    ("Fricative", &["F", "V", "TH", "DH", "S", "Z", "SH", "ZH", "HH"]),
    ("Stop", &["P", "B", "T", "D", "K", "G"]),
    ("Nasal", &["M", "N", "NG"]),
];

const POA: &[(&str, &[&str])] = &[
    ("Bilabial", &["W", "P", "B", "M"]),
    ("Labiodental", &["F", "V"]),
    ("Dental", &["TH", "DH"]),
    ("Alveolar", &["L", "S", "Z", "T", "D", "N"]),
    ("Postalveolar", &["CH", "JH", "R", "SH", "ZH"]),
    ("Palatal", &["Y"]),
    ("Velar", &["K", "G", "NG"]),
    ("Glottal", &["HH"]),
];

const HEIGHT: &[(&str, &[&str])] = &[
    ("Close", &["IY", "IH", "UW", "UH"]),
    ("Mid", &["EH", "ER", "AH", "AO"]),
    ("Open", &["AE", "AA"]),
];

const BACKNESS: &[(&str, &[&str])] = &[
    ("Front", &["IY", "IH", "EH", "AE"]),
    ("Central", &["ER", "AH", "AA"]),
    ("Back", &["UW", "UH", "AO"]),
];

/// How a phone relates to one articulatory feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfClass<'a> {
    Attribute(&'a str),
    Excluded,
    Unmapped,
}

/// Phone to attribute mapping for one articulatory feature.
#[derive(Debug, Clone, PartialEq)]
pub struct AfTable {
    feature_name: String,
    entries: BTreeMap<String, String>,
    excluded: BTreeSet<String>,
}

impl AfTable {
    pub fn new(
        feature_name: impl Into<String>,
        entries: impl IntoIterator<Item = (String, String)>,
        excluded: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let feature_name = feature_name.into();
        let dup = |phone: &str| Error::DuplicatePhone {
            table: feature_name.clone(),
            phone: phone.to_string(),
        };
        let mut map = BTreeMap::new();
        for (phone, attr) in entries {
            if map.contains_key(&phone) {
                return Err(dup(&phone));
            }
            map.insert(phone, attr);
        }
        let mut ex = BTreeSet::new();
        for phone in excluded {
            if map.contains_key(&phone) || ex.contains(&phone) {
                return Err(dup(&phone));
            }
            ex.insert(phone);
        }
        Ok(AfTable {
            feature_name,
            entries: map,
            excluded: ex,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let vowels = MONOPHTHONGS.iter().chain(&DIPHTHONGS);
        let non_vowel_table = DIPHTHONGS.iter().chain(&CONSONANTS);
        let (feature, rows, excluded): (&str, _, Vec<&str>) = match name {
            "english-moa" => ("MoA", MOA, vowels.copied().collect()),
            "english-poa" => ("PoA", POA, vowels.copied().collect()),
            "english-height" => ("height", HEIGHT, non_vowel_table.copied().collect()),
            "english-backness" => ("backness", BACKNESS, non_vowel_table.copied().collect()),
            other => {
                return Err(Error::Argument(format!(
                    "unknown AF table `{other}`, expected one of {}",
                    BUILTIN_AF_TABLES.join(", ")
                )))
            }
        };
        let entries = rows.iter().flat_map(|(attr, phones)| {
            phones.iter().map(move |p| (p.to_string(), attr.to_string()))
        });
        AfTable::new(feature, entries, excluded.into_iter().map(String::from))
    }

    /// Parses `phone<TAB>attribute` rows.
    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut excluded = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 2 || cols[0].is_empty() || cols[1].is_empty() {
                return Err(Error::row(path, i + 1, "expected `phone<TAB>attribute`"));
            }
            if !seen.insert(cols[0]) {
                return Err(Error::DuplicatePhone {
                    table: format!("{}:{}", path.display(), i + 1),
                    phone: cols[0].to_string(),
                });
            }
            if cols[1] == EXCLUDED_TOKEN {
                excluded.push(cols[0].to_string());
            } else {
                entries.push((cols[0].to_string(), cols[1].to_string()));
            }
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        AfTable::new(name, entries, excluded)
    }

    pub fn feature_name(&self) -> &str {
        &self.feature_name
    }

    pub fn lookup(&self, phone: &str) -> AfClass<'_> {
        if let Some(attr) = self.entries.get(phone) {
            AfClass::Attribute(attr)
        } else if self.excluded.contains(phone) {
            AfClass::Excluded
        } else {
            AfClass::Unmapped
        }
    }

    /// Distinct attribute symbols, sorted.
    pub fn attributes(&self) -> BTreeSet<&str> {
        self.entries.values().map(String::as_str).collect()
    }

    pub fn phones_of(&self, attribute: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, a)| a.as_str() == attribute)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(p, a)| (p.as_str(), a.as_str()))
    }

    pub fn excluded(&self) -> impl Iterator<Item = &str> {
        self.excluded.iter().map(String::as_str)
    }
}

/// Resolves a built-in table name or reads a TSV table from disk.
pub fn load_af_table(name_or_path: &str) -> Result<AfTable> {
    if BUILTIN_AF_TABLES.contains(&name_or_path) {
        return AfTable::builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return AfTable::builtin(name_or_path);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AfTable::parse_tsv(path, &text)
}
