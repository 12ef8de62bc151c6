//! The 39-phone CMU dictionary inventory (ARPABET, stress-free).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneClass {
    Monophthong,
    Diphthong,
    Consonant,
}

pub const MONOPHTHONGS: [&str; 10] = ["AA", "AE", "AH", "AO", "EH", "ER", "IH", "IY", "UH", "UW"];
pub const DIPHTHONGS: [&str; 5] = ["AW", "AY", "EY", "OW", "OY"];
pub const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH",
    "T", "TH", "V", "W", "Y", "Z", "ZH",
];

pub fn classify(phone: &str) -> Option<PhoneClass> {
    if MONOPHTHONGS.contains(&phone) {
        Some(PhoneClass::Monophthong)
    } else if DIPHTHONGS.contains(&phone) {
        Some(PhoneClass::Diphthong)
    } else if CONSONANTS.contains(&phone) {
        Some(PhoneClass::Consonant)
    } else {
        None
    }
}

/// All 39 phones, sorted.
pub fn cmu39() -> Vec<&'static str> {
    let mut v: Vec<&str> = MONOPHTHONGS
        .iter()
        .chain(&DIPHTHONGS)
        .chain(&CONSONANTS)
        .copied()
        .collect();
    v.sort_unstable();
    v
}
