//! Phonetic feature model and IPA tokenization.
//!
//! A [`PhonemeInventory`] is loaded from a JSON document that lists the
//! consonant and vowel feature sets and one binary feature vector per
//! phoneme. The shipped default covers the Persian consonants and the six
//! Persian vowels; scholars can swap in a different table without touching
//! code.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Number of binary features every consonant carries.
pub const CONSONANT_FEATURE_COUNT: usize = 15;
/// Number of binary features every vowel carries.
pub const VOWEL_FEATURE_COUNT: usize = 4;
/// Vowels that Perso-Arabic script leaves unwritten.
pub const SHORT_VOWELS: [&str; 3] = ["æ", "e", "o"];

/// The shipped default inventory document.
pub const DEFAULT_INVENTORY_JSON: &str = include_str!("../data/persian_inventory.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    Class,
    Place,
    Laryngeal,
    Manner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneClass {
    Consonant,
    Vowel,
}

impl PhoneClass {
    /// Length of the feature vector for this class.
    pub fn feature_count(self) -> usize {
        match self {
            PhoneClass::Consonant => CONSONANT_FEATURE_COUNT,
            PhoneClass::Vowel => VOWEL_FEATURE_COUNT,
        }
    }
}

impl fmt::Display for PhoneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhoneClass::Consonant => f.write_str("consonant"),
            PhoneClass::Vowel => f.write_str("vowel"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsonantFeature {
    pub name: String,
    pub group: FeatureGroup,
}

/// Ordered feature names for both phone classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTable {
    consonant_features: Vec<ConsonantFeature>,
    vowel_features: Vec<String>,
}

impl FeatureTable {
    pub fn consonant_features(&self) -> &[ConsonantFeature] {
        &self.consonant_features
    }

    pub fn vowel_features(&self) -> &[String] {
        &self.vowel_features
    }

    /// Name of feature `index` for the given class.
    pub fn feature_name(&self, class: PhoneClass, index: usize) -> Option<&str> {
        match class {
            PhoneClass::Consonant => self.consonant_features.get(index).map(|f| f.name.as_str()),
            PhoneClass::Vowel => self.vowel_features.get(index).map(String::as_str),
        }
    }

    /// Group of consonant feature `index`. Vowel features are ungrouped.
    pub fn consonant_group(&self, index: usize) -> Option<FeatureGroup> {
        self.consonant_features.get(index).map(|f| f.group)
    }
}

/// A single phoneme with its binary feature vector.
///
/// Cloning is cheap: the symbol is shared and the vector is a bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Phoneme {
    symbol: Arc<str>,
    class: PhoneClass,
    features: u32,
    short: bool,
}

impl Phoneme {
    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn class(&self) -> PhoneClass {
        self.class
    }

    pub fn is_vowel(&self) -> bool {
        self.class == PhoneClass::Vowel
    }

    pub fn is_consonant(&self) -> bool {
        self.class == PhoneClass::Consonant
    }

    pub fn is_short_vowel(&self) -> bool {
        self.short
    }

    pub fn feature(&self, index: usize) -> bool {
        index < self.class.feature_count() && self.features & (1 << index) != 0
    }

    /// Feature vector as 0/1 values, in table order.
    pub fn features(&self) -> Vec<u8> {
        (0..self.class.feature_count())
            .map(|i| u8::from(self.feature(i)))
            .collect()
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error(
    "cannot compare {left} /{left_symbol}/ with {right} /{right_symbol}/: phone classes differ"
)]
pub struct ClassMismatch {
    pub left_symbol: String,
    pub left: PhoneClass,
    pub right_symbol: String,
    pub right: PhoneClass,
}

impl ClassMismatch {
    pub(crate) fn between(a: &Phoneme, b: &Phoneme) -> Self {
        ClassMismatch {
            left_symbol: a.symbol().to_owned(),
            left: a.class,
            right_symbol: b.symbol().to_owned(),
            right: b.class,
        }
    }
}

/// Number of features on which `a` and `b` differ.
pub fn feature_diff_count(a: &Phoneme, b: &Phoneme) -> Result<u32, ClassMismatch> {
    if a.class != b.class {
        return Err(ClassMismatch::between(a, b));
    }
    Ok((a.features ^ b.features).count_ones())
}

/// Indices of the features on which `a` and `b` differ.
pub fn differing_features(a: &Phoneme, b: &Phoneme) -> Result<Vec<usize>, ClassMismatch> {
    if a.class != b.class {
        return Err(ClassMismatch::between(a, b));
    }
    let diff = a.features ^ b.features;
    Ok((0..a.class.feature_count())
        .filter(|i| diff & (1 << i) != 0)
        .collect())
}

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("malformed inventory document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("{class} feature count is {found}, expected {expected}")]
    FeatureCount {
        class: PhoneClass,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {class} feature name `{name}`")]
    DuplicateFeature { class: PhoneClass, name: String },
    #[error("phoneme #{index} has an empty symbol")]
    EmptySymbol { index: usize },
    #[error("duplicate phoneme symbol /{0}/")]
    DuplicateSymbol(String),
    #[error("phoneme /{symbol}/ has {found} features, its class needs {expected}")]
    VectorLength {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("phoneme /{symbol}/ has feature value {value}, only 0 and 1 are allowed")]
    FeatureValue { symbol: String, value: u8 },
    #[error("phoneme /{0}/ is marked short but only /æ/, /e/ and /o/ are short vowels")]
    UnexpectedShort(String),
    #[error("missing short vowel /{0}/")]
    MissingShortVowel(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct InventoryDoc {
    consonant_features: Vec<ConsonantFeatureDoc>,
    vowel_features: Vec<VowelFeatureDoc>,
    phonemes: Vec<PhonemeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConsonantFeatureDoc {
    name: String,
    group: FeatureGroup,
}

#[derive(Debug, Serialize, Deserialize)]
struct VowelFeatureDoc {
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PhonemeDoc {
    symbol: String,
    class: PhoneClass,
    features: Vec<u8>,
    #[serde(default)]
    short: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown IPA symbol {found:?} at position {position}")]
pub struct TokenizeError {
    /// Code-point offset into the NFC-normalized input.
    pub position: usize,
    pub found: char,
}

/// Phonemes keyed by IPA symbol, plus the feature table they follow.
#[derive(Debug, Clone)]
pub struct PhonemeInventory {
    table: FeatureTable,
    phonemes: Vec<Phoneme>,
    by_symbol: HashMap<Arc<str>, usize>,
    longest_symbol: usize,
}

impl PhonemeInventory {
    /// The shipped Persian inventory.
    pub fn persian() -> Self {
        Self::from_json(DEFAULT_INVENTORY_JSON).expect("shipped inventory document is valid")
    }

    pub fn from_json(doc: &str) -> Result<Self, InventoryError> {
        let doc: InventoryDoc = serde_json::from_str(doc)?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: InventoryDoc) -> Result<Self, InventoryError> {
        check_count(PhoneClass::Consonant, doc.consonant_features.len())?;
        check_count(PhoneClass::Vowel, doc.vowel_features.len())?;

        let mut seen = HashSet::new();
        for f in &doc.consonant_features {
            if !seen.insert(f.name.as_str()) {
                return Err(InventoryError::DuplicateFeature {
                    class: PhoneClass::Consonant,
                    name: f.name.clone(),
                });
            }
        }
        seen.clear();
        for f in &doc.vowel_features {
            if !seen.insert(f.name.as_str()) {
                return Err(InventoryError::DuplicateFeature {
                    class: PhoneClass::Vowel,
                    name: f.name.clone(),
                });
            }
        }

        let mut phonemes = Vec::with_capacity(doc.phonemes.len());
        let mut by_symbol = HashMap::new();
        let mut longest_symbol = 0;
        for (index, p) in doc.phonemes.into_iter().enumerate() {
            let symbol: String = p.symbol.nfc().collect();
            if symbol.is_empty() {
                return Err(InventoryError::EmptySymbol { index });
            }
            let expected = p.class.feature_count();
            if p.features.len() != expected {
                return Err(InventoryError::VectorLength {
                    symbol,
                    expected,
                    found: p.features.len(),
                });
            }
            let mut bits = 0u32;
            for (i, &v) in p.features.iter().enumerate() {
                match v {
                    0 => {}
                    1 => bits |= 1 << i,
                    value => return Err(InventoryError::FeatureValue { symbol, value }),
                }
            }
            if p.short && (p.class != PhoneClass::Vowel || !SHORT_VOWELS.contains(&symbol.as_str()))
            {
                return Err(InventoryError::UnexpectedShort(symbol));
            }
            let symbol: Arc<str> = symbol.into();
            if by_symbol.contains_key(&symbol) {
                return Err(InventoryError::DuplicateSymbol(symbol.to_string()));
            }
            longest_symbol = longest_symbol.max(symbol.chars().count());
            by_symbol.insert(symbol.clone(), phonemes.len());
            phonemes.push(Phoneme {
                symbol,
                class: p.class,
                features: bits,
                short: p.short,
            });
        }

        for short in SHORT_VOWELS {
            match by_symbol.get(short).map(|&i| &phonemes[i]) {
                Some(p) if p.short => {}
                _ => return Err(InventoryError::MissingShortVowel(short.to_owned())),
            }
        }

        let table = FeatureTable {
            consonant_features: doc
                .consonant_features
                .into_iter()
                .map(|f| ConsonantFeature {
                    name: f.name,
                    group: f.group,
                })
                .collect(),
            vowel_features: doc.vowel_features.into_iter().map(|f| f.name).collect(),
        };

        Ok(PhonemeInventory {
            table,
            phonemes,
            by_symbol,
            longest_symbol,
        })
    }

    /// Serializes the inventory back into the document schema.
    pub fn to_json(&self) -> String {
        let doc = InventoryDoc {
            consonant_features: self
                .table
                .consonant_features
                .iter()
                .map(|f| ConsonantFeatureDoc {
                    name: f.name.clone(),
                    group: f.group,
                })
                .collect(),
            vowel_features: self
                .table
                .vowel_features
                .iter()
                .map(|name| VowelFeatureDoc { name: name.clone() })
                .collect(),
            phonemes: self
                .phonemes
                .iter()
                .map(|p| PhonemeDoc {
                    symbol: p.symbol.to_string(),
                    class: p.class,
                    features: p.features(),
                    short: p.short,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("inventory serializes")
    }

    pub fn table(&self) -> &FeatureTable {
        &self.table
    }

    pub fn get(&self, symbol: &str) -> Option<&Phoneme> {
        self.by_symbol.get(symbol).map(|&i| &self.phonemes[i])
    }

    /// All phonemes in document order.
    pub fn phonemes(&self) -> &[Phoneme] {
        &self.phonemes
    }

    pub fn consonants(&self) -> impl Iterator<Item = &Phoneme> {
        self.phonemes.iter().filter(|p| p.is_consonant())
    }

    pub fn vowels(&self) -> impl Iterator<Item = &Phoneme> {
        self.phonemes.iter().filter(|p| p.is_vowel())
    }

    pub fn short_vowels(&self) -> impl Iterator<Item = &Phoneme> {
        self.phonemes.iter().filter(|p| p.is_short_vowel())
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.phonemes.iter().map(Phoneme::symbol)
    }

    /// Splits an IPA string into phonemes by greedy longest match.
    ///
    /// Input is NFC-normalized first; error positions are code-point offsets
    /// into the normalized string.
    pub fn tokenize(&self, ipa: &str) -> Result<PhonemeSequence, TokenizeError> {
        let source: String = ipa.nfc().collect();
        let chars: Vec<(usize, char)> = source.char_indices().collect();
        let mut phones = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let start = chars[pos].0;
            let max = self.longest_symbol.min(chars.len() - pos);
            let hit = (1..=max).rev().find_map(|len| {
                let end = chars.get(pos + len).map_or(source.len(), |&(b, _)| b);
                self.get(&source[start..end]).map(|p| (len, p))
            });
            match hit {
                Some((len, p)) => {
                    phones.push(p.clone());
                    pos += len;
                }
                None => {
                    return Err(TokenizeError {
                        position: pos,
                        found: chars[pos].1,
                    })
                }
            }
        }
        Ok(PhonemeSequence { phones, source })
    }
}

fn check_count(class: PhoneClass, found: usize) -> Result<(), InventoryError> {
    let expected = class.feature_count();
    if found == expected {
        Ok(())
    } else {
        Err(InventoryError::FeatureCount {
            class,
            expected,
            found,
        })
    }
}

/// A tokenized IPA transcription.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PhonemeSequence {
    phones: Vec<Phoneme>,
    source: String,
}

impl PhonemeSequence {
    pub fn from_phones(phones: Vec<Phoneme>) -> Self {
        let source = phones.iter().map(Phoneme::symbol).collect();
        PhonemeSequence { phones, source }
    }

    pub fn phones(&self) -> &[Phoneme] {
        &self.phones
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Phoneme> {
        self.phones.iter()
    }

    /// The IPA string this sequence spells.
    pub fn as_ipa(&self) -> &str {
        &self.source
    }

    pub fn into_phones(self) -> Vec<Phoneme> {
        self.phones
    }
}

impl fmt::Display for PhonemeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl<'a> IntoIterator for &'a PhonemeSequence {
    type Item = &'a Phoneme;
    type IntoIter = std::slice::Iter<'a, Phoneme>;

    fn into_iter(self) -> Self::IntoIter {
        self.phones.iter()
    }
}
