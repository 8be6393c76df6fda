//! Token profiles and the pluggable linguistic backend.

use std::collections::BTreeSet;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::LingError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenProfile {
    pub unigrams: BTreeSet<String>,
    pub bigrams: BTreeSet<(String, String)>,
    pub stems: BTreeSet<String>,
    pub lemmas: BTreeSet<String>,
    pub pos_tags: BTreeSet<String>,
}

pub trait LinguisticBackend: Send + Sync {
    /// Name plus version, recorded with feature exports.
    fn name(&self) -> &str;
    fn stem(&self, token: &str) -> String;
    fn lemma(&self, token: &str) -> String;
    fn pos(&self, token: &str) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// `en`/`english` or `ru`/`russian`.
    pub language: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            language: "en".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Language {
    English,
    Russian,
}

/// Offline backend: Snowball stemmer, suffix-rule lemmatizer and a
/// closed-class/suffix POS tagger.
pub struct RuleBackend {
    language: Language,
    stemmer: Stemmer,
    name: String,
}

impl std::fmt::Debug for RuleBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuleBackend").field("name", &self.name).finish()
    }
}

impl RuleBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, LingError> {
        let language = match config.language.to_ascii_lowercase().as_str() {
            "en" | "eng" | "english" => Language::English,
            "ru" | "rus" | "russian" => Language::Russian,
            other => return Err(LingError::BackendUnavailable(format!("language `{other}`"))),
        };
        let (algo, tag) = match language {
            Language::English => (Algorithm::English, "en"),
            Language::Russian => (Algorithm::Russian, "ru"),
        };
        Ok(Self {
            language,
            stemmer: Stemmer::create(algo),
            name: format!("rule-{tag}-v1"),
        })
    }
}

impl LinguisticBackend for RuleBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn stem(&self, token: &str) -> String {
        self.stemmer.stem(token).into_owned()
    }

    fn lemma(&self, token: &str) -> String {
        match self.language {
            Language::English => english_lemma(token),
            // no dictionary lemmatizer offline; the stem stands in
            Language::Russian => self.stem(token),
        }
    }

    fn pos(&self, token: &str) -> &'static str {
        match self.language {
            Language::English => english_pos(token),
            Language::Russian => russian_pos(token),
        }
    }
}

const EN_IRREGULAR: &[(&str, &str)] = &[
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("children", "child"),
    ("women", "woman"),
    ("men", "man"),
    ("bacteria", "bacterium"),
    ("fungi", "fungus"),
    ("vertebrae", "vertebra"),
    ("bronchi", "bronchus"),
    ("calculi", "calculus"),
    ("data", "datum"),
];

// nouns that look plural
const EN_INVARIANT: &[&str] = &[
    "diabetes", "herpes", "rabies", "measles", "mumps", "scabies", "ascites", "rickets",
    "shingles", "series", "species", "news", "lues", "tabes", "caries", "pes",
];

fn english_lemma(token: &str) -> String {
    if let Some((_, l)) = EN_IRREGULAR.iter().find(|(w, _)| *w == token) {
        return (*l).to_owned();
    }
    if EN_INVARIANT.contains(&token) || !token.chars().all(|c| c.is_ascii_alphabetic()) {
        return token.to_owned();
    }
    let n = token.len();
    if n > 4 && token.ends_with("ies") {
        return format!("{}y", &token[..n - 3]);
    }
    if token.ends_with("eases") {
        return token[..n - 1].to_owned();
    }
    if n > 6 && ["oses", "ases", "ises", "yses"].iter().any(|s| token.ends_with(s)) {
        return format!("{}is", &token[..n - 2]);
    }
    if ["ches", "shes", "xes", "sses"].iter().any(|s| token.ends_with(s)) {
        return token[..n - 2].to_owned();
    }
    if n > 3 && token.ends_with('s') && !["ss", "us", "is", "as"].iter().any(|s| token.ends_with(s)) {
        return token[..n - 1].to_owned();
    }
    token.to_owned()
}

const EN_DET: &[&str] = &["a", "an", "the", "this", "that", "these", "those"];
const EN_ADP: &[&str] = &[
    "of", "in", "on", "with", "without", "to", "from", "by", "at", "for", "due", "after",
    "during", "under", "over", "into", "against", "within", "between",
];
const EN_CONJ: &[&str] = &["and", "or", "but", "nor"];
const EN_PART: &[&str] = &["not", "no", "non"];
const EN_ADJ: &[&str] = &[
    "acute", "chronic", "severe", "mild", "moderate", "left", "right", "bilateral", "primary",
    "secondary", "benign", "malignant", "unspecified", "other", "early", "late", "upper",
    "lower", "simple", "complex", "mixed", "minor", "major", "recurrent", "persistent",
];
const EN_NOUN_SUFFIXES: &[&str] = &[
    "itis", "osis", "emia", "aemia", "algia", "oma", "pathy", "ia", "ism", "ion", "ure", "ment",
    "ness", "ity", "ance", "ence", "age", "sis",
];
const EN_ADJ_SUFFIXES: &[&str] = &[
    "al", "ic", "ous", "ive", "ary", "ory", "ar", "ful", "less", "able", "ible", "oid", "ile",
    "ed", "ant", "ent",
];

fn english_pos(token: &str) -> &'static str {
    if token.chars().any(|c| c.is_ascii_digit()) {
        return "NUM";
    }
    if EN_DET.contains(&token) {
        return "DET";
    }
    if EN_ADP.contains(&token) {
        return "ADP";
    }
    if EN_CONJ.contains(&token) {
        return "CCONJ";
    }
    if EN_PART.contains(&token) {
        return "PART";
    }
    if EN_ADJ.contains(&token) {
        return "ADJ";
    }
    if EN_NOUN_SUFFIXES.iter().any(|s| token.ends_with(s)) {
        return "NOUN";
    }
    if token.len() > 4 && EN_ADJ_SUFFIXES.iter().any(|s| token.ends_with(s)) {
        return "ADJ";
    }
    if token.len() > 5 && token.ends_with("ing") {
        return "VERB";
    }
    "NOUN"
}

const RU_ADP: &[&str] = &[
    "в", "во", "на", "с", "со", "без", "при", "из", "по", "от", "до", "к", "ко", "у", "о", "об",
    "за", "под", "над",
];
const RU_CONJ: &[&str] = &["и", "или", "а", "но"];
const RU_ADJ_ENDINGS: &[&str] = &[
    "ый", "ий", "ой", "ая", "яя", "ое", "ее", "ые", "ие", "ого", "его", "ому", "ему", "ым", "им",
    "ых", "их", "ую", "юю",
];

fn russian_pos(token: &str) -> &'static str {
    if token.chars().any(|c| c.is_ascii_digit()) {
        return "NUM";
    }
    if RU_ADP.contains(&token) {
        return "ADP";
    }
    if RU_CONJ.contains(&token) {
        return "CCONJ";
    }
    if token == "не" {
        return "PART";
    }
    if token.chars().count() > 3 && RU_ADJ_ENDINGS.iter().any(|s| token.ends_with(s)) {
        return "ADJ";
    }
    "NOUN"
}

/// Builds the five token sets of a normalized string.
pub fn token_profile(
    normalized: &str,
    backend: &dyn LinguisticBackend,
) -> Result<TokenProfile, LingError> {
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(LingError::EmptyInput);
    }
    let mut profile = TokenProfile::default();
    for t in &tokens {
        profile.unigrams.insert((*t).to_owned());
        profile.stems.insert(backend.stem(t));
        profile.lemmas.insert(backend.lemma(t));
        profile.pos_tags.insert(backend.pos(t).to_owned());
    }
    for w in tokens.windows(2) {
        profile.bigrams.insert((w[0].to_owned(), w[1].to_owned()));
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> RuleBackend {
        RuleBackend::new(&BackendConfig::default()).unwrap()
    }

    #[test]
    fn two_token_profile() {
        let p = token_profile("acute pancreatitis", &en()).unwrap();
        assert_eq!(
            p.unigrams,
            ["acute", "pancreatitis"].iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(p.bigrams.len(), 1);
        assert!(p.bigrams.contains(&("acute".to_string(), "pancreatitis".to_string())));
        assert_eq!(
            p.pos_tags,
            ["ADJ", "NOUN"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn single_token_has_no_bigrams() {
        let p = token_profile("arrhythmia", &en()).unwrap();
        assert!(p.bigrams.is_empty());
        assert_eq!(p.unigrams.len(), 1);
    }

    #[test]
    fn five_token_counts() {
        // hand enumeration: 5 distinct words, 4 adjacent pairs
        let p = token_profile("functional heart rhythm disorders syndrome", &en()).unwrap();
        assert_eq!(p.unigrams.len(), 5);
        assert_eq!(p.bigrams.len(), 4);
        assert!(p.lemmas.contains("disorder"));
    }

    #[test]
    fn repeated_tokens_collapse_in_sets() {
        let p = token_profile("pain pain pain", &en()).unwrap();
        assert_eq!(p.unigrams.len(), 1);
        assert_eq!(p.bigrams.len(), 1);
    }

    #[test]
    fn english_lemmas() {
        for (w, l) in [
            ("allergies", "allergy"),
            ("diseases", "disease"),
            ("stenoses", "stenosis"),
            ("diagnoses", "diagnosis"),
            ("infections", "infection"),
            ("abscess", "abscess"),
            ("diabetes", "diabetes"),
            ("bacteria", "bacterium"),
            ("sinus", "sinus"),
        ] {
            assert_eq!(english_lemma(w), l, "{w}");
        }
    }

    #[test]
    fn stems_collapse_inflections() {
        let b = en();
        assert_eq!(b.stem("infections"), b.stem("infection"));
    }

    #[test]
    fn russian_backend() {
        let b = RuleBackend::new(&BackendConfig {
            language: "ru".into(),
        })
        .unwrap();
        assert_eq!(b.pos("острый"), "ADJ");
        assert_eq!(b.pos("панкреатит"), "NOUN");
        assert_eq!(b.stem("инфекции"), b.stem("инфекция"));
    }

    #[test]
    fn unknown_language_is_unavailable() {
        let err = RuleBackend::new(&BackendConfig {
            language: "de".into(),
        })
        .unwrap_err();
        assert!(matches!(err, LingError::BackendUnavailable(_)));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(token_profile("  ", &en()), Err(LingError::EmptyInput)));
    }
}
