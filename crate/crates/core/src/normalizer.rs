//! Deterministic text preprocessing for diagnosis strings.
//!
//! One pass lowercases, replaces punctuation with spaces, collapses
//! whitespace, expands abbreviations by whole token and then applies the
//! ordered correction rules. [`normalize`] repeats the pass until the text
//! stops changing, so the result is idempotent for any rule set that
//! converges.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Diagnosis, DiagnosisBag, EvaluationDataset};

const MAX_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("`{0}` is empty after normalization")]
    EmptyAfterNormalization(String),
    #[error("invalid correction pattern `{pattern}`: {reason}")]
    InvalidPattern { pattern: String, reason: String },
    #[error("abbreviation `{0}` is defined more than once")]
    DuplicateAbbreviation(String),
    #[error("rules do not converge on `{0}`")]
    RulesNotConvergent(String),
    #[error("cannot read rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed rules file: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// On-disk rules file: `{"abbreviations": {...}, "corrections": [[pattern, replacement], ...]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RulesFile {
    #[serde(default)]
    pub abbreviations: BTreeMap<String, String>,
    #[serde(default)]
    pub corrections: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowercase: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_punctuation: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct NormalizationRules {
    abbreviations: BTreeMap<String, String>,
    corrections: Vec<(Regex, String)>,
    lowercase: bool,
    strip_punctuation: bool,
}

impl NormalizationRules {
    pub fn new(
        abbreviations: impl IntoIterator<Item = (String, String)>,
        corrections: impl IntoIterator<Item = (String, String)>,
        lowercase: bool,
        strip_punctuation: bool,
    ) -> Result<Self, NormalizeError> {
        let mut rules = Self {
            abbreviations: BTreeMap::new(),
            corrections: Vec::new(),
            lowercase,
            strip_punctuation,
        };
        for (pattern, replacement) in corrections {
            let re = Regex::new(&pattern).map_err(|e| NormalizeError::InvalidPattern {
                pattern: pattern.clone(),
                reason: e.to_string(),
            })?;
            rules.corrections.push((re, replacement));
        }
        // keys and expansions live in the same space as normalized text
        for (short, long) in abbreviations {
            let key = rules.surface(&short);
            let expansion = rules.surface(&long);
            if key.is_empty() || key.contains(' ') {
                return Err(NormalizeError::InvalidPattern {
                    pattern: short,
                    reason: "abbreviation key must be a single token".into(),
                });
            }
            if rules.abbreviations.insert(key.clone(), expansion).is_some() {
                return Err(NormalizeError::DuplicateAbbreviation(key));
            }
        }
        Ok(rules)
    }

    /// Identity-like rules: lowercase and punctuation stripping, no tables.
    pub fn basic() -> Self {
        Self::new([], [], true, true).expect("empty rule set is valid")
    }

    pub fn from_file(file: RulesFile) -> Result<Self, NormalizeError> {
        Self::new(
            file.abbreviations,
            file.corrections,
            file.lowercase.unwrap_or(true),
            file.strip_punctuation.unwrap_or(true),
        )
    }

    pub fn load(path: &Path) -> Result<Self, NormalizeError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn abbreviations(&self) -> &BTreeMap<String, String> {
        &self.abbreviations
    }

    // lowercase + punctuation + whitespace collapse
    fn surface(&self, text: &str) -> String {
        let lowered;
        let text = if self.lowercase {
            lowered = text.to_lowercase();
            lowered.as_str()
        } else {
            text
        };
        let spaced: String = if self.strip_punctuation {
            text.chars()
                .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
                .collect()
        } else {
            text.to_owned()
        };
        spaced.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn pass(&self, text: &str) -> String {
        let surfaced = self.surface(text);
        let expanded = surfaced
            .split(' ')
            .map(|tok| self.abbreviations.get(tok).map_or(tok, String::as_str))
            .collect::<Vec<_>>()
            .join(" ");
        let mut out = expanded;
        for (re, replacement) in &self.corrections {
            out = re.replace_all(&out, replacement.as_str()).into_owned();
        }
        out.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

impl Default for NormalizationRules {
    /// Small placeholder tables. They are not a curated clinical vocabulary;
    /// supply a rules file for real data.
    fn default() -> Self {
        let abbreviations = [
            ("pid", "pelvic inflammatory disease"),
            ("uti", "urinary tract infection"),
            ("urti", "upper respiratory tract infection"),
            ("copd", "chronic obstructive pulmonary disease"),
            ("gerd", "gastroesophageal reflux disease"),
            ("ibs", "irritable bowel syndrome"),
            ("htn", "hypertension"),
            ("mi", "myocardial infarction"),
            ("cad", "coronary artery disease"),
            ("chf", "congestive heart failure"),
            ("dm", "diabetes mellitus"),
            ("ards", "acute respiratory distress syndrome"),
            ("aki", "acute kidney injury"),
            ("ckd", "chronic kidney disease"),
            ("dvt", "deep vein thrombosis"),
            ("pe", "pulmonary embolism"),
            ("tia", "transient ischemic attack"),
            ("ari", "acute respiratory infection"),
        ];
        let corrections = [
            (r"\boesophag", "esophag"),
            (r"\bhaem", "hem"),
            (r"\bdiarrhoea\b", "diarrhea"),
            (r"\banaemia\b", "anemia"),
            (r"\bischaemi", "ischemi"),
        ];
        Self::new(
            abbreviations
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
            corrections
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
            true,
            true,
        )
        .expect("default rules are valid")
    }
}

pub fn normalize(text: &str, rules: &NormalizationRules) -> Result<String, NormalizeError> {
    if text.trim().is_empty() {
        return Err(NormalizeError::EmptyInput);
    }
    let mut current = rules.pass(text);
    for _ in 0..MAX_PASSES {
        let next = rules.pass(&current);
        if next == current {
            if current.is_empty() {
                return Err(NormalizeError::EmptyAfterNormalization(text.to_owned()));
            }
            return Ok(current);
        }
        current = next;
    }
    Err(NormalizeError::RulesNotConvergent(text.to_owned()))
}

/// A diagnosis dropped during dataset normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationIssue {
    pub case_id: String,
    pub rater_id: String,
    pub rank: usize,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum DatasetNormalizeError {
    #[error("every diagnosis of rater `{rater_id}` on case `{case_id}` is unusable")]
    EmptyBag { rater_id: String, case_id: String },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}

/// Normalizes every diagnosis in a dataset.
///
/// Unusable diagnoses are dropped from their bag and listed as issues; a
/// bag left empty is an error because it breaks the complete grid.
pub fn normalize_dataset(
    ds: &EvaluationDataset,
    rules: &NormalizationRules,
) -> Result<(EvaluationDataset, Vec<NormalizationIssue>), DatasetNormalizeError> {
    let mut issues = Vec::new();
    let out = ds.try_map_bags(|rater, case, bag| {
        let mut items = Vec::with_capacity(bag.len());
        for (rank, d) in bag.items().iter().enumerate() {
            match normalize(d.raw(), rules) {
                Ok(n) => items.push(Diagnosis::with_normalized(d.raw(), n).expect("non-empty")),
                Err(e @ NormalizeError::EmptyAfterNormalization(_))
                | Err(e @ NormalizeError::EmptyInput) => issues.push(NormalizationIssue {
                    case_id: case.case_id.clone(),
                    rater_id: rater.id.clone(),
                    rank: rank + 1,
                    raw: d.raw().to_owned(),
                    reason: e.to_string(),
                }),
                Err(e) => return Err(DatasetNormalizeError::Normalize(e)),
            }
        }
        DiagnosisBag::new(items, ds.k_max()).map_err(|_| DatasetNormalizeError::EmptyBag {
            rater_id: rater.id.clone(),
            case_id: case.case_id.clone(),
        })
    })?;
    Ok((out, issues))
}
