//! Data model and loaders for evaluation panels, labeled match pairs and the
//! ICD catalog.
//!
//! The canonical on-disk panel format is JSONL with one annotation record per
//! `(rater, case)` cell. Loading validates the complete rater × case grid but
//! never touches diagnosis text; normalization is a separate pass (see
//! [`crate::normalizer`]).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default maximum number of diagnoses per bag.
pub const DEFAULT_K_MAX: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing annotation for rater `{rater_id}` on case `{case_id}`")]
    MissingAnnotation { rater_id: String, case_id: String },
    #[error("case `{case_id}` annotated more than once by rater `{rater_id}`")]
    DuplicateCaseId { case_id: String, rater_id: String },
    #[error("dataset has no algorithm rater")]
    NoAlgorithmRater,
    #[error("dataset has more than one algorithm rater: {0:?}")]
    MultipleAlgorithmRaters(Vec<String>),
    #[error("rater `{0}` is listed both as algorithm and as expert")]
    AlgorithmListedAsExpert(String),
    #[error("dataset has {found} experts, at least {required} required")]
    TooFewExperts { found: usize, required: usize },
    #[error("dataset has no cases")]
    EmptyDataset,
    #[error("bag of rater `{rater_id}` on case `{case_id}` has {len} items, limit is {k_max}")]
    BagTooLarge {
        rater_id: String,
        case_id: String,
        len: usize,
        k_max: usize,
    },
    #[error("empty diagnosis bag")]
    EmptyBag,
    #[error("diagnosis text is empty")]
    EmptyDiagnosis,
    #[error("invalid label `{value}` at line {line}, expected 0 or 1")]
    InvalidLabel { line: usize, value: String },
    #[error("duplicate ICD code `{0}`")]
    DuplicateCode(String),
    #[error("invalid ICD code `{code}` at line {line}")]
    InvalidCode { line: usize, code: String },
    #[error("ICD catalog is empty")]
    EmptyCatalog,
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A single free-form diagnosis string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnosis {
    raw: String,
    #[serde(default)]
    normalized: String,
}

impl Diagnosis {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        if raw.trim().is_empty() {
            return Err(CorpusError::EmptyDiagnosis);
        }
        Ok(Self {
            raw,
            normalized: String::new(),
        })
    }

    pub fn with_normalized(raw: impl Into<String>, normalized: impl Into<String>) -> Result<Self> {
        let mut d = Self::new(raw)?;
        let normalized = normalized.into();
        if normalized.is_empty() {
            return Err(CorpusError::EmptyDiagnosis);
        }
        d.normalized = normalized;
        Ok(d)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// `None` until a normalization pass has run.
    pub fn normalized(&self) -> Option<&str> {
        if self.normalized.is_empty() {
            None
        } else {
            Some(&self.normalized)
        }
    }

    /// The text matchers compare: normalized form when present, raw otherwise.
    pub fn text(&self) -> &str {
        self.normalized().unwrap_or(&self.raw)
    }
}

/// Ranked bag of diagnoses; rank order is list order and duplicates are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisBag {
    items: Vec<Diagnosis>,
}

impl DiagnosisBag {
    pub fn new(items: Vec<Diagnosis>, k_max: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(CorpusError::EmptyBag);
        }
        if items.len() > k_max {
            return Err(CorpusError::BagTooLarge {
                rater_id: String::new(),
                case_id: String::new(),
                len: items.len(),
                k_max,
            });
        }
        Ok(Self { items })
    }

    /// Builds a bag from raw strings.
    pub fn from_strs<S: AsRef<str>>(items: &[S], k_max: usize) -> Result<Self> {
        let items = items
            .iter()
            .map(|s| Diagnosis::new(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items, k_max)
    }

    pub fn items(&self) -> &[Diagnosis] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// First `min(k, len)` items.
    pub fn truncated(&self, k: usize) -> &[Diagnosis] {
        &self.items[..k.min(self.items.len())]
    }

    pub fn top(&self) -> &Diagnosis {
        &self.items[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaterKind {
    Expert,
    Algorithm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rater {
    pub id: String,
    pub kind: RaterKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseChat {
    pub case_id: String,
    /// Carried for provenance only; metrics never read it.
    pub transcript: Option<String>,
}

/// `n` cases annotated by `z` experts and one algorithm, complete grid.
///
/// Raters are ordered experts first (in order of first appearance) and the
/// algorithm last. Cases keep their order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationDataset {
    cases: Vec<CaseChat>,
    raters: Vec<Rater>,
    k_max: usize,
    // bags[rater][case]
    bags: Vec<Vec<DiagnosisBag>>,
}

impl EvaluationDataset {
    /// Assembles a dataset from already ordered parts.
    ///
    /// `bags[r][c]` is the bag of `raters[r]` on `cases[c]`.
    pub fn from_parts(
        cases: Vec<CaseChat>,
        raters: Vec<Rater>,
        bags: Vec<Vec<DiagnosisBag>>,
        k_max: usize,
    ) -> Result<Self> {
        if cases.is_empty() {
            return Err(CorpusError::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for c in &cases {
            if !seen.insert(c.case_id.as_str()) {
                return Err(CorpusError::DuplicateCaseId {
                    case_id: c.case_id.clone(),
                    rater_id: String::new(),
                });
            }
        }
        let algos: Vec<&Rater> = raters
            .iter()
            .filter(|r| r.kind == RaterKind::Algorithm)
            .collect();
        match algos.len() {
            0 => return Err(CorpusError::NoAlgorithmRater),
            1 => {}
            _ => {
                return Err(CorpusError::MultipleAlgorithmRaters(
                    algos.iter().map(|r| r.id.clone()).collect(),
                ))
            }
        }
        let algo_id = &algos[0].id;
        if raters
            .iter()
            .any(|r| r.kind == RaterKind::Expert && &r.id == algo_id)
        {
            return Err(CorpusError::AlgorithmListedAsExpert(algo_id.clone()));
        }
        let z = raters.len() - 1;
        if z < 2 {
            return Err(CorpusError::TooFewExperts {
                found: z,
                required: 2,
            });
        }
        // experts first, algorithm last
        let mut order: Vec<usize> = (0..raters.len())
            .filter(|&i| raters[i].kind == RaterKind::Expert)
            .collect();
        order.push(
            raters
                .iter()
                .position(|r| r.kind == RaterKind::Algorithm)
                .expect("one algorithm"),
        );
        if bags.len() != raters.len() {
            return Err(CorpusError::MissingAnnotation {
                rater_id: raters
                    .get(bags.len())
                    .map(|r| r.id.clone())
                    .unwrap_or_default(),
                case_id: cases[0].case_id.clone(),
            });
        }
        for (r, row) in bags.iter().enumerate() {
            if row.len() != cases.len() {
                return Err(CorpusError::MissingAnnotation {
                    rater_id: raters[r].id.clone(),
                    case_id: cases
                        .get(row.len())
                        .map(|c| c.case_id.clone())
                        .unwrap_or_default(),
                });
            }
            for (c, bag) in row.iter().enumerate() {
                if bag.len() > k_max {
                    return Err(CorpusError::BagTooLarge {
                        rater_id: raters[r].id.clone(),
                        case_id: cases[c].case_id.clone(),
                        len: bag.len(),
                        k_max,
                    });
                }
            }
        }
        let mut bags: Vec<Option<Vec<DiagnosisBag>>> = bags.into_iter().map(Some).collect();
        let mut ordered_raters = Vec::with_capacity(raters.len());
        let mut ordered_bags = Vec::with_capacity(raters.len());
        for i in order {
            ordered_raters.push(raters[i].clone());
            ordered_bags.push(bags[i].take().expect("each index once"));
        }
        Ok(Self {
            cases,
            raters: ordered_raters,
            k_max,
            bags: ordered_bags,
        })
    }

    pub fn cases(&self) -> &[CaseChat] {
        &self.cases
    }

    pub fn raters(&self) -> &[Rater] {
        &self.raters
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    /// Number of experts `z`.
    pub fn n_experts(&self) -> usize {
        self.raters.len() - 1
    }

    /// Rater indices of the experts, in panel order.
    pub fn experts(&self) -> std::ops::Range<usize> {
        0..self.n_experts()
    }

    /// Rater index of the algorithm.
    pub fn algorithm(&self) -> usize {
        self.raters.len() - 1
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn rater_index(&self, id: &str) -> Option<usize> {
        self.raters.iter().position(|r| r.id == id)
    }

    pub fn bag(&self, rater: usize, case: usize) -> &DiagnosisBag {
        &self.bags[rater][case]
    }

    /// Returns a copy with every bag rewritten by `f(rater, case, bag)`.
    pub fn try_map_bags<E>(
        &self,
        mut f: impl FnMut(&Rater, &CaseChat, &DiagnosisBag) -> std::result::Result<DiagnosisBag, E>,
    ) -> std::result::Result<Self, E> {
        let mut bags = Vec::with_capacity(self.bags.len());
        for (r, row) in self.bags.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (c, bag) in row.iter().enumerate() {
                out.push(f(&self.raters[r], &self.cases[c], bag)?);
            }
            bags.push(out);
        }
        Ok(Self {
            cases: self.cases.clone(),
            raters: self.raters.clone(),
            k_max: self.k_max,
            bags,
        })
    }
}

/// One line of the annotation JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub case_id: String,
    pub rater_id: String,
    pub rater_kind: RaterKind,
    pub diagnoses: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normalized: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_evaluation_dataset(path: &Path, k_max: usize) -> Result<EvaluationDataset> {
    read_evaluation_dataset(open(path)?, k_max).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}

pub fn read_evaluation_dataset<R: Read>(reader: R, k_max: usize) -> Result<EvaluationDataset> {
    let mut cases: Vec<CaseChat> = Vec::new();
    let mut case_idx: HashMap<String, usize> = HashMap::new();
    let mut raters: Vec<Rater> = Vec::new();
    let mut rater_idx: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), DiagnosisBag> = HashMap::new();

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: lineno,
                reason: e.to_string(),
            })?;
        if rec.case_id.is_empty() || rec.rater_id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: lineno,
                reason: "empty case_id or rater_id".into(),
            });
        }
        let bag = record_bag(&rec, k_max).map_err(|e| match e {
            CorpusError::BagTooLarge { len, k_max, .. } => CorpusError::BagTooLarge {
                rater_id: rec.rater_id.clone(),
                case_id: rec.case_id.clone(),
                len,
                k_max,
            },
            other => CorpusError::MalformedRecord {
                line: lineno,
                reason: other.to_string(),
            },
        })?;

        let c = *case_idx.entry(rec.case_id.clone()).or_insert_with(|| {
            cases.push(CaseChat {
                case_id: rec.case_id.clone(),
                transcript: None,
            });
            cases.len() - 1
        });
        if cases[c].transcript.is_none() {
            cases[c].transcript = rec.transcript.clone();
        }
        let r = match rater_idx.get(&rec.rater_id) {
            Some(&r) => {
                if raters[r].kind != rec.rater_kind {
                    return Err(CorpusError::AlgorithmListedAsExpert(rec.rater_id));
                }
                r
            }
            None => {
                raters.push(Rater {
                    id: rec.rater_id.clone(),
                    kind: rec.rater_kind,
                });
                rater_idx.insert(rec.rater_id.clone(), raters.len() - 1);
                raters.len() - 1
            }
        };
        if cells.insert((r, c), bag).is_some() {
            return Err(CorpusError::DuplicateCaseId {
                case_id: rec.case_id,
                rater_id: rec.rater_id,
            });
        }
    }

    if cases.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut bags = Vec::with_capacity(raters.len());
    for (r, rater) in raters.iter().enumerate() {
        let mut row = Vec::with_capacity(cases.len());
        for (c, case) in cases.iter().enumerate() {
            match cells.remove(&(r, c)) {
                Some(bag) => row.push(bag),
                None => {
                    return Err(CorpusError::MissingAnnotation {
                        rater_id: rater.id.clone(),
                        case_id: case.case_id.clone(),
                    })
                }
            }
        }
        bags.push(row);
    }
    EvaluationDataset::from_parts(cases, raters, bags, k_max)
}

fn record_bag(rec: &AnnotationRecord, k_max: usize) -> Result<DiagnosisBag> {
    if !rec.normalized.is_empty() && rec.normalized.len() != rec.diagnoses.len() {
        return Err(CorpusError::MalformedRecord {
            line: 0,
            reason: "`normalized` length differs from `diagnoses`".into(),
        });
    }
    let items = rec
        .diagnoses
        .iter()
        .enumerate()
        .map(|(i, raw)| match rec.normalized.get(i) {
            Some(n) => Diagnosis::with_normalized(raw.as_str(), n.as_str()),
            None => Diagnosis::new(raw.as_str()),
        })
        .collect::<Result<Vec<_>>>()?;
    DiagnosisBag::new(items, k_max)
}

/// Writes the canonical JSONL form: cases in order, raters in panel order,
/// transcript carried on the first record of each case.
pub fn write_evaluation_dataset<W: Write>(ds: &EvaluationDataset, mut w: W) -> std::io::Result<()> {
    for (c, case) in ds.cases.iter().enumerate() {
        for (r, rater) in ds.raters.iter().enumerate() {
            let bag = &ds.bags[r][c];
            let normalized: Vec<String> = if bag.items.iter().all(|d| d.normalized().is_some()) {
                bag.items.iter().map(|d| d.normalized.clone()).collect()
            } else {
                Vec::new()
            };
            let rec = AnnotationRecord {
                case_id: case.case_id.clone(),
                rater_id: rater.id.clone(),
                rater_kind: rater.kind,
                diagnoses: bag.items.iter().map(|d| d.raw.clone()).collect(),
                normalized,
                transcript: if r == 0 { case.transcript.clone() } else { None },
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub a: String,
    pub b: String,
    pub label: u8,
}

fn parse_label(value: &str, line: usize) -> Result<u8> {
    match value.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(CorpusError::InvalidLabel {
            line,
            value: other.to_owned(),
        }),
    }
}

/// Loads labeled pairs from CSV (`a,b,label` header) or JSONL.
///
/// The format follows the extension; unknown extensions are sniffed from the
/// first non-blank character.
pub fn load_labeled_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let jsonl = match ext.as_deref() {
        Some("csv") => false,
        Some("jsonl") | Some("json") | Some("ndjson") => true,
        _ => text.trim_start().starts_with('{'),
    };
    if jsonl {
        parse_pairs_jsonl(&text)
    } else {
        parse_pairs_csv(text.as_bytes())
    }
}

pub fn parse_pairs_jsonl(text: &str) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                line: lineno,
                reason: e.to_string(),
            })?;
        let field = |name: &str| -> Result<String> {
            v.get(name)
                .and_then(|x| x.as_str())
                .map(str::to_owned)
                .ok_or_else(|| CorpusError::MalformedRecord {
                    line: lineno,
                    reason: format!("missing string field `{name}`"),
                })
        };
        let (a, b) = (field("a")?, field("b")?);
        let label = match v.get("label") {
            Some(serde_json::Value::Number(n)) => parse_label(&n.to_string(), lineno)?,
            Some(serde_json::Value::String(s)) => parse_label(s, lineno)?,
            Some(other) => {
                return Err(CorpusError::InvalidLabel {
                    line: lineno,
                    value: other.to_string(),
                })
            }
            None => {
                return Err(CorpusError::MalformedRecord {
                    line: lineno,
                    reason: "missing field `label`".into(),
                })
            }
        };
        out.push(LabeledPair { a, b, label });
    }
    Ok(out)
}

pub fn parse_pairs_csv<R: Read>(reader: R) -> Result<Vec<LabeledPair>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::None).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MalformedRecord {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let (ia, ib, il) = (col("a")?, col("b")?, col("label")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| CorpusError::MalformedRecord {
            line: lineno,
            reason: e.to_string(),
        })?;
        let get = |idx: usize| rec.get(idx).unwrap_or("").to_owned();
        out.push(LabeledPair {
            a: get(ia),
            b: get(ib),
            label: parse_label(&get(il), lineno)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcdEntry {
    pub code: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// Letter, digits, optional `.suffix` (e.g. `I10`, `J18.9`, `K52`).
pub fn is_valid_icd_code(code: &str) -> bool {
    let (stem, suffix) = match code.split_once('.') {
        Some((s, x)) => (s, Some(x)),
        None => (code, None),
    };
    let mut chars = stem.chars();
    let head_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    let digits = chars.as_str();
    head_ok
        && !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit())
        && suffix.is_none_or(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric()))
}

pub fn load_icd_catalog(path: &Path) -> Result<Vec<IcdEntry>> {
    read_icd_catalog(open(path)?)
}

pub fn read_icd_catalog<R: Read>(reader: R) -> Result<Vec<IcdEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MalformedRecord {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let (ic, it) = (col("code")?, col("title")?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec.map_err(|e| CorpusError::MalformedRecord {
            line: lineno,
            reason: e.to_string(),
        })?;
        let code = rec.get(ic).unwrap_or("").trim().to_owned();
        let title = rec.get(it).unwrap_or("").trim().to_owned();
        if !is_valid_icd_code(&code) {
            return Err(CorpusError::InvalidCode { line: lineno, code });
        }
        if title.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: lineno,
                reason: "empty title".into(),
            });
        }
        if !seen.insert(code.clone()) {
            return Err(CorpusError::DuplicateCode(code));
        }
        out.push(IcdEntry {
            code,
            title,
            embedding: None,
        });
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyCatalog);
    }
    Ok(out)
}
