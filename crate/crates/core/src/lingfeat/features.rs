//! The fixed 17-slot pair feature schema.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingProvider;
use super::similarity::{cosine_similarity, normalized_levenshtein, overlap_ratio};
use super::tokens::{token_profile, LinguisticBackend};
use super::LingError;
use crate::corpus::Diagnosis;

pub const FEATURE_COUNT: usize = 17;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;
/// Value of the reserved 17th slot. Constant, so trees never split on it.
pub const RESERVED_SLOT_VALUE: f64 = 0.0;

const CSV_MAGIC: &str = "# rpad-features v";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    LlmDirect1,
    LlmDirect2,
    LlmDirect3,
    LlmDirect4,
    LlmDirect5,
    IcdRag1,
    IcdRag2,
    CosEmbed1,
    CosEmbed2,
    CosEmbed3,
    RatioUnigram,
    RatioBigram,
    RatioStem,
    RatioLemma,
    RatioPos,
    LevNorm,
    Reserved17,
}

impl Slot {
    pub const ALL: [Slot; FEATURE_COUNT] = [
        Slot::LlmDirect1,
        Slot::LlmDirect2,
        Slot::LlmDirect3,
        Slot::LlmDirect4,
        Slot::LlmDirect5,
        Slot::IcdRag1,
        Slot::IcdRag2,
        Slot::CosEmbed1,
        Slot::CosEmbed2,
        Slot::CosEmbed3,
        Slot::RatioUnigram,
        Slot::RatioBigram,
        Slot::RatioStem,
        Slot::RatioLemma,
        Slot::RatioPos,
        Slot::LevNorm,
        Slot::Reserved17,
    ];

    pub const DIRECT: [Slot; 5] = [
        Slot::LlmDirect1,
        Slot::LlmDirect2,
        Slot::LlmDirect3,
        Slot::LlmDirect4,
        Slot::LlmDirect5,
    ];
    pub const RAG: [Slot; 2] = [Slot::IcdRag1, Slot::IcdRag2];
    pub const COSINE: [Slot; 3] = [Slot::CosEmbed1, Slot::CosEmbed2, Slot::CosEmbed3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self.index()]
    }
}

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "llm_direct_1",
    "llm_direct_2",
    "llm_direct_3",
    "llm_direct_4",
    "llm_direct_5",
    "icd_rag_1",
    "icd_rag_2",
    "cos_embed_1",
    "cos_embed_2",
    "cos_embed_3",
    "ratio_unigram",
    "ratio_bigram",
    "ratio_stem",
    "ratio_lemma",
    "ratio_pos",
    "lev_norm",
    "reserved_17",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    /// Value recorded as 0 because an operand set was empty.
    Degenerate,
    /// Slot left as the missing sentinel.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureNote {
    pub slot: Slot,
    pub kind: NoteKind,
    pub message: String,
}

/// One pair's features. `None` is the explicit missing sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: [Option<f64>; FEATURE_COUNT],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<FeatureNote>,
}

impl FeatureVector {
    pub fn new(values: [Option<f64>; FEATURE_COUNT]) -> Self {
        Self {
            values,
            notes: Vec::new(),
        }
    }

    pub fn from_dense(values: [f64; FEATURE_COUNT]) -> Self {
        Self::new(values.map(Some))
    }

    pub fn get(&self, slot: Slot) -> Option<f64> {
        self.values[slot.index()]
    }

    pub fn set(&mut self, slot: Slot, value: Option<f64>) {
        self.values[slot.index()] = value;
    }

    pub fn values(&self) -> &[Option<f64>; FEATURE_COUNT] {
        &self.values
    }

    pub fn notes(&self) -> &[FeatureNote] {
        &self.notes
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn has_missing(&self) -> bool {
        self.missing_count() > 0
    }

    /// Dense copy with sentinels replaced by `fill`.
    pub fn dense(&self, fill: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| self.values[i].unwrap_or(fill[i]))
    }

    fn note(&mut self, slot: Slot, kind: NoteKind, message: impl Into<String>) {
        self.notes.push(FeatureNote {
            slot,
            kind,
            message: message.into(),
        });
    }
}

/// Binary decisions from the external oracles; `None` when an oracle failed
/// or is not configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OracleDecisions {
    pub direct: [Option<u8>; 5],
    pub rag: [Option<u8>; 2],
}

impl OracleDecisions {
    pub fn all(value: u8) -> Self {
        Self {
            direct: [Some(value); 5],
            rag: [Some(value); 2],
        }
    }

    pub fn missing() -> Self {
        Self::default()
    }
}

/// Assembles all 17 slots for a normalized pair.
///
/// Oracle slots come from `oracle`; cosine slot `i` uses `providers[i]`.
/// Provider failures leave the slot missing and add a note.
pub fn build_feature_vector(
    a: &Diagnosis,
    b: &Diagnosis,
    oracle: &OracleDecisions,
    providers: &[&dyn EmbeddingProvider],
    backend: &dyn LinguisticBackend,
) -> Result<FeatureVector, LingError> {
    let (ta, tb) = match (a.normalized(), b.normalized()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(LingError::NotNormalized),
    };
    let mut fv = FeatureVector::new([None; FEATURE_COUNT]);

    for (slot, decision) in Slot::DIRECT.iter().zip(oracle.direct) {
        fv.set(*slot, decision.map(f64::from));
        if decision.is_none() {
            fv.note(*slot, NoteKind::Missing, "oracle decision unavailable");
        }
    }
    for (slot, decision) in Slot::RAG.iter().zip(oracle.rag) {
        fv.set(*slot, decision.map(f64::from));
        if decision.is_none() {
            fv.note(*slot, NoteKind::Missing, "oracle decision unavailable");
        }
    }

    for (i, slot) in Slot::COSINE.iter().enumerate() {
        let Some(provider) = providers.get(i) else {
            fv.note(*slot, NoteKind::Missing, "no embedding provider configured");
            continue;
        };
        let cos = provider
            .embed(ta)
            .and_then(|u| provider.embed(tb).map(|v| (u, v)))
            .map_err(|e| e.to_string())
            .and_then(|(u, v)| cosine_similarity(&u, &v).map_err(|e| e.to_string()));
        match cos {
            Ok(c) => fv.set(*slot, Some(c)),
            Err(msg) => fv.note(*slot, NoteKind::Missing, format!("{}: {msg}", provider.name())),
        }
    }

    let pa = token_profile(ta, backend)?;
    let pb = token_profile(tb, backend)?;
    let ratios = [
        (Slot::RatioUnigram, overlap_ratio(&pa.unigrams, &pb.unigrams)),
        (Slot::RatioBigram, overlap_ratio(&pa.bigrams, &pb.bigrams)),
        (Slot::RatioStem, overlap_ratio(&pa.stems, &pb.stems)),
        (Slot::RatioLemma, overlap_ratio(&pa.lemmas, &pb.lemmas)),
        (Slot::RatioPos, overlap_ratio(&pa.pos_tags, &pb.pos_tags)),
    ];
    for (slot, r) in ratios {
        match r {
            Ok(v) => fv.set(slot, Some(v)),
            Err(e) => {
                fv.set(slot, Some(0.0));
                fv.note(slot, NoteKind::Degenerate, e.to_string());
            }
        }
    }
    fv.set(Slot::LevNorm, Some(normalized_levenshtein(ta, tb)));
    fv.set(Slot::Reserved17, Some(RESERVED_SLOT_VALUE));
    Ok(fv)
}

/// A feature row as stored in the CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: FeatureVector,
    pub label: Option<u8>,
}

/// Writes the versioned feature CSV: a `# rpad-features vN` line, a header
/// with the 17 slot names plus `label`, then one row per pair. Missing
/// values are written as `NA`, unknown labels as an empty cell.
pub fn write_feature_csv<W: Write>(rows: &[FeatureRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_MAGIC}{FEATURE_SCHEMA_VERSION}")?;
    writeln!(w, "{},label", FEATURE_NAMES.join(","))?;
    for row in rows {
        let mut cells: Vec<String> = row
            .features
            .values
            .iter()
            .map(|v| v.map_or_else(|| "NA".to_owned(), |x| format!("{x}")))
            .collect();
        cells.push(row.label.map(|l| l.to_string()).unwrap_or_default());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_feature_csv<R: Read>(reader: R) -> Result<Vec<FeatureRow>, LingError> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let bad = |line: usize, reason: String| LingError::FeatureFile { line, reason };
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let first = first.map_err(|e| bad(1, e.to_string()))?;
    let version: u32 = first
        .strip_prefix(CSV_MAGIC)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(1, "missing `# rpad-features vN` line".into()))?;
    if version != FEATURE_SCHEMA_VERSION {
        return Err(LingError::SchemaVersion {
            found: version,
            expected: FEATURE_SCHEMA_VERSION,
        });
    }
    let (_, header) = lines.next().ok_or_else(|| bad(2, "missing header".into()))?;
    let header = header.map_err(|e| bad(2, e.to_string()))?;
    let expected = format!("{},label", FEATURE_NAMES.join(","));
    if header.trim() != expected {
        return Err(bad(2, "header does not match the feature schema".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| bad(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FEATURE_COUNT + 1 {
            return Err(bad(lineno, format!("expected {} cells", FEATURE_COUNT + 1)));
        }
        let mut values = [None; FEATURE_COUNT];
        for (slot, cell) in values.iter_mut().zip(&cells) {
            let cell = cell.trim();
            if cell != "NA" {
                *slot = Some(
                    cell.parse::<f64>()
                        .map_err(|_| bad(lineno, format!("bad number `{cell}`")))?,
                );
            }
        }
        let label = match cells[FEATURE_COUNT].trim() {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(bad(lineno, format!("bad label `{other}`"))),
        };
        out.push(FeatureRow {
            features: FeatureVector::new(values),
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingfeat::{BackendConfig, HashingEmbedder, RuleBackend};
    use crate::normalizer::{normalize, NormalizationRules};

    fn dx(s: &str) -> Diagnosis {
        Diagnosis::with_normalized(s, normalize(s, &NormalizationRules::basic()).unwrap()).unwrap()
    }

    fn backend() -> RuleBackend {
        RuleBackend::new(&BackendConfig::default()).unwrap()
    }

    #[test]
    fn schema_is_seventeen_named_slots() {
        assert_eq!(Slot::ALL.len(), 17);
        for (i, s) in Slot::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
        }
        assert_eq!(Slot::LevNorm.name(), "lev_norm");
        assert_eq!(Slot::Reserved17.name(), "reserved_17");
    }

    #[test]
    fn identical_strings_all_ones() {
        let trio = HashingEmbedder::default_trio();
        let providers: Vec<&dyn EmbeddingProvider> =
            trio.iter().map(|p| p as &dyn EmbeddingProvider).collect();
        let a = dx("acute pancreatitis");
        let fv = build_feature_vector(&a, &a, &OracleDecisions::all(1), &providers, &backend())
            .unwrap();
        for s in Slot::DIRECT.iter().chain(&Slot::RAG) {
            assert_eq!(fv.get(*s), Some(1.0));
        }
        for s in Slot::COSINE {
            assert!((fv.get(s).unwrap() - 1.0).abs() < 1e-12);
        }
        for s in [
            Slot::RatioUnigram,
            Slot::RatioBigram,
            Slot::RatioStem,
            Slot::RatioLemma,
            Slot::RatioPos,
        ] {
            assert_eq!(fv.get(s), Some(1.0));
        }
        assert_eq!(fv.get(Slot::LevNorm), Some(0.0));
        assert_eq!(fv.get(Slot::Reserved17), Some(RESERVED_SLOT_VALUE));
        assert!(fv.notes().is_empty());
    }

    #[test]
    fn disjoint_strings_zero_ratios() {
        let fv = build_feature_vector(
            &dx("otitis media"),
            &dx("viral pneumonia"),
            &OracleDecisions::all(0),
            &[],
            &backend(),
        )
        .unwrap();
        for s in [Slot::RatioUnigram, Slot::RatioBigram, Slot::RatioStem, Slot::RatioLemma] {
            assert_eq!(fv.get(s), Some(0.0), "{s:?}");
        }
        for s in Slot::DIRECT.iter().chain(&Slot::RAG) {
            assert_eq!(fv.get(*s), Some(0.0));
        }
        // no providers: explicit sentinels, never zeros
        for s in Slot::COSINE {
            assert_eq!(fv.get(s), None);
        }
        assert_eq!(fv.missing_count(), 3);
    }

    #[test]
    fn single_token_bigram_is_degenerate_zero() {
        let fv = build_feature_vector(
            &dx("arrhythmia"),
            &dx("functional heart rhythm disorders syndrome"),
            &OracleDecisions::missing(),
            &[],
            &backend(),
        )
        .unwrap();
        assert_eq!(fv.get(Slot::RatioBigram), Some(0.0));
        assert!(fv
            .notes()
            .iter()
            .any(|n| n.slot == Slot::RatioBigram && n.kind == NoteKind::Degenerate));
        assert_eq!(fv.get(Slot::LlmDirect1), None);
    }

    #[test]
    fn requires_normalized_input() {
        let raw = Diagnosis::new("Flu").unwrap();
        assert!(matches!(
            build_feature_vector(&raw, &raw, &OracleDecisions::all(1), &[], &backend()),
            Err(LingError::NotNormalized)
        ));
    }

    #[test]
    fn csv_round_trip_keeps_sentinels() {
        let mut values = [Some(0.25); FEATURE_COUNT];
        values[3] = None;
        values[8] = Some(-0.1 + 0.2);
        let rows = vec![
            FeatureRow {
                features: FeatureVector::new(values),
                label: Some(1),
            },
            FeatureRow {
                features: FeatureVector::from_dense([0.0; FEATURE_COUNT]),
                label: None,
            },
        ];
        let mut buf = Vec::new();
        write_feature_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# rpad-features v1\nllm_direct_1,"));
        assert!(text.contains(",NA,"));
        assert_eq!(read_feature_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn csv_version_mismatch() {
        let text = "# rpad-features v0\n";
        assert!(matches!(
            read_feature_csv(text.as_bytes()),
            Err(LingError::SchemaVersion { found: 0, expected: 1 })
        ));
    }
}
