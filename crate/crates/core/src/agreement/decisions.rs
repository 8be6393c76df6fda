//! Precomputed match decisions, so metric runs replay without oracles.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kappa::rater_pairs;
use super::matchfn::{MatchFn, Symmetrize};
use super::AgreementError;
use crate::corpus::EvaluationDataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub case_id: String,
    pub rater_a: String,
    /// 1-based rank in `rater_a`'s bag.
    pub p: usize,
    pub rater_b: String,
    pub q: usize,
    pub a: String,
    pub b: String,
    pub decision: u8,
}

/// Decisions keyed by the ordered text pair `(a, b)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionMatrix {
    records: Vec<DecisionRecord>,
    table: HashMap<(String, String), u8>,
}

/// Every ordered comparison the metrics at cutoffs up to `k` will make:
/// per case, per rater pair (algorithm first; lower expert index first),
/// per `(p, q)`. Reverse comparisons are included when `symmetrize` needs
/// them.
pub fn required_comparisons(
    ds: &EvaluationDataset,
    k: usize,
    symmetrize: Symmetrize,
) -> Vec<DecisionRecord> {
    let raters = ds.raters();
    let mut out = Vec::new();
    for (c, case) in ds.cases().iter().enumerate() {
        for (_, x, y) in rater_pairs(ds) {
            let (bx, by) = (ds.bag(x, c).truncated(k), ds.bag(y, c).truncated(k));
            for (p, da) in bx.iter().enumerate() {
                for (q, db) in by.iter().enumerate() {
                    let rec = |ra: usize, pa: usize, ta: &str, rb: usize, pb: usize, tb: &str| DecisionRecord {
                        case_id: case.case_id.clone(),
                        rater_a: raters[ra].id.clone(),
                        p: pa + 1,
                        rater_b: raters[rb].id.clone(),
                        q: pb + 1,
                        a: ta.to_owned(),
                        b: tb.to_owned(),
                        decision: 0,
                    };
                    out.push(rec(x, p, da.text(), y, q, db.text()));
                    if symmetrize.needs_reverse() {
                        out.push(rec(y, q, db.text(), x, p, da.text()));
                    }
                }
            }
        }
    }
    out
}

impl DecisionMatrix {
    /// Builds the table; a text pair with two different decisions is an
    /// error.
    pub fn from_records(records: Vec<DecisionRecord>) -> Result<Self, AgreementError> {
        let mut table = HashMap::with_capacity(records.len());
        for r in &records {
            if r.decision > 1 {
                return Err(AgreementError::DecisionFile {
                    line: 0,
                    reason: format!("decision {} for ({:?}, {:?}) is not 0 or 1", r.decision, r.a, r.b),
                });
            }
            match table.insert((r.a.clone(), r.b.clone()), r.decision) {
                Some(prev) if prev != r.decision => {
                    return Err(AgreementError::ConflictingDecision {
                        a: r.a.clone(),
                        b: r.b.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self { records, table })
    }

    /// Queries `m` once per required comparison.
    pub fn compute(
        ds: &EvaluationDataset,
        m: &dyn MatchFn,
        k: usize,
        symmetrize: Symmetrize,
    ) -> Result<Self, AgreementError> {
        let mut records = required_comparisons(ds, k, symmetrize);
        records
            .par_iter_mut()
            .for_each(|r| r.decision = u8::from(m.matches(&r.a, &r.b)));
        Self::from_records(records)
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<u8> {
        self.table.get(&(a.to_owned(), b.to_owned())).copied()
    }

    /// First comparison needed at cutoff `k` that has no decision.
    pub fn check_coverage(
        &self,
        ds: &EvaluationDataset,
        k: usize,
        symmetrize: Symmetrize,
    ) -> Result<(), AgreementError> {
        match required_comparisons(ds, k, symmetrize)
            .into_iter()
            .find(|r| self.get(&r.a, &r.b).is_none())
        {
            Some(r) => Err(AgreementError::MissingDecision {
                case_id: r.case_id,
                a: r.a,
                b: r.b,
            }),
            None => Ok(()),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("write to Vec");
        out
    }

    pub fn read_jsonl<R: Read>(reader: R) -> Result<Self, AgreementError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| AgreementError::DecisionFile {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let r: DecisionRecord = serde_json::from_str(&line).map_err(|e| AgreementError::DecisionFile {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(r);
        }
        Self::from_records(records)
    }
}

/// Pairs without a decision answer `false`; run
/// [`DecisionMatrix::check_coverage`] first.
impl MatchFn for DecisionMatrix {
    fn matches(&self, a: &str, b: &str) -> bool {
        self.get(a, b) == Some(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(a: &str, b: &str, d: u8) -> DecisionRecord {
        DecisionRecord {
            case_id: "c".into(),
            rater_a: "x".into(),
            p: 1,
            rater_b: "y".into(),
            q: 1,
            a: a.into(),
            b: b.into(),
            decision: d,
        }
    }

    #[test]
    fn conflicting_decisions_rejected() {
        let err = DecisionMatrix::from_records(vec![rec("a", "b", 1), rec("a", "b", 0)]).unwrap_err();
        assert!(matches!(err, AgreementError::ConflictingDecision { .. }));
        // repeated agreement is fine; reverse order is a different key
        let m = DecisionMatrix::from_records(vec![rec("a", "b", 1), rec("a", "b", 1), rec("b", "a", 0)]).unwrap();
        assert!(m.matches("a", "b"));
        assert!(!m.matches("b", "a"));
    }

    #[test]
    fn jsonl_round_trip() {
        let m = DecisionMatrix::from_records(vec![rec("a", "b", 1), rec("c", "d", 0)]).unwrap();
        let back = DecisionMatrix::read_jsonl(m.to_jsonl_bytes().as_slice()).unwrap();
        assert_eq!(back, m);
        let bad = DecisionMatrix::read_jsonl("{\"case_id\": 1}\n".as_bytes()).unwrap_err();
        assert!(matches!(bad, AgreementError::DecisionFile { line: 1, .. }));
    }
}
