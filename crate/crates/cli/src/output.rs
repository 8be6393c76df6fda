//! Output files. Every file carries the config hash, and the decision
//! matrix hash when one was used, so each number traces back to its inputs.
//! Nothing written here depends on wall-clock time or thread scheduling.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decisions_sha256: Option<String>,
}

impl Provenance {
    fn comment_lines(&self, prefix: &str) -> String {
        let mut s = format!("{prefix}config_sha256={}\n", self.config_sha256);
        if let Some(d) = &self.decisions_sha256 {
            s.push_str(&format!("{prefix}decisions_sha256={d}\n"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

/// CSV with `# key=value` comment lines ahead of the header row.
pub fn csv_bytes(
    prov: &Provenance,
    meta: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Vec<u8> {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n").into_bytes();
    out.extend(prov.comment_lines("# ").into_bytes());
    for (k, v) in meta {
        out.extend(format!("# {k}={v}\n").into_bytes());
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("write to Vec");
    for r in rows {
        w.write_record(r).expect("write to Vec");
    }
    out.extend(w.into_inner().expect("flush to Vec"));
    out
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: String,
    schema_version: u32,
    #[serde(flatten)]
    provenance: &'a Provenance,
    data: &'a T,
}

pub fn json_bytes<T: Serialize>(prov: &Provenance, kind: &str, data: &T) -> Vec<u8> {
    let env = Envelope {
        schema: format!("rpad.{kind}"),
        schema_version: SCHEMA_VERSION,
        provenance: prov,
        data,
    };
    let mut out = serde_json::to_vec_pretty(&env).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn markdown_bytes(prov: &Provenance, body: &str) -> Vec<u8> {
    let mut s = String::new();
    for line in prov.comment_lines("").lines() {
        s.push_str(&format!("<!-- {line} -->\n"));
    }
    s.push_str(body);
    s.into_bytes()
}

/// Full-precision number, or `n/a`.
pub fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x}"))
}

/// Two decimals, or `n/a`.
pub fn num2(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.2}"))
}

/// One row of the per-model summary table: averaged values with the
/// optimistic flags beside them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub p_avg_1: Option<f64>,
    pub p_opt_1_flag: String,
    pub r_avg_3: Option<f64>,
    pub r_opt_3_flag: String,
}

pub const SUMMARY_HEADER: [&str; 5] = ["model", "p_avg_1", "p_opt_1", "r_avg_3", "r_opt_3"];

pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from("| Model | P_avg@1 | P_opt@1 | R_avg@3 | R_opt@3 |\n|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            r.model,
            num2(r.p_avg_1),
            r.p_opt_1_flag,
            num2(r.r_avg_3),
            r.r_opt_3_flag
        ));
    }
    s
}

pub fn summary_csv_rows(rows: &[SummaryRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.model.clone(),
                num2(r.p_avg_1),
                r.p_opt_1_flag.clone(),
                num2(r.r_avg_3),
                r.r_opt_3_flag.clone(),
            ]
        })
        .collect()
}
