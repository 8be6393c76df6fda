use std::path::Path;

use super::OracleError;

const DIRECT_MATCH: &str = include_str!("../../templates/direct_match.txt");
const ICD_SELECT: &str = include_str!("../../templates/icd_select.txt");

/// A prompt with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, required: &[&str]) -> Result<Self, OracleError> {
        let text: String = text.into();
        let text = text.trim_end().to_owned();
        for name in required {
            if !text.contains(&format!("{{{name}}}")) {
                return Err(OracleError::Template(format!("missing placeholder {{{name}}}")));
            }
        }
        Ok(Self { text })
    }

    pub fn direct_match() -> Self {
        Self::new(DIRECT_MATCH, &["diag", "other_diag"]).expect("bundled template")
    }

    pub fn icd_select() -> Self {
        Self::new(ICD_SELECT, &["candidate", "diagnoses"]).expect("bundled template")
    }

    pub fn load(path: &Path, required: &[&str]) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Template(format!("{}: {e}", path.display())))?;
        Self::new(text, required)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes placeholders in a single left-to-right scan, so values
    /// containing braces are never re-expanded.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len() + 64);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let value = after.find('}').and_then(|close| {
                let name = &after[..close];
                vars.iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| (*v, close))
            });
            match value {
                Some((v, close)) => {
                    out.push_str(v);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// Numbered candidate list, nearest first: `1. title` per line.
pub fn numbered_list(titles: &[&str]) -> String {
    let lines: Vec<String> = titles
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect();
    format!("\n{}", lines.join("\n"))
}
