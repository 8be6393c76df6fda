use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

/// A total decision over ordered diagnosis strings.
pub trait MatchFn: Sync {
    fn matches(&self, a: &str, b: &str) -> bool;
}

impl<F: Fn(&str, &str) -> bool + Sync> MatchFn for F {
    fn matches(&self, a: &str, b: &str) -> bool {
        self(a, b)
    }
}

/// String equality on the (normalized) diagnosis text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatcher;

impl MatchFn for ExactMatcher {
    fn matches(&self, a: &str, b: &str) -> bool {
        a == b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstMatcher(pub bool);

impl MatchFn for ConstMatcher {
    fn matches(&self, _: &str, _: &str) -> bool {
        self.0
    }
}

/// Lookup over ordered pairs. Pairs absent from the table answer `false`
/// and are counted; check coverage before trusting results.
#[derive(Debug, Default)]
pub struct TableMatcher {
    table: HashMap<(String, String), bool>,
    misses: AtomicUsize,
}

impl TableMatcher {
    pub fn new(table: HashMap<(String, String), bool>) -> Self {
        Self {
            table,
            misses: AtomicUsize::new(0),
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<bool> {
        self.table.get(&(a.to_owned(), b.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl MatchFn for TableMatcher {
    fn matches(&self, a: &str, b: &str) -> bool {
        match self.get(a, b) {
            Some(v) => v,
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }
}

/// How an ordered pair is evaluated: `m(a, b)`, or `m(a, b)` combined with
/// `m(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrize {
    #[default]
    AsIs,
    Or,
    And,
}

impl Symmetrize {
    pub fn apply(self, m: &dyn MatchFn, a: &str, b: &str) -> bool {
        match self {
            Symmetrize::AsIs => m.matches(a, b),
            Symmetrize::Or => m.matches(a, b) || m.matches(b, a),
            Symmetrize::And => m.matches(a, b) && m.matches(b, a),
        }
    }

    pub fn needs_reverse(self) -> bool {
        self != Symmetrize::AsIs
    }
}
