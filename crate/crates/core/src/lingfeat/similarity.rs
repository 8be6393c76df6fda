use std::collections::BTreeSet;

use super::LingError;

/// `|A ∩ B| / min(|A|, |B|)`.
pub fn overlap_ratio<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, LingError> {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return Err(LingError::EmptySetOperand);
    }
    let shared = a.intersection(b).count();
    Ok(shared as f64 / smaller as f64)
}

/// Character-level edit distance with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer string's length in characters.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, LingError> {
    if u.len() != v.len() {
        return Err(LingError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(LingError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    // full-matrix DP, kept separate from the two-row implementation
    fn dp_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn overlap_examples() {
        // {a,b,c} ∩ {b,c,d} = {b,c}; min size 3
        assert_eq!(overlap_ratio(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])).unwrap(), 2.0 / 3.0);
        let s = set(&["x", "y"]);
        assert_eq!(overlap_ratio(&s, &s).unwrap(), 1.0);
        assert_eq!(overlap_ratio(&set(&["a"]), &set(&["b"])).unwrap(), 0.0);
        assert!(matches!(
            overlap_ratio(&set(&[]), &set(&["b"])),
            Err(LingError::EmptySetOperand)
        ));
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(normalized_levenshtein("abc", "abc"), 0.0);
        assert_eq!(dp_oracle("abc", "abd"), 1);
        assert_eq!(normalized_levenshtein("abc", "abd"), 1.0 / 3.0);
        assert_eq!(dp_oracle("a", "bcd"), 3);
        assert_eq!(normalized_levenshtein("a", "bcd"), 1.0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        // counts characters, not bytes
        assert_eq!(levenshtein("тиф", "тик"), 1);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(LingError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]),
            Err(LingError::ZeroVector)
        ));
    }

    proptest! {
        #[test]
        fn levenshtein_matches_dp_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            prop_assert_eq!(levenshtein(&a, &b), dp_oracle(&a, &b));
            prop_assert_eq!(normalized_levenshtein(&a, &b), normalized_levenshtein(&b, &a));
            let v = normalized_levenshtein(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn overlap_symmetric_and_bounded(
            a in prop::collection::btree_set(0u8..10, 1..6),
            b in prop::collection::btree_set(0u8..10, 1..6),
        ) {
            let ab = overlap_ratio(&a, &b).unwrap();
            prop_assert_eq!(ab, overlap_ratio(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(overlap_ratio(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn cosine_symmetric_and_bounded(
            u in prop::collection::vec(-5.0f64..5.0, 4),
            v in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            if let (Ok(uv), Ok(vu)) = (cosine_similarity(&u, &v), cosine_similarity(&v, &u)) {
                prop_assert_eq!(uv, vu);
                prop_assert!((-1.0..=1.0).contains(&uv));
            }
        }
    }
}
