//! ROUGE-L F1 over stemmed lowercase alphanumeric tokens.

use std::sync::LazyLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::text::alnum_tokens;

static STEMMER: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

pub fn stemmed_tokens(text: &str) -> Vec<String> {
    alnum_tokens(text).into_iter().map(|t| STEMMER.stem(&t).into_owned()).collect()
}

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// F1 from an LCS length and the two sequence lengths; 0 when either is empty.
pub fn f1_from_lcs(lcs: usize, candidate_len: usize, reference_len: usize) -> f64 {
    if lcs == 0 || candidate_len == 0 || reference_len == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate_len as f64;
    let r = lcs as f64 / reference_len as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    f1_from_lcs(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&stemmed_tokens(candidate), &stemmed_tokens(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cat_sat_cat_ran() {
        assert!((rouge_l_f1("the cat sat", "the cat ran") - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(rouge_l_f1("Submit with sbatch", "submit with SBATCH"), 1.0);
        assert_eq!(rouge_l_f1("alpha beta", "gamma delta"), 0.0);
        assert_eq!(rouge_l_f1("", "anything"), 0.0);
        assert_eq!(rouge_l_f1("!!!", "???"), 0.0);
    }

    #[test]
    fn stemming_unifies_inflections() {
        assert_eq!(rouge_l_f1("running jobs", "run job"), 1.0);
    }

    #[test]
    fn lcs_known_case() {
        let a: Vec<char> = "ABCBDAB".chars().collect();
        let b: Vec<char> = "BDCABA".chars().collect();
        assert_eq!(lcs_len(&a, &b), 4);
    }

    proptest! {
        #[test]
        fn symmetric_when_nonempty(a in prop::collection::vec(0u8..6, 1..30), b in prop::collection::vec(0u8..6, 1..30)) {
            prop_assert!((rouge_l_tokens(&a, &b) - rouge_l_tokens(&b, &a)).abs() < 1e-15);
        }

        #[test]
        fn bounded(a in prop::collection::vec(0u8..6, 0..30), b in prop::collection::vec(0u8..6, 0..30)) {
            let f = rouge_l_tokens(&a, &b);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
