use std::collections::HashMap;

use super::EvalError;

/// Scores a candidate against one reference, higher meaning more similar.
pub trait SimilarityMetric: Send + Sync {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError>;
}

impl<F> SimilarityMetric for F
where
    F: Fn(&str, &str) -> Result<f64, EvalError> + Send + Sync,
{
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError> {
        self(candidate, reference)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bleu;

impl SimilarityMetric for Bleu {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError> {
        bleu(candidate, reference)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rouge1;

impl SimilarityMetric for Rouge1 {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError> {
        rouge1_f(candidate, reference)
    }
}

/// Looks up a metric by its config name (`bleu` or `rouge1`).
pub fn metric_by_name(name: &str) -> Result<Box<dyn SimilarityMetric>, EvalError> {
    match name.to_ascii_lowercase().as_str() {
        "bleu" => Ok(Box::new(Bleu)),
        "rouge1" | "rouge" | "rouge-1" => Ok(Box::new(Rouge1)),
        _ => Err(EvalError::UnknownMetric(name.to_string())),
    }
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn non_empty_tokens(text: &str) -> Result<Vec<String>, EvalError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(EvalError::EmptyText);
    }
    Ok(tokens)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram total.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

const MAX_ORDER: usize = 4;

/// Sentence BLEU up to 4-grams with brevity penalty.
///
/// Orders above one use add-one smoothing of both match and total counts,
/// so a zero higher-order match never zeroes the score. A candidate with no
/// unigram in common with the reference scores 0.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let cand = non_empty_tokens(candidate)?;
    let refs = non_empty_tokens(reference)?;

    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let (matched, total) = clipped_matches(&cand, &refs, n);
        let precision = if n == 1 {
            if matched == 0 {
                return Ok(0.0);
            }
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += precision.ln();
    }
    let (c, r) = (cand.len() as f64, refs.len() as f64);
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok((brevity * (log_sum / MAX_ORDER as f64).exp()).clamp(0.0, 1.0))
}

/// Unigram overlap F1 over lowercased whitespace tokens.
pub fn rouge1_f(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let cand = non_empty_tokens(candidate)?;
    let refs = non_empty_tokens(reference)?;
    let (overlap, _) = clipped_matches(&cand, &refs, 1);
    if overlap == 0 {
        return Ok(0.0);
    }
    let precision = overlap as f64 / cand.len() as f64;
    let recall = overlap as f64 / refs.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bleu_identity_and_disjoint() {
        assert_eq!(bleu("the cat sat on the mat", "the cat sat on the mat").unwrap(), 1.0);
        assert_eq!(bleu("a", "a").unwrap(), 1.0);
        assert_eq!(bleu("dog runs", "the cat sat").unwrap(), 0.0);
    }

    #[test]
    fn bleu_short_candidate_hand_value() {
        // unigram 3/3, smoothed orders (2+1)/(2+1), (1+1)/(1+1), (0+1)/(0+1);
        // brevity exp(1 - 6/3)
        let expected = (-1.0f64).exp();
        let got = bleu("the cat sat", "the cat sat on the mat").unwrap();
        assert!((got - expected).abs() < 1e-12, "{got}");
    }

    #[test]
    fn bleu_partial_overlap_hand_value() {
        // cand "a b c d", ref "a b x d": unigrams 3/4, bigrams 1/3 -> 2/4,
        // trigrams 0/2 -> 1/3, 4-grams 0/1 -> 1/2, no brevity penalty
        let expected = (0.75f64 * 0.5 * (1.0 / 3.0) * 0.5).powf(0.25);
        let got = bleu("a b c d", "a b x d").unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_clips_repeated_tokens() {
        // "the the the" against "the cat": unigram clipped to 1/3, bigrams
        // 0/2 -> 1/3, trigrams 0/1 -> 1/2, 4-grams 0/0 -> 1
        let got = bleu("the the the", "the cat").unwrap();
        let expected = (1.0f64 / 3.0 * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_values() {
        assert!((rouge1_f("a b c", "a b d").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge1_f("A B", "a b").unwrap(), 1.0);
        assert_eq!(rouge1_f("x y", "a b").unwrap(), 0.0);
        // precision 1/1, recall 1/4
        assert!((rouge1_f("a", "a b c d").unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_error() {
        assert_eq!(bleu("", "a"), Err(EvalError::EmptyText));
        assert_eq!(rouge1_f("a", "  \n"), Err(EvalError::EmptyText));
    }

    #[test]
    fn lookup_by_name() {
        assert!(metric_by_name("BLEU").is_ok());
        assert!(metric_by_name("rouge1").is_ok());
        assert!(matches!(metric_by_name("bleurt"), Err(EvalError::UnknownMetric(_))));
    }

    fn text() -> impl Strategy<Value = String> {
        prop::collection::vec("[a-e]{1,3}", 1..12).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn metrics_in_unit_range(a in text(), b in text()) {
            for m in [bleu(&a, &b).unwrap(), rouge1_f(&a, &b).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }

        #[test]
        fn metrics_of_self_are_one(a in text()) {
            prop_assert!((bleu(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((rouge1_f(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rouge_is_symmetric(a in text(), b in text()) {
            prop_assert!((rouge1_f(&a, &b).unwrap() - rouge1_f(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}
