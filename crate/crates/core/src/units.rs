//! Token-equivalent length units.
//!
//! A unit count is the whitespace-delimited word count scaled by 1.3 and
//! rounded up. It is tokenizer-free, so budgets behave identically for every
//! backend.

/// Unit count for `words` whitespace-delimited words: `ceil(words * 1.3)`.
pub fn units_for_words(words: usize) -> usize {
    (words * 13).div_ceil(10)
}

/// Unit count of a text.
pub fn count_units(text: &str) -> usize {
    units_for_words(text.split_whitespace().count())
}

/// Largest word count whose unit count fits in `budget`.
pub fn max_words_for_units(budget: usize) -> usize {
    // floor(budget * 10 / 13) always satisfies ceil(w * 1.3) <= budget.
    budget * 10 / 13
}

/// Truncates `text` so that its unit count is at most `budget`.
///
/// The cut always lands at the end of a word, so the result never ends
/// mid-word; original spacing between the retained words is preserved.
/// Returns the input unchanged when it already fits.
pub fn truncate_to_units(text: &str, budget: usize) -> &str {
    let max_words = max_words_for_units(budget);
    let mut end = 0;
    for (seen, (start, word)) in word_spans(text).enumerate() {
        if seen == max_words {
            return &text[..end];
        }
        end = start + word.len();
    }
    text
}

fn word_spans(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split(char::is_whitespace)
        .scan(0usize, |offset, piece| {
            let start = *offset;
            *offset += piece.len() + 1;
            Some((start, piece))
        })
        .filter(|(_, piece)| !piece.is_empty())
}
