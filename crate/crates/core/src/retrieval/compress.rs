use std::sync::LazyLock;

use regex::Regex;

use super::{ProcessedBlock, SearchResult, Transform};
use crate::types::Mode;
use crate::units::{count_units, truncate_to_units};

#[derive(Debug, Clone, PartialEq)]
pub struct CompressOptions {
    /// Long-form sections always removed.
    pub section_stop_list: Vec<String>,
    /// Long-form sections removed only while the text is over budget.
    pub secondary_stop_list: Vec<String>,
    /// Short-QA cap applied to each result before the total budget.
    pub per_result_units: usize,
}

impl CompressOptions {
    pub fn from_config(cfg: &crate::config::PipelineConfig) -> Self {
        Self {
            section_stop_list: cfg.section_stop_list.clone(),
            secondary_stop_list: cfg.secondary_stop_list.clone(),
            per_result_units: cfg.shortqa_result_units,
        }
    }
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self::from_config(&crate::config::PipelineConfig::default())
    }
}

static WIKI_HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(=+)\s*(.*?)\s*=+\s*$").unwrap());
static MD_HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(#+)\s+(.*?)\s*#*\s*$").unwrap());

/// Level assigned to bare header lines (a line that is just a stop-list name).
const BARE_HEADER_LEVEL: usize = 2;

struct Header<'a> {
    level: usize,
    name: &'a str,
}

fn parse_header<'a>(line: &'a str, bare_names: &[&String]) -> Option<Header<'a>> {
    let trimmed = line.trim();
    if let Some(c) = WIKI_HEADER.captures(trimmed) {
        let name = c.get(2).unwrap().as_str();
        if !name.is_empty() {
            return Some(Header {
                level: c[1].len(),
                name,
            });
        }
    }
    if let Some(c) = MD_HEADER.captures(trimmed) {
        return Some(Header {
            level: c[1].len(),
            name: c.get(2).unwrap().as_str(),
        });
    }
    let bare = trimmed.trim_end_matches(':');
    if bare_names.iter().any(|n| n.eq_ignore_ascii_case(bare)) {
        return Some(Header {
            level: BARE_HEADER_LEVEL,
            name: bare,
        });
    }
    None
}

/// Removes every section whose header names an entry of `stop_list`, up to
/// the next header of the same or a higher level.
fn remove_sections(text: &str, stop_list: &[String], bare_names: &[&String], transforms: &mut Vec<Transform>) -> String {
    let mut kept = Vec::new();
    let mut skipping_below: Option<usize> = None;
    for line in text.lines() {
        if let Some(header) = parse_header(line, bare_names) {
            if skipping_below.is_some_and(|level| header.level <= level) {
                skipping_below = None;
            }
            if skipping_below.is_none() && stop_list.iter().any(|s| s.eq_ignore_ascii_case(header.name)) {
                transforms.push(Transform::RemovedSection {
                    name: header.name.to_string(),
                });
                skipping_below = Some(header.level);
                continue;
            }
        }
        if skipping_below.is_none() {
            kept.push(line);
        }
    }
    kept.join("\n").trim_end().to_string()
}

fn truncate_block(text: String, budget: usize, transforms: &mut Vec<Transform>) -> String {
    let before = count_units(&text);
    if before <= budget {
        return text;
    }
    let cut = truncate_to_units(&text, budget).to_string();
    transforms.push(Transform::Truncated {
        from_units: before,
        to_units: count_units(&cut),
    });
    cut
}

fn compress_longform(results: &[SearchResult], budget: usize, opts: &CompressOptions) -> Vec<ProcessedBlock> {
    let bare_names: Vec<&String> = opts
        .section_stop_list
        .iter()
        .chain(&opts.secondary_stop_list)
        .collect();
    let mut remaining = budget;
    let mut blocks = Vec::new();
    for result in results {
        if remaining == 0 {
            break;
        }
        let mut transforms = Vec::new();
        let mut text = remove_sections(&result.body, &opts.section_stop_list, &bare_names, &mut transforms);
        if count_units(&text) > remaining {
            text = remove_sections(&text, &opts.secondary_stop_list, &bare_names, &mut transforms);
        }
        let text = truncate_block(text, remaining, &mut transforms);
        if text.trim().is_empty() {
            continue;
        }
        remaining -= count_units(&text);
        blocks.push(ProcessedBlock {
            text,
            source_url: result.url.clone(),
            transforms,
        });
    }
    blocks
}

fn compress_shortqa(results: &[SearchResult], budget: usize, opts: &CompressOptions) -> Vec<ProcessedBlock> {
    let mut remaining = budget;
    let mut blocks = Vec::new();
    for result in results {
        if remaining == 0 {
            break;
        }
        let mut transforms = Vec::new();
        let cap = opts.per_result_units.min(remaining);
        let text = truncate_block(result.body.trim().to_string(), cap, &mut transforms);
        if text.is_empty() {
            continue;
        }
        remaining -= count_units(&text);
        blocks.push(ProcessedBlock {
            text,
            source_url: result.url.clone(),
            transforms,
        });
    }
    blocks
}

/// Reduces reranked results to a context of at most `budget` units.
///
/// Long-form documents lose boilerplate sections first, then list-like
/// sections if still too long, then are cut at a word boundary. Short-QA
/// results are each capped and concatenated in rank order.
pub fn compress(results: &[SearchResult], mode: Mode, budget: usize, opts: &CompressOptions) -> Vec<ProcessedBlock> {
    match mode {
        Mode::LongForm => compress_longform(results, budget, opts),
        Mode::ShortQa => compress_shortqa(results, budget, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(body: &str) -> Vec<SearchResult> {
        vec![SearchResult::new(1, "https://en.wikipedia.org/wiki/X", "X", body)]
    }

    const BIO: &str = "Sara Paxton is an American actress.\n\n== Early life ==\nShe was born in Woodland Hills.\n\n== Filmography ==\nAquamarine (2006)\nSydney White (2007)\n\n== References ==\n1. Some citation.\n=== Notes ===\nA note.\n\n== Legacy ==\nStill acting.";

    #[test]
    fn references_section_is_removed() {
        let blocks = compress(&doc(BIO), Mode::LongForm, 1000, &CompressOptions::default());
        assert_eq!(blocks.len(), 1);
        let text = &blocks[0].text;
        assert!(!text.contains("References"));
        assert!(!text.contains("citation"));
        assert!(!text.contains("A note."));
        // following same-level section survives
        assert!(text.contains("== Legacy ==\nStill acting."));
        // under budget after the first pass: filmography kept
        assert!(text.contains("Aquamarine"));
        assert_eq!(
            blocks[0].transforms,
            vec![Transform::RemovedSection { name: "References".into() }]
        );
    }

    #[test]
    fn secondary_sections_go_only_when_over_budget() {
        let full = compress(&doc(BIO), Mode::LongForm, 1000, &CompressOptions::default());
        let units = count_units(&full[0].text);
        let tight = compress(&doc(BIO), Mode::LongForm, units - 1, &CompressOptions::default());
        assert!(!tight[0].text.contains("Aquamarine"));
        assert!(tight[0].text.contains("Still acting."));
    }

    #[test]
    fn bare_and_markdown_headers() {
        let body = "Intro text here.\nReferences\n[1] cite\n# Career statistics\n| a | b |\n# Personal life\nMarried.";
        let opts = CompressOptions::default();
        let blocks = compress(&doc(body), Mode::LongForm, 4, &opts);
        assert!(count_units(&blocks[0].text) <= 4);
        let roomy = compress(&doc(body), Mode::LongForm, 500, &opts);
        assert!(!roomy[0].text.contains("[1] cite"));
        assert!(roomy[0].text.contains("# Personal life"));
    }

    #[test]
    fn content_under_budget_is_unchanged() {
        let body = "Plain text without headers. Second sentence.";
        let blocks = compress(&doc(body), Mode::LongForm, 1000, &CompressOptions::default());
        assert_eq!(blocks[0].text, body);
        assert!(blocks[0].transforms.is_empty());
        let blocks = compress(&doc(body), Mode::ShortQa, 1000, &CompressOptions::default());
        assert_eq!(blocks[0].text, body);
    }

    #[test]
    fn short_qa_caps_each_result_in_order() {
        let long = |tag: &str| (0..200).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ");
        let results: Vec<SearchResult> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, t)| SearchResult::new(i as u32 + 1, format!("https://{t}.com"), *t, long(t)))
            .collect();
        let opts = CompressOptions {
            per_result_units: 100,
            ..CompressOptions::default()
        };
        let blocks = compress(&results, Mode::ShortQa, 10_000, &opts);
        assert_eq!(blocks.len(), 3);
        for (block, tag) in blocks.iter().zip(["a", "b", "c"]) {
            assert!(count_units(&block.text) <= 100);
            // 76 words -> ceil(98.8) = 99 units, 77 words would be 101
            assert_eq!(block.text.split_whitespace().count(), 76);
            assert!(block.text.starts_with(&format!("{tag}0 ")));
            assert_eq!(block.source_url, format!("https://{tag}.com"));
        }
    }

    #[test]
    fn short_qa_total_budget_shared() {
        let results: Vec<SearchResult> = (1..=5)
            .map(|i| SearchResult::new(i, format!("https://{i}.com"), "t", "w ".repeat(50)))
            .collect();
        let blocks = compress(&results, Mode::ShortQa, 150, &CompressOptions::default());
        let total: usize = blocks.iter().map(|b| count_units(&b.text)).sum();
        assert!(total <= 150);
        assert_eq!(blocks.len(), 3);
    }

    fn arb_body() -> impl Strategy<Value = String> {
        let line = prop_oneof![
            "[a-z]{1,8}( [a-z]{1,8}){0,30}\\.",
            Just("== References ==".to_string()),
            Just("== Filmography ==".to_string()),
            Just("=== Notes ===".to_string()),
            Just("# Career statistics".to_string()),
            Just("Production".to_string()),
            Just("== Early life ==".to_string()),
        ];
        proptest::collection::vec(line, 0..30).prop_map(|lines| lines.join("\n"))
    }

    proptest! {
        #[test]
        fn output_never_exceeds_budget(
            bodies in proptest::collection::vec(arb_body(), 1..6),
            budget in 1usize..400,
            per_result in 1usize..200,
            long_form in any::<bool>(),
        ) {
            let results: Vec<SearchResult> = bodies.iter().enumerate()
                .map(|(i, b)| SearchResult::new(i as u32 + 1, format!("https://{i}.org"), "t", b.clone()))
                .collect();
            let mode = if long_form { Mode::LongForm } else { Mode::ShortQa };
            let opts = CompressOptions { per_result_units: per_result, ..CompressOptions::default() };
            let blocks = compress(&results, mode, budget, &opts);
            let total: usize = blocks.iter().map(|b| count_units(&b.text)).sum();
            prop_assert!(total <= budget);
            for b in &blocks {
                prop_assert!(results.iter().any(|r| r.url == b.source_url));
                prop_assert!(!b.text.ends_with(char::is_whitespace));
            }
            // deterministic
            prop_assert_eq!(compress(&results, mode, budget, &opts), blocks);
        }
    }
}
