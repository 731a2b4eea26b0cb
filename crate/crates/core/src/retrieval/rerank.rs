use super::{RetrievalError, SearchResult};

/// Host part of a URL, lowercased, without port or credentials.
pub fn url_host(url: &str) -> &str {
    let rest = url.split_once("://").map_or(url, |(_, rest)| rest);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or_default();
    let host = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    host.split(':').next().unwrap_or_default()
}

fn host_matches(url: &str, pattern: &str) -> bool {
    let host = url_host(url).to_ascii_lowercase();
    let pattern = pattern.to_ascii_lowercase();
    host == pattern || host.ends_with(&format!(".{pattern}"))
}

/// Number of sentence boundaries: `.`, `!` or `?` followed by whitespace or
/// the end of the text.
pub fn sentence_count(text: &str) -> usize {
    let mut chars = text.chars().peekable();
    let mut count = 0;
    while let Some(c) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            count += 1;
        }
    }
    count
}

/// Keeps results mentioning `entity` (case-insensitive, title or body) and
/// returns the first one hosted on an encyclopedia, or the first survivor
/// when none is.
pub fn rerank_longform(
    results: &[SearchResult],
    entity: &str,
    encyclopedia_hosts: &[String],
) -> Result<Vec<SearchResult>, RetrievalError> {
    let needle = entity.trim().to_lowercase();
    let mentions: Vec<&SearchResult> = results
        .iter()
        .filter(|r| {
            !needle.is_empty()
                && (r.title.to_lowercase().contains(&needle) || r.body.to_lowercase().contains(&needle))
        })
        .collect();
    let chosen = mentions
        .iter()
        .find(|r| encyclopedia_hosts.iter().any(|h| host_matches(&r.url, h)))
        .or(mentions.first())
        .ok_or(RetrievalError::EmptyResults)?;
    Ok(vec![(*chosen).clone()])
}

/// Drops results from dataset-hosting sites and results whose body is no
/// longer than one sentence. Survivors keep their order.
pub fn rerank_shortqa(results: &[SearchResult], leak_domains: &[String]) -> Vec<SearchResult> {
    let leaks: Vec<String> = leak_domains.iter().map(|d| d.to_lowercase()).collect();
    results
        .iter()
        .filter(|r| {
            let url = r.url.to_lowercase();
            !leaks.iter().any(|leak| url.contains(leak.as_str()))
        })
        .filter(|r| sentence_count(&r.body) >= 2)
        .cloned()
        .collect()
}
