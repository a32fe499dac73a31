/// Removes a leading copy of `query` from `suggestion`.
///
/// Matching is word-wise and case-insensitive, so runs of whitespace and
/// casing differences between query and suggestion are ignored. When the
/// query matches, the remaining words are joined with single spaces; repeated
/// leading copies are all removed so the operation is idempotent. A
/// suggestion that does not start with the query is returned unchanged.
pub fn strip_prefix(query: &str, suggestion: &str) -> String {
    let query_words: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    if query_words.is_empty() {
        return suggestion.to_string();
    }
    let words: Vec<&str> = suggestion.split_whitespace().collect();
    let mut start = 0;
    while words.len() - start >= query_words.len()
        && words[start..start + query_words.len()]
            .iter()
            .zip(&query_words)
            .all(|(w, q)| w.to_lowercase() == *q)
    {
        start += query_words.len();
    }
    if start == 0 {
        suggestion.to_string()
    } else {
        words[start..].join(" ")
    }
}
