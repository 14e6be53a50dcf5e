//! Text normalization shared by narration matching, LLM response parsing,
//! and scorer answer matching: lowercase, punctuation stripped to spaces,
//! whitespace collapsed.

/// Lowercase `s`, map every non-alphanumeric character to a space, and
/// collapse runs of whitespace to single spaces.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for lc in c.to_lowercase() {
                out.push(lc);
            }
        } else {
            pending_space = true;
        }
    }
    out
}

/// Normalized word tokens of `s`.
pub fn tokens(s: &str) -> Vec<String> {
    normalize(s).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Whether `needle`'s token sequence occurs contiguously in `haystack`'s.
pub fn contains_token_seq(haystack: &str, needle: &str) -> bool {
    let h = tokens(haystack);
    let n = tokens(needle);
    if n.is_empty() || h.len() < n.len() {
        return false;
    }
    h.windows(n.len()).any(|w| w == n.as_slice())
}

/// Jaccard overlap between the token sets of `a` and `b`.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<String> = tokens(a).into_iter().collect();
    let sb: BTreeSet<String> = tokens(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}
