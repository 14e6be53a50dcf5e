//! Parsers for model responses. All of them are total: malformed input is
//! classified and counted by the caller, never panicked on.

use crate::textnorm;

/// Split one CSV line into fields. Double-quoted fields may contain commas
/// and escape quotes by doubling them. Returns `None` on unbalanced quotes
/// or trailing garbage after a closing quote.
pub fn parse_csv_line(line: &str) -> Option<Vec<String>> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        // Skip leading whitespace of the field.
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
        let mut field = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                if c == '"' {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        field.push('"');
                    } else {
                        closed = true;
                        break;
                    }
                } else {
                    field.push(c);
                }
            }
            if !closed {
                return None;
            }
            // Only whitespace may follow before the next comma.
            while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
                chars.next();
            }
            match chars.next() {
                None => {
                    fields.push(field);
                    return Some(fields);
                }
                Some(',') => {
                    fields.push(field);
                    continue;
                }
                Some(_) => return None,
            }
        }
        // Unquoted field: read to the next comma.
        let mut ended = false;
        for c in chars.by_ref() {
            if c == ',' {
                ended = true;
                break;
            }
            field.push(c);
        }
        fields.push(field.trim().to_string());
        if !ended {
            return Some(fields);
        }
    }
}

/// Parse a response as two-column CSV rows. Non-empty lines that do not
/// parse into exactly two fields are counted as malformed and skipped. With
/// `drop_action_header`, rows whose first field is `action` (any case) are
/// treated as a header and dropped silently.
pub fn two_column_rows(text: &str, drop_action_header: bool) -> (Vec<(String, String)>, usize) {
    let mut rows = Vec::new();
    let mut malformed = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_csv_line(line) {
            Some(fields) if fields.len() == 2 => {
                if drop_action_header && fields[0].trim().eq_ignore_ascii_case("action") {
                    continue;
                }
                rows.push((fields[0].clone(), fields[1].clone()));
            }
            _ => malformed += 1,
        }
    }
    (rows, malformed)
}

/// Ternary verdict extracted from a stage (c) response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No,
    Ambiguous,
}

/// Find the final `Answer:` line and read its verdict. The line must contain
/// exactly one of the tokens `yes`, `no`, `ambiguous` (case-insensitive);
/// zero or several distinct tokens, or no `Answer:` line at all, is
/// malformed (`None`).
pub fn parse_verdict(text: &str) -> Option<Verdict> {
    let content = final_answer_line(text)?;
    let toks = textnorm::tokens(content);
    let mut found = Vec::new();
    for kind in [Verdict::Yes, Verdict::No, Verdict::Ambiguous] {
        let word = match kind {
            Verdict::Yes => "yes",
            Verdict::No => "no",
            Verdict::Ambiguous => "ambiguous",
        };
        if toks.iter().any(|t| t == word) {
            found.push(kind);
        }
    }
    match found.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// Temporal phase relative to one transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Initial,
    Action,
    End,
    Ambiguous,
}

/// Find the final `Answer:` line and read its leading token as a phase.
pub fn parse_phase(text: &str) -> Option<Phase> {
    let content = final_answer_line(text)?;
    let first = textnorm::tokens(content).into_iter().next()?;
    match first.as_str() {
        "initial" => Some(Phase::Initial),
        "action" => Some(Phase::Action),
        "end" => Some(Phase::End),
        "ambiguous" => Some(Phase::Ambiguous),
        _ => None,
    }
}

/// Extract the boolean judgement from a state-filter response by locating
/// the last occurrence of "the answer is true" or "the answer is false".
pub fn parse_true_false(text: &str) -> Option<bool> {
    let norm = textnorm::normalize(text);
    let last_true = norm.rfind("the answer is true");
    let last_false = norm.rfind("the answer is false");
    match (last_true, last_false) {
        (Some(t), Some(f)) => Some(t > f),
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (None, None) => None,
    }
}

fn final_answer_line(text: &str) -> Option<&str> {
    text.lines().rev().find_map(|line| {
        let trimmed = line.trim_start();
        let lower = trimmed.to_ascii_lowercase();
        let rest = lower.strip_prefix("answer")?;
        let after = rest.trim_start();
        after.strip_prefix(':')?;
        // Return the original-case content after the colon.
        let colon = trimmed.to_ascii_lowercase().find(':').unwrap();
        Some(trimmed[colon + 1..].trim())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_line_with_embedded_comma() {
        let fields = parse_csv_line(
            "\"Adding whisked eggs into the pan.\",\"let's add, then stir\"",
        )
        .unwrap();
        assert_eq!(fields.len(), 2);
        assert_eq!(fields[1], "let's add, then stir");
    }

    #[test]
    fn csv_line_with_escaped_quote() {
        let fields = parse_csv_line("\"say \"\"hi\"\"\",\"b\"").unwrap();
        assert_eq!(fields[0], "say \"hi\"");
    }

    #[test]
    fn csv_line_rejects_unbalanced_quote() {
        assert_eq!(parse_csv_line("\"oops,b"), None);
        assert_eq!(parse_csv_line("\"a\" trailing,\"b\""), None);
    }

    #[test]
    fn two_column_counts_malformed_and_drops_header() {
        let text = "action,support\n\"a\",\"b\"\njust chatter\n\"one\",\"two\",\"three\"\n";
        let (rows, malformed) = two_column_rows(text, true);
        assert_eq!(rows, vec![("a".into(), "b".into())]);
        assert_eq!(malformed, 2);
        // Without header dropping the header is an ordinary row.
        let (rows2, _) = two_column_rows(text, false);
        assert_eq!(rows2.len(), 2);
    }

    #[test]
    fn verdict_takes_final_answer_line() {
        let text = "Judging points: things\n\nComparison: stuff\n\nAnswer: Yes, because the apple retains slice shape.";
        assert_eq!(parse_verdict(text), Some(Verdict::Yes));
        let multi = "Answer: No\nmore thoughts\nAnswer: Ambiguous";
        assert_eq!(parse_verdict(multi), Some(Verdict::Ambiguous));
    }

    #[test]
    fn verdict_malformed_cases() {
        assert_eq!(parse_verdict("no answer line here"), None);
        assert_eq!(parse_verdict("Answer: maybe"), None);
        assert_eq!(parse_verdict("Answer: yes or no, unclear"), None);
        assert_eq!(parse_verdict("Answer:"), None);
    }

    #[test]
    fn verdict_is_case_insensitive() {
        assert_eq!(parse_verdict("ANSWER: YES"), Some(Verdict::Yes));
        assert_eq!(parse_verdict("answer : ambiguous"), Some(Verdict::Ambiguous));
    }

    #[test]
    fn phase_uses_leading_token() {
        assert_eq!(
            parse_phase("Answer: Action - the egg is now being fried"),
            Some(Phase::Action)
        );
        assert_eq!(parse_phase("Answer: End."), Some(Phase::End));
        assert_eq!(parse_phase("Answer: perhaps initial"), None);
        assert_eq!(parse_phase("no line"), None);
    }

    #[test]
    fn true_false_judgement() {
        assert_eq!(parse_true_false("progress...\nThe answer is True."), Some(true));
        assert_eq!(parse_true_false("The answer is false"), Some(false));
        assert_eq!(
            parse_true_false("The answer is True. Wait. The answer is False."),
            Some(false)
        );
        assert_eq!(parse_true_false("no judgement"), None);
    }
}
