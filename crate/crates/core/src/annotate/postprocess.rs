use std::sync::LazyLock;

use regex::Regex;

use super::prompts::NO_ACTIVITY;

static ENUMERATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]\s*)+").unwrap());
static PARENTHESIZED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^()]*\)").unwrap());

/// Turns an enumerated LLM reply into a list of items.
///
/// Per line: drop `(...)` groups (innermost first, until none remain), strip
/// leading `1.` / `2)` style numbering, trim. Empty lines are dropped and
/// order is preserved. Square brackets are left alone.
pub fn postprocess_list(raw: &str) -> Vec<String> {
    raw.lines().filter_map(clean_line).collect()
}

fn clean_line(line: &str) -> Option<String> {
    let mut text = line.to_owned();
    loop {
        let next = PARENTHESIZED.replace_all(&text, "").into_owned();
        if next == text {
            break;
        }
        text = next;
    }
    let text = ENUMERATION.replace(&text, "");
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_owned())
}

/// Removes the "no activity" sentinel; a reply consisting only of it becomes empty.
pub fn drop_no_activity(items: Vec<String>) -> Vec<String> {
    let sentinel = NO_ACTIVITY.trim_end_matches('.');
    items.into_iter().filter(|item| !item.trim_end_matches('.').eq_ignore_ascii_case(sentinel)).collect()
}
