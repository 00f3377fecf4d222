//! Tolerant extraction of JSON objects from chat-model replies.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

/// Parses the JSON payload of a model reply.
///
/// Accepts fenced code blocks, surrounding prose, trailing commas and bare
/// statement ids inside arrays (`[S1, S2]`), all of which show up in
/// practice when a model imitates the examples in a prompt.
pub fn parse_json_lenient(raw: &str) -> Result<Value, String> {
    let body = strip_fences(raw.trim());
    if let Ok(v) = serde_json::from_str::<Value>(body) {
        return Ok(v);
    }
    let span = outer_span(body).ok_or_else(|| "no JSON object in reply".to_string())?;
    if let Ok(v) = serde_json::from_str::<Value>(span) {
        return Ok(v);
    }
    let repaired = repair(span);
    serde_json::from_str::<Value>(&repaired).map_err(|e| format!("invalid JSON in reply: {e}"))
}

fn strip_fences(s: &str) -> &str {
    let Some(start) = s.find("```") else {
        return s;
    };
    let after = &s[start + 3..];
    // Skip an info string such as `json`.
    let after = match after.find('\n') {
        Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &after[nl + 1..],
        _ => after,
    };
    match after.find("```") {
        Some(end) => &after[..end],
        None => after,
    }
}

fn outer_span(s: &str) -> Option<&str> {
    let start = s.find(['{', '['])?;
    let close = if s.as_bytes()[start] == b'{' { '}' } else { ']' };
    let end = s.rfind(close)?;
    (end > start).then(|| &s[start..=end])
}

fn repair(s: &str) -> String {
    static TRAILING: OnceLock<Regex> = OnceLock::new();
    static BARE_ID: OnceLock<Regex> = OnceLock::new();
    let trailing = TRAILING.get_or_init(|| Regex::new(r",(\s*[}\]])").unwrap());
    let bare = BARE_ID.get_or_init(|| Regex::new(r"([\[,]\s*)(S\d+)(\s*)([,\]])").unwrap());
    let mut out = trailing.replace_all(s, "$1").into_owned();
    // Adjacent matches share a delimiter, so a second pass catches the rest.
    for _ in 0..2 {
        out = bare.replace_all(&out, "$1\"$2\"$3$4").into_owned();
    }
    out
}

/// Reads `value[key]` as a string, trimming whitespace.
pub(crate) fn str_field<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| value.get(*k).and_then(Value::as_str))
        .map(str::trim)
}
