//! Parsers that turn raw completions into typed values.

use crate::types::{ToolInput, ToolSpec};

use super::{tool_input_from_map, PromptError};

/// Split a completion on top-level commas.
///
/// Commas inside single or double quotes do not split. An apostrophe
/// between two alphanumeric characters (as in "What's") is part of the
/// word, not a quote. Pieces are trimmed and empty pieces dropped, so an
/// all-whitespace completion parses to an empty list.
pub fn parse_subquestions(completion: &str) -> Vec<String> {
    let chars: Vec<char> = completion.chars().collect();
    let mut pieces: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut in_double = false;
    let mut in_single = false;
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '"' if !in_single => {
                in_double = !in_double;
                current.push(c);
            }
            '\'' if !in_double => {
                let prev_alnum = i > 0 && chars[i - 1].is_alphanumeric();
                let next_alnum = i + 1 < chars.len() && chars[i + 1].is_alphanumeric();
                if !(prev_alnum && next_alnum) {
                    in_single = !in_single;
                }
                current.push(c);
            }
            ',' if !in_double && !in_single => {
                pieces.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    pieces.push(current);
    pieces
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

/// True iff the first alphabetic token is "yes", false iff it is "no".
pub fn parse_yes_no(completion: &str) -> Result<bool, PromptError> {
    let token: String = completion
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match token.as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(PromptError::Parse(format!(
            "expected yes or no, got {completion:?}"
        ))),
    }
}

/// First integer literal in the completion, validated against the registry.
pub fn parse_tool_id(completion: &str, registry: &[ToolSpec]) -> Result<u32, PromptError> {
    let digits: String = completion
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return Err(PromptError::Parse(format!(
            "no tool number in {completion:?}"
        )));
    }
    let id: u32 = digits
        .parse()
        .map_err(|_| PromptError::Parse(format!("tool number {digits:?} out of range")))?;
    if registry.iter().any(|t| t.id == id) {
        Ok(id)
    } else {
        Err(PromptError::UnknownTool { id })
    }
}

/// Extract the first balanced `{...}` region of the completion, parse it as
/// a JSON object, and validate the keys against the tool's dynamic
/// parameters. Number and boolean values are coerced to their canonical
/// string form. Declared parameters may be omitted.
pub fn parse_tool_input_json(completion: &str, tool: &ToolSpec) -> Result<ToolInput, PromptError> {
    let region = first_balanced_object(completion).ok_or_else(|| {
        PromptError::Parse(format!("no balanced JSON object in {completion:?}"))
    })?;
    let value: serde_json::Value = serde_json::from_str(region)
        .map_err(|e| PromptError::Parse(format!("invalid JSON object: {e}")))?;
    let map = value
        .as_object()
        .ok_or_else(|| PromptError::Parse("JSON value is not an object".to_string()))?;
    tool_input_from_map(map, tool)
}

/// The first `{...}` span with balanced braces, honoring JSON string
/// literals and escapes. None when no such span exists.
fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &byte) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if byte == b'\\' {
                escaped = true;
            } else if byte == b'"' {
                in_string = false;
            }
            continue;
        }
        match byte {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}
