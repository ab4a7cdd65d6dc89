use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no JSON object or array found in reply")]
pub struct ExtractError {
    pub raw: String,
}

/// Finds the first complete JSON object or array in a model reply.
///
/// Fenced code blocks are tried first (in order), then the whole reply.
/// Within each candidate, every `{` or `[` is tried as a start position and
/// the balanced span after it is parsed.
pub fn extract_json(reply: &str) -> Result<Value, ExtractError> {
    fenced_blocks(reply)
        .into_iter()
        .chain(std::iter::once(reply))
        .find_map(first_value)
        .ok_or_else(|| ExtractError { raw: reply.to_string() })
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (e.g. `json`) up to the end of the line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

fn first_value(text: &str) -> Option<Value> {
    text.char_indices()
        .filter(|(_, c)| *c == '{' || *c == '[')
        .find_map(|(start, _)| {
            let end = balanced_end(&text[start..])?;
            serde_json::from_str::<Value>(&text[start..start + end]).ok()
        })
}

/// Byte length of the bracket-balanced span at the start of `s`, honouring
/// JSON string literals.
fn balanced_end(s: &str) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
