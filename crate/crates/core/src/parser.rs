//! Extraction of per-frame completion percentages from model replies.
//!
//! A frame line starts (after optional markdown such as `**`, `#`, `-` or `>`)
//! with `Frame <n>`. Its value is the last number on the same line that is
//! either followed by `%` (spaces allowed) or preceded by `Percentage:` /
//! `Percentages:`. Numbers may use `,` thousands separators; a number written
//! with a leading sign is ignored. Later lines for the same frame replace
//! earlier ones, so drafts in a reasoning preamble are superseded by the final
//! answer.
//!
//! Classification never fails: no frame lines is `Empty`, the exact expected
//! frame range is `Ok`, anything else is `Mismatch`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ResponseStatus {
    Ok,
    Mismatch,
    Empty,
}

impl fmt::Display for ResponseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResponseStatus::Ok => "ok",
            ResponseStatus::Mismatch => "mismatch",
            ResponseStatus::Empty => "empty",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FramePrediction {
    pub frame_number: u32,
    pub description: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub status: ResponseStatus,
    /// Sorted by frame number; empty unless `status` is `Ok`.
    pub predictions: Vec<FramePrediction>,
    pub expected_first: u32,
    pub expected_count: usize,
    /// Frame numbers that did parse, sorted. Kept for diagnostics on mismatches.
    pub parsed_frames: Vec<u32>,
    pub raw_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("predictions unavailable: response status is {0}")]
pub struct StatusError(pub ResponseStatus);

impl PredictionSet {
    /// Values ordered by ascending frame number, i.e. the order the frames were
    /// shown in.
    pub fn values_in_presentation_order(&self) -> Result<Vec<f64>, StatusError> {
        if self.status != ResponseStatus::Ok {
            return Err(StatusError(self.status));
        }
        Ok(self.predictions.iter().map(|p| p.value).collect())
    }
}

/// # Panics
///
/// If `expected_count == 0`.
pub fn parse_predictions(raw: &str, expected_first: u32, expected_count: usize) -> PredictionSet {
    assert!(expected_count >= 1, "expected_count must be at least 1");
    let mut found: BTreeMap<u32, FramePrediction> = BTreeMap::new();
    for line in raw.lines() {
        if let Some(pred) = parse_frame_line(line) {
            found.insert(pred.frame_number, pred);
        }
    }

    let parsed_frames: Vec<u32> = found.keys().copied().collect();
    let expected_range =
        (0..expected_count).map(|i| u64::from(expected_first) + i as u64);
    let status = if found.is_empty() {
        ResponseStatus::Empty
    } else if found.len() == expected_count
        && parsed_frames
            .iter()
            .map(|&n| u64::from(n))
            .eq(expected_range)
    {
        ResponseStatus::Ok
    } else {
        ResponseStatus::Mismatch
    };

    let predictions = if status == ResponseStatus::Ok {
        found.into_values().collect()
    } else {
        Vec::new()
    };
    PredictionSet {
        status,
        predictions,
        expected_first,
        expected_count,
        parsed_frames,
        raw_text: raw.to_string(),
    }
}

/// Renders one line in the requested response format.
pub fn format_response_line(frame_number: u32, description: &str, value: f64) -> String {
    format!("Frame {frame_number}: Description: {description}, Task Completion Percentages: {value}%")
}

const LEADING_NOISE: &[char] = &[' ', '\t', '*', '_', '#', '-', '>', '`', '|', '+', '•'];
const MARKUP: &[char] = &[' ', '\t', '*', '_', '`'];

fn parse_frame_line(line: &str) -> Option<FramePrediction> {
    let line = line.trim_start_matches(LEADING_NOISE);
    let head = line.get(..5)?;
    if !head.eq_ignore_ascii_case("frame") {
        return None;
    }
    let after_word = &line[5..];
    let digits_start = after_word.trim_start_matches([' ', '\t']);
    if digits_start.len() == after_word.len() {
        return None;
    }
    let digit_len = digits_start.bytes().take_while(u8::is_ascii_digit).count();
    if digit_len == 0 {
        return None;
    }
    let frame_number: u32 = digits_start[..digit_len].parse().ok()?;
    let rest = &digits_start[digit_len..];

    let (value, value_start) = last_percent_value(rest)?;
    Some(FramePrediction {
        frame_number,
        description: extract_description(&rest[..value_start]),
        value,
    })
}

/// Finds the last qualifying percentage in `text`; returns it with its byte offset.
fn last_percent_value(text: &str) -> Option<(f64, usize)> {
    let bytes = text.as_bytes();
    let mut best = None;
    let mut i = 0;
    while i < bytes.len() {
        let starts_token = bytes[i].is_ascii_digit()
            && (i == 0 || !(bytes[i - 1].is_ascii_digit() || matches!(bytes[i - 1], b'.' | b',')));
        if !starts_token {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        while end < bytes.len() {
            let b = bytes[end];
            let joins = matches!(b, b'.' | b',') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit);
            if !(b.is_ascii_digit() || joins) {
                break;
            }
            end += 1;
        }
        i = end;

        let signed = start > 0 && matches!(bytes[start - 1], b'-' | b'+');
        if signed {
            continue;
        }
        let Some(value) = parse_number(&text[start..end]) else {
            continue;
        };
        if followed_by_percent(&text[end..]) || preceded_by_label(&text[..start]) {
            best = Some((value, start));
        }
    }
    best
}

/// Accepts `123`, `12.5`, and `1,234.5` style numbers. Decimal commas such as
/// `12,5` are rejected.
fn parse_number(token: &str) -> Option<f64> {
    let (int_part, frac_part) = match token.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (token, None),
    };
    if let Some(f) = frac_part {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    if int_part.contains(',') {
        let mut groups = int_part.split(',');
        let first = groups.next()?;
        if first.is_empty() || first.len() > 3 {
            return None;
        }
        if !groups.all(|g| g.len() == 3) {
            return None;
        }
    }
    let mut cleaned = String::with_capacity(token.len());
    cleaned.extend(token.chars().filter(|&c| c != ','));
    let value: f64 = cleaned.parse().ok()?;
    value.is_finite().then_some(value)
}

fn followed_by_percent(tail: &str) -> bool {
    tail.trim_start_matches([' ', '\t']).starts_with('%')
}

fn preceded_by_label(head: &str) -> bool {
    let Some(head) = head.trim_end_matches(MARKUP).strip_suffix(':') else {
        return false;
    };
    let head = head.trim_end_matches(MARKUP);
    ends_with_ignore_case(head, "percentage") || ends_with_ignore_case(head, "percentages")
}

fn ends_with_ignore_case(haystack: &str, needle: &str) -> bool {
    haystack.len() >= needle.len()
        && haystack
            .get(haystack.len() - needle.len()..)
            .is_some_and(|tail| tail.eq_ignore_ascii_case(needle))
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    let n = needle.len();
    (0..=haystack.len().checked_sub(n)?)
        .find(|&i| haystack.get(i..i + n).is_some_and(|s| s.eq_ignore_ascii_case(needle)))
}

fn extract_description(before_value: &str) -> String {
    let text = match find_ignore_case(before_value, "description") {
        Some(at) => &before_value[at + "description".len()..],
        None => before_value,
    };
    let text = match find_ignore_case(text, "task completion") {
        Some(at) => &text[..at],
        None => text,
    };
    let text = text.trim_start_matches(|c: char| c == ':' || MARKUP.contains(&c));
    text.trim_end_matches(|c: char| c == ',' || c == ':' || MARKUP.contains(&c))
        .to_string()
}
