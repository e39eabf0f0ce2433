//! Format-aware decomposition of responses into units, and odd/even halves.
//!
//! Rules per format:
//! - word formats split on commas when any comma is present, otherwise on
//!   whitespace runs;
//! - phrases split on semicolons and line breaks; without those, a phrase
//!   ends after a token carrying sentence punctuation and a new phrase starts
//!   at any later token beginning with an uppercase letter;
//! - free text splits into sentences at `.`, `!` or `?` followed by
//!   whitespace or the end of the text, except after a known abbreviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Construct, ResponseFormat};

pub const DEFAULT_ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "etc.", "Mr.", "Mrs.", "Dr.", "vs."];

const UNIT_DELIMITERS: &[char] = &[',', ';'];
const SENTENCE_END: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', ')', ']'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub participant_id: String,
    pub time_point: u8,
    pub construct: Construct,
    pub format: ResponseFormat,
    pub text: String,
}

impl RawResponse {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.participant_id.trim().is_empty() {
            out.push("participant_id is empty".to_string());
        }
        if !matches!(self.time_point, 1 | 2) {
            out.push(format!("time_point must be 1 or 2, got {}", self.time_point));
        }
        if self.text.trim().is_empty() {
            out.push("text is empty".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedResponse {
    pub source: RawResponse,
    pub units: Vec<String>,
}

impl SegmentedResponse {
    pub fn k(&self) -> usize {
        self.units.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmenter {
    pub abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Segmenter {
    pub fn with_abbreviations<I, S>(extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seg = Segmenter::default();
        for a in extra {
            let a = a.into();
            if !seg.abbreviations.contains(&a) {
                seg.abbreviations.push(a);
            }
        }
        seg
    }

    pub fn segment(&self, response: &RawResponse) -> Result<SegmentedResponse> {
        if response.text.trim().is_empty() {
            return Err(Error::InvalidInput("response text is empty".into()));
        }
        let units = self.segment_text(response.format, &response.text)?;
        Ok(SegmentedResponse {
            source: response.clone(),
            units,
        })
    }

    pub fn segment_text(&self, format: ResponseFormat, text: &str) -> Result<Vec<String>> {
        let raw = match format {
            ResponseFormat::SelectWords | ResponseFormat::WriteWords => split_words(text),
            ResponseFormat::WritePhrases => split_phrases(text),
            ResponseFormat::WriteText => self.split_sentences(text),
        };
        let units: Vec<String> = raw.into_iter().filter_map(|u| clean_unit(&u)).collect();
        if units.is_empty() {
            Err(Error::EmptyAfterSegmentation)
        } else {
            Ok(units)
        }
    }

    fn is_abbreviation(&self, word: &str) -> bool {
        let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
        self.abbreviations.iter().any(|a| a.eq_ignore_ascii_case(word))
    }

    fn split_sentences(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            if !SENTENCE_END.contains(&chars[i].1) {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < chars.len() && SENTENCE_END.contains(&chars[i].1) {
                i += 1;
            }
            let single_period = i - run_start == 1 && chars[run_start].1 == '.';
            while i < chars.len() && CLOSERS.contains(&chars[i].1) {
                i += 1;
            }
            let at_boundary = i == chars.len() || is_space(chars[i].1);
            if !at_boundary {
                continue;
            }
            let end = chars.get(i).map_or(text.len(), |c| c.0);
            if single_period {
                let word_end = chars[run_start].0 + 1;
                let word_start = text[..word_end]
                    .rfind(is_space)
                    .map_or(0, |p| p + text[p..].chars().next().map_or(1, char::len_utf8));
                if self.is_abbreviation(&text[word_start..word_end]) {
                    continue;
                }
            }
            out.push(text[start..end].to_string());
            start = end;
        }
        if start < text.len() {
            out.push(text[start..].to_string());
        }
        out
    }
}

/// Segments with the default abbreviation list.
pub fn segment(response: &RawResponse) -> Result<SegmentedResponse> {
    Segmenter::default().segment(response)
}

/// Unicode whitespace, including tabs and line breaks.
fn is_space(c: char) -> bool {
    c.is_whitespace()
}

fn clean_unit(unit: &str) -> Option<String> {
    let trimmed = unit
        .trim_matches(is_space)
        .trim_end_matches(|c: char| UNIT_DELIMITERS.contains(&c) || is_space(c));
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    }
}

fn split_words(text: &str) -> Vec<String> {
    if text.contains(',') {
        text.split(',').map(str::to_string).collect()
    } else {
        text.split(is_space)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    }
}

fn split_phrases(text: &str) -> Vec<String> {
    if text.contains([';', '\n', '\r']) {
        return text.split([';', '\n', '\r']).map(str::to_string).collect();
    }
    let mut out: Vec<Vec<&str>> = Vec::new();
    let mut prev: Option<&str> = None;
    for token in text.split(is_space).filter(|t| !t.is_empty()) {
        let starts_new = match prev {
            None => true,
            Some(p) => {
                let prev_closed = p.ends_with(SENTENCE_END);
                prev_closed || token.chars().next().is_some_and(char::is_uppercase)
            }
        };
        if starts_new {
            out.push(vec![token]);
        } else if let Some(last) = out.last_mut() {
            last.push(token);
        }
        prev = Some(token);
    }
    out.into_iter().map(|t| t.join(" ")).collect()
}

/// Splits units into odd (1st, 3rd, ...) and even (2nd, 4th, ...) positions.
pub fn odd_even_split<T: Clone>(units: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if units.len() < 2 {
        return Err(Error::TooFewUnits(units.len()));
    }
    let half_a = units.iter().step_by(2).cloned().collect();
    let half_b = units.iter().skip(1).step_by(2).cloned().collect();
    Ok((half_a, half_b))
}

/// Re-joins units into a single text using the format's delimiter.
pub fn join_units<S: AsRef<str>>(units: &[S], format: ResponseFormat) -> String {
    let sep = match format {
        ResponseFormat::SelectWords | ResponseFormat::WriteWords => ", ",
        ResponseFormat::WritePhrases => "; ",
        ResponseFormat::WriteText => " ",
    };
    units.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(sep)
}
