//! Rule-based lexicon sentiment (VADER 3.3.2 rules) and the inverted
//! distress index used as a baseline.
//!
//! The engine reproduces the reference implementation's behavior, quirks
//! included, so baseline numbers are comparable. The one intentional
//! difference: text with no tokens scores `neu = 1` instead of all zeros.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const REFERENCE_LEXICON: &str = include_str!("../data/vader_lexicon.txt");
pub const REFERENCE_EMOJI: &str = include_str!("../data/emoji_utf8_lexicon.txt");
pub const REFERENCE_RULES: &str = include_str!("../data/vader_rules.json");
pub const REFERENCE_LEXICON_SHA256: &str = "1ec9c6e9ee19aade328f8beb393a6afa71a5bb3acf7d3cc22d4ef568df374bf5";

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Rule constants and word lists shipped alongside the lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentRules {
    pub id: String,
    pub booster_increment: f64,
    pub caps_increment: f64,
    pub negation_scalar: f64,
    pub normalization_alpha: f64,
    pub negations: Vec<String>,
    pub boosters: HashMap<String, f64>,
    pub special_cases: HashMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SentimentLexicon {
    pub id: String,
    /// SHA-256 of the lexicon file as loaded.
    pub checksum: String,
    pub entries: HashMap<String, f64>,
    pub boosters: HashMap<String, f64>,
    pub negations: HashSet<String>,
    pub special_cases: HashMap<String, f64>,
    pub emojis: HashMap<char, String>,
    pub caps_increment: f64,
    pub negation_scalar: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub neg: f64,
    pub neu: f64,
    pub pos: f64,
    pub compound: f64,
    pub distress: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Higher means more negative affect.
pub fn distress_index(result: &SentimentResult) -> f64 {
    -result.compound
}

fn parse_lexicon(text: &str) -> Result<HashMap<String, f64>> {
    let mut entries = HashMap::new();
    for (i, line) in text.trim_end_matches('\n').split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.trim().split('\t');
        let token = cols.next().unwrap_or_default();
        let value = cols
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidInput(format!("lexicon line {}: expected token<TAB>valence", i + 1)))?;
        // Lookups are lowercase, so mixed-case entries can never match.
        if token.to_lowercase() == token {
            entries.insert(token.to_string(), value);
        }
    }
    Ok(entries)
}

fn parse_emoji(text: &str) -> HashMap<char, String> {
    let mut out = HashMap::new();
    for line in text.trim_end_matches('\n').split('\n') {
        let mut cols = line.trim().split('\t');
        let (Some(key), Some(desc)) = (cols.next(), cols.next()) else {
            continue;
        };
        let mut chars = key.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            out.insert(c, desc.to_string());
        }
    }
    out
}

impl SentimentLexicon {
    pub fn from_parts(lexicon: &str, rules: SentimentRules, emoji: Option<&str>) -> Result<Self> {
        let entries = parse_lexicon(lexicon)?;
        if entries.is_empty() {
            return Err(Error::LexiconMissing("lexicon has no entries".into()));
        }
        Ok(SentimentLexicon {
            id: rules.id,
            checksum: sha256_hex(lexicon.as_bytes()),
            entries,
            boosters: rules.boosters,
            negations: rules.negations.into_iter().collect(),
            special_cases: rules.special_cases,
            emojis: emoji.map(parse_emoji).unwrap_or_default(),
            caps_increment: rules.caps_increment,
            negation_scalar: rules.negation_scalar,
            alpha: rules.normalization_alpha,
        })
    }

    /// The bundled VADER 3.3.2 data, checksum-verified.
    pub fn reference() -> Self {
        let rules: SentimentRules = serde_json::from_str(REFERENCE_RULES).expect("bundled rules parse");
        let lex = Self::from_parts(REFERENCE_LEXICON, rules, Some(REFERENCE_EMOJI)).expect("bundled lexicon parses");
        assert_eq!(lex.checksum, REFERENCE_LEXICON_SHA256, "bundled lexicon altered");
        lex
    }

    pub fn load(lexicon_path: &Path, rules_path: &Path, emoji_path: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::LexiconMissing(p.display().to_string()),
                _ => Error::io(p, e),
            })
        };
        let lexicon = read(lexicon_path)?;
        let rules: SentimentRules = serde_json::from_str(&read(rules_path)?)?;
        let emoji = emoji_path.map(read).transpose()?;
        Self::from_parts(&lexicon, rules, emoji.as_deref())
    }

    /// Like [`SentimentLexicon::load`], but rejects a lexicon whose SHA-256
    /// differs from `expected`.
    pub fn load_verified(
        lexicon_path: &Path,
        rules_path: &Path,
        emoji_path: Option<&Path>,
        expected: &str,
    ) -> Result<Self> {
        let lex = Self::load(lexicon_path, rules_path, emoji_path)?;
        if !lex.checksum.eq_ignore_ascii_case(expected) {
            return Err(Error::LexiconChecksum {
                path: lexicon_path.display().to_string(),
                expected: expected.to_string(),
                found: lex.checksum,
            });
        }
        Ok(lex)
    }

    fn in_lexicon(&self, lower: &str) -> bool {
        self.entries.contains_key(lower)
    }

    fn is_negated(&self, word: &str) -> bool {
        self.negations.contains(word) || word.contains("n't")
    }

    fn scalar_inc_dec(&self, word: &str, valence: f64, cap_diff: bool) -> f64 {
        let Some(&b) = self.boosters.get(&word.to_lowercase()) else {
            return 0.0;
        };
        let mut scalar = if valence < 0.0 { -b } else { b };
        if is_upper(word) && cap_diff {
            if valence > 0.0 {
                scalar += self.caps_increment;
            } else {
                scalar -= self.caps_increment;
            }
        }
        scalar
    }

    pub fn analyze(&self, text: &str) -> SentimentResult {
        let mut expanded = String::with_capacity(text.len());
        let mut prev_space = true;
        for c in text.chars() {
            if let Some(desc) = self.emojis.get(&c) {
                if !prev_space {
                    expanded.push(' ');
                }
                expanded.push_str(desc);
                prev_space = false;
            } else {
                expanded.push(c);
                prev_space = c == ' ';
            }
        }
        let text = expanded.trim_matches(py_space);
        let words: Vec<&str> = text
            .split(py_space)
            .filter(|w| !w.is_empty())
            .map(strip_punc_if_word)
            .collect();
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let cap_diff = allcap_differential(&words);

        let mut sentiments = Vec::with_capacity(words.len());
        for (i, item) in words.iter().enumerate() {
            if self.boosters.contains_key(&lower[i])
                || (i + 1 < words.len() && lower[i] == "kind" && lower[i + 1] == "of")
            {
                sentiments.push(0.0);
                continue;
            }
            sentiments.push(self.valence(item, i, &words, &lower, cap_diff));
        }
        but_check(&lower, &mut sentiments);
        self.score_valence(&sentiments, text)
    }

    fn valence(&self, item: &str, i: usize, words: &[&str], lower: &[String], cap_diff: bool) -> f64 {
        let Some(&base) = self.entries.get(&lower[i]) else {
            return 0.0;
        };
        let n = self.negation_scalar;
        let mut valence = base;
        if lower[i] == "no" && i + 1 != words.len() && self.in_lexicon(&lower[i + 1]) {
            valence = 0.0;
        }
        if (i > 0 && lower[i - 1] == "no")
            || (i > 1 && lower[i - 2] == "no")
            || (i > 2 && lower[i - 3] == "no" && (lower[i - 1] == "or" || lower[i - 1] == "nor"))
        {
            valence = base * n;
        }
        if is_upper(item) && cap_diff {
            if valence > 0.0 {
                valence += self.caps_increment;
            } else {
                valence -= self.caps_increment;
            }
        }
        for start_i in 0..3 {
            if i > start_i && !self.in_lexicon(&lower[i - (start_i + 1)]) {
                let mut s = self.scalar_inc_dec(words[i - (start_i + 1)], valence, cap_diff);
                if start_i == 1 && s != 0.0 {
                    s *= 0.95;
                }
                if start_i == 2 && s != 0.0 {
                    s *= 0.9;
                }
                valence += s;
                valence = self.negation_check(valence, lower, start_i, i);
                if start_i == 2 {
                    valence = self.special_idioms_check(valence, lower, i);
                }
            }
        }
        self.least_check(valence, lower, i)
    }

    fn negation_check(&self, valence: f64, w: &[String], start_i: usize, i: usize) -> f64 {
        let n = self.negation_scalar;
        match start_i {
            0 => {
                if self.is_negated(&w[i - 1]) {
                    return valence * n;
                }
            }
            1 => {
                if w[i - 2] == "never" && (w[i - 1] == "so" || w[i - 1] == "this") {
                    return valence * 1.25;
                } else if w[i - 2] == "without" && w[i - 1] == "doubt" {
                    return valence;
                } else if self.is_negated(&w[i - 2]) {
                    return valence * n;
                }
            }
            _ => {
                // Operator precedence follows the reference: the second
                // alternative does not require "never".
                if (w[i - 3] == "never" && (w[i - 2] == "so" || w[i - 2] == "this"))
                    || (w[i - 1] == "so" || w[i - 1] == "this")
                {
                    return valence * 1.25;
                } else if w[i - 3] == "without" && (w[i - 2] == "doubt" || w[i - 1] == "doubt") {
                    return valence;
                } else if self.is_negated(&w[i - 3]) {
                    return valence * n;
                }
            }
        }
        valence
    }

    fn special_idioms_check(&self, mut valence: f64, w: &[String], i: usize) -> f64 {
        let onezero = format!("{} {}", w[i - 1], w[i]);
        let twoonezero = format!("{} {} {}", w[i - 2], w[i - 1], w[i]);
        let twoone = format!("{} {}", w[i - 2], w[i - 1]);
        let threetwoone = format!("{} {} {}", w[i - 3], w[i - 2], w[i - 1]);
        let threetwo = format!("{} {}", w[i - 3], w[i - 2]);
        for seq in [&onezero, &twoonezero, &twoone, &threetwoone, &threetwo] {
            if let Some(&v) = self.special_cases.get(seq.as_str()) {
                valence = v;
                break;
            }
        }
        if w.len() - 1 > i {
            if let Some(&v) = self.special_cases.get(&format!("{} {}", w[i], w[i + 1])) {
                valence = v;
            }
        }
        if w.len() - 1 > i + 1 {
            if let Some(&v) = self.special_cases.get(&format!("{} {} {}", w[i], w[i + 1], w[i + 2])) {
                valence = v;
            }
        }
        for gram in [&threetwoone, &threetwo, &twoone] {
            if let Some(&b) = self.boosters.get(gram.as_str()) {
                valence += b;
            }
        }
        valence
    }

    fn least_check(&self, valence: f64, w: &[String], i: usize) -> f64 {
        let n = self.negation_scalar;
        if i > 1 && !self.in_lexicon(&w[i - 1]) && w[i - 1] == "least" {
            if w[i - 2] != "at" && w[i - 2] != "very" {
                return valence * n;
            }
        } else if i > 0 && !self.in_lexicon(&w[i - 1]) && w[i - 1] == "least" {
            return valence * n;
        }
        valence
    }

    fn score_valence(&self, sentiments: &[f64], text: &str) -> SentimentResult {
        if sentiments.is_empty() {
            return SentimentResult {
                neg: 0.0,
                neu: 1.0,
                pos: 0.0,
                compound: 0.0,
                distress: 0.0,
            };
        }
        let punct = amplify_ep(text) + amplify_qm(text);
        let mut sum_s: f64 = sentiments.iter().fold(0.0, |a, b| a + b);
        if sum_s > 0.0 {
            sum_s += punct;
        } else if sum_s < 0.0 {
            sum_s -= punct;
        }
        let compound = (sum_s / (sum_s * sum_s + self.alpha).sqrt()).clamp(-1.0, 1.0);

        let (mut pos_sum, mut neg_sum, mut neu_count) = (0.0f64, 0.0f64, 0usize);
        for &s in sentiments {
            if s > 0.0 {
                pos_sum += s + 1.0;
            }
            if s < 0.0 {
                neg_sum += s - 1.0;
            }
            if s == 0.0 {
                neu_count += 1;
            }
        }
        if pos_sum > neg_sum.abs() {
            pos_sum += punct;
        } else if pos_sum < neg_sum.abs() {
            neg_sum -= punct;
        }
        let total = pos_sum + neg_sum.abs() + neu_count as f64;
        SentimentResult {
            neg: (neg_sum / total).abs(),
            neu: (neu_count as f64 / total).abs(),
            pos: (pos_sum / total).abs(),
            compound,
            distress: -compound,
        }
    }
}

/// Whitespace as understood by Python's `str.split()`.
fn py_space(c: char) -> bool {
    c.is_whitespace() || ('\x1c'..='\x1f').contains(&c)
}

fn strip_punc_if_word(token: &str) -> &str {
    let stripped = token.trim_matches(|c| PUNCTUATION.contains(c));
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

/// Python's `str.isupper`: some cased character and no lowercase ones.
fn is_upper(word: &str) -> bool {
    word.chars().any(char::is_uppercase) && !word.chars().any(char::is_lowercase)
}

fn allcap_differential(words: &[&str]) -> bool {
    let caps = words.iter().filter(|w| is_upper(w)).count();
    let diff = words.len() - caps;
    0 < diff && diff < words.len()
}

/// Halves sentiment before the first "but" and boosts it after. Positions are
/// located by value, as the reference does, so equal scores can be rescaled
/// more than once.
fn but_check(lower: &[String], sentiments: &mut [f64]) {
    let Some(bi) = lower.iter().position(|w| w == "but") else {
        return;
    };
    for j in 0..sentiments.len() {
        let s = sentiments[j];
        let si = sentiments.iter().position(|&x| x == s).expect("value present");
        if si < bi {
            sentiments[si] = s * 0.5;
        } else if si > bi {
            sentiments[si] = s * 1.5;
        }
    }
}

fn amplify_ep(text: &str) -> f64 {
    text.matches('!').count().min(4) as f64 * 0.292
}

fn amplify_qm(text: &str) -> f64 {
    match text.matches('?').count() {
        n @ 2..=3 => n as f64 * 0.18,
        n if n > 3 => 0.96,
        _ => 0.0,
    }
}

/// Scores `text` with `lexicon`.
pub fn analyze(text: &str, lexicon: &SentimentLexicon) -> Result<SentimentResult> {
    if lexicon.entries.is_empty() {
        return Err(Error::LexiconMissing(lexicon.id.clone()));
    }
    Ok(lexicon.analyze(text))
}
