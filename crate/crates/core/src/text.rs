//! Character-indexed text helpers: word tokens, sentence windows and spans.
//!
//! Spans are half-open ranges of `char` indices (not bytes), so they mean the
//! same thing to any consumer that indexes by Unicode scalar value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// Byte offset of every char boundary, plus the final length.
fn char_offsets(text: &str) -> Vec<usize> {
    let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offsets.push(text.len());
    offsets
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring addressed by a char span.
pub fn slice(text: &str, span: CharSpan) -> Result<&str> {
    let offsets = char_offsets(text);
    let len = offsets.len() - 1;
    if span.start > span.end || span.end > len {
        return Err(Error::SpanOutOfBounds {
            start: span.start,
            end: span.end,
            len,
        });
    }
    Ok(&text[offsets[span.start]..offsets[span.end]])
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '+' | '/')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub span: CharSpan,
    pub lower: String,
}

/// Word tokens: runs of alphanumerics, allowing `-`, `'`, `/` between
/// alphanumerics and a trailing `+` (as in "LGBTQ+").
pub fn word_tokens(text: &str) -> Vec<WordToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            if is_word_char(chars[i]) {
                i += 1;
            } else if chars[i] == '+' {
                // only as a suffix
                i += 1;
                break;
            } else if is_joiner(chars[i]) && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                i += 1;
            } else {
                break;
            }
        }
        let word: String = chars[start..i].iter().collect();
        out.push(WordToken {
            span: CharSpan::new(start, i),
            lower: word.to_lowercase(),
        });
    }
    out
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Sentence spans: maximal segments ending in a run of `.`, `!` or `?` (or the
/// end of text), trimmed of surrounding whitespace. Empty segments are dropped.
pub fn sentences(text: &str) -> Vec<CharSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < chars.len() {
        if is_terminator(chars[i]) {
            while i < chars.len() && is_terminator(chars[i]) {
                i += 1;
            }
            push_trimmed(&chars, seg_start, i, &mut out);
            seg_start = i;
        } else {
            i += 1;
        }
    }
    push_trimmed(&chars, seg_start, chars.len(), &mut out);
    out
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, out: &mut Vec<CharSpan>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        out.push(CharSpan::new(start, end));
    }
}

/// The sentence containing `span`.
pub fn sentence_window(text: &str, span: CharSpan) -> Result<CharSpan> {
    let len = char_len(text);
    if span.start > span.end || span.end > len {
        return Err(Error::SpanOutOfBounds {
            start: span.start,
            end: span.end,
            len,
        });
    }
    let all = sentences(text);
    all.iter()
        .copied()
        .find(|s| s.start <= span.start && span.start < s.end)
        .or_else(|| all.iter().copied().find(|s| s.start >= span.start))
        .or_else(|| all.last().copied())
        .ok_or(Error::SpanOutOfBounds {
            start: span.start,
            end: span.end,
            len,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_split_keeps_terminators() {
        let t = "Leaders decide. Nurses care.";
        let s: Vec<&str> = sentences(t).into_iter().map(|s| slice(t, s).unwrap()).collect();
        assert_eq!(s, vec!["Leaders decide.", "Nurses care."]);
    }

    #[test]
    fn sentence_split_terminator_runs_and_tail() {
        let t = "Really?! Yes... and then  ";
        let s: Vec<&str> = sentences(t).into_iter().map(|s| slice(t, s).unwrap()).collect();
        assert_eq!(s, vec!["Really?!", "Yes...", "and then"]);
    }

    #[test]
    fn window_of_first_word() {
        let t = "Leaders decide. Nurses care.";
        let w = sentence_window(t, CharSpan::new(0, 7)).unwrap();
        assert_eq!(slice(t, w).unwrap(), "Leaders decide.");
        let w = sentence_window(t, CharSpan::new(16, 22)).unwrap();
        assert_eq!(slice(t, w).unwrap(), "Nurses care.");
    }

    #[test]
    fn window_out_of_bounds() {
        assert!(matches!(
            sentence_window("abc", CharSpan::new(1, 9)),
            Err(Error::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn tokens_handle_joiners_and_unicode() {
        let toks: Vec<String> = word_tokens("Low-income LGBTQ+ folks, don't—café!")
            .into_iter()
            .map(|t| t.lower)
            .collect();
        assert_eq!(toks, vec!["low-income", "lgbtq+", "folks", "don't", "café"]);
    }

    #[test]
    fn slice_is_char_indexed() {
        let t = "né à Paris";
        assert_eq!(slice(t, CharSpan::new(5, 10)).unwrap(), "Paris");
    }
}
