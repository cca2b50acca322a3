pub const ABBREVIATIONS: [&str; 8] = ["sp.", "subsp.", "var.", "cf.", "e.g.", "i.e.", "ca.", "etc."];

pub const MIN_SENTENCE_WORDS: usize = 3;

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}', '\u{ab}'];

/// Capital letters each followed by a dot, as in "S." or "J.R.".
fn is_initials(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    !chars.is_empty()
        && chars.len().is_multiple_of(2)
        && chars
            .chunks(2)
            .all(|p| p[0].is_uppercase() && p[1] == '.')
}

fn is_protected(chars: &[char], dot: usize) -> bool {
    let start = chars[..dot]
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(0, |p| p + 1);
    let word: String = chars[start..=dot].iter().collect();
    let word = word.trim_start_matches(OPENERS);
    ABBREVIATIONS.contains(&word.to_lowercase().as_str()) || is_initials(word)
}

/// Index of the first character of the next sentence if a boundary follows
/// the terminator at `i`.
fn boundary_after(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i + 1;
    while j < chars.len() && CLOSERS.contains(&chars[j]) {
        j += 1;
    }
    let ws = j;
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    if j == ws {
        return None;
    }
    let next = j;
    while j < chars.len() && OPENERS.contains(&chars[j]) {
        j += 1;
    }
    let c = *chars.get(j)?;
    (c.is_uppercase() || c.is_ascii_digit()).then_some(next)
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = line.chars().collect();
    let mut start = 0;
    for i in 0..chars.len() {
        if i < start || !matches!(chars[i], '.' | '!' | '?') {
            continue;
        }
        if chars[i] == '.' && is_protected(&chars, i) {
            continue;
        }
        if let Some(next) = boundary_after(&chars, i) {
            push(chars[start..next].iter().collect(), out);
            start = next;
        }
    }
    push(chars[start..].iter().collect(), out);
}

fn push(sentence: String, out: &mut Vec<String>) {
    let s = sentence.trim();
    if s.split_whitespace().count() >= MIN_SENTENCE_WORDS {
        out.push(s.to_string());
    }
}

/// Sentences of a plain-text block. Line breaks always end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        split_line(line, &mut out);
    }
    out
}
