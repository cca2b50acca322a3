//! Reduction of wikitext to the plain text used for sentence extraction.
//!
//! Only the subset of MediaWiki syntax that appears in species articles is
//! handled. Unbalanced constructs swallow the rest of the input.

/// Byte offset just past the delimiter closing the construct opened before
/// `from`, honoring nesting. `None` when the construct is never closed.
pub(crate) fn find_close(s: &str, from: usize, open: &str, close: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 1usize;
    let mut i = from;
    while i < bytes.len() {
        if s[i..].starts_with(open) {
            depth += 1;
            i += open.len();
        } else if s[i..].starts_with(close) {
            depth -= 1;
            i += close.len();
            if depth == 0 {
                return Some(i);
            }
        } else {
            i = next_boundary(s, i);
        }
    }
    None
}

fn next_boundary(s: &str, i: usize) -> usize {
    let mut j = i + 1;
    while j < s.len() && !s.is_char_boundary(j) {
        j += 1;
    }
    j
}

fn remove_nested(s: &str, open: &str, close: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        if s[i..].starts_with(open) {
            match find_close(s, i + open.len(), open, close) {
                Some(end) => i = end,
                None => break,
            }
        } else {
            let j = next_boundary(s, i);
            out.push_str(&s[i..j]);
            i = j;
        }
    }
    out
}

fn remove_comments(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

fn remove_refs(s: &str) -> String {
    let lower = s.to_ascii_lowercase();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while let Some(off) = lower[i..].find("<ref") {
        let start = i + off;
        let after = lower.as_bytes().get(start + 4).copied();
        if !matches!(after, Some(b'>' | b'/' | b' ' | b'\t' | b'\n')) {
            out.push_str(&s[i..start + 4]);
            i = start + 4;
            continue;
        }
        out.push_str(&s[i..start]);
        let Some(gt) = lower[start..].find('>') else {
            return out;
        };
        let open_end = start + gt + 1;
        if lower.as_bytes()[open_end - 2] == b'/' {
            i = open_end;
            continue;
        }
        match lower[open_end..].find("</ref") {
            Some(c) => {
                let close = open_end + c;
                match lower[close..].find('>') {
                    Some(g) => i = close + g + 1,
                    None => return out,
                }
            }
            None => return out,
        }
    }
    out.push_str(&s[i..]);
    out
}

/// Splits at `|` characters that are not nested inside links or templates.
pub(crate) fn split_top_level_pipes(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with("[[") || rest.starts_with("{{") {
            depth += 1;
            i += 2;
        } else if (rest.starts_with("]]") || rest.starts_with("}}")) && depth > 0 {
            depth -= 1;
            i += 2;
        } else if rest.starts_with('|') && depth == 0 {
            parts.push(&s[start..i]);
            i += 1;
            start = i;
        } else {
            i = next_boundary(s, i);
        }
    }
    parts.push(&s[start..]);
    parts
}

const DROPPED_NAMESPACES: [&str; 3] = ["file", "image", "category"];

fn rewrite_links(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        if !s[i..].starts_with("[[") {
            let j = next_boundary(s, i);
            out.push_str(&s[i..j]);
            i = j;
            continue;
        }
        let (inner, next) = match find_close(s, i + 2, "[[", "]]") {
            Some(end) => (&s[i + 2..end - 2], end),
            None => (&s[i + 2..], s.len()),
        };
        i = next;
        let namespace = inner
            .split_once(':')
            .map(|(ns, _)| ns.trim().to_ascii_lowercase());
        if namespace.is_some_and(|ns| DROPPED_NAMESPACES.contains(&ns.as_str())) {
            continue;
        }
        let parts = split_top_level_pipes(inner);
        let label = match parts.last() {
            Some(l) if parts.len() > 1 && !l.trim().is_empty() => l,
            _ => parts[0],
        };
        out.push_str(&rewrite_links(label));
    }
    out
}

const URL_SCHEMES: [&str; 4] = ["http://", "https://", "ftp://", "//"];

fn rewrite_external_links(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with('[') && URL_SCHEMES.iter().any(|p| rest[1..].starts_with(p)) {
            let end = rest.find(']').unwrap_or(rest.len());
            let inner = &rest[1..end];
            if let Some((_, label)) = inner.split_once(char::is_whitespace) {
                out.push_str(label.trim());
            }
            i += (end + 1).min(rest.len());
        } else {
            let j = next_boundary(s, i);
            out.push_str(&s[i..j]);
            i = j;
        }
    }
    out
}

fn remove_html_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if let Some(tag) = rest.strip_prefix('<') {
            let name = tag.strip_prefix('/').unwrap_or(tag);
            if name.starts_with(|c: char| c.is_ascii_alphabetic()) {
                if let Some(gt) = rest.find('>') {
                    if !rest[1..gt].contains('<') {
                        i += gt + 1;
                        continue;
                    }
                }
            }
        }
        let j = next_boundary(s, i);
        out.push_str(&s[i..j]);
        i = j;
    }
    out
}

const ENTITIES: [(&str, &str); 8] = [
    ("&nbsp;", " "),
    ("&ndash;", "-"),
    ("&mdash;", "-"),
    ("&quot;", "\""),
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&#39;", "'"),
    ("&amp;", "&"),
];

fn decode_entities(s: &str) -> String {
    ENTITIES
        .iter()
        .fold(s.to_string(), |acc, (from, to)| acc.replace(from, to))
}

fn remove_magic_words(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(start) = rest.find("__") {
        let tail = &rest[start + 2..];
        let word_len = tail
            .find(|c: char| !c.is_ascii_uppercase())
            .unwrap_or(tail.len());
        if word_len > 0 && tail[word_len..].starts_with("__") {
            out.push_str(&rest[..start]);
            rest = &tail[word_len + 2..];
        } else {
            out.push_str(&rest[..start + 2]);
            rest = tail;
        }
    }
    out.push_str(rest);
    out
}

fn normalize_whitespace(s: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for raw in s.lines() {
        let line = raw.trim_start_matches(['*', '#', ':', ';']);
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() && lines.last().is_none_or(|l| l.is_empty()) {
            continue;
        }
        lines.push(collapsed);
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Converts wikitext to plain text, keeping line structure and headings.
pub fn strip_markup(wikitext: &str) -> String {
    let s = remove_comments(wikitext);
    let s = remove_refs(&s);
    let s = remove_nested(&s, "{{", "}}");
    let s = remove_nested(&s, "{|", "|}");
    let s = rewrite_links(&s);
    let s = rewrite_external_links(&s);
    let s = s.replace("'''", "").replace("''", "");
    let s = remove_html_tags(&s);
    let s = decode_entities(&s);
    let s = remove_magic_words(&s);
    normalize_whitespace(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piped_and_plain_links() {
        assert_eq!(strip_markup("grows in [[meadow|meadows]]"), "grows in meadows");
        assert_eq!(strip_markup("in [[Europe]] and [[Asia]]n"), "in Europe and Asian");
        assert_eq!(strip_markup("[[Alps|]]"), "Alps");
    }

    #[test]
    fn refs_are_removed_with_content() {
        assert_eq!(strip_markup("text<ref>cite</ref> more"), "text more");
        assert_eq!(strip_markup("a<ref name=\"x\" /> b"), "a b");
        assert_eq!(strip_markup("a<REF name=x>y</REF> b"), "a b");
        assert_eq!(strip_markup("a <reference> b"), "a b");
    }

    #[test]
    fn nested_template_inside_ref_inside_link() {
        let s = "grows on [[scree|rocky scree<ref>{{cite|title={{lang|de|Geröll}}}}</ref>]] slopes";
        assert_eq!(strip_markup(s), "grows on rocky scree slopes");
    }

    #[test]
    fn templates_tables_comments() {
        assert_eq!(strip_markup("a {{x|{{y}}}} b"), "a b");
        assert_eq!(strip_markup("a <!-- hidden --> b"), "a b");
        assert_eq!(strip_markup("x\n{| class=t\n|-\n| {{a}} || b\n|}\ny"), "x\n\ny");
    }

    #[test]
    fn file_and_category_links_dropped() {
        let s = "[[File:a.jpg|thumb|A [[meadow]] view]]Text [[Category:Plants]]";
        assert_eq!(strip_markup(s), "Text");
        assert_eq!(strip_markup("[[image:b.png]]x"), "x");
    }

    #[test]
    fn external_links_keep_label() {
        assert_eq!(strip_markup("see [https://example.org the site] now"), "see the site now");
        assert_eq!(strip_markup("see [http://example.org] now"), "see now");
    }

    #[test]
    fn emphasis_tags_entities() {
        assert_eq!(strip_markup("'''Arnica''' is ''rare''"), "Arnica is rare");
        assert_eq!(strip_markup("a<br/>b <small>c</small>"), "ab c");
        assert_eq!(strip_markup("1&nbsp;m &amp; 2 < 3"), "1 m & 2 < 3");
        assert_eq!(strip_markup("__NOTOC__x __init__"), "x __init__");
    }

    #[test]
    fn unbalanced_markup_swallows_rest() {
        assert_eq!(strip_markup("keep {{open | never closed"), "keep");
        assert_eq!(strip_markup("keep<ref>dangling"), "keep");
        assert_eq!(strip_markup("keep <!-- open"), "keep");
        assert_eq!(strip_markup("see [[meadow"), "see meadow");
    }

    #[test]
    fn whitespace_and_lines() {
        let s = "  == Habitat ==  \n\n\n* grows   in\tfens\n\n";
        assert_eq!(strip_markup(s), "== Habitat ==\n\ngrows in fens");
    }

    #[test]
    fn non_ascii_passes_through() {
        assert_eq!(strip_markup("Geröll [[Zürich|Zürichsee]] – ok"), "Geröll Zürichsee – ok");
    }
}
