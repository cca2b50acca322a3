use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub body: String,
}

pub const DROPPED_SECTIONS: [&str; 8] = [
    "see also",
    "gallery",
    "bibliography",
    "references",
    "external links",
    "further reading",
    "notes",
    "cited texts",
];

pub const HABITAT_TERMS: [&str; 5] = ["habitat", "distribution", "cultivation", "ecology", "range"];

fn heading(line: &str) -> Option<(usize, &str)> {
    let t = line.trim();
    let lead = t.bytes().take_while(|&b| b == b'=').count();
    let trail = t.bytes().rev().take_while(|&b| b == b'=').count();
    if lead == 0 || trail == 0 || lead + trail >= t.len() {
        return None;
    }
    let level = lead.min(trail);
    let title = t[level..t.len() - level].trim_matches('=').trim();
    Some((level, title))
}

fn is_dropped(title: &str) -> bool {
    let lower = title.to_lowercase();
    DROPPED_SECTIONS.contains(&lower.as_str())
}

/// Splits plain text into level-2 sections. Deeper headings are folded into
/// the enclosing section (their heading lines vanish, their text stays)
/// unless their own title is on the drop list.
pub fn split_sections(text: &str) -> Vec<Section> {
    let mut sections: Vec<(String, Vec<&str>)> = vec![(String::new(), Vec::new())];
    let mut skip_below: Option<usize> = None;
    for line in text.lines() {
        if let Some((level, title)) = heading(line) {
            if skip_below.is_some_and(|l| level > l) {
                continue;
            }
            skip_below = None;
            if level <= 2 {
                sections.push((title.to_string(), Vec::new()));
            }
            if is_dropped(title) {
                skip_below = Some(level);
            }
            continue;
        }
        if skip_below.is_none() {
            sections.last_mut().expect("non-empty").1.push(line);
        }
    }
    sections
        .into_iter()
        .enumerate()
        .filter(|(i, (title, body))| {
            !is_dropped(title) && !(*i == 0 && body.iter().all(|l| l.trim().is_empty()))
        })
        .map(|(_, (title, body))| Section {
            title,
            body: body.join("\n").trim().to_string(),
        })
        .collect()
}

pub fn is_habitat_title(title: &str) -> bool {
    let lower = title.to_lowercase();
    HABITAT_TERMS.iter().any(|t| lower.contains(t))
}

pub fn select_habitat_sections(sections: &[Section]) -> String {
    sections
        .iter()
        .filter(|s| is_habitat_title(&s.title))
        .map(|s| s.body.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titles(s: &[Section]) -> Vec<&str> {
        s.iter().map(|s| s.title.as_str()).collect()
    }

    #[test]
    fn see_also_is_dropped() {
        let s = split_sections("Lead.\n== Habitat ==\nWet.\n== See also ==\nOther.");
        assert_eq!(titles(&s), ["", "Habitat"]);
        assert_eq!(s[1].body, "Wet.");
    }

    #[test]
    fn no_headings() {
        let s = split_sections("Just text.\nMore.");
        assert_eq!(s, vec![Section { title: String::new(), body: "Just text.\nMore.".into() }]);
    }

    #[test]
    fn survivors_keep_order() {
        let s = split_sections("== B ==\nb\n== REFERENCES ==\nr\n== A ==\na");
        assert_eq!(titles(&s), ["B", "A"]);
    }

    #[test]
    fn subsections_fold_into_parent() {
        let s = split_sections("== Ecology ==\ne\n=== Pollination ===\np\n=== Notes ===\nn\n==== x ====\nx\n=== Soil ===\ns");
        assert_eq!(titles(&s), ["Ecology"]);
        assert_eq!(s[0].body, "e\np\ns");
    }

    #[test]
    fn habitat_selection() {
        assert!(is_habitat_title("Distribution and habitat"));
        assert!(is_habitat_title("Geographic range"));
        assert!(is_habitat_title("ECOLOGY"));
        assert!(!is_habitat_title("Taxonomy"));
        let s = split_sections("== Taxonomy ==\nt\n== Range ==\nr\n== Cultivation ==\nc");
        assert_eq!(select_habitat_sections(&s), "r\nc");
    }

    #[test]
    fn malformed_heading_is_text() {
        assert_eq!(heading("=="), None);
        assert_eq!(heading("a == b =="), None);
        assert_eq!(heading("== T =="), Some((2, "T")));
        assert_eq!(heading("=== T =="), Some((2, "T")));
    }
}
