//! Species articles: Speciesbox detection, markup stripping, sectioning and
//! the four sentence sets.

mod markup;
mod sections;
mod sentences;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub use markup::strip_markup;
pub use sections::{is_habitat_title, select_habitat_sections, split_sections, Section, DROPPED_SECTIONS, HABITAT_TERMS};
pub use sentences::{split_sentences, ABBREVIATIONS, MIN_SENTENCE_WORDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikiArticle {
    pub binomial: String,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSets {
    pub habitat: Vec<String>,
    pub keywords: Vec<String>,
    pub random: Vec<String>,
    pub species_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextType {
    #[default]
    Habitat,
    Keywords,
    Random,
    SpeciesName,
}

impl TextType {
    pub const ALL: [TextType; 4] = [
        TextType::Habitat,
        TextType::Keywords,
        TextType::Random,
        TextType::SpeciesName,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TextType::Habitat => "habitat",
            TextType::Keywords => "keywords",
            TextType::Random => "random",
            TextType::SpeciesName => "species_name",
        }
    }
}

impl fmt::Display for TextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TextType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        TextType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown text type {s:?} (expected habitat, keywords, random or species_name)"))
    }
}

impl SentenceSets {
    pub fn get(&self, text_type: TextType) -> Vec<&str> {
        match text_type {
            TextType::Habitat => self.habitat.iter().map(String::as_str).collect(),
            TextType::Keywords => self.keywords.iter().map(String::as_str).collect(),
            TextType::Random => self.random.iter().map(String::as_str).collect(),
            TextType::SpeciesName => vec![self.species_name.as_str()],
        }
    }
}

fn find_speciesbox(page: &str) -> Option<(usize, usize)> {
    let lower = page.to_ascii_lowercase();
    let mut from = 0;
    while let Some(off) = lower[from..].find("{{") {
        let start = from + off;
        let name = lower[start + 2..].trim_start();
        if let Some(rest) = name.strip_prefix("speciesbox") {
            if rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace() || c == '|' || c == '}') {
                let end = markup::find_close(page, start + 2, "{{", "}}").unwrap_or(page.len());
                return Some((start, end));
            }
        }
        from = start + 2;
    }
    None
}

fn param_value(raw: &str) -> String {
    strip_markup(raw).split_whitespace().collect::<Vec<_>>().join(" ")
}

fn valid_genus(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(char::is_uppercase) && chars.all(|c| c.is_alphabetic() || c == '-')
}

fn valid_epithet(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_lowercase() || c == '-')
}

/// Finds a Speciesbox invocation and returns the binomial name together
/// with the page text minus the template. `None` for pages without one.
pub fn parse_speciesbox(page: &str) -> Result<Option<(String, String)>> {
    let Some((start, end)) = find_speciesbox(page) else {
        return Ok(None);
    };
    let inner_end = if page[..end].ends_with("}}") && end >= start + 4 { end - 2 } else { end };
    let inner = &page[start + 2..inner_end];
    let mut genus = None;
    let mut species = None;
    let mut taxon = None;
    for part in markup::split_top_level_pipes(inner).into_iter().skip(1) {
        let Some((key, value)) = part.split_once('=') else {
            continue;
        };
        let slot = match key.trim().to_ascii_lowercase().as_str() {
            "genus" => &mut genus,
            "species" => &mut species,
            "taxon" => &mut taxon,
            _ => continue,
        };
        *slot = Some(param_value(value));
    }
    let body = format!("{}{}", &page[..start], &page[end..]);
    if let (Some(g), Some(s)) = (&genus, &species) {
        if valid_genus(g) && valid_epithet(s) {
            return Ok(Some((format!("{g} {s}"), body)));
        }
    }
    if let Some(t) = &taxon {
        let tokens: Vec<&str> = t.split_whitespace().collect();
        if let [g, s] = tokens[..] {
            if valid_genus(g) && valid_epithet(s) {
                return Ok(Some((format!("{g} {s}"), body)));
            }
        }
    }
    Err(DataError::MalformedTemplate(format!(
        "genus={:?} species={:?} taxon={:?}",
        genus.unwrap_or_default(),
        species.unwrap_or_default(),
        taxon.unwrap_or_default()
    )))
}

/// Parses a raw page into an article, or `None` for non-species pages.
pub fn parse_article(page: &str) -> Result<Option<WikiArticle>> {
    Ok(parse_speciesbox(page)?.map(|(binomial, body)| WikiArticle {
        binomial,
        sections: split_sections(&strip_markup(&body)),
    }))
}

/// Case-insensitive whole-word keyword matcher. A match must be delimited
/// by non-alphanumeric characters or the ends of the sentence.
#[derive(Debug, Clone)]
pub struct KeywordSet {
    words: Vec<String>,
}

impl KeywordSet {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        words.sort();
        words.dedup();
        if words.is_empty() {
            return Err(DataError::InvalidConfig("keyword list is empty".into()));
        }
        Ok(KeywordSet { words })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn matches(&self, sentence: &str) -> bool {
        let lower = sentence.to_lowercase();
        self.words.iter().any(|w| {
            lower.match_indices(w.as_str()).any(|(i, _)| {
                let before = lower[..i].chars().next_back();
                let after = lower[i + w.len()..].chars().next();
                !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
            })
        })
    }

    pub fn filter<'a>(&self, sentences: &'a [String]) -> Vec<&'a String> {
        sentences.iter().filter(|s| self.matches(s)).collect()
    }
}

pub fn extract_text_sets(article: &WikiArticle, keywords: &KeywordSet) -> Result<SentenceSets> {
    let mut habitat = Vec::new();
    let mut random = Vec::new();
    for section in &article.sections {
        let sentences = split_sentences(&section.body);
        if is_habitat_title(&section.title) {
            habitat.extend(sentences.iter().cloned());
        }
        random.extend(sentences);
    }
    if habitat.is_empty() {
        return Err(DataError::EmptyHabitat(article.binomial.clone()));
    }
    let keywords = keywords.filter(&random).into_iter().cloned().collect();
    Ok(SentenceSets {
        habitat,
        keywords,
        random,
        species_name: article.binomial.clone(),
    })
}
