use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wincel_datapipe::wiki::{extract_text_sets, parse_article, split_sentences, strip_markup, KeywordSet, MIN_SENTENCE_WORDS};
use wincel_datapipe::DEFAULT_KEYWORDS;

const TITLES: [&str; 10] = [
    "Description",
    "Distribution and habitat",
    "Taxonomy",
    "Ecology",
    "See also",
    "Geographic range",
    "Cultivation",
    "Uses",
    "References",
    "Gallery",
];

const WORDS: [&str; 16] = [
    "grows", "in", "meadows", "forest", "alpine", "soils", "calcareous", "the", "plant", "is", "found", "near",
    "rivers", "rocky", "slopes", "water",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..9);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    if rng.random_bool(0.3) {
        words.insert(0, "[[Alpine meadow|Meadows]]".into());
    }
    if rng.random_bool(0.2) {
        words.push("<ref>{{cite web|title=x}}</ref>".into());
    }
    let mut s = words.join(" ");
    let first = s.remove(0).to_ascii_uppercase();
    format!("{first}{s}.")
}

fn genus(i: usize) -> String {
    format!("Genus{}{}", (b'a' + (i / 26) as u8) as char, (b'a' + (i % 26) as u8) as char)
}

fn article(rng: &mut ChaCha8Rng, i: usize) -> String {
    let mut page = format!("{{{{Speciesbox\n| genus = {}\n| species = epithet\n}}}}\nLead text of the article here.\n", genus(i));
    let habitat_at = rng.random_range(0..4);
    for s in 0..rng.random_range(1..5) {
        let title = if s == habitat_at { "Habitat" } else { TITLES.choose(rng).unwrap() };
        page.push_str(&format!("== {title} ==\n"));
        if rng.random_bool(0.3) {
            page.push_str("=== Subsection ===\n");
        }
        for _ in 0..rng.random_range(0..5) {
            page.push_str(&sentence(rng));
            page.push(' ');
        }
        page.push('\n');
    }
    page
}

#[test]
fn subset_chain_holds_on_generated_articles() {
    let keywords = KeywordSet::new(DEFAULT_KEYWORDS.lines()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut checked = 0;
    for i in 0..50 {
        let page = article(&mut rng, i);
        let article = parse_article(&page).unwrap().expect("speciesbox");
        assert_eq!(article.binomial, format!("{} epithet", genus(i)));
        let Ok(sets) = extract_text_sets(&article, &keywords) else {
            continue;
        };
        checked += 1;
        assert!(sets.habitat.iter().all(|s| sets.random.contains(s)), "{page}");
        assert!(sets.keywords.iter().all(|s| sets.random.contains(s)));
        assert!(sets.keywords.iter().all(|s| keywords.matches(s)));
        assert!(sets.random.iter().filter(|s| keywords.matches(s)).eq(sets.keywords.iter()));
        for s in &sets.random {
            assert!(s.split_whitespace().count() >= MIN_SENTENCE_WORDS);
            assert!(!s.contains("[[") && !s.contains("<ref") && !s.contains("{{"), "{s}");
        }
    }
    assert!(checked >= 25, "only {checked} articles had habitat sentences");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn strip_markup_is_total(text in r"[\[\]{}|<>!=\-'&;#:*a-zA-Zé ,.\n]{0,200}") {
        let out = strip_markup(&text);
        prop_assert!(!out.contains("\n\n\n"));
        let _ = split_sentences(&out);
    }

    #[test]
    fn strip_markup_handles_arbitrary_unicode(text in any::<String>()) {
        let _ = split_sentences(&strip_markup(&text));
    }

    #[test]
    fn sentences_are_trimmed_and_long_enough(text in r"([A-Z][a-z]{0,6}( [a-z0-9]{1,6}){0,6}[.!?] ){0,8}") {
        for s in split_sentences(&text) {
            prop_assert_eq!(s.trim(), s.as_str());
            prop_assert!(s.split_whitespace().count() >= MIN_SENTENCE_WORDS);
        }
    }
}
