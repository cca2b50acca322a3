use std::fs;
use std::path::{Path, PathBuf};

use wincel_core::dataset::Split;
use wincel_datapipe::pipeline::{MANIFEST_FILE, SENTENCES_FILE, STATS_FILE};
use wincel_datapipe::{run, write_outputs, PipelineConfig, PipelineInputs};

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/fixtures/golden")
}

fn inputs(wiki: &str) -> PipelineInputs {
    let g = golden();
    PipelineInputs {
        gbif: g.join("gbif.tsv"),
        wiki: g.join(wiki),
        eunis: g.join("eunis.csv"),
        merge_map: Some(g.join("merge.csv")),
        keywords: g.join("keywords.txt"),
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        min_count: 1,
        seed: 7,
        ..PipelineConfig::default()
    }
}

#[test]
fn golden_rejections_and_records() {
    let out = run(&inputs("wiki"), &config()).unwrap();
    let rej = &out.stats.rejections;
    assert_eq!(out.stats.records_read, 12);
    for rule in [
        "uncertainty_missing",
        "uncertainty",
        "species_missing",
        "coordinate_rounded",
        "kingdom",
        "no_habitat_article",
        "duplicate",
    ] {
        assert_eq!(rej.get(rule), 1, "{rule}");
    }
    assert_eq!(rej.get("malformed") + rej.get("out_of_extent"), 0);
    assert_eq!(out.classes, vec!["Q5", "R22", "T17"]);
    assert_eq!(out.records.len(), 3);
    assert!(out.records.iter().all(|r| r.split != Split::Unassigned));
    let ids: Vec<u64> = out.bank.iter().map(|e| e.id).collect();
    assert_eq!(ids, (0..out.bank.len() as u64).collect::<Vec<_>>());
    for r in &out.records {
        for id in &r.sentence_ids {
            let text = &out.bank[*id as usize].text;
            assert!(r.species.iter().any(|s| out.sentence_sets[s].habitat.contains(text)));
        }
    }
}

#[test]
fn outputs_are_deterministic_and_input_format_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&run(&inputs("wiki"), &config()).unwrap(), a.path()).unwrap();
    write_outputs(&run(&inputs("dump.xml"), &config()).unwrap(), b.path()).unwrap();
    for f in [MANIFEST_FILE, SENTENCES_FILE, STATS_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(golden().join("expected").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn points_outside_the_grid_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = fs::read_to_string(golden().join("gbif.tsv")).unwrap();
    table.push_str("2001\tArnica montana\t60.1000\t10.5000\t20\tHUMAN_OBSERVATION\t\tPlantae\t2020\n");
    let gbif = dir.path().join("gbif.tsv");
    fs::write(&gbif, table).unwrap();
    let out = run(&PipelineInputs { gbif, ..inputs("wiki") }, &config()).unwrap();
    assert_eq!(out.stats.records_read, 13);
    assert_eq!(out.stats.rejections.get("out_of_extent"), 1);
    assert_eq!(out.records, run(&inputs("wiki"), &config()).unwrap().records);
}

#[test]
fn empty_occurrence_table_warns() {
    let dir = tempfile::tempdir().unwrap();
    let header = fs::read_to_string(golden().join("gbif.tsv")).unwrap().lines().next().unwrap().to_string();
    let gbif = dir.path().join("gbif.tsv");
    fs::write(&gbif, header + "\n").unwrap();
    let out = run(&PipelineInputs { gbif, ..inputs("wiki") }, &config()).unwrap();
    assert!(out.records.is_empty());
    assert!(out.bank.is_empty());
    assert!(!out.warnings.is_empty());
}

#[test]
fn other_text_types_change_the_bank() {
    for (tt, expect_names) in [("species_name", true), ("keywords", false), ("random", false)] {
        let cfg = PipelineConfig {
            text_type: tt.parse().unwrap(),
            ..config()
        };
        let out = run(&inputs("wiki"), &cfg).unwrap();
        let names_only = out.bank.iter().all(|e| out.sentence_sets.contains_key(&e.text));
        assert_eq!(names_only, expect_names, "{tt}");
    }
}

#[test]
fn missing_keyword_file_is_an_error() {
    let mut i = inputs("wiki");
    i.keywords = golden().join("no_such_keywords.txt");
    assert!(run(&i, &config()).is_err());
}
