#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub const BIN: &str = env!("CARGO_BIN_EXE_wincel");

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden() -> PathBuf {
    fixtures().join("golden")
}

pub fn wincel<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

pub fn golden_build_args(wiki: &str, out: &Path) -> Vec<String> {
    let g = golden();
    vec![
        "build-dataset".into(),
        "--gbif".into(),
        s(&g.join("gbif.tsv")),
        "--wiki".into(),
        s(&g.join(wiki)),
        "--eunis".into(),
        s(&g.join("eunis.csv")),
        "--merge-map".into(),
        s(&g.join("merge.csv")),
        "--keywords".into(),
        s(&g.join("keywords.txt")),
        "--min-count".into(),
        "1".into(),
        "--seed".into(),
        "7".into(),
        "--out".into(),
        s(out),
    ]
}

pub const GOLDEN_OUTPUTS: [&str; 6] = [
    "manifest.jsonl",
    "sentences.jsonl",
    "sentence_sets.jsonl",
    "splits.csv",
    "classes.txt",
    "stats.txt",
];

/// Names of golden outputs that differ from the checked-in expectations.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    GOLDEN_OUTPUTS
        .iter()
        .filter(|f| {
            let got = std::fs::read(out.join(f)).ok();
            let want = std::fs::read(golden().join("expected").join(f)).ok();
            got.is_none() || got != want
        })
        .map(|f| f.to_string())
        .collect()
}

/// Synthetic benchmark written to `dir`.
pub fn synth(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth".to_string(), "--out".into(), s(dir)];
    args.extend(extra.iter().map(|a| a.to_string()));
    wincel(args)
}

pub fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train".to_string(),
        "--manifest".into(),
        s(&data.join("manifest.jsonl")),
        "--sentences".into(),
        s(&data.join("sentences.jsonl")),
        "--features".into(),
        s(&data.join("features.eemb")),
        "--provider".into(),
        format!("file:{}", s(&data.join("text.eemb"))),
        "--out".into(),
        s(out),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    wincel(args)
}

pub fn eval(data: &Path, checkpoint: Option<&Path>, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "eval".to_string(),
        "--manifest".into(),
        s(&data.join("manifest.jsonl")),
        "--features".into(),
        s(&data.join("features.eemb")),
        "--classes".into(),
        s(&data.join("prompts.txt")),
        "--provider".into(),
        format!("file:{}", s(&data.join("text.eemb"))),
        "--out".into(),
        s(out),
    ];
    if let Some(c) = checkpoint {
        args.push("--checkpoint".into());
        args.push(s(c));
    }
    args.extend(extra.iter().map(|a| a.to_string()));
    wincel(args)
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a 4x4 raster whose cells are pseudo embeddings of short
/// habitat phrases. Cell (1,2) embeds the prompt; cell (3,3) is missing.
pub fn write_raster(dir: &Path, phrases: impl Fn(usize, usize) -> Option<String>) -> PathBuf {
    use wincel_core::embed::pseudo_embed;
    use wincel_core::interchange;
    use wincel_core::Matrix;
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for r in 0..4 {
        for c in 0..4 {
            if let Some(text) = phrases(r, c) {
                rows.push(pseudo_embed(&text, 16, 0).unwrap().into_inner());
                sources.push(format!("{r},{c}"));
            }
        }
    }
    let m = Matrix::from_rows(&rows, 16).unwrap();
    let emb = dir.join("cells.eemb");
    interchange::write_matrix(&emb, &m).unwrap();
    interchange::write_meta(&emb, &sources).unwrap();
    let spec = dir.join("raster.json");
    std::fs::write(
        &spec,
        r#"{"width":4,"height":4,"origin":[2600000,1200000],"cell_size_m":1000,"embeddings":"cells.eemb"}"#,
    )
    .unwrap();
    spec
}

pub const RASTER_PHRASES: [&str; 16] = [
    "dry calcareous grassland",
    "wet meadow with sedges",
    "alpine scree",
    "beech forest",
    "urban park",
    "reed bed",
    "wet meadow",
    "rocky slope",
    "arable field",
    "pine forest",
    "wet alpine meadow",
    "lake shore",
    "vineyard",
    "glacier",
    "bog",
    "",
];

pub fn golden_raster_phrase(r: usize, c: usize) -> Option<String> {
    let p = RASTER_PHRASES[r * 4 + c];
    (!p.is_empty()).then(|| p.to_string())
}
