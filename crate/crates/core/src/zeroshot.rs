//! Zero-shot classification by prompt-embedding argmax, and its metrics.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{argmax, dot, pairwise_sim, Matrix};

pub const PLACEHOLDER: &str = "{}";

/// Templates evaluated for the zero-shot setting; the empty template uses
/// the bare class name.
pub const TEMPLATES: [&str; 4] = ["", "a remote sensing image of {}", "an aerial image of {}", "a satellite image of {}"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub class_names: Vec<String>,
    pub template: String,
}

impl PromptSet {
    pub fn new(class_names: Vec<String>, template: impl Into<String>) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(CoreError::InvalidPrompts(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &class_names {
            if !seen.insert(n.as_str()) {
                return Err(CoreError::InvalidPrompts(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self {
            class_names,
            template: template.into(),
        })
    }
}

/// One class name per non-empty line.
pub fn read_class_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// `name<TAB>description` lines.
pub fn read_descriptions(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, desc) = line.split_once('\t').ok_or_else(|| CoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: "expected name<TAB>description".into(),
        })?;
        out.insert(name.trim().to_string(), desc.trim().to_string());
    }
    Ok(out)
}

fn fill(template: &str, value: &str) -> Result<String> {
    if template.is_empty() {
        return Ok(value.to_string());
    }
    match template.matches(PLACEHOLDER).count() {
        1 => Ok(template.replacen(PLACEHOLDER, value, 1)),
        n => Err(CoreError::BadTemplate(n)),
    }
}

pub fn build_prompts(set: &PromptSet) -> Result<Vec<String>> {
    set.class_names.iter().map(|n| fill(&set.template, n)).collect()
}

/// Prompts built from per-class descriptions instead of names.
pub fn build_description_prompts(set: &PromptSet, descriptions: &HashMap<String, String>) -> Result<Vec<String>> {
    set.class_names
        .iter()
        .map(|n| {
            let d = descriptions
                .get(n)
                .ok_or_else(|| CoreError::InvalidPrompts(format!("no description for class {n:?}")))?;
            fill(&set.template, d)
        })
        .collect()
}

/// Index of the most similar class per row; ties go to the lowest index.
pub fn classify(v: &Matrix, class_embeds: &Matrix) -> Result<Vec<usize>> {
    if class_embeds.rows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    let sims = pairwise_sim(v, class_embeds)?;
    Ok(sims.iter_rows().map(|r| argmax(r).expect("nonempty")).collect())
}

/// Entry `(i, j)` counts samples with label `i` predicted as `j`.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], c: usize) -> Result<Vec<Vec<u64>>> {
    if preds.len() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    let mut m = vec![vec![0u64; c]; c];
    for (&p, &l) in preds.iter().zip(labels) {
        for x in [p, l] {
            if x >= c {
                return Err(CoreError::IndexOutOfRange { index: x, len: c });
            }
        }
        m[l][p] += 1;
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro F1 over every configured class; undefined ratios count as 0.
pub fn macro_f1(confusion: &[Vec<u64>]) -> (f64, Vec<f64>) {
    let c = confusion.len();
    let mut per_class = Vec::with_capacity(c);
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
        let actual: u64 = confusion[k].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        per_class.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let macro_ = if c == 0 { 0.0 } else { per_class.iter().sum::<f64>() / c as f64 };
    (macro_, per_class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "oa")]
    pub overall_accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
}

pub fn evaluate(preds: &[usize], labels: &[usize], c: usize) -> Result<EvalReport> {
    let confusion = confusion_matrix(preds, labels, c)?;
    let trace: u64 = (0..c).map(|k| confusion[k][k]).sum();
    let (macro_, per_class) = macro_f1(&confusion);
    Ok(EvalReport {
        overall_accuracy: ratio(trace, preds.len() as u64),
        macro_f1: macro_,
        per_class_f1: per_class,
        confusion,
    })
}

/// The `top_k` bank sentences most similar to `v_n`, best first; equal
/// scores are ordered by id.
pub fn rank_sentences(v_n: &[f64], bank_embeds: &Matrix, ids: &[u64], top_k: usize) -> Result<Vec<(u64, f64)>> {
    if ids.len() != bank_embeds.rows() {
        return Err(CoreError::ShapeMismatch {
            expected: bank_embeds.rows(),
            actual: ids.len(),
        });
    }
    if top_k > ids.len() {
        return Err(CoreError::IndexOutOfRange {
            index: top_k,
            len: ids.len(),
        });
    }
    if bank_embeds.rows() > 0 && v_n.len() != bank_embeds.cols() {
        return Err(CoreError::DimMismatch {
            left: v_n.len(),
            right: bank_embeds.cols(),
        });
    }
    let mut scored: Vec<(u64, f64)> = ids
        .iter()
        .zip(bank_embeds.iter_rows())
        .map(|(&id, e)| (id, dot(v_n, e)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(scored)
}
