use std::path::{Path, PathBuf};

use serde::Serialize;
use wincel_core::dataset::{read_manifest, FeatureStore, Split, TripletRecord};
use wincel_core::embed::TextEncoder;
use wincel_core::linalg::l2_normalize;
use wincel_core::train::{train_linear_probe, Checkpoint};
use wincel_core::zeroshot::{build_description_prompts, build_prompts, classify, evaluate, read_class_names, read_descriptions, EvalReport, PromptSet};
use wincel_core::Matrix;

use crate::args::{EvalArgs, GlobalArgs};
use crate::failure::{require_file, CmdResult, Failure};
use crate::provider;
use crate::settings::{output_dir, set, write_effective, EvalSettings, FileConfig, ProviderSettings};

pub const REPORT: &str = "eval_report.json";

#[derive(Debug, Serialize)]
struct Inputs<'a> {
    manifest: &'a PathBuf,
    features: &'a PathBuf,
    classes: &'a PathBuf,
    checkpoint: &'a Option<PathBuf>,
    descriptions: &'a Option<PathBuf>,
    supervised: bool,
}

#[derive(Debug, Serialize)]
struct Effective<'a> {
    provider: &'a ProviderSettings,
    eval: &'a EvalSettings,
}

pub fn settings(file: &FileConfig, global: &GlobalArgs, args: &EvalArgs) -> CmdResult<EvalSettings> {
    let mut c = file.eval.clone();
    set(&mut c.probe.seed, file.seed);
    set(&mut c.probe.seed, global.seed);
    set(&mut c.template, args.template.clone());
    if let Some(s) = &args.split {
        c.split = s.parse().map_err(Failure::validation)?;
    }
    set(&mut c.probe.lr, args.probe_lr);
    set(&mut c.probe.epochs, args.probe_epochs);
    Ok(c)
}

/// Visual embeddings of `records`: projected by the head when given,
/// otherwise the normalized raw features.
fn embed_records(records: &[&TripletRecord], store: &FeatureStore, head: Option<&Checkpoint>) -> CmdResult<Matrix> {
    let rows = records
        .iter()
        .map(|r| store.get(&r.tile_id))
        .collect::<wincel_core::Result<Vec<_>>>()?;
    let x = Matrix::from_rows(&rows, store.dim())?;
    match head {
        Some(c) => Ok(c.head.project(&x)?),
        None => {
            let unit = x
                .iter_rows()
                .map(|r| l2_normalize(r).unit())
                .collect::<wincel_core::Result<Vec<_>>>()?;
            Ok(Matrix::from_rows(&unit, store.dim())?)
        }
    }
}

fn load_checkpoint(path: Option<&Path>) -> CmdResult<Option<Checkpoint>> {
    path.map(|p| {
        require_file(p, "checkpoint")?;
        Ok(Checkpoint::load(p)?)
    })
    .transpose()
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &EvalArgs) -> CmdResult {
    let config = settings(file, global, args)?;
    let providers = provider::resolve(file.provider_settings(), &args.provider);
    require_file(&args.manifest, "manifest")?;
    require_file(&args.features, "feature file")?;
    require_file(&args.classes, "class list")?;
    if let Some(d) = &args.descriptions {
        require_file(d, "descriptions")?;
    }
    let checkpoint = load_checkpoint(args.checkpoint.as_deref())?;
    let names = read_class_names(&args.classes)?;
    let prompts = PromptSet::new(names, config.template.clone())?;
    let c = prompts.class_names.len();
    let out = output_dir(global.out.as_ref())?;

    let records = read_manifest(&args.manifest)?;
    if let Some(r) = records.iter().find(|r| r.eunis_label >= c) {
        return Err(Failure::validation(format!(
            "tile {} has label {} but only {c} classes are listed",
            r.tile_id, r.eunis_label
        )));
    }
    let store = FeatureStore::open(&args.features)?;
    let eval_records: Vec<&TripletRecord> = records.iter().filter(|r| r.split == config.split).collect();
    if eval_records.is_empty() {
        return Err(Failure::validation(format!("no records in split {}", config.split)));
    }
    let v = embed_records(&eval_records, &store, checkpoint.as_ref())?;
    let labels: Vec<usize> = eval_records.iter().map(|r| r.eunis_label).collect();

    let preds = if args.supervised {
        let train_records: Vec<&TripletRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
        let x = embed_records(&train_records, &store, checkpoint.as_ref())?;
        let y: Vec<usize> = train_records.iter().map(|r| r.eunis_label).collect();
        train_linear_probe(&x, &y, c, &config.probe)?.predict(&v)
    } else {
        let encoder = provider::open(&providers)?;
        let texts = match &args.descriptions {
            Some(d) => build_description_prompts(&prompts, &read_descriptions(d)?)?,
            None => build_prompts(&prompts)?,
        };
        let rows = texts
            .iter()
            .map(|t| encoder.embed(t))
            .collect::<wincel_core::Result<Vec<_>>>()?;
        let class_embeds = Matrix::from_rows(&rows, encoder.dim())?;
        classify(&v, &class_embeds)?
    };
    let report: EvalReport = evaluate(&preds, &labels, c)?;
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    let path = out.join(REPORT);
    std::fs::write(&path, json + "\n").map_err(|e| Failure::Runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
    println!("oa {:.4} macro_f1 {:.4} n {}", report.overall_accuracy, report.macro_f1, labels.len());
    write_effective(
        &out,
        "eval",
        Inputs {
            manifest: &args.manifest,
            features: &args.features,
            classes: &args.classes,
            checkpoint: &args.checkpoint,
            descriptions: &args.descriptions,
            supervised: args.supervised,
        },
        Effective {
            provider: &providers,
            eval: &config,
        },
    )
}
