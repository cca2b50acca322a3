use std::path::{Path, PathBuf};

use serde::Serialize;
use wincel_core::dataset::{read_bank, read_manifest, FeatureStore, SentenceBank, Split, TrainingSet, TripletRecord};
use wincel_core::train::{fit, write_loss_history, TrainConfig};

use crate::args::{GlobalArgs, TrainArgs};
use crate::failure::{require_file, CmdResult, Failure};
use crate::provider::{self, UnitEncoder};
use crate::settings::{output_dir, set, write_effective, FileConfig, ProviderSettings};

pub const CHECKPOINT: &str = "checkpoint.wnck";
pub const LOSS_HISTORY: &str = "loss_history.csv";

#[derive(Debug, Serialize)]
struct Inputs<'a> {
    manifest: &'a PathBuf,
    sentences: &'a PathBuf,
    features: &'a PathBuf,
}

#[derive(Debug, Serialize)]
struct Effective<'a> {
    provider: &'a ProviderSettings,
    train: &'a TrainConfig,
}

pub fn settings(file: &FileConfig, global: &GlobalArgs, args: &TrainArgs) -> TrainConfig {
    let mut c = file.train.clone();
    set(&mut c.seed, file.seed);
    set(&mut c.seed, global.seed);
    set(&mut c.loss_kind, args.loss_kind);
    set(&mut c.lr, args.lr);
    set(&mut c.batch_size, args.batch_size);
    set(&mut c.epochs, args.epochs);
    set(&mut c.k, args.k);
    if args.tau.is_some() {
        c.tau = args.tau;
    }
    if args.weight_tau.is_some() {
        c.weight_tau = args.weight_tau;
    }
    set(&mut c.pad_mode, args.pad_mode);
    set(&mut c.alpha_grad, args.alpha_grad);
    set(&mut c.normalize_g, args.normalize_g);
    set(&mut c.direction, args.direction);
    set(&mut c.weight_decay, args.weight_decay);
    set(&mut c.scheduler_step, args.scheduler_step);
    set(&mut c.scheduler_gamma, args.scheduler_gamma);
    if args.beta.is_some() {
        c.beta = args.beta;
    }
    set(&mut c.bias, args.bias);
    set(&mut c.init, args.init);
    c
}

/// Manifest, bank and features loaded and embedded with one provider.
pub struct Corpus {
    pub records: Vec<TripletRecord>,
    pub bank: SentenceBank,
    pub store: FeatureStore,
    pub encoder: UnitEncoder,
}

impl Corpus {
    pub fn load(manifest: &Path, sentences: &Path, features: &Path, provider: &ProviderSettings) -> CmdResult<Self> {
        require_file(manifest, "manifest")?;
        require_file(sentences, "sentence bank")?;
        require_file(features, "feature file")?;
        let encoder = provider::open(provider)?;
        let records = read_manifest(manifest)?;
        let entries = read_bank(sentences)?;
        let bank = SentenceBank::embed(&entries, &encoder)?;
        let store = FeatureStore::open(features)?;
        Ok(Corpus {
            records,
            bank,
            store,
            encoder,
        })
    }

    pub fn split(&self, split: Split) -> CmdResult<TrainingSet> {
        let chosen: Vec<&TripletRecord> = self.records.iter().filter(|r| r.split == split).collect();
        Ok(TrainingSet::from_records(&chosen, &self.store, &self.bank)?)
    }
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &TrainArgs) -> CmdResult {
    let config = settings(file, global, args);
    config.validate()?;
    let providers = provider::resolve(file.provider_settings(), &args.provider);
    let corpus = Corpus::load(&args.manifest, &args.sentences, &args.features, &providers)?;
    let out = output_dir(global.out.as_ref())?;
    let train = corpus.split(Split::Train)?;
    if train.len() < 2 {
        return Err(Failure::validation(format!(
            "manifest has {} train records, need at least 2",
            train.len()
        )));
    }
    let val = corpus.split(Split::Val)?;
    let head = config.initial_head(corpus.store.dim(), corpus.bank.dim())?;
    let checkpoint = fit(&train, Some(&val), &corpus.bank, &config, &corpus.encoder, head)?;
    checkpoint.save(&out.join(CHECKPOINT))?;
    write_loss_history(&out.join(LOSS_HISTORY), &checkpoint.history)?;
    if let (Some(first), Some(last)) = (checkpoint.history.first(), checkpoint.history.last()) {
        log::info!("loss {:.6} -> {:.6} over {} epochs", first.mean_loss, last.mean_loss, checkpoint.history.len());
    }
    write_effective(
        &out,
        "train",
        Inputs {
            manifest: &args.manifest,
            sentences: &args.sentences,
            features: &args.features,
        },
        Effective {
            provider: &providers,
            train: &config,
        },
    )
}
