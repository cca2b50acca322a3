use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use wincel_core::dataset::{SentenceBank, SentenceEntry, TrainingSet};
use wincel_core::embed::PseudoEncoder;
use wincel_core::losses::AlphaGrad;
use wincel_core::seed::derive;
use wincel_core::train::{assemble_batch, finite_diff_check, AssembledBatch, GradCheckOptions, LossKind, ProjectionHead, TrainConfig};
use wincel_core::Matrix;

use crate::args::{GlobalArgs, GradcheckArgs};
use crate::failure::{CmdResult, Failure};
use crate::settings::{set, write_effective, FileConfig, GradcheckSettings};

pub const REPORT: &str = "gradcheck.json";
const WORDS: [&str; 12] = [
    "wet", "meadow", "calcareous", "scree", "forest", "alpine", "soil", "river", "rock", "shade", "moss", "grass",
];

#[derive(Debug, Serialize)]
struct Row {
    loss_kind: LossKind,
    alpha_grad: AlphaGrad,
    max_rel_error: f64,
    entries_checked: usize,
}

#[derive(Debug, Serialize)]
struct Report {
    corrupt_gradient: bool,
    tolerance: f64,
    max_rel_error: f64,
    passed: bool,
    checks: Vec<Row>,
}

pub fn settings(file: &FileConfig, args: &GradcheckArgs) -> GradcheckSettings {
    let mut c = file.gradcheck.clone();
    set(&mut c.batches, args.batches);
    set(&mut c.n, args.n);
    set(&mut c.k, args.k);
    set(&mut c.d_in, args.d_in);
    set(&mut c.d_out, args.d_out);
    set(&mut c.step, args.step);
    set(&mut c.tolerance, args.tolerance);
    set(&mut c.pad_mode, args.pad_mode);
    c
}

struct Problem {
    head: ProjectionHead,
    batch: AssembledBatch,
    bank: SentenceBank,
    encoder: PseudoEncoder,
}

/// A random head, bank and padded batch with 1..=k real sentences per sample.
fn random_problem(s: &GradcheckSettings, seed: u64) -> CmdResult<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = PseudoEncoder::new(s.d_out, derive(seed, &[1]));
    let pool = s.n * s.k;
    let entries: Vec<SentenceEntry> = (0..pool)
        .map(|i| {
            let len = rng.random_range(3..9);
            let text = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
            SentenceEntry { id: i as u64, text: format!("{text} {i}") }
        })
        .collect();
    let bank = SentenceBank::embed(&entries, &encoder)?;
    let sentences = (0..s.n)
        .map(|_| {
            let m = rng.random_range(1..=s.k);
            sample(&mut rng, pool, m).into_vec()
        })
        .collect();
    let x: Vec<f64> = (0..s.n * s.d_in).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let set = TrainingSet {
        features: Matrix::from_vec(s.n, s.d_in, x)?,
        sentences,
        labels: vec![0; s.n],
    };
    let indices: Vec<usize> = (0..s.n).collect();
    let batch = assemble_batch(&set, &bank, &indices, s.k, derive(seed, &[2]))?;
    let head = ProjectionHead::random(s.d_in, s.d_out, true, derive(seed, &[3]));
    Ok(Problem { head, batch, bank, encoder })
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &GradcheckArgs) -> CmdResult {
    let s = settings(file, args);
    if s.n < 2 || s.k < 1 || s.d_in < 1 || s.d_out < wincel_core::embed::MIN_PSEUDO_DIM || s.batches == 0 {
        return Err(Failure::validation("gradcheck needs n >= 2, k >= 1, d_in >= 1, d_out >= 8 and batches >= 1"));
    }
    if s.step.is_nan() || s.step <= 0.0 {
        return Err(Failure::validation("--step must be positive"));
    }
    let seed = global.seed.or(file.seed).unwrap_or(0);
    let kinds: Vec<LossKind> = args.loss_kind.map_or_else(|| LossKind::ALL.to_vec(), |k| vec![k]);
    let modes: Vec<AlphaGrad> = args
        .alpha_grad
        .map_or_else(|| vec![AlphaGrad::Full, AlphaGrad::StopGradient], |a| vec![a]);
    let opts = GradCheckOptions {
        step: s.step,
        corrupt: args.corrupt_gradient,
        ..GradCheckOptions::default()
    };
    let problems = (0..s.batches)
        .map(|b| random_problem(&s, derive(seed, &[b as u64])))
        .collect::<CmdResult<Vec<_>>>()?;
    let mut checks = Vec::new();
    for &loss_kind in &kinds {
        for &alpha_grad in &modes {
            let config = TrainConfig {
                loss_kind,
                alpha_grad,
                pad_mode: s.pad_mode,
                k: s.k,
                bias: true,
                seed,
                ..TrainConfig::default()
            };
            let mut worst: f64 = 0.0;
            let mut entries = 0;
            for (b, p) in problems.iter().enumerate() {
                let r = finite_diff_check(&config, &p.head, &p.batch, &p.bank, &p.encoder, &opts, derive(seed, &[100, b as u64]))?;
                worst = worst.max(r.max_rel_error);
                entries += r.entries_checked;
            }
            let mode = serde_json::to_string(&alpha_grad).unwrap_or_default();
            println!("{:<14} {:<14} max_rel_error {worst:.3e}", loss_kind.to_string(), mode.trim_matches('"'));
            checks.push(Row { loss_kind, alpha_grad, max_rel_error: worst, entries_checked: entries });
        }
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let passed = max_rel_error < s.tolerance;
    let report = Report { corrupt_gradient: args.corrupt_gradient, tolerance: s.tolerance, max_rel_error, passed, checks };
    if let Some(out) = &global.out {
        let out = crate::settings::output_dir(Some(out))?;
        let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
        std::fs::write(out.join(REPORT), json + "\n").map_err(anyhow::Error::from)?;
        write_effective(&out, "gradcheck", serde_json::json!({"seed": seed, "corrupt_gradient": args.corrupt_gradient}), &s)?;
    }
    if passed {
        println!("passed: max relative error {max_rel_error:.3e} < {:e}", s.tolerance);
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!(
            "gradient check failed: max relative error {max_rel_error:.3e} >= {:e}",
            s.tolerance
        )))
    }
}
