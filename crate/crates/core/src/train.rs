//! Projection-head training over frozen visual features.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{SentenceBank, TrainingSet};
use crate::embed::TextEncoder;
use crate::error::{CoreError, Result};
use crate::linalg::{argmax, dot, log_sum_exp, norm, Matrix, ZERO_NORM_EPS};
use crate::losses::{
    self, AlphaGrad, BootstrapMode, Direction, LossOutput, PadMode, SentenceBatch, WincelParams,
};
use crate::seed;

/// Relative gradient errors are computed against `max(|analytic|, |numeric|, floor)`.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    d_in: usize,
    d_out: usize,
    /// `d_out × d_in`, row-major.
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

/// Values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    v: Vec<f64>,
    z_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl HeadGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weights.clone();
        if let Some(b) = &self.bias {
            out.extend_from_slice(b);
        }
        out
    }
}

impl ProjectionHead {
    pub fn new(d_in: usize, d_out: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(CoreError::EmptyDimension);
        }
        if weights.len() != d_in * d_out {
            return Err(CoreError::ShapeMismatch {
                expected: d_in * d_out,
                actual: weights.len(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != d_out {
                return Err(CoreError::ShapeMismatch {
                    expected: d_out,
                    actual: b.len(),
                });
            }
        }
        let head = Self {
            d_in,
            d_out,
            weights,
            bias,
        };
        if let Some(index) = head.params().iter().position(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite { index });
        }
        Ok(head)
    }

    pub fn identity(d: usize, with_bias: bool) -> Self {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        Self {
            d_in: d,
            d_out: d,
            weights: w,
            bias: with_bias.then(|| vec![0.0; d]),
        }
    }

    /// Gaussian weights with variance `1/d_in`; zero bias.
    pub fn random(d_in: usize, d_out: usize, with_bias: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        let weights = (0..d_in * d_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self {
            d_in,
            d_out,
            weights,
            bias: with_bias.then(|| vec![0.0; d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// Weights followed by bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = self.weights.clone();
        if let Some(b) = &self.bias {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let nw = self.weights.len();
        self.weights.copy_from_slice(&params[..nw]);
        if let Some(b) = &mut self.bias {
            b.copy_from_slice(&params[nw..]);
        }
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self.weights.chunks_exact(self.d_in).map(|w| dot(w, x)).collect();
        if let Some(b) = &self.bias {
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
        }
        z
    }

    /// `V = normalize(W x + b)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.d_in {
            return Err(CoreError::DimMismatch {
                left: x.len(),
                right: self.d_in,
            });
        }
        let z = self.preactivation(x);
        let z_norm = norm(&z);
        if z_norm < ZERO_NORM_EPS {
            return Err(CoreError::ZeroNorm);
        }
        let v: Vec<f64> = z.iter().map(|zi| zi / z_norm).collect();
        Ok((
            v.clone(),
            ForwardCache {
                x: x.to_vec(),
                v,
                z_norm,
            },
        ))
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, Vec<ForwardCache>)> {
        let mut v = Matrix::zeros(x.rows(), self.d_out);
        let mut caches = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let (vi, c) = self.forward(x.row(i))?;
            v.row_mut(i).copy_from_slice(&vi);
            caches.push(c);
        }
        Ok((v, caches))
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_batch(x)?.0)
    }

    /// Chain rule through the normalisation: `dz = (I − VVᵀ) gV / ‖z‖`.
    ///
    /// Returns the parameter gradients and the gradient with respect to `x`.
    pub fn backward(&self, cache: &ForwardCache, grad_v: &[f64]) -> (HeadGradients, Vec<f64>) {
        let mut grads = HeadGradients {
            weights: vec![0.0; self.weights.len()],
            bias: self.bias.as_ref().map(|b| vec![0.0; b.len()]),
        };
        let gx = self.accumulate(cache, grad_v, &mut grads);
        (grads, gx)
    }

    fn accumulate(&self, cache: &ForwardCache, grad_v: &[f64], grads: &mut HeadGradients) -> Vec<f64> {
        let along = dot(&cache.v, grad_v);
        let dz: Vec<f64> = grad_v
            .iter()
            .zip(&cache.v)
            .map(|(g, v)| (g - v * along) / cache.z_norm)
            .collect();
        let mut gx = vec![0.0; self.d_in];
        for (o, &d) in dz.iter().enumerate() {
            let row = o * self.d_in;
            for (j, xj) in cache.x.iter().enumerate() {
                grads.weights[row + j] += d * xj;
                gx[j] += self.weights[row + j] * d;
            }
        }
        if let Some(b) = &mut grads.bias {
            for (bi, d) in b.iter_mut().zip(&dz) {
                *bi += d;
            }
        }
        gx
    }

    /// Sum of parameter gradients over a batch.
    pub fn backward_batch(&self, caches: &[ForwardCache], grad_v: &Matrix) -> HeadGradients {
        let mut grads = HeadGradients {
            weights: vec![0.0; self.weights.len()],
            bias: self.bias.as_ref().map(|b| vec![0.0; b.len()]),
        };
        for (i, c) in caches.iter().enumerate() {
            self.accumulate(c, grad_v.row(i), &mut grads);
        }
        grads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Decoupled weight decay, then the bias-corrected Adam step.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamWState, lr: f64, hp: &AdamWParams) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        params[i] -= lr * hp.weight_decay * params[i];
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Infonce,
    Wincel,
    BootstrapHard,
    BootstrapSoft,
    Top1,
    TopP,
    SubstringAug,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Infonce,
        LossKind::Wincel,
        LossKind::BootstrapHard,
        LossKind::BootstrapSoft,
        LossKind::Top1,
        LossKind::TopP,
        LossKind::SubstringAug,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Infonce => "infonce",
            LossKind::Wincel => "wincel",
            LossKind::BootstrapHard => "bootstrap_hard",
            LossKind::BootstrapSoft => "bootstrap_soft",
            LossKind::Top1 => "top1",
            LossKind::TopP => "top_p",
            LossKind::SubstringAug => "substring_aug",
        }
    }

    pub fn default_tau(self) -> f64 {
        match self {
            LossKind::Wincel => 0.15,
            _ => 0.07,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown loss kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    #[default]
    Random,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub k: usize,
    /// `None` uses the loss kind's default temperature.
    pub tau: Option<f64>,
    pub weight_tau: Option<f64>,
    pub pad_mode: PadMode,
    pub alpha_grad: AlphaGrad,
    pub normalize_g: bool,
    pub direction: Direction,
    /// Not reported for the original recipe; AdamW's customary default.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub scheduler_step: usize,
    pub scheduler_gamma: f64,
    pub loss_kind: LossKind,
    /// Bootstrap mixing weight; `None` uses the mode default.
    pub beta: Option<f64>,
    pub seed: u64,
    pub bias: bool,
    pub init: HeadInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWParams::default();
        Self {
            lr: 1e-4,
            batch_size: 256,
            epochs: 60,
            k: 15,
            tau: None,
            weight_tau: None,
            pad_mode: PadMode::default(),
            alpha_grad: AlphaGrad::default(),
            normalize_g: false,
            direction: Direction::default(),
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            scheduler_step: 2,
            scheduler_gamma: 0.95,
            loss_kind: LossKind::Wincel,
            beta: None,
            seed: 0,
            bias: false,
            init: HeadInit::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.scheduler_gamma > 0.0 && self.scheduler_gamma <= 1.0) {
            return bad("scheduler_gamma must lie in (0, 1]");
        }
        if self.scheduler_step == 0 {
            return bad("scheduler_step must be at least 1");
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("optimizer hyperparameters out of range");
        }
        let tau = self.effective_tau();
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CoreError::TemperatureNonPositive(tau));
        }
        if let Some(wt) = self.weight_tau {
            if !(wt > 0.0 && wt.is_finite()) {
                return Err(CoreError::TemperatureNonPositive(wt));
            }
        }
        if let Some(b) = self.beta {
            if !(0.0..=1.0).contains(&b) {
                return Err(CoreError::BetaOutOfRange(b));
            }
        }
        Ok(())
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| self.loss_kind.default_tau())
    }

    pub fn bootstrap_mode(&self) -> Option<BootstrapMode> {
        match self.loss_kind {
            LossKind::BootstrapHard => Some(BootstrapMode::Hard),
            LossKind::BootstrapSoft => Some(BootstrapMode::Soft),
            _ => None,
        }
    }

    pub fn effective_beta(&self) -> f64 {
        self.beta
            .or_else(|| self.bootstrap_mode().map(BootstrapMode::default_beta))
            .unwrap_or(1.0)
    }

    pub fn wincel_params(&self) -> WincelParams {
        WincelParams {
            tau: self.effective_tau(),
            weight_tau: self.weight_tau,
            pad_mode: self.pad_mode,
            alpha_grad: self.alpha_grad,
            normalize_g: self.normalize_g,
            direction: self.direction,
        }
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).into()
    }

    pub fn initial_head(&self, d_in: usize, d_out: usize) -> Result<ProjectionHead> {
        match self.init {
            HeadInit::Random => Ok(ProjectionHead::random(
                d_in,
                d_out,
                self.bias,
                seed::derive(self.seed, &[INIT_STREAM]),
            )),
            HeadInit::Identity if d_in == d_out => Ok(ProjectionHead::identity(d_in, self.bias)),
            HeadInit::Identity => Err(CoreError::InvalidConfig(format!(
                "identity init needs equal dimensions, got {d_in} and {d_out}"
            ))),
        }
    }
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const SUBSET_STREAM: u64 = 3;
const CHOICE_STREAM: u64 = 4;
const VAL_STREAM: u64 = 5;

/// `lr · γ^⌊epoch / step⌋`.
pub fn scheduler_lr(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr * config.scheduler_gamma.powi((epoch / config.scheduler_step) as i32)
}

/// A padded batch ready for a forward pass.
#[derive(Debug, Clone)]
pub struct AssembledBatch {
    pub x: Matrix,
    pub sentences: SentenceBatch,
    pub labels: Vec<usize>,
    /// Bank rows of the real sentence slots, per sample, in slot order.
    pub slots: Vec<Vec<usize>>,
}

/// Gathers `indices` from `set`, keeping at most `k` sentences per record.
///
/// Records with more than `k` sentences keep a uniform subset drawn without
/// replacement from a generator seeded by `(seed, record index)`; the kept
/// sentences stay in their original order. Shorter records are padded with
/// zero rows.
pub fn assemble_batch(
    set: &TrainingSet,
    bank: &SentenceBank,
    indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<AssembledBatch> {
    if indices.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    let dim = bank.dim();
    let n = indices.len();
    let mut emb = vec![0.0; n * k * dim];
    let mut mask = vec![false; n * k];
    let mut slots = Vec::with_capacity(n);
    for (b, &r) in indices.iter().enumerate() {
        let all = set.sentences.get(r).ok_or(CoreError::IndexOutOfRange {
            index: r,
            len: set.len(),
        })?;
        if all.is_empty() {
            return Err(CoreError::EmptySentenceSet { record: r });
        }
        let chosen: Vec<usize> = if all.len() > k {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[r as u64]));
            let mut picked = sample_indices(&mut rng, all.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i]).collect()
        } else {
            all.clone()
        };
        for (j, &row) in chosen.iter().enumerate() {
            let dst = (b * k + j) * dim;
            emb[dst..dst + dim].copy_from_slice(bank.embedding(row));
            mask[b * k + j] = true;
        }
        slots.push(chosen);
    }
    Ok(AssembledBatch {
        x: set.features.select_rows(indices),
        sentences: SentenceBatch::new(n, k, dim, emb, mask)?,
        labels: indices.iter().map(|&i| set.labels[i]).collect(),
        slots,
    })
}

/// A loss whose discrete choices (sampled sentences, hard targets, frozen
/// weights) have been fixed, leaving a smooth function of `V`.
#[derive(Debug, Clone)]
pub enum Objective {
    Single {
        t: Matrix,
        tau: f64,
        direction: Direction,
    },
    Weighted {
        sentences: SentenceBatch,
        params: WincelParams,
        frozen_alpha: Option<Matrix>,
    },
    Bootstrap {
        t: Matrix,
        tau: f64,
        beta: f64,
        mode: BootstrapMode,
        frozen_targets: Option<Matrix>,
    },
}

impl Objective {
    pub fn evaluate(&self, v: &Matrix) -> Result<LossOutput> {
        match self {
            Objective::Single { t, tau, direction } => losses::contrastive(v, t, *tau, *direction),
            Objective::Weighted {
                sentences,
                params,
                frozen_alpha: Some(alpha),
            } => losses::wincel_with_weights(v, sentences, alpha, params),
            Objective::Weighted {
                sentences, params, ..
            } => losses::wincel(v, sentences, params),
            Objective::Bootstrap {
                t,
                tau,
                beta,
                mode,
                frozen_targets,
            } => losses::bootstrap_loss(v, t, *tau, *beta, *mode, frozen_targets.as_ref()),
        }
    }
}

fn random_real_slot<R: Rng>(batch: &SentenceBatch, i: usize, rng: &mut R) -> usize {
    let real = batch.real_count(i);
    // real slots are packed at the front
    rng.random_range(0..real)
}

fn gather(batch: &SentenceBatch, picks: &[usize]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = picks.iter().enumerate().map(|(i, &k)| batch.sentence(i, k)).collect();
    Matrix::from_rows(&rows, batch.dim())
}

/// Fixes the loss for one step at the current embeddings `v`.
pub fn prepare(
    config: &TrainConfig,
    v: &Matrix,
    batch: &AssembledBatch,
    bank: &SentenceBank,
    encoder: &dyn TextEncoder,
    rng: &mut ChaCha8Rng,
) -> Result<Objective> {
    let sb = &batch.sentences;
    let n = sb.n();
    let tau = config.effective_tau();
    let single = |t: Matrix| Objective::Single {
        t,
        tau,
        direction: config.direction,
    };
    Ok(match config.loss_kind {
        LossKind::Infonce => {
            let picks: Vec<usize> = (0..n).map(|i| random_real_slot(sb, i, rng)).collect();
            single(gather(sb, &picks)?)
        }
        LossKind::Top1 => {
            let picks = (0..n)
                .map(|i| losses::select_top1(v.row(i), sb.sample(i), sb.mask_row(i)))
                .collect::<Result<Vec<_>>>()?;
            single(gather(sb, &picks)?)
        }
        LossKind::TopP => {
            let picks = (0..n)
                .map(|i| losses::sample_top_p(v.row(i), sb.sample(i), sb.mask_row(i), tau, rng))
                .collect::<Result<Vec<_>>>()?;
            single(gather(sb, &picks)?)
        }
        LossKind::SubstringAug => {
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let slot = random_real_slot(sb, i, rng);
                let text = bank.text(batch.slots[i][slot]);
                let words: Vec<&str> = text.split_whitespace().collect();
                let sub = losses::substring_augment(&words, rng).join(" ");
                let e = encoder.embed(&sub)?;
                if e.len() != sb.dim() {
                    return Err(CoreError::DimMismatch {
                        left: e.len(),
                        right: sb.dim(),
                    });
                }
                rows.push(e);
            }
            single(Matrix::from_rows(&rows, sb.dim())?)
        }
        LossKind::Wincel => {
            let params = config.wincel_params();
            let frozen_alpha = match params.alpha_grad {
                AlphaGrad::Full => None,
                AlphaGrad::StopGradient => {
                    let mut alpha = Matrix::zeros(n, sb.k());
                    for i in 0..n {
                        let w = losses::sentence_weights(v.row(i), sb.sample(i), sb.mask_row(i), &params)?;
                        alpha.row_mut(i).copy_from_slice(&w);
                    }
                    Some(alpha)
                }
            };
            Objective::Weighted {
                sentences: sb.clone(),
                params,
                frozen_alpha,
            }
        }
        LossKind::BootstrapHard | LossKind::BootstrapSoft => {
            let mode = config.bootstrap_mode().expect("bootstrap kind");
            let beta = config.effective_beta();
            let picks: Vec<usize> = (0..n).map(|i| random_real_slot(sb, i, rng)).collect();
            let t = gather(sb, &picks)?;
            let frozen_targets = match mode {
                BootstrapMode::Soft => None,
                BootstrapMode::Hard => {
                    let mut logits = crate::linalg::pairwise_sim(v, &t)?;
                    for x in logits.as_mut_slice() {
                        *x /= tau;
                    }
                    Some(losses::bootstrap_targets(&logits, beta, mode)?)
                }
            };
            Objective::Bootstrap {
                t,
                tau,
                beta,
                mode,
                frozen_targets,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub epoch: u32,
    pub head: ProjectionHead,
    pub optimizer: AdamWState,
    pub history: Vec<EpochStats>,
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        if (self.bytes.len() - self.pos) / 8 < n {
            return Err(format!("truncated at byte {}", self.pos));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for x in values {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.extend_from_slice(&self.config_hash);
        p.extend_from_slice(&self.epoch.to_le_bytes());
        p.extend_from_slice(&(self.head.d_in as u32).to_le_bytes());
        p.extend_from_slice(&(self.head.d_out as u32).to_le_bytes());
        p.push(self.head.bias.is_some() as u8);
        put_f64s(&mut p, &self.head.weights);
        if let Some(b) = &self.head.bias {
            put_f64s(&mut p, b);
        }
        p.extend_from_slice(&self.optimizer.step.to_le_bytes());
        for buf in [&self.optimizer.m, &self.optimizer.v] {
            p.extend_from_slice(&(buf.len() as u64).to_le_bytes());
            put_f64s(&mut p, buf);
        }
        p.extend_from_slice(&(self.history.len() as u64).to_le_bytes());
        for h in &self.history {
            p.extend_from_slice(&h.epoch.to_le_bytes());
            p.extend_from_slice(&h.mean_loss.to_le_bytes());
            p.extend_from_slice(&h.lr.to_le_bytes());
        }
        let mut out = Vec::with_capacity(16 + p.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes).map_err(|reason| CoreError::corrupt(path, reason))
    }

    fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let len = r.u64()?;
        if len != (bytes.len() - r.pos) as u64 {
            return Err(format!("payload length {len} does not match file"));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let epoch = r.u32()?;
        let d_in = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        let has_bias = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(format!("bad bias flag {other}")),
        };
        let weights = r.f64s(d_in * d_out)?;
        let bias = if has_bias { Some(r.f64s(d_out)?) } else { None };
        let head = ProjectionHead::new(d_in, d_out, weights, bias).map_err(|e| e.to_string())?;
        let step = r.u64()?;
        let m_len = r.u64()? as usize;
        let m = r.f64s(m_len)?;
        let v_len = r.u64()? as usize;
        let v = r.f64s(v_len)?;
        if m.len() != head.num_params() || v.len() != head.num_params() {
            return Err("optimizer buffers do not match head shape".into());
        }
        let count = r.u64()? as usize;
        let mut history = Vec::new();
        for _ in 0..count {
            history.push(EpochStats {
                epoch: r.u32()?,
                mean_loss: r.f64()?,
                lr: r.f64()?,
            });
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self {
            config_hash,
            epoch,
            head,
            optimizer: AdamWState { m, v, step },
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }
}

pub fn loss_history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,lr\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.mean_loss, h.lr));
    }
    out
}

pub fn write_loss_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    fs::write(path, loss_history_csv(history)).map_err(|e| CoreError::io(path, e))
}

fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size).filter(|b| b.len() >= 2)
}

/// Mean loss over `set` without updating the head.
pub fn evaluate_loss(
    config: &TrainConfig,
    head: &ProjectionHead,
    set: &TrainingSet,
    bank: &SentenceBank,
    encoder: &dyn TextEncoder,
    seed_value: u64,
) -> Result<f64> {
    let order: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for (b, idx) in batches(&order, config.batch_size).enumerate() {
        let batch = assemble_batch(set, bank, idx, config.k, seed::derive(seed_value, &[SUBSET_STREAM]))?;
        let v = head.project(&batch.x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &[CHOICE_STREAM, b as u64]));
        let out = prepare(config, &v, &batch, bank, encoder, &mut rng)?.evaluate(&v)?;
        total += out.value * idx.len() as f64;
        count += idx.len();
    }
    Ok(if count == 0 { f64::NAN } else { total / count as f64 })
}

/// Trains `head` on `train`. Validation loss, when a set is given, is logged only.
pub fn fit(
    train: &TrainingSet,
    val: Option<&TrainingSet>,
    bank: &SentenceBank,
    config: &TrainConfig,
    encoder: &dyn TextEncoder,
    mut head: ProjectionHead,
) -> Result<Checkpoint> {
    config.validate()?;
    if train.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if head.d_in() != train.features.cols() {
        return Err(CoreError::DimMismatch {
            left: train.features.cols(),
            right: head.d_in(),
        });
    }
    if head.d_out() != bank.dim() {
        return Err(CoreError::DimMismatch {
            left: head.d_out(),
            right: bank.dim(),
        });
    }
    let hp = config.adamw();
    let mut state = AdamWState::new(head.num_params());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = scheduler_lr(config, epoch);
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[SHUFFLE_STREAM, e])));
        let subset_seed = seed::derive(config.seed, &[SUBSET_STREAM, e]);
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, idx) in batches(&order, config.batch_size).enumerate() {
            let batch = assemble_batch(train, bank, idx, config.k, subset_seed)?;
            let (v, caches) = head.forward_batch(&batch.x)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[CHOICE_STREAM, e, b as u64]));
            let out = prepare(config, &v, &batch, bank, encoder, &mut rng)?.evaluate(&v)?;
            let grads = head.backward_batch(&caches, &out.grad).flatten();
            let mut params = head.params();
            adamw_step(&mut params, &grads, &mut state, lr, &hp);
            head.set_params(&params);
            total += out.value * idx.len() as f64;
            count += idx.len();
        }
        let mean_loss = if count == 0 { f64::NAN } else { total / count as f64 };
        if let Some(val) = val.filter(|s| s.len() >= 2) {
            let vl = evaluate_loss(config, &head, val, bank, encoder, seed::derive(config.seed, &[VAL_STREAM, e]))?;
            log::info!("epoch {epoch}: train loss {mean_loss:.6}, val loss {vl:.6}, lr {lr:e}");
        } else {
            log::info!("epoch {epoch}: train loss {mean_loss:.6}, lr {lr:e}");
        }
        history.push(EpochStats {
            epoch: epoch as u32,
            mean_loss,
            lr,
        });
    }
    Ok(Checkpoint {
        config_hash: config.hash(),
        epoch: config.epochs as u32,
        head,
        optimizer: state,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Heads with more parameters are checked on a random subset of this size.
    pub max_entries: usize,
    /// Perturbs the analytic gradient; used as a negative control.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries: 100,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub loss: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of the batch loss with respect to the head
/// parameters against central differences.
pub fn finite_diff_check(
    config: &TrainConfig,
    head: &ProjectionHead,
    batch: &AssembledBatch,
    bank: &SentenceBank,
    encoder: &dyn TextEncoder,
    opts: &GradCheckOptions,
    seed_value: u64,
) -> Result<GradCheckReport> {
    let (v, caches) = head.forward_batch(&batch.x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &[CHOICE_STREAM]));
    let objective = prepare(config, &v, batch, bank, encoder, &mut rng)?;
    let out = objective.evaluate(&v)?;
    let mut analytic = head.backward_batch(&caches, &out.grad).flatten();
    if opts.corrupt {
        for g in analytic.iter_mut() {
            *g += 0.1 * (1.0 + g.abs());
        }
    }

    let total = head.num_params();
    let entries: Vec<usize> = if total > opts.max_entries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &[SUBSET_STREAM]));
        let mut e = sample_indices(&mut rng, total, opts.max_entries).into_vec();
        e.sort_unstable();
        e
    } else {
        (0..total).collect()
    };

    let base = head.params();
    let mut probe = head.clone();
    let mut value_at = |params: &[f64]| -> Result<f64> {
        probe.set_params(params);
        let v = probe.project(&batch.x)?;
        Ok(objective.evaluate(&v)?.value)
    };
    let mut worst: f64 = 0.0;
    for &i in &entries {
        let mut p = base.clone();
        p[i] = base[i] + opts.step;
        let plus = value_at(&p)?;
        p[i] = base[i] - opts.step;
        let minus = value_at(&p)?;
        let numeric = (plus - minus) / (2.0 * opts.step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        entries_checked: entries.len(),
        loss: out.value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 100,
            batch_size: 256,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression on frozen features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows()
            .map(|r| argmax(&self.logits(r)).unwrap_or(0))
            .collect()
    }
}

pub fn train_linear_probe(x: &Matrix, labels: &[usize], num_classes: usize, cfg: &ProbeConfig) -> Result<LinearClassifier> {
    if x.rows() != labels.len() {
        return Err(CoreError::ShapeMismatch {
            expected: x.rows(),
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(CoreError::IndexOutOfRange {
            index: bad,
            len: num_classes,
        });
    }
    if num_classes < 2 || labels.windows(2).all(|w| w[0] == w[1]) {
        return Err(CoreError::DegenerateLabels);
    }
    if cfg.batch_size == 0 || cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(CoreError::InvalidConfig("probe needs batch_size ≥ 1 and lr > 0".into()));
    }
    let d = x.cols();
    let c = num_classes;
    let mut params = vec![0.0; c * d + c];
    let mut state = AdamWState::new(params.len());
    let hp = AdamWParams {
        weight_decay: cfg.weight_decay,
        ..AdamWParams::default()
    };
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[SHUFFLE_STREAM, epoch as u64])));
        for idx in order.chunks(cfg.batch_size) {
            let mut grads = vec![0.0; params.len()];
            let inv = 1.0 / idx.len() as f64;
            for &i in idx {
                let xi = x.row(i);
                let logits: Vec<f64> = (0..c)
                    .map(|k| dot(&params[k * d..(k + 1) * d], xi) + params[c * d + k])
                    .collect();
                let lse = log_sum_exp(&logits);
                for k in 0..c {
                    let p = (logits[k] - lse).exp();
                    let err = (p - if k == labels[i] { 1.0 } else { 0.0 }) * inv;
                    for (g, xv) in grads[k * d..(k + 1) * d].iter_mut().zip(xi) {
                        *g += err * xv;
                    }
                    grads[c * d + k] += err;
                }
            }
            adamw_step(&mut params, &grads, &mut state, cfg.lr, &hp);
        }
    }
    Ok(LinearClassifier {
        weights: Matrix::from_vec(c, d, params[..c * d].to_vec())?,
        bias: params[c * d..].to_vec(),
    })
}
