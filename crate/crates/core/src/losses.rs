//! Contrastive objectives for weakly paired image/sentence-set data.
//!
//! Every loss returns its value, the per-sample terms and the analytic
//! gradient of the mean loss with respect to the visual embeddings `V`
//! (rows of an `N × D` matrix). Gradients are exact; they are tested
//! against central finite differences in the test suite.
//!
//! The weighted loss ([`wincel`]) replaces the single positive text of
//! InfoNCE with `G_n = Σ_k α_{n,k} T_{n,k}`, where the weights are a softmax
//! over the image/sentence similarities of the sample's own sentence set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{argmax, dot, log_sum_exp, masked_softmax, norm, Matrix, ZERO_NORM_EPS};

/// Tolerance used when validating that real sentence rows are unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-4;

/// Per-sample candidate sentences, padded to a common `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceBatch {
    n: usize,
    k: usize,
    dim: usize,
    embeddings: Vec<f64>,
    mask: Vec<bool>,
}

impl SentenceBatch {
    /// `embeddings` is `N × K × D` row-major; `mask[n*K + k]` is true for real sentences.
    pub fn new(n: usize, k: usize, dim: usize, embeddings: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::EmptyBatch);
        }
        if k == 0 || dim == 0 {
            return Err(CoreError::EmptyDimension);
        }
        if embeddings.len() != n * k * dim {
            return Err(CoreError::ShapeMismatch {
                expected: n * k * dim,
                actual: embeddings.len(),
            });
        }
        if mask.len() != n * k {
            return Err(CoreError::ShapeMismatch {
                expected: n * k,
                actual: mask.len(),
            });
        }
        let batch = Self {
            n,
            k,
            dim,
            embeddings,
            mask,
        };
        for i in 0..n {
            if !batch.mask_row(i).iter().any(|&m| m) {
                return Err(CoreError::EmptySentenceSet { record: i });
            }
            for j in 0..k {
                let row = batch.sentence(i, j);
                if let Some(pos) = row.iter().position(|x| !x.is_finite()) {
                    return Err(CoreError::NonFinite {
                        index: (i * k + j) * dim + pos,
                    });
                }
                if batch.is_real(i, j) {
                    if (norm(row) - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(CoreError::InvalidConfig(format!(
                            "sentence ({i}, {j}) is not unit-norm"
                        )));
                    }
                } else if row.iter().any(|&x| x != 0.0) {
                    return Err(CoreError::InvalidConfig(format!(
                        "padded sentence ({i}, {j}) is not zero"
                    )));
                }
            }
        }
        Ok(batch)
    }

    /// One real sentence per sample (`K = 1`).
    pub fn from_single(t: &Matrix) -> Result<Self> {
        Self::new(t.rows(), 1, t.cols(), t.as_slice().to_vec(), vec![true; t.rows()])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sentence(&self, n: usize, k: usize) -> &[f64] {
        let start = (n * self.k + k) * self.dim;
        &self.embeddings[start..start + self.dim]
    }

    /// The `K × D` block of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let start = n * self.k * self.dim;
        &self.embeddings[start..start + self.k * self.dim]
    }

    pub fn mask_row(&self, n: usize) -> &[bool] {
        &self.mask[n * self.k..(n + 1) * self.k]
    }

    pub fn is_real(&self, n: usize, k: usize) -> bool {
        self.mask[n * self.k + k]
    }

    pub fn real_count(&self, n: usize) -> usize {
        self.mask_row(n).iter().filter(|&&m| m).count()
    }

    /// The same batch with `extra` additional padded slots per sample.
    pub fn with_extra_padding(&self, extra: usize) -> Self {
        let k = self.k + extra;
        let mut embeddings = vec![0.0; self.n * k * self.dim];
        let mut mask = vec![false; self.n * k];
        for i in 0..self.n {
            for j in 0..self.k {
                let dst = (i * k + j) * self.dim;
                embeddings[dst..dst + self.dim].copy_from_slice(self.sentence(i, j));
                mask[i * k + j] = self.is_real(i, j);
            }
        }
        Self {
            n: self.n,
            k,
            dim: self.dim,
            embeddings,
            mask,
        }
    }

    /// Reorders the sentences of sample `n` so that new slot `j` holds old slot `perm[j]`.
    pub fn permute_sample(&mut self, n: usize, perm: &[usize]) {
        assert_eq!(perm.len(), self.k);
        let old_e = self.sample(n).to_vec();
        let old_m = self.mask_row(n).to_vec();
        for (j, &src) in perm.iter().enumerate() {
            let dst = (n * self.k + j) * self.dim;
            self.embeddings[dst..dst + self.dim]
                .copy_from_slice(&old_e[src * self.dim..(src + 1) * self.dim]);
            self.mask[n * self.k + j] = old_m[src];
        }
    }

    /// Reorders whole samples: new sample `i` is old sample `perm[i]`.
    pub fn permute_samples(&self, perm: &[usize]) -> Self {
        let mut embeddings = Vec::with_capacity(self.embeddings.len());
        let mut mask = Vec::with_capacity(self.mask.len());
        for &src in perm {
            embeddings.extend_from_slice(self.sample(src));
            mask.extend_from_slice(self.mask_row(src));
        }
        Self {
            n: perm.len(),
            k: self.k,
            dim: self.dim,
            embeddings,
            mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean of `per_sample`.
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// Gradient of `value` with respect to the loss input: `V` (`N × D`) for the
    /// embedding losses, the logit matrix for [`soft_cross_entropy`].
    pub grad: Matrix,
    /// Sentence weights `α` (`N × K`), for the weighted loss only.
    pub alpha: Option<Matrix>,
}

/// How padded (all-zero) sentence slots enter the weight softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Padded slots take part with logit `V·0 = 0`, exactly as zero features would.
    #[default]
    PaperLiteral,
    /// Padded slots are excluded and the weights renormalised over real sentences.
    Masked,
}

/// Whether gradients flow through the sentence weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaGrad {
    #[default]
    Full,
    StopGradient,
}

/// Image→text only, or the average of both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    ImageToText,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WincelParams {
    /// Temperature of the contrastive softmax.
    pub tau: f64,
    /// Temperature of the sentence-weight softmax; `None` reuses `tau`.
    #[serde(default)]
    pub weight_tau: Option<f64>,
    #[serde(default)]
    pub pad_mode: PadMode,
    #[serde(default)]
    pub alpha_grad: AlphaGrad,
    /// Re-normalise `G_n` to unit length before the contrastive term.
    #[serde(default)]
    pub normalize_g: bool,
    #[serde(default)]
    pub direction: Direction,
}

impl WincelParams {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            weight_tau: None,
            pad_mode: PadMode::default(),
            alpha_grad: AlphaGrad::default(),
            normalize_g: false,
            direction: Direction::default(),
        }
    }

    pub fn with_pad_mode(mut self, pad_mode: PadMode) -> Self {
        self.pad_mode = pad_mode;
        self
    }

    pub fn with_alpha_grad(mut self, alpha_grad: AlphaGrad) -> Self {
        self.alpha_grad = alpha_grad;
        self
    }

    pub fn effective_weight_tau(&self) -> f64 {
        self.weight_tau.unwrap_or(self.tau)
    }

    fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_tau(self.effective_weight_tau())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(CoreError::TemperatureNonPositive(tau))
    }
}

/// Cross-entropy with diagonal targets over `sims / tau`.
///
/// Returns the per-sample terms and `∂mean/∂sims`.
fn diagonal_cross_entropy(sims: &Matrix, tau: f64, direction: Direction) -> (Vec<f64>, Matrix) {
    let n = sims.rows();
    let inv_n = 1.0 / n as f64;
    let mut per_sample = vec![0.0; n];
    let mut dsims = Matrix::zeros(n, n);
    let row_weight = match direction {
        Direction::ImageToText => 1.0,
        Direction::Symmetric => 0.5,
    };

    let mut logits = vec![0.0; n];
    for i in 0..n {
        for (j, z) in logits.iter_mut().enumerate() {
            *z = sims.get(i, j) / tau;
        }
        let lse = log_sum_exp(&logits);
        per_sample[i] += row_weight * (lse - logits[i]);
        for (j, z) in logits.iter().enumerate() {
            let p = (z - lse).exp();
            let delta = if i == j { 1.0 } else { 0.0 };
            dsims.set(i, j, row_weight * (p - delta) * inv_n / tau);
        }
    }

    if direction == Direction::Symmetric {
        for j in 0..n {
            for (i, z) in logits.iter_mut().enumerate() {
                *z = sims.get(i, j) / tau;
            }
            let lse = log_sum_exp(&logits);
            per_sample[j] += 0.5 * (lse - logits[j]);
            for (i, z) in logits.iter().enumerate() {
                let p = (z - lse).exp();
                let delta = if i == j { 1.0 } else { 0.0 };
                let cur = dsims.get(i, j);
                dsims.set(i, j, cur + 0.5 * (p - delta) * inv_n / tau);
            }
        }
    }
    (per_sample, dsims)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `dV = dS · T`, for `S = V Tᵀ`.
fn grad_through_targets(dsims: &Matrix, targets: &Matrix) -> Matrix {
    let mut grad = Matrix::zeros(dsims.rows(), targets.cols());
    for i in 0..dsims.rows() {
        let g = grad.row_mut(i);
        for j in 0..dsims.cols() {
            let w = dsims.get(i, j);
            if w != 0.0 {
                for (gd, td) in g.iter_mut().zip(targets.row(j)) {
                    *gd += w * td;
                }
            }
        }
    }
    grad
}

fn check_pair(v: &Matrix, t: &Matrix) -> Result<()> {
    if v.rows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    if v.cols() != t.cols() {
        return Err(CoreError::DimMismatch {
            left: v.cols(),
            right: t.cols(),
        });
    }
    if v.rows() != t.rows() {
        return Err(CoreError::ShapeMismatch {
            expected: v.rows(),
            actual: t.rows(),
        });
    }
    Ok(())
}

/// Standard InfoNCE, image→text: `−log softmax_j(V_n·T_j/τ)[n]`.
pub fn info_nce(v: &Matrix, t: &Matrix, tau: f64) -> Result<LossOutput> {
    contrastive(v, t, tau, Direction::ImageToText)
}

/// InfoNCE with an explicit direction.
pub fn contrastive(v: &Matrix, t: &Matrix, tau: f64, direction: Direction) -> Result<LossOutput> {
    check_tau(tau)?;
    check_pair(v, t)?;
    let sims = crate::linalg::pairwise_sim(v, t)?;
    let (per_sample, dsims) = diagonal_cross_entropy(&sims, tau, direction);
    Ok(LossOutput {
        value: mean(&per_sample),
        per_sample,
        grad: grad_through_targets(&dsims, t),
        alpha: None,
    })
}

fn check_sample(v_n: &[f64], t_n: &[f64], mask: &[bool]) -> Result<()> {
    if t_n.len() != mask.len() * v_n.len() {
        return Err(CoreError::ShapeMismatch {
            expected: mask.len() * v_n.len(),
            actual: t_n.len(),
        });
    }
    Ok(())
}

fn sample_sims(v_n: &[f64], t_n: &[f64]) -> Vec<f64> {
    t_n.chunks_exact(v_n.len()).map(|t| dot(v_n, t)).collect()
}

/// The weights `α_{n,k} = softmax_k(V_n·T_{n,k}/τ)` for one sample.
///
/// `t_n` is the sample's `K × D` block and `mask` its `K` real-sentence flags.
pub fn sentence_weights(v_n: &[f64], t_n: &[f64], mask: &[bool], params: &WincelParams) -> Result<Vec<f64>> {
    params.validate()?;
    check_sample(v_n, t_n, mask)?;
    let tau = params.effective_weight_tau();
    let logits: Vec<f64> = sample_sims(v_n, t_n).into_iter().map(|s| s / tau).collect();
    match params.pad_mode {
        PadMode::PaperLiteral => masked_softmax(&logits, None),
        PadMode::Masked => masked_softmax(&logits, Some(mask)),
    }
}

/// `G_n = Σ_k α_k T_{n,k}`, not re-normalised.
pub fn weighted_text_repr(alpha: &[f64], t_n: &[f64]) -> Vec<f64> {
    let dim = t_n.len() / alpha.len().max(1);
    let mut g = vec![0.0; dim];
    for (a, t) in alpha.iter().zip(t_n.chunks_exact(dim.max(1))) {
        for (gd, td) in g.iter_mut().zip(t) {
            *gd += a * td;
        }
    }
    g
}

/// Weighted InfoNCE over sentence sets.
pub fn wincel(v: &Matrix, sentences: &SentenceBatch, params: &WincelParams) -> Result<LossOutput> {
    wincel_impl(v, sentences, params, None)
}

/// Weighted InfoNCE with caller-supplied weights held constant.
///
/// This is the forward function whose gradient [`wincel`] returns under
/// [`AlphaGrad::StopGradient`] when `alpha` equals the weights at the current `V`.
pub fn wincel_with_weights(
    v: &Matrix,
    sentences: &SentenceBatch,
    alpha: &Matrix,
    params: &WincelParams,
) -> Result<LossOutput> {
    if alpha.rows() != sentences.n() || alpha.cols() != sentences.k() {
        return Err(CoreError::ShapeMismatch {
            expected: sentences.n() * sentences.k(),
            actual: alpha.rows() * alpha.cols(),
        });
    }
    wincel_impl(v, sentences, params, Some(alpha))
}

fn wincel_impl(
    v: &Matrix,
    sentences: &SentenceBatch,
    params: &WincelParams,
    fixed_alpha: Option<&Matrix>,
) -> Result<LossOutput> {
    params.validate()?;
    let n = v.rows();
    if n == 0 {
        return Err(CoreError::EmptyBatch);
    }
    if n != sentences.n() {
        return Err(CoreError::ShapeMismatch {
            expected: sentences.n(),
            actual: n,
        });
    }
    if v.cols() != sentences.dim() {
        return Err(CoreError::DimMismatch {
            left: v.cols(),
            right: sentences.dim(),
        });
    }
    let k = sentences.k();
    let dim = v.cols();

    let alpha = match fixed_alpha {
        Some(a) => a.clone(),
        None => {
            let mut alpha = Matrix::zeros(n, k);
            for i in 0..n {
                let w = sentence_weights(v.row(i), sentences.sample(i), sentences.mask_row(i), params)?;
                alpha.row_mut(i).copy_from_slice(&w);
            }
            alpha
        }
    };

    let mut g = Matrix::zeros(n, dim);
    for i in 0..n {
        let gi = weighted_text_repr(alpha.row(i), sentences.sample(i));
        g.row_mut(i).copy_from_slice(&gi);
    }
    let g_norms: Vec<f64> = g.iter_rows().map(norm).collect();
    let targets = if params.normalize_g {
        let mut gh = g.clone();
        for (i, &norm_i) in g_norms.iter().enumerate() {
            if norm_i < ZERO_NORM_EPS {
                return Err(CoreError::ZeroNorm);
            }
            for x in gh.row_mut(i) {
                *x /= norm_i;
            }
        }
        gh
    } else {
        g
    };

    let sims = crate::linalg::pairwise_sim(v, &targets)?;
    let (per_sample, dsims) = diagonal_cross_entropy(&sims, params.tau, params.direction);
    let mut grad = grad_through_targets(&dsims, &targets);

    if params.alpha_grad == AlphaGrad::Full && fixed_alpha.is_none() {
        // ∂L/∂G_j = Σ_n dS_{n,j} V_n
        let dtargets = grad_through_targets(&dsims.transpose(), v);
        let weight_tau = params.effective_weight_tau();
        for (j, &norm_j) in g_norms.iter().enumerate() {
            let mut dg = dtargets.row(j).to_vec();
            if params.normalize_g {
                let gh = targets.row(j);
                let proj = dot(gh, &dg);
                for (d, h) in dg.iter_mut().zip(gh) {
                    *d = (*d - proj * h) / norm_j;
                }
            }
            let a = alpha.row(j);
            let dalpha: Vec<f64> = sentences
                .sample(j)
                .chunks_exact(dim)
                .map(|t| dot(&dg, t))
                .collect();
            let mean_da: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
            let gj = grad.row_mut(j);
            for (kk, t) in sentences.sample(j).chunks_exact(dim).enumerate() {
                let dlogit = a[kk] * (dalpha[kk] - mean_da);
                if dlogit != 0.0 {
                    for (gd, td) in gj.iter_mut().zip(t) {
                        *gd += dlogit * td / weight_tau;
                    }
                }
            }
        }
    }

    Ok(LossOutput {
        value: mean(&per_sample),
        per_sample,
        grad,
        alpha: Some(alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    Hard,
    Soft,
}

impl BootstrapMode {
    /// Mixing weight reported as the best empirical setting for each mode.
    pub fn default_beta(self) -> f64 {
        match self {
            BootstrapMode::Hard => 0.9,
            BootstrapMode::Soft => 0.8,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(CoreError::BetaOutOfRange(beta))
    }
}

fn row_softmax(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let lse = log_sum_exp(logits.row(i));
        for (o, z) in out.row_mut(i).iter_mut().zip(logits.row(i)) {
            *o = (z - lse).exp();
        }
    }
    out
}

/// Bootstrapped targets `β·I + (1−β)·q`, with `q` the row softmax (soft) or
/// the one-hot row argmax (hard) of `logits`.
pub fn bootstrap_targets(logits: &Matrix, beta: f64, mode: BootstrapMode) -> Result<Matrix> {
    check_beta(beta)?;
    if logits.rows() != logits.cols() {
        return Err(CoreError::ShapeMismatch {
            expected: logits.rows(),
            actual: logits.cols(),
        });
    }
    let n = logits.rows();
    let model = match mode {
        BootstrapMode::Soft => row_softmax(logits),
        BootstrapMode::Hard => {
            let mut onehot = Matrix::zeros(n, n);
            for i in 0..n {
                if let Some(j) = argmax(logits.row(i)) {
                    onehot.set(i, j, 1.0);
                }
            }
            onehot
        }
    };
    let mut targets = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { 1.0 } else { 0.0 };
            targets.set(i, j, beta * eye + (1.0 - beta) * model.get(i, j));
        }
    }
    Ok(targets)
}

/// Cross-entropy against fixed soft targets: `−Σ_j t_{n,j} log softmax(z_n)_j`.
///
/// The gradient in the output is with respect to `logits`.
pub fn soft_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<LossOutput> {
    if logits.rows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    if logits.rows() != targets.rows() || logits.cols() != targets.cols() {
        return Err(CoreError::ShapeMismatch {
            expected: logits.rows() * logits.cols(),
            actual: targets.rows() * targets.cols(),
        });
    }
    let n = logits.rows();
    let inv_n = 1.0 / n as f64;
    let mut per_sample = vec![0.0; n];
    let mut grad = Matrix::zeros(n, logits.cols());
    for (i, loss) in per_sample.iter_mut().enumerate() {
        let z = logits.row(i);
        let t = targets.row(i);
        let lse = log_sum_exp(z);
        let t_sum: f64 = t.iter().sum();
        *loss = z.iter().zip(t).map(|(zj, tj)| -tj * (zj - lse)).sum();
        for (g, (zj, tj)) in grad.row_mut(i).iter_mut().zip(z.iter().zip(t)) {
            let p = (zj - lse).exp();
            *g = (p * t_sum - tj) * inv_n;
        }
    }
    Ok(LossOutput {
        value: mean(&per_sample),
        per_sample,
        grad,
        alpha: None,
    })
}

/// Bootstrapped cross-entropy on the similarity logits `V Tᵀ / τ`.
///
/// Hard mode treats its argmax targets as constants. Soft mode keeps the
/// model posterior inside the target, so its gradient includes the entropy
/// term `(1−β)·∂H(q)/∂z`. `frozen_targets` pins the hard-mode targets (used
/// when the argmax must not move between evaluations).
pub fn bootstrap_loss(
    v: &Matrix,
    t: &Matrix,
    tau: f64,
    beta: f64,
    mode: BootstrapMode,
    frozen_targets: Option<&Matrix>,
) -> Result<LossOutput> {
    check_tau(tau)?;
    check_beta(beta)?;
    check_pair(v, t)?;
    let n = v.rows();
    let mut logits = crate::linalg::pairwise_sim(v, t)?;
    for x in logits.as_mut_slice() {
        *x /= tau;
    }
    let logit_loss = match mode {
        BootstrapMode::Hard => {
            let targets = match frozen_targets {
                Some(tg) => tg.clone(),
                None => bootstrap_targets(&logits, beta, mode)?,
            };
            soft_cross_entropy(&logits, &targets)?
        }
        BootstrapMode::Soft => {
            let q = row_softmax(&logits);
            let inv_n = 1.0 / n as f64;
            let mut per_sample = vec![0.0; n];
            let mut grad = Matrix::zeros(n, n);
            for i in 0..n {
                let lse = log_sum_exp(logits.row(i));
                let logq: Vec<f64> = logits.row(i).iter().map(|z| z - lse).collect();
                let qi = q.row(i);
                let entropy: f64 = -qi.iter().zip(&logq).map(|(p, lp)| p * lp).sum::<f64>();
                per_sample[i] = beta * (-logq[i]) + (1.0 - beta) * entropy;
                for j in 0..n {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let ce = qi[j] - delta;
                    let dh = -qi[j] * (logq[j] + entropy);
                    grad.set(i, j, (beta * ce + (1.0 - beta) * dh) * inv_n);
                }
            }
            LossOutput {
                value: mean(&per_sample),
                per_sample,
                grad,
                alpha: None,
            }
        }
    };
    let mut dsims = logit_loss.grad;
    for x in dsims.as_mut_slice() {
        *x /= tau;
    }
    Ok(LossOutput {
        value: logit_loss.value,
        per_sample: logit_loss.per_sample,
        grad: grad_through_targets(&dsims, t),
        alpha: None,
    })
}

/// Index of the real sentence most similar to `v_n`; ties go to the lowest index.
pub fn select_top1(v_n: &[f64], t_n: &[f64], mask: &[bool]) -> Result<usize> {
    check_sample(v_n, t_n, mask)?;
    let sims = sample_sims(v_n, t_n);
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in sims.into_iter().enumerate() {
        if !mask[k] {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((k, s)),
        }
    }
    best.map(|(k, _)| k).ok_or(CoreError::AllMasked)
}

/// Draws a real sentence with probability `softmax(sims / τ)` over real sentences.
pub fn sample_top_p<R: Rng + ?Sized>(v_n: &[f64], t_n: &[f64], mask: &[bool], tau: f64, rng: &mut R) -> Result<usize> {
    check_tau(tau)?;
    check_sample(v_n, t_n, mask)?;
    let logits: Vec<f64> = sample_sims(v_n, t_n).into_iter().map(|s| s / tau).collect();
    let probs = masked_softmax(&logits, Some(mask))?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_real = 0;
    for (k, p) in probs.iter().enumerate() {
        if !mask[k] {
            continue;
        }
        last_real = k;
        acc += p;
        if u < acc {
            return Ok(k);
        }
    }
    Ok(last_real)
}

pub const SUBSTRING_MIN_WORDS: usize = 3;
pub const SUBSTRING_MAX_WORDS: usize = 15;

/// A random contiguous window of 3 to 15 words. Inputs of at most three words
/// are returned unchanged.
pub fn substring_augment<T: Clone, R: Rng + ?Sized>(words: &[T], rng: &mut R) -> Vec<T> {
    if words.len() <= SUBSTRING_MIN_WORDS {
        return words.to_vec();
    }
    let max_len = SUBSTRING_MAX_WORDS.min(words.len());
    let len = rng.random_range(SUBSTRING_MIN_WORDS..=max_len);
    let start = rng.random_range(0..=words.len() - len);
    words[start..start + len].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = norm(v);
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn info_nce_single_pair_is_zero() {
        let v = Matrix::from_vec(1, 2, vec![0.6, 0.8]).unwrap();
        let out = info_nce(&v, &v, 0.07).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.as_slice().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn info_nce_two_orthogonal_pairs() {
        let v = Matrix::identity(2);
        let out = info_nce(&v, &v, 1.0).unwrap();
        let expected = (1.0f64 + (-1.0f64).exp()).ln();
        for p in &out.per_sample {
            assert_abs_diff_eq!(*p, expected, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(expected, 0.31326, epsilon = 1e-5);
    }

    #[test]
    fn info_nce_rejects_bad_tau() {
        let v = Matrix::identity(2);
        assert!(matches!(info_nce(&v, &v, 0.0), Err(CoreError::TemperatureNonPositive(_))));
        assert!(matches!(info_nce(&v, &v, -1.0), Err(CoreError::TemperatureNonPositive(_))));
    }

    #[test]
    fn weights_examples() {
        let p = WincelParams::new(0.15).with_pad_mode(PadMode::Masked);
        assert_eq!(sentence_weights(&[1.0, 0.0], &[0.0, 1.0], &[true], &p).unwrap(), vec![1.0]);

        let t = [0.6, 0.8, 0.6, 0.8];
        let w = sentence_weights(&[1.0, 0.0], &t, &[true, true], &p).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);

        // sims 0.8 and 0.2 against v = e1
        let t = [0.8, 0.6, 0.2, (1.0f64 - 0.04).sqrt()];
        let w = sentence_weights(&[1.0, 0.0], &t, &[true, true], &p).unwrap();
        assert_abs_diff_eq!(w[0], 0.9820, epsilon = 1e-4);
        assert_abs_diff_eq!(w[1], 0.0180, epsilon = 1e-4);

        assert!(matches!(
            sentence_weights(&[1.0, 0.0], &[0.0, 0.0], &[false], &p),
            Err(CoreError::AllMasked)
        ));
    }

    #[test]
    fn weighted_repr_examples() {
        assert_eq!(weighted_text_repr(&[1.0], &[0.3, 0.4]), vec![0.3, 0.4]);
        let g = weighted_text_repr(&[0.5, 0.5], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(g, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn literal_padding_shrinks_g() {
        let t = [0.6, 0.8, 0.0, 0.0];
        let mask = [true, false];
        // orthogonal image so both logits are 0
        let v = [0.8, -0.6];
        let p = WincelParams::new(0.15);
        let a = sentence_weights(&v, &t, &mask, &p).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
        let g = weighted_text_repr(&a, &t);
        assert_abs_diff_eq!(g[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn wincel_identical_sentences_match_info_nce() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, k, d) = (4, 3, 5);
        let v = random_unit_rows(&mut rng, n, d);
        let t = random_unit_rows(&mut rng, n, d);
        let mut emb = Vec::new();
        for i in 0..n {
            for _ in 0..k {
                emb.extend_from_slice(t.row(i));
            }
        }
        let batch = SentenceBatch::new(n, k, d, emb, vec![true; n * k]).unwrap();
        let w = wincel(&v, &batch, &WincelParams::new(0.15)).unwrap();
        let base = info_nce(&v, &t, 0.15).unwrap();
        for (a, b) in w.per_sample.iter().zip(&base.per_sample) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        for (a, b) in w.grad.as_slice().iter().zip(base.grad.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn batch_validation() {
        assert!(matches!(
            SentenceBatch::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![false, false]),
            Err(CoreError::EmptySentenceSet { record: 0 })
        ));
        assert!(SentenceBatch::new(1, 2, 2, vec![1.0, 0.0, 0.5, 0.0], vec![true, false]).is_err());
        assert!(SentenceBatch::new(1, 1, 2, vec![2.0, 0.0], vec![true]).is_err());
        assert!(SentenceBatch::new(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![true, false]).is_ok());
    }

    #[test]
    fn bootstrap_examples() {
        let logits = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(bootstrap_targets(&logits, 1.0, BootstrapMode::Soft).unwrap(), Matrix::identity(2));
        assert_eq!(bootstrap_targets(&logits, 0.0, BootstrapMode::Hard).unwrap(), Matrix::identity(2));
        let t = bootstrap_targets(&logits, 0.8, BootstrapMode::Soft).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(t.get(0, 0), 0.8 + 0.2 * s, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(0, 1), 0.2 * (1.0 - s), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.7311, epsilon = 1e-4);
        assert!(matches!(
            bootstrap_targets(&logits, 1.5, BootstrapMode::Soft),
            Err(CoreError::BetaOutOfRange(_))
        ));
        assert_eq!(BootstrapMode::Soft.default_beta(), 0.8);
        assert_eq!(BootstrapMode::Hard.default_beta(), 0.9);
    }

    #[test]
    fn soft_ce_entropy_self_consistency() {
        let logits = Matrix::from_vec(2, 3, vec![0.2, -1.0, 0.7, 1.5, 0.0, -0.3]).unwrap();
        let q = row_softmax(&logits);
        let out = soft_cross_entropy(&logits, &q).unwrap();
        for i in 0..2 {
            let h: f64 = -q.row(i).iter().map(|p| p * p.ln()).sum::<f64>();
            assert_abs_diff_eq!(out.per_sample[i], h, epsilon = 1e-12);
        }
    }

    #[test]
    fn soft_ce_hand_case() {
        // logits [[2,0],[0,1]], targets [[1,0],[0.5,0.5]]
        let logits = Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let targets = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        let out = soft_cross_entropy(&logits, &targets).unwrap();
        let r0 = (1.0 + (-2.0f64).exp()).ln();
        let lse1 = (1.0 + 1.0f64.exp()).ln();
        let r1 = 0.5 * lse1 + 0.5 * (lse1 - 1.0);
        assert_abs_diff_eq!(out.per_sample[0], r0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.per_sample[1], r1, epsilon = 1e-9);
        assert_abs_diff_eq!(out.value, 0.5 * (r0 + r1), epsilon = 1e-9);
    }

    #[test]
    fn soft_ce_one_hot_matches_info_nce() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_unit_rows(&mut rng, 5, 6);
        let t = random_unit_rows(&mut rng, 5, 6);
        let tau = 0.07;
        let mut logits = crate::linalg::pairwise_sim(&v, &t).unwrap();
        for x in logits.as_mut_slice() {
            *x /= tau;
        }
        let ce = soft_cross_entropy(&logits, &Matrix::identity(5)).unwrap();
        let nce = info_nce(&v, &t, tau).unwrap();
        for (a, b) in ce.per_sample.iter().zip(&nce.per_sample) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn bootstrap_soft_value_matches_soft_ce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_unit_rows(&mut rng, 4, 6);
        let t = random_unit_rows(&mut rng, 4, 6);
        let tau = 0.07;
        let mut logits = crate::linalg::pairwise_sim(&v, &t).unwrap();
        for x in logits.as_mut_slice() {
            *x /= tau;
        }
        for mode in [BootstrapMode::Soft, BootstrapMode::Hard] {
            let targets = bootstrap_targets(&logits, 0.8, mode).unwrap();
            let ce = soft_cross_entropy(&logits, &targets).unwrap();
            let b = bootstrap_loss(&v, &t, tau, 0.8, mode, None).unwrap();
            assert_abs_diff_eq!(ce.value, b.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn top1_examples() {
        let v = [1.0, 0.0];
        assert_eq!(select_top1(&v, &[0.0, 1.0], &[true]).unwrap(), 0);
        let t = [0.1, 0.99f64.sqrt(), 0.9, 0.19f64.sqrt(), 0.3, 0.91f64.sqrt()];
        assert_eq!(select_top1(&v, &t, &[true, true, true]).unwrap(), 1);
        let t = [0.5, 0.75f64.sqrt(), 0.5, -(0.75f64.sqrt())];
        assert_eq!(select_top1(&v, &t, &[true, true]).unwrap(), 0);
        assert_eq!(select_top1(&v, &t, &[false, true]).unwrap(), 1);
        assert!(matches!(select_top1(&v, &t, &[false, false]), Err(CoreError::AllMasked)));
    }

    #[test]
    fn top1_tie_break_brute_force() {
        // All orderings of three slots where two tie at the maximum.
        let v = [1.0, 0.0];
        let vals = [0.5, 0.5, 0.2];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            let sims: Vec<f64> = p.iter().map(|&i| vals[i]).collect();
            let t: Vec<f64> = sims.iter().flat_map(|&s| [s, (1.0 - s * s).sqrt()]).collect();
            let got = select_top1(&v, &t, &[true; 3]).unwrap();
            let max = sims.iter().cloned().fold(f64::MIN, f64::max);
            let expected = sims.iter().position(|&s| s == max).unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn top_p_single_real_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = [1.0, 0.0, 0.0, 0.0];
        for _ in 0..100 {
            assert_eq!(sample_top_p(&[1.0, 0.0], &t, &[true, false], 0.07, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn top_p_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let v = [1.0, 0.0];
        let t = [0.3, 0.91f64.sqrt(), 0.3, -(0.91f64.sqrt())];
        let zeros = (0..draws)
            .filter(|_| sample_top_p(&v, &t, &[true, true], 0.15, &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / draws as f64 - 0.5).abs() < 0.01);

        // sims [ln 2, 0] with tau 1 -> P(0) = 2/3
        let s = 2.0f64.ln();
        let t = [s, (1.0 - s * s).sqrt(), 0.0, 1.0];
        let zeros = (0..draws)
            .filter(|_| sample_top_p(&v, &t, &[true, true], 1.0, &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / draws as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn top_p_deterministic_given_seed() {
        let v = [1.0, 0.0];
        let t = [0.3, 0.91f64.sqrt(), 0.1, -(0.99f64.sqrt())];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_top_p(&v, &t, &[true, true], 0.5, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn substring_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(substring_augment(&["a", "b"], &mut rng), vec!["a", "b"]);
        assert_eq!(substring_augment(&["a", "b", "c"], &mut rng), vec!["a", "b", "c"]);
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = substring_augment(&words, &mut rng);
            assert!((3..=15).contains(&out.len()));
            // containment oracle: the output occurs as a contiguous run in the input
            let found = words.windows(out.len()).any(|w| w == out.as_slice());
            assert!(found);
        }
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(substring_augment(&words, &mut a), substring_augment(&words, &mut b));
    }

    fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut rows = Vec::new();
        for _ in 0..n {
            let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            rows.push(unit(&raw));
        }
        Matrix::from_rows(&rows, d).unwrap()
    }
}
