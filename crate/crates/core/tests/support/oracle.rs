//! Naive reference implementations used as test oracles.
//!
//! Written with nested loops over `Vec<Vec<f64>>` and direct exponentials,
//! sharing no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

pub type Rows = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn info_nce(v: &Rows, t: &Rows, tau: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = Vec::new();
    for i in 0..n {
        let mut denom = 0.0;
        for j in 0..n {
            denom += (dot(&v[i], &t[j]) / tau).exp();
        }
        let num = (dot(&v[i], &t[i]) / tau).exp();
        out.push(-(num / denom).ln());
    }
    out
}

/// Image→text and text→image terms averaged per sample.
pub fn info_nce_symmetric(v: &Rows, t: &Rows, tau: f64) -> Vec<f64> {
    let n = v.len();
    let row = info_nce(v, t, tau);
    let mut out = Vec::new();
    for j in 0..n {
        let mut denom = 0.0;
        for i in 0..n {
            denom += (dot(&v[i], &t[j]) / tau).exp();
        }
        let num = (dot(&v[j], &t[j]) / tau).exp();
        out.push(0.5 * row[j] - 0.5 * (num / denom).ln());
    }
    out
}

pub struct WincelCase<'a> {
    pub t: &'a [Rows],
    pub mask: &'a [Vec<bool>],
    pub tau: f64,
    pub weight_tau: f64,
    pub masked: bool,
    pub normalize_g: bool,
    pub symmetric: bool,
}

pub fn weights(v: &[f64], t: &Rows, mask: &[bool], weight_tau: f64, masked: bool) -> Vec<f64> {
    let mut e = Vec::new();
    for k in 0..t.len() {
        if masked && !mask[k] {
            e.push(0.0);
        } else {
            e.push((dot(v, &t[k]) / weight_tau).exp());
        }
    }
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn wincel_g(v: &Rows, case: &WincelCase) -> Rows {
    let mut g = Vec::new();
    for i in 0..v.len() {
        let a = weights(&v[i], &case.t[i], &case.mask[i], case.weight_tau, case.masked);
        g.push(combine(&a, &case.t[i], case.normalize_g));
    }
    g
}

pub fn combine(a: &[f64], t: &Rows, normalize: bool) -> Vec<f64> {
    let d = t[0].len();
    let mut g = vec![0.0; d];
    for k in 0..t.len() {
        for x in 0..d {
            g[x] += a[k] * t[k][x];
        }
    }
    if normalize {
        let n = dot(&g, &g).sqrt();
        for x in g.iter_mut() {
            *x /= n;
        }
    }
    g
}

pub fn wincel(v: &Rows, case: &WincelCase) -> Vec<f64> {
    let g = wincel_g(v, case);
    if case.symmetric {
        info_nce_symmetric(v, &g, case.tau)
    } else {
        info_nce(v, &g, case.tau)
    }
}

/// Weighted loss with externally fixed weights.
pub fn wincel_fixed(v: &Rows, alpha: &Rows, case: &WincelCase) -> Vec<f64> {
    let mut g = Vec::new();
    for i in 0..v.len() {
        g.push(combine(&alpha[i], &case.t[i], case.normalize_g));
    }
    if case.symmetric {
        info_nce_symmetric(v, &g, case.tau)
    } else {
        info_nce(v, &g, case.tau)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn soft_cross_entropy(logits: &Rows, targets: &Rows) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..logits.len() {
        let p = softmax(&logits[i]);
        let mut s = 0.0;
        for j in 0..p.len() {
            s -= targets[i][j] * p[j].ln();
        }
        out.push(s);
    }
    out
}

pub fn logits(v: &Rows, t: &Rows, tau: f64) -> Rows {
    v.iter()
        .map(|vi| t.iter().map(|tj| dot(vi, tj) / tau).collect())
        .collect()
}

/// Soft bootstrap with the posterior kept live inside the target.
pub fn bootstrap_soft(v: &Rows, t: &Rows, tau: f64, beta: f64) -> Vec<f64> {
    let z = logits(v, t, tau);
    let mut targets = Vec::new();
    for i in 0..z.len() {
        let p = softmax(&z[i]);
        targets.push(
            (0..p.len())
                .map(|j| beta * if i == j { 1.0 } else { 0.0 } + (1.0 - beta) * p[j])
                .collect(),
        );
    }
    soft_cross_entropy(&z, &targets)
}

pub fn bootstrap_hard_targets(v: &Rows, t: &Rows, tau: f64, beta: f64) -> Rows {
    let z = logits(v, t, tau);
    let mut targets = Vec::new();
    for i in 0..z.len() {
        let mut best = 0;
        for j in 1..z[i].len() {
            if z[i][j] > z[i][best] {
                best = j;
            }
        }
        let mut row = vec![0.0; z[i].len()];
        row[i] += beta;
        row[best] += 1.0 - beta;
        targets.push(row);
    }
    targets
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Central differences of `f` with respect to every entry of `v`.
pub fn central_diff(f: impl Fn(&Rows) -> f64, v: &Rows, h: f64) -> Rows {
    let mut out = v.clone();
    for i in 0..v.len() {
        for j in 0..v[i].len() {
            let mut plus = v.clone();
            let mut minus = v.clone();
            plus[i][j] += h;
            minus[i][j] -= h;
            out[i][j] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    out
}

/// Confusion matrix, precision, recall, F1 by direct counting.
pub fn macro_f1(preds: &[usize], labels: &[usize], c: usize) -> (f64, Vec<f64>, Vec<Vec<u64>>) {
    let mut conf = vec![vec![0u64; c]; c];
    for i in 0..preds.len() {
        conf[labels[i]][preds[i]] += 1;
    }
    let mut f1 = Vec::new();
    for k in 0..c {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for i in 0..preds.len() {
            if preds[i] == k && labels[i] == k {
                tp += 1;
            } else if preds[i] == k {
                fp += 1;
            } else if labels[i] == k {
                fn_ += 1;
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let macro_ = f1.iter().sum::<f64>() / c as f64;
    (macro_, f1, conf)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / preds.len() as f64
}
