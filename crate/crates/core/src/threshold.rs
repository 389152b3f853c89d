//! Splitting scored comments into a qualified and an unqualified group.
//!
//! The main strategy fits a two-component 1-D Gaussian mixture to the
//! reconstruction losses with EM and cuts at the point between the two means
//! where both components are equally likely a posteriori. Percentile and
//! 2-means cuts are available for comparison.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest variance a component may shrink to.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Fewest scores EM will fit.
pub const MIN_EM_SAMPLES: usize = 5;

const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmFit {
    /// Weight of the qualified (lower-mean) component.
    pub pi: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub mu_uq: f64,
    pub sigma_uq: f64,
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

impl GmmFit {
    /// Mixture density `π N(x|μ_q,σ_q) + (1−π) N(x|μ_uq,σ_uq)`.
    pub fn density(&self, x: f64) -> f64 {
        self.pi * normal_pdf(x, self.mu_q, self.sigma_q) + (1.0 - self.pi) * normal_pdf(x, self.mu_uq, self.sigma_uq)
    }

    /// Posterior probability that `x` came from the qualified component.
    pub fn qualified_posterior(&self, x: f64) -> f64 {
        let a = self.pi.ln() + log_normal_pdf(x, self.mu_q, self.sigma_q);
        let b = (1.0 - self.pi).ln() + log_normal_pdf(x, self.mu_uq, self.sigma_uq);
        1.0 / (1.0 + (b - a).exp())
    }

    /// `log(π N_q(x)) − log((1−π) N_uq(x))`; zero at the posterior-0.5 point.
    fn log_odds(&self, x: f64) -> f64 {
        (self.pi.ln() + log_normal_pdf(x, self.mu_q, self.sigma_q))
            - ((1.0 - self.pi).ln() + log_normal_pdf(x, self.mu_uq, self.sigma_uq))
    }
}

pub fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    log_normal_pdf(x, mu, sigma).exp()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_scores(losses: &[f64]) -> Result<()> {
    match losses.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::DegenerateScores(format!("non-finite score {v}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once an iteration gains less log-likelihood than this.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 500,
            tol: 1e-9,
        }
    }
}

struct Params {
    pi: f64,
    mu: [f64; 2],
    var: [f64; 2],
}

/// E-step: responsibilities of component 0 and the total log-likelihood.
fn e_step(x: &[f64], p: &Params, resp: &mut [f64]) -> f64 {
    let sd = [p.var[0].sqrt(), p.var[1].sqrt()];
    let (lw0, lw1) = (p.pi.ln(), (1.0 - p.pi).ln());
    let mut ll = 0.0;
    for (xi, g) in x.iter().zip(resp.iter_mut()) {
        let a = lw0 + log_normal_pdf(*xi, p.mu[0], sd[0]);
        let b = lw1 + log_normal_pdf(*xi, p.mu[1], sd[1]);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        *g = (a - lse).exp();
        ll += lse;
    }
    ll
}

fn m_step(x: &[f64], resp: &[f64], p: &mut Params) {
    let n = x.len() as f64;
    let w0: f64 = resp.iter().sum();
    let w1 = n - w0;
    p.pi = (w0 / n).clamp(MIN_WEIGHT, 1.0 - MIN_WEIGHT);
    if w0 > 0.0 {
        p.mu[0] = x.iter().zip(resp).map(|(x, g)| g * x).sum::<f64>() / w0;
    }
    if w1 > 0.0 {
        p.mu[1] = x.iter().zip(resp).map(|(x, g)| (1.0 - g) * x).sum::<f64>() / w1;
    }
    if w0 > 0.0 {
        let v = x.iter().zip(resp).map(|(x, g)| g * (x - p.mu[0]).powi(2)).sum::<f64>() / w0;
        p.var[0] = v.max(VARIANCE_FLOOR);
    }
    if w1 > 0.0 {
        let v = x
            .iter()
            .zip(resp)
            .map(|(x, g)| (1.0 - g) * (x - p.mu[1]).powi(2))
            .sum::<f64>()
            / w1;
        p.var[1] = v.max(VARIANCE_FLOOR);
    }
}

/// Fits `π N(μ_q, σ_q) + (1−π) N(μ_uq, σ_uq)` to the losses with EM.
///
/// Starts from the 25th/75th percentiles (or min/max if those coincide)
/// with both standard deviations equal to the overall one and π = 0.5.
pub fn fit_em_gmm(losses: &[f64], opts: EmOptions) -> Result<GmmFit> {
    check_scores(losses)?;
    if losses.len() < MIN_EM_SAMPLES {
        return Err(Error::DegenerateScores(format!(
            "EM needs at least {MIN_EM_SAMPLES} scores, got {}",
            losses.len()
        )));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateScores("all scores are identical".into()));
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = (losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
    let (mut lo, mut hi) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    if lo == hi {
        (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    }
    let mut p = Params {
        pi: 0.5,
        mu: [lo, hi],
        var: [var, var],
    };

    let mut resp = vec![0.0; losses.len()];
    let mut trace = vec![e_step(losses, &p, &mut resp)];
    for _ in 0..opts.max_iter {
        m_step(losses, &resp, &mut p);
        let ll = e_step(losses, &p, &mut resp);
        let gain = ll - trace[trace.len() - 1];
        trace.push(ll);
        if gain < opts.tol {
            break;
        }
    }

    let (q, uq) = if p.mu[0] <= p.mu[1] { (0, 1) } else { (1, 0) };
    let pi = if q == 0 { p.pi } else { 1.0 - p.pi };
    Ok(GmmFit {
        pi,
        mu_q: p.mu[q],
        sigma_q: p.var[q].sqrt(),
        mu_uq: p.mu[uq],
        sigma_uq: p.var[uq].sqrt(),
        loglik_trace: trace,
    })
}

/// The loss in `(μ_q, μ_uq)` where both components have posterior 0.5,
/// found by bisection. Falls back to the midpoint of the means when the
/// posterior never crosses 0.5 between them.
pub fn decision_threshold(fit: &GmmFit) -> f64 {
    let (mut lo, mut hi) = (fit.mu_q, fit.mu_uq);
    if lo >= hi {
        return lo;
    }
    let midpoint = 0.5 * (lo + hi);
    let (f_lo, f_hi) = (fit.log_odds(lo), fit.log_odds(hi));
    if f_lo == 0.0 {
        return lo;
    }
    if f_hi == 0.0 {
        return hi;
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() && !f_hi.is_finite() {
        return midpoint;
    }
    let lo_sign = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) || mid == lo || mid == hi {
            break;
        }
        let f = fit.log_odds(mid);
        if f == 0.0 {
            return mid;
        }
        if f.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Gmm,
    /// Keep the lowest `⌊p·n⌋` scores.
    Percentile(f64),
    KMeans2,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Gmm => f.write_str("gmm"),
            Strategy::Percentile(p) => write!(f, "percentile({p})"),
            Strategy::KMeans2 => f.write_str("kmeans2"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts `gmm`, `kmeans2`, `percentile(0.6)` or `percentile:0.6`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "gmm" | "em-gmm" => return Ok(Strategy::Gmm),
            "kmeans2" | "kmeans" => return Ok(Strategy::KMeans2),
            _ => {}
        }
        let arg = s
            .strip_prefix("percentile(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("percentile:"))
            .ok_or_else(|| Error::Config(format!("unknown strategy \"{s}\"")))?;
        let p: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad percentile \"{arg}\"")))?;
        Ok(Strategy::Percentile(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StrategyParams {
    Gmm(GmmFit),
    Percentile { p: f64 },
    KMeans2 { center_low: f64, center_high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub strategy: String,
    pub parameters: StrategyParams,
    /// Cut point: the GMM decision threshold, the midpoint of the k-means
    /// centres, or the largest retained loss for percentiles.
    pub threshold: Option<f64>,
    pub total: usize,
    pub retained: usize,
    pub discarded: usize,
    pub retained_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Retained ids, in input order.
    pub retained: Vec<String>,
    pub discarded: Vec<String>,
    pub report: PartitionReport,
}

/// Lloyd's algorithm with k = 2 on 1-D data, seeded at min and max.
/// Returns the two centres, low first; points at or below their midpoint
/// belong to the low cluster.
pub fn kmeans2(losses: &[f64]) -> Result<(f64, f64)> {
    check_scores(losses)?;
    if losses.is_empty() {
        return Err(Error::DegenerateScores("k-means needs at least one score".into()));
    }
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (min, max);
    let mut assign: Vec<bool> = Vec::new();
    for _ in 0..1000 {
        let mid = 0.5 * (lo + hi);
        let next: Vec<bool> = losses.iter().map(|&x| x <= mid).collect();
        if next == assign {
            break;
        }
        assign = next;
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for (&x, &low) in losses.iter().zip(&assign) {
            if low {
                s0 += x;
                n0 += 1;
            } else {
                s1 += x;
                n1 += 1;
            }
        }
        if n0 > 0 {
            lo = s0 / n0 as f64;
        }
        if n1 > 0 {
            hi = s1 / n1 as f64;
        }
    }
    Ok((lo, hi))
}

/// Splits `(id, loss)` pairs into retained and discarded ids.
pub fn partition(scored: &[(String, f64)], strategy: Strategy, opts: EmOptions) -> Result<Partition> {
    if scored.is_empty() {
        return Err(Error::DegenerateScores("nothing to partition".into()));
    }
    let losses: Vec<f64> = scored.iter().map(|(_, l)| *l).collect();
    check_scores(&losses)?;
    let (keep, parameters, threshold): (Vec<bool>, StrategyParams, Option<f64>) = match strategy {
        Strategy::Gmm => {
            let fit = fit_em_gmm(&losses, opts)?;
            let t = decision_threshold(&fit);
            (
                losses.iter().map(|&l| l <= t).collect(),
                StrategyParams::Gmm(fit),
                Some(t),
            )
        }
        Strategy::KMeans2 => {
            let (lo, hi) = kmeans2(&losses)?;
            let mid = 0.5 * (lo + hi);
            (
                losses.iter().map(|&l| l <= mid).collect(),
                StrategyParams::KMeans2 {
                    center_low: lo,
                    center_high: hi,
                },
                Some(mid),
            )
        }
        Strategy::Percentile(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidPercentile(p));
            }
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| {
                scored[a]
                    .1
                    .total_cmp(&scored[b].1)
                    .then_with(|| scored[a].0.cmp(&scored[b].0))
            });
            let count = ((p * scored.len() as f64).floor() as usize).min(scored.len());
            let mut keep = vec![false; scored.len()];
            for &i in &order[..count] {
                keep[i] = true;
            }
            let boundary = order[..count].last().map(|&i| scored[i].1);
            (keep, StrategyParams::Percentile { p }, boundary)
        }
    };

    let mut retained = Vec::new();
    let mut discarded = Vec::new();
    for ((id, _), k) in scored.iter().zip(&keep) {
        if *k {
            retained.push(id.clone());
        } else {
            discarded.push(id.clone());
        }
    }
    let report = PartitionReport {
        strategy: strategy.to_string(),
        parameters,
        threshold,
        total: scored.len(),
        retained: retained.len(),
        discarded: discarded.len(),
        retained_fraction: retained.len() as f64 / scored.len() as f64,
    };
    Ok(Partition {
        retained,
        discarded,
        report,
    })
}
