//! Two-component one-dimensional Gaussian mixtures fitted by EM.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use crate::error::{NlabError, Result};

/// Which per-sample statistic a mixture was fitted on. Decides which
/// component counts as clean: lower loss, or higher confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Loss,
    Confidence,
}

impl Feature {
    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Loss => "loss",
            Feature::Confidence => "confidence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Index (0 or 1) of the clean component.
    pub clean_component: usize,
    pub feature: Feature,
    /// Set when the input had no spread and the single-cluster fallback
    /// was used; every posterior is then 0.5.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the mean per-sample log-likelihood improves by less.
    pub tol: f64,
    /// Variance floor as a fraction of the sample variance.
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 200,
            tol: 1e-9,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood before each M-step of the kept restart, plus
    /// the final value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean) * (x - mean) / var)
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, Copy)]
struct Params {
    w: [f64; 2],
    mu: [f64; 2],
    var: [f64; 2],
}

/// Parameters from a hard split of the data; `lower` selects component 0.
fn from_partition(values: &[f64], lower: impl Fn(usize, f64) -> bool, floor: f64) -> Option<Params> {
    let mut acc = [[0.0f64; 3]; 2];
    for (i, &v) in values.iter().enumerate() {
        let k = usize::from(!lower(i, v));
        acc[k][0] += 1.0;
        acc[k][1] += v;
        acc[k][2] += v * v;
    }
    if acc[0][0] == 0.0 || acc[1][0] == 0.0 {
        return None;
    }
    let n = values.len() as f64;
    let mut p = Params {
        w: [0.0; 2],
        mu: [0.0; 2],
        var: [0.0; 2],
    };
    for k in 0..2 {
        p.w[k] = acc[k][0] / n;
        p.mu[k] = acc[k][1] / acc[k][0];
        p.var[k] = (acc[k][2] / acc[k][0] - p.mu[k] * p.mu[k]).max(floor);
    }
    Some(p)
}

/// Lower half by rank against upper half; ties at the median are split by
/// index so both halves are non-empty.
fn median_split(values: &[f64], floor: f64) -> Option<Params> {
    let half = values.len() / 2;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    from_partition(values, |i, _| rank[i] < half, floor)
}

/// Lloyd iterations for two centroids seeded at the extremes.
fn two_means(values: &[f64], floor: f64) -> Option<Params> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut c = [lo, hi];
    for _ in 0..100 {
        let cut = 0.5 * (c[0] + c[1]);
        let p = from_partition(values, |_, v| v <= cut, floor)?;
        if p.mu == c {
            break;
        }
        c = p.mu;
    }
    let cut = 0.5 * (c[0] + c[1]);
    from_partition(values, |_, v| v <= cut, floor)
}

/// Runs EM from `init`; returns final params and the log-likelihood trace.
fn em(values: &[f64], init: Params, opts: EmOptions, floor: f64) -> (Params, Vec<f64>, usize, bool) {
    let n = values.len() as f64;
    let mut p = init;
    let mut trace = Vec::new();
    let mut resp = vec![0.0f64; values.len()];
    let mut converged = false;
    let mut iters = 0;
    loop {
        // E-step
        let lw = [p.w[0].ln(), p.w[1].ln()];
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let a = lw[0] + log_normal(x, p.mu[0], p.var[0]);
            let b = lw[1] + log_normal(x, p.mu[1], p.var[1]);
            let lse = log_add(a, b);
            ll += lse;
            *r = (a - lse).exp();
        }
        if let Some(&prev) = trace.last() {
            if (ll - prev) / n < opts.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iters == opts.max_iters {
            break;
        }
        // M-step
        let mut s = [[0.0f64; 3]; 2];
        for (&r, &x) in resp.iter().zip(values) {
            let q = 1.0 - r;
            s[0][0] += r;
            s[0][1] += r * x;
            s[1][0] += q;
            s[1][1] += q * x;
        }
        let mut next = p;
        for k in 0..2 {
            if s[k][0] <= 0.0 {
                // component collapsed; keep previous parameters
                return (p, trace, iters, false);
            }
            next.w[k] = s[k][0] / n;
            next.mu[k] = s[k][1] / s[k][0];
        }
        for (&r, &x) in resp.iter().zip(values) {
            s[0][2] += r * (x - next.mu[0]) * (x - next.mu[0]);
            s[1][2] += (1.0 - r) * (x - next.mu[1]) * (x - next.mu[1]);
        }
        for k in 0..2 {
            next.var[k] = (s[k][2] / s[k][0]).max(floor);
        }
        p = next;
        iters += 1;
    }
    (p, trace, iters, converged)
}

/// Fits a two-component mixture to `values` by EM.
///
/// Two initializations are tried (median split and 2-means); the fit with
/// the higher final log-likelihood is kept. Inputs without spread fall
/// back to a single cluster with both components at the sample mean.
pub fn fit_gmm_1d(values: &[f64], feature: Feature, opts: EmOptions) -> Result<GmmFit> {
    if values.len() < 4 {
        return Err(NlabError::validation(format!(
            "GMM fit needs at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NlabError::validation("GMM fit on non-finite values"));
    }
    let (mean, var) = moments(values);
    let floor = opts.variance_floor * var;
    let fallback = || GmmFit {
        model: GmmModel {
            weights: [0.5, 0.5],
            means: [mean, mean],
            variances: [var.max(f64::MIN_POSITIVE); 2],
            clean_component: 0,
            feature,
            degenerate: true,
        },
        trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    if !(var > 0.0) || !(floor > 0.0) {
        return Ok(fallback());
    }

    let mut best: Option<(Params, Vec<f64>, usize, bool)> = None;
    for init in [median_split(values, floor), two_means(values, floor)]
        .into_iter()
        .flatten()
    {
        let run = em(values, init, opts, floor);
        let better = match &best {
            None => true,
            Some(b) => run.1.last() > b.1.last(),
        };
        if better {
            best = Some(run);
        }
    }
    let Some((p, trace, iterations, converged)) = best else {
        return Ok(fallback());
    };
    let clean_component = match feature {
        Feature::Loss => usize::from(p.mu[1] < p.mu[0]),
        Feature::Confidence => usize::from(p.mu[1] > p.mu[0]),
    };
    Ok(GmmFit {
        model: GmmModel {
            weights: p.w,
            means: p.mu,
            variances: p.var,
            clean_component,
            feature,
            degenerate: false,
        },
        trace,
        iterations,
        converged,
    })
}

impl GmmModel {
    fn log_odds(&self, x: f64) -> f64 {
        let c = self.clean_component;
        let o = 1 - c;
        (self.weights[c].ln() + log_normal(x, self.means[c], self.variances[c]))
            - (self.weights[o].ln() + log_normal(x, self.means[o], self.variances[o]))
    }

    /// Probability that `value` came from the clean component.
    ///
    /// With unequal variances the log-odds is a quadratic whose turning
    /// point lies outside the interval between the means; past it the
    /// wider component would win again. Values beyond the turning point are
    /// evaluated at it, so the posterior is monotone in `value` (falling
    /// for loss, rising for confidence).
    pub fn posterior_clean(&self, value: f64) -> f64 {
        if self.degenerate {
            return 0.5;
        }
        let mut x = value;
        let (v0, v1) = (self.variances[0], self.variances[1]);
        if v0 != v1 {
            let turn = (self.means[0] / v0 - self.means[1] / v1) / (1.0 / v0 - 1.0 / v1);
            let lo = self.means[0].min(self.means[1]);
            let hi = self.means[0].max(self.means[1]);
            if turn <= lo {
                x = x.max(turn);
            } else if turn >= hi {
                x = x.min(turn);
            }
        }
        let z = self.log_odds(x);
        // logistic in a form that never overflows
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(w: [f64; 2], mu: [f64; 2], var: [f64; 2]) -> GmmModel {
        GmmModel {
            weights: w,
            means: mu,
            variances: var,
            clean_component: 0,
            feature: Feature::Loss,
            degenerate: false,
        }
    }

    #[test]
    fn separable_clusters() {
        let fit = fit_gmm_1d(&[0.0, 0.0, 10.0, 10.0], Feature::Loss, EmOptions::default()).unwrap();
        let m = &fit.model;
        let (lo, hi) = if m.means[0] < m.means[1] { (0, 1) } else { (1, 0) };
        assert!(m.means[lo].abs() < 1e-6);
        assert!((m.means[hi] - 10.0).abs() < 1e-6);
        assert!((m.weights[0] - 0.5).abs() < 1e-9);
        assert_eq!(m.clean_component, lo);
    }

    #[test]
    fn clean_component_follows_feature() {
        let vals = [0.1, 0.12, 0.11, 0.9, 0.92, 0.88];
        let loss = fit_gmm_1d(&vals, Feature::Loss, EmOptions::default()).unwrap().model;
        let conf = fit_gmm_1d(&vals, Feature::Confidence, EmOptions::default())
            .unwrap()
            .model;
        assert!(loss.means[loss.clean_component] < 0.5);
        assert!(conf.means[conf.clean_component] > 0.5);
        assert!((loss.weights[0] + loss.weights[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_falls_back() {
        let fit = fit_gmm_1d(&[2.5; 10], Feature::Loss, EmOptions::default()).unwrap();
        assert!(fit.model.degenerate);
        assert_eq!(fit.model.means, [2.5, 2.5]);
        assert_eq!(fit.model.posterior_clean(2.5), 0.5);
        assert_eq!(fit.model.posterior_clean(-100.0), 0.5);
    }

    #[test]
    fn too_few_values_rejected() {
        assert!(fit_gmm_1d(&[1.0, 2.0, 3.0], Feature::Loss, EmOptions::default()).is_err());
        assert!(fit_gmm_1d(&[1.0, 2.0, f64::NAN, 3.0], Feature::Loss, EmOptions::default()).is_err());
    }

    #[test]
    fn posterior_at_midpoint_is_half() {
        let m = model([0.5, 0.5], [0.0, 4.0], [1.0, 1.0]);
        assert_eq!(m.posterior_clean(2.0), 0.5);
    }

    #[test]
    fn posterior_dominant_at_clean_mean() {
        let m = model([0.5, 0.5], [0.0, 40.0], [1.0, 1.0]);
        assert!(m.posterior_clean(0.0) > 1.0 - 1e-12);
    }

    #[test]
    fn posterior_matches_bayes_rule() {
        let m = model([0.3, 0.7], [0.0, 4.0], [1.0, 1.0]);
        let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * PI).sqrt();
        let a = 0.3 * pdf(1.0, 0.0);
        let b = 0.7 * pdf(1.0, 4.0);
        assert_relative_eq!(m.posterior_clean(1.0), a / (a + b), epsilon = 1e-14);
    }

    #[test]
    fn posterior_monotone_with_unequal_variances() {
        for var in [[0.2, 3.0], [3.0, 0.2]] {
            let m = model([0.4, 0.6], [0.0, 2.0], var);
            let mut prev = f64::INFINITY;
            for i in -400..=600 {
                let p = m.posterior_clean(i as f64 * 0.02);
                assert!(p <= prev + 1e-15, "var {var:?} at {}", i as f64 * 0.02);
                prev = p;
            }
        }
    }
}
