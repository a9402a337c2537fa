//! Truncated Dirichlet-process mixture of Gaussian linear regressions.
//!
//! The model explains the untrusted speed variation `y` through the trusted
//! acceleration vector `x` as
//!
//! ```text
//! y ~ Σ_j π_j N(y | x'β_j, σ²_j)
//! π_j = u_j Π_{k<j} (1 − u_k),   u_j | α ~ Beta(1, α)
//! α ~ Gamma(e, f)
//! β_j | σ²_j ~ N(μ_β, σ²_j λ I)
//! σ²_j ~ InvGamma(a, b)
//! ```
//!
//! truncated at `J` components (never more than the number of records), and
//! fitted with a blocked Gibbs sampler over component indicators, the
//! conjugate Normal–Inverse-Gamma component parameters, the sticks and α.

mod conjugate;
mod gibbs;
mod stick;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::trace::AlignedRecord;

pub use conjugate::{sample_component_params, NigPosterior, SuffStats};
pub use gibbs::{sample_indicators, GibbsSampler, GibbsState};
pub use stick::{sample_alpha, sample_sticks, stick_weights};

/// Minimum number of records `fit` accepts.
pub const MIN_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Gamma shape for α.
    pub e: f64,
    /// Gamma rate for α.
    pub f: f64,
    pub mu_beta: [f64; 3],
    /// Prior covariance scale: V_β = λ I.
    pub lambda: f64,
    /// Inverse-Gamma shape for σ².
    pub a: f64,
    /// Inverse-Gamma scale for σ².
    pub b: f64,
    pub j_max: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            e: 10.0,
            f: 1.0,
            mu_beta: [0.0; 3],
            lambda: 5.0,
            a: 2.0,
            b: 0.5,
            j_max: 30,
            n_iter: 30_000,
            burn_in: 15_000,
            thin: 1,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("e", self.e),
            ("f", self.f),
            ("lambda", self.lambda),
            ("a", self.a),
            ("b", self.b),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("hyperparameters", format!("{name} must be > 0, got {v}")));
            }
        }
        if self.mu_beta.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("hyperparameters", "mu_beta must be finite"));
        }
        if self.j_max == 0 {
            return Err(Error::invalid("hyperparameters", "j_max must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("hyperparameters", "thin must be at least 1"));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::invalid(
                "hyperparameters",
                format!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter),
            ));
        }
        Ok(())
    }

    /// Number of draws a full run retains.
    pub fn retained_draws(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub pi: f64,
    pub beta: [f64; 3],
    pub sigma2: f64,
}

impl MixtureComponent {
    #[inline]
    pub fn mean(&self, x: &[f64; 3]) -> f64 {
        stats::dot3(&self.beta, x)
    }
}

/// One retained Gibbs draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub alpha: f64,
    pub components: Vec<MixtureComponent>,
}

impl Draw {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("draw", format!("alpha {} is not positive", self.alpha)));
        }
        if self.components.is_empty() {
            return Err(Error::invalid("draw", "no components"));
        }
        let mut total = 0.0;
        for c in &self.components {
            if !(0.0..=1.0).contains(&c.pi) {
                return Err(Error::invalid("draw", format!("weight {} outside [0,1]", c.pi)));
            }
            if !(c.sigma2.is_finite() && c.sigma2 > 0.0) {
                return Err(Error::invalid("draw", format!("sigma2 {} is not positive", c.sigma2)));
            }
            if c.beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::invalid("draw", "non-finite beta"));
            }
            total += c.pi;
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("draw", format!("weights sum to {total}")));
        }
        Ok(())
    }

    /// Index of the heaviest component.
    pub fn dominant(&self) -> usize {
        self.components
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.pi.total_cmp(&b.1.pi))
            .map_or(0, |(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub hyperparams: HyperParams,
    pub draws: Vec<Draw>,
    pub n_records_fitted: usize,
}

impl PosteriorSamples {
    pub fn validate(&self) -> Result<()> {
        if self.draws.is_empty() {
            return Err(Error::invalid("posterior", "no draws"));
        }
        for (i, d) in self.draws.iter().enumerate() {
            d.validate().map_err(|e| Error::invalid("posterior", format!("draw {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.draws.first().map_or(0, |d| d.components.len())
    }

    /// Per-draw values of `f(draw)`.
    pub fn trace<F: Fn(&Draw) -> f64>(&self, f: F) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }

    /// β of the heaviest component of each draw. Picking the dominant
    /// component per draw sidesteps label switching between draws.
    pub fn dominant_betas(&self) -> Vec<[f64; 3]> {
        self.draws
            .iter()
            .map(|d| d.components[d.dominant()].beta)
            .collect()
    }
}

/// Fits the mixture to clean records.
///
/// Requires at least [`MIN_RECORDS`] records, none labelled manipulated. The
/// truncation level is capped at the number of records.
pub fn fit(records: &[AlignedRecord], hp: &HyperParams) -> Result<PosteriorSamples> {
    hp.validate()?;
    if records.len() < MIN_RECORDS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_RECORDS} records to fit, got {}",
            records.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| r.is_manipulated()) {
        return Err(Error::Precondition(format!(
            "training data must be clean; record t={} is labelled manipulated",
            r.t
        )));
    }
    if let Some(r) = records.iter().find(|r| !r.is_finite()) {
        return Err(Error::Precondition(format!("record t={} is not finite", r.t)));
    }
    let hp = HyperParams {
        j_max: hp.j_max.min(records.len()),
        ..hp.clone()
    };
    GibbsSampler::new(records, &hp)?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonEmptySummary {
    /// Number of components with π ≥ threshold, per draw.
    pub per_draw: Vec<usize>,
    /// `(component index, mean weight)` for components whose mean weight is
    /// at least the threshold, heaviest first.
    pub components: Vec<(usize, f64)>,
}

pub const NONEMPTY_THRESHOLD: f64 = 1e-5;

pub fn nonempty_components(samples: &PosteriorSamples, threshold: f64) -> NonEmptySummary {
    let j = samples.n_components();
    let mut mean_w = vec![0.0; j];
    let mut per_draw = Vec::with_capacity(samples.draws.len());
    for d in &samples.draws {
        per_draw.push(d.components.iter().filter(|c| c.pi >= threshold).count());
        for (m, c) in mean_w.iter_mut().zip(&d.components) {
            *m += c.pi;
        }
    }
    let n = samples.draws.len().max(1) as f64;
    let mut components: Vec<(usize, f64)> = mean_w
        .into_iter()
        .map(|w| w / n)
        .enumerate()
        .filter(|&(_, w)| w >= threshold)
        .collect();
    components.sort_by(|a, b| b.1.total_cmp(&a.1));
    NonEmptySummary { per_draw, components }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(pis: &[f64]) -> Draw {
        Draw {
            alpha: 1.0,
            components: pis
                .iter()
                .map(|&pi| MixtureComponent { pi, beta: [0.0; 3], sigma2: 1.0 })
                .collect(),
        }
    }

    fn samples(draws: Vec<Draw>) -> PosteriorSamples {
        PosteriorSamples { hyperparams: HyperParams::default(), draws, n_records_fitted: 0 }
    }

    #[test]
    fn hyperparam_validation() {
        assert!(HyperParams::default().validate().is_ok());
        let bad = HyperParams { burn_in: 10, n_iter: 10, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { lambda: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { j_max: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(HyperParams::default().retained_draws(), 15_000);
        let hp = HyperParams { n_iter: 100, burn_in: 50, thin: 3, ..Default::default() };
        assert_eq!(hp.retained_draws(), 17);
    }

    #[test]
    fn default_prior_mean_of_alpha() {
        let hp = HyperParams::default();
        assert_eq!(hp.e / hp.f, 10.0);
    }

    #[test]
    fn nonempty_counts() {
        let s = samples(vec![draw(&[1.0, 0.0]), draw(&[1.0, 0.0])]);
        let summary = nonempty_components(&s, NONEMPTY_THRESHOLD);
        assert_eq!(summary.per_draw, vec![1, 1]);
        assert_eq!(summary.components, vec![(0, 1.0)]);

        let s = samples(vec![draw(&[0.2, 0.5, 0.3 - 1e-6, 1e-6])]);
        let summary = nonempty_components(&s, NONEMPTY_THRESHOLD);
        assert_eq!(summary.components.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(summary.per_draw, vec![3]);

        // Nothing but a single full-weight component can reach threshold 1.
        assert_eq!(nonempty_components(&s, 1.0).components.len(), 0);
        let single = samples(vec![draw(&[1.0])]);
        assert_eq!(nonempty_components(&single, 1.0).components.len(), 1);
    }

    #[test]
    fn fit_preconditions() {
        let hp = HyperParams { n_iter: 20, burn_in: 10, ..Default::default() };
        let rec = AlignedRecord { t: 0, y: 0.0, x: [0.0, 0.0, 9.8], label: None };
        assert!(matches!(fit(&[rec; 5], &hp), Err(Error::Precondition(_))));
        let mut recs = vec![rec; 12];
        recs[3].label = Some(true);
        assert!(matches!(fit(&recs, &hp), Err(Error::Precondition(_))));
    }

    #[test]
    fn draw_validation() {
        assert!(draw(&[0.5, 0.5]).validate().is_ok());
        assert!(draw(&[0.5, 0.4]).validate().is_err());
        let mut d = draw(&[1.0]);
        d.components[0].sigma2 = 0.0;
        assert!(d.validate().is_err());
    }
}
