use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;

use super::conjugate::{NigPosterior, SuffStats};
use super::stick::{sample_alpha, sample_sticks, stick_weights};
use super::{Draw, HyperParams, MixtureComponent, PosteriorSamples};
use crate::error::{Error, Result};
use crate::rng::{domain, seeded, substream, SimRng};
use crate::stats::{dot3, LN_2PI};
use crate::trace::AlignedRecord;

/// Records per indicator chunk. Each chunk draws from its own substream, so
/// the chain is identical however the chunks are scheduled.
const INDICATOR_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub components: Vec<MixtureComponent>,
    /// `J − 1` stick proportions.
    pub sticks: Vec<f64>,
    pub alpha: f64,
    /// Component indicator per record (0-based).
    pub z: Vec<usize>,
}

/// Per-component terms of the indicator log-mass.
#[derive(Clone, Copy)]
struct Scorer {
    /// ln π_j − ½ ln(2π σ²_j)
    log_w: f64,
    /// −½ ln(2π σ²_j)
    log_norm: f64,
    half_prec: f64,
    beta: [f64; 3],
}

fn scorers(components: &[MixtureComponent]) -> Vec<Scorer> {
    components
        .iter()
        .map(|c| Scorer {
            log_w: c.pi.ln() - 0.5 * (LN_2PI + c.sigma2.ln()),
            log_norm: -0.5 * (LN_2PI + c.sigma2.ln()),
            half_prec: 0.5 / c.sigma2,
            beta: c.beta,
        })
        .collect()
}

/// Categorical draw with mass ∝ π_j N(y | x'β_j, σ²_j), in log space with
/// max-subtraction. If every weighted mass underflows the record goes to the
/// component with the highest log-density.
fn draw_indicator<R: Rng + ?Sized>(x: &[f64; 3], y: f64, scorers: &[Scorer], buf: &mut [f64], rng: &mut R) -> usize {
    let mut max = f64::NEG_INFINITY;
    for (l, s) in buf.iter_mut().zip(scorers) {
        let r = y - dot3(&s.beta, x);
        *l = s.log_w - r * r * s.half_prec;
        if *l > max {
            max = *l;
        }
    }
    if !max.is_finite() {
        return scorers
            .iter()
            .map(|s| {
                let r = y - dot3(&s.beta, x);
                s.log_norm - r * r * s.half_prec
            })
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(j, _)| j);
    }
    let mut total = 0.0;
    for l in buf.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    let mut target = rng.random::<f64>() * total;
    for (j, &p) in buf.iter().enumerate() {
        if target < p {
            return j;
        }
        target -= p;
    }
    buf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws a component indicator for every record.
pub fn sample_indicators<R: Rng + ?Sized>(
    records: &[AlignedRecord],
    components: &[MixtureComponent],
    rng: &mut R,
) -> Vec<usize> {
    let scorers = scorers(components);
    let mut buf = vec![0.0; components.len()];
    records
        .iter()
        .map(|r| draw_indicator(&r.x, r.y, &scorers, &mut buf, rng))
        .collect()
}

/// Blocked Gibbs sampler for the truncated mixture.
///
/// The chain starts from the prior: α, the sticks and every component are
/// prior draws, all records sit in the first component, and that component
/// is refreshed from its conditional before the first sweep.
pub struct GibbsSampler {
    xs: Vec<[f64; 3]>,
    ys: Vec<f64>,
    hp: HyperParams,
    rng: SimRng,
    state: GibbsState,
    iteration: usize,
}

impl GibbsSampler {
    /// Builds a sampler with exactly `hp.j_max` components. Unlike
    /// [`super::fit`] this accepts any number of records, including none.
    pub fn new(records: &[AlignedRecord], hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        let j = hp.j_max;
        let mut rng = seeded(hp.seed);
        let alpha = Gamma::new(hp.e, 1.0 / hp.f)
            .expect("validated")
            .sample(&mut rng)
            .max(f64::MIN_POSITIVE);
        let stick_prior = Beta::new(1.0, alpha).expect("alpha > 0");
        let sticks: Vec<f64> = (0..j - 1)
            .map(|_| stick_prior.sample(&mut rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
            .collect();
        let weights = stick_weights(&sticks)?;
        let prior = NigPosterior::new(hp, &SuffStats::default())?;
        let components = weights
            .iter()
            .map(|&pi| {
                let (beta, sigma2) = prior.draw(&mut rng);
                MixtureComponent { pi, beta, sigma2 }
            })
            .collect();
        let mut sampler = GibbsSampler {
            xs: records.iter().map(|r| r.x).collect(),
            ys: records.iter().map(|r| r.y).collect(),
            hp: hp.clone(),
            rng,
            state: GibbsState {
                components,
                sticks,
                alpha,
                z: vec![0; records.len()],
            },
            iteration: 0,
        };
        sampler.update_components()?;
        Ok(sampler)
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn with_iteration(&self, err: Error) -> Error {
        match err {
            Error::Numeric { message, .. } => Error::Numeric {
                iteration: self.iteration,
                message,
            },
            other => other,
        }
    }

    fn sample_all_indicators(&mut self) {
        let j = self.state.components.len();
        if j == 1 {
            self.state.z.fill(0);
            return;
        }
        let scorers = scorers(&self.state.components);
        let seed = self.hp.seed;
        let iter = self.iteration as u64;
        let (xs, ys) = (&self.xs, &self.ys);
        self.state
            .z
            .par_chunks_mut(INDICATOR_CHUNK)
            .enumerate()
            .for_each(|(chunk, zs)| {
                let mut rng = substream(seed, domain::INDICATORS, (iter << 32) | chunk as u64);
                let mut buf = vec![0.0; j];
                let start = chunk * INDICATOR_CHUNK;
                for (k, z) in zs.iter_mut().enumerate() {
                    let i = start + k;
                    *z = draw_indicator(&xs[i], ys[i], &scorers, &mut buf, &mut rng);
                }
            });
    }

    fn suff_stats(&self) -> Vec<SuffStats> {
        let mut stats = vec![SuffStats::default(); self.state.components.len()];
        for ((x, &y), &z) in self.xs.iter().zip(&self.ys).zip(&self.state.z) {
            stats[z].push(x, y);
        }
        stats
    }

    /// Redraws (β_j, σ²_j) for every component; returns occupancy counts.
    fn update_components(&mut self) -> Result<Vec<usize>> {
        let stats = self.suff_stats();
        for (c, s) in self.state.components.iter_mut().zip(&stats) {
            let post = NigPosterior::new(&self.hp, s)?;
            let (beta, sigma2) = post.draw(&mut self.rng);
            c.beta = beta;
            c.sigma2 = sigma2;
        }
        Ok(stats.iter().map(|s| s.n).collect())
    }

    /// One full sweep: indicators, component parameters, sticks, α.
    pub fn step(&mut self) -> Result<()> {
        self.sample_all_indicators();
        let counts = self.update_components().map_err(|e| self.with_iteration(e))?;
        self.state.sticks = sample_sticks(&counts, self.state.alpha, &mut self.rng);
        let weights = stick_weights(&self.state.sticks).map_err(|e| self.with_iteration(e))?;
        for (c, w) in self.state.components.iter_mut().zip(weights) {
            c.pi = w;
        }
        self.state.alpha = sample_alpha(&self.state.sticks, &self.hp, &mut self.rng);
        self.iteration += 1;
        Ok(())
    }

    pub fn current_draw(&self) -> Draw {
        Draw {
            alpha: self.state.alpha,
            components: self.state.components.clone(),
        }
    }

    /// Runs `n_iter` sweeps and keeps every `thin`-th draw after burn-in.
    pub fn run(mut self) -> Result<PosteriorSamples> {
        let mut draws = Vec::with_capacity(self.hp.retained_draws());
        for it in 0..self.hp.n_iter {
            self.step()?;
            if it >= self.hp.burn_in && (it - self.hp.burn_in) % self.hp.thin == 0 {
                draws.push(self.current_draw());
            }
            if (it + 1) % 1000 == 0 {
                log::debug!(
                    "gibbs sweep {}/{}: alpha={:.3} occupied={}",
                    it + 1,
                    self.hp.n_iter,
                    self.state.alpha,
                    self.occupied()
                );
            }
        }
        Ok(PosteriorSamples {
            hyperparams: self.hp,
            draws,
            n_records_fitted: self.xs.len(),
        })
    }

    /// Number of components holding at least one record.
    pub fn occupied(&self) -> usize {
        let mut seen = vec![false; self.state.components.len()];
        for &z in &self.state.z {
            seen[z] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}
