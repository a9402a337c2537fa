use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use super::HyperParams;
use crate::error::{Error, Result};

/// Largest stick value kept strictly below 1 so `ln(1 − u)` stays finite.
const STICK_MAX: f64 = 1.0 - f64::EPSILON;

/// Stick-breaking weights `π_j = u_j Π_{k<j}(1 − u_k)` for `j < J`, with the
/// remaining mass `Π_k (1 − u_k)` as the last weight.
pub fn stick_weights(u: &[f64]) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(u.len() + 1);
    let mut remaining = 1.0;
    for &uj in u {
        if !(uj > 0.0 && uj < 1.0) {
            return Err(Error::invalid("stick", format!("{uj} is outside (0, 1)")));
        }
        weights.push(uj * remaining);
        remaining *= 1.0 - uj;
    }
    weights.push(remaining);
    Ok(weights)
}

/// Draws `u_j ~ Beta(1 + n_j, α + Σ_{k>j} n_k)` for the first `J − 1` sticks,
/// given the occupancy counts of all `J` components.
pub fn sample_sticks<R: Rng + ?Sized>(counts: &[usize], alpha: f64, rng: &mut R) -> Vec<f64> {
    let j = counts.len();
    let mut tail: usize = counts.iter().sum();
    let mut u = Vec::with_capacity(j.saturating_sub(1));
    for &n in counts.iter().take(j.saturating_sub(1)) {
        tail -= n;
        let beta = Beta::new(1.0 + n as f64, alpha + tail as f64)
            .expect("Beta parameters are positive");
        u.push(beta.sample(rng).clamp(f64::MIN_POSITIVE, STICK_MAX));
    }
    u
}

/// Conjugate update `α ~ Gamma(e + J − 1, f − Σ_j ln(1 − u_j))` (rate form).
pub fn sample_alpha<R: Rng + ?Sized>(u: &[f64], hp: &HyperParams, rng: &mut R) -> f64 {
    let shape = hp.e + u.len() as f64;
    let rate = hp.f - u.iter().map(|&uj| (-uj).ln_1p()).sum::<f64>();
    let gamma = Gamma::new(shape, 1.0 / rate).expect("Gamma parameters are positive");
    gamma.sample(rng).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{mean, variance};

    #[test]
    fn halves() {
        assert_eq!(stick_weights(&[0.5, 0.5]).unwrap(), vec![0.5, 0.25, 0.25]);
        assert_eq!(stick_weights(&[]).unwrap(), vec![1.0]);
    }

    #[test]
    fn nearly_full_first_stick() {
        let eps = 1e-9;
        let w = stick_weights(&[1.0 - eps, 0.3, 0.6]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-8);
        assert!(w[1..].iter().all(|&x| x < 1e-8));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(stick_weights(&[0.0]).is_err());
        assert!(stick_weights(&[1.0]).is_err());
        assert!(stick_weights(&[0.3, f64::NAN]).is_err());
    }

    #[test]
    fn weights_telescope_to_one() {
        let mut rng = seeded(3);
        for _ in 0..200 {
            let k = rng.random_range(0..40);
            let u: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect();
            let s: f64 = stick_weights(&u).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stick_matches_beta_mean() {
        // All 50 records in component 0 and α = 0.5: u_0 ~ Beta(51, 0.5).
        let mut rng = seeded(11);
        let counts = [50, 0, 0];
        let draws: Vec<f64> = (0..10_000).map(|_| sample_sticks(&counts, 0.5, &mut rng)[0]).collect();
        let (a, b) = (51.0f64, 0.5f64);
        let expect = a / (a + b);
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean(&draws) - expect).abs() < 3.0 * se, "{} vs {expect}", mean(&draws));
    }

    #[test]
    fn empty_data_sticks_follow_prior() {
        let mut rng = seeded(12);
        let alpha = 2.0;
        let draws: Vec<Vec<f64>> = (0..10_000).map(|_| sample_sticks(&[0; 4], alpha, &mut rng)).collect();
        for j in 0..3 {
            let col: Vec<f64> = draws.iter().map(|u| u[j]).collect();
            // Beta(1, α): mean 1/(1+α), variance α/((1+α)²(2+α)).
            let expect = 1.0 / (1.0 + alpha);
            let var = alpha / ((1.0 + alpha).powi(2) * (2.0 + alpha));
            let se = (var / col.len() as f64).sqrt();
            assert!((mean(&col) - expect).abs() < 3.0 * se);
            assert!((variance(&col) - var).abs() < 0.1 * var);
        }
    }

    #[test]
    fn alpha_moments_given_sticks() {
        let hp = HyperParams::default();
        let u = [0.2, 0.5, 0.1, 0.7];
        let shape = hp.e + 4.0;
        let rate = hp.f - u.iter().map(|x: &f64| (1.0 - x).ln()).sum::<f64>();
        let mut rng = seeded(5);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_alpha(&u, &hp, &mut rng)).collect();
        let se = (shape / rate.powi(2) / draws.len() as f64).sqrt();
        assert!((mean(&draws) - shape / rate).abs() < 3.0 * se);
        assert!((variance(&draws) / (shape / rate.powi(2)) - 1.0).abs() < 0.1);
    }

    #[test]
    fn heavier_sticks_shrink_alpha() {
        let hp = HyperParams::default();
        let mut rng = seeded(9);
        let light: Vec<f64> = (0..4000).map(|_| sample_alpha(&[0.1; 5], &hp, &mut rng)).collect();
        let heavy: Vec<f64> = (0..4000).map(|_| sample_alpha(&[0.99; 5], &hp, &mut rng)).collect();
        assert!(mean(&heavy) < mean(&light));
    }

    #[test]
    fn no_sticks_gives_prior_alpha() {
        let hp = HyperParams::default();
        let mut rng = seeded(1);
        let draws: Vec<f64> = (0..20_000).map(|_| sample_alpha(&[], &hp, &mut rng)).collect();
        // Gamma(10, 1): mean 10, variance 10.
        assert!((mean(&draws) - 10.0).abs() < 3.0 * (10.0f64 / 20_000.0).sqrt());
    }
}
