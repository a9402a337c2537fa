use nalgebra::{Cholesky, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::HyperParams;
use crate::error::{Error, Result};

/// Sufficient statistics of the records assigned to one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub xtx: Matrix3<f64>,
    pub xty: Vector3<f64>,
    pub yty: f64,
}

impl Default for SuffStats {
    fn default() -> Self {
        SuffStats {
            n: 0,
            xtx: Matrix3::zeros(),
            xty: Vector3::zeros(),
            yty: 0.0,
        }
    }
}

impl SuffStats {
    #[inline]
    pub fn push(&mut self, x: &[f64; 3], y: f64) {
        let xv = Vector3::from(*x);
        self.n += 1;
        self.xtx += xv * xv.transpose();
        self.xty += xv * y;
        self.yty += y * y;
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a [f64; 3], f64)>) -> Self {
        let mut s = SuffStats::default();
        for (x, y) in pairs {
            s.push(x, y);
        }
        s
    }
}

/// Normal–Inverse-Gamma posterior of one component:
/// `σ² ~ IG(a*, b*)`, `β | σ² ~ N(μ*, σ² V*)`, with `V*⁻¹ = V_β⁻¹ + X'X`.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub mean: Vector3<f64>,
    /// Cholesky factor of the posterior precision `V*⁻¹`.
    precision_chol: Cholesky<f64, nalgebra::U3>,
    pub shape: f64,
    pub scale: f64,
}

impl NigPosterior {
    pub fn new(hp: &HyperParams, stats: &SuffStats) -> Result<Self> {
        let prior_prec = 1.0 / hp.lambda;
        let mu0 = Vector3::from(hp.mu_beta);
        let precision = stats.xtx + Matrix3::identity() * prior_prec;
        let chol = Cholesky::new(precision).ok_or_else(|| {
            let diag = precision.diagonal();
            Error::Numeric {
                iteration: 0,
                message: format!(
                    "posterior precision is not positive definite (n={}, diagonal=[{:.3e}, {:.3e}, {:.3e}])",
                    stats.n, diag[0], diag[1], diag[2]
                ),
            }
        })?;
        let rhs = mu0 * prior_prec + stats.xty;
        let mean = chol.solve(&rhs);
        let quad = stats.yty + prior_prec * mu0.dot(&mu0) - mean.dot(&rhs);
        let shape = hp.a + stats.n as f64 / 2.0;
        let scale = hp.b + 0.5 * quad.max(0.0);
        if !(mean.iter().all(|m| m.is_finite()) && scale.is_finite()) {
            return Err(Error::Numeric {
                iteration: 0,
                message: format!("non-finite posterior for a component with n={}", stats.n),
            });
        }
        Ok(NigPosterior {
            mean,
            precision_chol: chol,
            shape,
            scale,
        })
    }

    /// Posterior covariance scale `V*`.
    pub fn cov_scale(&self) -> Matrix3<f64> {
        self.precision_chol.inverse()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 3], f64) {
        let sigma2 = sample_inv_gamma(self.shape, self.scale, rng);
        // With V*⁻¹ = L Lᵀ, w = L⁻ᵀ z has covariance V*.
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let w = self
            .precision_chol
            .l_dirty()
            .transpose()
            .solve_upper_triangular(&z)
            .unwrap_or(z);
        let beta = self.mean + w * sigma2.sqrt();
        ([beta[0], beta[1], beta[2]], sigma2)
    }
}

/// `σ² ~ IG(shape, scale)` as the reciprocal of a Gamma(shape, 1/scale) draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("Inverse-Gamma parameters are positive");
    (1.0 / g.sample(rng)).clamp(f64::MIN_POSITIVE, f64::MAX)
}

/// Draws `(β_j, σ²_j)` from the conjugate posterior given the records
/// currently assigned to component `j`. With no records this is a prior draw.
pub fn sample_component_params<R: Rng + ?Sized>(
    stats: &SuffStats,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<([f64; 3], f64)> {
    Ok(NigPosterior::new(hp, stats)?.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{mean, variance};
    use rand_distr::Normal;

    /// 3×3 inverse by cofactors, kept apart from the Cholesky path.
    fn inv3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let det = m[0][0] * c(1, 2, 1, 2) - m[0][1] * c(1, 2, 0, 2) + m[0][2] * c(1, 2, 0, 1);
        let adj = [
            [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
            [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
            [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
        ];
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = adj[i][j] / det;
            }
        }
        out
    }

    struct Oracle {
        mu: [f64; 3],
        v: [[f64; 3]; 3],
        a: f64,
        b: f64,
    }

    fn closed_form(xs: &[[f64; 3]], ys: &[f64], hp: &HyperParams) -> Oracle {
        let mut p = [[0.0; 3]; 3];
        let mut r = [0.0; 3];
        for i in 0..3 {
            p[i][i] = 1.0 / hp.lambda;
            r[i] = hp.mu_beta[i] / hp.lambda;
        }
        let mut yy = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..3 {
                for j in 0..3 {
                    p[i][j] += x[i] * x[j];
                }
                r[i] += x[i] * y;
            }
            yy += y * y;
        }
        let v = inv3(p);
        let mut mu = [0.0; 3];
        for i in 0..3 {
            mu[i] = (0..3).map(|j| v[i][j] * r[j]).sum();
        }
        let m0: f64 = hp.mu_beta.iter().map(|m| m * m).sum::<f64>() / hp.lambda;
        let mu_p_mu: f64 = (0..3).map(|i| mu[i] * r[i]).sum();
        Oracle {
            mu,
            v,
            a: hp.a + xs.len() as f64 / 2.0,
            b: hp.b + 0.5 * (yy + m0 - mu_p_mu),
        }
    }

    fn synth(n: usize, beta: [f64; 3], sigma: f64, seed: u64) -> (Vec<[f64; 3]>, Vec<f64>) {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let xs: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), 9.81 + rng.random_range(-0.3..0.3)])
            .collect();
        let ys = xs
            .iter()
            .map(|x| x[0] * beta[0] + x[1] * beta[1] + x[2] * beta[2] + noise.sample(&mut rng))
            .collect();
        (xs, ys)
    }

    #[test]
    fn posterior_parameters_match_closed_form() {
        let hp = HyperParams { mu_beta: [0.1, -0.2, 0.05], ..Default::default() };
        let (xs, ys) = synth(200, [0.5, 0.2, 0.0], 0.1, 1);
        let stats = SuffStats::from_pairs(xs.iter().zip(ys.iter().copied()));
        let post = NigPosterior::new(&hp, &stats).unwrap();
        let oracle = closed_form(&xs, &ys, &hp);
        for i in 0..3 {
            assert!((post.mean[i] - oracle.mu[i]).abs() < 1e-9);
            for j in 0..3 {
                assert!((post.cov_scale()[(i, j)] - oracle.v[i][j]).abs() < 1e-9);
            }
        }
        assert_eq!(post.shape, oracle.a);
        assert!((post.scale - oracle.b).abs() < 1e-8 * oracle.b);
    }

    #[test]
    fn draws_center_on_closed_form() {
        let hp = HyperParams::default();
        let (xs, ys) = synth(500, [0.5, 0.0, 0.0], 0.1, 2);
        let oracle = closed_form(&xs, &ys, &hp);
        let stats = SuffStats::from_pairs(xs.iter().zip(ys.iter().copied()));
        let mut rng = seeded(3);
        let draws: Vec<([f64; 3], f64)> =
            (0..4000).map(|_| sample_component_params(&stats, &hp, &mut rng).unwrap()).collect();
        let b1: Vec<f64> = draws.iter().map(|d| d.0[0]).collect();
        assert!((mean(&b1) - oracle.mu[0]).abs() < 0.03);
        let s2: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let expect_s2 = oracle.b / (oracle.a - 1.0);
        let sd_s2 = expect_s2 / (oracle.a - 2.0).sqrt();
        assert!((mean(&s2) - expect_s2).abs() < 4.0 * sd_s2 / (s2.len() as f64).sqrt());
        // Marginal Var[β₁] = E[σ²] V*₁₁.
        let var_b1 = expect_s2 * oracle.v[0][0];
        assert!((variance(&b1) / var_b1 - 1.0).abs() < 0.1);
    }

    #[test]
    fn vague_prior_recovers_ols() {
        let hp = HyperParams { lambda: 1e12, ..Default::default() };
        let (xs, ys) = synth(5000, [1.0, -0.5, 0.02], 0.2, 4);
        // OLS through the normal equations with the cofactor inverse.
        let mut xtx = [[0.0; 3]; 3];
        let mut xty = [0.0; 3];
        for (x, &y) in xs.iter().zip(&ys) {
            for i in 0..3 {
                for j in 0..3 {
                    xtx[i][j] += x[i] * x[j];
                }
                xty[i] += x[i] * y;
            }
        }
        let inv = inv3(xtx);
        let ols: Vec<f64> = (0..3).map(|i| (0..3).map(|j| inv[i][j] * xty[j]).sum()).collect();
        let stats = SuffStats::from_pairs(xs.iter().zip(ys.iter().copied()));
        let post = NigPosterior::new(&hp, &stats).unwrap();
        for i in 0..3 {
            assert!((post.mean[i] - ols[i]).abs() < 1e-6, "{i}: {} vs {}", post.mean[i], ols[i]);
        }
    }

    #[test]
    fn empty_component_draws_from_prior() {
        let hp = HyperParams { a: 5.0, b: 2.0, mu_beta: [1.0, 0.0, -1.0], ..Default::default() };
        let mut rng = seeded(8);
        let draws: Vec<([f64; 3], f64)> = (0..20_000)
            .map(|_| sample_component_params(&SuffStats::default(), &hp, &mut rng).unwrap())
            .collect();
        let s2: Vec<f64> = draws.iter().map(|d| d.1).collect();
        // IG(5, 2): mean 0.5, variance 0.25/3.
        let se = (0.25f64 / 3.0 / s2.len() as f64).sqrt();
        assert!((mean(&s2) - 0.5).abs() < 3.0 * se);
        for i in 0..3 {
            let bi: Vec<f64> = draws.iter().map(|d| d.0[i]).collect();
            // Var[β] = λ E[σ²] = 2.5.
            let se = (2.5f64 / bi.len() as f64).sqrt();
            assert!((mean(&bi) - hp.mu_beta[i]).abs() < 3.0 * se);
            assert!((variance(&bi) / 2.5 - 1.0).abs() < 0.1);
        }
    }
}
