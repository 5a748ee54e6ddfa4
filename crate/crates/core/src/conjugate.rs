//! Normal-gamma prior over the mean and precision of a Gaussian travel speed,
//! conjugate posterior updates, and their derivatives with respect to the
//! prior hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters `(μ, κ, α, β)`; `κ, α, β > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    mu: f64,
    kappa: f64,
    alpha: f64,
    beta: f64,
}

impl NormalGamma {
    pub fn new(mu: f64, kappa: f64, alpha: f64, beta: f64) -> Result<Self> {
        let ng = NormalGamma {
            mu,
            kappa,
            alpha,
            beta,
        };
        if ![mu, kappa, alpha, beta].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "normal-gamma hyperparameters {ng:?}"
            )));
        }
        if kappa <= 0.0 || alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::InvalidValue(format!(
                "normal-gamma needs kappa, alpha, beta > 0, got {ng:?}"
            )));
        }
        Ok(ng)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.mu, self.kappa, self.alpha, self.beta]
    }
}

/// Derivatives of a scalar with respect to `(μ, κ, α, β)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaGrad {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGammaGrad {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mu, self.kappa, self.alpha, self.beta]
    }

    pub fn scaled(self, k: f64) -> Self {
        NormalGammaGrad {
            mu: self.mu * k,
            kappa: self.kappa * k,
            alpha: self.alpha * k,
            beta: self.beta * k,
        }
    }
}

/// Count, mean and biased (divisor `m`) variance of a set of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub m: usize,
    pub mean: f64,
    pub var_biased: f64,
}

impl SampleStats {
    pub const EMPTY: SampleStats = SampleStats {
        m: 0,
        mean: 0.0,
        var_biased: 0.0,
    };
}

pub fn sample_stats(records: &[f64]) -> SampleStats {
    let m = records.len();
    if m == 0 {
        return SampleStats::EMPTY;
    }
    let mean = records.iter().sum::<f64>() / m as f64;
    let var_biased = records.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / m as f64;
    SampleStats {
        m,
        mean,
        var_biased,
    }
}

/// Conjugate update of a normal-gamma prior with `stats.m` Gaussian records.
/// With no records the prior is returned unchanged.
pub fn posterior_update(prior: &NormalGamma, stats: &SampleStats) -> NormalGamma {
    if stats.m == 0 {
        return *prior;
    }
    let m = stats.m as f64;
    let k0 = prior.kappa;
    let km = k0 + m;
    let diff = stats.mean - prior.mu;
    NormalGamma {
        mu: (k0 * prior.mu + m * stats.mean) / km,
        kappa: km,
        alpha: prior.alpha + 0.5 * m,
        beta: prior.beta + 0.5 * m * stats.var_biased + 0.5 * k0 * m * diff * diff / km,
    }
}

/// Chain rule through [`posterior_update`]: maps the gradient with respect to
/// the posterior onto the prior. Records are treated as constants.
pub fn posterior_update_backward(
    prior: &NormalGamma,
    stats: &SampleStats,
    grad_post: &NormalGammaGrad,
) -> NormalGammaGrad {
    if stats.m == 0 {
        return *grad_post;
    }
    let m = stats.m as f64;
    let k0 = prior.kappa;
    let km = k0 + m;
    let diff = stats.mean - prior.mu;

    let dmu_dmu0 = k0 / km;
    let dmu_dk0 = -m * diff / (km * km);
    let dbeta_dmu0 = -k0 * m * diff / km;
    let dbeta_dk0 = 0.5 * m * m * diff * diff / (km * km);

    NormalGammaGrad {
        mu: grad_post.mu * dmu_dmu0 + grad_post.beta * dbeta_dmu0,
        kappa: grad_post.mu * dmu_dk0 + grad_post.kappa + grad_post.beta * dbeta_dk0,
        alpha: grad_post.alpha,
        beta: grad_post.beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ng(mu: f64, k: f64, a: f64, b: f64) -> NormalGamma {
        NormalGamma::new(mu, k, a, b).unwrap()
    }

    #[test]
    fn stats_examples() {
        assert_eq!(sample_stats(&[]).m, 0);
        assert_eq!(
            sample_stats(&[2.0]),
            SampleStats {
                m: 1,
                mean: 2.0,
                var_biased: 0.0
            }
        );
        assert_eq!(
            sample_stats(&[2.0, 4.0]),
            SampleStats {
                m: 2,
                mean: 3.0,
                var_biased: 1.0
            }
        );
    }

    #[test]
    fn worked_updates() {
        let prior = ng(0.0, 1.0, 1.0, 1.0);
        assert_eq!(posterior_update(&prior, &sample_stats(&[])), prior);
        assert_eq!(
            posterior_update(&prior, &sample_stats(&[2.0])).as_array(),
            [1.0, 2.0, 1.5, 2.0]
        );
        assert_eq!(
            posterior_update(&prior, &sample_stats(&[2.0, 4.0])).as_array(),
            [2.0, 3.0, 2.0, 5.0]
        );
    }

    #[test]
    fn constructor_rejects_invalid() {
        assert!(NormalGamma::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(NormalGamma::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(NormalGamma::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(matches!(
            NormalGamma::new(f64::NAN, 1.0, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let prior = ng(7.0, 1.3, 2.1, 4.0);
        let stats = sample_stats(&[9.0, 11.5, 10.2]);
        // scalar probe: weighted sum of posterior hyperparameters
        let w = [0.7, -1.1, 0.4, 0.9];
        let f = |p: &NormalGamma| {
            let q = posterior_update(p, &stats).as_array();
            q.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
        };
        let g = posterior_update_backward(
            &prior,
            &stats,
            &NormalGammaGrad {
                mu: w[0],
                kappa: w[1],
                alpha: w[2],
                beta: w[3],
            },
        )
        .as_array();
        let base = prior.as_array();
        for k in 0..4 {
            let h = 1e-6;
            let mut up = base;
            let mut dn = base;
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&ng(up[0], up[1], up[2], up[3])) - f(&ng(dn[0], dn[1], dn[2], dn[3])))
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "component {k}: {fd} vs {}", g[k]);
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn sequential_equals_batch(
            mu0 in -30.0..30.0f64,
            k0 in 0.01..50.0f64,
            a0 in 0.01..50.0f64,
            b0 in 0.01..50.0f64,
            records in proptest::collection::vec(0.5..40.0f64, 0..64),
            cuts in proptest::collection::vec(0usize..64, 0..6),
        ) {
            let prior = ng(mu0, k0, a0, b0);
            let batch = posterior_update(&prior, &sample_stats(&records));
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c.min(records.len())).collect();
            cuts.push(0);
            cuts.push(records.len());
            cuts.sort_unstable();
            let mut post = prior;
            for w in cuts.windows(2) {
                post = posterior_update(&post, &sample_stats(&records[w[0]..w[1]]));
            }
            for (a, b) in post.as_array().iter().zip(batch.as_array()) {
                prop_assert!(close(*a, b), "{:?} vs {:?}", post, batch);
            }
            let m = records.len() as f64;
            prop_assert!((batch.kappa() - k0 - m).abs() < 1e-9 * batch.kappa());
            prop_assert!((batch.alpha() - a0 - m / 2.0).abs() < 1e-9 * batch.alpha());
        }

        #[test]
        fn posterior_mean_between_prior_and_sample(
            mu0 in -30.0..30.0f64,
            k0 in 0.01..50.0f64,
            records in proptest::collection::vec(0.5..40.0f64, 1..64),
        ) {
            let stats = sample_stats(&records);
            let post = posterior_update(&ng(mu0, k0, 1.0, 1.0), &stats);
            let (lo, hi) = (mu0.min(stats.mean), mu0.max(stats.mean));
            prop_assert!(post.mu() >= lo - 1e-12 && post.mu() <= hi + 1e-12);
        }
    }

    #[test]
    fn prior_influence_decays_with_record_count() {
        let prior = ng(5.0, 2.0, 1.0, 1.0);
        let mut last = f64::INFINITY;
        for m in 0..200 {
            let records = vec![12.0; m];
            let post = posterior_update(&prior, &sample_stats(&records));
            let gap = (post.mu() - 12.0).abs();
            assert!(gap <= last);
            last = gap;
        }
        assert!(last < 0.1);
    }
}
