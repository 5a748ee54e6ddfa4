//! Student-t posterior predictive of a normal-gamma belief, its log-density,
//! and the per-traversal negative log-likelihood (sNLL) with gradients.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conjugate::{NormalGamma, NormalGammaGrad};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentT {
    nu: f64,
    loc: f64,
    scale: f64,
}

impl StudentT {
    pub fn new(nu: f64, loc: f64, scale: f64) -> Result<Self> {
        if !(nu.is_finite() && loc.is_finite() && scale.is_finite()) {
            return Err(Error::NonFinite(format!(
                "student-t ({nu}, {loc}, {scale})"
            )));
        }
        if nu <= 0.0 || scale <= 0.0 {
            return Err(Error::InvalidValue(format!(
                "student-t needs nu > 0 and scale > 0, got nu={nu}, scale={scale}"
            )));
        }
        Ok(StudentT { nu, loc, scale })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn loc(&self) -> f64 {
        self.loc
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// `ν = 2α`, location `μ`, scale `sqrt(β(κ+1)/(ακ))`.
pub fn posterior_predictive(ng: &NormalGamma) -> StudentT {
    StudentT {
        nu: 2.0 * ng.alpha(),
        loc: ng.mu(),
        scale: (ng.beta() * (ng.kappa() + 1.0) / (ng.alpha() * ng.kappa())).sqrt(),
    }
}

pub fn studentt_logpdf(dist: &StudentT, t: f64) -> f64 {
    let nu = dist.nu;
    let z = (t - dist.loc) / dist.scale;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        - dist.scale.ln()
        - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

pub fn snll(ng: &NormalGamma, t: f64) -> f64 {
    -studentt_logpdf(&posterior_predictive(ng), t)
}

/// sNLL and its gradient with respect to the hyperparameters of `ng`.
///
/// Written in terms of `A = ν·scale² = 2β(κ+1)/κ`:
/// `sNLL = lnΓ(α) − lnΓ(α+½) + ½ln(πA) + (α+½)·ln(1 + d²/A)`, `d = t − μ`.
pub fn snll_with_grad(ng: &NormalGamma, t: f64) -> (f64, NormalGammaGrad) {
    let (mu, kappa, alpha, beta) = (ng.mu(), ng.kappa(), ng.alpha(), ng.beta());
    let a = 2.0 * beta * (kappa + 1.0) / kappa;
    let d = t - mu;
    let d2 = d * d;
    let log_term = (d2 / a).ln_1p();
    let value =
        ln_gamma(alpha) - ln_gamma(alpha + 0.5) + 0.5 * (PI * a).ln() + (alpha + 0.5) * log_term;

    let dvalue_da = 0.5 / a - (alpha + 0.5) * d2 / (a * (a + d2));
    let grad = NormalGammaGrad {
        mu: -(2.0 * alpha + 1.0) * d / (a + d2),
        kappa: dvalue_da * (-2.0 * beta / (kappa * kappa)),
        alpha: digamma(alpha) - digamma(alpha + 0.5) + log_term,
        beta: dvalue_da * a / beta,
    };
    (value, grad)
}

/// Log-density of a Gaussian `N(mu, sigma²)` at `t`.
pub fn gaussian_logpdf(mu: f64, sigma: f64, t: f64) -> f64 {
    let z = (t - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ng(mu: f64, k: f64, a: f64, b: f64) -> NormalGamma {
        NormalGamma::new(mu, k, a, b).unwrap()
    }

    #[test]
    fn predictive_examples() {
        let p = posterior_predictive(&ng(0.0, 1.0, 1.0, 1.0));
        assert_eq!((p.nu(), p.loc()), (2.0, 0.0));
        assert!((p.scale() - 2f64.sqrt()).abs() < 1e-15);
        let p = posterior_predictive(&ng(5.0, 10.0, 4.0, 8.0));
        assert_eq!((p.nu(), p.loc()), (8.0, 5.0));
        assert!((p.scale() - 2.2f64.sqrt()).abs() < 1e-15);
        // kappa -> infinity: scale -> sqrt(beta / alpha)
        let p = posterior_predictive(&ng(0.0, 1e12, 3.0, 12.0));
        assert!((p.scale() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn density_at_location() {
        let p = posterior_predictive(&ng(0.0, 1.0, 1.0, 1.0));
        assert!((studentt_logpdf(&p, 0.0).exp() - 0.25).abs() < 1e-12);
        assert!((snll(&ng(0.0, 1.0, 1.0, 1.0), 0.0) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn density_matches_direct_formula() {
        for &(nu, loc, scale, t) in &[
            (1.0, 0.0, 1.0, 0.3),
            (3.5, 2.0, 0.7, 4.1),
            (100.0, -1.0, 2.0, 1.5),
        ] {
            let g = |x: f64| (ln_gamma(x)).exp();
            let direct = g((nu + 1.0) / 2.0) / (g(nu / 2.0) * (nu * PI).sqrt() * scale)
                * (1.0 + ((t - loc) / scale).powi(2) / nu).powf(-(nu + 1.0) / 2.0);
            let lp = studentt_logpdf(&StudentT::new(nu, loc, scale).unwrap(), t).exp();
            assert!((lp - direct).abs() <= 1e-12 * direct, "nu = {nu}");
        }
    }

    #[test]
    fn unimodal_and_symmetric() {
        let p = StudentT::new(3.0, 10.0, 2.0).unwrap();
        let mut last = studentt_logpdf(&p, 10.0);
        for k in 1..50 {
            let off = k as f64 * 0.5;
            let up = studentt_logpdf(&p, 10.0 + off);
            assert!((up - studentt_logpdf(&p, 10.0 - off)).abs() < 1e-12);
            assert!(up < last);
            last = up;
        }
    }

    #[test]
    fn gaussian_limit() {
        let p = StudentT::new(1e6, 0.0, 1.0).unwrap();
        let gauss = gaussian_logpdf(0.0, 1.0, 1.0);
        assert!((studentt_logpdf(&p, 1.0) - gauss).abs() < 1e-3);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn normalisation_by_quadrature() {
        for &nu in &[1.0, 2.0, 8.0, 64.0] {
            let p = StudentT::new(nu, 3.0, 1.5).unwrap();
            let lo = p.loc() - 50.0 * p.scale();
            let hi = p.loc() + 50.0 * p.scale();
            let mass = simpson(|t| studentt_logpdf(&p, t).exp(), lo, hi, 200_000);
            // closed-form mass inside ±50 scales; heavy tails leave some outside
            let expected = match nu as u32 {
                1 => 2.0 * 50f64.atan() / PI,
                2 => 50.0 / (2500.0f64 + 2.0).sqrt(),
                _ => 1.0,
            };
            assert!((mass - expected).abs() < 1e-4, "nu = {nu}: {mass}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cases = [
            (ng(12.0, 1.4, 2.2, 3.1), 10.5),
            (ng(-3.0, 0.2, 0.6, 0.05), 4.0),
            (ng(30.0, 120.0, 60.0, 200.0), 28.0),
        ];
        for (p, t) in cases {
            let (v, g) = snll_with_grad(&p, t);
            assert!((v - snll(&p, t)).abs() < 1e-10);
            let base = p.as_array();
            let g = g.as_array();
            for k in 0..4 {
                let h = 1e-6 * base[k].abs().max(1e-2);
                let mut up = base;
                let mut dn = base;
                up[k] += h;
                dn[k] -= h;
                let f = |x: [f64; 4]| snll(&ng(x[0], x[1], x[2], x[3]), t);
                let fd = (f(up) - f(dn)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "component {k}: fd {fd} vs analytic {}",
                    g[k]
                );
            }
        }
    }
}
