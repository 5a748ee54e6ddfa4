//! Forward propagation of a route through the recurrent prior and exact
//! reverse-mode gradients over the recorded tape.
//!
//! Per segment: `x = features ⊕ embed(τ)`, `z = GRU(x, z_prev)`,
//! `h = z ⊕ x`, prior = prior function layer of `h`. Arrival times that are
//! not recorded are propagated from the previous segment's expected speed;
//! that propagation is not differentiated.

use super::params::{
    ModelParams, Weights, HIDDEN_DIM, INPUT_DIM, PRIOR_DIM, SKIP_DIM, TIME_EMBED_DIM,
};
use crate::conjugate::{NormalGamma, NormalGammaGrad};
use crate::error::{Error, Result};
use crate::network::FEATURE_DIM;
use crate::time::TimeOfWeek;

/// Floor on the speed used to advance arrival times, m/s.
pub const MIN_PROPAGATION_SPEED: f64 = 0.5;

/// Time-of-day row ⊕ day-of-week row of the embedding matrices.
pub fn embed_time(tau: TimeOfWeek, weights: &Weights) -> [f64; 2 * TIME_EMBED_DIM] {
    let mut out = [0.0; 2 * TIME_EMBED_DIM];
    out[..TIME_EMBED_DIM].copy_from_slice(weights.w_tod.row(tau.interval()));
    out[TIME_EMBED_DIM..].copy_from_slice(weights.w_dow.row(tau.day()));
    out
}

fn elu(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        a * x.exp_m1()
    }
}

fn elu_grad(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        a * x.exp()
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Maps the projected vector `h1 = W_out · h` to constrained prior hyperparameters.
pub fn prior_from_projection(h1: &[f64; PRIOR_DIM], a: f64, epsilon: f64) -> Result<NormalGamma> {
    NormalGamma::new(
        h1[0],
        elu(h1[1], a) + a + epsilon,
        h1[2].abs() + epsilon,
        h1[3].abs() + epsilon,
    )
    .map_err(|e| match e {
        Error::InvalidValue(m) => Error::NonFinite(m),
        other => other,
    })
}

pub fn prior_function_layer(h: &[f64; SKIP_DIM], params: &ModelParams) -> Result<NormalGamma> {
    let mut h1 = [0.0; PRIOR_DIM];
    params.weights.w_out.matvec_acc(h, &mut h1);
    prior_from_projection(&h1, params.a, params.epsilon)
}

fn projection_backward(h1: &[f64; PRIOR_DIM], a: f64, g: &NormalGammaGrad) -> [f64; PRIOR_DIM] {
    [
        g.mu,
        g.kappa * elu_grad(h1[1], a),
        g.alpha * sign(h1[2]),
        g.beta * sign(h1[3]),
    ]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
struct Step {
    x: [f64; INPUT_DIM],
    z_prev: [f64; HIDDEN_DIM],
    reset: [f64; HIDDEN_DIM],
    update: [f64; HIDDEN_DIM],
    cand: [f64; HIDDEN_DIM],
    h: [f64; SKIP_DIM],
    h1: [f64; PRIOR_DIM],
    interval: usize,
    day: usize,
}

/// Intermediate values of one route's forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: Vec<Step>,
    a: f64,
}

#[derive(Debug, Clone)]
pub struct RouteForward {
    pub priors: Vec<NormalGamma>,
    pub posteriors: Vec<NormalGamma>,
    /// Arrival time used at each segment (recorded or propagated).
    pub arrivals: Vec<TimeOfWeek>,
    pub tape: Tape,
}

/// Inputs for one route: standardized features, segment lengths and
/// optionally recorded arrival times (the first must be present).
pub struct RouteInput<'a> {
    pub features: &'a [[f64; FEATURE_DIM]],
    pub lengths: &'a [f64],
    pub arrivals: &'a [Option<TimeOfWeek>],
}

fn gru_step(
    weights: &Weights,
    x: &[f64; INPUT_DIM],
    z_prev: &[f64; HIDDEN_DIM],
) -> (
    [f64; HIDDEN_DIM],
    [f64; HIDDEN_DIM],
    [f64; HIDDEN_DIM],
    [f64; HIDDEN_DIM],
) {
    let g = &weights.gru;
    let mut reset = [0.0; HIDDEN_DIM];
    reset.copy_from_slice(g.b_reset.data());
    g.w_reset.matvec_acc(x, &mut reset);
    g.u_reset.matvec_acc(z_prev, &mut reset);
    reset.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut update = [0.0; HIDDEN_DIM];
    update.copy_from_slice(g.b_update.data());
    g.w_update.matvec_acc(x, &mut update);
    g.u_update.matvec_acc(z_prev, &mut update);
    update.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut gated = [0.0; HIDDEN_DIM];
    for k in 0..HIDDEN_DIM {
        gated[k] = reset[k] * z_prev[k];
    }
    let mut cand = [0.0; HIDDEN_DIM];
    cand.copy_from_slice(g.b_cand.data());
    g.w_cand.matvec_acc(x, &mut cand);
    g.u_cand.matvec_acc(&gated, &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());

    let mut z = [0.0; HIDDEN_DIM];
    for k in 0..HIDDEN_DIM {
        z[k] = (1.0 - update[k]) * cand[k] + update[k] * z_prev[k];
    }
    (z, reset, update, cand)
}

/// Runs the route forward. `posterior_hook(i, τ_i, prior_i)` returns the
/// posterior for segment `i`; its mean advances unrecorded arrival times.
pub fn forward_route<F>(
    params: &ModelParams,
    input: &RouteInput<'_>,
    mut posterior_hook: F,
) -> Result<RouteForward>
where
    F: FnMut(usize, TimeOfWeek, &NormalGamma) -> Result<NormalGamma>,
{
    let n = input.features.len();
    if n == 0 {
        return Err(Error::EmptyRoute);
    }
    if input.lengths.len() != n || input.arrivals.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: input.lengths.len().min(input.arrivals.len()),
        });
    }
    let mut tau = input.arrivals[0].ok_or(Error::MissingArrival { index: 0 })?;
    let w = &params.weights;
    let mut z = [0.0; HIDDEN_DIM];
    let mut out = RouteForward {
        priors: Vec::with_capacity(n),
        posteriors: Vec::with_capacity(n),
        arrivals: Vec::with_capacity(n),
        tape: Tape {
            steps: Vec::with_capacity(n),
            a: params.a,
        },
    };
    for i in 0..n {
        if i > 0 {
            tau = match input.arrivals[i] {
                Some(t) => t,
                None => {
                    let speed = out.posteriors[i - 1].mu().max(MIN_PROPAGATION_SPEED);
                    tau.advance(input.lengths[i - 1] / speed)
                }
            };
        }
        let mut x = [0.0; INPUT_DIM];
        x[..FEATURE_DIM].copy_from_slice(&input.features[i]);
        x[FEATURE_DIM..].copy_from_slice(&embed_time(tau, w));

        let z_prev = z;
        let (z_new, reset, update, cand) = gru_step(w, &x, &z_prev);
        z = z_new;

        let mut h = [0.0; SKIP_DIM];
        h[..HIDDEN_DIM].copy_from_slice(&z);
        h[HIDDEN_DIM..].copy_from_slice(&x);
        let mut h1 = [0.0; PRIOR_DIM];
        w.w_out.matvec_acc(&h, &mut h1);
        let prior = prior_from_projection(&h1, params.a, params.epsilon)?;
        let posterior = posterior_hook(i, tau, &prior)?;

        out.priors.push(prior);
        out.posteriors.push(posterior);
        out.arrivals.push(tau);
        out.tape.steps.push(Step {
            x,
            z_prev,
            reset,
            update,
            cand,
            h,
            h1,
            interval: tau.interval(),
            day: tau.day(),
        });
    }
    Ok(out)
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Back-propagates `grad_priors[i] = ∂L/∂prior_i` and accumulates
    /// `∂L/∂weights` into `grads`.
    pub fn backward_into(
        &self,
        weights: &Weights,
        grad_priors: &[NormalGammaGrad],
        grads: &mut Weights,
    ) {
        assert_eq!(grad_priors.len(), self.steps.len());
        let g = &weights.gru;
        let mut dz_next = [0.0; HIDDEN_DIM];
        for (step, gp) in self.steps.iter().zip(grad_priors).rev() {
            let dh1 = projection_backward(&step.h1, self.a, gp);
            grads.w_out.outer_acc(&dh1, &step.h);
            let mut dh = [0.0; SKIP_DIM];
            weights.w_out.t_matvec_acc(&dh1, &mut dh);

            let mut dz = dz_next;
            for k in 0..HIDDEN_DIM {
                dz[k] += dh[k];
            }
            let mut dx = [0.0; INPUT_DIM];
            dx.copy_from_slice(&dh[HIDDEN_DIM..]);

            let mut dz_prev = [0.0; HIDDEN_DIM];
            let mut d_cand_pre = [0.0; HIDDEN_DIM];
            let mut d_update_pre = [0.0; HIDDEN_DIM];
            for k in 0..HIDDEN_DIM {
                let (u, n) = (step.update[k], step.cand[k]);
                let d_cand = dz[k] * (1.0 - u);
                let d_update = dz[k] * (step.z_prev[k] - n);
                dz_prev[k] = dz[k] * u;
                d_cand_pre[k] = d_cand * (1.0 - n * n);
                d_update_pre[k] = d_update * u * (1.0 - u);
            }

            let mut gated = [0.0; HIDDEN_DIM];
            for (g, (r, z)) in gated.iter_mut().zip(step.reset.iter().zip(&step.z_prev)) {
                *g = r * z;
            }
            grads.gru.w_cand.outer_acc(&d_cand_pre, &step.x);
            grads.gru.u_cand.outer_acc(&d_cand_pre, &gated);
            add(grads.gru.b_cand.data_mut(), &d_cand_pre);
            g.w_cand.t_matvec_acc(&d_cand_pre, &mut dx);
            let mut d_gated = [0.0; HIDDEN_DIM];
            g.u_cand.t_matvec_acc(&d_cand_pre, &mut d_gated);

            let mut d_reset_pre = [0.0; HIDDEN_DIM];
            for k in 0..HIDDEN_DIM {
                let r = step.reset[k];
                dz_prev[k] += d_gated[k] * r;
                d_reset_pre[k] = d_gated[k] * step.z_prev[k] * r * (1.0 - r);
            }

            grads.gru.w_update.outer_acc(&d_update_pre, &step.x);
            grads.gru.u_update.outer_acc(&d_update_pre, &step.z_prev);
            add(grads.gru.b_update.data_mut(), &d_update_pre);
            g.w_update.t_matvec_acc(&d_update_pre, &mut dx);
            g.u_update.t_matvec_acc(&d_update_pre, &mut dz_prev);

            grads.gru.w_reset.outer_acc(&d_reset_pre, &step.x);
            grads.gru.u_reset.outer_acc(&d_reset_pre, &step.z_prev);
            add(grads.gru.b_reset.data_mut(), &d_reset_pre);
            g.w_reset.t_matvec_acc(&d_reset_pre, &mut dx);
            g.u_reset.t_matvec_acc(&d_reset_pre, &mut dz_prev);

            // segment features are inputs, not parameters
            let t0 = FEATURE_DIM;
            add(
                grads.w_tod.row_mut(step.interval),
                &dx[t0..t0 + TIME_EMBED_DIM],
            );
            add(grads.w_dow.row_mut(step.day), &dx[t0 + TIME_EMBED_DIM..]);

            dz_next = dz_prev;
        }
    }

    pub fn backward(&self, weights: &Weights, grad_priors: &[NormalGammaGrad]) -> Weights {
        let mut grads = Weights::zeros();
        self.backward_into(weights, grad_priors, &mut grads);
        grads
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
