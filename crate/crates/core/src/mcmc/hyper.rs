//! Log-scale random-walk updates for the scalar hyperparameters λ, η, α.

use super::Sampler;
use crate::error::Result;
use crate::marginal::log_marginal;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Gamma(shape a, rate b) log target plus log-scale proposal Jacobian,
/// combined: a·Δln x − b·Δx for a random walk on ln x.
fn gamma_walk_term(a: f64, b: f64, new: f64, old: f64) -> f64 {
    a * (new.ln() - old.ln()) - b * (new - old)
}

/// α random walk. The partition term α^M Γ(α)/Γ(α+n) can be switched off so
/// the kernel's stationary law reduces to the Gamma prior (test hook).
pub(crate) fn update_alpha_impl(s: &mut Sampler, include_partition: bool) -> Result<bool> {
    let old = s.state.hyper.alpha;
    let step: f64 = s.rng.sample(StandardNormal);
    let new = (old.ln() + s.cfg.s_alpha * step).exp();
    let mut log_ratio = gamma_walk_term(s.prior.a_alpha, s.prior.b_alpha, new, old);
    if include_partition {
        let m = s.state.n_clusters() as f64;
        let n = s.state.n() as f64;
        log_ratio += m * (new.ln() - old.ln()) + ln_gamma(new) - ln_gamma(old)
            - ln_gamma(new + n) + ln_gamma(old + n);
    }
    let accept = log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio;
    if accept {
        s.state.hyper.alpha = new;
    }
    Ok(accept)
}

pub fn update_alpha(s: &mut Sampler) -> Result<bool> {
    update_alpha_impl(s, true)
}

pub fn update_lambda_eta(s: &mut Sampler) -> Result<(bool, bool)> {
    let prior_only = s.cfg.prior_only;
    let mut lm_old = if prior_only { 0.0 } else { log_marginal(&s.state)? };

    // λ
    let old = s.state.hyper.lambda;
    let step: f64 = s.rng.sample(StandardNormal);
    let new = (old.ln() + s.cfg.s_lambda * step).exp();
    s.state.hyper.lambda = new;
    let lm_new = if prior_only { 0.0 } else { log_marginal(&s.state)? };
    let log_ratio = lm_new - lm_old + gamma_walk_term(s.prior.a_lambda, s.prior.b_lambda, new, old);
    let a_lambda = log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio;
    if a_lambda {
        lm_old = lm_new;
    } else {
        s.state.hyper.lambda = old;
    }

    // η, walking on ln(η − p − 1)
    let shift = (s.state.p() + 1) as f64;
    let old = s.state.hyper.eta;
    let step: f64 = s.rng.sample(StandardNormal);
    let new = shift + ((old - shift).ln() + s.cfg.s_eta * step).exp();
    s.state.hyper.eta = new;
    let lm_new = if prior_only { 0.0 } else { log_marginal(&s.state)? };
    let log_ratio =
        lm_new - lm_old + gamma_walk_term(s.prior.a_eta, s.prior.b_eta, new - shift, old - shift);
    let a_eta = log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio;
    if !a_eta {
        s.state.hyper.eta = old;
    }
    Ok((a_lambda, a_eta))
}
