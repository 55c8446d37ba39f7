//! Split-merge moves on the cluster assignment, plus the compound move that
//! changes the inclusion vector and the partition together.
//!
//! A split is built by a deterministic-launch restricted Gibbs construction:
//! pick a pair (i, i′); seed two clusters from them; assign the remaining
//! members of their cluster to the nearer seed on the informative
//! coordinates; run a few restricted sweeps; the final sweep is the proposal
//! and supplies its density. A merge is deterministic (density one), and its
//! reverse density is obtained by replaying the launch from the merged state
//! and scoring one evaluation sweep toward the current split.

use super::gamma::{log_gamma_prior, propose_gamma};
use super::Sampler;
use crate::error::Result;
use crate::marginal::{gibbs_logweights, log_marginal, GibbsChoice};
use crate::rng::RngStream;
use crate::state::ChainState;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

/// Unnormalized partition log prior: M ln α + Σₘ ln Γ(nₘ). The shared
/// normalizing product over Π(α + k) depends only on (α, n) and cancels in
/// ratios between partitions.
pub(crate) fn log_crp(state: &ChainState) -> f64 {
    let m = state.n_clusters() as f64;
    m * state.hyper.alpha.ln()
        + state
            .stats
            .clusters
            .iter()
            .map(|c| ln_gamma(c.count as f64))
            .sum::<f64>()
}

/// Squared distance on the informative coordinates (all coordinates when
/// none are informative, so ties break toward the first seed).
fn dist1_sq(state: &ChainState, i: usize, j: usize) -> f64 {
    let idx: Vec<usize> = (0..state.p()).filter(|&k| state.gamma[k]).collect();
    idx.iter()
        .map(|&k| {
            let d = state.z[(i, k)] - state.z[(j, k)];
            d * d
        })
        .sum()
}

fn sample_restricted(
    state: &ChainState,
    l: usize,
    pair: (usize, usize),
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<(usize, f64)> {
    let w = gibbs_logweights(state, l, Some(pair), prior_only)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, lw) in &w {
        acc += lw.exp();
        if u < acc {
            if let GibbsChoice::Existing(m) = c {
                return Ok((*m, *lw));
            }
        }
    }
    // numerical slack: fall through to the last option
    match w.last() {
        Some((GibbsChoice::Existing(m), lw)) => Ok((*m, *lw)),
        _ => Err(crate::error::Error::Domain("restricted weights empty".into())),
    }
}

/// Probability of the restricted sweep landing `l` on `target`, advancing
/// the state to that target.
fn score_restricted(
    state: &mut ChainState,
    l: usize,
    pair: (usize, usize),
    target: usize,
    prior_only: bool,
) -> Result<f64> {
    let w = gibbs_logweights(state, l, Some(pair), prior_only)?;
    let lw = w
        .iter()
        .find_map(|(c, lw)| match c {
            GibbsChoice::Existing(m) if *m == target => Some(*lw),
            _ => None,
        })
        .ok_or_else(|| crate::error::Error::Domain("restricted target missing".into()))?;
    state.move_row(l, target);
    Ok(lw)
}

/// Build the launch state for pair (i, i′) currently sharing a cluster:
/// i keeps the cluster, i′ seeds a fresh one, remaining members go to the
/// nearer seed, then `sweeps` restricted Gibbs passes randomize membership.
/// Returns the member list alongside the cluster labels (a, b).
fn build_launch(
    st: &mut ChainState,
    i: usize,
    ip: usize,
    sweeps: usize,
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, usize, usize)> {
    let members: Vec<usize> = (0..st.n())
        .filter(|&l| st.phi[l] == st.phi[i] && l != i && l != ip)
        .collect();
    st.move_row(ip, st.n_clusters());
    let a = st.phi[i];
    let b = st.phi[ip];
    for &l in &members {
        let target = if dist1_sq(st, l, ip) < dist1_sq(st, l, i) { b } else { a };
        st.move_row(l, target);
    }
    for _ in 0..sweeps {
        for &l in &members {
            let (m, _) = sample_restricted(st, l, (a, b), prior_only, rng)?;
            st.move_row(l, m);
        }
    }
    Ok((members, a, b))
}

/// Split proposal from a state where φ_i == φ_i′: launch plus one proposal
/// sweep whose density is returned.
fn propose_split(
    state: &ChainState,
    i: usize,
    ip: usize,
    sweeps: usize,
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<(ChainState, f64)> {
    let mut st = state.clone();
    let (members, a, b) = build_launch(&mut st, i, ip, sweeps, prior_only, rng)?;
    let mut log_q = 0.0;
    for &l in &members {
        let (m, lw) = sample_restricted(&st, l, (a, b), prior_only, rng)?;
        st.move_row(l, m);
        log_q += lw;
    }
    Ok((st, log_q))
}

/// Merge the cluster of i′ into the cluster of i. Labels compact, so the
/// anchor is re-read through φ_i.
fn merged_state(state: &ChainState, i: usize, ip: usize) -> ChainState {
    let mut st = state.clone();
    let members: Vec<usize> = (0..st.n()).filter(|&l| st.phi[l] == st.phi[ip]).collect();
    for l in members {
        let target = st.phi[i];
        st.move_row(l, target);
    }
    st
}

/// Density of producing the current split `state` by a split move from its
/// merged counterpart: replay the launch deterministically+randomly, then
/// score an evaluation sweep toward the actual membership.
fn reverse_split_density(
    state: &ChainState,
    i: usize,
    ip: usize,
    sweeps: usize,
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<f64> {
    let ca = state.phi[i];
    let targets: Vec<(usize, bool)> = (0..state.n())
        .filter(|&l| (state.phi[l] == ca || state.phi[l] == state.phi[ip]) && l != i && l != ip)
        .map(|l| (l, state.phi[l] == ca))
        .collect();
    let mut st = merged_state(state, i, ip);
    let (members, a, b) = build_launch(&mut st, i, ip, sweeps, prior_only, rng)?;
    debug_assert_eq!(members.len(), targets.len());
    let mut log_q = 0.0;
    for &(l, to_a) in &targets {
        let target = if to_a { a } else { b };
        log_q += score_restricted(&mut st, l, (a, b), target, prior_only)?;
    }
    Ok(log_q)
}

fn accept_ratio(s: &mut Sampler, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio
}

fn distinct_pair(n: usize, rng: &mut RngStream) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut ip = rng.random_range(0..n - 1);
    if ip >= i {
        ip += 1;
    }
    (i, ip)
}

pub fn split_merge(s: &mut Sampler) -> Result<bool> {
    let n = s.state.n();
    if n < 2 {
        return Ok(false);
    }
    let (i, ip) = distinct_pair(n, &mut s.rng);
    let prior_only = s.cfg.prior_only;
    let sweeps = s.cfg.l_restricted;
    let lm = |st: &ChainState| -> Result<f64> {
        if prior_only { Ok(0.0) } else { log_marginal(st) }
    };
    let (proposed, log_q_fwd, log_q_rev) = if s.state.phi[i] == s.state.phi[ip] {
        let (st, q) = propose_split(&s.state, i, ip, sweeps, prior_only, &mut s.rng)?;
        (st, q, 0.0)
    } else {
        let st = merged_state(&s.state, i, ip);
        let q_rev = reverse_split_density(&s.state, i, ip, sweeps, prior_only, &mut s.rng)?;
        (st, 0.0, q_rev)
    };
    let log_ratio =
        lm(&proposed)? - lm(&s.state)? + log_crp(&proposed) - log_crp(&s.state) + log_q_rev
            - log_q_fwd;
    let accept = accept_ratio(s, log_ratio);
    if accept {
        s.state = proposed;
    }
    Ok(accept)
}

/// Compound update: propose γ*, then a split or merge constructed under γ*,
/// with the reverse partition move scored under the current γ. The pair
/// choice density is symmetric and cancels.
pub fn joint_gamma_phi(s: &mut Sampler) -> Result<bool> {
    joint_gamma_phi_impl(s, None)
}

pub(crate) fn joint_gamma_phi_impl(
    s: &mut Sampler,
    forced_gamma: Option<Vec<bool>>,
) -> Result<bool> {
    let n = s.state.n();
    if n < 2 {
        return Ok(false);
    }
    let prior_only = s.cfg.prior_only;
    let sweeps = s.cfg.l_restricted;
    let (gamma_star, lg_fwd, lg_rev) = match forced_gamma {
        Some(g) => (g, 0.0, 0.0),
        None => propose_gamma(&s.state.gamma, s.cfg.swap_prob, &mut s.rng),
    };
    let (i, ip) = distinct_pair(n, &mut s.rng);

    let mut base = s.state.clone();
    base.gamma = gamma_star;
    let (proposed, log_q_fwd, log_q_rev) = if base.phi[i] == base.phi[ip] {
        // split under γ*; reverse is a merge (density 1) under γ
        let (st, q) = propose_split(&base, i, ip, sweeps, prior_only, &mut s.rng)?;
        (st, q, 0.0)
    } else {
        // merge under γ*; reverse is a split from the merged partition,
        // constructed and scored under the current γ
        let st = merged_state(&base, i, ip);
        let q_rev = reverse_split_density(&s.state, i, ip, sweeps, prior_only, &mut s.rng)?;
        (st, 0.0, q_rev)
    };
    let lm = |st: &ChainState| -> Result<f64> {
        if prior_only { Ok(0.0) } else { log_marginal(st) }
    };
    let log_ratio = lm(&proposed)? - lm(&s.state)?
        + log_gamma_prior(&proposed.gamma, &s.prior.rho)
        - log_gamma_prior(&s.state.gamma, &s.prior.rho)
        + log_crp(&proposed)
        - log_crp(&s.state)
        + lg_rev
        - lg_fwd
        + log_q_rev
        - log_q_fwd;
    let accept = accept_ratio(s, log_ratio);
    if accept {
        s.state = proposed;
    }
    Ok(accept)
}
