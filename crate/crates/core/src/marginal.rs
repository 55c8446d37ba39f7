//! Collapsed log marginal likelihood of the latent matrix given the
//! partition, inclusion vector, and hyperparameters, with all component
//! parameters integrated out — plus the per-observation Gibbs assignment
//! weights built from cluster-bracket ratios.

use crate::error::Result;
use crate::kernels::{cholesky, log_multivariate_gamma};
use crate::state::{sub_matrix, sub_vector, ChainState, Hyperparams};
use nalgebra::{DMatrix, DVector};

/// Pieces of the marginal-likelihood formula that depend only on (γ, hyper),
/// cached so per-cluster brackets can be evaluated repeatedly.
pub struct MarginalCtx {
    pub idx1: Vec<usize>,
    pub p: usize,
    pub p2: usize,
    pub lambda: f64,
    pub eta: f64,
    psi11: DMatrix<f64>,
    ln_det_psi11: f64,
    ln_det_psi: f64,
    psi_full: DMatrix<f64>,
    lgam_p1_prior: f64,
}

impl MarginalCtx {
    pub fn new(gamma: &[bool], hyper: &Hyperparams) -> Result<MarginalCtx> {
        let p = gamma.len();
        let idx1: Vec<usize> = (0..p).filter(|&j| gamma[j]).collect();
        let p1 = idx1.len();
        let p2 = p - p1;
        let psi11 = sub_matrix(&hyper.psi, &idx1, &idx1);
        let ln_det_psi11 = cholesky(&psi11)?.log_det();
        let ln_det_psi = cholesky(&hyper.psi)?.log_det();
        let lgam_p1_prior = log_multivariate_gamma(p1, (hyper.eta - p2 as f64) / 2.0)?;
        Ok(MarginalCtx {
            idx1,
            p,
            p2,
            lambda: hyper.lambda,
            eta: hyper.eta,
            psi11,
            ln_det_psi11,
            ln_det_psi,
            psi_full: hyper.psi.clone(),
            lgam_p1_prior,
        })
    }

    pub fn p1(&self) -> usize {
        self.idx1.len()
    }

    /// Informative sub-vector of a full-p row.
    pub fn row1(&self, row: &DVector<f64>) -> DVector<f64> {
        sub_vector(row, &self.idx1)
    }

    /// Per-cluster informative bracket from informative-block raw moments
    /// (sum s and scatter S over the cluster's rows):
    /// (λ/(nₘ+λ))^{p₁/2} |Ψ₁₁|^{(η−p₂)/2} Γ_{p₁}((nₘ+η−p₂)/2)
    ///   / (|Vₘ₁₁|^{(nₘ+η−p₂)/2} Γ_{p₁}((η−p₂)/2)),
    /// with Vₘ₁₁ = S − s sᵀ/(nₘ+λ) + Ψ₁₁. Empty clusters score 0.
    pub fn cluster_bracket_sub(
        &self,
        count: usize,
        sum1: &DVector<f64>,
        scatter11: &DMatrix<f64>,
    ) -> Result<f64> {
        let p1 = self.p1();
        if p1 == 0 || count == 0 {
            return Ok(0.0);
        }
        let nm = count as f64;
        let v_m11 = scatter11 - sum1 * sum1.transpose() / (nm + self.lambda) + &self.psi11;
        let ln_det_v = cholesky(&v_m11)?.log_det();
        let a = (nm + self.eta - self.p2 as f64) / 2.0;
        Ok(0.5 * p1 as f64 * (self.lambda.ln() - (nm + self.lambda).ln())
            + 0.5 * (self.eta - self.p2 as f64) * self.ln_det_psi11
            + log_multivariate_gamma(p1, a)?
            - a * ln_det_v
            - self.lgam_p1_prior)
    }

    /// Per-cluster bracket from full-p cached moments.
    pub fn cluster_bracket(
        &self,
        count: usize,
        sum: &DVector<f64>,
        scatter: &DMatrix<f64>,
    ) -> Result<f64> {
        if self.p1() == 0 || count == 0 {
            return Ok(0.0);
        }
        let sum1 = sub_vector(sum, &self.idx1);
        let scatter11 = sub_matrix(scatter, &self.idx1, &self.idx1);
        self.cluster_bracket_sub(count, &sum1, &scatter11)
    }

    /// Non-informative bracket from the global moments; does not depend on
    /// the partition. Identically 0 when p₂ = 0.
    pub fn global_bracket(
        &self,
        n: usize,
        total_sum: &DVector<f64>,
        total_scatter: &DMatrix<f64>,
    ) -> Result<f64> {
        if self.p2 == 0 {
            return Ok(0.0);
        }
        let nf = n as f64;
        // full V on permuted coordinates; det splits as |V| = |V₁₁|·|V₂|₁|
        let perm: Vec<usize> = {
            let mut v = self.idx1.clone();
            v.extend((0..self.p).filter(|j| !self.idx1.contains(j)));
            v
        };
        let s = sub_vector(total_sum, &perm);
        let sc = sub_matrix(total_scatter, &perm, &perm);
        let psi_p = sub_matrix(&self.psi_full, &perm, &perm);
        let v = sc - &s * s.transpose() / (nf + self.lambda) + psi_p;
        let ln_det_v = cholesky(&v)?.log_det();
        let p1 = self.p1();
        let ln_det_v11 = if p1 == 0 {
            0.0
        } else {
            cholesky(&v.view((0, 0), (p1, p1)).into_owned())?.log_det()
        };
        let ln_det_v2g1 = ln_det_v - ln_det_v11;
        let ln_det_psi2g1 = self.ln_det_psi - self.ln_det_psi11;
        let p2f = self.p2 as f64;
        Ok(0.5 * p2f * (self.lambda.ln() - (nf + self.lambda).ln())
            + 0.5 * p2f * self.ln_det_psi11
            + 0.5 * self.eta * ln_det_psi2g1
            + log_multivariate_gamma(self.p2, (nf + self.eta) / 2.0)?
            - 0.5 * p2f * ln_det_v11
            - 0.5 * (nf + self.eta) * ln_det_v2g1
            - log_multivariate_gamma(self.p2, self.eta / 2.0)?)
    }
}

/// log f(Z | γ, φ, λ, η, Ψ): the −(np/2)·ln π constant, one informative
/// bracket per cluster, and the global non-informative bracket.
pub fn log_marginal(state: &ChainState) -> Result<f64> {
    let ctx = MarginalCtx::new(&state.gamma, &state.hyper)?;
    let n = state.n();
    let mut total = -0.5 * (n * state.p()) as f64 * std::f64::consts::PI.ln();
    for c in &state.stats.clusters {
        total += ctx.cluster_bracket(c.count, &c.sum, &c.scatter)?;
    }
    total += ctx.global_bracket(n, &state.stats.total_sum, &state.stats.total_scatter)?;
    Ok(total)
}

/// One assignment option for an observation in a Gibbs scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsChoice {
    Existing(usize),
    New,
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized log weights for reassigning observation i, combining the
/// sequential-partition prior factor (cluster size, or α for a new cluster)
/// with the marginal-likelihood ratio of adding i to each cluster. With
/// `restrict` the options are limited to that label pair; `prior_only`
/// forces the likelihood ratios to 1 (test hook).
pub fn gibbs_logweights(
    state: &ChainState,
    i: usize,
    restrict: Option<(usize, usize)>,
    prior_only: bool,
) -> Result<Vec<(GibbsChoice, f64)>> {
    let ctx = MarginalCtx::new(&state.gamma, &state.hyper)?;
    let zi = state.z_row(i);
    let zi1 = ctx.row1(&zi);
    let zi1_outer = &zi1 * zi1.transpose();
    let m_i = state.phi[i];
    let mut out: Vec<(GibbsChoice, f64)> = Vec::new();

    let labels: Vec<usize> = match restrict {
        Some((a, b)) => vec![a, b],
        None => (0..state.n_clusters()).collect(),
    };
    for m in labels {
        let c = &state.stats.clusters[m];
        let sum1 = ctx.row1(&c.sum);
        let scatter11 = sub_matrix(&c.scatter, &ctx.idx1, &ctx.idx1);
        let (n_without, with, without) = if m == m_i {
            if c.count == 1 {
                continue; // singleton's own cluster is the New option
            }
            let w = ctx.cluster_bracket_sub(c.count, &sum1, &scatter11)?;
            let wo = ctx.cluster_bracket_sub(c.count - 1, &(&sum1 - &zi1), &(&scatter11 - &zi1_outer))?;
            (c.count - 1, w, wo)
        } else {
            let wo = ctx.cluster_bracket_sub(c.count, &sum1, &scatter11)?;
            let w = ctx.cluster_bracket_sub(c.count + 1, &(&sum1 + &zi1), &(&scatter11 + &zi1_outer))?;
            (c.count, w, wo)
        };
        let lik = if prior_only { 0.0 } else { with - without };
        out.push((GibbsChoice::Existing(m), (n_without as f64).ln() + lik));
    }
    if restrict.is_none() {
        let lik = if prior_only {
            0.0
        } else {
            ctx.cluster_bracket_sub(1, &zi1, &zi1_outer)?
        };
        out.push((GibbsChoice::New, state.hyper.alpha.ln() + lik));
    }
    let lse = logsumexp(&out.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    for (_, w) in out.iter_mut() {
        *w -= lse;
    }
    Ok(out)
}
