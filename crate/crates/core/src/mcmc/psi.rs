//! Nearly-conjugate Metropolis–Hastings update of Ψ.
//!
//! A transient θ* is drawn with Ψ fixed at its prior mean, and the proposal
//! Ψ* comes from the exact conditional of Ψ given θ* alone (prior-level
//! conjugacy). The same θ* is used to evaluate forward and reverse proposal
//! densities, which makes the kernel valid regardless of how close the
//! proposal is to the full conditional.

use super::Sampler;
use crate::conjugate::{sample_theta_from_moments, ComponentDraw, Moments};
use crate::error::Result;
use crate::kernels::{
    cholesky, log_matrix_normal_pdf, log_wishart_pdf, sample_matrix_normal, sample_wishart,
    CholFactor, RowScale,
};
use crate::marginal::log_marginal;
use crate::rng::RngStream;
use crate::state::sub_matrix;
use nalgebra::DMatrix;
use rand::Rng;

/// Parameters of the Ψ | θ conditional, assembled once per θ draw.
///
/// With H = P₂₁P₁₁⁻¹, P₂₂·₁ = P₂₂ − HP₁₂, A = Q₂₂ + P₂₂·₁⁻¹ and
/// T̄ = A⁻¹(P₂₂·₁⁻¹H − Q₂₁):
///   Ψ₁₁   ~ W(C⁻¹, N + M(η−p₂) + p₂),
///     C = P₁₁⁻¹ + Σₘ Σₘ₁₁⁻¹ + Q₂₁ᵀQ₂₂⁻¹Q₂₁ + HᵀP₂₂·₁⁻¹H − T̄ᵀAT̄,
///   Ψ₂₁|Ψ₁₁ ~ MN(T̄Ψ₁₁, A⁻¹, Ψ₁₁),
///   Ψ₂₂·₁  ~ W((P₂₂·₁⁻¹ + Q₂₂)⁻¹, N − p₁ + η),
/// reassembled as Ψ₂₂ = Ψ₂₂·₁ + Ψ₂₁Ψ₁₁⁻¹Ψ₁₂ (unit Jacobian).
struct PsiProposal {
    idx1: Vec<usize>,
    idx2: Vec<usize>,
    c_inv_chol: Option<CholFactor>,
    df11: f64,
    t_bar: DMatrix<f64>,
    a_chol: Option<CholFactor>,
    s22_chol: Option<CholFactor>,
    df22: f64,
}

impl PsiProposal {
    fn new(
        prior_scale: &DMatrix<f64>,
        prior_df: f64,
        eta: f64,
        draw: &ComponentDraw,
    ) -> Result<PsiProposal> {
        let idx1 = draw.idx1.clone();
        let idx2 = draw.idx2.clone();
        let p1 = idx1.len();
        let p2 = idx2.len();
        let m = draw.n_clusters() as f64;
        let df11 = prior_df + m * (eta - p2 as f64) + p2 as f64;
        let df22 = prior_df - p1 as f64 + eta;

        let p11 = sub_matrix(prior_scale, &idx1, &idx1);
        let p21 = sub_matrix(prior_scale, &idx2, &idx1);
        let p22 = sub_matrix(prior_scale, &idx2, &idx2);

        if p1 == 0 {
            // Ψ = Ψ₂₂·₁ ~ W((P⁻¹ + Q₂₂)⁻¹, N + η)
            let p_inv = cholesky(&p22)?.inverse();
            let s22 = cholesky(&(&p_inv + &draw.q22))?.inverse();
            return Ok(PsiProposal {
                idx1,
                idx2,
                c_inv_chol: None,
                df11,
                t_bar: DMatrix::zeros(p2, 0),
                a_chol: None,
                s22_chol: Some(cholesky(&s22)?),
                df22,
            });
        }

        let p11_chol = cholesky(&p11)?;
        let p11_inv = p11_chol.inverse();
        let mut c = p11_inv.clone();
        for sig in &draw.sigma11 {
            c += cholesky(sig)?.inverse();
        }
        let (t_bar, a_chol, s22_chol) = if p2 > 0 {
            let h = &p21 * &p11_inv; // P₂₁P₁₁⁻¹
            let p22g1 = &p22 - &h * p21.transpose();
            let p22g1_inv = cholesky(&p22g1)?.inverse();
            let a = &draw.q22 + &p22g1_inv;
            let a_chol = cholesky(&a)?;
            let t_bar = a_chol.solve_mat(&(&p22g1_inv * &h - &draw.q21));
            let q22_chol = cholesky(&draw.q22)?;
            c += draw.q21.transpose() * q22_chol.solve_mat(&draw.q21);
            c += h.transpose() * &p22g1_inv * &h;
            c -= t_bar.transpose() * &a * &t_bar;
            let s22 = cholesky(&(&p22g1_inv + &draw.q22))?.inverse();
            (t_bar, Some(a_chol), Some(cholesky(&s22)?))
        } else {
            (DMatrix::zeros(0, p1), None, None)
        };
        let c_inv = cholesky(&c)?.inverse();
        Ok(PsiProposal {
            idx1,
            idx2,
            c_inv_chol: Some(cholesky(&c_inv)?),
            df11,
            t_bar,
            a_chol,
            s22_chol,
            df22,
        })
    }

    /// Draw Ψ on the original coordinate order.
    fn sample(&self, rng: &mut RngStream) -> Result<DMatrix<f64>> {
        let p1 = self.idx1.len();
        let p2 = self.idx2.len();
        let p = p1 + p2;
        let psi11 = match &self.c_inv_chol {
            Some(ch) => sample_wishart(rng, ch, self.df11)?,
            None => DMatrix::zeros(0, 0),
        };
        let (psi21, psi22) = if p2 > 0 {
            let psi22g1 = sample_wishart(rng, self.s22_chol.as_ref().unwrap(), self.df22)?;
            if p1 > 0 {
                let psi11_chol = cholesky(&psi11)?;
                let mean = &self.t_bar * &psi11;
                let psi21 = sample_matrix_normal(
                    rng,
                    &mean,
                    RowScale::Prec(self.a_chol.as_ref().unwrap()),
                    RowScale::Cov(&psi11_chol),
                );
                let psi22 = &psi22g1 + &psi21 * psi11_chol.solve_mat(&psi21.transpose());
                (psi21, psi22)
            } else {
                (DMatrix::zeros(p2, 0), psi22g1)
            }
        } else {
            (DMatrix::zeros(0, p1), DMatrix::zeros(0, 0))
        };
        // scatter blocks back to original coordinates
        let mut psi = DMatrix::zeros(p, p);
        for r in 0..p1 {
            for c in 0..p1 {
                psi[(self.idx1[r], self.idx1[c])] = psi11[(r, c)];
            }
        }
        for r in 0..p2 {
            for c in 0..p1 {
                psi[(self.idx2[r], self.idx1[c])] = psi21[(r, c)];
                psi[(self.idx1[c], self.idx2[r])] = psi21[(r, c)];
            }
            for c in 0..p2 {
                psi[(self.idx2[r], self.idx2[c])] = psi22[(r, c)];
            }
        }
        Ok(psi)
    }

    /// Exact log density of the sampling recipe at a given Ψ.
    fn log_density(&self, psi: &DMatrix<f64>) -> Result<f64> {
        let p1 = self.idx1.len();
        let p2 = self.idx2.len();
        let psi11 = sub_matrix(psi, &self.idx1, &self.idx1);
        let psi21 = sub_matrix(psi, &self.idx2, &self.idx1);
        let psi22 = sub_matrix(psi, &self.idx2, &self.idx2);
        let mut total = 0.0;
        if p1 > 0 {
            total += log_wishart_pdf(&psi11, self.c_inv_chol.as_ref().unwrap(), self.df11)?;
        }
        if p2 > 0 {
            let psi22g1 = if p1 > 0 {
                let psi11_chol = cholesky(&psi11)?;
                let mean = &self.t_bar * &psi11;
                total += log_matrix_normal_pdf(
                    &psi21,
                    &mean,
                    RowScale::Prec(self.a_chol.as_ref().unwrap()),
                    RowScale::Cov(&psi11_chol),
                );
                &psi22 - &psi21 * psi11_chol.solve_mat(&psi21.transpose())
            } else {
                psi22
            };
            total += log_wishart_pdf(&psi22g1, self.s22_chol.as_ref().unwrap(), self.df22)?;
        }
        Ok(total)
    }
}

pub fn update_psi(s: &mut Sampler) -> Result<bool> {
    let p = s.state.p();
    let prior_scale = s.prior.wishart_scale.clone();
    let prior_df = s.prior.wishart_df;
    // Ψ̃: the fixed prior-mean override, independent of the current Ψ
    let psi_tilde = &prior_scale * prior_df;
    let moments = if s.cfg.prior_only {
        Moments::prior(p, s.state.n_clusters())
    } else {
        Moments::from_state(&s.state)
    };
    let theta = sample_theta_from_moments(
        &s.state.gamma,
        &s.state.hyper,
        &moments,
        Some(&psi_tilde),
        &mut s.rng,
    )?;
    let proposal = PsiProposal::new(&prior_scale, prior_df, s.state.hyper.eta, &theta)?;
    let psi_star = proposal.sample(&mut s.rng)?;
    debug_assert!(cholesky(&psi_star).is_ok(), "proposed Ψ must be SPD");

    let prior_chol = cholesky(&prior_scale)?;
    let lm_old = if s.cfg.prior_only { 0.0 } else { log_marginal(&s.state)? };
    let old_psi = std::mem::replace(&mut s.state.hyper.psi, psi_star);
    let lm_new = if s.cfg.prior_only { 0.0 } else { log_marginal(&s.state)? };
    let log_ratio = lm_new - lm_old
        + log_wishart_pdf(&s.state.hyper.psi, &prior_chol, prior_df)?
        - log_wishart_pdf(&old_psi, &prior_chol, prior_df)?
        + proposal.log_density(&old_psi)?
        - proposal.log_density(&s.state.hyper.psi)?;
    let accept = log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio;
    if !accept {
        s.state.hyper.psi = old_psi;
    }
    Ok(accept)
}
