//! Draws of the transient component parameters θ from their exact conjugate
//! posteriors given the latent data and hyperparameters. These draws never
//! persist in the chain state; they exist to build the Ψ and latent-Z
//! proposal distributions.

use crate::error::Result;
use crate::kernels::{
    cholesky, log_wishart_pdf, log_matrix_normal_pdf, sample_inverse_wishart,
    sample_matrix_normal, sample_std_normal_vec, sample_wishart, CholFactor, RowScale,
};
use crate::state::{sub_matrix, sub_vector, ChainState, ClusterStats, Hyperparams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Raw first/second moments the conjugate posteriors condition on. Using an
/// explicit snapshot (rather than ChainState directly) lets callers
/// substitute modified statistics, e.g. anchored latent cells.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: usize,
    pub clusters: Vec<ClusterStats>,
    pub total_sum: DVector<f64>,
    pub total_scatter: DMatrix<f64>,
}

impl Moments {
    pub fn from_state(state: &ChainState) -> Moments {
        Moments {
            n: state.n(),
            clusters: state.stats.clusters.clone(),
            total_sum: state.stats.total_sum.clone(),
            total_scatter: state.stats.total_scatter.clone(),
        }
    }

    /// Empty moments: conditioning on these reproduces the prior exactly.
    pub fn prior(p: usize, n_clusters: usize) -> Moments {
        Moments {
            n: 0,
            clusters: (0..n_clusters)
                .map(|_| ClusterStats {
                    count: 0,
                    sum: DVector::zeros(p),
                    scatter: DMatrix::zeros(p, p),
                })
                .collect(),
            total_sum: DVector::zeros(p),
            total_scatter: DMatrix::zeros(p, p),
        }
    }

    /// Swap one row's contribution (in cluster `m`) for a substitute value.
    pub fn replace_row(&mut self, m: usize, old: &DVector<f64>, new: &DVector<f64>) {
        let cl = &mut self.clusters[m];
        cl.sum += new - old;
        cl.scatter += new * new.transpose() - old * old.transpose();
        self.total_sum += new - old;
        self.total_scatter += new * new.transpose() - old * old.transpose();
    }
}

/// One θ draw: per-cluster informative-block mean/covariance plus the shared
/// non-informative canonical parameters. All blocks live on the permuted
/// coordinate system (informative columns first, in `idx1`/`idx2` order).
#[derive(Debug, Clone)]
pub struct ComponentDraw {
    pub idx1: Vec<usize>,
    pub idx2: Vec<usize>,
    pub mu1: Vec<DVector<f64>>,
    pub sigma11: Vec<DMatrix<f64>>,
    pub b2: DVector<f64>,
    pub q21: DMatrix<f64>,
    pub q22: DMatrix<f64>,
}

impl ComponentDraw {
    pub fn n_clusters(&self) -> usize {
        self.mu1.len()
    }

    /// Permuted-to-original column map.
    pub fn perm(&self) -> Vec<usize> {
        let mut v = self.idx1.clone();
        v.extend_from_slice(&self.idx2);
        v
    }

    /// Full canonical parameters (b̃, Q̃) of cluster m on the ORIGINAL
    /// coordinate order, via Q₁₁ = Σ₁₁⁻¹ + Q₁₂Q₂₂⁻¹Q₂₁ and
    /// b₁ = Σ₁₁⁻¹μ₁ + Q₁₂Q₂₂⁻¹b₂.
    pub fn full_canonical(&self, m: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p1 = self.idx1.len();
        let p2 = self.idx2.len();
        let p = p1 + p2;
        let sigma_chol = cholesky(&self.sigma11[m])?;
        let sigma_inv = sigma_chol.inverse();
        let (q11, b1) = if p2 > 0 {
            let q22_chol = cholesky(&self.q22)?;
            let q22inv_q21 = q22_chol.solve_mat(&self.q21); // Q₂₂⁻¹Q₂₁
            let q11 = &sigma_inv + self.q21.transpose() * &q22inv_q21;
            let b1 = &sigma_inv * &self.mu1[m] + self.q21.transpose() * q22_chol.solve_vec(&self.b2);
            (q11, b1)
        } else {
            (sigma_inv.clone(), &sigma_inv * &self.mu1[m])
        };
        let perm = self.perm();
        let mut q = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for r in 0..p1 {
            b[perm[r]] = b1[r];
            for c in 0..p1 {
                q[(perm[r], perm[c])] = q11[(r, c)];
            }
            for c in 0..p2 {
                q[(perm[r], perm[p1 + c])] = self.q21[(c, r)];
                q[(perm[p1 + c], perm[r])] = self.q21[(c, r)];
            }
        }
        for r in 0..p2 {
            b[perm[p1 + r]] = self.b2[r];
            for c in 0..p2 {
                q[(perm[p1 + r], perm[p1 + c])] = self.q22[(r, c)];
            }
        }
        Ok((b, q))
    }

    /// Moment parameters (μₘ, Σₘ) of cluster m, original coordinate order.
    pub fn moment_params(&self, m: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (b, q) = self.full_canonical(m)?;
        let qc = cholesky(&q)?;
        let mu = qc.solve_vec(&b);
        Ok((mu, qc.inverse()))
    }
}

/// The V-matrix blocks of the conjugate posteriors, assembled once from the
/// inclusion pattern, hyperparameters, and a moments snapshot.
struct VBlocks {
    idx1: Vec<usize>,
    idx2: Vec<usize>,
    counts: Vec<usize>,
    zbar_m1: Vec<DVector<f64>>,
    vm11: Vec<DMatrix<f64>>,
    v11_chol: CholFactor,
    v21: DMatrix<f64>,
    v2g1: DMatrix<f64>,
    zbar1: DVector<f64>,
    zbar2: DVector<f64>,
}

fn build_v_blocks(gamma: &[bool], lambda: f64, psi: &DMatrix<f64>, mo: &Moments) -> Result<VBlocks> {
    let p = gamma.len();
    let idx1: Vec<usize> = (0..p).filter(|&j| gamma[j]).collect();
    let idx2: Vec<usize> = (0..p).filter(|&j| !gamma[j]).collect();
    let p1 = idx1.len();
    let psi11 = sub_matrix(psi, &idx1, &idx1);
    let mut counts = Vec::new();
    let mut zbar_m1 = Vec::new();
    let mut vm11 = Vec::new();
    for c in &mo.clusters {
        let nm = c.count as f64;
        let s1 = sub_vector(&c.sum, &idx1);
        let sc11 = sub_matrix(&c.scatter, &idx1, &idx1);
        vm11.push(&sc11 - &s1 * s1.transpose() / (nm + lambda) + &psi11);
        zbar_m1.push(if c.count > 0 { &s1 / nm } else { DVector::zeros(p1) });
        counts.push(c.count);
    }
    let nf = mo.n as f64;
    let s1 = sub_vector(&mo.total_sum, &idx1);
    let s2 = sub_vector(&mo.total_sum, &idx2);
    let v11 = sub_matrix(&mo.total_scatter, &idx1, &idx1) - &s1 * s1.transpose() / (nf + lambda)
        + &psi11;
    let v21 = sub_matrix(&mo.total_scatter, &idx2, &idx1) - &s2 * s1.transpose() / (nf + lambda)
        + sub_matrix(psi, &idx2, &idx1);
    let v22 = sub_matrix(&mo.total_scatter, &idx2, &idx2) - &s2 * s2.transpose() / (nf + lambda)
        + sub_matrix(psi, &idx2, &idx2);
    let v11_chol = cholesky(&v11)?;
    let v2g1 = &v22 - &v21 * v11_chol.solve_mat(&v21.transpose());
    let zbar1 = if mo.n > 0 { s1 / nf } else { DVector::zeros(p1) };
    let zbar2 = if mo.n > 0 { s2 / nf } else { DVector::zeros(idx2.len()) };
    Ok(VBlocks { idx1, idx2, counts, zbar_m1, vm11, v11_chol, v21, v2g1, zbar1, zbar2 })
}

/// Draw θ from its conjugate posterior given the moments snapshot. When
/// `psi_override` is given it replaces the state's Ψ in every V-matrix
/// construction (used by the Ψ update, which needs a θ independent of Ψ).
pub fn sample_theta_from_moments<R: Rng + ?Sized>(
    gamma: &[bool],
    hyper: &Hyperparams,
    mo: &Moments,
    psi_override: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<ComponentDraw> {
    let psi = psi_override.unwrap_or(&hyper.psi);
    let vb = build_v_blocks(gamma, hyper.lambda, psi, mo)?;
    let p2 = vb.idx2.len();
    let nf = mo.n as f64;
    let (lambda, eta) = (hyper.lambda, hyper.eta);

    // per-cluster informative block: Σₘ₁₁ ~ IW(Vₘ₁₁, nₘ+η−p₂),
    // μₘ₁ | Σₘ₁₁ ~ N(nₘ/(nₘ+λ)·z̄ₘ₁, Σₘ₁₁/(nₘ+λ))
    let mut mu1 = Vec::new();
    let mut sigma11 = Vec::new();
    for (m, &nm) in vb.counts.iter().enumerate() {
        let nmf = nm as f64;
        let sig = sample_inverse_wishart(rng, &vb.vm11[m], nmf + eta - p2 as f64)?;
        let mean = nmf / (nmf + lambda) * &vb.zbar_m1[m];
        let sc = cholesky(&(&sig / (nmf + lambda)))?;
        let mu = mean + sc.lower() * sample_std_normal_vec(rng, sig.nrows());
        mu1.push(mu);
        sigma11.push(sig);
    }

    // shared non-informative block
    let (b2, q21, q22) = if p2 > 0 {
        // Q₂₂ ~ W(V₂|₁⁻¹, n+η)
        let v2g1_inv = cholesky(&vb.v2g1)?.inverse();
        let q22 = sample_wishart(rng, &cholesky(&v2g1_inv)?, nf + eta)?;
        // Q₂₁ | Q₂₂ ~ MN(−Q₂₂V₂₁V₁₁⁻¹, Q₂₂, V₁₁⁻¹)
        let q22_chol = cholesky(&q22)?;
        let mean21 = -&q22 * vb.v11_chol.solve_mat(&vb.v21.transpose()).transpose();
        let q21 = sample_matrix_normal(
            rng,
            &mean21,
            RowScale::Cov(&q22_chol),
            RowScale::Prec(&vb.v11_chol),
        );
        // b₂ | Q₂₁, Q₂₂ ~ N(n(Q₂₂z̄₂ + Q₂₁z̄₁)/(n+λ), Q₂₂/(n+λ))
        let mean_b2 = nf / (nf + lambda) * (&q22 * &vb.zbar2 + &q21 * &vb.zbar1);
        let cov_chol = cholesky(&(&q22 / (nf + lambda)))?;
        let b2 = mean_b2 + cov_chol.lower() * sample_std_normal_vec(rng, p2);
        (b2, q21, q22)
    } else {
        (DVector::zeros(0), DMatrix::zeros(0, vb.idx1.len()), DMatrix::zeros(0, 0))
    };

    Ok(ComponentDraw { idx1: vb.idx1, idx2: vb.idx2, mu1, sigma11, b2, q21, q22 })
}

/// Convenience wrapper over the live chain state.
pub fn sample_theta<R: Rng + ?Sized>(
    state: &ChainState,
    psi_override: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<ComponentDraw> {
    sample_theta_from_moments(&state.gamma, &state.hyper, &Moments::from_state(state), psi_override, rng)
}

fn log_mvn_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov_chol: &CholFactor) -> f64 {
    let k = x.len();
    if k == 0 {
        return 0.0;
    }
    let d = x - mean;
    let quad = d.dot(&cov_chol.solve_vec(&d));
    -0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * cov_chol.log_det() - 0.5 * quad
}

fn log_inverse_wishart_pdf(x: &DMatrix<f64>, scale: &DMatrix<f64>, df: f64) -> Result<f64> {
    let p = x.nrows();
    if p == 0 {
        return Ok(0.0);
    }
    let x_chol = cholesky(x)?;
    let x_inv = x_chol.inverse();
    let scale_inv = cholesky(scale)?.inverse();
    let w = log_wishart_pdf(&x_inv, &cholesky(&scale_inv)?, df)?;
    // Jacobian of X ↦ X⁻¹ on symmetric matrices: |det X|^{−(p+1)}
    Ok(w - (p as f64 + 1.0) * x_chol.log_det())
}

/// Exact log density of a θ draw under the conjugate posterior implied by
/// the given moments (the prior when `mo` is `Moments::prior`).
pub fn log_theta_density(
    gamma: &[bool],
    hyper: &Hyperparams,
    mo: &Moments,
    psi_override: Option<&DMatrix<f64>>,
    draw: &ComponentDraw,
) -> Result<f64> {
    let psi = psi_override.unwrap_or(&hyper.psi);
    let vb = build_v_blocks(gamma, hyper.lambda, psi, mo)?;
    let p2 = vb.idx2.len();
    let nf = mo.n as f64;
    let (lambda, eta) = (hyper.lambda, hyper.eta);
    let mut total = 0.0;
    for (m, &nm) in vb.counts.iter().enumerate() {
        let nmf = nm as f64;
        total += log_inverse_wishart_pdf(&draw.sigma11[m], &vb.vm11[m], nmf + eta - p2 as f64)?;
        let mean = nmf / (nmf + lambda) * &vb.zbar_m1[m];
        let sc = cholesky(&(&draw.sigma11[m] / (nmf + lambda)))?;
        total += log_mvn_pdf(&draw.mu1[m], &mean, &sc);
    }
    if p2 > 0 {
        let v2g1_inv = cholesky(&vb.v2g1)?.inverse();
        total += log_wishart_pdf(&draw.q22, &cholesky(&v2g1_inv)?, nf + eta)?;
        let q22_chol = cholesky(&draw.q22)?;
        let mean21 = -&draw.q22 * vb.v11_chol.solve_mat(&vb.v21.transpose()).transpose();
        total += log_matrix_normal_pdf(
            &draw.q21,
            &mean21,
            RowScale::Cov(&q22_chol),
            RowScale::Prec(&vb.v11_chol),
        );
        let mean_b2 = nf / (nf + lambda) * (&draw.q22 * &vb.zbar2 + &draw.q21 * &vb.zbar1);
        let cov_chol = cholesky(&(&draw.q22 / (nf + lambda)))?;
        total += log_mvn_pdf(&draw.b2, &mean_b2, &cov_chol);
    }
    Ok(total)
}

/// log f(Z | θ, φ): plain Gaussian likelihood of the rows under the draw.
pub fn log_likelihood_given_theta(
    z: &DMatrix<f64>,
    phi: &[usize],
    draw: &ComponentDraw,
) -> Result<f64> {
    let mut canon: Vec<(DVector<f64>, CholFactor, DVector<f64>)> = Vec::new();
    for m in 0..draw.n_clusters() {
        let (b, q) = draw.full_canonical(m)?;
        let qc = cholesky(&q)?;
        let mu = qc.solve_vec(&b);
        canon.push((mu, qc, b));
    }
    let p = z.ncols() as f64;
    let mut total = 0.0;
    for (i, &m) in phi.iter().enumerate() {
        let (mu, qc, _) = &canon[m];
        let d = z.row(i).transpose() - mu;
        let quad = d.dot(&(qc.lower() * (qc.lower().transpose() * &d)));
        total += -0.5 * p * (2.0 * std::f64::consts::PI).ln() + 0.5 * qc.log_det() - 0.5 * quad;
    }
    Ok(total)
}
