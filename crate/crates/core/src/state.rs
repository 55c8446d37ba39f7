//! Mutable sampler state: latent matrix, variable-inclusion vector, cluster
//! labels, hyperparameters, and the incrementally maintained per-cluster
//! sufficient statistics.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Hyperparameters sampled by the chain.
#[derive(Debug, Clone)]
pub struct Hyperparams {
    pub lambda: f64,
    pub eta: f64,
    pub psi: DMatrix<f64>,
    pub alpha: f64,
}

impl Hyperparams {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Domain("lambda must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Domain("alpha must be positive".into()));
        }
        if !(self.eta > (p + 1) as f64) {
            return Err(Error::Domain(format!("eta must exceed p+1 = {}", p + 1)));
        }
        if self.psi.nrows() != p || self.psi.ncols() != p {
            return Err(Error::Shape("psi dimension".into()));
        }
        Ok(())
    }
}

/// Fixed prior settings: Gamma(shape, rate) for λ, η−(p+1), α; Wishart(P, N)
/// for Ψ; Bernoulli(ρⱼ) for inclusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    #[serde(skip, default = "DMatrix::<f64>::zeros_generic_0")]
    pub wishart_scale: DMatrix<f64>,
    pub wishart_df: f64,
    pub rho: Vec<f64>,
}

// serde default helper: an empty matrix replaced by `defaults_for` later
trait ZeroMat {
    fn zeros_generic_0() -> DMatrix<f64>;
}
impl ZeroMat for DMatrix<f64> {
    fn zeros_generic_0() -> DMatrix<f64> {
        DMatrix::zeros(0, 0)
    }
}

impl PriorConfig {
    /// Vague defaults: all Gamma shapes/rates 2, N = p+2, P = (1/N)·I (so
    /// the prior mean of Ψ is the identity), ρⱼ = 1/2.
    pub fn defaults_for(p: usize) -> PriorConfig {
        let n = (p + 2) as f64;
        PriorConfig {
            a_lambda: 2.0,
            b_lambda: 2.0,
            a_eta: 2.0,
            b_eta: 2.0,
            a_alpha: 2.0,
            b_alpha: 2.0,
            wishart_scale: DMatrix::identity(p, p) / n,
            wishart_df: n,
            rho: vec![0.5; p],
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for (name, v) in [
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive")));
            }
        }
        if self.wishart_df < p as f64 {
            return Err(Error::Domain("wishart_df must be at least p".into()));
        }
        if self.wishart_scale.nrows() != p {
            return Err(Error::Shape("wishart_scale dimension".into()));
        }
        if self.rho.len() != p || self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Domain("rho must be p probabilities".into()));
        }
        Ok(())
    }

    /// Prior-mean hyperparameters (used for chain initialization).
    pub fn prior_mean_hyper(&self, p: usize) -> Hyperparams {
        Hyperparams {
            lambda: self.a_lambda / self.b_lambda,
            eta: (p + 1) as f64 + self.a_eta / self.b_eta,
            psi: &self.wishart_scale * self.wishart_df,
            alpha: self.a_alpha / self.b_alpha,
        }
    }
}

/// Running first and second raw moments of the latent rows, per cluster and
/// overall, maintained by rank-one updates. Full-p blocks are cached so the
/// inclusion vector can change without invalidating anything.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub count: usize,
    pub sum: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ClusterStatsCache {
    pub clusters: Vec<ClusterStats>,
    pub total_sum: DVector<f64>,
    pub total_scatter: DMatrix<f64>,
}

impl ClusterStatsCache {
    pub fn recompute(z: &DMatrix<f64>, phi: &[usize]) -> ClusterStatsCache {
        let p = z.ncols();
        let m = phi.iter().copied().max().map_or(0, |m| m + 1);
        let mut clusters: Vec<ClusterStats> = (0..m)
            .map(|_| ClusterStats {
                count: 0,
                sum: DVector::zeros(p),
                scatter: DMatrix::zeros(p, p),
            })
            .collect();
        let mut total_sum = DVector::zeros(p);
        let mut total_scatter = DMatrix::zeros(p, p);
        for (i, &c) in phi.iter().enumerate() {
            let row = z.row(i).transpose();
            let outer = &row * row.transpose();
            clusters[c].count += 1;
            clusters[c].sum += &row;
            clusters[c].scatter += &outer;
            total_sum += &row;
            total_scatter += &outer;
        }
        ClusterStatsCache { clusters, total_sum, total_scatter }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    fn add_row(&mut self, m: usize, row: &DVector<f64>) {
        if m == self.clusters.len() {
            let p = row.len();
            self.clusters.push(ClusterStats {
                count: 0,
                sum: DVector::zeros(p),
                scatter: DMatrix::zeros(p, p),
            });
        }
        let c = &mut self.clusters[m];
        c.count += 1;
        c.sum += row;
        c.scatter += row * row.transpose();
        self.total_sum += row;
        self.total_scatter += row * row.transpose();
    }

    /// Remove a row from cluster m; returns true if the cluster emptied and
    /// was deleted (callers must then shift labels above m down by one).
    fn remove_row(&mut self, m: usize, row: &DVector<f64>) -> bool {
        let c = &mut self.clusters[m];
        c.count -= 1;
        c.sum -= row;
        c.scatter -= row * row.transpose();
        self.total_sum -= row;
        self.total_scatter -= row * row.transpose();
        if c.count == 0 {
            self.clusters.remove(m);
            true
        } else {
            false
        }
    }

    fn update_row_in_place(&mut self, m: usize, old: &DVector<f64>, new: &DVector<f64>) {
        let d_outer = new * new.transpose() - old * old.transpose();
        let d_sum = new - old;
        let c = &mut self.clusters[m];
        c.sum += &d_sum;
        c.scatter += &d_outer;
        self.total_sum += &d_sum;
        self.total_scatter += &d_outer;
    }

    /// Largest absolute deviation from a from-scratch recomputation.
    pub fn max_dev(&self, z: &DMatrix<f64>, phi: &[usize]) -> f64 {
        let fresh = ClusterStatsCache::recompute(z, phi);
        if fresh.clusters.len() != self.clusters.len() {
            return f64::INFINITY;
        }
        let mut d: f64 = (&self.total_sum - &fresh.total_sum).abs().max();
        d = d.max((&self.total_scatter - &fresh.total_scatter).abs().max());
        for (a, b) in self.clusters.iter().zip(&fresh.clusters) {
            if a.count != b.count {
                return f64::INFINITY;
            }
            d = d.max((&a.sum - &b.sum).abs().max());
            d = d.max((&a.scatter - &b.scatter).abs().max());
        }
        d
    }
}

/// Extract a sub-vector by index list.
pub fn sub_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |k, _| v[idx[k]])
}

/// Extract a sub-matrix by row and column index lists.
pub fn sub_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Stable permutation placing included columns first: returns the original
/// indices of the informative block followed by the rest.
pub fn reorder_for_gamma(gamma: &[bool]) -> (Vec<usize>, usize) {
    let mut perm: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j]).collect();
    let p1 = perm.len();
    perm.extend((0..gamma.len()).filter(|&j| !gamma[j]));
    (perm, p1)
}

/// Full MCMC chain state. Cluster labels are 0-based and contiguous: every
/// label in 0..M occurs at least once.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub z: DMatrix<f64>,
    pub gamma: Vec<bool>,
    pub phi: Vec<usize>,
    pub hyper: Hyperparams,
    pub stats: ClusterStatsCache,
}

impl ChainState {
    pub fn new(z: DMatrix<f64>, gamma: Vec<bool>, phi: Vec<usize>, hyper: Hyperparams) -> Result<ChainState> {
        let p = z.ncols();
        if gamma.len() != p || phi.len() != z.nrows() {
            return Err(Error::Shape("gamma/phi dimensions".into()));
        }
        hyper.validate(p)?;
        let stats = ClusterStatsCache::recompute(&z, &phi);
        let state = ChainState { z, gamma, phi, hyper, stats };
        state.check_contiguity()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_clusters(&self) -> usize {
        self.stats.n_clusters()
    }

    /// Indices of informative columns in original order.
    pub fn informative(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.gamma[j]).collect()
    }

    pub fn noninformative(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !self.gamma[j]).collect()
    }

    fn check_contiguity(&self) -> Result<()> {
        let m = self.n_clusters();
        let mut seen = vec![false; m];
        for &c in &self.phi {
            if c >= m {
                return Err(Error::Domain("label out of range".into()));
            }
            seen[c] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Domain("labels are not contiguous".into()));
        }
        Ok(())
    }

    pub fn z_row(&self, i: usize) -> DVector<f64> {
        self.z.row(i).transpose()
    }

    /// Move observation i to cluster `m_new` (may equal M to open a new
    /// cluster). Labels are recompacted if the old cluster empties.
    pub fn move_row(&mut self, i: usize, m_new: usize) {
        let m_old = self.phi[i];
        if m_old == m_new {
            return;
        }
        debug_assert!(m_new <= self.n_clusters());
        let row = self.z_row(i);
        self.stats.add_row(m_new, &row);
        let removed = self.stats.remove_row(m_old, &row);
        self.phi[i] = m_new;
        if removed {
            for c in self.phi.iter_mut() {
                if *c > m_old {
                    *c -= 1;
                }
            }
        }
    }

    /// Replace latent row i, updating cluster and global moments.
    pub fn set_z_row(&mut self, i: usize, new_row: &DVector<f64>) {
        let old = self.z_row(i);
        self.stats.update_row_in_place(self.phi[i], &old, new_row);
        self.z.row_mut(i).copy_from(&new_row.transpose());
    }

    /// Wash out rank-one floating-point drift.
    pub fn refresh_stats(&mut self) {
        self.stats = ClusterStatsCache::recompute(&self.z, &self.phi);
    }

    /// Debug sweep over the state invariants.
    pub fn debug_validate(&self) {
        debug_assert!(self.check_contiguity().is_ok());
        debug_assert!(
            self.stats.max_dev(&self.z, &self.phi) < 1e-6,
            "cached statistics drifted from recomputation"
        );
        debug_assert_eq!(
            self.stats.clusters.iter().map(|c| c.count).sum::<usize>(),
            self.n()
        );
    }
}
