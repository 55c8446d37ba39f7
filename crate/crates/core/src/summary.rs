//! Posterior sample post-processing: label-switching correction, membership
//! probabilities, inclusion probabilities, and point estimates.

use crate::error::{Error, Result};
use crate::mcmc::SampleRecord;
use crate::state::PriorConfig;
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// Minimum-cost assignment on a square cost matrix (Hungarian method with
/// potentials); returns the column assigned to each row.
fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    ans
}

/// Maximum-weight assignment on a rectangular weight matrix; each row gets a
/// distinct column (padding guarantees feasibility when rows > cols, in which
/// case excess rows land on zero-weight phantom columns ≥ ncols).
pub fn max_weight_assignment(w: &DMatrix<f64>) -> Vec<usize> {
    let (r, c) = w.shape();
    if r == 0 {
        return Vec::new();
    }
    let n = r.max(c);
    let top = w.iter().cloned().fold(0.0f64, f64::max);
    let cost = DMatrix::from_fn(n, n, |i, j| {
        if i < r && j < c {
            top - w[(i, j)]
        } else {
            top
        }
    });
    min_cost_assignment(&cost)[..r].to_vec()
}

/// Iterative hard-assignment relabeling: alternate between averaging the
/// permuted indicator matrices into a probability matrix and re-permuting
/// each sample to best agree with it. Stops when no permutation changes or
/// after 100 rounds. Returns the pooled membership-probability matrix (all-
/// zero columns dropped) and the per-sample label maps.
pub fn relabel_samples(samples: &[Vec<usize>]) -> Result<(DMatrix<f64>, Vec<Vec<usize>>)> {
    if samples.is_empty() {
        return Err(Error::Samples("no samples to relabel".into()));
    }
    let n = samples[0].len();
    let k = samples
        .iter()
        .map(|s| s.iter().max().map_or(0, |m| m + 1))
        .max()
        .unwrap_or(1);
    let mut perms: Vec<Vec<usize>> = samples
        .iter()
        .map(|s| (0..s.iter().max().map_or(0, |m| m + 1)).collect())
        .collect();
    let s_count = samples.len() as f64;
    let build_p = |perms: &[Vec<usize>]| {
        let mut p_hat = DMatrix::zeros(n, k);
        for (s, perm) in samples.iter().zip(perms) {
            for (i, &m) in s.iter().enumerate() {
                p_hat[(i, perm[m])] += 1.0;
            }
        }
        p_hat / s_count
    };
    let mut p_hat = build_p(&perms);
    for _ in 0..100 {
        let mut changed = false;
        for (s, perm) in samples.iter().zip(perms.iter_mut()) {
            let m_s = perm.len();
            let mut w = DMatrix::zeros(m_s, k);
            for (i, &m) in s.iter().enumerate() {
                for col in 0..k {
                    w[(m, col)] += p_hat[(i, col)];
                }
            }
            let new_perm = max_weight_assignment(&w);
            if new_perm != *perm {
                *perm = new_perm;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        p_hat = build_p(&perms);
    }
    // drop columns that carry no relabeled mass
    let live: Vec<usize> = (0..k).filter(|&j| p_hat.column(j).sum() > 0.0).collect();
    let remap: Vec<usize> = {
        let mut r = vec![usize::MAX; k];
        for (new, &old) in live.iter().enumerate() {
            r[old] = new;
        }
        r
    };
    let trimmed = DMatrix::from_fn(n, live.len(), |i, j| p_hat[(i, live[j])]);
    for perm in perms.iter_mut() {
        for v in perm.iter_mut() {
            if remap[*v] != usize::MAX {
                *v = remap[*v];
            }
        }
    }
    Ok((trimmed, perms))
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// n × M* membership probabilities after relabeling
    pub p_hat: DMatrix<f64>,
    pub gamma_prob: Vec<f64>,
    /// relative frequency of each sampled cluster count
    pub m_posterior: BTreeMap<usize, f64>,
    pub phi_hat: Vec<usize>,
    pub gamma_hat: Vec<bool>,
    /// per pooled sample, the label permutation applied by relabeling
    pub relabel_maps: Vec<Vec<usize>>,
}

impl PosteriorSummary {
    pub fn modal_m(&self) -> usize {
        self.m_posterior
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
            .map(|(m, _)| *m)
            .unwrap_or(0)
    }
}

/// Pool chains into one summary. Each chain is relabeled internally, chains
/// after the first are aligned to the first chain's converged membership
/// matrix, and the pooled stream is relabeled once more for the final
/// estimates.
pub fn summarize(chains: &[Vec<SampleRecord>], prior: &PriorConfig) -> Result<PosteriorSummary> {
    if chains.iter().all(|c| c.is_empty()) {
        return Err(Error::Samples("no posterior samples".into()));
    }
    let nonempty: Vec<&Vec<SampleRecord>> = chains.iter().filter(|c| !c.is_empty()).collect();
    let n = nonempty[0][0].phi.len();
    let p = nonempty[0][0].gamma.len();

    // per-chain relabeling, then cross-chain alignment against chain 1
    let mut pooled: Vec<Vec<usize>> = Vec::new();
    let mut reference: Option<DMatrix<f64>> = None;
    for chain in &nonempty {
        let phis: Vec<Vec<usize>> = chain.iter().map(|r| r.phi.clone()).collect();
        let (p_hat_c, perms) = relabel_samples(&phis)?;
        let align: Vec<usize> = match &reference {
            None => {
                reference = Some(p_hat_c.clone());
                (0..p_hat_c.ncols()).collect()
            }
            Some(p_ref) => {
                let w = p_hat_c.transpose() * p_ref; // agreement weights
                max_weight_assignment(&w)
            }
        };
        for (phi, perm) in phis.iter().zip(&perms) {
            pooled.push(phi.iter().map(|&m| align[perm[m]]).collect());
        }
    }
    let (p_hat, relabel_maps) = relabel_samples(&pooled)?;

    let total = nonempty.iter().map(|c| c.len()).sum::<usize>() as f64;
    let mut gamma_prob = vec![0.0f64; p];
    let mut m_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for chain in &nonempty {
        for rec in chain.iter() {
            for (j, &g) in rec.gamma.iter().enumerate() {
                gamma_prob[j] += f64::from(u8::from(g));
            }
            *m_counts.entry(rec.m).or_insert(0) += 1;
        }
    }
    for g in gamma_prob.iter_mut() {
        *g /= total;
    }
    let m_posterior: BTreeMap<usize, f64> =
        m_counts.into_iter().map(|(m, c)| (m, c as f64 / total)).collect();

    let phi_hat: Vec<usize> = (0..n)
        .map(|i| {
            p_hat
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap()
        })
        .collect();
    let gamma_hat: Vec<bool> =
        gamma_prob.iter().zip(&prior.rho).map(|(&g, &r)| g > r).collect();

    Ok(PosteriorSummary { p_hat, gamma_prob, m_posterior, phi_hat, gamma_hat, relabel_maps })
}
