//! The posterior sampler: every update kernel composed into the iteration
//! schedule, with burn-in tuning and sample emission.

pub mod gamma;
pub mod hyper;
pub mod latent;
pub mod psi;
pub mod realloc;
pub mod split_merge;

use crate::data::{initialize_latent, Dataset};
use crate::error::Result;
use crate::marginal::{gibbs_logweights, log_marginal, GibbsChoice};
use crate::rng::RngStream;
use nalgebra::{DMatrix, DVector};
use crate::state::{ChainState, PriorConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// joint clustering and variable selection
    Vs,
    /// variable selection off: γ pinned to all-ones
    Novs,
    /// all schema structure dropped, discrete codes treated as raw reals
    Cont,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub s_alpha: f64,
    pub s_lambda: f64,
    pub s_eta: f64,
    /// probability π of extending a single-coordinate γ flip into a swap
    pub swap_prob: f64,
    /// restricted Gibbs sweeps building a split-merge launch state
    pub l_restricted: usize,
    /// γ updates per iteration; 0 means the default max(10, p/2)
    pub l_gamma: usize,
    /// initial latent-update block size in rows (adapted during burn-in)
    pub z_block: usize,
    pub mode: RunMode,
    /// run the joint γ–φ update every iteration instead of every other
    pub joint_every_iteration: bool,
    /// test hook: treat the data likelihood as constant and skip latent
    /// updates, so the chain targets the prior
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 8_000,
            burn_in: 3_000,
            thin: 1,
            seed: 0,
            n_chains: 4,
            s_alpha: 1.0,
            s_lambda: 0.5,
            s_eta: 1.0,
            swap_prob: 0.5,
            l_restricted: 3,
            l_gamma: 0,
            z_block: 1,
            mode: RunMode::Vs,
            joint_every_iteration: false,
            prior_only: false,
        }
    }
}

impl McmcConfig {
    pub fn effective_l_gamma(&self, p: usize) -> usize {
        if self.l_gamma > 0 {
            self.l_gamma
        } else {
            10.max(p / 2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(crate::error::Error::Domain("burn_in must be below iterations".into()));
        }
        if self.l_restricted == 0 || self.thin == 0 {
            return Err(crate::error::Error::Domain("l_restricted and thin must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(crate::error::Error::Domain("swap_prob must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// One emitted posterior sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub iteration: usize,
    pub gamma: Vec<bool>,
    pub phi: Vec<usize>,
    pub m: usize,
    pub lambda: f64,
    pub eta: f64,
    pub alpha: f64,
    pub log_marginal: f64,
    /// order: latent, psi, lambda, eta, alpha, gamma, split_merge, joint
    pub accept_flags: Vec<bool>,
}

/// Cumulative acceptance bookkeeping per update kind.
#[derive(Debug, Clone, Default)]
pub struct AcceptCounters {
    pub latent: (u64, u64),
    pub psi: (u64, u64),
    pub lambda: (u64, u64),
    pub eta: (u64, u64),
    pub alpha: (u64, u64),
    pub gamma: (u64, u64),
    pub split_merge: (u64, u64),
    pub realloc: (u64, u64),
    pub joint: (u64, u64),
}

impl AcceptCounters {
    pub fn rate(c: (u64, u64)) -> f64 {
        if c.1 == 0 {
            f64::NAN
        } else {
            c.0 as f64 / c.1 as f64
        }
    }
}

fn tally(counter: &mut (u64, u64), accepted: bool) {
    counter.1 += 1;
    counter.0 += u64::from(accepted);
}


/// Lloyd's algorithm with k-means++ seeding and restarts; fixed k.
/// Returns first-appearance-canonical labels.
fn kmeans(rows: &[DVector<f64>], k: usize, rng: &mut RngStream) -> Vec<usize> {
    let n = rows.len();
    let d = rows[0].nrows();
    let k = k.min(n);
    let mut fit: Option<(f64, Vec<usize>)> = None;
    for _ in 0..3 {
        let mut centers: Vec<DVector<f64>> = vec![rows[rng.random_range(0..n)].clone()];
        let mut d2: Vec<f64> = rows.iter().map(|r| (r - &centers[0]).norm_squared()).collect();
        while centers.len() < k {
            let total: f64 = d2.iter().sum();
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            centers.push(rows[pick].clone());
            for (i, r) in rows.iter().enumerate() {
                d2[i] = d2[i].min((r - centers.last().unwrap()).norm_squared());
            }
        }
        let mut labels = vec![0usize; n];
        let mut rss = f64::INFINITY;
        for _ in 0..30 {
            for (i, r) in rows.iter().enumerate() {
                labels[i] = (0..centers.len())
                    .min_by(|&a, &b| {
                        (r - &centers[a])
                            .norm_squared()
                            .partial_cmp(&(r - &centers[b]).norm_squared())
                            .unwrap()
                    })
                    .unwrap();
            }
            for (m, c) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == m).collect();
                if !members.is_empty() {
                    let mut mean = DVector::zeros(d);
                    for &i in &members {
                        mean += &rows[i];
                    }
                    *c = mean / members.len() as f64;
                }
            }
            let new_rss: f64 =
                (0..n).map(|i| (&rows[i] - &centers[labels[i]]).norm_squared()).sum();
            if new_rss >= rss - 1e-10 {
                rss = new_rss;
                break;
            }
            rss = new_rss;
        }
        if fit.as_ref().map_or(true, |f| rss < f.0) {
            fit = Some((rss, labels));
        }
    }
    let mut labels = fit.unwrap().1;
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    labels
}

/// Univariate Gaussian-mixture order selection by EM + BIC.
///
/// Unlike a k-means classification score, the mixture likelihood does not
/// reward splitting unimodal noise, so BIC picks one component there.
/// Returns (k that minimizes BIC, BIC margin of the best multimodal order
/// over the unimodal one; negative when some k > 1 wins).
fn gmm_order_1d(xs: &[f64], k_max: usize, rng: &mut RngStream) -> (usize, f64) {
    let n = xs.len();
    let mut bic1 = 0.0;
    let mut best_multi = f64::INFINITY;
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=k_max.min(n) {
        let mut best_ll = f64::NEG_INFINITY;
        for _ in 0..2 {
            // moment init from random distinct points, shared variance
            let mut mu: Vec<f64> = (0..k).map(|_| xs[rng.random_range(0..n)]).collect();
            let var0: f64 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let mut var: Vec<f64> = vec![var0 / k as f64; k];
            let mut w = vec![1.0 / k as f64; k];
            let mut ll = f64::NEG_INFINITY;
            let mut resp = vec![vec![0.0f64; k]; n];
            for _ in 0..100 {
                let mut new_ll = 0.0;
                for (i, &x) in xs.iter().enumerate() {
                    let logp: Vec<f64> = (0..k)
                        .map(|m| {
                            w[m].ln()
                                - 0.5 * (2.0 * std::f64::consts::PI * var[m]).ln()
                                - 0.5 * (x - mu[m]).powi(2) / var[m]
                        })
                        .collect();
                    let tot = crate::marginal::logsumexp(&logp);
                    new_ll += tot;
                    for m in 0..k {
                        resp[i][m] = (logp[m] - tot).exp();
                    }
                }
                for m in 0..k {
                    let rm: f64 = resp.iter().map(|r| r[m]).sum();
                    if rm < 1e-8 {
                        continue;
                    }
                    mu[m] = resp.iter().zip(xs).map(|(r, &x)| r[m] * x).sum::<f64>() / rm;
                    var[m] = (resp
                        .iter()
                        .zip(xs)
                        .map(|(r, &x)| r[m] * (x - mu[m]).powi(2))
                        .sum::<f64>()
                        / rm)
                        .max(1e-6);
                    w[m] = rm / n as f64;
                }
                if new_ll - ll < 1e-7 {
                    ll = new_ll;
                    break;
                }
                ll = new_ll;
            }
            best_ll = best_ll.max(ll);
        }
        let n_params = (3 * k - 1) as f64;
        let bic = -2.0 * best_ll + n_params * (n as f64).ln();
        if k == 1 {
            bic1 = bic;
        } else {
            best_multi = best_multi.min(bic);
        }
        if best.as_ref().map_or(true, |b| bic < b.0) {
            best = Some((bic, k));
        }
    }
    (best.unwrap().1, best_multi - bic1)
}


fn kmeans_on(z: &DMatrix<f64>, selected: &[bool], k: usize, rng: &mut RngStream) -> Vec<usize> {
    let idx: Vec<usize> = (0..selected.len()).filter(|&j| selected[j]).collect();
    let rows: Vec<DVector<f64>> = (0..z.nrows())
        .map(|i| DVector::from_iterator(idx.len(), idx.iter().map(|&j| z[(i, j)])))
        .collect();
    kmeans(&rows, k, rng)
}

/// One-way F test of a column against a grouping, at a conservative level.
fn anova_separates(col: &[f64], labels: &[usize]) -> bool {
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};
    let n = col.len();
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    if k < 2 || n <= k {
        return false;
    }
    let grand: f64 = col.iter().sum::<f64>() / n as f64;
    let mut counts = vec![0usize; k];
    let mut means = vec![0.0f64; k];
    for (&x, &l) in col.iter().zip(labels) {
        counts[l] += 1;
        means[l] += x;
    }
    for m in 0..k {
        if counts[m] == 0 {
            return false;
        }
        means[m] /= counts[m] as f64;
    }
    let ssb: f64 = (0..k).map(|m| counts[m] as f64 * (means[m] - grand).powi(2)).sum();
    let ssw: f64 = col.iter().zip(labels).map(|(&x, &l)| (x - means[l]).powi(2)).sum();
    if ssw <= 0.0 {
        return true;
    }
    let f = (ssb / (k - 1) as f64) / (ssw / (n - k) as f64);
    let dist = FisherSnedecor::new((k - 1) as f64, (n - k) as f64).unwrap();
    1.0 - dist.cdf(f) < 5e-3
}




/// R² of column `j` regressed (with intercept) on the columns in `kept`.
fn explained_r2(z: &DMatrix<f64>, j: usize, kept: &[usize]) -> f64 {
    if kept.is_empty() {
        return 0.0;
    }
    let n = z.nrows();
    let x = DMatrix::from_fn(n, kept.len() + 1, |i, c| {
        if c == 0 { 1.0 } else { z[(i, kept[c - 1])] }
    });
    let y = DVector::from_fn(n, |i, _| z[(i, j)]);
    let beta = match x.clone().svd(true, true).solve(&y, 1e-10) {
        Ok(b) => b,
        Err(_) => return 0.0,
    };
    let resid = &y - x * beta;
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss <= 0.0 {
        return 1.0;
    }
    1.0 - resid.norm_squared() / tss
}

/// Add half-gap uniform jitter to a column with few distinct values.
///
/// Rounded or ordinal columns are combs of point masses that a mixture fit
/// happily explains with one spike per level; dithering restores the
/// underlying shape so the screen only reacts to genuine multimodality.
fn dither_if_discrete(col: &mut [f64], rng: &mut RngStream) {
    let n = col.len();
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if sorted.len() > n / 3 || sorted.len() < 2 {
        return;
    }
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    for x in col.iter_mut() {
        *x += (rng.random::<f64>() - 0.5) * gap;
    }
}

pub struct Sampler {
    pub ds: Dataset,
    pub prior: PriorConfig,
    pub cfg: McmcConfig,
    pub state: ChainState,
    pub rng: RngStream,
    pub accept: AcceptCounters,
    /// current latent block size in rows, adapted during burn-in
    pub z_block: usize,
    latent_accepts_window: (u64, u64),
    has_latent: bool,
}

impl Sampler {
    /// Build a chain worker. `chain_id` selects an independent stream of the
    /// configured seed; the dataset must already be standardized.
    pub fn new(ds: &Dataset, prior: &PriorConfig, cfg: &McmcConfig, chain_id: u64) -> Result<Sampler> {
        cfg.validate()?;
        let ds = if cfg.mode == RunMode::Cont { ds.to_continuous() } else { ds.clone() };
        let p = ds.p();
        prior.validate(p)?;
        let mut rng = RngStream::new(cfg.seed, chain_id);
        let mut init_rng = rng.substream(1);
        let z = initialize_latent(&ds, &mut init_rng);
        let hyper = prior.prior_mean_hyper(p);
        let gamma = vec![true; p];
        let phi = vec![0usize; ds.n()];
        let state = ChainState::new(z, gamma, phi, hyper)?;
        let has_latent = ds.has_latent_cells();
        let _ = rng.random::<u64>(); // decouple from the init stream
        let mut s = Sampler {
            ds,
            prior: prior.clone(),
            cfg: cfg.clone(),
            state,
            rng,
            accept: AcceptCounters::default(),
            z_block: cfg.z_block.max(1),
            latent_accepts_window: (0, 0),
            has_latent,
        };
        if !s.cfg.prior_only && s.cfg.mode != RunMode::Novs {
            s.warm_start(&mut init_rng)?;
        }
        Ok(s)
    }

    /// Screen for clustering structure before the first iteration.
    ///
    /// Each variable's latent column is tested for multimodality with 1-D
    /// k-means model selection; variables with decisive multi-cluster
    /// support form the initial active set, and the initial partition is a
    /// multivariate k-means fit on that subvector.  Purely an
    /// initialization heuristic: it touches no transition kernel, so chain
    /// stationarity is unaffected.  Without it, chains cold-started from a
    /// single cluster tend to co-adapt the inclusion vector and partition
    /// onto an arbitrary variable subset during burn-in and can take a very
    /// long time to find the dominant basin.
    fn warm_start(&mut self, init_rng: &mut RngStream) -> Result<()> {
        let p = self.state.p();
        let n = self.state.n();
        let mut flagged: Vec<(f64, usize, usize)> = Vec::new();
        let mut closest = (f64::INFINITY, 0usize);
        for j in 0..p {
            let mut col: Vec<f64> = (0..n).map(|i| self.state.z[(i, j)]).collect();
            dither_if_discrete(&mut col, init_rng);
            let (k, margin) = gmm_order_1d(&col, 4, init_rng);
            if k > 1 {
                flagged.push((margin, j, k));
            } else if margin < closest.0 {
                closest = (margin, j);
            }
        }
        // Keep flagged variables strongest-first, skipping any that the kept
        // set already explains linearly; when irrelevant variables are noisy
        // functions of the informative block their marginals are multimodal
        // too, and without this gate they all pass the screen.
        flagged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut selected = vec![false; p];
        let mut kept: Vec<usize> = Vec::new();
        let mut k_joint = 1usize;
        for &(_, j, k) in &flagged {
            if explained_r2(&self.state.z, j, &kept) < 0.9 {
                selected[j] = true;
                kept.push(j);
                k_joint = k_joint.max(k);
            }
        }
        if kept.is_empty() {
            // nothing decisively multimodal: start from the least unimodal
            // variable rather than from a cold single cluster, which tends
            // to co-adapt onto arbitrary variables during burn-in
            selected[closest.1] = true;
            kept.push(closest.1);
            k_joint = 2;
        }
        // second round: variables that separate the round-one grouping
        // conditionally (one-way F test) join even when marginally unimodal,
        // under the same redundancy gate
        let mut labels = kmeans_on(&self.state.z, &selected, k_joint, init_rng);
        for _ in 0..2 {
            let mut expanded = selected.clone();
            let mut kept_now = kept.clone();
            for j in 0..p {
                if expanded[j] {
                    continue;
                }
                let col: Vec<f64> = (0..n).map(|i| self.state.z[(i, j)]).collect();
                if anova_separates(&col, &labels) && explained_r2(&self.state.z, j, &kept_now) < 0.9
                {
                    expanded[j] = true;
                    kept_now.push(j);
                }
            }
            if expanded == selected {
                break;
            }
            selected = expanded;
            kept = kept_now;
            labels = kmeans_on(&self.state.z, &selected, k_joint, init_rng);
        }
        self.state =
            ChainState::new(self.state.z.clone(), selected, labels, self.state.hyper.clone())?;
        Ok(())
    }

    pub fn log_marginal(&self) -> Result<f64> {
        if self.cfg.prior_only {
            Ok(0.0)
        } else {
            log_marginal(&self.state)
        }
    }

    /// Unrestricted Gibbs scan over all observations.
    pub fn gibbs_sweep(&mut self) -> Result<()> {
        for i in 0..self.state.n() {
            let weights = gibbs_logweights(&self.state, i, None, self.cfg.prior_only)?;
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut chosen = weights.last().map(|(c, _)| *c).unwrap_or(GibbsChoice::New);
            for (c, lw) in &weights {
                acc += lw.exp();
                if u < acc {
                    chosen = *c;
                    break;
                }
            }
            match chosen {
                GibbsChoice::Existing(m) => self.state.move_row(i, m),
                GibbsChoice::New => {
                    if self.state.stats.clusters[self.state.phi[i]].count > 1 {
                        let fresh = self.state.n_clusters();
                        self.state.move_row(i, fresh);
                    }
                }
            }
        }
        Ok(())
    }

    /// One full iteration of the update schedule.
    ///
    /// The first stretch of burn-in runs only the latent and hyperparameter
    /// kernels so the scale hyperparameters adapt to the warm-start
    /// partition before any partition or inclusion move fires; a cold
    /// partition under prior-mean hyperparameters sits in a nearly flat
    /// landscape and co-adapts onto arbitrary variable subsets otherwise.
    /// Burn-in staging does not affect the stationary distribution.
    pub fn step(&mut self, iter: usize) -> Result<Vec<bool>> {
        let vs_active = self.cfg.mode != RunMode::Novs;
        let hypers_only =
            !self.cfg.prior_only && iter < (self.cfg.burn_in / 6).min(500);
        let mut flags = vec![false; 8];

        // latent cells
        if self.has_latent && !self.cfg.prior_only {
            let frac = latent::update_latent(self, iter)?;
            flags[0] = frac > 0.0;
        }
        // Ψ
        flags[1] = psi::update_psi(self)?;
        tally(&mut self.accept.psi, flags[1]);
        // λ, η
        let (a_l, a_e) = hyper::update_lambda_eta(self)?;
        flags[2] = a_l;
        flags[3] = a_e;
        tally(&mut self.accept.lambda, a_l);
        tally(&mut self.accept.eta, a_e);
        // α
        flags[4] = hyper::update_alpha(self)?;
        tally(&mut self.accept.alpha, flags[4]);
        if hypers_only {
            if iter > 0 && iter % 1_000 == 0 {
                self.state.refresh_stats();
            }
            #[cfg(debug_assertions)]
            self.state.debug_validate();
            return Ok(flags);
        }
        // γ
        if vs_active {
            let reps = self.cfg.effective_l_gamma(self.state.p());
            for _ in 0..reps {
                let a = gamma::update_gamma(self)?;
                flags[5] |= a;
                tally(&mut self.accept.gamma, a);
            }
        }
        // split-merge + unrestricted sweep
        flags[6] = split_merge::split_merge(self)?;
        tally(&mut self.accept.split_merge, flags[6]);
        self.gibbs_sweep()?;
        // joint γ–φ
        if vs_active && (self.cfg.joint_every_iteration || iter % 2 == 0) {
            flags[7] = split_merge::joint_gamma_phi(self)?;
            tally(&mut self.accept.joint, flags[7]);
        }
        // whole-partition rebuild
        let a = realloc::reallocate(self)?;
        tally(&mut self.accept.realloc, a);

        if iter > 0 && iter % 1_000 == 0 {
            self.state.refresh_stats();
        }
        #[cfg(debug_assertions)]
        self.state.debug_validate();
        Ok(flags)
    }

    fn record(&self, iter: usize, flags: Vec<bool>) -> Result<SampleRecord> {
        Ok(SampleRecord {
            iteration: iter,
            gamma: self.state.gamma.clone(),
            phi: self.state.phi.clone(),
            m: self.state.n_clusters(),
            lambda: self.state.hyper.lambda,
            eta: self.state.hyper.eta,
            alpha: self.state.hyper.alpha,
            log_marginal: self.log_marginal()?,
            accept_flags: flags,
        })
    }

    /// Run the configured number of iterations, returning post-burn-in
    /// records at the thinning stride.
    pub fn run(&mut self) -> Result<Vec<SampleRecord>> {
        let mut out = Vec::new();
        for iter in 0..self.cfg.iterations {
            let flags = self.step(iter)?;
            if iter >= self.cfg.burn_in && (iter - self.cfg.burn_in) % self.cfg.thin == 0 {
                out.push(self.record(iter, flags)?);
            }
        }
        Ok(out)
    }

    pub(crate) fn note_latent_outcome(&mut self, accepted: bool) {
        tally(&mut self.accept.latent, accepted);
        tally(&mut self.latent_accepts_window, accepted);
    }

    /// Burn-in block-size adaptation toward acceptance in [0.2, 0.6].
    pub(crate) fn adapt_block_size(&mut self, iter: usize) {
        if iter >= self.cfg.burn_in || iter == 0 || iter % 100 != 0 {
            return;
        }
        let (acc, att) = self.latent_accepts_window;
        if att < 20 {
            return;
        }
        let rate = acc as f64 / att as f64;
        if rate < 0.2 {
            self.z_block = (self.z_block / 2).max(1);
        } else if rate > 0.6 {
            self.z_block = (self.z_block * 2).min(self.state.n().max(1));
        }
        self.latent_accepts_window = (0, 0);
    }
}

/// Convenience wrapper: one chain, start to finish.
pub fn run_chain(
    ds: &Dataset,
    prior: &PriorConfig,
    cfg: &McmcConfig,
    chain_id: u64,
) -> Result<Vec<SampleRecord>> {
    Sampler::new(ds, prior, cfg, chain_id)?.run()
}
