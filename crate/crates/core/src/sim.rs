//! Synthetic clustering problems, scoring metrics, and the replicate
//! benchmark runner.

use crate::data::{standardize, Dataset, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::kernels::{cholesky, sample_wishart};
use crate::mcmc::{run_chain, McmcConfig, RunMode};
use crate::rng::RngStream;
use crate::state::PriorConfig;
use crate::summary::{max_weight_assignment, summarize};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimCase {
    C1a,
    C1b,
    C1c,
    C1d,
    C2a,
    C2b,
    C2c,
    C2d,
}

impl SimCase {
    pub const ALL: [SimCase; 8] = [
        SimCase::C1a,
        SimCase::C1b,
        SimCase::C1c,
        SimCase::C1d,
        SimCase::C2a,
        SimCase::C2b,
        SimCase::C2c,
        SimCase::C2d,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            SimCase::C1a => "1a",
            SimCase::C1b => "1b",
            SimCase::C1c => "1c",
            SimCase::C1d => "1d",
            SimCase::C2a => "2a",
            SimCase::C2b => "2b",
            SimCase::C2c => "2c",
            SimCase::C2d => "2d",
        }
    }

    fn family(&self) -> u8 {
        match self {
            SimCase::C1a | SimCase::C1b | SimCase::C1c | SimCase::C1d => 1,
            _ => 2,
        }
    }

    fn variant(&self) -> u8 {
        match self {
            SimCase::C1a | SimCase::C2a => 0,
            SimCase::C1b | SimCase::C2b => 1,
            SimCase::C1c | SimCase::C2c => 2,
            SimCase::C1d | SimCase::C2d => 3,
        }
    }
}

impl FromStr for SimCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<SimCase> {
        SimCase::ALL
            .iter()
            .find(|c| c.id() == s)
            .copied()
            .ok_or_else(|| Error::Domain(format!("unknown case id '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub case: SimCase,
    pub phi_true: Vec<usize>,
    pub gamma_true: Vec<bool>,
    pub mixing: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

struct CaseSpec {
    n: usize,
    p: usize,
    p1: usize,
    mixing: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    rounded: Vec<usize>,
    left_censored: Vec<usize>,
    right_censored: Vec<usize>,
}

fn case_spec(case: SimCase) -> CaseSpec {
    let mixing = vec![0.5, 0.25, 0.25];
    if case.family() == 1 {
        let means = vec![
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![-1.5, -1.5]),
        ];
        let cov = |r: f64| DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
        let covs = vec![cov(0.5), cov(0.5), cov(-0.5)];
        let (rounded, left, right) = match case.variant() {
            0 | 1 => (vec![], vec![], vec![]),
            _ => (vec![0, 5], vec![1, 8], vec![2, 9]),
        };
        CaseSpec {
            n: 150,
            p: 10,
            p1: 2,
            mixing,
            means,
            covs,
            rounded,
            left_censored: left,
            right_censored: right,
        }
    } else {
        let means = vec![
            DVector::from_vec(vec![0.6, 0.0, 1.2, 0.0]),
            DVector::from_vec(vec![0.0, 1.5, -0.6, 1.9]),
            DVector::from_vec(vec![-2.0, -2.0, 0.0, 0.6]),
        ];
        let flat = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.5 });
        let alternating = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                1.0
            } else {
                0.5 * (-1.0f64).powi((i + j) as i32)
            }
        });
        let covs = vec![flat.clone(), flat, alternating];
        let (rounded, left, right) = match case.variant() {
            0 | 1 => (vec![], vec![], vec![]),
            _ => (vec![0, 5, 10], vec![1, 8, 9, 10], vec![2, 11, 12, 13]),
        };
        CaseSpec {
            n: 300,
            p: 30,
            p1: 4,
            mixing,
            means,
            covs,
            rounded,
            left_censored: left,
            right_censored: right,
        }
    }
}

const CENSOR_BOUND: f64 = 1.4;

/// Generate one replicate of a simulation case: the raw (unstandardized)
/// dataset with schema reflecting induced discreteness/censoring, and the
/// ground truth recorded before any censoring or deletion.
pub fn generate_case(case: SimCase, rng: &mut RngStream) -> Result<(Dataset, SimTruth)> {
    let spec = case_spec(case);
    let (n, p, p1) = (spec.n, spec.p, spec.p1);
    let p2 = p - p1;
    let chols: Vec<_> = spec.covs.iter().map(cholesky).collect::<Result<_>>()?;

    let phi_true: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, w) in spec.mixing.iter().enumerate() {
                acc += w;
                if u < acc {
                    return k;
                }
            }
            spec.mixing.len() - 1
        })
        .collect();

    let mut y = DMatrix::zeros(n, p);
    for (i, &k) in phi_true.iter().enumerate() {
        let e = DVector::from_fn(p1, |_, _| rng.sample(StandardNormal));
        let v = &spec.means[k] + chols[k].lower() * e;
        for j in 0..p1 {
            y[(i, j)] = v[j];
        }
    }

    // non-informative block
    if case.variant() == 0 {
        for i in 0..n {
            for j in p1..p {
                y[(i, j)] = rng.sample(StandardNormal);
            }
        }
    } else {
        // y⁽²⁾ = B y⁽¹⁾ + ε, ε ~ N(0, Q₂₂⁻¹), Q₂₂ ~ W(I, p)
        let b = DMatrix::from_fn(p2, p1, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * 0.3f64.sqrt()
        });
        let eye = cholesky(&DMatrix::identity(p2, p2))?;
        let q22 = sample_wishart(rng, &eye, p as f64)?;
        let cov2 = cholesky(&q22)?.inverse();
        let cov2_chol = cholesky(&cov2)?;
        for i in 0..n {
            let y1 = DVector::from_fn(p1, |j, _| y[(i, j)]);
            let e = DVector::from_fn(p2, |_, _| rng.sample(StandardNormal));
            let y2 = &b * y1 + cov2_chol.lower() * e;
            for j in 0..p2 {
                y[(i, p1 + j)] = y2[j];
            }
        }
    }

    let truth = SimTruth {
        case,
        phi_true,
        gamma_true: (0..p).map(|j| j < p1).collect(),
        mixing: spec.mixing.clone(),
        means: spec.means.clone(),
        covs: spec.covs.clone(),
    };

    // induced discreteness / censoring
    let mut schema: Vec<VariableSchema> =
        (0..p).map(|j| VariableSchema::continuous(&format!("y{}", j + 1))).collect();
    for &j in &spec.rounded {
        for i in 0..n {
            y[(i, j)] = y[(i, j)].round().clamp(-4.0, 4.0);
        }
    }
    for &j in &spec.left_censored {
        if spec.rounded.contains(&j) {
            // a rounded value at or below the bound is pushed to the bound
            for i in 0..n {
                y[(i, j)] = y[(i, j)].max(-CENSOR_BOUND);
            }
        } else {
            for i in 0..n {
                y[(i, j)] = y[(i, j)].max(-CENSOR_BOUND);
            }
            schema[j].lower = -CENSOR_BOUND;
        }
    }
    for &j in &spec.right_censored {
        for i in 0..n {
            y[(i, j)] = y[(i, j)].min(CENSOR_BOUND);
        }
        schema[j].upper = CENSOR_BOUND;
    }
    for &j in &spec.rounded {
        let obs_min = (0..n).map(|i| y[(i, j)]).fold(f64::INFINITY, f64::min);
        let obs_max = (0..n).map(|i| y[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut levels: Vec<f64> = (-4..=4)
            .map(f64::from)
            .filter(|&l| l >= obs_min && l <= obs_max)
            .collect();
        if spec.left_censored.contains(&j) {
            // clamped column: the bound itself is the lowest level
            levels.retain(|&l| l > -CENSOR_BOUND);
            levels.insert(0, -CENSOR_BOUND);
        }
        schema[j].kind = VariableKind::Ordinal;
        schema[j].levels = levels;
    }

    // missingness
    let mut observed = DMatrix::from_element(n, p, true);
    if case.variant() == 3 {
        for j in (1..p).step_by(2) {
            for i in 0..n {
                if rng.random::<f64>() < 0.3 {
                    observed[(i, j)] = false;
                }
            }
        }
    }

    Ok((Dataset::new(y, observed, schema)?, truth))
}

fn pairs(k: f64) -> f64 {
    k * (k - 1.0) / 2.0
}

fn contingency(a: &[usize], b: &[usize]) -> DMatrix<f64> {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut c = DMatrix::zeros(ka, kb);
    for (&x, &y) in a.iter().zip(b) {
        c[(x, y)] += 1.0;
    }
    c
}

/// (Acc, FI, ARI) of an estimated partition against the truth.
pub fn clustering_metrics(phi_est: &[usize], phi_true: &[usize]) -> Result<(f64, f64, f64)> {
    if phi_est.len() != phi_true.len() {
        return Err(Error::Shape("partition lengths differ".into()));
    }
    let n = phi_est.len() as f64;
    let c = contingency(phi_est, phi_true);

    // Acc: optimal one-to-one matching of estimated to true labels
    let assignment = max_weight_assignment(&c);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .filter(|(_, &j)| j < c.ncols())
        .map(|(i, &j)| c[(i, j)])
        .sum();
    let acc = matched / n;

    let tp: f64 = c.iter().map(|&v| pairs(v)).sum();
    let est_pairs: f64 = c.row_iter().map(|r| pairs(r.sum())).sum();
    let true_pairs: f64 = c.column_iter().map(|col| pairs(col.sum())).sum();

    let fi = if est_pairs * true_pairs > 0.0 {
        tp / (est_pairs * true_pairs).sqrt()
    } else if est_pairs == true_pairs {
        1.0
    } else {
        0.0
    };

    let expected = est_pairs * true_pairs / pairs(n);
    let denom = 0.5 * (est_pairs + true_pairs) - expected;
    let ari = if denom.abs() < 1e-15 { 1.0 } else { (tp - expected) / denom };
    Ok((acc, fi, ari))
}

/// (p₁, PVC) of an estimated inclusion vector against the truth.
pub fn selection_metrics(gamma_hat: &[bool], gamma_true: &[bool]) -> Result<(f64, f64)> {
    if gamma_hat.len() != gamma_true.len() {
        return Err(Error::Shape("inclusion lengths differ".into()));
    }
    let p1 = gamma_hat.iter().filter(|&&g| g).count() as f64;
    let agree = gamma_hat.iter().zip(gamma_true).filter(|(a, b)| a == b).count() as f64;
    Ok((p1, agree / gamma_hat.len() as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateResult {
    pub case: SimCase,
    pub mode: RunMode,
    pub replicate: usize,
    pub seed: u64,
    pub acc: f64,
    pub fi: f64,
    pub ari: f64,
    pub modal_m: usize,
    pub p1: f64,
    pub pvc: f64,
    pub comp_secs: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
}

fn summarize_metric(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, sd }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub case: SimCase,
    pub mode: RunMode,
    pub replicates: usize,
    pub failed: usize,
    pub acc: MetricSummary,
    pub fi: MetricSummary,
    pub ari: MetricSummary,
    pub m: MetricSummary,
    pub p1: MetricSummary,
    pub pvc: MetricSummary,
    pub comp_secs: MetricSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub per_replicate: Vec<ReplicateResult>,
    pub base_seed: u64,
}

/// Deterministic stream id for one (case, mode, replicate) cell.
fn replicate_stream(case: SimCase, mode: RunMode, replicate: usize) -> u64 {
    let mode_code = match mode {
        RunMode::Vs => 0u64,
        RunMode::Novs => 1,
        RunMode::Cont => 2,
    };
    let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
    for byte in [case.family(), case.variant(), mode_code as u8] {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= replicate as u64;
    h.wrapping_mul(0x0000_0100_0000_01b3)
}

/// Fit one generated replicate and score it against the truth.
pub fn run_replicate(
    case: SimCase,
    mode: RunMode,
    replicate: usize,
    cfg: &McmcConfig,
) -> Result<ReplicateResult> {
    let stream = replicate_stream(case, mode, replicate);
    let mut gen_rng = RngStream::new(cfg.seed, stream);
    let (raw, truth) = generate_case(case, &mut gen_rng)?;
    let ds = standardize(&raw)?;
    let prior = PriorConfig::defaults_for(ds.p());
    let mut chain_cfg = cfg.clone();
    chain_cfg.mode = mode;
    let start = std::time::Instant::now();
    let chains: Vec<_> = (0..cfg.n_chains.max(1))
        .map(|c| run_chain(&ds, &prior, &chain_cfg, stream.wrapping_add(c as u64 + 1)))
        .collect::<Result<_>>()?;
    let comp_secs = start.elapsed().as_secs_f64();
    let summary = summarize(&chains, &prior)?;
    let (acc, fi, ari) = clustering_metrics(&summary.phi_hat, &truth.phi_true)?;
    let (p1, pvc) = selection_metrics(&summary.gamma_hat, &truth.gamma_true)?;
    Ok(ReplicateResult {
        case,
        mode,
        replicate,
        seed: cfg.seed,
        acc,
        fi,
        ari,
        modal_m: summary.modal_m(),
        p1,
        pvc,
        comp_secs,
    })
}

/// Replicated benchmark over case × mode cells; replicates run in parallel.
/// A failed replicate is dropped from the aggregates and counted.
pub fn run_benchmark(
    cases: &[SimCase],
    modes: &[RunMode],
    replicates: usize,
    cfg: &McmcConfig,
) -> Result<BenchmarkReport> {
    if replicates == 0 {
        return Err(Error::Domain("replicates must be ≥ 1".into()));
    }
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &case in cases {
        for &mode in modes {
            let results: Vec<Result<ReplicateResult>> = (0..replicates)
                .into_par_iter()
                .map(|r| run_replicate(case, mode, r, cfg))
                .collect();
            let mut ok = Vec::new();
            let mut failed = 0usize;
            for res in results {
                match res {
                    Ok(r) => ok.push(r),
                    Err(e) => {
                        failed += 1;
                        eprintln!("warning: replicate failed for {}/{:?}: {e}", case.id(), mode);
                    }
                }
            }
            if ok.is_empty() {
                return Err(Error::Samples(format!(
                    "all replicates failed for {}/{mode:?}",
                    case.id()
                )));
            }
            let pick = |f: fn(&ReplicateResult) -> f64| {
                summarize_metric(&ok.iter().map(f).collect::<Vec<_>>())
            };
            rows.push(BenchRow {
                case,
                mode,
                replicates: ok.len(),
                failed,
                acc: pick(|r| r.acc),
                fi: pick(|r| r.fi),
                ari: pick(|r| r.ari),
                m: pick(|r| r.modal_m as f64),
                p1: pick(|r| r.p1),
                pvc: pick(|r| r.pvc),
                comp_secs: pick(|r| r.comp_secs),
            });
            all.extend(ok);
        }
    }
    Ok(BenchmarkReport { rows, per_replicate: all, base_seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn metric_hand_values() {
        let a = vec![0usize, 0, 1, 1];
        let (acc, fi, ari) = clustering_metrics(&a, &a).unwrap();
        assert_relative_eq!(acc, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ari, 1.0, epsilon = 1e-12);

        let flipped = vec![1usize, 1, 0, 0];
        let (acc, fi, ari) = clustering_metrics(&a, &flipped).unwrap();
        assert_relative_eq!(acc, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ari, 1.0, epsilon = 1e-12);

        // est {1,1,1,2}, true {1,1,2,2}: TP=1, est pairs 3, true pairs 2
        let est = vec![0usize, 0, 0, 1];
        let truth = vec![0usize, 0, 1, 1];
        let (acc, fi, _) = clustering_metrics(&est, &truth).unwrap();
        assert_relative_eq!(fi, 1.0 / 6.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(acc, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn selection_hand_values() {
        let truth: Vec<bool> = (0..10).map(|j| j < 2).collect();
        let (p1, pvc) = selection_metrics(&truth.clone(), &truth).unwrap();
        assert_eq!(p1, 2.0);
        assert_eq!(pvc, 1.0);
        let mut off = truth.clone();
        off[7] = true;
        let (p1, pvc) = selection_metrics(&off, &truth).unwrap();
        assert_eq!(p1, 3.0);
        assert_relative_eq!(pvc, 0.9, epsilon = 1e-12);
        let zeros = vec![false; 10];
        let (_, pvc) = selection_metrics(&zeros, &truth).unwrap();
        assert_relative_eq!(pvc, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn ari_properties() {
        let mut rng = RngStream::new(31, 0);
        // permutation invariance
        let a: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
        let perm = [2usize, 0, 1];
        let b_p: Vec<usize> = b.iter().map(|&m| perm[m]).collect();
        let (_, _, ari1) = clustering_metrics(&a, &b).unwrap();
        let (_, _, ari2) = clustering_metrics(&a, &b_p).unwrap();
        assert_relative_eq!(ari1, ari2, epsilon = 1e-12);
        // ≈0 under independent random labelings
        let mut total = 0.0;
        for _ in 0..1000 {
            let x: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
            let y: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
            total += clustering_metrics(&x, &y).unwrap().2;
        }
        assert!((total / 1000.0).abs() < 0.02);
    }

    #[test]
    fn acc_beats_majority_baseline() {
        let mut rng = RngStream::new(32, 0);
        for _ in 0..50 {
            let t: Vec<usize> = (0..40).map(|_| rng.random_range(0..3)).collect();
            let e: Vec<usize> = (0..40).map(|_| rng.random_range(0..4)).collect();
            let (acc, _, _) = clustering_metrics(&e, &t).unwrap();
            let mut counts = [0usize; 3];
            for &m in &t {
                counts[m] += 1;
            }
            let baseline = *counts.iter().max().unwrap() as f64 / 40.0;
            // a one-to-one matching can always emulate all-in-one-cluster
            assert!(acc >= baseline / 3.0 - 1e-12);
            assert!(acc <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn generate_case_shapes_and_determinism() {
        for case in SimCase::ALL {
            let mut rng = RngStream::new(41, 7);
            let (ds, truth) = generate_case(case, &mut rng).unwrap();
            let (n, p, p1) = if case.family() == 1 { (150, 10, 2) } else { (300, 30, 4) };
            assert_eq!(ds.n(), n);
            assert_eq!(ds.p(), p);
            assert_eq!(truth.gamma_true.iter().filter(|&&g| g).count(), p1);
            assert!(truth.phi_true.iter().all(|&m| m < 3));
            let mut rng2 = RngStream::new(41, 7);
            let (ds2, truth2) = generate_case(case, &mut rng2).unwrap();
            assert_eq!(ds.y, ds2.y);
            assert_eq!(ds.observed, ds2.observed);
            assert_eq!(truth.phi_true, truth2.phi_true);
        }
    }

    #[test]
    fn censored_case_properties() {
        let mut rng = RngStream::new(42, 0);
        let mut at_bound = 0usize;
        let mut total = 0usize;
        for _ in 0..30 {
            let (ds, _) = generate_case(SimCase::C1c, &mut rng).unwrap();
            // rounded columns became ordinal with integer levels
            assert_eq!(ds.schema[0].kind, VariableKind::Ordinal);
            assert_eq!(ds.schema[5].kind, VariableKind::Ordinal);
            assert!(ds.schema[0].levels.iter().all(|l| l.fract() == 0.0));
            // censored columns carry bounds and clamp mass
            assert_eq!(ds.schema[1].lower, -1.4);
            assert_eq!(ds.schema[2].upper, 1.4);
            at_bound += (0..ds.n()).filter(|&i| ds.y[(i, 1)] == -1.4).count();
            total += ds.n();
            assert!((0..ds.n()).all(|i| ds.y[(i, 2)] <= 1.4));
        }
        // left-censoring rate is in the ballpark of the nominal ~8%
        let rate = at_bound as f64 / total as f64;
        assert!(rate > 0.02 && rate < 0.25, "rate {rate}");
    }

    #[test]
    fn missing_case_rate() {
        let mut rng = RngStream::new(43, 0);
        let (ds, _) = generate_case(SimCase::C1d, &mut rng).unwrap();
        // odd 0-based columns (even numbered variables) lose ~30%
        for j in (1..10).step_by(2) {
            let missing = (0..150).filter(|&i| !ds.observed[(i, j)]).count() as f64 / 150.0;
            assert!(missing > 0.15 && missing < 0.45, "col {j}: {missing}");
        }
        for j in (0..10).step_by(2) {
            assert!((0..150).all(|i| ds.observed[(i, j)]));
        }
    }

    #[test]
    fn informative_means_match_spec() {
        // empirical means of the informative block per true cluster
        let mut rng = RngStream::new(44, 0);
        let spec_means = [[2.0, 0.0], [0.0, 2.0], [-1.5, -1.5]];
        let mut sums = [[0.0f64; 2]; 3];
        let mut counts = [0usize; 3];
        for _ in 0..40 {
            let (ds, truth) = generate_case(SimCase::C1a, &mut rng).unwrap();
            for (i, &k) in truth.phi_true.iter().enumerate() {
                sums[k][0] += ds.y[(i, 0)];
                sums[k][1] += ds.y[(i, 1)];
                counts[k] += 1;
            }
        }
        for k in 0..3 {
            for j in 0..2 {
                let mean = sums[k][j] / counts[k] as f64;
                let se = 1.0 / (counts[k] as f64).sqrt();
                assert!(
                    (mean - spec_means[k][j]).abs() < 3.0 * se,
                    "cluster {k} coord {j}: {mean}"
                );
            }
        }
    }

    #[test]
    fn double_listed_column_in_case_2c() {
        let mut rng = RngStream::new(45, 0);
        let (ds, _) = generate_case(SimCase::C2c, &mut rng).unwrap();
        // y11 (index 10) is rounded then clamped: ordinal with −1.4 floor
        assert_eq!(ds.schema[10].kind, VariableKind::Ordinal);
        assert_eq!(ds.schema[10].levels[0], -1.4);
        assert!((0..300).all(|i| ds.y[(i, 10)] >= -1.4));
    }

    #[test]
    fn replicate_stream_is_injective_enough() {
        let mut seen = std::collections::HashSet::new();
        for case in SimCase::ALL {
            for mode in [RunMode::Vs, RunMode::Novs, RunMode::Cont] {
                for r in 0..100 {
                    assert!(seen.insert(replicate_stream(case, mode, r)));
                }
            }
        }
    }

    #[test]
    fn tiny_benchmark_runs_and_reruns_identically() {
        let cfg = McmcConfig {
            iterations: 30,
            burn_in: 10,
            n_chains: 2,
            seed: 5,
            l_gamma: 2,
            ..McmcConfig::default()
        };
        let report =
            run_benchmark(&[SimCase::C1a], &[RunMode::Vs], 2, &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].replicates, 2);
        assert_eq!(report.per_replicate.len(), 2);
        let again = run_benchmark(&[SimCase::C1a], &[RunMode::Vs], 2, &cfg).unwrap();
        for (a, b) in report.per_replicate.iter().zip(&again.per_replicate) {
            assert_eq!(a.acc, b.acc);
            assert_eq!(a.p1, b.p1);
            assert_eq!(a.modal_m, b.modal_m);
        }
    }
}
