//! Metropolis–Hastings update of latent cells (missing values and the latent
//! scores behind ordinal / censored observations).
//!
//! Rows with free cells are processed in blocks. For each block, a transient
//! component draw θ* is taken from moments computed with the block's free
//! cells replaced by fixed anchor values, so θ* does not depend on the values
//! being updated. New cell values are then proposed sequentially from the
//! full conditionals under θ*, truncated to each cell's interval, and the
//! block is accepted against the exact collapsed marginal.

use super::Sampler;
use crate::conjugate::{sample_theta_from_moments, Moments};
use crate::data::{Dataset, LatentInterval};
use crate::error::Result;
use crate::kernels::{sample_truncated_normal, truncated_normal_ln_pdf};
use crate::marginal::log_marginal;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::HashMap;

/// Fixed stand-in for a free cell, independent of its current value.
fn anchor(interval: &LatentInterval) -> f64 {
    if let Some(v) = interval.point {
        return v;
    }
    let (lo, hi) = (interval.lo, interval.hi);
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 0.5,
        (false, true) => hi - 0.5,
        (false, false) => 0.0,
    }
}

/// Rows that have at least one free cell, with the free column indices.
pub fn free_rows(ds: &Dataset) -> Vec<(usize, Vec<usize>)> {
    let (n, p) = ds.y.shape();
    let mut out = Vec::new();
    for i in 0..n {
        let cols: Vec<usize> = (0..p)
            .filter(|&j| ds.latent_interval(i, j).is_free())
            .collect();
        if !cols.is_empty() {
            out.push((i, cols));
        }
    }
    out
}

/// Conditional mean and sd of cell j given the rest of the row, under a
/// canonical (b, Q) component.
fn cell_conditional(b: &DVector<f64>, q: &DMatrix<f64>, row: &DVector<f64>, j: usize) -> (f64, f64) {
    let qjj = q[(j, j)];
    let mut lin = b[j];
    for k in 0..row.len() {
        if k != j {
            lin -= q[(j, k)] * row[k];
        }
    }
    (lin / qjj, 1.0 / qjj.sqrt())
}

/// One full pass over all free cells; returns the fraction of accepted blocks.
pub fn update_latent(s: &mut Sampler, iter: usize) -> Result<f64> {
    let rows = free_rows(&s.ds);
    if rows.is_empty() {
        return Ok(0.0);
    }
    let block = s.z_block.max(1);
    let mut accepted = 0usize;
    let mut attempted = 0usize;
    let mut lm_old = if s.cfg.prior_only { 0.0 } else { log_marginal(&s.state)? };

    for chunk in rows.chunks(block) {
        // moments with this block's free cells anchored
        let mut mo = Moments::from_state(&s.state);
        for (i, cols) in chunk {
            let old = s.state.z_row(*i);
            let mut anchored = old.clone();
            for &j in cols {
                anchored[j] = anchor(&s.ds.latent_interval(*i, j));
            }
            mo.replace_row(s.state.phi[*i], &old, &anchored);
        }
        let theta = sample_theta_from_moments(
            &s.state.gamma,
            &s.state.hyper,
            &mo,
            None,
            &mut s.rng,
        )?;
        let mut canon: HashMap<usize, (DVector<f64>, DMatrix<f64>)> = HashMap::new();
        for (i, _) in chunk {
            let m = s.state.phi[*i];
            if !canon.contains_key(&m) {
                canon.insert(m, theta.full_canonical(m)?);
            }
        }

        // forward pass: sequential truncated-normal draws in fixed cell order
        let mut log_q_fwd = 0.0;
        let mut old_rows = Vec::with_capacity(chunk.len());
        let mut new_rows = Vec::with_capacity(chunk.len());
        for (i, cols) in chunk {
            let (b, q) = &canon[&s.state.phi[*i]];
            let old = s.state.z_row(*i);
            let mut row = old.clone();
            for &j in cols {
                let (mu, sd) = cell_conditional(b, q, &row, j);
                let iv = s.ds.latent_interval(*i, j);
                let v = sample_truncated_normal(&mut s.rng, mu, sd, iv.lo, iv.hi);
                log_q_fwd += truncated_normal_ln_pdf(v, mu, sd, iv.lo, iv.hi);
                row[j] = v;
            }
            old_rows.push(old);
            new_rows.push(row);
        }
        // reverse pass: density of the old values given the proposed state,
        // evaluated in the same cell order (later cells hold proposed values)
        let mut log_q_rev = 0.0;
        for (k, (i, cols)) in chunk.iter().enumerate() {
            let (b, q) = &canon[&s.state.phi[*i]];
            let mut row = new_rows[k].clone();
            for &j in cols {
                let (mu, sd) = cell_conditional(b, q, &row, j);
                let iv = s.ds.latent_interval(*i, j);
                let v = old_rows[k][j];
                log_q_rev += truncated_normal_ln_pdf(v, mu, sd, iv.lo, iv.hi);
                row[j] = v;
            }
        }

        for (k, (i, _)) in chunk.iter().enumerate() {
            s.state.set_z_row(*i, &new_rows[k]);
        }
        let lm_new = if s.cfg.prior_only { 0.0 } else { log_marginal(&s.state)? };
        let log_ratio = lm_new - lm_old + log_q_rev - log_q_fwd;
        let accept = log_ratio >= 0.0 || s.rng.random::<f64>().ln() < log_ratio;
        if accept {
            lm_old = lm_new;
            accepted += 1;
        } else {
            for (k, (i, _)) in chunk.iter().enumerate() {
                s.state.set_z_row(*i, &old_rows[k]);
            }
        }
        attempted += 1;
        s.note_latent_outcome(accept);
    }
    s.adapt_block_size(iter);
    Ok(accepted as f64 / attempted as f64)
}
