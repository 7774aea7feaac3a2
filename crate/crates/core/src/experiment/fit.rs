//! Least-squares inversion of measured dB values for `(r, eta)`.
//!
//! The model is the symmetric circuit with one uniform output transmittance
//! `eta`, evaluated at the exact optimal gains of each configuration. A coarse
//! grid is followed by a compass search down to a step of `1e-5`.

use serde::Serialize;

use crate::circuit::{build_ttpc, CircuitParams};
use crate::criteria::{optimal_gain_plan, order_records, term_db_values, GainPlan, MeasurementRecord};
use crate::error::{Error, Result};

pub const R_RANGE: (f64, f64) = (0.0, 1.0);
pub const ETA_RANGE: (f64, f64) = (0.3, 1.0);
pub const GRID_STEP: f64 = 0.01;
const FINAL_STEP: f64 = 1e-5;
const MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Hold `eta` at this value and fit `r` alone.
    pub fix_eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub r: f64,
    pub eta: f64,
    pub sum_sq: f64,
    pub predicted_db: [f64; 6],
    pub residuals_db: [f64; 6],
    pub gains: GainPlan,
    pub grid_best: (f64, f64, f64),
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// dB below SNL of the six terms for `(r, eta)` at optimal gains.
pub fn predicted_db(r: f64, eta: f64) -> Result<([f64; 6], GainPlan)> {
    let state = build_ttpc(&CircuitParams::symmetric(r).with_uniform_loss(eta))?;
    let plan = optimal_gain_plan(&state, false)?;
    Ok((term_db_values(&state, &plan)?, plan))
}

fn sum_sq(measured: &[f64; 6], r: f64, eta: f64) -> Result<f64> {
    let (pred, _) = predicted_db(r, eta)?;
    Ok(pred.iter().zip(measured).map(|(p, m)| (p - m).powi(2)).sum())
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / GRID_STEP).round() as usize;
    (0..=n).map(|k| lo + k as f64 * GRID_STEP).collect()
}

pub fn fit(records: &[MeasurementRecord], opts: FitOptions) -> Result<FitResult> {
    let ordered = order_records(records)?;
    let measured = ordered.map(|r| r.db_below_snl);
    let etas = match opts.fix_eta {
        Some(e) if !(e > 0.0 && e <= 1.0) => {
            return Err(Error::invalid(format!("fixed eta must lie in (0, 1], got {e}")))
        }
        Some(e) => vec![e],
        None => grid(ETA_RANGE.0, ETA_RANGE.1),
    };
    let eta_bounds = opts.fix_eta.map_or(ETA_RANGE, |e| (e, e));

    let mut best = (R_RANGE.0, etas[0], f64::INFINITY);
    for &r in &grid(R_RANGE.0, R_RANGE.1) {
        for &eta in &etas {
            let ss = sum_sq(&measured, r, eta)?;
            if ss < best.2 {
                best = (r, eta, ss);
            }
        }
    }
    let grid_best = best;

    // Compass search from the grid optimum.
    let (mut r, mut eta, mut ss) = best;
    let mut step = GRID_STEP / 2.0;
    let mut iters = 0;
    while step >= FINAL_STEP && iters < MAX_ITERS {
        iters += 1;
        let mut moved = false;
        for (dr, de) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (rc, ec) = (r + dr, eta + de);
            if rc < R_RANGE.0 || rc > R_RANGE.1 || ec < eta_bounds.0 || ec > eta_bounds.1 {
                continue;
            }
            let s = sum_sq(&measured, rc, ec)?;
            if s < ss {
                (r, eta, ss) = (rc, ec, s);
                moved = true;
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    let converged = step < FINAL_STEP;
    let warning = if !converged {
        (r, eta, ss) = grid_best;
        Some(format!("refinement did not converge in {MAX_ITERS} steps; reporting the grid optimum"))
    } else if r <= R_RANGE.0 || r >= R_RANGE.1 || (opts.fix_eta.is_none() && (eta <= ETA_RANGE.0 || eta >= ETA_RANGE.1))
    {
        Some("optimum lies on the search boundary".to_string())
    } else {
        None
    };

    let (predicted_db, gains) = predicted_db(r, eta)?;
    let residuals_db = std::array::from_fn(|k| predicted_db[k] - measured[k]);
    Ok(FitResult { r, eta, sum_sq: ss, predicted_db, residuals_db, gains, grid_best, converged, warning })
}
