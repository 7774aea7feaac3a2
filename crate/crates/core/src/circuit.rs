//! The four-mode network: two amplifiers in de-amplification produce EPR
//! pairs `(a₁, a₂)` and `(a₃, a₄)`; `a₂` and `a₃` interfere on a 50:50 beam
//! splitter locked at a π/2 relative phase.
//!
//! Output modes are ordered `(b₁, b₂, b₃, b₄) = (a₁, (a₂+ia₃)/√2, a₄, (a₂−ia₃)/√2)`
//! and addressed 0-based as `0..4` throughout the crate.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Convention, GaussianState, QuadCombination, SymplecticOp};

pub const B1: usize = 0;
pub const B2: usize = 1;
pub const B3: usize = 2;
pub const B4: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Squeezing factor of the amplifier producing `(a₁, a₂)`.
    pub r1: f64,
    /// Squeezing factor of the amplifier producing `(a₃, a₄)`.
    pub r2: f64,
    /// Relative phase at the beam splitter, radians.
    pub bs_phase: f64,
    /// Transmittance applied to each output mode `b₁..b₄`.
    pub losses: [f64; 4],
    /// Escape efficiency of each amplifier output `a₁..a₄`, applied before the
    /// beam splitter.
    pub escape: [f64; 4],
}

impl CircuitParams {
    /// Lossless, symmetric circuit at the locked π/2 phase.
    pub fn symmetric(r: f64) -> Self {
        CircuitParams { r1: r, r2: r, bs_phase: FRAC_PI_2, losses: [1.0; 4], escape: [1.0; 4] }
    }

    pub fn with_uniform_loss(mut self, eta: f64) -> Self {
        self.losses = [eta; 4];
        self
    }

    pub fn check(&self) -> Result<()> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {r}")));
            }
        }
        if !self.bs_phase.is_finite() {
            return Err(Error::invalid("bs_phase must be finite"));
        }
        for (name, etas) in [("losses", &self.losses), ("escape", &self.escape)] {
            if let Some(e) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return Err(Error::invalid(format!("{name} entries must lie in [0, 1], got {e}")));
            }
        }
        Ok(())
    }
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self::symmetric(0.0)
    }
}

/// Builds the four-mode output state with `v0 = 1/4`.
pub fn build_ttpc(params: &CircuitParams) -> Result<GaussianState> {
    build_ttpc_with(params, Convention::QUARTER)
}

pub fn build_ttpc_with(params: &CircuitParams, convention: Convention) -> Result<GaussianState> {
    params.check()?;
    let mut state = GaussianState::vacuum(4, convention)?
        .apply(&SymplecticOp::squeeze_deamp_pair(params.r1)?, &[0, 1])?
        .apply(&SymplecticOp::squeeze_deamp_pair(params.r2)?, &[2, 3])?;
    for (mode, &eta) in params.escape.iter().enumerate() {
        if eta < 1.0 {
            state = state.loss_channel(mode, eta)?;
        }
    }
    // After the splitter slot 1 holds b₂ and slot 2 holds b₄.
    state = state
        .apply(&SymplecticOp::balanced_beam_splitter(params.bs_phase)?, &[1, 2])?
        .apply(&SymplecticOp::permutation(&[0, 1, 3, 2])?, &[0, 1, 2, 3])?;
    for (mode, &eta) in params.losses.iter().enumerate() {
        if eta < 1.0 {
            state = state.loss_channel(mode, eta)?;
        }
    }
    Ok(state)
}

/// Two-mode EPR state from a single amplifier, `v0 = 1/4`.
pub fn epr_pair(r: f64) -> Result<GaussianState> {
    GaussianState::vacuum(2, Convention::QUARTER)?.apply(&SymplecticOp::squeeze_deamp_pair(r)?, &[0, 1])
}

/// `X₁ + X₂` of an EPR pair.
pub fn epr_amplitude_sum() -> QuadCombination {
    QuadCombination::new().x(0, 1.0).x(1, 1.0)
}

/// `Y₁ − Y₂` of an EPR pair.
pub fn epr_phase_difference() -> QuadCombination {
    QuadCombination::new().y(0, 1.0).y(1, -1.0)
}

/// Squeezing factor for a given noise reduction in dB, from `e^{−2r} = 10^{−dB/10}`.
pub fn r_from_db(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

pub fn db_from_r(r: f64) -> f64 {
    20.0 * r / std::f64::consts::LN_10
}

/// The four combinations whose variance vanishes in the infinite-squeezing limit.
#[derive(Debug, Clone, PartialEq)]
pub struct NullifierSet {
    pub combos: [QuadCombination; 4],
}

impl NullifierSet {
    pub fn new() -> Self {
        NullifierSet {
            combos: [
                // √2·X_b1 + X_b4 + X_b2
                QuadCombination::new().x(B1, SQRT_2).x(B4, 1.0).x(B2, 1.0),
                // √2·Y_b2 − Y_b1 + X_b3
                QuadCombination::new().y(B2, SQRT_2).y(B1, -1.0).x(B3, 1.0),
                // √2·Y_b3 + X_b2 − X_b4
                QuadCombination::new().y(B3, SQRT_2).x(B2, 1.0).x(B4, -1.0),
                // −√2·Y_b4 + X_b3 + Y_b1
                QuadCombination::new().y(B4, -SQRT_2).x(B3, 1.0).y(B1, 1.0),
            ],
        }
    }
}

impl Default for NullifierSet {
    fn default() -> Self {
        Self::new()
    }
}

pub fn nullifier_variances(state: &GaussianState) -> Result<[f64; 4]> {
    if state.n_modes() < 4 {
        return Err(Error::invalid(format!("nullifiers need at least 4 modes, state has {}", state.n_modes())));
    }
    let set = NullifierSet::new();
    let mut out = [0.0; 4];
    for (v, combo) in out.iter_mut().zip(&set.combos) {
        *v = state.combination_variance(combo)?;
    }
    Ok(out)
}
