//! Full-inseparability inequalities for the four-mode state.
//!
//! Each of the three criteria sums the variances of two three-mode
//! combinations, each carrying one free electronic gain, and compares the sum
//! against a fixed bound:
//!
//! ```text
//! I    Var(√2 X_b2 + Y_b3 + g_x1 X_b1)    + Var(Y_b2 + √2 X_b3 − g_y4 Y_b4)    < √2
//! II   Var(X_b1 + Y_b3 + √2 g_x2 X_b2)    + Var(Y_b1 + X_b3 − √2 g_y4 Y_b4)    < 1
//! III  Var(X_b2 + X_b4 + √2 g_x1 X_b1)    + Var(Y_b2 − Y_b4 + √2 g_x3 X_b3)    < 1
//! ```
//!
//! Bounds hold for a per-quadrature vacuum variance of 1/4. Verdicts always
//! come from the covariance matrix; [`printed_variance_formula`] keeps the printed
//! closed forms around for auditing only.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{build_ttpc_with, CircuitParams, B1, B2, B3, B4};
use crate::error::{Error, Result};
use crate::gaussian::{Convention, GaussianState, QuadCombination, Quadrature};

/// Curvatures below this are treated as a degenerate quadratic.
const CURVATURE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriterionId {
    I,
    II,
    III,
}

impl CriterionId {
    pub const ALL: [CriterionId; 3] = [CriterionId::I, CriterionId::II, CriterionId::III];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionId::I => "I",
            CriterionId::II => "II",
            CriterionId::III => "III",
        })
    }
}

/// One of the six measured combinations, `(a)..(f)` in measurement order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermId {
    I1,
    I2,
    II1,
    II2,
    III1,
    III2,
}

impl TermId {
    pub const ALL: [TermId; 6] = [TermId::I1, TermId::I2, TermId::II1, TermId::II2, TermId::III1, TermId::III2];

    pub fn criterion(self) -> CriterionId {
        CriterionId::ALL[self.index() / 2]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TermId::I1 => "I1",
            TermId::I2 => "I2",
            TermId::II1 => "II1",
            TermId::II2 => "II2",
            TermId::III1 => "III1",
            TermId::III2 => "III2",
        }
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TermId::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            Error::Parse(format!("unknown combination id {s:?} (expected one of I1, I2, II1, II2, III1, III2)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainSlot {
    Gx1,
    Gx2,
    Gx3,
    Gy4,
}

impl fmt::Display for GainSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainSlot::Gx1 => "g_x1",
            GainSlot::Gx2 => "g_x2",
            GainSlot::Gx3 => "g_x3",
            GainSlot::Gy4 => "g_y4",
        })
    }
}

/// One criterion term: a fixed part plus `multiplier · g` on one quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct TermTemplate {
    pub id: TermId,
    pub base: QuadCombination,
    pub slot: GainSlot,
    pub gain_mode: usize,
    pub gain_quad: Quadrature,
    /// Fixed factor in front of the gain, including sign: ±1 or ±√2.
    pub multiplier: f64,
}

impl TermTemplate {
    pub fn combination(&self, gain: f64) -> QuadCombination {
        self.base.clone().with_term(self.gain_mode, self.gain_quad, self.multiplier * gain)
    }

    /// Variance as a quadratic `a·g² + b·g + c`, returned as `(a, b, c)`.
    pub fn quadratic(&self, state: &GaussianState) -> Result<(f64, f64, f64)> {
        let unit = QuadCombination::new().with_term(self.gain_mode, self.gain_quad, self.multiplier);
        let a = state.combination_variance(&unit)?;
        let b = 2.0 * state.combination_covariance(&unit, &self.base)?;
        let c = state.combination_variance(&self.base)?;
        Ok((a, b, c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: CriterionId,
    pub terms: [TermTemplate; 2],
    /// Separability bound at `v0 = 1/4`.
    pub bound: f64,
}

impl Criterion {
    pub fn get(id: CriterionId) -> Criterion {
        use Quadrature::{X, Y};
        let t = |id, base, slot, gain_mode, gain_quad, multiplier| TermTemplate {
            id,
            base,
            slot,
            gain_mode,
            gain_quad,
            multiplier,
        };
        match id {
            CriterionId::I => Criterion {
                id,
                terms: [
                    t(TermId::I1, QuadCombination::new().x(B2, SQRT_2).y(B3, 1.0), GainSlot::Gx1, B1, X, 1.0),
                    t(TermId::I2, QuadCombination::new().y(B2, 1.0).x(B3, SQRT_2), GainSlot::Gy4, B4, Y, -1.0),
                ],
                bound: SQRT_2,
            },
            CriterionId::II => Criterion {
                id,
                terms: [
                    t(TermId::II1, QuadCombination::new().x(B1, 1.0).y(B3, 1.0), GainSlot::Gx2, B2, X, SQRT_2),
                    t(TermId::II2, QuadCombination::new().y(B1, 1.0).x(B3, 1.0), GainSlot::Gy4, B4, Y, -SQRT_2),
                ],
                bound: 1.0,
            },
            CriterionId::III => Criterion {
                id,
                terms: [
                    t(TermId::III1, QuadCombination::new().x(B2, 1.0).x(B4, 1.0), GainSlot::Gx1, B1, X, SQRT_2),
                    t(TermId::III2, QuadCombination::new().y(B2, 1.0).y(B4, -1.0), GainSlot::Gx3, B3, X, SQRT_2),
                ],
                bound: 1.0,
            },
        }
    }

    pub fn all() -> [Criterion; 3] {
        CriterionId::ALL.map(Criterion::get)
    }

    /// Bound rescaled to another vacuum-variance convention.
    pub fn bound_for(&self, convention: Convention) -> f64 {
        self.bound * convention.v0() / Convention::QUARTER.v0()
    }
}

pub fn term_template(id: TermId) -> TermTemplate {
    Criterion::get(id.criterion()).terms[id.index() % 2].clone()
}

/// Named values for the four gain slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub gx1: f64,
    pub gx2: f64,
    pub gx3: f64,
    pub gy4: f64,
}

impl Gains {
    pub fn uniform(g: f64) -> Self {
        Gains { gx1: g, gx2: g, gx3: g, gy4: g }
    }

    pub fn get(&self, slot: GainSlot) -> f64 {
        match slot {
            GainSlot::Gx1 => self.gx1,
            GainSlot::Gx2 => self.gx2,
            GainSlot::Gx3 => self.gx3,
            GainSlot::Gy4 => self.gy4,
        }
    }

    pub fn set(&mut self, slot: GainSlot, value: f64) {
        match slot {
            GainSlot::Gx1 => self.gx1 = value,
            GainSlot::Gx2 => self.gx2 = value,
            GainSlot::Gx3 => self.gx3 = value,
            GainSlot::Gy4 => self.gy4 = value,
        }
    }

    fn check(&self) -> Result<()> {
        if [self.gx1, self.gx2, self.gx3, self.gy4].iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gains must be finite"));
        }
        Ok(())
    }
}

/// Gains per criterion. `g_x1` and `g_y4` each appear in two criteria, so
/// every criterion reads its own copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPlan {
    pub per_criterion: [Gains; 3],
}

impl GainPlan {
    pub fn uniform(g: f64) -> Self {
        Gains::uniform(g).into()
    }

    pub fn for_criterion(&self, id: CriterionId) -> &Gains {
        &self.per_criterion[id.index()]
    }

    pub fn gain_for(&self, term: TermId) -> f64 {
        self.for_criterion(term.criterion()).get(term_template(term).slot)
    }
}

impl From<Gains> for GainPlan {
    fn from(g: Gains) -> Self {
        GainPlan { per_criterion: [g; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: CriterionId,
    pub term1_variance: f64,
    pub term2_variance: f64,
    pub lhs: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub gains_used: [(GainSlot, f64); 2],
}

impl CriterionResult {
    fn new(id: CriterionId, v1: f64, v2: f64, bound: f64, gains_used: [(GainSlot, f64); 2]) -> Self {
        let lhs = v1 + v2;
        CriterionResult { id, term1_variance: v1, term2_variance: v2, lhs, bound, satisfied: lhs < bound, gains_used }
    }
}

fn check_state(state: &GaussianState) -> Result<()> {
    if state.n_modes() != 4 {
        return Err(Error::invalid(format!("criteria need a 4-mode state, got {} modes", state.n_modes())));
    }
    Ok(())
}

/// Evaluates I, II, III on a state in the `v0 = 1/4` convention.
pub fn evaluate_criteria(state: &GaussianState, gains: &GainPlan) -> Result<[CriterionResult; 3]> {
    if !state.convention().is_quarter() {
        return Err(Error::ConventionMismatch { expected: Convention::QUARTER.v0(), found: state.convention().v0() });
    }
    evaluate_criteria_scaled(state, gains)
}

/// Like [`evaluate_criteria`], for any convention: bounds are rescaled by the
/// same factor as the variances.
pub fn evaluate_criteria_scaled(state: &GaussianState, gains: &GainPlan) -> Result<[CriterionResult; 3]> {
    check_state(state)?;
    gains.per_criterion.iter().try_for_each(Gains::check)?;
    let mut out = Vec::with_capacity(3);
    for crit in Criterion::all() {
        let g = gains.for_criterion(crit.id);
        let [t1, t2] = &crit.terms;
        let (g1, g2) = (g.get(t1.slot), g.get(t2.slot));
        let v1 = state.combination_variance(&t1.combination(g1))?;
        let v2 = state.combination_variance(&t2.combination(g2))?;
        out.push(CriterionResult::new(
            crit.id,
            v1,
            v2,
            crit.bound_for(state.convention()),
            [(t1.slot, g1), (t2.slot, g2)],
        ));
    }
    Ok(out.try_into().expect("three criteria"))
}

/// Minimiser of one term's variance over its gain.
pub fn optimal_term_gain(state: &GaussianState, term: &TermTemplate) -> Result<f64> {
    check_state(state)?;
    let (a, b, _) = term.quadratic(state)?;
    if a <= CURVATURE_FLOOR {
        return Err(Error::Singular(format!("variance of {} has no curvature in {}", term.id, term.slot)));
    }
    Ok(-b / (2.0 * a))
}

/// Exact per-slot minimisers for one criterion. Each term carries its own
/// gain, so the two one-dimensional problems decouple.
pub fn optimal_gains_exact(state: &GaussianState, criterion: &Criterion) -> Result<[(GainSlot, f64); 2]> {
    let [t1, t2] = &criterion.terms;
    Ok([(t1.slot, optimal_term_gain(state, t1)?), (t2.slot, optimal_term_gain(state, t2)?)])
}

/// Optimal gains for all three criteria. With `tie_gy4`, one shared `g_y4`
/// minimises the sum of the two terms that use it.
pub fn optimal_gain_plan(state: &GaussianState, tie_gy4: bool) -> Result<GainPlan> {
    let mut plan = GainPlan::uniform(0.0);
    for crit in Criterion::all() {
        for (slot, g) in optimal_gains_exact(state, &crit)? {
            plan.per_criterion[crit.id.index()].set(slot, g);
        }
    }
    if tie_gy4 {
        let (a1, b1, _) = term_template(TermId::I2).quadratic(state)?;
        let (a2, b2, _) = term_template(TermId::II2).quadratic(state)?;
        let a = a1 + a2;
        if a <= CURVATURE_FLOOR {
            return Err(Error::Singular("shared g_y4 has no curvature".into()));
        }
        let g = -(b1 + b2) / (2.0 * a);
        plan.per_criterion[CriterionId::I.index()].gy4 = g;
        plan.per_criterion[CriterionId::II.index()].gy4 = g;
    }
    Ok(plan)
}

/// Optimal gain of the lossless symmetric circuit, `(e^{4r} − 1)/(e^{4r} + 1) = tanh 2r`.
pub fn optimal_gain_formula(r: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid(format!("squeezing factor must be finite and non-negative, got {r}")));
    }
    Ok((2.0 * r).tanh())
}

/// Vacuum variance of a combination, `v0·Σ coeff²`.
pub fn snl_of_combination(combo: &QuadCombination, convention: Convention) -> Result<f64> {
    combo.vacuum_variance(convention)
}

/// Variance corresponding to a noise power `db_below` dB under the combination's SNL.
pub fn variance_from_db(combo: &QuadCombination, db_below: f64, convention: Convention) -> Result<f64> {
    Ok(snl_of_combination(combo, convention)? * 10f64.powf(-db_below / 10.0))
}

/// `−10·log₁₀(variance / snl)`.
pub fn db_below(variance: f64, snl: f64) -> f64 {
    -10.0 * (variance / snl).log10()
}

/// A measured noise power for one of the six combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub combo_id: TermId,
    pub db_below_snl: f64,
    pub uncertainty_db: f64,
}

impl MeasurementRecord {
    pub fn new(combo_id: TermId, db_below_snl: f64, uncertainty_db: f64) -> Self {
        MeasurementRecord { combo_id, db_below_snl, uncertainty_db }
    }
}

/// Criterion reconstructed from measured noise powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredCriterion {
    pub result: CriterionResult,
    /// First-order propagation of the dB uncertainties, treated as independent.
    pub lhs_uncertainty: f64,
}

/// Orders six records by [`TermId`], rejecting duplicates, gaps and non-finite values.
pub fn order_records(records: &[MeasurementRecord]) -> Result<[MeasurementRecord; 6]> {
    let mut slots: [Option<MeasurementRecord>; 6] = [None; 6];
    for rec in records {
        if !rec.db_below_snl.is_finite() || !rec.uncertainty_db.is_finite() {
            return Err(Error::invalid(format!("record {} has a non-finite value", rec.combo_id)));
        }
        if rec.uncertainty_db < 0.0 {
            return Err(Error::invalid(format!("record {} has a negative uncertainty", rec.combo_id)));
        }
        let slot = &mut slots[rec.combo_id.index()];
        if slot.is_some() {
            return Err(Error::invalid(format!("duplicate record for {}", rec.combo_id)));
        }
        *slot = Some(*rec);
    }
    let missing: Vec<&str> = TermId::ALL.iter().filter(|t| slots[t.index()].is_none()).map(|t| t.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("missing records for {}", missing.join(", "))));
    }
    Ok(slots.map(|s| s.expect("checked above")))
}

/// Substitutes measured dB values into the left-hand sides of I, II, III.
/// The SNL of each term includes its gain, so it depends on `gains`.
pub fn criteria_from_measurements(records: &[MeasurementRecord], gains: &GainPlan) -> Result<[MeasuredCriterion; 3]> {
    let recs = order_records(records)?;
    gains.per_criterion.iter().try_for_each(Gains::check)?;
    let conv = Convention::QUARTER;
    let dv_ddb = -std::f64::consts::LN_10 / 10.0;
    let mut out = Vec::with_capacity(3);
    for crit in Criterion::all() {
        let g = gains.for_criterion(crit.id);
        let mut vars = [0.0; 2];
        let mut var_unc = 0.0;
        for (k, term) in crit.terms.iter().enumerate() {
            let rec = &recs[term.id.index()];
            let v = variance_from_db(&term.combination(g.get(term.slot)), rec.db_below_snl, conv)?;
            vars[k] = v;
            var_unc += (dv_ddb * v * rec.uncertainty_db).powi(2);
        }
        let [t1, t2] = &crit.terms;
        let result = CriterionResult::new(
            crit.id,
            vars[0],
            vars[1],
            crit.bound,
            [(t1.slot, g.get(t1.slot)), (t2.slot, g.get(t2.slot))],
        );
        out.push(MeasuredCriterion { result, lhs_uncertainty: var_unc.sqrt() });
    }
    Ok(out.try_into().expect("three criteria"))
}

/// Exact dB-below-SNL of each of the six terms on a state, at the given gains.
pub fn term_db_values(state: &GaussianState, gains: &GainPlan) -> Result<[f64; 6]> {
    check_state(state)?;
    let mut out = [0.0; 6];
    for id in TermId::ALL {
        let combo = term_template(id).combination(gains.gain_for(id));
        let v = state.combination_variance(&combo)?;
        out[id.index()] = db_below(v, snl_of_combination(&combo, state.convention())?);
    }
    Ok(out)
}

/// The printed closed-form variances, lines 1–6, in the `v0 = 1` normalisation.
/// Line 1 is reproduced as printed, including its `e^{−2r}` remainder.
pub fn printed_variance_formula(line: usize, r: f64, g: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid(format!("squeezing factor must be finite and non-negative, got {r}")));
    }
    let (up, down) = ((2.0 * r).exp(), (-2.0 * r).exp());
    let sym = (g - 1.0).powi(2) * up + (g + 1.0).powi(2) * down;
    match line {
        1 => Ok(0.5 * (sym + down)),
        2 => Ok(0.5 * ((g - 1.0).powi(2) * up + (g * g + 2.0 * g + 5.0) * down)),
        3..=6 => Ok(sym),
        _ => Err(Error::invalid(format!("closed-form line must be 1..=6, got {line}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AuditStatus {
    Confirmed,
    Discrepant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaLineAudit {
    pub line: usize,
    pub term: TermId,
    pub status: AuditStatus,
    /// `max |printed − oracle| / oracle` over the grid.
    pub max_rel_deviation: f64,
    /// For a discrepant line 1: `max |(oracle − printed) − (3/2)e^{−2r}| / ((3/2)e^{−2r})`.
    pub gap_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaAudit {
    pub r_grid: Vec<f64>,
    pub g_grid: Vec<f64>,
    pub lines: Vec<FormulaLineAudit>,
}

/// Lines with a relative deviation at or above this are reported discrepant.
pub const AUDIT_TOL: f64 = 1e-9;

/// Compares each printed closed form to the covariance oracle (lossless
/// circuit, rescaled to `v0 = 1`) over a grid of squeezing factors and gains.
pub fn audit_printed_formulas(r_grid: &[f64], g_grid: &[f64]) -> Result<FormulaAudit> {
    if r_grid.is_empty() || g_grid.is_empty() {
        return Err(Error::invalid("audit grids must be non-empty"));
    }
    if g_grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("audit gains must be finite"));
    }
    let unit = Convention::new(1.0)?;
    let states =
        r_grid.iter().map(|&r| build_ttpc_with(&CircuitParams::symmetric(r), unit)).collect::<Result<Vec<_>>>()?;
    let mut lines = Vec::with_capacity(6);
    for (i, term) in TermId::ALL.into_iter().enumerate() {
        let line = i + 1;
        let tmpl = term_template(term);
        let mut max_rel = 0.0f64;
        let mut gap_err = 0.0f64;
        for (state, &r) in states.iter().zip(r_grid) {
            for &g in g_grid {
                let oracle = state.combination_variance(&tmpl.combination(g))?;
                let printed = printed_variance_formula(line, r, g)?;
                max_rel = max_rel.max((printed - oracle).abs() / oracle);
                let expected_gap = 1.5 * (-2.0 * r).exp();
                gap_err = gap_err.max(((oracle - printed) - expected_gap).abs() / expected_gap);
            }
        }
        let status = if max_rel < AUDIT_TOL { AuditStatus::Confirmed } else { AuditStatus::Discrepant };
        let gap_rel_error = (status == AuditStatus::Discrepant && line == 1).then_some(gap_err);
        lines.push(FormulaLineAudit { line, term, status, max_rel_deviation: max_rel, gap_rel_error });
    }
    Ok(FormulaAudit { r_grid: r_grid.to_vec(), g_grid: g_grid.to_vec(), lines })
}

/// Default audit grid.
pub fn default_audit() -> Result<FormulaAudit> {
    audit_printed_formulas(&[0.0, 0.3, 0.6, 1.0], &[0.0, 0.41, 0.537, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_ttpc;
    use approx::assert_relative_eq;

    fn published_records() -> Vec<MeasurementRecord> {
        TermId::ALL
            .iter()
            .zip([1.9, 1.2, 1.2, 0.7, 1.1, 0.5])
            .map(|(&id, db)| MeasurementRecord::new(id, db, 0.1))
            .collect()
    }

    // Brute-force minimum over a fine grid, then golden-section polish.
    fn brute_min(f: impl Fn(f64) -> f64) -> (f64, f64) {
        let (mut best_g, mut best) = (0.0, f64::INFINITY);
        for k in -3000..=3000 {
            let g = k as f64 * 1e-3;
            let v = f(g);
            if v < best {
                best = v;
                best_g = g;
            }
        }
        let (mut lo, mut hi) = (best_g - 1e-3, best_g + 1e-3);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let g = 0.5 * (lo + hi);
        (g, f(g))
    }

    #[test]
    fn vacuum_with_zero_gains() {
        let vac = GaussianState::vacuum(4, Convention::QUARTER).unwrap();
        let res = evaluate_criteria(&vac, &GainPlan::uniform(0.0)).unwrap();
        assert_relative_eq!(res[0].lhs, 1.5, epsilon = 1e-15);
        assert!(!res[0].satisfied);
        assert_eq!(res[1].lhs, 1.0);
        assert!(!res[1].satisfied, "equality at the bound is not a pass");
        assert_eq!(res[2].lhs, 1.0);
        assert!(!res[2].satisfied);
    }

    #[test]
    fn lossless_point_matches_brute_force() {
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap();
        let plan = optimal_gain_plan(&st, false).unwrap();
        let res = evaluate_criteria(&st, &plan).unwrap();
        for crit in Criterion::all() {
            let mut lhs = 0.0;
            for t in &crit.terms {
                let (g, v) = brute_min(|g| st.combination_variance(&t.combination(g)).unwrap());
                assert_relative_eq!(g, plan.gain_for(t.id), epsilon = 1e-7);
                lhs += v;
            }
            assert_relative_eq!(res[crit.id.index()].lhs, lhs, epsilon = 1e-12);
        }
        // Frozen from the full covariance oracle.
        assert_relative_eq!(res[0].lhs, 0.970_586_979_904_929_6, epsilon = 1e-12);
        assert_relative_eq!(res[1].lhs, 0.843_550_687_621_806_7, epsilon = 1e-12);
        assert_relative_eq!(res[2].lhs, 0.843_550_687_621_806_7, epsilon = 1e-12);
        assert!(res.iter().all(|r| r.satisfied));
        assert_relative_eq!(
            st.combination_variance(&term_template(TermId::II1).combination(plan.gain_for(TermId::II1))).unwrap(),
            0.421775,
            epsilon = 1e-6
        );
    }

    #[test]
    fn wrong_convention_or_modes_rejected() {
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap().rescale_convention(1.0).unwrap();
        assert!(matches!(evaluate_criteria(&st, &GainPlan::uniform(0.5)), Err(Error::ConventionMismatch { .. })));
        let two = GaussianState::vacuum(2, Convention::QUARTER).unwrap();
        assert!(evaluate_criteria(&two, &GainPlan::uniform(0.0)).is_err());
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap();
        assert!(evaluate_criteria(&st, &GainPlan::uniform(f64::NAN)).is_err());
    }

    #[test]
    fn scaled_verdicts_agree() {
        for eta in [1.0, 0.7, 0.3] {
            let st = build_ttpc(&CircuitParams::symmetric(0.4).with_uniform_loss(eta)).unwrap();
            let plan = GainPlan::uniform(0.41);
            let a = evaluate_criteria(&st, &plan).unwrap();
            let b = evaluate_criteria_scaled(&st.rescale_convention(1.0).unwrap(), &plan).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.satisfied, y.satisfied);
                assert_relative_eq!(4.0 * x.lhs, y.lhs, max_relative = 1e-12);
                assert_relative_eq!(4.0 * x.bound, y.bound, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn gain_formula_examples() {
        assert_eq!(optimal_gain_formula(0.0).unwrap(), 0.0);
        assert_relative_eq!(optimal_gain_formula(0.3).unwrap(), 0.537050, epsilon = 1e-6);
        let r = 0.3f64;
        let e4 = (4.0 * r).exp();
        assert_relative_eq!(optimal_gain_formula(r).unwrap(), (e4 - 1.0) / (e4 + 1.0), epsilon = 1e-15);
        assert!(optimal_gain_formula(5.0).unwrap() > 0.999_999_99);
        assert!(optimal_gain_formula(-0.1).is_err());
        assert_eq!(optimal_gain_formula(400.0).unwrap(), 1.0);
    }

    #[test]
    fn exact_gains_match_formula() {
        for r in [0.0, 0.3, 1.0, 5.0] {
            let st = build_ttpc(&CircuitParams::symmetric(r)).unwrap();
            let expected = optimal_gain_formula(r).unwrap();
            for crit in Criterion::all() {
                for (_, g) in optimal_gains_exact(&st, &crit).unwrap() {
                    assert!((g - expected).abs() < 1e-10, "r {r} crit {} g {g}", crit.id);
                }
            }
        }
    }

    #[test]
    fn degenerate_curvature_is_singular() {
        let mut cov = nalgebra::DMatrix::from_diagonal_element(8, 8, 0.25);
        cov[(0, 0)] = 0.0;
        let st = GaussianState::from_parts(nalgebra::DVector::zeros(8), cov, Convention::QUARTER).unwrap();
        let err = optimal_term_gain(&st, &term_template(TermId::I1)).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn tied_gy4_minimises_the_shared_sum() {
        let st =
            build_ttpc(&CircuitParams { r1: 0.3, r2: 0.5, ..CircuitParams::symmetric(0.3) }.with_uniform_loss(0.8))
                .unwrap();
        let tied = optimal_gain_plan(&st, true).unwrap();
        let g = tied.for_criterion(CriterionId::I).gy4;
        assert_eq!(g, tied.for_criterion(CriterionId::II).gy4);
        let sum = |g: f64| {
            st.combination_variance(&term_template(TermId::I2).combination(g)).unwrap()
                + st.combination_variance(&term_template(TermId::II2).combination(g)).unwrap()
        };
        let (gb, _) = brute_min(sum);
        assert_relative_eq!(g, gb, epsilon = 1e-7);
    }

    #[test]
    fn snl_and_db_conversions() {
        let conv = Convention::QUARTER;
        assert_eq!(snl_of_combination(&QuadCombination::new().x(0, 1.0), conv).unwrap(), 0.25);
        let i1 = term_template(TermId::I1).combination(0.41);
        assert_relative_eq!(snl_of_combination(&i1, conv).unwrap(), 0.792025, epsilon = 1e-12);
        let ii1 = term_template(TermId::II1).combination(0.41);
        assert_relative_eq!(snl_of_combination(&ii1, conv).unwrap(), 0.584050, epsilon = 1e-12);
        assert!(snl_of_combination(&QuadCombination::new(), conv).is_err());
        assert_eq!(variance_from_db(&i1, 0.0, conv).unwrap(), snl_of_combination(&i1, conv).unwrap());
        assert_relative_eq!(variance_from_db(&i1, 1.9, conv).unwrap(), 0.511_374_290_751_173, epsilon = 1e-12);
        let ii2 = term_template(TermId::II2).combination(0.41);
        assert_relative_eq!(variance_from_db(&ii2, 0.7, conv).unwrap(), 0.497_107_171_212_098, epsilon = 1e-12);
        assert!(variance_from_db(&i1, -3.0, conv).unwrap() > snl_of_combination(&i1, conv).unwrap());
    }

    #[test]
    fn published_measurements_reconstruct() {
        let res = criteria_from_measurements(&published_records(), &GainPlan::uniform(0.41)).unwrap();
        assert_relative_eq!(res[0].result.lhs, 1.112, epsilon = 5e-4);
        assert_relative_eq!(res[1].result.lhs, 0.940, epsilon = 5e-4);
        assert_relative_eq!(res[2].result.lhs, 0.974, epsilon = 5e-4);
        assert!(res.iter().all(|m| m.result.satisfied));
        // Linear propagation of ±0.1 dB gives ~0.015–0.018.
        for m in &res {
            assert!(m.lhs_uncertainty > 0.01 && m.lhs_uncertainty < 0.02);
        }
    }

    #[test]
    fn measurement_limits() {
        let zeros: Vec<_> = TermId::ALL.iter().map(|&id| MeasurementRecord::new(id, 0.0, 0.0)).collect();
        let res = criteria_from_measurements(&zeros, &GainPlan::uniform(0.0)).unwrap();
        assert_relative_eq!(res[0].result.lhs, 1.5, epsilon = 1e-15);
        assert_eq!(res[1].result.lhs, 1.0);
        assert_eq!(res[2].result.lhs, 1.0);
        assert!(res.iter().all(|m| !m.result.satisfied && m.lhs_uncertainty == 0.0));
        let deep: Vec<_> = TermId::ALL.iter().map(|&id| MeasurementRecord::new(id, 30.0, 0.1)).collect();
        let res = criteria_from_measurements(&deep, &GainPlan::uniform(0.41)).unwrap();
        assert!(res.iter().all(|m| m.result.satisfied && m.result.lhs < 2e-3));
    }

    #[test]
    fn measurement_validation() {
        let mut recs = published_records();
        recs.pop();
        let err = criteria_from_measurements(&recs, &GainPlan::uniform(0.41)).unwrap_err();
        assert!(err.to_string().contains("III2"));
        let mut recs = published_records();
        recs[5].combo_id = TermId::I1;
        assert!(criteria_from_measurements(&recs, &GainPlan::uniform(0.41))
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let mut recs = published_records();
        recs[2].db_below_snl = f64::NAN;
        assert!(criteria_from_measurements(&recs, &GainPlan::uniform(0.41)).is_err());
        assert!("IV1".parse::<TermId>().is_err());
        assert_eq!("II2".parse::<TermId>().unwrap(), TermId::II2);
    }

    #[test]
    fn closed_form_plug_ins() {
        assert_eq!(printed_variance_formula(3, 0.0, 0.0).unwrap(), 2.0);
        let g = 0.537050;
        assert_relative_eq!(printed_variance_formula(2, 0.3, g).unwrap(), 1.941174, epsilon = 1e-6);
        assert_relative_eq!(printed_variance_formula(1, 0.3, g).unwrap(), 1.117957, epsilon = 1e-6);
        assert!(printed_variance_formula(0, 0.3, g).is_err());
        assert!(printed_variance_formula(7, 0.3, g).is_err());
        assert!(printed_variance_formula(1, -0.3, g).is_err());
    }

    #[test]
    fn audit_flags_only_line_one() {
        let audit = default_audit().unwrap();
        for l in &audit.lines {
            if l.line == 1 {
                assert_eq!(l.status, AuditStatus::Discrepant);
                assert!(l.gap_rel_error.unwrap() < 1e-10);
            } else {
                assert_eq!(l.status, AuditStatus::Confirmed, "line {}", l.line);
                assert!(l.max_rel_deviation < 1e-12);
                assert!(l.gap_rel_error.is_none());
            }
        }
    }

    #[test]
    fn reconstruction_identity_from_exact_db() {
        let st = build_ttpc(&CircuitParams::symmetric(0.35).with_uniform_loss(0.85)).unwrap();
        let plan = optimal_gain_plan(&st, false).unwrap();
        let db = term_db_values(&st, &plan).unwrap();
        let recs: Vec<_> = TermId::ALL.iter().map(|&id| MeasurementRecord::new(id, db[id.index()], 0.0)).collect();
        let rebuilt = criteria_from_measurements(&recs, &plan).unwrap();
        let direct = evaluate_criteria(&st, &plan).unwrap();
        for (m, d) in rebuilt.iter().zip(&direct) {
            assert!((m.result.lhs - d.lhs).abs() < 1e-12);
        }
    }
}
