//! User-facing commands: configuration, bundled data, measurement files,
//! fitting and report emission.

pub mod config;
pub mod dataset;
pub mod fit;
pub mod records;
pub mod report;

use std::path::Path;

use serde::Serialize;

use crate::circuit::{
    build_ttpc, build_ttpc_with, epr_amplitude_sum, epr_pair, epr_phase_difference, nullifier_variances, r_from_db,
    CircuitParams, NullifierSet,
};
use crate::criteria::{
    criteria_from_measurements, db_below, default_audit, evaluate_criteria, evaluate_criteria_scaled,
    optimal_gain_formula, optimal_gain_plan, snl_of_combination, term_template, AuditStatus, CriterionId,
    CriterionResult, FormulaAudit, GainPlan, MeasuredCriterion, MeasurementRecord, TermId,
};
use crate::error::{Error, Result};
use crate::gaussian::{Convention, ValidationReport};
use crate::homodyne::{criterion_combinations, mc_criteria, sample_combinations, write_batches_csv, McCriteria};

use self::config::{ExperimentConfig, ResolvedConfig};
use self::dataset::PublishedDataset;
use self::report::{create, round_to, write_json, write_matrix_csv, write_table_csv, TableRow};

pub use self::fit::{fit, FitOptions, FitResult};

const SNL_UNIT: &str = "shot-noise units";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermReport {
    pub id: TermId,
    pub gain: f64,
    pub variance: f64,
    pub snl: f64,
    pub db_below_snl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullifierReport {
    pub combination: String,
    pub variance: f64,
    pub vacuum_variance: f64,
    pub db_below_snl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub config: ResolvedConfig,
    pub gains: GainPlan,
    pub validation: ValidationReport,
    pub terms: Vec<TermReport>,
    pub criteria: [CriterionResult; 3],
    pub all_satisfied: bool,
    pub nullifiers: Vec<NullifierReport>,
    /// Exact optimal gains for this state and the criteria they give, for comparison.
    pub optimal_gains: GainPlan,
    pub optimal_criteria: [CriterionResult; 3],
}

impl SimulateReport {
    pub fn table(&self) -> Vec<TableRow> {
        let mut rows = Vec::new();
        for t in &self.terms {
            rows.push(TableRow::new(format!("{} gain", t.id), None, t.gain, ""));
            rows.push(TableRow::new(format!("{} variance", t.id), None, t.variance, SNL_UNIT));
            rows.push(TableRow::new(format!("{} below SNL", t.id), None, t.db_below_snl, "dB"));
        }
        for c in &self.criteria {
            rows.push(TableRow::new(format!("{:?}", c.id), None, c.lhs, SNL_UNIT));
        }
        for (k, n) in self.nullifiers.iter().enumerate() {
            rows.push(TableRow::new(format!("nullifier {}", k + 1), None, n.variance, SNL_UNIT));
        }
        rows
    }

    /// The simulated dB values as a six-record measurement set.
    pub fn records(&self) -> Vec<MeasurementRecord> {
        self.terms.iter().map(|t| MeasurementRecord::new(t.id, t.db_below_snl, 0.0)).collect()
    }
}

impl std::fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.config.circuit;
        writeln!(f, "r1 = {:.6}, r2 = {:.6}, bs_phase = {:.6}, v0 = {}", c.r1, c.r2, c.bs_phase, self.config.v0)?;
        for t in &self.terms {
            writeln!(
                f,
                "{:>4}  g = {:.6}  var = {:.6}  snl = {:.6}  {:+.4} dB below SNL",
                t.id.as_str(),
                t.gain,
                t.variance,
                t.snl,
                t.db_below_snl
            )?;
        }
        for (c, opt) in self.criteria.iter().zip(&self.optimal_criteria) {
            writeln!(
                f,
                "{:>3}: {:.6} < {:.6} -> {}  (at optimal gains {:.6})",
                format!("{:?}", c.id),
                c.lhs,
                c.bound,
                if c.satisfied { "satisfied" } else { "not satisfied" },
                opt.lhs
            )?;
        }
        for (k, n) in self.nullifiers.iter().enumerate() {
            writeln!(f, "nullifier {}: {:.6} (vacuum {:.6})", k + 1, n.variance, n.vacuum_variance)?;
        }
        write!(f, "fully inseparable: {}", self.all_satisfied)
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateReport> {
    simulate_resolved(cfg.resolve()?)
}

fn simulate_resolved(config: ResolvedConfig) -> Result<SimulateReport> {
    let conv = config.convention();
    let state = build_ttpc_with(&config.circuit, conv)?;
    let validation = state.validate();
    if !validation.is_ok() {
        return Err(Error::Numerical(format!("simulated state is not physical: {:?}", validation.violations)));
    }
    let gains = config.gain_plan(&state)?;
    let optimal_gains = optimal_gain_plan(&state, config.tie_gy4)?;
    let mut terms = Vec::with_capacity(6);
    for id in TermId::ALL {
        let gain = gains.gain_for(id);
        let combo = term_template(id).combination(gain);
        let variance = state.combination_variance(&combo)?;
        let snl = snl_of_combination(&combo, conv)?;
        terms.push(TermReport { id, gain, variance, snl, db_below_snl: db_below(variance, snl) });
    }
    let criteria = evaluate_criteria_scaled(&state, &gains)?;
    let optimal_criteria = evaluate_criteria_scaled(&state, &optimal_gains)?;
    let nullifiers = NullifierSet::new()
        .combos
        .iter()
        .zip(nullifier_variances(&state)?)
        .map(|(combo, variance)| {
            let vacuum_variance = combo.vacuum_variance(conv)?;
            Ok(NullifierReport {
                combination: combo.to_string(),
                variance,
                vacuum_variance,
                db_below_snl: db_below(variance, vacuum_variance),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimulateReport {
        all_satisfied: criteria.iter().all(|c| c.satisfied),
        config,
        gains,
        validation,
        terms,
        criteria,
        nullifiers,
        optimal_gains,
        optimal_criteria,
    })
}

/// Writes every output requested in the config's `outputs` section.
pub fn write_simulate_outputs(report: &SimulateReport) -> Result<()> {
    let out = &report.config.source.outputs;
    if let Some(p) = &out.json {
        write_json(p, report)?;
    }
    if let Some(p) = &out.csv {
        write_table_csv(create(p)?, &report.table())?;
    }
    if let Some(p) = &out.measurements {
        records::write_records(create(p)?, &report.records())?;
    }
    if let Some(p) = &out.covariance {
        let state = build_ttpc_with(&report.config.circuit, report.config.convention())?;
        write_matrix_csv(create(p)?, state.cov())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementReport {
    pub records: Vec<MeasurementRecord>,
    pub gains: GainPlan,
    pub criteria: [MeasuredCriterion; 3],
    /// Left-hand sides rounded half away from zero to two decimals.
    pub rounded_lhs: [f64; 3],
    pub all_satisfied: bool,
}

impl std::fmt::Display for MeasurementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (m, rounded) in self.criteria.iter().zip(self.rounded_lhs) {
            let c = &m.result;
            writeln!(
                f,
                "{:>3} = {rounded:.2} ± {:.2}  (raw {:.6} ± {:.6}) < {:.6} -> {}",
                format!("{:?}", c.id),
                m.lhs_uncertainty,
                c.lhs,
                m.lhs_uncertainty,
                c.bound,
                if c.satisfied { "satisfied" } else { "not satisfied" }
            )?;
        }
        write!(f, "fully inseparable: {}", self.all_satisfied)
    }
}

pub fn from_measurements(records: &[MeasurementRecord], gains: &GainPlan) -> Result<MeasurementReport> {
    let criteria = criteria_from_measurements(records, gains)?;
    Ok(MeasurementReport {
        records: records.to_vec(),
        gains: *gains,
        rounded_lhs: std::array::from_fn(|k| round_to(criteria[k].result.lhs, 2)),
        all_satisfied: criteria.iter().all(|c| c.result.satisfied),
        criteria,
    })
}

pub fn from_measurements_file(path: &Path, gains: &GainPlan) -> Result<MeasurementReport> {
    from_measurements(&records::read_records_file(path)?, gains)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EprCheck {
    pub squeezing_db: f64,
    pub r: f64,
    pub amplitude_sum_variance: f64,
    pub phase_difference_variance: f64,
    pub snl: f64,
    pub db_below_snl: f64,
}

pub fn epr_check(squeezing_db: f64) -> Result<EprCheck> {
    let r = r_from_db(squeezing_db);
    let state = epr_pair(r)?;
    let sum = epr_amplitude_sum();
    let amplitude_sum_variance = state.combination_variance(&sum)?;
    let phase_difference_variance = state.combination_variance(&epr_phase_difference())?;
    let snl = sum.vacuum_variance(Convention::QUARTER)?;
    Ok(EprCheck {
        squeezing_db,
        r,
        amplitude_sum_variance,
        phase_difference_variance,
        snl,
        db_below_snl: db_below(amplitude_sum_variance, snl),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyComparison {
    pub quoted: f64,
    pub propagated: [f64; 3],
    /// True when linear propagation of the dB error bars gives a larger spread than quoted.
    pub exceeds_quoted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceReport {
    pub dataset_version: &'static str,
    pub rows: Vec<TableRow>,
    pub epr: EprCheck,
    pub measured: MeasurementReport,
    pub uncertainty: UncertaintyComparison,
    pub theory: SimulateReport,
    pub gain_formula_at_quoted_db: f64,
    pub audit: FormulaAudit,
}

impl std::fmt::Display for ReproduceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "dataset {}", self.dataset_version)?;
        for row in &self.rows {
            writeln!(f, "{row}")?;
        }
        write!(f, "closed-form audit:")?;
        for line in &self.audit.lines {
            write!(
                f,
                "\n  line {} ({}): {:?}, max relative deviation {:.3e}",
                line.line, line.term, line.status, line.max_rel_deviation
            )?;
            if let Some(gap) = line.gap_rel_error {
                write!(f, ", gap matches (3/2)e^(-2r) to {gap:.3e}")?;
            }
        }
        Ok(())
    }
}

pub fn reproduce_published() -> Result<ReproduceReport> {
    let ds = PublishedDataset::load()?;
    let epr = epr_check(ds.squeezing_db)?;
    let measured = from_measurements(&ds.records, &GainPlan::uniform(ds.gain))?;
    let theory = simulate(&ExperimentConfig::with_r(dataset::QUOTED_R))?;
    let gain_formula = optimal_gain_formula(epr.r)?;
    let audit = default_audit()?;

    let propagated = std::array::from_fn(|k| measured.criteria[k].lhs_uncertainty);
    let uncertainty = UncertaintyComparison {
        quoted: dataset::QUOTED_LHS_UNCERTAINTY,
        exceeds_quoted: propagated.iter().any(|&u| u > dataset::QUOTED_LHS_UNCERTAINTY),
        propagated,
    };

    let mut rows = vec![
        TableRow::new("EPR below SNL", Some(ds.squeezing_db), epr.db_below_snl, "dB"),
        TableRow::new("r at 2.6 dB", Some(dataset::QUOTED_R), epr.r, ""),
    ];
    for (k, id) in CriterionId::ALL.iter().enumerate() {
        let m = &measured.criteria[k];
        let mut row = TableRow::new(format!("{id:?}"), Some(dataset::QUOTED_LHS[k]), m.result.lhs, SNL_UNIT)
            .labeled("reconstructed");
        if round_to(m.result.lhs, 2) != dataset::QUOTED_LHS[k] {
            row = row.flagged("rounded value differs");
        }
        rows.push(row);
        rows.push(
            TableRow::new(format!("{id:?} uncertainty"), Some(uncertainty.quoted), m.lhs_uncertainty, SNL_UNIT)
                .flagged(if m.lhs_uncertainty > uncertainty.quoted {
                    "linear propagation exceeds quoted"
                } else {
                    "consistent"
                }),
        );
    }
    let mut gain_row = TableRow::new("g_opt", Some(ds.gain), gain_formula, "").labeled("tanh(2r) at 2.6 dB:");
    if (gain_formula - ds.gain).abs() > 0.005 {
        gain_row = gain_row.flagged("mismatch: tanh(2r) at 2.6 dB differs from the gain used");
    }
    rows.push(gain_row);
    rows.push(TableRow::new("theory g_opt at r = 0.30", None, theory.gains.gain_for(TermId::I1), ""));
    for c in &theory.criteria {
        rows.push(TableRow::new(format!("theory {:?} at r = 0.30", c.id), None, c.lhs, SNL_UNIT));
    }
    for line in &audit.lines {
        let status = match line.status {
            AuditStatus::Confirmed => "CONFIRMED",
            AuditStatus::Discrepant => "DISCREPANT",
        };
        rows.push(
            TableRow::new(
                format!("closed form line {} max relative deviation", line.line),
                None,
                line.max_rel_deviation,
                "",
            )
            .flagged(status),
        );
    }

    Ok(ReproduceReport {
        dataset_version: ds.version,
        rows,
        epr,
        measured,
        uncertainty,
        theory,
        gain_formula_at_quoted_db: gain_formula,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub config: ResolvedConfig,
    pub gains: GainPlan,
    pub mc: McCriteria,
    pub z_scores: [f64; 3],
    pub term_z_scores: [f64; 6],
    pub within_4_se: bool,
}

impl std::fmt::Display for McReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "n = {}, seed = {}", self.mc.n, self.mc.seed)?;
        for (t, z) in self.mc.terms.iter().zip(self.term_z_scores) {
            writeln!(
                f,
                "{:>4}  sampled {:.6} ± {:.6}  analytic {:.6}  ({z:.2} SE)",
                t.id.as_str(),
                t.estimate.variance,
                t.estimate.standard_error,
                t.analytic_variance
            )?;
        }
        for ((s, a), (se, z)) in
            self.mc.sampled.iter().zip(&self.mc.analytic).zip(self.mc.lhs_standard_error.iter().zip(self.z_scores))
        {
            writeln!(
                f,
                "{:>3}: sampled {:.6} ± {se:.6}  analytic {:.6}  ({z:.2} SE)",
                format!("{:?}", a.id),
                s.result.lhs,
                a.lhs
            )?;
        }
        write!(f, "all within 4 SE: {}", self.within_4_se)
    }
}

/// Monte Carlo homodyne run. `seed` overrides the config's seed; one of them is required.
pub fn mc(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<McReport> {
    let config = cfg.resolve()?;
    let mc_cfg = cfg.mc.clone().unwrap_or(config::McConfig { enabled: true, n: 1_000_000, seed: None });
    if !mc_cfg.enabled {
        return Err(Error::invalid("config field `mc.enabled`: must be true to run the Monte Carlo"));
    }
    let seed = seed
        .or(mc_cfg.seed)
        .ok_or_else(|| Error::invalid("an explicit seed is required: pass --seed or set `mc.seed` in the config"))?;
    // dB values and verdicts are convention independent, so sample in the v0 = 1/4 frame.
    let state = build_ttpc(&config.circuit)?;
    let gains = config.gain_plan(&state)?;
    let mc = mc_criteria(&state, &gains, mc_cfg.n, seed)?;
    let z_scores = mc.z_scores();
    let term_z_scores = std::array::from_fn(|k| {
        let t = &mc.terms[k];
        (t.estimate.variance - t.analytic_variance).abs() / t.estimate.standard_error
    });
    let within_4_se = term_z_scores.iter().chain(&z_scores).all(|z| *z < 4.0);
    if let Some(p) = &config.source.outputs.samples {
        let batches = sample_combinations(&state, &criterion_combinations(&gains), mc_cfg.n, seed)?;
        write_batches_csv(create(p)?, &batches)?;
    }
    if let Some(p) = &config.source.outputs.json {
        let report = McReport { config: config.clone(), gains, mc: mc.clone(), z_scores, term_z_scores, within_4_se };
        write_json(p, &report)?;
    }
    Ok(McReport { config, gains, mc, z_scores, term_z_scores, within_4_se })
}

/// Lossless evaluation at squeezing `r` with exact optimal gains.
pub fn lossless_theory(r: f64) -> Result<[CriterionResult; 3]> {
    let state = build_ttpc(&CircuitParams::symmetric(r))?;
    evaluate_criteria(&state, &optimal_gain_plan(&state, false)?)
}
