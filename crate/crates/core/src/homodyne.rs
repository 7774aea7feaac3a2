//! Simulated balanced-homodyne records.
//!
//! Joint quadrature vectors are drawn from the state's Gaussian via a
//! Cholesky factor and projected onto each requested combination, which plays
//! the role of the +/− power combiner with electronic gains. Variances are
//! then estimated the way a spectrum analyser trace would be read off.
//!
//! Random numbers come from ChaCha8 keyed by `seed`; draw block `k` uses
//! stream `(stream << 32) | k`, so output is independent of thread count and
//! of how blocks are scheduled.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{
    criteria_from_measurements, evaluate_criteria, snl_of_combination, term_template, CriterionResult, GainPlan,
    MeasuredCriterion, MeasurementRecord, TermId,
};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, QuadCombination};

/// Draws per random stream.
pub const BLOCK_LEN: usize = 1 << 16;
/// Cap reported for a zero sample variance.
pub const DB_CAP: f64 = 99.0;
/// Diagonal jitter tried when the covariance is only semidefinite.
const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCombination {
    pub id: String,
    pub combo: QuadCombination,
}

impl NamedCombination {
    pub fn new(id: impl Into<String>, combo: QuadCombination) -> Self {
        NamedCombination { id: id.into(), combo }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub combo_id: String,
    pub n: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub variance: f64,
    pub standard_error: f64,
    pub n: usize,
    pub db_below_snl: f64,
}

fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = Cholesky::new(cov.clone()) {
        return Ok(ch.l());
    }
    let dim = cov.nrows();
    Cholesky::new(cov + DMatrix::identity(dim, dim) * JITTER)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Numerical("covariance is not positive semidefinite within jitter".into()))
}

/// Samples `n` joint homodyne shots on stream 0.
pub fn sample_combinations(
    state: &GaussianState,
    combos: &[NamedCombination],
    n: usize,
    seed: u64,
) -> Result<Vec<SampleBatch>> {
    sample_combinations_on_stream(state, combos, n, seed, 0)
}

pub fn sample_combinations_on_stream(
    state: &GaussianState,
    combos: &[NamedCombination],
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<SampleBatch>> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
    }
    if stream > u32::MAX as u64 {
        return Err(Error::invalid("stream index must fit in 32 bits"));
    }
    let report = state.validate();
    if !report.is_ok() {
        return Err(Error::invalid(format!("cannot sample an unphysical state: {}", report.violations.join("; "))));
    }
    let dim = 2 * state.n_modes();
    let chol = cholesky_factor(state.cov())?;
    // value = c·mean + (Lᵀc)·z with z standard normal.
    let mut offsets = Vec::with_capacity(combos.len());
    let mut weights = Vec::with_capacity(combos.len());
    for nc in combos {
        let c = nc.combo.coefficients(state.n_modes())?;
        offsets.push(c.dot(state.mean()));
        weights.push(chol.transpose() * c);
    }

    let n_blocks = n.div_ceil(BLOCK_LEN);
    let blocks: Vec<Vec<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|k| {
            let len = BLOCK_LEN.min(n - k * BLOCK_LEN);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((stream << 32) | k as u64);
            let mut out = vec![Vec::with_capacity(len); combos.len()];
            let mut z = DVector::<f64>::zeros(dim);
            for _ in 0..len {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                for (j, w) in weights.iter().enumerate() {
                    out[j].push(offsets[j] + w.dot(&z));
                }
            }
            out
        })
        .collect();

    Ok(combos
        .iter()
        .enumerate()
        .map(|(j, nc)| {
            let mut values = Vec::with_capacity(n);
            for b in &blocks {
                values.extend_from_slice(&b[j]);
            }
            SampleBatch { combo_id: nc.id.clone(), n, values, seed, stream }
        })
        .collect())
}

/// Unbiased variance about the sample mean, with its Gaussian standard error.
pub fn estimate(batch: &SampleBatch, snl: f64) -> Result<VarianceEstimate> {
    if !(snl.is_finite() && snl > 0.0) {
        return Err(Error::invalid(format!("shot-noise reference must be positive, got {snl}")));
    }
    let n = batch.values.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
    }
    let mean = batch.values.iter().sum::<f64>() / n as f64;
    let variance = batch.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let standard_error = variance * (2.0 / (n - 1) as f64).sqrt();
    let db_below_snl = if variance > 0.0 { (-10.0 * (variance / snl).log10()).min(DB_CAP) } else { DB_CAP };
    Ok(VarianceEstimate { mean, variance, standard_error, n, db_below_snl })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McTerm {
    pub id: TermId,
    pub gain: f64,
    pub snl: f64,
    pub analytic_variance: f64,
    pub estimate: VarianceEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCriteria {
    pub n: usize,
    pub seed: u64,
    pub terms: Vec<McTerm>,
    /// Reconstructed from the sampled dB values.
    pub sampled: [MeasuredCriterion; 3],
    /// Standard error of each sampled left-hand side.
    pub lhs_standard_error: [f64; 3],
    pub analytic: [CriterionResult; 3],
}

impl McCriteria {
    /// `|sampled − analytic|` in units of the standard error, per criterion.
    pub fn z_scores(&self) -> [f64; 3] {
        std::array::from_fn(|k| (self.sampled[k].result.lhs - self.analytic[k].lhs).abs() / self.lhs_standard_error[k])
    }
}

/// The six criterion terms at the given gains, labeled by [`TermId`].
pub fn criterion_combinations(gains: &GainPlan) -> Vec<NamedCombination> {
    TermId::ALL
        .iter()
        .map(|&id| NamedCombination::new(id.as_str(), term_template(id).combination(gains.gain_for(id))))
        .collect()
}

/// Sample → estimate → reconstruct, alongside the analytic evaluation.
pub fn mc_criteria(state: &GaussianState, gains: &GainPlan, n: usize, seed: u64) -> Result<McCriteria> {
    let analytic = evaluate_criteria(state, gains)?;
    let combos = criterion_combinations(gains);
    let batches = sample_combinations(state, &combos, n, seed)?;
    let db_per_rel = 10.0 / std::f64::consts::LN_10;
    let mut terms = Vec::with_capacity(6);
    let mut records = Vec::with_capacity(6);
    for ((&id, nc), batch) in TermId::ALL.iter().zip(&combos).zip(&batches) {
        let snl = snl_of_combination(&nc.combo, state.convention())?;
        let est = estimate(batch, snl)?;
        let uncertainty_db = if est.variance > 0.0 { db_per_rel * est.standard_error / est.variance } else { 0.0 };
        records.push(MeasurementRecord::new(id, est.db_below_snl, uncertainty_db));
        terms.push(McTerm {
            id,
            gain: gains.gain_for(id),
            snl,
            analytic_variance: state.combination_variance(&nc.combo)?,
            estimate: est,
        });
    }
    let sampled = criteria_from_measurements(&records, gains)?;
    let lhs_standard_error = std::array::from_fn(|k| {
        let (a, b): (&VarianceEstimate, &VarianceEstimate) = (&terms[2 * k].estimate, &terms[2 * k + 1].estimate);
        a.standard_error.hypot(b.standard_error)
    });
    Ok(McCriteria { n, seed, terms, sampled, lhs_standard_error, analytic })
}

/// Writes batches as `combo_id,sample_index,value`.
pub fn write_batches_csv<W: Write>(out: W, batches: &[SampleBatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["combo_id", "sample_index", "value"]).map_err(csv_err)?;
    for b in batches {
        for (i, v) in b.values.iter().enumerate() {
            w.write_record([b.combo_id.as_str(), &i.to_string(), &v.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_ttpc, CircuitParams};
    use crate::criteria::optimal_gain_plan;
    use crate::gaussian::Convention;

    fn x1() -> Vec<NamedCombination> {
        vec![NamedCombination::new("X1", QuadCombination::new().x(0, 1.0))]
    }

    #[test]
    fn vacuum_variance_recovered() {
        let vac = GaussianState::vacuum(1, Convention::QUARTER).unwrap();
        let b = sample_combinations(&vac, &x1(), 200_000, 9).unwrap();
        let est = estimate(&b[0], 0.25).unwrap();
        assert!((est.variance - 0.25).abs() < 4.0 * est.standard_error);
        assert!(est.mean.abs() < 4.0 * (0.25f64 / 200_000.0).sqrt());
    }

    #[test]
    fn two_samples_are_allowed() {
        let vac = GaussianState::vacuum(1, Convention::QUARTER).unwrap();
        let b = sample_combinations(&vac, &x1(), 2, 1).unwrap();
        let est = estimate(&b[0], 0.25).unwrap();
        assert!((est.standard_error - est.variance * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(sample_combinations(&vac, &x1(), 1, 1).is_err());
    }

    #[test]
    fn estimate_edge_cases() {
        let batch =
            |values: Vec<f64>| SampleBatch { combo_id: "c".into(), n: values.len(), values, seed: 0, stream: 0 };
        let est = estimate(&batch(vec![3.0; 10]), 0.25).unwrap();
        assert_eq!(est.variance, 0.0);
        assert_eq!(est.db_below_snl, DB_CAP);
        // variance 0.5 about mean 0 with n − 1 = 1
        let est = estimate(&batch(vec![0.5, -0.5]), 0.5).unwrap();
        assert_eq!(est.variance, 0.5);
        assert_eq!(est.db_below_snl, 0.0);
        assert!(estimate(&batch(vec![0.0, 1.0]), 0.0).is_err());
        // Inverse of the dB → variance conversion.
        let v: f64 = 0.511_374_290_751_173;
        let est = estimate(&batch(vec![(v / 2.0).sqrt(), -(v / 2.0).sqrt()]), 0.792025).unwrap();
        assert!((est.variance - v).abs() < 1e-15);
        assert!((est.db_below_snl - 1.9).abs() < 1e-9);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap();
        let combos = criterion_combinations(&GainPlan::uniform(0.5));
        let n = 3 * BLOCK_LEN + 17;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_combinations(&st, &combos, n, 42).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        let c = sample_combinations(&st, &combos, n, 43).unwrap();
        assert_ne!(a[0].values, c[0].values);
        let d = sample_combinations_on_stream(&st, &combos, n, 42, 1).unwrap();
        assert_ne!(a[0].values, d[0].values);
    }

    #[test]
    fn unphysical_state_rejected() {
        let mut cov = DMatrix::from_diagonal_element(2, 2, 0.25);
        cov[(0, 0)] = 0.0;
        let st = GaussianState::from_parts(DVector::zeros(2), cov, Convention::QUARTER).unwrap();
        assert!(sample_combinations(&st, &x1(), 10, 0).is_err());
    }

    #[test]
    fn displaced_mean_is_recovered() {
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap().displace(1, 0.8, -0.3).unwrap();
        let combos = criterion_combinations(&GainPlan::uniform(0.5));
        let n = 100_000;
        let batches = sample_combinations(&st, &combos, n, 5).unwrap();
        for (nc, b) in combos.iter().zip(&batches) {
            let mean = b.values.iter().sum::<f64>() / n as f64;
            let target = st.combination_mean(&nc.combo).unwrap();
            let sd = (st.combination_variance(&nc.combo).unwrap() / n as f64).sqrt();
            assert!((mean - target).abs() < 4.0 * sd, "{}", nc.id);
        }
    }

    #[test]
    fn small_mc_run_is_consistent() {
        let st = build_ttpc(&CircuitParams::symmetric(0.3)).unwrap();
        let plan = optimal_gain_plan(&st, false).unwrap();
        let mc = mc_criteria(&st, &plan, 50_000, 3).unwrap();
        assert!(mc.z_scores().iter().all(|&z| z < 4.0), "{:?}", mc.z_scores());
        let tiny = mc_criteria(&st, &plan, 10, 3).unwrap();
        assert!(tiny.lhs_standard_error.iter().all(|s| *s > 0.1));
    }

    #[test]
    fn csv_export_header() {
        let vac = GaussianState::vacuum(1, Convention::QUARTER).unwrap();
        let b = sample_combinations(&vac, &x1(), 3, 1).unwrap();
        let mut buf = Vec::new();
        write_batches_csv(&mut buf, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("combo_id,sample_index,value"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "X1");
        assert_eq!(row[1], "0");
        assert_eq!(row[2].parse::<f64>().unwrap(), b[0].values[0]);
        assert_eq!(text.lines().count(), 4);
    }
}
