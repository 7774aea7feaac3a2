//! The published measurement set shipped with the crate.

use crate::criteria::MeasurementRecord;
use crate::error::Result;

use super::records::read_records;

pub const DATASET_VERSION: &str = "published-measurements/1";
pub const DATASET_CSV: &str = include_str!("../../data/published_measurements.csv");

/// Initial two-mode squeezing below the SNL, dB.
pub const SQUEEZING_DB: f64 = 2.6;
pub const SQUEEZING_DB_UNCERTAINTY: f64 = 0.1;
/// Squeezing factor quoted alongside the dB value (rounded).
pub const QUOTED_R: f64 = 0.30;
/// Electronic gain used for every slot during the measurements.
pub const GAIN: f64 = 0.41;
/// Quoted left-hand sides of I, II, III and their error bars.
pub const QUOTED_LHS: [f64; 3] = [1.11, 0.94, 0.97];
pub const QUOTED_LHS_UNCERTAINTY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedDataset {
    pub version: &'static str,
    pub records: Vec<MeasurementRecord>,
    pub gain: f64,
    pub squeezing_db: f64,
    pub squeezing_db_uncertainty: f64,
}

impl PublishedDataset {
    pub fn load() -> Result<Self> {
        Ok(PublishedDataset {
            version: DATASET_VERSION,
            records: read_records(DATASET_CSV.as_bytes())?,
            gain: GAIN,
            squeezing_db: SQUEEZING_DB,
            squeezing_db_uncertainty: SQUEEZING_DB_UNCERTAINTY,
        })
    }
}
