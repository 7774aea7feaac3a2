//! Measurement files: `combo_id,db_below_snl,uncertainty_db`, one row per
//! combination, comma separated, `.` as decimal point.

use std::io::{Read, Write};
use std::path::Path;

use crate::criteria::{order_records, MeasurementRecord, TermId};
use crate::error::{Error, Result};

pub const HEADER: [&str; 3] = ["combo_id", "db_below_snl", "uncertainty_db"];

/// Parses and validates a six-record measurement file.
pub fn read_records<R: Read>(input: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse(format!("row 1: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse(format!(
            "row 1: expected header `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        let combo_id: TermId = row[0].parse().map_err(|e: Error| Error::Parse(format!("row {line}: {e}")))?;
        let num = |k: usize| -> Result<f64> {
            let v: f64 = row[k].parse().map_err(|_| {
                Error::Parse(format!("row {line}: `{}` is not a number in column {}", &row[k], HEADER[k]))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("row {line}: non-finite {}", HEADER[k])));
            }
            Ok(v)
        };
        let rec = MeasurementRecord::new(combo_id, num(1)?, num(2)?);
        if rec.uncertainty_db < 0.0 {
            return Err(Error::Parse(format!("row {line}: negative uncertainty_db")));
        }
        if out.iter().any(|r: &MeasurementRecord| r.combo_id == combo_id) {
            return Err(Error::Parse(format!("row {line}: duplicate combo_id {combo_id}")));
        }
        out.push(rec);
    }
    order_records(&out)?;
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    read_records(file)
}

pub fn write_records<W: Write>(out: W, records: &[MeasurementRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([r.combo_id.as_str(), &r.db_below_snl.to_string(), &r.uncertainty_db.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOOD: &str = "combo_id,db_below_snl,uncertainty_db\nI1,1.9,0.1\nI2,1.2,0.1\nII1,1.2,0.1\nII2,0.7,0.1\nIII1,1.1,0.1\nIII2,0.5,0.1\n";

    #[test]
    fn parses_good_file() {
        let recs = read_records(GOOD.as_bytes()).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs[3], MeasurementRecord::new(TermId::II2, 0.7, 0.1));
    }

    #[test]
    fn reports_row_numbers() {
        let bad = GOOD.replace("II2,0.7", "II2,abc");
        let err = read_records(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 5"), "{err}");
        let bad = GOOD.replace("III1", "IV1");
        assert!(read_records(bad.as_bytes()).unwrap_err().to_string().contains("row 6"));
        let bad = GOOD.replace("III1", "I1");
        assert!(read_records(bad.as_bytes()).unwrap_err().to_string().contains("duplicate"));
        let bad = GOOD.replace("db_below_snl", "db");
        assert!(read_records(bad.as_bytes()).unwrap_err().to_string().contains("row 1"));
        let bad = GOOD.replace("0.5,0.1", "0.5,-0.1");
        assert!(read_records(bad.as_bytes()).is_err());
        let bad = GOOD.replace("1.9,0.1", "NaN,0.1");
        assert!(read_records(bad.as_bytes()).is_err());
    }

    #[test]
    fn missing_id_is_named() {
        let bad: String = GOOD.lines().filter(|l| !l.starts_with("III2")).map(|l| format!("{l}\n")).collect();
        let err = read_records(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("III2"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(dbs in prop::array::uniform6(-40.0f64..40.0), unc in prop::array::uniform6(0.0f64..2.0)) {
            let recs: Vec<_> = TermId::ALL.iter().zip(dbs.iter().zip(&unc))
                .map(|(&id, (&d, &u))| MeasurementRecord::new(id, d, u)).collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &recs).unwrap();
            prop_assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
        }
    }
}
