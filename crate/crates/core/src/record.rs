//! Per-iteration convergence log shared by both solvers.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the convergence CSV. Column names are part of the file format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iter: usize,
    pub objective: f64,
    pub elapsed_s: f64,
    pub active_set: usize,
    pub cum_updates: u64,
}

pub const CSV_HEADER: &str = "iter,objective,elapsed_s,active_set,cum_updates";

pub fn write_csv(records: &[ConvergenceRecord], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv(r: impl Read) -> Result<Vec<ConvergenceRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!(
            "unexpected convergence header {:?}",
            header.join(",")
        )));
    }
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<ConvergenceRecord>, _>>()?;
    if records.windows(2).any(|w| w[1].iter <= w[0].iter) {
        return Err(Error::Format(
            "iteration column is not strictly increasing".into(),
        ));
    }
    Ok(records)
}

pub fn save_csv(records: &[ConvergenceRecord], path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<ConvergenceRecord>> {
    read_csv(std::fs::File::open(path)?)
}

/// First record whose objective is at or below `target`.
pub fn first_reaching(records: &[ConvergenceRecord], target: f64) -> Option<&ConvergenceRecord> {
    records.iter().find(|r| r.objective <= target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iter: usize, objective: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            iter,
            objective,
            elapsed_s: iter as f64 * 0.01,
            active_set: 16,
            cum_updates: 16 * iter as u64,
        }
    }

    #[test]
    fn header_and_round_trip() {
        let records = vec![rec(0, 10.5), rec(1, 3.25), rec(2, 0.1 + 0.2)];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn rejects_foreign_header_and_disorder() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let text = format!("{CSV_HEADER}\n2,1.0,0,1,1\n1,1.0,0,1,1\n");
        assert!(read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn crossing_lookup() {
        let records = vec![rec(0, 10.0), rec(1, 5.0), rec(2, 2.0)];
        assert_eq!(first_reaching(&records, 5.0).unwrap().iter, 1);
        assert!(first_reaching(&records, 1.0).is_none());
    }
}
