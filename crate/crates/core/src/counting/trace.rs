//! CSV export of estimator trials.

use std::io;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: u64,
    pub true_value: f64,
    pub estimate: f64,
    pub l: usize,
    pub rounds: u64,
}

/// Writes `trial,true_value,estimate,l,rounds` rows with a header.
pub fn write_trace_csv<W: io::Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
