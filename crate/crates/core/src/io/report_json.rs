//! Report JSON. The schema lives in `schema/report.schema.json`.

use std::path::Path;

use crate::correlation::EprReport;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

pub fn report_to_json(report: &EprReport) -> Result<String> {
    report.check_consistency()?;
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<EprReport> {
    let report: EprReport = serde_json::from_str(text).map_err(|e| Error::Report(format!("malformed report: {e}")))?;
    report.check_consistency()?;
    Ok(report)
}

pub fn write_report(path: &Path, report: &EprReport) -> Result<()> {
    std::fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EprReport> {
    report_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_json() {
        let v: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(v["type"], "object");
    }

    #[test]
    fn garbage_is_a_report_error() {
        assert!(matches!(report_from_json("{\"var_diff\": 3}"), Err(Error::Report(_))));
    }
}
