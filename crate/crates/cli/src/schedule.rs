//! RPM schedules as JSON lines, one segment per line:
//!
//! ```text
//! {"rpm":4250.0,"hold_seconds":0.0,"ramp_seconds":4.0}
//! ```
//!
//! `ramp_seconds` may be omitted and then defaults to zero.

use std::fmt::Write as _;
use std::path::Path;

use fanmodem::modulator::Segment;
use fanmodem::RpmSchedule;

use crate::error::{CliError, Result};

pub fn to_jsonl(schedule: &RpmSchedule) -> String {
    let mut out = String::new();
    for seg in &schedule.segments {
        let line = serde_json::to_string(seg).expect("segments always serialize");
        writeln!(out, "{line}").expect("writing to a String");
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<RpmSchedule> {
    let segments = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Segment>(l)
                .map_err(|e| CliError::Format(format!("schedule line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RpmSchedule { segments })
}

pub fn write(schedule: &RpmSchedule, path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl(schedule)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<RpmSchedule> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_jsonl(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}
