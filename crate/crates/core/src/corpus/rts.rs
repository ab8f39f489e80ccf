use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::items::Condition;
use crate::error::{Error, Result};

/// One self-paced reading measurement.
///
/// `condition` is an extension column: garden-path pairs share `item_id`,
/// so rows for critical items must say which member was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtObservation {
    pub participant_id: String,
    pub item_id: u32,
    pub token_index: usize,
    pub rt_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

pub fn validate_rts(rts: &[RtObservation]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, r) in rts.iter().enumerate() {
        if !(r.rt_ms.is_finite() && r.rt_ms > 0.0) {
            return Err(Error::Data(format!("rt row {}: rt_ms must be positive, got {}", i + 1, r.rt_ms)));
        }
        if !seen.insert((r.participant_id.as_str(), r.item_id, r.condition, r.token_index)) {
            return Err(Error::Data(format!(
                "rt row {}: duplicate observation for participant {} item {} token {}",
                i + 1,
                r.participant_id,
                r.item_id,
                r.token_index
            )));
        }
    }
    Ok(())
}

pub fn load_rts(path: &Path) -> Result<Vec<RtObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rts = rdr
        .deserialize::<RtObservation>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    validate_rts(&rts)?;
    Ok(rts)
}

pub fn write_rts(path: &Path, rts: &[RtObservation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["participant_id", "item_id", "token_index", "rt_ms", "condition"])?;
    for r in rts {
        w.write_record([
            r.participant_id.clone(),
            r.item_id.to_string(),
            r.token_index.to_string(),
            format!("{}", r.rt_ms),
            r.condition.map(|c| c.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
