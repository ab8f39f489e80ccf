use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Construction {
    Mvrr,
    Nps,
    Npz,
    Filler,
}

impl Construction {
    pub const CRITICAL: [Construction; 3] = [Construction::Mvrr, Construction::Nps, Construction::Npz];

    pub fn as_str(self) -> &'static str {
        match self {
            Construction::Mvrr => "MVRR",
            Construction::Nps => "NPS",
            Construction::Npz => "NPZ",
            Construction::Filler => "FILLER",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Construction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MVRR" => Ok(Construction::Mvrr),
            "NPS" => Ok(Construction::Nps),
            "NPZ" => Ok(Construction::Npz),
            "FILLER" => Ok(Construction::Filler),
            other => Err(Error::Data(format!("unknown construction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Ambiguous,
    Unambiguous,
    #[serde(rename = "NA")]
    NotApplicable,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Ambiguous => "AMBIGUOUS",
            Condition::Unambiguous => "UNAMBIGUOUS",
            Condition::NotApplicable => "NA",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AMBIGUOUS" => Ok(Condition::Ambiguous),
            "UNAMBIGUOUS" => Ok(Condition::Unambiguous),
            "NA" | "" => Ok(Condition::NotApplicable),
            other => Err(Error::Data(format!("unknown condition {other:?}"))),
        }
    }
}

/// One sentence of an experiment. Ambiguous/unambiguous members of a
/// garden-path pair share `item_id` and `construction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalItem {
    pub item_id: u32,
    pub construction: Construction,
    pub condition: Condition,
    pub tokens: Vec<String>,
    pub disambig_index: Option<usize>,
    pub spillover_indices: Vec<usize>,
}

impl ExperimentalItem {
    pub fn new(
        item_id: u32,
        construction: Construction,
        condition: Condition,
        tokens: Vec<String>,
        disambig_index: Option<usize>,
    ) -> Result<Self> {
        let critical = construction != Construction::Filler;
        if critical && condition == Condition::NotApplicable {
            return Err(Error::Data(format!(
                "item {item_id}: {construction} rows need an AMBIGUOUS or UNAMBIGUOUS condition"
            )));
        }
        if !critical && condition != Condition::NotApplicable {
            return Err(Error::Data(format!("item {item_id}: filler rows take condition NA")));
        }
        if critical && disambig_index.is_none() {
            return Err(Error::Data(format!("item {item_id}: missing disambig_index")));
        }
        if tokens.is_empty() {
            return Err(Error::Data(format!("item {item_id}: empty sentence")));
        }
        let mut spillover_indices = Vec::new();
        if let Some(d) = disambig_index {
            if d >= tokens.len() {
                return Err(Error::Data(format!(
                    "item {item_id}: disambig_index {d} out of bounds for {} tokens",
                    tokens.len()
                )));
            }
            spillover_indices = (d + 1..tokens.len().min(d + 3)).collect();
            if spillover_indices.is_empty() {
                log::warn!("item {item_id} ({condition}): disambiguating word is sentence-final, no spillover region");
            }
        }
        Ok(ExperimentalItem {
            item_id,
            construction,
            condition,
            tokens,
            disambig_index,
            spillover_indices,
        })
    }

    pub fn is_filler(&self) -> bool {
        self.construction == Construction::Filler
    }

    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRow {
    item_id: u32,
    construction: String,
    condition: String,
    sentence: String,
    disambig_index: Option<usize>,
}

/// Check that every critical item id has exactly one ambiguous and one
/// unambiguous member with a shared construction.
pub fn validate_pairs(items: &[ExperimentalItem]) -> Result<()> {
    let mut seen: BTreeMap<u32, Vec<&ExperimentalItem>> = BTreeMap::new();
    for it in items {
        seen.entry(it.item_id).or_default().push(it);
    }
    for (id, members) in seen {
        let critical: Vec<_> = members.iter().filter(|m| !m.is_filler()).collect();
        if critical.is_empty() {
            if members.len() > 1 {
                return Err(Error::Data(format!("filler item id {id} appears {} times", members.len())));
            }
            continue;
        }
        if critical.len() != members.len() {
            return Err(Error::Data(format!("item {id} mixes filler and critical rows")));
        }
        let amb = critical.iter().filter(|m| m.condition == Condition::Ambiguous).count();
        let unamb = critical.iter().filter(|m| m.condition == Condition::Unambiguous).count();
        if amb != 1 || unamb != 1 {
            return Err(Error::Data(format!(
                "item {id}: expected one AMBIGUOUS and one UNAMBIGUOUS row, found {amb} and {unamb}"
            )));
        }
        if critical[0].construction != critical[1].construction {
            return Err(Error::Data(format!("item {id}: paired rows disagree on construction")));
        }
    }
    Ok(())
}

pub fn load_items(path: &Path) -> Result<Vec<ExperimentalItem>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::from(e),
        })?;
    let mut items = Vec::new();
    for (i, row) in rdr.deserialize::<ItemRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let tokens: Vec<String> = row.sentence.split_whitespace().map(str::to_string).collect();
        let item = ExperimentalItem::new(
            row.item_id,
            row.construction.parse()?,
            row.condition.parse()?,
            tokens,
            row.disambig_index,
        )
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
        items.push(item);
    }
    validate_pairs(&items)?;
    Ok(items)
}

pub fn write_items(path: &Path, items: &[ExperimentalItem]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["item_id", "construction", "condition", "sentence", "disambig_index"])?;
    for it in items {
        w.serialize(ItemRow {
            item_id: it.item_id,
            construction: it.construction.as_str().into(),
            condition: it.condition.as_str().into(),
            sentence: it.sentence(),
            disambig_index: it.disambig_index,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
