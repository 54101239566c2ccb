use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::sequence::HeraldedEvent;
use super::ProtocolError;
use crate::analysis::CorrelationDataset;
use crate::quantum::BellOutcome;

/// One JSON line of the event stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub config_hash: String,
    #[serde(flatten)]
    pub event: HeraldedEvent,
}

pub fn write_event_line<W: Write>(out: &mut W, config_hash: &str, event: &HeraldedEvent) -> Result<(), ProtocolError> {
    let rec = EventRecord { config_hash: config_hash.to_string(), event: event.clone() };
    serde_json::to_writer(&mut *out, &rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses an event stream; blank lines are skipped and errors carry the 1-based line number.
pub fn read_events_jsonl<R: BufRead>(input: R) -> Result<Vec<EventRecord>, ProtocolError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord =
            serde_json::from_str(&line).map_err(|e| ProtocolError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Correlation counts split by heralded state: (Ψ+, Ψ−). Single-shot readouts count as one
/// event each; exact probabilities add fractionally.
pub fn datasets_from_events<'a, I>(events: I) -> (CorrelationDataset, CorrelationDataset)
where
    I: IntoIterator<Item = &'a HeraldedEvent>,
{
    let mut plus = CorrelationDataset::new();
    let mut minus = CorrelationDataset::new();
    for e in events {
        let data = if e.outcome == BellOutcome::PsiPlus { &mut plus } else { &mut minus };
        if let Some(r) = e.readout {
            data.add_outcome(&e.setting, r.node1_up, r.node2_up);
        } else if let Some(p) = &e.probabilities {
            data.add_probabilities(&e.setting, p);
        }
    }
    (plus, minus)
}
