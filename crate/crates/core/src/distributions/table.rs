use std::path::Path;

use super::EventDistribution;
use crate::error::{ArenaError, Result};

/// Parses an explicit joint table.
///
/// One support point per line: a bitstring whose first character is event 1,
/// whitespace, then its probability. Blank lines and lines starting with `#`
/// are skipped. Probabilities must sum to 1 within `1e-9`.
pub fn parse_table(text: &str) -> Result<EventDistribution> {
    let mut m: Option<usize> = None;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| ArenaError::Parse {
            line: idx + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let bits = fields.next().unwrap_or_default();
        let prob = fields
            .next()
            .ok_or_else(|| parse_err("missing probability".into()))?;
        if fields.next().is_some() {
            return Err(parse_err("expected `bitstring probability`".into()));
        }
        if bits.len() > 64 {
            return Err(parse_err("at most 64 events are supported".into()));
        }
        match m {
            None => m = Some(bits.len()),
            Some(len) if len != bits.len() => {
                return Err(parse_err(format!(
                    "bitstring has {} events, earlier lines have {len}",
                    bits.len()
                )))
            }
            _ => {}
        }
        let mut mask = 0u64;
        for (t, ch) in bits.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => mask |= 1u64 << t,
                other => return Err(parse_err(format!("unexpected character {other:?}"))),
            }
        }
        let p: f64 = prob
            .parse()
            .map_err(|e| parse_err(format!("bad probability {prob:?}: {e}")))?;
        if !(p >= 0.0 && p.is_finite()) {
            return Err(parse_err(format!(
                "probability {p} is negative or not finite"
            )));
        }
        entries.push((mask, p));
    }
    let m = m.ok_or_else(|| ArenaError::Parse {
        line: 0,
        message: "table has no entries".into(),
    })?;
    EventDistribution::explicit_table(m, &entries)
}

pub fn load_table(path: impl AsRef<Path>) -> Result<EventDistribution> {
    parse_table(&std::fs::read_to_string(path)?)
}
