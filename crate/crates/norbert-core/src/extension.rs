//! Generic protocol-token pipeline: ingest pre-extracted
//! `(protocol field, protocol value)` streams and window them into token
//! sequences using the same machinery as the FQDN path. Each event expands
//! to two namespaced tokens, `F:<field>` then `V:<field>=<value>`, so the
//! field vocabulary can never collide with FQDN tokens.

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::tokenizer::tokenize_field_value;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldValueEvent {
    pub timestamp: f64,
    pub id: String,
    pub field: String,
    pub value: String,
}

#[derive(Debug)]
pub struct ParsedFieldEvents {
    pub events: Vec<FieldValueEvent>,
    pub skipped: usize,
}

/// Parse `timestamp<TAB>id<TAB>field<TAB>value` lines; malformed lines are
/// counted and skipped, more than 50% malformed is a format error.
pub fn parse_field_stream<R: Read>(reader: R) -> Result<ParsedFieldEvents> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        total += 1;
        match parse_field_line(&line) {
            Some(ev) => events.push(ev),
            None => skipped += 1,
        }
    }
    if total > 0 && skipped * 2 > total {
        return Err(Error::format(format!(
            "{skipped} of {total} field lines are malformed"
        )));
    }
    Ok(ParsedFieldEvents { events, skipped })
}

fn parse_field_line(line: &str) -> Option<FieldValueEvent> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 4 {
        return None;
    }
    let ts: f64 = cols[0].parse().ok()?;
    if !ts.is_finite() || ts < 0.0 || cols[1].is_empty() || cols[2].is_empty() {
        return None;
    }
    Some(FieldValueEvent {
        timestamp: ts,
        id: cols[1].to_string(),
        field: cols[2].to_string(),
        value: cols[3].to_string(),
    })
}

/// Group by flow/device id, order by time (stable on ties), expand each
/// event into its field and value tokens, and cut exact windows of `n`
/// tokens. A pair may straddle a window boundary; remainders are dropped.
pub fn build_field_sequences(events: &[FieldValueEvent], n: usize) -> Result<Vec<TokenSequence>> {
    if n < 2 {
        return Err(Error::validation(
            "field sequences need N >= 2 (each event expands to two tokens)",
        ));
    }
    let mut by_id: BTreeMap<&str, Vec<&FieldValueEvent>> = BTreeMap::new();
    for ev in events {
        by_id.entry(&ev.id).or_default().push(ev);
    }
    let mut out = Vec::new();
    for (id, mut evs) in by_id {
        evs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut tokens = Vec::with_capacity(evs.len() * 2);
        let mut times = Vec::with_capacity(evs.len() * 2);
        for ev in evs {
            let [f, v] = tokenize_field_value(&ev.field, &ev.value);
            tokens.push(f);
            times.push(ev.timestamp);
            tokens.push(v);
            times.push(ev.timestamp);
        }
        let mut start = 0;
        while start + n <= tokens.len() {
            out.push(TokenSequence {
                device_id: id.to_string(),
                tokens: tokens[start..start + n].to_vec(),
                start_time: times[start],
            });
            start += n;
        }
    }
    Ok(out)
}
