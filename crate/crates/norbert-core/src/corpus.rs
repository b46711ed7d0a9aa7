//! DNS event ingestion, per-device token sequences, and synthetic
//! multi-environment traffic generation.

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tokenizer::TokenizerConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

/// One observed DNS query.
#[derive(Debug, Clone, PartialEq)]
pub struct DnsEvent {
    pub timestamp: f64,
    pub device_id: String,
    pub fqdn: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLabel {
    pub device_id: String,
    pub device_type: String,
    pub manufacturer: String,
}

/// A window of exactly N tokens from one device, in query time order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub device_id: String,
    pub tokens: Vec<String>,
    pub start_time: f64,
}

/// Result of [`parse_events`]: events in file order plus the number of
/// malformed lines that were skipped.
#[derive(Debug)]
pub struct ParsedEvents {
    pub events: Vec<DnsEvent>,
    pub skipped: usize,
}

/// Parse `timestamp<TAB>device_id<TAB>fqdn` lines. Malformed lines are
/// counted and skipped; more than 50% malformed is treated as a format
/// error. Blank lines are ignored.
pub fn parse_events<R: Read>(reader: R) -> Result<ParsedEvents> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        total += 1;
        match parse_event_line(&line) {
            Some(ev) => events.push(ev),
            None => skipped += 1,
        }
    }
    if total > 0 && skipped * 2 > total {
        return Err(Error::format(format!(
            "{skipped} of {total} event lines are malformed"
        )));
    }
    Ok(ParsedEvents { events, skipped })
}

fn parse_event_line(line: &str) -> Option<DnsEvent> {
    let mut cols = line.split('\t');
    let ts: f64 = cols.next()?.parse().ok()?;
    let device_id = cols.next()?;
    let fqdn = cols.next()?;
    if cols.next().is_some() {
        return None;
    }
    if !ts.is_finite() || ts < 0.0 || device_id.is_empty() {
        return None;
    }
    if fqdn.is_empty() || fqdn.chars().any(|c| c.is_whitespace()) {
        return None;
    }
    Some(DnsEvent {
        timestamp: ts,
        device_id: device_id.to_string(),
        fqdn: fqdn.to_string(),
    })
}

/// Parse `device_id<TAB>device_type<TAB>manufacturer` lines into a map.
/// Duplicate device ids keep the last record; the number of overwritten
/// duplicates is returned alongside.
pub fn parse_labels<R: Read>(reader: R) -> Result<(BTreeMap<String, DeviceLabel>, usize)> {
    let mut map = BTreeMap::new();
    let mut duplicates = 0usize;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::format(format!(
                "labels line {}: expected device_id<TAB>device_type<TAB>manufacturer",
                lineno + 1
            )));
        }
        let label = DeviceLabel {
            device_id: cols[0].to_string(),
            device_type: cols[1].to_string(),
            manufacturer: cols[2].to_string(),
        };
        if map.insert(label.device_id.clone(), label).is_some() {
            duplicates += 1;
        }
    }
    Ok((map, duplicates))
}

/// Suffix list of domains filtered before modeling (reverse-DNS zones by
/// default), the network analogue of NLP stop words.
#[derive(Debug, Clone)]
pub struct StopList {
    suffixes: Vec<String>,
}

impl Default for StopList {
    fn default() -> Self {
        StopList {
            suffixes: vec!["in-addr.arpa".to_string(), "ip6.arpa".to_string()],
        }
    }
}

impl StopList {
    pub fn new(suffixes: Vec<String>) -> Self {
        StopList {
            suffixes: suffixes.into_iter().map(|s| s.to_ascii_lowercase()).collect(),
        }
    }

    /// Case-insensitive suffix match; a trailing dot on the FQDN is ignored.
    pub fn is_stop_domain(&self, fqdn: &str) -> bool {
        let name = fqdn.to_ascii_lowercase();
        let name = name.strip_suffix('.').unwrap_or(&name);
        self.suffixes.iter().any(|s| name.ends_with(s.as_str()))
    }
}

pub fn is_stop_domain(fqdn: &str) -> bool {
    StopList::default().is_stop_domain(fqdn)
}

/// Group events by device, order by timestamp (stable on ties), drop stop
/// domains, tokenize, and cut consecutive non-overlapping windows of exactly
/// `n` tokens. Trailing remainders shorter than `n` are dropped; devices
/// with fewer than `n` surviving events yield nothing.
pub fn build_sequences(
    events: &[DnsEvent],
    n: usize,
    tokenizer: &TokenizerConfig,
    stops: &StopList,
) -> Result<Vec<TokenSequence>> {
    if n == 0 {
        return Err(Error::validation("sequence length N must be >= 1"));
    }
    tokenizer.validate()?;
    let mut by_device: BTreeMap<&str, Vec<&DnsEvent>> = BTreeMap::new();
    for ev in events {
        by_device.entry(&ev.device_id).or_default().push(ev);
    }
    let mut out = Vec::new();
    for (device_id, mut evs) in by_device {
        evs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp)); // stable: ties keep input order
        let mut tokens = Vec::with_capacity(evs.len());
        let mut times = Vec::with_capacity(evs.len());
        for ev in evs {
            if stops.is_stop_domain(&ev.fqdn) {
                continue;
            }
            tokens.push(tokenizer.truncate(&ev.fqdn)?);
            times.push(ev.timestamp);
        }
        let mut start = 0;
        while start + n <= tokens.len() {
            out.push(TokenSequence {
                device_id: device_id.to_string(),
                tokens: tokens[start..start + n].to_vec(),
                start_time: times[start],
            });
            start += n;
        }
    }
    Ok(out)
}

/// Configuration for the synthetic multi-environment generator.
///
/// Each device type owns `service_families_per_type` service families and
/// each family has `variants_per_family` FQDN variants (geo or firmware
/// variants of one service). Devices in environment `e` only ever query
/// variant `e % variants_per_family`, so a second environment introduces
/// tokens absent from the first. Each device specializes in one of its
/// type's families (device index mod families). Family queries are
/// interleaved with shared background lookups drawn mostly from a small
/// per-family slice of a common pool — the slice depends only on the family,
/// not the environment, which is what gives co-occurrence-based methods a
/// cross-environment alignment signal — and partly from the whole pool
/// uniformly, which keeps any single window's background mix noisy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_device_types: usize,
    pub devices_per_type_per_env: usize,
    pub environments: usize,
    pub service_families_per_type: usize,
    pub variants_per_family: usize,
    pub queries_per_device: usize,
    pub shared_background_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_device_types: 8,
            devices_per_type_per_env: 4,
            environments: 2,
            service_families_per_type: 4,
            variants_per_family: 2,
            queries_per_device: 1024,
            shared_background_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_device_types == 0
            || self.devices_per_type_per_env == 0
            || self.service_families_per_type == 0
            || self.variants_per_family == 0
            || self.queries_per_device == 0
        {
            return Err(Error::validation("all synthetic counts must be >= 1"));
        }
        if self.environments < 2 {
            return Err(Error::validation("environments must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.shared_background_fraction) {
            return Err(Error::validation(
                "shared_background_fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn num_devices(&self) -> usize {
        self.num_device_types * self.devices_per_type_per_env * self.environments
    }

    /// Size of the shared background token pool.
    pub fn background_pool(&self) -> usize {
        self.num_device_types * self.service_families_per_type
    }

    pub fn variant_fqdn(&self, device_type: usize, family: usize, variant: usize) -> String {
        format!("svc{family}v{variant}.type{device_type}.example")
    }

    pub fn background_fqdn(&self, slot: usize) -> String {
        format!("bg{slot}.shared.example")
    }

    /// Background slots associated with a family; identical in every
    /// environment and unique per family (the alignment signal), while each
    /// individual slot is shared across three neighboring device types so a
    /// single background token never identifies a type on its own.
    pub fn profile(&self, device_type: usize, family: usize) -> Vec<usize> {
        let t = self.num_device_types;
        let f = self.service_families_per_type;
        (0..3.min(t))
            .map(|j| ((device_type + j) % t) * f + family)
            .collect()
    }

    pub fn manufacturer_count(&self) -> usize {
        (self.num_device_types + 1) / 2
    }
}

/// Share of background lookups drawn uniformly from the whole pool instead
/// of the device family's profile.
const BG_NOISE_FRACTION: f64 = 0.3;

/// Deterministic synthetic traffic: `(events, labels)` as a pure function of
/// the config. Every device emits exactly `queries_per_device` events.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Vec<DnsEvent>, Vec<DeviceLabel>)> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let n_devices = cfg.num_devices();
    let mut events = Vec::with_capacity(n_devices * cfg.queries_per_device);
    let mut labels = Vec::with_capacity(n_devices);
    let m = cfg.manufacturer_count();

    let mut device_index = 0usize;
    for env in 0..cfg.environments {
        let variant = env % cfg.variants_per_family;
        for dtype in 0..cfg.num_device_types {
            for dev in 0..cfg.devices_per_type_per_env {
                let device_id = format!("env{env}-type{dtype}-dev{dev}");
                labels.push(DeviceLabel {
                    device_id: device_id.clone(),
                    device_type: format!("type{dtype}"),
                    manufacturer: format!("mfr{}", dtype % m),
                });
                let mut rng = root.fork(device_index as u64);
                let family = dev % cfg.service_families_per_type;
                let profile = cfg.profile(dtype, family);
                for slot in 0..cfg.queries_per_device {
                    let fqdn = if rng.bernoulli(cfg.shared_background_fraction) {
                        let slot_idx = if rng.bernoulli(BG_NOISE_FRACTION) {
                            rng.below(cfg.background_pool())
                        } else {
                            profile[rng.below(profile.len())]
                        };
                        cfg.background_fqdn(slot_idx)
                    } else {
                        cfg.variant_fqdn(dtype, family, variant)
                    };
                    // Interleave devices in time while keeping each device's
                    // own events strictly ordered.
                    let timestamp =
                        slot as f64 + device_index as f64 / n_devices as f64;
                    events.push(DnsEvent {
                        timestamp,
                        device_id: device_id.clone(),
                        fqdn,
                    });
                }
                device_index += 1;
            }
        }
    }
    Ok((events, labels))
}

/// Serialize events in the `events.tsv` wire format.
pub fn write_events_tsv<W: std::io::Write>(events: &[DnsEvent], mut w: W) -> Result<()> {
    for ev in events {
        writeln!(w, "{}\t{}\t{}", ev.timestamp, ev.device_id, ev.fqdn)?;
    }
    Ok(())
}

/// Serialize labels in the `labels.tsv` wire format.
pub fn write_labels_tsv<W: std::io::Write>(labels: &[DeviceLabel], mut w: W) -> Result<()> {
    for l in labels {
        writeln!(w, "{}\t{}\t{}", l.device_id, l.device_type, l.manufacturer)?;
    }
    Ok(())
}
