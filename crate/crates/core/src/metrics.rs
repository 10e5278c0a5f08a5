//! Client-statistics snapshots and observation-window derivation.
//!
//! A snapshot is the complete set of counters the tuner is allowed to see:
//! everything it does is derived by differencing two snapshots of the same
//! client. The on-disk form is a line-oriented `key: value` record terminated
//! by one blank line; a trace file is a concatenation of records,
//! chronological per client, with clients free to interleave.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tuner::WindowMetrics;

pub const SNAPSHOT_VERSION: u64 = 1;

/// Cumulative client counters at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub timestamp_ms: u64,
    pub client_id: String,
    /// Instantaneous backlog: dirty pages plus staged-but-unsent RPC bytes.
    pub cur_dirty_bytes: u64,
    pub pages_cached_total: u64,
    pub rpcs_formed_total: u64,
    pub bytes_transferred_total: u64,
    pub max_pages_per_rpc: u32,
    pub max_rpcs_in_flight: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: malformed value for `{key}`")]
    MalformedValue { key: String, line: usize },
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u64),
    #[error("empty record")]
    EmptyRecord,
    #[error("cumulative counter `{0}` decreased")]
    CounterRegression(&'static str),
    #[error("timestamps do not advance")]
    ClockRegression,
    #[error("snapshots belong to different clients")]
    ClientMismatch,
}

const KEYS: [&str; 9] = [
    "snapshot_version",
    "timestamp_ms",
    "client_id",
    "cur_dirty_bytes",
    "pages_cached_total",
    "rpcs_formed_total",
    "bytes_transferred_total",
    "max_pages_per_rpc",
    "max_rpcs_in_flight",
];

#[derive(Default)]
struct RecordFields {
    values: [Option<String>; 9],
}

impl RecordFields {
    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), MetricsError> {
        let Some(idx) = KEYS.iter().position(|k| *k == key) else {
            return Err(MetricsError::UnknownKey { key: key.to_string(), line });
        };
        if self.values[idx].is_some() {
            return Err(MetricsError::DuplicateKey { key: key.to_string(), line });
        }
        self.values[idx] = Some(value.to_string());
        Ok(())
    }

    fn take(&mut self, key: &'static str) -> Result<String, MetricsError> {
        let idx = KEYS.iter().position(|k| *k == key).expect("known key");
        self.values[idx].take().ok_or(MetricsError::MissingKey(key))
    }
}

fn parse_u64(fields: &mut RecordFields, key: &'static str, first_line: usize) -> Result<u64, MetricsError> {
    let raw = fields.take(key)?;
    raw.parse().map_err(|_| MetricsError::MalformedValue { key: key.to_string(), line: first_line })
}

/// Incremental reader over a trace: yields one snapshot per record together
/// with the line number the record started on.
pub struct TraceReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> TraceReader<'a> {
    pub fn new(text: &'a str) -> Self {
        TraceReader { lines: text.lines().enumerate() }
    }

    /// Next record, or `None` at end of input. The `usize` is the 1-based
    /// line number of the record's first line.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<Result<(Snapshot, usize), (MetricsError, usize)>> {
        let mut fields = RecordFields::default();
        let mut first_line = 0usize;
        let mut saw_any = false;
        loop {
            match self.lines.next() {
                None => {
                    if !saw_any {
                        return None;
                    }
                    break;
                }
                Some((idx, line)) => {
                    let lineno = idx + 1;
                    if line.trim().is_empty() {
                        if saw_any {
                            break;
                        }
                        continue; // stray blank between records
                    }
                    if !saw_any {
                        first_line = lineno;
                        saw_any = true;
                    }
                    let Some((key, value)) = line.split_once(':') else {
                        return Some(Err((
                            MetricsError::MalformedValue { key: line.to_string(), line: lineno },
                            lineno,
                        )));
                    };
                    if let Err(e) = fields.set(key.trim(), value.trim(), lineno) {
                        return Some(Err((e, lineno)));
                    }
                }
            }
        }
        Some(build_snapshot(fields, first_line).map(|s| (s, first_line)).map_err(|e| (e, first_line)))
    }
}

fn build_snapshot(mut fields: RecordFields, first_line: usize) -> Result<Snapshot, MetricsError> {
    let version = parse_u64(&mut fields, "snapshot_version", first_line)?;
    if version != SNAPSHOT_VERSION {
        return Err(MetricsError::UnsupportedVersion(version));
    }
    let timestamp_ms = parse_u64(&mut fields, "timestamp_ms", first_line)?;
    let client_id = fields.take("client_id")?;
    let cur_dirty_bytes = parse_u64(&mut fields, "cur_dirty_bytes", first_line)?;
    let pages_cached_total = parse_u64(&mut fields, "pages_cached_total", first_line)?;
    let rpcs_formed_total = parse_u64(&mut fields, "rpcs_formed_total", first_line)?;
    let bytes_transferred_total = parse_u64(&mut fields, "bytes_transferred_total", first_line)?;
    let max_pages_per_rpc = parse_u64(&mut fields, "max_pages_per_rpc", first_line)? as u32;
    let max_rpcs_in_flight = parse_u64(&mut fields, "max_rpcs_in_flight", first_line)? as u32;
    Ok(Snapshot {
        timestamp_ms,
        client_id,
        cur_dirty_bytes,
        pages_cached_total,
        rpcs_formed_total,
        bytes_transferred_total,
        max_pages_per_rpc,
        max_rpcs_in_flight,
    })
}

/// Parse exactly one record.
pub fn parse_snapshot(text: &str) -> Result<Snapshot, MetricsError> {
    let mut reader = TraceReader::new(text);
    let (snap, _) = reader.next().ok_or(MetricsError::EmptyRecord)?.map_err(|(e, _)| e)?;
    if let Some(extra) = reader.next() {
        match extra {
            Ok((_, line)) | Err((_, line)) => {
                return Err(MetricsError::UnknownKey { key: "<second record>".into(), line });
            }
        }
    }
    Ok(snap)
}

/// Canonical text form: the nine keys in fixed order, one blank terminator.
pub fn serialize_snapshot(s: &Snapshot) -> String {
    let mut out = String::with_capacity(256);
    let _ = writeln!(out, "snapshot_version: {SNAPSHOT_VERSION}");
    let _ = writeln!(out, "timestamp_ms: {}", s.timestamp_ms);
    let _ = writeln!(out, "client_id: {}", s.client_id);
    let _ = writeln!(out, "cur_dirty_bytes: {}", s.cur_dirty_bytes);
    let _ = writeln!(out, "pages_cached_total: {}", s.pages_cached_total);
    let _ = writeln!(out, "rpcs_formed_total: {}", s.rpcs_formed_total);
    let _ = writeln!(out, "bytes_transferred_total: {}", s.bytes_transferred_total);
    let _ = writeln!(out, "max_pages_per_rpc: {}", s.max_pages_per_rpc);
    let _ = writeln!(out, "max_rpcs_in_flight: {}", s.max_rpcs_in_flight);
    out.push('\n');
    out
}

/// Difference two snapshots of the same client into window metrics.
pub fn derive_window(prev: &Snapshot, cur: &Snapshot) -> Result<WindowMetrics, MetricsError> {
    if prev.client_id != cur.client_id {
        return Err(MetricsError::ClientMismatch);
    }
    if cur.timestamp_ms <= prev.timestamp_ms {
        return Err(MetricsError::ClockRegression);
    }
    for (name, p, c) in [
        ("pages_cached_total", prev.pages_cached_total, cur.pages_cached_total),
        ("rpcs_formed_total", prev.rpcs_formed_total, cur.rpcs_formed_total),
        (
            "bytes_transferred_total",
            prev.bytes_transferred_total,
            cur.bytes_transferred_total,
        ),
    ] {
        if c < p {
            return Err(MetricsError::CounterRegression(name));
        }
    }
    let window_len = (cur.timestamp_ms - prev.timestamp_ms) as f64 / 1000.0;
    Ok(WindowMetrics {
        dirty_bytes: cur.cur_dirty_bytes,
        page_cache_rate: (cur.pages_cached_total - prev.pages_cached_total) as f64 / window_len,
        rpc_gen_rate: (cur.rpcs_formed_total - prev.rpcs_formed_total) as f64 / window_len,
        transfer_bw: (cur.bytes_transferred_total - prev.bytes_transferred_total) as f64
            / window_len,
        window_len,
    })
}
