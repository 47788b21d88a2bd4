//! Flow records, time-window bucketing, and trace file parsing.
//!
//! A record is a flow-level aggregate: it carries a `packet_count`, so
//! packet-weighted feature distributions are computable without per-packet
//! input.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One aggregated traffic observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub timestamp: f64,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
    pub packet_count: u64,
    pub byte_count: u64,
}

impl FlowRecord {
    pub fn key(&self) -> FlowKey {
        FlowKey {
            dst_addr: self.dst_addr,
            dst_port: self.dst_port,
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(Error::Parse {
                line,
                field: "timestamp",
                reason: format!("must be finite and non-negative, got {}", self.timestamp),
            });
        }
        if self.packet_count < 1 {
            return Err(Error::Parse {
                line,
                field: "packet_count",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// A flow is the set of records sharing one destination address and port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub dst_addr: Ipv4Addr,
    pub dst_port: u16,
}

impl std::fmt::Display for FlowKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.dst_addr, self.dst_port)
    }
}

impl FromStr for FlowKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (addr, port) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::Config(format!("flow key `{s}` must be ADDR:PORT")))?;
        Ok(FlowKey {
            dst_addr: addr
                .parse()
                .map_err(|e| Error::Config(format!("flow key address `{addr}`: {e}")))?,
            dst_port: port
                .parse()
                .map_err(|e| Error::Config(format!("flow key port `{port}`: {e}")))?,
        })
    }
}

/// All records falling inside one fixed-duration time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficWindow {
    pub index: u64,
    pub start_time: f64,
    pub duration: f64,
    pub records: Vec<FlowRecord>,
}

impl TrafficWindow {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn packet_total(&self) -> u64 {
        self.records.iter().map(|r| r.packet_count).sum()
    }
}

/// Trace file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    pub fn from_path(path: &Path) -> TraceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }
}

const CSV_FIELDS: [&str; 8] = [
    "timestamp",
    "src_addr",
    "dst_addr",
    "src_port",
    "dst_port",
    "protocol",
    "packet_count",
    "byte_count",
];

pub const CSV_HEADER: &str =
    "timestamp,src_addr,dst_addr,src_port,dst_port,protocol,packet_count,byte_count";

/// Parses one trace line. `line_no` is used only for error reporting.
pub fn parse_flow_record(line: &str, format: TraceFormat, line_no: usize) -> Result<FlowRecord> {
    match format {
        TraceFormat::Csv => parse_csv_record(line, line_no),
        TraceFormat::Jsonl => {
            let record: FlowRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                field: "record",
                reason: e.to_string(),
            })?;
            record.validate(line_no)?;
            Ok(record)
        }
    }
}

fn parse_csv_record(line: &str, line_no: usize) -> Result<FlowRecord> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 8 {
        return Err(Error::Parse {
            line: line_no,
            field: "record",
            reason: format!("expected 8 comma-separated fields, got {}", fields.len()),
        });
    }
    fn field<T: FromStr>(raw: &str, name: &'static str, line: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse().map_err(|e| Error::Parse {
            line,
            field: name,
            reason: format!("`{raw}`: {e}"),
        })
    }
    let record = FlowRecord {
        timestamp: field(fields[0], CSV_FIELDS[0], line_no)?,
        src_addr: field(fields[1], CSV_FIELDS[1], line_no)?,
        dst_addr: field(fields[2], CSV_FIELDS[2], line_no)?,
        src_port: field(fields[3], CSV_FIELDS[3], line_no)?,
        dst_port: field(fields[4], CSV_FIELDS[4], line_no)?,
        protocol: field(fields[5], CSV_FIELDS[5], line_no)?,
        packet_count: field(fields[6], CSV_FIELDS[6], line_no)?,
        byte_count: field(fields[7], CSV_FIELDS[7], line_no)?,
    };
    record.validate(line_no)?;
    Ok(record)
}

/// Serializes a record in the CSV column order. Inverse of `parse_flow_record`
/// for the CSV format.
pub fn serialize_csv_record(record: &FlowRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        record.timestamp,
        record.src_addr,
        record.dst_addr,
        record.src_port,
        record.dst_port,
        record.protocol,
        record.packet_count,
        record.byte_count
    )
}

/// Reads a whole trace. CSV traces may start with the canonical header line.
pub fn read_trace<R: Read>(reader: R, format: TraceFormat) -> Result<Vec<FlowRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && format == TraceFormat::Csv && trimmed.starts_with("timestamp") {
            continue;
        }
        records.push(parse_flow_record(trimmed, format, i + 1)?);
    }
    Ok(records)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<FlowRecord>> {
    let file = std::fs::File::open(path)?;
    read_trace(file, TraceFormat::from_path(path))
}

/// Buckets sorted records into contiguous fixed-duration windows.
///
/// The trace epoch is the first record's timestamp. Gaps in traffic produce
/// empty windows so downstream indices stay contiguous.
pub fn windowize(records: &[FlowRecord], duration: f64) -> Result<Vec<TrafficWindow>> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Config(format!(
            "window duration must be > 0, got {duration}"
        )));
    }
    if let Some(i) = first_unsorted_index(records) {
        return Err(Error::Unsorted(i));
    }
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let epoch = first.timestamp;
    let mut windows: Vec<TrafficWindow> = Vec::new();
    for record in records {
        let index = ((record.timestamp - epoch) / duration).floor() as u64;
        while windows.len() as u64 <= index {
            let next = windows.len() as u64;
            windows.push(TrafficWindow {
                index: next,
                start_time: epoch + next as f64 * duration,
                duration,
                records: Vec::new(),
            });
        }
        windows[index as usize].records.push(record.clone());
    }
    Ok(windows)
}

/// Index of the first record whose timestamp is smaller than its predecessor.
pub fn first_unsorted_index(records: &[FlowRecord]) -> Option<usize> {
    records
        .windows(2)
        .position(|pair| pair[1].timestamp < pair[0].timestamp)
        .map(|i| i + 1)
}

/// Groups a window's records by flow key.
pub fn group_by_flow_key(window: &TrafficWindow) -> BTreeMap<FlowKey, Vec<&FlowRecord>> {
    let mut groups: BTreeMap<FlowKey, Vec<&FlowRecord>> = BTreeMap::new();
    for record in &window.records {
        groups.entry(record.key()).or_default().push(record);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ts: f64, src: u32, dst: u32, dst_port: u16, pkts: u64) -> FlowRecord {
        FlowRecord {
            timestamp: ts,
            src_addr: Ipv4Addr::from(src),
            dst_addr: Ipv4Addr::from(dst),
            src_port: 1234,
            dst_port,
            protocol: 6,
            packet_count: pkts,
            byte_count: pkts * 600,
        }
    }

    #[test]
    fn parses_csv_line() {
        let r = parse_flow_record("0.5,10.0.0.1,10.0.0.2,1234,80,6,3,1800", TraceFormat::Csv, 1)
            .unwrap();
        assert_eq!(r.packet_count, 3);
        assert_eq!(r.src_addr, Ipv4Addr::new(10, 0, 0, 1));
        assert_eq!(r.dst_port, 80);
    }

    #[test]
    fn rejects_port_out_of_range() {
        let err = parse_flow_record(
            "0.5,10.0.0.1,10.0.0.2,1234,99999,6,3,1800",
            TraceFormat::Csv,
            7,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 7"), "{msg}");
        assert!(msg.contains("dst_port"), "{msg}");
    }

    #[test]
    fn rejects_zero_packet_count() {
        let err = parse_flow_record("0.5,10.0.0.1,10.0.0.2,1234,80,6,0,0", TraceFormat::Csv, 1)
            .unwrap_err();
        assert!(err.to_string().contains("packet_count"));
    }

    #[test]
    fn rejects_bad_field_count() {
        let err = parse_flow_record("0.5,10.0.0.1", TraceFormat::Csv, 1).unwrap_err();
        assert!(err.to_string().contains("8 comma-separated fields"));
    }

    #[test]
    fn parses_jsonl_line() {
        let line = r#"{"timestamp":0.5,"src_addr":"10.0.0.1","dst_addr":"10.0.0.2","src_port":1234,"dst_port":80,"protocol":6,"packet_count":3,"byte_count":1800}"#;
        let r = parse_flow_record(line, TraceFormat::Jsonl, 1).unwrap();
        assert_eq!(r.packet_count, 3);
    }

    #[test]
    fn windowize_buckets_by_floor() {
        let records = vec![
            record(0.1, 1, 9, 80, 1),
            record(0.9, 2, 9, 80, 1),
            record(1.1, 3, 9, 80, 1),
        ];
        let windows = windowize(&records, 1.0).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].records.len(), 2);
        assert_eq!(windows[1].records.len(), 1);
        assert_eq!(windows[1].index, 1);
    }

    #[test]
    fn windowize_emits_empty_gap_windows() {
        let records = vec![record(0.0, 1, 9, 80, 1), record(3.5, 2, 9, 80, 1)];
        let windows = windowize(&records, 1.0).unwrap();
        assert_eq!(windows.len(), 4);
        assert!(windows[1].is_empty() && windows[2].is_empty());
    }

    #[test]
    fn windowize_empty_input() {
        assert!(windowize(&[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn windowize_rejects_unsorted() {
        let records = vec![record(1.0, 1, 9, 80, 1), record(0.5, 2, 9, 80, 1)];
        match windowize(&records, 1.0) {
            Err(Error::Unsorted(1)) => {}
            other => panic!("expected Unsorted(1), got {other:?}"),
        }
    }

    #[test]
    fn group_by_flow_key_splits_destinations() {
        let window = TrafficWindow {
            index: 0,
            start_time: 0.0,
            duration: 1.0,
            records: vec![
                record(0.1, 1, 100, 80, 2),
                record(0.2, 2, 100, 80, 1),
                record(0.3, 3, 200, 443, 4),
            ],
        };
        let groups = group_by_flow_key(&window);
        assert_eq!(groups.len(), 2);
        let key = FlowKey {
            dst_addr: Ipv4Addr::from(100u32),
            dst_port: 80,
        };
        assert_eq!(groups[&key].len(), 2);
    }

    #[test]
    fn flow_key_parses_display_form() {
        let key: FlowKey = "10.0.0.1:80".parse().unwrap();
        assert_eq!(key.to_string(), "10.0.0.1:80");
    }
}
