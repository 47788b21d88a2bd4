//! Deterministic synthetic traces: legitimate background traffic, flood
//! traffic toward one victim, and window-granular ground-truth labels.
//!
//! All generation runs single-threaded off a seeded ChaCha20 stream, so a
//! fixed parameter set reproduces the trace byte for byte on any platform.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{Label, WindowLabel};
use crate::error::{Error, Result};
use crate::flow_model::{first_unsorted_index, FlowKey, FlowRecord};

/// Parameters for legitimate background traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegitParams {
    pub n_sources: u32,
    pub n_destinations: u32,
    pub records_per_second: f64,
    pub duration: f64,
    /// Zipf exponent over the source pool; 0 = uniform.
    pub source_skew: f64,
    pub seed: u64,
}

impl LegitParams {
    fn validate(&self) -> Result<()> {
        if self.n_sources < 1 || self.n_destinations < 1 {
            return Err(Error::Config("pools must be non-empty".into()));
        }
        if !(self.records_per_second > 0.0) || !(self.duration > 0.0) {
            return Err(Error::Config("rate and duration must be > 0".into()));
        }
        if !(self.source_skew >= 0.0) {
            return Err(Error::Config("source_skew must be >= 0".into()));
        }
        Ok(())
    }
}

/// How flood sources are spoofed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpoofMode {
    /// Cycle a small fixed bot pool: low source-sequence randomness.
    FixedSource,
    /// Draw spoofed sources from the full IPv4 space.
    RandomSource,
}

impl std::str::FromStr for SpoofMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed-source" => Ok(SpoofMode::FixedSource),
            "random" | "random-source" => Ok(SpoofMode::RandomSource),
            other => Err(Error::Config(format!("spoof mode must be fixed|random, got `{other}`"))),
        }
    }
}

/// Parameters for one flood toward a single victim flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub n_bots: u32,
    pub victim: FlowKey,
    pub records_per_second: f64,
    pub start: f64,
    pub duration: f64,
    pub spoof_mode: SpoofMode,
    pub seed: u64,
}

impl AttackParams {
    fn validate(&self) -> Result<()> {
        if self.n_bots < 1 {
            return Err(Error::Config("n_bots must be >= 1".into()));
        }
        if !(self.records_per_second > 0.0) || !(self.duration > 0.0) || !(self.start >= 0.0) {
            return Err(Error::Config("attack interval must be well-formed".into()));
        }
        Ok(())
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.start + self.duration)
    }
}

const LEGIT_SRC_BASE: u32 = 0x0a00_0001; // 10.0.0.1
const LEGIT_DST_BASE: u32 = 0xc0a8_0001; // 192.168.0.1
const BOT_BASE: u32 = 0xac10_0001; // 172.16.0.1
const SERVICE_PORTS: [u16; 5] = [80, 443, 53, 22, 8080];

/// Cumulative Zipf weights over pool indices: w_i ∝ 1/(i+1)^s.
fn zipf_cdf(n: u32, skew: f64) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(n as usize);
    let mut acc = 0.0;
    for i in 0..n {
        acc += 1.0 / ((i + 1) as f64).powf(skew);
        cdf.push(acc);
    }
    let total = acc;
    for w in &mut cdf {
        *w /= total;
    }
    cdf
}

fn sample_index(cdf: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

fn sort_by_time(records: &mut [FlowRecord]) {
    records.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
}

/// Generates legitimate background traffic, sorted by timestamp.
pub fn gen_legitimate(params: &LegitParams) -> Result<Vec<FlowRecord>> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let n = (params.records_per_second * params.duration).round() as usize;
    let cdf = zipf_cdf(params.n_sources, params.source_skew);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let timestamp = rng.random_range(0.0..params.duration);
        let src = LEGIT_SRC_BASE + sample_index(&cdf, &mut rng) as u32;
        let dst = LEGIT_DST_BASE + rng.random_range(0..params.n_destinations);
        let packet_count = rng.random_range(1..=10u64);
        records.push(FlowRecord {
            timestamp,
            src_addr: Ipv4Addr::from(src),
            dst_addr: Ipv4Addr::from(dst),
            src_port: rng.random_range(1024..=65535),
            dst_port: SERVICE_PORTS[rng.random_range(0..SERVICE_PORTS.len())],
            protocol: 6,
            packet_count,
            byte_count: packet_count * rng.random_range(40..=1500u64),
        });
    }
    sort_by_time(&mut records);
    Ok(records)
}

/// Generates flood traffic toward the victim flow, sorted by timestamp.
/// Fixed-source mode assigns bots cyclically in time order, so the source
/// symbol sequence stays periodic.
pub fn gen_ddos(params: &AttackParams) -> Result<Vec<FlowRecord>> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let n = (params.records_per_second * params.duration).round() as usize;
    let mut timestamps: Vec<f64> = (0..n)
        .map(|_| params.start + rng.random_range(0.0..params.duration))
        .collect();
    timestamps.sort_by(|a, b| a.partial_cmp(b).expect("finite timestamps"));
    let mut records = Vec::with_capacity(n);
    for (i, timestamp) in timestamps.into_iter().enumerate() {
        let src = match params.spoof_mode {
            SpoofMode::FixedSource => BOT_BASE + (i as u32 % params.n_bots),
            SpoofMode::RandomSource => rng.random(),
        };
        let packet_count = rng.random_range(1..=10u64);
        records.push(FlowRecord {
            timestamp,
            src_addr: Ipv4Addr::from(src),
            dst_addr: params.victim.dst_addr,
            src_port: rng.random_range(1024..=65535),
            dst_port: params.victim.dst_port,
            protocol: 6,
            packet_count,
            byte_count: packet_count * 60,
        });
    }
    Ok(records)
}

/// Merges sorted traces into one sorted stream and labels each window by
/// overlap with the given attack intervals. The trace epoch (first merged
/// timestamp) anchors window boundaries, matching `windowize`.
pub fn mix(
    traces: &[Vec<FlowRecord>],
    attack_intervals: &[(f64, f64)],
    window_duration: f64,
) -> Result<(Vec<FlowRecord>, Vec<WindowLabel>)> {
    if !(window_duration > 0.0) {
        return Err(Error::Config("window duration must be > 0".into()));
    }
    for trace in traces {
        if let Some(i) = first_unsorted_index(trace) {
            return Err(Error::Unsorted(i));
        }
    }
    let mut merged: Vec<FlowRecord> = Vec::new();
    for trace in traces {
        merged.extend(trace.iter().cloned());
    }
    sort_by_time(&mut merged);

    let labels = match merged.first() {
        None => Vec::new(),
        Some(first) => {
            let epoch = first.timestamp;
            let last = merged.last().expect("non-empty").timestamp;
            let n_windows = ((last - epoch) / window_duration).floor() as u64 + 1;
            (0..n_windows)
                .map(|w| {
                    let lo = epoch + w as f64 * window_duration;
                    let hi = lo + window_duration;
                    let attacked = attack_intervals
                        .iter()
                        .any(|&(start, end)| lo < end && start < hi);
                    WindowLabel {
                        window_index: w,
                        label: if attacked { Label::Attack } else { Label::Clean },
                    }
                })
                .collect()
        }
    };
    Ok((merged, labels))
}

/// A ready-made mixed scenario: background traffic plus an optional flood
/// whose start is aligned to the background trace's window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub records: Vec<FlowRecord>,
    pub labels: Vec<WindowLabel>,
    pub attack_intervals: Vec<(f64, f64)>,
    pub victim: Option<FlowKey>,
}

/// Builds legit + flood traffic. `attack.start` is interpreted relative to
/// the trace epoch (the first legitimate record's timestamp), so a start of
/// 10.0 with 1-second windows floods exactly windows 10 onward.
pub fn build_scenario(
    legit: &LegitParams,
    attack: Option<&AttackParams>,
    window_duration: f64,
) -> Result<Scenario> {
    let background = gen_legitimate(legit)?;
    let epoch = background.first().map(|r| r.timestamp).unwrap_or(0.0);
    match attack {
        None => {
            let (records, labels) = mix(&[background], &[], window_duration)?;
            Ok(Scenario {
                records,
                labels,
                attack_intervals: Vec::new(),
                victim: None,
            })
        }
        Some(attack) => {
            let mut shifted = attack.clone();
            shifted.start = epoch + attack.start;
            let flood = gen_ddos(&shifted)?;
            let interval = shifted.interval();
            let (records, labels) = mix(&[background, flood], &[interval], window_duration)?;
            Ok(Scenario {
                records,
                labels,
                attack_intervals: vec![interval],
                victim: Some(attack.victim),
            })
        }
    }
}
