//! Per-window feature distributions, Shannon entropy, normalized entropy,
//! and the k-block entropy-rate estimate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_model::{group_by_flow_key, TrafficWindow};

/// Traffic feature over which a per-window distribution is built.
///
/// Address and port features are packet-weighted, FlowSize is flow-weighted,
/// InDegree is host-weighted.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    SrcAddr,
    DstAddr,
    SrcPort,
    DstPort,
    FlowSize,
    InDegree,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::SrcAddr,
        FeatureKind::DstAddr,
        FeatureKind::SrcPort,
        FeatureKind::DstPort,
        FeatureKind::FlowSize,
        FeatureKind::InDegree,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::SrcAddr => "src-addr",
            FeatureKind::DstAddr => "dst-addr",
            FeatureKind::SrcPort => "src-port",
            FeatureKind::DstPort => "dst-port",
            FeatureKind::FlowSize => "flow-size",
            FeatureKind::InDegree => "in-degree",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown feature `{s}`")))
    }
}

/// Empirical counts over one feature's values within a window.
///
/// Probabilities are never stored; they are derived as `count / total` at
/// computation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub feature: FeatureKind,
    pub counts: BTreeMap<u64, u64>,
}

impl FeatureDistribution {
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(
        feature: FeatureKind,
        counts: I,
    ) -> FeatureDistribution {
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        FeatureDistribution { feature, counts }
    }

    /// m — the total weight (packets, flows, or hosts depending on feature).
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// n₀ — the number of distinct observed values.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Per-window entropy measurements for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub window_index: u64,
    pub feature: FeatureKind,
    pub entropy: f64,
    pub normalized_entropy: f64,
    pub distinct: usize,
    pub total: u64,
}

/// Builds the empirical distribution of one feature over a window.
pub fn build_distribution(window: &TrafficWindow, feature: FeatureKind) -> FeatureDistribution {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    match feature {
        FeatureKind::SrcAddr | FeatureKind::DstAddr | FeatureKind::SrcPort
        | FeatureKind::DstPort => {
            for record in &window.records {
                let value = match feature {
                    FeatureKind::SrcAddr => u32::from(record.src_addr) as u64,
                    FeatureKind::DstAddr => u32::from(record.dst_addr) as u64,
                    FeatureKind::SrcPort => record.src_port as u64,
                    FeatureKind::DstPort => record.dst_port as u64,
                    _ => unreachable!(),
                };
                *counts.entry(value).or_insert(0) += record.packet_count;
            }
        }
        FeatureKind::FlowSize => {
            // One count per distinct flow, binned by the flow's packet total.
            for (_, records) in group_by_flow_key(window) {
                let size: u64 = records.iter().map(|r| r.packet_count).sum();
                *counts.entry(size).or_insert(0) += 1;
            }
        }
        FeatureKind::InDegree => return in_degree_distribution(window),
    }
    FeatureDistribution { feature, counts }
}

/// Distribution of per-destination in-degrees: for each destination host,
/// the number of distinct source addresses sending to it.
pub fn in_degree_distribution(window: &TrafficWindow) -> FeatureDistribution {
    let mut sources: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for record in &window.records {
        sources
            .entry(u32::from(record.dst_addr))
            .or_default()
            .insert(u32::from(record.src_addr));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for set in sources.values() {
        *counts.entry(set.len() as u64).or_insert(0) += 1;
    }
    FeatureDistribution {
        feature: FeatureKind::InDegree,
        counts,
    }
}

fn check_base(base: f64) -> Result<()> {
    if !(base > 1.0) || !base.is_finite() {
        return Err(Error::Config(format!("log base must be > 1, got {base}")));
    }
    Ok(())
}

fn entropy_of_counts<'a, I>(counts: I, total: u64, base: f64) -> f64
where
    I: Iterator<Item = &'a u64>,
{
    if total == 0 {
        return 0.0;
    }
    let m = total as f64;
    let ln_base = base.ln();
    let mut h = 0.0;
    for &count in counts {
        let p = count as f64 / m;
        h -= p * (p.ln() / ln_base);
    }
    h.max(0.0)
}

/// H(X) = −Σ p(xᵢ)·log_base p(xᵢ). Zero for empty or single-value
/// distributions.
pub fn shannon_entropy(dist: &FeatureDistribution, base: f64) -> Result<f64> {
    check_base(base)?;
    Ok(entropy_of_counts(dist.counts.values(), dist.total(), base))
}

/// NE = H / log_base(n₀), in [0, 1]. Defined as 0 when n₀ ≤ 1 (the maximal
/// concentration case). Independent of the log base.
pub fn normalized_entropy(dist: &FeatureDistribution, base: f64) -> Result<f64> {
    check_base(base)?;
    let n0 = dist.distinct();
    if n0 <= 1 {
        return Ok(0.0);
    }
    let h = shannon_entropy(dist, base)?;
    let max = (n0 as f64).ln() / base.ln();
    Ok((h / max).clamp(0.0, 1.0))
}

pub fn report(window_index: u64, dist: &FeatureDistribution, base: f64) -> Result<EntropyReport> {
    Ok(EntropyReport {
        window_index,
        feature: dist.feature,
        entropy: shannon_entropy(dist, base)?,
        normalized_entropy: normalized_entropy(dist, base)?,
        distinct: dist.distinct(),
        total: dist.total(),
    })
}

/// Plug-in entropy-rate estimate: Shannon entropy of the empirical
/// distribution of overlapping k-blocks, divided by k. Reduces to plain
/// sample entropy at k = 1.
pub fn entropy_rate<T: Hash + Eq>(symbols: &[T], block_order: usize, base: f64) -> Result<f64> {
    check_base(base)?;
    if block_order < 1 {
        return Err(Error::Config(format!(
            "block order must be >= 1, got {block_order}"
        )));
    }
    if symbols.len() < block_order {
        return Err(Error::InsufficientData(format!(
            "sequence of {} symbols is shorter than block order {block_order}",
            symbols.len()
        )));
    }
    let mut counts: HashMap<&[T], u64> = HashMap::new();
    for block in symbols.windows(block_order) {
        *counts.entry(block).or_insert(0) += 1;
    }
    let total: u64 = counts.values().sum();
    let h_k = entropy_of_counts(counts.values(), total, base);
    Ok(h_k / block_order as f64)
}
