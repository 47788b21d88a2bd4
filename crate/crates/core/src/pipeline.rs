//! Two-stage detection: per-window normalized-entropy suspicion (th1) and
//! entropy-rate confirmation of the dominant flow (th2).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alerting::{Alert, AlertSink};
use crate::entropy::{
    build_distribution, entropy_rate, report, EntropyReport, FeatureKind,
};
use crate::error::{Error, Result};
use crate::flow_model::{group_by_flow_key, windowize, FlowKey, FlowRecord, TrafficWindow};

/// How per-feature verdicts combine into a window verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureCombination {
    #[default]
    Any,
    All,
}

impl std::str::FromStr for FeatureCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(FeatureCombination::Any),
            "all" => Ok(FeatureCombination::All),
            other => Err(Error::Config(format!("combine must be any|all, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window_duration: f64,
    pub features: Vec<FeatureKind>,
    pub th1: f64,
    pub th2: f64,
    pub log_base: f64,
    pub block_order: usize,
    pub confirmation_history: usize,
    pub feature_combination: FeatureCombination,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_duration: 1.0,
            features: vec![FeatureKind::SrcAddr, FeatureKind::DstAddr],
            th1: 0.5,
            th2: 0.2,
            log_base: 2.0,
            block_order: 2,
            confirmation_history: 5,
            feature_combination: FeatureCombination::Any,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_duration > 0.0) || !self.window_duration.is_finite() {
            return Err(Error::Config("window_duration must be > 0".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Config("feature set must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.th1) {
            return Err(Error::Config(format!("th1 must be in [0,1], got {}", self.th1)));
        }
        if !(self.th2 >= 0.0) {
            return Err(Error::Config(format!("th2 must be >= 0, got {}", self.th2)));
        }
        if !(self.log_base > 1.0) {
            return Err(Error::Config(format!("log_base must be > 1, got {}", self.log_base)));
        }
        if self.block_order < 1 {
            return Err(Error::Config("block_order must be >= 1".into()));
        }
        if self.confirmation_history < 1 {
            return Err(Error::Config("confirmation_history must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable content digest; baseline profiles store it so calibration and
    /// detection configs can be cross-checked.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictState {
    Normal,
    Suspected,
    Attacked,
}

/// Outcome of the two-stage analysis of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub window_index: u64,
    pub state: VerdictState,
    pub triggering_features: Vec<FeatureKind>,
    pub ne_values: BTreeMap<FeatureKind, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entropy_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attack_flow: Option<FlowKey>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dominant_share: Option<f64>,
    pub discarded_packets: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Outcome {
    pub suspected: bool,
    pub triggering_features: Vec<FeatureKind>,
    pub ne_values: BTreeMap<FeatureKind, f64>,
    pub reports: Vec<EntropyReport>,
}

/// Stage 1 (network-site router): per-feature normalized entropy against th1.
/// Suspicion uses strict `NE < th1`. Empty windows are Normal.
pub fn stage1_detect(window: &TrafficWindow, config: &DetectorConfig) -> Result<Stage1Outcome> {
    let mut ne_values = BTreeMap::new();
    let mut reports = Vec::with_capacity(config.features.len());
    let mut triggering = Vec::new();
    for &feature in &config.features {
        let dist = build_distribution(window, feature);
        let rep = report(window.index, &dist, config.log_base)?;
        ne_values.insert(feature, rep.normalized_entropy);
        if !window.is_empty() && rep.normalized_entropy < config.th1 {
            triggering.push(feature);
        }
        reports.push(rep);
    }
    let suspected = if window.is_empty() {
        false
    } else {
        match config.feature_combination {
            FeatureCombination::Any => !triggering.is_empty(),
            FeatureCombination::All => triggering.len() == config.features.len(),
        }
    };
    Ok(Stage1Outcome {
        suspected,
        triggering_features: if suspected { triggering } else { Vec::new() },
        ne_values,
        reports,
    })
}

/// The flow key holding the largest packet share of the window. Ties break
/// toward the lexicographically smaller (dst_addr, dst_port).
pub fn identify_dominant_flow(window: &TrafficWindow) -> Result<(FlowKey, f64)> {
    let total = window.packet_total();
    if total == 0 {
        return Err(Error::NoDominantFlow);
    }
    let groups = group_by_flow_key(window);
    let mut best: Option<(FlowKey, u64)> = None;
    for (key, records) in groups {
        let packets: u64 = records.iter().map(|r| r.packet_count).sum();
        // BTreeMap iterates in ascending key order, so `>` keeps the
        // lexicographically smaller key on ties.
        if best.map_or(true, |(_, p)| packets > p) {
            best = Some((key, packets));
        }
    }
    let (key, packets) = best.expect("non-empty window has groups");
    Ok((key, packets as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub attacked: bool,
    pub entropy_rate: Option<f64>,
    pub attack_flow: FlowKey,
    pub dominant_share: f64,
    pub discarded_packets: u64,
    pub note: Option<String>,
}

/// Confirmation symbol sequence: per-packet source addresses of the dominant
/// flow's records across the history windows, in record order.
pub fn confirmation_symbols(history: &[TrafficWindow], flow: FlowKey) -> Vec<u32> {
    let mut symbols = Vec::new();
    for window in history {
        for record in &window.records {
            if record.key() == flow {
                let src = u32::from(record.src_addr);
                for _ in 0..record.packet_count {
                    symbols.push(src);
                }
            }
        }
    }
    symbols
}

/// Stage 2 (cloud-site router): entropy-rate confirmation of the dominant
/// flow. Attacked uses inclusive `rate <= th2`. A symbol sequence shorter
/// than the block order leaves the window Suspected.
pub fn stage2_confirm(
    suspected: &TrafficWindow,
    history: &[TrafficWindow],
    config: &DetectorConfig,
) -> Result<Stage2Outcome> {
    let (flow, share) = identify_dominant_flow(suspected)?;
    let symbols = confirmation_symbols(history, flow);
    match entropy_rate(&symbols, config.block_order, config.log_base) {
        Ok(rate) => {
            let attacked = rate <= config.th2;
            let discarded = if attacked {
                suspected
                    .records
                    .iter()
                    .filter(|r| r.key() == flow)
                    .map(|r| r.packet_count)
                    .sum()
            } else {
                0
            };
            Ok(Stage2Outcome {
                attacked,
                entropy_rate: Some(rate),
                attack_flow: flow,
                dominant_share: share,
                discarded_packets: discarded,
                note: None,
            })
        }
        Err(Error::InsufficientData(msg)) => Ok(Stage2Outcome {
            attacked: false,
            entropy_rate: None,
            attack_flow: flow,
            dominant_share: share,
            discarded_packets: 0,
            note: Some(format!("confirmation skipped: {msg}")),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub windows: u64,
    pub suspected: u64,
    pub attacked: u64,
    pub discarded_packets: u64,
    pub verdicts: Vec<WindowVerdict>,
}

/// Runs the full two-stage pipeline over a record stream.
///
/// Stage-1 analysis runs in parallel across windows; verdicts, alerts, and
/// stage 2 are processed strictly in window-index order, so output is
/// deterministic under any thread count.
pub fn run_pipeline(
    records: &[FlowRecord],
    config: &DetectorConfig,
    sink: &mut dyn AlertSink,
) -> Result<PipelineSummary> {
    config.validate()?;
    let windows = windowize(records, config.window_duration)?;
    run_pipeline_windows(&windows, config, sink)
}

pub fn run_pipeline_windows(
    windows: &[TrafficWindow],
    config: &DetectorConfig,
    sink: &mut dyn AlertSink,
) -> Result<PipelineSummary> {
    config.validate()?;
    let stage1: Vec<Result<Stage1Outcome>> = windows
        .par_iter()
        .map(|w| stage1_detect(w, config))
        .collect();

    let mut verdicts = Vec::with_capacity(windows.len());
    let mut suspected_count = 0u64;
    let mut attacked_count = 0u64;
    let mut discarded_total = 0u64;

    for (window, outcome) in windows.iter().zip(stage1) {
        let outcome = outcome?;
        let mut verdict = WindowVerdict {
            window_index: window.index,
            state: VerdictState::Normal,
            triggering_features: outcome.triggering_features,
            ne_values: outcome.ne_values,
            entropy_rate: None,
            attack_flow: None,
            dominant_share: None,
            discarded_packets: 0,
            note: None,
        };

        if outcome.suspected {
            suspected_count += 1;
            verdict.state = VerdictState::Suspected;
            let alert_feature = verdict
                .triggering_features
                .iter()
                .copied()
                .min_by(|a, b| {
                    verdict.ne_values[a]
                        .partial_cmp(&verdict.ne_values[b])
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("suspected verdict has triggering features");
            let stage1_alert = Alert {
                window_index: window.index,
                stage: 1,
                timestamp: window.start_time,
                feature: Some(alert_feature),
                observed: verdict.ne_values[&alert_feature],
                threshold: config.th1,
                flow: None,
                message: format!(
                    "normalized entropy below th1 on {}",
                    alert_feature.name()
                ),
            };
            sink.emit(&stage1_alert)?;

            let start = (window.index as usize + 1).saturating_sub(config.confirmation_history);
            let history = &windows[start..=window.index as usize];
            let stage2 = stage2_confirm(window, history, config)?;
            verdict.entropy_rate = stage2.entropy_rate;
            verdict.attack_flow = Some(stage2.attack_flow);
            verdict.dominant_share = Some(stage2.dominant_share);
            verdict.note = stage2.note;
            if stage2.attacked {
                attacked_count += 1;
                discarded_total += stage2.discarded_packets;
                verdict.state = VerdictState::Attacked;
                verdict.discarded_packets = stage2.discarded_packets;
                let rate = stage2.entropy_rate.expect("attacked implies rate");
                let final_alert = Alert {
                    window_index: window.index,
                    stage: 2,
                    timestamp: window.start_time,
                    feature: None,
                    observed: rate,
                    threshold: config.th2,
                    flow: Some(stage2.attack_flow),
                    message: format!(
                        "entropy rate {rate:.4} <= th2; discarding flow {}",
                        stage2.attack_flow
                    ),
                };
                sink.emit(&final_alert)?;
            }
        }
        verdicts.push(verdict);
    }

    Ok(PipelineSummary {
        windows: windows.len() as u64,
        suspected: suspected_count,
        attacked: attacked_count,
        discarded_packets: discarded_total,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alerting::VecAlertSink;
    use std::net::Ipv4Addr;

    fn record(ts: f64, src: u32, dst: u32, dst_port: u16, pkts: u64) -> FlowRecord {
        FlowRecord {
            timestamp: ts,
            src_addr: Ipv4Addr::from(src),
            dst_addr: Ipv4Addr::from(dst),
            src_port: 1024,
            dst_port,
            protocol: 6,
            packet_count: pkts,
            byte_count: pkts * 600,
        }
    }

    fn window(records: Vec<FlowRecord>) -> TrafficWindow {
        TrafficWindow {
            index: 0,
            start_time: 0.0,
            duration: 1.0,
            records,
        }
    }

    fn config() -> DetectorConfig {
        DetectorConfig::default()
    }

    #[test]
    fn stage1_strict_inequality_boundary_is_normal() {
        // Two equal counts: NE = 1 for SrcAddr. Single destination: NE = 0.
        let w = window(vec![record(0.1, 1, 100, 80, 1), record(0.2, 2, 100, 80, 1)]);
        let mut cfg = config();
        cfg.features = vec![FeatureKind::SrcAddr];
        cfg.th1 = 1.0;
        let out = stage1_detect(&w, &cfg).unwrap();
        assert!(!out.suspected, "NE == th1 must not trip the strict rule");

        cfg.th1 = 0.9;
        let out = stage1_detect(&w, &cfg).unwrap();
        assert!(!out.suspected);
    }

    #[test]
    fn stage1_any_mode_trips_on_one_feature() {
        // SrcAddr uniform (NE 1), DstAddr single value (NE 0).
        let w = window(vec![record(0.1, 1, 100, 80, 1), record(0.2, 2, 100, 80, 1)]);
        let mut cfg = config();
        cfg.th1 = 0.6;
        let out = stage1_detect(&w, &cfg).unwrap();
        assert!(out.suspected);
        assert_eq!(out.triggering_features, vec![FeatureKind::DstAddr]);

        cfg.feature_combination = FeatureCombination::All;
        let out = stage1_detect(&w, &cfg).unwrap();
        assert!(!out.suspected, "ALL mode needs every feature below th1");
    }

    #[test]
    fn empty_window_is_normal() {
        let out = stage1_detect(&window(vec![]), &config()).unwrap();
        assert!(!out.suspected);
        assert_eq!(out.reports.len(), 2);
    }

    #[test]
    fn dominant_flow_share_and_tie_break() {
        let w = window(vec![
            record(0.1, 1, 100, 80, 9000),
            record(0.2, 2, 200, 443, 1000),
        ]);
        let (key, share) = identify_dominant_flow(&w).unwrap();
        assert_eq!(key.dst_addr, Ipv4Addr::from(100u32));
        assert!((share - 0.9).abs() < 1e-12);

        let tied = window(vec![
            record(0.1, 1, 200, 443, 5),
            record(0.2, 2, 100, 80, 5),
        ]);
        let (key, share) = identify_dominant_flow(&tied).unwrap();
        assert_eq!(key.dst_addr, Ipv4Addr::from(100u32), "smaller key wins ties");
        assert!((share - 0.5).abs() < 1e-12);

        assert!(matches!(
            identify_dominant_flow(&window(vec![])),
            Err(Error::NoDominantFlow)
        ));
    }

    #[test]
    fn stage2_constant_source_confirms() {
        // One spoofed source flooding one victim: rate 0 <= th2.
        let records: Vec<FlowRecord> =
            (0..20).map(|i| record(i as f64 * 0.01, 7, 100, 80, 3)).collect();
        let w = window(records);
        let out = stage2_confirm(&w, std::slice::from_ref(&w), &config()).unwrap();
        assert!(out.attacked);
        assert_eq!(out.entropy_rate, Some(0.0));
        assert_eq!(out.discarded_packets, 60);
    }

    #[test]
    fn stage2_inclusive_boundary_confirms() {
        // Alternating two-source flood: rate exactly 0.5 with k = 2.
        let records: Vec<FlowRecord> =
            (0..9).map(|i| record(i as f64 * 0.01, 1 + (i % 2), 100, 80, 1)).collect();
        let w = window(records);
        let mut cfg = config();
        cfg.th2 = 0.5;
        let out = stage2_confirm(&w, std::slice::from_ref(&w), &cfg).unwrap();
        let rate = out.entropy_rate.unwrap();
        assert!((rate - 0.5).abs() < 1e-12, "rate = {rate}");
        assert!(out.attacked, "rate == th2 must confirm (inclusive)");
    }

    #[test]
    fn stage2_short_sequence_stays_suspected() {
        let w = window(vec![record(0.1, 1, 100, 80, 1)]);
        let mut cfg = config();
        cfg.block_order = 5;
        let out = stage2_confirm(&w, std::slice::from_ref(&w), &cfg).unwrap();
        assert!(!out.attacked);
        assert!(out.entropy_rate.is_none());
        assert!(out.note.as_deref().unwrap().contains("confirmation skipped"));
    }

    #[test]
    fn pipeline_empty_trace_yields_zeros() {
        let mut sink = VecAlertSink::default();
        let summary = run_pipeline(&[], &config(), &mut sink).unwrap();
        assert_eq!(summary.windows, 0);
        assert_eq!(summary.suspected, 0);
        assert_eq!(summary.attacked, 0);
        assert!(sink.alerts.is_empty());
    }

    #[test]
    fn pipeline_alert_counts_match_verdicts() {
        // Flood from one source to one victim: every window suspected and
        // confirmed once enough symbols accumulate.
        let records: Vec<FlowRecord> = (0..300)
            .map(|i| record(i as f64 * 0.01, 9, 100, 80, 2))
            .collect();
        let mut cfg = config();
        cfg.th1 = 0.5;
        let mut sink = VecAlertSink::default();
        let summary = run_pipeline(&records, &cfg, &mut sink).unwrap();
        assert!(summary.attacked > 0);
        let stage1 = sink.alerts.iter().filter(|a| a.stage == 1).count() as u64;
        let stage2 = sink.alerts.iter().filter(|a| a.stage == 2).count() as u64;
        assert_eq!(stage1, summary.suspected);
        assert_eq!(stage2, summary.attacked);
        // Attacked is a subset of Suspected by construction.
        for v in &summary.verdicts {
            if v.state == VerdictState::Attacked {
                assert!(v.attack_flow.is_some() && v.entropy_rate.is_some());
            }
        }
    }

    #[test]
    fn config_digest_is_stable_and_sensitive() {
        let a = config();
        let mut b = config();
        assert_eq!(a.digest(), b.digest());
        b.th1 = 0.7;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = config();
        cfg.th1 = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.features.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.window_duration = 0.0;
        assert!(cfg.validate().is_err());
    }
}
