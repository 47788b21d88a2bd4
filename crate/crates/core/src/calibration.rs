//! Threshold calibration from attack-free baselines and scoring of detector
//! output against labeled traces.

use serde::{Deserialize, Serialize};

use crate::alerting::NullAlertSink;
use crate::entropy::FeatureKind;
use crate::error::{Error, Result};
use crate::flow_model::{windowize, FlowRecord};
use crate::pipeline::{
    run_pipeline_windows, stage1_detect, stage2_confirm, DetectorConfig, VerdictState,
};

/// Minimum number of baseline windows below which calibration is refused.
pub const MIN_BASELINE_WINDOWS: usize = 10;

/// Per-feature baseline samples collected from attack-free traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub feature: FeatureKind,
    pub ne_samples: Vec<f64>,
    pub rate_samples: Vec<f64>,
    pub config_digest: String,
}

/// Ground-truth label for one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Clean,
    Attack,
}

/// One line of the labels JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    pub window_index: u64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMetrics {
    /// Fraction of attack-labeled windows flagged Attacked; absent when the
    /// trace has no attack windows.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detection_rate: Option<f64>,
    /// Clean windows flagged Suspected or Attacked.
    pub false_positive_rate: f64,
    pub stage1_fpr: f64,
    pub stage2_fpr: f64,
    pub attack_windows: u64,
    pub clean_windows: u64,
}

/// Nearest-rank lower quantile: sort ascending, return the element at 1-based
/// index ceil(target_fpr × N).
pub fn calibrate_threshold(samples: &[f64], target_fpr: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Calibration("no baseline samples".into()));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::Config(format!(
            "target false-positive rate must be in (0,1), got {target_fpr}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let rank = (target_fpr * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Runs windowing and entropy computation (no thresholding) over an
/// attack-free trace, collecting NE samples per feature and entropy-rate
/// samples of each window's dominant flow.
pub fn build_baseline(
    clean_trace: &[FlowRecord],
    config: &DetectorConfig,
) -> Result<Vec<BaselineProfile>> {
    config.validate()?;
    let windows = windowize(clean_trace, config.window_duration)?;
    let populated = windows.iter().filter(|w| !w.is_empty()).count();
    if populated < MIN_BASELINE_WINDOWS {
        return Err(Error::Calibration(format!(
            "baseline has {populated} non-empty windows, need at least {MIN_BASELINE_WINDOWS}"
        )));
    }
    let digest = config.digest();
    let mut ne_per_feature: Vec<Vec<f64>> = vec![Vec::new(); config.features.len()];
    let mut rate_samples = Vec::new();
    for window in &windows {
        if window.is_empty() {
            continue;
        }
        let outcome = stage1_detect(window, config)?;
        for (i, feature) in config.features.iter().enumerate() {
            ne_per_feature[i].push(outcome.ne_values[feature]);
        }
        // Mirror exactly what stage 2 measures: the dominant flow's
        // source-symbol entropy rate over the confirmation history.
        let start = (window.index as usize + 1).saturating_sub(config.confirmation_history);
        let history = &windows[start..=window.index as usize];
        let stage2 = stage2_confirm(window, history, config)?;
        if let Some(rate) = stage2.entropy_rate {
            rate_samples.push(rate);
        }
    }
    Ok(config
        .features
        .iter()
        .zip(ne_per_feature)
        .map(|(&feature, ne_samples)| BaselineProfile {
            feature,
            ne_samples,
            rate_samples: rate_samples.clone(),
            config_digest: digest.clone(),
        })
        .collect())
}

/// Thresholds derived from a baseline: th1 is the most conservative
/// per-feature NE quantile, th2 the quantile of baseline entropy rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThresholds {
    pub th1: f64,
    pub th2: f64,
    pub target_fpr: f64,
    pub config_digest: String,
}

pub fn calibrate(
    profiles: &[BaselineProfile],
    target_fpr: f64,
) -> Result<CalibratedThresholds> {
    if profiles.is_empty() {
        return Err(Error::Calibration("no baseline profiles".into()));
    }
    let digest = profiles[0].config_digest.clone();
    if profiles.iter().any(|p| p.config_digest != digest) {
        return Err(Error::Calibration(
            "baseline profiles come from different configs".into(),
        ));
    }
    let mut th1 = f64::INFINITY;
    for profile in profiles {
        th1 = th1.min(calibrate_threshold(&profile.ne_samples, target_fpr)?);
    }
    let th2 = if profiles[0].rate_samples.is_empty() {
        0.0
    } else {
        calibrate_threshold(&profiles[0].rate_samples, target_fpr)?
    };
    Ok(CalibratedThresholds {
        th1,
        th2,
        target_fpr,
        config_digest: digest,
    })
}

/// Runs the pipeline over a labeled trace and cross-tabulates verdicts
/// against ground truth. Empty windows are excluded from all denominators.
pub fn evaluate(
    records: &[FlowRecord],
    labels: &[WindowLabel],
    config: &DetectorConfig,
) -> Result<EvaluationMetrics> {
    config.validate()?;
    let windows = windowize(records, config.window_duration)?;
    if labels.len() != windows.len() {
        return Err(Error::Evaluation(format!(
            "label count {} does not match window count {}",
            labels.len(),
            windows.len()
        )));
    }
    let mut by_index = vec![None; windows.len()];
    for label in labels {
        let slot = by_index.get_mut(label.window_index as usize).ok_or_else(|| {
            Error::Evaluation(format!("label for unknown window {}", label.window_index))
        })?;
        *slot = Some(label.label);
    }
    let mut sink = NullAlertSink;
    let summary = run_pipeline_windows(&windows, config, &mut sink)?;

    let mut attack_total = 0u64;
    let mut attack_hit = 0u64;
    let mut clean_total = 0u64;
    let mut clean_suspected = 0u64;
    let mut clean_attacked = 0u64;
    for (window, verdict) in windows.iter().zip(&summary.verdicts) {
        if window.is_empty() {
            continue;
        }
        let label = by_index[window.index as usize].ok_or_else(|| {
            Error::Evaluation(format!("missing label for window {}", window.index))
        })?;
        match label {
            Label::Attack => {
                attack_total += 1;
                if verdict.state == VerdictState::Attacked {
                    attack_hit += 1;
                }
            }
            Label::Clean => {
                clean_total += 1;
                if verdict.state != VerdictState::Normal {
                    clean_suspected += 1;
                }
                if verdict.state == VerdictState::Attacked {
                    clean_attacked += 1;
                }
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(EvaluationMetrics {
        detection_rate: (attack_total > 0).then(|| ratio(attack_hit, attack_total)),
        false_positive_rate: ratio(clean_suspected, clean_total),
        stage1_fpr: ratio(clean_suspected, clean_total),
        stage2_fpr: ratio(clean_attacked, clean_total),
        attack_windows: attack_total,
        clean_windows: clean_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    #[test]
    fn nearest_rank_hand_example() {
        let th = calibrate_threshold(&[0.80, 0.85, 0.90, 0.95], 0.25).unwrap();
        assert_eq!(th, 0.80);
    }

    #[test]
    fn constant_samples_return_the_constant() {
        for target in [0.01, 0.25, 0.8] {
            assert_eq!(calibrate_threshold(&[0.9; 7], target).unwrap(), 0.9);
        }
    }

    #[test]
    fn calibrate_threshold_rejects_bad_input() {
        assert!(matches!(
            calibrate_threshold(&[], 0.1),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            calibrate_threshold(&[0.5], 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            calibrate_threshold(&[0.5], 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantile_is_monotone_in_target() {
        let samples = [0.3, 0.1, 0.9, 0.5, 0.7, 0.2, 0.8];
        let mut last = f64::NEG_INFINITY;
        for i in 1..10 {
            let th = calibrate_threshold(&samples, i as f64 / 10.0).unwrap();
            assert!(th >= last);
            last = th;
        }
    }

    #[test]
    fn quantile_is_permutation_invariant() {
        let a = [0.3, 0.1, 0.9, 0.5];
        let b = [0.9, 0.5, 0.3, 0.1];
        assert_eq!(
            calibrate_threshold(&a, 0.3).unwrap(),
            calibrate_threshold(&b, 0.3).unwrap()
        );
    }

    fn clean_records(n_windows: usize) -> Vec<FlowRecord> {
        let mut records = Vec::new();
        for w in 0..n_windows {
            for i in 0..20u32 {
                records.push(FlowRecord {
                    timestamp: w as f64 + i as f64 * 0.04,
                    src_addr: Ipv4Addr::from(0x0a00_0000 + i),
                    dst_addr: Ipv4Addr::from(0xc0a8_0000 + (i % 5)),
                    src_port: 1024 + i as u16,
                    dst_port: 80,
                    protocol: 6,
                    packet_count: 1,
                    byte_count: 600,
                });
            }
        }
        records
    }

    #[test]
    fn baseline_requires_ten_windows() {
        let config = DetectorConfig::default();
        let err = build_baseline(&clean_records(5), &config).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
        let profiles = build_baseline(&clean_records(12), &config).unwrap();
        assert_eq!(profiles.len(), config.features.len());
        for p in &profiles {
            assert_eq!(p.ne_samples.len(), 12);
        }
    }

    #[test]
    fn calibrate_rejects_mixed_digests() {
        let config = DetectorConfig::default();
        let mut profiles = build_baseline(&clean_records(12), &config).unwrap();
        profiles[1].config_digest = "deadbeef".into();
        assert!(calibrate(&profiles, 0.05).is_err());
    }

    #[test]
    fn evaluate_perfect_confusion_matrix() {
        // All-clean trace with high th1: everything Normal.
        let records = clean_records(12);
        let mut config = DetectorConfig::default();
        config.features = vec![FeatureKind::SrcAddr];
        config.th1 = 0.1;
        let labels: Vec<WindowLabel> = (0..12)
            .map(|i| WindowLabel {
                window_index: i,
                label: Label::Clean,
            })
            .collect();
        let metrics = evaluate(&records, &labels, &config).unwrap();
        assert_eq!(metrics.detection_rate, None);
        assert_eq!(metrics.false_positive_rate, 0.0);
        assert_eq!(metrics.clean_windows, 12);
    }

    #[test]
    fn evaluate_rejects_label_mismatch() {
        let records = clean_records(12);
        let config = DetectorConfig::default();
        let labels = vec![WindowLabel {
            window_index: 0,
            label: Label::Clean,
        }];
        assert!(matches!(
            evaluate(&records, &labels, &config),
            Err(Error::Evaluation(_))
        ));
    }
}
