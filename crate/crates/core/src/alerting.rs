//! Alert records, the append-only alert log, client notifications, and the
//! CSP advisory report.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_model::FlowKey;
use crate::entropy::FeatureKind;
use crate::pipeline::{DetectorConfig, VerdictState, WindowVerdict};

/// A stage-1 (suspicion) or stage-2 (confirmation) alert event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub window_index: u64,
    pub stage: u8,
    pub timestamp: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<FeatureKind>,
    pub observed: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow: Option<FlowKey>,
    pub message: String,
}

impl Alert {
    pub fn validate(&self) -> Result<()> {
        match self.stage {
            1 => {
                if self.feature.is_none() {
                    return Err(Error::InvalidAlert("stage-1 alert without feature".into()));
                }
                if !(self.observed < self.threshold) {
                    return Err(Error::InvalidAlert(format!(
                        "stage-1 alert with observed {} not below threshold {}",
                        self.observed, self.threshold
                    )));
                }
            }
            2 => {
                if self.flow.is_none() {
                    return Err(Error::InvalidAlert("stage-2 alert without flow".into()));
                }
                if !(self.observed <= self.threshold) {
                    return Err(Error::InvalidAlert(format!(
                        "stage-2 alert with observed {} above threshold {}",
                        self.observed, self.threshold
                    )));
                }
            }
            s => return Err(Error::InvalidAlert(format!("unknown stage {s}"))),
        }
        Ok(())
    }
}

/// Destination for pipeline alerts. Emission is serialized in window order.
pub trait AlertSink {
    fn emit(&mut self, alert: &Alert) -> Result<()>;
}

/// Collects alerts in memory.
#[derive(Debug, Default)]
pub struct VecAlertSink {
    pub alerts: Vec<Alert>,
}

impl AlertSink for VecAlertSink {
    fn emit(&mut self, alert: &Alert) -> Result<()> {
        alert.validate()?;
        self.alerts.push(alert.clone());
        Ok(())
    }
}

/// Discards alerts after validation.
#[derive(Debug, Default)]
pub struct NullAlertSink;

impl AlertSink for NullAlertSink {
    fn emit(&mut self, alert: &Alert) -> Result<()> {
        alert.validate()
    }
}

/// Appends one JSON line per alert to a writer.
pub struct JsonlAlertSink<W: Write> {
    writer: W,
}

impl<W: Write> JsonlAlertSink<W> {
    pub fn new(writer: W) -> Self {
        JsonlAlertSink { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> AlertSink for JsonlAlertSink<W> {
    fn emit(&mut self, alert: &Alert) -> Result<()> {
        alert.validate()?;
        serde_json::to_writer(&mut self.writer, alert)?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }
}

/// Deterministic one-line human-readable notification for the client.
pub fn notify_client(alert: &Alert) -> String {
    match alert.stage {
        1 => format!(
            "SUSPECTED window {}: feature {} normalized entropy {:.4} < th1 {:.4}",
            alert.window_index,
            alert.feature.map(|f| f.name()).unwrap_or("?"),
            alert.observed,
            alert.threshold
        ),
        _ => format!(
            "ATTACK CONFIRMED window {}: flow {}, entropy rate {:.2} <= th2 {:.2}",
            alert.window_index,
            alert.flow.map(|f| f.to_string()).unwrap_or_else(|| "?".into()),
            alert.observed,
            alert.threshold
        ),
    }
}

/// One confirmed attack episode: a maximal run of consecutive Attacked
/// windows sharing a victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackInterval {
    pub start_window: u64,
    pub end_window: u64,
    pub victim: FlowKey,
    pub peak_dominance_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    pub windows: u64,
    pub suspected: u64,
    pub attacked: u64,
    pub discarded_packets: u64,
}

/// Aggregate post-run report for the cloud service provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisoryReport {
    pub trace: String,
    pub config_digest: String,
    pub attack_intervals: Vec<AttackInterval>,
    pub totals: ReportTotals,
}

/// Builds the advisory report from a complete verdict sequence. Consecutive
/// Attacked windows with the same attack flow coalesce into one interval.
pub fn build_advisory_report(
    verdicts: &[WindowVerdict],
    config: &DetectorConfig,
    trace: &str,
) -> AdvisoryReport {
    let mut intervals: Vec<AttackInterval> = Vec::new();
    for verdict in verdicts {
        if verdict.state != VerdictState::Attacked {
            continue;
        }
        let victim = verdict
            .attack_flow
            .expect("attacked verdict carries attack_flow");
        let share = verdict.dominant_share.unwrap_or(0.0);
        match intervals.last_mut() {
            Some(last)
                if last.victim == victim && last.end_window + 1 == verdict.window_index =>
            {
                last.end_window = verdict.window_index;
                if share > last.peak_dominance_share {
                    last.peak_dominance_share = share;
                }
            }
            _ => intervals.push(AttackInterval {
                start_window: verdict.window_index,
                end_window: verdict.window_index,
                victim,
                peak_dominance_share: share,
            }),
        }
    }
    let totals = ReportTotals {
        windows: verdicts.len() as u64,
        suspected: verdicts
            .iter()
            .filter(|v| v.state != VerdictState::Normal)
            .count() as u64,
        attacked: verdicts
            .iter()
            .filter(|v| v.state == VerdictState::Attacked)
            .count() as u64,
        discarded_packets: verdicts.iter().map(|v| v.discarded_packets).sum(),
    };
    AdvisoryReport {
        trace: trace.to_string(),
        config_digest: config.digest(),
        attack_intervals: intervals,
        totals,
    }
}
