//! Python bindings for the entropy computations and the detection pipeline.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use entroflow::alerting::VecAlertSink;
use entroflow::calibration;
use entroflow::entropy::{self, FeatureDistribution, FeatureKind};
use entroflow::flow_model::{read_trace_file, serialize_csv_record, CSV_HEADER};
use entroflow::pipeline::{run_pipeline, DetectorConfig};
use entroflow::traffic_gen::{build_scenario, AttackParams, LegitParams, SpoofMode};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dist_from_counts(counts: Vec<u64>) -> FeatureDistribution {
    FeatureDistribution::from_counts(
        FeatureKind::SrcAddr,
        counts.into_iter().enumerate().map(|(i, c)| (i as u64, c)),
    )
}

/// Shannon entropy of a histogram given as a list of counts.
#[pyfunction]
#[pyo3(signature = (counts, base = 2.0))]
fn shannon_entropy(counts: Vec<u64>, base: f64) -> PyResult<f64> {
    entropy::shannon_entropy(&dist_from_counts(counts), base).map_err(err)
}

/// Normalized entropy (H / log n0) of a histogram, in [0, 1].
#[pyfunction]
#[pyo3(signature = (counts, base = 2.0))]
fn normalized_entropy(counts: Vec<u64>, base: f64) -> PyResult<f64> {
    entropy::normalized_entropy(&dist_from_counts(counts), base).map_err(err)
}

/// k-block plug-in entropy-rate estimate of a symbol sequence.
#[pyfunction]
#[pyo3(signature = (symbols, block_order = 2, base = 2.0))]
fn entropy_rate(symbols: Vec<u64>, block_order: usize, base: f64) -> PyResult<f64> {
    entropy::entropy_rate(&symbols, block_order, base).map_err(err)
}

/// Nearest-rank lower quantile used for threshold calibration.
#[pyfunction]
fn calibrate_threshold(samples: Vec<f64>, target_fpr: f64) -> PyResult<f64> {
    calibration::calibrate_threshold(&samples, target_fpr).map_err(err)
}

/// Writes a synthetic CSV trace (plus optional JSONL labels file) and
/// returns the number of records. Attack traffic is added when
/// `attack_rate` is set.
#[pyfunction]
#[pyo3(signature = (
    trace_path, labels_path = None, seed = 0, duration = 30.0, rate = 300.0,
    n_sources = 200, n_destinations = 20, source_skew = 0.0,
    attack_rate = None, attack_start = 10.0, attack_duration = 10.0,
    n_bots = 1, victim = "10.99.0.1:80", spoof_mode = "fixed",
    window_seconds = 1.0,
))]
#[allow(clippy::too_many_arguments)]
fn generate_trace(
    trace_path: &str,
    labels_path: Option<&str>,
    seed: u64,
    duration: f64,
    rate: f64,
    n_sources: u32,
    n_destinations: u32,
    source_skew: f64,
    attack_rate: Option<f64>,
    attack_start: f64,
    attack_duration: f64,
    n_bots: u32,
    victim: &str,
    spoof_mode: &str,
    window_seconds: f64,
) -> PyResult<usize> {
    let legit = LegitParams {
        n_sources,
        n_destinations,
        records_per_second: rate,
        duration,
        source_skew,
        seed,
    };
    let attack = attack_rate
        .map(|rate| -> PyResult<AttackParams> {
            Ok(AttackParams {
                n_bots,
                victim: victim.parse().map_err(err)?,
                records_per_second: rate,
                start: attack_start,
                duration: attack_duration,
                spoof_mode: spoof_mode.parse::<SpoofMode>().map_err(err)?,
                seed: seed.wrapping_add(0x5eed),
            })
        })
        .transpose()?;
    let scenario = build_scenario(&legit, attack.as_ref(), window_seconds).map_err(err)?;

    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for record in &scenario.records {
        out.push_str(&serialize_csv_record(record));
        out.push('\n');
    }
    std::fs::write(trace_path, out).map_err(err)?;
    if let Some(labels_path) = labels_path {
        let mut out = String::new();
        for label in &scenario.labels {
            out.push_str(&serde_json::to_string(label).map_err(err)?);
            out.push('\n');
        }
        std::fs::write(labels_path, out).map_err(err)?;
    }
    Ok(scenario.records.len())
}

/// Runs the two-stage pipeline over a trace file. `config_json` keys match
/// the detector config fields; omitted keys take their defaults. Returns the
/// summary (verdicts included) as a JSON string.
#[pyfunction]
#[pyo3(signature = (trace_path, config_json = None))]
fn detect(trace_path: &str, config_json: Option<&str>) -> PyResult<String> {
    let config: DetectorConfig = match config_json {
        Some(text) => {
            let mut value: serde_json::Value =
                serde_json::to_value(DetectorConfig::default()).map_err(err)?;
            let overrides: serde_json::Value = serde_json::from_str(text).map_err(err)?;
            let map = value.as_object_mut().expect("config is an object");
            let overrides = overrides
                .as_object()
                .ok_or_else(|| PyValueError::new_err("config_json must be a JSON object"))?;
            for (k, v) in overrides {
                if !map.contains_key(k) {
                    return Err(PyValueError::new_err(format!("unknown config key `{k}`")));
                }
                map.insert(k.clone(), v.clone());
            }
            serde_json::from_value(value).map_err(err)?
        }
        None => DetectorConfig::default(),
    };
    let records = read_trace_file(std::path::Path::new(trace_path)).map_err(err)?;
    let mut sink = VecAlertSink::default();
    let summary = run_pipeline(&records, &config, &mut sink).map_err(err)?;
    serde_json::to_string(&summary).map_err(err)
}

#[pymodule]
fn entroflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(shannon_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_rate, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    Ok(())
}
