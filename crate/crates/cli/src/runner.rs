//! Single runs, sweeps and the invariant check, with atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use mec_core::scheduler::BoundReport;
use mec_core::sim::{run_simulation, LiftingMode, MetricsSummary, SimResult, TraceRow};
use mec_core::PkSolution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{bounds_for, parse_scenario_str, ScenarioConfig};
use crate::error::CliError;

pub const THREADS_ENV: &str = "MEC_SIM_THREADS";

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub version: String,
    pub algorithm: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    #[serde(flatten)]
    pub metrics: MetricsSummary,
    pub bounds: Option<BoundReport>,
    pub pk: Option<PkSolution>,
}

pub struct RunOutput {
    pub summary: SummaryDoc,
    pub trace: Vec<TraceRow>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, CliError> {
    let sim = cfg.to_sim_config()?;
    let SimResult { summary, trace, pk, bounds } = run_simulation(&sim)?;
    Ok(RunOutput {
        summary: SummaryDoc {
            version: version(),
            algorithm: cfg.algorithm.name().to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            metrics: summary,
            bounds,
            pk,
        },
        trace,
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: path.to_path_buf(), source: e };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn summary_json(doc: &SummaryDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("summary serialises");
    s.push('\n');
    s
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| CliError::Layout(e.to_string()))?)
}

/// Writes `summary.json` and, when recorded, `trace.csv` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    write_atomic(&dir.join("summary.json"), summary_json(&out.summary).as_bytes())?;
    if out.summary.config.record_trace {
        write_atomic(&dir.join("trace.csv"), &trace_csv(&out.trace)?)?;
    }
    Ok(())
}

/// Returns `cfg` with the top-level key `param` set to `value`. Values are read as JSON
/// when possible and as strings otherwise.
pub fn with_param(cfg: &ScenarioConfig, param: &str, value: &str) -> Result<ScenarioConfig, CliError> {
    let mut doc = serde_json::to_value(cfg)?;
    let obj = doc.as_object_mut().expect("scenario is an object");
    if !obj.contains_key(param) {
        return Err(CliError::Invalid { key: param.to_string(), msg: "not a scenario key".into() });
    }
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    obj.insert(param.to_string(), parsed);
    parse_scenario_str(&doc.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: String,
    pub ok: bool,
    pub error: Option<String>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub version: String,
    pub param: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepRow<'a> {
    param: &'a str,
    value: &'a str,
    seed: u64,
    algorithm: &'a str,
    arrived: u64,
    served: u64,
    blocked: u64,
    dropped: u64,
    pending: u64,
    late: u64,
    mean_response_ms: f64,
    max_response_ms: f64,
    utility: f64,
    utility_running_mean: f64,
    block_rate: f64,
    satisfaction_ratio: f64,
    throughput: f64,
    mean_energy_j: f64,
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|n| *n > 0)
}

/// Runs one scenario per value of `param`. Each point writes into `out/point-<i>/`;
/// `sweep.csv` holds one row per successful point and `manifest.json` records every
/// point, failed ones included.
pub fn run_sweep(cfg: &ScenarioConfig, param: &str, values: &[String], out: &Path) -> Result<SweepManifest, CliError> {
    let run_point = |(i, value): (usize, &String)| -> (SweepPoint, Option<SummaryDoc>) {
        let dir = out.join(format!("point-{i}"));
        let result = with_param(cfg, param, value).and_then(|c| run_scenario(&c)).and_then(|o| write_run(&dir, &o).map(|_| o.summary));
        match result {
            Ok(doc) => (SweepPoint { index: i, value: value.clone(), ok: true, error: None, summary: Some(dir.join("summary.json")) }, Some(doc)),
            Err(e) => {
                log::error!("sweep point {param}={value} failed: {e}");
                (SweepPoint { index: i, value: value.clone(), ok: false, error: Some(e.to_string()), summary: None }, None)
            }
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Layout(e.to_string()))?;
    let results: Vec<(SweepPoint, Option<SummaryDoc>)> = pool.install(|| values.par_iter().enumerate().map(run_point).collect());

    let mut w = csv::Writer::from_writer(Vec::new());
    for (point, doc) in &results {
        let Some(doc) = doc else { continue };
        let m = &doc.metrics;
        let energy = m.energy_per_bs.iter().sum::<f64>() / m.energy_per_bs.len().max(1) as f64;
        w.serialize(SweepRow {
            param,
            value: &point.value,
            seed: doc.seed,
            algorithm: &doc.algorithm,
            arrived: m.arrived,
            served: m.served,
            blocked: m.blocked,
            dropped: m.dropped,
            pending: m.pending,
            late: m.late,
            mean_response_ms: m.mean_response_ms,
            max_response_ms: m.max_response_ms,
            utility: m.utility,
            utility_running_mean: m.utility_running_mean,
            block_rate: m.block_rate,
            satisfaction_ratio: m.satisfaction_ratio,
            throughput: m.throughput,
            mean_energy_j: energy,
        })?;
    }
    write_atomic(&out.join("sweep.csv"), &w.into_inner().map_err(|e| CliError::Layout(e.to_string()))?)?;
    let manifest = SweepManifest { version: version(), param: param.to_string(), points: results.into_iter().map(|r| r.0).collect() };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// Runs the scenario with all run-time invariant checks enabled and verifies the
/// closed-form guarantees on the result.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<Vec<Check>, CliError> {
    let cfg = ScenarioConfig { check_invariants: true, record_trace: false, ..cfg.clone() };
    let sim = cfg.to_sim_config()?;
    let mut checks = Vec::new();
    let mut check = |name: &str, ok: bool, detail: String| checks.push(Check { name: name.to_string(), ok, detail });
    let result = match run_simulation(&sim) {
        Ok(r) => r,
        Err(e) => {
            check("run-time invariants", false, e.to_string());
            return Ok(checks);
        }
    };
    check("run-time invariants", true, "no violation".into());
    let m = &result.summary;
    check(
        "accounting",
        m.arrived == m.served + m.blocked + m.dropped + m.pending,
        format!("arrived {} served {} blocked {} dropped {} pending {}", m.arrived, m.served, m.blocked, m.dropped, m.pending),
    );
    check("satisfaction ratio", (0.0..=1.0).contains(&m.satisfaction_ratio), format!("{}", m.satisfaction_ratio));
    if let Some(b) = &result.bounds {
        if sim.bind_giant_tasks {
            let worst = m.max_h.iter().zip(&b.h_max).all(|(h, cap)| h <= cap);
            check("waiting-time bound", worst, format!("max H {:?}, bound {:?}", m.max_h, b.h_max));
            if sim.lifting == LiftingMode::Faithful {
                let cap = (b.h_max_global + 2 * u64::from(sim.topology.delta_max)) as f64 * sim.slot_ms;
                check("response bound", m.max_response_ms <= cap, format!("max {} ms, bound {cap} ms", m.max_response_ms));
            }
        }
        let z_ok = m.max_z.iter().zip(&b.z_max).all(|(z, cap)| *z <= cap + 1e-9);
        check("Z bound", z_ok, format!("max Z {:?}", m.max_z));
        let w_ok = m.max_w.iter().zip(&b.w_max).all(|(w, cap)| *w <= cap + 1e-9);
        check("W bound", w_ok, format!("max W {:?}", m.max_w));
        let e_ok = m.energy_excess_max.iter().zip(&b.w_max).all(|(x, cap)| *x <= 2.0 * cap + 1e-9);
        check("energy", e_ok, format!("largest cumulative excess {:?} J", m.energy_excess_max.iter().cloned().fold(0.0, f64::max)));
        let report = bounds_for(&sim);
        check("deadline", report.is_ok(), report.map_or_else(|e| e.to_string(), |r| format!("V ceiling {:?}", r.v_ceiling)));
    }
    Ok(checks)
}
