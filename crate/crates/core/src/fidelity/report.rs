//! Per-run and per-batch similarity summaries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::align::{similarity_categorical, similarity_numeric, AlignmentConfig};
use super::stats::{fisher_exact_or_one, wilcoxon_signed_rank};
use super::FidelityError;
use crate::harness::{RunPlan, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub hours: u32,
    pub rate: u32,
    pub similarity_time_pct: f64,
    pub similarity_status_pct: f64,
    /// `None` when too few pairs differ for the test to apply.
    pub p_wilcoxon: Option<f64>,
    pub p_fisher: f64,
    #[serde(default)]
    pub fisher_degenerate: bool,
    /// Some record is a stand-in for a lost response.
    #[serde(default)]
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub similarity_time_pct: f64,
    pub similarity_status_pct: f64,
}

/// Fleet replay of one size: similarity of every twin to the device trace,
/// summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub size: usize,
    pub similarity_time_pct: f64,
    pub similarity_status_pct: f64,
    pub std_time_pct: f64,
    pub std_status_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub runs: Vec<RunReport>,
    pub mean: ChannelStats,
    pub std: ChannelStats,
    pub batches: Vec<BatchReport>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn is_success(code: u16) -> bool {
    (200..300).contains(&code)
}

/// Rows twin / device, columns success / error.
pub fn status_table(twin: &Trace, device: &Trace) -> [[u64; 2]; 2] {
    let row = |t: &Trace| {
        let ok = t
            .records
            .iter()
            .filter(|r| is_success(r.status_code))
            .count() as u64;
        [ok, t.len() as u64 - ok]
    };
    [row(twin), row(device)]
}

/// Both channel similarities of a twin trace against a device trace.
pub fn compare(
    twin: &Trace,
    device: &Trace,
    cfg: &AlignmentConfig,
) -> Result<ChannelStats, FidelityError> {
    Ok(ChannelStats {
        similarity_time_pct: similarity_numeric(
            &twin.response_times(),
            &device.response_times(),
            cfg,
        )?,
        similarity_status_pct: similarity_categorical(
            &twin.status_codes(),
            &device.status_codes(),
            cfg,
        )?,
    })
}

pub fn run_report(
    plan: &RunPlan,
    twin: &Trace,
    device: &Trace,
    cfg: &AlignmentConfig,
) -> Result<RunReport, FidelityError> {
    let sim = compare(twin, device, cfg)?;
    let p_wilcoxon = match wilcoxon_signed_rank(&twin.response_times(), &device.response_times()) {
        Ok(w) => Some(w.p_value),
        Err(FidelityError::TooFewPairs(_)) => None,
        Err(e) => return Err(e),
    };
    let (p_fisher, fisher_degenerate) = fisher_exact_or_one(status_table(twin, device));
    Ok(RunReport {
        hours: plan.hours,
        rate: plan.rate,
        similarity_time_pct: sim.similarity_time_pct,
        similarity_status_pct: sim.similarity_status_pct,
        p_wilcoxon,
        p_fisher,
        fisher_degenerate,
        partial: twin.is_partial() || device.is_partial(),
    })
}

pub fn batch_report(
    size: usize,
    device: &Trace,
    twins: &[Trace],
    cfg: &AlignmentConfig,
) -> Result<BatchReport, FidelityError> {
    let sims = twins
        .iter()
        .map(|t| compare(t, device, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let (time, std_time) = mean_std(
        &sims
            .iter()
            .map(|s| s.similarity_time_pct)
            .collect::<Vec<_>>(),
    );
    let (status, std_status) = mean_std(
        &sims
            .iter()
            .map(|s| s.similarity_status_pct)
            .collect::<Vec<_>>(),
    );
    Ok(BatchReport {
        size,
        similarity_time_pct: time,
        similarity_status_pct: status,
        std_time_pct: std_time,
        std_status_pct: std_status,
    })
}

/// Paired traces of one run.
#[derive(Debug, Clone, Copy)]
pub struct RunPair<'a> {
    pub plan: &'a RunPlan,
    pub twin: &'a Trace,
    pub device: &'a Trace,
}

/// Aggregates run reports (mean and standard deviation across runs) and
/// attaches batch summaries.
pub fn report(
    runs: &[RunPair<'_>],
    batches: Vec<BatchReport>,
    cfg: &AlignmentConfig,
) -> Result<SimilarityReport, FidelityError> {
    if runs.is_empty() {
        return Err(FidelityError::NoRuns);
    }
    let runs = runs
        .iter()
        .map(|r| run_report(r.plan, r.twin, r.device, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let (mt, st) = mean_std(
        &runs
            .iter()
            .map(|r| r.similarity_time_pct)
            .collect::<Vec<_>>(),
    );
    let (ms, ss) = mean_std(
        &runs
            .iter()
            .map(|r| r.similarity_status_pct)
            .collect::<Vec<_>>(),
    );
    Ok(SimilarityReport {
        runs,
        mean: ChannelStats {
            similarity_time_pct: mt,
            similarity_status_pct: ms,
        },
        std: ChannelStats {
            similarity_time_pct: st,
            similarity_status_pct: ss,
        },
        batches,
    })
}

fn opt(p: Option<f64>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

impl SimilarityReport {
    /// CSV mirror of the JSON report: one row per run, then one per batch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,hours,rate,size,similarity_time_pct,similarity_status_pct,std_time_pct,std_status_pct,p_wilcoxon,p_fisher\n");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "run,{},{},,{},{},,,{},{}",
                r.hours,
                r.rate,
                r.similarity_time_pct,
                r.similarity_status_pct,
                opt(r.p_wilcoxon),
                r.p_fisher
            );
        }
        let _ = writeln!(
            s,
            "mean,,,,{},{},{},{},,",
            self.mean.similarity_time_pct,
            self.mean.similarity_status_pct,
            self.std.similarity_time_pct,
            self.std.similarity_status_pct
        );
        for b in &self.batches {
            let _ = writeln!(
                s,
                "batch,,,{},{},{},{},{},,",
                b.size,
                b.similarity_time_pct,
                b.similarity_status_pct,
                b.std_time_pct,
                b.std_status_pct
            );
        }
        s
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), FidelityError> {
        let io = |e: std::io::Error| FidelityError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let json =
            serde_json::to_string_pretty(self).map_err(|e| FidelityError::Io(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()).map_err(io)
    }
}
