use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentResult, Provenance, SlopeRecord, StageTimes};
use crate::error::Result;

pub const CSV_HEADER: [&str; 13] = [
    "bench",
    "dist",
    "d",
    "func",
    "noise",
    "method",
    "n",
    "l",
    "j",
    "statistic",
    "spread",
    "count",
    "failed",
];

fn opt(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell; absent levels or scales are empty fields.
pub fn write_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.records {
        let c = &r.cell;
        w.write_record([
            result.bench.clone(),
            serde_json::to_value(c.dist)?
                .as_str()
                .unwrap_or_default()
                .to_owned(),
            c.d.to_string(),
            c.func.clone(),
            format!("{:?}", c.noise),
            c.method.as_str().to_owned(),
            c.n.to_string(),
            opt(c.l),
            opt(c.j),
            format!("{:?}", r.statistic),
            format!("{:?}", r.spread),
            r.count.to_string(),
            r.failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run summary written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub bench: String,
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub provenance: Provenance,
    pub wall_seconds: f64,
    pub stage_seconds: StageTimes,
    pub cells: usize,
    pub failed_replicates: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub slopes: Vec<SlopeRecord>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, result: &ExperimentResult) -> Self {
        Manifest {
            bench: result.bench.clone(),
            config: cfg.clone(),
            base_seed: cfg.base_seed,
            provenance: result.provenance.clone(),
            wall_seconds: result.wall_seconds,
            stage_seconds: result.stage_seconds,
            cells: result.records.len(),
            failed_replicates: result.records.iter().map(|r| r.failed).sum(),
            slopes: result.slopes.clone(),
        }
    }
}

pub fn write_manifest<W: Write>(manifest: &Manifest, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, manifest)?;
    writeln!(out)?;
    Ok(())
}
