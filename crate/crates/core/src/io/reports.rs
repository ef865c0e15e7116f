//! CSV and JSON writers for training, search and field runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::fieldsim::TelemetryRecord;
use crate::nas::{CandidateResult, ParetoPoint, SearchReport};
use crate::train::History;

pub const HISTORY_HEADER: &str = "epoch,lr,k,loss,ce,activity,l2,val_accuracy,mean_rate";
pub const CANDIDATES_HEADER: &str = "index,key,depth,widths,time_steps,decay_mode,connectivity,skip,\
predicted_energy_j,energy_j,accuracy,mean_input_rho,weight_bytes,peak_activation_bytes,screened,feasible,failure";
pub const TELEMETRY_HEADER: &str = "month,arm,accuracy,energy_mwh,flushes";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_history<W: Write>(w: W, history: &History) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if history.epochs.is_empty() {
        out.write_record(HISTORY_HEADER.split(','))?;
    }
    for e in &history.epochs {
        out.serialize(e)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_candidates<W: Write>(w: W, candidates: &[CandidateResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CANDIDATES_HEADER.split(','))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in candidates {
        let d = &c.descriptor;
        let widths: Vec<String> = d.widths.iter().map(|w| w.to_string()).collect();
        let rho = if c.rho_input.is_empty() {
            None
        } else {
            Some(c.rho_input.iter().sum::<f64>() / c.rho_input.len() as f64)
        };
        out.write_record([
            c.index.to_string(),
            d.key(),
            d.depth.to_string(),
            widths.join("x"),
            d.time_steps.to_string(),
            d.decay_mode.to_string(),
            d.connectivity.to_string(),
            d.skip.to_string(),
            c.predicted_energy.to_string(),
            opt(c.energy.map(|e| e.total)),
            opt(c.accuracy),
            opt(rho),
            c.footprint.weight_bytes.to_string(),
            c.footprint.peak_activation_bytes.to_string(),
            c.screened.to_string(),
            c.feasible.to_string(),
            c.failure.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FrontDoc<'a> {
    front: &'a [ParetoPoint],
    knee: Option<&'a ParetoPoint>,
}

pub fn write_front<W: Write>(w: W, report: &SearchReport) -> Result<()> {
    let doc = FrontDoc {
        front: &report.front,
        knee: report.knee.as_ref(),
    };
    Ok(serde_json::to_writer_pretty(w, &doc)?)
}

/// One row per month and arm.
pub fn write_telemetry<W: Write>(w: W, telemetry: &[TelemetryRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TELEMETRY_HEADER.split(','))?;
    for r in telemetry {
        out.write_record([
            r.month.to_string(),
            "frozen".into(),
            r.accuracy_frozen.to_string(),
            r.energy_frozen_mwh.to_string(),
            "0".into(),
        ])?;
        if let Some(acc) = r.accuracy_adapt {
            out.write_record([
                r.month.to_string(),
                "adapt".into(),
                acc.to_string(),
                r.energy_mwh.to_string(),
                r.flushes.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_history(path: &Path, history: &History) -> Result<()> {
    write_history(create(path)?, history)
}

pub fn save_candidates(path: &Path, candidates: &[CandidateResult]) -> Result<()> {
    write_candidates(create(path)?, candidates)
}

pub fn save_front(path: &Path, report: &SearchReport) -> Result<()> {
    write_front(create(path)?, report)
}

pub fn save_telemetry(path: &Path, telemetry: &[TelemetryRecord]) -> Result<()> {
    write_telemetry(create(path)?, telemetry)
}
