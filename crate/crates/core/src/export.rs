//! CSV and JSON writers for every report. Headers are fixed; floats are
//! written in shortest round-trip form so equal runs give equal bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::campaign::{CampaignResult, CompareRow, ConvergenceRow, RobustnessRow};
use crate::error::{Error, Result};
use crate::kriging::ModelDump;
use crate::microgrid::SimulationTrace;
use crate::stochastic::ProfileSeries;

pub const TRACE_HEADER: [&str; 11] =
    ["t", "delta_f", "u", "delta_p", "p_wtg", "p_pv", "p_fc", "p_deg", "p_fess", "p_bess", "p_load"];
pub const GATES_HEADER: [&str; 2] = ["t", "state"];
pub const HISTORY_HEADER: [&str; 8] = ["eval_index", "Kp", "Ki", "Kd", "lambda", "mu", "J_mean", "best_so_far"];
pub const COMPARE_HEADER: [&str; 11] =
    ["optimizer", "controller", "J_min", "J_mean", "J_std", "J_median", "Kp", "Ki", "Kd", "lambda", "mu"];
pub const CONVERGENCE_HEADER: [&str; 7] = ["optimizer", "controller", "eval_index", "mean", "median", "best", "worst"];
pub const ROBUSTNESS_HEADER: [&str; 5] = ["parameter", "fraction", "controller", "J_increase", "J_decrease"];
pub const PROFILES_HEADER: [&str; 4] = ["t", "P_wind", "P_solar", "P_load"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

pub fn write_trace<W: Write>(w: W, trace: &SimulationTrace) -> Result<()> {
    let mut out = writer(w, &TRACE_HEADER)?;
    for i in 0..trace.len() {
        let row = [
            trace.t[i],
            trace.delta_f[i],
            trace.u[i],
            trace.delta_p[i],
            trace.p_wtg[i],
            trace.p_pv[i],
            trace.p_fc[i],
            trace.p_deg[i],
            trace.p_fess[i],
            trace.p_bess[i],
            trace.p_load[i],
        ];
        out.write_record(row.map(num))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_gates<W: Write>(w: W, trace: &SimulationTrace) -> Result<()> {
    let mut out = writer(w, &GATES_HEADER)?;
    for e in &trace.gate_events {
        out.write_record([num(e.t), (if e.on { "on" } else { "off" }).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per expensive evaluation; PID rows carry `λ = μ = 1`.
pub fn write_history<W: Write>(w: W, run: &CampaignResult) -> Result<()> {
    if run.records.len() != run.history.len() {
        return Err(Error::InvalidParameter("records and history disagree in length".into()));
    }
    let mut out = writer(w, &HISTORY_HEADER)?;
    for (i, (rec, best)) in run.records.iter().zip(&run.history.best_so_far).enumerate() {
        let p = rec.params.as_array().map(num);
        let mut row = vec![(i + 1).to_string()];
        row.extend(p);
        row.push(num(rec.j_mean));
        row.push(num(*best));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_compare<W: Write>(w: W, rows: &[CompareRow]) -> Result<()> {
    let mut out = writer(w, &COMPARE_HEADER)?;
    for r in rows {
        let mut row = vec![r.optimizer.name().to_string(), r.controller.name().to_string()];
        row.extend([r.j_min, r.j_mean, r.j_std, r.j_median].map(num));
        row.extend(r.best_params.as_array().map(num));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(w: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut out = writer(w, &CONVERGENCE_HEADER)?;
    for r in rows {
        let mut row = vec![r.optimizer.name().to_string(), r.controller.name().to_string(), r.eval_index.to_string()];
        row.extend([r.mean, r.median, r.best, r.worst].map(num));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_robustness<W: Write>(w: W, rows: &[RobustnessRow]) -> Result<()> {
    let mut out = writer(w, &ROBUSTNESS_HEADER)?;
    for r in rows {
        out.write_record([
            r.parameter.clone(),
            num(r.fraction),
            r.controller.name().to_string(),
            num(r.j_increase),
            num(r.j_decrease),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_profiles<W: Write>(
    w: W,
    dt: f64,
    wind: &ProfileSeries,
    solar: &ProfileSeries,
    load: &ProfileSeries,
) -> Result<()> {
    let n = wind.power.len();
    if solar.power.len() != n || load.power.len() != n {
        return Err(Error::InvalidParameter("profile series differ in length".into()));
    }
    let mut out = writer(w, &PROFILES_HEADER)?;
    for i in 0..n {
        out.write_record([i as f64 * dt, wind.power[i], solar.power[i], load.power[i]].map(num))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_model_dump<W: Write>(w: W, dump: &ModelDump) -> Result<()> {
    serde_json::to_writer_pretty(w, dump).map_err(|e| Error::Io(e.to_string()))
}

/// Creates `path` (and its parent directories) and hands the file to `f`.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(File) -> Result<()>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    f(File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microgrid::GateEvent;

    fn read(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
        let mut r = csv::Reader::from_reader(bytes);
        let h = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
        (h, rows)
    }

    #[test]
    fn trace_and_gates_round_trip() {
        let trace = SimulationTrace {
            t: vec![0.0, 0.01],
            delta_f: vec![0.0, -1e-3],
            u: vec![0.0, 0.1],
            delta_p: vec![0.0; 2],
            p_wtg: vec![0.1; 2],
            p_pv: vec![0.2; 2],
            p_fc: vec![0.0; 2],
            p_deg: vec![0.0; 2],
            p_fess: vec![0.0; 2],
            p_bess: vec![0.0; 2],
            p_load: vec![0.9; 2],
            gate_events: vec![GateEvent { t: 0.5, on: true }],
            diverged: false,
            dt: 0.01,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let (h, rows) = read(&buf);
        assert_eq!(h, TRACE_HEADER);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), -1e-3);

        let mut buf = Vec::new();
        write_gates(&mut buf, &trace).unwrap();
        let (h, rows) = read(&buf);
        assert_eq!(h, GATES_HEADER);
        assert_eq!(rows, vec![vec!["0.5".to_string(), "on".to_string()]]);
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1 + 0.2, 1.0 / 3.0, 1e-300, 6.02e23, -0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
