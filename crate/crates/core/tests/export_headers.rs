//! Golden headers of every CSV the tool writes. Changing one of these is a
//! schema change for downstream plotting scripts.

use mgtune::campaign::{CampaignConfig, ControllerKind, OptimizerKind};
use mgtune::export::*;
use mgtune::fopid::{build_controller, ControllerParams, OustaloupSpec};
use mgtune::microgrid::{simulate, Scenario};
use mgtune::stochastic::generate;

fn header_of(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn golden_headers() {
    assert_eq!(TRACE_HEADER.join(","), "t,delta_f,u,delta_p,p_wtg,p_pv,p_fc,p_deg,p_fess,p_bess,p_load");
    assert_eq!(GATES_HEADER.join(","), "t,state");
    assert_eq!(HISTORY_HEADER.join(","), "eval_index,Kp,Ki,Kd,lambda,mu,J_mean,best_so_far");
    assert_eq!(COMPARE_HEADER.join(","), "optimizer,controller,J_min,J_mean,J_std,J_median,Kp,Ki,Kd,lambda,mu");
    assert_eq!(CONVERGENCE_HEADER.join(","), "optimizer,controller,eval_index,mean,median,best,worst");
    assert_eq!(ROBUSTNESS_HEADER.join(","), "parameter,fraction,controller,J_increase,J_decrease");
    assert_eq!(PROFILES_HEADER.join(","), "t,P_wind,P_solar,P_load");
}

#[test]
fn written_files_start_with_their_header_and_reparse() {
    let sc = Scenario { t_end: 5.0, ..Scenario::default() };
    let mut c = build_controller(ControllerParams::pid(1.0, 1.0, 0.2), &OustaloupSpec::default()).unwrap();
    let tr = simulate(&sc, &mut c, 3).unwrap();
    let mut buf = vec![];
    write_trace(&mut buf, &tr).unwrap();
    assert_eq!(header_of(&buf), TRACE_HEADER.join(","));
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), tr.len());
    for (row, df) in rows.iter().zip(&tr.delta_f) {
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), df.to_bits());
    }

    let series = |p| generate(p, sc.t_end, sc.dt, 3).unwrap();
    let mut buf = vec![];
    write_profiles(&mut buf, sc.dt, &series(&sc.wind), &series(&sc.solar), &series(&sc.load)).unwrap();
    assert_eq!(header_of(&buf), PROFILES_HEADER.join(","));
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), tr.len() + 1);
}

#[test]
fn history_rows_follow_the_campaign() {
    let mut cfg = CampaignConfig {
        controller: ControllerKind::Pid,
        optimizer: OptimizerKind::Ga,
        budget: 20,
        ..CampaignConfig::default()
    };
    for (k, v) in [("t_end", "20"), ("t_min", "5"), ("t_max", "20"), ("n_rep", "2")] {
        cfg.set_override(k, v).unwrap();
    }
    let run = mgtune::campaign::run_campaign(&cfg).unwrap();
    let mut buf = vec![];
    write_history(&mut buf, &run).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), HISTORY_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
        assert_eq!(&row[4], "1");
        assert_eq!(&row[5], "1");
        assert_eq!(row[7].parse::<f64>().unwrap(), run.history.best_so_far[i]);
    }
}
