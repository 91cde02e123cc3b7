//! Waveform CSV and flat report documents.

use std::io::Write;

use serde_json::{Map, Value};

use super::params::{ConverterParams, Gates};
use super::sim::{Trace, WaveformRecord};
use super::steady::SteadyStateReport;
use crate::error::Result;
use crate::json_number;

pub const WAVEFORM_CSV_HEADER: [&str; 13] = [
    "time_s", "mode", "i_lm_a", "i_lr_a", "v_ds1_v", "v_cc_v", "i_lo_a", "v_co_v", "i_d3_a",
    "i_d4_a", "v_n1_v", "gate_s1", "gate_s2",
];

fn waveform_row(r: &WaveformRecord) -> [String; 13] {
    let f = |v: f64| format!("{v:.12e}");
    let s = &r.state;
    [
        f(r.time),
        r.mode.number().to_string(),
        f(s.i_lm),
        f(s.i_lr),
        f(s.v_ds1),
        f(s.v_cc),
        f(s.i_lo),
        f(s.v_co),
        f(r.i_d3),
        f(r.i_d4),
        f(r.v_n1),
        u8::from(r.gate_s1).to_string(),
        u8::from(r.gate_s2).to_string(),
    ]
}

/// One row per recorded sample plus a closing row at the trace end.
/// Mode 0 marks the hard-switch fallback.
pub fn write_waveform_csv<W: Write>(trace: &Trace, p: &ConverterParams, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WAVEFORM_CSV_HEADER)?;
    for r in &trace.records {
        w.write_record(waveform_row(r))?;
    }
    if let Some(last) = trace.records.last() {
        if trace.end_time > last.time {
            let gates = Gates {
                s1: last.gate_s1,
                s2: last.gate_s2,
            };
            let end = WaveformRecord::new(p, trace.end_time, trace.end_state, last.topology, gates);
            w.write_record(waveform_row(&end))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Report as a single-level JSON object with dotted keys for grouped values.
pub fn report_json(r: &SteadyStateReport) -> Value {
    let mut m = Map::new();
    let num = |m: &mut Map<String, Value>, k: &str, v: f64| {
        m.insert(k.to_string(), json_number(v));
    };
    m.insert("converged".into(), r.converged.into());
    m.insert("cycles_used".into(), r.cycles_used.into());
    num(&mut m, "residual", r.residual);
    num(&mut m, "tolerance", r.tolerance);
    num(&mut m, "v_cc_mean", r.v_cc_mean);
    num(&mut m, "v_ds1_peak", r.v_ds1_peak);
    num(&mut m, "v_out_mean", r.v_out_mean);
    num(&mut m, "i_out_mean", r.i_out_mean);
    m.insert(
        "i_lr_at_mode6_entry".into(),
        r.i_lr_at_mode6_entry.map_or(Value::Null, json_number),
    );
    for (name, v) in [("zvs_s1", &r.zvs_s1), ("zvs_s2", &r.zvs_s2)] {
        m.insert(name.into(), v.zvs.into());
        num(
            &mut m,
            &format!("{name}.body_diode_conduction_s"),
            v.body_diode_conduction,
        );
        num(&mut m, &format!("{name}.turn_on_voltage_v"), v.turn_on_voltage);
    }
    num(&mut m, "p_in", r.p_in);
    num(&mut m, "p_out", r.p_out);
    m.insert(
        "efficiency".into(),
        r.efficiency.map_or(Value::Null, json_number),
    );
    for (k, v) in r.loss_breakdown.entries() {
        num(&mut m, &format!("loss.{k}"), v);
    }
    num(&mut m, "loss.total", r.loss_breakdown.total());
    let b = &r.balances;
    for (k, v) in [
        ("volt_seconds", b.volt_seconds),
        ("volt_second_residual", b.volt_second_residual),
        ("clamp_charge_net", b.clamp_charge_net),
        ("clamp_charge_residual", b.clamp_charge_residual),
        ("output_charge_net", b.output_charge_net),
        ("output_charge_residual", b.output_charge_residual),
        ("stored_energy_change", b.stored_energy_change),
        ("energy_residual", b.energy_residual),
    ] {
        num(&mut m, &format!("balance.{k}"), v);
    }
    let seq: Vec<String> = r.mode_sequence.iter().map(|m| m.number().to_string()).collect();
    m.insert("mode_sequence".into(), seq.join(",").into());
    m.insert("hard_switched".into(), r.hard_switched.into());
    let x = &r.boundary_state;
    for (k, v) in [
        ("i_lm", x.i_lm),
        ("i_lr", x.i_lr),
        ("v_ds1", x.v_ds1),
        ("v_cc", x.v_cc),
        ("i_lo", x.i_lo),
        ("v_co", x.v_co),
    ] {
        num(&mut m, &format!("boundary.{k}"), v);
    }
    Value::Object(m)
}
