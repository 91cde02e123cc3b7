//! Post-processing of simulated periods: ZVS evidence, loss accounting and
//! balance residuals.

use serde::{Deserialize, Serialize};

use super::mode::{PrimaryConduction, Switch, Topology, VOLTAGE_TOL};
use super::params::ConverterParams;
use super::sim::{Trace, WaveformRecord};
use super::state::CircuitState;
use crate::error::{Error, Result};

/// One integration interval of a trace: left sample, right-endpoint state, length.
struct Interval<'a> {
    left: &'a WaveformRecord,
    right: CircuitState,
    dt: f64,
}

fn intervals(trace: &Trace) -> impl Iterator<Item = Interval<'_>> {
    let n = trace.records.len();
    (0..n).filter_map(move |k| {
        let left = &trace.records[k];
        let (t_right, mut right) = if k + 1 < n {
            (trace.records[k + 1].time, trace.records[k + 1].state)
        } else {
            (trace.end_time, trace.end_state)
        };
        // A forced turn-on snaps the state; the interval ends on the pre-snap value.
        if let Some(ev) = trace
            .events
            .iter()
            .find(|e| e.time == t_right && e.jump() > 0.0)
        {
            right = ev.before;
        }
        let dt = t_right - left.time;
        (dt > 0.0).then_some(Interval { left, right, dt })
    })
}

/// Trapezoidal integral of `f(topology, state)` over the trace.
fn integrate(trace: &Trace, f: impl Fn(&Topology, &CircuitState) -> f64) -> f64 {
    intervals(trace)
        .map(|iv| {
            0.5 * iv.dt * (f(&iv.left.topology, &iv.left.state) + f(&iv.left.topology, &iv.right))
        })
        .sum()
}

fn mean(trace: &Trace, f: impl Fn(&Topology, &CircuitState) -> f64) -> f64 {
    let d = trace.duration();
    if d > 0.0 {
        integrate(trace, f) / d
    } else {
        0.0
    }
}

/// Zero-voltage turn-on evidence for one switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZvsVerdict {
    pub zvs: bool,
    /// Anti-parallel diode conduction immediately preceding the gate command (s).
    pub body_diode_conduction: f64,
    /// Voltage the switch was turned on against; zero under ZVS.
    pub turn_on_voltage: f64,
    /// Gate turn-on instants inspected.
    pub turn_on_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZvsCheck {
    pub s1: ZvsVerdict,
    pub s2: ZvsVerdict,
}

/// Duration of contiguous `primary` conduction ending at record index `end` (exclusive),
/// wrapping around the trace when it is a full period.
fn conduction_before(trace: &Trace, end: usize, primary: PrimaryConduction) -> f64 {
    let n = trace.records.len();
    let len = |k: usize| {
        if k + 1 < n {
            trace.records[k + 1].time - trace.records[k].time
        } else {
            trace.end_time - trace.records[k].time
        }
    };
    let mut total = 0.0;
    for step in 1..=n {
        let k = (end + n - step) % n;
        if trace.records[k].topology.primary != primary {
            break;
        }
        total += len(k);
    }
    total
}

fn verdict_for(trace: &Trace, switch: Switch) -> ZvsVerdict {
    let n = trace.records.len();
    let gate = |r: &WaveformRecord| match switch {
        Switch::S1 => r.gate_s1,
        Switch::S2 => r.gate_s2,
    };
    let diode = match switch {
        Switch::S1 => PrimaryConduction::S1Diode,
        Switch::S2 => PrimaryConduction::S2Diode,
    };
    let mut verdict = ZvsVerdict {
        zvs: false,
        body_diode_conduction: 0.0,
        turn_on_voltage: 0.0,
        turn_on_events: 0,
    };
    if n == 0 {
        return verdict;
    }
    let mut all_soft = true;
    let mut min_conduction = f64::INFINITY;
    for k in 0..n {
        let prev = if k == 0 { n - 1 } else { k - 1 };
        if !(gate(&trace.records[k]) && !gate(&trace.records[prev])) {
            continue;
        }
        let t_on = trace.records[k].time;
        // For the wrapped edge the state that meets the gate is the end state.
        let pre = if k == 0 {
            trace.end_state
        } else {
            trace
                .events
                .iter()
                .find(|e| e.time == t_on)
                .map(|e| e.before)
                .unwrap_or(trace.records[k].state)
        };
        let hard = trace
            .hard_switches
            .iter()
            .any(|h| h.event.switch == switch && h.time == t_on && k != 0);
        let v_on = match switch {
            Switch::S1 => pre.v_ds1.max(0.0),
            Switch::S2 => (pre.v_cc - pre.v_ds1).max(0.0),
        };
        let conduction = conduction_before(trace, k, diode);
        let soft = !hard && v_on <= VOLTAGE_TOL && conduction > 0.0;
        all_soft &= soft;
        min_conduction = min_conduction.min(conduction);
        verdict.turn_on_voltage = verdict.turn_on_voltage.max(v_on);
        verdict.turn_on_events += 1;
    }
    if verdict.turn_on_events > 0 {
        verdict.zvs = all_soft;
        verdict.body_diode_conduction = min_conduction;
    }
    verdict
}

/// ZVS verdicts for both switches, evaluated over every gate turn-on in the trace.
pub fn evaluate_zvs(trace: &Trace) -> ZvsCheck {
    ZvsCheck {
        s1: verdict_for(trace, Switch::S1),
        s2: verdict_for(trace, Switch::S2),
    }
}

/// Per-element dissipation over a period (W).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub s1_conduction: f64,
    pub s2_conduction: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub primary_winding: f64,
    pub secondary_winding: f64,
    /// Capacitive turn-on loss from forced commutations.
    pub hard_switching: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.s1_conduction
            + self.s2_conduction
            + self.d1
            + self.d2
            + self.d3
            + self.d4
            + self.primary_winding
            + self.secondary_winding
            + self.hard_switching
    }

    pub fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("s1_conduction", self.s1_conduction),
            ("s2_conduction", self.s2_conduction),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
            ("primary_winding", self.primary_winding),
            ("secondary_winding", self.secondary_winding),
            ("hard_switching", self.hard_switching),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAccount {
    /// Mean power drawn from the input source.
    pub p_in: f64,
    /// Mean power delivered to the load.
    pub p_out: f64,
    pub losses: LossBreakdown,
    pub efficiency: f64,
}

/// Integrate device dissipation over the trace and compare with source and load power.
pub fn loss_breakdown(trace: &Trace, p: &ConverterParams) -> Result<PowerAccount> {
    let d = trace.duration();
    if !(d > 0.0) {
        return Err(Error::Precondition("trace covers no time".into()));
    }
    let vf = p.vf_diode;
    let outputs = |t: &Topology, x: &CircuitState| t.outputs(p, x);
    let on = |prim: PrimaryConduction| move |t: &Topology| t.primary == prim;
    let s1 = on(PrimaryConduction::S1Channel);
    let s2 = on(PrimaryConduction::S2Channel);
    let d1 = on(PrimaryConduction::S1Diode);
    let d2 = on(PrimaryConduction::S2Diode);
    let losses = LossBreakdown {
        s1_conduction: mean(trace, |t, x| {
            if s1(t) {
                p.rds_on_s1 * x.i_lr * x.i_lr
            } else {
                0.0
            }
        }),
        s2_conduction: mean(trace, |t, x| {
            if s2(t) {
                p.rds_on_s2 * x.i_lr * x.i_lr
            } else {
                0.0
            }
        }),
        d1: mean(trace, |t, x| if d1(t) { vf * x.i_lr.abs() } else { 0.0 }),
        d2: mean(trace, |t, x| if d2(t) { vf * x.i_lr.abs() } else { 0.0 }),
        d3: mean(trace, |t, x| vf * outputs(t, x).i_d3.max(0.0)),
        d4: mean(trace, |t, x| vf * outputs(t, x).i_d4.max(0.0)),
        primary_winding: mean(trace, |_, x| p.r_pri * x.i_lr * x.i_lr),
        secondary_winding: mean(trace, |t, x| {
            let i = outputs(t, x).i_d3;
            p.r_sec * i * i
        }),
        hard_switching: trace
            .hard_switches
            .iter()
            .map(|h| h.event.energy)
            .sum::<f64>()
            / d,
    };
    let p_in = mean(trace, |_, x| p.vb * x.i_lr);
    let p_out = mean(trace, |_, x| x.v_co * x.v_co / p.rload);
    if p_in.abs() < 1e-15 {
        return Err(Error::UndefinedEfficiency(p_in));
    }
    Ok(PowerAccount {
        p_in,
        p_out,
        losses,
        efficiency: p_out / p_in,
    })
}

/// Steady-state balance residuals over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `∫ v_n1 dt` over the trace (V·s).
    pub volt_seconds: f64,
    /// `|∫ v_n1 dt| / (vb·d·Ts)`.
    pub volt_second_residual: f64,
    /// Net clamp capacitor charge over the trace (C).
    pub clamp_charge_net: f64,
    /// Peak-to-peak clamp capacitor charge within the trace (C).
    pub clamp_charge_swing: f64,
    pub clamp_charge_residual: f64,
    pub output_charge_net: f64,
    pub output_charge_swing: f64,
    pub output_charge_residual: f64,
    /// Change of stored energy in all reactive elements over the trace (J).
    pub stored_energy_change: f64,
    /// `|p_in − p_out − Σ losses| / p_in`; NaN when no input power flows.
    pub energy_residual: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num.abs() / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn stored_energy(p: &ConverterParams, x: &CircuitState) -> f64 {
    0.5 * (p.lm * x.i_lm * x.i_lm
        + p.lr * x.i_lr * x.i_lr
        + p.cds * x.v_ds1 * x.v_ds1
        + p.cc * x.v_cc * x.v_cc
        + p.lo * x.i_lo * x.i_lo
        + p.co * x.v_co * x.v_co)
}

pub fn verify_balances(trace: &Trace, p: &ConverterParams) -> BalanceReport {
    let volt_seconds = integrate(trace, |t, x| t.outputs(p, x).v_n1);
    let norm = p.vb * p.d * trace.duration();

    let states = trace
        .records
        .iter()
        .map(|r| r.state)
        .chain(std::iter::once(trace.end_state));
    let (mut cc_min, mut cc_max, mut co_min, mut co_max) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for s in states {
        cc_min = cc_min.min(s.v_cc);
        cc_max = cc_max.max(s.v_cc);
        co_min = co_min.min(s.v_co);
        co_max = co_max.max(s.v_co);
    }
    let clamp_charge_net = p.cc * (trace.end_state.v_cc - trace.start_state.v_cc);
    let clamp_charge_swing = p.cc * (cc_max - cc_min).max(0.0);
    let output_charge_net = p.co * (trace.end_state.v_co - trace.start_state.v_co);
    let output_charge_swing = p.co * (co_max - co_min).max(0.0);
    let stored_energy_change =
        stored_energy(p, &trace.end_state) - stored_energy(p, &trace.start_state);
    let energy_residual = match loss_breakdown(trace, p) {
        Ok(acc) => ratio(acc.p_in - acc.p_out - acc.losses.total(), acc.p_in.abs()),
        Err(_) => f64::NAN,
    };
    BalanceReport {
        volt_seconds,
        volt_second_residual: ratio(volt_seconds, norm),
        clamp_charge_net,
        clamp_charge_swing,
        clamp_charge_residual: ratio(clamp_charge_net, clamp_charge_swing),
        output_charge_net,
        output_charge_swing,
        output_charge_residual: ratio(output_charge_net, output_charge_swing),
        stored_energy_change,
        energy_residual,
    }
}

/// Time averages and extrema of a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub v_cc_mean: f64,
    pub v_ds1_peak: f64,
    pub v_out_mean: f64,
    pub i_out_mean: f64,
    pub v_n1_mean: f64,
}

pub fn period_stats(trace: &Trace, p: &ConverterParams) -> PeriodStats {
    let v_ds1_peak = trace
        .records
        .iter()
        .map(|r| r.state.v_ds1)
        .chain(std::iter::once(trace.end_state.v_ds1))
        .fold(f64::NEG_INFINITY, f64::max);
    PeriodStats {
        v_cc_mean: mean(trace, |_, x| x.v_cc),
        v_ds1_peak,
        v_out_mean: mean(trace, |_, x| x.v_co),
        i_out_mean: mean(trace, |_, x| x.v_co / p.rload),
        v_n1_mean: mean(trace, |t, x| t.outputs(p, x).v_n1),
    }
}
