//! Event-driven integration of the switched circuit.
//!
//! Each topology is advanced with fixed-step classical RK4. Gate edges are hit
//! exactly by truncating the step; guard crossings are bracketed inside a step
//! and localized by bisection on the sub-step length.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::mode::{resolve, Guard, GuardKind, HardSwitch, ModeId, ModeSystem, Topology};
use super::params::{ConverterParams, GateEdge, GateSchedule, Gates};
use super::state::CircuitState;
use crate::error::{Error, Result};

/// Depth by which a localized event state is placed past its guard surface.
const GUARD_MARGIN: f64 = 1e-9;

/// Integration step and event-localization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// RK4 step; defaults to `min(Ts/2000, T_res/50)`.
    pub max_step: Option<f64>,
    /// Upper bound on the width of the bracket around a guard crossing.
    pub event_tolerance: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            max_step: None,
            event_tolerance: 1e-13,
        }
    }
}

impl StepControl {
    pub fn step_for(&self, p: &ConverterParams) -> f64 {
        self.max_step.unwrap_or_else(|| p.default_step())
    }
}

/// One sample of the simulated waveforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    pub time: f64,
    pub mode: ModeId,
    pub state: CircuitState,
    pub i_d3: f64,
    pub i_d4: f64,
    pub v_n1: f64,
    pub v_n2: f64,
    pub gate_s1: bool,
    pub gate_s2: bool,
    /// Conduction pattern in force from this sample until the next one.
    pub topology: Topology,
}

impl WaveformRecord {
    pub fn new(
        p: &ConverterParams,
        time: f64,
        state: CircuitState,
        topology: Topology,
        gates: Gates,
    ) -> Self {
        let out = topology.outputs(p, &state);
        Self {
            time,
            mode: topology.mode(&state),
            state,
            i_d3: out.i_d3,
            i_d4: out.i_d4,
            v_n1: out.v_n1,
            v_n2: out.v_n2,
            gate_s1: gates.s1,
            gate_s2: gates.s2,
            topology,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransitionCause {
    Gate(GateEdge),
    Guard(GuardKindTag),
    /// Topology re-resolved after a forced turn-on.
    HardSwitch,
}

/// Serializable mirror of [`GuardKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuardKindTag {
    ReachClamp,
    ReachZero,
    BodyDiodeOff,
    LeakageReversal,
    ForwardDiodeOff,
    FreewheelDiodeOff,
    ForwardDiodeOn,
    FreewheelDiodeOn,
    OutputCurrentZero,
}

impl From<GuardKind> for GuardKindTag {
    fn from(k: GuardKind) -> Self {
        match k {
            GuardKind::ReachClamp => Self::ReachClamp,
            GuardKind::ReachZero => Self::ReachZero,
            GuardKind::BodyDiodeOff => Self::BodyDiodeOff,
            GuardKind::LeakageReversal => Self::LeakageReversal,
            GuardKind::ForwardDiodeOff => Self::ForwardDiodeOff,
            GuardKind::FreewheelDiodeOff => Self::FreewheelDiodeOff,
            GuardKind::ForwardDiodeOn => Self::ForwardDiodeOn,
            GuardKind::FreewheelDiodeOn => Self::FreewheelDiodeOn,
            GuardKind::OutputCurrentZero => Self::OutputCurrentZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub time: f64,
    pub from: ModeId,
    pub to: ModeId,
    pub cause: TransitionCause,
    /// State just before the transition is applied.
    pub before: CircuitState,
    /// State after the transition; differs from `before` only on a forced turn-on.
    pub after: CircuitState,
}

impl TransitionEvent {
    /// Largest change of any state entry across this transition.
    pub fn jump(&self) -> f64 {
        (self.after.to_vector() - self.before.to_vector()).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSwitchEvent {
    pub time: f64,
    pub event: HardSwitch,
}

/// Waveforms and events of a contiguous run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub start_time: f64,
    pub end_time: f64,
    pub start_state: CircuitState,
    pub end_state: CircuitState,
    pub records: Vec<WaveformRecord>,
    pub events: Vec<TransitionEvent>,
    pub hard_switches: Vec<HardSwitchEvent>,
}

impl Trace {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Mode labels in order of occurrence, with repeats merged.
    pub fn mode_sequence(&self) -> Vec<ModeId> {
        let mut seq: Vec<ModeId> = Vec::new();
        for r in &self.records {
            if seq.last() != Some(&r.mode) {
                seq.push(r.mode);
            }
        }
        seq
    }

    fn append(&mut self, other: Trace) {
        if self.records.is_empty() && self.events.is_empty() {
            self.start_time = other.start_time;
            self.start_state = other.start_state;
        }
        self.end_time = other.end_time;
        self.end_state = other.end_state;
        self.records.extend(other.records);
        self.events.extend(other.events);
        self.hard_switches.extend(other.hard_switches);
    }
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trace: Trace,
    /// State at every period boundary, starting with the initial state.
    pub boundaries: Vec<CircuitState>,
}

fn rk4(sys: &ModeSystem, x: &Vector6<f64>, h: f64) -> Vector6<f64> {
    let k1 = sys.derivative(x);
    let k2 = sys.derivative(&(x + k1 * (0.5 * h)));
    let k3 = sys.derivative(&(x + k2 * (0.5 * h)));
    let k4 = sys.derivative(&(x + k3 * h));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Stateful period-by-period integrator.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ConverterParams,
    schedule: GateSchedule,
    step: f64,
    event_tolerance: f64,
    systems: HashMap<Topology, ModeSystem>,
    state: CircuitState,
    topology: Option<Topology>,
    periods_done: u64,
}

impl Simulator {
    pub fn new(
        params: ConverterParams,
        initial: CircuitState,
        control: StepControl,
    ) -> Result<Self> {
        params.validate()?;
        if !initial.is_finite() {
            return Err(Error::Precondition("initial state must be finite".into()));
        }
        let step = control.step_for(&params);
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "max_step",
                reason: format!("step must be positive, got {step}"),
            });
        }
        if !(control.event_tolerance > 0.0) {
            return Err(Error::InvalidParameter {
                field: "event_tolerance",
                reason: "must be positive".into(),
            });
        }
        Ok(Self {
            schedule: params.schedule(),
            params,
            step,
            event_tolerance: control.event_tolerance,
            systems: HashMap::new(),
            state: initial,
            topology: None,
            periods_done: 0,
        })
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn state(&self) -> CircuitState {
        self.state
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Restart from `state` at the next period boundary.
    pub fn reset(&mut self, state: CircuitState) {
        self.state = state;
        self.topology = None;
    }

    fn system(&mut self, topo: Topology) -> ModeSystem {
        let p = self.params;
        *self.systems.entry(topo).or_insert_with(|| topo.system(&p))
    }

    /// Integrate one full switching period, returning its trace.
    pub fn run_period(&mut self, record: bool) -> Result<Trace> {
        let p = self.params;
        let sched = self.schedule;
        let ts = sched.period;
        let t0 = self.periods_done as f64 * ts;
        let mut trace = Trace {
            start_time: t0,
            end_time: t0 + ts,
            start_state: self.state,
            ..Trace::default()
        };

        let edges = [
            (sched.s1_off, GateEdge::S1Off),
            (sched.s2_on, GateEdge::S2On),
            (sched.s2_off, GateEdge::S2Off),
        ];

        let mut x = self.state;
        let mut tau = 0.0_f64;
        let mut gates = sched.gates_at(0.0);
        let prev_topo = self.topology;
        let mut topo = self.apply_transition(
            &mut trace,
            prev_topo,
            &mut x,
            gates,
            t0,
            TransitionCause::Gate(GateEdge::S1On),
            None,
        )?;
        let mut guards = topo.guards(&p, &x);
        if record {
            trace
                .records
                .push(WaveformRecord::new(&p, t0, x, topo, gates));
        }

        let mut edge_idx = 0;
        while tau < ts {
            // Skip edges that coincide with the current time (zero-length intervals).
            while edge_idx < edges.len() && edges[edge_idx].0 <= tau {
                edge_idx += 1;
            }
            let (next_edge, edge_kind) = if edge_idx < edges.len() {
                (edges[edge_idx].0, Some(edges[edge_idx].1))
            } else {
                (ts, None)
            };
            let reaches_edge = next_edge - tau <= self.step;
            let h = if reaches_edge {
                next_edge - tau
            } else {
                self.step
            };

            let sys = self.system(topo);
            let xv = x.to_vector();
            let x1 = rk4(&sys, &xv, h);
            if !x1.iter().all(|v| v.is_finite()) {
                return Err(Error::Integration {
                    time: t0 + tau,
                    mode: topo.mode(&x).to_string(),
                    detail: "state became non-finite".into(),
                });
            }

            let crossed = |y: &Vector6<f64>, g: &Guard| g.f.eval(&xv) > 0.0 && g.f.eval(y) <= 0.0;
            if let Some(_) = guards.iter().find(|g| crossed(&x1, g)) {
                // Bisect on the sub-step length for the earliest crossing.
                let mut lo = 0.0;
                let mut hi = h;
                let width = self.event_tolerance * 1e-2;
                while hi - lo > width {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let xm = rk4(&sys, &xv, mid);
                    if guards.iter().any(|g| crossed(&xm, g)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if hi - lo > self.event_tolerance {
                    return Err(Error::Integration {
                        time: t0 + tau,
                        mode: topo.mode(&x).to_string(),
                        detail: format!(
                            "event bracket did not shrink below {:e} s",
                            self.event_tolerance
                        ),
                    });
                }
                let x_hi = rk4(&sys, &xv, hi);
                let fired = *guards
                    .iter()
                    .find(|g| crossed(&x_hi, g))
                    .unwrap_or(&guards[0]);
                // Linear interpolation of the guard inside the final bracket keeps
                // the event time a smooth function of the state.
                let g_lo = fired.f.eval(&rk4(&sys, &xv, lo));
                let g_hi = fired.f.eval(&x_hi);
                let hit = if g_lo > 0.0 && g_hi <= 0.0 {
                    lo + (hi - lo) * g_lo / (g_lo - g_hi)
                } else {
                    hi
                };
                let mut xe = rk4(&sys, &xv, hit);
                // Place the state just past the guard surface so the successor is unambiguous.
                let g = fired.f.eval(&xe);
                let norm2 = fired.f.coeffs.norm_squared();
                if g > -GUARD_MARGIN && norm2 > 0.0 {
                    xe -= fired.f.coeffs * ((g + GUARD_MARGIN) / norm2);
                }
                let at_edge = reaches_edge && hi == h;
                tau = if at_edge { next_edge } else { tau + hit };
                x = CircuitState::from_vector(&xe);
                if tau >= ts {
                    break;
                }
                gates = sched.gates_at(tau);
                let cause = if at_edge {
                    TransitionCause::Gate(edge_kind.expect("period end handled above"))
                } else {
                    TransitionCause::Guard(fired.kind.into())
                };
                let before = topo;
                topo = self.apply_transition(
                    &mut trace,
                    Some(topo),
                    &mut x,
                    gates,
                    t0 + tau,
                    cause,
                    Some(CircuitState::from_vector(&xv)),
                )?;
                let relabel_only = fired.kind == GuardKind::LeakageReversal;
                if topo == before && !relabel_only && !at_edge {
                    let g_now = fired.f.eval(&x.to_vector());
                    return Err(Error::Integration {
                        time: t0 + tau,
                        mode: topo.mode(&x).to_string(),
                        detail: format!(
                            "guard {:?} crossed (value {g_now:.3e}) but no consistent successor topology exists; state {:?}",
                            fired.kind, x
                        ),
                    });
                }
                guards = topo.guards(&p, &x);
            } else {
                tau = if reaches_edge { next_edge } else { tau + h };
                x = CircuitState::from_vector(&x1);
                if tau >= ts {
                    break;
                }
                if reaches_edge {
                    gates = sched.gates_at(tau);
                    let cause = TransitionCause::Gate(edge_kind.expect("period end handled above"));
                    topo = self.apply_transition(
                        &mut trace,
                        Some(topo),
                        &mut x,
                        gates,
                        t0 + tau,
                        cause,
                        None,
                    )?;
                    guards = topo.guards(&p, &x);
                }
            }
            if record {
                trace
                    .records
                    .push(WaveformRecord::new(&p, t0 + tau, x, topo, gates));
            }
        }

        self.state = x;
        self.topology = Some(topo);
        self.periods_done += 1;
        trace.end_state = x;
        Ok(trace)
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_transition(
        &mut self,
        trace: &mut Trace,
        prev: Option<Topology>,
        x: &mut CircuitState,
        gates: Gates,
        time: f64,
        cause: TransitionCause,
        label_from: Option<CircuitState>,
    ) -> Result<Topology> {
        let before = *x;
        // A guard hit is labelled from the state before the crossing, since
        // `x` has already been placed past the guard surface.
        let from_mode = prev.map(|t| t.mode(&label_from.unwrap_or(before)));
        let (topo, hard) = resolve(&self.params, x, gates);
        if !x.is_finite() {
            return Err(Error::Integration {
                time,
                mode: topo.mode(x).to_string(),
                detail: "state became non-finite during commutation".into(),
            });
        }
        let to_mode = topo.mode(x);
        if let Some(h) = hard {
            trace.hard_switches.push(HardSwitchEvent { time, event: h });
            if let Some(from) = from_mode {
                trace.events.push(TransitionEvent {
                    time,
                    from,
                    to: ModeId::HardSwitchFallback,
                    cause,
                    before,
                    after: *x,
                });
            }
            trace.events.push(TransitionEvent {
                time,
                from: ModeId::HardSwitchFallback,
                to: to_mode,
                cause: TransitionCause::HardSwitch,
                before: *x,
                after: *x,
            });
        } else if let Some(from) = from_mode {
            if from != to_mode || prev != Some(topo) {
                trace.events.push(TransitionEvent {
                    time,
                    from,
                    to: to_mode,
                    cause,
                    before,
                    after: *x,
                });
            }
        }
        Ok(topo)
    }
}

/// Integrate `cycles` switching periods from `initial` (warm start if `None`).
pub fn simulate(
    params: &ConverterParams,
    cycles: usize,
    initial: Option<CircuitState>,
    control: StepControl,
) -> Result<Simulation> {
    if cycles == 0 {
        return Err(Error::Precondition("at least one cycle is required".into()));
    }
    let init = initial.unwrap_or_else(|| params.warm_start());
    let mut sim = Simulator::new(*params, init, control)?;
    let mut trace = Trace::default();
    let mut boundaries = vec![init];
    for _ in 0..cycles {
        let t = sim.run_period(true)?;
        boundaries.push(t.end_state);
        trace.append(t);
    }
    Ok(Simulation { trace, boundaries })
}
