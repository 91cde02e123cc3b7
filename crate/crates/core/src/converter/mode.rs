//! Device-conduction topologies of the switched circuit and their affine dynamics.
//!
//! Every topology is linear in the state, so each one reduces to `ẋ = A·x + b`
//! over [`CircuitState`]. Diode and switch commutations are described by affine
//! guard functions of the state; an event fires when a guard falls from a
//! positive value to zero or below.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::params::{ConverterParams, GateSchedule, Gates};
use super::state::CircuitState;

/// Current below which a diode is treated as not conducting.
pub const CURRENT_TOL: f64 = 1e-6;
/// Voltage band used for switch-node crossing decisions.
pub const VOLTAGE_TOL: f64 = 1e-3;

/// The nine operating intervals of a switching period, plus the forced
/// turn-on taken when a gate fires before its zero-voltage condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeId {
    Mode1,
    Mode2,
    Mode3,
    Mode4,
    Mode5,
    Mode6,
    Mode7,
    Mode8,
    Mode9,
    HardSwitchFallback,
}

impl ModeId {
    pub const CYCLE: [ModeId; 9] = [
        ModeId::Mode1,
        ModeId::Mode2,
        ModeId::Mode3,
        ModeId::Mode4,
        ModeId::Mode5,
        ModeId::Mode6,
        ModeId::Mode7,
        ModeId::Mode8,
        ModeId::Mode9,
    ];

    /// 1–9 for the regular modes, 0 for the fallback.
    pub fn number(self) -> u8 {
        match self {
            ModeId::HardSwitchFallback => 0,
            m => Self::CYCLE.iter().position(|&c| c == m).unwrap() as u8 + 1,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            0 => Some(ModeId::HardSwitchFallback),
            1..=9 => Some(Self::CYCLE[n as usize - 1]),
            _ => None,
        }
    }

    /// Conduction pattern this mode stands for when modes are addressed by label.
    pub fn canonical_topology(self) -> Topology {
        use PrimaryConduction::*;
        use SecondaryConduction::*;
        let (primary, secondary) = match self {
            ModeId::Mode1 => (S1Channel, Forward),
            ModeId::Mode2 => (Open, Forward),
            ModeId::Mode3 => (Open, Both),
            ModeId::Mode4 => (S2Diode, Both),
            ModeId::Mode5 => (S2Channel, Freewheel),
            ModeId::Mode6 => (Open, Freewheel),
            ModeId::Mode7 => (Open, Both),
            ModeId::Mode8 => (S1Diode, Both),
            ModeId::Mode9 => (S1Channel, Both),
            ModeId::HardSwitchFallback => (S1Channel, Both),
        };
        Topology { primary, secondary }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeId::HardSwitchFallback => write!(f, "HardSwitchFallback"),
            m => write!(f, "Mode{}", m.number()),
        }
    }
}

/// What holds the main-switch node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimaryConduction {
    /// S1 channel on.
    S1Channel,
    /// S1 body diode (D1) conducting, gates off.
    S1Diode,
    /// Both switches blocking; the node capacitance carries the primary current.
    Open,
    /// S2 body diode (D2) conducting into the clamp capacitor, gates off.
    S2Diode,
    /// S2 channel on, node tied to the clamp capacitor.
    S2Channel,
}

/// Output rectifier state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SecondaryConduction {
    /// Forward diode D3 only.
    Forward,
    /// Freewheeling diode D4 only.
    Freewheel,
    /// D3 and D4 together; the winding is clamped.
    Both,
    /// Neither diode; output inductor current is zero.
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub primary: PrimaryConduction,
    pub secondary: SecondaryConduction,
}

/// Affine dynamics `ẋ = A·x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSystem {
    pub a: Matrix6<f64>,
    pub b: Vector6<f64>,
}

impl ModeSystem {
    pub fn derivative(&self, x: &Vector6<f64>) -> Vector6<f64> {
        self.a * x + self.b
    }
}

/// Affine scalar function of the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub coeffs: Vector6<f64>,
    pub offset: f64,
}

impl Affine {
    fn from_fn(f: impl Fn(&CircuitState) -> f64) -> Self {
        let offset = f(&CircuitState::default());
        let mut coeffs = Vector6::zeros();
        for j in 0..6 {
            let mut e = Vector6::zeros();
            e[j] = 1.0;
            coeffs[j] = f(&CircuitState::from_vector(&e)) - offset;
        }
        Self { coeffs, offset }
    }

    pub fn eval(&self, x: &Vector6<f64>) -> f64 {
        self.coeffs.dot(x) + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardKind {
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

/// Event condition: fires when `f` falls from a positive value to `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guard {
    pub kind: GuardKind,
    pub f: Affine,
}

/// Instantaneous algebraic quantities of a topology.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Outputs {
    /// Voltage across the magnetizing branch (primary winding of the ideal transformer).
    pub v_n1: f64,
    pub v_n2: f64,
    /// Effective switch-node voltage including device drops.
    pub v_sw: f64,
    pub i_d3: f64,
    pub i_d4: f64,
}

impl Topology {
    /// Switch-node voltage seen by the primary loop.
    fn switch_voltage(&self, p: &ConverterParams, x: &CircuitState) -> f64 {
        match self.primary {
            PrimaryConduction::S1Channel => p.rds_on_s1 * x.i_lr,
            PrimaryConduction::S1Diode => -p.vf_diode,
            PrimaryConduction::Open => x.v_ds1,
            PrimaryConduction::S2Diode => x.v_cc + p.vf_diode,
            PrimaryConduction::S2Channel => x.v_cc + p.rds_on_s2 * x.i_lr,
        }
    }

    /// Voltage across the magnetizing branch.
    fn magnetizing_voltage(&self, p: &ConverterParams, x: &CircuitState) -> f64 {
        let v_loop = p.vb - self.switch_voltage(p, x) - p.r_pri * x.i_lr;
        match self.secondary {
            SecondaryConduction::Forward => {
                let g = 1.0 / p.lr + 1.0 / p.lm + 1.0 / (p.n * p.n * p.lo);
                (v_loop / p.lr + (p.vf_diode + p.r_sec * x.i_lo + x.v_co) / (p.n * p.lo)) / g
            }
            SecondaryConduction::Freewheel | SecondaryConduction::Blocked => {
                v_loop * p.lm / (p.lm + p.lr)
            }
            SecondaryConduction::Both => p.n * p.n * p.r_sec * (x.i_lr - x.i_lm),
        }
    }

    pub fn outputs(&self, p: &ConverterParams, x: &CircuitState) -> Outputs {
        let v_n1 = self.magnetizing_voltage(p, x);
        let (i_d3, i_d4) = match self.secondary {
            SecondaryConduction::Forward => (x.i_lo, 0.0),
            SecondaryConduction::Freewheel => (0.0, x.i_lo),
            SecondaryConduction::Blocked => (0.0, 0.0),
            SecondaryConduction::Both => {
                let i_d3 = p.n * (x.i_lr - x.i_lm);
                (i_d3, x.i_lo - i_d3)
            }
        };
        Outputs {
            v_n1,
            v_n2: v_n1 / p.n,
            v_sw: self.switch_voltage(p, x),
            i_d3,
            i_d4,
        }
    }

    fn derivative_of(&self, p: &ConverterParams, x: &CircuitState) -> Vector6<f64> {
        let v_sw = self.switch_voltage(p, x);
        let v_loop = p.vb - v_sw - p.r_pri * x.i_lr;
        let v_m = self.magnetizing_voltage(p, x);
        let (di_lm, di_lr, di_lo) = match self.secondary {
            SecondaryConduction::Forward => (
                v_m / p.lm,
                (v_loop - v_m) / p.lr,
                (v_m / p.n - p.vf_diode - p.r_sec * x.i_lo - x.v_co) / p.lo,
            ),
            SecondaryConduction::Freewheel => {
                let di = v_loop / (p.lm + p.lr);
                (di, di, (-p.vf_diode - x.v_co) / p.lo)
            }
            SecondaryConduction::Blocked => {
                let di = v_loop / (p.lm + p.lr);
                (di, di, 0.0)
            }
            SecondaryConduction::Both => (
                v_m / p.lm,
                (v_loop - v_m) / p.lr,
                (-p.vf_diode - x.v_co) / p.lo,
            ),
        };
        let (dv_ds1, dv_cc) = match self.primary {
            PrimaryConduction::Open => (x.i_lr / p.cds, 0.0),
            PrimaryConduction::S1Channel | PrimaryConduction::S1Diode => (0.0, 0.0),
            PrimaryConduction::S2Diode | PrimaryConduction::S2Channel => {
                let dv = x.i_lr / (p.cc + p.cds);
                (dv, dv)
            }
        };
        let dv_co = (x.i_lo - x.v_co / p.rload) / p.co;
        Vector6::new(di_lm, di_lr, dv_ds1, dv_cc, di_lo, dv_co)
    }

    pub fn system(&self, p: &ConverterParams) -> ModeSystem {
        let b = self.derivative_of(p, &CircuitState::default());
        let mut a = Matrix6::zeros();
        for j in 0..6 {
            let mut e = Vector6::zeros();
            e[j] = 1.0;
            let col = self.derivative_of(p, &CircuitState::from_vector(&e)) - b;
            a.set_column(j, &col);
        }
        ModeSystem { a, b }
    }

    /// Label of this conduction pattern for the given state.
    pub fn mode(&self, x: &CircuitState) -> ModeId {
        use PrimaryConduction::*;
        use SecondaryConduction::*;
        match (self.primary, self.secondary) {
            (S1Channel | S1Diode, Forward) => ModeId::Mode1,
            (S1Channel | S1Diode, _) => {
                if x.i_lr < 0.0 {
                    ModeId::Mode8
                } else {
                    ModeId::Mode9
                }
            }
            (Open, Forward) => ModeId::Mode2,
            (Open, Both) => {
                if x.i_lr >= 0.0 {
                    ModeId::Mode3
                } else {
                    ModeId::Mode7
                }
            }
            (Open, Freewheel | Blocked) => ModeId::Mode6,
            (S2Diode | S2Channel, Forward | Both) => ModeId::Mode4,
            (S2Diode | S2Channel, Freewheel | Blocked) => ModeId::Mode5,
        }
    }

    /// Guards that end this topology, given the state at entry.
    pub fn guards(&self, p: &ConverterParams, x: &CircuitState) -> Vec<Guard> {
        let mut out = Vec::with_capacity(4);
        let vf = p.vf_diode;
        match self.primary {
            PrimaryConduction::Open => {
                out.push(Guard {
                    kind: GuardKind::ReachClamp,
                    f: Affine::from_fn(|s| s.v_cc + vf - s.v_ds1),
                });
                out.push(Guard {
                    kind: GuardKind::ReachZero,
                    f: Affine::from_fn(|s| s.v_ds1 + vf),
                });
            }
            PrimaryConduction::S1Diode => out.push(Guard {
                kind: GuardKind::BodyDiodeOff,
                f: Affine::from_fn(|s| -s.i_lr),
            }),
            PrimaryConduction::S2Diode => out.push(Guard {
                kind: GuardKind::BodyDiodeOff,
                f: Affine::from_fn(|s| s.i_lr),
            }),
            PrimaryConduction::S1Channel | PrimaryConduction::S2Channel => {}
        }
        // Relabel Mode 3/7 and Mode 8/9 when the leakage current changes sign.
        let relabels = matches!(self.secondary, SecondaryConduction::Both)
            && matches!(
                self.primary,
                PrimaryConduction::Open | PrimaryConduction::S1Channel
            );
        if relabels {
            let sign = if x.i_lr < 0.0 { -1.0 } else { 1.0 };
            out.push(Guard {
                kind: GuardKind::LeakageReversal,
                f: Affine::from_fn(move |s| sign * s.i_lr),
            });
        }
        let topo = *self;
        let pp = *p;
        match self.secondary {
            SecondaryConduction::Forward => {
                out.push(Guard {
                    kind: GuardKind::FreewheelDiodeOn,
                    f: Affine::from_fn(move |s| {
                        topo.magnetizing_voltage(&pp, s) - pp.n * pp.r_sec * s.i_lo
                    }),
                });
                out.push(Guard {
                    kind: GuardKind::OutputCurrentZero,
                    f: Affine::from_fn(|s| s.i_lo),
                });
            }
            SecondaryConduction::Freewheel => {
                out.push(Guard {
                    kind: GuardKind::ForwardDiodeOn,
                    f: Affine::from_fn(move |s| -topo.magnetizing_voltage(&pp, s)),
                });
                out.push(Guard {
                    kind: GuardKind::OutputCurrentZero,
                    f: Affine::from_fn(|s| s.i_lo),
                });
            }
            SecondaryConduction::Both => {
                out.push(Guard {
                    kind: GuardKind::ForwardDiodeOff,
                    f: Affine::from_fn(move |s| pp.n * (s.i_lr - s.i_lm)),
                });
                out.push(Guard {
                    kind: GuardKind::FreewheelDiodeOff,
                    f: Affine::from_fn(move |s| s.i_lo - pp.n * (s.i_lr - s.i_lm)),
                });
            }
            SecondaryConduction::Blocked => out.push(Guard {
                kind: GuardKind::ForwardDiodeOn,
                f: Affine::from_fn(move |s| {
                    -(topo.magnetizing_voltage(&pp, s) / pp.n - pp.vf_diode - s.v_co)
                }),
            }),
        }
        out
    }
}

/// Which switch was forced on against a nonzero voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Switch {
    S1,
    S2,
}

/// Forced turn-on: the node voltage collapses and the stored charge is dissipated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSwitch {
    pub switch: Switch,
    /// Node voltage step imposed by the turn-on.
    pub delta_v: f64,
    /// Energy dissipated in the forced commutation.
    pub energy: f64,
}

/// Consistent conduction pattern for `x` under `gates`.
///
/// A gate that turns on against a nonzero node voltage collapses the node to
/// its forced value; `x` is updated in place and the event is returned.
pub fn resolve(
    p: &ConverterParams,
    x: &mut CircuitState,
    gates: Gates,
) -> (Topology, Option<HardSwitch>) {
    let mut hard = None;
    let primary = if gates.s1 {
        if x.v_ds1 > VOLTAGE_TOL {
            hard = Some(HardSwitch {
                switch: Switch::S1,
                delta_v: -x.v_ds1,
                energy: 0.5 * p.cds * x.v_ds1 * x.v_ds1,
            });
            x.v_ds1 = 0.0;
        }
        PrimaryConduction::S1Channel
    } else if gates.s2 {
        if x.v_ds1 < x.v_cc - VOLTAGE_TOL {
            // Charge sharing between the node capacitance and the clamp capacitor.
            let dv = x.v_cc - x.v_ds1;
            let c_series = p.cc * p.cds / (p.cc + p.cds);
            let shared = (p.cc * x.v_cc + p.cds * x.v_ds1) / (p.cc + p.cds);
            hard = Some(HardSwitch {
                switch: Switch::S2,
                delta_v: shared - x.v_ds1,
                energy: 0.5 * c_series * dv * dv,
            });
            x.v_cc = shared;
            x.v_ds1 = shared;
        }
        PrimaryConduction::S2Channel
    } else if x.v_ds1 <= -p.vf_diode + VOLTAGE_TOL && x.i_lr < 0.0 {
        PrimaryConduction::S1Diode
    } else if x.v_ds1 >= x.v_cc + p.vf_diode - VOLTAGE_TOL && x.i_lr > 0.0 {
        PrimaryConduction::S2Diode
    } else {
        PrimaryConduction::Open
    };
    let secondary = resolve_secondary(p, primary, x);
    (Topology { primary, secondary }, hard)
}

fn resolve_secondary(
    p: &ConverterParams,
    primary: PrimaryConduction,
    x: &CircuitState,
) -> SecondaryConduction {
    use SecondaryConduction::*;
    let i_d3 = p.n * (x.i_lr - x.i_lm);
    let i_d4 = x.i_lo - i_d3;
    let xv = x.to_vector();

    // A conducting diode must carry forward current, or zero current that is rising.
    let current_ok = |i: f64, di: f64| i > CURRENT_TOL || (i >= -CURRENT_TOL && di >= 0.0);
    let zero = |i: f64| i.abs() <= CURRENT_TOL;

    for candidate in [Forward, Freewheel, Blocked] {
        let topo = Topology {
            primary,
            secondary: candidate,
        };
        let dx = topo.system(p).derivative(&xv);
        let v_m = topo.magnetizing_voltage(p, x);
        let ok = match candidate {
            // With D4 off the forward diode carries i_lo itself.
            Forward => zero(i_d4) && current_ok(i_d3, dx[4]) && v_m - p.n * p.r_sec * x.i_lo >= 0.0,
            Freewheel => zero(i_d3) && current_ok(i_d4, dx[4]) && v_m <= 0.0,
            Blocked => zero(i_d3) && zero(i_d4) && v_m / p.n - p.vf_diode - x.v_co <= 0.0,
            Both => unreachable!(),
        };
        if ok {
            return candidate;
        }
    }
    Both
}

/// Successor of `mode` for a state reached under its dynamics, if any.
///
/// Gate-driven transitions are read from `schedule` at period-relative time `t`;
/// guard-driven transitions from the state itself. A gate that fires before its
/// zero-voltage condition yields [`ModeId::HardSwitchFallback`].
pub fn detect_transition(
    state: &CircuitState,
    mode: ModeId,
    params: &ConverterParams,
    t: f64,
    schedule: &GateSchedule,
) -> Option<ModeId> {
    let mut x = *state;
    let (topo, hard) = resolve(params, &mut x, schedule.gates_at(t));
    if hard.is_some() {
        return Some(ModeId::HardSwitchFallback);
    }
    let next = topo.mode(&x);
    (next != mode).then_some(next)
}

/// Affine dynamics of a labelled mode.
pub fn build_mode_system(mode: ModeId, params: &ConverterParams) -> ModeSystem {
    mode.canonical_topology().system(params)
}
