use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Component set and operating point of a low-side active clamp forward converter.
///
/// The transformer is represented by a series leakage inductance `lr`, a shunt
/// magnetizing inductance `lm` and an ideal `n:1` winding. All values are SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConverterParams {
    /// Input source voltage.
    pub vb: f64,
    /// Main switch duty cycle.
    pub d: f64,
    /// Switching frequency.
    pub fs: f64,
    /// Series (leakage) inductance on the primary.
    pub lr: f64,
    /// Magnetizing inductance.
    pub lm: f64,
    /// Lumped drain-source capacitance on the main switch node.
    pub cds: f64,
    /// Clamp capacitor.
    pub cc: f64,
    /// Output inductor.
    pub lo: f64,
    /// Output capacitor.
    pub co: f64,
    /// Primary to secondary turns ratio.
    pub n: f64,
    /// Output load resistance.
    pub rload: f64,
    pub rds_on_s1: f64,
    pub rds_on_s2: f64,
    /// Forward drop shared by the body diodes and both output diodes.
    pub vf_diode: f64,
    /// Gap between complementary gate commands, as a fraction of the period.
    pub dead_time_fraction: f64,
    /// Primary winding resistance.
    pub r_pri: f64,
    /// Secondary winding resistance (secondary side ohms).
    pub r_sec: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self::prototype()
    }
}

impl ConverterParams {
    /// The 40 V, D = 0.5, 2 MHz prototype with its coreless transformer.
    pub fn prototype() -> Self {
        Self {
            vb: 40.0,
            d: 0.5,
            fs: 2.0e6,
            lr: 3.9e-6,
            lm: 10.1e-6,
            cds: 80e-12,
            cc: 1e-6,
            lo: 100e-6,
            co: 27e-6,
            n: 1.0,
            rload: 26.0,
            rds_on_s1: 0.0,
            rds_on_s2: 0.0,
            vf_diode: 0.0,
            dead_time_fraction: 0.07,
            r_pri: 0.0,
            r_sec: 0.0,
        }
    }

    /// Prototype with device drops enabled for loss studies.
    pub fn prototype_lossy() -> Self {
        Self {
            vf_diode: 0.7,
            rds_on_s1: 0.54,
            rds_on_s2: 0.8,
            r_pri: 1.27,
            r_sec: 1.27,
            ..Self::prototype()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("vb", self.vb),
            ("d", self.d),
            ("fs", self.fs),
            ("lr", self.lr),
            ("lm", self.lm),
            ("cds", self.cds),
            ("cc", self.cc),
            ("lo", self.lo),
            ("co", self.co),
            ("n", self.n),
            ("rload", self.rload),
            ("rds_on_s1", self.rds_on_s1),
            ("rds_on_s2", self.rds_on_s2),
            ("vf_diode", self.vf_diode),
            ("dead_time_fraction", self.dead_time_fraction),
            ("r_pri", self.r_pri),
            ("r_sec", self.r_sec),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(invalid(
                "d",
                format!("duty cycle must lie in (0, 1), got {}", self.d),
            ));
        }
        if self.fs <= 0.0 {
            return Err(invalid("fs", "switching frequency must be positive"));
        }
        if self.vb < 0.0 {
            return Err(invalid("vb", "input voltage must be non-negative"));
        }
        if self.n <= 0.0 {
            return Err(invalid("n", "turns ratio must be positive"));
        }
        // Energy-storage elements appear as divisors in the mode dynamics.
        for (name, v) in [
            ("lr", self.lr),
            ("lm", self.lm),
            ("cds", self.cds),
            ("cc", self.cc),
            ("lo", self.lo),
            ("co", self.co),
            ("rload", self.rload),
        ] {
            if v <= 0.0 {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("rds_on_s1", self.rds_on_s1),
            ("rds_on_s2", self.rds_on_s2),
            ("vf_diode", self.vf_diode),
            ("r_pri", self.r_pri),
            ("r_sec", self.r_sec),
        ] {
            if v < 0.0 {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        let dt = self.dead_time_fraction;
        if !(dt >= 0.0 && dt < self.d.min(1.0 - self.d)) {
            return Err(invalid(
                "dead_time_fraction",
                format!("must lie in [0, min(d, 1-d)), got {dt}"),
            ));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.fs
    }

    /// Period of the leakage / switch-capacitance resonance, the fastest in the circuit.
    pub fn fastest_resonance_period(&self) -> f64 {
        2.0 * PI * (self.lr * self.cds).sqrt()
    }

    /// Default RK4 step: `min(Ts/2000, T_res/50)`.
    pub fn default_step(&self) -> f64 {
        (self.period() / 2000.0).min(self.fastest_resonance_period() / 50.0)
    }

    pub fn schedule(&self) -> GateSchedule {
        GateSchedule::from_params(self)
    }

    /// Clamp voltage, output voltage and load current expected from the ideal analysis.
    pub fn warm_start(&self) -> super::CircuitState {
        let v_co = self.d * self.vb * (self.lm / (self.lm + self.lr)) / self.n;
        super::CircuitState {
            i_lm: 0.0,
            i_lr: 0.0,
            v_ds1: 0.0,
            v_cc: self.vb / (1.0 - self.d),
            i_lo: v_co / self.rload,
            v_co,
        }
    }
}

/// Period-relative gate command instants.
///
/// S1 is commanded on over `[0, s1_off)`, S2 over `[s2_on, s2_off)`; S1 turns on
/// again at the start of the next period. Each switch gives up one dead time,
/// so the dead intervals sit centred on the ideal edges at `D·Ts` and `Ts` up
/// to a shift of the time origin by half a dead time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSchedule {
    pub period: f64,
    pub s1_off: f64,
    pub s2_on: f64,
    pub s2_off: f64,
}

impl GateSchedule {
    pub fn from_params(p: &ConverterParams) -> Self {
        let ts = p.period();
        let td = p.dead_time_fraction * ts;
        Self {
            period: ts,
            s1_off: p.d * ts - td,
            s2_on: p.d * ts,
            s2_off: ts - td,
        }
    }

    /// Gate commands `(s1, s2)` in force at period-relative time `t`.
    pub fn gates_at(&self, t: f64) -> Gates {
        let t = t.rem_euclid(self.period);
        Gates {
            s1: t < self.s1_off,
            s2: t >= self.s2_on && t < self.s2_off,
        }
    }

    /// Gate edges inside one period, in time order.
    pub fn edges(&self) -> [(f64, GateEdge); 3] {
        [
            (self.s1_off, GateEdge::S1Off),
            (self.s2_on, GateEdge::S2On),
            (self.s2_off, GateEdge::S2Off),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Gates {
    pub s1: bool,
    pub s2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateEdge {
    S1On,
    S1Off,
    S2On,
    S2Off,
}
