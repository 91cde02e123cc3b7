use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

/// Continuous state of the switched circuit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitState {
    /// Magnetizing inductor current.
    pub i_lm: f64,
    /// Leakage inductor current, equal to the primary terminal current.
    pub i_lr: f64,
    /// Voltage across the main switch.
    pub v_ds1: f64,
    /// Clamp capacitor voltage.
    pub v_cc: f64,
    /// Output inductor current.
    pub i_lo: f64,
    /// Output capacitor voltage.
    pub v_co: f64,
}

pub const STATE_LEN: usize = 6;

impl CircuitState {
    pub const NAMES: [&'static str; STATE_LEN] = ["i_lm", "i_lr", "v_ds1", "v_cc", "i_lo", "v_co"];

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.i_lm, self.i_lr, self.v_ds1, self.v_cc, self.i_lo, self.v_co,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            i_lm: v[0],
            i_lr: v[1],
            v_ds1: v[2],
            v_cc: v[3],
            i_lo: v[4],
            v_co: v[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_vector().amax()
    }

    /// `‖a − b‖∞ / max(1, ‖b‖∞)`, the mismatch measure used for periodicity.
    pub fn normalized_distance(&self, other: &CircuitState) -> f64 {
        let diff = (self.to_vector() - other.to_vector()).amax();
        diff / other.max_abs().max(1.0)
    }
}
