//! Lumped high-frequency model of the coreless PCB transformer.
//!
//! Network, with every primed quantity referred to the primary:
//!
//! ```text
//!   P ──r1──llk1── M ──llk2p──r2p── S ──(ideal n:1)── secondary
//!   │               │                │
//!   c1             lm1              c2p [‖ n²·R_load]
//!   │               │                │
//!   ⏚               ⏚                ⏚
//!   P ─────────────── c12 ────────── S
//! ```
//!
//! The primary is driven by an ideal voltage source. Gain is `V_s/V_p` with the
//! secondary voltage `V_S/n`; the secondary is open unless a load is given.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{invalid, Error, Result};

/// Equivalent-circuit values of the transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerParams {
    /// Primary winding resistance.
    pub r1: f64,
    /// Secondary winding resistance referred to the primary.
    pub r2p: f64,
    /// Primary leakage inductance.
    pub llk1: f64,
    /// Secondary leakage inductance referred to the primary.
    pub llk2p: f64,
    /// Primary self-capacitance.
    pub c1: f64,
    /// Secondary self-capacitance referred to the primary.
    pub c2p: f64,
    /// Interwinding capacitance.
    pub c12: f64,
    /// Magnetizing inductance.
    pub lm1: f64,
    /// Primary to secondary turns ratio.
    pub n: f64,
}

impl Default for TransformerParams {
    fn default() -> Self {
        table1_preset()
    }
}

/// Measured values of the fabricated 23/23-turn transformer.
pub fn table1_preset() -> TransformerParams {
    TransformerParams {
        r1: 1.27,
        r2p: 1.27,
        llk1: 3.9e-6,
        llk2p: 3.9e-6,
        c1: 4e-12,
        c2p: 4e-12,
        c12: 16e-12,
        lm1: 10.1e-6,
        n: 1.0,
    }
}

/// Printed-winding geometry of the fabricated transformer (documentation only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindingGeometry {
    pub inner_radius_m: f64,
    pub outer_radius_m: f64,
    pub conductor_width_m: f64,
    pub conductor_separation_m: f64,
    /// Copper thickness; the source lists "35 µ", read as micrometres.
    pub conductor_height_m: f64,
    pub primary_turns: u32,
    pub secondary_turns: u32,
}

pub fn table1_geometry() -> WindingGeometry {
    WindingGeometry {
        inner_radius_m: 2e-3,
        outer_radius_m: 25e-3,
        conductor_width_m: 0.635e-3,
        conductor_separation_m: 0.47e-3,
        conductor_height_m: 35e-6,
        primary_turns: 23,
        secondary_turns: 23,
    }
}

impl TransformerParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r1", self.r1),
            ("r2p", self.r2p),
            ("llk1", self.llk1),
            ("llk2p", self.llk2p),
            ("c1", self.c1),
            ("c2p", self.c2p),
            ("c12", self.c12),
            ("lm1", self.lm1),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(
                    name,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(invalid(
                "n",
                format!("turns ratio must be positive, got {}", self.n),
            ));
        }
        Ok(())
    }

    /// Every impedance multiplied by `k`: resistances and inductances by `k`,
    /// capacitances by `1/k`.
    pub fn impedance_scaled(&self, k: f64) -> Self {
        Self {
            r1: self.r1 * k,
            r2p: self.r2p * k,
            llk1: self.llk1 * k,
            llk2p: self.llk2p * k,
            lm1: self.lm1 * k,
            c1: self.c1 / k,
            c2p: self.c2p / k,
            c12: self.c12 / k,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponsePoint {
    pub frequency_hz: f64,
    pub gain: Complex64,
    pub zin: Complex64,
}

impl FrequencyResponsePoint {
    pub fn gain_db(&self) -> f64 {
        20.0 * self.gain.norm().log10()
    }
}

fn check_frequency(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "frequency_hz",
            format!("must be positive and finite, got {f}"),
        ))
    }
}

fn check_load(load: Option<f64>) -> Result<()> {
    match load {
        Some(r) if !(r.is_finite() && r > 0.0) => {
            Err(invalid("load_ohm", format!("must be positive, got {r}")))
        }
        _ => Ok(()),
    }
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Closed-form gain and input impedance of the network.
fn closed_form(
    p: &TransformerParams,
    f: f64,
    load_ohm: Option<f64>,
) -> Result<(Complex64, Complex64)> {
    p.validate()?;
    check_frequency(f)?;
    check_load(load_ohm)?;
    let s = Complex64::new(0.0, 2.0 * PI * f);
    let z1 = p.r1 + s * p.llk1;
    let z2 = p.r2p + s * p.llk2p;
    let zm = s * p.lm1;
    let y1 = s * p.c1;
    let y12 = s * p.c12;
    let y2 = s * p.c2p + load_ohm.map_or(0.0, |r| 1.0 / (p.n * p.n * r));

    // Node equations at M and S with V_P = 1, multiplied through by Z1·Z2·Zm.
    let w = zm * (z1 + z2) + z1 * z2;
    let den = zm + z1 + w * (y2 + y12);
    let singular = |detail: &str| Error::Singular {
        frequency_hz: f,
        detail: detail.to_string(),
    };
    if den.norm() == 0.0 || !finite(den) {
        return Err(singular("transfer denominator vanishes"));
    }
    let v_s = (zm + y12 * w) / den;
    // Node S: (V_S − V_M)/Z2 + V_S·Y2 + (V_S − 1)·Y12 = 0.
    let v_m = v_s * (1.0 + z2 * (y2 + y12)) - z2 * y12;

    // Source current by whichever branch expression avoids dividing by zero.
    let i_in = if zm.norm() >= z1.norm() {
        if zm.norm() == 0.0 {
            return Err(singular(
                "source is shorted through zero-impedance branches",
            ));
        }
        y1 + v_m / zm + v_s * y2
    } else {
        y1 + (1.0 - v_m) / z1 + (1.0 - v_s) * y12
    };
    if i_in.norm() == 0.0 || !finite(i_in) {
        return Err(singular(
            "input current vanishes; the input impedance is unbounded",
        ));
    }
    let gain = v_s / p.n;
    let zin = 1.0 / i_in;
    if !(finite(gain) && finite(zin)) {
        return Err(singular("non-finite network response"));
    }
    Ok((gain, zin))
}

/// `V_s/V_p` with the secondary open.
pub fn transfer_gain(params: &TransformerParams, frequency_hz: f64) -> Result<Complex64> {
    closed_form(params, frequency_hz, None).map(|(g, _)| g)
}

/// Impedance seen at the primary terminals with the secondary open.
pub fn input_impedance(params: &TransformerParams, frequency_hz: f64) -> Result<Complex64> {
    closed_form(params, frequency_hz, None).map(|(_, z)| z)
}

/// Gain and input impedance with an optional resistive load on the secondary.
pub fn response(
    params: &TransformerParams,
    frequency_hz: f64,
    load_ohm: Option<f64>,
) -> Result<FrequencyResponsePoint> {
    let (gain, zin) = closed_form(params, frequency_hz, load_ohm)?;
    Ok(FrequencyResponsePoint {
        frequency_hz,
        gain,
        zin,
    })
}

/// Modified nodal analysis of the same network, solved numerically.
///
/// Unknowns are the node voltages `V_P, V_M, V_S`, the source current and the
/// currents of the three inductive branches, so zero-impedance branches stay
/// representable.
pub fn nodal_oracle(
    params: &TransformerParams,
    frequency_hz: f64,
    load_ohm: Option<f64>,
) -> Result<(Complex64, Complex64)> {
    params.validate()?;
    check_frequency(frequency_hz)?;
    check_load(load_ohm)?;
    const P: usize = 0;
    const M: usize = 1;
    const S: usize = 2;
    const I_SRC: usize = 3;
    let s = Complex64::new(0.0, 2.0 * PI * frequency_hz);
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut a = SMatrix::<Complex64, 7, 7>::from_element(zero);
    let mut b = SVector::<Complex64, 7>::from_element(zero);

    let admittance =
        |a: &mut SMatrix<Complex64, 7, 7>, i: usize, j: Option<usize>, y: Complex64| {
            a[(i, i)] += y;
            if let Some(j) = j {
                a[(j, j)] += y;
                a[(i, j)] -= y;
                a[(j, i)] -= y;
            }
        };
    admittance(&mut a, P, None, s * params.c1);
    admittance(&mut a, S, None, s * params.c2p);
    admittance(&mut a, P, Some(S), s * params.c12);
    if let Some(r) = load_ohm {
        admittance(
            &mut a,
            S,
            None,
            Complex64::new(1.0 / (params.n * params.n * r), 0.0),
        );
    }

    // Impedance branches: V_from − V_to − Z·I = 0, with I leaving `from`.
    let branches = [
        (4, P, Some(M), params.r1 + s * params.llk1),
        (5, M, Some(S), params.r2p + s * params.llk2p),
        (6, M, None, s * params.lm1),
    ];
    for (k, from, to, z) in branches {
        a[(from, k)] += one;
        a[(k, from)] += one;
        if let Some(to) = to {
            a[(to, k)] -= one;
            a[(k, to)] -= one;
        }
        a[(k, k)] = -z;
    }
    // Unit source into P.
    a[(P, I_SRC)] -= one;
    a[(I_SRC, P)] = one;
    b[I_SRC] = one;

    let singular = |detail: &str| Error::Singular {
        frequency_hz,
        detail: detail.to_string(),
    };
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| singular("nodal admittance matrix is singular"))?;
    if !x.iter().all(|v| finite(*v)) {
        return Err(singular("nodal solution is not finite"));
    }
    let i_src = x[I_SRC];
    if i_src.norm() == 0.0 {
        return Err(singular(
            "input current vanishes; the input impedance is unbounded",
        ));
    }
    Ok((x[S] / params.n, 1.0 / i_src))
}

/// Ascending log-spaced grid from `f_start` to `f_stop`, both included.
pub fn log_grid(f_start: f64, f_stop: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(f_start.is_finite() && f_stop.is_finite() && f_start > 0.0 && f_stop > f_start) {
        return Err(Error::InvalidRange(format!(
            "need 0 < f_start < f_stop, got {f_start} .. {f_stop}"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::InvalidRange(
            "points_per_decade must be at least 1".into(),
        ));
    }
    let decades = (f_stop / f_start).log10();
    let intervals = ((decades * points_per_decade as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let ratio = f_stop / f_start;
    let mut grid: Vec<f64> = (0..=intervals)
        .map(|k| f_start * ratio.powf(k as f64 / intervals as f64))
        .collect();
    grid[0] = f_start;
    grid[intervals] = f_stop;
    Ok(grid)
}

pub fn frequency_sweep(
    params: &TransformerParams,
    f_start: f64,
    f_stop: f64,
    points_per_decade: usize,
) -> Result<Vec<FrequencyResponsePoint>> {
    frequency_sweep_loaded(params, f_start, f_stop, points_per_decade, None)
}

pub fn frequency_sweep_loaded(
    params: &TransformerParams,
    f_start: f64,
    f_stop: f64,
    points_per_decade: usize,
    load_ohm: Option<f64>,
) -> Result<Vec<FrequencyResponsePoint>> {
    params.validate()?;
    log_grid(f_start, f_stop, points_per_decade)?
        .into_iter()
        .map(|f| response(params, f, load_ohm))
        .collect()
}

/// Lower and upper −3 dB edges relative to the mid-band plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub lower_hz: Option<f64>,
    pub upper_hz: Option<f64>,
    /// Plateau magnitude the edges are measured against.
    pub plateau_gain: f64,
    /// Frequency at which the plateau magnitude was taken.
    pub plateau_hz: f64,
}

const BANDWIDTH_PPD: usize = 20;

/// Mid-band plateau: the grid point whose surrounding half decade on either side
/// shows the least spread of `log|gain|`.
fn plateau_index(freqs: &[f64], mags: &[f64]) -> usize {
    let log_f: Vec<f64> = freqs.iter().map(|f| f.log10()).collect();
    let log_g: Vec<f64> = mags.iter().map(|g| g.ln()).collect();
    let mut best = (0, f64::INFINITY);
    for i in 0..freqs.len() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..freqs.len() {
            if (log_f[j] - log_f[i]).abs() <= 0.5 + 1e-12 {
                lo = lo.min(log_g[j]);
                hi = hi.max(log_g[j]);
            }
        }
        if hi - lo < best.1 {
            best = (i, hi - lo);
        }
    }
    best.0
}

/// Bisection on `log f` for the threshold crossing between `a` and `b`, where
/// `above(a) != above(b)`.
fn refine_edge(params: &TransformerParams, a: f64, b: f64, threshold: f64) -> Result<f64> {
    let above = |f: f64| -> Result<bool> { Ok(transfer_gain(params, f)?.norm() >= threshold) };
    let a_above = above(a)?;
    let (mut lo, mut hi) = (a.ln(), b.ln());
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if above(mid.exp())? == a_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

pub fn bandwidth(params: &TransformerParams, f_start: f64, f_stop: f64) -> Result<Bandwidth> {
    let freqs = log_grid(f_start, f_stop, BANDWIDTH_PPD)?;
    let mags = freqs
        .iter()
        .map(|&f| transfer_gain(params, f).map(|g| g.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let k = plateau_index(&freqs, &mags);
    let plateau = mags[k];
    let threshold = plateau * 10f64.powf(-3.0 / 20.0);
    let below = |g: f64| g < threshold;

    let mut lower_hz = None;
    for i in (0..k).rev() {
        if below(mags[i]) {
            lower_hz = Some(refine_edge(params, freqs[i], freqs[i + 1], threshold)?);
            break;
        }
    }
    let mut upper_hz = None;
    for i in k + 1..freqs.len() {
        if below(mags[i]) {
            upper_hz = Some(refine_edge(params, freqs[i - 1], freqs[i], threshold)?);
            break;
        }
    }
    Ok(Bandwidth {
        lower_hz,
        upper_hz,
        plateau_gain: plateau,
        plateau_hz: freqs[k],
    })
}

pub const SWEEP_CSV_HEADER: &str =
    "frequency_hz,gain_re,gain_im,gain_mag,gain_db,zin_re,zin_im,zin_mag";

pub fn write_sweep_csv<W: Write>(points: &[FrequencyResponsePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))?;
    for p in points {
        let fields = [
            p.frequency_hz,
            p.gain.re,
            p.gain.im,
            p.gain.norm(),
            p.gain_db(),
            p.zin.re,
            p.zin.im,
            p.zin.norm(),
        ];
        w.write_record(fields.iter().map(|v| format!("{v:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Relative distance `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> TransformerParams {
        TransformerParams {
            r1: 0.0,
            r2p: 0.0,
            llk1: 0.0,
            llk2p: 0.0,
            c1: 0.0,
            c2p: 0.0,
            c12: 0.0,
            lm1: 10e-6,
            n: 1.0,
        }
    }

    #[test]
    fn ideal_transformer_has_unit_gain() {
        for f in [1.0, 1e3, 1e6, 1e9] {
            assert_eq!(
                transfer_gain(&ideal(), f).unwrap(),
                Complex64::new(1.0, 0.0)
            );
        }
    }

    #[test]
    fn dc_limit_of_input_impedance_is_r1() {
        let z = input_impedance(&table1_preset(), 1.0).unwrap();
        assert!((z.norm() - 1.27).abs() / 1.27 < 1e-3, "{z}");
    }

    #[test]
    fn all_zero_network_is_singular() {
        let p = TransformerParams {
            lm1: 0.0,
            ..ideal()
        };
        assert!(matches!(
            transfer_gain(&p, 1e6),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            input_impedance(&p, 1e6),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            nodal_oracle(&p, 1e6, None),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn grid_has_expected_length() {
        let g = log_grid(1e4, 1e8, 10).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 1e4);
        assert_eq!(g[40], 1e8);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_inverted_range() {
        assert!(matches!(
            log_grid(1e6, 1e3, 10),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(log_grid(1e3, 1e6, 0), Err(Error::InvalidRange(_))));
    }
}
