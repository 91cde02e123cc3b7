use acfc_core::transformer::{
    bandwidth, frequency_sweep, frequency_sweep_loaded, input_impedance, log_grid, nodal_oracle,
    relative_error, response, table1_preset, transfer_gain, TransformerParams,
};
use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

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

fn random_set(rng: &mut StdRng) -> TransformerParams {
    TransformerParams {
        r1: rng.gen_range(0.0..10.0),
        r2p: rng.gen_range(0.0..10.0),
        llk1: rng.gen_range(0.1e-6..20e-6),
        llk2p: rng.gen_range(0.1e-6..20e-6),
        c1: rng.gen_range(0.0..50e-12),
        c2p: rng.gen_range(0.0..50e-12),
        c12: rng.gen_range(0.0..50e-12),
        lm1: rng.gen_range(1e-6..100e-6),
        n: rng.gen_range(0.5..3.0),
    }
}

fn corpus() -> Vec<TransformerParams> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut v = vec![table1_preset(), ideal()];
    v.extend((0..20).map(|_| random_set(&mut rng)));
    v
}

#[test]
fn closed_form_matches_nodal_oracle() {
    let grid = log_grid(10e3, 100e6, 10).unwrap();
    assert_eq!(grid.len(), 41);
    for (k, p) in corpus().iter().enumerate() {
        for &f in &grid {
            let (g, z) = nodal_oracle(p, f, None).unwrap();
            let eg = relative_error(transfer_gain(p, f).unwrap(), g);
            let ez = relative_error(input_impedance(p, f).unwrap(), z);
            assert!(eg <= 1e-9, "set {k} f {f}: gain error {eg:e}");
            assert!(ez <= 1e-9, "set {k} f {f}: zin error {ez:e}");
        }
    }
}

#[test]
fn loaded_closed_form_matches_nodal_oracle() {
    let grid = log_grid(10e3, 100e6, 10).unwrap();
    for p in corpus() {
        for load in [1.0, 26.0, 1e4] {
            for &f in &grid {
                let r = response(&p, f, Some(load)).unwrap();
                let (g, z) = nodal_oracle(&p, f, Some(load)).unwrap();
                assert!(relative_error(r.gain, g) <= 1e-9);
                assert!(relative_error(r.zin, z) <= 1e-9);
            }
        }
    }
}

#[test]
fn table1_spot_values() {
    let p = table1_preset();
    let g = transfer_gain(&p, 1e6).unwrap().norm();
    assert!((g - 0.72).abs() <= 0.02, "{g}");
    for f in [3e6, 5e6] {
        let (og, oz) = nodal_oracle(&p, f, None).unwrap();
        assert!(relative_error(transfer_gain(&p, f).unwrap(), og) <= 1e-9);
        assert!(relative_error(input_impedance(&p, f).unwrap(), oz) <= 1e-9);
    }
    assert!(
        input_impedance(&p, 2e6).unwrap().norm() > input_impedance(&p, 200e3).unwrap().norm()
    );
}

#[test]
fn ideal_network_has_unit_gain_everywhere() {
    let p = ideal();
    for f in [1.0, 1e3, 1e6, 1e9] {
        assert_eq!(transfer_gain(&p, f).unwrap(), num_complex::Complex64::new(1.0, 0.0));
        let (g, _) = nodal_oracle(&p, f, None).unwrap();
        assert!((g - 1.0).norm() < 1e-12);
    }
    let bw = bandwidth(&p, 1.0, 1e9).unwrap();
    assert_eq!((bw.lower_hz, bw.upper_hz), (None, None));
}

#[test]
fn dc_limits() {
    let p = table1_preset();
    let z = input_impedance(&p, 1.0).unwrap().norm();
    assert!((z - 1.27).abs() <= 1e-3 * 1.27, "{z}");
    let (_, oz) = nodal_oracle(&p, 1.0, None).unwrap();
    assert!((oz.norm() - 1.27).abs() <= 1e-3 * 1.27);

    let lossless = TransformerParams {
        r1: 0.0,
        r2p: 0.0,
        ..table1_preset()
    };
    let expected = lossless.lm1 / ((lossless.lm1 + lossless.llk1) * lossless.n);
    let g = transfer_gain(&lossless, 1.0).unwrap().norm();
    assert!(((g - expected) / expected).abs() <= 1e-6, "{g} vs {expected}");
}

#[test]
fn mid_band_plateau() {
    let p = table1_preset();
    for pt in frequency_sweep(&p, 100e3, 5e6, 40).unwrap() {
        let g = pt.gain.norm();
        assert!((0.69..=0.75).contains(&g), "{} Hz: {g}", pt.frequency_hz);
    }
    let divider = p.lm1 / (p.lm1 + p.llk1);
    assert!((0.69..=0.75).contains(&divider));
    for pt in frequency_sweep(&p, 100e3, 100e6, 20).unwrap() {
        if pt.frequency_hz < 5e6 {
            assert!((pt.gain.norm() - 0.72).abs() <= 0.03, "{}", pt.frequency_hz);
        }
    }
}

#[test]
fn input_impedance_is_monotone_below_resonance() {
    let p = table1_preset();
    let pts = frequency_sweep(&p, 10e3, 5e6, 50).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].zin.norm() >= w[0].zin.norm(), "{}", w[1].frequency_hz);
    }
}

#[test]
fn sweep_grid_shape_and_composition() {
    let p = table1_preset();
    let pts = frequency_sweep(&p, 10e3, 100e6, 10).unwrap();
    assert_eq!(pts.len(), 41);
    assert_eq!(pts[0].frequency_hz, 10e3);
    assert_eq!(pts[40].frequency_hz, 100e6);
    for w in pts.windows(2) {
        assert!(w[1].frequency_hz > w[0].frequency_hz);
    }
    for pt in &pts {
        assert_eq!(pt.gain, transfer_gain(&p, pt.frequency_hz).unwrap());
        assert_eq!(pt.zin, input_impedance(&p, pt.frequency_hz).unwrap());
    }
    let one = frequency_sweep(&p, 1e3, 1e5, 1).unwrap();
    assert_eq!(one.len(), 3);
    assert!(frequency_sweep(&p, 1e6, 1e3, 10).is_err());
    assert!(frequency_sweep(&p, 1e3, 1e6, 0).is_err());
    assert!(frequency_sweep_loaded(&p, 1e3, 1e6, 10, Some(-1.0)).is_err());
}

#[test]
fn bandwidth_of_table1() {
    let p = table1_preset();
    let bw = bandwidth(&p, 1e3, 100e6).unwrap();
    let upper = bw.upper_hz.expect("upper edge in range");
    assert!((6e6..=14e6).contains(&upper), "{upper}");
    let lower = bw.lower_hz.expect("lower edge in range");
    assert!(lower < 100e3, "{lower}");
}

/// First grid frequency on either side of the plateau where |gain| drops below the threshold.
fn dense_edges(p: &TransformerParams, f0: f64, f1: f64, plateau_hz: f64, threshold: f64) -> (Option<f64>, Option<f64>) {
    let grid = log_grid(f0, f1, 1000).unwrap();
    let mag = |f: f64| transfer_gain(p, f).unwrap().norm();
    let lower = grid
        .iter()
        .rev()
        .filter(|&&f| f < plateau_hz)
        .find(|&&f| mag(f) < threshold)
        .copied();
    let upper = grid
        .iter()
        .filter(|&&f| f > plateau_hz)
        .find(|&&f| mag(f) < threshold)
        .copied();
    (lower, upper)
}

#[test]
fn bandwidth_agrees_with_dense_scan() {
    let coarse_step = 10f64.powf(1.0 / 20.0);
    let mut sets = vec![table1_preset()];
    let mut rng = StdRng::seed_from_u64(7);
    sets.extend((0..5).map(|_| random_set(&mut rng)));
    for p in sets {
        let bw = bandwidth(&p, 1e3, 100e6).unwrap();
        let threshold = bw.plateau_gain * 10f64.powf(-3.0 / 20.0);
        let (lo, hi) = dense_edges(&p, 1e3, 100e6, bw.plateau_hz, threshold);
        for (got, want) in [(bw.lower_hz, lo), (bw.upper_hz, hi)] {
            match (got, want) {
                (Some(a), Some(b)) => {
                    let ratio = (a / b).max(b / a);
                    assert!(ratio <= coarse_step, "{a} vs {b}");
                }
                (None, None) => {}
                other => panic!("edge presence differs: {other:?}"),
            }
        }
    }
}

#[test]
fn degenerate_network_is_an_error() {
    let p = TransformerParams {
        lm1: 0.0,
        ..ideal()
    };
    assert!(transfer_gain(&p, 1e6).is_err());
    assert!(nodal_oracle(&p, 1e6, None).is_err());
    assert!(transfer_gain(&table1_preset(), 0.0).is_err());
}

fn params_strategy() -> impl Strategy<Value = TransformerParams> {
    (
        0.0..10.0f64,
        0.0..10.0f64,
        0.1e-6..20e-6f64,
        0.1e-6..20e-6f64,
        0.0..50e-12f64,
        0.0..50e-12f64,
        0.0..50e-12f64,
        1e-6..100e-6f64,
        0.5..3.0f64,
    )
        .prop_map(|(r1, r2p, llk1, llk2p, c1, c2p, c12, lm1, n)| TransformerParams {
            r1,
            r2p,
            llk1,
            llk2p,
            c1,
            c2p,
            c12,
            lm1,
            n,
        })
}

proptest! {
    #[test]
    fn passive_input_impedance(p in params_strategy(), lf in 4.0..8.0f64) {
        let z = input_impedance(&p, 10f64.powf(lf)).unwrap();
        prop_assert!(z.re >= -1e-12, "{z}");
    }

    #[test]
    fn impedance_scaling(p in params_strategy(), k in 0.01..100.0f64, lf in 4.0..8.0f64) {
        let f = 10f64.powf(lf);
        let q = p.impedance_scaled(k);
        let (g, z) = (transfer_gain(&p, f).unwrap(), input_impedance(&p, f).unwrap());
        let (gq, zq) = (transfer_gain(&q, f).unwrap(), input_impedance(&q, f).unwrap());
        prop_assert!(relative_error(gq, g) <= 1e-9);
        prop_assert!(relative_error(zq, z * k) <= 1e-9);
    }

    #[test]
    fn oracle_equivalence(p in params_strategy(), lf in 4.0..8.0f64) {
        let f = 10f64.powf(lf);
        let (g, z) = nodal_oracle(&p, f, None).unwrap();
        prop_assert!(relative_error(transfer_gain(&p, f).unwrap(), g) <= 1e-9);
        prop_assert!(relative_error(input_impedance(&p, f).unwrap(), z) <= 1e-9);
    }
}
