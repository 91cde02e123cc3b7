//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use acfc_core::converter::{
    steady_state, zvs_check, ConverterParams, ModeId, SteadyState, SteadyStateOptions,
    TransitionCause,
};
use acfc_core::design::{cc_min, fs_max, fs_min, ilr_t6, lr_min};
use acfc_core::transformer::{
    bandwidth, frequency_sweep, input_impedance, log_grid, nodal_oracle, relative_error,
    table1_preset, transfer_gain, TransformerParams,
};
use rand::{rngs::StdRng, Rng, SeedableRng};

struct Runs {
    solved: Vec<(String, ConverterParams, SteadyState)>,
}

impl Runs {
    fn solve(&mut self, label: &str, p: ConverterParams) -> (SteadyState, f64) {
        let t = Instant::now();
        let ss = steady_state(&p, &SteadyStateOptions::default()).expect("steady state runs");
        let secs = t.elapsed().as_secs_f64();
        self.solved.push((label.to_string(), p, ss.clone()));
        (ss, secs)
    }
}

fn proto(f: impl FnOnce(&mut ConverterParams)) -> ConverterParams {
    let mut p = ConverterParams::prototype();
    f(&mut p);
    p
}

struct Line {
    n: u32,
    pass: bool,
    detail: String,
}

fn report(n: u32, pass: bool, detail: String) -> Line {
    Line { n, pass, detail }
}

fn clamp_relation(runs: &mut Runs) -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [0.3, 0.5, 0.7] {
        let p = proto(|p| p.d = d);
        let (ss, secs) = runs.solve(&format!("d={d}"), p);
        let ratio = ss.report.v_cc_mean * (1.0 - d) / p.vb;
        ok &= ss.report.converged && (ratio - 1.0).abs() <= 0.02 && secs <= 30.0;
        parts.push(format!("d={d}: {ratio:.4} ({secs:.2} s)"));
    }
    report(1, ok, format!("v_cc(1-d)/vb, band 1 +/- 0.02: {}", parts.join(", ")))
}

fn switch_stress(runs: &mut Runs) -> Line {
    let (ss, _) = runs.solve("prototype", ConverterParams::prototype());
    let v = ss.report.v_ds1_peak;
    report(
        2,
        ss.report.converged && (78.4..=88.0).contains(&v),
        format!("v_ds1_peak = {v:.3} V, band [78.4, 88]"),
    )
}

fn mid_band_gain() -> Line {
    let p = table1_preset();
    let pts = frequency_sweep(&p, 100e3, 5e6, 20).unwrap();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), pt| {
        let g = pt.gain.norm();
        (lo.min(g), hi.max(g))
    });
    let upper = bandwidth(&p, 1e3, 100e6).unwrap().upper_hz;
    let ok = (lo - 0.72).abs() <= 0.03
        && (hi - 0.72).abs() <= 0.03
        && upper.is_some_and(|f| (6e6..=14e6).contains(&f));
    report(
        3,
        ok,
        format!(
            "|gain| over [100 kHz, 5 MHz] in [{lo:.4}, {hi:.4}]; upper edge {:.3} MHz",
            upper.unwrap_or(f64::NAN) / 1e6
        ),
    )
}

fn random_passive(rng: &mut StdRng) -> TransformerParams {
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

fn oracle_equivalence() -> Line {
    let t = Instant::now();
    let mut rng = StdRng::seed_from_u64(20);
    let mut sets = vec![table1_preset()];
    sets.extend((0..20).map(|_| random_passive(&mut rng)));
    let grid = log_grid(10e3, 100e6, 10).unwrap();
    let mut worst = 0.0f64;
    for p in &sets {
        for &f in &grid {
            let (g, z) = nodal_oracle(p, f, None).unwrap();
            worst = worst
                .max(relative_error(transfer_gain(p, f).unwrap(), g))
                .max(relative_error(input_impedance(p, f).unwrap(), z));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    report(
        4,
        grid.len() == 41 && worst <= 1e-9 && secs <= 5.0,
        format!(
            "{} sets x {} points, worst relative error {worst:.2e} ({secs:.3} s)",
            sets.len(),
            grid.len()
        ),
    )
}

fn zvs_bound(runs: &mut Runs) -> Line {
    let p = ConverterParams::prototype();
    let f = fs_max(p.lr, p.d, p.lm, p.cds).unwrap();
    let mut ok = ((f - 5.47e6) / 5.47e6).abs() <= 1e-3 && ((f - 5.6e6) / 5.6e6).abs() <= 0.03;
    let mut parts = vec![format!("fs_max = {:.4} MHz", f / 1e6)];
    for (fs, expect) in [(1.1e6, true), (1.4e6, true), (1.9e6, true), (2.5e6, true), (8e6, false)] {
        let (ss, _) = runs.solve(&format!("fs={fs}"), proto(|p| p.fs = fs));
        let z = zvs_check(&ss.report, &ss.period).map(|z| z.s1.zvs);
        ok &= z == Ok(expect);
        parts.push(format!("{:.1} MHz zvs_s1={:?}", fs / 1e6, z.ok()));
    }
    report(5, ok, parts.join(", "))
}

fn ilr_at_t6(runs: &mut Runs) -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for fs in [1.1e6, 2e6, 2.5e6] {
        let p = proto(|p| p.fs = fs);
        let (ss, _) = runs.solve(&format!("fs={fs}"), p);
        let expected = ilr_t6(p.d, p.vb, p.lm, p.fs).unwrap();
        let got = ss.report.i_lr_at_mode6_entry.map(f64::abs);
        let ratio = got.map_or(f64::NAN, |g| g / expected);
        ok &= ss.report.converged && (ratio - 1.0).abs() <= 0.05;
        parts.push(format!(
            "{:.1} MHz: {:.4} A vs {expected:.4} A (ratio {ratio:.3})",
            fs / 1e6,
            got.unwrap_or(f64::NAN)
        ));
    }
    report(6, ok, parts.join(", "))
}

fn balances(runs: &Runs) -> Line {
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for (label, _, ss) in &runs.solved {
        if !ss.report.converged {
            continue;
        }
        count += 1;
        let b = &ss.report.balances;
        let pass = b.volt_second_residual < 5e-3
            && b.clamp_charge_residual < 5e-3
            && b.output_charge_residual < 5e-3
            && b.energy_residual < 1e-2;
        if !pass {
            println!("    balance failure in run {label}: {b:?}");
        }
        ok &= pass;
        worst = (
            worst.0.max(b.volt_second_residual),
            worst.1.max(b.clamp_charge_residual),
            worst.2.max(b.output_charge_residual),
            worst.3.max(b.energy_residual),
        );
    }
    report(
        7,
        ok && count > 0,
        format!(
            "{count} converged runs; worst volt-second {:.2e}, clamp charge {:.2e}, output charge {:.2e}, energy {:.2e}",
            worst.0, worst.1, worst.2, worst.3
        ),
    )
}

fn design_algebra() -> Line {
    let mut rng = StdRng::seed_from_u64(100);
    let mut worst = 0.0f64;
    let log_uniform = |rng: &mut StdRng, lo: f64, hi: f64| rng.gen_range(lo.ln()..hi.ln()).exp();
    for _ in 0..100 {
        let d = rng.gen_range(0.05..0.95);
        let vb = log_uniform(&mut rng, 1.0, 400.0);
        let lm = log_uniform(&mut rng, 1e-7, 1e-3);
        let lr = log_uniform(&mut rng, 1e-8, 1e-4);
        let fs = log_uniform(&mut rng, 1e4, 1e8);
        let cds = log_uniform(&mut rng, 1e-12, 1e-8);
        let lr_needed = lr_min(cds, vb, ilr_t6(d, vb, lm, fs).unwrap()).unwrap();
        let back = fs_max(lr_needed, d, lm, cds).unwrap();
        worst = worst.max(((back - fs) / fs).abs());
        let cc = cc_min(d, fs, lm, lr).unwrap();
        let back = fs_min(d, cc, lm, lr).unwrap();
        worst = worst.max(((back - fs) / fs).abs());
    }
    report(
        8,
        worst <= 1e-9,
        format!("100 draws, worst round-trip error {worst:.2e}"),
    )
}

fn efficiency_properties(runs: &mut Runs) -> Line {
    let (lossless, _) = runs.solve("prototype", ConverterParams::prototype());
    let eta0 = lossless.report.efficiency.unwrap_or(f64::NAN);
    let mut ok = (eta0 - 1.0).abs() <= 1e-6;

    let lossy = ConverterParams::prototype_lossy();
    let (ss, _) = runs.solve("lossy", lossy);
    let r = &ss.report;
    let gap = r.p_in - r.p_out;
    let sum = r.loss_breakdown.total();
    let closure = ((gap - sum) / gap).abs();
    ok &= r.converged && closure <= 0.01;

    let bumps: [(&str, fn(&mut ConverterParams)); 5] = [
        ("rds_on_s1", |p| p.rds_on_s1 += 0.5),
        ("rds_on_s2", |p| p.rds_on_s2 += 0.5),
        ("vf_diode", |p| p.vf_diode += 0.3),
        ("r_pri", |p| p.r_pri += 1.0),
        ("r_sec", |p| p.r_sec += 1.0),
    ];
    let mut monotone = true;
    for (base_label, base, eta_base) in [
        ("lossless", ConverterParams::prototype(), eta0),
        ("lossy", lossy, r.efficiency.unwrap_or(f64::NAN)),
    ] {
        for (name, bump) in bumps {
            let mut p = base;
            bump(&mut p);
            let (ss, _) = runs.solve(&format!("{base_label}+{name}"), p);
            let eta = ss.report.efficiency.unwrap_or(f64::NAN);
            if !(ss.report.converged && eta <= eta_base + 1e-9) {
                println!("    {base_label} + {name}: efficiency {eta_base:.6} -> {eta:.6}");
                monotone = false;
            }
        }
    }
    ok &= monotone;
    report(
        9,
        ok,
        format!(
            "lossless efficiency {eta0:.9}; lossy breakdown closes to {closure:.2e}; parasitics monotone: {monotone}"
        ),
    )
}

fn mode_machine(runs: &mut Runs) -> Line {
    let (ss, _) = runs.solve("prototype", ConverterParams::prototype());
    let mut seq = ss.report.mode_sequence.clone();
    if seq.len() > 1 && seq.first() == seq.last() {
        seq.pop();
    }
    if let Some(k) = seq.iter().position(|&m| m == ModeId::Mode1) {
        seq.rotate_left(k);
    }
    let in_order = seq == ModeId::CYCLE.to_vec();
    let max_jump = ss
        .period
        .events
        .iter()
        .filter(|e| e.cause != TransitionCause::HardSwitch)
        .map(|e| e.jump())
        .fold(0.0f64, f64::max);
    let ok = ss.report.converged && in_order && !ss.report.hard_switched && max_jump <= 1e-6;
    let labels: Vec<String> = seq.iter().map(|m| m.number().to_string()).collect();
    report(
        10,
        ok,
        format!(
            "sequence {} (hard switched: {}), max state jump {max_jump:.1e}",
            labels.join("-"),
            ss.report.hard_switched
        ),
    )
}

fn main() -> ExitCode {
    let mut runs = Runs { solved: Vec::new() };
    let results = [
        clamp_relation(&mut runs),
        switch_stress(&mut runs),
        mid_band_gain(),
        oracle_equivalence(),
        zvs_bound(&mut runs),
        ilr_at_t6(&mut runs),
        design_algebra(),
        efficiency_properties(&mut runs),
        mode_machine(&mut runs),
    ];
    let mut lines: Vec<Line> = results.into_iter().collect();
    // The balance suite covers every converged run made above.
    lines.push(balances(&runs));
    lines.sort_by_key(|l| l.n);
    for l in &lines {
        let verdict = if l.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2}: {verdict} {}", l.n, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} of {} criteria pass", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
