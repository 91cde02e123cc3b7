//! Periodic steady state.
//!
//! The output filter rings with a quality factor well above ten, so plain
//! cycle-by-cycle integration settles over thousands of periods. After a
//! short warm-up the fixed point of the period map is found by Newton
//! shooting with a finite-difference Jacobian; plain iteration remains the
//! fallback whenever a Newton step fails to reduce the mismatch.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::analysis::{
    evaluate_zvs, loss_breakdown, period_stats, verify_balances, BalanceReport, LossBreakdown,
    ZvsVerdict,
};
use super::mode::ModeId;
use super::params::{ConverterParams, GateEdge};
use super::sim::{Simulator, StepControl, Trace, TransitionCause};
use super::state::CircuitState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadyStateOptions {
    /// Normalized period-to-period mismatch accepted as converged.
    pub tolerance: f64,
    /// Budget of simulated periods, including Jacobian probes.
    pub max_cycles: usize,
    /// Use Newton shooting after the warm-up; plain iteration otherwise.
    pub accelerate: bool,
    /// Plain periods run before the first Newton step.
    pub warmup_cycles: usize,
    pub step: StepControl,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_cycles: 5000,
            accelerate: true,
            warmup_cycles: 20,
            step: StepControl::default(),
        }
    }
}

/// Summary of the final simulated period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub converged: bool,
    /// Periods simulated, Jacobian probes included.
    pub cycles_used: usize,
    /// Normalized mismatch of the final period.
    pub residual: f64,
    pub tolerance: f64,
    pub v_cc_mean: f64,
    pub v_ds1_peak: f64,
    pub v_out_mean: f64,
    pub i_out_mean: f64,
    /// Leakage current when S2 turns off and the lower resonant transition begins.
    pub i_lr_at_mode6_entry: Option<f64>,
    pub zvs_s1: ZvsVerdict,
    pub zvs_s2: ZvsVerdict,
    pub p_in: f64,
    pub p_out: f64,
    /// `p_out / p_in`; absent when no input power flows.
    pub efficiency: Option<f64>,
    pub loss_breakdown: LossBreakdown,
    pub balances: BalanceReport,
    pub mode_sequence: Vec<ModeId>,
    /// Whether any transition was a forced (hard) turn-on.
    pub hard_switched: bool,
    /// State at the start of the final period.
    pub boundary_state: CircuitState,
}

/// Report together with the waveforms it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub report: SteadyStateReport,
    pub period: Trace,
}

struct Budget {
    used: usize,
    max: usize,
}

impl Budget {
    fn take(&mut self) -> bool {
        if self.used >= self.max {
            false
        } else {
            self.used += 1;
            true
        }
    }
}

fn period_map(sim: &mut Simulator, x: CircuitState) -> Result<CircuitState> {
    sim.reset(x);
    Ok(sim.run_period(false)?.end_state)
}

const MAX_NEWTON_FAILURES: usize = 6;
const DAMPING: [f64; 3] = [1.0, 0.5, 0.25];

/// Try `x + λ(full − x)` for decreasing `λ`; accept the first that lowers the mismatch.
fn line_search(
    sim: &mut Simulator,
    x: &CircuitState,
    full: &CircuitState,
    residual: f64,
    budget: &mut Budget,
) -> Result<Option<(CircuitState, CircuitState, f64)>> {
    let xv = x.to_vector();
    let dv = full.to_vector() - xv;
    for lambda in DAMPING {
        if !budget.take() {
            return Ok(None);
        }
        let c = CircuitState::from_vector(&(xv + dv * lambda));
        match period_map(sim, c) {
            Ok(pc) => {
                let r = pc.normalized_distance(&c);
                if r < residual {
                    return Ok(Some((c, pc, r)));
                }
            }
            Err(Error::Integration { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

fn probe_scale(j: usize, v: f64) -> f64 {
    // Currents probed around 0.1 A, voltages around 1 V.
    let floor = if matches!(j, 0 | 1 | 4) { 0.1 } else { 1.0 };
    1e-7 * v.abs().max(floor)
}

/// One Newton step on `P(x) − x = 0`. Returns `None` when the budget runs out or a probe fails.
fn newton_step(
    sim: &mut Simulator,
    x: &CircuitState,
    px: &CircuitState,
    budget: &mut Budget,
) -> Result<Option<CircuitState>> {
    let xv = x.to_vector();
    let pv = px.to_vector();
    let mut jac = Matrix6::<f64>::zeros();
    for j in 0..6 {
        if !budget.take() {
            return Ok(None);
        }
        let h = probe_scale(j, xv[j]);
        let mut xp = xv;
        xp[j] += h;
        let pj = match period_map(sim, CircuitState::from_vector(&xp)) {
            Ok(v) => v.to_vector(),
            // A probe outside the physical region counts as a failed step.
            Err(Error::Integration { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        jac.set_column(j, &((pj - pv) / h));
    }
    let lhs = Matrix6::identity() - jac;
    let rhs: Vector6<f64> = pv - xv;
    Ok(lhs
        .lu()
        .solve(&rhs)
        .map(|dx| CircuitState::from_vector(&(xv + dx))))
}

/// Drive the converter to its periodic steady state and summarize the last period.
///
/// Running out of budget is not an error: the report comes back with
/// `converged = false` and describes the last period simulated.
pub fn steady_state(params: &ConverterParams, options: &SteadyStateOptions) -> Result<SteadyState> {
    steady_state_from(params, options, params.warm_start())
}

pub fn steady_state_from(
    params: &ConverterParams,
    options: &SteadyStateOptions,
    initial: CircuitState,
) -> Result<SteadyState> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidParameter {
            field: "tolerance",
            reason: format!("must be positive, got {}", options.tolerance),
        });
    }
    if options.max_cycles == 0 {
        return Err(Error::Precondition("max_cycles must be at least 1".into()));
    }
    let mut sim = Simulator::new(*params, initial, options.step)?;
    let mut budget = Budget {
        used: 0,
        max: options.max_cycles,
    };
    // Newton keeps going past the requested tolerance so charge balances
    // computed from the final period are not dominated by the mismatch.
    let polish = (options.tolerance * 1e-4).max(1e-12);

    let mut x = initial;
    let newton_allowed = |failures: usize| options.accelerate && failures < MAX_NEWTON_FAILURES;

    // One period stays reserved for the recorded final pass.
    if budget.max > 1 {
        budget.take();
        let mut px = period_map(&mut sim, x)?;
        let mut residual = px.normalized_distance(&x);
        let mut plain = 1usize;
        let mut newton_failures = 0usize;
        loop {
            let target = if newton_allowed(newton_failures) {
                polish
            } else {
                options.tolerance
            };
            if residual < target {
                break;
            }
            // Each failed attempt doubles the plain run before the next one.
            let warmup = options.warmup_cycles.max(1) << newton_failures;
            let try_newton = newton_allowed(newton_failures)
                && plain >= warmup
                && budget.used + 6 + DAMPING.len() < budget.max;
            if try_newton {
                plain = 0;
                match newton_step(&mut sim, &x, &px, &mut budget)? {
                    Some(full) if full.is_finite() => {
                        match line_search(&mut sim, &x, &full, residual, &mut budget)? {
                            Some((c, pc, r)) => {
                                x = c;
                                px = pc;
                                residual = r;
                                // Stay in Newton mode while it keeps improving.
                                plain = usize::MAX;
                                continue;
                            }
                            None => newton_failures += 1,
                        }
                    }
                    _ => newton_failures += 1,
                }
            }
            if budget.used + 1 >= budget.max {
                break;
            }
            budget.take();
            x = px;
            px = period_map(&mut sim, x)?;
            residual = px.normalized_distance(&x);
            plain = plain.saturating_add(1);
        }
    }

    // Recorded final period from the best boundary estimate, on a fresh time base.
    budget.used += 1;
    let mut fresh = Simulator::new(*params, x, options.step)?;
    let period = fresh.run_period(true)?;
    let residual = period.end_state.normalized_distance(&period.start_state);
    let converged = residual < options.tolerance;
    let report = summarize(
        params,
        &period,
        converged,
        budget.used,
        residual,
        options.tolerance,
    )?;
    Ok(SteadyState { report, period })
}

fn summarize(
    p: &ConverterParams,
    period: &Trace,
    converged: bool,
    cycles_used: usize,
    residual: f64,
    tolerance: f64,
) -> Result<SteadyStateReport> {
    let stats = period_stats(period, p);
    let zvs = evaluate_zvs(period);
    let i_lr_at_mode6_entry = period
        .events
        .iter()
        .find(|e| e.to == ModeId::Mode6)
        .or_else(|| {
            period
                .events
                .iter()
                .find(|e| e.cause == TransitionCause::Gate(GateEdge::S2Off))
        })
        .map(|e| e.after.i_lr);
    let (p_in, p_out, efficiency, losses) = match loss_breakdown(period, p) {
        Ok(acc) => (acc.p_in, acc.p_out, Some(acc.efficiency), acc.losses),
        Err(Error::UndefinedEfficiency(p_in)) => (p_in, 0.0, None, LossBreakdown::default()),
        Err(e) => return Err(e),
    };
    Ok(SteadyStateReport {
        converged,
        cycles_used,
        residual,
        tolerance,
        v_cc_mean: stats.v_cc_mean,
        v_ds1_peak: stats.v_ds1_peak,
        v_out_mean: stats.v_out_mean,
        i_out_mean: stats.i_out_mean,
        i_lr_at_mode6_entry,
        zvs_s1: zvs.s1,
        zvs_s2: zvs.s2,
        p_in,
        p_out,
        efficiency,
        loss_breakdown: losses,
        balances: verify_balances(period, p),
        mode_sequence: period.mode_sequence(),
        hard_switched: !period.hard_switches.is_empty(),
        boundary_state: period.start_state,
    })
}

/// ZVS verdicts, defined only for a converged steady state.
pub fn zvs_check(report: &SteadyStateReport, period: &Trace) -> Result<super::analysis::ZvsCheck> {
    if !report.converged {
        return Err(Error::Precondition(
            "ZVS is judged on a converged steady state; the report is not converged".into(),
        ));
    }
    Ok(evaluate_zvs(period))
}
