//! Time-domain model of the active clamp forward converter.

mod analysis;
mod io;
mod mode;
mod params;
mod sim;
mod state;
mod steady;

pub use analysis::{
    evaluate_zvs, loss_breakdown, period_stats, verify_balances, BalanceReport, LossBreakdown,
    PeriodStats, PowerAccount, ZvsCheck, ZvsVerdict,
};
pub use io::{report_json, write_waveform_csv, WAVEFORM_CSV_HEADER};
pub use mode::{
    build_mode_system, detect_transition, resolve, Affine, Guard, GuardKind, HardSwitch, ModeId,
    ModeSystem, Outputs, PrimaryConduction, SecondaryConduction, Switch, Topology, CURRENT_TOL,
    VOLTAGE_TOL,
};
pub use params::{ConverterParams, GateEdge, GateSchedule, Gates};
pub use sim::{
    simulate, GuardKindTag, HardSwitchEvent, Simulation, Simulator, StepControl, Trace,
    TransitionCause, TransitionEvent, WaveformRecord,
};
pub use state::{CircuitState, STATE_LEN};
pub use steady::{
    steady_state, steady_state_from, zvs_check, SteadyState, SteadyStateOptions, SteadyStateReport,
};
