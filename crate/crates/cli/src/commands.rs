use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use acfc_core::converter::{
    report_json, steady_state, write_waveform_csv, zvs_check, ConverterParams, SteadyStateOptions,
};
use acfc_core::design::{all_pass, feasibility_report, report_json as design_json, report_table};
use acfc_core::json_number;
use acfc_core::transformer::{bandwidth, frequency_sweep_loaded, write_sweep_csv};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::config::{parse_list, with_field, Primary, Settings};
use crate::CliError;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
}

impl Common {
    fn settings(&self, primary: Primary) -> Result<Settings, CliError> {
        Settings::load(
            self.config.as_deref(),
            self.preset.as_deref(),
            &self.sets,
            primary,
        )
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Run(format!("cannot write {}: {e}", path.display()))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Config(format!(
            "output directory {} is not writable: {e}",
            dir.display()
        ))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Run(format!("stdout: {e}")))
}

fn opt_number(v: Option<f64>) -> Value {
    v.map_or(Value::Null, json_number)
}

fn opt_hz(v: Option<f64>) -> String {
    v.map_or("none".to_string(), |f| format!("{f:.6e} Hz"))
}

#[derive(Debug, Clone, Default)]
pub struct BodeArgs {
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub ppd: Option<usize>,
}

pub fn bode(common: &Common, args: &BodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = common.settings(Primary::Transformer)?;
    let params = s.transformer()?;
    let from = args.from.or(s.number("bode", "from")?).unwrap_or(10e3);
    let to = args.to.or(s.number("bode", "to")?).unwrap_or(100e6);
    let ppd = args.ppd.or(s.count("bode", "ppd")?).unwrap_or(20);
    let load = s.number("bode", "load_ohms")?;

    let points = frequency_sweep_loaded(&params, from, to, ppd, load)?;
    let bw = bandwidth(&params, from, to)?;

    let dir = s.out_dir(common.out.clone())?.unwrap_or_else(|| ".".into());
    prepare_dir(&dir)?;
    let csv_path = dir.join("bode.csv");
    write_sweep_csv(&points, create(&csv_path)?)?;

    let mut m = Map::new();
    m.insert("points".into(), points.len().into());
    m.insert("f_start_hz".into(), json_number(from));
    m.insert("f_stop_hz".into(), json_number(to));
    m.insert("points_per_decade".into(), ppd.into());
    m.insert("mid_band_gain".into(), json_number(bw.plateau_gain));
    m.insert(
        "mid_band_gain_db".into(),
        json_number(20.0 * bw.plateau_gain.log10()),
    );
    m.insert("mid_band_hz".into(), json_number(bw.plateau_hz));
    m.insert("lower_3db_hz".into(), opt_number(bw.lower_hz));
    m.insert("upper_3db_hz".into(), opt_number(bw.upper_hz));
    m.insert("load_ohms".into(), opt_number(load));
    let summary_path = dir.join("bode_summary.json");
    write_json(&summary_path, &Value::Object(m))?;

    say(out, format!("points         {}", points.len()))?;
    say(out, format!("mid-band gain  {:.6}", bw.plateau_gain))?;
    say(out, format!("lower -3 dB    {}", opt_hz(bw.lower_hz)))?;
    say(out, format!("upper -3 dB    {}", opt_hz(bw.upper_hz)))?;
    say(out, format!("wrote {}", csv_path.display()))?;
    say(out, format!("wrote {}", summary_path.display()))
}

pub fn simulate(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let s = common.settings(Primary::Converter)?;
    let params = s.converter()?;
    let options = s.steady_state_options()?;
    let dir = s.out_dir(common.out.clone())?.unwrap_or_else(|| ".".into());
    prepare_dir(&dir)?;

    let ss = steady_state(&params, &options)?;
    let wave_path = dir.join("waveforms.csv");
    write_waveform_csv(&ss.period, &params, create(&wave_path)?)?;
    let report_path = dir.join("report.json");
    write_json(&report_path, &report_json(&ss.report))?;

    let r = &ss.report;
    say(out, format!("converged      {}", r.converged))?;
    say(out, format!("cycles used    {}", r.cycles_used))?;
    say(out, format!("residual       {:.3e}", r.residual))?;
    say(out, format!("v_cc mean      {:.6} V", r.v_cc_mean))?;
    say(out, format!("v_ds1 peak     {:.6} V", r.v_ds1_peak))?;
    say(out, format!("v_out mean     {:.6} V", r.v_out_mean))?;
    say(out, format!("zvs s1 / s2    {} / {}", r.zvs_s1.zvs, r.zvs_s2.zvs))?;
    match r.efficiency {
        Some(eta) => say(out, format!("efficiency     {eta:.6}"))?,
        None => say(out, "efficiency     undefined")?,
    }
    say(out, format!("wrote {}", wave_path.display()))?;
    say(out, format!("wrote {}", report_path.display()))?;
    if !r.converged {
        return Err(CliError::Run(format!(
            "steady state not reached after {} cycles (residual {:.3e}, tolerance {:.3e})",
            r.cycles_used, r.residual, r.tolerance
        )));
    }
    Ok(())
}

pub fn check(common: &Common, strict: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let s = common.settings(Primary::Converter)?;
    let params = s.converter()?;
    let reports = feasibility_report(&params)?;
    write!(out, "{}", report_table(&reports)).map_err(|e| CliError::Run(e.to_string()))?;
    if let Some(dir) = s.out_dir(common.out.clone())? {
        prepare_dir(&dir)?;
        let path = dir.join("check.json");
        write_json(&path, &design_json(&reports))?;
        say(out, format!("wrote {}", path.display()))?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.rule.as_str())
        .collect();
    if !all_pass(&reports) && strict {
        return Err(CliError::Strict(format!(
            "design rules failed: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub param: Option<String>,
    pub values: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub points: Option<usize>,
    pub log: bool,
}

pub const SWEEP_CSV_HEADER: [&str; 16] = [
    "param",
    "value",
    "converged",
    "cycles_used",
    "residual",
    "v_cc_mean_v",
    "v_ds1_peak_v",
    "v_out_mean_v",
    "p_in_w",
    "p_out_w",
    "efficiency",
    "zvs_s1",
    "zvs_s2",
    "hard_switched",
    "mode_sequence",
    "error",
];

fn sweep_values(s: &Settings, args: &SweepArgs) -> Result<Vec<f64>, CliError> {
    if let Some(v) = &args.values {
        return parse_list(v, "--values");
    }
    let from = args.from.or(s.number("sweep", "from")?);
    let to = args.to.or(s.number("sweep", "to")?);
    if from.is_none() && to.is_none() {
        return Ok(s.list("sweep", "values")?.unwrap_or_default());
    }
    let (Some(from), Some(to)) = (from, to) else {
        return Err(CliError::Config(
            "a sweep range needs both `from` and `to`".into(),
        ));
    };
    if !(from.is_finite() && to.is_finite()) || from > to {
        return Err(CliError::Config(format!(
            "sweep range [{from}, {to}] is empty"
        )));
    }
    let n = args.points.or(s.count("sweep", "points")?).unwrap_or(2);
    let log = args.log || s.string("sweep", "spacing")?.as_deref() == Some("log");
    if log && from <= 0.0 {
        return Err(CliError::Config(
            "logarithmic sweep needs a positive start".into(),
        ));
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if i == n - 1 {
                    to
                } else if log {
                    from * (to / from).powf(t)
                } else {
                    from + (to - from) * t
                }
            })
            .collect(),
    })
}

fn sweep_point(
    base: &ConverterParams,
    options: &SteadyStateOptions,
    param: &str,
    value: f64,
) -> Result<[String; 16], CliError> {
    let p = with_field(base, param, value)?;
    p.validate()?;
    let ss = steady_state(&p, options)?;
    let r = &ss.report;
    let (zvs_s1, zvs_s2) = match zvs_check(r, &ss.period) {
        Ok(z) => (z.s1.zvs.to_string(), z.s2.zvs.to_string()),
        Err(_) => (String::new(), String::new()),
    };
    let f = |v: f64| format!("{v:.12e}");
    let seq: Vec<String> = r.mode_sequence.iter().map(|m| m.number().to_string()).collect();
    Ok([
        param.to_string(),
        f(value),
        r.converged.to_string(),
        r.cycles_used.to_string(),
        f(r.residual),
        f(r.v_cc_mean),
        f(r.v_ds1_peak),
        f(r.v_out_mean),
        f(r.p_in),
        f(r.p_out),
        r.efficiency.map(f).unwrap_or_default(),
        zvs_s1,
        zvs_s2,
        r.hard_switched.to_string(),
        seq.join(" "),
        if r.converged {
            String::new()
        } else {
            "not converged".to_string()
        },
    ])
}

fn failed_row(param: &str, value: f64, e: &CliError) -> [String; 16] {
    let mut row: [String; 16] = Default::default();
    row[0] = param.to_string();
    row[1] = format!("{value:.12e}");
    row[2] = "false".into();
    row[15] = e.to_string();
    row
}

pub fn sweep(common: &Common, args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = common.settings(Primary::Converter)?;
    let base = s.converter()?;
    let options = s.steady_state_options()?;
    let param = match &args.param {
        Some(p) => p.clone(),
        None => s.string("sweep", "param")?.unwrap_or_else(|| "fs".into()),
    };
    // An unknown parameter is a configuration error, not a per-point one.
    with_field(&base, &param, 0.0)?;
    let values = sweep_values(&s, args)?;
    if values.is_empty() {
        return Err(CliError::Config("sweep range is empty".into()));
    }
    let dir = s.out_dir(common.out.clone())?.unwrap_or_else(|| ".".into());
    prepare_dir(&dir)?;

    let rows: Vec<(bool, [String; 16])> = values
        .par_iter()
        .map(|&v| match sweep_point(&base, &options, &param, v) {
            Ok(row) => (row[2] == "true", row),
            Err(e) => (false, failed_row(&param, v, &e)),
        })
        .collect();

    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let csv_err = |e: csv::Error| io_err(&path, e);
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for (_, row) in &rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    say(out, format!("{:<18} {:<10} {:<7} {:<7} error", param, "converged", "zvs_s1", "zvs_s2"))?;
    for (_, row) in &rows {
        say(
            out,
            format!(
                "{:<18} {:<10} {:<7} {:<7} {}",
                row[1], row[2], row[11], row[12], row[15]
            )
            .trim_end(),
        )?;
    }
    say(out, format!("wrote {}", path.display()))?;
    let bad = rows.iter().filter(|(ok, _)| !ok).count();
    if bad > 0 {
        return Err(CliError::Run(format!(
            "{bad} of {} sweep points failed or did not converge",
            rows.len()
        )));
    }
    Ok(())
}
