//! Closed-form ZVS and clamp-sizing constraints.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::converter::ConverterParams;
use crate::error::{Error, Result};
use crate::json_number;

fn domain(rule: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        rule,
        detail: detail.into(),
    }
}

fn positive(rule: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(rule, format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(rule: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(domain(
            rule,
            format!("{name} must be non-negative, got {v}"),
        ))
    }
}

fn duty(rule: &'static str, d: f64) -> Result<()> {
    if d.is_finite() && (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(domain(
            rule,
            format!("duty cycle must lie in [0, 1), got {d}"),
        ))
    }
}

/// Leakage current at the start of the lower resonant transition: `d·vb / (2·lm·fs)`.
pub fn ilr_t6(d: f64, vb: f64, lm: f64, fs: f64) -> Result<f64> {
    const RULE: &str = "ilr_t6";
    duty(RULE, d)?;
    non_negative(RULE, "vb", vb)?;
    positive(RULE, "lm", lm)?;
    positive(RULE, "fs", fs)?;
    Ok(d * vb / (2.0 * lm * fs))
}

/// Smallest leakage inductance whose stored energy can discharge `cds` from `vin`.
pub fn lr_min(cds: f64, vin: f64, ilr_t6: f64) -> Result<f64> {
    const RULE: &str = "lr_min";
    non_negative(RULE, "cds", cds)?;
    if !vin.is_finite() {
        return Err(domain(RULE, format!("vin must be finite, got {vin}")));
    }
    if !ilr_t6.is_finite() || ilr_t6 == 0.0 {
        return Err(domain(
            RULE,
            "leakage current is zero, no energy is available for ZVS",
        ));
    }
    Ok(cds * vin * vin / (ilr_t6 * ilr_t6))
}

/// Highest switching frequency at which the leakage energy still covers the node charge.
pub fn fs_max(lr: f64, d: f64, lm: f64, cds: f64) -> Result<f64> {
    const RULE: &str = "fs_max";
    non_negative(RULE, "lr", lr)?;
    duty(RULE, d)?;
    positive(RULE, "lm", lm)?;
    positive(RULE, "cds", cds)?;
    Ok((lr * d * d / (4.0 * lm * lm * cds)).sqrt())
}

/// Clamp capacitance keeping the clamp resonance slow against the switch transition.
pub fn cc_min(d: f64, fs: f64, lm: f64, lr: f64) -> Result<f64> {
    const RULE: &str = "cc_min";
    duty(RULE, d)?;
    positive(RULE, "fs", fs)?;
    non_negative(RULE, "lm", lm)?;
    non_negative(RULE, "lr", lr)?;
    positive(RULE, "lm + lr", lm + lr)?;
    let one_minus_d = 1.0 - d;
    Ok(25.0 * one_minus_d * one_minus_d / (PI * PI * fs * fs * (lm + lr)))
}

/// Lowest switching frequency for a given clamp capacitor; the inverse of [`cc_min`].
pub fn fs_min(d: f64, cc: f64, lm: f64, lr: f64) -> Result<f64> {
    const RULE: &str = "fs_min";
    duty(RULE, d)?;
    positive(RULE, "cc", cc)?;
    non_negative(RULE, "lm", lm)?;
    non_negative(RULE, "lr", lr)?;
    positive(RULE, "lm + lr", lm + lr)?;
    let one_minus_d = 1.0 - d;
    Ok((25.0 * one_minus_d * one_minus_d / (PI * PI * cc * (lm + lr))).sqrt())
}

/// Clamp capacitor voltage `vb / (1 − d)`.
pub fn vc_expected(vb: f64, d: f64) -> Result<f64> {
    duty("vc_expected", d)?;
    Ok(vb / (1.0 - d))
}

/// Main switch off-state voltage, equal to the clamp voltage.
pub fn vds1_peak_expected(vb: f64, d: f64) -> Result<f64> {
    duty("vds1_peak_expected", d)?;
    Ok(vb / (1.0 - d))
}

/// fs_min quoted for the prototype component set in its original design notes.
pub const PROTOTYPE_STATED_FS_MIN_HZ: f64 = 650e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    LrMin,
    FsMax,
    FsMin,
    CcMin,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::LrMin => "lr_min",
            RuleId::FsMax => "fs_max",
            RuleId::FsMin => "fs_min",
            RuleId::CcMin => "cc_min",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one design rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub rule: RuleId,
    /// Limit the operating value is compared against.
    pub limit: f64,
    pub operating: f64,
    pub unit: &'static str,
    /// `> 1` when the rule is met; ties fail.
    pub margin: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl DesignReport {
    fn new(rule: RuleId, limit: f64, operating: f64, unit: &'static str, margin: f64) -> Self {
        Self {
            rule,
            limit,
            operating,
            unit,
            margin,
            pass: margin > 1.0,
            note: None,
        }
    }
}

fn same_components_as_prototype(p: &ConverterParams) -> bool {
    let q = ConverterParams::prototype();
    p.d == q.d && p.cc == q.cc && p.lm == q.lm && p.lr == q.lr
}

/// Evaluate every rule at the operating point of `p`.
pub fn feasibility_report(p: &ConverterParams) -> Result<Vec<DesignReport>> {
    p.validate()?;
    let i6 = ilr_t6(p.d, p.vb, p.lm, p.fs)?;
    let lr_rule = match lr_min(p.cds, p.vb, i6) {
        Ok(limit) => {
            let margin = if limit > 0.0 {
                p.lr / limit
            } else {
                f64::INFINITY
            };
            DesignReport::new(RuleId::LrMin, limit, p.lr, "H", margin)
        }
        Err(e) => DesignReport {
            note: Some(e.to_string()),
            ..DesignReport::new(RuleId::LrMin, f64::INFINITY, p.lr, "H", 0.0)
        },
    };

    let fmax = fs_max(p.lr, p.d, p.lm, p.cds)?;
    let fmin = fs_min(p.d, p.cc, p.lm, p.lr)?;
    let ccmin = cc_min(p.d, p.fs, p.lm, p.lr)?;

    let mut fs_min_rule = DesignReport::new(RuleId::FsMin, fmin, p.fs, "Hz", p.fs / fmin);
    if same_components_as_prototype(p) {
        fs_min_rule.note = Some(format!(
            "closed form gives {:.0} kHz; the prototype design quotes {:.0} kHz",
            fmin / 1e3,
            PROTOTYPE_STATED_FS_MIN_HZ / 1e3
        ));
    }
    Ok(vec![
        lr_rule,
        DesignReport::new(RuleId::FsMax, fmax, p.fs, "Hz", fmax / p.fs),
        fs_min_rule,
        DesignReport::new(RuleId::CcMin, ccmin, p.cc, "F", p.cc / ccmin),
    ])
}

pub fn all_pass(reports: &[DesignReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

/// Reports as a flat JSON object keyed `<rule>.<field>`.
pub fn report_json(reports: &[DesignReport]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for r in reports {
        let k = r.rule.as_str();
        map.insert(format!("{k}.limit"), json_number(r.limit));
        map.insert(format!("{k}.operating"), json_number(r.operating));
        map.insert(format!("{k}.unit"), r.unit.into());
        map.insert(format!("{k}.margin"), json_number(r.margin));
        map.insert(format!("{k}.pass"), r.pass.into());
        if let Some(n) = &r.note {
            map.insert(format!("{k}.note"), n.clone().into());
        }
    }
    map.insert("all_pass".into(), all_pass(reports).into());
    serde_json::Value::Object(map)
}

/// Aligned plain-text table, one row per rule.
pub fn report_table(reports: &[DesignReport]) -> String {
    let header = ["rule", "limit", "operating", "unit", "margin", "result"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.rule.to_string(),
                format!("{:.6e}", r.limit),
                format!("{:.6e}", r.operating),
                r.unit.to_string(),
                format!("{:.4}", r.margin),
                if r.pass { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&cells));
        out.push('\n');
    }
    for r in reports {
        if let Some(n) = &r.note {
            out.push_str(&format!("note ({}): {}\n", r.rule, n));
        }
    }
    out
}
