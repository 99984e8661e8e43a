//! Capture-efficiency simulation.
//!
//! When a fraction `c` of referrals is routed by the model, the effective
//! procedure rate mixes the baseline rate `b` and the model-selected rate
//! `m` linearly: `e = (1 - c) * b + c * m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{two_proportion_test, ProportionTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureScenario {
    pub baseline_rate: f64,
    pub model_rate: f64,
    pub capture_levels: Vec<f64>,
    pub n_referrals: u64,
    pub price_per_procedure: f64,
}

impl Default for CaptureScenario {
    fn default() -> Self {
        CaptureScenario {
            baseline_rate: 0.1127,
            model_rate: 0.601,
            capture_levels: vec![0.05, 0.10, 0.20, 0.40, 0.80],
            n_referrals: 5000,
            price_per_procedure: 5000.0,
        }
    }
}

impl CaptureScenario {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("baseline_rate", self.baseline_rate),
            ("model_rate", self.model_rate),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!("{name} {r} outside (0, 1)")));
            }
        }
        if let Some(c) = self
            .capture_levels
            .iter()
            .find(|c| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::invalid(format!("capture level {c} outside [0, 1]")));
        }
        if self.n_referrals == 0 {
            return Err(Error::invalid("n_referrals must be at least 1"));
        }
        if !(self.price_per_procedure >= 0.0 && self.price_per_procedure.is_finite()) {
            return Err(Error::invalid("price_per_procedure must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureRow {
    pub capture: f64,
    pub effective_rate: f64,
    pub pct_increase: f64,
    pub procedures: u64,
    pub revenue_increase: f64,
}

pub fn effective_rate(baseline: f64, model: f64, capture: f64) -> Result<f64> {
    if !(baseline > 0.0 && baseline < 1.0 && model > 0.0 && model < 1.0) {
        return Err(Error::invalid("rates must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&capture) {
        return Err(Error::invalid(format!(
            "capture level {capture} outside [0, 1]"
        )));
    }
    Ok((1.0 - capture) * baseline + capture * model)
}

pub fn pct_increase(baseline: f64, rate: f64) -> f64 {
    (rate - baseline) / baseline * 100.0
}

/// Least-squares model rate for observed `(capture, effective_rate)` pairs
/// under linear mixing with a known baseline.
pub fn invert_model_rate(baseline: f64, observed: &[(f64, f64)]) -> Result<f64> {
    let den: f64 = observed.iter().map(|(c, _)| c * c).sum();
    if den == 0.0 {
        return Err(Error::invalid(
            "inversion needs at least one nonzero capture level",
        ));
    }
    let num: f64 = observed.iter().map(|(c, e)| c * (e - baseline)).sum();
    Ok(baseline + num / den)
}

/// Half-away-from-zero, which is what `f64::round` does.
fn round_count(v: f64) -> u64 {
    v.round() as u64
}

pub fn simulate_capture(s: &CaptureScenario) -> Result<Vec<CaptureRow>> {
    s.validate()?;
    let n = s.n_referrals as f64;
    let baseline_procedures = round_count(n * s.baseline_rate);
    s.capture_levels
        .iter()
        .map(|&c| {
            let e = effective_rate(s.baseline_rate, s.model_rate, c)?;
            let procedures = round_count(n * e);
            Ok(CaptureRow {
                capture: c,
                effective_rate: e,
                pct_increase: pct_increase(s.baseline_rate, e),
                procedures,
                revenue_increase: (procedures as f64 - baseline_procedures as f64)
                    * s.price_per_procedure,
            })
        })
        .collect()
}

/// Table-shaped CSV; values are rounded only here.
pub fn capture_csv(rows: &[CaptureRow]) -> String {
    let mut out = String::from(
        "capture_pct,effective_rate_pct,pct_increase,procedures,revenue_increase_musd\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{:.2},{:.2},{},{:.2}\n",
            fmt_pct(r.capture * 100.0),
            r.effective_rate * 100.0,
            r.pct_increase,
            r.procedures,
            r.revenue_increase / 1e6
        ));
    }
    out
}

fn fmt_pct(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

/// Two-proportion test between the baseline and model rates, with counts
/// `round(n * rate)` in groups of the given sizes.
pub fn compare_rates(
    baseline: f64,
    n_baseline: u64,
    model: f64,
    n_model: u64,
) -> Result<ProportionTest> {
    if !(0.0..=1.0).contains(&baseline) || !(0.0..=1.0).contains(&model) {
        return Err(Error::invalid("rates must lie in [0, 1]"));
    }
    two_proportion_test(
        round_count(n_baseline as f64 * baseline),
        n_baseline,
        round_count(n_model as f64 * model),
        n_model,
    )
}
