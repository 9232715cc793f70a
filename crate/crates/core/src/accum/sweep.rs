//! Sweep of the overall error over the target error, with a verdict on
//! whether the curve has a single valley.

use crate::error::{Error, Result};
use crate::sysmodel::{PhaseConfig, SystemParams};

use super::{replica_stats, simulate, ProtocolConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Target errors, strictly increasing within `(0, 0.5]`.
    pub eps_grid: Vec<f64>,
}

impl SweepConfig {
    /// `points` log-spaced targets from `lo` to `hi`.
    pub fn log_grid(lo: f64, hi: f64, points: usize) -> Self {
        let (a, b) = (lo.log10(), hi.log10());
        let step = if points > 1 { (b - a) / (points - 1) as f64 } else { 0.0 };
        Self {
            eps_grid: (0..points).map(|i| 10f64.powf(a + step * i as f64)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.eps_grid.is_empty() {
            bad.push("eps_grid is empty".to_string());
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e > 0.0 && **e <= 0.5)) {
            bad.push(format!("eps_grid value {e} is outside (0, 0.5]"));
        }
        if self.eps_grid.windows(2).any(|w| w[1] <= w[0]) {
            bad.push("eps_grid must be strictly increasing".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub eps_th: f64,
    pub eps: f64,
    pub ci_halfwidth: f64,
    pub eps_out: f64,
    pub avg_tx_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Resolved first differences change sign at most once, from falling to
    /// rising.
    Unimodal,
    /// A resolved rise is followed by a resolved fall.
    NotUnimodal,
    /// No first difference is resolved beyond its confidence interval.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Paired (common random numbers) first differences `ε_{j+1} − ε_j`
    /// with their 95% half-widths.
    pub differences: Vec<(f64, f64)>,
    pub verdict: Verdict,
    /// Grid value with the lowest estimated overall error.
    pub minimizer: f64,
    /// A resolved fall precedes the minimizer and a resolved rise follows it.
    pub interior_minimum: bool,
}

/// Sign of a difference once its confidence interval excludes zero.
fn resolved_sign(mean: f64, halfwidth: f64) -> i8 {
    if mean - halfwidth > 0.0 {
        1
    } else if mean + halfwidth < 0.0 {
        -1
    } else {
        0
    }
}

/// Simulate every grid point with the same seed, so all points see the same
/// fading sequences and differences can be judged replica by replica.
pub fn unimodality_sweep(
    sweep: &SweepConfig,
    params: &SystemParams,
    phase: &PhaseConfig,
    cfg: &ProtocolConfig,
) -> Result<SweepResult> {
    sweep.validate()?;
    let mut points = Vec::with_capacity(sweep.eps_grid.len());
    let mut replica_eps = Vec::with_capacity(sweep.eps_grid.len());
    for &eps_th in &sweep.eps_grid {
        let mut c = *cfg;
        c.target.eps_th = eps_th;
        let m = simulate(params, phase, &c)?;
        points.push(SweepPoint {
            eps_th,
            eps: m.eps_overall,
            ci_halfwidth: m.ci_halfwidth.eps_overall,
            eps_out: m.eps_out,
            avg_tx_power: m.avg_tx_power,
        });
        replica_eps.push(m.replicas.iter().map(|r| r.eps).collect::<Vec<_>>());
    }

    let differences: Vec<(f64, f64)> = replica_eps
        .windows(2)
        .map(|w| {
            let paired: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
            let (mean, _, hw) = replica_stats(&paired);
            (mean, hw)
        })
        .collect();
    let signs: Vec<i8> = differences
        .iter()
        .map(|&(m, h)| resolved_sign(m, h))
        .filter(|s| *s != 0)
        .collect();
    let rise_then_fall = signs.windows(2).any(|w| w[0] > 0 && w[1] < 0);
    let verdict = if signs.is_empty() {
        Verdict::Inconclusive
    } else if rise_then_fall {
        Verdict::NotUnimodal
    } else {
        Verdict::Unimodal
    };

    let (arg, _) = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.eps.total_cmp(&b.1.eps))
        .map(|(i, p)| (i, p.eps))
        .unwrap_or((0, f64::NAN));
    let fall_before = differences[..arg].iter().any(|&(m, h)| resolved_sign(m, h) < 0);
    let rise_after = differences[arg..].iter().any(|&(m, h)| resolved_sign(m, h) > 0);

    Ok(SweepResult {
        minimizer: points[arg].eps_th,
        points,
        differences,
        verdict,
        interior_minimum: verdict == Verdict::Unimodal && fall_before && rise_after,
    })
}
