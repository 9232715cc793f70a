//! Harvest-then-transmit: error probability (exact quadrature and the
//! piecewise-linear closed form) and average transmit power.

use std::f64::consts::{PI, TAU};

use crate::error::Result;
use crate::fbl::block_error;
use crate::numerics::{integrate_with_breaks, ln_gamma, unit_gamma_pdf, upper_gamma_reg, Tolerance};
use crate::sysmodel::{derive_link, DerivedLink, PhaseConfig, SystemParams};

/// Gamma tail mass beyond which the error integrand is dropped.
const TAIL_CUTOFF: f64 = 1e-18;

/// Constants of the piecewise-linear Q approximation and its clamp points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HttConstants {
    pub theta: f64,
    pub slope_phi: f64,
    pub varrho: f64,
    pub vartheta: f64,
    /// `[β, βλ]`; the second entry is `+∞` for an unbounded battery.
    pub mu: [f64; 2],
    pub zeta: [f64; 2],
    pub varphi: [f64; 2],
    pub omega1: f64,
    pub omega2: f64,
    pub z11: f64,
    pub z12: f64,
    pub z13: f64,
    pub z14: f64,
    pub z15: f64,
    pub z16: f64,
    pub z21: f64,
    pub z22: f64,
    pub z23: f64,
    /// `max(ϖ*, λ)`.
    pub tau: f64,
    pub varpi_star: f64,
    pub lambda: f64,
}

/// Build the approximation constants for one link and phase.
///
/// When `ϱ ≤ 0` the lower junction of the approximation is pinned at `g = 0`
/// (`ζ = 0`), so the affine branch starts at the origin.
pub fn build_constants(link: &DerivedLink, phase: &PhaseConfig) -> HttConstants {
    let r = phase.rate();
    let n = phase.n as f64;
    let theta = r.exp2() - 1.0;
    let slope_phi = (n / TAU).sqrt() / ((2.0 * r).exp2() - 1.0).sqrt();
    let half_width = (PI / 2.0).sqrt() / slope_phi;
    let varrho = theta - half_width;
    let vartheta = theta + half_width;
    let beta = link.beta;
    let lambda = link.lambda_or_inf();
    let mu = [beta, beta * lambda];
    let zeta = mu.map(|m| (varrho.max(0.0) / m).sqrt());
    let varphi = mu.map(|m| (vartheta / m).sqrt());
    let ws = link.varpi_star;

    let z15 = zeta[0].min(ws);
    let z16 = zeta[0].max(ws).min(varphi[0]);
    let (z11, z12) = (zeta[0].min(lambda), varphi[0].min(lambda));
    let z13 = z11.min(ws);
    let z14 = z11.max(ws).min(z12);
    let z23 = lambda.max(ws);
    let z21 = (zeta[1] * zeta[1]).max(z23);
    let z22 = (varphi[1] * varphi[1]).max(z23);

    HttConstants {
        theta,
        slope_phi,
        varrho,
        vartheta,
        mu,
        zeta,
        varphi,
        omega1: 0.5 + slope_phi * theta / TAU.sqrt(),
        omega2: slope_phi * beta / TAU.sqrt(),
        z11,
        z12,
        z13,
        z14,
        z15,
        z16,
        z21,
        z22,
        z23,
        tau: z23,
        varpi_star: ws,
        lambda,
    }
}

/// Piecewise-linear approximation of the block error as a function of the
/// SNR `μ g^t`, with `t = 2` below battery saturation and `t = 1` above.
pub fn omega_approx(mu: f64, t: u8, g: f64, c: &HttConstants) -> f64 {
    let snr = mu * g.powi(t as i32);
    if snr <= c.varrho {
        1.0
    } else if snr >= c.vartheta {
        0.0
    } else {
        (0.5 - c.slope_phi * (snr - c.theta) / TAU.sqrt()).clamp(0.0, 1.0)
    }
}

/// Error probability split into power-transfer failure `eps1` and
/// decoding failure `eps2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HttError {
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Closed-form result with a flag raised when it had to be clamped into
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub eps2: f64,
    pub raw: f64,
    pub clamped: bool,
}

impl ClosedForm {
    fn from_raw(raw: f64) -> Self {
        let eps2 = raw.clamp(0.0, 1.0);
        Self {
            eps2,
            raw,
            clamped: eps2 != raw,
        }
    }
}

/// `1 − Γ(m, mϖ*)/Γ(m)`.
pub fn power_transfer_failure(m: f64, varpi_star: f64) -> Result<f64> {
    Ok(1.0 - upper_gamma_reg(m, m * varpi_star)?)
}

fn tail_limit(m: f64) -> Result<f64> {
    let mut x = 1.0;
    while upper_gamma_reg(m, m * x)? > TAIL_CUTOFF {
        x *= 2.0;
    }
    Ok(x)
}

fn quad_tolerance() -> Tolerance {
    Tolerance {
        abs_tol: 1e-18,
        rel_tol: 1e-10,
        max_depth: 50,
    }
}

/// `∫_a^b h(g) f(g) dg` with `f` the unit-mean gamma density of shape `m`.
/// For `m < 1` the density is singular at 0, so the integral is taken over
/// `u = g^m`, which absorbs the singularity.
fn gamma_expectation<H: Fn(f64) -> f64>(h: H, m: f64, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let tol = quad_tolerance();
    // Dyadic breaks keep every initial panel narrow enough that the
    // block-error waterfall cannot fall between Kronrod nodes unnoticed.
    let breaks: Vec<f64> = breaks
        .iter()
        .copied()
        .chain((-8..=6).map(|j| 2f64.powi(j)))
        .collect();
    let breaks = breaks.as_slice();
    if m < 1.0 {
        let scale = ((m - 1.0) * m.ln() - ln_gamma(m)).exp();
        let inv = 1.0 / m;
        let mapped: Vec<f64> = breaks.iter().map(|x| x.powf(m)).collect();
        let est = integrate_with_breaks(
            |u| {
                let g = u.powf(inv);
                scale * (-m * g).exp() * h(g)
            },
            a.powf(m),
            b.powf(m),
            &mapped,
            tol,
        )?;
        Ok(est.value)
    } else {
        let est = integrate_with_breaks(|g| h(g) * unit_gamma_pdf(m, g), a, b, breaks, tol)?;
        Ok(est.value)
    }
}

/// Error probability by numerical integration of the normal approximation
/// against the gamma fading density. Serves as ground truth for the closed
/// forms.
pub fn error_htt_exact(params: &SystemParams, phase: &PhaseConfig) -> Result<HttError> {
    params.validate()?;
    let link = derive_link(params, phase);
    let c = build_constants(&link, phase);
    let m = params.m_shape;
    let (n, k) = (phase.n, phase.k);
    let beta = link.beta;
    let ws = link.varpi_star;
    let lambda = c.lambda;
    let top = tail_limit(m)?;

    let eps1 = power_transfer_failure(m, ws)?;

    let quad_breaks = [(c.theta / beta).sqrt(), c.zeta[0], c.varphi[0]];
    let eps2_quad = gamma_expectation(
        |g| block_error(beta * g * g, n, k),
        m,
        ws,
        lambda.min(top),
        &quad_breaks,
    )?;

    let eps2_lin = if lambda.is_finite() {
        let mu2 = c.mu[1];
        let lin_breaks = [c.theta / mu2, c.zeta[1] * c.zeta[1], c.varphi[1] * c.varphi[1]];
        gamma_expectation(
            |g| block_error(mu2 * g, n, k),
            m,
            ws.max(lambda),
            top.max(ws.max(lambda)),
            &lin_breaks,
        )?
    } else {
        0.0
    };

    let eps2 = (eps2_quad + eps2_lin).clamp(0.0, 1.0);
    Ok(HttError {
        eps: (eps1 + eps2).min(1.0),
        eps1,
        eps2,
    })
}

/// Closed-form decoding-failure probability for a finite battery, evaluated
/// from the constants directly (unclamped).
pub fn closed_form_finite(c: &HttConstants, m: f64) -> Result<f64> {
    let q = |a: f64, z: f64| upper_gamma_reg(a, m * z);
    let (w1, w2) = (c.omega1, c.omega2);
    Ok(q(m, c.z13)? + q(m, c.z23)? - q(m, c.z11)?
        + w1 * (q(m, c.z14)? - q(m, c.z12)? - q(m, c.z22)?)
        + w2 * (m + 1.0) / m * (q(m + 2.0, c.z12)? - q(m + 2.0, c.z14)?)
        + (w1 - 1.0) * q(m, c.z21)?
        + w2 * c.z23 * (q(m + 1.0, c.z22)? - q(m + 1.0, c.z21)?))
}

/// Closed-form decoding-failure probability for an unbounded battery
/// (unclamped).
pub fn closed_form_unbounded(c: &HttConstants, m: f64) -> Result<f64> {
    let q = |a: f64, z: f64| upper_gamma_reg(a, m * z);
    let (w1, w2) = (c.omega1, c.omega2);
    Ok(q(m, c.z15)? - q(m, c.zeta[0])?
        + w1 * (q(m, c.z16)? - q(m, c.varphi[0])?)
        + w2 * (m + 1.0) / m * (q(m + 2.0, c.varphi[0])? - q(m + 2.0, c.z16)?))
}

/// Closed-form `ε₂` for a finite battery. An unbounded battery is routed to
/// [`error_htt_closed_inf`].
pub fn error_htt_closed(params: &SystemParams, phase: &PhaseConfig) -> Result<ClosedForm> {
    params.validate()?;
    let link = derive_link(params, phase);
    let c = build_constants(&link, phase);
    let raw = if c.lambda.is_finite() {
        closed_form_finite(&c, params.m_shape)?
    } else {
        closed_form_unbounded(&c, params.m_shape)?
    };
    Ok(ClosedForm::from_raw(raw))
}

/// Closed-form `ε₂` assuming an unbounded battery, whatever `b_max` says.
pub fn error_htt_closed_inf(params: &SystemParams, phase: &PhaseConfig) -> Result<ClosedForm> {
    params.validate()?;
    let mut link = derive_link(params, phase);
    link.lambda = None;
    let c = build_constants(&link, phase);
    Ok(ClosedForm::from_raw(closed_form_unbounded(&c, params.m_shape)?))
}

/// Relative error `|exact − approx| / exact`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub xi: f64,
    /// `false` when `exact` was too small to divide by and `xi` holds the
    /// absolute error instead.
    pub relative: bool,
}

pub fn approx_error_metric(exact: f64, approx: f64) -> ApproxError {
    let diff = (exact - approx).abs();
    if exact.abs() < 1e-15 {
        ApproxError {
            xi: diff,
            relative: false,
        }
    } else {
        ApproxError {
            xi: diff / exact.abs(),
            relative: true,
        }
    }
}

/// `η v P_d / (n κ d^α)`: average power with every round fully harvested at
/// unit gain.
fn power_scale(params: &SystemParams, phase: &PhaseConfig) -> f64 {
    params.eta * phase.v as f64 * params.p_d / (phase.n as f64 * params.path_loss())
}

/// Average transmit power under HTT, W. An unbounded battery is routed to
/// [`avg_power_htt_inf`].
pub fn avg_power_htt(params: &SystemParams, phase: &PhaseConfig) -> Result<f64> {
    let link = derive_link(params, phase);
    let Some(lambda) = link.lambda else {
        return avg_power_htt_inf(params, phase);
    };
    let m = params.m_shape;
    let ws = link.varpi_star;
    let tau = ws.max(lambda);
    let factor = upper_gamma_reg(m + 1.0, m * ws)? - upper_gamma_reg(m + 1.0, m * tau)?
        + lambda * upper_gamma_reg(m, m * tau)?;
    Ok(power_scale(params, phase) * factor)
}

/// Average transmit power under HTT with an unbounded battery, W.
pub fn avg_power_htt_inf(params: &SystemParams, phase: &PhaseConfig) -> Result<f64> {
    let link = derive_link(params, phase);
    let m = params.m_shape;
    Ok(power_scale(params, phase) * upper_gamma_reg(m + 1.0, m * link.varpi_star)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::BatteryCapacity;
    use approx::assert_relative_eq;

    fn phase(v: u32, n: u32) -> PhaseConfig {
        PhaseConfig::new(v, n, 312).unwrap()
    }

    #[test]
    fn slope_at_unit_rate() {
        let p = SystemParams::baseline();
        let ph = PhaseConfig::new(100, 100, 100).unwrap();
        let c = build_constants(&derive_link(&p, &ph), &ph);
        assert_eq!(c.theta, 1.0);
        assert!((c.slope_phi - 2.3033).abs() < 1e-4);
        assert!(c.varrho < c.theta && c.theta < c.vartheta);
        assert!(c.omega1 > 0.5);
    }

    #[test]
    fn omega_junctions() {
        let p = SystemParams::baseline();
        let ph = phase(800, 200);
        let c = build_constants(&derive_link(&p, &ph), &ph);
        let mu = c.mu[0];
        assert_relative_eq!(omega_approx(mu, 2, (c.theta / mu).sqrt(), &c), 0.5, epsilon = 1e-12);
        assert_eq!(omega_approx(mu, 2, 0.0, &c), 1.0);
        assert!(omega_approx(mu, 2, c.varphi[0], &c) < 1e-12);
        let affine_at_top = 0.5 - c.slope_phi * (c.vartheta - c.theta) / TAU.sqrt();
        assert!(affine_at_top.abs() < 1e-12);
        let affine_at_bottom = 0.5 - c.slope_phi * (c.varrho - c.theta) / TAU.sqrt();
        assert!((affine_at_bottom - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_battery_collapses_clamp_points() {
        let p = SystemParams::baseline();
        let ph = phase(800, 200);
        let c = build_constants(&derive_link(&p, &ph), &ph);
        assert_eq!(c.z11, c.zeta[0]);
        assert_eq!(c.z12, c.varphi[0]);
        assert_eq!(c.z13, c.z15);
        assert_eq!(c.z14, c.z16);
    }

    #[test]
    fn zero_threshold_clamps_to_zero() {
        let mut p = SystemParams::baseline();
        p.varpi = 0.0;
        p.b_max = BatteryCapacity::Finite(1e-7);
        let ph = phase(800, 200);
        let c = build_constants(&derive_link(&p, &ph), &ph);
        assert_eq!(c.z13, 0.0);
        assert_eq!(c.z15, 0.0);
        assert_eq!(c.z16, c.zeta[0]);
    }

    #[test]
    fn transfer_failure_closed_form_m2() {
        let x: f64 = 0.250984;
        let e1 = power_transfer_failure(2.0, x / 2.0).unwrap();
        assert_relative_eq!(e1, 1.0 - (-x).exp() * (1.0 + x), max_relative = 1e-12);
        assert!((e1 - 0.02667).abs() < 5e-5);
        assert_eq!(power_transfer_failure(2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn metric_arithmetic() {
        assert_eq!(approx_error_metric(0.3, 0.3).xi, 0.0);
        assert_relative_eq!(approx_error_metric(0.1, 0.11).xi, 0.1, max_relative = 1e-12);
        let tiny = approx_error_metric(1e-20, 1e-18);
        assert!(!tiny.relative);
    }

    #[test]
    fn clamp_flag() {
        let c = ClosedForm::from_raw(-1e-6);
        assert!(c.clamped && c.eps2 == 0.0);
        assert!(!ClosedForm::from_raw(0.3).clamped);
    }
}
