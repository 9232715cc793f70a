//! Finite-blocklength error model and the required-SNR solvers.

use std::f64::consts::{LN_2, LOG2_E};

use crate::error::{Error, Result};
use crate::numerics::{q_func, q_inv};

/// Iteration ceiling for the fixed-point solver. Convergence is guaranteed
/// for targets up to 0.5, so hitting this means floating-point cycling.
pub const DEFAULT_MAX_ITERATIONS: u32 = 100;

/// Shannon capacity `log2(1 + γ)`, bits per channel use.
pub fn capacity(gamma: f64) -> f64 {
    gamma.ln_1p() / LN_2
}

/// Channel dispersion `(1 − (1+γ)^{-2}) (log2 e)^2`.
pub fn dispersion(gamma: f64) -> f64 {
    // γ(2+γ)/(1+γ)² avoids cancellation at small γ
    let one = 1.0 + gamma;
    gamma * (2.0 + gamma) / (one * one) * LOG2_E * LOG2_E
}

/// Normal-approximation block error probability for `k` bits over `n` uses
/// at SNR `gamma`. Defined as 1 at `γ = 0`, the limit of the Q argument.
pub fn block_error(gamma: f64, n: u32, k: u32) -> f64 {
    if !(gamma > 0.0) {
        return 1.0;
    }
    if gamma.is_infinite() {
        return 0.0;
    }
    let r = k as f64 / n as f64;
    let arg = (capacity(gamma) - r) / (dispersion(gamma) / n as f64).sqrt();
    q_func(arg)
}

/// Reliability target for one `(n, k)` block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FblTarget {
    pub n: u32,
    pub k: u32,
    /// Target block error; restricted to `(0, 0.5]`, where the fixed-point
    /// iteration provably converges.
    pub eps_th: f64,
    /// Absolute SNR stopping tolerance.
    pub gamma_delta: f64,
}

impl FblTarget {
    pub fn new(n: u32, k: u32, eps_th: f64, gamma_delta: f64) -> Result<Self> {
        let mut bad = Vec::new();
        if n < 1 {
            bad.push("n must be at least 1".to_string());
        }
        if k < 1 {
            bad.push("k must be at least 1".to_string());
        }
        if !(eps_th > 0.0 && eps_th <= 0.5) {
            bad.push(format!(
                "eps_th = {eps_th} is outside (0, 0.5], the domain where the required-SNR iteration is guaranteed to converge"
            ));
        }
        if !(gamma_delta > 0.0 && gamma_delta.is_finite()) {
            bad.push(format!("gamma_delta = {gamma_delta} must be positive"));
        }
        if bad.is_empty() {
            Ok(Self {
                n,
                k,
                eps_th,
                gamma_delta,
            })
        } else {
            Err(Error::Invalid(bad))
        }
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// Infinite-blocklength SNR threshold `2^r − 1`.
    pub fn shannon_threshold(&self) -> f64 {
        self.rate().exp2() - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSolution {
    pub gamma_hat: f64,
    /// `sqrt(1 − (1+γ̂)^{-2})`.
    pub m_factor: f64,
    pub iterations: u32,
    /// Last step size `|γ̂(t) − γ̂(t−1)|` (half-width of the final bracket for
    /// bisection).
    pub residual: f64,
}

fn m_factor(gamma: f64) -> f64 {
    let one = 1.0 + gamma;
    (gamma * (2.0 + gamma) / (one * one)).sqrt()
}

/// Fixed-point solve of `r = C(γ) − sqrt(V(γ)/n) Q^{-1}(ε_th)` for γ.
///
/// Iterates `γ(t) = 2^{r + M(t−1) log2(e) Q^{-1}(ε_th)/√n} − 1` with
/// `M(t) = sqrt(1 − (1+γ(t))^{-2})`, starting from `M(0) = 1` (`γ(0) = ∞`),
/// and stops at the first `t` with `|γ(t) − γ(t−1)| ≤ γ_Δ`.
pub fn required_snr(target: &FblTarget) -> Result<SnrSolution> {
    required_snr_capped(target, DEFAULT_MAX_ITERATIONS)
}

pub fn required_snr_capped(target: &FblTarget, max_iterations: u32) -> Result<SnrSolution> {
    let r = target.rate();
    let backoff = LOG2_E * q_inv(target.eps_th)? / (target.n as f64).sqrt();
    let mut m = 1.0;
    let mut previous = f64::INFINITY;
    for t in 1..=max_iterations {
        let gamma = (r + m * backoff).exp2() - 1.0;
        m = m_factor(gamma);
        let step = (gamma - previous).abs();
        // with a zero back-off the map is constant, so the first iterate is exact
        if step <= target.gamma_delta || backoff == 0.0 {
            return Ok(SnrSolution {
                gamma_hat: gamma,
                m_factor: m,
                iterations: t,
                residual: if backoff == 0.0 { 0.0 } else { step },
            });
        }
        previous = gamma;
    }
    Err(Error::SolverNonConvergence {
        iterations: max_iterations,
        residual: f64::NAN,
    })
}

/// Bisection on `block_error(γ) = ε_th` over `[lo, hi]`, stopping once the
/// midpoint is within `γ_Δ` of every point in the bracket.
pub fn required_snr_bisection(target: &FblTarget, lo: f64, hi: f64) -> Result<SnrSolution> {
    let (n, k, eps) = (target.n, target.k, target.eps_th);
    if !(lo < hi) || block_error(lo, n, k) < eps || block_error(hi, n, k) > eps {
        return Err(Error::Bracket { lo, hi, target: eps });
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut iterations = 0;
    while 0.5 * (hi - lo) > target.gamma_delta {
        let mid = 0.5 * (lo + hi);
        if block_error(mid, n, k) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let gamma = 0.5 * (lo + hi);
    Ok(SnrSolution {
        gamma_hat: gamma,
        m_factor: m_factor(gamma),
        iterations,
        residual: 0.5 * (hi - lo),
    })
}

/// Ratio `δ = γ̂ / (2^r − 1)` of the finite-blocklength SNR requirement to
/// the infinite-blocklength threshold.
pub fn snr_excess_ratio(target: &FblTarget) -> Result<f64> {
    let sol = required_snr(target)?;
    Ok(sol.gamma_hat / target.shannon_threshold())
}

/// High-rate limit of [`snr_excess_ratio`], `exp(Q^{-1}(ε_th)/√n)`, which
/// also bounds it from below.
pub fn snr_excess_limit(n: u32, eps_th: f64) -> Result<f64> {
    Ok((q_inv(eps_th)? / (n as f64).sqrt()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn capacity_points() {
        assert_eq!(capacity(0.0), 0.0);
        assert_relative_eq!(capacity(1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(capacity(3.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn dispersion_points() {
        assert_eq!(dispersion(0.0), 0.0);
        assert_relative_eq!(dispersion(1.0), 0.75 * LOG2_E * LOG2_E, max_relative = 1e-15);
        assert!((dispersion(1.0) - 1.5611).abs() < 1e-4);
        assert_relative_eq!(dispersion(1e12), LOG2_E * LOG2_E, max_relative = 1e-12);
        assert!((LOG2_E * LOG2_E - 2.0814).abs() < 1e-4);
    }

    #[test]
    fn block_error_at_shannon_threshold_is_half() {
        let (n, k) = (200, 312);
        let theta = (k as f64 / n as f64).exp2() - 1.0;
        assert!((block_error(theta, n, k) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn block_error_at_zero_snr_is_one() {
        assert_eq!(block_error(0.0, 100, 312), 1.0);
    }

    #[test]
    fn fixed_point_at_half_target_is_threshold() {
        let t = FblTarget::new(200, 312, 0.5, 1e-3).unwrap();
        let s = required_snr(&t).unwrap();
        assert_eq!(s.iterations, 1);
        assert_relative_eq!(s.gamma_hat, t.shannon_threshold(), max_relative = 1e-15);
        assert_eq!(snr_excess_ratio(&t).unwrap(), 1.0);
    }

    #[test]
    fn target_domain_enforced() {
        assert!(FblTarget::new(100, 312, 0.6, 1e-3).is_err());
        assert!(FblTarget::new(100, 312, 0.0, 1e-3).is_err());
        assert!(FblTarget::new(100, 312, 1e-3, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let t = FblTarget::new(1000, 312, 1e-9, 1e-12).unwrap();
        assert!(matches!(
            required_snr_capped(&t, 2),
            Err(Error::SolverNonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn bisection_bracket_checked() {
        let t = FblTarget::new(100, 312, 1e-3, 1e-3).unwrap();
        assert!(matches!(
            required_snr_bisection(&t, 12.0, 16.0),
            Err(Error::Bracket { .. })
        ));
        assert!(required_snr_bisection(&t, 9.0, 13.0).is_ok());
    }

    #[test]
    fn bisection_iteration_counts_over_width_four() {
        let t3 = FblTarget::new(100, 312, 1e-3, 1e-3).unwrap();
        assert!(required_snr_bisection(&t3, 9.0, 13.0).unwrap().iterations >= 11);
        let t2 = FblTarget::new(100, 312, 1e-3, 1e-2).unwrap();
        assert!(required_snr_bisection(&t2, 9.0, 13.0).unwrap().iterations >= 8);
    }

    #[test]
    fn excess_limit_points() {
        assert_eq!(snr_excess_limit(100, 0.5).unwrap(), 1.0);
        assert!((snr_excess_limit(100, 1e-2).unwrap() - 1.2619).abs() < 1e-4);
        assert!((snr_excess_limit(1000, 1e-6).unwrap() - 1.1622).abs() < 1e-4);
    }
}
