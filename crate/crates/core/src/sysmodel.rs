//! Physical link parameters, the downlink energy-transfer model, and the
//! derived per-configuration constants shared by the analysis and the
//! simulator. Everything inside is linear SI; dB/dBm only appear in the
//! conversion helpers.

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Battery capacity; `Unbounded` is a distinct case, not a large number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatteryCapacity {
    Finite(f64),
    Unbounded,
}

impl BatteryCapacity {
    pub fn is_unbounded(self) -> bool {
        matches!(self, BatteryCapacity::Unbounded)
    }

    /// Clamp a charge level to the capacity.
    pub fn cap(self, energy: f64) -> f64 {
        match self {
            BatteryCapacity::Finite(b) => energy.min(b),
            BatteryCapacity::Unbounded => energy,
        }
    }

    pub fn joules(self) -> Option<f64> {
        match self {
            BatteryCapacity::Finite(b) => Some(b),
            BatteryCapacity::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Transmit power of the energy source, W.
    pub p_d: f64,
    /// Link distance, m.
    pub d: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Attenuation at the 1 m reference distance, dB.
    pub kappa_db: f64,
    /// Energy-conversion efficiency.
    pub eta: f64,
    /// Harvester sensitivity, W.
    pub varpi: f64,
    /// Noise power at the receiver, W.
    pub sigma2_d: f64,
    /// Nakagami shape.
    pub m_shape: f64,
    pub b_max: BatteryCapacity,
    /// Channel-use duration, s.
    pub t_c: f64,
    /// Carrier frequency, Hz (coherence check only).
    pub freq: Option<f64>,
    /// Device speed, m/s (coherence check only).
    pub v_dev: Option<f64>,
}

impl SystemParams {
    /// Operating point used throughout the numerical study: 3 W source at
    /// 9.8 m, α = 3, κ = 20 dB, η = 0.11, 4 µW sensitivity, −76 dBm noise,
    /// m = 2, 10 µs channel uses, 2 GHz carrier, unbounded battery.
    pub fn baseline() -> Self {
        Self {
            p_d: 3.0,
            d: 9.8,
            alpha: 3.0,
            kappa_db: 20.0,
            eta: 0.11,
            varpi: 4e-6,
            sigma2_d: dbm_to_watts(-76.0),
            m_shape: 2.0,
            b_max: BatteryCapacity::Unbounded,
            t_c: 1e-5,
            freq: Some(2e9),
            v_dev: None,
        }
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite (got {v})"));
            }
        };
        positive("p_d", self.p_d);
        positive("d", self.d);
        positive("alpha", self.alpha);
        positive("sigma2_d", self.sigma2_d);
        positive("m_shape", self.m_shape);
        positive("t_c", self.t_c);
        if let Some(f) = self.freq {
            positive("freq", f);
        }
        if let Some(v) = self.v_dev {
            positive("v_dev", v);
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            out.push(format!("eta must lie in (0, 1) (got {})", self.eta));
        }
        if !(self.varpi >= 0.0 && self.varpi.is_finite()) {
            out.push(format!("varpi must be non-negative (got {})", self.varpi));
        }
        if !self.kappa_db.is_finite() {
            out.push(format!("kappa_db must be finite (got {})", self.kappa_db));
        }
        if let BatteryCapacity::Finite(b) = self.b_max {
            if !(b > 0.0 && b.is_finite()) {
                out.push(format!("b_max must be positive (got {b}); use the unbounded form for an infinite battery"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn kappa(&self) -> f64 {
        db_to_linear(self.kappa_db)
    }

    /// Large-scale attenuation `κ d^α`.
    pub fn path_loss(&self) -> f64 {
        self.kappa() * self.d.powf(self.alpha)
    }
}

/// Channel-use split of one transmission round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseConfig {
    /// Energy-transfer channel uses.
    pub v: u32,
    /// Information-transfer channel uses.
    pub n: u32,
    /// Information bits per block.
    pub k: u32,
}

/// Below this blocklength the normal approximation is not trusted.
pub const MIN_BLOCKLENGTH: u32 = 100;

impl PhaseConfig {
    pub fn new(v: u32, n: u32, k: u32) -> Result<Self> {
        Self::with_override(v, n, k, false)
    }

    /// As [`PhaseConfig::new`], optionally admitting `n < 100`.
    pub fn with_override(v: u32, n: u32, k: u32, allow_short: bool) -> Result<Self> {
        let phase = Self { v, n, k };
        let v = phase.violations(allow_short);
        if v.is_empty() {
            Ok(phase)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn violations(&self, allow_short: bool) -> Vec<String> {
        let mut out = Vec::new();
        if self.v < 1 {
            out.push("v must be at least 1".to_string());
        }
        if self.n < 1 || (!allow_short && self.n < MIN_BLOCKLENGTH) {
            out.push(format!(
                "n = {} is below {MIN_BLOCKLENGTH} channel uses (set allow_short_blocklength to override)",
                self.n
            ));
        }
        if self.k < 1 {
            out.push("k must be at least 1".to_string());
        }
        out
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Constants derived from one `(SystemParams, PhaseConfig)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedLink {
    /// Channel-gain threshold below which nothing is harvested.
    pub varpi_star: f64,
    /// Channel gain that saturates the battery in one WET phase; `None` for an
    /// unbounded battery.
    pub lambda: Option<f64>,
    /// SNR scale: `γ = β g min(g, λ)` under harvest-then-transmit.
    pub beta: f64,
    /// `κ d^α σ² n T_c`, J.
    pub chi: f64,
    /// Energy harvested per unit gain, `η P_d v T_c / (κ d^α)`, J.
    pub upsilon: f64,
    /// Transmit energy per unit SNR per channel use, `κ d^α σ² T_c`, J.
    pub lambda_cap: f64,
}

impl DerivedLink {
    /// `λ` as a plain number, with `+∞` for the unbounded case.
    pub fn lambda_or_inf(&self) -> f64 {
        self.lambda.unwrap_or(f64::INFINITY)
    }
}

pub fn derive_link(params: &SystemParams, phase: &PhaseConfig) -> DerivedLink {
    let loss = params.path_loss();
    let v = phase.v as f64;
    let n = phase.n as f64;
    let upsilon = params.eta * params.p_d * v * params.t_c / loss;
    DerivedLink {
        varpi_star: params.varpi * loss / params.p_d,
        lambda: params.b_max.joules().map(|b| b / upsilon),
        beta: params.eta * v * params.p_d / (n * loss * loss * params.sigma2_d),
        chi: loss * params.sigma2_d * n * params.t_c,
        upsilon,
        lambda_cap: loss * params.sigma2_d * params.t_c,
    }
}

/// Power received by the energy-harvesting node for channel gain `g`.
pub fn received_power(params: &SystemParams, g: f64) -> f64 {
    params.p_d * g / params.path_loss()
}

/// Energy harvested in one WET phase of `v` channel uses.
pub fn harvested_energy(params: &SystemParams, link: &DerivedLink, g: f64, v: u32) -> f64 {
    if g < link.varpi_star {
        0.0
    } else {
        params.eta * received_power(params, g) * v as f64 * params.t_c
    }
}

/// Battery charge at the start of the WIT phase when nothing carries over
/// between rounds: `1(g ≥ ϖ*) min(g, λ) η P_d v T_c / (κ d^α)`.
pub fn htt_battery_charge(params: &SystemParams, link: &DerivedLink, g: f64, v: u32) -> f64 {
    if g < link.varpi_star {
        return 0.0;
    }
    let per_gain = params.eta * params.p_d * v as f64 * params.t_c / params.path_loss();
    match link.lambda {
        Some(lambda) => g.min(lambda) * per_gain,
        None => g * per_gain,
    }
}

/// Coherence time in channel uses, `⌊c / (f v_d T_c)⌋`.
pub fn coherence_budget(params: &SystemParams) -> Result<u64> {
    let f = params.freq.ok_or(Error::MissingParameter("freq"))?;
    let v = params.v_dev.ok_or(Error::MissingParameter("v_dev"))?;
    if !(f > 0.0 && v > 0.0) {
        return Err(Error::Invalid(vec![format!(
            "coherence budget needs positive freq and v_dev (got {f}, {v})"
        )]));
    }
    let coherence_time = SPEED_OF_LIGHT / (f * v);
    Ok((coherence_time / params.t_c).floor() as u64)
}

/// Advisory: `Some(message)` when a round does not fit the coherence budget.
pub fn coherence_warning(params: &SystemParams, phase: &PhaseConfig) -> Option<String> {
    let budget = coherence_budget(params).ok()?;
    let round = phase.v as u64 + phase.n as u64;
    (round > budget).then(|| {
        format!("round of {round} channel uses exceeds the coherence budget of {budget}; quasi-static fading is doubtful")
    })
}
