//! Monte Carlo simulation of energy accumulation between rounds: the FB-FTT
//! and FB-FTUT power-control protocols, with HTT as the memoryless baseline.

mod sweep;

pub use sweep::{unimodality_sweep, SweepConfig, SweepPoint, SweepResult, Verdict};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Error, Result};
use crate::fbl::{block_error, required_snr, FblTarget};
use crate::numerics::{upper_gamma_reg, GammaSampler, RandomStream};
use crate::sysmodel::{derive_link, BatteryCapacity, PhaseConfig, SystemParams};

pub const DEFAULT_BURN_IN: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Spend the whole per-round charge immediately; nothing carries over.
    Htt,
    /// Transmit at exactly `γ̂` when the battery allows, otherwise stay silent.
    FbFtt,
    /// Like FB-FTT, but spend everything available when `γ̂` is out of reach.
    FbFtut,
}

/// When the sufficiency check happens relative to the round's harvest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DecisionPoint {
    /// Harvest, cap at `B_max`, then decide against the capped balance.
    #[default]
    PostHarvest,
    /// Decide against the carried-over balance, then add the harvest.
    PreHarvest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// Stored energy, J.
    pub stored: f64,
    pub round_index: u64,
}

impl BatteryState {
    pub fn empty() -> Self {
        Self {
            stored: 0.0,
            round_index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Silent,
    /// Transmitted at the target SNR (or, for HTT, with the full charge).
    Transmitted,
    /// FB-FTUT only: transmitted with all remaining energy, below `γ̂`.
    Underpowered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub kind: OutcomeKind,
    /// Transmit power, W.
    pub tx_power: f64,
    /// Conditional block-error probability of this round.
    pub error_prob: f64,
    /// Energy drawn from the battery, J.
    pub energy_spent: f64,
}

impl RoundOutcome {
    fn silent() -> Self {
        Self {
            kind: OutcomeKind::Silent,
            tx_power: 0.0,
            error_prob: 1.0,
            energy_spent: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub variant: Protocol,
    /// Reliability target; ignored by HTT.
    pub target: FblTarget,
    /// Rounds per replica, burn-in included.
    pub rounds: u64,
    pub burn_in: u64,
    pub replicas: u32,
    pub seed: u64,
    pub decision: DecisionPoint,
}

impl ProtocolConfig {
    pub fn new(variant: Protocol, target: FblTarget) -> Self {
        Self {
            variant,
            target,
            rounds: 100_000 + DEFAULT_BURN_IN,
            burn_in: DEFAULT_BURN_IN,
            replicas: 8,
            seed: 0,
            decision: DecisionPoint::PostHarvest,
        }
    }

    /// Split `total` measured rounds evenly over `replicas`.
    pub fn with_budget(mut self, total: u64, replicas: u32) -> Self {
        self.replicas = replicas.max(1);
        self.rounds = total.div_ceil(self.replicas as u64) + self.burn_in;
        self
    }

    pub fn measured_rounds(&self) -> u64 {
        self.rounds.saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.rounds <= self.burn_in {
            bad.push(format!(
                "rounds ({}) must exceed burn_in ({})",
                self.rounds, self.burn_in
            ));
        }
        if self.replicas < 1 {
            bad.push("replicas must be at least 1".to_string());
        }
        if self.variant != Protocol::Htt && !(self.target.eps_th > 0.0 && self.target.eps_th <= 0.5) {
            bad.push(format!("eps_th = {} is outside (0, 0.5]", self.target.eps_th));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad))
        }
    }
}

/// Transmit power that puts SNR `γ̂` at the receiver for gain `g`, W.
/// A zero gain is unreachable and maps to `+∞`.
pub fn required_tx_power(gamma_hat: f64, params: &SystemParams, g: f64) -> f64 {
    if gamma_hat == 0.0 {
        return 0.0;
    }
    if !(g > 0.0) {
        return f64::INFINITY;
    }
    gamma_hat * params.path_loss() * params.sigma2_d / g
}

/// Per-round state machine with every setup-dependent constant resolved.
#[derive(Debug, Clone, Copy)]
pub struct Engine {
    variant: Protocol,
    decision: DecisionPoint,
    capacity: BatteryCapacity,
    varpi_star: f64,
    upsilon: f64,
    chi: f64,
    wit_time: f64,
    n: u32,
    k: u32,
    gamma_hat: f64,
    eps_th: f64,
}

impl Engine {
    pub fn new(params: &SystemParams, phase: &PhaseConfig, cfg: &ProtocolConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let link = derive_link(params, phase);
        let gamma_hat = match cfg.variant {
            Protocol::Htt => f64::NAN,
            _ => {
                let target = FblTarget { n: phase.n, k: phase.k, ..cfg.target };
                required_snr(&target)?.gamma_hat
            }
        };
        Ok(Self {
            variant: cfg.variant,
            decision: cfg.decision,
            capacity: params.b_max,
            varpi_star: link.varpi_star,
            upsilon: link.upsilon,
            chi: link.chi,
            wit_time: phase.n as f64 * params.t_c,
            n: phase.n,
            k: phase.k,
            gamma_hat,
            eps_th: cfg.target.eps_th,
        })
    }

    /// `γ̂` for the power-control variants, NaN for HTT.
    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    fn harvest(&self, g: f64) -> f64 {
        if g >= self.varpi_star {
            self.upsilon * g
        } else {
            0.0
        }
    }

    /// Full-battery spend at gain `g`.
    fn spend_all(&self, energy: f64, g: f64, kind: OutcomeKind) -> RoundOutcome {
        let gamma = energy * g / self.chi;
        RoundOutcome {
            kind,
            tx_power: energy / self.wit_time,
            error_prob: block_error(gamma, self.n, self.k),
            energy_spent: energy,
        }
    }

    fn target_cost(&self, g: f64) -> f64 {
        if g > 0.0 {
            self.gamma_hat * self.chi / g
        } else {
            f64::INFINITY
        }
    }

    fn transmit_at_target(&self, cost: f64) -> RoundOutcome {
        // error is the design target by construction of the power rule
        RoundOutcome {
            kind: OutcomeKind::Transmitted,
            tx_power: cost / self.wit_time,
            error_prob: self.eps_th,
            energy_spent: cost,
        }
    }

    /// Decide on a balance `available`; returns the outcome and what is left.
    fn decide(&self, available: f64, g: f64) -> (RoundOutcome, f64) {
        let cost = self.target_cost(g);
        if available > cost {
            return (self.transmit_at_target(cost), available - cost);
        }
        match self.variant {
            Protocol::FbFtut if available > 0.0 => {
                (self.spend_all(available, g, OutcomeKind::Underpowered), 0.0)
            }
            _ => (RoundOutcome::silent(), available),
        }
    }

    /// Advance one round with channel gain `g`.
    pub fn step(&self, state: BatteryState, g: f64) -> (BatteryState, RoundOutcome) {
        let harvested = self.harvest(g);
        let (outcome, stored) = match self.variant {
            Protocol::Htt => {
                let charge = self.capacity.cap(harvested);
                if charge > 0.0 {
                    (self.spend_all(charge, g, OutcomeKind::Transmitted), 0.0)
                } else {
                    (RoundOutcome::silent(), 0.0)
                }
            }
            _ => match self.decision {
                DecisionPoint::PostHarvest => {
                    let balance = self.capacity.cap(state.stored + harvested);
                    self.decide(balance, g)
                }
                DecisionPoint::PreHarvest => {
                    let (outcome, left) = self.decide(state.stored, g);
                    (outcome, self.capacity.cap(left + harvested))
                }
            },
        };
        debug_assert!(stored >= 0.0 && self.capacity.cap(stored) == stored);
        let next = BatteryState {
            stored,
            round_index: state.round_index + 1,
        };
        (next, outcome)
    }
}

/// Step through a fixed gain sequence from an empty battery.
pub fn trace(
    params: &SystemParams,
    phase: &PhaseConfig,
    cfg: &ProtocolConfig,
    gains: &[f64],
) -> Result<Vec<(BatteryState, RoundOutcome)>> {
    let engine = Engine::new(params, phase, cfg)?;
    let mut state = BatteryState::empty();
    Ok(gains
        .iter()
        .map(|&g| {
            let (next, outcome) = engine.step(state, g);
            state = next;
            (next, outcome)
        })
        .collect())
}

/// Per-replica averages over the measured rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaSummary {
    pub eps: f64,
    pub eps_out: f64,
    /// Fraction of rounds silent because nothing was harvested (HTT `ε₁`).
    pub silent: f64,
    pub avg_tx_power: f64,
    pub avg_energy: f64,
}

/// One value per tracked metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub eps_overall: f64,
    pub eps_out: f64,
    pub avg_tx_power: f64,
    pub avg_energy_per_round: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMetrics {
    pub eps_overall: f64,
    /// Fraction of rounds that could not reach `γ̂` (FB variants) or that
    /// harvested nothing (HTT).
    pub eps_out: f64,
    /// `(ε₁, ε₂)` split for HTT.
    pub eps_components: Option<(f64, f64)>,
    /// Mean transmit power over all measured rounds, silent ones as 0, W.
    pub avg_tx_power: f64,
    pub avg_energy_per_round: f64,
    /// Standard error of each metric across replicas.
    pub std_error: MetricSet,
    /// 95% Student-t half-widths across replicas.
    pub ci_halfwidth: MetricSet,
    pub gamma_hat: Option<f64>,
    pub replicas: Vec<ReplicaSummary>,
    pub rounds_per_replica: u64,
}

fn run_replica(engine: &Engine, sampler: &GammaSampler, cfg: &ProtocolConfig, id: u32) -> ReplicaSummary {
    let mut stream = RandomStream::new(cfg.seed, id as u64);
    let mut state = BatteryState::empty();
    let (mut err, mut out, mut silent, mut power, mut energy) = (0.0, 0u64, 0u64, 0.0, 0.0);
    for round in 0..cfg.rounds {
        let g = sampler.sample(&mut stream);
        let (next, o) = engine.step(state, g);
        state = next;
        if round < cfg.burn_in {
            continue;
        }
        err += o.error_prob;
        match o.kind {
            OutcomeKind::Silent => {
                out += 1;
                silent += 1;
            }
            OutcomeKind::Underpowered => out += 1,
            OutcomeKind::Transmitted => {}
        }
        power += o.tx_power;
        energy += o.energy_spent;
    }
    let count = cfg.measured_rounds() as f64;
    ReplicaSummary {
        eps: err / count,
        eps_out: out as f64 / count,
        silent: silent as f64 / count,
        avg_tx_power: power / count,
        avg_energy: energy / count,
    }
}

/// Mean, standard error and 95% half-width of replica-level values.
pub(crate) fn replica_stats(values: &[f64]) -> (f64, f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, f64::INFINITY, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let se = (var / r).sqrt();
    let t = StudentsT::new(0.0, 1.0, r - 1.0)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    (mean, se, t * se)
}

/// Run `cfg.replicas` independent trajectories in parallel and reduce them
/// in replica order, so results do not depend on the thread count.
pub fn simulate(params: &SystemParams, phase: &PhaseConfig, cfg: &ProtocolConfig) -> Result<ProtocolMetrics> {
    let engine = Engine::new(params, phase, cfg)?;
    let sampler = GammaSampler::unit_mean(params.m_shape)?;
    let replicas: Vec<ReplicaSummary> = (0..cfg.replicas)
        .into_par_iter()
        .map(|id| run_replica(&engine, &sampler, cfg, id))
        .collect();

    let column = |f: fn(&ReplicaSummary) -> f64| -> Vec<f64> { replicas.iter().map(f).collect() };
    let eps = replica_stats(&column(|s| s.eps));
    let out = replica_stats(&column(|s| s.eps_out));
    let pow = replica_stats(&column(|s| s.avg_tx_power));
    let en = replica_stats(&column(|s| s.avg_energy));

    let eps_components = (cfg.variant == Protocol::Htt).then(|| {
        let e1 = replica_stats(&column(|s| s.silent)).0;
        (e1, eps.0 - e1)
    });
    Ok(ProtocolMetrics {
        eps_overall: eps.0,
        eps_out: out.0,
        eps_components,
        avg_tx_power: pow.0,
        avg_energy_per_round: en.0,
        std_error: MetricSet {
            eps_overall: eps.1,
            eps_out: out.1,
            avg_tx_power: pow.1,
            avg_energy_per_round: en.1,
        },
        ci_halfwidth: MetricSet {
            eps_overall: eps.2,
            eps_out: out.2,
            avg_tx_power: pow.2,
            avg_energy_per_round: en.2,
        },
        gamma_hat: (cfg.variant != Protocol::Htt).then_some(engine.gamma_hat),
        replicas,
        rounds_per_replica: cfg.measured_rounds(),
    })
}

/// Average FB-FTT transmit power for a given outage probability, W.
/// Valid only for `m > 1`, where the mean of `1/g` is finite.
pub fn avg_power_fbftt(params: &SystemParams, phase: &PhaseConfig, gamma_hat: f64, eps_out: f64) -> Result<f64> {
    let m = params.m_shape;
    if !(m > 1.0) {
        return Err(domain(
            "avg_power_fbftt",
            format!("requires Nakagami shape m > 1 so that E[1/g] is finite, got m = {m}"),
        ));
    }
    if !(0.0..=1.0).contains(&eps_out) {
        return Err(domain("avg_power_fbftt", format!("eps_out = {eps_out}")));
    }
    let base = (1.0 - eps_out) * gamma_hat * params.path_loss() * params.sigma2_d * m / (m - 1.0);
    let link = derive_link(params, phase);
    match link.lambda {
        Some(lambda) => Ok(base * (1.0 - upper_gamma_reg(m - 1.0, m * lambda)?)),
        None => Ok(base),
    }
}
