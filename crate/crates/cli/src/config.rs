//! Flat TOML experiment configuration: parsing, defaults, validation and the
//! resolved `key = value` form embedded in every dataset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use wpc_core::accum::{DecisionPoint, Protocol};
use wpc_core::sysmodel::{dbm_to_watts, BatteryCapacity, PhaseConfig, SystemParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    Fig3Delta,
    Fig4HttGrid,
    Fig5SolverIters,
    Fig6EpsthSweep,
    Fig7BatterySweep,
    Fig8DelayConstrained,
    Custom,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 7] = [
        ExperimentName::Fig3Delta,
        ExperimentName::Fig4HttGrid,
        ExperimentName::Fig5SolverIters,
        ExperimentName::Fig6EpsthSweep,
        ExperimentName::Fig7BatterySweep,
        ExperimentName::Fig8DelayConstrained,
        ExperimentName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Fig3Delta => "fig3_delta",
            ExperimentName::Fig4HttGrid => "fig4_htt_grid",
            ExperimentName::Fig5SolverIters => "fig5_solver_iters",
            ExperimentName::Fig6EpsthSweep => "fig6_epsth_sweep",
            ExperimentName::Fig7BatterySweep => "fig7_battery_sweep",
            ExperimentName::Fig8DelayConstrained => "fig8_delay_constrained",
            ExperimentName::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

pub fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Htt => "htt",
        Protocol::FbFtt => "fb_ftt",
        Protocol::FbFtut => "fb_ftut",
    }
}

fn parse_protocol(s: &str) -> Option<Protocol> {
    match s {
        "htt" => Some(Protocol::Htt),
        "fb_ftt" => Some(Protocol::FbFtt),
        "fb_ftut" => Some(Protocol::FbFtut),
        _ => None,
    }
}

fn decision_name(d: DecisionPoint) -> &'static str {
    match d {
        DecisionPoint::PostHarvest => "post_harvest",
        DecisionPoint::PreHarvest => "pre_harvest",
    }
}

/// Fully resolved experiment: every default is filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: SystemParams,
    /// Noise power as configured, dBm.
    pub sigma2_d_dbm: f64,
    pub v: u32,
    pub n: u32,
    pub k: u32,
    pub allow_short_blocklength: bool,
    pub eps_th: f64,
    pub gamma_delta: f64,
    pub protocols: Vec<Protocol>,
    pub decision: DecisionPoint,
    /// Measured Monte Carlo rounds per grid point.
    pub rounds: u64,
    /// Rounds per point when `expensive` is set.
    pub expensive_rounds: u64,
    pub expensive: bool,
    pub burn_in: u64,
    pub replicas: u32,
    pub common_random_numbers: bool,
    pub v_grid: Vec<u32>,
    pub n_grid: Vec<u32>,
    pub rate_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub gamma_delta_grid: Vec<f64>,
    pub b_max_grid: Vec<f64>,
    pub p_d_grid: Vec<f64>,
    pub m_grid: Vec<f64>,
    /// Total channel uses per round for the delay-constrained study.
    pub delay: u32,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    seed: Option<i64>,
    output_dir: Option<String>,
    p_d: Option<f64>,
    d: Option<f64>,
    alpha: Option<f64>,
    kappa_db: Option<f64>,
    eta: Option<f64>,
    varpi: Option<f64>,
    sigma2_d_dbm: Option<f64>,
    m_shape: Option<f64>,
    b_max: Option<f64>,
    t_c: Option<f64>,
    freq: Option<f64>,
    v_dev: Option<f64>,
    v: Option<u32>,
    n: Option<u32>,
    k: Option<u32>,
    allow_short_blocklength: Option<bool>,
    eps_th: Option<f64>,
    gamma_delta: Option<f64>,
    protocols: Option<Vec<String>>,
    decision: Option<String>,
    rounds: Option<u64>,
    expensive_rounds: Option<u64>,
    expensive: Option<bool>,
    burn_in: Option<u64>,
    replicas: Option<u32>,
    common_random_numbers: Option<bool>,
    v_grid: Option<Vec<u32>>,
    n_grid: Option<Vec<u32>>,
    rate_grid: Option<Vec<f64>>,
    eps_grid: Option<Vec<f64>>,
    gamma_delta_grid: Option<Vec<f64>>,
    b_max_grid: Option<Vec<f64>>,
    p_d_grid: Option<Vec<f64>>,
    m_grid: Option<Vec<f64>>,
    delay: Option<u32>,
    /// Provenance written alongside datasets; ignored on load.
    #[allow(dead_code)]
    meta: Option<toml::Table>,
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

fn step_grid(lo: u32, hi: u32, step: u32) -> Vec<u32> {
    (lo..=hi).step_by(step as usize).collect()
}

/// Per-experiment grid defaults.
struct Defaults {
    v: u32,
    n: u32,
    eps_th: f64,
    b_max: f64,
    protocols: Vec<Protocol>,
    v_grid: Vec<u32>,
    n_grid: Vec<u32>,
    rate_grid: Vec<f64>,
    eps_grid: Vec<f64>,
    gamma_delta_grid: Vec<f64>,
    b_max_grid: Vec<f64>,
    p_d_grid: Vec<f64>,
    m_grid: Vec<f64>,
}

fn defaults(name: ExperimentName) -> Defaults {
    let all = vec![Protocol::Htt, Protocol::FbFtt, Protocol::FbFtut];
    let mut d = Defaults {
        v: 800,
        n: 200,
        eps_th: 1e-3,
        b_max: f64::INFINITY,
        protocols: all.clone(),
        v_grid: vec![800],
        n_grid: vec![200],
        rate_grid: vec![],
        eps_grid: vec![1e-3],
        gamma_delta_grid: vec![1e-3],
        b_max_grid: vec![f64::INFINITY],
        p_d_grid: vec![3.0],
        m_grid: vec![2.0],
    };
    match name {
        ExperimentName::Fig3Delta => {
            d.n_grid = vec![100, 1000];
            d.eps_grid = vec![1e-2, 1e-6];
            d.rate_grid = (1..=40).map(|i| 0.25 * i as f64).collect();
        }
        ExperimentName::Fig4HttGrid => {
            d.protocols = vec![Protocol::Htt];
            d.v_grid = step_grid(100, 1000, 100);
            d.n_grid = step_grid(100, 1000, 100);
            d.b_max_grid = vec![1e-7, 1e-3, f64::INFINITY];
            d.p_d_grid = vec![3.0, 100.0];
        }
        ExperimentName::Fig5SolverIters => {
            d.n_grid = vec![100, 500, 1000];
            d.eps_grid = log_grid(1e-9, 1e-1, 17);
            d.gamma_delta_grid = vec![1e-3, 1e-2];
        }
        ExperimentName::Fig6EpsthSweep => {
            d.n_grid = vec![100, 200];
            d.eps_grid = log_grid(1e-4, 1e-1, 12);
        }
        ExperimentName::Fig7BatterySweep => {
            d.eps_th = 1e-6;
            d.protocols = vec![Protocol::Htt, Protocol::FbFtt];
            d.b_max_grid = vec![1e-7, 1e-5, 1e-3, f64::INFINITY];
            d.p_d_grid = (0..=8).map(|i| dbm_to_watts(20.0 + 5.0 * i as f64)).collect();
        }
        ExperimentName::Fig8DelayConstrained => {
            d.b_max = 1e-3;
            d.protocols = vec![Protocol::Htt, Protocol::FbFtt];
            d.n_grid = step_grid(100, 900, 50);
            d.eps_grid = vec![1e-3, 1e-6, 1e-9];
            d.m_grid = vec![2.0, 3.0, 4.0];
        }
        ExperimentName::Custom => {}
    }
    d
}

fn battery(b: f64) -> BatteryCapacity {
    if b.is_infinite() {
        BatteryCapacity::Unbounded
    } else {
        BatteryCapacity::Finite(b)
    }
}

/// Parse and validate a configuration document. Every problem found is
/// reported, not just the first.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn resolve(raw: RawConfig) -> Result<ExperimentSpec, CliError> {
    let mut errors = Vec::new();
    let experiment = match raw.experiment.as_deref() {
        None => {
            errors.push("missing required field `experiment`".to_string());
            ExperimentName::Custom
        }
        Some(s) => ExperimentName::parse(s).unwrap_or_else(|| {
            let known: Vec<_> = ExperimentName::ALL.iter().map(|e| e.as_str()).collect();
            errors.push(format!("unknown experiment `{s}` (expected one of {})", known.join(", ")));
            ExperimentName::Custom
        }),
    };
    let def = defaults(experiment);

    let mut missing = Vec::new();
    let mut required = |name: &'static str, v: Option<f64>| -> f64 {
        v.unwrap_or_else(|| {
            missing.push(name);
            f64::NAN
        })
    };
    let p_d = required("p_d", raw.p_d);
    let d = required("d", raw.d);
    let alpha = required("alpha", raw.alpha);
    let kappa_db = required("kappa_db", raw.kappa_db);
    let eta = required("eta", raw.eta);
    let varpi = required("varpi", raw.varpi);
    let sigma2_d_dbm = required("sigma2_d_dbm", raw.sigma2_d_dbm);
    let m_shape = required("m_shape", raw.m_shape);
    let t_c = required("t_c", raw.t_c);

    let b_max = raw.b_max.unwrap_or(def.b_max);
    let params = SystemParams {
        p_d,
        d,
        alpha,
        kappa_db,
        eta,
        varpi,
        sigma2_d: dbm_to_watts(sigma2_d_dbm),
        m_shape,
        b_max: battery(b_max),
        t_c,
        freq: raw.freq,
        v_dev: raw.v_dev,
    };
    errors.extend(missing.iter().map(|name| format!("missing required field `{name}`")));
    // a missing field already has its own message
    errors.extend(params.violations().into_iter().filter(|v| {
        let field = v.split_whitespace().next().unwrap_or("");
        !missing.iter().any(|m| *m == field || (*m == "sigma2_d_dbm" && field == "sigma2_d"))
    }));

    let seed = match raw.seed {
        Some(s) if s < 0 => {
            errors.push(format!("seed must be non-negative (got {s})"));
            0
        }
        Some(s) => s as u64,
        None => 1,
    };

    let protocols = match raw.protocols {
        Some(list) => {
            let mut out = Vec::new();
            for p in &list {
                match parse_protocol(p) {
                    Some(p) => out.push(p),
                    None => errors.push(format!("unknown protocol `{p}` (expected htt, fb_ftt or fb_ftut)")),
                }
            }
            if list.is_empty() {
                errors.push("protocols must not be empty".to_string());
            }
            out
        }
        None => def.protocols,
    };
    let decision = match raw.decision.as_deref() {
        None | Some("post_harvest") => DecisionPoint::PostHarvest,
        Some("pre_harvest") => DecisionPoint::PreHarvest,
        Some(other) => {
            errors.push(format!("unknown decision `{other}` (expected post_harvest or pre_harvest)"));
            DecisionPoint::PostHarvest
        }
    };

    let spec = ExperimentSpec {
        experiment,
        seed,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "results".to_string())),
        params,
        sigma2_d_dbm,
        v: raw.v.unwrap_or(def.v),
        n: raw.n.unwrap_or(def.n),
        k: raw.k.unwrap_or(312),
        allow_short_blocklength: raw.allow_short_blocklength.unwrap_or(false),
        eps_th: raw.eps_th.unwrap_or(def.eps_th),
        gamma_delta: raw.gamma_delta.unwrap_or(1e-3),
        protocols,
        decision,
        rounds: raw.rounds.unwrap_or(1_000_000),
        expensive_rounds: raw.expensive_rounds.unwrap_or(100_000_000),
        expensive: raw.expensive.unwrap_or(false),
        burn_in: raw.burn_in.unwrap_or(1000),
        replicas: raw.replicas.unwrap_or(20),
        common_random_numbers: raw.common_random_numbers.unwrap_or(true),
        v_grid: raw.v_grid.unwrap_or(def.v_grid),
        n_grid: raw.n_grid.unwrap_or(def.n_grid),
        rate_grid: raw.rate_grid.unwrap_or(def.rate_grid),
        eps_grid: raw.eps_grid.unwrap_or(def.eps_grid),
        gamma_delta_grid: raw.gamma_delta_grid.unwrap_or(def.gamma_delta_grid),
        b_max_grid: raw.b_max_grid.unwrap_or(def.b_max_grid),
        p_d_grid: raw.p_d_grid.unwrap_or(def.p_d_grid),
        m_grid: raw.m_grid.unwrap_or(def.m_grid),
        delay: raw.delay.unwrap_or(1000),
    };
    errors.extend(spec.violations());
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(CliError::Validation(errors))
    }
}

impl ExperimentSpec {
    /// Every problem with the resolved spec, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let short = self.allow_short_blocklength;
        out.extend(PhaseConfig { v: self.v, n: self.n, k: self.k }.violations(short));
        let uses_target = self.protocols.iter().any(|p| *p != Protocol::Htt)
            || matches!(self.experiment, ExperimentName::Fig3Delta | ExperimentName::Fig5SolverIters);
        let eps_domain = |name: &str, e: f64, out: &mut Vec<String>| {
            if uses_target && !(e > 0.0 && e <= 0.5) {
                out.push(format!(
                    "{name} = {e} is outside (0, 0.5], the only range where the required-SNR iteration is guaranteed to converge"
                ));
            }
        };
        eps_domain("eps_th", self.eps_th, &mut out);
        for &e in &self.eps_grid {
            eps_domain("eps_grid entry", e, &mut out);
        }
        if !(self.gamma_delta > 0.0) {
            out.push(format!("gamma_delta must be positive (got {})", self.gamma_delta));
        }
        if self.gamma_delta_grid.iter().any(|g| !(*g > 0.0)) {
            out.push("gamma_delta_grid entries must be positive".to_string());
        }
        if self.rounds == 0 || self.expensive_rounds == 0 {
            out.push("rounds and expensive_rounds must be positive".to_string());
        }
        if self.replicas < 2 {
            out.push(format!("replicas must be at least 2 for confidence intervals (got {})", self.replicas));
        }
        if self.b_max_grid.iter().any(|b| !(*b > 0.0)) {
            out.push("b_max_grid entries must be positive (use inf for an unbounded battery)".to_string());
        }
        if self.p_d_grid.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            out.push("p_d_grid entries must be positive".to_string());
        }
        if self.m_grid.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            out.push("m_grid entries must be positive".to_string());
        }
        if self.rate_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            out.push("rate_grid entries must be positive".to_string());
        }
        let min_n = if short { 1 } else { wpc_core::sysmodel::MIN_BLOCKLENGTH };
        if self.n_grid.iter().any(|n| *n < min_n) {
            out.push(format!("n_grid entries must be at least {min_n}"));
        }
        if self.v_grid.contains(&0) {
            out.push("v_grid entries must be at least 1".to_string());
        }
        let needs: &[(&str, bool)] = match self.experiment {
            ExperimentName::Fig3Delta => &[
                ("n_grid", self.n_grid.is_empty()),
                ("eps_grid", self.eps_grid.is_empty()),
                ("rate_grid", self.rate_grid.is_empty()),
            ],
            ExperimentName::Fig4HttGrid => &[
                ("v_grid", self.v_grid.is_empty()),
                ("n_grid", self.n_grid.is_empty()),
                ("b_max_grid", self.b_max_grid.is_empty()),
                ("p_d_grid", self.p_d_grid.is_empty()),
            ],
            ExperimentName::Fig5SolverIters => &[
                ("n_grid", self.n_grid.is_empty()),
                ("eps_grid", self.eps_grid.is_empty()),
                ("gamma_delta_grid", self.gamma_delta_grid.is_empty()),
            ],
            ExperimentName::Fig6EpsthSweep => &[
                ("n_grid", self.n_grid.is_empty()),
                ("eps_grid", self.eps_grid.is_empty()),
            ],
            ExperimentName::Fig7BatterySweep => &[
                ("b_max_grid", self.b_max_grid.is_empty()),
                ("p_d_grid", self.p_d_grid.is_empty()),
            ],
            ExperimentName::Fig8DelayConstrained => &[
                ("n_grid", self.n_grid.is_empty()),
                ("eps_grid", self.eps_grid.is_empty()),
                ("m_grid", self.m_grid.is_empty()),
            ],
            ExperimentName::Custom => &[],
        };
        for (name, empty) in needs {
            if *empty {
                out.push(format!("{name} must not be empty for {}", self.experiment.as_str()));
            }
        }
        if self.experiment == ExperimentName::Fig6EpsthSweep
            && self.eps_grid.windows(2).any(|w| w[1] <= w[0])
        {
            out.push("eps_grid must be strictly increasing".to_string());
        }
        if self.experiment == ExperimentName::Fig8DelayConstrained {
            if let Some(n) = self.n_grid.iter().find(|n| **n >= self.delay) {
                out.push(format!("n_grid entry {n} leaves no WET channel uses within delay {}", self.delay));
            }
        }
        out
    }

    /// Monte Carlo rounds per grid point after the expensive switch.
    pub fn effective_rounds(&self) -> u64 {
        if self.expensive {
            self.expensive_rounds
        } else {
            self.rounds
        }
    }

    /// The resolved configuration as TOML `key = value` lines; parsing them
    /// back yields an identical spec.
    pub fn to_toml_lines(&self) -> Vec<String> {
        fn list<T: std::fmt::Debug>(v: &[T]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let p = &self.params;
        let b_max = p.b_max.joules().unwrap_or(f64::INFINITY);
        let protocols: Vec<String> = self.protocols.iter().map(|p| format!("\"{}\"", protocol_name(*p))).collect();
        let mut lines = vec![
            format!("experiment = \"{}\"", self.experiment.as_str()),
            format!("seed = {}", self.seed),
            format!("output_dir = {:?}", self.output_dir.display().to_string()),
            format!("p_d = {:?}", p.p_d),
            format!("d = {:?}", p.d),
            format!("alpha = {:?}", p.alpha),
            format!("kappa_db = {:?}", p.kappa_db),
            format!("eta = {:?}", p.eta),
            format!("varpi = {:?}", p.varpi),
            format!("sigma2_d_dbm = {:?}", self.sigma2_d_dbm),
            format!("m_shape = {:?}", p.m_shape),
            format!("b_max = {b_max:?}"),
            format!("t_c = {:?}", p.t_c),
        ];
        if let Some(f) = p.freq {
            lines.push(format!("freq = {f:?}"));
        }
        if let Some(v) = p.v_dev {
            lines.push(format!("v_dev = {v:?}"));
        }
        let mut rest = String::new();
        let _ = writeln!(rest, "v = {}", self.v);
        let _ = writeln!(rest, "n = {}", self.n);
        let _ = writeln!(rest, "k = {}", self.k);
        let _ = writeln!(rest, "allow_short_blocklength = {}", self.allow_short_blocklength);
        let _ = writeln!(rest, "eps_th = {:?}", self.eps_th);
        let _ = writeln!(rest, "gamma_delta = {:?}", self.gamma_delta);
        let _ = writeln!(rest, "protocols = [{}]", protocols.join(", "));
        let _ = writeln!(rest, "decision = \"{}\"", decision_name(self.decision));
        let _ = writeln!(rest, "rounds = {}", self.rounds);
        let _ = writeln!(rest, "expensive_rounds = {}", self.expensive_rounds);
        let _ = writeln!(rest, "expensive = {}", self.expensive);
        let _ = writeln!(rest, "burn_in = {}", self.burn_in);
        let _ = writeln!(rest, "replicas = {}", self.replicas);
        let _ = writeln!(rest, "common_random_numbers = {}", self.common_random_numbers);
        let _ = writeln!(rest, "v_grid = {}", list(&self.v_grid));
        let _ = writeln!(rest, "n_grid = {}", list(&self.n_grid));
        let _ = writeln!(rest, "rate_grid = {}", list(&self.rate_grid));
        let _ = writeln!(rest, "eps_grid = {}", list(&self.eps_grid));
        let _ = writeln!(rest, "gamma_delta_grid = {}", list(&self.gamma_delta_grid));
        let _ = writeln!(rest, "b_max_grid = {}", list(&self.b_max_grid));
        let _ = writeln!(rest, "p_d_grid = {}", list(&self.p_d_grid));
        let _ = writeln!(rest, "m_grid = {}", list(&self.m_grid));
        let _ = write!(rest, "delay = {}", self.delay);
        lines.extend(rest.lines().map(str::to_string));
        lines
    }
}

/// Recover the resolved spec from a dataset's `# key = value` header.
pub fn spec_from_dataset(text: &str) -> Result<ExperimentSpec, CliError> {
    let header: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim_start())
        .filter(|l| !l.starts_with("meta."))
        .collect::<Vec<_>>()
        .join("\n");
    parse_config(&header)
}
