//! The named experiments. Each grid point is computed independently on the
//! rayon pool; rows are emitted in grid order whatever the completion order.

use rayon::prelude::*;
use wpc_core::accum::{avg_power_fbftt, simulate, Protocol, ProtocolConfig, ProtocolMetrics};
use wpc_core::fbl::{block_error, required_snr, required_snr_bisection, snr_excess_limit, FblTarget};
use wpc_core::htt::{approx_error_metric, avg_power_htt, error_htt_closed, error_htt_exact};
use wpc_core::sysmodel::{derive_link, watts_to_dbm, BatteryCapacity, PhaseConfig, SystemParams};

use crate::config::{protocol_name, ExperimentName, ExperimentSpec};
use crate::dataset::{col, Cell, Column, Dataset, PlotSpec};
use crate::error::CliError;

/// CI half-width above this fraction of the estimate marks a point as noisy.
const WIDE_CI: f64 = 0.3;

type Row = Vec<Cell>;

/// Receives each dataset as soon as it is finished (or cut short).
pub trait Sink {
    fn accept(&mut self, dataset: Dataset) -> Result<(), CliError>;
}

impl<F: FnMut(Dataset) -> Result<(), CliError>> Sink for F {
    fn accept(&mut self, dataset: Dataset) -> Result<(), CliError> {
        self(dataset)
    }
}

pub fn run_experiment(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    match spec.experiment {
        ExperimentName::Fig3Delta => fig3(spec, sink),
        ExperimentName::Fig4HttGrid => fig4(spec, sink),
        ExperimentName::Fig5SolverIters => fig5(spec, sink),
        ExperimentName::Fig6EpsthSweep => fig6(spec, sink),
        ExperimentName::Fig7BatterySweep => fig7(spec, sink),
        ExperimentName::Fig8DelayConstrained => fig8(spec, sink),
        ExperimentName::Custom => custom(spec, sink),
    }
}

fn metadata(spec: &ExperimentSpec) -> Vec<String> {
    let mut lines = spec.to_toml_lines();
    lines.push(format!("meta.version = \"{}\"", env!("CARGO_PKG_VERSION")));
    if let Ok(phase) = PhaseConfig::with_override(spec.v, spec.n, spec.k, true) {
        let link = derive_link(&spec.params, &phase);
        lines.push(format!("meta.varpi_star = {:?}", link.varpi_star));
        lines.push(format!("meta.lambda = {:?}", link.lambda_or_inf()));
        lines.push(format!("meta.beta = {:?}", link.beta));
        lines.push(format!("meta.upsilon_j = {:?}", link.upsilon));
        lines.push(format!("meta.chi_j = {:?}", link.chi));
    }
    lines.push(format!("meta.effective_rounds = {}", spec.effective_rounds()));
    lines
}

/// Evaluate every point, keep rows up to the first failure, and hand the
/// (possibly partial) dataset to the sink.
fn fill<P, F>(mut ds: Dataset, points: &[P], f: F, sink: &mut dyn Sink) -> Result<(), CliError>
where
    P: Sync,
    F: Fn(&P) -> Result<Vec<Row>, CliError> + Sync,
{
    let results: Vec<Result<Vec<Row>, CliError>> = points.par_iter().map(&f).collect();
    let mut failure = None;
    for r in results {
        match r {
            Ok(rows) => ds.rows.extend(rows),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    ds.complete = failure.is_none();
    let any_rows = !ds.rows.is_empty();
    if any_rows || failure.is_none() {
        sink.accept(ds)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn phase(spec: &ExperimentSpec, v: u32, n: u32, k: u32) -> Result<PhaseConfig, CliError> {
    PhaseConfig::with_override(v, n, k, spec.allow_short_blocklength)
        .map_err(|e| CliError::numeric(format!("v={v}, n={n}, k={k}"), e))
}

fn battery(b: f64) -> BatteryCapacity {
    if b.is_infinite() {
        BatteryCapacity::Unbounded
    } else {
        BatteryCapacity::Finite(b)
    }
}

fn b_label(b: BatteryCapacity) -> f64 {
    b.joules().unwrap_or(f64::INFINITY)
}

/// Monte Carlo configuration for one grid point. With common random numbers
/// every point reuses the same replica streams.
fn mc_config(spec: &ExperimentSpec, variant: Protocol, n: u32, k: u32, eps_th: f64, point: usize) -> Result<ProtocolConfig, CliError> {
    let eps = if variant == Protocol::Htt { 0.5 } else { eps_th };
    let target = FblTarget::new(n, k, eps, spec.gamma_delta)
        .map_err(|e| CliError::numeric(format!("n={n}, k={k}, eps_th={eps_th}"), e))?;
    let mut cfg = ProtocolConfig::new(variant, target);
    cfg.burn_in = spec.burn_in;
    cfg.decision = spec.decision;
    cfg = cfg.with_budget(spec.effective_rounds(), spec.replicas);
    cfg.seed = if spec.common_random_numbers {
        spec.seed
    } else {
        spec.seed.wrapping_add((point as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };
    Ok(cfg)
}

/// Flag points the Monte Carlo budget cannot resolve.
fn quality(m: &ProtocolMetrics, variant: Protocol, eps_th: f64) -> &'static str {
    let measured = m.rounds_per_replica as f64 * m.replicas.len() as f64;
    if variant != Protocol::Htt && m.eps_out == 0.0 && eps_th < 3.0 / measured {
        // no outage observed, yet outage could still dominate eps_th
        "below_resolution"
    } else if m.ci_halfwidth.eps_overall > WIDE_CI * m.eps_overall.abs()
        || m.ci_halfwidth.avg_tx_power > WIDE_CI * m.avg_tx_power.abs()
    {
        "wide_ci"
    } else {
        "ok"
    }
}

fn simulate_point(
    params: &SystemParams,
    ph: &PhaseConfig,
    cfg: &ProtocolConfig,
    label: &str,
) -> Result<ProtocolMetrics, CliError> {
    simulate(params, ph, cfg).map_err(|e| CliError::numeric(label.to_string(), e))
}

fn mc_cells(m: &ProtocolMetrics, variant: Protocol, eps_th: f64) -> Vec<Cell> {
    vec![
        m.eps_overall.into(),
        m.eps_out.into(),
        m.avg_tx_power.into(),
        m.ci_halfwidth.eps_overall.into(),
        m.ci_halfwidth.avg_tx_power.into(),
        quality(m, variant, eps_th).into(),
    ]
}

const MC_COLUMNS: [Column; 6] = [
    col("eps_overall", ""),
    col("eps_out", ""),
    col("avg_power_w", "W"),
    col("ci_eps", ""),
    col("ci_power", "W"),
    col("quality", ""),
];

fn fig3(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let ds = Dataset::new(
        "fig3_delta",
        vec![
            col("n", "channel uses"),
            col("eps_th", ""),
            col("k", "bits"),
            col("rate", "bits/use"),
            col("delta", ""),
            col("delta_limit", ""),
            col("gamma_hat", ""),
            col("iterations", ""),
        ],
        metadata(spec),
        PlotSpec { x: "rate", y: vec!["delta", "delta_limit"], group: vec!["n", "eps_th"], logx: false, logy: false },
    );
    let mut points = Vec::new();
    for &n in &spec.n_grid {
        for &eps in &spec.eps_grid {
            for &r in &spec.rate_grid {
                points.push((n, eps, ((r * n as f64).round() as u32).max(1)));
            }
        }
    }
    fill(ds, &points, |&(n, eps, k)| {
        let label = format!("n={n}, eps_th={eps}, k={k}");
        let target = FblTarget::new(n, k, eps, spec.gamma_delta).map_err(|e| CliError::numeric(&label, e))?;
        let sol = required_snr(&target).map_err(|e| CliError::numeric(&label, e))?;
        let limit = snr_excess_limit(n, eps).map_err(|e| CliError::numeric(&label, e))?;
        Ok(vec![vec![
            n.into(),
            eps.into(),
            k.into(),
            target.rate().into(),
            (sol.gamma_hat / target.shannon_threshold()).into(),
            limit.into(),
            sol.gamma_hat.into(),
            sol.iterations.into(),
        ]])
    }, sink)
}

fn fig4(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let ds = Dataset::new(
        "fig4_htt_grid",
        vec![
            col("p_d_w", "W"),
            col("b_max_j", "J"),
            col("v", "channel uses"),
            col("n", "channel uses"),
            col("eps1", ""),
            col("eps2_exact", ""),
            col("eps2_closed", ""),
            col("xi", ""),
            col("xi_relative", ""),
            col("clamped", ""),
            col("avg_power_w", "W"),
        ],
        metadata(spec),
        PlotSpec { x: "n", y: vec!["xi", "eps2_exact"], group: vec!["p_d_w", "b_max_j", "v"], logx: false, logy: true },
    );
    let mut points = Vec::new();
    for &p_d in &spec.p_d_grid {
        for &b in &spec.b_max_grid {
            for &v in &spec.v_grid {
                for &n in &spec.n_grid {
                    points.push((p_d, battery(b), v, n));
                }
            }
        }
    }
    fill(ds, &points, |&(p_d, b, v, n)| {
        let label = format!("p_d={p_d} W, b_max={} J, v={v}, n={n}", b_label(b));
        let mut params = spec.params.clone();
        params.p_d = p_d;
        params.b_max = b;
        let ph = phase(spec, v, n, spec.k)?;
        let num = |e| CliError::numeric(&label, e);
        let exact = error_htt_exact(&params, &ph).map_err(num)?;
        let closed = error_htt_closed(&params, &ph).map_err(num)?;
        let xi = approx_error_metric(exact.eps2, closed.eps2);
        let power = avg_power_htt(&params, &ph).map_err(num)?;
        Ok(vec![vec![
            p_d.into(),
            b_label(b).into(),
            v.into(),
            n.into(),
            exact.eps1.into(),
            exact.eps2.into(),
            closed.eps2.into(),
            xi.xi.into(),
            xi.relative.into(),
            closed.clamped.into(),
            power.into(),
        ]])
    }, sink)
}

fn fig5(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let ds = Dataset::new(
        "fig5_solver_iters",
        vec![
            col("gamma_delta", ""),
            col("n", "channel uses"),
            col("eps_th", ""),
            col("gamma_hat", ""),
            col("iterations", ""),
            col("bisection_iterations", ""),
            col("rel_error", ""),
        ],
        metadata(spec),
        PlotSpec { x: "eps_th", y: vec!["iterations", "bisection_iterations"], group: vec!["gamma_delta", "n"], logx: true, logy: false },
    );
    let mut points = Vec::new();
    for &gd in &spec.gamma_delta_grid {
        for &n in &spec.n_grid {
            for &eps in &spec.eps_grid {
                points.push((gd, n, eps));
            }
        }
    }
    fill(ds, &points, |&(gd, n, eps)| {
        let label = format!("gamma_delta={gd}, n={n}, eps_th={eps}");
        let num = |e| CliError::numeric(&label, e);
        let target = FblTarget::new(n, spec.k, eps, gd).map_err(num)?;
        let sol = required_snr(&target).map_err(num)?;
        // width-4 bracket around the solution, as in the bisection comparison
        let lo = (sol.gamma_hat - 2.0).max(1e-12);
        let bis = required_snr_bisection(&target, lo, lo + 4.0).map_err(num)?;
        let rel = (block_error(sol.gamma_hat, n, spec.k) - eps).abs() / eps;
        Ok(vec![vec![
            gd.into(),
            n.into(),
            eps.into(),
            sol.gamma_hat.into(),
            sol.iterations.into(),
            bis.iterations.into(),
            rel.into(),
        ]])
    }, sink)
}

fn fig6(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let mut columns = vec![col("n", "channel uses"), col("eps_th", ""), col("protocol", "")];
    columns.extend(MC_COLUMNS);
    let ds = Dataset::new(
        "fig6_epsth_sweep",
        columns,
        metadata(spec),
        PlotSpec { x: "eps_th", y: vec!["eps_overall", "avg_power_w"], group: vec!["n", "protocol"], logx: true, logy: true },
    );
    let mut points = Vec::new();
    for &n in &spec.n_grid {
        for &p in &spec.protocols {
            for &eps in &spec.eps_grid {
                points.push((n, p, eps, points.len()));
            }
        }
    }
    let params = &spec.params;
    fill(ds, &points, |&(n, p, eps, idx)| {
        let label = format!("n={n}, protocol={}, eps_th={eps}", protocol_name(p));
        let ph = phase(spec, spec.v, n, spec.k)?;
        let cfg = mc_config(spec, p, n, spec.k, eps, idx)?;
        let m = simulate_point(params, &ph, &cfg, &label)?;
        let mut rows = Vec::new();
        let mut row: Row = vec![n.into(), eps.into(), protocol_name(p).into()];
        row.extend(mc_cells(&m, p, eps));
        rows.push(row);
        if p == Protocol::Htt {
            let num = |e| CliError::numeric(&label, e);
            let exact = error_htt_exact(params, &ph).map_err(num)?;
            let power = avg_power_htt(params, &ph).map_err(num)?;
            rows.push(vec![
                n.into(),
                eps.into(),
                "htt_analytic".into(),
                exact.eps.into(),
                exact.eps1.into(),
                power.into(),
                0.0.into(),
                0.0.into(),
                "exact".into(),
            ]);
        }
        Ok(rows)
    }, sink)
}

fn fig7(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let mut columns = vec![col("p_d_w", "W"), col("p_d_dbm", "dBm"), col("b_max_j", "J"), col("protocol", "")];
    columns.extend(MC_COLUMNS);
    columns.push(col("avg_power_dbm", "dBm"));
    let ds = Dataset::new(
        "fig7_battery_sweep",
        columns,
        metadata(spec),
        PlotSpec { x: "p_d_dbm", y: vec!["eps_overall", "avg_power_dbm"], group: vec!["b_max_j", "protocol"], logx: false, logy: false },
    );
    let mut points = Vec::new();
    for &b in &spec.b_max_grid {
        for &p_d in &spec.p_d_grid {
            for &p in &spec.protocols {
                points.push((battery(b), p_d, p, points.len()));
            }
        }
    }
    fill(ds, &points, |&(b, p_d, p, idx)| {
        let label = format!("b_max={} J, p_d={p_d} W, protocol={}", b_label(b), protocol_name(p));
        let mut params = spec.params.clone();
        params.p_d = p_d;
        params.b_max = b;
        let ph = phase(spec, spec.v, spec.n, spec.k)?;
        let cfg = mc_config(spec, p, spec.n, spec.k, spec.eps_th, idx)?;
        let m = simulate_point(&params, &ph, &cfg, &label)?;
        let mut row: Row = vec![p_d.into(), watts_to_dbm(p_d).into(), b_label(b).into(), protocol_name(p).into()];
        row.extend(mc_cells(&m, p, spec.eps_th));
        row.push(watts_to_dbm(m.avg_tx_power).into());
        Ok(vec![row])
    }, sink)
}

fn fig8(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let mut columns = vec![
        col("m_shape", ""),
        col("n", "channel uses"),
        col("v", "channel uses"),
        col("eps_th", ""),
        col("protocol", ""),
    ];
    columns.extend(MC_COLUMNS);
    let ds = Dataset::new(
        "fig8_delay_constrained",
        columns,
        metadata(spec),
        PlotSpec { x: "n", y: vec!["eps_overall"], group: vec!["m_shape", "protocol", "eps_th"], logx: false, logy: true },
    );
    let strictest = spec.eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let mut points = Vec::new();
    for (mi, &m) in spec.m_grid.iter().enumerate() {
        for &n in &spec.n_grid {
            for &p in &spec.protocols {
                if p == Protocol::Htt {
                    points.push((m, n, p, f64::NAN, points.len()));
                    continue;
                }
                for &eps in &spec.eps_grid {
                    // extra fading severities only at the strictest target
                    if mi == 0 || eps == strictest {
                        points.push((m, n, p, eps, points.len()));
                    }
                }
            }
        }
    }
    fill(ds, &points, |&(m, n, p, eps, idx)| {
        let v = spec.delay - n;
        let label = format!("m={m}, n={n}, protocol={}, eps_th={eps}", protocol_name(p));
        let mut params = spec.params.clone();
        params.m_shape = m;
        let ph = phase(spec, v, n, spec.k)?;
        let cfg = mc_config(spec, p, n, spec.k, eps, idx)?;
        let metrics = simulate_point(&params, &ph, &cfg, &label)?;
        let mut row: Row = vec![m.into(), n.into(), v.into(), eps.into(), protocol_name(p).into()];
        row.extend(mc_cells(&metrics, p, eps));
        Ok(vec![row])
    }, sink)
}

fn custom(spec: &ExperimentSpec, sink: &mut dyn Sink) -> Result<(), CliError> {
    let mut columns = vec![col("protocol", "")];
    columns.extend(MC_COLUMNS);
    columns.push(col("gamma_hat", ""));
    columns.push(col("avg_power_formula_w", "W"));
    let ds = Dataset::new(
        "custom",
        columns,
        metadata(spec),
        PlotSpec { x: "gamma_hat", y: vec!["eps_overall"], group: vec!["protocol"], logx: false, logy: true },
    );
    let points: Vec<(Protocol, usize)> = spec.protocols.iter().copied().zip(0..).collect();
    let params = &spec.params;
    fill(ds, &points, |&(p, idx)| {
        let label = format!("protocol={}", protocol_name(p));
        let num = |e| CliError::numeric(&label, e);
        let ph = phase(spec, spec.v, spec.n, spec.k)?;
        let cfg = mc_config(spec, p, spec.n, spec.k, spec.eps_th, idx)?;
        let m = simulate_point(params, &ph, &cfg, &label)?;
        let formula = match (p, m.gamma_hat) {
            (Protocol::Htt, _) => avg_power_htt(params, &ph).map_err(num)?,
            (_, Some(g)) if params.m_shape > 1.0 => avg_power_fbftt(params, &ph, g, m.eps_out).map_err(num)?,
            _ => f64::NAN,
        };
        let mut row: Row = vec![protocol_name(p).into()];
        row.extend(mc_cells(&m, p, spec.eps_th));
        row.push(m.gamma_hat.unwrap_or(f64::NAN).into());
        row.push(formula.into());
        Ok(vec![row])
    }, sink)
}
