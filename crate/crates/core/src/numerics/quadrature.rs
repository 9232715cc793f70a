//! Globally adaptive 15-point Gauss–Kronrod quadrature with caller-supplied
//! breakpoints and a rational map for a semi-infinite upper limit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, Error, Result};

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of bisections applied to any single panel.
    pub max_depth: u32,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_depth: u32) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) || max_depth < 1 {
            return Err(domain(
                "Tolerance::new",
                format!("abs_tol = {abs_tol}, rel_tol = {rel_tol}, max_depth = {max_depth}"),
            ));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_depth,
        })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_depth: 40,
        }
    }
}

/// Estimate and error bound of a completed integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Hard ceiling on live panels, independent of depth.
const MAX_PANELS: usize = 200_000;

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

fn adaptive<F: FnMut(f64) -> f64>(mut f: F, edges: &[f64], tol: Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let (value, error) = kronrod15(&mut f, w[0], w[1]);
        evaluations += 15;
        total += value;
        total_err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
            depth: 0,
        });
    }
    loop {
        let target = tol.abs_tol.max(tol.rel_tol * total.abs());
        if total_err <= target {
            // re-sum for a clean estimate free of incremental drift
            let value = heap.iter().map(|p| p.value).sum();
            let error = heap.iter().map(|p| p.error).sum();
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => {
                return Ok(Estimate {
                    value: 0.0,
                    error: 0.0,
                    evaluations,
                })
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        if worst.depth >= tol.max_depth || heap.len() >= MAX_PANELS || mid <= worst.a || mid >= worst.b {
            return Err(Error::QuadratureNonConvergence {
                estimate: total,
                error: total_err,
                tolerance: target,
            });
        }
        let (v1, e1) = kronrod15(&mut f, worst.a, mid);
        let (v2, e2) = kronrod15(&mut f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        for (a, b, value, error) in [(worst.a, mid, v1, e1), (mid, worst.b, v2, e2)] {
            heap.push(Panel {
                a,
                b,
                value,
                error,
                depth: worst.depth + 1,
            });
        }
    }
}

/// Integrate `f` over `[a, b]`; `b` may be `f64::INFINITY`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Integrate `f` over `[a, b]` with interior breakpoints at known kinks.
///
/// An infinite upper limit is handled by `x = a + t / (1 - t)` on `t ∈ [0, 1)`;
/// the Kronrod nodes never touch `t = 1`, so no explicit cutoff is needed as
/// long as the integrand decays faster than `1/x`. Breakpoints are carried
/// through the same map.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if !a.is_finite() || b.is_nan() || b == f64::NEG_INFINITY {
        return Err(domain("integrate", format!("limits [{a}, {b}]")));
    }
    if b < a {
        return integrate_with_breaks(f, b, a, breaks, tol).map(|e| Estimate {
            value: -e.value,
            ..e
        });
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut interior: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    interior.sort_by(f64::total_cmp);
    interior.dedup();

    if b.is_finite() {
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(a);
        edges.extend(interior);
        edges.push(b);
        adaptive(f, &edges, tol)
    } else {
        let mut edges = vec![0.0];
        edges.extend(interior.iter().map(|x| {
            let s = x - a;
            s / (1.0 + s)
        }));
        edges.push(1.0);
        adaptive(
            |t: f64| {
                let s = 1.0 - t;
                f(a + t / s) / (s * s)
            },
            &edges,
            tol,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::unit_gamma_pdf;

    #[test]
    fn unit_exponential() {
        let e = integrate(|x: f64| (-x).exp(), 0.0, f64::INFINITY, Tolerance::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn zero_integrand() {
        let e = integrate(|_| 0.0, 0.0, 1.0, Tolerance::default()).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn gamma_density_normalizes() {
        let e = integrate(|g| unit_gamma_pdf(2.0, g), 0.0, f64::INFINITY, Tolerance::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn kinked_integrand_with_breakpoint() {
        let f = |x: f64| (x - 0.3).abs();
        let exact = 0.5 * 0.3f64.powi(2) + 0.5 * 0.7f64.powi(2);
        let e = integrate_with_breaks(f, 0.0, 1.0, &[0.3], Tolerance::default()).unwrap();
        assert!((e.value - exact).abs() < 1e-14);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let e = integrate(|x: f64| x * x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((e.value + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn depth_exhaustion_is_reported() {
        let tol = Tolerance::new(1e-300, 1e-300, 2).unwrap();
        let r = integrate(|x: f64| x.sqrt().sin() / x.sqrt(), 0.0, 100.0, tol);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }

    #[test]
    fn invalid_tolerance_rejected() {
        assert!(Tolerance::new(0.0, 1e-6, 4).is_err());
        assert!(Tolerance::new(1e-6, 1e-6, 0).is_err());
    }
}
