//! Local curvature parameters of a concave valuation.
//!
//! For a point `z` and width `w`, the secant through `(z, v(z))` and
//! `(z+w, v(z+w))` lower-bounds the function. The multiplicative curvature
//! is the largest ratio between the function and that secant over
//! `z* ∈ (0, w)`, maximized over all `z`; the additive curvature measures
//! the same gap as a difference. Budget and piecewise-linear families get
//! exact closed-form reductions; the other families run a grid search with
//! golden-section refinement. Every report carries the maximizing witness
//! so the value can be re-derived from the defining expression alone.

use serde::{Deserialize, Serialize};

use crate::error::{IcaError, Result};
use crate::valuations::ConcaveValuation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Multiplicative,
    Additive,
}

/// A curvature value together with its maximizing witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub kind: CurvatureKind,
    /// `mu >= 1` for multiplicative, `alpha >= 0` for additive.
    pub value: f64,
    pub witness_z: f64,
    pub witness_zstar: f64,
    /// The width `w` the report was computed for.
    pub width: f64,
    /// Set when the maximum is a supremum approached at an open endpoint
    /// (the witness then marks the endpoint).
    pub supremum: bool,
    /// Whether a closed-form path produced the value.
    pub closed_form: bool,
}

impl CurvatureReport {
    /// Re-evaluate the defining expression at the stored witness and check
    /// it reproduces `value` within `tol`. Unbounded (supremum) reports
    /// instead check the expression exceeds any fixed bound near the
    /// witness.
    pub fn certify(&self, v: &ConcaveValuation, tol: f64) -> bool {
        if self.value.is_infinite() {
            // unbounded supremum: the expression must keep growing as z*
            // approaches the open endpoint
            let eval = |zs: f64| match self.kind {
                CurvatureKind::Multiplicative => mult_gap_expr(v, self.witness_z, zs, self.width),
                CurvatureKind::Additive => add_gap_expr(v, self.witness_z, zs, self.width),
            };
            let coarse = eval(self.width * 1e-6);
            let fine = eval(self.width * 1e-12);
            return fine > coarse && coarse > 1.0;
        }
        let got = match self.kind {
            CurvatureKind::Multiplicative => {
                mult_gap_expr(v, self.witness_z, self.witness_zstar, self.width)
            }
            CurvatureKind::Additive => {
                add_gap_expr(v, self.witness_z, self.witness_zstar, self.width)
            }
        };
        (got - self.value).abs() <= tol
    }
}

/// Controls for the numeric search paths.
#[derive(Debug, Clone)]
pub struct SearchParams {
    /// Upper bound for the outer sweep over `z`; defaults to `10·w`.
    pub z_max: Option<f64>,
    pub outer_grid: usize,
    pub inner_grid: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            z_max: None,
            outer_grid: 512,
            inner_grid: 512,
        }
    }
}

/// Slope of the lower-bounding secant through `(z, v(z))` and
/// `(z+w, v(z+w))`.
pub fn secant_slope(v: &ConcaveValuation, z: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(IcaError::Domain(format!(
            "secant width must be positive, got {w}"
        )));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(IcaError::Domain(format!(
            "secant point must be >= 0, got {z}"
        )));
    }
    Ok((v.value(z + w) - v.value(z)) / w)
}

/// The multiplicative gap expression `v(z+z*) / (v(z) + z*·σ(z,w))`,
/// with the `0/0` corner evaluated as a limit.
pub fn mult_gap_expr(v: &ConcaveValuation, z: f64, zstar: f64, w: f64) -> f64 {
    let sigma = (v.value(z + w) - v.value(z)) / w;
    let num = v.value(z + zstar);
    let den = v.value(z) + zstar * sigma;
    if den <= 0.0 {
        if num <= 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// The additive gap expression `v(z+z*) − (v(z) + z*·σ(z,w))`.
pub fn add_gap_expr(v: &ConcaveValuation, z: f64, zstar: f64, w: f64) -> f64 {
    let sigma = (v.value(z + w) - v.value(z)) / w;
    v.value(z + zstar) - (v.value(z) + zstar * sigma)
}

/// Local multiplicative curvature of `v` at width `w`, with default search
/// parameters.
pub fn mult_curvature(v: &ConcaveValuation, w: f64) -> Result<CurvatureReport> {
    mult_curvature_with(v, w, &SearchParams::default())
}

pub fn mult_curvature_with(
    v: &ConcaveValuation,
    w: f64,
    params: &SearchParams,
) -> Result<CurvatureReport> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(IcaError::Domain(format!(
            "curvature width must be positive, got {w}"
        )));
    }
    v.validate()?;
    if v.value(0.0) < 0.0 {
        return Err(IcaError::Domain(
            "multiplicative curvature requires a non-negative valuation".into(),
        ));
    }
    // v(0) = 0 with unbounded initial slope makes the ratio blow up as
    // z* -> 0 at z = 0: the curvature is a supremum equal to +inf.
    if v.value(0.0) == 0.0 && v.slope_at_zero().is_infinite() {
        return Ok(CurvatureReport {
            kind: CurvatureKind::Multiplicative,
            value: f64::INFINITY,
            witness_z: 0.0,
            witness_zstar: 0.0,
            width: w,
            supremum: true,
            closed_form: true,
        });
    }
    match v {
        ConcaveValuation::Linear { .. } => {
            Ok(trivial_report(CurvatureKind::Multiplicative, 1.0, w))
        }
        ConcaveValuation::Power { exponent } if *exponent == 1.0 => {
            Ok(trivial_report(CurvatureKind::Multiplicative, 1.0, w))
        }
        ConcaveValuation::Budget { cap } => Ok(budget_mult(*cap, w)),
        ConcaveValuation::Piecewise { points, slopes } => Ok(pl_reduction(
            v,
            points,
            slopes,
            w,
            CurvatureKind::Multiplicative,
        )),
        _ => Ok(generic_search(v, w, CurvatureKind::Multiplicative, params)),
    }
}

/// Local additive curvature of `v` at width `w`.
pub fn add_curvature(v: &ConcaveValuation, w: f64) -> Result<CurvatureReport> {
    add_curvature_with(v, w, &SearchParams::default())
}

pub fn add_curvature_with(
    v: &ConcaveValuation,
    w: f64,
    params: &SearchParams,
) -> Result<CurvatureReport> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(IcaError::Domain(format!(
            "curvature width must be positive, got {w}"
        )));
    }
    v.validate()?;
    match v {
        ConcaveValuation::Linear { .. } => Ok(trivial_report(CurvatureKind::Additive, 0.0, w)),
        ConcaveValuation::Power { exponent } if *exponent == 1.0 => {
            Ok(trivial_report(CurvatureKind::Additive, 0.0, w))
        }
        ConcaveValuation::Budget { cap } => {
            let points = vec![0.0, *cap];
            let slopes = vec![1.0, 0.0];
            Ok(pl_reduction(
                v,
                &points,
                &slopes,
                w,
                CurvatureKind::Additive,
            ))
        }
        ConcaveValuation::Piecewise { points, slopes } => {
            Ok(pl_reduction(v, points, slopes, w, CurvatureKind::Additive))
        }
        ConcaveValuation::SmoothLog {
            eta,
            omega,
            inner: None,
        } => Ok(smooth_log_add_closed(*eta, *omega, w)),
        _ => Ok(generic_search(v, w, CurvatureKind::Additive, params)),
    }
}

/// Closed-form additive curvature of `v(u) = eta·ln(u + omega)` at width 1.
///
/// Must agree with the numeric path of [`add_curvature`] within 1e-6.
pub fn smooth_log_alpha_closed_form(eta: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(IcaError::Domain(format!(
            "omega must be positive, got {omega}"
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(IcaError::Domain(format!("eta must be positive, got {eta}")));
    }
    let l = (1.0 / omega).ln_1p();
    Ok(eta * ((1.0 / (omega * l)).ln() + omega * l - 1.0))
}

fn trivial_report(kind: CurvatureKind, value: f64, w: f64) -> CurvatureReport {
    CurvatureReport {
        kind,
        value,
        witness_z: 0.0,
        witness_zstar: w / 2.0,
        width: w,
        supremum: false,
        closed_form: true,
    }
}

/// Exact multiplicative curvature for `v(u) = min(u, c)`.
///
/// The width is clamped to the cap (utilities past the cap add nothing to
/// the gap analysis, and the piecewise guarantee presumes item utilities
/// within one segment). For effective width `w' = min(w, c)` the gap is
/// maximized at `z = c − w'/2` with `z* = w'/2` (the kink `z + z* = c`),
/// giving `mu = 4c / (4c − w')`. The report's `width` is the clamped one,
/// so the witness certifies against it directly.
fn budget_mult(cap: f64, w: f64) -> CurvatureReport {
    let weff = w.min(cap);
    let z = cap - weff / 2.0;
    let zstar = weff / 2.0;
    let value = 4.0 * cap / (4.0 * cap - weff);
    CurvatureReport {
        kind: CurvatureKind::Multiplicative,
        value,
        witness_z: z,
        witness_zstar: zstar,
        width: weff,
        supremum: false,
        closed_form: true,
    }
}

/// Closed-form additive curvature for `eta·ln(u + omega)` at general width:
/// the maximizer over `z` is `z = 0`, and the inner maximizer over `z*` is
/// interior at `1/λ − omega` where `λ = ln(1 + w/omega)/w`.
fn smooth_log_add_closed(eta: f64, omega: f64, w: f64) -> CurvatureReport {
    let lambda = (w / omega).ln_1p() / w;
    let zstar = 1.0 / lambda - omega;
    let value = eta * (omega * lambda - 1.0 - (omega * lambda).ln());
    CurvatureReport {
        kind: CurvatureKind::Additive,
        value,
        witness_z: 0.0,
        witness_zstar: zstar,
        width: w,
        supremum: false,
        closed_form: true,
    }
}

/// Exact reduction for piecewise-linear valuations.
///
/// For fixed `z` the inner maximand is piecewise linear over a linear
/// denominator in `z*`, so the inner maximum sits at a kink of the
/// function inside `(z, z+w)`. For a fixed kink `x_K` and fixed segments
/// of `z` and `z+w`, the denominator (mult) or negated difference (add)
/// is an upward quadratic in `z`, minimized in closed form at its vertex
/// or at the interval endpoints. Enumerating all (segment, kink, segment)
/// triples is exhaustive.
fn pl_reduction(
    v: &ConcaveValuation,
    points: &[f64],
    slopes: &[f64],
    w: f64,
    kind: CurvatureKind,
) -> CurvatureReport {
    let lambda = slopes.len();
    let eval = |z: f64, zstar: f64| -> f64 {
        match kind {
            CurvatureKind::Multiplicative => mult_gap_expr(v, z, zstar, w),
            CurvatureKind::Additive => add_gap_expr(v, z, zstar, w),
        }
    };
    let base = match kind {
        CurvatureKind::Multiplicative => 1.0,
        CurvatureKind::Additive => 0.0,
    };
    let mut best_value = base;
    let mut best_witness = (0.0, w / 2.0);
    // refresh best from an actual evaluation so certification always holds
    let seed = eval(0.0, w / 2.0);
    if seed > best_value {
        best_value = seed;
        best_witness = (0.0, w / 2.0);
    }

    let value_at = |x: f64| v.value(x);
    let mut consider = |z: f64, kink: f64| {
        let zstar = kink - z;
        if !(zstar > 0.0 && zstar < w) || z < 0.0 {
            return;
        }
        let got = eval(z, zstar);
        if got > best_value {
            best_value = got;
            best_witness = (z, zstar);
        }
    };

    for kidx in 1..lambda {
        let kink = points[kidx];
        // segment a of z: z in [points[a], points[a+1]] (last unbounded,
        // but z < kink), segment b of z+w similarly with z+w > kink.
        for a in 0..=kidx.min(lambda - 1) {
            let a_lo = points[a];
            let a_hi = if a + 1 < lambda {
                points[a + 1]
            } else {
                f64::INFINITY
            };
            for b in kidx..lambda {
                let b_lo = points[b];
                let b_hi = if b + 1 < lambda {
                    points[b + 1]
                } else {
                    f64::INFINITY
                };
                let lo = a_lo.max(b_lo - w).max(kink - w);
                let hi = a_hi.min(b_hi - w).min(kink);
                if lo > hi {
                    continue;
                }
                // quadratic in z: den(z) = v(z) + (kink − z)·σ(z) with
                // v(z) = A + ma·z and v(z+w) = B + mb·z on these segments
                let ma = slopes[a];
                let mb = slopes[b];
                let av = value_at(a_lo) - ma * a_lo;
                let bv = value_at(b_lo) + mb * (w - b_lo);
                // den(z) = av + ma z + (kink − z)((bv − av) + (mb − ma) z)/w
                let c2 = (ma - mb) / w;
                let c1 = ma + (kink * (mb - ma) - (bv - av)) / w;
                let candidates_z = {
                    let mut cs = vec![lo, hi];
                    if c2 > 0.0 {
                        let vertex = -c1 / (2.0 * c2);
                        if vertex > lo && vertex < hi {
                            cs.push(vertex);
                        }
                    }
                    cs
                };
                for z in candidates_z {
                    consider(z, kink);
                }
            }
        }
    }

    CurvatureReport {
        kind,
        value: best_value,
        witness_z: best_witness.0,
        witness_zstar: best_witness.1,
        width: w,
        supremum: false,
        closed_form: true,
    }
}

fn golden_max(mut lo: f64, mut hi: f64, iters: usize, f: &mut dyn FnMut(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Ternary search for the maximum of a concave function on `[lo, hi]`.
fn ternary_max(mut lo: f64, mut hi: f64, iters: usize, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    for _ in 0..iters {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// Grid search with local refinement for families without a closed form.
fn generic_search(
    v: &ConcaveValuation,
    w: f64,
    kind: CurvatureKind,
    params: &SearchParams,
) -> CurvatureReport {
    let z_max = params.z_max.unwrap_or(10.0 * w).max(w);
    let expr = |z: f64, zs: f64| match kind {
        CurvatureKind::Multiplicative => mult_gap_expr(v, z, zs, w),
        CurvatureKind::Additive => add_gap_expr(v, z, zs, w),
    };

    // inner maximization over z* in (0, w)
    let inner = |z: f64| -> (f64, f64) {
        match kind {
            CurvatureKind::Additive => {
                // concave in z*: concave function minus a linear one
                let f = |zs: f64| expr(z, zs);
                ternary_max(w * 1e-12, w * (1.0 - 1e-12), 200, &f)
            }
            CurvatureKind::Multiplicative => {
                let g = params.inner_grid;
                let mut best = (w / 2.0, expr(z, w / 2.0));
                let mut best_idx = g / 2;
                for j in 1..=g {
                    let zs = w * j as f64 / (g as f64 + 1.0);
                    let val = expr(z, zs);
                    if val > best.1 {
                        best = (zs, val);
                        best_idx = j;
                    }
                }
                let lo = w * (best_idx.saturating_sub(1).max(1)) as f64 / (g as f64 + 1.0);
                let hi = w * ((best_idx + 1).min(g)) as f64 / (g as f64 + 1.0);
                let mut f = |zs: f64| expr(z, zs);
                let (zs, val) = golden_max(lo, hi, 80, &mut f);
                if val >= best.1 {
                    best = (zs, val);
                }
                // open-endpoint suprema: the ratio can peak as z* tends to
                // either end of (0, w), e.g. at z with v(z) = 0
                for zs in [w * 1e-9, w * (1.0 - 1e-9)] {
                    let val = expr(z, zs);
                    if val > best.1 {
                        best = (zs, val);
                    }
                }
                best
            }
        }
    };

    // outer sweep over z: 0, slope transitions, and a uniform grid
    let mut zs_grid: Vec<f64> = vec![0.0];
    for t in v.transitions() {
        if t <= z_max {
            zs_grid.push(t);
        }
        let before = t - w;
        if before > 0.0 && before <= z_max {
            zs_grid.push(before);
        }
    }
    for i in 1..=params.outer_grid {
        zs_grid.push(z_max * i as f64 / params.outer_grid as f64);
    }
    zs_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    zs_grid.dedup();

    let mut best_z = 0.0;
    let mut best_inner = inner(0.0);
    for &z in &zs_grid[1..] {
        let got = inner(z);
        if got.1 > best_inner.1 {
            best_inner = got;
            best_z = z;
        }
    }
    // refine z around the best grid point
    let idx = zs_grid.iter().position(|&z| z == best_z).unwrap();
    let lo = if idx > 0 { zs_grid[idx - 1] } else { 0.0 };
    let hi = if idx + 1 < zs_grid.len() {
        zs_grid[idx + 1]
    } else {
        z_max
    };
    let mut outer_obj = |z: f64| inner(z).1;
    let (zr, vr) = golden_max(lo, hi, 60, &mut outer_obj);
    if vr > best_inner.1 {
        best_z = zr;
        best_inner = inner(zr);
    }

    let supremum = best_inner.0 <= 2e-9 * w || best_inner.0 >= (1.0 - 2e-9) * w;
    CurvatureReport {
        kind,
        value: best_inner.1,
        witness_z: best_z,
        witness_zstar: best_inner.0,
        width: w,
        supremum,
        closed_form: false,
    }
}
