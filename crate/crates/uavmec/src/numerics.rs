//! Shared iterative kernels: Lambert-W evaluation, guarded monotone
//! bisection, and projected subgradient steps.
//!
//! Every one-dimensional search in the solvers funnels through [`bisect`] so
//! that bracket bookkeeping lives in one place. A non-bracketing interval is
//! reported in the result instead of aborting: the multiplier searches pin
//! the offending bound and let their outer loop absorb the residual.

use crate::error::NumericsError;

/// -1/e, the branch point of the Lambert W function.
pub const LAMBERT_BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

/// Principal branch of the Lambert W function.
///
/// Valid for `x >= -1/e`. The result `w` satisfies
/// `|w e^w - x| <= 1e-12 * max(1, |x|)`; a safeguarded Halley iteration from
/// a `ln(1+x)`-based initial guess reaches that in well under 20 steps, and
/// large arguments are handled in log space so nothing overflows.
pub fn lambert_w0(x: f64) -> Result<f64, NumericsError> {
    if !x.is_finite() {
        return Err(NumericsError::NonFinite {
            x,
            context: "lambert_w0",
        });
    }
    if x < LAMBERT_BRANCH_POINT {
        // Tolerate arguments a few ulps below the branch point: they arise
        // from rounding in callers that computed -1/e themselves.
        if x > LAMBERT_BRANCH_POINT - 1e-13 {
            return Ok(-1.0);
        }
        return Err(NumericsError::LambertDomain { x });
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let q = std::f64::consts::E * x + 1.0; // distance from the branch point
    if q < 1e-6 {
        // Near w = -1 the Halley denominator vanishes; the branch-point
        // expansion in p = sqrt(2(ex + 1)) is accurate to ~1e-13 here.
        let p = (2.0 * q).sqrt();
        return Ok(-1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p);
    }
    if x > 1e2 {
        return Ok(lambert_w0_exp(x.ln()));
    }

    // Monotone bracket for the safeguard: w e^w is increasing on (-1, inf).
    let (mut lo, mut hi) = if x < 0.0 { (-1.0, 0.0) } else { (0.0, x.ln_1p()) };
    let mut w = if x < 0.0 {
        // Series guess clamped into the bracket.
        let p = (2.0 * q).sqrt();
        (-1.0 + p - p * p / 3.0).clamp(lo + 1e-9, hi - 1e-12)
    } else {
        x.ln_1p()
    };
    let tol = 0.2e-12 * x.abs().max(1.0);
    for _ in 0..20 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= tol {
            return Ok(w);
        }
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        // Halley step; fall back to the midpoint if it leaves the bracket.
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let cand = w - f / denom;
        w = if cand.is_finite() && cand > lo && cand < hi {
            cand
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(w)
}

/// `W0(e^y)` evaluated without forming `e^y`, by solving `w + ln w = y`.
///
/// The bandwidth closed forms take W of quantities whose logarithm is cheap
/// to assemble but whose value can overflow; they come through here.
pub(crate) fn lambert_w0_exp(y: f64) -> f64 {
    debug_assert!(y.is_finite(), "lambert_w0_exp needs a finite exponent");
    let mut w = if y > 1.0 {
        let l = y.ln();
        (y - l + l / y).max(f64::MIN_POSITIVE)
    } else {
        (y - 1.0).exp()
    };
    // g(w) = w + ln w - y is concave increasing, so Newton approaches the
    // root monotonically from below after at most one overshoot.
    for _ in 0..60 {
        let g = w + w.ln() - y;
        if g.abs() <= 1e-15 * (1.0 + y.abs()) {
            break;
        }
        let mut next = w - g * w / (w + 1.0);
        if !(next > 0.0) {
            next = 0.5 * w;
        }
        if next == w {
            break;
        }
        w = next;
    }
    w
}

/// Direction of a monotone scalar map on the bisection interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotone {
    Increasing,
    Decreasing,
}

/// Interval, tolerances and iteration budget for [`bisect`].
#[derive(Clone, Copy, Debug)]
pub struct BisectionSpec {
    pub lo: f64,
    pub hi: f64,
    /// Absolute tolerance on the bracket width.
    pub x_tol: f64,
    /// Early-exit tolerance on `|g(mid) - target|`; set to 0 to disable.
    pub y_tol: f64,
    pub max_iter: u32,
    pub monotone: Monotone,
}

/// Outcome of a guarded bisection.
#[derive(Clone, Copy, Debug)]
pub struct BisectionResult {
    pub root: f64,
    /// `g(root) - target` at the last evaluated point.
    pub residual: f64,
    /// Number of interval halvings performed.
    pub iterations: u32,
    pub converged: bool,
    /// True when `[lo, hi]` did not enclose the target; the nearer endpoint
    /// is returned in `root`.
    pub bracket_miss: bool,
}

/// Finds `x` with `g(x) = target` for a map monotone on `[lo, hi]`.
///
/// The iteration count never exceeds `ceil(log2((hi - lo) / x_tol))` (capped
/// by `max_iter`), and a non-bracketing interval is flagged, not fatal.
pub fn bisect<F: FnMut(f64) -> f64>(spec: &BisectionSpec, target: f64, mut g: F) -> BisectionResult {
    let BisectionSpec {
        mut lo,
        mut hi,
        x_tol,
        y_tol,
        max_iter,
        monotone,
    } = *spec;
    debug_assert!(lo <= hi, "inverted bisection interval");
    let sign = match monotone {
        Monotone::Increasing => 1.0,
        Monotone::Decreasing => -1.0,
    };
    // Oriented residual s(x) = sign * (g(x) - target) is non-decreasing.
    let s_lo = sign * (g(lo) - target);
    if s_lo >= 0.0 {
        return BisectionResult {
            root: lo,
            residual: sign * s_lo,
            iterations: 0,
            converged: s_lo <= y_tol,
            bracket_miss: s_lo > y_tol,
        };
    }
    let s_hi = sign * (g(hi) - target);
    if s_hi <= 0.0 {
        return BisectionResult {
            root: hi,
            residual: sign * s_hi,
            iterations: 0,
            converged: -s_hi <= y_tol,
            bracket_miss: -s_hi > y_tol,
        };
    }

    let mut iterations = 0;
    let mut root = 0.5 * (lo + hi);
    let mut residual = f64::NAN;
    while iterations < max_iter && hi - lo > x_tol {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break; // interval below float resolution
        }
        let s_mid = sign * (g(mid) - target);
        iterations += 1;
        root = mid;
        residual = sign * s_mid;
        if s_mid.is_nan() {
            return BisectionResult {
                root,
                residual,
                iterations,
                converged: false,
                bracket_miss: false,
            };
        }
        if s_mid.abs() <= y_tol {
            return BisectionResult {
                root,
                residual,
                iterations,
                converged: true,
                bracket_miss: false,
            };
        }
        if s_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BisectionResult {
        root,
        residual,
        iterations,
        converged: hi - lo <= x_tol || !residual.is_nan() && residual.abs() <= y_tol,
        bracket_miss: false,
    }
}

/// Step-size schedule for the projected subgradient iteration.
#[derive(Clone, Copy, Debug)]
pub enum StepSchedule {
    Constant {
        a: f64,
    },
    /// `a / j^p` with `p` in (1/2, 1]: square-summable but not summable,
    /// the classical condition for subgradient convergence.
    Diminishing {
        a: f64,
        p: f64,
    },
}

impl StepSchedule {
    pub fn constant(a: f64) -> Self {
        assert!(a > 0.0, "step size must be positive");
        StepSchedule::Constant { a }
    }

    pub fn diminishing(a: f64, p: f64) -> Self {
        assert!(a > 0.0, "step size must be positive");
        assert!(
            p > 0.5 && p <= 1.0,
            "diminishing exponent must lie in (1/2, 1]"
        );
        StepSchedule::Diminishing { a, p }
    }

    /// Step for iteration `j` (1-based).
    pub fn step(&self, j: u32) -> f64 {
        debug_assert!(j >= 1);
        match *self {
            StepSchedule::Constant { a } => a,
            StepSchedule::Diminishing { a, p } => a / (j as f64).powf(p),
        }
    }
}

/// One projected subgradient update: `max(0, value - step * grad)`.
///
/// `grad` is the constraint slack (feasible side positive), so feasible
/// constraints relax their multiplier and violated ones tighten it.
pub fn subgradient_step(value: f64, grad: f64, step: f64) -> f64 {
    (value - step * grad).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        let w1 = lambert_w0(1.0).unwrap();
        // Fixed point of w e^w = 1, frozen at full precision.
        assert!((w1 - 0.567_143_290_409_783_8).abs() < 1e-13);
        let we = lambert_w0(std::f64::consts::E).unwrap();
        assert!((we - 1.0).abs() < 1e-13);
        assert_eq!(lambert_w0(LAMBERT_BRANCH_POINT).unwrap(), -1.0);
    }

    #[test]
    fn lambert_residual_on_log_grid() {
        // 200 log-spaced points across 24 decades.
        for i in 0..200 {
            let t = i as f64 / 199.0;
            let x = 10f64.powf(-12.0 + 24.0 * t);
            let w = lambert_w0(x).unwrap();
            let residual = (w * w.exp() - x).abs();
            assert!(
                residual <= 1e-12 * x.abs().max(1.0),
                "x = {x:e}: w = {w}, residual = {residual:e}"
            );
        }
    }

    #[test]
    fn lambert_negative_domain() {
        for i in 0..200 {
            let t = (i + 1) as f64 / 201.0;
            let x = LAMBERT_BRANCH_POINT * (1.0 - t);
            let w = lambert_w0(x).unwrap();
            assert!((-1.0..=0.0).contains(&w), "x = {x}: w = {w}");
            let residual = (w * w.exp() - x).abs();
            assert!(residual <= 1e-12, "x = {x}: residual = {residual:e}");
        }
        assert!(matches!(
            lambert_w0(LAMBERT_BRANCH_POINT - 1e-6),
            Err(NumericsError::LambertDomain { .. })
        ));
        assert!(matches!(
            lambert_w0(f64::NAN),
            Err(NumericsError::NonFinite { .. })
        ));
    }

    #[test]
    fn lambert_monotone_and_huge_arguments() {
        let mut prev = -1.0;
        for i in 0..100 {
            let x = LAMBERT_BRANCH_POINT + (i as f64 / 99.0) * 5.0;
            let w = lambert_w0(x).unwrap();
            assert!(w >= prev);
            prev = w;
        }
        let w = lambert_w0(1e300).unwrap();
        // w + ln w = 300 ln 10
        assert!((w + w.ln() - 300.0 * std::f64::consts::LN_10).abs() < 1e-10);
    }

    #[test]
    fn lambert_log_form_matches_direct_form() {
        for i in 0..80 {
            let y = -20.0 + i as f64;
            let direct = lambert_w0(y.exp()).unwrap();
            let logform = lambert_w0_exp(y);
            // Both satisfy |w e^w - x| <= 1e-12 max(1, x); for w << 1 that
            // allows an absolute gap in w of the same order.
            assert!(
                (direct - logform).abs() <= 1e-12 * direct.abs() + 3e-12,
                "y = {y}: {direct} vs {logform}"
            );
        }
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let spec = BisectionSpec {
            lo: 0.0,
            hi: 2.0,
            x_tol: 1e-13,
            y_tol: 0.0,
            max_iter: 200,
            monotone: Monotone::Increasing,
        };
        let r = bisect(&spec, 2.0, |x| x * x);
        assert!(r.converged && !r.bracket_miss);
        assert!((r.root - std::f64::consts::SQRT_2).abs() < 1e-12);
        // Interval halving bound: ceil(log2((hi - lo)/x_tol)).
        let bound = ((2.0f64 / 1e-13).log2()).ceil() as u32;
        assert!(r.iterations <= bound, "{} > {}", r.iterations, bound);
    }

    #[test]
    fn bisect_decreasing_map() {
        let spec = BisectionSpec {
            lo: 0.1,
            hi: 10.0,
            x_tol: 1e-12,
            y_tol: 1e-14,
            max_iter: 200,
            monotone: Monotone::Decreasing,
        };
        let r = bisect(&spec, 0.25, |x| 1.0 / (x * x));
        assert!(r.converged);
        assert!((r.root - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bisect_reports_bracket_miss() {
        let spec = BisectionSpec {
            lo: 0.0,
            hi: 1.0,
            x_tol: 1e-12,
            y_tol: 1e-9,
            max_iter: 100,
            monotone: Monotone::Increasing,
        };
        let high = bisect(&spec, 5.0, |x| x);
        assert!(high.bracket_miss && !high.converged);
        assert_eq!(high.root, 1.0);
        let low = bisect(&spec, -3.0, |x| x);
        assert!(low.bracket_miss && !low.converged);
        assert_eq!(low.root, 0.0);
        // Target on the boundary within y_tol is a clean convergence.
        let edge = bisect(&spec, 0.0, |x| x);
        assert!(edge.converged && !edge.bracket_miss);
    }

    #[test]
    fn diminishing_schedule_shrinks() {
        let s = StepSchedule::diminishing(2.0, 0.5 + f64::EPSILON);
        assert!(s.step(1) > s.step(2) && s.step(2) > s.step(100));
        let c = StepSchedule::constant(0.3);
        assert_eq!(c.step(1), c.step(50));
    }

    #[test]
    #[should_panic]
    fn diminishing_exponent_validated() {
        let _ = StepSchedule::diminishing(1.0, 0.3);
    }

    #[test]
    fn subgradient_toy_dual_converges() {
        // min x^2 + y^2 subject to x + y >= 1. The dual of the coupling
        // constraint is d(lam) = lam - lam^2 / 2, maximized at lam* = 1;
        // the primal minimizer for fixed lam is x = y = lam / 2, so the
        // constraint slack is x + y - 1 = lam - 1.
        let closed_form_optimum = 1.0;
        let schedule = StepSchedule::diminishing(1.0, 0.51);
        let mut lam = 0.0f64;
        for j in 1..=4000 {
            let slack = lam - closed_form_optimum;
            lam = subgradient_step(lam, slack, schedule.step(j));
        }
        assert!(
            (lam - closed_form_optimum).abs() <= 1e-3,
            "lam = {lam}"
        );
    }
}
