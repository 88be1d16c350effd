//! Recovery of the equality multipliers (`beta`, `eta`, `rho`) for one UE.
//!
//! For fixed causality multipliers the three balance equations form a nested
//! monotone system: the task-completion target `t(beta)` fixes how many bits
//! must flow through the offload chain, `sigma = eta - beta` is pinned by the
//! offload total, `rho` by the download total, and the relay balance closes
//! the loop as a one-dimensional root find in `beta`. Every search is a
//! guarded bisection on an analytically valid bracket, so a flagged miss can
//! only come from float rounding or from the clamp on the bracket margin
//! exponent (which only engages when the task cannot physically fit through
//! the configured band; the search then degrades gracefully toward the
//! all-local corner).

use crate::error::SolveError;
use crate::model::{BandwidthPlan, Scenario};
use crate::numerics::{bisect, BisectionSpec, Monotone};
use crate::scheduler::duals::{PriorityIndicators, SuffixSums};

/// Widest exponent allowed in the bracket margins `2^x`. Clamping from above
/// weakens the bracket guarantee only in regimes where the offload chain is
/// physically too narrow for the task; clamping from below tightens it.
const MARGIN_EXP_CLAMP: (f64, f64) = (-1000.0, 128.0);

/// Bits tolerance for the inner (`sigma`, `rho`, restricted `eta`) searches.
const INNER_TOL_BITS: f64 = 1e-6;
/// Bits tolerance for the outer relay-balance residual.
const OUTER_TOL_BITS: f64 = 5e-5;
const MAX_BISECT_ITER: u32 = 200;

/// Residuals (in bits) and flags from one equality solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct EqualityDiag {
    /// `|offloaded - t|` where `t` is the non-local share of the task.
    pub completion_residual: f64,
    /// `|relay throughput - offloaded|`.
    pub relay_residual: f64,
    /// `|downloaded - output_ratio * relay throughput|`.
    pub download_residual: f64,
    /// Some bracket had to be pinned at an endpoint.
    pub bracket_miss: bool,
    /// The solve landed on the all-local corner (no usable offload chain).
    pub all_local: bool,
}

/// Multipliers produced by [`solve_equality_multipliers`].
#[derive(Debug, Clone, Copy)]
pub struct EqualityOutcome {
    pub beta: f64,
    pub eta: f64,
    pub rho: f64,
    pub diag: EqualityDiag,
}

/// Per-slot coefficients of one UE's balance equations, with the causality
/// multipliers folded in. Rebuilt every subgradient iteration.
pub(crate) struct UeEqualityContext {
    task_bits: f64,
    output_ratio: f64,
    /// `T / C_k`: seconds of CPU time per Hz, converts `f` to total bits.
    horizon_over_c: f64,
    /// `3 C_k w_k kappa_k`, denominator of the local CPU closed form.
    local_curvature: f64,
    pub(crate) beta_max: f64,
    /// `(delta / C_k) / sqrt(3 C_k w_U kappa_U)`: relay compute bits per
    /// slot equal this times `sqrt([arg]^+)`.
    relay_sqrt_coef: f64,
    /// `(delta * band, phi, lam_hat)` per offload slot with band.
    off: Vec<(f64, f64, f64)>,
    /// `(delta * band, phi, mu_til)` per download slot with band.
    down: Vec<(f64, f64, f64)>,
    /// `(delta * band, phi, base)` per relay slot; `base = o * mu_hat - lam_til`
    /// and `band` may be zero (compute still runs without a forward band).
    relay: Vec<(f64, Option<f64>, f64)>,
    sigma_lo: f64,
    sigma_hi: f64,
    rho_lo: f64,
    rho_hi: f64,
}

fn clamped_exp2(x: f64) -> f64 {
    x.clamp(MARGIN_EXP_CLAMP.0, MARGIN_EXP_CLAMP.1).exp2()
}

impl UeEqualityContext {
    pub fn new(
        scn: &Scenario,
        k: usize,
        bw: &BandwidthPlan,
        ind: &PriorityIndicators,
        sums: &SuffixSums,
    ) -> Self {
        let n = scn.num_slots;
        let ue = &scn.ues[k];
        let delta = scn.subslot_len();
        let o = ue.output_ratio;

        let mut off = Vec::new();
        let mut off_band = 0.0;
        let mut off_band_phi = 0.0;
        for j in 0..=n - 3 {
            if let Some(phi) = ind.off_ue[k][j] {
                let band = bw.b_off_ue[k][j];
                off.push((delta * band, phi, sums.lam_from[j + 1]));
                off_band += band;
                off_band_phi += band * phi;
            }
        }
        let mut down = Vec::new();
        let mut down_band = 0.0;
        let mut down_band_phi = 0.0;
        for j in 2..=n - 1 {
            if let Some(phi) = ind.down_uav[k][j] {
                let band = bw.b_down_uav[k][j];
                down.push((delta * band, phi, sums.mu_from[j]));
                down_band += band;
                down_band_phi += band * phi;
            }
        }
        let relay = (1..=n - 2)
            .map(|j| {
                let base = o * sums.mu_from[j + 1] - sums.lam_from[j];
                (delta * bw.b_fwd_uav[k][j], ind.fwd_uav[k][j], base)
            })
            .collect();

        let full_speed = ue.task_bits * ue.cycles_per_bit / scn.horizon;
        let beta_max =
            3.0 * ue.cycles_per_bit * ue.weight * ue.switched_cap * full_speed * full_speed;

        // Bracket margins: with every active argument at least 2^x the
        // corresponding total already covers the task, so the root cannot
        // escape. See the clamp note on MARGIN_EXP_CLAMP.
        let (sigma_lo, sigma_hi) = if off.is_empty() {
            (0.0, 0.0)
        } else {
            let x = (ue.task_bits / delta - off_band_phi) / off_band;
            (sums.lam_from[n - 2] - clamped_exp2(x), sums.lam_from[1])
        };
        let (rho_lo, rho_hi) = if down.is_empty() {
            (0.0, 0.0)
        } else {
            let y = (ue.task_bits * o / delta - down_band_phi) / down_band;
            (sums.mu_from[n - 1], sums.mu_from[2] + clamped_exp2(y))
        };

        UeEqualityContext {
            task_bits: ue.task_bits,
            output_ratio: o,
            horizon_over_c: scn.horizon / ue.cycles_per_bit,
            local_curvature: 3.0 * ue.cycles_per_bit * ue.weight * ue.switched_cap,
            beta_max,
            relay_sqrt_coef: (delta / ue.cycles_per_bit)
                / (3.0 * ue.cycles_per_bit * scn.weight_uav * scn.switched_cap_uav).sqrt(),
            off,
            down,
            relay,
            sigma_lo,
            sigma_hi,
            rho_lo,
            rho_hi,
        }
    }

    /// Bits the offload chain must carry when the completion multiplier is
    /// `beta`: the task minus what the local CPU closed form covers.
    fn non_local_bits(&self, beta: f64) -> f64 {
        self.task_bits - self.horizon_over_c * (beta.max(0.0) / self.local_curvature).sqrt()
    }

    /// Total offloaded bits as a function of `sigma = eta - beta` (decreasing).
    fn offload_total(&self, sigma: f64) -> f64 {
        self.off
            .iter()
            .map(|&(coef, phi, lam_hat)| load(coef, phi, lam_hat - sigma))
            .sum()
    }

    /// Total downloaded bits as a function of `rho` (increasing).
    fn download_total(&self, rho: f64) -> f64 {
        self.down
            .iter()
            .map(|&(coef, phi, mu_til)| load(coef, phi, rho - mu_til))
            .sum()
    }

    /// Bits the relay disposes of (computes plus forwards); increasing in
    /// `eta`, decreasing in `rho`.
    fn relay_total(&self, eta: f64, rho: f64) -> f64 {
        let shift = eta - self.output_ratio * rho;
        self.relay
            .iter()
            .map(|&(coef, phi, base)| {
                let arg = shift + base;
                let compute = self.relay_sqrt_coef * arg.max(0.0).sqrt();
                let forward = match phi {
                    Some(p) => load(coef, p, arg),
                    None => 0.0,
                };
                compute + forward
            })
            .sum()
    }

    fn solve_sigma(&self, target: f64) -> crate::numerics::BisectionResult {
        let spec = BisectionSpec {
            lo: self.sigma_lo,
            hi: self.sigma_hi,
            x_tol: 0.0,
            y_tol: INNER_TOL_BITS,
            max_iter: MAX_BISECT_ITER,
            monotone: Monotone::Decreasing,
        };
        bisect(&spec, target, |s| self.offload_total(s))
    }

    fn solve_rho(&self, target_output_bits: f64) -> crate::numerics::BisectionResult {
        let spec = BisectionSpec {
            lo: self.rho_lo,
            hi: self.rho_hi,
            x_tol: 0.0,
            y_tol: INNER_TOL_BITS,
            max_iter: MAX_BISECT_ITER,
            monotone: Monotone::Increasing,
        };
        bisect(&spec, target_output_bits, |r| self.download_total(r))
    }

    fn relay_base_max(&self) -> f64 {
        self.relay
            .iter()
            .map(|&(_, _, base)| base)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiplier pair at which the relay stays idle: every per-slot argument
    /// is strictly negative (a relative margin keeps float rounding from
    /// leaving a ghost positive argument). Valid corner only when the uplink
    /// is unavailable (otherwise a large `beta` switches offloading on).
    fn idle_corner(&self) -> (f64, f64) {
        let rho = self.rho_lo; // equals min mu_til; zero when mu is zero
        let shift = self.output_ratio * rho - self.relay_base_max();
        (shift - margin(shift), rho)
    }

    /// All-local corner when the uplink exists but the download band does
    /// not: `eta` must overshoot `beta_max` far enough that every offload
    /// load sits at its activation threshold `2^-phi` or below.
    fn offload_killing_corner(&self) -> (f64, f64) {
        // The (1 - 1e-6) factor leaves the surviving log argument strictly
        // below its activation threshold so rounding in `beta_max + shift`
        // cannot flip a load back on.
        let shift = self
            .off
            .iter()
            .map(|&(_, phi, lam_hat)| lam_hat - (-phi).exp2() * (1.0 - 1e-6))
            .fold(f64::NEG_INFINITY, f64::max);
        let eta = self.beta_max + shift;
        // Any rho works for the (empty) download family; this one drives
        // every relay argument strictly below zero.
        let need = eta + self.relay_base_max();
        let rho = (need + margin(need)) / self.output_ratio;
        (eta, rho)
    }
}

/// Relative safety margin used to push idle-corner arguments strictly
/// negative despite rounding.
#[inline]
fn margin(x: f64) -> f64 {
    1e-9 * (x.abs() + 1e-12)
}

/// `coef * [phi + log2(arg)]^+` guarded for non-positive arguments.
#[inline]
fn load(coef: f64, phi: f64, arg: f64) -> f64 {
    if arg > 0.0 {
        let t = phi + arg.log2();
        if t > 0.0 {
            return coef * t;
        }
    }
    0.0
}

/// Solves the three balance equations for one UE given frozen causality
/// multipliers. `allow_local == false` removes the local CPU from the
/// completion balance (every bit must traverse the relay).
pub(crate) fn solve_equality_multipliers(
    ctx: &UeEqualityContext,
    allow_local: bool,
) -> Result<EqualityOutcome, SolveError> {
    if ctx.off.is_empty() || ctx.down.is_empty() {
        if !allow_local {
            return Err(if ctx.off.is_empty() {
                SolveError::NoUplinkBand
            } else {
                SolveError::NoDownloadBand
            });
        }
        // No usable offload chain: the whole task runs on the UE CPU and
        // every radio stream is priced to stay idle.
        let (eta, rho) = if ctx.off.is_empty() {
            ctx.idle_corner()
        } else {
            ctx.offload_killing_corner()
        };
        return Ok(EqualityOutcome {
            beta: ctx.beta_max,
            eta,
            rho,
            diag: EqualityDiag {
                all_local: true,
                ..EqualityDiag::default()
            },
        });
    }

    let o = ctx.output_ratio;
    let (beta, sigma, rho, outer_miss) = if allow_local {
        // Root-find on beta: relay throughput minus the non-local share is
        // non-decreasing (larger beta shifts work onto the local CPU while
        // every chained multiplier makes the relay more willing).
        let spec = BisectionSpec {
            lo: 0.0,
            hi: ctx.beta_max,
            x_tol: 0.0,
            y_tol: OUTER_TOL_BITS,
            max_iter: MAX_BISECT_ITER,
            monotone: Monotone::Increasing,
        };
        let r = bisect(&spec, 0.0, |beta| {
            let t = ctx.non_local_bits(beta);
            let sigma = ctx.solve_sigma(t).root;
            let rho = ctx.solve_rho(o * t).root;
            ctx.relay_total(beta + sigma, rho) - t
        });
        let t = ctx.non_local_bits(r.root);
        (
            r.root,
            ctx.solve_sigma(t),
            ctx.solve_rho(o * t),
            r.bracket_miss,
        )
    } else {
        let sigma = ctx.solve_sigma(ctx.task_bits);
        let rho = ctx.solve_rho(o * ctx.task_bits);
        // eta alone closes the relay balance; expand a bracket upward from
        // the idle corner (relay throughput grows without bound in eta).
        let (mut eta_lo, _) = ctx.idle_corner();
        eta_lo += o * rho.root - o * ctx.rho_lo;
        let mut span = ctx.beta_max.max(1e-12);
        let mut eta_hi = eta_lo + span;
        let mut guard = 0;
        while ctx.relay_total(eta_hi, rho.root) < ctx.task_bits && guard < 300 {
            span *= 2.0;
            eta_hi = eta_lo + span;
            guard += 1;
        }
        let spec = BisectionSpec {
            lo: eta_lo,
            hi: eta_hi,
            x_tol: 0.0,
            y_tol: INNER_TOL_BITS,
            max_iter: MAX_BISECT_ITER,
            monotone: Monotone::Increasing,
        };
        let r = bisect(&spec, ctx.task_bits, |eta| ctx.relay_total(eta, rho.root));
        // beta = eta - sigma keeps the offload closed form untouched; the
        // local CPU is disabled by the caller, not by the multiplier sign.
        (r.root - sigma.root, sigma, rho, r.bracket_miss)
    };

    let t = if allow_local {
        ctx.non_local_bits(beta)
    } else {
        ctx.task_bits
    };
    let eta = beta + sigma.root;
    let offloaded = ctx.offload_total(sigma.root);
    let relayed = ctx.relay_total(eta, rho.root);
    let downloaded = ctx.download_total(rho.root);
    Ok(EqualityOutcome {
        beta,
        eta,
        rho: rho.root,
        diag: EqualityDiag {
            completion_residual: (offloaded - t).abs(),
            relay_residual: (relayed - offloaded).abs(),
            download_residual: (downloaded - o * relayed).abs(),
            bracket_miss: outer_miss || sigma.bracket_miss || rho.bracket_miss,
            all_local: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Schedule, Trajectory};
    use crate::scheduler::duals::{
        closed_form_from_indicators, compute_indicators, DualState,
    };

    fn context_for(
        scn: &Scenario,
        k: usize,
        bw: &BandwidthPlan,
        duals: &DualState,
        traj: &Trajectory,
    ) -> UeEqualityContext {
        let ind = compute_indicators(scn, traj, bw);
        let sums = SuffixSums::new(&duals.lambda[k], &duals.mu[k]);
        UeEqualityContext::new(scn, k, bw, &ind, &sums)
    }

    /// Checks the balance residuals of an actual schedule built from the
    /// solved multipliers, which cross-validates the context totals against
    /// the closed-form evaluation path.
    fn assert_balances(scn: &Scenario, sch: &Schedule, k: usize, local_expected: bool) {
        let n = scn.num_slots;
        let ue = &scn.ues[k];
        let delta = scn.slot_len();
        let local: f64 = sch.f_ue[k].iter().map(|f| delta * f / ue.cycles_per_bit).sum();
        let off: f64 = sch.l_off_ue[k].iter().sum();
        let relayed: f64 = (1..=n - 2).map(|j| sch.uav_processed_bits(scn, k, j)).sum();
        let down: f64 = sch.l_down_uav[k].iter().sum();
        if !local_expected {
            assert_eq!(local, 0.0);
        }
        assert!(
            (local + off - ue.task_bits).abs() <= 1e-3,
            "completion off by {} bits",
            (local + off - ue.task_bits).abs()
        );
        assert!(
            (relayed - off).abs() <= 1e-3,
            "relay balance off by {} bits",
            (relayed - off).abs()
        );
        assert!(
            (down - ue.output_ratio * relayed).abs() <= 1e-3,
            "download balance off by {} bits",
            (down - ue.output_ratio * relayed).abs()
        );
    }

    #[test]
    fn zero_dual_solve_balances_default_scenario() {
        let scn = Scenario::default();
        let bw = BandwidthPlan::structural_split(&scn);
        let traj = Trajectory::direct(&scn);
        let mut duals = DualState::zeros(&scn);
        for k in 0..scn.num_ues() {
            let ctx = context_for(&scn, k, &bw, &duals, &traj);
            let out = solve_equality_multipliers(&ctx, true).unwrap();
            assert!(out.beta >= 0.0 && out.beta <= ctx.beta_max);
            assert!(!out.diag.all_local, "offload chain should be used");
            assert!(out.diag.completion_residual <= 1e-3);
            assert!(out.diag.relay_residual <= 1e-3);
            assert!(out.diag.download_residual <= 1e-3);
            duals.beta[k] = out.beta;
            duals.eta[k] = out.eta;
            duals.rho[k] = out.rho;
        }
        let ind = compute_indicators(&scn, &traj, &bw);
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &duals, true);
        for k in 0..scn.num_ues() {
            assert_balances(&scn, &sch, k, true);
        }
    }

    #[test]
    fn random_duals_still_balance() {
        let scn = Scenario::default();
        let n = scn.num_slots;
        let bw = BandwidthPlan::structural_split(&scn);
        let traj = Trajectory::direct(&scn);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for trial in 0..5 {
            let mut duals = DualState::zeros(&scn);
            for k in 0..scn.num_ues() {
                for j in 1..=n - 2 {
                    duals.lambda[k][j] = 3e-11 * rng();
                }
                for j in 2..=n - 1 {
                    duals.mu[k][j] = 3e-11 * rng();
                }
            }
            for k in 0..scn.num_ues() {
                let ctx = context_for(&scn, k, &bw, &duals, &traj);
                let out = solve_equality_multipliers(&ctx, true).unwrap();
                assert!(
                    !out.diag.bracket_miss,
                    "trial {trial} UE {k}: unexpected bracket miss"
                );
                duals.beta[k] = out.beta;
                duals.eta[k] = out.eta;
                duals.rho[k] = out.rho;
            }
            let ind = compute_indicators(&scn, &traj, &bw);
            let sch = closed_form_from_indicators(&scn, &bw, &ind, &duals, true);
            for k in 0..scn.num_ues() {
                assert_balances(&scn, &sch, k, true);
            }
        }
    }

    #[test]
    fn severed_chain_falls_back_to_local() {
        let scn = Scenario::default();
        let traj = Trajectory::direct(&scn);
        let mut bw = BandwidthPlan::structural_split(&scn);
        for row in bw.b_down_uav.iter_mut() {
            row.iter_mut().for_each(|b| *b = 0.0);
        }
        let duals = DualState::zeros(&scn);
        let mut solved = DualState::zeros(&scn);
        for k in 0..scn.num_ues() {
            let ctx = context_for(&scn, k, &bw, &duals, &traj);
            let out = solve_equality_multipliers(&ctx, true).unwrap();
            assert!(out.diag.all_local);
            assert_eq!(out.beta, ctx.beta_max);
            solved.beta[k] = out.beta;
            solved.eta[k] = out.eta;
            solved.rho[k] = out.rho;
        }
        let ind = compute_indicators(&scn, &traj, &bw);
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &solved, true);
        for k in 0..scn.num_ues() {
            let ue = &scn.ues[k];
            let full_speed = ue.task_bits * ue.cycles_per_bit / scn.horizon;
            for j in 0..scn.num_slots {
                assert!((sch.f_ue[k][j] - full_speed).abs() <= 1e-6 * full_speed);
                assert_eq!(sch.l_off_ue[k][j], 0.0);
                assert_eq!(sch.f_uav[k][j], 0.0);
                assert_eq!(sch.l_fwd_uav[k][j], 0.0);
                assert_eq!(sch.l_down_uav[k][j], 0.0);
            }
        }
    }

    #[test]
    fn restricted_solve_offloads_everything() {
        let scn = Scenario::default();
        let bw = BandwidthPlan::structural_split(&scn);
        let traj = Trajectory::direct(&scn);
        let duals = DualState::zeros(&scn);
        let mut solved = DualState::zeros(&scn);
        for k in 0..scn.num_ues() {
            let ctx = context_for(&scn, k, &bw, &duals, &traj);
            let out = solve_equality_multipliers(&ctx, false).unwrap();
            assert!(out.diag.completion_residual <= 1e-3);
            assert!(out.diag.relay_residual <= 1e-3);
            assert!(out.diag.download_residual <= 1e-3);
            solved.beta[k] = out.beta;
            solved.eta[k] = out.eta;
            solved.rho[k] = out.rho;
        }
        let ind = compute_indicators(&scn, &traj, &bw);
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &solved, false);
        for k in 0..scn.num_ues() {
            assert_balances(&scn, &sch, k, false);
        }
    }

    #[test]
    fn restricted_solve_requires_a_chain() {
        let scn = Scenario::default();
        let traj = Trajectory::direct(&scn);
        let duals = DualState::zeros(&scn);
        let mut bw = BandwidthPlan::structural_split(&scn);
        for row in bw.b_off_ue.iter_mut() {
            row.iter_mut().for_each(|b| *b = 0.0);
        }
        let ctx = context_for(&scn, 0, &bw, &duals, &traj);
        assert!(matches!(
            solve_equality_multipliers(&ctx, false),
            Err(SolveError::NoUplinkBand)
        ));
    }
}
