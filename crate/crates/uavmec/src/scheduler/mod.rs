//! Scheduling stage: CPU speeds and per-slot bit loads for a fixed
//! trajectory and bandwidth plan.
//!
//! The stage problem is convex, so it is solved through its dual: the
//! causality multipliers move by projected subgradient steps, and at each
//! step the balance multipliers are recovered exactly by nested bisection
//! ([`solve_equality_duals`]), after which the primal candidate is a bank of
//! per-slot closed forms ([`closed_form_schedule`]). The best iterate seen
//! (feasible first, then lowest objective) is what the caller gets back.

mod duals;
mod equality;

pub use duals::{compute_indicators, subgradients, DualState, PriorityIndicators};
pub use equality::EqualityDiag;
pub(crate) use duals::SlotGains;

use crate::error::SolveError;
use crate::model::{BandwidthPlan, Scenario, Schedule, Tolerances, Trajectory};
use crate::numerics::{subgradient_step, StepSchedule};
use duals::{closed_form_from_indicators, compute_indicators_from_gains, SuffixSums};
use equality::{solve_equality_multipliers, UeEqualityContext};

/// First-step dual movement as a fraction of the balance-multiplier scale;
/// the step schedule is calibrated so the initial update moves the most
/// violated multiplier by this fraction. Used only until a feasible iterate
/// provides the bound needed for gap-scaled steps.
const CALIBRATION_FRACTION: f64 = 0.1;

/// Relaxation factor for the gap-scaled (Polyak) dual steps.
const POLYAK_GAMMA: f64 = 1.0;

/// Consecutive sub-tolerance objective moves required by the stall stop; a
/// single quiet step right after a warm start says nothing about optimality.
const STALL_RUNS: u32 = 3;

/// Knobs for [`solve_p11`].
#[derive(Debug, Clone, Copy)]
pub struct SchedulerOptions {
    pub max_iterations: u32,
    /// Absolute stall tolerance (J) on consecutive stage objectives.
    pub objective_tol: f64,
    /// `false` pins every UE CPU to zero (all bits must travel the relay).
    pub allow_local: bool,
    /// Override for the subgradient step schedule; `None` self-calibrates
    /// a diminishing schedule from the first iterate.
    pub step: Option<StepSchedule>,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        SchedulerOptions {
            max_iterations: 500,
            objective_tol: 1e-4,
            allow_local: true,
            step: None,
        }
    }
}

/// Result of one scheduling-stage solve.
#[derive(Debug, Clone)]
pub struct SchedulerOutcome {
    pub schedule: Schedule,
    /// Multipliers of the returned iterate; reusable as a warm start.
    pub duals: DualState,
    /// Stage objective (weighted compute plus transmission energy, no
    /// flight term) of the returned schedule.
    pub objective: f64,
    /// Stage objective after every subgradient iteration.
    pub objective_trace: Vec<f64>,
    /// Lagrangian dual value after every iteration; a lower-bound trace
    /// that should trend upward as the multipliers converge.
    pub dual_trace: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    /// Worst causality violation of the returned schedule as a multiple of
    /// the per-UE feasibility tolerance (at most 1 means feasible).
    pub violation_ratio: f64,
    /// Balance residuals of the final equality solves, per UE.
    pub equality_diags: Vec<EqualityDiag>,
}

/// Per-slot closed-form minimisers at a given dual point.
pub fn closed_form_schedule(
    scn: &Scenario,
    u: &Trajectory,
    bw: &BandwidthPlan,
    d: &DualState,
) -> Schedule {
    let ind = compute_indicators(scn, u, bw);
    closed_form_from_indicators(scn, bw, &ind, d, true)
}

/// Recovers `(beta, eta, rho)` for UE `k` with the causality multipliers
/// frozen at `(lambda, mu)`.
pub fn solve_equality_duals(
    scn: &Scenario,
    u: &Trajectory,
    bw: &BandwidthPlan,
    lambda: &[f64],
    mu: &[f64],
    k: usize,
) -> (f64, f64, f64) {
    let ind = compute_indicators(scn, u, bw);
    let sums = SuffixSums::new(lambda, mu);
    let ctx = UeEqualityContext::new(scn, k, bw, &ind, &sums);
    let out = solve_equality_multipliers(&ctx, true)
        .expect("the unrestricted equality solve is total");
    (out.beta, out.eta, out.rho)
}

/// Transmission energy of `bits` through `band` Hz at `gain`, all within one
/// sub-slot. Mirrors the model formula with precomputed gains.
#[inline]
fn tx_energy(delta: f64, noise: f64, gain: f64, bits: f64, band: f64) -> f64 {
    if bits <= 0.0 {
        return 0.0;
    }
    delta * noise / gain * ((bits / (delta * band)).exp2() - 1.0)
}

/// Weighted compute-plus-transmission energy of a schedule (the scheduling
/// stage objective; flight energy is constant here and excluded).
pub(crate) fn stage_objective(
    scn: &Scenario,
    gains: &SlotGains,
    bw: &BandwidthPlan,
    sch: &Schedule,
) -> f64 {
    let n = scn.num_slots;
    let tau = scn.slot_len();
    let delta = scn.subslot_len();
    let noise = scn.noise_power;
    let mut total = 0.0;
    for (k, ue) in scn.ues.iter().enumerate() {
        for j in 0..n {
            let f = sch.f_ue[k][j];
            let f_u = sch.f_uav[k][j];
            let ue_energy = tau * ue.switched_cap * f * f * f
                + tx_energy(delta, noise, gains.ue[k][j], sch.l_off_ue[k][j], bw.b_off_ue[k][j]);
            let uav_energy = delta * scn.switched_cap_uav * f_u * f_u * f_u
                + tx_energy(delta, noise, gains.ap[j], sch.l_fwd_uav[k][j], bw.b_fwd_uav[k][j])
                + tx_energy(
                    delta,
                    noise,
                    gains.ue[k][j],
                    sch.l_down_uav[k][j],
                    bw.b_down_uav[k][j],
                );
            total += ue.weight * ue_energy + scn.weight_uav * uav_energy;
        }
    }
    total
}

struct BestIterate {
    schedule: Schedule,
    duals: DualState,
    objective: f64,
    violation_ratio: f64,
    diags: Vec<EqualityDiag>,
}

impl BestIterate {
    fn is_improved_by(&self, objective: f64, violation_ratio: f64) -> bool {
        let old_ok = self.violation_ratio <= 1.0;
        let new_ok = violation_ratio <= 1.0;
        match (old_ok, new_ok) {
            (false, true) => true,
            (true, false) => false,
            (true, true) => objective < self.objective,
            (false, false) => violation_ratio < self.violation_ratio,
        }
    }
}

/// Scheduling-stage solver: projected subgradient on the causality
/// multipliers with exact inner equality solves.
///
/// Stops when consecutive stage objectives differ by less than
/// `objective_tol` (absolute) or at the iteration cap; the returned iterate
/// is the best one seen, so a warm-started re-solve can only hold or improve
/// it. `warm` must match the scenario shape to be used.
pub fn solve_p11(
    scn: &Scenario,
    u: &Trajectory,
    bw: &BandwidthPlan,
    warm: Option<&DualState>,
    opts: &SchedulerOptions,
) -> Result<SchedulerOutcome, SolveError> {
    let k_count = scn.num_ues();
    let n = scn.num_slots;
    let gains = SlotGains::new(scn, u);
    let ind = compute_indicators_from_gains(scn, &gains, bw);
    let tol = Tolerances::default();
    let causal_tol: Vec<f64> = scn
        .ues
        .iter()
        .map(|ue| tol.bits_abs.max(tol.rel * ue.task_bits))
        .collect();

    let mut duals = match warm {
        Some(w) if w.lambda.len() == k_count && w.lambda.iter().all(|r| r.len() == n) => w.clone(),
        _ => DualState::zeros(scn),
    };
    // Lazily calibrated fallback for the pre-feasibility iterations when the
    // caller did not pin a schedule.
    let mut step_schedule: Option<StepSchedule> = None;
    let mut objective_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut diags = vec![EqualityDiag::default(); k_count];
    let mut best: Option<BestIterate> = None;
    let mut best_dual = f64::NEG_INFINITY;
    let mut prev_objective = f64::INFINITY;
    let mut stall_runs = 0;
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=opts.max_iterations {
        iterations = it;
        for k in 0..k_count {
            let sums = SuffixSums::new(&duals.lambda[k], &duals.mu[k]);
            let ctx = UeEqualityContext::new(scn, k, bw, &ind, &sums);
            let out = solve_equality_multipliers(&ctx, opts.allow_local)?;
            duals.beta[k] = out.beta;
            duals.eta[k] = out.eta;
            duals.rho[k] = out.rho;
            diags[k] = out.diag;
        }
        let schedule = closed_form_from_indicators(scn, bw, &ind, &duals, opts.allow_local);
        let objective = stage_objective(scn, &gains, bw, &schedule);

        let mut slacks = Vec::with_capacity(k_count);
        let mut violation_ratio = 0.0f64;
        let mut dual_value = objective;
        for k in 0..k_count {
            let (sl, sm) = subgradients(scn, &schedule, k);
            for (m, s) in duals.lambda[k].iter().zip(&sl).chain(duals.mu[k].iter().zip(&sm)) {
                dual_value -= m * s;
            }
            let worst = sl.iter().chain(&sm).fold(0.0f64, |acc, &s| acc.max(-s));
            violation_ratio = violation_ratio.max(worst / causal_tol[k]);
            slacks.push((sl, sm));
        }
        objective_trace.push(objective);
        dual_trace.push(dual_value);
        best_dual = best_dual.max(dual_value);

        if best
            .as_ref()
            .map_or(true, |b| b.is_improved_by(objective, violation_ratio))
        {
            best = Some(BestIterate {
                schedule,
                duals: duals.clone(),
                objective,
                violation_ratio,
                diags: diags.clone(),
            });
        }

        // A feasible incumbent bounds the optimum from above, the dual trace
        // from below; a closed gap is a certificate, and only then can an
        // objective stall be read as convergence rather than a small step.
        let feasible_bound = best
            .as_ref()
            .filter(|b| b.violation_ratio <= 1.0)
            .map(|b| b.objective);
        if let Some(bound) = feasible_bound {
            if bound - best_dual <= opts.objective_tol {
                converged = true;
                break;
            }
        }
        if it > 1 && (objective - prev_objective).abs() < opts.objective_tol {
            stall_runs += 1;
        } else {
            stall_runs = 0;
        }
        if stall_runs >= STALL_RUNS && feasible_bound.is_some() {
            converged = true;
            break;
        }
        prev_objective = objective;

        let grad_inf = slacks
            .iter()
            .flat_map(|(sl, sm)| sl.iter().chain(sm))
            .fold(0.0f64, |acc, &s| acc.max(s.abs()));
        if grad_inf == 0.0 {
            converged = true; // every causality window already balanced
            break;
        }
        let step = if let Some(s) = &opts.step {
            s.step(it)
        } else if let Some(bound) = feasible_bound {
            // Gap-scaled step: self-sizing, invariant to the problem scale.
            let grad_sq: f64 = slacks
                .iter()
                .flat_map(|(sl, sm)| sl.iter().chain(sm))
                .map(|s| s * s)
                .sum();
            POLYAK_GAMMA * (bound - dual_value).max(0.0) / grad_sq
        } else {
            // No bound yet: calibrated diminishing schedule until one shows.
            step_schedule
                .get_or_insert_with(|| {
                    let balance_scale = duals
                        .beta
                        .iter()
                        .zip(&duals.eta)
                        .zip(&duals.rho)
                        .map(|((b, e), r)| (b.abs() + e.abs() + r.abs()) / 3.0)
                        .sum::<f64>()
                        / k_count as f64;
                    let a = CALIBRATION_FRACTION * balance_scale.max(1e-18) / grad_inf;
                    StepSchedule::diminishing(a, 0.51)
                })
                .step(it)
        };
        if step <= 0.0 {
            converged = true; // the gap itself has closed
            break;
        }
        for k in 0..k_count {
            let (sl, sm) = &slacks[k];
            for j in 1..=n - 2 {
                duals.lambda[k][j] = subgradient_step(duals.lambda[k][j], sl[j], step);
            }
            for j in 2..=n - 1 {
                duals.mu[k][j] = subgradient_step(duals.mu[k][j], sm[j], step);
            }
        }
    }

    let best = best.expect("at least one iterate ran");
    Ok(SchedulerOutcome {
        schedule: best.schedule,
        duals: best.duals,
        objective: best.objective,
        objective_trace,
        dual_trace,
        iterations,
        converged,
        violation_ratio: best.violation_ratio,
        equality_diags: best.diags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_feasibility;

    fn default_setup() -> (Scenario, Trajectory, BandwidthPlan) {
        let scn = Scenario::default();
        let traj = Trajectory::direct(&scn);
        let bw = BandwidthPlan::structural_split(&scn);
        (scn, traj, bw)
    }

    #[test]
    fn stage_objective_matches_model_wsec_components() {
        let (scn, traj, bw) = default_setup();
        let mut duals = DualState::zeros(&scn);
        duals.beta = vec![2e-7; 4];
        duals.eta = vec![1e-7; 4];
        duals.rho = vec![4e-8; 4];
        let sch = closed_form_schedule(&scn, &traj, &bw, &duals);
        let gains = SlotGains::new(&scn, &traj);
        let stage = stage_objective(&scn, &gains, &bw, &sch);
        let report = crate::model::wsec(&scn, &sch, &bw, &traj).unwrap();
        let fly: f64 = (0..scn.num_slots)
            .map(|j| {
                let d = traj.waypoints[j + 1] - traj.waypoints[j];
                scn.weight_uav * scn.fly_energy(d.norm() / scn.slot_len())
            })
            .sum();
        assert!(
            (stage + fly - report.wsec).abs() <= 1e-9 * report.wsec.abs().max(1.0),
            "stage {stage} + fly {fly} vs wsec {}",
            report.wsec
        );
    }

    #[test]
    fn default_scenario_solve_is_feasible_and_beats_local() {
        let (scn, traj, bw) = default_setup();
        let out = solve_p11(&scn, &traj, &bw, None, &SchedulerOptions::default()).unwrap();
        assert!(
            out.violation_ratio <= 1.0,
            "best iterate violates causality: ratio {}",
            out.violation_ratio
        );
        // All-local weighted UE energy is 2.56e5 J; the offload chain must
        // undercut it decisively on the reference scenario.
        assert!(
            out.objective < 0.5 * 2.56e5,
            "objective {} did not beat local computing",
            out.objective
        );
        let violations =
            check_feasibility(&scn, &out.schedule, &bw, &traj, &Tolerances::default());
        assert!(violations.is_empty(), "violations: {violations:?}");
    }

    #[test]
    fn warm_restart_reproduces_and_stops_quickly() {
        let (scn, traj, bw) = default_setup();
        let first = solve_p11(&scn, &traj, &bw, None, &SchedulerOptions::default()).unwrap();
        let second =
            solve_p11(&scn, &traj, &bw, Some(&first.duals), &SchedulerOptions::default())
                .unwrap();
        assert!(second.converged);
        assert!(
            second.iterations <= 10,
            "warm restart took {} iterations",
            second.iterations
        );
        assert!(second.objective <= first.objective + 1e-9);
    }

    #[test]
    fn dual_trace_is_a_lower_bound_and_trends_up() {
        let (scn, traj, bw) = default_setup();
        let out = solve_p11(&scn, &traj, &bw, None, &SchedulerOptions::default()).unwrap();
        // Weak duality: every dual value lies below the best feasible
        // objective (small slack for the inner-solve tolerances).
        let cap = out.objective * (1.0 + 1e-6) + 1e-6;
        for (i, q) in out.dual_trace.iter().enumerate() {
            assert!(*q <= cap, "dual value {q} at iteration {i} exceeds {cap}");
        }
        // Windowed quasi-monotonicity: the best dual value per 10-iteration
        // window does not decrease.
        let window_max: Vec<f64> = out
            .dual_trace
            .chunks(10)
            .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for w in window_max.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0),
                "dual window regressed: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn restricted_solve_keeps_cpus_off() {
        let (scn, traj, bw) = default_setup();
        let opts = SchedulerOptions {
            allow_local: false,
            ..SchedulerOptions::default()
        };
        let full = solve_p11(&scn, &traj, &bw, None, &SchedulerOptions::default()).unwrap();
        let restricted = solve_p11(&scn, &traj, &bw, None, &opts).unwrap();
        assert!(restricted.schedule.f_ue.iter().flatten().all(|&f| f == 0.0));
        assert!(restricted.violation_ratio <= 1.0);
        let violations = check_feasibility(
            &scn,
            &restricted.schedule,
            &bw,
            &traj,
            &Tolerances::default(),
        );
        assert!(violations.is_empty(), "violations: {violations:?}");
        // The restricted feasible set is a subset of the full one.
        assert!(restricted.objective >= full.objective * 0.995);
    }

    #[test]
    fn equality_wrapper_balances_any_dual_point() {
        let (scn, traj, bw) = default_setup();
        let n = scn.num_slots;
        let mut lambda = vec![0.0; n];
        let mut mu = vec![0.0; n];
        lambda[5] = 2e-11;
        mu[12] = 1e-11;
        let (beta, eta, rho) = solve_equality_duals(&scn, &traj, &bw, &lambda, &mu, 2);
        let mut duals = DualState::zeros(&scn);
        duals.lambda[2] = lambda;
        duals.mu[2] = mu;
        duals.beta[2] = beta;
        duals.eta[2] = eta;
        duals.rho[2] = rho;
        let sch = closed_form_schedule(&scn, &traj, &bw, &duals);
        let ue = &scn.ues[2];
        let tau = scn.slot_len();
        let local: f64 = sch.f_ue[2].iter().map(|f| tau * f / ue.cycles_per_bit).sum();
        let off: f64 = sch.l_off_ue[2].iter().sum();
        let relayed: f64 = (1..=n - 2)
            .map(|j| sch.uav_processed_bits(&scn, 2, j))
            .sum();
        let down: f64 = sch.l_down_uav[2].iter().sum();
        assert!((local + off - ue.task_bits).abs() <= 1e-3);
        assert!((relayed - off).abs() <= 1e-3);
        assert!((down - ue.output_ratio * relayed).abs() <= 1e-3);
    }
}
