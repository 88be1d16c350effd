//! Trajectory stage: moves the flight path with the schedule and bandwidth
//! plan held fixed.
//!
//! The stage objective is propulsion power plus the distance-dependent
//! transmission energies, which are convex quadratics in the waypoints once
//! the bits and bands are frozen. The inverse-speed part of the propulsion
//! power is the one non-convex piece; it is bounded above through slack
//! speeds that must stay below a linearization of the true speed around the
//! current anchor path. Each outer iteration solves the resulting convex
//! program with a log-barrier Newton method and keeps the step only if the
//! true objective does not increase.

use crate::bandwidth::ACTIVE_BITS;
use crate::model::{self, BandwidthPlan, Point, Scenario, Schedule, Trajectory, SPEED_FLOOR};
use nalgebra::{DMatrix, DVector, Matrix2};

/// Slots whose anchor speed is this close to the floor get their slack speed
/// pinned at the floor instead of a linearized bound (the bound would force
/// the slack below the floor and empty the feasible set).
const PIN_FACTOR: f64 = 1.01;

/// Barrier parameter growth per centering stage.
const BARRIER_GROWTH: f64 = 20.0;

/// Step dampings tried, in order, when the full step raises the true
/// objective (possible only through inner-solver inexactness).
const DAMPINGS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

/// Outer iteration cap for [`solve_p13`].
pub const SCA_MAX_ITERATIONS: u32 = 30;

/// Relative objective-change tolerance stopping [`solve_p13`].
pub const SCA_REL_TOL: f64 = 1e-4;

/// Aggregate of the transmission quadratics tied to one waypoint:
/// `sum_s c_s ||u - v_s||^2 = c ||u||^2 - 2 m . u + v2`.
#[derive(Debug, Clone, Copy)]
struct WaypointQuad {
    c: f64,
    m: Point,
    v2: f64,
}

impl WaypointQuad {
    fn zero() -> Self {
        WaypointQuad {
            c: 0.0,
            m: Point::zeros(),
            v2: 0.0,
        }
    }

    fn value(&self, u: Point) -> f64 {
        self.c * u.norm_squared() - 2.0 * self.m.dot(&u) + self.v2
    }
}

/// The stage objective with the schedule and bands frozen: per-waypoint
/// quadratics, one cubic displacement term per slot, and one inverse slack
/// term per slot.
#[derive(Debug, Clone)]
pub struct ConvexObjective {
    /// Indexed by waypoint 1..=N; entry 0 is unused.
    quad: Vec<WaypointQuad>,
    /// Coefficient of `||u[j+1] - u[j]||^3`.
    gamma: f64,
    /// Coefficient of `1 / vtilde[j]`.
    slack_coeff: f64,
    /// Altitude offsets of the quadratics; distance-independent.
    constant: f64,
}

/// Collapses the transmission energies into per-waypoint quadratic
/// coefficients. Streams below the one-bit threshold contribute nothing;
/// anything heavier must come with a live band.
pub fn build_convex_objective(
    scn: &Scenario,
    z: &Schedule,
    bw: &BandwidthPlan,
) -> ConvexObjective {
    let n = scn.num_slots;
    let delta = scn.subslot_len();
    let tau = scn.slot_len();
    let h2 = scn.altitude * scn.altitude;
    let mut quad = vec![WaypointQuad::zero(); n + 1];
    let mut constant = 0.0;
    for j in 0..n {
        let wp = j + 1;
        let mut add = |bits: f64, band: f64, weight: f64, target: Point| {
            if bits < ACTIVE_BITS {
                return;
            }
            assert!(
                band > 0.0,
                "slot {j} carries {bits} bits over a dead band"
            );
            let c = weight * delta * scn.noise_power * ((bits / (delta * band)).exp2() - 1.0)
                / scn.ref_gain;
            quad[wp].c += c;
            quad[wp].m += c * target;
            quad[wp].v2 += c * target.norm_squared();
            constant += c * h2;
        };
        for (k, ue) in scn.ues.iter().enumerate() {
            add(z.l_off_ue[k][j], bw.b_off_ue[k][j], ue.weight, ue.position);
            add(z.l_fwd_uav[k][j], bw.b_fwd_uav[k][j], scn.weight_uav, scn.ap_position);
            add(z.l_down_uav[k][j], bw.b_down_uav[k][j], scn.weight_uav, ue.position);
        }
    }
    ConvexObjective {
        quad,
        gamma: scn.weight_uav * scn.fly_coeff_cubic / (tau * tau),
        slack_coeff: scn.weight_uav * tau * scn.fly_coeff_inverse,
        constant,
    }
}

impl ConvexObjective {
    /// Surrogate value at a concrete path and slack-speed vector.
    pub fn value(&self, scn: &Scenario, traj: &Trajectory, vtilde: &[f64]) -> f64 {
        let n = scn.num_slots;
        assert_eq!(vtilde.len(), n, "one slack speed per slot");
        let mut total = self.constant;
        for j in 0..n {
            let u = traj.waypoints[j + 1];
            total += self.quad[j + 1].value(u);
            let d = traj.waypoints[j + 1] - traj.waypoints[j];
            total += self.gamma * d.norm().powi(3);
            total += self.slack_coeff / vtilde[j];
        }
        total
    }
}

/// Inner-solver health of the last surrogate solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverDiag {
    /// Scaled infinity norm of the stationarity residual.
    pub stationarity: f64,
    /// Final barrier duality gap, J.
    pub dual_gap: f64,
    pub newton_iterations: u32,
    pub converged: bool,
}

impl Default for SolverDiag {
    fn default() -> Self {
        SolverDiag {
            stationarity: f64::NAN,
            dual_gap: f64::NAN,
            newton_iterations: 0,
            converged: false,
        }
    }
}

/// Outer-iteration state: the linearization anchor, its slack speeds, and
/// the record of accepted true objectives.
#[derive(Debug, Clone)]
pub struct ScaState {
    pub anchor: Trajectory,
    pub vtilde: Vec<f64>,
    pub iteration: u32,
    /// True objective at the initial anchor and after every accepted step.
    pub objective_trace: Vec<f64>,
    /// Set when every damped step raised the true objective.
    pub stalled: bool,
    pub diag: SolverDiag,
}

impl ScaState {
    /// Starts a descent from `u_init`, whose true objective seeds the trace.
    pub fn new(scn: &Scenario, z: &Schedule, bw: &BandwidthPlan, u_init: Trajectory) -> Self {
        let speeds = u_init.speeds(scn);
        let vtilde = speeds.iter().map(|&v| v.max(SPEED_FLOOR)).collect();
        let obj = model::wsec(scn, z, bw, &u_init)
            .expect("schedule and bands must be mutually consistent")
            .wsec;
        ScaState {
            anchor: u_init,
            vtilde,
            iteration: 0,
            objective_trace: vec![obj],
            stalled: false,
            diag: SolverDiag::default(),
        }
    }
}

/// One linearize-solve-accept cycle. Returns the new anchor (unchanged on a
/// stall) and the advanced state.
pub fn sca_step(
    scn: &Scenario,
    z: &Schedule,
    bw: &BandwidthPlan,
    state: &ScaState,
) -> (Trajectory, ScaState) {
    let obj = build_convex_objective(scn, z, bw);
    let problem = SurrogateProblem::new(scn, &obj, &state.anchor);
    let (cand_traj, cand_vtilde, diag) = problem.solve();

    let anchor_obj = *state.objective_trace.last().expect("seeded trace");
    let tiny = 1e-12 * anchor_obj.abs().max(1.0);
    for &alpha in &DAMPINGS {
        let blended = blend(&state.anchor, &cand_traj, alpha);
        let value = model::wsec(scn, z, bw, &blended)
            .expect("candidate paths keep the plan consistent")
            .wsec;
        if value <= anchor_obj + tiny {
            let vt: Vec<f64> = state
                .vtilde
                .iter()
                .zip(&cand_vtilde)
                .map(|(&a, &c)| (1.0 - alpha) * a + alpha * c)
                .collect();
            let mut trace = state.objective_trace.clone();
            trace.push(value.min(anchor_obj));
            let next = ScaState {
                anchor: blended.clone(),
                vtilde: vt,
                iteration: state.iteration + 1,
                objective_trace: trace,
                stalled: false,
                diag,
            };
            return (blended, next);
        }
    }
    let mut next = state.clone();
    next.iteration += 1;
    next.stalled = true;
    next.diag = diag;
    (state.anchor.clone(), next)
}

fn blend(a: &Trajectory, b: &Trajectory, alpha: f64) -> Trajectory {
    let waypoints = a
        .waypoints
        .iter()
        .zip(&b.waypoints)
        .map(|(&wa, &wb)| (1.0 - alpha) * wa + alpha * wb)
        .collect();
    Trajectory { waypoints }
}

/// Descends from `u_init` until the true objective stalls in relative terms
/// or the iteration cap is hit, and returns the final path.
pub fn solve_p13(scn: &Scenario, z: &Schedule, bw: &BandwidthPlan, u_init: Trajectory) -> Trajectory {
    solve_p13_state(scn, z, bw, u_init).anchor
}

/// As [`solve_p13`], but exposes the full final state (slack speeds, trace,
/// solver diagnostics) for feasibility audits.
pub fn solve_p13_state(
    scn: &Scenario,
    z: &Schedule,
    bw: &BandwidthPlan,
    u_init: Trajectory,
) -> ScaState {
    solve_p13_driven(scn, z, bw, u_init, None, SCA_MAX_ITERATIONS)
}

/// SCA descent with a caller-chosen stop: `abs_tol` switches the objective
/// test to absolute Joules (the alternation needs inner stages tighter than
/// its own outer tolerance), `None` keeps the relative rule of
/// [`solve_p13`].
pub(crate) fn solve_p13_driven(
    scn: &Scenario,
    z: &Schedule,
    bw: &BandwidthPlan,
    u_init: Trajectory,
    abs_tol: Option<f64>,
    max_iters: u32,
) -> ScaState {
    let mut state = ScaState::new(scn, z, bw, u_init);
    for _ in 0..max_iters {
        let prev = *state.objective_trace.last().expect("seeded trace");
        let (_, next) = sca_step(scn, z, bw, &state);
        let now = *next.objective_trace.last().expect("seeded trace");
        let gain = (prev - now).abs();
        let done = next.stalled
            || match abs_tol {
                Some(tol) => gain <= tol,
                None => gain <= SCA_REL_TOL * prev.abs().max(1.0),
            };
        state = next;
        if done {
            break;
        }
    }
    state
}

/// One surrogate convex program: objective pieces plus the anchor-dependent
/// constraint data, over variables `x = [waypoints 1..N-1 | unpinned slacks]`.
struct SurrogateProblem<'a> {
    scn: &'a Scenario,
    obj: &'a ConvexObjective,
    /// Anchor displacement per slot.
    anchor_delta: Vec<Point>,
    /// Slot -> variable index of its slack speed; `None` pins the slot's
    /// slack at the floor.
    slack_col: Vec<Option<usize>>,
    x0: DVector<f64>,
    dim: usize,
    n: usize,
    tau: f64,
    vmax_sq: f64,
    /// Count of barrier constraints.
    m: usize,
}

impl<'a> SurrogateProblem<'a> {
    fn new(scn: &'a Scenario, obj: &'a ConvexObjective, anchor: &Trajectory) -> Self {
        let n = scn.num_slots;
        let tau = scn.slot_len();
        let cap = scn.v_max * tau;
        let mut anchor_delta = Vec::with_capacity(n);
        for j in 0..n {
            let d = anchor.waypoints[j + 1] - anchor.waypoints[j];
            assert!(
                d.norm() < cap * (1.0 - 1e-12),
                "anchor rides the speed cap in slot {j}; no interior to start from"
            );
            anchor_delta.push(d);
        }
        let mut slack_col = vec![None; n];
        let mut dim = 2 * (n - 1);
        for j in 0..n {
            if anchor_delta[j].norm() / tau > PIN_FACTOR * SPEED_FLOOR {
                slack_col[j] = Some(dim);
                dim += 1;
            }
        }
        let mut x0 = DVector::zeros(dim);
        for i in 1..n {
            x0[2 * (i - 1)] = anchor.waypoints[i].x;
            x0[2 * (i - 1) + 1] = anchor.waypoints[i].y;
        }
        for j in 0..n {
            if let Some(col) = slack_col[j] {
                let v = anchor_delta[j].norm() / tau;
                x0[col] = (v * (1.0 - 1e-6)).max(SPEED_FLOOR * (1.0 + 1e-9));
            }
        }
        let m = n + 2 * slack_col.iter().flatten().count();
        SurrogateProblem {
            scn,
            obj,
            anchor_delta,
            slack_col,
            x0,
            dim,
            n,
            tau,
            vmax_sq: cap * cap,
            m,
        }
    }

    fn waypoint(&self, x: &DVector<f64>, i: usize) -> Point {
        if i == 0 {
            self.scn.uav_start
        } else if i == self.n {
            self.scn.uav_end
        } else {
            Point::new(x[2 * (i - 1)], x[2 * (i - 1) + 1])
        }
    }

    fn delta(&self, x: &DVector<f64>, j: usize) -> Point {
        self.waypoint(x, j + 1) - self.waypoint(x, j)
    }

    /// Base columns of the waypoints bounding slot `j`; `None` marks a fixed
    /// endpoint.
    fn delta_cols(&self, j: usize) -> (Option<usize>, Option<usize>) {
        let left = (j >= 1).then(|| 2 * (j - 1));
        let right = (j + 1 <= self.n - 1).then(|| 2 * j);
        (left, right)
    }

    fn slack(&self, x: &DVector<f64>, j: usize) -> f64 {
        match self.slack_col[j] {
            Some(col) => x[col],
            None => SPEED_FLOOR,
        }
    }

    /// Stage objective at `x` (no barrier).
    fn objective(&self, x: &DVector<f64>) -> f64 {
        let mut total = self.obj.constant;
        for i in 1..=self.n {
            total += self.obj.quad[i].value(self.waypoint(x, i));
        }
        for j in 0..self.n {
            total += self.obj.gamma * self.delta(x, j).norm().powi(3);
            total += self.obj.slack_coeff / self.slack(x, j);
        }
        total
    }

    /// Barrier objective `t f + phi` at `x`, or `None` outside the domain.
    fn psi(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        let mut phi = 0.0;
        for j in 0..self.n {
            let g = self.delta(x, j).norm_squared() - self.vmax_sq;
            if g >= 0.0 {
                return None;
            }
            phi -= (-g).ln();
            if let Some(col) = self.slack_col[j] {
                let s = x[col];
                let gf = SPEED_FLOOR - s;
                if gf >= 0.0 {
                    return None;
                }
                phi -= (-gf).ln();
                let a = self.anchor_delta[j];
                let gl = s * s * self.tau * self.tau - 2.0 * a.dot(&self.delta(x, j))
                    + a.norm_squared();
                if gl >= 0.0 {
                    return None;
                }
                phi -= (-gl).ln();
            }
        }
        Some(t * self.objective(x) + phi)
    }

    fn add_delta_vec(&self, grad: &mut DVector<f64>, j: usize, v: Point) {
        let (left, right) = self.delta_cols(j);
        if let Some(r) = right {
            grad[r] += v.x;
            grad[r + 1] += v.y;
        }
        if let Some(l) = left {
            grad[l] -= v.x;
            grad[l + 1] -= v.y;
        }
    }

    fn add_delta_mat(&self, h: &mut DMatrix<f64>, j: usize, m: Matrix2<f64>) {
        let (left, right) = self.delta_cols(j);
        let mut add = |a: usize, b: usize, sign: f64| {
            for p in 0..2 {
                for q in 0..2 {
                    h[(a + p, b + q)] += sign * m[(p, q)];
                }
            }
        };
        if let Some(r) = right {
            add(r, r, 1.0);
        }
        if let Some(l) = left {
            add(l, l, 1.0);
        }
        if let (Some(l), Some(r)) = (left, right) {
            add(l, r, -1.0);
            add(r, l, -1.0);
        }
    }

    /// Gradient and Hessian of `t f + phi` (barrier included) at interior `x`.
    fn psi_derivs(&self, t: f64, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = DVector::zeros(self.dim);
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        let tau2 = self.tau * self.tau;

        // Objective: waypoint quadratics.
        for i in 1..self.n {
            let q = &self.obj.quad[i];
            let u = self.waypoint(x, i);
            let base = 2 * (i - 1);
            let g = 2.0 * (q.c * u - q.m);
            grad[base] += t * g.x;
            grad[base + 1] += t * g.y;
            hess[(base, base)] += t * 2.0 * q.c;
            hess[(base + 1, base + 1)] += t * 2.0 * q.c;
        }
        for j in 0..self.n {
            let d = self.delta(x, j);
            let nd = d.norm();
            // Objective: cubic displacement term.
            if nd > 1e-12 {
                let g = 3.0 * self.obj.gamma * nd * d;
                let mut hd = Matrix2::identity() * (3.0 * self.obj.gamma * nd);
                hd += (3.0 * self.obj.gamma / nd) * d * d.transpose();
                self.add_delta_vec(&mut grad, j, t * g);
                self.add_delta_mat(&mut hess, j, t * hd);
            }
            // Barrier: speed cap.
            let g1 = nd * nd - self.vmax_sq;
            let inv = -1.0 / g1;
            self.add_delta_vec(&mut grad, j, 2.0 * inv * d);
            let mut hd = Matrix2::identity() * (2.0 * inv);
            hd += (4.0 / (g1 * g1)) * d * d.transpose();
            self.add_delta_mat(&mut hess, j, hd);

            if let Some(col) = self.slack_col[j] {
                let s = x[col];
                // Objective: inverse slack.
                grad[col] -= t * self.obj.slack_coeff / (s * s);
                hess[(col, col)] += t * 2.0 * self.obj.slack_coeff / (s * s * s);
                // Barrier: slack floor.
                let room = s - SPEED_FLOOR;
                grad[col] -= 1.0 / room;
                hess[(col, col)] += 1.0 / (room * room);
                // Barrier: linearized speed bound.
                let a = self.anchor_delta[j];
                let gl = s * s * tau2 - 2.0 * a.dot(&d) + a.norm_squared();
                let inv = -1.0 / gl;
                grad[col] += 2.0 * s * tau2 * inv;
                self.add_delta_vec(&mut grad, j, -2.0 * inv * a);
                hess[(col, col)] += 2.0 * tau2 * inv;
                // Rank-one part grad(g) grad(g)^T / g^2 over the sparse
                // support (slack column plus the two waypoints).
                let mut entries: [(usize, f64); 5] = [(0, 0.0); 5];
                let mut used = 0;
                entries[used] = (col, 2.0 * s * tau2);
                used += 1;
                let (left, right) = self.delta_cols(j);
                if let Some(r) = right {
                    entries[used] = (r, -2.0 * a.x);
                    entries[used + 1] = (r + 1, -2.0 * a.y);
                    used += 2;
                }
                if let Some(l) = left {
                    entries[used] = (l, 2.0 * a.x);
                    entries[used + 1] = (l + 1, 2.0 * a.y);
                    used += 2;
                }
                let w = 1.0 / (gl * gl);
                for p in 0..used {
                    for q in 0..used {
                        hess[(entries[p].0, entries[q].0)] += w * entries[p].1 * entries[q].1;
                    }
                }
            }
        }
        (grad, hess)
    }

    /// Objective gradient alone, for residual scaling.
    fn objective_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(self.dim);
        for i in 1..self.n {
            let q = &self.obj.quad[i];
            let u = self.waypoint(x, i);
            let g = 2.0 * (q.c * u - q.m);
            grad[2 * (i - 1)] += g.x;
            grad[2 * (i - 1) + 1] += g.y;
        }
        for j in 0..self.n {
            let d = self.delta(x, j);
            let nd = d.norm();
            if nd > 1e-12 {
                self.add_delta_vec(&mut grad, j, 3.0 * self.obj.gamma * nd * d);
            }
            if let Some(col) = self.slack_col[j] {
                let s = x[col];
                grad[col] -= self.obj.slack_coeff / (s * s);
            }
        }
        grad
    }

    /// Follows the central path until the duality gap is negligible next to
    /// the objective, returning the path, the slack speeds, and diagnostics.
    fn solve(&self) -> (Trajectory, Vec<f64>, SolverDiag) {
        let mut x = self.x0.clone();
        let scale = self.objective(&x).abs().max(1.0);
        let gap_tol = 1e-7 * scale;
        let mut t = self.m as f64 / (0.1 * scale);
        let mut newton_total = 0u32;
        let mut converged = true;
        for _stage in 0..60 {
            for _ in 0..50 {
                let (grad, hess) = self.psi_derivs(t, &x);
                // Stationarity in objective units: the reported residual is
                // |grad psi| / t against |grad f|, so drive the barrier
                // gradient well under that scale before loosening t.
                let f_scale = self.objective_grad(&x).amax().max(1.0);
                if grad.amax() <= 1e-6 * t * f_scale {
                    break;
                }
                let dx = match solve_spd(hess, &grad) {
                    Some(dx) => dx,
                    None => {
                        converged = false;
                        break;
                    }
                };
                newton_total += 1;
                let dec = -grad.dot(&dx);
                if dec * 0.5 <= 1e-16 * (1.0 + t * scale) {
                    break;
                }
                let psi_here = self.psi(t, &x).expect("iterates stay interior");
                let mut alpha = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let trial = &x + alpha * &dx;
                    if let Some(v) = self.psi(t, &trial) {
                        if v <= psi_here - 0.25 * alpha * dec {
                            x = trial;
                            moved = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if self.m as f64 / t <= gap_tol {
                break;
            }
            t *= BARRIER_GROWTH;
        }

        let gap = self.m as f64 / t;
        let (grad, _) = self.psi_derivs(t, &x);
        let f_grad = self.objective_grad(&x);
        let stationarity = grad.amax() / t / f_grad.amax().max(1.0);
        let diag = SolverDiag {
            stationarity,
            dual_gap: gap,
            newton_iterations: newton_total,
            converged: converged && gap <= gap_tol * 1.0001,
        };

        let mut waypoints = Vec::with_capacity(self.n + 1);
        waypoints.push(self.scn.uav_start);
        for i in 1..self.n {
            waypoints.push(Point::new(x[2 * (i - 1)], x[2 * (i - 1) + 1]));
        }
        waypoints.push(self.scn.uav_end);
        let vtilde = (0..self.n).map(|j| self.slack(&x, j)).collect();
        (Trajectory { waypoints }, vtilde, diag)
    }
}

/// Cholesky solve with an escalating ridge fallback for semidefinite edges.
fn solve_spd(mut h: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = h.nrows();
    let base = h.diagonal().amax().max(1e-30);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if ridge > 0.0 {
            for i in 0..dim {
                h[(i, i)] += ridge;
            }
        }
        if let Some(chol) = h.clone().cholesky() {
            return Some(chol.solve(&(-grad)));
        }
        ridge = if ridge == 0.0 { base * 1e-14 } else { ridge * 100.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_plan(scn: &Scenario) -> (Schedule, BandwidthPlan) {
        (
            Schedule::zeros(scn.num_ues(), scn.num_slots),
            BandwidthPlan::structural_split(scn),
        )
    }

    #[test]
    fn zero_bit_slots_add_only_flight_terms() {
        let scn = Scenario::default();
        let (z, bw) = zero_plan(&scn);
        let obj = build_convex_objective(&scn, &z, &bw);
        assert_eq!(obj.constant, 0.0);
        for q in &obj.quad {
            assert_eq!(q.c, 0.0);
        }
        let traj = Trajectory::direct(&scn);
        let vtilde = vec![1.0; scn.num_slots];
        let flight: f64 = traj.speeds(&scn).iter().map(|&v| scn.weight_uav * scn.fly_energy(v)).sum();
        let got = obj.value(&scn, &traj, &vtilde);
        assert!((got - flight).abs() <= 1e-9 * flight, "{got} vs {flight}");
    }

    #[test]
    fn offload_coefficient_matches_hand_value() {
        let mut scn = Scenario::default();
        scn.ues[0].weight = 1.0;
        let mut z = Schedule::zeros(scn.num_ues(), scn.num_slots);
        z.l_off_ue[0][10] = 1e6;
        let mut bw = BandwidthPlan::zeros(scn.num_ues(), scn.num_slots);
        bw.b_off_ue[0][10] = 3e7;
        let obj = build_convex_objective(&scn, &z, &bw);
        let delta = scn.subslot_len();
        let expect = delta * 1e-9 * ((1e6 / (delta * 3e7)).exp2() - 1.0) / 1e-3;
        assert!((expect - 2.937e-8).abs() <= 1e-3 * expect, "hand value drifted");
        let got = obj.quad[11].c;
        assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn objective_value_matches_energy_report_components() {
        let scn = Scenario::default();
        let (mut z, bw) = zero_plan(&scn);
        for k in 0..scn.num_ues() {
            for j in 0..scn.num_slots {
                z.f_ue[k][j] = 2e8;
            }
        }
        z.l_off_ue[0][10] = 2e6;
        z.l_fwd_uav[1][20] = 1e6;
        z.l_down_uav[2][30] = 5e5;
        z.f_uav[0][15] = 1e8;
        let traj = Trajectory::direct(&scn);
        let report = model::wsec(&scn, &z, &bw, &traj).unwrap();
        let mut fixed = 0.0;
        for k in 0..scn.num_ues() {
            for j in 0..scn.num_slots {
                fixed += scn.ues[k].weight * scn.local_energy(k, z.f_ue[k][j]).unwrap();
                fixed += scn.weight_uav * scn.uav_compute_energy(z.f_uav[k][j]).unwrap();
            }
        }
        let obj = build_convex_objective(&scn, &z, &bw);
        let vtilde = traj.speeds(&scn);
        let got = obj.value(&scn, &traj, &vtilde);
        let want = report.wsec - fixed;
        assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn flight_only_descent_hugs_the_chord() {
        let scn = Scenario::default();
        let (z, bw) = zero_plan(&scn);
        let state = solve_p13_state(&scn, &z, &bw, Trajectory::direct(&scn));
        for pair in state.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "objective rose: {pair:?}");
        }
        let speeds = state.anchor.speeds(&scn);
        for (j, &v) in speeds.iter().enumerate() {
            assert!(v <= scn.v_max + 1e-9);
            assert!((0.9..=1.1).contains(&v), "slot {j} speed {v}");
            assert!(state.vtilde[j] <= v.max(SPEED_FLOOR) + 1e-6);
        }
        for w in &state.anchor.waypoints {
            assert!((w.y - (-5.0)).abs() <= 0.2, "left the chord: {w:?}");
        }
        assert!(state.diag.converged);
    }

    #[test]
    fn stationary_anchor_pins_the_slack() {
        let scn = Scenario::default();
        let (z, bw) = zero_plan(&scn);
        let n = scn.num_slots;
        let mut waypoints = vec![scn.uav_start; n + 1];
        for i in 2..=n {
            let f = (i - 1) as f64 / (n - 1) as f64;
            waypoints[i] = scn.uav_start + f * (scn.uav_end - scn.uav_start);
        }
        let hold = Trajectory { waypoints };
        let state = ScaState::new(&scn, &z, &bw, hold);
        let (_, next) = sca_step(&scn, &z, &bw, &state);
        assert!(!next.stalled);
        assert_eq!(next.vtilde[0], SPEED_FLOOR);
        let last = *next.objective_trace.last().unwrap();
        assert!(last <= state.objective_trace[0] + 1e-9);
    }

    #[test]
    fn heavy_user_bends_the_path() {
        let scn = Scenario::default();
        let (mut z, bw) = zero_plan(&scn);
        for j in 5..45 {
            z.l_off_ue[0][j] = 4e6;
        }
        let state = solve_p13_state(&scn, &z, &bw, Trajectory::direct(&scn));
        let target = scn.ues[0].position;
        let bent = state.anchor.mean_distance_to(target);
        let straight = Trajectory::direct(&scn).mean_distance_to(target);
        assert!(bent < straight - 0.5, "bent {bent} straight {straight}");
        assert!(state.diag.stationarity <= 1e-5, "kkt {}", state.diag.stationarity);
        for pair in state.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
        let speeds = state.anchor.speeds(&scn);
        for (j, &v) in speeds.iter().enumerate() {
            assert!(v <= scn.v_max + 1e-9);
            assert!(state.vtilde[j] <= v.max(SPEED_FLOOR) + 1e-6, "slot {j}");
        }
    }

    #[test]
    fn linearized_bound_is_conservative() {
        let tau = 0.2;
        let mut seed = 0x2545f4914f6cdd1du64;
        let mut rng = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let a = Point::new(4.0 * rng() - 2.0, 4.0 * rng() - 2.0);
            let d = Point::new(4.0 * rng() - 2.0, 4.0 * rng() - 2.0);
            let rhs = 2.0 * a.dot(&d) - a.norm_squared();
            if rhs <= 0.0 {
                continue;
            }
            // Any slack admitted by the linearized bound is admitted by the
            // true speed constraint.
            let vt2 = rhs / (tau * tau);
            assert!(vt2 * tau * tau <= d.norm_squared() + 1e-12);
        }
    }
}
