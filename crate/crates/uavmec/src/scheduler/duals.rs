//! Dual variables of the scheduling subproblem and the closed-form maps
//! from a dual point to a primal candidate.
//!
//! Slot support sets (0-based, `N = num_slots`):
//! relay-input causality binds at slots `1..=N-2`, download causality at
//! `2..=N-1`. Multiplier entries outside the support stay exactly zero, so
//! plain suffix sums over the full arrays realise the window sums below.

use crate::model::{BandwidthPlan, Scenario, Schedule, Trajectory};

/// Multipliers kept between subgradient iterations (one block per UE).
#[derive(Debug, Clone)]
pub struct DualState {
    /// Relay-input causality multipliers, `[K][N]`, support `1..=N-2`.
    pub lambda: Vec<Vec<f64>>,
    /// Download causality multipliers, `[K][N]`, support `2..=N-1`.
    pub mu: Vec<Vec<f64>>,
    /// Task-completion equality multiplier per UE.
    pub beta: Vec<f64>,
    /// Relay balance equality multiplier per UE.
    pub eta: Vec<f64>,
    /// Download balance equality multiplier per UE.
    pub rho: Vec<f64>,
}

impl DualState {
    pub fn zeros(scn: &Scenario) -> Self {
        let k = scn.num_ues();
        let n = scn.num_slots;
        DualState {
            lambda: vec![vec![0.0; n]; k],
            mu: vec![vec![0.0; n]; k],
            beta: vec![0.0; k],
            eta: vec![0.0; k],
            rho: vec![0.0; k],
        }
    }
}

/// Suffix sums of one UE's causality multipliers, length `N + 1` with a
/// trailing zero so that `from[j + 1]` is always in range.
///
/// `lam_from[j]` = sum of `lambda[i]` for `i >= j`; same for `mu_from`.
/// The four window sums used by the closed forms are then
/// inclusive `lam_from[j]` / exclusive `lam_from[j + 1]` and likewise for mu.
#[derive(Debug, Clone)]
pub(crate) struct SuffixSums {
    pub lam_from: Vec<f64>,
    pub mu_from: Vec<f64>,
}

impl SuffixSums {
    pub fn new(lambda_k: &[f64], mu_k: &[f64]) -> Self {
        SuffixSums {
            lam_from: suffix(lambda_k),
            mu_from: suffix(mu_k),
        }
    }
}

fn suffix(xs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len() + 1];
    for j in (0..xs.len()).rev() {
        out[j] = out[j + 1] + xs[j];
    }
    out
}

/// Per-slot channel gains along a fixed trajectory. Slot `j` uses the
/// end-of-slot waypoint `j + 1`.
#[derive(Debug, Clone)]
pub(crate) struct SlotGains {
    /// `[K][N]` gain between UE `k` and the UAV during slot `j`.
    pub ue: Vec<Vec<f64>>,
    /// `[N]` gain between the UAV and the AP during slot `j`.
    pub ap: Vec<f64>,
}

impl SlotGains {
    pub fn new(scn: &Scenario, traj: &Trajectory) -> Self {
        let n = scn.num_slots;
        assert_eq!(traj.waypoints.len(), n + 1, "trajectory length mismatch");
        let mut ue = vec![vec![0.0; n]; scn.num_ues()];
        let mut ap = vec![0.0; n];
        for j in 0..n {
            let u = traj.waypoints[j + 1];
            ap[j] = scn.channel_gain_ap(u);
            for (k, row) in ue.iter_mut().enumerate() {
                row[j] = scn.channel_gain_ue(u, k);
            }
        }
        SlotGains { ue, ap }
    }
}

/// Log-domain priority of each transmission stream: `log2(b h / (w N0 ln 2))`.
/// `None` marks slots where the stream has no band (its bit load is pinned
/// to zero and the priority is meaningless).
#[derive(Debug, Clone)]
pub struct PriorityIndicators {
    /// `[K][N]`, meaningful on `0..=N-3`.
    pub off_ue: Vec<Vec<Option<f64>>>,
    /// `[K][N]`, meaningful on `1..=N-2`. The channel is the shared UAV-AP
    /// link but the band is the slice of UE `k`'s sub-slot, hence per-UE.
    pub fwd_uav: Vec<Vec<Option<f64>>>,
    /// `[K][N]`, meaningful on `2..=N-1`.
    pub down_uav: Vec<Vec<Option<f64>>>,
}

fn indicator(band: f64, gain: f64, weight: f64, noise: f64) -> Option<f64> {
    if band > 0.0 {
        Some((band * gain / (weight * noise * std::f64::consts::LN_2)).log2())
    } else {
        None
    }
}

pub fn compute_indicators(
    scn: &Scenario,
    traj: &Trajectory,
    bw: &BandwidthPlan,
) -> PriorityIndicators {
    let gains = SlotGains::new(scn, traj);
    compute_indicators_from_gains(scn, &gains, bw)
}

pub(crate) fn compute_indicators_from_gains(
    scn: &Scenario,
    gains: &SlotGains,
    bw: &BandwidthPlan,
) -> PriorityIndicators {
    let n = scn.num_slots;
    let k_count = scn.num_ues();
    let mut off_ue = vec![vec![None; n]; k_count];
    let mut fwd_uav = vec![vec![None; n]; k_count];
    let mut down_uav = vec![vec![None; n]; k_count];
    for k in 0..k_count {
        let w_k = scn.ues[k].weight;
        for j in 0..=n - 3 {
            off_ue[k][j] = indicator(bw.b_off_ue[k][j], gains.ue[k][j], w_k, scn.noise_power);
        }
        for j in 1..=n - 2 {
            fwd_uav[k][j] =
                indicator(bw.b_fwd_uav[k][j], gains.ap[j], scn.weight_uav, scn.noise_power);
        }
        for j in 2..=n - 1 {
            down_uav[k][j] =
                indicator(bw.b_down_uav[k][j], gains.ue[k][j], scn.weight_uav, scn.noise_power);
        }
    }
    PriorityIndicators { off_ue, fwd_uav, down_uav }
}

/// Water-filling style bit load: `delta * band * [phi + log2(arg)]^+`,
/// zero when the stream is unavailable or the dual argument is non-positive.
#[inline]
pub(crate) fn bit_load(delta: f64, band: f64, phi: Option<f64>, arg: f64) -> f64 {
    match phi {
        Some(p) if arg > 0.0 => {
            let t = p + arg.log2();
            if t > 0.0 { delta * band * t } else { 0.0 }
        }
        _ => 0.0,
    }
}

/// CPU speed that minimises `energy + multiplier * unprocessed bits`:
/// `sqrt([m]^+ / (3 C w kappa))`.
#[inline]
pub(crate) fn cpu_speed(m: f64, cycles_per_bit: f64, weight: f64, switched_cap: f64) -> f64 {
    (m.max(0.0) / (3.0 * cycles_per_bit * weight * switched_cap)).sqrt()
}

/// Evaluates the per-slot minimisers of the partial Lagrangian at `duals`.
/// With `allow_local == false` the UE CPUs stay off regardless of `beta`
/// (restricted scheme where every bit must be offloaded).
pub(crate) fn closed_form_from_indicators(
    scn: &Scenario,
    bw: &BandwidthPlan,
    ind: &PriorityIndicators,
    duals: &DualState,
    allow_local: bool,
) -> Schedule {
    let n = scn.num_slots;
    let k_count = scn.num_ues();
    let delta = scn.subslot_len();
    let mut sch = Schedule::zeros(k_count, n);
    for k in 0..k_count {
        let ue = &scn.ues[k];
        let s = SuffixSums::new(&duals.lambda[k], &duals.mu[k]);
        let o = ue.output_ratio;

        if allow_local {
            let f = cpu_speed(duals.beta[k], ue.cycles_per_bit, ue.weight, ue.switched_cap);
            sch.f_ue[k].iter_mut().for_each(|x| *x = f);
        }
        for j in 0..=n - 3 {
            let arg = s.lam_from[j + 1] + duals.beta[k] - duals.eta[k];
            sch.l_off_ue[k][j] = bit_load(delta, bw.b_off_ue[k][j], ind.off_ue[k][j], arg);
        }
        for j in 1..=n - 2 {
            let arg = duals.eta[k] - o * duals.rho[k] + o * s.mu_from[j + 1] - s.lam_from[j];
            sch.f_uav[k][j] =
                cpu_speed(arg, ue.cycles_per_bit, scn.weight_uav, scn.switched_cap_uav);
            sch.l_fwd_uav[k][j] = bit_load(delta, bw.b_fwd_uav[k][j], ind.fwd_uav[k][j], arg);
        }
        for j in 2..=n - 1 {
            let arg = duals.rho[k] - s.mu_from[j];
            sch.l_down_uav[k][j] = bit_load(delta, bw.b_down_uav[k][j], ind.down_uav[k][j], arg);
        }
    }
    sch
}

/// Constraint slacks (right side minus left side) of the two causality
/// families for UE `k`; entries outside each support set are zero.
/// Negative entries are violations; the dual update ascends along these.
pub fn subgradients(scn: &Scenario, sch: &Schedule, k: usize) -> (Vec<f64>, Vec<f64>) {
    let n = scn.num_slots;
    let o = scn.ues[k].output_ratio;
    let mut slack_lambda = vec![0.0; n];
    let mut slack_mu = vec![0.0; n];
    // received[j] = offloaded bits in 0..=j-1; processed[j] = relay bits in 1..=j.
    let mut received = 0.0;
    let mut processed = 0.0;
    let mut downloaded = 0.0; // download bits in 2..=j
    for j in 1..=n - 1 {
        received += sch.l_off_ue[k][j - 1];
        let processed_before = processed; // relay bits in 1..=j-1
        processed += sch.uav_processed_bits(scn, k, j);
        if j <= n - 2 {
            slack_lambda[j] = received - processed;
        }
        if j >= 2 {
            downloaded += sch.l_down_uav[k][j];
            slack_mu[j] = o * processed_before - downloaded;
        }
    }
    (slack_lambda, slack_mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SPEED_FLOOR;

    fn hover_trajectory(scn: &Scenario) -> Trajectory {
        // Constant-gain geometry for shape tests; ignores endpoint pinning.
        Trajectory { waypoints: vec![nalgebra::Vector2::new(0.0, 0.0); scn.num_slots + 1] }
    }

    #[test]
    fn suffix_sums_match_naive_windows() {
        let xs = [0.5, 0.0, 1.25, 2.0, 0.0, 3.5];
        let s = suffix(&xs);
        assert_eq!(s.len(), xs.len() + 1);
        for j in 0..=xs.len() {
            let naive: f64 = xs[j..].iter().sum();
            assert!((s[j] - naive).abs() < 1e-12);
        }
        assert_eq!(s[xs.len()], 0.0);
    }

    #[test]
    fn indicator_matches_reference_value() {
        // 10 MHz band, gain 1e-5, unit weight, noise 1e-9 W:
        // log2(1e7 * 1e-5 / (1e-9 * ln 2)) = log2(1.442695e11).
        let phi = indicator(1e7, 1e-5, 1.0, 1e-9).unwrap();
        assert!((phi - 37.069_975_416_705_89).abs() < 1e-9);
        // Full 30 MHz band with the same physics.
        let phi_full = indicator(3e7, 1e-5, 1.0, 1e-9).unwrap();
        assert!((phi_full - 38.654_937_917_427_04).abs() < 1e-9);
        // Doubling the band raises the indicator by exactly one octave.
        let phi_double = indicator(2e7, 1e-5, 1.0, 1e-9).unwrap();
        assert!((phi_double - phi - 1.0).abs() < 1e-12);
        assert!(indicator(0.0, 1e-5, 1.0, 1e-9).is_none());
    }

    #[test]
    fn closed_forms_follow_hand_formulas() {
        let scn = Scenario::default();
        let n = scn.num_slots;
        let bw = BandwidthPlan::structural_split(&scn);
        let traj = Trajectory::direct(&scn);
        let ind = compute_indicators(&scn, &traj, &bw);
        let mut duals = DualState::zeros(&scn);
        duals.beta = vec![2e-7; 4];
        duals.eta = vec![1.2e-7; 4];
        duals.rho = vec![3e-8; 4];
        duals.lambda[1][4] = 5e-9;
        duals.mu[1][10] = 7e-9;
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &duals, true);

        let ue = &scn.ues[1];
        let f_expected =
            (2e-7 / (3.0 * ue.cycles_per_bit * ue.weight * ue.switched_cap)).sqrt();
        assert!((sch.f_ue[1][0] - f_expected).abs() <= 1e-9 * f_expected);
        assert!((sch.f_ue[1][n - 1] - f_expected).abs() <= 1e-9 * f_expected);

        // Slot 3 offload for UE 1: lam_from[4] = 5e-9 feeds the argument.
        let delta = scn.subslot_len();
        let b = bw.b_off_ue[1][3];
        let gain = scn.channel_gain_ue(traj.waypoints[4], 1);
        let phi = (b * gain / (ue.weight * scn.noise_power * std::f64::consts::LN_2)).log2();
        let arg: f64 = 5e-9 + 2e-7 - 1.2e-7;
        let expected = delta * b * (phi + arg.log2()).max(0.0);
        assert!((sch.l_off_ue[1][3] - expected).abs() <= 1e-9 * expected.max(1.0));

        // Restricted mode keeps UE CPUs off but leaves the rest unchanged.
        let restricted = closed_form_from_indicators(&scn, &bw, &ind, &duals, false);
        assert!(restricted.f_ue.iter().flatten().all(|&f| f == 0.0));
        assert_eq!(restricted.l_off_ue[1][3], sch.l_off_ue[1][3]);
    }

    #[test]
    fn boundary_slots_stay_zero() {
        let scn = Scenario::default();
        let n = scn.num_slots;
        let bw = BandwidthPlan::structural_split(&scn);
        let traj = Trajectory::direct(&scn);
        let ind = compute_indicators(&scn, &traj, &bw);
        let mut duals = DualState::zeros(&scn);
        // Large multipliers so every available stream is active.
        duals.beta = vec![1e-5; 4];
        duals.eta = vec![1e-7; 4];
        duals.rho = vec![1e-5; 4];
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &duals, true);
        for k in 0..4 {
            assert_eq!(sch.l_off_ue[k][n - 2], 0.0);
            assert_eq!(sch.l_off_ue[k][n - 1], 0.0);
            assert_eq!(sch.f_uav[k][0], 0.0);
            assert_eq!(sch.f_uav[k][n - 1], 0.0);
            assert_eq!(sch.l_fwd_uav[k][0], 0.0);
            assert_eq!(sch.l_fwd_uav[k][n - 1], 0.0);
            assert_eq!(sch.l_down_uav[k][0], 0.0);
            assert_eq!(sch.l_down_uav[k][1], 0.0);
            assert!(sch.l_off_ue[k][0] > 0.0, "stream should be active given the large duals");
            assert!(sch.l_down_uav[k][n - 1] > 0.0);
        }
    }

    #[test]
    fn constant_channel_loads_are_monotone_across_slots() {
        // With equal bands and a constant channel the offload loads can only
        // decrease over time and the download loads can only increase,
        // because the causality windows shrink and grow respectively.
        let mut scn = Scenario::default();
        scn.v_max = 1e9; // hover trajectory is fine for this shape check
        let n = scn.num_slots;
        let traj = hover_trajectory(&scn);
        let mut bw = BandwidthPlan::zeros(scn.num_ues(), n);
        let b = scn.bandwidth / 12.0;
        for j in 0..n {
            for k in 0..4 {
                if j <= n - 3 {
                    bw.b_off_ue[k][j] = b;
                }
                if j >= 2 {
                    bw.b_down_uav[k][j] = b;
                }
            }
            if (1..=n - 2).contains(&j) {
                for k in 0..4 {
                    bw.b_fwd_uav[k][j] = 4.0 * b;
                }
            }
        }
        let ind = compute_indicators(&scn, &traj, &bw);
        let mut duals = DualState::zeros(&scn);
        let mut state = 11u64;
        let mut rng = move || {
            // xorshift, plenty for test jitter
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in 0..4 {
            for j in 1..=n - 2 {
                duals.lambda[k][j] = 2e-9 * rng();
            }
            for j in 2..=n - 1 {
                duals.mu[k][j] = 2e-9 * rng();
            }
        }
        duals.beta = vec![1.5e-7; 4];
        duals.eta = vec![0.9e-7; 4];
        duals.rho = vec![6e-8; 4];
        let sch = closed_form_from_indicators(&scn, &bw, &ind, &duals, true);
        for k in 0..4 {
            for j in 1..=n - 3 {
                assert!(
                    sch.l_off_ue[k][j] <= sch.l_off_ue[k][j - 1] + 1e-9,
                    "offload load increased at slot {j}"
                );
            }
            for j in 3..=n - 1 {
                assert!(
                    sch.l_down_uav[k][j] + 1e-9 >= sch.l_down_uav[k][j - 1],
                    "download load decreased at slot {j}"
                );
            }
        }
        let _ = SPEED_FLOOR;
    }

    #[test]
    fn slacks_match_naive_window_sums() {
        let scn = Scenario::default();
        let n = scn.num_slots;
        let mut sch = Schedule::zeros(4, n);
        let mut state = 7u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in 0..4 {
            for j in 0..=n - 3 {
                sch.l_off_ue[k][j] = 1e6 * rng();
            }
            for j in 1..=n - 2 {
                sch.f_uav[k][j] = 1e8 * rng();
                sch.l_fwd_uav[k][j] = 1e5 * rng();
            }
            for j in 2..=n - 1 {
                sch.l_down_uav[k][j] = 1e5 * rng();
            }
        }
        for k in 0..4 {
            let (sl, sm) = subgradients(&scn, &sch, k);
            assert_eq!(sl[0], 0.0);
            assert_eq!(sl[n - 1], 0.0);
            assert_eq!(sm[0], 0.0);
            assert_eq!(sm[1], 0.0);
            let o = scn.ues[k].output_ratio;
            for j in 1..=n - 2 {
                let recv: f64 = sch.l_off_ue[k][..j].iter().sum();
                let proc: f64 = (1..=j).map(|i| sch.uav_processed_bits(&scn, k, i)).sum();
                assert!((sl[j] - (recv - proc)).abs() < 1e-6);
            }
            for j in 2..=n - 1 {
                let proc: f64 = (1..j).map(|i| sch.uav_processed_bits(&scn, k, i)).sum();
                let down: f64 = (2..=j).map(|i| sch.l_down_uav[k][i]).sum();
                assert!((sm[j] - (o * proc - down)).abs() < 1e-6);
            }
        }
    }
}
