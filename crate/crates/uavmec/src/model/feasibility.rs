//! Plan feasibility checker.
//!
//! Violations come back as data, one entry per broken requirement, so that
//! callers (tests, the CLI, the solvers' own debug assertions) can decide
//! what is fatal. An empty list means the plan satisfies the whole
//! constraint system within the supplied tolerances.

use super::{BandwidthPlan, Scenario, Schedule, Trajectory};

/// Which requirement a [`Violation`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// The UAV consumed bits of a user before they had arrived.
    CausalityUavInput,
    /// A result was downloaded before the UAV had produced it.
    CausalityDownload,
    /// Bits entering the UAV do not match bits it computed plus forwarded.
    UavTaskBalance,
    /// Downloaded bits do not match the produced output bits.
    DownloadBalance,
    /// Local plus offloaded bits do not cover the user's task.
    TaskCompletion,
    /// Active slot whose three bandwidth shares do not sum to the band.
    BandwidthSum,
    /// A frequency, bit count or bandwidth share is negative.
    NonNegative,
    /// A structurally pinned entry is nonzero.
    BoundaryZero,
    /// Trajectory endpoint off the mission's launch or landing point.
    Endpoint,
    /// Slot speed above the UAV's maximum.
    SpeedLimit,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ConstraintKind::CausalityUavInput => "uav input causality",
            ConstraintKind::CausalityDownload => "download causality",
            ConstraintKind::UavTaskBalance => "uav task balance",
            ConstraintKind::DownloadBalance => "download balance",
            ConstraintKind::TaskCompletion => "task completion",
            ConstraintKind::BandwidthSum => "bandwidth sum",
            ConstraintKind::NonNegative => "non-negative entry",
            ConstraintKind::BoundaryZero => "pinned boundary entry",
            ConstraintKind::Endpoint => "trajectory endpoint",
            ConstraintKind::SpeedLimit => "speed limit",
        };
        f.write_str(name)
    }
}

/// One broken requirement. `residual` is the violation magnitude in the
/// constraint's own unit (bits, Hz, m, m/s).
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub ue: Option<usize>,
    pub slot: Option<usize>,
    pub residual: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(k) = self.ue {
            write!(f, ", ue {k}")?;
        }
        if let Some(j) = self.slot {
            write!(f, ", slot {j}")?;
        }
        write!(f, ": residual {:.6e}", self.residual)
    }
}

/// Tolerances for [`check_feasibility`].
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Absolute slack on bit balances, bits.
    pub bits_abs: f64,
    /// Relative slack (scaled by the task size) on the causality sums.
    pub rel: f64,
    /// Absolute slack on the per-slot bandwidth sum, Hz.
    pub bandwidth_hz: f64,
    /// Absolute slack on the speed limit, m/s.
    pub speed_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            bits_abs: 1e-3,
            rel: 1e-6,
            bandwidth_hz: 1e-3,
            speed_abs: 1e-9,
        }
    }
}

/// Verifies a complete plan against the constraint system; returns one
/// [`Violation`] per broken requirement (empty when feasible).
pub fn check_feasibility(
    scn: &Scenario,
    schedule: &Schedule,
    bandwidth: &BandwidthPlan,
    trajectory: &Trajectory,
    tol: &Tolerances,
) -> Vec<Violation> {
    let n = scn.num_slots;
    let k_count = scn.num_ues();
    schedule.assert_dims(k_count, n);
    bandwidth.assert_dims(k_count, n);
    assert_eq!(trajectory.waypoints.len(), n + 1, "trajectory length");

    let mut out = Vec::new();
    let mut violation = |kind, ue, slot, residual| {
        out.push(Violation {
            kind,
            ue,
            slot,
            residual,
        })
    };

    // Sign constraints on every array.
    let sign_fields: [(&Vec<Vec<f64>>, &str); 8] = [
        (&schedule.f_ue, "f_ue"),
        (&schedule.l_off_ue, "l_off_ue"),
        (&schedule.f_uav, "f_uav"),
        (&schedule.l_fwd_uav, "l_fwd_uav"),
        (&schedule.l_down_uav, "l_down_uav"),
        (&bandwidth.b_off_ue, "b_off_ue"),
        (&bandwidth.b_fwd_uav, "b_fwd_uav"),
        (&bandwidth.b_down_uav, "b_down_uav"),
    ];
    for (field, _) in sign_fields {
        for (k, row) in field.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x < 0.0 {
                    violation(ConstraintKind::NonNegative, Some(k), Some(j), x);
                }
            }
        }
    }

    // Structurally pinned entries. Offloading is pointless in the last two
    // slots, the UAV is idle in the first and last, and downloads cannot
    // start before the third slot; the bandwidth shares mirror that.
    for k in 0..k_count {
        let pinned: [(&Vec<Vec<f64>>, [usize; 2]); 6] = [
            (&schedule.l_off_ue, [n - 2, n - 1]),
            (&schedule.f_uav, [0, n - 1]),
            (&schedule.l_fwd_uav, [0, n - 1]),
            (&schedule.l_down_uav, [0, 1]),
            (&bandwidth.b_off_ue, [n - 2, n - 1]),
            (&bandwidth.b_fwd_uav, [0, n - 1]),
        ];
        for (field, slots) in pinned {
            for j in slots {
                if field[k][j] != 0.0 {
                    violation(ConstraintKind::BoundaryZero, Some(k), Some(j), field[k][j]);
                }
            }
        }
        for j in [0, 1] {
            if bandwidth.b_down_uav[k][j] != 0.0 {
                violation(ConstraintKind::BoundaryZero, Some(k), Some(j), bandwidth.b_down_uav[k][j]);
            }
        }
    }

    for k in 0..k_count {
        let ue = &scn.ues[k];
        let causal_tol = tol.bits_abs.max(tol.rel * ue.task_bits);

        // Running sums; at the top of iteration j: `received` covers slots
        // 0..=j-1, `processed` covers 1..=j after the update below, and the
        // downloadable output lags production by one slot.
        let mut received = 0.0;
        let mut processed = 0.0;
        let mut produced_lag = 0.0;
        let mut downloaded = 0.0;
        for j in 1..n {
            received += schedule.l_off_ue[k][j - 1];
            if j >= 2 {
                produced_lag += ue.output_ratio * schedule.uav_processed_bits(scn, k, j - 1);
                downloaded += schedule.l_down_uav[k][j];
                if downloaded - produced_lag > causal_tol {
                    violation(
                        ConstraintKind::CausalityDownload,
                        Some(k),
                        Some(j),
                        downloaded - produced_lag,
                    );
                }
            }
            processed += schedule.uav_processed_bits(scn, k, j);
            if j <= n - 2 && processed - received > causal_tol {
                violation(
                    ConstraintKind::CausalityUavInput,
                    Some(k),
                    Some(j),
                    processed - received,
                );
            }
        }

        // Whole-mission balances over the structurally free slots, at the
        // same scale-aware tolerance as the causality windows (solvers may
        // round sub-bit loads away).
        let offloaded: f64 = (0..n.saturating_sub(2)).map(|j| schedule.l_off_ue[k][j]).sum();
        let disposed: f64 = (1..n - 1).map(|j| schedule.uav_processed_bits(scn, k, j)).sum();
        let returned: f64 = (2..n).map(|j| schedule.l_down_uav[k][j]).sum();
        let local: f64 = (0..n).map(|j| scn.local_bits(k, schedule.f_ue[k][j])).sum();
        if (disposed - offloaded).abs() > causal_tol {
            violation(ConstraintKind::UavTaskBalance, Some(k), None, disposed - offloaded);
        }
        if (returned - ue.output_ratio * disposed).abs() > causal_tol {
            violation(
                ConstraintKind::DownloadBalance,
                Some(k),
                None,
                returned - ue.output_ratio * disposed,
            );
        }
        if (local + offloaded - ue.task_bits).abs() > causal_tol {
            violation(
                ConstraintKind::TaskCompletion,
                Some(k),
                None,
                local + offloaded - ue.task_bits,
            );
        }

        // Bandwidth sums: the mission ends always carry the whole band on
        // the only possible stream; interior slots must sum to the band
        // whenever any stream is active, and may be fully zero when idle.
        for j in 0..n {
            let sum = bandwidth.b_off_ue[k][j] + bandwidth.b_fwd_uav[k][j] + bandwidth.b_down_uav[k][j];
            let active = schedule.l_off_ue[k][j] > 0.0
                || schedule.l_fwd_uav[k][j] > 0.0
                || schedule.l_down_uav[k][j] > 0.0;
            let forced_end = j == 0 || j == n - 1;
            let idle_ok = !forced_end && !active && sum == 0.0;
            if !idle_ok && (sum - scn.bandwidth).abs() > tol.bandwidth_hz {
                violation(ConstraintKind::BandwidthSum, Some(k), Some(j), sum - scn.bandwidth);
            }
        }
    }

    // Trajectory endpoints and speed limit.
    let start_err = (trajectory.waypoints[0] - scn.uav_start).norm();
    if start_err > 1e-9 {
        violation(ConstraintKind::Endpoint, None, Some(0), start_err);
    }
    let end_err = (trajectory.waypoints[n] - scn.uav_end).norm();
    if end_err > 1e-9 {
        violation(ConstraintKind::Endpoint, None, Some(n), end_err);
    }
    for (j, v) in trajectory.speeds(scn).into_iter().enumerate() {
        if v > scn.v_max + tol.speed_abs {
            violation(ConstraintKind::SpeedLimit, None, Some(j), v - scn.v_max);
        }
    }

    out
}
