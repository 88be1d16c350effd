//! Plan containers: CPU/bit schedule, bandwidth split, and trajectory.
//!
//! The pipeline structure pins several entries to zero: a user cannot
//! offload in the last two slots (nothing downstream could consume the
//! bits), the UAV cannot work in the first or last slot, and nothing can be
//! downloaded before slot three. Constructors produce all-zero arrays; the
//! solvers only ever write the structurally free entries, and the
//! feasibility checker verifies the pinned ones.

use super::{Point, Scenario};

/// Per-user, per-slot CPU frequencies and bit movements.
///
/// All arrays are `[K][N]`. `f_ue` is the user CPU frequency (held for the
/// whole slot); the other four act within the user's sub-slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// User CPU frequency, Hz.
    pub f_ue: Vec<Vec<f64>>,
    /// Bits offloaded user -> UAV.
    pub l_off_ue: Vec<Vec<f64>>,
    /// UAV CPU frequency devoted to this user, Hz.
    pub f_uav: Vec<Vec<f64>>,
    /// Bits forwarded UAV -> access point.
    pub l_fwd_uav: Vec<Vec<f64>>,
    /// Result bits returned UAV -> user.
    pub l_down_uav: Vec<Vec<f64>>,
}

impl Schedule {
    pub fn zeros(num_ues: usize, num_slots: usize) -> Self {
        let z = || vec![vec![0.0; num_slots]; num_ues];
        Schedule {
            f_ue: z(),
            l_off_ue: z(),
            f_uav: z(),
            l_fwd_uav: z(),
            l_down_uav: z(),
        }
    }

    pub fn num_ues(&self) -> usize {
        self.f_ue.len()
    }

    pub fn num_slots(&self) -> usize {
        self.f_ue.first().map_or(0, Vec::len)
    }

    pub(crate) fn assert_dims(&self, num_ues: usize, num_slots: usize) {
        for field in [
            &self.f_ue,
            &self.l_off_ue,
            &self.f_uav,
            &self.l_fwd_uav,
            &self.l_down_uav,
        ] {
            assert_eq!(field.len(), num_ues, "schedule user dimension");
            for row in field.iter() {
                assert_eq!(row.len(), num_slots, "schedule slot dimension");
            }
        }
    }

    /// Input bits of user `k` the UAV disposes of in slot `j` (computing
    /// plus forwarding).
    pub fn uav_processed_bits(&self, scn: &Scenario, k: usize, j: usize) -> f64 {
        scn.uav_compute_bits(k, self.f_uav[k][j]) + self.l_fwd_uav[k][j]
    }
}

/// Per-user, per-slot split of the shared band across the three streams.
///
/// All arrays are `[K][N]` in Hz. In any slot where some stream moves bits,
/// the three entries of that user sum to the system bandwidth; all-idle
/// interior slots hold zeros, and the two mission ends are pinned to the
/// only stream that is structurally possible there.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthPlan {
    /// Band for the user -> UAV uplink.
    pub b_off_ue: Vec<Vec<f64>>,
    /// Band for the UAV -> access-point forward link.
    pub b_fwd_uav: Vec<Vec<f64>>,
    /// Band for the UAV -> user downlink.
    pub b_down_uav: Vec<Vec<f64>>,
}

impl BandwidthPlan {
    pub fn zeros(num_ues: usize, num_slots: usize) -> Self {
        let z = || vec![vec![0.0; num_slots]; num_ues];
        BandwidthPlan {
            b_off_ue: z(),
            b_fwd_uav: z(),
            b_down_uav: z(),
        }
    }

    /// Equal split of the band among the streams that are structurally
    /// allowed in each slot. This is the starting plan of every scheme and
    /// already respects the pinned zeros at the mission ends.
    pub fn structural_split(scn: &Scenario) -> Self {
        let n = scn.num_slots;
        let b = scn.bandwidth;
        let mut plan = BandwidthPlan::zeros(scn.num_ues(), n);
        for k in 0..scn.num_ues() {
            plan.b_off_ue[k][0] = b;
            if n >= 2 {
                plan.b_off_ue[k][1] = 0.5 * b;
                plan.b_fwd_uav[k][1] = 0.5 * b;
                plan.b_fwd_uav[k][n - 2] = 0.5 * b;
                plan.b_down_uav[k][n - 2] = 0.5 * b;
                plan.b_down_uav[k][n - 1] = b;
            }
            for j in 2..n.saturating_sub(2) {
                plan.b_off_ue[k][j] = b / 3.0;
                plan.b_fwd_uav[k][j] = b / 3.0;
                plan.b_down_uav[k][j] = b / 3.0;
            }
        }
        plan
    }

    pub fn num_ues(&self) -> usize {
        self.b_off_ue.len()
    }

    pub fn num_slots(&self) -> usize {
        self.b_off_ue.first().map_or(0, Vec::len)
    }

    pub(crate) fn assert_dims(&self, num_ues: usize, num_slots: usize) {
        for field in [&self.b_off_ue, &self.b_fwd_uav, &self.b_down_uav] {
            assert_eq!(field.len(), num_ues, "bandwidth user dimension");
            for row in field.iter() {
                assert_eq!(row.len(), num_slots, "bandwidth slot dimension");
            }
        }
    }
}

/// UAV path: `N + 1` waypoints, the first and last fixed by the mission.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
}

impl Trajectory {
    /// Straight flight from launch to landing at constant speed.
    pub fn direct(scn: &Scenario) -> Self {
        let n = scn.num_slots;
        let waypoints = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                scn.uav_start + (scn.uav_end - scn.uav_start) * t
            })
            .collect();
        Trajectory { waypoints }
    }

    /// Per-slot speeds, length `N`.
    pub fn speeds(&self, scn: &Scenario) -> Vec<f64> {
        let tau = scn.slot_len();
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() / tau)
            .collect()
    }

    /// Mean distance from the waypoints to a fixed point (useful for
    /// comparing how strongly two paths hug a ground node).
    pub fn mean_distance_to(&self, p: Point) -> f64 {
        let sum: f64 = self.waypoints.iter().map(|w| (w - p).norm()).sum();
        sum / self.waypoints.len() as f64
    }
}
