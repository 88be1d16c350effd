//! Physical model: scenario description, channel gains, per-slot energy
//! forms, and the weighted-sum-energy accounting.
//!
//! Conventions used across the crate:
//!
//! * The horizon `T` is split into `N` slots of length `tau = T / N`; each
//!   slot is further split into one sub-slot of length `delta = T / (N K)`
//!   per user, so radio and UAV-CPU actions of different users never
//!   overlap in time.
//! * Slot arrays are 0-based and length `N`. Slot `j` uses the waypoint
//!   with index `j + 1`; waypoint 0 is the launch point.
//! * Bits are plain `f64` counts, frequencies are Hz, energies are Joules.

mod feasibility;
mod plan;

pub use feasibility::{check_feasibility, ConstraintKind, Tolerances, Violation};
pub use plan::{BandwidthPlan, Schedule, Trajectory};

use crate::error::ModelError;

/// Planar position in meters.
pub type Point = nalgebra::Vector2<f64>;

/// Speeds below this floor are clamped before evaluating the rotary-wing
/// power curve, whose induced-power term diverges as speed goes to zero.
pub const SPEED_FLOOR: f64 = 0.1;

/// One ground user: task, CPU model and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct UserEquipment {
    /// Fixed position, m.
    pub position: Point,
    /// Input task size `I`, bits.
    pub task_bits: f64,
    /// CPU cycles needed per input bit.
    pub cycles_per_bit: f64,
    /// Output bits produced per processed input bit, in (0, 1].
    pub output_ratio: f64,
    /// Completion deadline, s. The solvers cover only the case where it
    /// equals the mission horizon; the field is validated, not branched on.
    pub latency: f64,
    /// Objective weight for this user's energy.
    pub weight: f64,
    /// Effective switched capacitance of the user CPU.
    pub switched_cap: f64,
}

/// Full description of one mission.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Number of time slots `N`.
    pub num_slots: usize,
    /// Mission horizon `T`, s.
    pub horizon: f64,
    /// Shared system bandwidth `B`, Hz.
    pub bandwidth: f64,
    /// Channel power gain at 1 m reference distance, linear.
    pub ref_gain: f64,
    /// Noise power at every receiver, W.
    pub noise_power: f64,
    /// UAV altitude `H`, m.
    pub altitude: f64,
    /// Maximum UAV speed, m/s.
    pub v_max: f64,
    /// Parasitic (cubic-in-speed) flight power coefficient.
    pub fly_coeff_cubic: f64,
    /// Induced (inverse-in-speed) flight power coefficient.
    pub fly_coeff_inverse: f64,
    /// Launch position, m.
    pub uav_start: Point,
    /// Landing position, m.
    pub uav_end: Point,
    /// Access-point position, m.
    pub ap_position: Point,
    /// Objective weight for the UAV's energy.
    pub weight_uav: f64,
    /// Effective switched capacitance of the UAV CPU.
    pub switched_cap_uav: f64,
    /// The ground users.
    pub ues: Vec<UserEquipment>,
}

impl Default for Scenario {
    /// Reference four-user desk-scale mission used by the test suite and as
    /// the fill-in defaults for scenario files.
    fn default() -> Self {
        let ue = |x: f64, y: f64| UserEquipment {
            position: Point::new(x, y),
            task_bits: 400e6,
            cycles_per_bit: 1000.0,
            output_ratio: 0.8,
            latency: 10.0,
            weight: 1.0,
            switched_cap: 1e-28,
        };
        Scenario {
            num_slots: 50,
            horizon: 10.0,
            bandwidth: 30e6,
            ref_gain: 1e-3,
            noise_power: 1e-9,
            altitude: 10.0,
            v_max: 10.0,
            fly_coeff_cubic: 0.00614,
            fly_coeff_inverse: 15.976,
            uav_start: Point::new(-5.0, -5.0),
            uav_end: Point::new(5.0, -5.0),
            ap_position: Point::new(0.0, 0.0),
            weight_uav: 0.2,
            switched_cap_uav: 1e-28,
            ues: vec![ue(5.0, 5.0), ue(-5.0, 5.0), ue(-5.0, -5.0), ue(5.0, -5.0)],
        }
    }
}

impl Scenario {
    /// Number of users `K`.
    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    /// Slot length `tau = T / N`, s.
    pub fn slot_len(&self) -> f64 {
        self.horizon / self.num_slots as f64
    }

    /// Sub-slot length `delta = T / (N K)`, s.
    pub fn subslot_len(&self) -> f64 {
        self.horizon / (self.num_slots as f64 * self.num_ues() as f64)
    }

    /// Checks every structural requirement on the fields; returns one
    /// message per violated requirement.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut issues = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                issues.push(msg);
            }
        };
        need(self.num_slots >= 4, format!("num_slots = {} but at least 4 slots are needed for the offload/process/download pipeline", self.num_slots));
        need(self.horizon > 0.0, format!("horizon = {} s must be positive", self.horizon));
        need(self.bandwidth > 0.0, format!("bandwidth = {} Hz must be positive", self.bandwidth));
        need(self.ref_gain > 0.0, format!("ref_gain = {} must be positive", self.ref_gain));
        need(self.noise_power > 0.0, format!("noise_power = {} W must be positive", self.noise_power));
        need(self.altitude > 0.0, format!("altitude = {} m must be positive", self.altitude));
        need(self.v_max > 0.0, format!("v_max = {} m/s must be positive", self.v_max));
        need(self.fly_coeff_cubic > 0.0 && self.fly_coeff_inverse > 0.0, "flight power coefficients must be positive".to_string());
        need(self.weight_uav > 0.0, format!("weight_uav = {} must be positive", self.weight_uav));
        need(self.switched_cap_uav > 0.0, "switched_cap_uav must be positive".to_string());
        need(!self.ues.is_empty(), "at least one user is required".to_string());
        if self.horizon > 0.0 && self.v_max > 0.0 {
            let chord = (self.uav_end - self.uav_start).norm();
            need(
                chord <= self.v_max * self.horizon * (1.0 + 1e-12),
                format!(
                    "endpoints are {chord} m apart but the UAV can cover at most {} m within the horizon",
                    self.v_max * self.horizon
                ),
            );
        }
        for (k, ue) in self.ues.iter().enumerate() {
            need(ue.task_bits > 0.0, format!("ue {k}: task_bits must be positive"));
            need(ue.cycles_per_bit > 0.0, format!("ue {k}: cycles_per_bit must be positive"));
            need(
                ue.output_ratio > 0.0 && ue.output_ratio <= 1.0,
                format!("ue {k}: output_ratio = {} must lie in (0, 1]", ue.output_ratio),
            );
            need(ue.weight > 0.0, format!("ue {k}: weight must be positive"));
            need(ue.switched_cap > 0.0, format!("ue {k}: switched_cap must be positive"));
            need(
                (ue.latency - self.horizon).abs() <= 1e-12 * self.horizon.abs().max(1.0),
                format!(
                    "ue {k}: latency = {} s must equal the horizon ({} s); staggered deadlines are out of scope",
                    ue.latency, self.horizon
                ),
            );
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Channel power gain between the UAV at `u` and the access point.
    pub fn channel_gain_ap(&self, u: Point) -> f64 {
        self.ref_gain / ((u - self.ap_position).norm_squared() + self.altitude * self.altitude)
    }

    /// Channel power gain between the UAV at `u` and user `k`.
    pub fn channel_gain_ue(&self, u: Point, k: usize) -> f64 {
        let ue = &self.ues[k];
        self.ref_gain / ((u - ue.position).norm_squared() + self.altitude * self.altitude)
    }

    /// Energy drawn by user `k` computing at frequency `f` for one slot.
    pub fn local_energy(&self, k: usize, f: f64) -> Result<f64, ModelError> {
        if f < 0.0 {
            return Err(ModelError::NegativeFrequency { f });
        }
        Ok(self.slot_len() * self.ues[k].switched_cap * f * f * f)
    }

    /// Input bits user `k` finishes locally in one slot at frequency `f`.
    pub fn local_bits(&self, k: usize, f: f64) -> f64 {
        self.slot_len() * f / self.ues[k].cycles_per_bit
    }

    /// Energy drawn by the UAV computing at frequency `f` for one sub-slot.
    pub fn uav_compute_energy(&self, f: f64) -> Result<f64, ModelError> {
        if f < 0.0 {
            return Err(ModelError::NegativeFrequency { f });
        }
        Ok(self.subslot_len() * self.switched_cap_uav * f * f * f)
    }

    /// Input bits of user `k` the UAV finishes in one sub-slot at `f`.
    pub fn uav_compute_bits(&self, k: usize, f: f64) -> f64 {
        self.subslot_len() * f / self.ues[k].cycles_per_bit
    }

    /// Energy needed to move `bits` through a channel with power gain
    /// `gain` using `bandwidth` Hz for one sub-slot.
    ///
    /// This is the inverted Shannon rate: the transmitter picks the power
    /// that makes the capacity match the requested bits exactly.
    pub fn transmit_energy(&self, bits: f64, bandwidth: f64, gain: f64) -> Result<f64, ModelError> {
        debug_assert!(bits >= 0.0 && bandwidth >= 0.0 && gain > 0.0);
        if bits <= 0.0 {
            return Ok(0.0);
        }
        if bandwidth <= 0.0 {
            return Err(ModelError::BitsWithoutBandwidth { bits });
        }
        let delta = self.subslot_len();
        let rate = bits / (delta * bandwidth); // bits/s/Hz
        Ok(delta * self.noise_power / gain * (rate.exp2() - 1.0))
    }

    /// Energy for user `k` to push `bits` up to the UAV at `u`.
    pub fn ue_offload_energy(&self, k: usize, bits: f64, bandwidth: f64, u: Point) -> Result<f64, ModelError> {
        self.transmit_energy(bits, bandwidth, self.channel_gain_ue(u, k))
    }

    /// Energy for the UAV at `u` to forward `bits` to the access point.
    pub fn uav_forward_energy(&self, bits: f64, bandwidth: f64, u: Point) -> Result<f64, ModelError> {
        self.transmit_energy(bits, bandwidth, self.channel_gain_ap(u))
    }

    /// Energy for the UAV at `u` to return `bits` down to user `k`.
    pub fn uav_download_energy(&self, k: usize, bits: f64, bandwidth: f64, u: Point) -> Result<f64, ModelError> {
        self.transmit_energy(bits, bandwidth, self.channel_gain_ue(u, k))
    }

    /// Propulsion energy for one slot at speed `v`, clamping the speed to
    /// [`SPEED_FLOOR`] first. Use [`Scenario::fly_energy_strict`] to reject
    /// sub-floor speeds instead of clamping.
    pub fn fly_energy(&self, v: f64) -> f64 {
        let v = v.max(SPEED_FLOOR);
        self.slot_len() * (self.fly_coeff_cubic * v * v * v + self.fly_coeff_inverse / v)
    }

    /// Propulsion energy for one slot at speed `v`; errors below the floor.
    pub fn fly_energy_strict(&self, v: f64) -> Result<f64, ModelError> {
        if v < SPEED_FLOOR {
            return Err(ModelError::SpeedBelowFloor {
                v,
                floor: SPEED_FLOOR,
            });
        }
        Ok(self.fly_energy(v))
    }

    /// Speed minimizing the per-slot propulsion power.
    pub fn most_efficient_speed(&self) -> f64 {
        (self.fly_coeff_inverse / (3.0 * self.fly_coeff_cubic)).powf(0.25)
    }
}

/// Energy totals for one slot, summed over users, unweighted Joules.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlotEnergy {
    pub ue_local: f64,
    pub ue_offload: f64,
    pub uav_compute: f64,
    pub uav_offload: f64,
    pub uav_download: f64,
    pub uav_fly: f64,
}

impl SlotEnergy {
    fn accumulate(&mut self, other: &SlotEnergy) {
        self.ue_local += other.ue_local;
        self.ue_offload += other.ue_offload;
        self.uav_compute += other.uav_compute;
        self.uav_offload += other.uav_offload;
        self.uav_download += other.uav_download;
        self.uav_fly += other.uav_fly;
    }

    pub fn uav_total(&self) -> f64 {
        self.uav_compute + self.uav_offload + self.uav_download + self.uav_fly
    }

    pub fn ue_total(&self) -> f64 {
        self.ue_local + self.ue_offload
    }
}

/// Complete energy accounting for one operating plan.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    /// Component energies per slot, summed over users, unweighted.
    pub per_slot: Vec<SlotEnergy>,
    /// Component energies summed over slots.
    pub totals: SlotEnergy,
    /// `sum_k w_k * (local + offload)` over the whole mission.
    pub weighted_ue: f64,
    /// `w_U * (compute + forward + download + fly)` over the whole mission.
    pub weighted_uav: f64,
    /// The objective: weighted sum energy consumption.
    pub wsec: f64,
}

/// Evaluates the weighted-sum-energy objective and its breakdown for a
/// complete plan. Fails only when the plan is physically inconsistent
/// (positive bits on a zero-width channel).
pub fn wsec(
    scn: &Scenario,
    schedule: &Schedule,
    bandwidth: &BandwidthPlan,
    trajectory: &Trajectory,
) -> Result<EnergyReport, ModelError> {
    let n = scn.num_slots;
    let k_count = scn.num_ues();
    schedule.assert_dims(k_count, n);
    bandwidth.assert_dims(k_count, n);
    assert_eq!(trajectory.waypoints.len(), n + 1, "trajectory length");

    let mut per_slot = vec![SlotEnergy::default(); n];
    let mut weighted_ue = 0.0;
    let mut weighted_uav = 0.0;
    for j in 0..n {
        let u = trajectory.waypoints[j + 1];
        let v = (trajectory.waypoints[j + 1] - trajectory.waypoints[j]).norm() / scn.slot_len();
        let fly = scn.fly_energy(v);
        let slot = &mut per_slot[j];
        slot.uav_fly = fly;
        weighted_uav += scn.weight_uav * fly;
        for k in 0..k_count {
            let w = scn.ues[k].weight;
            let local = scn.local_energy(k, schedule.f_ue[k][j])?;
            let offload = scn.ue_offload_energy(k, schedule.l_off_ue[k][j], bandwidth.b_off_ue[k][j], u)?;
            let compute = scn.uav_compute_energy(schedule.f_uav[k][j])?;
            let forward = scn.uav_forward_energy(schedule.l_fwd_uav[k][j], bandwidth.b_fwd_uav[k][j], u)?;
            let down = scn.uav_download_energy(k, schedule.l_down_uav[k][j], bandwidth.b_down_uav[k][j], u)?;
            slot.ue_local += local;
            slot.ue_offload += offload;
            slot.uav_compute += compute;
            slot.uav_offload += forward;
            slot.uav_download += down;
            weighted_ue += w * (local + offload);
            weighted_uav += scn.weight_uav * (compute + forward + down);
        }
    }
    let mut totals = SlotEnergy::default();
    for slot in &per_slot {
        totals.accumulate(slot);
    }
    Ok(EnergyReport {
        per_slot,
        totals,
        weighted_ue,
        weighted_uav,
        wsec: weighted_ue + weighted_uav,
    })
}
