//! Bandwidth stage: splits the band across the three bit-streams of every
//! (user, slot) pair, with the schedule and trajectory held fixed.
//!
//! Each sub-slot is independent. When only one stream carries bits it takes
//! the whole band; otherwise the split comes from per-stream closed forms in
//! a single multiplier `phi`, and `phi` itself from a bracketed bisection on
//! the band-sum residual. All `phi` work happens in log space so the huge
//! dynamic range of the bracket endpoints never overflows.

use crate::error::NumericsError;
use crate::model::{BandwidthPlan, Scenario, Schedule, Trajectory};
use crate::numerics::{bisect, lambert_w0_exp, BisectionSpec, Monotone};
use crate::scheduler::SlotGains;
use rayon::prelude::*;
use std::f64::consts::LN_2;

/// Loads below one bit count as silent when classifying a sub-slot; the
/// closed forms are continuous at zero load, so nothing jumps.
pub const ACTIVE_BITS: f64 = 1.0;

/// Residual tolerance on the per-sub-slot band sum, in Hz.
pub const BAND_SUM_TOL_HZ: f64 = 1e-3;

/// How many times a missed bracket is widened (by x10 each side) before the
/// nearest endpoint is accepted.
const MAX_BRACKET_WIDENINGS: u32 = 6;

/// Multipliers of the per-sub-slot band-sum constraints, in both the raw
/// (`nu`) and rescaled (`phi = nu / (delta^2 N0 ln 2)`) forms. Both are zero
/// on sub-slots where fewer than two streams are active.
#[derive(Debug, Clone)]
pub struct BandwidthDuals {
    pub nu: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

impl BandwidthDuals {
    pub fn zeros(num_ues: usize, num_slots: usize) -> Self {
        BandwidthDuals {
            nu: vec![vec![0.0; num_slots]; num_ues],
            phi: vec![vec![0.0; num_slots]; num_ues],
        }
    }
}

/// One transmitting stream of a sub-slot: bits to move, channel power gain,
/// and the energy weight of whoever transmits.
#[derive(Debug, Clone, Copy)]
struct Stream {
    bits: f64,
    gain: f64,
    weight: f64,
}

/// Band that makes the stream's marginal energy saving equal the multiplier:
/// `B* = (ln2/2) l / (delta W0[(ln2/2) sqrt(phi h l / w)])`, evaluated with
/// `ln phi` so the argument never overflows.
fn stream_band(delta: f64, s: Stream, ln_phi: f64) -> f64 {
    if s.bits <= 0.0 {
        return 0.0;
    }
    let ln_arg = (0.5 * LN_2).ln() + 0.5 * (ln_phi + s.gain.ln() + s.bits.ln() - s.weight.ln());
    0.5 * LN_2 * s.bits / (delta * lambert_w0_exp(ln_arg))
}

/// `ln phi` at which the stream's closed form returns exactly `band`; these
/// are the bracket endpoints of the band-sum bisection.
fn ln_phi_at_band(delta: f64, s: Stream, band: f64) -> f64 {
    debug_assert!(s.bits > 0.0 && band > 0.0);
    (s.weight * s.bits).ln() - (delta * delta * band * band * s.gain).ln()
        + s.bits * LN_2 / (delta * band)
}

fn band_sum(delta: f64, streams: &[Stream], ln_phi: f64) -> f64 {
    streams.iter().map(|&s| stream_band(delta, s, ln_phi)).sum()
}

/// Bisects `ln phi` until the active streams' closed forms sum to `total`.
/// The bracket endpoint set evaluates every stream at an equal share, which
/// encloses the root in exact arithmetic; float ties are absorbed by
/// widening the interval and logging.
fn solve_ln_phi(delta: f64, streams: &[Stream], total: f64) -> f64 {
    debug_assert!(streams.len() >= 2);
    let share = total / streams.len() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in streams {
        let p = ln_phi_at_band(delta, s, share);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    for attempt in 0..=MAX_BRACKET_WIDENINGS {
        let spec = BisectionSpec {
            lo,
            hi,
            x_tol: 1e-13,
            y_tol: BAND_SUM_TOL_HZ,
            max_iter: 200,
            monotone: Monotone::Decreasing,
        };
        let res = bisect(&spec, total, |p| band_sum(delta, streams, p));
        if !res.bracket_miss {
            return res.root;
        }
        if attempt == MAX_BRACKET_WIDENINGS {
            log::warn!(
                "band split bracket still misses after {attempt} widenings \
                 (residual {:.3e} Hz); keeping nearest endpoint",
                res.residual
            );
            return res.root;
        }
        log::warn!(
            "band split bracket miss (residual {:.3e} Hz); widening x10",
            res.residual
        );
        lo -= std::f64::consts::LN_10;
        hi += std::f64::consts::LN_10;
    }
    unreachable!()
}

/// The three streams of sub-slot `(k, j)` under the stated threshold, in
/// fixed order: UE offload, relay forward, result download.
fn slot_streams(
    scn: &Scenario,
    z: &Schedule,
    gains: &SlotGains,
    k: usize,
    j: usize,
) -> [Option<Stream>; 3] {
    let pick = |bits: f64, gain: f64, weight: f64| {
        (bits >= ACTIVE_BITS).then_some(Stream { bits, gain, weight })
    };
    [
        pick(z.l_off_ue[k][j], gains.ue[k][j], scn.ues[k].weight),
        pick(z.l_fwd_uav[k][j], gains.ap[j], scn.weight_uav),
        pick(z.l_down_uav[k][j], gains.ue[k][j], scn.weight_uav),
    ]
}

/// Evaluates the closed-form splits for the whole plan at externally chosen
/// multipliers `phi[k][j]`. Streams with zero bits get zero band, and the
/// boundary sub-slots keep their structural zeros. Errors when a positive
/// load meets a non-positive multiplier, where the closed form is undefined.
pub fn closed_form_bandwidth(
    scn: &Scenario,
    u: &Trajectory,
    z: &Schedule,
    phi: &[Vec<f64>],
) -> Result<BandwidthPlan, NumericsError> {
    let n = scn.num_slots;
    let ues = scn.num_ues();
    z.assert_dims(ues, n);
    assert_eq!(phi.len(), ues, "phi rows");
    let gains = SlotGains::new(scn, u);
    let delta = scn.subslot_len();
    let mut plan = BandwidthPlan::zeros(ues, n);
    for k in 0..ues {
        assert_eq!(phi[k].len(), n, "phi cols");
        for j in 0..n {
            let p = phi[k][j];
            let streams = [
                (z.l_off_ue[k][j], gains.ue[k][j], scn.ues[k].weight, j + 2 < n),
                (z.l_fwd_uav[k][j], gains.ap[j], scn.weight_uav, j >= 1 && j + 1 < n),
                (z.l_down_uav[k][j], gains.ue[k][j], scn.weight_uav, j >= 2),
            ];
            let mut out = [0.0; 3];
            for (slot, &(bits, gain, weight, interior)) in streams.iter().enumerate() {
                if bits <= 0.0 || !interior {
                    continue;
                }
                if p <= 0.0 {
                    return Err(NumericsError::LambertDomain { x: p });
                }
                out[slot] = stream_band(delta, Stream { bits, gain, weight }, p.ln());
            }
            plan.b_off_ue[k][j] = out[0];
            plan.b_fwd_uav[k][j] = out[1];
            plan.b_down_uav[k][j] = out[2];
        }
    }
    Ok(plan)
}

/// Multiplier at which the active streams of sub-slot `(k, n)` share the
/// band exactly. At least two streams must carry bits; exclusive sub-slots
/// have no multiplier to solve for.
pub fn solve_phi(scn: &Scenario, u: &Trajectory, z: &Schedule, k: usize, n: usize) -> f64 {
    let gains = SlotGains::new(scn, u);
    let streams: Vec<Stream> = slot_streams(scn, z, &gains, k, n)
        .into_iter()
        .flatten()
        .collect();
    assert!(
        streams.len() >= 2,
        "sub-slot ({k}, {n}) is exclusive; nothing to solve"
    );
    solve_ln_phi(scn.subslot_len(), &streams, scn.bandwidth).exp()
}

/// Splits the band for every sub-slot of the plan: idle sub-slots get all
/// zeros (except the forced full-band ends), single-stream sub-slots get the
/// whole band, and contested sub-slots get the closed-form split at the
/// bisected multiplier.
pub fn solve_p12(scn: &Scenario, u: &Trajectory, z: &Schedule) -> (BandwidthPlan, BandwidthDuals) {
    let n = scn.num_slots;
    let ues = scn.num_ues();
    z.assert_dims(ues, n);
    let gains = SlotGains::new(scn, u);
    let delta = scn.subslot_len();
    let nu_scale = delta * delta * scn.noise_power * LN_2;

    let rows: Vec<(Vec<[f64; 3]>, Vec<f64>)> = (0..ues)
        .into_par_iter()
        .map(|k| {
            let mut bands = vec![[0.0; 3]; n];
            let mut phis = vec![0.0; n];
            for j in 0..n {
                let slots = slot_streams(scn, z, &gains, k, j);
                let active = slots.iter().flatten().count();
                match active {
                    0 => {
                        // Ends always hold the whole band, loaded or not.
                        if j == 0 {
                            bands[j][0] = scn.bandwidth;
                        } else if j == n - 1 {
                            bands[j][2] = scn.bandwidth;
                        }
                    }
                    1 => {
                        let pos = slots.iter().position(|s| s.is_some()).unwrap();
                        bands[j][pos] = scn.bandwidth;
                    }
                    _ => {
                        let streams: Vec<Stream> = slots.iter().copied().flatten().collect();
                        let ln_phi = solve_ln_phi(delta, &streams, scn.bandwidth);
                        for (slot, stream) in slots.iter().enumerate() {
                            if let Some(s) = stream {
                                bands[j][slot] = stream_band(delta, *s, ln_phi);
                            }
                        }
                        phis[j] = ln_phi.exp();
                    }
                }
            }
            (bands, phis)
        })
        .collect();

    let mut plan = BandwidthPlan::zeros(ues, n);
    let mut duals = BandwidthDuals::zeros(ues, n);
    for (k, (bands, phis)) in rows.into_iter().enumerate() {
        for j in 0..n {
            plan.b_off_ue[k][j] = bands[j][0];
            plan.b_fwd_uav[k][j] = bands[j][1];
            plan.b_down_uav[k][j] = bands[j][2];
            duals.phi[k][j] = phis[j];
            duals.nu[k][j] = phis[j] * nu_scale;
        }
    }
    (plan, duals)
}
