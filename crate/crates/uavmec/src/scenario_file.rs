//! Scenario ingestion: a small TOML dialect with unit-suffixed keys, plus
//! the sweep grammar used on the command line.
//!
//! Every key is optional; omitted values fall back to the reference mission
//! ([`Scenario::default`]). Decibel quantities are converted to linear at
//! load, megabit and megahertz keys to bits and hertz, and the assembled
//! scenario is validated before it is handed out.

use std::path::Path;

use serde::Deserialize;

use crate::model::{Point, Scenario};
use crate::orchestrator::SweepParam;

/// Hard cap on sweep grids from either source; larger requests are almost
/// certainly typos and would grind for hours.
pub const MAX_GRID_POINTS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid scenario in {path}:\n  {}", issues.join("\n  "))]
    Invalid { path: String, issues: Vec<String> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    num_slots: Option<usize>,
    horizon_s: Option<f64>,
    bandwidth_mhz: Option<f64>,
    ref_gain_db: Option<f64>,
    noise_dbm: Option<f64>,
    altitude_m: Option<f64>,
    v_max_mps: Option<f64>,
    fly_coeff_cubic: Option<f64>,
    fly_coeff_inverse: Option<f64>,
    uav_start_m: Option<[f64; 2]>,
    uav_end_m: Option<[f64; 2]>,
    ap_position_m: Option<[f64; 2]>,
    weight_uav: Option<f64>,
    switched_cap_uav: Option<f64>,
    #[serde(default)]
    ues: Vec<UeDoc>,
    sweep: Option<SweepDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UeDoc {
    position_m: Option<[f64; 2]>,
    task_mbits: Option<f64>,
    cycles_per_bit: Option<f64>,
    output_ratio: Option<f64>,
    latency_s: Option<f64>,
    weight: Option<f64>,
    switched_cap: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    parameter: String,
    grid: Vec<f64>,
}

/// A parsed scenario file: the mission plus an optional embedded sweep.
#[derive(Clone, Debug)]
pub struct ScenarioDocument {
    pub scenario: Scenario,
    pub sweep: Option<SweepRequest>,
}

/// Sweep request: which knob to move and the values to visit.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRequest {
    pub param: SweepParam,
    pub grid: Vec<f64>,
}

/// Loads just the mission; any sweep block is checked and dropped.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioFileError> {
    load_document(path).map(|doc| doc.scenario)
}

/// Loads and validates a full scenario document.
pub fn load_document(path: impl AsRef<Path>) -> Result<ScenarioDocument, ScenarioFileError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_document(&text, &shown)
}

/// Parses document text; `shown` names the source in error messages.
pub fn parse_document(text: &str, shown: &str) -> Result<ScenarioDocument, ScenarioFileError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|source| ScenarioFileError::Parse {
        path: shown.to_string(),
        source: Box::new(source),
    })?;
    build(doc, shown)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn build(doc: ScenarioDoc, shown: &str) -> Result<ScenarioDocument, ScenarioFileError> {
    let mut scn = Scenario::default();
    let template = scn.ues[0].clone();
    if let Some(v) = doc.num_slots {
        scn.num_slots = v;
    }
    if let Some(v) = doc.horizon_s {
        scn.horizon = v;
    }
    if let Some(v) = doc.bandwidth_mhz {
        scn.bandwidth = v * 1e6;
    }
    if let Some(v) = doc.ref_gain_db {
        scn.ref_gain = db_to_linear(v);
    }
    if let Some(v) = doc.noise_dbm {
        scn.noise_power = dbm_to_watts(v);
    }
    if let Some(v) = doc.altitude_m {
        scn.altitude = v;
    }
    if let Some(v) = doc.v_max_mps {
        scn.v_max = v;
    }
    if let Some(v) = doc.fly_coeff_cubic {
        scn.fly_coeff_cubic = v;
    }
    if let Some(v) = doc.fly_coeff_inverse {
        scn.fly_coeff_inverse = v;
    }
    if let Some([x, y]) = doc.uav_start_m {
        scn.uav_start = Point::new(x, y);
    }
    if let Some([x, y]) = doc.uav_end_m {
        scn.uav_end = Point::new(x, y);
    }
    if let Some([x, y]) = doc.ap_position_m {
        scn.ap_position = Point::new(x, y);
    }
    if let Some(v) = doc.weight_uav {
        scn.weight_uav = v;
    }
    if let Some(v) = doc.switched_cap_uav {
        scn.switched_cap_uav = v;
    }

    // Latency budgets default to the (possibly overridden) horizon; an
    // explicit differing value is caught by validation below.
    if doc.ues.is_empty() {
        for ue in &mut scn.ues {
            ue.latency = scn.horizon;
        }
    } else {
        scn.ues = doc
            .ues
            .into_iter()
            .map(|u| {
                let mut ue = template.clone();
                if let Some([x, y]) = u.position_m {
                    ue.position = Point::new(x, y);
                }
                if let Some(v) = u.task_mbits {
                    ue.task_bits = v * 1e6;
                }
                if let Some(v) = u.cycles_per_bit {
                    ue.cycles_per_bit = v;
                }
                if let Some(v) = u.output_ratio {
                    ue.output_ratio = v;
                }
                ue.latency = u.latency_s.unwrap_or(scn.horizon);
                if let Some(v) = u.weight {
                    ue.weight = v;
                }
                if let Some(v) = u.switched_cap {
                    ue.switched_cap = v;
                }
                ue
            })
            .collect();
    }

    let mut issues = match scn.validate() {
        Ok(()) => Vec::new(),
        Err(list) => list,
    };

    let sweep = match doc.sweep {
        None => None,
        Some(block) => match SweepParam::from_key(&block.parameter) {
            None => {
                issues.push(format!(
                    "sweep: unknown parameter `{}` (use I, T, O or w_U)",
                    block.parameter
                ));
                None
            }
            Some(param) => {
                if block.grid.is_empty() {
                    issues.push("sweep: the grid is empty".to_string());
                } else if block.grid.len() > MAX_GRID_POINTS {
                    issues.push(format!(
                        "sweep: {} grid points exceed the cap of {MAX_GRID_POINTS}",
                        block.grid.len()
                    ));
                } else if block.grid.iter().any(|v| !v.is_finite()) {
                    issues.push("sweep: every grid value must be finite".to_string());
                }
                Some(SweepRequest {
                    param,
                    grid: block.grid,
                })
            }
        },
    };

    if issues.is_empty() {
        Ok(ScenarioDocument {
            scenario: scn,
            sweep,
        })
    } else {
        Err(ScenarioFileError::Invalid {
            path: shown.to_string(),
            issues,
        })
    }
}

/// Sweep request in flag form: `PARAM=lo..hi[:step]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    /// Omitted step means five evenly spaced points.
    pub step: Option<f64>,
}

impl SweepSpec {
    pub fn parse(s: &str) -> Result<SweepSpec, String> {
        let (key, rest) = s
            .split_once('=')
            .ok_or_else(|| "expected PARAM=lo..hi[:step]".to_string())?;
        let param = SweepParam::from_key(key.trim())
            .ok_or_else(|| format!("unknown sweep parameter `{}` (use I, T, O or w_U)", key.trim()))?;
        let (range, step_text) = match rest.split_once(':') {
            Some((r, st)) => (r, Some(st)),
            None => (rest, None),
        };
        let (lo_text, hi_text) = range
            .split_once("..")
            .ok_or_else(|| "the range must be written lo..hi".to_string())?;
        let lo: f64 = lo_text
            .trim()
            .parse()
            .map_err(|e| format!("bad lower bound `{}`: {e}", lo_text.trim()))?;
        let hi: f64 = hi_text
            .trim()
            .parse()
            .map_err(|e| format!("bad upper bound `{}`: {e}", hi_text.trim()))?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err("the range bounds must be finite".to_string());
        }
        if hi < lo {
            return Err(format!("the range is empty: {lo} > {hi}"));
        }
        let step = match step_text {
            None => None,
            Some(st) => {
                let v: f64 = st
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad step `{}`: {e}", st.trim()))?;
                if !v.is_finite() || v <= 0.0 {
                    return Err(format!("the step must be positive and finite, got {v}"));
                }
                if (hi - lo) / v + 1.0 > (MAX_GRID_POINTS + 1) as f64 {
                    return Err(format!("the grid exceeds the cap of {MAX_GRID_POINTS} points"));
                }
                Some(v)
            }
        };
        Ok(SweepSpec { param, lo, hi, step })
    }

    /// Inclusive grid; the upper bound is hit only when the span is a whole
    /// number of steps. A degenerate range yields the single value.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        if span <= 0.0 {
            return vec![self.lo];
        }
        let step = self.step.unwrap_or(span / 4.0);
        let count = ((span / step + 1e-9).floor() as usize + 1).min(MAX_GRID_POINTS + 1);
        (0..count).map(|i| self.lo + i as f64 * step).collect()
    }
}
