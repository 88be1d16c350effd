//! Result emission: versioned CSV traces and an SVG trajectory plot.
//!
//! Every file starts with a `# uavmec <name> v1` schema line so downstream
//! scripts can detect format drift. Numeric fields are written with the
//! shortest decimal representation that round-trips the exact binary value,
//! so identical runs produce byte-identical files.
//!
//! Run directory layout and columns:
//!
//! * `schedule.csv`: `ue,slot,f_ue_hz,l_off_bits,f_uav_hz,l_fwd_bits,l_down_bits`
//! * `bandwidth.csv`: `ue,slot,b_off_hz,b_fwd_hz,b_down_hz`
//! * `trajectory.csv`: `waypoint,x_m,y_m,speed_mps` (speed of the segment
//!   ending at the waypoint; zero for the first)
//! * `convergence.csv`: `pass,wsec_j` (one row per outer pass)
//! * `summary.csv`: `param,value,scheme,wsec_j,outer_passes,converged`
//!   (`param` and `value` are empty when no sweep is active)
//! * `trajectory.svg`: UAV path polyline with waypoint dots, start/end
//!   markers, and UE/AP markers, affinely mapped into a 640 x 480 canvas

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::model::{Point, Scenario};
use crate::orchestrator::{SolveResult, SweepParam, SweepRow};

/// Shortest decimal form that parses back to the exact same f64.
fn dec(x: f64) -> String {
    format!("{x}")
}

pub fn schedule_csv(result: &SolveResult) -> String {
    let s = &result.schedule;
    let mut out = String::from("# uavmec schedule v1\n");
    out.push_str("ue,slot,f_ue_hz,l_off_bits,f_uav_hz,l_fwd_bits,l_down_bits\n");
    for (k, rows) in s.f_ue.iter().enumerate() {
        for j in 0..rows.len() {
            let _ = writeln!(
                out,
                "{k},{j},{},{},{},{},{}",
                dec(s.f_ue[k][j]),
                dec(s.l_off_ue[k][j]),
                dec(s.f_uav[k][j]),
                dec(s.l_fwd_uav[k][j]),
                dec(s.l_down_uav[k][j]),
            );
        }
    }
    out
}

pub fn bandwidth_csv(result: &SolveResult) -> String {
    let b = &result.bandwidth;
    let mut out = String::from("# uavmec bandwidth v1\n");
    out.push_str("ue,slot,b_off_hz,b_fwd_hz,b_down_hz\n");
    for (k, rows) in b.b_off_ue.iter().enumerate() {
        for j in 0..rows.len() {
            let _ = writeln!(
                out,
                "{k},{j},{},{},{}",
                dec(b.b_off_ue[k][j]),
                dec(b.b_fwd_uav[k][j]),
                dec(b.b_down_uav[k][j]),
            );
        }
    }
    out
}

pub fn trajectory_csv(scn: &Scenario, result: &SolveResult) -> String {
    let u = &result.trajectory;
    let speeds = u.speeds(scn);
    let mut out = String::from("# uavmec trajectory v1\n");
    out.push_str("waypoint,x_m,y_m,speed_mps\n");
    for (i, p) in u.waypoints.iter().enumerate() {
        let speed = if i == 0 { 0.0 } else { speeds[i - 1] };
        let _ = writeln!(out, "{i},{},{},{}", dec(p.x), dec(p.y), dec(speed));
    }
    out
}

pub fn convergence_csv(result: &SolveResult) -> String {
    let mut out = String::from("# uavmec convergence v1\n");
    out.push_str("pass,wsec_j\n");
    for (i, e) in result.wsec_trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, dec(*e));
    }
    out
}

/// Summary table: one row per (grid value, scheme). Pass `param: None` for a
/// plain multi-scheme run; the first two fields are then left empty.
pub fn summary_csv(param: Option<SweepParam>, rows: &[SweepRow]) -> String {
    let mut out = String::from("# uavmec summary v1\n");
    out.push_str("param,value,scheme,wsec_j,outer_passes,converged\n");
    for row in rows {
        for cell in &row.cells {
            let (p, v) = match param {
                Some(param) => (param.key(), dec(row.value)),
                None => ("", String::new()),
            };
            let _ = writeln!(
                out,
                "{p},{v},{},{},{},{}",
                cell.scheme.name(),
                dec(cell.wsec),
                cell.outer_passes,
                cell.converged,
            );
        }
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

/// Affine world-to-canvas frame: uniform scale, centered, y flipped.
struct Frame {
    center: Point,
    scale: f64,
}

impl Frame {
    fn fit(points: &[Point]) -> Frame {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let span = ((hi.x - lo.x).max(1e-9), (hi.y - lo.y).max(1e-9));
        let scale = ((SVG_W - 2.0 * SVG_MARGIN) / span.0).min((SVG_H - 2.0 * SVG_MARGIN) / span.1);
        Frame {
            center: (lo + hi) / 2.0,
            scale,
        }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (
            SVG_W / 2.0 + (p.x - self.center.x) * self.scale,
            SVG_H / 2.0 - (p.y - self.center.y) * self.scale,
        )
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

pub fn trajectory_svg(scn: &Scenario, result: &SolveResult) -> String {
    let path = &result.trajectory.waypoints;
    let mut world: Vec<Point> = path.clone();
    world.push(scn.ap_position);
    world.extend(scn.ues.iter().map(|ue| ue.position));
    let frame = Frame::fit(&world);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let pts: Vec<String> = path
        .iter()
        .map(|&p| {
            let (x, y) = frame.map(p);
            format!("{},{}", px(x), px(y))
        })
        .collect();
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
        pts.join(" ")
    );
    for p in &pts {
        let (x, y) = p.split_once(',').expect("the joined form above");
        let _ = writeln!(out, "<circle cx=\"{x}\" cy=\"{y}\" r=\"2\" fill=\"#1f77b4\"/>");
    }

    let (sx, sy) = frame.map(*path.first().expect("a trajectory has waypoints"));
    let (ex, ey) = frame.map(*path.last().expect("a trajectory has waypoints"));
    let _ = writeln!(
        out,
        "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\"/>\
         <text x=\"{}\" y=\"{}\">start</text>",
        px(sx),
        px(sy),
        px(sx + 8.0),
        px(sy - 8.0),
    );
    let _ = writeln!(
        out,
        "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\
         <text x=\"{}\" y=\"{}\">end</text>",
        px(ex),
        px(ey),
        px(ex + 8.0),
        px(ey - 8.0),
    );

    let (ax, ay) = frame.map(scn.ap_position);
    let _ = writeln!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"#9467bd\"/>\
         <text x=\"{}\" y=\"{}\">AP</text>",
        px(ax - 5.0),
        px(ay - 5.0),
        px(ax + 8.0),
        px(ay - 8.0),
    );
    for (k, ue) in scn.ues.iter().enumerate() {
        let (x, y) = frame.map(ue.position);
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"#ff7f0e\"/>\
             <text x=\"{}\" y=\"{}\">UE{k}</text>",
            px(x),
            px(y),
            px(x + 8.0),
            px(y - 8.0),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the four trace CSVs plus the plot for one solved scheme.
pub fn write_run_directory(dir: &Path, scn: &Scenario, result: &SolveResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("schedule.csv"), schedule_csv(result))?;
    fs::write(dir.join("bandwidth.csv"), bandwidth_csv(result))?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(scn, result))?;
    fs::write(dir.join("convergence.csv"), convergence_csv(result))?;
    fs::write(dir.join("trajectory.svg"), trajectory_svg(scn, result))?;
    Ok(())
}

/// Writes the summary table for a multi-scheme or sweep run.
pub fn write_summary(dir: &Path, param: Option<SweepParam>, rows: &[SweepRow]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.csv"), summary_csv(param, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{baseline_local_computing, sweep, SolveConfig, SweepParam};

    #[test]
    fn csv_values_round_trip_exactly() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 2.56e5, 1e-12, f64::MIN_POSITIVE] {
            let back: f64 = dec(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "lossy form for {x}");
        }
    }

    #[test]
    fn run_directory_holds_exactly_the_five_artifacts() {
        let scn = Scenario::default();
        let result = baseline_local_computing(&scn);
        let dir = tempfile::tempdir().unwrap();
        write_run_directory(dir.path(), &scn, &result).unwrap();

        let mut names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(
            names,
            [
                "bandwidth.csv",
                "convergence.csv",
                "schedule.csv",
                "trajectory.csv",
                "trajectory.svg",
            ]
        );

        let n = scn.num_slots;
        let k = scn.ues.len();
        let sched = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
        assert_eq!(sched.lines().count(), 2 + k * n);
        assert!(sched.starts_with("# uavmec schedule v1\nue,slot,"));
        let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(traj.lines().count(), 2 + n + 1);

        // Re-emission is byte-identical.
        assert_eq!(sched, schedule_csv(&result));
        assert_eq!(
            fs::read_to_string(dir.path().join("trajectory.svg")).unwrap(),
            trajectory_svg(&scn, &result)
        );
    }

    #[test]
    fn summary_lists_every_scheme_at_every_grid_point() {
        let scn = Scenario::default();
        let cfg = SolveConfig::default();
        let rows = sweep(&scn, SweepParam::UavWeight, &[0.2], &cfg);
        let text = summary_csv(Some(SweepParam::UavWeight), &rows);
        assert!(text.starts_with("# uavmec summary v1\nparam,value,scheme,"));
        assert_eq!(text.lines().count(), 2 + 5);
        assert!(text.contains("w_U,0.2,proposed,"));
        assert!(text.contains("w_U,0.2,local,"));

        let plain = summary_csv(None, &rows);
        assert!(plain.contains(",,proposed,"));
    }

    #[test]
    fn the_svg_frame_is_affine_and_the_markers_land_on_it() {
        let frame = Frame::fit(&[Point::new(-5.0, -5.0), Point::new(5.0, 5.0)]);
        let (x0, y0) = frame.map(Point::new(0.0, 0.0));
        assert!((x0 - SVG_W / 2.0).abs() < 1e-9);
        assert!((y0 - SVG_H / 2.0).abs() < 1e-9);
        // Equal world steps move equal pixel steps, with y flipped.
        let (x1, y1) = frame.map(Point::new(1.0, 1.0));
        let (x2, y2) = frame.map(Point::new(2.0, 2.0));
        assert!((x2 - x1 - (x1 - x0)).abs() < 1e-9);
        assert!((y1 - y0 + (x1 - x0)).abs() < 1e-9);

        let scn = Scenario::default();
        let result = baseline_local_computing(&scn);
        let svg = trajectory_svg(&scn, &result);
        assert!(svg.contains("<polyline points=\""));
        assert!(svg.contains(">AP</text>"));
        for k in 0..scn.ues.len() {
            assert!(svg.contains(&format!(">UE{k}</text>")));
        }
        // The launch marker sits exactly on the mapped first waypoint.
        let mut world: Vec<Point> = result.trajectory.waypoints.clone();
        world.push(scn.ap_position);
        world.extend(scn.ues.iter().map(|ue| ue.position));
        let frame = Frame::fit(&world);
        let (sx, sy) = frame.map(result.trajectory.waypoints[0]);
        assert!(svg.contains(&format!("cx=\"{}\" cy=\"{}\" r=\"5\"", px(sx), px(sy))));
    }
}
