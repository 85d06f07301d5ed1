//! CSV log, flat key-value summary and SVG plots for one rollout.
//!
//! Every emitter is a pure function of the log, so the same rollout always
//! produces the same bytes. Positions are in the terrain frame.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use crate::control::ControllerMode;
use crate::metrics::{cost_of_transport, rolling_maxima, MetricsError, SimulationLog};
use crate::scenario::{disturbance_at, Scenario};
use crate::spatial::{total_mass, RobotModel};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("empty log")]
    EmptyLog,
    #[error("i/o failure on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("plot {name}: {message}")]
    Plot { name: String, message: String },
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn csv_header(limbs: usize, joints: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 0..limbs {
        for axis in ["fx", "fy", "fz"] {
            h.push(format!("{axis}_{i}"));
        }
    }
    h.extend((0..joints).map(|j| format!("tau_{j}")));
    for c in ["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"] {
        h.push(c.to_string());
    }
    for c in ["tsm", "giam", "power", "detach_event", "control_fault"] {
        h.push(c.to_string());
    }
    h
}

/// Shortest round-trip text, scientific outside `[1e-4, 1e6)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Undefined metrics and absent events are empty cells; several detachments
/// in one step are joined with `;`.
pub fn write_csv<W: io::Write>(log: &SimulationLog, writer: W) -> Result<(), OutputError> {
    let first = log.samples.first().ok_or(OutputError::EmptyLog)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(first.foot_wrenches.len(), first.torque.len()))?;
    let mut row = Vec::new();
    for s in &log.samples {
        row.clear();
        row.push(num(s.t));
        for f in &s.foot_wrenches {
            row.extend(f.force.iter().map(|v| num(*v)));
        }
        row.extend(s.torque.iter().map(|v| num(*v)));
        let p = s.base_pose.position;
        let q = s.base_pose.orientation.quaternion();
        row.extend([p.x, p.y, p.z, q.w, q.i, q.j, q.k].into_iter().map(num));
        row.push(cell(s.tsm));
        row.push(cell(s.giam.map(|g| g.value)));
        row.push(num(s.power));
        row.push(s.detach_events.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"));
        row.push(s.control_fault.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| OutputError::Csv(e.into()))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub mode: ControllerMode,
    pub samples: usize,
    pub end_time: f64,
    pub completed: bool,
    pub detach_events: usize,
    pub control_faults: usize,
    pub cot: Result<f64, MetricsError>,
    pub peak_force: f64,
    pub peak_torque: f64,
    pub min_tsm: Option<f64>,
    pub min_giam: Option<f64>,
}

fn min_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
}

/// COT mass is the robot plus the time-averaged added payload.
pub fn summarize(log: &SimulationLog, scenario: &Scenario, model: &RobotModel) -> Result<Summary, OutputError> {
    let peaks = rolling_maxima(log).map_err(|_| OutputError::EmptyLog)?;
    let payload = log.samples.iter().map(|s| disturbance_at(scenario, s.t).added_mass).sum::<f64>() / log.len() as f64;
    let normal = scenario.contact.normal();
    let end_time = log.samples.last().map_or(0.0, |s| s.t + log.dt);
    Ok(Summary {
        scenario: scenario.name.clone(),
        mode: scenario.controller.mode,
        samples: log.len(),
        end_time,
        completed: end_time + 0.5 * log.dt >= scenario.duration,
        detach_events: log.detach_events().count(),
        control_faults: log.fault_count(),
        cot: cost_of_transport(log, total_mass(model) + payload, scenario.gravity.magnitude, &normal),
        peak_force: peaks.peak_force,
        peak_torque: peaks.peak_torque,
        min_tsm: min_of(log.samples.iter().filter_map(|s| s.tsm)),
        min_giam: min_of(log.samples.iter().filter_map(|s| s.giam.map(|g| g.value))),
    })
}

fn mode_name(mode: ControllerMode) -> &'static str {
    match mode {
        ControllerMode::Baseline => "baseline",
        ControllerMode::BaseAdmittance => "base_admittance",
        ControllerMode::EndEffectorAdmittance => "end_effector_admittance",
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("undefined".to_string(), |v| format!("{v:.6e}"))
}

impl Summary {
    pub fn cot_text(&self) -> String {
        match &self.cot {
            Ok(v) => format!("{v:.6e}"),
            Err(e) => format!("undefined ({e})"),
        }
    }

    /// One `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "mode = {}", mode_name(self.mode));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "end_time = {:.6}", self.end_time);
        let _ = writeln!(s, "completed = {}", self.completed);
        let _ = writeln!(s, "detach_events = {}", self.detach_events);
        let _ = writeln!(s, "control_faults = {}", self.control_faults);
        let _ = writeln!(s, "average_cot = {}", self.cot_text());
        let _ = writeln!(s, "peak_reaction_force = {:.6e}", self.peak_force);
        let _ = writeln!(s, "peak_joint_torque = {:.6e}", self.peak_torque);
        let _ = writeln!(s, "min_tsm = {}", opt(self.min_tsm));
        let _ = writeln!(s, "min_giam = {}", opt(self.min_giam));
        s
    }
}

/// Side-by-side report of a baseline and an admittance rollout.
pub fn comparison_text(baseline: &Summary, proposed: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario = {}", baseline.scenario);
    for (tag, m) in [("baseline", baseline), ("proposed", proposed)] {
        let _ = writeln!(s, "{tag}.mode = {}", mode_name(m.mode));
        let _ = writeln!(s, "{tag}.completed = {}", m.completed);
        let _ = writeln!(s, "{tag}.detach_events = {}", m.detach_events);
        let _ = writeln!(s, "{tag}.average_cot = {}", m.cot_text());
        let _ = writeln!(s, "{tag}.peak_reaction_force = {:.6e}", m.peak_force);
        let _ = writeln!(s, "{tag}.peak_joint_torque = {:.6e}", m.peak_torque);
    }
    if let (Ok(b), Ok(p)) = (&baseline.cot, &proposed.cot) {
        let _ = writeln!(s, "proposed_cot_lower = {}", p < b);
    }
    s
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    color: RGBColor,
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for (px, py) in series.iter().flat_map(|s| s.points.iter()) {
        x = (x.0.min(*px), x.1.max(*px));
        y = (y.0.min(*py), y.1.max(*py));
    }
    let pad = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let m = 0.05 * (hi - lo);
            (lo - m, hi + m)
        }
    };
    (pad(x), pad(y))
}

fn line_chart(name: &str, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String, OutputError> {
    let fail = |e: &dyn std::fmt::Display| OutputError::Plot {
        name: name.to_string(),
        message: e.to_string(),
    };
    let ((x0, x1), (y0, y1)) = bounds(series);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| fail(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| fail(&e))?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(|e| fail(&e))?;
        for s in series {
            let color = s.color;
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), &color))
                .map_err(|e| fail(&e))?
                .label(s.label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        if series.len() > 1 {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| fail(&e))?;
        }
        root.present().map_err(|e| fail(&e))?;
    }
    Ok(svg)
}

/// Named SVG documents: max reaction force, max joint torque, TSM and GIAM,
/// base trajectory.
pub fn plots(log: &SimulationLog) -> Result<Vec<(&'static str, String)>, OutputError> {
    let peaks = rolling_maxima(log).map_err(|_| OutputError::EmptyLog)?;
    let t: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    let zip = |v: &[f64]| t.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let force = line_chart(
        "max_force",
        "Maximum end-effector reaction force",
        "t [s]",
        "|F| [N]",
        &[Series {
            label: "max |F|",
            points: zip(&peaks.force),
            color: BLUE,
        }],
    )?;
    let torque = line_chart(
        "max_torque",
        "Maximum joint torque",
        "t [s]",
        "|tau| [N m]",
        &[Series {
            label: "max |tau|",
            points: zip(&peaks.torque),
            color: RED,
        }],
    )?;
    let tsm: Vec<(f64, f64)> = log.samples.iter().filter_map(|s| s.tsm.map(|v| (s.t, v))).collect();
    let giam: Vec<(f64, f64)> = log.samples.iter().filter_map(|s| s.giam.map(|g| (s.t, g.value))).collect();
    let stability = line_chart(
        "stability",
        "Stability margins",
        "t [s]",
        "margin",
        &[
            Series {
                label: "TSM [m]",
                points: tsm,
                color: BLUE,
            },
            Series {
                label: "GIAM [-]",
                points: giam,
                color: RED,
            },
        ],
    )?;
    let axis = |k: usize| -> Vec<(f64, f64)> { log.samples.iter().map(|s| (s.t, s.base_pose.position[k])).collect() };
    let trajectory = line_chart(
        "base_trajectory",
        "Base position",
        "t [s]",
        "position [m]",
        &[
            Series {
                label: "x",
                points: axis(0),
                color: RED,
            },
            Series {
                label: "y",
                points: axis(1),
                color: GREEN,
            },
            Series {
                label: "z",
                points: axis(2),
                color: BLUE,
            },
        ],
    )?;
    Ok(vec![
        ("max_force.svg", force),
        ("max_torque.svg", torque),
        ("stability.svg", stability),
        ("base_trajectory.svg", trajectory),
    ])
}

/// Writes `log.csv`, `summary.txt` and the plots into `dir`, returning the
/// written paths.
pub fn emit_outputs(
    log: &SimulationLog,
    scenario: &Scenario,
    model: &RobotModel,
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    if log.is_empty() {
        return Err(OutputError::EmptyLog);
    }
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("log.csv");
    let file = fs::File::create(&csv_path).map_err(io_error(&csv_path))?;
    write_csv(log, io::BufWriter::new(file))?;
    written.push(csv_path);

    let summary_path = dir.join("summary.txt");
    let summary = summarize(log, scenario, model)?;
    fs::write(&summary_path, summary.to_text()).map_err(io_error(&summary_path))?;
    written.push(summary_path);

    for (name, svg) in plots(log)? {
        let path = dir.join(name);
        fs::write(&path, svg).map_err(io_error(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactMode;
    use crate::metrics::{GiaMargin, GiaStatus, LogSample};
    use crate::spatial::{Pose, Twist, Wrench};
    use nalgebra::Vector3;

    fn sample(t: f64) -> LogSample {
        LogSample {
            t,
            foot_wrenches: (0..4).map(|i| Wrench::from_force(Vector3::new(i as f64, t, -1.0))).collect(),
            torque: (0..12).map(|j| 0.01 * j as f64 - t).collect(),
            base_pose: Pose::from_position(Vector3::new(t, 0.0, 0.08)),
            base_twist: Twist::zero(),
            contact_modes: vec![ContactMode::Detached; 4],
            power: 1.5,
            tsm: (t > 0.0).then_some(0.05),
            giam: Some(GiaMargin {
                value: 2.0,
                status: GiaStatus::Feasible,
            }),
            detach_events: if t > 0.0 { vec![1, 3] } else { vec![] },
            control_fault: None,
        }
    }

    fn two_sample_log() -> SimulationLog {
        let mut log = SimulationLog::new(0.001);
        log.push(sample(0.0));
        log.push(sample(0.001));
        log
    }

    #[test]
    fn header_follows_column_contract() {
        let h = csv_header(4, 12);
        assert_eq!(h.len(), 1 + 12 + 12 + 7 + 5);
        assert_eq!(&h[..4], ["t", "fx_0", "fy_0", "fz_0"]);
        assert_eq!(h[13], "tau_0");
        assert_eq!(h[24], "tau_11");
        assert_eq!(&h[25..32], ["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"]);
        assert_eq!(&h[32..], ["tsm", "giam", "power", "detach_event", "control_fault"]);
    }

    #[test]
    fn two_sample_csv_has_header_and_two_rows() {
        let mut buf = Vec::new();
        write_csv(&two_sample_log(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for line in &lines {
            assert_eq!(line.split(',').count(), 37);
        }
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[32], "", "undefined tsm is an empty cell");
        assert_eq!(first[35], "");
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second[35], "1;3");
        assert_eq!(second[25], "0.001");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 1.0, 0.08, 2.7755575615628914e-13, -1.5e7, 123456.789, f64::MIN_POSITIVE] {
            let text = num(v);
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{text}");
        }
        assert_eq!(num(2.7755575615628914e-13), "2.7755575615628914e-13");
        assert_eq!(num(0.08), "0.08");
    }

    #[test]
    fn empty_log_is_rejected() {
        let log = SimulationLog::new(0.001);
        assert!(matches!(write_csv(&log, Vec::new()), Err(OutputError::EmptyLog)));
        assert!(matches!(plots(&log), Err(OutputError::EmptyLog)));
    }

    #[test]
    fn plots_are_deterministic_svg() {
        let log = two_sample_log();
        let a = plots(&log).unwrap();
        let b = plots(&log).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for (_, svg) in &a {
            assert!(svg.starts_with("<svg"));
            assert!(svg.contains("<polyline") || svg.contains("<path"));
        }
    }

    #[test]
    fn summary_is_flat_key_value() {
        let scenario = crate::scenario::load_scenario(crate::scenario::preset("case2_micro").unwrap()).unwrap();
        let model = RobotModel::reference();
        let summary = summarize(&two_sample_log(), &scenario, &model).unwrap();
        assert_eq!(summary.detach_events, 2);
        assert!(!summary.completed);
        assert_eq!(summary.peak_force, (9.0f64 + 0.001 * 0.001 + 1.0).sqrt());
        for line in summary.to_text().lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            assert!(!k.is_empty() && !v.is_empty());
        }
    }

    #[test]
    fn comparison_flags_cot_ordering() {
        let scenario = crate::scenario::load_scenario(crate::scenario::preset("case2_micro").unwrap()).unwrap();
        let model = RobotModel::reference();
        let base = summarize(&two_sample_log(), &scenario, &model).unwrap();
        let mut better = base.clone();
        better.mode = ControllerMode::BaseAdmittance;
        let (Ok(b), _) = (&base.cot, ()) else { panic!() };
        better.cot = Ok(b * 0.5);
        let text = comparison_text(&base, &better);
        assert!(text.contains("proposed_cot_lower = true"));
        assert!(text.contains("proposed.mode = base_admittance"));
    }
}
