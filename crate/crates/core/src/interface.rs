//! File formats and wire types: robot path messages, pose logs, traces,
//! scenario loading, and the live frame/command protocol.
//!
//! The robot message schema is a stand-in for an external fleet planner's
//! output: one JSON object per line, `{"robot":"r1","t":1.5,"node":"R105"}`,
//! with optional explicit `"x"`/`"y"` poses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::floorplan::{parse_layout, Cell, LayoutError};
use crate::geom::Point;
use crate::hmm::StateLabel;
use crate::estimator::Estimator;
use crate::planner::{RobotDisk, DEFAULT_ROBOT_RADIUS};
use crate::sim::{
    apply_action, EstimatorSettings, Lattice, RecordMode, RobotSnapshot, Scenario, ScheduledEvent, ScriptedPath, SimError,
    SimEvent, Simulation, TickOutput, World,
};
use crate::validation::WorkerPose;
use crate::voronoi::VoronoiGraph;

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: robot `{robot}` hops from `{from}` to non-adjacent `{to}`")]
    NonAdjacent {
        line: usize,
        robot: String,
        from: String,
        to: String,
    },
    #[error("line {line}: robot `{robot}` time {t} does not increase")]
    TimeRegression { line: usize, robot: String, t: f64 },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub fn read_file(path: &Path) -> Result<String, InterfaceError> {
    std::fs::read_to_string(path).map_err(|source| InterfaceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), InterfaceError> {
    std::fs::write(path, contents).map_err(|source| InterfaceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One line of a robot message file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotMessage {
    pub robot: String,
    pub t: f64,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotWaypoint {
    pub t: f64,
    pub node: String,
    pub position: Option<Point>,
}

/// A robot's timed node sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotPathMessage {
    pub robot: String,
    /// Last radius given on any of the robot's lines.
    pub radius: Option<f64>,
    pub waypoints: Vec<RobotWaypoint>,
}

impl RobotPathMessage {
    /// Scripted path over `lattice`; waypoints without explicit poses sit on their node.
    pub fn to_scripted_path(&self, lattice: &Lattice) -> Result<ScriptedPath, InterfaceError> {
        let waypoints = self
            .waypoints
            .iter()
            .map(|w| {
                let n = lattice
                    .index_of(&w.node)
                    .ok_or_else(|| InterfaceError::Scenario(format!("unknown node `{}`", w.node)))?;
                Ok((w.t, n, w.position.unwrap_or_else(|| lattice.position(n))))
            })
            .collect::<Result<_, InterfaceError>>()?;
        Ok(ScriptedPath { waypoints })
    }

    /// Explicit pose at time `t`: the latest waypoint at or before it.
    pub fn position_at(&self, t: f64, lattice: Option<&Lattice>) -> Option<Point> {
        let k = self.waypoints.partition_point(|w| w.t <= t);
        let w = self.waypoints.get(k.checked_sub(1)?)?;
        w.position
            .or_else(|| lattice.and_then(|l| l.index_of(&w.node)).map(|n| lattice.expect("checked").position(n)))
    }
}

/// Parses JSON-lines robot messages, grouped by robot in order of first
/// appearance. Blank lines are skipped. With a lattice, nodes must exist and
/// consecutive distinct nodes must be adjacent.
pub fn parse_robot_messages(text: &str, lattice: Option<&Lattice>) -> Result<Vec<RobotPathMessage>, InterfaceError> {
    let mut out: Vec<RobotPathMessage> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let msg: RobotMessage = serde_json::from_str(raw).map_err(|e| InterfaceError::Line {
            line,
            message: e.to_string(),
        })?;
        if !msg.t.is_finite() {
            return Err(InterfaceError::Line {
                line,
                message: "time must be finite".into(),
            });
        }
        let position = match (msg.x, msg.y) {
            (Some(x), Some(y)) => Some(Point::new(x, y)),
            (None, None) => None,
            _ => {
                return Err(InterfaceError::Line {
                    line,
                    message: "x and y must be given together".into(),
                })
            }
        };
        if let Some(l) = lattice {
            if l.index_of(&msg.node).is_none() {
                return Err(InterfaceError::Line {
                    line,
                    message: format!("unknown node `{}`", msg.node),
                });
            }
        }
        let slot = *index.entry(msg.robot.clone()).or_insert_with(|| {
            out.push(RobotPathMessage {
                robot: msg.robot.clone(),
                radius: None,
                waypoints: Vec::new(),
            });
            out.len() - 1
        });
        let path = &mut out[slot];
        if let Some(prev) = path.waypoints.last() {
            if msg.t <= prev.t {
                return Err(InterfaceError::TimeRegression {
                    line,
                    robot: msg.robot,
                    t: msg.t,
                });
            }
            if let Some(l) = lattice {
                let (a, b) = (l.index_of(&prev.node).expect("checked"), l.index_of(&msg.node).expect("checked"));
                if a != b && !l.are_adjacent(a, b) {
                    return Err(InterfaceError::NonAdjacent {
                        line,
                        robot: msg.robot,
                        from: prev.node.clone(),
                        to: msg.node,
                    });
                }
            }
        }
        if let Some(r) = msg.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(InterfaceError::Line {
                    line,
                    message: "radius must be positive".into(),
                });
            }
            path.radius = Some(r);
        }
        path.waypoints.push(RobotWaypoint {
            t: msg.t,
            node: msg.node,
            position,
        });
    }
    Ok(out)
}

/// One line per robot, with explicit poses and radii.
pub fn robot_log_lines(t: f64, robots: &[RobotSnapshot]) -> String {
    let mut s = String::new();
    for r in robots {
        let msg = RobotMessage {
            robot: r.id.clone(),
            t,
            node: r.node.clone(),
            x: Some(r.x),
            y: Some(r.y),
            radius: Some(r.radius),
        };
        s.push_str(&serde_json::to_string(&msg).expect("plain data"));
        s.push('\n');
    }
    s
}

/// Parses a JSON-lines pose log of `{"t","x","y","theta"}` objects.
pub fn parse_pose_log(text: &str) -> Result<Vec<WorkerPose>, InterfaceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let pose: WorkerPose = serde_json::from_str(raw).map_err(|e| InterfaceError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            let prev: &WorkerPose = prev;
            if pose.t < prev.t {
                return Err(InterfaceError::Line {
                    line: i + 1,
                    message: format!("time {} goes backwards", pose.t),
                });
            }
        }
        out.push(pose);
    }
    Ok(out)
}

pub fn pose_log_line(pose: &WorkerPose) -> String {
    let mut s = serde_json::to_string(pose).expect("plain data");
    s.push('\n');
    s
}

/// Formats with nine significant digits, `%.9g` style.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_fraction(&fixed)
    } else {
        format!("{}e{}{:02}", trim_fraction(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One trace row. Goal columns are fixed for a run; absent goals are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub t: f64,
    pub true_pose: WorkerPose,
    pub observed_pose: WorkerPose,
    pub robots: Vec<crate::sim::RobotSnapshot>,
    pub updated: bool,
    pub v_hat: Vec<Option<f64>>,
    pub p_goals: Vec<Option<f64>>,
    pub p_unknown: f64,
    pub p_irrational: f64,
    pub argmax: String,
    pub events: Vec<String>,
}

impl TraceRecord {
    /// `columns` lists every goal label of the run.
    pub fn from_tick(out: &TickOutput, columns: &[String]) -> Self {
        let g = out.goal_labels.len();
        let slot = |label: &String| out.goal_labels.iter().position(|l| l == label);
        let v_hat = columns
            .iter()
            .map(|c| slot(c).and_then(|j| out.update.as_ref().map(|u| u.v_hat[j])))
            .collect();
        let p_goals = columns.iter().map(|c| slot(c).map(|j| out.probabilities[j])).collect();
        let argmax = match out.update.as_ref().map(|u| u.argmax).unwrap_or_else(|| {
            StateLabel::of(crate::scalar::argmax(&out.probabilities), g)
        }) {
            StateLabel::Goal(j) => out.goal_labels[j].clone(),
            StateLabel::Unknown => "unknown".into(),
            StateLabel::Irrational => "irrational".into(),
        };
        Self {
            tick: out.tick,
            t: out.t,
            true_pose: out.true_pose,
            observed_pose: out.observed_pose,
            robots: out.robots.clone(),
            updated: out.update.is_some(),
            v_hat,
            p_goals,
            p_unknown: out.probabilities[g],
            p_irrational: out.probabilities[g + 1],
            argmax,
            events: out.events.iter().map(|e| e.tag()).collect(),
        }
    }

    pub fn p_total(&self) -> f64 {
        self.p_goals.iter().flatten().sum::<f64>() + self.p_unknown + self.p_irrational
    }
}

/// Run-level trace metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceHeader {
    pub seed: u64,
    pub dt: f64,
    pub goals: Vec<String>,
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub fn trace_csv_header(header: &TraceHeader) -> String {
    let mut s = format!("# seed={} dt={} goals={}\n", header.seed, fmt_sig9(header.dt), header.goals.join(";"));
    s.push_str("t,worker_x,worker_y,worker_theta");
    let g = header.goals.len();
    for k in 1..=g {
        let _ = write!(s, ",v_{k}");
    }
    for k in 1..=g {
        let _ = write!(s, ",P_G{k}");
    }
    s.push_str(",P_unknown,P_irrational,argmax,events\n");
    s
}

pub fn trace_csv_row(r: &TraceRecord) -> String {
    let mut s = format!(
        "{},{},{},{}",
        fmt_sig9(r.t),
        fmt_sig9(r.true_pose.x),
        fmt_sig9(r.true_pose.y),
        fmt_sig9(r.true_pose.theta)
    );
    for v in &r.v_hat {
        let _ = write!(s, ",{}", opt(*v));
    }
    for p in &r.p_goals {
        let _ = write!(s, ",{}", opt(*p));
    }
    let _ = writeln!(
        s,
        ",{},{},{},{}",
        fmt_sig9(r.p_unknown),
        fmt_sig9(r.p_irrational),
        r.argmax,
        r.events.join(";")
    );
    s
}

pub fn emit_trace_csv(header: &TraceHeader, records: &[TraceRecord]) -> String {
    let mut s = trace_csv_header(header);
    for r in records {
        s.push_str(&trace_csv_row(r));
    }
    s
}

/// Trace records under `mode`: every tick, or only ticks with an estimator
/// update or an event.
pub fn trace_records(ticks: &[TickOutput], columns: &[String], mode: RecordMode) -> Vec<TraceRecord> {
    ticks
        .iter()
        .filter(|t| mode == RecordMode::Tick || t.update.is_some() || !t.events.is_empty())
        .map(|t| TraceRecord::from_tick(t, columns))
        .collect()
}

pub fn emit_trace_json(header: &TraceHeader, records: &[TraceRecord]) -> serde_json::Value {
    serde_json::json!({ "header": header, "records": records })
}

/// A parsed trace CSV row, for reading traces back.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub p: Vec<Option<f64>>,
    pub argmax: String,
    pub events: String,
}

/// Reads the probability columns back from a trace CSV.
pub fn parse_trace_csv(text: &str) -> Result<(Vec<String>, Vec<CsvRow>), InterfaceError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let (_, header) = lines.next().ok_or(InterfaceError::Line {
        line: 1,
        message: "missing header".into(),
    })?;
    let cols: Vec<String> = header.split(',').map(str::to_string).collect();
    let p_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("P_"))
        .map(|(i, _)| i)
        .collect();
    let argmax_col = cols.iter().position(|c| c == "argmax").unwrap_or(cols.len());
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(InterfaceError::Line {
                line: i + 1,
                message: format!("expected {} fields, found {}", cols.len(), f.len()),
            });
        }
        let num = |s: &str| -> Result<Option<f64>, InterfaceError> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| InterfaceError::Line {
                line: i + 1,
                message: format!("bad number `{s}`"),
            })
        };
        rows.push(CsvRow {
            t: num(f[0])?.unwrap_or(f64::NAN),
            p: p_cols.iter().map(|&c| num(f[c])).collect::<Result<_, _>>()?,
            argmax: f.get(argmax_col).unwrap_or(&"").to_string(),
            events: f.last().unwrap_or(&"").to_string(),
        });
    }
    Ok((p_cols.iter().map(|&c| cols[c].clone()).collect(), rows))
}

/// Scenario plus everything it references, resolved against its directory.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub scenario: Scenario,
    pub world: Arc<World>,
    pub paths: BTreeMap<String, ScriptedPath>,
}

impl LoadedScenario {
    pub fn simulation(&self) -> Result<Simulation, InterfaceError> {
        Ok(Simulation::new(self.world.clone(), &self.scenario, &self.paths)?)
    }

    pub fn goal_columns(&self) -> Vec<String> {
        self.scenario.all_goal_labels(&self.world.layout)
    }

    pub fn trace_header(&self) -> TraceHeader {
        TraceHeader {
            seed: self.scenario.seed,
            dt: self.scenario.dt,
            goals: self.goal_columns(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, InterfaceError> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| InterfaceError::Line {
        line: e.line(),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, InterfaceError> {
    let scenario = parse_scenario(&read_file(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let layout = parse_layout(&read_file(&base.join(&scenario.layout))?)?;
    let goals = scenario.goal_ids(&layout);
    let world = Arc::new(World::build(&layout, &goals, &scenario.map)?);
    let lattice = Lattice::from_layout(&layout)?;
    let mut paths = BTreeMap::new();
    if let Some(p) = &scenario.robot_paths {
        for msg in parse_robot_messages(&read_file(&base.join(p))?, Some(&lattice))? {
            paths.insert(msg.robot.clone(), msg.to_scripted_path(&lattice)?);
        }
    }
    Ok(LoadedScenario {
        path: path.to_path_buf(),
        scenario,
        world,
        paths,
    })
}

/// Recorded inputs for [`estimate_offline`].
#[derive(Debug, Clone, Default)]
pub struct OfflineRun {
    pub settings: EstimatorSettings,
    /// Goal changes, applied before the first pose at or after their time.
    pub events: Vec<ScheduledEvent>,
    /// Observed worker poses, one per tick.
    pub poses: Vec<WorkerPose>,
    pub robots: Vec<RobotPathMessage>,
}

/// Replays the estimator over recorded streams, one record per pose. For
/// each pose the robots are placed at their latest waypoint at or before the
/// pose time and the pose is observed, the same order as the live tick loop.
/// Records carry the observed pose as the true pose.
pub fn estimate_offline(world: &World, run: &OfflineRun) -> Result<Vec<TickOutput>, InterfaceError> {
    let lattice = Lattice::from_layout(&world.layout)?;
    let mut estimator = Estimator::new(world.grid.clone(), world.graph.clone(), run.settings.to_config())
        .map_err(|e| InterfaceError::Scenario(e.to_string()))?;
    let mut scheduled = run.events.clone();
    scheduled.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut next = 0;
    let mut out = Vec::with_capacity(run.poses.len());
    for (k, &pose) in run.poses.iter().enumerate() {
        let mut events = Vec::new();
        if k > 0 {
            while let Some(e) = scheduled.get(next).filter(|e| e.t <= pose.t + 1e-9) {
                events.push(apply_action(&mut estimator, &lattice, &e.action));
                next += 1;
            }
        }
        let mut disks = Vec::new();
        let mut robots = Vec::new();
        for (id, r) in run.robots.iter().enumerate() {
            let Some(position) = r.position_at(pose.t + 1e-9, Some(&lattice)) else {
                continue;
            };
            let radius = r.radius.unwrap_or(DEFAULT_ROBOT_RADIUS);
            disks.push(RobotDisk { id, position, radius });
            let w = &r.waypoints[r.waypoints.partition_point(|w| w.t <= pose.t + 1e-9) - 1];
            robots.push(RobotSnapshot {
                id: r.robot.clone(),
                node: w.node.clone(),
                x: position.x,
                y: position.y,
                radius,
            });
        }
        estimator.set_robots(&disks);
        let update = match estimator.observe(pose) {
            Ok(u) => u,
            Err(e) => {
                events.push(SimEvent::EstimatorError { message: e.to_string() });
                None
            }
        };
        out.push(TickOutput {
            tick: k as u64,
            t: pose.t,
            true_pose: pose,
            observed_pose: pose,
            robots,
            goal_labels: estimator.goal_labels(),
            update,
            probabilities: estimator.probabilities().to_vec(),
            events,
            latency: None,
            violations: 0,
        });
    }
    Ok(out)
}

/// Hex SHA-256 of the graph's JSON export; changes with goals and nodes.
pub fn graph_digest(graph: &VoronoiGraph) -> String {
    let bytes = serde_json::to_vec(&graph.to_json()).expect("plain data");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Run-length encoding of the occupancy grid, row-major from the origin,
/// starting with a free run.
pub fn occupancy_runs(world: &World) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = Cell::Free;
    let mut count = 0;
    for &c in world.grid.cells() {
        if c == current {
            count += 1;
        } else {
            runs.push(count);
            current = c;
            count = 1;
        }
    }
    runs.push(count);
    runs
}

/// The one-shot `GET /graph` document: grid, skeleton, graph and layout.
pub fn graph_document(world: &World, graph: &VoronoiGraph) -> serde_json::Value {
    let grid = &world.grid;
    serde_json::json!({
        "grid": {
            "width": grid.width(),
            "height": grid.height(),
            "cell_size": grid.cell_size(),
            "origin": grid.origin(),
            "runs": occupancy_runs(world),
        },
        "skeleton": world.skeleton.cells(),
        "graph": graph.to_json(),
        "layout": world.layout,
        "digest": graph_digest(graph),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalMarker {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Server-to-client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Frame),
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub t: f64,
    pub worker: WorkerPose,
    pub robots: Vec<crate::sim::RobotSnapshot>,
    pub goals: Vec<GoalMarker>,
    /// `[P_G1 .. P_Gg, P_unknown, P_irrational]`.
    pub p: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub argmax: String,
    pub events: Vec<String>,
    pub paused: bool,
    pub digest: String,
}

impl Frame {
    pub fn of(sim: &Simulation, last: &TickOutput, v_hat: &[f64], paused: bool, digest: &str) -> Self {
        let graph = sim.estimator().graph();
        let labels = graph.goal_labels();
        let goals = labels
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let p = graph.position(graph.goal_node(j));
                GoalMarker {
                    label: l.clone(),
                    x: p.x,
                    y: p.y,
                }
            })
            .collect();
        let p = sim.estimator().probabilities().to_vec();
        let argmax = match StateLabel::of(crate::scalar::argmax(&p), labels.len()) {
            StateLabel::Goal(j) => labels[j].clone(),
            StateLabel::Unknown => "unknown".into(),
            StateLabel::Irrational => "irrational".into(),
        };
        Self {
            tick: sim.tick_index(),
            t: sim.time(),
            worker: sim.worker().pose(),
            robots: sim.robot_snapshots(),
            goals,
            p,
            v_hat: v_hat.to_vec(),
            argmax,
            events: last.events.iter().map(|e| e.tag()).collect(),
            paused,
            digest: digest.to_string(),
        }
    }
}

/// Client-to-server message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Steer { heading: f64, speed: f64 },
    AddGoal { x: f64, y: f64 },
    RemoveGoal { index: usize },
    /// Toggles unless `paused` is given.
    Pause {
        #[serde(default)]
        paused: Option<bool>,
    },
    SeedReset {
        #[serde(default)]
        seed: Option<u64>,
    },
}

pub fn parse_command(text: &str) -> Result<Command, String> {
    let c: Command = serde_json::from_str(text).map_err(|e| format!("malformed command: {e}"))?;
    if let Command::Steer { heading, speed } = c {
        if !heading.is_finite() || !(0.0..=1.0).contains(&speed) {
            return Err("steer needs a finite heading and a speed fraction in [0, 1]".into());
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_message_file() {
        assert!(parse_robot_messages("", None).unwrap().is_empty());
    }

    #[test]
    fn three_lines_one_robot() {
        let text = r#"{"robot":"r1","t":0,"node":"R105"}
{"robot":"r1","t":1,"node":"R104"}
{"robot":"r1","t":2,"node":"R103"}
"#;
        let msgs = parse_robot_messages(text, None).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].waypoints.len(), 3);
        assert_eq!(msgs[0].waypoints[2].node, "R103");
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"robot\":\"r1\",\"t\":0,\"node\":\"A\"}\n{oops}\n";
        match parse_robot_messages(text, None) {
            Err(InterfaceError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_regression_rejected() {
        let text = "{\"robot\":\"r1\",\"t\":1,\"node\":\"A\"}\n{\"robot\":\"r1\",\"t\":1,\"node\":\"A\"}\n";
        assert!(matches!(
            parse_robot_messages(text, None),
            Err(InterfaceError::TimeRegression { line: 2, .. })
        ));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.1), "0.1");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_sig9(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig9(0.000123), "0.000123");
    }

    #[test]
    fn zero_record_trace_is_header_only() {
        let h = TraceHeader {
            seed: 3,
            dt: 0.1,
            goals: vec!["A".into(), "B".into()],
        };
        let csv = emit_trace_csv(&h, &[]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "# seed=3 dt=0.1 goals=A;B");
        assert_eq!(
            lines[1],
            "t,worker_x,worker_y,worker_theta,v_1,v_2,P_G1,P_G2,P_unknown,P_irrational,argmax,events"
        );
    }

    #[test]
    fn commands_parse() {
        assert_eq!(
            parse_command(r#"{"type":"steer","heading":1.0,"speed":0.5}"#).unwrap(),
            Command::Steer {
                heading: 1.0,
                speed: 0.5
            }
        );
        assert_eq!(parse_command(r#"{"type":"pause"}"#).unwrap(), Command::Pause { paused: None });
        assert!(parse_command(r#"{"type":"steer","heading":1.0,"speed":2}"#).is_err());
        assert!(parse_command("nope").is_err());
    }
}
