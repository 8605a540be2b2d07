use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context as _};
use vi_core::floorplan::parse_layout;
use vi_core::interface::{
    emit_trace_csv, emit_trace_json, estimate_offline, load_scenario, parse_pose_log, parse_robot_messages,
    parse_scenario, pose_log_line, read_file, robot_log_lines, trace_records, write_file, OfflineRun, TraceHeader,
};
use vi_core::sim::{Lattice, MapConfig, MotionModel, RecordMode, TickOutput, World, DEFAULT_DT};

use crate::{Failure, RobotMode};

pub fn motion_model(mode: RobotMode) -> MotionModel {
    match mode {
        RobotMode::Random => MotionModel::Random,
        RobotMode::Deterministic => MotionModel::Deterministic,
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => write_file(p, text).map_err(Failure::runtime),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing stdout").map_err(Failure::Runtime)
        }
    }
}

/// Logs every error event and fails when there was one.
fn check_errors(ticks: &[TickOutput]) -> Result<(), Failure> {
    let mut errors = ticks.iter().flat_map(|k| k.events.iter().filter(|e| e.is_error()).map(move |e| (k.t, e)));
    let Some((t, first)) = errors.next() else {
        return Ok(());
    };
    log::error!("t={t:.3}: {}", first.tag());
    let rest = errors.inspect(|(t, e)| log::error!("t={t:.3}: {}", e.tag())).count();
    Err(Failure::Runtime(anyhow!("run raised {} error event(s), first at t={t:.3}: {first:?}", rest + 1)))
}

pub fn build_gvd(
    layout_path: &Path,
    output: Option<&Path>,
    cell_size: Option<f64>,
    max_edge_length: Option<f64>,
    pgm: Option<&Path>,
) -> Result<(), Failure> {
    let layout = parse_layout(&read_file(layout_path).map_err(Failure::input)?)
        .with_context(|| layout_path.display().to_string())
        .map_err(Failure::Input)?;
    let config = MapConfig {
        cell_size,
        max_edge_length,
        ..MapConfig::default()
    };
    let world = World::build(&layout, &layout.goals, &config).map_err(Failure::input)?;
    log::info!(
        "{}x{} grid, {} skeleton cells, {} nodes, {} edges",
        world.grid.width(),
        world.grid.height(),
        world.skeleton.cells().len(),
        world.graph.node_count(),
        world.graph.edges().len()
    );
    let mut json = serde_json::to_string_pretty(&world.graph.to_json()).expect("plain data");
    json.push('\n');
    emit(output, &json)?;
    if let Some(p) = pgm {
        write_file(p, world.grid.to_pgm()).map_err(Failure::runtime)?;
    }
    Ok(())
}

pub fn replay(scenario: &Path, output: Option<&Path>, seed: Option<u64>, json: Option<&Path>) -> Result<(), Failure> {
    let mut loaded = load_scenario(scenario).map_err(Failure::input)?;
    if let Some(s) = seed {
        loaded.scenario.seed = s;
    }
    let mut sim = loaded.simulation().map_err(Failure::input)?;
    let ticks = sim.run(loaded.scenario.duration);
    let records = trace_records(&ticks, &loaded.goal_columns(), loaded.scenario.record);
    let header = loaded.trace_header();
    emit(output, &emit_trace_csv(&header, &records))?;
    if let Some(p) = json {
        let doc = serde_json::to_string(&emit_trace_json(&header, &records)).expect("plain data");
        write_file(p, doc).map_err(Failure::runtime)?;
    }
    check_errors(&ticks)
}

pub fn simulate(scenario: &Path, robots: Option<MotionModel>, duration: Option<f64>, out_dir: &Path) -> Result<(), Failure> {
    let mut loaded = load_scenario(scenario).map_err(Failure::input)?;
    if let Some(m) = robots {
        for r in &mut loaded.scenario.robots {
            r.model = m;
        }
    }
    let duration = duration.unwrap_or(loaded.scenario.duration);
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Failure::Input(anyhow!("duration must be a finite non-negative number, got {duration}")));
    }
    let mut sim = loaded.simulation().map_err(Failure::input)?;
    let mut poses = pose_log_line(&sim.observed_pose());
    let mut robot_log = robot_log_lines(0.0, &sim.robot_snapshots());
    let ticks = sim.run(duration);
    for k in &ticks {
        poses.push_str(&pose_log_line(&k.observed_pose));
        robot_log.push_str(&robot_log_lines(k.t, &k.robots));
    }
    let records = trace_records(&ticks, &loaded.goal_columns(), loaded.scenario.record);
    std::fs::create_dir_all(out_dir)
        .with_context(|| out_dir.display().to_string())
        .map_err(Failure::Runtime)?;
    write_file(&out_dir.join("poses.jsonl"), poses).map_err(Failure::runtime)?;
    write_file(&out_dir.join("robots.jsonl"), robot_log).map_err(Failure::runtime)?;
    write_file(&out_dir.join("trace.csv"), emit_trace_csv(&loaded.trace_header(), &records)).map_err(Failure::runtime)?;
    let updates = ticks.iter().filter(|k| k.update.is_some()).count();
    let last = records.last().map(|r| r.argmax.as_str()).unwrap_or("unknown");
    println!(
        "{} ticks, {updates} updates, {} robot conflicts, final argmax {last}",
        ticks.len(),
        sim.violations()
    );
    check_errors(&ticks)
}

pub fn estimate(
    layout_path: &Path,
    pose_log: &Path,
    robot_log: &Path,
    output: Option<&Path>,
    scenario: Option<&Path>,
) -> Result<(), Failure> {
    let layout = parse_layout(&read_file(layout_path).map_err(Failure::input)?)
        .with_context(|| layout_path.display().to_string())
        .map_err(Failure::Input)?;
    let scenario = match scenario {
        Some(p) => Some(
            parse_scenario(&read_file(p).map_err(Failure::input)?)
                .with_context(|| p.display().to_string())
                .map_err(Failure::Input)?,
        ),
        None => None,
    };
    let poses = parse_pose_log(&read_file(pose_log).map_err(Failure::input)?)
        .with_context(|| pose_log.display().to_string())
        .map_err(Failure::Input)?;
    let lattice = Lattice::from_layout(&layout).map_err(Failure::input)?;
    let robots = parse_robot_messages(&read_file(robot_log).map_err(Failure::input)?, Some(&lattice))
        .with_context(|| robot_log.display().to_string())
        .map_err(Failure::Input)?;

    let (goals, columns, map, run, header, mode) = match &scenario {
        Some(s) => (
            s.goal_ids(&layout),
            s.all_goal_labels(&layout),
            s.map,
            OfflineRun {
                settings: s.estimator.clone(),
                events: s.events.clone(),
                poses,
                robots,
            },
            (s.seed, s.dt),
            s.record,
        ),
        None => {
            let dt = match poses.as_slice() {
                [a, b, ..] if b.t > a.t => b.t - a.t,
                _ => DEFAULT_DT,
            };
            (
                layout.goals.clone(),
                layout.goals.clone(),
                MapConfig::default(),
                OfflineRun {
                    poses,
                    robots,
                    ..OfflineRun::default()
                },
                (0, dt),
                RecordMode::default(),
            )
        }
    };
    let world = World::build(&layout, &goals, &map).map_err(Failure::input)?;
    let ticks = estimate_offline(&world, &run).map_err(Failure::input)?;
    let header = TraceHeader {
        seed: header.0,
        dt: header.1,
        goals: columns.clone(),
    };
    emit(output, &emit_trace_csv(&header, &trace_records(&ticks, &columns, mode)))?;
    log::info!("{} poses, {} updates", ticks.len(), ticks.iter().filter(|k| k.update.is_some()).count());
    check_errors(&ticks)
}
