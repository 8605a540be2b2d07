mod support;

use support::scenarios::{fleet_stats, goal_addition_gap, lab_checkpoints, run, trace_csv};

#[test]
fn lab_run_hits_every_checkpoint() {
    let r = run("lab_scenario1.json").unwrap();
    let c = lab_checkpoints(&r).unwrap();
    for (name, res) in [
        ("blocked", &c.blocked_then_hesitating),
        ("corridor", &c.shared_corridor),
        ("missed turn", &c.missed_turn),
        ("passed", &c.passed_last_goal),
    ] {
        println!("{name}: {res:?}");
        assert!(res.is_ok(), "{name}: {res:?}");
    }
}

#[test]
fn late_goal_converges_to_known_goal() {
    let known = run("large_goal_known.json").unwrap();
    let added = run("large_goal_added.json").unwrap();
    let (t_add, gap) = goal_addition_gap(&known, &added, 2.0).unwrap();
    println!("added at {t_add:.1}, max gap {gap:.4}");
    assert!(gap <= 0.05);
}

#[test]
fn fleet_of_24_keeps_reservations() {
    let r = run("large_random24.json").unwrap();
    let s = fleet_stats(&r);
    println!("wall {:?} max latency {:?} over {} updates", s.wall, s.max_latency, s.updates);
    assert_eq!(s.violations, 0);
    assert!(s.updates > 100);
}

#[test]
fn identical_runs_give_identical_traces() {
    let a = trace_csv(&run("lab_scenario1.json").unwrap());
    let b = trace_csv(&run("lab_scenario1.json").unwrap());
    assert_eq!(a, b);
}

fn offline_matches_online(name: &str) {
    use vi_core::interface::{
        estimate_offline, load_scenario, parse_pose_log, parse_robot_messages, pose_log_line, robot_log_lines, OfflineRun,
    };
    let loaded = load_scenario(&support::scenarios::fixture(name)).unwrap();
    let mut sim = loaded.simulation().unwrap();
    let mut poses = pose_log_line(&sim.observed_pose());
    let mut robots = robot_log_lines(0.0, &sim.robot_snapshots());
    let ticks = sim.run(loaded.scenario.duration);
    for k in &ticks {
        poses.push_str(&pose_log_line(&k.observed_pose));
        robots.push_str(&robot_log_lines(k.t, &k.robots));
    }
    let run = OfflineRun {
        settings: loaded.scenario.estimator.clone(),
        events: loaded.scenario.events.clone(),
        poses: parse_pose_log(&poses).unwrap(),
        robots: parse_robot_messages(&robots, Some(&sim.lattice().clone())).unwrap(),
    };
    let offline = estimate_offline(&loaded.world, &run).unwrap();
    assert_eq!(offline.len(), ticks.len() + 1);
    for (a, b) in ticks.iter().zip(&offline[1..]) {
        assert_eq!(a.probabilities, b.probabilities, "t={}", a.t);
        assert_eq!(a.update.is_some(), b.update.is_some(), "t={}", a.t);
    }
}

#[test]
fn offline_estimation_reproduces_the_lab_run() {
    offline_matches_online("lab_scenario1.json");
}

#[test]
fn offline_estimation_replays_goal_additions() {
    offline_matches_online("large_goal_added.json");
}
