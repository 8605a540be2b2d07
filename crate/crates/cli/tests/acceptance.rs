//! Acceptance run: one PASS/FAIL line per criterion, executed in sequence so
//! the timing criteria measure an otherwise idle process.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::process::Command;
use std::time::{Duration, Instant};

use support::scenarios::{fixture, fleet_stats, goal_addition_gap, lab_checkpoints, run};
use vi_core::hmm::{max_goals, HmmParams, TransitionMatrix};

type Outcome = Result<String, String>;
type Check = Box<dyn FnOnce() -> Outcome>;

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let started = Instant::now();
    let result = f();
    let wall = started.elapsed();
    match (result, limit) {
        (Ok(msg), Some(l)) if wall >= l => Err(format!("{msg}; took {wall:.2?}, limit {l:?}")),
        (Ok(msg), _) => Ok(format!("{msg} ({wall:.2?})")),
        (Err(msg), _) => Err(format!("{msg} ({wall:.2?})")),
    }
}

fn transition_row() -> Outcome {
    let params = HmmParams::<f64>::default();
    let m = TransitionMatrix::build(3, &params).map_err(|e| e.to_string())?;
    let want = [0.1, 0.1, 0.1, 0.65, 0.05];
    let row = m.row(3);
    let worst = row.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max = max_goals(&params);
    let msg = format!("G_? row {row:?}, max_goals {max}");
    if worst <= 1e-12 && max == 9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lab() -> Outcome {
    let r = run("lab_scenario1.json")?;
    let c = lab_checkpoints(&r)?;
    let parts = [
        ("a", &c.blocked_then_hesitating),
        ("b", &c.shared_corridor),
        ("c", &c.missed_turn),
        ("d", &c.passed_last_goal),
    ];
    let text: Vec<String> = parts
        .iter()
        .map(|(k, res)| match res {
            Ok(m) => format!("({k}) {m}"),
            Err(m) => format!("({k}) FAILED {m}"),
        })
        .collect();
    if parts.iter().all(|(_, res)| res.is_ok()) {
        Ok(text.join("; "))
    } else {
        Err(text.join("; "))
    }
}

fn goal_addition() -> Outcome {
    let known = run("large_goal_known.json")?;
    let added = run("large_goal_added.json")?;
    let (t_add, gap) = goal_addition_gap(&known, &added, 2.0)?;
    let msg = format!("goal added at t={t_add:.1}, max |dP| {gap:.4} from t={:.1}", t_add + 2.0);
    if gap <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fleet() -> Outcome {
    let r = run("large_random24.json")?;
    let robots = r.loaded.scenario.robots.len();
    let s = fleet_stats(&r);
    let msg = format!(
        "{robots} robots, {:.1} s simulated in {:.2?}, {} violations, {} updates, max latency {:.2?}",
        r.loaded.scenario.duration, s.wall, s.violations, s.updates, s.max_latency
    );
    let ok = robots == 24
        && (r.loaded.scenario.duration - 120.0).abs() < 1e-9
        && (r.loaded.scenario.dt - 0.1).abs() < 1e-12
        && s.wall < Duration::from_secs(12)
        && s.violations == 0
        && s.updates > 0
        && s.max_latency < Duration::from_millis(5);
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn replay_twice() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = fixture("lab_scenario1.json");
    let mut outputs = Vec::new();
    for name in ["first.csv", "second.csv"] {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_vi"))
            .arg("replay")
            .arg(&scenario)
            .arg("-o")
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("replay exited with {status}"));
        }
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if outputs[0] == outputs[1] {
        Ok(format!("{} bytes, identical", outputs[0].len()))
    } else {
        Err("traces differ".into())
    }
}

fn main() {
    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        ("1 transition matrix for g=3", None, Box::new(transition_row)),
        ("2 Viterbi equals path enumeration", None, Box::new(|| support::viterbi_fuzz(200, 1).map(|_| "200 sequences".into()))),
        (
            "3 planner equals Dijkstra under cuts",
            Some(Duration::from_secs(30)),
            Box::new(|| support::planner_fuzz(50, 200, 1).map(|_| "50 graphs x 200 operations".into())),
        ),
        (
            "4 skeleton suite on 128x128 maps",
            Some(Duration::from_secs(60)),
            Box::new(|| support::gvd_suite(20, 128, 1).map(|_| "20 maps".into())),
        ),
        ("5 laboratory scenario checkpoints", Some(Duration::from_secs(10)), Box::new(lab)),
        ("6 goal addition converges", Some(Duration::from_secs(15)), Box::new(goal_addition)),
        ("7 fleet of 24 robots", None, Box::new(fleet)),
        ("8 replay determinism", None, Box::new(replay_twice)),
    ];
    let mut failed = Vec::new();
    for (name, limit, check) in criteria {
        match timed(limit, check) {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
