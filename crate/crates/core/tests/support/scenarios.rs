//! Scenario runs and checkpoint evaluation over their tick outputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use vi_core::geom::Point;
use vi_core::interface::{emit_trace_csv, load_scenario, LoadedScenario, TraceRecord};
use vi_core::sim::{SimEvent, TickOutput};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub struct Run {
    pub loaded: LoadedScenario,
    pub ticks: Vec<TickOutput>,
    pub wall: Duration,
}

pub fn run(name: &str) -> Result<Run, String> {
    let loaded = load_scenario(&fixture(name)).map_err(|e| e.to_string())?;
    let mut sim = loaded.simulation().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let ticks = sim.run(loaded.scenario.duration);
    let wall = started.elapsed();
    if let Some(e) = ticks.iter().flat_map(|t| &t.events).find(|e| e.is_error()) {
        return Err(format!("{name}: {e:?}"));
    }
    Ok(Run { loaded, ticks, wall })
}

pub fn trace_csv(run: &Run) -> String {
    let cols = run.loaded.goal_columns();
    let records: Vec<TraceRecord> = run.ticks.iter().map(|t| TraceRecord::from_tick(t, &cols)).collect();
    emit_trace_csv(&run.loaded.trace_header(), &records)
}

/// Probability of `label` at a tick; `None` when the goal is absent.
pub fn p_goal(tick: &TickOutput, label: &str) -> Option<f64> {
    tick.goal_labels.iter().position(|l| l == label).map(|j| tick.probabilities[j])
}

pub fn p_unknown(tick: &TickOutput) -> f64 {
    tick.probabilities[tick.goal_labels.len()]
}

pub fn p_irrational(tick: &TickOutput) -> f64 {
    tick.probabilities[tick.goal_labels.len() + 1]
}

/// Index of the largest probability: goals first, then `G_?`, then `G_x`.
fn argmax(tick: &TickOutput) -> usize {
    let mut best = 0;
    for (k, &p) in tick.probabilities.iter().enumerate() {
        if p > tick.probabilities[best] {
            best = k;
        }
    }
    best
}

pub fn argmax_label(tick: &TickOutput) -> String {
    let k = argmax(tick);
    let g = tick.goal_labels.len();
    match k {
        _ if k < g => tick.goal_labels[k].clone(),
        _ if k == g => "unknown".into(),
        _ => "irrational".into(),
    }
}

fn node(run: &Run, id: &str) -> Result<Point, String> {
    run.loaded
        .world
        .layout
        .node(id)
        .map(|n| n.position())
        .ok_or_else(|| format!("layout has no node {id}"))
}

fn latest_at(ticks: &[TickOutput], t: f64) -> Option<&TickOutput> {
    ticks.iter().take_while(|k| k.t <= t + 1e-9).last()
}

fn heading_near(tick: &TickOutput, theta: f64) -> bool {
    vi_core::scalar::wrap_angle(tick.true_pose.theta - theta).abs() < 0.1
}

/// The four checkpoints of the laboratory run, in order.
pub struct LabCheckpoints {
    pub blocked_then_hesitating: Result<String, String>,
    pub shared_corridor: Result<String, String>,
    pub missed_turn: Result<String, String>,
    pub passed_last_goal: Result<String, String>,
}

pub fn lab_checkpoints(run: &Run) -> Result<LabCheckpoints, String> {
    let ticks = &run.ticks;
    let r7 = node(run, "R7")?;
    let r103 = node(run, "R103")?;
    let r17 = node(run, "R17")?;

    let blocked = ticks
        .iter()
        .position(|k| {
            k.events
                .iter()
                .any(|e| matches!(e, SimEvent::PathBlocked { goals } if goals.iter().any(|g| g == "R117")))
        })
        .ok_or("R117 was never blocked")?;
    // The hesitation is the first run of ticks without motion after the block.
    let still = |k: usize| ticks[k].true_pose.position() == ticks[k - 1].true_pose.position();
    let start = (blocked + 1..ticks.len()).find(|&k| still(k)).ok_or("no hesitation after the block")?;
    let end = (start..ticks.len()).take_while(|&k| still(k)).last().unwrap_or(start);
    let a = {
        let k = &ticks[end];
        let label = argmax_label(k);
        let msg = format!("t={:.1} argmax {label} P(G_x)={:.3}", k.t, p_irrational(k));
        if label == "irrational" {
            Ok(msg)
        } else {
            Err(msg)
        }
    };

    let corridor: Vec<&TickOutput> = ticks[end..]
        .iter()
        .filter(|k| {
            let p = k.true_pose;
            heading_near(k, 0.0) && (p.y - r7.y).abs() < 1e-6 && p.x >= r7.x + 1.0 && p.x <= r103.x - 1.0
        })
        .collect();
    let b = if corridor.is_empty() {
        Err("worker never walked the shared corridor".into())
    } else {
        let bad = corridor.iter().find(|k| {
            let pu = p_unknown(k);
            argmax_label(k) != "unknown" || k.goal_labels.iter().any(|l| p_goal(k, l).unwrap() >= pu)
        });
        let worst = corridor
            .iter()
            .map(|k| k.goal_labels.iter().map(|l| p_goal(k, l).unwrap()).fold(0.0, f64::max) - p_unknown(k))
            .fold(f64::NEG_INFINITY, f64::max);
        let msg = format!(
            "{} ticks on x in [{:.1}, {:.1}], max(P goal) - P(G_?) <= {worst:.3}",
            corridor.len(),
            r7.x + 1.0,
            r103.x - 1.0
        );
        match bad {
            None => Ok(msg),
            Some(k) => Err(format!("{msg}; fails at t={:.1} argmax {}", k.t, argmax_label(k))),
        }
    };

    let c = match ticks[end..]
        .iter()
        .find(|k| heading_near(k, 0.0) && (k.true_pose.y - r103.y).abs() < 1e-6 && k.true_pose.x >= r103.x)
    {
        None => Err("worker never passed the R17 turn".into()),
        Some(k0) => {
            let p0 = p_goal(k0, "R17").ok_or("R17 missing")?;
            let k2 = latest_at(ticks, k0.t + 2.0).ok_or("trace ends early")?;
            let p2 = p_goal(k2, "R17").ok_or("R17 missing")?;
            let msg = format!("P(R17) {p0:.3} at t={:.1} -> {p2:.3} at t={:.1}", k0.t, k2.t);
            if p2 < 0.5 * p0 {
                Ok(msg)
            } else {
                Err(msg)
            }
        }
    };

    let reached = ticks
        .iter()
        .position(|k| k.events.iter().any(|e| matches!(e, SimEvent::GoalReached { goal } if goal == "R17")));
    let d = match reached {
        None => Err("R17 never reached".into()),
        Some(r) => match ticks[r..].iter().find(|k| heading_near(k, -std::f64::consts::FRAC_PI_2) && k.true_pose.y < r17.y) {
            None => Err("worker never walked past R17".into()),
            Some(k0) => {
                let hit = ticks
                    .iter()
                    .filter(|k| k.t >= k0.t - 1e-9 && k.t <= k0.t + 1.0 + 1e-9)
                    .find(|k| argmax_label(k) == "irrational");
                match hit {
                    Some(k) => Ok(format!("passed at t={:.1}, argmax G_x at t={:.1}", k0.t, k.t)),
                    None => Err(format!("passed at t={:.1}, no G_x within 1 s", k0.t)),
                }
            }
        },
    };
    Ok(LabCheckpoints {
        blocked_then_hesitating: a,
        shared_corridor: b,
        missed_turn: c,
        passed_last_goal: d,
    })
}

/// Largest probability difference between two runs over every label, from
/// `settle` seconds after the first goal addition onward.
pub fn goal_addition_gap(known: &Run, added: &Run, settle: f64) -> Result<(f64, f64), String> {
    let t_add = added
        .ticks
        .iter()
        .find(|k| k.events.iter().any(|e| matches!(e, SimEvent::GoalAdded { .. })))
        .ok_or("no goal was added")?
        .t;
    if known.ticks.len() != added.ticks.len() {
        return Err("runs differ in length".into());
    }
    let mut worst = 0.0f64;
    for (a, b) in known.ticks.iter().zip(&added.ticks) {
        if a.t < t_add + settle - 1e-9 {
            continue;
        }
        for l in &a.goal_labels {
            let pb = p_goal(b, l).ok_or_else(|| format!("goal {l} missing at t={:.1}", b.t))?;
            worst = worst.max((p_goal(a, l).unwrap() - pb).abs());
        }
        worst = worst.max((p_unknown(a) - p_unknown(b)).abs());
        worst = worst.max((p_irrational(a) - p_irrational(b)).abs());
    }
    Ok((t_add, worst))
}

pub struct FleetStats {
    pub wall: Duration,
    pub violations: usize,
    pub max_latency: Duration,
    pub updates: usize,
}

pub fn fleet_stats(run: &Run) -> FleetStats {
    let lat: Vec<Duration> = run.ticks.iter().filter_map(|k| k.latency).collect();
    FleetStats {
        wall: run.wall,
        violations: run.ticks.iter().map(|k| k.violations).sum(),
        max_latency: lat.iter().copied().max().unwrap_or_default(),
        updates: lat.len(),
    }
}
