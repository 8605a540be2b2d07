//! Brute-force references shared by the oracle tests and the acceptance run.

#![allow(dead_code)]

use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vi_core::floorplan::{distance_transform, Cell, DistanceField, OccupancyGrid};
use vi_core::geom::Point;
use vi_core::hmm::{initial_distribution, HmmParams, IntentionState, TransitionMatrix};
use vi_core::planner::Planner;
use vi_core::voronoi::{build_skeleton, Skeleton, VoronoiGraph};

/// Random rectangle map with the boundary ring occupied.
pub fn random_map<R: Rng>(rng: &mut R, size: usize, cell_size: f64) -> OccupancyGrid {
    let mut cells = vec![Cell::Free; size * size];
    let rects = rng.random_range(3..=14);
    for _ in 0..rects {
        let w = rng.random_range(1..=size / 4);
        let h = rng.random_range(1..=size / 4);
        let x0 = rng.random_range(0..size - w);
        let y0 = rng.random_range(0..size - h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                cells[y * size + x] = Cell::Occupied;
            }
        }
    }
    OccupancyGrid::new(size, size, cell_size, Point::new(0.0, 0.0), cells).expect("valid grid")
}

/// Squared distance in cells from every cell to the nearest occupied cell.
pub fn brute_edt(grid: &OccupancyGrid) -> Vec<u64> {
    let w = grid.width();
    let occupied: Vec<(i64, i64)> = (0..grid.len())
        .filter(|&i| !grid.is_free_index(i))
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    (0..grid.len())
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            occupied
                .iter()
                .map(|&(ox, oy)| ((x - ox).pow(2) + (y - oy).pow(2)) as u64)
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect()
}

pub fn check_edt(grid: &OccupancyGrid, field: &DistanceField) -> Result<(), String> {
    let want = brute_edt(grid);
    for (i, &w) in want.iter().enumerate() {
        let got = field.squared_cells(i);
        if got != w {
            return Err(format!("cell {:?}: edt {got}, brute force {w}", grid.coords(i)));
        }
    }
    Ok(())
}

/// Every skeleton cell has a nearest obstacle cell and a second, non-adjacent
/// obstacle cell whose distances differ by at most one cell diagonal.
pub fn check_equidistance(grid: &OccupancyGrid, skeleton: &Skeleton) -> Result<(), String> {
    let w = grid.width();
    let occupied: Vec<(i64, i64)> = (0..grid.len())
        .filter(|&i| !grid.is_free_index(i))
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    let tol = std::f64::consts::SQRT_2 + 1e-9;
    for &c in skeleton.cells() {
        let (x, y) = ((c % w) as i64, (c / w) as i64);
        let dist = |o: &(i64, i64)| ((x - o.0) as f64).hypot((y - o.1) as f64);
        let d1 = occupied.iter().map(dist).fold(f64::INFINITY, f64::min);
        let nearest: Vec<&(i64, i64)> = occupied.iter().filter(|o| dist(o) <= d1 + 1e-9).collect();
        let ok = occupied.iter().filter(|o| dist(o) <= d1 + tol).any(|b| {
            nearest
                .iter()
                .any(|a| a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)) >= 2)
        });
        if !ok {
            return Err(format!(
                "skeleton cell ({x}, {y}) has a single nearest obstacle at {:.3} m",
                d1 * grid.cell_size()
            ));
        }
    }
    Ok(())
}

/// 4-connected components of free cells.
pub fn free_components(grid: &OccupancyGrid) -> Vec<Vec<usize>> {
    let (w, h) = (grid.width(), grid.height());
    let mut label = vec![usize::MAX; grid.len()];
    let mut out = Vec::new();
    for s in 0..grid.len() {
        if !grid.is_free_index(s) || label[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![s];
        label[s] = id;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut push = |n: usize| {
                if grid.is_free_index(n) && label[n] == usize::MAX {
                    label[n] = id;
                    comp.push(n);
                    queue.push_back(n);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        out.push(comp);
    }
    out
}

/// Within every free component the skeleton forms exactly one piece.
pub fn check_connectivity(grid: &OccupancyGrid, skeleton: &Skeleton) -> Result<(), String> {
    let pieces = skeleton.components();
    let mut piece_of = vec![usize::MAX; grid.len()];
    for (k, p) in pieces.iter().enumerate() {
        for &c in p {
            piece_of[c] = k;
        }
    }
    for comp in free_components(grid) {
        let inside: BTreeSet<usize> = comp.iter().map(|&c| piece_of[c]).filter(|&k| k != usize::MAX).collect();
        if inside.len() > 1 {
            let (x, y) = grid.coords(comp[0]);
            return Err(format!(
                "free region at ({x}, {y}) with {} cells holds {} skeleton pieces",
                comp.len(),
                inside.len()
            ));
        }
        if inside.is_empty() && comp.len() > 8 {
            let (x, y) = grid.coords(comp[0]);
            return Err(format!("free region at ({x}, {y}) with {} cells has no skeleton", comp.len()));
        }
    }
    Ok(())
}

/// Dijkstra from every goal over the edges not in `cut`.
pub fn dijkstra_all(n: usize, edges: &[(usize, usize, f64)], cut: &BTreeSet<usize>, goals: &[usize]) -> Vec<Vec<Option<f64>>> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    let mut adj = vec![Vec::new(); n];
    for (k, &(a, b, l)) in edges.iter().enumerate() {
        if !cut.contains(&k) {
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
    }
    goals
        .iter()
        .map(|&g| {
            let mut dist = vec![None; n];
            let mut heap = BinaryHeap::from([Item(0.0, g)]);
            while let Some(Item(d, i)) = heap.pop() {
                if dist[i].is_some() {
                    continue;
                }
                dist[i] = Some(d);
                for &(j, l) in &adj[i] {
                    if dist[j].is_none() {
                        heap.push(Item(d + l, j));
                    }
                }
            }
            dist
        })
        .collect()
}

/// Normalized max-product scores after each row, by enumerating every state
/// path depth first.
pub fn brute_viterbi(transition: &TransitionMatrix<f64>, initial: &[f64], rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fn walk(transition: &TransitionMatrix<f64>, rows: &[Vec<f64>], depth: usize, state: usize, p: f64, best: &mut [Vec<f64>]) {
        if depth == rows.len() {
            return;
        }
        for next in 0..best[depth].len() {
            let q = p * transition.get(state, next) * rows[depth][next];
            best[depth][next] = best[depth][next].max(q);
            walk(transition, rows, depth + 1, next, q, best);
        }
    }
    let n = initial.len();
    let mut best = vec![vec![0.0f64; n]; rows.len()];
    for (s, &p) in initial.iter().enumerate() {
        if p > 0.0 {
            walk(transition, rows, 0, s, p, &mut best);
        }
    }
    for b in &mut best {
        let sum: f64 = b.iter().sum();
        b.iter_mut().for_each(|x| *x /= sum);
    }
    best
}

/// Random connected graph: a random spanning tree plus extra edges. Lengths
/// are at least the straight-line distance unless `shortcuts` is set.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, shortcuts: bool) -> (Vec<Point>, Vec<(usize, usize, f64)>) {
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)))
        .collect();
    let mut edges = Vec::new();
    let length = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
        let d = pts[a].distance(pts[b]);
        let f = if shortcuts { rng.random_range(0.2..1.5) } else { rng.random_range(1.0..1.5) };
        (d * f).max(1e-3)
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        let l = length(rng, i, j);
        edges.push((i, j, l));
    }
    for _ in 0..rng.random_range(0..=n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            let l = length(rng, a, b);
            edges.push((a, b, l));
        }
    }
    (pts, edges)
}

fn compare(planner: &Planner, edges: &[(usize, usize, f64)], cut: &BTreeSet<usize>, n: usize) -> Result<(), String> {
    let graph = planner.graph();
    let goals: Vec<usize> = (0..graph.goal_count()).map(|j| graph.goal_node(j)).collect();
    let mapped: Vec<(usize, usize, f64)> = graph.edges().iter().map(|e| (e.a, e.b, e.length)).collect();
    assert_eq!(mapped.len(), edges.len());
    let want = dijkstra_all(n, &mapped, cut, &goals);
    for (j, col) in want.iter().enumerate() {
        for (i, w) in col.iter().enumerate() {
            match w {
                Some(d) => {
                    let got = planner.distance(i, j);
                    if !planner.is_reachable(i, j) || (got - d).abs() > 1e-9 {
                        return Err(format!("node {i} goal {j}: planner {got}, dijkstra {d}"));
                    }
                }
                None if planner.is_reachable(i, j) => {
                    return Err(format!("node {i} goal {j}: planner reachable, dijkstra not"));
                }
                None => {}
            }
        }
    }
    Ok(())
}

/// Random graphs with random cut and restore sequences, checked against
/// Dijkstra after every operation.
pub fn planner_fuzz(graphs: u64, ops: usize, first_seed: u64) -> Result<(), String> {
    for seed in first_seed..first_seed + graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=100);
        let (pts, edges) = random_graph(&mut rng, n, seed % 3 == 0);
        let goal_count = rng.random_range(1..=4.min(n));
        let goals: Vec<usize> = rand::seq::index::sample(&mut rng, n, goal_count).into_vec();
        let (graph, _) = VoronoiGraph::synthetic(&pts, &edges, &goals).map_err(|e| e.to_string())?;
        let mut planner = Planner::new(graph);
        let mut held: Vec<(usize, usize)> = Vec::new();
        compare(&planner, &edges, &BTreeSet::new(), n)?;
        for op in 0..ops {
            if !held.is_empty() && rng.random_bool(0.45) {
                let (e, r) = held.swap_remove(rng.random_range(0..held.len()));
                planner.restore_edge(e, r).map_err(|e| e.to_string())?;
            } else {
                let e = rng.random_range(0..edges.len());
                let r = rng.random_range(0..3);
                planner.cut_edge(e, r).map_err(|e| e.to_string())?;
                if !held.contains(&(e, r)) {
                    held.push((e, r));
                }
            }
            let cut: BTreeSet<usize> = held.iter().map(|&(e, _)| e).collect();
            if let Err(msg) = compare(&planner, &edges, &cut, n) {
                return Err(format!("graph {seed} op {op}: {msg}"));
            }
        }
        while let Some((e, r)) = held.pop() {
            planner.restore_edge(e, r).map_err(|e| e.to_string())?;
        }
        let fresh = Planner::new(planner.graph().clone());
        for i in 0..n {
            for j in 0..goal_count {
                if planner.distance(i, j).to_bits() != fresh.distance(i, j).to_bits() {
                    return Err(format!("graph {seed}: node {i} goal {j} differs after restoring every cut"));
                }
            }
        }
    }
    Ok(())
}

fn random_params(rng: &mut ChaCha8Rng, goals: usize) -> HmmParams<f64> {
    let gamma = rng.random_range(0.01..0.3);
    let beta = rng.random_range(0.01..(1.0 - gamma) / goals as f64);
    HmmParams {
        alpha: rng.random_range(0.01..0.99),
        beta,
        gamma,
        delta: rng.random_range(0.01..0.99),
        ..HmmParams::default()
    }
}

/// Random decoder inputs checked against exhaustive path enumeration.
pub fn viterbi_fuzz(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let goals = rng.random_range(1..=3);
        let len = rng.random_range(1..=10);
        let params = if case % 4 == 0 { HmmParams::default() } else { random_params(&mut rng, goals) };
        let transition = TransitionMatrix::build(goals, &params).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..goals + 2).map(|_| rng.random_range(0.01..1.0)).collect())
            .collect();
        let want = brute_viterbi(&transition, &initial_distribution(goals), &rows);
        let mut state = IntentionState::new(goals, &params).map_err(|e| e.to_string())?;
        for (t, row) in rows.iter().enumerate() {
            state.step(&transition, row).map_err(|e| e.to_string())?;
            for (k, (&got, &w)) in state.probabilities().iter().zip(&want[t]).enumerate() {
                if (got - w).abs() > 1e-9 {
                    return Err(format!("case {case} step {t} state {k}: {got} vs {w}"));
                }
            }
        }
    }
    Ok(())
}

/// EDT, equidistance and connectivity on random square maps.
pub fn gvd_suite(maps: u64, size: usize, first_seed: u64) -> Result<(), String> {
    for seed in first_seed..first_seed + maps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_map(&mut rng, size, 0.05);
        let field = distance_transform(&grid);
        let wrap = |e: String| format!("map {seed}: {e}");
        check_edt(&grid, &field).map_err(wrap)?;
        let skeleton = build_skeleton(&field, 0.0).map_err(|e| wrap(e.to_string()))?;
        check_equidistance(&grid, &skeleton).map_err(wrap)?;
        check_connectivity(&grid, &skeleton).map_err(wrap)?;
    }
    Ok(())
}
pub mod scenarios;
