//! Goal distances over the Voronoi graph under robot edge cuts, plus grid
//! line-of-sight.
//!
//! One incremental search (LPA*, i.e. D*-Lite with a static root) runs per
//! goal, rooted at the goal node. Edge weights are integer picometers so that
//! cutting and restoring an edge returns every distance bit-for-bit.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::floorplan::OccupancyGrid;
use crate::geom::{point_segment_distance, Point};
use crate::voronoi::VoronoiGraph;

/// Unreachable entries are reported as this multiple of the map diagonal.
pub const UNREACHABLE_FACTOR: f64 = 10.0;
pub const DEFAULT_ROBOT_RADIUS: f64 = 1.0;

const PICOS_PER_METER: f64 = 1e12;
const INF: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
    #[error("edge {edge} is not cut by robot {robot}")]
    NotCut { edge: usize, robot: usize },
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: usize, to: usize },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

/// A robot seen as a moving disk obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobotDisk {
    pub id: usize,
    pub position: Point,
    pub radius: f64,
}

/// `n x g` matrix of shortest distances (meters) from each node to each goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDistanceField {
    nodes: usize,
    goals: usize,
    data: Vec<f64>,
    reachable: Vec<bool>,
    cap: f64,
}

impl GoalDistanceField {
    /// Builds a field from explicit rows; entries at or above `cap` count as
    /// unreachable.
    pub fn from_rows(rows: &[Vec<f64>], cap: f64) -> Self {
        let goals = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(|&x| x.min(cap))).collect();
        let reachable = data.iter().map(|&x| x < cap).collect();
        Self {
            nodes: rows.len(),
            goals,
            data,
            reachable,
            cap,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn goal_count(&self) -> usize {
        self.goals
    }

    /// Distance from node `i` to goal `j`; the cap when unreachable.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.goals + j]
    }

    pub fn is_reachable(&self, i: usize, j: usize) -> bool {
        self.reachable[i * self.goals + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.goals..(i + 1) * self.goals]
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("node");
        for l in labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for i in 0..self.nodes {
            let _ = write!(out, "{i}");
            for j in 0..self.goals {
                if self.is_reachable(i, j) {
                    let _ = write!(out, ",{}", self.get(i, j));
                } else {
                    out.push_str(",unreachable");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Cut edges and the robots responsible for each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeCutSet {
    cuts: BTreeMap<usize, BTreeSet<usize>>,
}

impl EdgeCutSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, edge: usize, robot: usize) -> bool {
        self.cuts.entry(edge).or_default().insert(robot)
    }

    pub fn remove(&mut self, edge: usize, robot: usize) -> bool {
        let Some(set) = self.cuts.get_mut(&edge) else {
            return false;
        };
        let removed = set.remove(&robot);
        if set.is_empty() {
            self.cuts.remove(&edge);
        }
        removed
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.cuts.contains_key(&edge)
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.cuts.keys().copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cuts.iter().flat_map(|(&e, rs)| rs.iter().map(move |&r| (e, r)))
    }

    pub fn robots(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        self.cuts.get(&edge).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

/// Outcome of a cut update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutDelta {
    /// `(edge, robot)` pairs added.
    pub added: EdgeCutSet,
    /// `(edge, robot)` pairs removed.
    pub removed: EdgeCutSet,
    /// Goal indices whose node lies inside some robot disk.
    pub goals_covered: Vec<usize>,
    /// Distance entries recomputed by the incremental searches.
    pub touched: usize,
}

#[derive(Debug, Clone)]
struct GoalSearch {
    root: usize,
    g: Vec<u64>,
    rhs: Vec<u64>,
    key: Vec<u64>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
}

impl GoalSearch {
    fn new(root: usize, n: usize) -> Self {
        let mut s = Self {
            root,
            g: vec![INF; n],
            rhs: vec![INF; n],
            key: vec![INF; n],
            heap: BinaryHeap::new(),
        };
        s.rhs[root] = 0;
        s.key[root] = 0;
        s.heap.push(Reverse((0, root)));
        s
    }

    fn update_vertex(&mut self, u: usize, adj: &[Vec<(usize, usize)>], weight: &[u64]) {
        if u != self.root {
            self.rhs[u] = adj[u]
                .iter()
                .filter(|&&(_, e)| weight[e] != INF)
                .map(|&(v, e)| self.g[v].saturating_add(weight[e]))
                .min()
                .unwrap_or(INF);
        }
        if self.g[u] != self.rhs[u] {
            let k = self.g[u].min(self.rhs[u]);
            self.key[u] = k;
            self.heap.push(Reverse((k, u)));
        } else {
            self.key[u] = INF;
        }
    }

    /// Runs until every node is consistent. Returns the number of nodes whose
    /// distance was rewritten.
    fn compute(&mut self, adj: &[Vec<(usize, usize)>], weight: &[u64], stamp: &mut [bool]) -> usize {
        let mut touched = Vec::new();
        while let Some(Reverse((k, u))) = self.heap.pop() {
            if k != self.key[u] {
                continue;
            }
            self.key[u] = INF;
            let before = self.g[u];
            if self.g[u] > self.rhs[u] {
                self.g[u] = self.rhs[u];
            } else {
                self.g[u] = INF;
                self.update_vertex(u, adj, weight);
            }
            if self.g[u] != before && !stamp[u] {
                stamp[u] = true;
                touched.push(u);
            }
            for &(v, _) in &adj[u] {
                self.update_vertex(v, adj, weight);
            }
        }
        for &u in &touched {
            stamp[u] = false;
        }
        touched.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: Point,
    hi: Point,
}

/// Incrementally maintained goal distances over an owned copy of the graph.
#[derive(Debug, Clone)]
pub struct Planner {
    graph: VoronoiGraph,
    adjacency: Vec<Vec<(usize, usize)>>,
    base_weight: Vec<u64>,
    weight: Vec<u64>,
    searches: Vec<GoalSearch>,
    cuts: EdgeCutSet,
    bounds: Vec<Bounds>,
    cap: f64,
    stamp: Vec<bool>,
    euclidean_heuristic: bool,
    touched_total: usize,
}

fn to_picos(meters: f64) -> u64 {
    (meters * PICOS_PER_METER).round() as u64
}

fn to_meters(picos: u64) -> f64 {
    picos as f64 / PICOS_PER_METER
}

impl Planner {
    pub fn new(graph: VoronoiGraph) -> Self {
        let n = graph.node_count();
        let adjacency = graph.adjacency();
        let base_weight: Vec<u64> = graph.edges().iter().map(|e| to_picos(e.length).max(1)).collect();
        let geo = graph.geometry();
        let bounds = graph
            .edges()
            .iter()
            .map(|e| {
                let pts = edge_points(&graph, e.a, e.b, &e.cells);
                let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in pts {
                    lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                    hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
                }
                Bounds { lo, hi }
            })
            .collect();
        let euclidean_heuristic = graph
            .edges()
            .iter()
            .all(|e| e.length + 1e-9 >= graph.position(e.a).distance(graph.position(e.b)));
        let mut planner = Self {
            adjacency,
            weight: base_weight.clone(),
            base_weight,
            searches: Vec::new(),
            cuts: EdgeCutSet::new(),
            bounds,
            cap: UNREACHABLE_FACTOR * geo.diagonal(),
            stamp: vec![false; n],
            euclidean_heuristic,
            touched_total: 0,
            graph,
        };
        for j in 0..planner.graph.goal_count() {
            let mut s = GoalSearch::new(planner.graph.goal_node(j), n);
            s.compute(&planner.adjacency, &planner.weight, &mut planner.stamp);
            planner.searches.push(s);
        }
        planner
    }

    pub fn graph(&self) -> &VoronoiGraph {
        &self.graph
    }

    pub fn cuts(&self) -> &EdgeCutSet {
        &self.cuts
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Total distance entries rewritten since construction.
    pub fn touched_total(&self) -> usize {
        self.touched_total
    }

    /// Distance from node `i` to goal `j` in meters, capped when unreachable.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self.searches[j].g[i] {
            INF => self.cap,
            d => to_meters(d),
        }
    }

    pub fn is_reachable(&self, i: usize, j: usize) -> bool {
        self.searches[j].g[i] != INF
    }

    pub fn field(&self) -> GoalDistanceField {
        let n = self.graph.node_count();
        let g = self.searches.len();
        let mut data = Vec::with_capacity(n * g);
        let mut reachable = Vec::with_capacity(n * g);
        for i in 0..n {
            for j in 0..g {
                data.push(self.distance(i, j));
                reachable.push(self.is_reachable(i, j));
            }
        }
        GoalDistanceField {
            nodes: n,
            goals: g,
            data,
            reachable,
            cap: self.cap,
        }
    }

    fn set_weight(&mut self, edge: usize, weight: u64) -> usize {
        self.set_weights(&[(edge, weight)])
    }

    /// Applies several weight changes, then repairs every search once.
    fn set_weights(&mut self, changes: &[(usize, u64)]) -> usize {
        let mut ends = Vec::new();
        for &(edge, weight) in changes {
            if self.weight[edge] != weight {
                self.weight[edge] = weight;
                let e = &self.graph.edges()[edge];
                ends.extend([e.a, e.b]);
            }
        }
        if ends.is_empty() {
            return 0;
        }
        ends.sort_unstable();
        ends.dedup();
        let mut touched = 0;
        for s in &mut self.searches {
            for &u in &ends {
                s.update_vertex(u, &self.adjacency, &self.weight);
            }
            touched += s.compute(&self.adjacency, &self.weight, &mut self.stamp);
        }
        self.touched_total += touched;
        touched
    }

    /// Marks `edge` as cut by `robot`. Returns the number of touched entries.
    pub fn cut_edge(&mut self, edge: usize, robot: usize) -> Result<usize, PlannerError> {
        if edge >= self.weight.len() {
            return Err(PlannerError::UnknownEdge(edge));
        }
        self.cuts.insert(edge, robot);
        Ok(self.set_weight(edge, INF))
    }

    /// Removes `robot`'s cut from `edge`; the edge returns once no robot cuts it.
    pub fn restore_edge(&mut self, edge: usize, robot: usize) -> Result<usize, PlannerError> {
        if edge >= self.weight.len() {
            return Err(PlannerError::UnknownEdge(edge));
        }
        if !self.cuts.remove(edge, robot) {
            return Err(PlannerError::NotCut { edge, robot });
        }
        if self.cuts.contains(edge) {
            return Ok(0);
        }
        Ok(self.set_weight(edge, self.base_weight[edge]))
    }

    /// Edges whose skeleton path passes within `radius + cell_size / 2` of the
    /// robot center. Robots whose center lies on an occupied cell (under a
    /// rack) cut nothing.
    pub fn edges_hit_by(&self, robot: &RobotDisk, grid: Option<&OccupancyGrid>) -> Vec<usize> {
        if let Some(grid) = grid {
            if !grid.is_free_at(robot.position) {
                return Vec::new();
            }
        }
        let geo = self.graph.geometry();
        let reach = robot.radius + 0.5 * geo.cell_size;
        let p = robot.position;
        let mut out = Vec::new();
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let b = &self.bounds[e];
            if p.x < b.lo.x - reach || p.x > b.hi.x + reach || p.y < b.lo.y - reach || p.y > b.hi.y + reach {
                continue;
            }
            let pts = edge_points(&self.graph, edge.a, edge.b, &edge.cells);
            let hit = if pts.len() == 1 {
                pts[0].distance(p) <= reach
            } else {
                pts.windows(2).any(|w| point_segment_distance(p, w[0], w[1]) <= reach)
            };
            if hit {
                out.push(e);
            }
        }
        out
    }

    fn goals_covered(&self, robots: &[RobotDisk], grid: Option<&OccupancyGrid>) -> Vec<usize> {
        (0..self.searches.len())
            .filter(|&j| {
                let gp = self.graph.position(self.graph.goal_node(j));
                robots.iter().any(|r| {
                    grid.is_none_or(|g| g.is_free_at(r.position)) && r.position.distance(gp) <= r.radius
                })
            })
            .collect()
    }

    /// Adds the cuts caused by `robots` on top of the current ones.
    pub fn apply_robot_obstacles(&mut self, robots: &[RobotDisk], grid: Option<&OccupancyGrid>) -> CutDelta {
        let mut delta = CutDelta::default();
        for r in robots {
            for e in self.edges_hit_by(r, grid) {
                let already = self.cuts.robots(e).any(|x| x == r.id);
                if !already {
                    delta.added.insert(e, r.id);
                    delta.touched += self.cut_edge(e, r.id).expect("edge from graph");
                }
            }
        }
        delta.goals_covered = self.goals_covered(robots, grid);
        delta
    }

    /// Removes previously applied cuts; the inverse of [`Self::apply_robot_obstacles`].
    pub fn release_robot_obstacles(&mut self, cuts: &EdgeCutSet) -> Result<usize, PlannerError> {
        for e in cuts.edges() {
            if e >= self.weight.len() {
                return Err(PlannerError::UnknownEdge(e));
            }
        }
        let mut touched = 0;
        for (e, r) in cuts.pairs() {
            touched += self.restore_edge(e, r)?;
        }
        Ok(touched)
    }

    /// Replaces all robot cuts with those caused by `robots`, touching only
    /// edges whose state changes.
    pub fn set_robots(&mut self, robots: &[RobotDisk], grid: Option<&OccupancyGrid>) -> CutDelta {
        let mut wanted = EdgeCutSet::new();
        for r in robots {
            for e in self.edges_hit_by(r, grid) {
                wanted.insert(e, r.id);
            }
        }
        let mut delta = CutDelta::default();
        let current: BTreeSet<(usize, usize)> = self.cuts.pairs().collect();
        let wanted_pairs: BTreeSet<(usize, usize)> = wanted.pairs().collect();
        let mut changed = BTreeSet::new();
        for &(e, r) in wanted_pairs.difference(&current) {
            delta.added.insert(e, r);
            self.cuts.insert(e, r);
            changed.insert(e);
        }
        for &(e, r) in current.difference(&wanted_pairs) {
            delta.removed.insert(e, r);
            self.cuts.remove(e, r);
            changed.insert(e);
        }
        let changes: Vec<(usize, u64)> = changed
            .into_iter()
            .map(|e| (e, if self.cuts.contains(e) { INF } else { self.base_weight[e] }))
            .collect();
        delta.touched = self.set_weights(&changes);
        delta.goals_covered = self.goals_covered(robots, grid);
        delta
    }

    /// Optimal node route over uncut edges (A*, Euclidean heuristic when admissible).
    pub fn shortest_route(&self, from: usize, to: usize) -> Result<Route, PlannerError> {
        let n = self.graph.node_count();
        if from >= n {
            return Err(PlannerError::UnknownNode(from));
        }
        if to >= n {
            return Err(PlannerError::UnknownNode(to));
        }
        let target = self.graph.position(to);
        let h = |u: usize| -> u64 {
            if self.euclidean_heuristic {
                // Admissible: rounding down keeps it below the integer weights.
                (self.graph.position(u).distance(target) * PICOS_PER_METER * (1.0 - 1e-9)) as u64
            } else {
                0
            }
        };
        let mut dist = vec![INF; n];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut closed = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0;
        heap.push(Reverse((h(from), from)));
        while let Some(Reverse((_, u))) = heap.pop() {
            if closed[u] {
                continue;
            }
            closed[u] = true;
            if u == to {
                break;
            }
            for &(v, e) in &self.adjacency[u] {
                if self.weight[e] == INF {
                    continue;
                }
                let nd = dist[u] + self.weight[e];
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = Some((u, e));
                    heap.push(Reverse((nd.saturating_add(h(v)), v)));
                }
            }
        }
        if dist[to] == INF {
            return Err(PlannerError::Unreachable { from, to });
        }
        let mut nodes = vec![to];
        let mut edges = Vec::new();
        let mut cur = to;
        while let Some((p, e)) = parent[cur] {
            nodes.push(p);
            edges.push(e);
            cur = p;
        }
        nodes.reverse();
        edges.reverse();
        let mut cells = Vec::new();
        for (k, &e) in edges.iter().enumerate() {
            let edge = &self.graph.edges()[e];
            let mut path = edge.cells.clone();
            if edge.a != nodes[k] {
                path.reverse();
            }
            if !cells.is_empty() && !path.is_empty() {
                path.remove(0);
            }
            cells.extend(path);
        }
        Ok(Route {
            nodes,
            edges,
            cells,
            length: to_meters(dist[to]),
        })
    }
}

/// A route through the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    /// Skeleton cells along the route; empty for abstract graphs.
    pub cells: Vec<usize>,
    pub length: f64,
}

impl Route {
    /// World waypoints along the route.
    pub fn waypoints(&self, graph: &VoronoiGraph) -> Vec<Point> {
        if self.cells.is_empty() {
            self.nodes.iter().map(|&n| graph.position(n)).collect()
        } else {
            let geo = graph.geometry();
            self.cells.iter().map(|&c| geo.cell_center(c)).collect()
        }
    }
}

fn edge_points(graph: &VoronoiGraph, a: usize, b: usize, cells: &[usize]) -> Vec<Point> {
    if cells.is_empty() {
        vec![graph.position(a), graph.position(b)]
    } else {
        let geo = graph.geometry();
        cells.iter().map(|&c| geo.cell_center(c)).collect()
    }
}

/// Goal distances of a graph with no cuts.
pub fn compute_goal_distances(graph: &VoronoiGraph) -> GoalDistanceField {
    Planner::new(graph.clone()).field()
}

/// True when the segment `a`-`b` crosses no occupied cell and no robot disk.
/// Every cell the segment touches is tested, including both cells at exact
/// corner crossings.
pub fn line_of_sight(grid: &OccupancyGrid, a: Point, b: Point, robots: &[RobotDisk]) -> bool {
    if robots.iter().any(|r| point_segment_distance(r.position, a, b) < r.radius) {
        return false;
    }
    grid_line_of_sight(grid, a, b)
}

/// Supercover traversal of the grid cells touched by `a`-`b`.
pub fn grid_line_of_sight(grid: &OccupancyGrid, a: Point, b: Point) -> bool {
    // Canonical direction keeps the boundary conventions symmetric.
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let (ax, ay) = grid.to_cell_coords(a);
    let (bx, by) = grid.to_cell_coords(b);
    let blocked = |x: i64, y: i64| grid.is_occupied_at(x, y);
    let (mut x, mut y) = (ax.floor() as i64, ay.floor() as i64);
    let (end_x, end_y) = (bx.floor() as i64, by.floor() as i64);
    if blocked(x, y) {
        return false;
    }
    let dx = bx - ax;
    let dy = by - ay;
    let step_x = if dx > 0.0 { 1 } else { -1 };
    let step_y = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        (ax.floor() + 1.0 - ax) * t_delta_x
    } else if dx < 0.0 {
        (ax - ax.floor()) * t_delta_x
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        (ay.floor() + 1.0 - ay) * t_delta_y
    } else if dy < 0.0 {
        (ay - ay.floor()) * t_delta_y
    } else {
        f64::INFINITY
    };
    while (x, y) != (end_x, end_y) {
        let tx = t_max_x;
        let ty = t_max_y;
        if tx > 1.0 && ty > 1.0 {
            break;
        }
        if (tx - ty).abs() <= 1e-12 {
            // Passing through a corner: both side cells are touched.
            if blocked(x + step_x, y) || blocked(x, y + step_y) {
                return false;
            }
            x += step_x;
            y += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if tx < ty {
            x += step_x;
            t_max_x += t_delta_x;
        } else {
            y += step_y;
            t_max_y += t_delta_y;
        }
        if blocked(x, y) {
            return false;
        }
    }
    true
}
