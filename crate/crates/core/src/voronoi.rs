//! Generalized Voronoi diagram extraction and the reduced node graph.
//!
//! The skeleton is the set of free cells where the nearest-obstacle feature
//! changes between two obstacle cells that are not neighbours of each other,
//! thinned to one cell width. The graph keeps junctions (skeleton degree >= 3)
//! and goal nodes, traces the skeleton between them and drops dead ends.
//!
//! Node numbering always places goal nodes last, in goal order, so selecting
//! goal columns of a node-by-node matrix is a suffix selection.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::floorplan::{DistanceField, OccupancyGrid};
use crate::geom::Point;

pub const DEFAULT_MIN_CLEARANCE: f64 = 0.25;
pub const DEFAULT_SNAP_RADIUS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoronoiError {
    #[error("empty skeleton: no free cell qualifies as a Voronoi cell")]
    EmptySkeleton,
    #[error("no goals declared")]
    NoGoals,
    #[error("goal {label} is {distance:.3} m from the skeleton, beyond the snap radius {radius} m")]
    GoalTooFar {
        label: String,
        distance: f64,
        radius: f64,
    },
    #[error("goals {0} and {1} snap to the same skeleton cell")]
    DuplicateGoalCell(String, String),
    #[error("position ({x:.3}, {y:.3}) is not near the skeleton")]
    NotNearSkeleton { x: f64, y: f64 },
    #[error("node {0} is already a goal")]
    AlreadyGoal(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// Grid geometry shared by skeletons and graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: Point,
}

impl GridGeometry {
    pub fn of_grid(grid: &OccupancyGrid) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            cell_size: grid.cell_size(),
            origin: grid.origin(),
        }
    }

    pub fn of_field(field: &DistanceField) -> Self {
        Self {
            width: field.width(),
            height: field.height(),
            cell_size: field.cell_size(),
            origin: field.origin(),
        }
    }

    pub fn cell_center(&self, index: usize) -> Point {
        let (x, y) = (index % self.width, index / self.width);
        Point::new(
            self.origin.x + (x as f64 + 0.5) * self.cell_size,
            self.origin.y + (y as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64 * self.cell_size).hypot(self.height as f64 * self.cell_size)
    }

    fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = ((index % self.width) as i64, (index / self.width) as i64);
        NEIGHBORS8.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && nx < self.width as i64 && ny < self.height as i64)
                .then(|| ny as usize * self.width + nx as usize)
        })
    }

    /// Metric length of one skeleton step between 8-adjacent cells.
    fn step_length(&self, a: usize, b: usize) -> f64 {
        let diagonal = (a % self.width != b % self.width) && (a / self.width != b / self.width);
        if diagonal {
            self.cell_size * std::f64::consts::SQRT_2
        } else {
            self.cell_size
        }
    }

    fn path_length(&self, cells: &[usize]) -> f64 {
        cells.windows(2).map(|w| self.step_length(w[0], w[1])).sum()
    }
}

/// E, NE, N, NW, W, SW, S, SE.
const NEIGHBORS8: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Thin set of grid cells forming the Voronoi diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    geometry: GridGeometry,
    member: Vec<bool>,
    cells: Vec<usize>,
    clearance_sq: Vec<u64>,
}

impl Skeleton {
    /// Builds a skeleton from an explicit cell list; clearances are zero.
    pub fn from_cells(geometry: GridGeometry, cells: &[usize]) -> Self {
        let mut member = vec![false; geometry.width * geometry.height];
        for &c in cells {
            member[c] = true;
        }
        Self::from_member(geometry, member, vec![0; geometry.width * geometry.height])
    }

    fn from_member(geometry: GridGeometry, member: Vec<bool>, clearance_sq: Vec<u64>) -> Self {
        let cells = member
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Self {
            geometry,
            member,
            cells,
            clearance_sq,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Skeleton cell indices in ascending order.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn contains(&self, index: usize) -> bool {
        self.member.get(index).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.geometry.neighbors8(index).filter(|&n| self.member[n])
    }

    pub fn degree(&self, index: usize) -> usize {
        self.neighbors(index).count()
    }

    /// 8-connected components, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.member.len()];
        let mut out = Vec::new();
        for &start in &self.cells {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(c) = queue.pop_front() {
                comp.push(c);
                for n in self.neighbors(c) {
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// True when some 2x2 block lies entirely inside the skeleton.
    pub fn has_thick_block(&self) -> bool {
        let w = self.geometry.width;
        self.cells.iter().any(|&c| {
            let (x, y) = (c % w, c / w);
            x + 1 < w
                && y + 1 < self.geometry.height
                && self.member[c + 1]
                && self.member[c + w]
                && self.member[c + w + 1]
        })
    }
}

/// Extracts the thinned Voronoi skeleton from an exact distance field.
pub fn build_skeleton(field: &DistanceField, min_clearance: f64) -> Result<Skeleton, VoronoiError> {
    let geometry = GridGeometry::of_field(field);
    let (w, h) = (geometry.width, geometry.height);
    let mut member = vec![false; w * h];
    let min_sq = (min_clearance / field.cell_size()).powi(2);

    let qualifies = |i: usize| {
        let sq = field.squared_cells(i);
        !field.is_occupied(i) && sq != u64::MAX && (sq as f64) >= min_sq - 1e-9
    };
    let dist_to = |c: (usize, usize), o: (usize, usize)| {
        (c.0 as f64 - o.0 as f64).hypot(c.1 as f64 - o.1 as f64)
    };
    // Each 4-adjacent pair whose nearest obstacles are not adjacent straddles
    // the bisector; the cell closer to it joins the skeleton.
    for i in 0..w * h {
        if !qualifies(i) {
            continue;
        }
        let (x, y) = field.coords(i);
        for n in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
            if !qualifies(n) {
                continue;
            }
            let oi = field.coords(field.nearest_obstacle(i));
            let on = field.coords(field.nearest_obstacle(n));
            if oi.0.abs_diff(on.0) < 2 && oi.1.abs_diff(on.1) < 2 {
                continue;
            }
            let ci = field.coords(i);
            let cn = field.coords(n);
            let dev_i = (dist_to(ci, oi) - dist_to(ci, on)).abs();
            let dev_n = (dist_to(cn, on) - dist_to(cn, oi)).abs();
            if dev_i <= dev_n {
                member[i] = true;
            } else {
                member[n] = true;
            }
        }
    }

    // One-cell passages: both walls are at distance one, but no 4-adjacent
    // pair straddles the bisector.
    for i in 0..w * h {
        if !qualifies(i) {
            continue;
        }
        let (x, y) = field.coords(i);
        let occ = |dx: i64, dy: i64| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || field.is_occupied(ny as usize * w + nx as usize)
        };
        if (occ(-1, 0) && occ(1, 0)) || (occ(0, -1) && occ(0, 1)) {
            member[i] = true;
        }
    }

    let clearance_sq: Vec<u64> = (0..w * h).map(|i| field.squared_cells(i)).collect();
    thin(&geometry, &mut member, &clearance_sq);
    let skeleton = Skeleton::from_member(geometry, member, clearance_sq);
    if skeleton.is_empty() {
        return Err(VoronoiError::EmptySkeleton);
    }
    Ok(skeleton)
}

/// Sequential topology-preserving thinning; low-clearance cells are peeled first
/// and end points are kept.
fn thin(geometry: &GridGeometry, member: &mut [bool], clearance_sq: &[u64]) {
    let mut order: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
    order.sort_by_key(|&i| (clearance_sq[i], i));
    loop {
        let mut changed = false;
        for &i in &order {
            if member[i] && is_deletable(geometry, member, i) {
                member[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        order.retain(|&i| member[i]);
    }
}

fn ring(geometry: &GridGeometry, member: &[bool], index: usize) -> [bool; 8] {
    let (x, y) = ((index % geometry.width) as i64, (index / geometry.width) as i64);
    let mut out = [false; 8];
    for (k, &(dx, dy)) in NEIGHBORS8.iter().enumerate() {
        let (nx, ny) = (x + dx, y + dy);
        out[k] = nx >= 0
            && ny >= 0
            && nx < geometry.width as i64
            && ny < geometry.height as i64
            && member[ny as usize * geometry.width + nx as usize];
    }
    out
}

/// A cell may go when it has at least two neighbours and its 8-connectivity
/// number is one (removal neither splits the skeleton nor opens a hole).
fn is_deletable(geometry: &GridGeometry, member: &[bool], index: usize) -> bool {
    let r = ring(geometry, member, index);
    if r.iter().filter(|&&b| b).count() < 2 {
        return false;
    }
    let inv = |k: usize| !r[k % 8] as u8;
    let connectivity: u8 = [0usize, 2, 4, 6]
        .iter()
        .map(|&k| inv(k) - inv(k) * inv(k + 1) * inv(k + 2))
        .sum();
    connectivity == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Junction,
    Goal,
    Inserted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphNode {
    pub cell: usize,
    pub position: Point,
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    /// Skeleton cells from `a`'s cell to `b`'s cell.
    pub cells: Vec<usize>,
    /// Meters; the sum of the steps along `cells` for extracted edges.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub snap_radius: f64,
    /// When set, edges longer than this are split by inserted nodes.
    pub max_edge_length: Option<f64>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            snap_radius: DEFAULT_SNAP_RADIUS,
            max_edge_length: None,
        }
    }
}

/// Node graph over the skeleton. Goal nodes occupy the last positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoronoiGraph {
    geometry: GridGeometry,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    snap_radius: f64,
}

impl VoronoiGraph {
    /// Assembles a graph from parts; goal nodes must already be last.
    pub fn from_parts(
        geometry: GridGeometry,
        nodes: Vec<GraphNode>,
        edges: Vec<GraphEdge>,
        snap_radius: f64,
    ) -> Result<Self, VoronoiError> {
        let first_goal = nodes.iter().position(|n| n.kind == NodeKind::Goal).unwrap_or(nodes.len());
        if nodes[first_goal..].iter().any(|n| n.kind != NodeKind::Goal) {
            return Err(VoronoiError::Invalid("goal nodes must come last".into()));
        }
        for e in &edges {
            if e.a >= nodes.len() || e.b >= nodes.len() {
                return Err(VoronoiError::Invalid("edge references unknown node".into()));
            }
            if !(e.length > 0.0) {
                return Err(VoronoiError::Invalid("edge lengths must be positive".into()));
            }
        }
        Ok(Self {
            geometry,
            nodes,
            edges,
            snap_radius,
        })
    }

    /// Abstract graph for tests and tools: positions, weighted edges, goal ids.
    /// Nodes are renumbered so that goals come last; the returned vector maps
    /// input ids to graph ids.
    pub fn synthetic(
        positions: &[Point],
        edges: &[(usize, usize, f64)],
        goals: &[usize],
    ) -> Result<(Self, Vec<usize>), VoronoiError> {
        let n = positions.len();
        let mut order: Vec<usize> = (0..n).filter(|i| !goals.contains(i)).collect();
        order.extend_from_slice(goals);
        let mut map = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| GraphNode {
                cell: 0,
                position: positions[old],
                kind: if goals.contains(&old) { NodeKind::Goal } else { NodeKind::Junction },
                label: goals.contains(&old).then(|| format!("N{old}")),
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b, length)| GraphEdge {
                a: map[a],
                b: map[b],
                cells: Vec::new(),
                length,
            })
            .collect();
        let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        for p in positions {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        let geometry = GridGeometry {
            width: 1,
            height: 1,
            cell_size: span,
            origin: lo,
        };
        Ok((Self::from_parts(geometry, nodes, edges, DEFAULT_SNAP_RADIUS)?, map))
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn goal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Goal).count()
    }

    /// Node id of goal `j` (0-based): `n - g + j`.
    pub fn goal_node(&self, j: usize) -> usize {
        self.nodes.len() - self.goal_count() + j
    }

    pub fn goal_labels(&self) -> Vec<String> {
        let g = self.goal_count();
        self.nodes[self.nodes.len() - g..]
            .iter()
            .enumerate()
            .map(|(j, n)| n.label.clone().unwrap_or_else(|| format!("G{}", j + 1)))
            .collect()
    }

    pub fn goal_index_of(&self, label: &str) -> Option<usize> {
        self.goal_labels().iter().position(|l| l == label)
    }

    pub fn position(&self, node: usize) -> Point {
        self.nodes[node].position
    }

    pub fn snap_radius(&self) -> f64 {
        self.snap_radius
    }

    /// `(neighbour, edge id)` pairs per node.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.a].push((edge.b, e));
            adj[edge.b].push((edge.a, e));
        }
        adj
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    pub fn nearest_node(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.position.distance_sq(p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Inserts a node on the skeleton near `position`, splitting the edge it
    /// lies on. Returns the existing node when the position snaps onto one.
    pub fn insert_node(&mut self, position: Point) -> Result<usize, VoronoiError> {
        let (cell, distance) = self
            .nearest_graph_cell(position)
            .ok_or(VoronoiError::NotNearSkeleton { x: position.x, y: position.y })?;
        if distance > self.snap_radius {
            return Err(VoronoiError::NotNearSkeleton { x: position.x, y: position.y });
        }
        if let Some(node) = self.nodes.iter().position(|n| n.cell == cell) {
            return Ok(node);
        }
        let (edge, k) = self
            .edges
            .iter()
            .enumerate()
            .find_map(|(e, edge)| {
                edge.cells[1..edge.cells.len().saturating_sub(1)]
                    .iter()
                    .position(|&c| c == cell)
                    .map(|k| (e, k + 1))
            })
            .ok_or(VoronoiError::NotNearSkeleton { x: position.x, y: position.y })?;
        let id = self.nodes.len() - self.goal_count();
        self.insert_at(
            id,
            GraphNode {
                cell,
                position: self.geometry.cell_center(cell),
                kind: NodeKind::Inserted,
                label: None,
            },
        );
        self.split_edge(edge, k, id);
        Ok(id)
    }

    /// Turns the node nearest `position` into a goal appended at the end.
    /// Returns the new goal's node id.
    pub fn add_goal(&mut self, position: Point, label: &str) -> Result<usize, VoronoiError> {
        let node = self.insert_node(position)?;
        if self.nodes[node].kind == NodeKind::Goal {
            return Err(VoronoiError::AlreadyGoal(node));
        }
        let last = self.nodes.len() - 1;
        self.move_node(node, last);
        let n = &mut self.nodes[last];
        n.kind = NodeKind::Goal;
        n.label = Some(label.to_string());
        Ok(last)
    }

    /// Turns goal `j` back into an ordinary node placed just before the goals.
    pub fn remove_goal(&mut self, j: usize) -> Result<usize, VoronoiError> {
        let g = self.goal_count();
        if j >= g {
            return Err(VoronoiError::Invalid(format!("goal index {j} out of range")));
        }
        let node = self.goal_node(j);
        let target = self.nodes.len() - g;
        self.move_node(node, target);
        let n = &mut self.nodes[target];
        n.kind = NodeKind::Inserted;
        Ok(target)
    }

    fn nearest_graph_cell(&self, p: Point) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |c: usize| {
            let d = self.geometry.cell_center(c).distance(p);
            if best.is_none_or(|(bc, bd)| d < bd || (d == bd && c < bc)) {
                best = Some((c, d));
            }
        };
        for n in &self.nodes {
            consider(n.cell);
        }
        for e in &self.edges {
            for &c in &e.cells {
                consider(c);
            }
        }
        best
    }

    fn insert_at(&mut self, id: usize, node: GraphNode) {
        for e in &mut self.edges {
            if e.a >= id {
                e.a += 1;
            }
            if e.b >= id {
                e.b += 1;
            }
        }
        self.nodes.insert(id, node);
    }

    fn move_node(&mut self, from: usize, to: usize) {
        if from == to {
            return;
        }
        let remap = |i: usize| -> usize {
            if i == from {
                to
            } else if from < to && i > from && i <= to {
                i - 1
            } else if to < from && i >= to && i < from {
                i + 1
            } else {
                i
            }
        };
        for e in &mut self.edges {
            e.a = remap(e.a);
            e.b = remap(e.b);
        }
        let node = self.nodes.remove(from);
        self.nodes.insert(to, node);
    }

    fn split_edge(&mut self, edge: usize, k: usize, node: usize) {
        let old = self.edges[edge].clone();
        let first_cells = old.cells[..=k].to_vec();
        let second_cells = old.cells[k..].to_vec();
        let first_len = self.geometry.path_length(&first_cells);
        let second_len = old.length - first_len;
        self.edges[edge] = GraphEdge {
            a: old.a,
            b: node,
            cells: first_cells,
            length: first_len,
        };
        self.edges.push(GraphEdge {
            a: node,
            b: old.b,
            cells: second_cells,
            length: second_len,
        });
    }

    /// Splits every edge longer than `max_length` into equal-ish pieces.
    pub fn densify(&mut self, max_length: f64) {
        let mut e = 0;
        while e < self.edges.len() {
            let edge = &self.edges[e];
            if edge.length <= max_length || edge.cells.len() < 3 {
                e += 1;
                continue;
            }
            let pieces = (edge.length / max_length).ceil();
            let target = edge.length / pieces;
            let mut acc = 0.0;
            let mut cut = None;
            for k in 1..edge.cells.len() - 1 {
                acc += self.geometry.step_length(edge.cells[k - 1], edge.cells[k]);
                if acc >= target - 1e-9 {
                    cut = Some(k);
                    break;
                }
            }
            let Some(k) = cut else {
                e += 1;
                continue;
            };
            let cell = edge.cells[k];
            let id = self.nodes.len() - self.goal_count();
            self.insert_at(
                id,
                GraphNode {
                    cell,
                    position: self.geometry.cell_center(cell),
                    kind: NodeKind::Inserted,
                    label: None,
                },
            );
            self.split_edge(e, k, id);
            // The remainder was pushed last and will be visited in turn.
            e += 1;
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "geometry": self.geometry,
            "goals": self.goal_labels(),
            "nodes": self.nodes.iter().enumerate().map(|(i, n)| serde_json::json!({
                "id": i,
                "x": n.position.x,
                "y": n.position.y,
                "cell": n.cell,
                "kind": n.kind,
                "label": n.label,
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().enumerate().map(|(i, e)| serde_json::json!({
                "id": i,
                "a": e.a,
                "b": e.b,
                "length": e.length,
                "cells": e.cells,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph voronoi {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let name = n.label.clone().unwrap_or_else(|| format!("{i}"));
            let shape = match n.kind {
                NodeKind::Goal => "box",
                NodeKind::Junction => "circle",
                NodeKind::Inserted => "point",
            };
            let _ = writeln!(
                out,
                "  n{i} [label=\"{name}\", shape={shape}, pos=\"{:.3},{:.3}!\"];",
                n.position.x, n.position.y
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -- n{} [label=\"{:.2}\"];", e.a, e.b, e.length);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TmpKind {
    Junction,
    Goal(usize),
    Tip,
}

struct TmpNode {
    cells: Vec<usize>,
    rep: usize,
    kind: TmpKind,
}

/// Reduces a skeleton to junction and goal nodes. Goals are `(label, position)`
/// pairs, snapped to the nearest skeleton cell.
pub fn extract_graph(
    skeleton: &Skeleton,
    goals: &[(String, Point)],
    config: &GraphConfig,
) -> Result<VoronoiGraph, VoronoiError> {
    if goals.is_empty() {
        return Err(VoronoiError::NoGoals);
    }
    if skeleton.is_empty() {
        return Err(VoronoiError::EmptySkeleton);
    }
    let geo = skeleton.geometry();
    let degree: HashMap<usize, usize> =
        skeleton.cells().iter().map(|&c| (c, skeleton.degree(c))).collect();

    let mut tmp: Vec<TmpNode> = Vec::new();
    let mut node_of: HashMap<usize, usize> = HashMap::new();

    for &c in skeleton.cells() {
        if degree[&c] < 3 || node_of.contains_key(&c) {
            continue;
        }
        let mut cluster = Vec::new();
        let mut queue = VecDeque::from([c]);
        node_of.insert(c, tmp.len());
        while let Some(u) = queue.pop_front() {
            cluster.push(u);
            for v in skeleton.neighbors(u) {
                if degree[&v] >= 3 && !node_of.contains_key(&v) {
                    node_of.insert(v, tmp.len());
                    queue.push_back(v);
                }
            }
        }
        cluster.sort_unstable();
        let rep = cluster_representative(skeleton, &cluster);
        tmp.push(TmpNode {
            cells: cluster,
            rep,
            kind: TmpKind::Junction,
        });
    }

    for (gi, (label, pos)) in goals.iter().enumerate() {
        let (cell, dist) = skeleton
            .cells()
            .iter()
            .map(|&c| (c, geo.cell_center(c).distance(*pos)))
            .fold((usize::MAX, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            });
        if dist > config.snap_radius {
            return Err(VoronoiError::GoalTooFar {
                label: label.clone(),
                distance: dist,
                radius: config.snap_radius,
            });
        }
        match node_of.get(&cell) {
            Some(&t) => match tmp[t].kind {
                TmpKind::Goal(other) => {
                    return Err(VoronoiError::DuplicateGoalCell(goals[other].0.clone(), label.clone()))
                }
                _ => {
                    tmp[t].kind = TmpKind::Goal(gi);
                    tmp[t].rep = cell;
                }
            },
            None => {
                node_of.insert(cell, tmp.len());
                tmp.push(TmpNode {
                    cells: vec![cell],
                    rep: cell,
                    kind: TmpKind::Goal(gi),
                });
            }
        }
    }

    for &c in skeleton.cells() {
        if degree[&c] <= 1 && !node_of.contains_key(&c) {
            node_of.insert(c, tmp.len());
            tmp.push(TmpNode {
                cells: vec![c],
                rep: c,
                kind: TmpKind::Tip,
            });
        }
    }

    // Trace skeleton paths between node cells.
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut raw_edges: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for t in 0..tmp.len() {
        let starts: Vec<usize> = tmp[t].cells.clone();
        for c in starts {
            let first_steps: Vec<usize> = skeleton.neighbors(c).collect();
            for nb in first_steps {
                if node_of.get(&nb) == Some(&t) || used.contains(&(c, nb)) {
                    continue;
                }
                let mut path = vec![c, nb];
                let mut visited: HashSet<usize> = HashSet::from([c, nb]);
                let mut end = node_of.get(&nb).copied();
                while end.is_none() {
                    let cur = *path.last().expect("non-empty");
                    let prev = path[path.len() - 2];
                    let candidates: Vec<usize> = skeleton
                        .neighbors(cur)
                        .filter(|&n| n != prev && !visited.contains(&n))
                        .collect();
                    let next = candidates
                        .iter()
                        .copied()
                        .find(|n| node_of.contains_key(n))
                        .or_else(|| candidates.first().copied());
                    match next {
                        Some(n) => {
                            visited.insert(n);
                            path.push(n);
                            end = node_of.get(&n).copied();
                        }
                        None => break,
                    }
                }
                used.insert((c, nb));
                let Some(u) = end else { continue };
                let last = path[path.len() - 1];
                let before = path[path.len() - 2];
                used.insert((last, before));
                if u == t {
                    continue;
                }
                let mut full = cluster_path(skeleton, &tmp[t], tmp[t].rep, c);
                full.pop();
                full.extend_from_slice(&path);
                let mut tail = cluster_path(skeleton, &tmp[u], last, tmp[u].rep);
                tail.remove(0);
                full.extend(tail);
                raw_edges.push((t, u, full));
            }
        }
    }

    // Dead ends: drop tips and their branches, then isolated junctions.
    raw_edges.retain(|(a, b, _)| tmp[*a].kind != TmpKind::Tip && tmp[*b].kind != TmpKind::Tip);
    let mut degree_after = vec![0usize; tmp.len()];
    for (a, b, _) in &raw_edges {
        degree_after[*a] += 1;
        degree_after[*b] += 1;
    }
    let keep: Vec<bool> = tmp
        .iter()
        .enumerate()
        .map(|(i, t)| match t.kind {
            TmpKind::Goal(_) => true,
            TmpKind::Junction => degree_after[i] > 0,
            TmpKind::Tip => false,
        })
        .collect();

    let mut order: Vec<usize> = (0..tmp.len())
        .filter(|&i| keep[i] && !matches!(tmp[i].kind, TmpKind::Goal(_)))
        .collect();
    order.sort_by_key(|&i| tmp[i].rep);
    let mut goal_nodes: Vec<(usize, usize)> = (0..tmp.len())
        .filter_map(|i| match tmp[i].kind {
            TmpKind::Goal(g) => Some((g, i)),
            _ => None,
        })
        .collect();
    goal_nodes.sort_unstable();
    order.extend(goal_nodes.iter().map(|&(_, i)| i));

    let mut new_id = BTreeMap::new();
    for (id, &t) in order.iter().enumerate() {
        new_id.insert(t, id);
    }
    let nodes: Vec<GraphNode> = order
        .iter()
        .map(|&t| {
            let (kind, label) = match tmp[t].kind {
                TmpKind::Goal(g) => (NodeKind::Goal, Some(goals[g].0.clone())),
                _ => (NodeKind::Junction, None),
            };
            GraphNode {
                cell: tmp[t].rep,
                position: geo.cell_center(tmp[t].rep),
                kind,
                label,
            }
        })
        .collect();
    let edges: Vec<GraphEdge> = raw_edges
        .into_iter()
        .map(|(a, b, cells)| GraphEdge {
            a: new_id[&a],
            b: new_id[&b],
            length: geo.path_length(&cells),
            cells,
        })
        .collect();

    let mut graph = VoronoiGraph {
        geometry: geo,
        nodes,
        edges,
        snap_radius: config.snap_radius,
    };
    if let Some(max) = config.max_edge_length {
        graph.densify(max);
    }
    Ok(graph)
}

/// Highest-clearance cell of a cluster; ties go to the cell nearest the
/// cluster centroid, then the lowest index.
fn cluster_representative(skeleton: &Skeleton, cluster: &[usize]) -> usize {
    let geo = skeleton.geometry();
    let n = cluster.len() as f64;
    let cx = cluster.iter().map(|&c| (c % geo.width) as f64).sum::<f64>() / n;
    let cy = cluster.iter().map(|&c| (c / geo.width) as f64).sum::<f64>() / n;
    let off = |c: usize| ((c % geo.width) as f64 - cx).hypot((c / geo.width) as f64 - cy);
    let mut best = cluster[0];
    for &c in &cluster[1..] {
        let (sc, sb) = (skeleton.clearance_sq[c], skeleton.clearance_sq[best]);
        if sc > sb || (sc == sb && off(c) < off(best) - 1e-12) {
            best = c;
        }
    }
    best
}

/// Shortest 8-connected path inside a node's cell cluster, `from` to `to` inclusive.
fn cluster_path(skeleton: &Skeleton, node: &TmpNode, from: usize, to: usize) -> Vec<usize> {
    if from == to {
        return vec![from];
    }
    let inside: HashSet<usize> = node.cells.iter().copied().collect();
    let mut parent: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    parent.insert(from, from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for v in skeleton.neighbors(u) {
            if inside.contains(&v) && !parent.contains_key(&v) {
                parent.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}
