//! Motion validation: turns worker poses into the per-goal validation vector.
//!
//! A pose is softly associated with every visible graph node (Gaussian in
//! distance, triangular in bearing error). The association modulates the goal
//! distances into `d`. The same is done for counterfactual poses on a circle
//! around the previous position, and `v_j` says where the observed `d_j`
//! falls between the best and worst alternative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::floorplan::OccupancyGrid;
use crate::geom::Point;
use crate::planner::{line_of_sight, GoalDistanceField, RobotDisk};
use crate::scalar::{wrap_angle, Scalar};
use crate::voronoi::VoronoiGraph;

/// Log-weight margin below the best node at which association terms are
/// dropped (e^-60 is far below double precision relative resolution).
const LOG_MARGIN: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("no significant motion: moved {0:.4} m")]
    NoMotion(f64),
    #[error("invalid validation config: {0}")]
    Config(String),
}

/// Observed worker pose; `theta` is kept in `[-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkerPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    #[serde(default)]
    pub t: f64,
}

impl WorkerPose {
    pub fn new(x: f64, y: f64, theta: f64, t: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            t,
        }
    }

    pub fn at(p: Point, theta: f64, t: f64) -> Self {
        Self::new(p.x, p.y, theta, t)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig<S> {
    pub sigma_sq: S,
    /// Points on the alternatives circle.
    pub m_circle: usize,
    /// Headings tried at every circle point.
    pub headings: Vec<S>,
    /// Low-pass coefficient on `v`.
    pub lambda: S,
    /// Trigger grid cell size in meters.
    pub trigger_cell: f64,
    pub orientation_trigger: S,
    /// Multiplies meters before they enter the Gaussian.
    pub gaussian_distance_scale: S,
    /// Moves shorter than this produce no update.
    pub motion_epsilon: f64,
}

impl<S: Scalar> Default for ValidationConfig<S> {
    fn default() -> Self {
        Self {
            sigma_sq: S::lit(0.005),
            m_circle: 16,
            headings: default_headings(8),
            lambda: S::lit(0.4),
            trigger_cell: 0.1,
            orientation_trigger: S::PI() / S::lit(8.0),
            gaussian_distance_scale: S::one(),
            motion_epsilon: 0.01,
        }
    }
}

/// `count` headings evenly spaced from `-pi` (inclusive) to `pi` (exclusive).
pub fn default_headings<S: Scalar>(count: usize) -> Vec<S> {
    let step = (S::PI() + S::PI()) / S::lit(count as f64);
    (0..count).map(|k| -S::PI() + step * S::lit(k as f64)).collect()
}

impl<S: Scalar> ValidationConfig<S> {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |m: &str| Err(ValidationError::Config(m.to_string()));
        if !(self.sigma_sq > S::zero()) {
            return bad("sigma_sq must be positive");
        }
        if self.m_circle < 2 {
            return bad("m_circle must be at least 2");
        }
        if self.headings.is_empty() {
            return bad("at least one heading is required");
        }
        if !(self.lambda > S::zero() && self.lambda <= S::one()) {
            return bad("lambda must lie in (0, 1]");
        }
        if !(self.trigger_cell > 0.0) || !(self.orientation_trigger > S::zero()) {
            return bad("triggers must be positive");
        }
        if !(self.gaussian_distance_scale > S::zero()) {
            return bad("gaussian_distance_scale must be positive");
        }
        if !(self.motion_epsilon >= 0.0) {
            return bad("motion_epsilon must be non-negative");
        }
        Ok(())
    }
}

/// Triangular orientation weight `(pi - |theta|) / pi^2`.
pub fn triangular<S: Scalar>(theta: S) -> S {
    let t = wrap_angle(theta).abs();
    (S::PI() - t).max(S::zero()) / (S::PI() * S::PI())
}

/// Signed bearing error from the pose heading to `target`; zero at the pose itself.
pub fn bearing_error<S: Scalar>(pose: &WorkerPose, target: Point) -> S {
    let p = pose.position();
    if p == target {
        return S::zero();
    }
    wrap_angle(S::lit(p.bearing_to(target)) - S::lit(pose.theta))
}

/// Natural log of the unnormalized association weight of one visible node.
pub fn association_log_weight<S: Scalar>(distance: S, theta: S, cfg: &ValidationConfig<S>) -> S {
    let sd = cfg.gaussian_distance_scale * distance;
    let phi = triangular(theta);
    if phi <= S::zero() {
        return S::neg_infinity();
    }
    -(sd * sd) / (S::lit(2.0) * cfg.sigma_sq) + phi.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association<S> {
    /// Nonzero L1-normalized weights by ascending node index.
    pub entries: Vec<(usize, S)>,
    /// Number of graph nodes.
    pub len: usize,
    /// True when no visible node carried weight and the nearest node was used.
    pub fallback: bool,
}

impl<S: Scalar> Association<S> {
    pub fn weight(&self, node: usize) -> S {
        match self.entries.binary_search_by_key(&node, |e| e.0) {
            Ok(k) => self.entries[k].1,
            Err(_) => S::zero(),
        }
    }

    /// One weight per graph node.
    pub fn dense(&self) -> Vec<S> {
        let mut w = vec![S::zero(); self.len];
        for &(i, x) in &self.entries {
            w[i] = x;
        }
        w
    }

    /// Node with the largest weight, the lowest index on ties.
    pub fn top(&self) -> Option<usize> {
        let mut best: Option<(usize, S)> = None;
        for &(i, w) in &self.entries {
            if best.is_none_or(|(_, b)| w > b) {
                best = Some((i, w));
            }
        }
        best.map(|b| b.0)
    }
}

/// Association from explicit node positions and visibility flags.
pub fn associate_visible<S: Scalar>(
    pose: &WorkerPose,
    nodes: &[Point],
    visible: &[bool],
    cfg: &ValidationConfig<S>,
) -> Association<S> {
    let logs: Vec<(usize, S)> = nodes
        .iter()
        .zip(visible)
        .enumerate()
        .filter(|(_, (_, &vis))| vis)
        .map(|(i, (&p, _))| {
            let d = S::lit(pose.position().distance(p));
            (i, association_log_weight(d, bearing_error(pose, p), cfg))
        })
        .collect();
    normalize_logs(pose, nodes, logs)
}

fn normalize_logs<S: Scalar>(pose: &WorkerPose, nodes: &[Point], mut logs: Vec<(usize, S)>) -> Association<S> {
    let max = logs.iter().map(|e| e.1).fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return Association {
            entries: nearest(nodes, pose.position()).map(|k| (k, S::one())).into_iter().collect(),
            len: nodes.len(),
            fallback: true,
        };
    }
    logs.retain(|e| e.1 != S::neg_infinity());
    logs.sort_unstable_by_key(|e| e.0);
    let mut sum = S::zero();
    for e in &mut logs {
        e.1 = (e.1 - max).exp();
        sum = sum + e.1;
    }
    for e in &mut logs {
        e.1 = e.1 / sum;
    }
    Association {
        entries: logs,
        len: nodes.len(),
        fallback: false,
    }
}

fn nearest(nodes: &[Point], p: Point) -> Option<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, n) in nodes.iter().enumerate() {
        let d = n.distance_sq(p);
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Uniform bucket grid over node positions for nearest-first enumeration.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    origin: Point,
    bucket: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl NodeIndex {
    pub fn new(nodes: &[Point], bucket: f64) -> Self {
        assert!(bucket > 0.0, "bucket size must be positive");
        let (mut lo, mut hi) = (Point::new(0.0, 0.0), Point::new(0.0, 0.0));
        if let Some(first) = nodes.first() {
            lo = *first;
            hi = *first;
        }
        for p in nodes {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let cols = ((hi.x - lo.x) / bucket).floor() as usize + 1;
        let rows = ((hi.y - lo.y) / bucket).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        let mut index = Self {
            origin: lo,
            bucket,
            cols,
            rows,
            buckets: Vec::new(),
        };
        for (i, p) in nodes.iter().enumerate() {
            let (c, r) = index.cell(*p);
            buckets[r * cols + c].push(i);
        }
        index.buckets = buckets;
        index
    }

    fn cell(&self, p: Point) -> (usize, usize) {
        let c = ((p.x - self.origin.x) / self.bucket).floor().clamp(0.0, (self.cols - 1) as f64);
        let r = ((p.y - self.origin.y) / self.bucket).floor().clamp(0.0, (self.rows - 1) as f64);
        (c as usize, r as usize)
    }

    /// Nodes by increasing distance from `position`, ties by index.
    pub fn nearest_first<'a>(&'a self, nodes: &'a [Point], position: Point) -> impl Iterator<Item = usize> + 'a {
        let (c0, r0) = self.cell(position);
        let max_ring = self.cols.max(self.rows);
        let mut heap = std::collections::BinaryHeap::new();
        let mut ring = 0usize;
        std::iter::from_fn(move || loop {
            // Every node in a ring not loaded yet is at least this far away.
            let bound = if ring > max_ring {
                f64::INFINITY
            } else {
                let b = (ring as f64 - 1.0).max(0.0) * self.bucket;
                b * b
            };
            if let Some(std::cmp::Reverse(top)) = heap.peek() {
                let top: &Candidate = top;
                if top.d2 < bound || ring > max_ring {
                    let std::cmp::Reverse(c) = heap.pop().expect("peeked");
                    return Some(c.node);
                }
            } else if ring > max_ring {
                return None;
            }
            self.load_ring(c0, r0, ring, nodes, position, &mut heap);
            ring += 1;
        })
    }

    fn load_ring(
        &self,
        c0: usize,
        r0: usize,
        ring: usize,
        nodes: &[Point],
        position: Point,
        heap: &mut std::collections::BinaryHeap<std::cmp::Reverse<Candidate>>,
    ) {
        let k = ring as isize;
        let (c0, r0) = (c0 as isize, r0 as isize);
        let mut push = |c: isize, r: isize| {
            if c < 0 || r < 0 || c >= self.cols as isize || r >= self.rows as isize {
                return;
            }
            for &i in &self.buckets[r as usize * self.cols + c as usize] {
                heap.push(std::cmp::Reverse(Candidate {
                    d2: nodes[i].distance_sq(position),
                    node: i,
                }));
            }
        };
        if k == 0 {
            push(c0, r0);
            return;
        }
        for c in (c0 - k)..=(c0 + k) {
            push(c, r0 - k);
            push(c, r0 + k);
        }
        for r in (r0 - k + 1)..=(r0 + k - 1) {
            push(c0 - k, r);
            push(c0 + k, r);
        }
    }
}

/// Visibility of graph nodes from one position for a known set of headings,
/// computed lazily nearest first. The scan stops once no farther node can
/// come within the association margin of the best node for any heading.
#[derive(Debug, Clone)]
pub struct NodeVisibility {
    position: Point,
    headings: Vec<f64>,
    /// Tested nodes by increasing distance with their line-of-sight flag.
    tested: Vec<(usize, bool)>,
    /// Distance and bearing of each tested node; no bearing when the node
    /// sits on the position.
    measures: Vec<(f64, Option<f64>)>,
    len: usize,
}

impl NodeVisibility {
    pub fn compute<S: Scalar>(
        position: Point,
        headings: &[f64],
        nodes: &[Point],
        grid: &OccupancyGrid,
        robots: &[RobotDisk],
        cfg: &ValidationConfig<S>,
    ) -> Self {
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| {
            nodes[a]
                .distance_sq(position)
                .total_cmp(&nodes[b].distance_sq(position))
                .then(a.cmp(&b))
        });
        Self::scan(position, headings, nodes, order.into_iter(), grid, robots, cfg)
    }

    /// Same as [`NodeVisibility::compute`] with candidates drawn from `index`.
    pub fn compute_indexed<S: Scalar>(
        position: Point,
        headings: &[f64],
        nodes: &[Point],
        index: &NodeIndex,
        grid: &OccupancyGrid,
        robots: &[RobotDisk],
        cfg: &ValidationConfig<S>,
    ) -> Self {
        let order = index.nearest_first(nodes, position);
        Self::scan(position, headings, nodes, order, grid, robots, cfg)
    }

    fn scan<S: Scalar>(
        position: Point,
        headings: &[f64],
        nodes: &[Point],
        order: impl Iterator<Item = usize>,
        grid: &OccupancyGrid,
        robots: &[RobotDisk],
        cfg: &ValidationConfig<S>,
    ) -> Self {
        let scale = cfg.gaussian_distance_scale.as_f64();
        let two_sigma = 2.0 * cfg.sigma_sq.as_f64();
        let log_peak = -std::f64::consts::PI.ln();
        let mut best = vec![f64::NEG_INFINITY; headings.len()];
        let mut tested = Vec::new();
        let mut measures = Vec::new();
        // Every sight line from inside a robot or an occupied cell is blocked.
        let (cx, cy) = grid.to_cell_coords(position);
        let enclosed = robots.iter().any(|r| r.position.distance(position) < r.radius)
            || grid.is_occupied_at(cx.floor() as i64, cy.floor() as i64);
        let order = order.take(if enclosed { 0 } else { usize::MAX });
        for i in order {
            let d = nodes[i].distance(position);
            let sd = scale * d;
            let gauss = -(sd * sd) / two_sigma;
            // A node this far cannot beat any heading's floor, nor can any
            // farther one.
            let ceiling = gauss + log_peak;
            if !best.is_empty() && best.iter().all(|&b| ceiling < b - LOG_MARGIN - 1.0) {
                break;
            }
            let vis = line_of_sight(grid, position, nodes[i], robots);
            let bearing = (nodes[i] != position).then(|| position.bearing_to(nodes[i]));
            tested.push((i, vis));
            measures.push((d, bearing));
            if vis {
                for (b, &h) in best.iter_mut().zip(headings) {
                    let phi = triangular(bearing.map_or(0.0, |br| wrap_angle(br - h)));
                    if phi > 0.0 {
                        *b = b.max(gauss + phi.ln());
                    }
                }
            }
        }
        Self {
            position,
            headings: headings.to_vec(),
            tested,
            measures,
            len: nodes.len(),
        }
    }

    pub fn position(&self) -> Point {
        self.position
    }

    /// Tested nodes by increasing distance.
    pub fn tested(&self) -> &[(usize, bool)] {
        &self.tested
    }

    pub fn is_visible(&self, node: usize) -> bool {
        self.tested.iter().any(|&(i, v)| i == node && v)
    }

    pub fn flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len];
        for &(i, v) in &self.tested {
            flags[i] = v;
        }
        flags
    }
}

/// Association with precomputed visibility. Nodes skipped by the visibility
/// pass contribute exactly zero.
pub fn associate_with<S: Scalar>(
    pose: &WorkerPose,
    nodes: &[Point],
    visibility: &NodeVisibility,
    cfg: &ValidationConfig<S>,
) -> Association<S> {
    debug_assert!(
        visibility.position == pose.position() && visibility.headings.contains(&pose.theta),
        "visibility computed for another pose"
    );
    let mut logs = Vec::new();
    let mut best = S::neg_infinity();
    for (&(i, vis), &(d, bearing)) in visibility.tested.iter().zip(&visibility.measures) {
        if !vis {
            continue;
        }
        let theta = bearing.map_or(S::zero(), |b| wrap_angle(S::lit(b) - S::lit(pose.theta)));
        let l = association_log_weight(S::lit(d), theta, cfg);
        logs.push((i, l));
        best = best.max(l);
    }
    let floor = best - S::lit(LOG_MARGIN);
    for e in &mut logs {
        if e.1 < floor {
            e.1 = S::neg_infinity();
        }
    }
    normalize_logs(pose, nodes, logs)
}

/// Associates a pose with the graph nodes visible on `grid` around `robots`.
pub fn associate<S: Scalar>(
    pose: &WorkerPose,
    graph: &VoronoiGraph,
    grid: &OccupancyGrid,
    robots: &[RobotDisk],
    cfg: &ValidationConfig<S>,
) -> Association<S> {
    let nodes: Vec<Point> = graph.nodes().iter().map(|n| n.position).collect();
    let vis = NodeVisibility::compute(pose.position(), &[pose.theta], &nodes, grid, robots, cfg);
    associate_with(pose, &nodes, &vis, cfg)
}

/// `d_j = sum_i c_i F[i][j]`.
pub fn modulated_goal_distance<S: Scalar>(c: &[S], field: &GoalDistanceField) -> Vec<S> {
    let g = field.goal_count();
    let mut d = vec![S::zero(); g];
    for (i, &ci) in c.iter().enumerate() {
        if ci == S::zero() {
            continue;
        }
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = *dj + ci * S::lit(field.get(i, j));
        }
    }
    d
}

/// Counterfactual poses: `m_circle` points on the circle of radius `|l - l_prev|`
/// around `l_prev`, starting at the observed direction, times every heading.
pub fn alternative_poses<S: Scalar>(
    l_prev: Point,
    l: Point,
    cfg: &ValidationConfig<S>,
) -> Result<Vec<WorkerPose>, ValidationError> {
    let r = l_prev.distance(l);
    if r <= cfg.motion_epsilon {
        return Err(ValidationError::NoMotion(r));
    }
    let start = l_prev.bearing_to(l);
    let mut out = Vec::with_capacity(cfg.m_circle * cfg.headings.len());
    for k in 0..cfg.m_circle {
        let a = start + std::f64::consts::TAU * k as f64 / cfg.m_circle as f64;
        let p = if k == 0 {
            l
        } else {
            Point::new(l_prev.x + r * a.cos(), l_prev.y + r * a.sin())
        };
        for h in &cfg.headings {
            out.push(WorkerPose::at(p, h.as_f64(), 0.0));
        }
    }
    Ok(out)
}

/// Per goal: `(max_i D_ij - d_j) / (max_i D_ij - min_i D_ij)` clamped to
/// `[0, 1]`; `0.5` for a flat column.
pub fn validate_motion<S: Scalar>(d: &[S], alternatives: &[Vec<S>]) -> Vec<S> {
    let half = S::lit(0.5);
    d.iter()
        .enumerate()
        .map(|(j, &dj)| {
            let (lo, hi) = alternatives.iter().fold((S::infinity(), S::neg_infinity()), |(lo, hi), row| {
                (lo.min(row[j]), hi.max(row[j]))
            });
            if !(hi > lo) {
                return half;
            }
            ((hi - dj) / (hi - lo)).max(S::zero()).min(S::one())
        })
        .collect()
}

/// First-order low-pass filter on `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass<S> {
    lambda: S,
    state: Vec<Option<S>>,
}

impl<S: Scalar> LowPass<S> {
    pub fn new(lambda: S, goals: usize) -> Self {
        Self {
            lambda,
            state: vec![None; goals],
        }
    }

    /// `v_hat <- lambda v + (1 - lambda) v_hat`; a component's first input passes through.
    pub fn apply(&mut self, v: &[S]) -> Vec<S> {
        if self.state.len() < v.len() {
            self.state.resize(v.len(), None);
        }
        v.iter()
            .zip(self.state.iter_mut())
            .map(|(&x, s)| {
                let y = match *s {
                    None => x,
                    Some(prev) => self.lambda * x + (S::one() - self.lambda) * prev,
                };
                *s = Some(y);
                y
            })
            .collect()
    }

    pub fn state(&self) -> Vec<Option<S>> {
        self.state.clone()
    }

    pub fn add_goal(&mut self) {
        self.state.push(None);
    }

    pub fn remove_goal(&mut self, j: usize) {
        self.state.remove(j);
    }
}

/// True when the pose left its trigger cell or turned more than the threshold.
pub fn update_trigger<S: Scalar>(prev: &WorkerPose, pose: &WorkerPose, cfg: &ValidationConfig<S>) -> bool {
    let cell = |p: &WorkerPose| {
        (
            (p.x / cfg.trigger_cell).floor() as i64,
            (p.y / cfg.trigger_cell).floor() as i64,
        )
    };
    if cell(prev) != cell(pose) {
        return true;
    }
    let turn = wrap_angle(S::lit(pose.theta) - S::lit(prev.theta)).abs();
    turn > cfg.orientation_trigger
}
