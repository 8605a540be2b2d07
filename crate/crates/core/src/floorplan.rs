//! Warehouse layouts, occupancy grids and the exact Euclidean distance field.
//!
//! A layout is a JSON document describing the floor, its racks and walls, the
//! named ground nodes robots drive over, and the goal candidates. Rasterizing
//! it yields an [`OccupancyGrid`] whose outermost ring is always occupied, so
//! every free cell is enclosed by obstacles.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{point_segment_distance, Point};

/// Default rasterization resolution in meters.
pub const DEFAULT_CELL_SIZE: f64 = 0.05;
/// Default guard on the number of grid cells.
pub const DEFAULT_MAX_CELLS: usize = 25_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node {0} on occupied cell")]
    NodeOnOccupied(String),
    #[error("duplicate node id {0}")]
    DuplicateId(String),
    #[error("goal references unknown node {0}")]
    UnknownGoal(String),
    #[error("link references unknown node {0}")]
    UnknownLinkNode(String),
    #[error("picking station references unknown node {0}")]
    UnknownStation(String),
    #[error("invalid layout: {0}")]
    Invalid(String),
    #[error("grid of {cells} cells exceeds the limit of {limit}")]
    TooLarge { cells: usize, limit: usize },
}

/// Axis-aligned rack footprint; `(x, y)` is the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rack {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rack {
    fn contains_open(&self, p: Point) -> bool {
        p.x > self.x && p.x < self.x + self.w && p.y > self.y && p.y < self.y + self.h
    }

    fn contains_cell_center(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Defaults to one grid cell when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
}

impl Wall {
    fn distance(&self, p: Point) -> f64 {
        point_segment_distance(p, Point::new(self.x1, self.y1), Point::new(self.x2, self.y2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundKind {
    /// Traversable by workers and robots.
    #[default]
    Ground,
    /// Under a liftable rack; robots only.
    UnderRack,
}

impl GroundKind {
    fn is_default(&self) -> bool {
        *self == GroundKind::Ground
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundNode {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "GroundKind::is_default")]
    pub kind: GroundKind,
}

impl GroundNode {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Parsed and validated layout document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Free-form provenance and assumptions of the layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub size_m: [f64; 2],
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    #[serde(default)]
    pub racks: Vec<Rack>,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub nodes: Vec<GroundNode>,
    #[serde(default)]
    pub goals: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub picking_stations: Vec<String>,
    /// Explicit robot lattice adjacency. Derived from node spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<[String; 2]>>,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

impl Layout {
    pub fn width(&self) -> f64 {
        self.size_m[0]
    }

    pub fn height(&self) -> f64 {
        self.size_m[1]
    }

    pub fn node(&self, id: &str) -> Option<&GroundNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// True when `p` lies inside a rack or a wall band.
    pub fn is_blocked(&self, p: Point, default_thickness: f64) -> bool {
        self.racks.iter().any(|r| r.contains_open(p))
            || self
                .walls
                .iter()
                .any(|w| w.distance(p) < w.thickness.unwrap_or(default_thickness) / 2.0)
    }

    fn validate(&self) -> Result<(), LayoutError> {
        let [w, h] = self.size_m;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(LayoutError::Invalid(format!("size_m must be positive, got [{w}, {h}]")));
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(LayoutError::Invalid("cell_size_m must be positive".into()));
        }
        for r in &self.racks {
            if !(r.w > 0.0 && r.h > 0.0) {
                return Err(LayoutError::Invalid(format!("rack at ({}, {}) has empty extent", r.x, r.y)));
            }
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(LayoutError::DuplicateId(n.id.clone()));
            }
            if !(n.x > 0.0 && n.x < w && n.y > 0.0 && n.y < h) {
                return Err(LayoutError::Invalid(format!("node {} outside the floor", n.id)));
            }
            if n.kind == GroundKind::Ground && self.is_blocked(n.position(), self.cell_size_m) {
                return Err(LayoutError::NodeOnOccupied(n.id.clone()));
            }
        }
        for g in &self.goals {
            match self.node(g) {
                None => return Err(LayoutError::UnknownGoal(g.clone())),
                Some(n) if n.kind == GroundKind::UnderRack => {
                    return Err(LayoutError::NodeOnOccupied(g.clone()))
                }
                Some(_) => {}
            }
        }
        for s in &self.picking_stations {
            if self.node(s).is_none() {
                return Err(LayoutError::UnknownStation(s.clone()));
            }
        }
        if let Some(links) = &self.links {
            for [a, b] in links {
                for id in [a, b] {
                    if self.node(id).is_none() {
                        return Err(LayoutError::UnknownLinkNode(id.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a layout JSON document.
pub fn parse_layout(text: &str) -> Result<Layout, LayoutError> {
    let layout: Layout = serde_json::from_str(text).map_err(|e| LayoutError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    layout.validate()?;
    Ok(layout)
}

/// Canonical pretty-printed JSON form of a layout.
pub fn serialize_layout(layout: &Layout) -> String {
    serde_json::to_string_pretty(layout).expect("layout serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Occupied,
}

/// Discretized floorplan. Cell `(i, j)` covers
/// `[origin.x + i*cell_size, origin.x + (i+1)*cell_size)` horizontally.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Point,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    /// Builds a grid and forces the boundary ring to `Occupied`.
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: Point,
        mut cells: Vec<Cell>,
    ) -> Result<Self, LayoutError> {
        if width * height != cells.len() {
            return Err(LayoutError::Invalid(format!(
                "{}x{} grid needs {} cells, got {}",
                width,
                height,
                width * height,
                cells.len()
            )));
        }
        if !(cell_size > 0.0) {
            return Err(LayoutError::Invalid("cell size must be positive".into()));
        }
        if width < 1 || height < 1 {
            return Err(LayoutError::Invalid("grid must not be empty".into()));
        }
        for x in 0..width {
            cells[x] = Cell::Occupied;
            cells[(height - 1) * width + x] = Cell::Occupied;
        }
        for y in 0..height {
            cells[y * width] = Cell::Occupied;
            cells[y * width + width - 1] = Cell::Occupied;
        }
        Ok(Self {
            width,
            height,
            cell_size,
            origin,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[self.index(x, y)]
    }

    /// Out-of-bounds coordinates count as occupied.
    pub fn is_occupied_at(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return true;
        }
        self.cells[y as usize * self.width + x as usize] == Cell::Occupied
    }

    pub fn is_free_index(&self, index: usize) -> bool {
        self.cells[index] == Cell::Free
    }

    pub fn cell_center(&self, index: usize) -> Point {
        let (x, y) = self.coords(index);
        Point::new(
            self.origin.x + (x as f64 + 0.5) * self.cell_size,
            self.origin.y + (y as f64 + 0.5) * self.cell_size,
        )
    }

    /// Continuous cell coordinates of a world point.
    pub fn to_cell_coords(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.cell_size,
            (p.y - self.origin.y) / self.cell_size,
        )
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let (fx, fy) = self.to_cell_coords(p);
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (x, y) = (fx.floor() as usize, fy.floor() as usize);
        (x < self.width && y < self.height).then(|| self.index(x, y))
    }

    pub fn is_free_at(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|i| self.cells[i] == Cell::Free)
    }

    /// World extent diagonal in meters.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64 * self.cell_size).hypot(self.height as f64 * self.cell_size)
    }

    /// Binary PGM (P5): 0 = occupied, 255 = free. Row 0 of the image is the top of the map.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                out.push(match self.cell(x, y) {
                    Cell::Free => 255,
                    Cell::Occupied => 0,
                });
            }
        }
        out
    }
}

/// Rasterizes a layout with one occupied padding ring around the floor.
pub fn rasterize(layout: &Layout, cell_size: f64) -> Result<OccupancyGrid, LayoutError> {
    rasterize_with_limit(layout, cell_size, DEFAULT_MAX_CELLS)
}

pub fn rasterize_with_limit(
    layout: &Layout,
    cell_size: f64,
    max_cells: usize,
) -> Result<OccupancyGrid, LayoutError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(LayoutError::Invalid("cell size must be positive".into()));
    }
    let nx = (layout.width() / cell_size - 1e-9).ceil().max(1.0);
    let ny = (layout.height() / cell_size - 1e-9).ceil().max(1.0);
    let total = (nx + 2.0) * (ny + 2.0);
    if total > max_cells as f64 {
        return Err(LayoutError::TooLarge {
            cells: total.min(usize::MAX as f64) as usize,
            limit: max_cells,
        });
    }
    let (width, height) = (nx as usize + 2, ny as usize + 2);
    let origin = Point::new(-cell_size, -cell_size);
    let mut cells = vec![Cell::Free; width * height];

    let to_range = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        let a = ((lo - origin.x) / cell_size).floor().max(0.0) as usize;
        let b = (((hi - origin.x) / cell_size).ceil().max(0.0) as usize).min(n);
        (a.min(n), b)
    };
    let center = |x: usize, y: usize| {
        Point::new(
            origin.x + (x as f64 + 0.5) * cell_size,
            origin.y + (y as f64 + 0.5) * cell_size,
        )
    };

    for rack in &layout.racks {
        let (x0, x1) = to_range(rack.x, rack.x + rack.w, width);
        let (y0, y1) = to_range(rack.y, rack.y + rack.h, height);
        for y in y0..y1 {
            for x in x0..x1 {
                if rack.contains_cell_center(center(x, y)) {
                    cells[y * width + x] = Cell::Occupied;
                }
            }
        }
    }
    for wall in &layout.walls {
        let half = (wall.thickness.unwrap_or(cell_size) / 2.0)
            .max(cell_size * std::f64::consts::FRAC_1_SQRT_2);
        let (x0, x1) = to_range(wall.x1.min(wall.x2) - half, wall.x1.max(wall.x2) + half, width);
        let (y0, y1) = to_range(wall.y1.min(wall.y2) - half, wall.y1.max(wall.y2) + half, height);
        for y in y0..y1 {
            for x in x0..x1 {
                if wall.distance(center(x, y)) <= half {
                    cells[y * width + x] = Cell::Occupied;
                }
            }
        }
    }
    let grid = OccupancyGrid::new(width, height, cell_size, origin, cells)?;
    for n in &layout.nodes {
        if n.kind == GroundKind::Ground && !grid.is_free_at(n.position()) {
            return Err(LayoutError::NodeOnOccupied(n.id.clone()));
        }
    }
    Ok(grid)
}

const INF: i64 = i64::MAX / 4;

/// Per-cell distance to the nearest occupied cell center, plus the nearest
/// occupied cell itself (the feature transform).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Point,
    /// Squared distance in cell units; `u64::MAX` when no obstacle exists.
    squared: Vec<u64>,
    nearest: Vec<u32>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squared.is_empty()
    }

    /// Squared distance in cell units.
    pub fn squared_cells(&self, index: usize) -> u64 {
        self.squared[index]
    }

    /// Metric distance in meters.
    pub fn distance(&self, index: usize) -> f64 {
        metric_distance(self.squared[index], self.cell_size)
    }

    pub fn distance_at(&self, x: usize, y: usize) -> f64 {
        self.distance(y * self.width + x)
    }

    /// Index of the nearest occupied cell (itself for occupied cells).
    pub fn nearest_obstacle(&self, index: usize) -> usize {
        self.nearest[index] as usize
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.squared[index] == 0
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }
}

/// Converts a squared cell distance to meters.
pub fn metric_distance(squared_cells: u64, cell_size: f64) -> f64 {
    if squared_cells == u64::MAX {
        f64::INFINITY
    } else {
        (squared_cells as f64).sqrt() * cell_size
    }
}

/// Exact Euclidean distance transform (separable lower-envelope algorithm).
pub fn distance_transform(grid: &OccupancyGrid) -> DistanceField {
    let (w, h) = (grid.width(), grid.height());
    let n = w.max(h);
    let mut f = vec![0i64; n];
    let mut d = vec![0i64; n];
    let mut arg = vec![0usize; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];

    // Column pass: nearest obstacle row within each column.
    let mut col_sq = vec![INF; w * h];
    let mut col_row = vec![0usize; w * h];
    for x in 0..w {
        for y in 0..h {
            f[y] = if grid.cell(x, y) == Cell::Occupied { 0 } else { INF };
        }
        lower_envelope(&f[..h], &mut d[..h], &mut arg[..h], &mut v, &mut z);
        for y in 0..h {
            col_sq[y * w + x] = d[y];
            col_row[y * w + x] = arg[y];
        }
    }

    let mut squared = vec![u64::MAX; w * h];
    let mut nearest = vec![0u32; w * h];
    for y in 0..h {
        f[..w].copy_from_slice(&col_sq[y * w..(y + 1) * w]);
        lower_envelope(&f[..w], &mut d[..w], &mut arg[..w], &mut v, &mut z);
        for x in 0..w {
            let i = y * w + x;
            if d[x] < INF {
                squared[i] = d[x] as u64;
                let ox = arg[x];
                nearest[i] = (col_row[y * w + ox] * w + ox) as u32;
            }
        }
    }
    DistanceField {
        width: w,
        height: h,
        cell_size: grid.cell_size(),
        origin: grid.origin(),
        squared,
        nearest,
    }
}

/// 1D squared distance transform of sampled function `f` (INF = no site).
/// Writes the minimum and its minimizing site.
fn lower_envelope(f: &[i64], d: &mut [i64], arg: &mut [usize], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] >= INF {
            continue;
        }
        let fq = f[q] + (q * q) as i64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let fp = f[p] + (p * p) as i64;
            let s = (fq - fp) as f64 / (2 * (q - p)) as f64;
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        d.fill(INF);
        arg.fill(0);
        return;
    }
    let mut j = 0usize;
    for q in 0..n {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as i64 - p as i64;
        d[q] = dq * dq + f[p];
        arg[q] = p;
    }
}

/// Debug dump of a distance field as PGM, scaled to the maximum clearance.
pub fn distance_field_pgm(field: &DistanceField) -> Vec<u8> {
    let max = field
        .squared
        .iter()
        .filter(|&&s| s != u64::MAX)
        .max()
        .copied()
        .unwrap_or(1)
        .max(1) as f64;
    let mut header = String::new();
    let _ = write!(header, "P5\n{} {}\n255\n", field.width, field.height);
    let mut out = header.into_bytes();
    for y in (0..field.height).rev() {
        for x in 0..field.width {
            let s = field.squared[y * field.width + x];
            let v = if s == u64::MAX { 255.0 } else { (s as f64 / max).sqrt() * 255.0 };
            out.push(v.round() as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"size_m":[10,10],"cell_size_m":0.1,"nodes":[{"id":"R1","x":5,"y":5}],"goals":["R1"]}"#
    }

    #[test]
    fn parses_minimal_document() {
        let layout = parse_layout(minimal()).unwrap();
        assert_eq!(layout.nodes.len(), 1);
        assert_eq!(layout.goals, vec!["R1".to_string()]);
    }

    #[test]
    fn reports_syntax_position() {
        let err = parse_layout("{\n  \"size_m\": [1,\n").unwrap_err();
        match err {
            LayoutError::Syntax { line, .. } => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_node_inside_rack() {
        let text = r#"{"size_m":[4,4],"racks":[{"x":1,"y":1,"w":2,"h":2}],
            "nodes":[{"id":"R1","x":2,"y":2}],"goals":["R1"]}"#;
        assert_eq!(parse_layout(text).unwrap_err(), LayoutError::NodeOnOccupied("R1".into()));
        assert_eq!(
            parse_layout(text).unwrap_err().to_string(),
            "node R1 on occupied cell"
        );
    }

    #[test]
    fn under_rack_nodes_are_allowed_inside_racks() {
        let text = r#"{"size_m":[4,4],"racks":[{"x":1,"y":1,"w":2,"h":2}],
            "nodes":[{"id":"S1","x":2,"y":2,"kind":"under_rack"},{"id":"R1","x":0.5,"y":0.5}],
            "goals":["R1"]}"#;
        assert!(parse_layout(text).is_ok());
    }

    #[test]
    fn rejects_duplicates_and_unknown_goals() {
        let dup = r#"{"size_m":[4,4],"nodes":[{"id":"A","x":1,"y":1},{"id":"A","x":2,"y":2}],"goals":["A"]}"#;
        assert_eq!(parse_layout(dup).unwrap_err(), LayoutError::DuplicateId("A".into()));
        let unk = r#"{"size_m":[4,4],"nodes":[{"id":"A","x":1,"y":1}],"goals":["B"]}"#;
        assert_eq!(parse_layout(unk).unwrap_err(), LayoutError::UnknownGoal("B".into()));
    }

    #[test]
    fn rasterizes_empty_floor_with_ring() {
        let layout = parse_layout(r#"{"size_m":[1,1],"nodes":[],"goals":[]}"#).unwrap();
        let grid = rasterize(&layout, 0.1).unwrap();
        assert_eq!((grid.width(), grid.height()), (12, 12));
        for y in 0..12 {
            for x in 0..12 {
                let ring = x == 0 || y == 0 || x == 11 || y == 11;
                assert_eq!(grid.cell(x, y) == Cell::Occupied, ring, "cell {x},{y}");
            }
        }
    }

    #[test]
    fn rasterizes_centered_rack() {
        let layout = parse_layout(
            r#"{"size_m":[2,2],"racks":[{"x":0.8,"y":0.8,"w":0.4,"h":0.4}],"nodes":[],"goals":[]}"#,
        )
        .unwrap();
        let grid = rasterize(&layout, 0.1).unwrap();
        let mut occupied = Vec::new();
        for y in 1..21 {
            for x in 1..21 {
                if grid.cell(x, y) == Cell::Occupied {
                    occupied.push((x, y));
                }
            }
        }
        // Interior cell k (1-based in the padded grid) covers [0.1(k-1), 0.1k).
        let expected: Vec<_> = (9..13).flat_map(|y| (9..13).map(move |x| (x, y))).collect();
        assert_eq!(occupied, expected);
    }

    #[test]
    fn rejects_huge_grids() {
        let layout = parse_layout(r#"{"size_m":[100,100],"nodes":[],"goals":[]}"#).unwrap();
        assert!(matches!(
            rasterize_with_limit(&layout, 0.005, 1_000_000),
            Err(LayoutError::TooLarge { .. })
        ));
    }

    #[test]
    fn all_occupied_grid_is_zero() {
        let grid = OccupancyGrid::new(3, 3, 1.0, Point::default(), vec![Cell::Occupied; 9]).unwrap();
        let field = distance_transform(&grid);
        assert!((0..9).all(|i| field.distance(i) == 0.0));
    }

    #[test]
    fn single_free_cell() {
        let mut cells = vec![Cell::Occupied; 9];
        cells[4] = Cell::Free;
        let grid = OccupancyGrid::new(3, 3, 1.0, Point::default(), cells).unwrap();
        let field = distance_transform(&grid);
        assert_eq!(field.distance(4), 1.0);
        assert!(field.is_occupied(field.nearest_obstacle(4)));
    }

    #[test]
    fn pgm_header() {
        let grid = OccupancyGrid::new(3, 2, 1.0, Point::default(), vec![Cell::Free; 6]).unwrap();
        let pgm = grid.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm.len(), b"P5\n3 2\n255\n".len() + 6);
    }
}
