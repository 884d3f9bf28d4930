//! The structured tank: two square rooms joined by a straight corridor.
//!
//! The water region is the union of three closed axis-aligned rectangles.
//! Every point of the region belongs to exactly one behavioural [`Zone`]:
//! the corridor rectangle (including the strips where it overlaps a room),
//! the band of width `wall_band_mm` along the solid walls of a room, or the
//! remaining room centre.
//!
//! Solid walls are the parts of the rectangle edges that separate water
//! from the outside; the mouths where the corridor opens into a room are
//! not walls.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("invalid arena geometry: {0}")]
    InvalidGeometry(String),
    #[error("point ({x:.3}, {y:.3}) mm lies outside the water region")]
    OutOfArena { x: f64, y: f64 },
}

/// A planar point or vector in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `angle` (radians).
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` towards `other`, in `(-π, π]`.
    pub fn bearing_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn offset(self, direction: Point, length: f64) -> Point {
        Point::new(self.x + direction.x * length, self.y + direction.y * length)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`, serialised as
/// `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    fn intersects_closed(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    /// Nearest point of the rectangle shrunk by `margin` on every side.
    fn clamp_inset(&self, p: Point, margin: f64) -> Point {
        let (x0, x1) = inset(self.x0, self.x1, margin);
        let (y0, y1) = inset(self.y0, self.y1, margin);
        Point::new(p.x.clamp(x0, x1), p.y.clamp(y0, y1))
    }

    /// Parameter interval `[lo, hi] ⊆ [0, len]` along `origin + s·dir` that
    /// lies inside the rectangle (slab clipping).
    fn clip_ray(&self, origin: Point, dir: Point, len: f64) -> Option<(f64, f64)> {
        let mut lo = 0.0_f64;
        let mut hi = len;
        for (o, d, a, b) in [(origin.x, dir.x, self.x0, self.x1), (origin.y, dir.y, self.y0, self.y1)] {
            if d.abs() < 1e-15 {
                if o < a || o > b {
                    return None;
                }
            } else {
                let inv = 1.0 / d;
                let (t1, t2) = ((a - o) * inv, (b - o) * inv);
                let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                if near > lo {
                    lo = near;
                }
                if far < hi {
                    hi = far;
                }
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    fn edges(&self) -> [Segment; 4] {
        let (a, b, c, d) = (
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        );
        [Segment::new(a, b), Segment::new(b, c), Segment::new(c, d), Segment::new(d, a)]
    }
}

fn inset(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    if hi - lo > 2.0 * margin {
        (lo + margin, hi - margin)
    } else {
        let mid = 0.5 * (lo + hi);
        (mid, mid)
    }
}

/// A straight piece of solid wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Direction of the segment from `a` to `b`, in radians.
    pub fn direction(&self) -> f64 {
        (self.b.y - self.a.y).atan2(self.b.x - self.a.x)
    }

    #[inline]
    pub fn distance_sq(&self, p: Point) -> f64 {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len_sq = dx * dx + dy * dy;
        let t =
            if len_sq > 0.0 { (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
        let (ex, ey) = (self.a.x + t * dx - p.x, self.a.y + t * dy - p.y);
        ex * ex + ey * ey
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.distance_sq(p).sqrt()
    }
}

/// Behavioural context of a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    Wall,
    RoomCenter,
    Corridor,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Wall, Zone::RoomCenter, Zone::Corridor];
    pub const COUNT: usize = 3;

    #[inline]
    pub const fn index(self) -> usize {
        match self {
            Zone::Wall => 0,
            Zone::RoomCenter => 1,
            Zone::Corridor => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Zone> {
        Zone::ALL.get(i).copied()
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Wall => "wall",
            Zone::RoomCenter => "room-center",
            Zone::Corridor => "corridor",
        })
    }
}

/// Serialised form of [`ArenaGeometry`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaSpec {
    #[serde(rename = "roomA")]
    pub room_a: Rect,
    #[serde(rename = "roomB")]
    pub room_b: Rect,
    pub corridor: Rect,
    pub wall_band_mm: f64,
}

/// Validated tank layout with its precomputed solid walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArenaSpec", into = "ArenaSpec")]
pub struct ArenaGeometry {
    spec: ArenaSpec,
    walls: Vec<Segment>,
    cells: ZoneCells,
}

impl Default for ArenaGeometry {
    fn default() -> Self {
        canonical_geometry()
    }
}

impl TryFrom<ArenaSpec> for ArenaGeometry {
    type Error = ArenaError;

    fn try_from(spec: ArenaSpec) -> Result<Self, Self::Error> {
        ArenaGeometry::new(spec)
    }
}

impl From<ArenaGeometry> for ArenaSpec {
    fn from(g: ArenaGeometry) -> Self {
        g.spec
    }
}

/// The default layout: 350 mm rooms on either side of a 380 × 100 mm
/// corridor that reaches 40 mm into each room, filling a 1000 mm tank.
pub fn canonical_geometry() -> ArenaGeometry {
    ArenaGeometry::new(ArenaSpec {
        room_a: Rect::new(0.0, 325.0, 350.0, 675.0),
        room_b: Rect::new(650.0, 325.0, 1000.0, 675.0),
        corridor: Rect::new(310.0, 450.0, 690.0, 550.0),
        wall_band_mm: 30.0,
    })
    .expect("canonical geometry is valid")
}

impl ArenaGeometry {
    pub fn new(spec: ArenaSpec) -> Result<Self, ArenaError> {
        let rects = [spec.room_a, spec.room_b, spec.corridor];
        for (name, r) in ["roomA", "roomB", "corridor"].iter().zip(rects.iter()) {
            let finite = [r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite());
            if !finite || r.x1 <= r.x0 || r.y1 <= r.y0 {
                return Err(ArenaError::InvalidGeometry(format!("{name} must satisfy x0 < x1 and y0 < y1")));
            }
        }
        if spec.room_a.intersects_closed(&spec.room_b) {
            return Err(ArenaError::InvalidGeometry("rooms must not touch or overlap".into()));
        }
        for (name, room) in [("roomA", &spec.room_a), ("roomB", &spec.room_b)] {
            if spec.corridor.intersection_area(room) <= 0.0 {
                return Err(ArenaError::InvalidGeometry(format!("corridor must overlap {name} by a positive area")));
            }
        }
        let min_side =
            [spec.room_a, spec.room_b].iter().flat_map(|r| [r.width(), r.height()]).fold(f64::INFINITY, f64::min);
        if !(spec.wall_band_mm > 0.0 && spec.wall_band_mm < 0.5 * min_side) {
            return Err(ArenaError::InvalidGeometry(format!(
                "wall_band_mm must lie in (0, {}), got {}",
                0.5 * min_side,
                spec.wall_band_mm
            )));
        }
        let walls = boundary_segments(&rects);
        let mut g = ArenaGeometry { spec, walls, cells: ZoneCells::default() };
        g.cells = ZoneCells::build(&g);
        Ok(g)
    }

    pub fn spec(&self) -> &ArenaSpec {
        &self.spec
    }

    pub fn room_a(&self) -> &Rect {
        &self.spec.room_a
    }

    pub fn room_b(&self) -> &Rect {
        &self.spec.room_b
    }

    pub fn corridor(&self) -> &Rect {
        &self.spec.corridor
    }

    pub fn wall_band_mm(&self) -> f64 {
        self.spec.wall_band_mm
    }

    /// Solid wall segments of the water region.
    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    fn rects(&self) -> [&Rect; 3] {
        [&self.spec.room_a, &self.spec.room_b, &self.spec.corridor]
    }

    /// Smallest rectangle enclosing the water region.
    pub fn bounding_box(&self) -> Rect {
        let r = self.rects();
        Rect::new(
            r.iter().map(|r| r.x0).fold(f64::INFINITY, f64::min),
            r.iter().map(|r| r.y0).fold(f64::INFINITY, f64::min),
            r.iter().map(|r| r.x1).fold(f64::NEG_INFINITY, f64::max),
            r.iter().map(|r| r.y1).fold(f64::NEG_INFINITY, f64::max),
        )
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        self.spec.room_a.contains(p) || self.spec.room_b.contains(p) || self.spec.corridor.contains(p)
    }

    fn check_inside(&self, p: Point) -> Result<(), ArenaError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(ArenaError::OutOfArena { x: p.x, y: p.y })
        }
    }

    pub fn classify_zone(&self, p: Point) -> Result<Zone, ArenaError> {
        self.check_inside(p)?;
        Ok(self.zone_unchecked(p))
    }

    #[inline]
    fn zone_unchecked(&self, p: Point) -> Zone {
        if let Some(z) = self.cells.lookup(p) {
            return z;
        }
        self.zone_exact(p)
    }

    fn zone_exact(&self, p: Point) -> Zone {
        if self.spec.corridor.contains(p) {
            return Zone::Corridor;
        }
        let band = self.spec.wall_band_mm;
        let band_sq = band * band;
        if self.walls.iter().any(|w| w.distance_sq(p) <= band_sq) {
            Zone::Wall
        } else {
            Zone::RoomCenter
        }
    }

    pub fn nearest_wall_distance(&self, p: Point) -> Result<f64, ArenaError> {
        self.check_inside(p)?;
        Ok(self.nearest_wall(p).0)
    }

    /// Distance to, and the nearest, solid wall segment. No containment check.
    pub fn nearest_wall(&self, p: Point) -> (f64, &Segment) {
        let (d_sq, seg) = self
            .walls
            .iter()
            .map(|w| (w.distance_sq(p), w))
            .fold((f64::INFINITY, &self.walls[0]), |best, cur| if cur.0 < best.0 { cur } else { best });
        (d_sq.sqrt(), seg)
    }

    /// Zone seen by a probe of length `d_probe` cast from `p` along
    /// `heading`. The probe advances in 1 mm steps; when a step would leave
    /// the water region the zone of the last in-region step is returned.
    pub fn zone_of_probe(&self, p: Point, heading: f64, d_probe: f64) -> Zone {
        self.zone_of_probe_along(p, Point::from_angle(heading), d_probe)
    }

    /// [`zone_of_probe`](Self::zone_of_probe) with the heading given as a unit vector.
    pub fn zone_of_probe_along(&self, p: Point, dir: Point, d_probe: f64) -> Zone {
        self.probe_origin(p).zone_along(dir, d_probe)
    }

    /// Prepares repeated probes from one start point.
    pub fn probe_origin(&self, p: Point) -> ProbeOrigin<'_> {
        let p = if self.contains(p) { p } else { self.clamp_inside(p, 0.0) };
        let rects = self.rects();
        let home = [0, 1, 2].map(|i| rects[i].contains(p));
        ProbeOrigin { g: self, p, home }
    }

    /// Distance of the last in-region probe step, emulating 1 mm stepping
    /// along the ray from the inside-intervals of each rectangle.
    fn last_probe_step(&self, p: Point, dir: Point, len: f64) -> f64 {
        let mut buf = [(0.0, 0.0); 3];
        let mut n = 0;
        for r in self.rects() {
            if let Some(span) = r.clip_ray(p, dir, len) {
                buf[n] = span;
                n += 1;
            }
        }
        let spans = &mut buf[..n];
        spans.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut reach = 0.0_f64;
        let mut i = 0;
        loop {
            while i < spans.len() && spans[i].0 <= reach {
                reach = reach.max(spans[i].1);
                i += 1;
            }
            if reach >= len {
                return len;
            }
            // First step point beyond the covered prefix.
            let next_step = (floor_non_negative(reach) + 1.0).min(len);
            if spans[i..].iter().any(|&(lo, hi)| next_step >= lo && next_step <= hi) {
                reach = next_step;
            } else {
                return floor_non_negative(reach);
            }
        }
    }

    /// The zone of every water point within `radius` of `p`, when that is
    /// known to be a single zone. Only the room-centre case is detected.
    pub fn uniform_zone_within(&self, p: Point, radius: f64) -> Option<Zone> {
        let c = &self.spec.corridor;
        let dx = (c.x0 - p.x).max(p.x - c.x1).max(0.0);
        let dy = (c.y0 - p.y).max(p.y - c.y1).max(0.0);
        if dx.hypot(dy) <= radius || !self.contains(p) {
            return None;
        }
        // The union's boundary is made of walls only, so the disc is water.
        (self.nearest_wall(p).0 > self.spec.wall_band_mm + radius).then_some(Zone::RoomCenter)
    }

    /// Nearest point of the region shrunk by `margin` mm on every rectangle.
    pub fn clamp_inside(&self, p: Point, margin: f64) -> Point {
        self.rects()
            .iter()
            .map(|r| r.clamp_inset(p, margin))
            .fold((f64::INFINITY, p), |best, q| {
                let d = q.distance(p);
                if d < best.0 {
                    (d, q)
                } else {
                    best
                }
            })
            .1
    }

    /// Wall-parallel direction of the nearest wall that is closest in angle
    /// to `heading`.
    pub fn wall_parallel_direction(&self, p: Point, heading: f64) -> f64 {
        let (_, seg) = self.nearest_wall(p);
        let a = seg.direction();
        let b = wrap_angle(a + PI);
        if angle_diff(heading, a).abs() <= angle_diff(heading, b).abs() {
            wrap_angle(a)
        } else {
            b
        }
    }
}

/// `x.floor()` for `0 <= x < 2^53`, without a libm call.
#[inline]
fn floor_non_negative(x: f64) -> f64 {
    x as u64 as f64
}

const CELL_MM: f64 = 2.0;
const CELL_SLACK: f64 = 1e-9;
const UNKNOWN_CELL: u8 = u8::MAX;

/// Square cells over the bounding box tagged with their zone when the
/// whole cell lies in a single zone, so most lookups skip the wall scan.
#[derive(Clone, PartialEq, Default)]
struct ZoneCells {
    origin: Point,
    cols: usize,
    rows: usize,
    extent: (f64, f64),
    tags: Vec<u8>,
}

impl fmt::Debug for ZoneCells {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ZoneCells({}x{})", self.cols, self.rows)
    }
}

impl ZoneCells {
    fn build(g: &ArenaGeometry) -> Self {
        let bb = g.bounding_box();
        let cols = (bb.width() / CELL_MM).ceil() as usize;
        let rows = (bb.height() / CELL_MM).ceil() as usize;
        let band = g.spec.wall_band_mm;
        let mut tags = vec![UNKNOWN_CELL; cols * rows];
        for row in 0..rows {
            for col in 0..cols {
                let x0 = bb.x0 + col as f64 * CELL_MM - CELL_SLACK;
                let y0 = bb.y0 + row as f64 * CELL_MM - CELL_SLACK;
                let cell = Rect::new(x0, y0, x0 + CELL_MM + 2.0 * CELL_SLACK, y0 + CELL_MM + 2.0 * CELL_SLACK);
                let inside = |r: &Rect| r.x0 <= cell.x0 && cell.x1 <= r.x1 && r.y0 <= cell.y0 && cell.y1 <= r.y1;
                let corridor = &g.spec.corridor;
                let zone = if inside(corridor) {
                    Some(Zone::Corridor)
                } else if !corridor.intersects_closed(&cell) && (inside(&g.spec.room_a) || inside(&g.spec.room_b)) {
                    let centre = Point::new(0.5 * (cell.x0 + cell.x1), 0.5 * (cell.y0 + cell.y1));
                    let half_diag = 0.5 * cell.width().hypot(cell.height());
                    let d = g.nearest_wall(centre).0;
                    if d + half_diag < band - CELL_SLACK {
                        Some(Zone::Wall)
                    } else if d - half_diag > band + CELL_SLACK {
                        Some(Zone::RoomCenter)
                    } else {
                        None
                    }
                } else {
                    None
                };
                if let Some(z) = zone {
                    tags[row * cols + col] = z.index() as u8;
                }
            }
        }
        ZoneCells { origin: Point::new(bb.x0, bb.y0), cols, rows, extent: (cols as f64, rows as f64), tags }
    }

    #[inline]
    fn lookup(&self, p: Point) -> Option<Zone> {
        let fx = (p.x - self.origin.x) * (1.0 / CELL_MM);
        let fy = (p.y - self.origin.y) * (1.0 / CELL_MM);
        if !(fx >= 0.0 && fy >= 0.0 && fx < self.extent.0 && fy < self.extent.1) {
            return None;
        }
        // In range and non-negative, so the truncating casts are exact floors.
        let (col, row) = (fx as u32 as usize, fy as u32 as usize);
        match self.tags[row * self.cols + col] {
            0 => Some(Zone::Wall),
            1 => Some(Zone::RoomCenter),
            2 => Some(Zone::Corridor),
            _ => None,
        }
    }
}

/// Start point of probes, with the rectangles that contain it.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOrigin<'a> {
    g: &'a ArenaGeometry,
    p: Point,
    home: [bool; 3],
}

impl ProbeOrigin<'_> {
    pub fn point(&self) -> Point {
        self.p
    }

    /// Zone seen by a probe of length `d_probe` along the unit vector `dir`.
    #[inline]
    pub fn zone_along(&self, dir: Point, d_probe: f64) -> Zone {
        let g = self.g;
        if d_probe <= 0.0 {
            return g.zone_unchecked(self.p);
        }
        let end = self.p.offset(dir, d_probe);
        // Rectangles are convex: sharing one with the start keeps the whole segment inside.
        let rects = g.rects();
        if (0..3).any(|i| self.home[i] && rects[i].contains(end)) {
            return g.zone_unchecked(end);
        }
        let last = g.last_probe_step(self.p, dir, d_probe);
        g.zone_unchecked(self.p.offset(dir, last))
    }
}

/// Wraps an angle into `[-π, π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = (a + PI).rem_euclid(two_pi) - PI;
    if r >= PI {
        r -= two_pi;
    }
    r
}

/// Signed smallest difference `a - b`, in `[-π, π)`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Edge pieces of the rectangle union that separate water from outside.
fn boundary_segments(rects: &[Rect; 3]) -> Vec<Segment> {
    const PROBE: f64 = 1e-6;
    let inside = |p: Point| rects.iter().any(|r| r.contains(p));
    let mut out = Vec::new();
    for r in rects {
        for edge in r.edges() {
            let horizontal = edge.a.y == edge.b.y;
            let (lo, hi) = if horizontal {
                (edge.a.x.min(edge.b.x), edge.a.x.max(edge.b.x))
            } else {
                (edge.a.y.min(edge.b.y), edge.a.y.max(edge.b.y))
            };
            let mut cuts = vec![lo, hi];
            for other in rects {
                let cs = if horizontal { [other.x0, other.x1] } else { [other.y0, other.y1] };
                cuts.extend(cs.into_iter().filter(|c| *c > lo && *c < hi));
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut open: Option<Segment> = None;
            for pair in cuts.windows(2) {
                let mid = 0.5 * (pair[0] + pair[1]);
                let (m, n) = if horizontal {
                    (Point::new(mid, edge.a.y), Point::new(0.0, 1.0))
                } else {
                    (Point::new(edge.a.x, mid), Point::new(1.0, 0.0))
                };
                let side_a = inside(m.offset(n, PROBE));
                let side_b = inside(m.offset(n, -PROBE));
                if side_a != side_b {
                    let seg = if horizontal {
                        Segment::new(Point::new(pair[0], edge.a.y), Point::new(pair[1], edge.a.y))
                    } else {
                        Segment::new(Point::new(edge.a.x, pair[0]), Point::new(edge.a.x, pair[1]))
                    };
                    // Merge with the previous piece when they are contiguous.
                    open = Some(match open {
                        Some(prev) if prev.b == seg.a => Segment::new(prev.a, seg.b),
                        Some(prev) => {
                            push_unique(&mut out, prev);
                            seg
                        }
                        None => seg,
                    });
                } else if let Some(prev) = open.take() {
                    push_unique(&mut out, prev);
                }
            }
            if let Some(prev) = open.take() {
                push_unique(&mut out, prev);
            }
        }
    }
    out
}

fn push_unique(out: &mut Vec<Segment>, seg: Segment) {
    if !out.contains(&seg) {
        out.push(seg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> ArenaGeometry {
        canonical_geometry()
    }

    #[test]
    fn cell_lookup_agrees_with_exact_classification() {
        let skewed = ArenaGeometry::new(ArenaSpec {
            room_a: Rect::new(-13.7, 0.0, 300.3, 410.0),
            room_b: Rect::new(612.5, 91.0, 1001.0, 500.0),
            corridor: Rect::new(280.0, 200.5, 640.25, 261.0),
            wall_band_mm: 27.3,
        })
        .unwrap();
        for g in [g(), skewed] {
            let bb = g.bounding_box();
            let mut hits = 0;
            let (nx, ny) = (1013, 517);
            for i in 0..=nx {
                for j in 0..=ny {
                    let p = Point::new(
                        bb.x0 + bb.width() * i as f64 / nx as f64,
                        bb.y0 + bb.height() * j as f64 / ny as f64,
                    );
                    if g.contains(p) {
                        hits += usize::from(g.cells.lookup(p).is_some());
                        assert_eq!(g.zone_unchecked(p), g.zone_exact(p), "{p:?}");
                    }
                }
            }
            assert!(hits > 100_000);
        }
        // Exactly on the band edge.
        let g = g();
        assert_eq!(g.zone_unchecked(Point::new(30.0, 500.0)), Zone::Wall);
        assert_eq!(g.zone_unchecked(Point::new(30.000001, 500.0)), Zone::RoomCenter);
    }

    #[test]
    fn uniform_zone_disc_implies_uniform_probes() {
        let g = g();
        let mut flagged = 0;
        for i in 0..200 {
            for j in 0..70 {
                let p = Point::new(i as f64 * 5.0 + 0.3, 325.0 + j as f64 * 5.0 + 0.1);
                if let Some(z) = g.uniform_zone_within(p, 50.0) {
                    flagged += 1;
                    for k in 0..360 {
                        assert_eq!(g.zone_of_probe(p, k as f64 * PI / 180.0, 50.0), z, "{p:?}");
                    }
                }
            }
        }
        assert!(flagged > 100);
    }

    #[test]
    fn canonical_dimensions() {
        let g = g();
        assert_eq!(g.room_a().width(), 350.0);
        assert_eq!(g.room_a().height(), 350.0);
        assert_eq!(g.corridor().width(), 380.0);
        assert_eq!(g.corridor().height(), 100.0);
        let bb = g.bounding_box();
        assert_eq!(bb.x1 - bb.x0, 1000.0);
    }

    #[test]
    fn canonical_walls_exclude_corridor_mouths() {
        let g = g();
        // 4 sides per room, two split by the mouth, plus two corridor walls.
        assert_eq!(g.walls().len(), 12);
        let total: f64 = g.walls().iter().map(Segment::length).sum();
        assert!((total - (2.0 * (4.0 * 350.0 - 100.0) + 2.0 * 300.0)).abs() < 1e-9);
    }

    #[test]
    fn zone_examples() {
        let g = g();
        assert_eq!(g.classify_zone(Point::new(175.0, 500.0)), Ok(Zone::RoomCenter));
        assert_eq!(g.classify_zone(Point::new(500.0, 500.0)), Ok(Zone::Corridor));
        assert_eq!(g.classify_zone(Point::new(10.0, 500.0)), Ok(Zone::Wall));
        // Overlap strip counts as corridor.
        assert_eq!(g.classify_zone(Point::new(330.0, 500.0)), Ok(Zone::Corridor));
        assert!(matches!(g.classify_zone(Point::new(500.0, 100.0)), Err(ArenaError::OutOfArena { .. })));
    }

    #[test]
    fn wall_distance_examples() {
        let g = g();
        assert_eq!(g.nearest_wall_distance(Point::new(175.0, 500.0)).unwrap(), 175.0);
        assert_eq!(g.nearest_wall_distance(Point::new(500.0, 500.0)).unwrap(), 50.0);
        assert_eq!(g.nearest_wall_distance(Point::new(0.0, 400.0)).unwrap(), 0.0);
        assert_eq!(g.nearest_wall_distance(Point::new(500.0, 550.0)).unwrap(), 0.0);
    }

    #[test]
    fn probe_examples() {
        let g = g();
        let p = Point::new(175.0, 500.0);
        assert_eq!(g.zone_of_probe(p, 0.0, 50.0), Zone::RoomCenter);
        assert_eq!(g.zone_of_probe(p, 1.0, 0.0), Zone::RoomCenter);
        assert_eq!(g.zone_of_probe(Point::new(20.0, 400.0), PI, 50.0), Zone::Wall);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut spec = *g().spec();
        spec.wall_band_mm = 200.0;
        assert!(ArenaGeometry::new(spec).is_err());
        let mut spec = *g().spec();
        spec.corridor = Rect::new(400.0, 450.0, 600.0, 550.0);
        assert!(ArenaGeometry::new(spec).is_err());
        let mut spec = *g().spec();
        spec.room_b = Rect::new(350.0, 325.0, 700.0, 675.0);
        assert!(ArenaGeometry::new(spec).is_err());
    }

    #[test]
    fn json_layout() {
        let json = serde_json::to_value(g()).unwrap();
        assert_eq!(json["roomA"], serde_json::json!([0.0, 325.0, 350.0, 675.0]));
        assert_eq!(json["wall_band_mm"], 30.0);
        let back: ArenaGeometry = serde_json::from_value(json).unwrap();
        assert_eq!(back, g());
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -PI, 0.0, PI, 3.0 * PI, 7.5] {
            let w = wrap_angle(a);
            assert!((-PI..PI).contains(&w), "{a} -> {w}");
        }
        assert_eq!(wrap_angle(PI), -PI);
    }
}
