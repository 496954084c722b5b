//! Occupancy grid maps and the ASCII map file format.
//!
//! A map file starts with `resolution <meters-per-cell>` followed by
//! equal-length rows of `#` (occupied) and `.` (free). The first grid row is
//! `y = 0`; the first character of a row is `x = 0`.

use std::sync::OnceLock;

use thiserror::Error;

use super::geometry::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn format_err(line: usize, msg: impl Into<String>) -> MapError {
    MapError::Format {
        line,
        msg: msg.into(),
    }
}

const BUCKET: usize = 8;

/// Occupied cells that touch free space, bucketed for radius queries.
#[derive(Clone, Debug)]
struct BoundaryIndex {
    bw: usize,
    bh: usize,
    buckets: Vec<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug)]
pub struct GridMap {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin: Vec2,
    boundary: OnceLock<BoundaryIndex>,
}

impl PartialEq for GridMap {
    fn eq(&self, o: &Self) -> bool {
        self.resolution == o.resolution
            && self.width == o.width
            && self.height == o.height
            && self.cells == o.cells
            && self.origin == o.origin
    }
}

/// Parses the ASCII map format. The whole input must be consumed.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| format_err(1, "empty map file"))?;
    let mut words = first.split_whitespace();
    if words.next() != Some("resolution") {
        return Err(format_err(1, "expected `resolution <float>`"));
    }
    let resolution: f64 = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| format_err(1, "resolution is not a number"))?;
    if words.next().is_some() {
        return Err(format_err(1, "trailing tokens after resolution"));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(format_err(1, "resolution must be positive"));
    }

    let mut width = None;
    let mut cells = Vec::new();
    let mut height = 0;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            // Only trailing blank lines are tolerated.
            continue;
        }
        let w = *width.get_or_insert(row.len());
        if row.len() != w {
            return Err(format_err(
                line_no,
                format!("row has length {}, expected {w}", row.len()),
            ));
        }
        for (col, ch) in row.chars().enumerate() {
            match ch {
                '#' => cells.push(true),
                '.' => cells.push(false),
                other => {
                    return Err(format_err(
                        line_no,
                        format!("unknown character {other:?} at column {}", col + 1),
                    ))
                }
            }
        }
        height += 1;
    }
    // Reject blank lines in the middle of the grid: they would silently merge rows.
    let mut seen_blank = false;
    for (idx, raw) in text.lines().enumerate().skip(1) {
        if raw.trim_end_matches('\r').is_empty() {
            seen_blank = true;
        } else if seen_blank {
            return Err(format_err(idx + 1, "row after blank line"));
        }
    }
    let width = width.ok_or_else(|| format_err(2, "map has no rows"))?;
    Ok(GridMap::new(resolution, width, height, cells, Vec2::ZERO))
}

impl GridMap {
    pub fn new(resolution: f64, width: usize, height: usize, cells: Vec<bool>, origin: Vec2) -> Self {
        assert_eq!(cells.len(), width * height, "cell count must equal width*height");
        assert!(resolution > 0.0);
        Self {
            resolution,
            width,
            height,
            cells,
            origin,
            boundary: OnceLock::new(),
        }
    }

    /// An all-free map.
    pub fn empty(resolution: f64, width: usize, height: usize) -> Self {
        Self::new(resolution, width, height, vec![false; width * height], Vec2::ZERO)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("resolution {}\n", self.resolution);
        for iy in 0..self.height {
            for ix in 0..self.width {
                s.push(if self.cells[iy * self.width + ix] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        self.cells[iy * self.width + ix] = occupied;
        self.boundary = OnceLock::new();
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    /// Occupancy of a cell; cells outside the grid are free.
    pub fn is_occupied(&self, ix: i64, iy: i64) -> bool {
        self.in_bounds(ix, iy) && self.cells[iy as usize * self.width + ix as usize]
    }

    pub fn world_to_cell(&self, p: Vec2) -> (i64, i64) {
        let q = p - self.origin;
        (
            (q.x / self.resolution).floor() as i64,
            (q.y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin
            + Vec2::new(
                (ix as f64 + 0.5) * self.resolution,
                (iy as f64 + 0.5) * self.resolution,
            )
    }

    pub fn is_occupied_at(&self, p: Vec2) -> bool {
        let (ix, iy) = self.world_to_cell(p);
        self.is_occupied(ix, iy)
    }

    pub fn extent(&self) -> Vec2 {
        Vec2::new(
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    fn boundary(&self) -> &BoundaryIndex {
        self.boundary.get_or_init(|| {
            let bw = self.width.div_ceil(BUCKET).max(1);
            let bh = self.height.div_ceil(BUCKET).max(1);
            let mut buckets = vec![Vec::new(); bw * bh];
            for iy in 0..self.height {
                for ix in 0..self.width {
                    if !self.cells[iy * self.width + ix] {
                        continue;
                    }
                    let (x, y) = (ix as i64, iy as i64);
                    let exposed = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|&(dx, dy)| !self.is_occupied(x + dx, y + dy));
                    if exposed {
                        buckets[(iy / BUCKET) * bw + ix / BUCKET].push((ix, iy));
                    }
                }
            }
            BoundaryIndex { bw, bh, buckets }
        })
    }

    /// Nearest point on any occupied cell within `cutoff` of `p`, with its distance.
    /// Points inside an occupied cell return themselves at distance 0.
    pub fn nearest_occupied(&self, p: Vec2, cutoff: f64) -> Option<(Vec2, f64)> {
        if self.is_occupied_at(p) {
            return Some((p, 0.0));
        }
        let idx = self.boundary();
        let span = BUCKET as f64 * self.resolution;
        let q = p - self.origin;
        let bx0 = ((q.x - cutoff) / span).floor().max(0.0) as i64;
        let by0 = ((q.y - cutoff) / span).floor().max(0.0) as i64;
        let bx1 = ((q.x + cutoff) / span).floor().min(idx.bw as f64 - 1.0) as i64;
        let by1 = ((q.y + cutoff) / span).floor().min(idx.bh as f64 - 1.0) as i64;
        let mut best: Option<(Vec2, f64)> = None;
        for by in by0..=by1 {
            for bx in bx0..=bx1 {
                for &(ix, iy) in &idx.buckets[by as usize * idx.bw + bx as usize] {
                    let lo = self.origin
                        + Vec2::new(ix as f64 * self.resolution, iy as f64 * self.resolution);
                    let np = Vec2::new(
                        p.x.clamp(lo.x, lo.x + self.resolution),
                        p.y.clamp(lo.y, lo.y + self.resolution),
                    );
                    let d = np.dist(p);
                    if d <= cutoff && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((np, d));
                    }
                }
            }
        }
        best
    }
}
