//! Exact integer geometry of the scaled lattice: cells, coordinate
//! rectangles, dual boundary points and the discrete `l_inf` distance.
//!
//! Dual points are stored in doubled integer coordinates, so all geometry
//! (residues, side membership, boundary enumeration) is exact; the mesh size
//! `eps` only enters when converting counts to continuum lengths.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One cell of the scaled lattice: the half-open square of side `eps`
/// centered at `eps * (ix, iy)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub ix: i64,
    pub iy: i64,
}

impl Cell {
    pub fn new(ix: i64, iy: i64) -> Self {
        Cell { ix, iy }
    }

    /// Chebyshev distance in cell units.
    pub fn dist_inf(&self, other: &Cell) -> i64 {
        (self.ix - other.ix).abs().max((self.iy - other.iy).abs())
    }
}

/// A midpoint of a nearest-neighbor bond, in doubled integer coordinates:
/// the point is `(dx/2, dy/2)` and exactly one of `dx`, `dy` is odd.
///
/// Odd `dx` means the midpoint of a horizontal bond, which sits on a
/// vertical piece of boundary; odd `dy` the mirror case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualPoint {
    pub dx: i64,
    pub dy: i64,
}

impl DualPoint {
    pub fn new(dx: i64, dy: i64) -> Self {
        debug_assert!(
            (dx.rem_euclid(2) == 1) != (dy.rem_euclid(2) == 1),
            "exactly one doubled coordinate must be odd"
        );
        DualPoint { dx, dy }
    }

    /// Midpoint of the bond between two adjacent cells.
    pub fn between(a: Cell, b: Cell) -> Self {
        debug_assert_eq!(a.dist_inf(&b), 1);
        debug_assert_eq!((a.ix - b.ix).abs() + (a.iy - b.iy).abs(), 1);
        DualPoint::new(a.ix + b.ix, a.iy + b.iy)
    }

    /// True if the point lies on a vertical boundary line `x = n + 1/2`.
    pub fn on_vertical_line(&self) -> bool {
        self.dx.rem_euclid(2) == 1
    }

    /// Index `n` of the dual line `n + 1/2` the point sits on: the column
    /// for vertical-line points, the row for horizontal-line ones.
    pub fn line_index(&self) -> i64 {
        if self.on_vertical_line() {
            (self.dx - 1) / 2
        } else {
            (self.dy - 1) / 2
        }
    }

    /// Continuum position `eps * (dx/2, dy/2)`.
    pub fn position(&self, eps: f64) -> (f64, f64) {
        (self.dx as f64 * 0.5 * eps, self.dy as f64 * 0.5 * eps)
    }
}

/// The four sides of a coordinate rectangle. Vertical sides sit on dual
/// columns, horizontal sides on dual rows; `left`/`bottom` step inward with
/// increasing line index, `right`/`top` with decreasing index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideKind {
    LeftVertical,
    BottomHorizontal,
    RightVertical,
    TopHorizontal,
}

impl SideKind {
    pub const ALL: [SideKind; 4] = [
        SideKind::LeftVertical,
        SideKind::BottomHorizontal,
        SideKind::RightVertical,
        SideKind::TopHorizontal,
    ];

    pub fn is_vertical(&self) -> bool {
        matches!(self, SideKind::LeftVertical | SideKind::RightVertical)
    }

    /// Sign of the residue shift per inward step: `+1` for left/bottom,
    /// `-1` for right/top.
    pub fn step_sign(&self) -> i64 {
        match self {
            SideKind::LeftVertical | SideKind::BottomHorizontal => 1,
            SideKind::RightVertical | SideKind::TopHorizontal => -1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SideKind::LeftVertical => "left",
            SideKind::BottomHorizontal => "bottom",
            SideKind::RightVertical => "right",
            SideKind::TopHorizontal => "top",
        }
    }
}

/// A maximal straight run of boundary dual points forming one side.
///
/// `line` is the dual-line index (the side lies on `x = line + 1/2` when
/// vertical, `y = line + 1/2` when horizontal) and `lo..=hi` the integer
/// positions along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub vertical: bool,
    pub line: i64,
    pub lo: i64,
    pub hi: i64,
}

impl Segment {
    /// Number of dual points on the segment.
    pub fn point_count(&self) -> i64 {
        if self.hi < self.lo {
            0
        } else {
            self.hi - self.lo + 1
        }
    }

    /// Continuum length `eps * point_count`.
    pub fn length(&self, eps: f64) -> f64 {
        self.point_count() as f64 * eps
    }

    /// Residue class of the dual line index mod `m`.
    pub fn residue(&self, m: u32) -> u32 {
        self.line.rem_euclid(m as i64) as u32
    }

    pub fn points(&self) -> impl Iterator<Item = DualPoint> + '_ {
        let vertical = self.vertical;
        let line = self.line;
        (self.lo..=self.hi).map(move |l| {
            if vertical {
                DualPoint::new(2 * line + 1, 2 * l)
            } else {
                DualPoint::new(2 * l, 2 * line + 1)
            }
        })
    }

    /// Segment translated by `n` dual lines in the inward direction of the
    /// side it came from.
    pub fn shifted(&self, n: i64, sign: i64) -> Segment {
        Segment {
            line: self.line + sign * n,
            ..*self
        }
    }
}

/// A coordinate rectangle given by inclusive cell-index bounds plus the mesh
/// size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeRect {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
    pub eps: f64,
}

impl LatticeRect {
    pub fn new(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64, eps: f64) -> Result<Self> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if x_lo > x_hi || y_lo > y_hi {
            return Err(Error::InvalidInput(format!(
                "empty rectangle bounds [{x_lo},{x_hi}]x[{y_lo},{y_hi}]"
            )));
        }
        Ok(LatticeRect { x_lo, x_hi, y_lo, y_hi, eps })
    }

    /// Snap a continuum rectangle to the cells whose centers it covers.
    pub fn from_continuum(x0: f64, x1: f64, y0: f64, y1: f64, eps: f64) -> Result<Self> {
        let lo = |v: f64| (v / eps).round() as i64;
        let hi = |v: f64| (v / eps).round() as i64 - 1;
        LatticeRect::new(lo(x0), hi(x1), lo(y0), hi(y1), eps)
    }

    pub fn width_cells(&self) -> i64 {
        self.x_hi - self.x_lo + 1
    }

    pub fn height_cells(&self) -> i64 {
        self.y_hi - self.y_lo + 1
    }

    pub fn cell_count(&self) -> i64 {
        self.width_cells() * self.height_cells()
    }

    /// Horizontal extent (the length of the bottom/top sides).
    pub fn len_horizontal(&self) -> f64 {
        self.width_cells() as f64 * self.eps
    }

    /// Vertical extent (the length of the left/right sides).
    pub fn len_vertical(&self) -> f64 {
        self.height_cells() as f64 * self.eps
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.ix >= self.x_lo && c.ix <= self.x_hi && c.iy >= self.y_lo && c.iy <= self.y_hi
    }

    pub fn contains_rect(&self, other: &LatticeRect) -> bool {
        self.x_lo <= other.x_lo
            && self.x_hi >= other.x_hi
            && self.y_lo <= other.y_lo
            && self.y_hi >= other.y_hi
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let me = *self;
        (0..self.cell_count()).map(move |k| me.cell_at(k as usize))
    }

    /// Cell at a row-major index within the rectangle.
    pub fn cell_at(&self, index: usize) -> Cell {
        let w = self.width_cells();
        Cell::new(
            self.x_lo + (index as i64 % w),
            self.y_lo + (index as i64 / w),
        )
    }

    /// Rectangle shrunk inward by per-side cell counts; `None` when a side
    /// would degenerate to length zero or below.
    pub fn shrunk(&self, n_left: i64, n_bottom: i64, n_right: i64, n_top: i64) -> Option<LatticeRect> {
        let r = LatticeRect {
            x_lo: self.x_lo + n_left,
            x_hi: self.x_hi - n_right,
            y_lo: self.y_lo + n_bottom,
            y_hi: self.y_hi - n_top,
            eps: self.eps,
        };
        (r.x_lo <= r.x_hi && r.y_lo <= r.y_hi).then_some(r)
    }

    /// The `j`-fold uniformly shrunk rectangle (used by the closed-form
    /// dissipation sums); `None` once empty.
    pub fn inset(&self, j: i64) -> Option<LatticeRect> {
        self.shrunk(j, j, j, j)
    }

    /// One side as a segment, together with its kind.
    pub fn side(&self, kind: SideKind) -> Segment {
        match kind {
            SideKind::LeftVertical => Segment {
                vertical: true,
                line: self.x_lo - 1,
                lo: self.y_lo,
                hi: self.y_hi,
            },
            SideKind::RightVertical => Segment {
                vertical: true,
                line: self.x_hi,
                lo: self.y_lo,
                hi: self.y_hi,
            },
            SideKind::BottomHorizontal => Segment {
                vertical: false,
                line: self.y_lo - 1,
                lo: self.x_lo,
                hi: self.x_hi,
            },
            SideKind::TopHorizontal => Segment {
                vertical: false,
                line: self.y_hi,
                lo: self.x_lo,
                hi: self.x_hi,
            },
        }
    }

    /// All four sides in `[left, bottom, right, top]` order. Corner dual
    /// points belong to the unique side line containing them, so the four
    /// segments partition the boundary.
    pub fn sides(&self) -> [(SideKind, Segment); 4] {
        SideKind::ALL.map(|k| (k, self.side(k)))
    }

    /// Boundary dual points with their side tags.
    pub fn boundary_dual_points(&self) -> Vec<(DualPoint, SideKind)> {
        let mut out = Vec::with_capacity(2 * (self.width_cells() + self.height_cells()) as usize);
        for (kind, seg) in self.sides() {
            out.extend(seg.points().map(|p| (p, kind)));
        }
        out
    }

    /// `H^1` of the topological boundary: `eps` per boundary bond.
    pub fn boundary_length(&self) -> f64 {
        2.0 * (self.width_cells() + self.height_cells()) as f64 * self.eps
    }

    pub fn intersection(&self, other: &LatticeRect) -> Option<LatticeRect> {
        let r = LatticeRect {
            x_lo: self.x_lo.max(other.x_lo),
            x_hi: self.x_hi.min(other.x_hi),
            y_lo: self.y_lo.max(other.y_lo),
            y_hi: self.y_hi.min(other.y_hi),
            eps: self.eps,
        };
        (r.x_lo <= r.x_hi && r.y_lo <= r.y_hi).then_some(r)
    }
}

/// Membership view shared by the distance and energy routines.
pub trait CellSet {
    fn contains_cell(&self, c: Cell) -> bool;
    fn is_empty_set(&self) -> bool;
    /// A rectangle outside of which no member cell exists.
    fn bounding_window(&self) -> Option<LatticeRect>;
}

impl CellSet for LatticeRect {
    fn contains_cell(&self, c: Cell) -> bool {
        self.contains(c)
    }
    fn is_empty_set(&self) -> bool {
        false
    }
    fn bounding_window(&self) -> Option<LatticeRect> {
        Some(*self)
    }
}

/// An arbitrary finite union of cells on a window, with bitmask semantics:
/// cells outside the window never belong to the set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub window: LatticeRect,
    mask: Vec<bool>,
}

impl GridSet {
    pub fn empty(window: LatticeRect) -> Self {
        let n = window.cell_count() as usize;
        GridSet { window, mask: vec![false; n] }
    }

    pub fn full(window: LatticeRect) -> Self {
        let n = window.cell_count() as usize;
        GridSet { window, mask: vec![true; n] }
    }

    pub fn from_rect(window: LatticeRect, rect: &LatticeRect) -> Result<Self> {
        if !window.contains_rect(rect) {
            return Err(Error::InvalidInput(
                "rectangle does not fit in the window".into(),
            ));
        }
        let mut s = GridSet::empty(window);
        for c in rect.cells() {
            s.insert(c);
        }
        Ok(s)
    }

    pub fn from_bits(window: LatticeRect, bits: u64) -> Self {
        let n = window.cell_count() as usize;
        let mask = (0..n).map(|i| bits >> i & 1 == 1).collect();
        GridSet { window, mask }
    }

    pub fn to_bits(&self) -> u64 {
        self.mask
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| if b { acc | 1 << i } else { acc })
    }

    fn index(&self, c: Cell) -> Option<usize> {
        if !self.window.contains(c) {
            return None;
        }
        let w = self.window.width_cells();
        Some(((c.iy - self.window.y_lo) * w + (c.ix - self.window.x_lo)) as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        self.window.cell_at(index)
    }

    pub fn insert(&mut self, c: Cell) {
        let i = self.index(c).expect("cell inside window");
        self.mask[i] = true;
    }

    pub fn remove(&mut self, c: Cell) {
        if let Some(i) = self.index(c) {
            self.mask[i] = false;
        }
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.iter().all(|&b| !b)
    }

    pub fn member_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.cell_at(i))
    }

    /// Boundary dual points: midpoints of bonds with exactly one endpoint in
    /// the set. Untagged; side tags only make sense for rectangles.
    pub fn boundary_dual_points(&self) -> Vec<DualPoint> {
        let mut out = Vec::new();
        for c in self.member_cells() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let nb = Cell::new(c.ix + dx, c.iy + dy);
                if !self.contains_cell(nb) {
                    out.push(DualPoint::between(c, nb));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// `H^1` of the boundary via bond counting.
    pub fn boundary_length(&self) -> f64 {
        self.boundary_dual_points().len() as f64 * self.window.eps
    }

    /// Area `|A| = eps^2 * cells`.
    pub fn area(&self) -> f64 {
        self.len() as f64 * self.window.eps * self.window.eps
    }

    /// The minimal coordinate rectangle containing the set, if the set
    /// equals that rectangle.
    pub fn as_rect(&self) -> Option<LatticeRect> {
        let mut bounds: Option<(i64, i64, i64, i64)> = None;
        for c in self.member_cells() {
            bounds = Some(match bounds {
                None => (c.ix, c.ix, c.iy, c.iy),
                Some((a, b, lo, hi)) => (a.min(c.ix), b.max(c.ix), lo.min(c.iy), hi.max(c.iy)),
            });
        }
        let (x_lo, x_hi, y_lo, y_hi) = bounds?;
        let rect = LatticeRect { x_lo, x_hi, y_lo, y_hi, eps: self.window.eps };
        (rect.cell_count() as usize == self.len()).then_some(rect)
    }

    pub fn is_subset_of(&self, other: &GridSet) -> bool {
        self.member_cells().all(|c| other.contains_cell(c))
    }

    pub fn intersection(&self, other: &GridSet) -> GridSet {
        let mut s = GridSet::empty(self.window);
        for c in self.member_cells() {
            if other.contains_cell(c) {
                s.insert(c);
            }
        }
        s
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        let mut s = self.clone();
        for c in other.member_cells() {
            s.insert(c);
        }
        s
    }
}

impl CellSet for GridSet {
    fn contains_cell(&self, c: Cell) -> bool {
        self.index(c).map(|i| self.mask[i]).unwrap_or(false)
    }
    fn is_empty_set(&self) -> bool {
        self.is_empty()
    }
    fn bounding_window(&self) -> Option<LatticeRect> {
        Some(self.window)
    }
}

/// Discrete `l_inf` distance from a cell to the boundary of `set`, in units
/// of `eps`: the Chebyshev distance to the nearest cell of opposite
/// membership. Expands Chebyshev rings with early exit; always `>= eps`.
pub fn d_inf<S: CellSet>(cell: Cell, set: &S, eps: f64) -> Result<f64> {
    Ok(d_inf_cells(cell, set)? as f64 * eps)
}

/// Same as [`d_inf`] but in integer cell units.
pub fn d_inf_cells<S: CellSet>(cell: Cell, set: &S) -> Result<i64> {
    if set.is_empty_set() {
        return Err(Error::DistanceUndefined("set is empty".into()));
    }
    let inside = set.contains_cell(cell);
    let window = set
        .bounding_window()
        .ok_or_else(|| Error::DistanceUndefined("set is unbounded".into()))?;
    // Any cell strictly outside the window is a non-member, so a ring that
    // clears the window certainly contains opposite cells; cap accordingly.
    let max_r = if inside {
        // Straight-line exit through the nearest window face.
        (cell.ix - window.x_lo + 1)
            .min(window.x_hi - cell.ix + 1)
            .min(cell.iy - window.y_lo + 1)
            .min(window.y_hi - cell.iy + 1)
            .max(1)
    } else {
        let dx = (cell.ix - window.x_lo).abs().max((window.x_hi - cell.ix).abs());
        let dy = (cell.iy - window.y_lo).abs().max((window.y_hi - cell.iy).abs());
        dx.max(dy).max(1)
    };
    for r in 1..=max_r {
        if ring_has_opposite(cell, r, set, inside) {
            return Ok(r);
        }
    }
    Err(Error::DistanceUndefined(
        "no opposite-membership cell found".into(),
    ))
}

fn ring_has_opposite<S: CellSet>(center: Cell, r: i64, set: &S, inside: bool) -> bool {
    let check = |c: Cell| set.contains_cell(c) != inside;
    for dx in -r..=r {
        if check(Cell::new(center.ix + dx, center.iy - r))
            || check(Cell::new(center.ix + dx, center.iy + r))
        {
            return true;
        }
    }
    for dy in (-r + 1)..r {
        if check(Cell::new(center.ix - r, center.iy + dy))
            || check(Cell::new(center.ix + r, center.iy + dy))
        {
            return true;
        }
    }
    false
}
