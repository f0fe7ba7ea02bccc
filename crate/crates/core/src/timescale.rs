//! Finite representations of time scales.
//!
//! A [`TimeScaleSpec`] names a closed subset of the reals (an integer lattice,
//! the real line, or a union of intervals and isolated points). Building it over
//! `[t0, horizon]` yields a [`TimeScaleGrid`]: the ordered computational points
//! together with the graininess `mu(t) = sigma(t) - t` of the underlying time
//! scale at each point.
//!
//! Real segments are carried by a computational grid, but their points are
//! right-dense and report `mu = 0`. The spacing of that grid is a discretization
//! parameter only; calculus and solver code branch on the dense flag, never on
//! the spacing.

use std::fmt;

use crate::error::{Error, Result};

/// Relative tolerance used when matching a time value to a grid point.
const MATCH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum TimeScaleSpec {
    /// `{origin + k * spacing : k in Z}`.
    IntegerLattice { origin: f64, spacing: f64 },
    /// The real line, discretized with points `anchor + i * step`. Each cell is
    /// subdivided into `substeps` pieces for quadrature and Runge-Kutta steps.
    UniformRealGrid { anchor: f64, step: f64, substeps: usize },
    /// A finite union of closed intervals and isolated points. Intervals are
    /// discretized with `step`.
    UnionOfIntervals {
        intervals: Vec<(f64, f64)>,
        points: Vec<f64>,
        step: f64,
    },
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    Interval(f64, f64),
    Point(f64),
}

impl Piece {
    fn start(self) -> f64 {
        match self {
            Piece::Interval(a, _) => a,
            Piece::Point(p) => p,
        }
    }

    fn end(self) -> f64 {
        match self {
            Piece::Interval(_, b) => b,
            Piece::Point(p) => p,
        }
    }
}

impl TimeScaleSpec {
    /// The integers.
    pub fn integers() -> Self {
        TimeScaleSpec::IntegerLattice {
            origin: 0.0,
            spacing: 1.0,
        }
    }

    /// The real line discretized with step `step` and one substep per cell.
    pub fn reals(step: f64) -> Self {
        TimeScaleSpec::UniformRealGrid {
            anchor: 0.0,
            step,
            substeps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTimeScale(msg));
        match self {
            TimeScaleSpec::IntegerLattice { origin, spacing } => {
                if !origin.is_finite() || !spacing.is_finite() || *spacing <= 0.0 {
                    return bad(format!("lattice spacing must be positive, got {spacing}"));
                }
            }
            TimeScaleSpec::UniformRealGrid {
                anchor,
                step,
                substeps,
            } => {
                if !anchor.is_finite() || !step.is_finite() || *step <= 0.0 {
                    return bad(format!("grid step must be positive, got {step}"));
                }
                if *substeps == 0 {
                    return bad("substeps must be at least 1".into());
                }
            }
            TimeScaleSpec::UnionOfIntervals { step, .. } => {
                if !step.is_finite() || *step <= 0.0 {
                    return bad(format!("interval step must be positive, got {step}"));
                }
                self.pieces()?;
            }
        }
        Ok(())
    }

    /// Sorted, disjoint pieces of a union spec.
    fn pieces(&self) -> Result<Vec<Piece>> {
        let TimeScaleSpec::UnionOfIntervals {
            intervals, points, ..
        } = self
        else {
            return Ok(Vec::new());
        };
        let mut pieces = Vec::with_capacity(intervals.len() + points.len());
        for &(a, b) in intervals {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidTimeScale(format!(
                    "interval [{a}, {b}] must have finite endpoints with a < b"
                )));
            }
            pieces.push(Piece::Interval(a, b));
        }
        for &p in points {
            if !p.is_finite() {
                return Err(Error::InvalidTimeScale(format!("isolated point {p} is not finite")));
            }
            pieces.push(Piece::Point(p));
        }
        if pieces.is_empty() {
            return Err(Error::InvalidTimeScale("union has no intervals or points".into()));
        }
        pieces.sort_by(|x, y| x.start().total_cmp(&y.start()));
        for w in pieces.windows(2) {
            if w[0].end() >= w[1].start() {
                return Err(Error::InvalidTimeScale(format!(
                    "pieces ending at {} and starting at {} overlap or touch",
                    w[0].end(),
                    w[1].start()
                )));
            }
        }
        Ok(pieces)
    }

    fn substeps(&self) -> usize {
        match self {
            TimeScaleSpec::UniformRealGrid { substeps, .. } => *substeps,
            _ => 1,
        }
    }
}

impl fmt::Display for TimeScaleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeScaleSpec::IntegerLattice { origin, spacing } => {
                write!(f, "lattice(origin={origin}, spacing={spacing})")
            }
            TimeScaleSpec::UniformRealGrid {
                anchor,
                step,
                substeps,
            } => write!(f, "reals(anchor={anchor}, step={step}, substeps={substeps})"),
            TimeScaleSpec::UnionOfIntervals {
                intervals,
                points,
                step,
            } => write!(f, "union(intervals={intervals:?}, points={points:?}, step={step})"),
        }
    }
}

/// Ordered grid points with per-point graininess and right-density flags.
///
/// Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeScaleGrid {
    points: Vec<f64>,
    grain: Vec<f64>,
    dense: Vec<bool>,
    substeps: usize,
}

/// Builds the grid covering `[t0, horizon]` of the time scale.
pub fn build_grid(spec: &TimeScaleSpec, t0: f64, horizon: f64) -> Result<TimeScaleGrid> {
    spec.validate()?;
    if !(t0.is_finite() && horizon.is_finite()) || horizon <= t0 {
        return Err(Error::InvalidSpan { t0, horizon });
    }
    let mut points = Vec::new();
    let mut grain = Vec::new();
    let mut dense = Vec::new();

    match spec {
        TimeScaleSpec::IntegerLattice { origin, spacing } => {
            let k_lo = ((t0 - origin) / spacing - MATCH_TOL).ceil() as i64;
            let k_hi = ((horizon - origin) / spacing + MATCH_TOL).floor() as i64;
            for k in k_lo..=k_hi {
                points.push(origin + k as f64 * spacing);
                grain.push(*spacing);
                dense.push(false);
            }
        }
        TimeScaleSpec::UniformRealGrid { anchor, step, .. } => {
            push_real_segment(&mut points, t0, horizon, *anchor, *step);
            grain.resize(points.len(), 0.0);
            dense.resize(points.len(), true);
        }
        TimeScaleSpec::UnionOfIntervals { step, .. } => {
            let pieces = spec.pieces()?;
            for (i, piece) in pieces.iter().enumerate() {
                let next_start = pieces.get(i + 1).map(|p| p.start());
                match *piece {
                    Piece::Interval(a, b) => {
                        let lo = a.max(t0);
                        let hi = b.min(horizon);
                        if lo > hi {
                            continue;
                        }
                        let first = points.len();
                        push_real_segment(&mut points, lo, hi, a, *step);
                        for &t in &points[first..] {
                            // Only the right endpoint of an interval can be
                            // right-scattered.
                            if t < b {
                                grain.push(0.0);
                                dense.push(true);
                            } else {
                                right_end(next_start, t, &mut grain, &mut dense);
                            }
                        }
                    }
                    Piece::Point(p) => {
                        if p < t0 || p > horizon {
                            continue;
                        }
                        points.push(p);
                        right_end(next_start, p, &mut grain, &mut dense);
                    }
                }
            }
        }
    }

    if points.is_empty() {
        return Err(Error::EmptyGrid { t0, horizon });
    }
    Ok(TimeScaleGrid {
        points,
        grain,
        dense,
        substeps: spec.substeps(),
    })
}

fn right_end(next_start: Option<f64>, t: f64, grain: &mut Vec<f64>, dense: &mut Vec<bool>) {
    match next_start {
        Some(s) => {
            grain.push(s - t);
            dense.push(false);
        }
        // Maximum of the time scale: sigma(t) = t.
        None => {
            grain.push(0.0);
            dense.push(true);
        }
    }
}

/// Appends `lo`, the points `anchor + i * step` strictly inside `(lo, hi)`, and
/// `hi` (when distinct from `lo`).
fn push_real_segment(points: &mut Vec<f64>, lo: f64, hi: f64, anchor: f64, step: f64) {
    points.push(lo);
    if hi <= lo {
        return;
    }
    let snap = MATCH_TOL * step;
    let mut i = ((lo - anchor) / step).floor() as i64 + 1;
    loop {
        let t = anchor + i as f64 * step;
        if t >= hi - snap {
            break;
        }
        if t > lo + snap {
            points.push(t);
        }
        i += 1;
    }
    points.push(hi);
}

impl TimeScaleGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn grain(&self) -> &[f64] {
        &self.grain
    }

    pub fn dense_flags(&self) -> &[bool] {
        &self.dense
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Computational subdivisions per dense cell.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of the grid point equal to `t` (up to a relative tolerance of 1e-9
    /// of the local spacing).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let pos = self.points.partition_point(|&p| p < t);
        let candidates = [pos.checked_sub(1), Some(pos)];
        for i in candidates.into_iter().flatten() {
            if let Some(&p) = self.points.get(i) {
                if (p - t).abs() <= self.match_tol(i) {
                    return Ok(i);
                }
            }
        }
        Err(Error::NotInGrid(t))
    }

    fn match_tol(&self, i: usize) -> f64 {
        let spacing = if i + 1 < self.points.len() {
            self.points[i + 1] - self.points[i]
        } else if i > 0 {
            self.points[i] - self.points[i - 1]
        } else {
            1.0
        };
        MATCH_TOL * spacing.min(1.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.index_of(t).is_ok()
    }

    /// Forward jump at the `i`-th point.
    pub fn sigma_at(&self, i: usize) -> f64 {
        self.points[i] + self.grain[i]
    }

    pub fn mu_at(&self, i: usize) -> f64 {
        self.grain[i]
    }

    pub fn is_dense_at(&self, i: usize) -> bool {
        self.dense[i]
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(self.sigma_at(self.index_of(t)?))
    }

    pub fn mu(&self, t: f64) -> Result<f64> {
        Ok(self.mu_at(self.index_of(t)?))
    }

    /// Graininess at `t` if `t` is a grid point, else 0 (interior of a dense
    /// cell).
    pub fn mu_or_zero(&self, t: f64) -> f64 {
        self.index_of(t).map(|i| self.grain[i]).unwrap_or(0.0)
    }

    /// `sup mu(t)` over the grid.
    pub fn max_grain(&self) -> f64 {
        self.grain.iter().copied().fold(0.0, f64::max)
    }

    /// True when every point shares the same layout as `other`.
    pub fn same_points(&self, other: &TimeScaleGrid) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| (a - b).abs() <= MATCH_TOL * a.abs().max(1.0))
    }

    /// Returns a grid containing every instant of `instants` that lies in
    /// `[start, end]`. Instants within tolerance of an existing point replace it
    /// exactly; instants inside a dense cell are inserted as new dense points;
    /// anything else is rejected.
    pub fn with_instants(&self, instants: &[f64]) -> Result<TimeScaleGrid> {
        let mut grid = self.clone();
        for &s in instants {
            if !s.is_finite() {
                return Err(Error::ImpulseOffGrid(s));
            }
            if s < grid.start() || s > grid.end() {
                continue;
            }
            if let Ok(i) = grid.index_of(s) {
                grid.points[i] = s;
                continue;
            }
            let pos = grid.points.partition_point(|&p| p < s);
            // pos >= 1 because s > start and s is not the start.
            let cell = pos - 1;
            if !grid.dense[cell] {
                return Err(Error::ImpulseOffGrid(s));
            }
            grid.points.insert(pos, s);
            grid.grain.insert(pos, 0.0);
            grid.dense.insert(pos, true);
        }
        Ok(grid)
    }
}
