//! Comparison envelopes for impulsive dynamic inequalities.
//!
//! All envelopes are evaluated in closed form from generalized exponentials
//! and impulse products; none of them steps the inequality itself. Impulse
//! products `prod_{s < t_k < t} d_k` are accumulated in log space, so long
//! horizons with small factors do not underflow.
//!
//! Evaluation at an impulse instant `t_k` comes in two flavours ([`Side`]):
//! `Pre` excludes the jump at `t_k` (the strict inequality `t_k < t`), `Post`
//! includes it and bounds `x(t_k+)`.

use std::io::Write;

use crate::calculus::{simpson, ExpTable, RegressiveFn};
use crate::coefficient::CoefficientFn;
use crate::error::{Error, Result};
use crate::impulse::ImpulseSchedule;
use crate::report::fmt17;
use crate::solver::Trajectory;
use crate::timescale::TimeScaleGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Pre,
    Post,
}

/// Default verification tolerance: exact arithmetic is expected on purely
/// discrete grids, discretization error elsewhere.
pub fn default_tolerance(grid: &TimeScaleGrid) -> f64 {
    if grid.dense_flags()[..grid.len() - 1].iter().any(|&d| d) {
        1e-5
    } else {
        1e-9
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearImpulse {
    pub t: f64,
    pub d: f64,
    pub b: f64,
}

/// Data of the linear impulsive inequality
/// `x^Delta <= (>=) p(t) x + q(t)`, `x(t_k+) <= (>=) d_k x(t_k) + b_k`,
/// with `alpha <= prod_{t0 < t_k < t} d_k <= beta` on the horizon.
///
/// The constant-coefficient envelopes read `a = -p` and `b = q`; the logistic
/// ones use the same pair for `x^Delta <= x^sigma (b - a x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImpulsiveData {
    pub p: CoefficientFn,
    pub q: CoefficientFn,
    t0: f64,
    impulses: Vec<LinearImpulse>,
    alpha: f64,
    beta: f64,
}

impl LinearImpulsiveData {
    /// Takes `d_k`, `b_k` from the schedule's linear part and offsets, keeping
    /// impulses in `(t0, end of grid]`. `alpha` and `beta` are the exact
    /// `inf`/`sup` of the partial products over grid times in `[t0, end]`.
    pub fn new(
        p: CoefficientFn,
        q: CoefficientFn,
        schedule: &ImpulseSchedule,
        grid: &TimeScaleGrid,
        t0: f64,
    ) -> Result<Self> {
        grid.index_of(t0)?;
        let mut impulses = Vec::new();
        for (k, &t) in schedule.instants().iter().enumerate() {
            if t <= t0 || t > grid.end() {
                continue;
            }
            grid.index_of(t).map_err(|_| Error::ImpulseOffGrid(t))?;
            impulses.push(LinearImpulse {
                t,
                d: schedule.factor(k),
                b: schedule.offset(k),
            });
        }
        let (alpha, beta) = partial_product_range(&impulses, grid.end());
        Ok(LinearImpulsiveData {
            p,
            q,
            t0,
            impulses,
            alpha,
            beta,
        })
    }

    /// `x^Delta <= b - a x` (so `p = -a`, `q = b`).
    pub fn constant(
        a: f64,
        b: f64,
        schedule: &ImpulseSchedule,
        grid: &TimeScaleGrid,
        t0: f64,
    ) -> Result<Self> {
        Self::new(
            CoefficientFn::constant(-a),
            CoefficientFn::constant(b),
            schedule,
            grid,
            t0,
        )
    }

    /// Replaces the product bounds, checking `alpha <= prod <= beta` over the
    /// horizon.
    pub fn with_product_bounds(mut self, alpha: f64, beta: f64, grid: &TimeScaleGrid) -> Result<Self> {
        if !(alpha <= beta) {
            return Err(Error::BoundsUndefined(format!("alpha = {alpha} exceeds beta = {beta}")));
        }
        let (lo, hi) = partial_product_range(&self.impulses, grid.end());
        if lo < alpha || hi > beta {
            return Err(Error::BoundsUndefined(format!(
                "impulse partial products range over [{lo}, {hi}], outside [{alpha}, {beta}]"
            )));
        }
        self.alpha = alpha;
        self.beta = beta;
        Ok(self)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn impulses(&self) -> &[LinearImpulse] {
        &self.impulses
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `a = -p` for constant `p`.
    pub fn a(&self) -> Result<f64> {
        self.p
            .as_constant()
            .map(|p| -p)
            .ok_or_else(|| Error::Domain("envelope needs a constant rate p = -a".into()))
    }

    /// `b = q` for constant `q`.
    pub fn b(&self) -> Result<f64> {
        self.q
            .as_constant()
            .ok_or_else(|| Error::Domain("envelope needs a constant forcing q = b".into()))
    }

    fn factor(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Upper => self.beta,
            Direction::Lower => self.alpha,
        }
    }
}

/// `inf`/`sup` of `prod_{t_k < t} d_k` over `t` up to `end`, including the
/// empty product.
fn partial_product_range(impulses: &[LinearImpulse], end: f64) -> (f64, f64) {
    let mut lo: f64 = 1.0;
    let mut hi: f64 = 1.0;
    let mut acc = 1.0;
    for imp in impulses.iter().filter(|imp| imp.t < end) {
        acc *= imp.d;
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    (lo, hi)
}

/// Running product kept as `(log |P|, sign, zero)`.
#[derive(Clone, Copy, Debug)]
struct LogProduct {
    log_abs: f64,
    negative: bool,
    zero: bool,
}

impl LogProduct {
    const ONE: LogProduct = LogProduct {
        log_abs: 0.0,
        negative: false,
        zero: false,
    };

    fn mul(&mut self, d: f64) {
        if d == 0.0 {
            self.zero = true;
        } else {
            self.log_abs += d.abs().ln();
            self.negative ^= d < 0.0;
        }
    }

    /// `P * scale`, computed as `sign * exp(log |P| + ln |scale|)`.
    fn times(&self, scale: f64) -> f64 {
        if self.zero || scale == 0.0 {
            return 0.0;
        }
        let e = (self.log_abs + scale.abs().ln()).exp();
        if self.negative ^ (scale < 0.0) {
            -e
        } else {
            e
        }
    }
}

/// A closed-form bound evaluated at grid points.
pub trait Envelope {
    fn grid(&self) -> &TimeScaleGrid;

    /// Grid index of the initial time.
    fn start(&self) -> usize;

    /// Value at grid index `n >= start`.
    fn value_at(&self, n: usize, side: Side) -> f64;

    /// Limit as `t -> infinity`, when the envelope has one.
    fn asymptote(&self) -> Option<f64> {
        None
    }

    fn value(&self, t: f64, side: Side) -> Result<f64> {
        let n = self.grid().index_of(t)?;
        if n < self.start() {
            return Err(Error::Domain(format!("t = {t} precedes the initial time")));
        }
        Ok(self.value_at(n, side))
    }
}

fn impulse_grid_indices(data: &LinearImpulsiveData, grid: &TimeScaleGrid) -> Result<Vec<usize>> {
    data.impulses
        .iter()
        .map(|imp| grid.index_of(imp.t))
        .collect()
}

fn included(idx: usize, n: usize, side: Side) -> bool {
    match side {
        Side::Pre => idx < n,
        Side::Post => idx <= n,
    }
}

/// Envelope of the general linear impulsive inequality:
///
/// `x(t0) prod d_k e_p(t, t0) + sum_k prod_{t_k < t_j < t} d_j e_p(t, t_k) b_k
///  + int_{t0}^{t} prod_{s < t_k < t} d_k e_p(t, sigma(s)) q(s) Delta s`.
///
/// With equality in the inequality it is the exact solution.
pub struct GronwallEnvelope<'g> {
    grid: &'g TimeScaleGrid,
    start: usize,
    x0: f64,
    exp: ExpTable,
    /// Per cell `i`: `int_cell e_p(t_i, sigma(s)) q(s) Delta s`.
    cell_weight: Vec<f64>,
    /// `(grid index, d, b)` of each impulse.
    impulses: Vec<(usize, f64, f64)>,
}

impl<'g> GronwallEnvelope<'g> {
    pub fn new(data: &LinearImpulsiveData, x0: f64, grid: &'g TimeScaleGrid) -> Result<Self> {
        let start = grid.index_of(data.t0)?;
        let p = RegressiveFn::new(&data.p, grid)?;
        let exp = ExpTable::new(&p);
        let pts = grid.points();
        let mut cell_weight = vec![0.0; grid.len()];
        for (i, w) in cell_weight.iter_mut().enumerate().take(grid.len() - 1) {
            let t = pts[i];
            *w = if grid.is_dense_at(i) {
                // e_p(t_i, s) = exp(-int_{t_i}^{s} p).
                let inner = |s: f64| {
                    let decay = simpson(|u| data.p.eval(u), t, s, 1);
                    (-decay).exp() * data.q.eval(s)
                };
                simpson(inner, t, pts[i + 1], grid.substeps())
            } else {
                let mu = grid.mu_at(i);
                mu * data.q.eval(t) / (1.0 + mu * data.p.eval(t))
            };
        }
        let impulses = impulse_grid_indices(data, grid)?
            .into_iter()
            .zip(&data.impulses)
            .map(|(idx, imp)| (idx, imp.d, imp.b))
            .collect();
        Ok(GronwallEnvelope {
            grid,
            start,
            x0,
            exp,
            cell_weight,
            impulses,
        })
    }
}

impl Envelope for GronwallEnvelope<'_> {
    fn grid(&self) -> &TimeScaleGrid {
        self.grid
    }

    fn start(&self) -> usize {
        self.start
    }

    fn value_at(&self, n: usize, side: Side) -> f64 {
        // Sweep backwards from t_n; `prod` holds the product of the included
        // impulses lying strictly after the current cell's left end.
        let mut prod = LogProduct::ONE;
        let mut pending = self
            .impulses
            .iter()
            .rev()
            .filter(|(idx, _, _)| *idx > self.start && included(*idx, n, side))
            .peekable();
        let mut jumps = 0.0;
        let mut integral = 0.0;
        for i in (self.start..n.max(self.start)).rev() {
            while let Some(&&(idx, d, b)) = pending.peek() {
                if idx <= i {
                    break;
                }
                // Impulse at grid index idx > i: its own offset sees only the
                // products of later impulses.
                jumps += prod.times(self.exp.between(n, idx) * b);
                prod.mul(d);
                pending.next();
            }
            integral += prod.times(self.exp.between(n, i) * self.cell_weight[i]);
        }
        // An impulse at t_n itself (Post side with n == start is impossible,
        // since impulses lie strictly after t0).
        for &(idx, d, b) in pending {
            if idx > self.start {
                jumps += prod.times(self.exp.between(n, idx) * b);
                prod.mul(d);
            }
        }
        prod.times(self.x0 * self.exp.between(n, self.start)) + jumps + integral
    }
}

/// Constant-coefficient linear envelope with the impulse products replaced by
/// `beta` (upper) or `alpha` (lower).
pub struct LinearEnvelope<'g> {
    grid: &'g TimeScaleGrid,
    start: usize,
    x0: f64,
    a: f64,
    b: f64,
    factor: f64,
    exp: ExpTable,
    impulses: Vec<(usize, f64)>,
}

fn positively_regressive_const<'g>(c: f64, grid: &'g TimeScaleGrid) -> Result<ExpTable> {
    let f = move |_: f64, _: f64| c;
    let r = RegressiveFn::new(f, grid)?;
    if !r.is_positive() {
        let (i, _) = grid
            .grain()
            .iter()
            .enumerate()
            .find(|(_, &mu)| 1.0 + mu * c <= 0.0)
            .expect("a non-positive factor exists");
        return Err(Error::Regressivity {
            t: grid.points()[i],
            value: 1.0 + grid.mu_at(i) * c,
        });
    }
    Ok(ExpTable::new(&r))
}

impl<'g> LinearEnvelope<'g> {
    pub fn new(
        data: &LinearImpulsiveData,
        x0: f64,
        grid: &'g TimeScaleGrid,
        dir: Direction,
    ) -> Result<Self> {
        let a = data.a()?;
        let b = data.b()?;
        if a == 0.0 {
            return Err(Error::Domain("linear envelope needs a != 0".into()));
        }
        let exp = positively_regressive_const(-a, grid)?;
        let impulses = impulse_grid_indices(data, grid)?
            .into_iter()
            .zip(&data.impulses)
            .map(|(idx, imp)| (idx, imp.b))
            .collect();
        Ok(LinearEnvelope {
            grid,
            start: grid.index_of(data.t0)?,
            x0,
            a,
            b,
            factor: data.factor(dir),
            exp,
            impulses,
        })
    }
}

impl Envelope for LinearEnvelope<'_> {
    fn grid(&self) -> &TimeScaleGrid {
        self.grid
    }

    fn start(&self) -> usize {
        self.start
    }

    fn value_at(&self, n: usize, side: Side) -> f64 {
        let decay = self.exp.between(n, self.start);
        let jumps: f64 = self
            .impulses
            .iter()
            .filter(|(idx, _)| *idx > self.start && included(*idx, n, side))
            .map(|&(idx, bk)| self.factor * self.exp.between(n, idx) * bk)
            .sum();
        self.x0 * self.factor * decay + jumps + self.b * self.factor / self.a * (1.0 - decay)
    }

    fn asymptote(&self) -> Option<f64> {
        (self.a > 0.0).then(|| self.b * self.factor / self.a)
    }
}

/// Logistic envelope `(b F / a) [1 + (b / (a x0) - 1) e_{-r}(t, t0)]^{-1}` with
/// `F = beta` (upper) or `alpha` (lower) and decay rate `r`.
pub struct LogisticEnvelope<'g> {
    grid: &'g TimeScaleGrid,
    start: usize,
    x0: f64,
    a: f64,
    b: f64,
    factor: f64,
    exp: ExpTable,
}

impl<'g> LogisticEnvelope<'g> {
    /// Decay rate `b`.
    pub fn new(
        data: &LinearImpulsiveData,
        x0: f64,
        grid: &'g TimeScaleGrid,
        dir: Direction,
    ) -> Result<Self> {
        let b = data.b()?;
        Self::with_rate(data, x0, grid, data.factor(dir), b)
    }

    /// Lower envelope with decay rate `b / (1 + mu_bar b)`, `mu_bar = sup mu`.
    pub fn shifted(data: &LinearImpulsiveData, x0: f64, grid: &'g TimeScaleGrid) -> Result<Self> {
        let a = data.a()?;
        if a <= 0.0 {
            return Err(Error::Domain(format!("shifted logistic envelope needs a > 0, got {a}")));
        }
        let b = data.b()?;
        // 1 - mu * b / (1 + mu_bar * b) > 0 for every b >= 0, so no extra check.
        let rate = b / (1.0 + grid.max_grain() * b);
        Self::with_rate(data, x0, grid, data.alpha, rate)
    }

    fn with_rate(
        data: &LinearImpulsiveData,
        x0: f64,
        grid: &'g TimeScaleGrid,
        factor: f64,
        rate: f64,
    ) -> Result<Self> {
        if !(x0 > 0.0) {
            return Err(Error::Domain(format!("logistic envelope needs x(t0) > 0, got {x0}")));
        }
        let a = data.a()?;
        if a == 0.0 {
            return Err(Error::Domain("logistic envelope needs a != 0".into()));
        }
        let b = data.b()?;
        let exp = positively_regressive_const(-rate, grid)?;
        Ok(LogisticEnvelope {
            grid,
            start: grid.index_of(data.t0)?,
            x0,
            a,
            b,
            factor,
            exp,
        })
    }
}

impl Envelope for LogisticEnvelope<'_> {
    fn grid(&self) -> &TimeScaleGrid {
        self.grid
    }

    fn start(&self) -> usize {
        self.start
    }

    fn value_at(&self, n: usize, _side: Side) -> f64 {
        let decay = self.exp.between(n, self.start);
        let scale = self.b * self.factor / self.a;
        scale / (1.0 + (self.b / (self.a * self.x0) - 1.0) * decay)
    }

    fn asymptote(&self) -> Option<f64> {
        (self.a > 0.0).then(|| self.b * self.factor / self.a)
    }
}

pub fn gronwall_envelope(
    data: &LinearImpulsiveData,
    x_t0: f64,
    t: f64,
    grid: &TimeScaleGrid,
) -> Result<f64> {
    GronwallEnvelope::new(data, x_t0, grid)?.value(t, Side::Pre)
}

pub fn linear_envelope(
    data: &LinearImpulsiveData,
    x_t0: f64,
    t: f64,
    grid: &TimeScaleGrid,
    dir: Direction,
) -> Result<f64> {
    LinearEnvelope::new(data, x_t0, grid, dir)?.value(t, Side::Pre)
}

/// `b beta / a` (upper) or `b alpha / a` (lower).
pub fn linear_asymptote(data: &LinearImpulsiveData, dir: Direction) -> Result<f64> {
    let a = data.a()?;
    if a <= 0.0 {
        return Err(Error::Domain(format!("asymptote needs a > 0, got {a}")));
    }
    Ok(data.b()? * data.factor(dir) / a)
}

pub fn logistic_envelope(
    data: &LinearImpulsiveData,
    x_t0: f64,
    t: f64,
    grid: &TimeScaleGrid,
    dir: Direction,
) -> Result<f64> {
    LogisticEnvelope::new(data, x_t0, grid, dir)?.value(t, Side::Pre)
}

pub fn logistic_shifted_envelope(
    data: &LinearImpulsiveData,
    x_t0: f64,
    t: f64,
    grid: &TimeScaleGrid,
) -> Result<f64> {
    LogisticEnvelope::shifted(data, x_t0, grid)?.value(t, Side::Pre)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub t: f64,
    pub traj: f64,
    pub envelope: f64,
    /// `envelope - traj` (upper) or `traj - envelope` (lower); negative means
    /// the bound is violated.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub direction: Direction,
    pub tolerance: f64,
    pub rows: Vec<BoundRow>,
    /// `max(-gap)`; positive when some point lies on the wrong side.
    pub max_violation: f64,
    pub violation_count: usize,
    pub min_gap: f64,
    pub asymptote: Option<f64>,
    pub pass: bool,
}

impl BoundsReport {
    /// `t,traj,envelope,gap` rows followed by a `#` summary line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,traj,envelope,gap")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(r.t),
                fmt17(r.traj),
                fmt17(r.envelope),
                fmt17(r.gap)
            )?;
        }
        writeln!(
            w,
            "# direction={} pass={} violations={} max_violation={} min_gap={} asymptote={} tol={}",
            match self.direction {
                Direction::Upper => "upper",
                Direction::Lower => "lower",
            },
            self.pass,
            self.violation_count,
            fmt17(self.max_violation),
            fmt17(self.min_gap),
            self.asymptote.map(fmt17).unwrap_or_else(|| "none".into()),
            fmt17(self.tolerance),
        )
    }
}

/// Checks the trajectory against the envelope at every recorded point,
/// post-jump values included.
pub fn verify_bound(
    traj: &Trajectory,
    envelope: &dyn Envelope,
    dir: Direction,
    tol: f64,
) -> Result<BoundsReport> {
    let grid = envelope.grid();
    let offset = traj.grid_offset();
    if offset < envelope.start() || offset + traj.len() > grid.len() {
        return Err(Error::GridMismatch(format!(
            "trajectory covers grid indices {offset}..{} but the envelope starts at {} of {}",
            offset + traj.len(),
            envelope.start(),
            grid.len()
        )));
    }
    for (i, &t) in traj.times().iter().enumerate() {
        let g = grid.points()[offset + i];
        if (g - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "trajectory time {t} does not match grid point {g}"
            )));
        }
    }

    let mut rows = Vec::with_capacity(traj.len() + traj.jumps().len());
    for i in 0..traj.len() {
        let n = offset + i;
        let mut push = |x: f64, side: Side| {
            let env = envelope.value_at(n, side);
            let gap = match dir {
                Direction::Upper => env - x,
                Direction::Lower => x - env,
            };
            rows.push(BoundRow {
                t: traj.times()[i],
                traj: x,
                envelope: env,
                gap,
            });
        };
        push(traj.values()[i], Side::Pre);
        if let Some(j) = traj.jump_at(i) {
            push(j.post, Side::Post);
        }
    }
    let violation_count = rows.iter().filter(|r| !(r.gap >= -tol)).count();
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    Ok(BoundsReport {
        direction: dir,
        tolerance: tol,
        max_violation: -min_gap,
        violation_count,
        min_gap,
        asymptote: envelope.asymptote(),
        pass: violation_count == 0,
        rows,
    })
}
