//! Checks on simulated trajectories: confinement between bounds, contraction
//! of the squared gap between two solutions, and translation deviations.

use std::io::Write;

use crate::error::{Error, Result};
use crate::report::{fmt17, KvBlock};
use crate::solver::Trajectory;
use crate::timescale::TimeScaleGrid;

/// Fraction of the horizon treated as transient when none is given.
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct PermanenceReport {
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub transient_end: f64,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    /// `min - lower`; negative when the trajectory dips below.
    pub lower_margin: f64,
    /// `upper - max`; negative when the trajectory overshoots.
    pub upper_margin: f64,
    pub pass: bool,
}

impl PermanenceReport {
    pub fn kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.num("lower", self.lower)
            .num("upper", self.upper)
            .num("tol", self.tol)
            .num("transient_end", self.transient_end)
            .int("samples", self.samples)
            .num("min", self.min)
            .num("max", self.max)
            .num("lower_margin", self.lower_margin)
            .num("upper_margin", self.upper_margin)
            .flag("pass", self.pass);
        kv
    }
}

/// Checks `lower - tol <= x(t) <= upper + tol` for every recorded value
/// (post-jump values included) at `t >= start + transient`.
pub fn permanence_check(
    traj: &Trajectory,
    lower: f64,
    upper: f64,
    transient: f64,
    tol: f64,
) -> Result<PermanenceReport> {
    let (Some(&start), Some(&end)) = (traj.times().first(), traj.times().last()) else {
        return Err(Error::Domain("empty trajectory".into()));
    };
    let transient_end = start + transient;
    if !(end > transient_end) {
        return Err(Error::Domain(format!(
            "trajectory ends at {end}, not after the transient ending at {transient_end}"
        )));
    }
    let (mut min, mut max, mut samples) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (_, t, x) in traj.samples() {
        if t >= transient_end {
            min = min.min(x);
            max = max.max(x);
            samples += 1;
        }
    }
    let lower_margin = min - lower;
    let upper_margin = upper - max;
    Ok(PermanenceReport {
        lower,
        upper,
        tol,
        transient_end,
        samples,
        min,
        max,
        lower_margin,
        upper_margin,
        pass: lower_margin >= -tol && upper_margin >= -tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityOptions {
    /// Checks start at `t0 + transient`.
    pub transient: f64,
    /// Additive slack on impulse non-expansion and relative slack on the
    /// per-cell contraction.
    pub tol: f64,
    /// Allowed shortfall of the fitted dense-run decay rate below `gamma`.
    pub rate_tol: f64,
    /// Cells where `V` is below this are skipped: their ratios are rounding
    /// noise.
    pub floor: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            transient: 0.0,
            tol: 1e-9,
            rate_tol: 0.1,
            floor: 1e-24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpulseGap {
    pub t: f64,
    pub pre: f64,
    pub post: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub gamma: f64,
    pub options: StabilityOptions,
    /// `(t, x, y, V)` for every recorded sample.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub impulses: Vec<ImpulseGap>,
    /// `V(t_k+) <= V(t_k)` with no slack at every impulse.
    pub impulses_exact: bool,
    pub impulses_within_tol: bool,
    pub scattered_cells: usize,
    /// Largest `V(sigma(t)) / V(t)` over the checked scattered cells.
    pub max_contraction: Option<f64>,
    /// Largest `V(sigma) / V - (1 - mu gamma)` over the checked cells.
    pub max_excess: Option<f64>,
    pub scattered_pass: bool,
    pub dense_cells: usize,
    /// Least-squares decay rate of `V` over dense cells.
    pub fitted_rate: Option<f64>,
    pub dense_pass: bool,
    pub final_gap: f64,
    pub pass: bool,
}

impl StabilityReport {
    pub fn kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.num("gamma", self.gamma)
            .num("transient", self.options.transient)
            .num("tol", self.options.tol)
            .num("rate_tol", self.options.rate_tol)
            .int("impulses", self.impulses.len())
            .flag("impulses_exact", self.impulses_exact)
            .flag("impulses_within_tol", self.impulses_within_tol)
            .int("scattered_cells", self.scattered_cells)
            .opt_num("max_contraction", self.max_contraction)
            .opt_num("max_excess", self.max_excess)
            .flag("scattered_pass", self.scattered_pass)
            .int("dense_cells", self.dense_cells)
            .opt_num("fitted_rate", self.fitted_rate)
            .flag("dense_pass", self.dense_pass)
            .num("final_gap", self.final_gap)
            .flag("pass", self.pass);
        kv
    }

    /// `t,x,y,V` rows followed by `#` summary lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,V")?;
        for &(t, x, y, v) in &self.rows {
            writeln!(w, "{},{},{},{}", fmt17(t), fmt17(x), fmt17(y), fmt17(v))?;
        }
        for line in self.kv().render().lines() {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Lyapunov check for `V = (x - y)^2` along two solutions on `grid`.
pub fn stability_check(
    x: &Trajectory,
    y: &Trajectory,
    grid: &TimeScaleGrid,
    gamma: f64,
    opts: StabilityOptions,
) -> Result<StabilityReport> {
    if x.times() != y.times() || x.grid_offset() != y.grid_offset() {
        return Err(Error::GridMismatch("the two trajectories have different times".into()));
    }
    let offset = x.grid_offset();
    if offset + x.len() > grid.len() {
        return Err(Error::GridMismatch("trajectory runs past the grid".into()));
    }
    let jumps_match = x.jumps().len() == y.jumps().len()
        && x.jumps().iter().zip(y.jumps()).all(|(a, b)| a.index == b.index);
    if !jumps_match {
        return Err(Error::GridMismatch("the two trajectories jump at different times".into()));
    }
    let mu_bar = grid.max_grain();
    if !(gamma > 0.0) || !(1.0 - mu_bar * gamma > 0.0) {
        return Err(Error::Regressivity {
            t: grid.start(),
            value: 1.0 - mu_bar * gamma,
        });
    }

    let times = x.times();
    let v_pre = |i: usize| (x.values()[i] - y.values()[i]).powi(2);
    let v_after = |i: usize| (x.state_after(i) - y.state_after(i)).powi(2);
    let t_check = times[0] + opts.transient;

    let mut rows = Vec::with_capacity(x.len() + x.jumps().len());
    for i in 0..x.len() {
        let t = times[i];
        rows.push((t, x.values()[i], y.values()[i], v_pre(i)));
        if x.jump_at(i).is_some() {
            rows.push((t, x.state_after(i), y.state_after(i), v_after(i)));
        }
    }

    let impulses: Vec<ImpulseGap> = x
        .jumps()
        .iter()
        .map(|j| ImpulseGap {
            t: times[j.index],
            pre: v_pre(j.index),
            post: v_after(j.index),
        })
        .collect();
    let impulses_exact = impulses.iter().all(|g| g.post <= g.pre);
    let impulses_within_tol = impulses.iter().all(|g| g.post <= g.pre + opts.tol);

    let mut scattered_cells = 0;
    let mut max_contraction: Option<f64> = None;
    let mut max_excess: Option<f64> = None;
    let mut dense_cells = 0;
    let (mut ts, mut logs) = (Vec::new(), Vec::new());
    let mut cum = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        if times[i] < t_check {
            continue;
        }
        let g = offset + i;
        let (v0, v1) = (v_after(i), v_pre(i + 1));
        if !(v0 > opts.floor && v1 > opts.floor) {
            continue;
        }
        if grid.is_dense_at(g) {
            if ts.is_empty() {
                ts.push(times[i]);
                logs.push(0.0);
            }
            cum += v1.ln() - v0.ln();
            ts.push(times[i + 1]);
            logs.push(cum);
            dense_cells += 1;
        } else {
            let ratio = v1 / v0;
            let excess = ratio - (1.0 - grid.mu_at(g) * gamma);
            max_contraction = Some(max_contraction.map_or(ratio, |m| m.max(ratio)));
            max_excess = Some(max_excess.map_or(excess, |m| m.max(excess)));
            scattered_cells += 1;
        }
    }
    let scattered_pass = max_excess.is_none_or(|e| e <= opts.tol);
    let fitted_rate = slope(&ts, &logs).map(|s| -s);
    let dense_pass = fitted_rate.is_none_or(|r| r >= gamma - opts.rate_tol);
    let last = x.len() - 1;
    let final_gap = (x.state_after(last) - y.state_after(last)).abs();

    Ok(StabilityReport {
        gamma,
        options: opts,
        rows,
        impulses_exact,
        impulses_within_tol,
        impulses,
        scattered_cells,
        max_contraction,
        max_excess,
        scattered_pass,
        dense_cells,
        fitted_rate,
        dense_pass,
        final_gap,
        pass: impulses_within_tol && scattered_pass && dense_pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftRow {
    pub tau: f64,
    /// `sup |x(t + tau) - x(t)|` over the window, left and post-jump values.
    pub deviation: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationReport {
    pub eps: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub rows: Vec<ShiftRow>,
}

impl TranslationReport {
    pub fn admissible(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter(|r| r.admissible).map(|r| r.tau)
    }

    /// The row with the smallest deviation among nonzero shifts.
    pub fn best(&self) -> Option<ShiftRow> {
        self.rows
            .iter()
            .filter(|r| r.tau != 0.0)
            .copied()
            .min_by(|a, b| a.deviation.total_cmp(&b.deviation))
    }

    pub fn kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.num("eps", self.eps)
            .num("window_start", self.window_start)
            .num("window_end", self.window_end)
            .int("shifts", self.rows.len())
            .int("admissible", self.admissible().count());
        if let Some(b) = self.best() {
            kv.num("best_tau", b.tau).num("best_deviation", b.deviation);
        }
        kv
    }
}

fn locate(times: &[f64], t: f64) -> Option<usize> {
    let tol = 1e-9 * t.abs().max(1.0);
    let i = times.partition_point(|&s| s < t - tol);
    (i < times.len() && (times[i] - t).abs() <= tol).then_some(i)
}

/// Deviation `sup |x(t + tau) - x(t)|` for `t` in
/// `[start + transient, start + transient + window]`, for each shift.
pub fn translation_test(
    traj: &Trajectory,
    shifts: &[f64],
    eps: f64,
    window: f64,
    transient: f64,
) -> Result<TranslationReport> {
    let times = traj.times();
    let (Some(&start), Some(&end)) = (times.first(), times.last()) else {
        return Err(Error::Domain("empty trajectory".into()));
    };
    let window_start = start + transient;
    let window_end = window_start + window;
    let max_tau = shifts.iter().copied().fold(0.0f64, f64::max);
    if shifts.iter().any(|&s| s < 0.0) || window_end + max_tau > end + 1e-9 * end.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "window [{window_start}, {window_end}] shifted by up to {max_tau} leaves the trajectory ending at {end}"
        )));
    }
    let lo = times.partition_point(|&t| t < window_start);
    let hi = times.partition_point(|&t| t <= window_end);
    let mut rows = Vec::with_capacity(shifts.len());
    for &tau in shifts {
        let mut dev = 0.0f64;
        let first = locate(times, times[lo] + tau).ok_or(Error::NotInGrid(times[lo] + tau))?;
        let uniform_shift = first - lo;
        for i in lo..hi {
            let target = times[i] + tau;
            let j = if times.get(i + uniform_shift).is_some_and(|&s| (s - target).abs() <= 1e-9 * target.abs().max(1.0)) {
                i + uniform_shift
            } else {
                locate(times, target).ok_or(Error::NotInGrid(target))?
            };
            dev = dev
                .max((traj.values()[j] - traj.values()[i]).abs())
                .max((traj.state_after(j) - traj.state_after(i)).abs());
        }
        rows.push(ShiftRow {
            tau,
            deviation: dev,
            admissible: dev < eps,
        });
    }
    Ok(TranslationReport {
        eps,
        window_start,
        window_end,
        rows,
    })
}

/// Translation test over `tau = step, 2 step, ..., <= max_tau`.
pub fn scan_shifts(
    traj: &Trajectory,
    step: f64,
    max_tau: f64,
    eps: f64,
    window: f64,
    transient: f64,
) -> Result<TranslationReport> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("shift step {step} must be positive")));
    }
    let n = (max_tau / step + 1e-9).floor() as usize;
    let shifts: Vec<f64> = (1..=n).map(|k| k as f64 * step).collect();
    translation_test(traj, &shifts, eps, window, transient)
}
