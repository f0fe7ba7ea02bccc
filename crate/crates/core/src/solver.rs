//! Integration of `x^Delta = f(t, x)` with impulses at prescribed grid points.
//!
//! Right-scattered points advance by the exact time-scale step
//! `x(sigma(t)) = x(t) + mu(t) f(t, x(t))`; dense cells advance by classical RK4
//! on the grid's computational substep. At an impulse instant `t_k` the stored
//! value is the arriving (pre-jump) value, the jump map gives `x(t_k+)`, and the
//! next step leaves from `x(t_k+)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::impulse::ImpulseSchedule;
use crate::report::fmt17;
use crate::timescale::TimeScaleGrid;

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    /// Index into the impulse schedule.
    pub k: usize,
    /// Index into the trajectory's time list.
    pub index: usize,
    pub pre: f64,
    pub post: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryMeta {
    pub model: String,
    pub grid: String,
    pub x0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<Jump>,
    jump_at: Vec<Option<usize>>,
    /// Grid index of the first recorded time.
    grid_offset: usize,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Left values; at impulse instants this is `x(t_k)` before the jump.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid_offset(&self) -> usize {
        self.grid_offset
    }

    /// Jump recorded at the `i`-th time, if any.
    pub fn jump_at(&self, i: usize) -> Option<&Jump> {
        self.jump_at[i].map(|j| &self.jumps[j])
    }

    /// `x(t_k+)` for schedule index `k`.
    pub fn post_value(&self, k: usize) -> Option<f64> {
        self.jumps.iter().find(|j| j.k == k).map(|j| j.post)
    }

    /// The state the solver leaves the `i`-th time with: the post-jump value at
    /// impulse instants, the left value elsewhere.
    pub fn state_after(&self, i: usize) -> f64 {
        self.jump_at(i).map_or(self.values[i], |j| j.post)
    }

    /// Every recorded `(t, value)` pair in time order, with the post-jump value
    /// following the pre-jump value at impulse instants.
    pub fn samples(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.len()).flat_map(move |i| {
            let pre = (i, self.times[i], self.values[i]);
            let post = self.jump_at(i).map(|j| (i, self.times[i], j.post));
            std::iter::once(pre).chain(post)
        })
    }

    /// CSV with header `t,x,post_jump`. Impulse instants produce two rows (pre
    /// then post value in `x`), both carrying `x(t_k+)` in `post_jump`; the
    /// column is empty elsewhere.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,post_jump")?;
        for i in 0..self.len() {
            let t = fmt17(self.times[i]);
            match self.jump_at(i) {
                Some(j) => {
                    let post = fmt17(j.post);
                    writeln!(w, "{t},{},{post}", fmt17(j.pre))?;
                    writeln!(w, "{t},{post},{post}")?;
                }
                None => writeln!(w, "{t},{},", fmt17(self.values[i]))?,
            }
        }
        Ok(())
    }
}

/// Grid index of every impulse `k` with `t_start < t_k <= grid end`.
fn impulse_indices(
    schedule: &ImpulseSchedule,
    grid: &TimeScaleGrid,
    t_start: f64,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (k, &tk) in schedule.instants().iter().enumerate() {
        if tk <= t_start || tk > grid.end() {
            continue;
        }
        let idx = grid.index_of(tk).map_err(|_| Error::ImpulseOffGrid(tk))?;
        out.push((k, idx));
    }
    Ok(out)
}

fn check_state(t: f64, x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { t, state: x });
    }
    Ok(x)
}

fn rk4_cell<F: Fn(f64, f64) -> f64>(field: &F, t: f64, t_next: f64, x: f64, substeps: usize) -> f64 {
    let n = substeps.max(1);
    let h = (t_next - t) / n as f64;
    let mut x = x;
    for j in 0..n {
        let s = t + j as f64 * h;
        let k1 = field(s, x);
        let k2 = field(s + 0.5 * h, x + 0.5 * h * k1);
        let k3 = field(s + 0.5 * h, x + 0.5 * h * k2);
        let k4 = field(s + h, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

/// Solves the impulsive problem from `(t0, x0)` to the end of `grid`.
///
/// Impulses with `t_k <= t0` or beyond the grid are ignored; every other
/// instant must be a grid point.
pub fn simulate<F: Fn(f64, f64) -> f64>(
    field: F,
    schedule: &ImpulseSchedule,
    grid: &TimeScaleGrid,
    x0: f64,
    t0: f64,
) -> Result<Trajectory> {
    if !x0.is_finite() {
        return Err(Error::Domain(format!("initial value {x0} is not finite")));
    }
    let start = grid.index_of(t0)?;
    let n = grid.len() - start;
    let mut jump_k: Vec<Option<usize>> = vec![None; n];
    for (k, idx) in impulse_indices(schedule, grid, grid.points()[start])? {
        jump_k[idx - start] = Some(k);
    }

    let pts = grid.points();
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut jump_at = vec![None; n];
    let mut x = x0;

    for i in 0..n {
        let g = start + i;
        let t = pts[g];
        times.push(t);
        values.push(x);
        if let Some(k) = jump_k[i] {
            let post = check_state(t, schedule.apply(k, x))?;
            jump_at[i] = Some(jumps.len());
            jumps.push(Jump {
                k,
                index: i,
                pre: x,
                post,
            });
            x = post;
        }
        if g + 1 == grid.len() {
            break;
        }
        let next = if grid.is_dense_at(g) {
            rk4_cell(&field, t, pts[g + 1], x, grid.substeps())
        } else {
            x + grid.mu_at(g) * field(t, x)
        };
        x = check_state(pts[g + 1], next)?;
    }

    Ok(Trajectory {
        times,
        values,
        jumps,
        jump_at,
        grid_offset: start,
        meta: TrajectoryMeta {
            x0,
            ..TrajectoryMeta::default()
        },
    })
}

/// Two solutions of the same problem on the same grid and schedule.
pub fn simulate_pair<F: Fn(f64, f64) -> f64>(
    field: F,
    schedule: &ImpulseSchedule,
    grid: &TimeScaleGrid,
    x0: f64,
    y0: f64,
    t0: f64,
) -> Result<(Trajectory, Trajectory)> {
    let x = simulate(&field, schedule, grid, x0, t0)?;
    let y = simulate(&field, schedule, grid, y0, t0)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impulse::arithmetic_instants;
    use crate::timescale::{build_grid, TimeScaleSpec};

    #[test]
    fn identity_jumps_and_zero_field() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 10.0).unwrap();
        let inst = arithmetic_instants(1.0, 1.0, 10.0).unwrap();
        let s = ImpulseSchedule::log_scale(inst, vec![1f64.exp_m1(); 10]).unwrap();
        let tr = simulate(|_, _| 0.0, &s, &g, 5.0, 0.0).unwrap();
        assert!(tr.values().iter().all(|&x| x == 5.0));
        assert!(tr.jumps().iter().all(|j| j.post == 5.0));
        assert_eq!(tr.jumps().len(), 10);
    }

    #[test]
    fn linear_decay_on_reals() {
        let g = build_grid(&TimeScaleSpec::reals(1e-3), 0.0, 1.0).unwrap();
        let tr = simulate(|_, x| -x, &ImpulseSchedule::none(), &g, 1.0, 0.0).unwrap();
        let last = *tr.values().last().unwrap();
        assert!((last - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn integer_grid_matches_recursion() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 30.0).unwrap();
        let inst = vec![3.0, 7.0, 20.0];
        let s = ImpulseSchedule::affine(inst.clone(), vec![1.0; 3], vec![0.0; 3]).unwrap();
        let tr = simulate(|_, x| 0.5 - 0.1 * x, &s, &g, 2.0, 0.0).unwrap();
        let mut x = 2.0;
        for n in 0..=30 {
            assert_eq!(tr.values()[n], x);
            x = x + (0.5 - 0.1 * x);
        }
    }

    #[test]
    fn jump_is_applied_between_arrival_and_departure() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 4.0).unwrap();
        let s = ImpulseSchedule::affine(vec![2.0], vec![0.5], vec![1.0]).unwrap();
        let tr = simulate(|_, x| x, &s, &g, 1.0, 0.0).unwrap();
        // 1 -> 2 -> 4 (jump to 3) -> 6 -> 12
        assert_eq!(tr.values(), &[1.0, 2.0, 4.0, 6.0, 12.0]);
        assert_eq!(tr.post_value(0), Some(3.0));
        assert_eq!(tr.state_after(2), 3.0);
    }

    #[test]
    fn rk4_order_between_impulses() {
        let f = |t: f64, x: f64| -x + t.sin();
        let end = |h: f64| {
            let g = build_grid(&TimeScaleSpec::reals(h), 0.0, 2.0).unwrap();
            *simulate(f, &ImpulseSchedule::none(), &g, 1.0, 0.0)
                .unwrap()
                .values()
                .last()
                .unwrap()
        };
        let (a, b, c) = (end(0.02), end(0.01), end(0.005));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 16.0).abs() < 2.0, "observed ratio {ratio}");
    }

    #[test]
    fn divergence_is_reported() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 100.0).unwrap();
        let err = simulate(|_, x| x * x, &ImpulseSchedule::none(), &g, 2.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn off_grid_impulse_is_rejected() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 5.0).unwrap();
        let s = ImpulseSchedule::affine(vec![2.5], vec![1.0], vec![0.0]).unwrap();
        assert!(matches!(
            simulate(|_, _| 0.0, &s, &g, 1.0, 0.0),
            Err(Error::ImpulseOffGrid(_))
        ));
    }

    #[test]
    fn pair_with_zero_field_keeps_its_gap() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 20.0).unwrap();
        let (x, y) = simulate_pair(|_, _| 0.0, &ImpulseSchedule::none(), &g, 0.3, 1.1, 0.0).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!(((b - a) - 0.8).abs() < 1e-15);
        }
        let (x, y) = simulate_pair(|_, x| -0.2 * x, &ImpulseSchedule::none(), &g, 0.7, 0.7, 0.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn csv_doubles_impulse_rows() {
        let g = build_grid(&TimeScaleSpec::integers(), 0.0, 3.0).unwrap();
        let s = ImpulseSchedule::affine(vec![1.0, 2.0], vec![0.5; 2], vec![0.0; 2]).unwrap();
        let tr = simulate(|_, _| 1.0, &s, &g, 0.0, 0.0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,post_jump");
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert!(lines[1].ends_with(','));
        assert!(!lines[2].ends_with(','));
    }
}
