//! Delta calculus on a [`TimeScaleGrid`].
//!
//! Functions on a time scale are evaluated as `f(t, mu)` through [`GridFn`], so
//! that pointwise combinations such as `p (+) q = p + q + mu*p*q` can see the
//! local graininess. Quadrature inside dense cells always passes `mu = 0`.
//!
//! On scattered cells every operation is exact: the exponential multiplies by
//! `1 + mu*p`, the integral adds `mu*f`, the derivative is a forward difference.
//! Dense cells use composite Simpson (integrals, exponentials) or a central
//! difference (derivatives) on the grid's computational substep.

use crate::coefficient::CoefficientFn;
use crate::error::{Error, Result};
use crate::timescale::TimeScaleGrid;

/// A scalar function on a time scale, evaluated with the graininess at `t`.
pub trait GridFn {
    fn value(&self, t: f64, mu: f64) -> f64;
}

impl GridFn for CoefficientFn {
    fn value(&self, t: f64, _mu: f64) -> f64 {
        self.eval(t)
    }
}

impl GridFn for &CoefficientFn {
    fn value(&self, t: f64, _mu: f64) -> f64 {
        self.eval(t)
    }
}

impl<F: Fn(f64, f64) -> f64> GridFn for F {
    fn value(&self, t: f64, mu: f64) -> f64 {
        self(t, mu)
    }
}

/// `xi_h(z) = Log(1 + h z) / h` for `h > 0`, `z` for `h = 0`. Real branch only.
pub fn cylinder(h: f64, z: f64) -> Result<f64> {
    if h < 0.0 || !h.is_finite() {
        return Err(Error::Domain(format!("graininess must be nonnegative, got {h}")));
    }
    if h == 0.0 {
        return Ok(z);
    }
    if 1.0 + h * z <= 0.0 {
        return Err(Error::CylinderBranch { h, z });
    }
    Ok((h * z).ln_1p() / h)
}

/// `p (+) q = p + q + mu p q`.
pub fn circle_plus(p: f64, q: f64, mu: f64) -> f64 {
    p + q + mu * p * q
}

/// `(-) p = -p / (1 + mu p)`.
pub fn circle_ominus(p: f64, mu: f64) -> Result<f64> {
    let den = 1.0 + mu * p;
    if den == 0.0 {
        return Err(Error::Domain(format!("1 + mu*p = 0 for p = {p}, mu = {mu}")));
    }
    Ok(-p / den)
}

/// `p (-) q = (p - q) / (1 + mu q)`.
pub fn circle_minus(p: f64, q: f64, mu: f64) -> Result<f64> {
    let den = 1.0 + mu * q;
    if den == 0.0 {
        return Err(Error::Domain(format!("1 + mu*q = 0 for q = {q}, mu = {mu}")));
    }
    Ok((p - q) / den)
}

/// Pointwise `p (+) q` as a grid function.
pub fn oplus<P: GridFn, Q: GridFn>(p: P, q: Q) -> impl GridFn {
    move |t: f64, mu: f64| circle_plus(p.value(t, mu), q.value(t, mu), mu)
}

/// Pointwise `(-) p` as a grid function. Non-finite where `1 + mu p = 0`.
pub fn ominus<P: GridFn>(p: P) -> impl GridFn {
    move |t: f64, mu: f64| {
        let v = p.value(t, mu);
        -v / (1.0 + mu * v)
    }
}

/// Pointwise `p (-) q` as a grid function.
pub fn ominus_diff<P: GridFn, Q: GridFn>(p: P, q: Q) -> impl GridFn {
    move |t: f64, mu: f64| {
        let (a, b) = (p.value(t, mu), q.value(t, mu));
        (a - b) / (1.0 + mu * b)
    }
}

/// A coefficient checked to be regressive (`1 + mu p != 0`) at every grid
/// point.
pub struct RegressiveFn<'g, F> {
    f: F,
    grid: &'g TimeScaleGrid,
    positive: bool,
}

impl<'g, F: GridFn> RegressiveFn<'g, F> {
    pub fn new(f: F, grid: &'g TimeScaleGrid) -> Result<Self> {
        let mut positive = true;
        for (i, &t) in grid.points().iter().enumerate() {
            let mu = grid.mu_at(i);
            let v = 1.0 + mu * f.value(t, mu);
            if v == 0.0 || !v.is_finite() {
                return Err(Error::Regressivity { t, value: v });
            }
            positive &= v > 0.0;
        }
        Ok(RegressiveFn { f, grid, positive })
    }

    /// Member of the positively regressive class (`1 + mu p > 0` everywhere).
    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn grid(&self) -> &'g TimeScaleGrid {
        self.grid
    }

    pub fn value(&self, t: f64, mu: f64) -> f64 {
        self.f.value(t, mu)
    }

    /// Log-magnitude and sign flip of the exponential over cell `i`.
    fn cell(&self, i: usize) -> (f64, bool) {
        let grid = self.grid;
        let t = grid.points()[i];
        if grid.is_dense_at(i) {
            let b = grid.points()[i + 1];
            (simpson(|s| self.f.value(s, 0.0), t, b, grid.substeps()), false)
        } else {
            let mu = grid.mu_at(i);
            let factor = 1.0 + mu * self.f.value(t, mu);
            (factor.abs().ln(), factor < 0.0)
        }
    }
}

/// Composite Simpson over `[a, b]` with `2 * pairs` subintervals.
pub(crate) fn simpson<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, pairs: usize) -> f64 {
    let n = 2 * pairs.max(1);
    let h = (b - a) / n as f64;
    let mut acc = g(a) + g(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + j as f64 * h);
    }
    acc * h / 3.0
}

/// Generalized exponential `e_p(t, s)`.
///
/// For `t >= s` this exponentiates the delta integral of the cylinder
/// transform of `p`; for `t < s` it returns `1 / e_p(s, t)`. Negative factors
/// `1 + mu p < 0` on scattered cells contribute a sign, which keeps the result
/// real for every regressive `p`.
pub fn exp_ts<F: GridFn>(p: &RegressiveFn<'_, F>, t: f64, s: f64) -> Result<f64> {
    let grid = p.grid;
    let it = grid.index_of(t)?;
    let is = grid.index_of(s)?;
    if it < is {
        return Ok(1.0 / exp_ts(p, s, t)?);
    }
    let mut log_abs = 0.0;
    let mut negative = false;
    for i in is..it {
        let (l, flip) = p.cell(i);
        log_abs += l;
        negative ^= flip;
    }
    let e = log_abs.exp();
    Ok(if negative { -e } else { e })
}

/// `e_c(t, s)` for a constant coefficient `c`.
pub fn exp_const(c: f64, t: f64, s: f64, grid: &TimeScaleGrid) -> Result<f64> {
    let p = RegressiveFn::new(move |_: f64, _: f64| c, grid)?;
    exp_ts(&p, t, s)
}

/// Prefix table of the exponential from the first grid point, giving
/// `e_p(t_j, t_i)` in constant time.
#[derive(Clone, Debug)]
pub struct ExpTable {
    log_abs: Vec<f64>,
    negative: Vec<bool>,
}

impl ExpTable {
    pub fn new<F: GridFn>(p: &RegressiveFn<'_, F>) -> Self {
        let n = p.grid.len();
        let mut log_abs = Vec::with_capacity(n);
        let mut negative = Vec::with_capacity(n);
        log_abs.push(0.0);
        negative.push(false);
        for i in 0..n - 1 {
            let (l, flip) = p.cell(i);
            log_abs.push(log_abs[i] + l);
            negative.push(negative[i] ^ flip);
        }
        ExpTable { log_abs, negative }
    }

    /// `e_p(t_j, t_i)` by grid index.
    pub fn between(&self, j: usize, i: usize) -> f64 {
        let e = (self.log_abs[j] - self.log_abs[i]).exp();
        if self.negative[j] ^ self.negative[i] {
            -e
        } else {
            e
        }
    }

    /// `ln |e_p(t_j, t_0)|` where `t_0` is the first grid point.
    pub fn log_abs(&self, j: usize) -> f64 {
        self.log_abs[j]
    }
}

/// Delta integral of `f` over `[a, b)`.
pub fn delta_integral<F: GridFn>(f: &F, a: f64, b: f64, grid: &TimeScaleGrid) -> Result<f64> {
    let ia = grid.index_of(a)?;
    let ib = grid.index_of(b)?;
    if ib < ia {
        return Err(Error::Domain(format!("integration bounds reversed: {a} > {b}")));
    }
    let pts = grid.points();
    let mut acc = 0.0;
    for i in ia..ib {
        if grid.is_dense_at(i) {
            acc += simpson(|s| f.value(s, 0.0), pts[i], pts[i + 1], grid.substeps());
        } else {
            let mu = grid.mu_at(i);
            acc += mu * f.value(pts[i], mu);
        }
    }
    Ok(acc)
}

/// Delta derivative of `f` at the grid point `t`.
///
/// Right-scattered points give the exact quotient `(f(sigma(t)) - f(t)) / mu(t)`.
/// Right-dense points use a central difference with the computational substep
/// of the cell starting at `t`.
pub fn delta_derivative<F: GridFn>(f: &F, t: f64, grid: &TimeScaleGrid) -> Result<f64> {
    let i = grid.index_of(t)?;
    if i + 1 >= grid.len() {
        return Err(Error::AtBoundary(t));
    }
    let t = grid.points()[i];
    if grid.is_dense_at(i) {
        let h = (grid.points()[i + 1] - t) / grid.substeps() as f64;
        Ok((f.value(t + h, 0.0) - f.value(t - h, 0.0)) / (2.0 * h))
    } else {
        let mu = grid.mu_at(i);
        let s = grid.sigma_at(i);
        Ok((f.value(s, grid.mu_at(i + 1)) - f.value(t, mu)) / mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::{build_grid, TimeScaleSpec};

    fn integers(n: f64) -> TimeScaleGrid {
        build_grid(&TimeScaleSpec::integers(), 0.0, n).unwrap()
    }

    #[test]
    fn cylinder_cases() {
        assert_eq!(cylinder(0.0, -0.39).unwrap(), -0.39);
        assert!((cylinder(1.0, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(cylinder(1.0, -1.0), Err(Error::CylinderBranch { .. })));
    }

    #[test]
    fn circle_algebra() {
        assert_eq!(circle_plus(0.3, 0.4, 0.0), 0.7);
        assert_eq!(circle_plus(1.0, 1.0, 1.0), 3.0);
        let inv = circle_ominus(1.0, 1.0).unwrap();
        assert_eq!(inv, -0.5);
        assert_eq!(circle_plus(1.0, inv, 1.0), 0.0);
        assert_eq!(circle_minus(3.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(circle_ominus(-1.0, 1.0).is_err());
        assert!(circle_minus(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn exponential_on_integers_is_a_product() {
        let g = integers(10.0);
        let p = RegressiveFn::new(CoefficientFn::constant(1.0), &g).unwrap();
        // Brute-force product of (1 + mu p) over the cells.
        let brute: f64 = (0..3).map(|_| 1.0 + 1.0 * 1.0).product();
        assert_eq!(brute, 8.0);
        assert!((exp_ts(&p, 3.0, 0.0).unwrap() - brute).abs() < 1e-12);

        let c = 0.37;
        for t in 0..=10 {
            let e = exp_const(c, t as f64, 0.0, &g).unwrap();
            assert!((e / (1.0 + c).powi(t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_on_reals_matches_exp() {
        let g = build_grid(&TimeScaleSpec::reals(1e-3), 0.0, 2.0).unwrap();
        let e = exp_const(-0.7, 2.0, 0.5, &g).unwrap();
        assert!((e - (-0.7f64 * 1.5).exp()).abs() < 1e-10);
        let back = exp_const(-0.7, 0.5, 2.0, &g).unwrap();
        assert!((back * e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_factors_keep_the_sign() {
        let g = integers(4.0);
        // 1 + p = -0.5 on each cell.
        let e = exp_const(-1.5, 3.0, 0.0, &g).unwrap();
        assert!((e - (-0.5f64).powi(3)).abs() < 1e-15);
        assert!(!RegressiveFn::new(CoefficientFn::constant(-1.5), &g)
            .unwrap()
            .is_positive());
        assert!(matches!(
            RegressiveFn::new(CoefficientFn::constant(-1.0), &g),
            Err(Error::Regressivity { .. })
        ));
    }

    #[test]
    fn exp_table_agrees_with_direct_evaluation() {
        let g = integers(20.0);
        let f = CoefficientFn::trig_sum(
            0.1,
            vec![crate::coefficient::TrigTerm {
                amp: 0.5,
                freq: 0.7,
                trig: crate::coefficient::Trig::Sin,
            }],
        );
        let p = RegressiveFn::new(f, &g).unwrap();
        let table = ExpTable::new(&p);
        for (j, i) in [(5, 2), (20, 0), (7, 7), (13, 9)] {
            let direct = exp_ts(&p, j as f64, i as f64).unwrap();
            assert!((table.between(j, i) / direct - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integrals() {
        let g = integers(5.0);
        let id = |t: f64, _: f64| t;
        assert_eq!(delta_integral(&id, 0.0, 3.0, &g).unwrap(), 3.0);

        let r = build_grid(&TimeScaleSpec::reals(1e-2), 0.0, 1.0).unwrap();
        let one = CoefficientFn::constant(1.0);
        assert!((delta_integral(&one, 0.0, 1.0, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_integral_converges_under_refinement() {
        // Refine until successive values agree, then compare with 1/3.
        let sq = |t: f64, _: f64| t * t;
        let mut prev = f64::NAN;
        let mut h = 0.25;
        let mut value = 0.0;
        for _ in 0..8 {
            let r = build_grid(&TimeScaleSpec::reals(h), 0.0, 1.0).unwrap();
            value = delta_integral(&sq, 0.0, 1.0, &r).unwrap();
            if (value - prev).abs() < 1e-13 {
                break;
            }
            prev = value;
            h /= 2.0;
        }
        assert!((value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives() {
        let g = integers(5.0);
        let sq = |t: f64, _: f64| t * t;
        assert_eq!(delta_derivative(&sq, 2.0, &g).unwrap(), 5.0);
        let pow2 = |t: f64, _: f64| 2f64.powf(t);
        // Forward difference oracle: 2^4 - 2^3.
        assert_eq!(delta_derivative(&pow2, 3.0, &g).unwrap(), 16.0 - 8.0);
        assert!(matches!(delta_derivative(&sq, 5.0, &g), Err(Error::AtBoundary(_))));

        let h = 1e-3;
        let r = build_grid(&TimeScaleSpec::reals(h), 0.0, 1.0).unwrap();
        let sin = |t: f64, _: f64| t.sin();
        let d = delta_derivative(&sin, 0.0, &r).unwrap();
        assert!((d - 1.0).abs() < h * h);
    }
}
