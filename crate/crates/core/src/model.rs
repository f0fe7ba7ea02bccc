//! Single-species model with saturating predation and logarithmic impulses:
//!
//! ```text
//! x^Delta(t) = a(t) - b(t) e^{x(t)} - c(t) / (d(t) + m(t) e^{x(t)}),   t != t_k
//! x(t_k+)    = ln(1 + lambda_k) x(t_k)
//! ```
//!
//! `x = ln y` for the population density `y`. This module holds the
//! coefficient set, the vector fields in both variables, the hypothesis
//! checks and the derived constants `r`, `x*`, `x_*`, `gamma`.

use crate::coefficient::{Bounds, CoefficientFn};
use crate::error::{Error, Result};
use crate::impulse::{ImpulseSchedule, JumpKind};
use crate::report::KvBlock;
use crate::timescale::{build_grid, TimeScaleGrid, TimeScaleSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub a: CoefficientFn,
    pub b: CoefficientFn,
    pub c: CoefficientFn,
    pub d: CoefficientFn,
    pub m: CoefficientFn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Values {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    m: f64,
}

impl Coefficients {
    fn at(&self, t: f64) -> Values {
        Values {
            a: self.a.eval(t),
            b: self.b.eval(t),
            c: self.c.eval(t),
            d: self.d.eval(t),
            m: self.m.eval(t),
        }
    }

    /// `x^Delta = a - b e^x - c / (d + m e^x)`.
    pub fn field_x(&self, t: f64, x: f64) -> Result<f64> {
        let v = self.at(t);
        let ex = x.exp();
        let den = v.d + v.m * ex;
        if den == 0.0 {
            return Err(Error::Domain(format!("d + m e^x vanishes at t = {t}, x = {x}")));
        }
        Ok(v.a - v.b * ex - v.c / den)
    }

    /// Right-hand side in the density `y = e^x`. The continuous form is
    /// `y (a - b y) - c y / (d + m y)`; the discrete form is chosen so that one
    /// exact unit step gives `y(n+1) = y(n) exp{a - b y - c / (d + m y)}`.
    pub fn field_y(&self, t: f64, y: f64, form: YForm) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("density must be positive, got y = {y} at t = {t}")));
        }
        let v = self.at(t);
        let den = v.d + v.m * y;
        Ok(match form {
            YForm::Continuous => y * (v.a - v.b * y) - v.c * y / den,
            YForm::Discrete => y * (v.a - v.b * y - v.c / den).exp() - y,
        })
    }

    pub fn bounds(&self, times: &[f64]) -> CoefficientBounds {
        CoefficientBounds {
            a: self.a.bounds(times),
            b: self.b.bounds(times),
            c: self.c.bounds(times),
            d: self.d.bounds(times),
            m: self.m.bounds(times),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YForm {
    /// Differential form, for dense time scales.
    Continuous,
    /// Exponential-map form, for unit-step lattices.
    Discrete,
}

/// `f^l`, `f^u` for each coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientBounds {
    pub a: Bounds,
    pub b: Bounds,
    pub c: Bounds,
    pub d: Bounds,
    pub m: Bounds,
}

impl CoefficientBounds {
    pub fn kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        for (name, b) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d), ("m", self.m)] {
            kv.num(format!("{name}.lower"), b.lo).num(format!("{name}.upper"), b.hi);
        }
        kv
    }
}

/// Partial products `prod_{t0 < t_k < t} ln(1 + lambda_k)` for `t` up to the
/// horizon and their infimum `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseProduct {
    pub r: f64,
    pub sup: f64,
    /// `(t_k, product including t_k)`, preceded by `(t0, 1)` for the empty
    /// product.
    pub partial: Vec<(f64, f64)>,
}

/// Infimum over `t0 < t <= horizon` of the partial impulse products. Only
/// impulses with `t0 < t_k < horizon` can enter a product, since `t` must lie
/// strictly after `t_k`.
pub fn impulse_product_r(schedule: &ImpulseSchedule, t0: f64, horizon: f64) -> Result<ImpulseProduct> {
    if !schedule.is_empty() && schedule.kind() != JumpKind::LogScale {
        return Err(Error::InvalidSchedule(
            "impulse product needs a logarithmic (lambda) schedule".into(),
        ));
    }
    let e1 = 1f64.exp_m1();
    let mut partial = vec![(t0, 1.0)];
    let mut log_p = 0.0f64;
    let (mut r, mut sup) = (1.0f64, 1.0f64);
    for (k, &tk) in schedule.instants().iter().enumerate() {
        if tk <= t0 || tk >= horizon {
            continue;
        }
        let lambda = schedule.lambda(k).unwrap_or(f64::NAN);
        if !(lambda > 0.0 && lambda <= e1) {
            return Err(Error::Domain(format!(
                "lambda_{} = {lambda} at t = {tk} lies outside (0, e - 1]",
                k + 1
            )));
        }
        log_p += schedule.factor(k).ln();
        let p = log_p.exp();
        r = r.min(p);
        sup = sup.max(p);
        partial.push((tk, p));
    }
    Ok(ImpulseProduct { r, sup, partial })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermanenceBounds {
    /// `x* = (a^u - b^l) / b^l`.
    pub upper: f64,
    /// `x_* = ln((a^l - c^u) r / b^u)`.
    pub lower: f64,
}

pub fn permanence_bounds(cb: &CoefficientBounds, r: f64) -> Result<PermanenceBounds> {
    if !(cb.a.hi > cb.b.lo) {
        return Err(Error::BoundsUndefined(format!(
            "a^u = {} must exceed b^l = {}",
            cb.a.hi, cb.b.lo
        )));
    }
    let lhs = (cb.a.lo - cb.c.hi) * r;
    if !(lhs > cb.b.hi) {
        return Err(Error::BoundsUndefined(format!(
            "(a^l - c^u) r = ({} - {}) * {r} = {lhs} must exceed b^u = {}",
            cb.a.lo, cb.c.hi, cb.b.hi
        )));
    }
    Ok(PermanenceBounds {
        upper: (cb.a.hi - cb.b.lo) / cb.b.lo,
        lower: (lhs / cb.b.hi).ln(),
    })
}

/// Contraction rate of the squared gap between two solutions.
pub fn gamma(cb: &CoefficientBounds, x_lower: f64, x_upper: f64, mu_bar: f64) -> f64 {
    let (bl, bu) = (cb.b.lo, cb.b.hi);
    let (cl, cu) = (cb.c.lo, cb.c.hi);
    let (dl, du) = (cb.d.lo, cb.d.hi);
    let (ml, mu) = (cb.m.lo, cb.m.hi);
    let el = x_lower.exp();
    let eu = x_upper.exp();
    let e2u = (2.0 * x_upper).exp();
    let low_den = dl + ml * el;
    2.0 * bl * el + 2.0 * cl * ml * el / (du + mu * eu).powi(2)
        - mu_bar * bu * bu * e2u
        - mu_bar * cu * cu * mu * mu * e2u / low_den.powi(4)
        - 2.0 * mu_bar * bu * cu * mu * e2u / low_den.powi(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub coefficients: Coefficients,
    pub schedule: ImpulseSchedule,
    pub timescale: TimeScaleSpec,
    pub t0: f64,
    pub horizon: f64,
    pub x0: f64,
    /// Externally supplied `r`, reported next to the computed infimum.
    pub r_reference: Option<f64>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > self.t0) {
            return Err(Error::InvalidSpan {
                t0: self.t0,
                horizon: self.horizon,
            });
        }
        if !self.x0.is_finite() {
            return Err(Error::Config(format!("x0 = {} must be finite", self.x0)));
        }
        self.timescale.validate()
    }

    /// Grid over `[t0, horizon]` with every impulse instant on it.
    pub fn grid(&self) -> Result<TimeScaleGrid> {
        self.validate()?;
        let g = build_grid(&self.timescale, self.t0, self.horizon)?;
        let inside: Vec<f64> = self
            .schedule
            .instants()
            .iter()
            .copied()
            .filter(|&t| t > self.t0 && t <= g.end())
            .collect();
        g.with_instants(&inside)
    }

    pub fn field_x(&self, t: f64, x: f64) -> Result<f64> {
        self.coefficients.field_x(t, x)
    }

    /// The `x` field as a plain closure for the solver; a vanishing
    /// denominator yields NaN, which the solver reports as divergence.
    pub fn rhs_x(&self) -> impl Fn(f64, f64) -> f64 + '_ {
        move |t, x| self.coefficients.field_x(t, x).unwrap_or(f64::NAN)
    }

    pub fn rhs_y(&self, form: YForm) -> impl Fn(f64, f64) -> f64 + '_ {
        move |t, y| self.coefficients.field_y(t, y, form).unwrap_or(f64::NAN)
    }
}

/// Outcome of one hypothesis.
#[derive(Clone, Debug, Default)]
pub struct Check {
    pub pass: bool,
    pub witnesses: KvBlock,
    pub diagnostics: Vec<String>,
}

impl Check {
    fn fail(&mut self, msg: String) {
        self.pass = false;
        self.diagnostics.push(msg);
    }
}

#[derive(Clone, Debug)]
pub struct HypothesisReport {
    pub bounds: CoefficientBounds,
    pub mu_bar: f64,
    pub product: Option<ImpulseProduct>,
    pub r_reference: Option<f64>,
    pub permanence: Option<PermanenceBounds>,
    pub permanence_reference: Option<PermanenceBounds>,
    pub gamma: Option<f64>,
    pub gamma_reference: Option<f64>,
    pub theta: Option<f64>,
    pub h: [Check; 5],
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h.iter().all(|c| c.pass)
    }

    /// `r` from the partial products, if the schedule admitted one.
    pub fn r(&self) -> Option<f64> {
        self.product.as_ref().map(|p| p.r)
    }

    pub fn kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.extend("bounds", &self.bounds.kv());
        kv.num("mu_bar", self.mu_bar);
        kv.opt_num("r.oracle", self.r());
        kv.opt_num("r.reference", self.r_reference);
        if let (Some(p), Some(r)) = (&self.product, self.r_reference) {
            kv.flag("r.reference_within_products", r <= p.r);
        }
        kv.opt_num("x_upper", self.permanence.map(|p| p.upper));
        kv.opt_num("x_lower.oracle", self.permanence.map(|p| p.lower));
        kv.opt_num("x_lower.reference", self.permanence_reference.map(|p| p.lower));
        kv.opt_num("gamma.oracle", self.gamma);
        kv.opt_num("gamma.reference", self.gamma_reference);
        kv.opt_num("theta", self.theta);
        for (i, c) in self.h.iter().enumerate() {
            let name = format!("H{}", i + 1);
            kv.flag(format!("{name}.pass"), c.pass);
            kv.extend(&name, &c.witnesses);
            for (j, d) in c.diagnostics.iter().enumerate() {
                kv.text(format!("{name}.diagnostic.{j}"), d.clone());
            }
        }
        kv.flag("all_pass", self.all_pass());
        kv
    }
}

/// Relative spread allowed in the gaps `t_{k+1} - t_k` of a schedule that is
/// not exactly arithmetic or gap-periodic.
pub const DEFAULT_DISPERSION_TOL: f64 = 1e-9;

pub fn check_hypotheses(cfg: &ModelConfig) -> Result<HypothesisReport> {
    check_hypotheses_with(cfg, DEFAULT_DISPERSION_TOL)
}

pub fn check_hypotheses_with(cfg: &ModelConfig, dispersion_tol: f64) -> Result<HypothesisReport> {
    let grid = cfg.grid()?;
    let cb = cfg.coefficients.bounds(grid.points());
    let mu_bar = grid.max_grain();

    let h1 = check_h1(&cb);

    let mut h2 = Check {
        pass: true,
        ..Check::default()
    };
    let product = match impulse_product_r(&cfg.schedule, cfg.t0, cfg.horizon) {
        Ok(p) => {
            h2.witnesses.num("r", p.r).num("product_sup", p.sup);
            if !(p.r > 0.0) {
                h2.fail(format!("r = {} is not positive", p.r));
            }
            if p.sup > 1.0 {
                h2.fail(format!("partial product reaches {} > 1", p.sup));
            }
            Some(p)
        }
        Err(e) => {
            h2.fail(e.to_string());
            None
        }
    };
    if let Some(r) = cfg.r_reference {
        h2.witnesses.num("r_reference", r);
    }

    let (h3, theta) = check_h3(&cfg.schedule, cfg.t0, cfg.horizon, dispersion_tol);

    let r = product.as_ref().map_or(f64::NAN, |p| p.r);
    let mut h4 = Check {
        pass: true,
        ..Check::default()
    };
    h4.witnesses
        .num("a_upper_minus_b_lower", cb.a.hi - cb.b.lo)
        .num("lhs_minus_b_upper", (cb.a.lo - cb.c.hi) * r - cb.b.hi);
    if !(cb.a.hi > cb.b.lo) {
        h4.fail(format!("a^u = {} <= b^l = {}", cb.a.hi, cb.b.lo));
    }
    if !((cb.a.lo - cb.c.hi) * r > cb.b.hi) {
        h4.fail(format!(
            "(a^l - c^u) r = ({} - {}) * {r} = {} <= b^u = {}",
            cb.a.lo,
            cb.c.hi,
            (cb.a.lo - cb.c.hi) * r,
            cb.b.hi
        ));
    }
    let rate = -cb.a.lo + cb.c.hi;
    let margin = grid
        .grain()
        .iter()
        .map(|&mu| 1.0 + mu * rate)
        .fold(f64::INFINITY, f64::min);
    h4.witnesses.num("regressive_margin", margin);
    if !(margin > 0.0) {
        h4.fail(format!("1 + mu (-a^l + c^u) reaches {margin} <= 0"));
    }

    let permanence = permanence_bounds(&cb, r).ok();
    let permanence_reference = cfg
        .r_reference
        .and_then(|r| permanence_bounds(&cb, r).ok());
    let gamma_of = |p: PermanenceBounds| gamma(&cb, p.lower, p.upper, mu_bar);
    let g = permanence.map(gamma_of);
    let g_ref = permanence_reference.map(gamma_of);

    let mut h5 = Check {
        pass: true,
        ..Check::default()
    };
    match g {
        Some(g) => {
            h5.witnesses
                .num("gamma", g)
                .num("regressive_margin", 1.0 - mu_bar * g);
            if !(g > 0.0) {
                h5.fail(format!("gamma = {g} <= 0"));
            }
            if !(1.0 - mu_bar * g > 0.0) {
                h5.fail(format!("1 - mu_bar gamma = {} <= 0", 1.0 - mu_bar * g));
            }
        }
        None => h5.fail("gamma undefined: permanence bounds need (H4)".into()),
    }

    Ok(HypothesisReport {
        bounds: cb,
        mu_bar,
        product,
        r_reference: cfg.r_reference,
        permanence,
        permanence_reference,
        gamma: g,
        gamma_reference: g_ref,
        theta,
        h: [h1, h2, h3, h4, h5],
    })
}

fn check_h1(cb: &CoefficientBounds) -> Check {
    let mut c = Check {
        pass: true,
        ..Check::default()
    };
    for (name, b) in [("a", cb.a), ("b", cb.b), ("c", cb.c), ("m", cb.m)] {
        c.witnesses.num(format!("{name}_lower"), b.lo);
        if !(b.lo > 0.0) {
            c.fail(format!("{name}^l = {} must be positive", b.lo));
        }
    }
    c.witnesses.num("d_lower", cb.d.lo);
    if !(cb.d.lo >= 1.0) {
        c.fail(format!("d^l = {} must be at least 1", cb.d.lo));
    }
    for (name, b) in [("a", cb.a), ("b", cb.b), ("c", cb.c), ("d", cb.d), ("m", cb.m)] {
        if !(b.lo.is_finite() && b.hi.is_finite()) {
            c.fail(format!("{name} is unbounded"));
        }
    }
    c
}

/// Smallest `p >= 1` with `gaps[i + p] == gaps[i]` for all `i`, if one exists
/// with at least two full repetitions.
fn gap_period(gaps: &[f64], tol: f64) -> Option<usize> {
    (1..=gaps.len() / 2).find(|&p| {
        gaps.iter()
            .zip(&gaps[p..])
            .all(|(a, b)| (a - b).abs() <= tol * a.abs().max(b.abs()))
    })
}

fn check_h3(schedule: &ImpulseSchedule, t0: f64, horizon: f64, tol: f64) -> (Check, Option<f64>) {
    let mut c = Check {
        pass: true,
        ..Check::default()
    };
    let active = schedule.restricted(t0, horizon);
    let theta = active.theta();
    c.witnesses.opt_num("theta", theta);
    let Some(theta) = theta else {
        c.witnesses.text("structure", "fewer than two impulses");
        return (c, None);
    };
    if !(theta > 0.0) {
        c.fail(format!("theta = {theta} is not positive"));
    }
    let gaps: Vec<f64> = active.instants().windows(2).map(|w| w[1] - w[0]).collect();
    let (lo, hi) = gaps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &g| (l.min(g), h.max(g)));
    let dispersion = (hi - lo) / hi;
    c.witnesses.num("gap_dispersion", dispersion);
    match gap_period(&gaps, 1e-12) {
        Some(1) => {
            c.witnesses.text("structure", "arithmetic");
        }
        Some(p) => {
            c.witnesses.text("structure", "periodic gaps").int("gap_period", p);
        }
        None => {
            c.witnesses.text("structure", "irregular");
            if dispersion > tol {
                c.fail(format!("gap dispersion {dispersion} exceeds {tol}"));
            }
        }
    }
    (c, Some(theta))
}
