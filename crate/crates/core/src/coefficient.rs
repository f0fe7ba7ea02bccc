//! Bounded scalar coefficients of time.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trig {
    Sin,
    Cos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: f64,
    pub trig: Trig,
}

impl TrigTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match self.trig {
            Trig::Sin => self.amp * (self.freq * t).sin(),
            Trig::Cos => self.amp * (self.freq * t).cos(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    /// Value of the last knot at or before `t`.
    Step,
    /// Linear between knots.
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientFn {
    Constant(f64),
    /// `c0 + sum amp_i * trig_i(freq_i * t)`.
    TrigSum { c0: f64, terms: Vec<TrigTerm> },
    /// Knots `(t_i, v_i)` with strictly increasing `t_i`; constant beyond the
    /// first and last knot.
    Tabulated { knots: Vec<(f64, f64)>, interp: Interp },
}

/// `inf` and `sup` of a coefficient over a time range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl CoefficientFn {
    pub fn constant(v: f64) -> Self {
        CoefficientFn::Constant(v)
    }

    pub fn trig_sum(c0: f64, terms: Vec<TrigTerm>) -> Self {
        CoefficientFn::TrigSum { c0, terms }
    }

    pub fn tabulated(knots: Vec<(f64, f64)>, interp: Interp) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Domain("tabulated coefficient needs at least one knot".into()));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Domain("tabulated knots must be strictly increasing in t".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Domain("tabulated knots must be finite".into()));
        }
        Ok(CoefficientFn::Tabulated { knots, interp })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Constant(v) => *v,
            CoefficientFn::TrigSum { c0, terms } => {
                c0 + terms.iter().map(|term| term.eval(t)).sum::<f64>()
            }
            CoefficientFn::Tabulated { knots, interp } => {
                let pos = knots.partition_point(|&(k, _)| k <= t);
                if pos == 0 {
                    return knots[0].1;
                }
                let (t_a, v_a) = knots[pos - 1];
                match (interp, knots.get(pos)) {
                    (Interp::Linear, Some(&(t_b, v_b))) => {
                        v_a + (v_b - v_a) * (t - t_a) / (t_b - t_a)
                    }
                    _ => v_a,
                }
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            CoefficientFn::Constant(v) => Some(*v),
            CoefficientFn::TrigSum { c0, terms } if terms.is_empty() => Some(*c0),
            _ => None,
        }
    }

    /// Closed-form `inf`/`sup` over all `t`, when one exists. For trig sums
    /// this is `c0 -/+ sum |amp_i|`, which is attained (or approached) when the
    /// frequencies are rationally independent.
    pub fn analytic_bounds(&self) -> Option<Bounds> {
        match self {
            CoefficientFn::Constant(v) => Some(Bounds { lo: *v, hi: *v }),
            CoefficientFn::TrigSum { c0, terms } => {
                let spread: f64 = terms.iter().map(|term| term.amp.abs()).sum();
                Some(Bounds {
                    lo: c0 - spread,
                    hi: c0 + spread,
                })
            }
            CoefficientFn::Tabulated { .. } => None,
        }
    }

    /// `inf`/`sup` sampled at the given times (plus the knots of a tabulated
    /// coefficient that fall inside the sampled range).
    pub fn sampled_bounds(&self, times: &[f64]) -> Bounds {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        for &t in times {
            visit(self.eval(t));
        }
        if let (CoefficientFn::Tabulated { knots, .. }, Some(&first), Some(&last)) =
            (self, times.first(), times.last())
        {
            for &(t, v) in knots {
                if t >= first && t <= last {
                    visit(v);
                }
            }
        }
        Bounds { lo, hi }
    }

    /// Analytic bounds when available, otherwise sampled over `times`.
    pub fn bounds(&self, times: &[f64]) -> Bounds {
        self.analytic_bounds()
            .unwrap_or_else(|| self.sampled_bounds(times))
    }
}
