//! TOML run configuration.
//!
//! ```toml
//! t0 = 0.0
//! horizon = 2000.0
//! x0 = 0.1
//! r_reference = 0.949            # optional
//!
//! a = { c0 = 0.4, terms = [{ amp = -0.01, freq = "sqrt(2)", trig = "sin" }] }
//! b = { const = 0.34 }
//! # c, d, m alike; tabulated: { knots = [[0.0, 1.0], [5.0, 2.0]], interp = "linear" }
//!
//! [timescale]
//! kind = "Z"                     # "R" (step, substeps) or "union" (intervals, points, step)
//!
//! [impulses]
//! kind = "log_scale"             # "multiply_y", "affine" (d, b) or "none"
//! first = 1.0
//! period = 1.0                   # or an explicit `instants = [...]`
//! lambda_rule = { rule = "nested_power", base = 0.9 }   # or { rule = "log_factor", value }, `lambda = [...]`
//!
//! [comparison]                   # only read by the comparison command
//! a = 0.5                        # or p = { ... } for a time-varying rate
//! b = 1.0                        # or q = { ... }
//! x0 = 1.0
//! slack = 0.0
//! ```
//!
//! Model coefficients and `x0` are optional at parse time so that a file
//! holding only a comparison system still parses; [`RunConfig::model`] names
//! any missing field.

use std::path::Path;

use serde::Deserialize;

use crate::coefficient::{CoefficientFn, Interp, Trig, TrigTerm};
use crate::error::{Error, Result};
use crate::impulse::{arithmetic_instants, nested_power_lambda, ImpulseSchedule};
use crate::model::{Coefficients, ModelConfig};
use crate::timescale::TimeScaleSpec;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    t0: f64,
    horizon: f64,
    x0: Option<f64>,
    r_reference: Option<f64>,
    a: Option<RawCoefficient>,
    b: Option<RawCoefficient>,
    c: Option<RawCoefficient>,
    d: Option<RawCoefficient>,
    m: Option<RawCoefficient>,
    timescale: RawTimeScale,
    #[serde(default)]
    impulses: Option<RawImpulses>,
    comparison: Option<RawComparison>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum RawCoefficient {
    Constant {
        #[serde(rename = "const")]
        value: f64,
    },
    Trig {
        c0: f64,
        #[serde(default)]
        terms: Vec<RawTerm>,
    },
    Table {
        knots: Vec<(f64, f64)>,
        #[serde(default)]
        interp: RawInterp,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    amp: f64,
    freq: Number,
    trig: RawTrig,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawTrig {
    Sin,
    Cos,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawInterp {
    Step,
    #[default]
    Linear,
}

/// A float, or a string expression such as `"sqrt(2)"` or `"2*pi/7"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Number {
    fn value(&self) -> Result<f64> {
        match self {
            Number::Float(v) => Ok(*v),
            Number::Int(v) => Ok(*v as f64),
            Number::Text(s) => parse_expr(s),
        }
    }
}

/// Products and quotients of decimals, `pi` and `sqrt(N)`, e.g. `2*pi/10`.
fn parse_expr(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot read `{s}` as a number (use decimals, pi, sqrt(N), * and /)"));
    let factor = |f: &str| -> Result<f64> {
        let f = f.trim();
        if f == "pi" {
            return Ok(std::f64::consts::PI);
        }
        if let Some(inner) = f.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            let v: f64 = inner.trim().parse().map_err(|_| bad())?;
            return if v >= 0.0 { Ok(v.sqrt()) } else { Err(bad()) };
        }
        f.parse::<f64>().map_err(|_| bad())
    };
    let mut value = 1.0;
    let mut divide = false;
    let mut rest = s.trim();
    loop {
        let cut = rest.find(['*', '/']);
        let (head, tail) = match cut {
            Some(i) => (&rest[..i], Some((&rest[i..i + 1], &rest[i + 1..]))),
            None => (rest, None),
        };
        let v = factor(head)?;
        value = if divide { value / v } else { value * v };
        match tail {
            Some((op, next)) => {
                divide = op == "/";
                rest = next;
            }
            None => return Ok(value),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimeScale {
    kind: String,
    step: Option<f64>,
    substeps: Option<usize>,
    origin: Option<f64>,
    spacing: Option<f64>,
    #[serde(default)]
    intervals: Vec<(f64, f64)>,
    #[serde(default)]
    points: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpulses {
    kind: String,
    first: Option<f64>,
    period: Option<f64>,
    instants: Option<Vec<f64>>,
    lambda_rule: Option<RawLambdaRule>,
    lambda: Option<Scalars>,
    d: Option<Scalars>,
    b: Option<Scalars>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
enum RawLambdaRule {
    /// `lambda_k = exp(base^(2^-k)) - 1`.
    NestedPower { base: f64 },
    Constant { value: f64 },
    /// `ln(1 + lambda_k) = value` for every `k`.
    LogFactor { value: f64 },
}

/// One value for every impulse, or an explicit list.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum Scalars {
    One(f64),
    Many(Vec<f64>),
}

impl Scalars {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Scalars::One(v) => Ok(vec![*v; n]),
            Scalars::Many(v) if v.len() == n => Ok(v.clone()),
            Scalars::Many(v) => Err(Error::Config(format!(
                "impulses.{what} has {} entries for {n} instants",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComparison {
    a: Option<f64>,
    b: Option<f64>,
    p: Option<RawCoefficient>,
    q: Option<RawCoefficient>,
    x0: f64,
    #[serde(default)]
    slack: f64,
}

/// Linear (or logistic) comparison system: `x^Delta = p x + q` with the
/// schedule's affine jumps; the trajectory field is offset by `slack` towards
/// the inside of the envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonConfig {
    pub p: CoefficientFn,
    pub q: CoefficientFn,
    pub x0: f64,
    pub slack: f64,
}

/// A parsed configuration together with its source text.
#[derive(Clone, Debug)]
pub struct RunConfig {
    raw: RawConfig,
    text: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(RunConfig {
            raw,
            text: text.to_owned(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.as_ref().display())),
            other => other,
        })
    }

    /// The file exactly as read.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn t0(&self) -> f64 {
        self.raw.t0
    }

    pub fn horizon(&self) -> f64 {
        self.raw.horizon
    }

    pub fn set_horizon(&mut self, horizon: f64) {
        self.raw.horizon = horizon;
    }

    /// Overrides the step of a real or union time scale.
    pub fn set_step(&mut self, step: f64) -> Result<()> {
        match self.raw.timescale.kind.as_str() {
            "R" | "union" => {
                self.raw.timescale.step = Some(step);
                Ok(())
            }
            k => Err(Error::Config(format!("time scale `{k}` has no step to override"))),
        }
    }

    pub fn timescale(&self) -> Result<TimeScaleSpec> {
        let ts = &self.raw.timescale;
        let need_step = || {
            ts.step
                .ok_or_else(|| Error::Config("missing field `timescale.step`".into()))
        };
        let spec = match ts.kind.as_str() {
            "Z" => TimeScaleSpec::IntegerLattice {
                origin: ts.origin.unwrap_or(0.0),
                spacing: ts.spacing.unwrap_or(1.0),
            },
            "R" => TimeScaleSpec::UniformRealGrid {
                anchor: ts.origin.unwrap_or(self.raw.t0),
                step: need_step()?,
                substeps: ts.substeps.unwrap_or(1),
            },
            "union" => TimeScaleSpec::UnionOfIntervals {
                intervals: ts.intervals.clone(),
                points: ts.points.clone(),
                step: need_step()?,
            },
            k => {
                return Err(Error::Config(format!(
                    "timescale.kind = `{k}`; expected \"Z\", \"R\" or \"union\""
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn schedule(&self) -> Result<ImpulseSchedule> {
        let Some(imp) = &self.raw.impulses else {
            return Ok(ImpulseSchedule::none());
        };
        if imp.kind == "none" {
            return Ok(ImpulseSchedule::none());
        }
        let instants = match (&imp.instants, imp.first, imp.period) {
            (Some(list), None, None) => list.clone(),
            (None, Some(first), Some(period)) => arithmetic_instants(first, period, self.raw.horizon)?,
            _ => {
                return Err(Error::Config(
                    "impulses need either `instants` or both `first` and `period`".into(),
                ))
            }
        };
        let n = instants.len();
        let lambdas = || -> Result<Vec<f64>> {
            match (&imp.lambda_rule, &imp.lambda) {
                (Some(RawLambdaRule::NestedPower { base }), None) => {
                    Ok((1..=n).map(|k| nested_power_lambda(*base, k)).collect())
                }
                (Some(RawLambdaRule::Constant { value }), None) => Ok(vec![*value; n]),
                (Some(RawLambdaRule::LogFactor { value }), None) => Ok(vec![value.exp_m1(); n]),
                (None, Some(l)) => l.expand(n, "lambda"),
                _ => Err(Error::Config(
                    "impulses need exactly one of `lambda_rule` and `lambda`".into(),
                )),
            }
        };
        match imp.kind.as_str() {
            "log_scale" => ImpulseSchedule::log_scale(instants, lambdas()?),
            "multiply_y" => ImpulseSchedule::multiply_y(instants, lambdas()?),
            "affine" => {
                let d = imp
                    .d
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing field `impulses.d`".into()))?
                    .expand(n, "d")?;
                let b = match &imp.b {
                    Some(b) => b.expand(n, "b")?,
                    None => vec![0.0; n],
                };
                ImpulseSchedule::affine(instants, d, b)
            }
            k => Err(Error::Config(format!(
                "impulses.kind = `{k}`; expected log_scale, multiply_y, affine or none"
            ))),
        }
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let coef = |name: &str, c: &Option<RawCoefficient>| -> Result<CoefficientFn> {
            let c = c
                .as_ref()
                .ok_or_else(|| Error::Config(format!("missing field `{name}`")))?;
            coefficient(c).map_err(|e| Error::Config(format!("coefficient `{name}`: {e}")))
        };
        let r = &self.raw;
        let coefficients = Coefficients {
            a: coef("a", &r.a)?,
            b: coef("b", &r.b)?,
            c: coef("c", &r.c)?,
            d: coef("d", &r.d)?,
            m: coef("m", &r.m)?,
        };
        let x0 = r
            .x0
            .ok_or_else(|| Error::Config("missing field `x0`".into()))?;
        let cfg = ModelConfig {
            coefficients,
            schedule: self.schedule()?,
            timescale: self.timescale()?,
            t0: r.t0,
            horizon: r.horizon,
            x0,
            r_reference: r.r_reference,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn comparison(&self) -> Result<ComparisonConfig> {
        let c = self
            .raw
            .comparison
            .as_ref()
            .ok_or_else(|| Error::Config("missing section `[comparison]`".into()))?;
        let p = match (&c.p, c.a) {
            (Some(p), None) => coefficient(p)?,
            (None, Some(a)) => CoefficientFn::constant(-a),
            _ => return Err(Error::Config("comparison needs exactly one of `a` and `p`".into())),
        };
        let q = match (&c.q, c.b) {
            (Some(q), None) => coefficient(q)?,
            (None, Some(b)) => CoefficientFn::constant(b),
            _ => return Err(Error::Config("comparison needs exactly one of `b` and `q`".into())),
        };
        Ok(ComparisonConfig {
            p,
            q,
            x0: c.x0,
            slack: c.slack,
        })
    }
}

fn coefficient(c: &RawCoefficient) -> Result<CoefficientFn> {
    Ok(match c {
        RawCoefficient::Constant { value } => CoefficientFn::constant(*value),
        RawCoefficient::Trig { c0, terms } => {
            let terms = terms
                .iter()
                .map(|t| {
                    Ok(TrigTerm {
                        amp: t.amp,
                        freq: t.freq.value()?,
                        trig: match t.trig {
                            RawTrig::Sin => Trig::Sin,
                            RawTrig::Cos => Trig::Cos,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            CoefficientFn::trig_sum(*c0, terms)
        }
        RawCoefficient::Table { knots, interp } => CoefficientFn::tabulated(
            knots.clone(),
            match interp {
                RawInterp::Step => Interp::Step,
                RawInterp::Linear => Interp::Linear,
            },
        )?,
    })
}
