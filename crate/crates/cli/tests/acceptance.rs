//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tscale::analysis::{permanence_check, stability_check, translation_test, StabilityOptions};
use tscale::calculus::{circle_minus, circle_plus, delta_derivative, exp_ts, ExpTable, RegressiveFn};
use tscale::comparison::{verify_bound, Direction, Envelope, GronwallEnvelope, LinearImpulsiveData, Side};
use tscale::config::RunConfig;
use tscale::impulse::ImpulseSchedule;
use tscale::model::{gamma, impulse_product_r, permanence_bounds, ModelConfig};
use tscale::solver::simulate;
use tscale::timescale::{build_grid, TimeScaleGrid, TimeScaleSpec};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn fixture(name: &str) -> ModelConfig {
    RunConfig::load(config_path(name)).unwrap().model().unwrap()
}

fn simulate_from(cfg: &ModelConfig, grid: &TimeScaleGrid, x0: f64) -> tscale::solver::Trajectory {
    simulate(cfg.rhs_x(), &cfg.schedule, grid, x0, cfg.t0).unwrap()
}

// 1. Example constants.

fn example_constants() -> Outcome {
    let cfg = fixture("example_z.toml");
    let grid = cfg.grid().unwrap();
    let cb = cfg.coefficients.bounds(grid.points());
    let exact = [
        ("a^u", cb.a.hi, 0.41),
        ("a^l", cb.a.lo, 0.39),
        ("b^u", cb.b.hi, 0.34),
        ("b^l", cb.b.lo, 0.34),
        ("c^u", cb.c.hi, 0.01),
        ("c^l", cb.c.lo, 0.008),
        ("d^u", cb.d.hi, 1.1),
        ("d^l", cb.d.lo, 1.0),
        ("m^u", cb.m.hi, 0.23),
        ("m^l", cb.m.lo, 0.17),
    ];
    for (name, got, want) in exact {
        ensure((got - want).abs() <= 1e-15, || format!("{name} = {got}, expected {want}"))?;
    }
    let r = cfg.r_reference.ok_or("fixture has no r_reference")?;
    let p = permanence_bounds(&cb, r).map_err(|e| e.to_string())?;
    ensure((p.upper - 0.205882).abs() < 1e-6, || format!("x* = {}", p.upper))?;
    ensure((p.lower - 0.059).abs() < 1e-3, || format!("x_* = {}", p.lower))?;
    let g0 = gamma(&cb, p.lower, p.upper, 0.0);
    let g1 = gamma(&cb, p.lower, p.upper, 1.0);
    ensure((g0 - 0.723).abs() < 1e-3, || format!("gamma(mu=0) = {g0}"))?;
    ensure((g1 - 0.547).abs() < 1e-3, || format!("gamma(mu=1) = {g1}"))?;
    Ok(format!("x* = {:.6}, x_* = {:.5}, gamma = {g0:.5} / {g1:.5}", p.upper, p.lower))
}

// 2. Exponential identities.

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn step_fn(vals: &[f64], width: f64) -> impl Fn(f64, f64) -> f64 + Copy + '_ {
    move |t: f64, _| vals[((t / width + 1e-9).floor() as usize).min(vals.len() - 1)]
}

fn identities<P, Q>(grid: &TimeScaleGrid, p: P, q: Q, idx: [usize; 3], rel: f64) -> Result<(), String>
where
    P: Fn(f64, f64) -> f64 + Copy,
    Q: Fn(f64, f64) -> f64 + Copy,
{
    let e = |f: &dyn Fn() -> tscale::error::Result<f64>| f().map_err(|e| e.to_string());
    let pts = grid.points();
    let (t, s, r) = (pts[idx[0]], pts[idx[1]], pts[idx[2]]);
    let ep = RegressiveFn::new(p, grid).map_err(|e| e.to_string())?;
    let eq = RegressiveFn::new(q, grid).map_err(|e| e.to_string())?;
    let zero = RegressiveFn::new(|_: f64, _: f64| 0.0, grid).map_err(|e| e.to_string())?;

    ensure(e(&|| exp_ts(&zero, t, s))? == 1.0, || "e_0 != 1".into())?;
    ensure(e(&|| exp_ts(&ep, t, t))? == 1.0, || "e_p(t,t) != 1".into())?;

    let mu = grid.mu_at(idx[0]);
    if idx[0] + 1 < grid.len() && mu > 0.0 {
        let lhs = e(&|| exp_ts(&ep, grid.sigma_at(idx[0]), s))?;
        let rhs = (1.0 + mu * p(t, mu)) * e(&|| exp_ts(&ep, t, s))?;
        ensure(close(lhs, rhs, rel), || format!("sigma recursion at t={t}: {lhs} vs {rhs}"))?;
    }

    let a = e(&|| exp_ts(&ep, t, s))?;
    let b = e(&|| exp_ts(&ep, s, t))?;
    ensure(close(a, 1.0 / b, rel), || format!("reciprocal: {a} vs 1/{b}"))?;

    let lhs = a * e(&|| exp_ts(&ep, s, r))?;
    let rhs = e(&|| exp_ts(&ep, t, r))?;
    ensure(close(lhs, rhs, rel), || format!("semigroup: {lhs} vs {rhs}"))?;

    let plus = RegressiveFn::new(move |t, mu| circle_plus(p(t, mu), q(t, mu), mu), grid).map_err(|e| e.to_string())?;
    let eqv = e(&|| exp_ts(&eq, t, s))?;
    let rhs = e(&|| exp_ts(&plus, t, s))?;
    ensure(close(a * eqv, rhs, rel), || format!("circle-plus: {} vs {rhs}", a * eqv))?;

    let minus = RegressiveFn::new(move |t, mu| circle_minus(p(t, mu), q(t, mu), mu).unwrap_or(f64::NAN), grid)
        .map_err(|e| e.to_string())?;
    let rhs = e(&|| exp_ts(&minus, t, s))?;
    ensure(close(a / eqv, rhs, rel), || format!("circle-minus: {} vs {rhs}", a / eqv))?;

    if ep.is_positive() {
        let table = ExpTable::new(&ep);
        ensure((0..grid.len()).all(|j| table.between(j, idx[1]) > 0.0), || "positivity".into())?;
    }
    Ok(())
}

fn regressive_value(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.8) {
        rng.random_range(-0.95..3.0)
    } else {
        rng.random_range(-6.0..-1.05)
    }
}

fn exponential_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let int_trials = 300;
    for trial in 0..int_trials {
        let n = rng.random_range(2..=200usize);
        let grid = build_grid(&TimeScaleSpec::integers(), 0.0, (n - 1) as f64).unwrap();
        let idx = [0; 3].map(|_| rng.random_range(0..n));
        let (pv, qv): (Vec<f64>, Vec<f64>) = if trial % 2 == 0 {
            (
                (0..n).map(|_| regressive_value(&mut rng)).collect(),
                (0..n).map(|_| regressive_value(&mut rng)).collect(),
            )
        } else {
            (vec![regressive_value(&mut rng)], vec![regressive_value(&mut rng)])
        };
        identities(&grid, step_fn(&pv, 1.0), step_fn(&qv, 1.0), idx, 1e-10)
            .map_err(|e| format!("integers, trial {trial} (n = {n}): {e}"))?;
    }
    let real_trials = 30;
    let grid = build_grid(&TimeScaleSpec::reals(1e-3), 0.0, 4.0).unwrap();
    for trial in 0..real_trials {
        let pv: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let qv: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let idx = [0; 3].map(|_| rng.random_range(0..grid.len()));
        identities(&grid, step_fn(&pv, 0.5), step_fn(&qv, 0.5), idx, 1e-6)
            .map_err(|e| format!("reals, trial {trial}: {e}"))?;
    }
    Ok(format!("{int_trials} integer grids at 1e-10, {real_trials} real grids (h = 1e-3) at 1e-6"))
}

// 3. Comparison oracle.

struct System {
    p: f64,
    q: f64,
    x0: f64,
    horizon: usize,
    jumps: Vec<(usize, f64, f64)>,
}

impl System {
    fn random(rng: &mut ChaCha8Rng, positive: bool) -> Self {
        let p = loop {
            let p = if positive { rng.random_range(-0.9..0.5) } else { rng.random_range(-2.5..0.5) };
            if (1.0f64 + p).abs() > 1e-3 {
                break p;
            }
        };
        let horizon = rng.random_range(2..=50usize);
        let mut jumps: Vec<(usize, f64, f64)> = (0..rng.random_range(0..=3))
            .map(|_| {
                let d = if positive { rng.random_range(0.0..1.5) } else { rng.random_range(-1.5..1.5) };
                (rng.random_range(1..horizon), d, rng.random_range(-1.0..1.0))
            })
            .collect();
        jumps.sort_by_key(|j| j.0);
        jumps.dedup_by_key(|j| j.0);
        System {
            p,
            q: rng.random_range(-1.0..1.0),
            x0: rng.random_range(-2.0..2.0),
            horizon,
            jumps,
        }
    }

    fn schedule(&self, lower_b: f64) -> ImpulseSchedule {
        ImpulseSchedule::affine(
            self.jumps.iter().map(|j| j.0 as f64).collect(),
            self.jumps.iter().map(|j| j.1).collect(),
            self.jumps.iter().map(|j| j.2 - lower_b).collect(),
        )
        .unwrap()
    }

    /// `(x(n), x(n+))` by direct recursion, each jump applied on arrival.
    fn recursion(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.horizon + 1);
        let mut x = self.x0;
        for n in 0..=self.horizon {
            let pre = x;
            if let Some(&(_, d, b)) = self.jumps.iter().find(|j| j.0 == n) {
                x = d * x + b;
            }
            out.push((pre, x));
            x = (1.0 + self.p) * x + self.q;
        }
        out
    }
}

fn comparison_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let sys = System::random(&mut rng, false);
        let grid = build_grid(&TimeScaleSpec::integers(), 0.0, sys.horizon as f64).unwrap();
        let data = LinearImpulsiveData::constant(-sys.p, sys.q, &sys.schedule(0.0), &grid, 0.0).unwrap();
        let env = GronwallEnvelope::new(&data, sys.x0, &grid).unwrap();
        for (n, (pre, post)) in sys.recursion().into_iter().enumerate() {
            for (side, want) in [(Side::Pre, pre), (Side::Post, post)] {
                let err = (env.value_at(n, side) - want).abs() / want.abs().max(1.0);
                worst = worst.max(err);
                ensure(err <= 1e-10, || format!("system {i}, n = {n}: relative error {err:e}"))?;
            }
        }
    }
    for i in 0..200 {
        let sys = System::random(&mut rng, true);
        let grid = build_grid(&TimeScaleSpec::integers(), 0.0, sys.horizon as f64).unwrap();
        let data = LinearImpulsiveData::constant(-sys.p, sys.q, &sys.schedule(0.0), &grid, 0.0).unwrap();
        let env = GronwallEnvelope::new(&data, sys.x0, &grid).unwrap();
        let slack: Vec<f64> = (0..=sys.horizon).map(|_| rng.random_range(0.0..0.3)).collect();
        let lowered = sys.schedule(rng.random_range(0.0..0.3));
        let f = |t: f64, x: f64| sys.p * x + sys.q - slack[t as usize];
        let traj = simulate(f, &lowered, &grid, sys.x0, 0.0).unwrap();
        let rep = verify_bound(&traj, &env, Direction::Upper, 1e-9).unwrap();
        ensure(rep.pass, || format!("subsolution {i}: violation {}", rep.max_violation))?;
    }
    Ok(format!("200 equality systems (worst relative error {worst:.1e}), 200 subsolutions bounded"))
}

// 4. Permanence.

fn permanence_on(name: &str, transient: f64) -> Result<String, String> {
    let cfg = fixture(name);
    let grid = cfg.grid().unwrap();
    let cb = cfg.coefficients.bounds(grid.points());
    let r = impulse_product_r(&cfg.schedule, cfg.t0, cfg.horizon).map_err(|e| e.to_string())?.r;
    let p = permanence_bounds(&cb, r).map_err(|e| e.to_string())?;
    let traj = simulate_from(&cfg, &grid, cfg.x0);
    let rep = permanence_check(&traj, p.lower, p.upper, transient, 0.02).map_err(|e| e.to_string())?;
    ensure(rep.pass, || {
        format!("{name}: range [{}, {}] outside [{} - 0.02, {} + 0.02]", rep.min, rep.max, p.lower, p.upper)
    })?;
    Ok(format!("{name} in [{:.4}, {:.4}] within [{:.4}, {:.4}]", rep.min, rep.max, p.lower, p.upper))
}

fn permanence() -> Outcome {
    let z = permanence_on("example_z.toml", 500.0)?;
    // The real horizon is 200, so a quarter of it is treated as transient.
    let r = permanence_on("example_r.toml", 50.0)?;
    Ok(format!("{z}; {r}"))
}

// 5. Stability.

fn stability() -> Outcome {
    let cfg = fixture("example_z.toml");
    let grid = cfg.grid().unwrap();
    ensure(cfg.horizon == 2000.0, || format!("integer horizon {}", cfg.horizon))?;
    let x = simulate_from(&cfg, &grid, 0.06);
    let y = simulate_from(&cfg, &grid, 0.20);
    let rep = stability_check(&x, &y, &grid, 0.547, StabilityOptions::default()).map_err(|e| e.to_string())?;
    ensure(rep.impulses_exact, || "V grew across an impulse on the integers".into())?;
    let last = x.len() - 1;
    let gap = (x.state_after(last) - y.state_after(last)).abs();
    ensure(gap < 1e-4, || format!("|x - y| = {gap} at the horizon"))?;

    let cfg = fixture("example_r.toml");
    let grid = cfg.grid().unwrap();
    let x = simulate_from(&cfg, &grid, 0.06);
    let y = simulate_from(&cfg, &grid, 0.20);
    let opts = StabilityOptions {
        transient: 10.0,
        ..StabilityOptions::default()
    };
    let rep = stability_check(&x, &y, &grid, 0.723, opts).map_err(|e| e.to_string())?;
    ensure(rep.impulses_exact, || "V grew across an impulse on the reals".into())?;
    let rate = rep.fitted_rate.ok_or("no dense cells above the noise floor")?;
    ensure(rate >= 0.723 - 0.1, || format!("fitted rate {rate} < 0.623"))?;
    Ok(format!("integer gap {gap:.1e} at t = 2000, real decay rate {rate:.4}"))
}

// 6. Log-derivative sandwich.

/// Counts points where `lo <= (ln f)^Delta <= hi` fails; `reversed` swaps
/// the roles of `f` and `f^sigma` in the bounds.
fn sandwich_violations(values: &[f64], reversed: bool) -> usize {
    let grid = build_grid(&TimeScaleSpec::integers(), 0.0, (values.len() - 1) as f64).unwrap();
    let f = |t: f64, _: f64| values[t as usize];
    let lnf = |t: f64, _: f64| values[t as usize].ln();
    (0..values.len() - 1)
        .filter(|&n| {
            let df = delta_derivative(&f, n as f64, &grid).unwrap();
            let dln = delta_derivative(&lnf, n as f64, &grid).unwrap();
            let (over_sigma, over_f) = (df / values[n + 1], df / values[n]);
            let (lo, hi) = if reversed { (over_f, over_sigma) } else { (over_sigma, over_f) };
            !(lo <= dln && dln <= hi)
        })
        .count()
}

fn log_derivative_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut rising_bad, mut falling_bad, mut falling_points) = (0, 0, 0);
    for i in 0..100 {
        let len = rng.random_range(2..=60usize);
        let mut values = vec![rng.random_range(1e-3..1e3)];
        let increasing = i % 2 == 0;
        for _ in 1..len {
            let ratio = if increasing { rng.random_range(1.001..3.0) } else { rng.random_range(0.2..0.999) };
            values.push(values.last().unwrap() * ratio);
        }
        if increasing {
            rising_bad += sandwich_violations(&values, false);
        } else {
            falling_bad += sandwich_violations(&values, true);
            falling_points += len - 1;
        }
    }
    ensure(rising_bad == 0, || format!("increasing: {rising_bad} points violate the bound"))?;
    ensure(falling_bad == 0, || {
        format!(
            "decreasing: reversed bound fails at {falling_bad}/{falling_points} points \
             (1 - 1/r <= ln r <= r - 1 puts (ln f)^Delta in the unreversed interval; the reversed one is empty)"
        )
    })?;
    Ok("50 increasing and 50 decreasing sequences".into())
}

// 7. Periodic specialization.

fn periodic() -> Outcome {
    let cfg = fixture("periodic_z.toml");
    let grid = cfg.grid().unwrap();
    let traj = simulate_from(&cfg, &grid, cfg.x0);
    let (period, transient) = (10.0, 500.0);
    let window = cfg.horizon - cfg.t0 - transient - period;
    let rep = translation_test(&traj, &[period], 1e-5, window, transient).map_err(|e| e.to_string())?;
    let dev = rep.rows[0].deviation;
    ensure(dev < 1e-5, || format!("sup |x(t + 10) - x(t)| = {dev:e}"))?;
    Ok(format!("sup |x(t + 10) - x(t)| = {dev:.1e} on [{transient}, {}]", rep.window_end))
}

// 8. Determinism.

fn verify_into(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_tscale"))
        .args(["verify", "--config"])
        .arg(config_path("example_z.toml"))
        .arg("--out")
        .arg(dir)
        .args(["--y0", "0.2", "--seed", "7"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.code() == Some(0), || {
        format!("verify exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
    })?;
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let text: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with("wall_time_ms"))
            .flat_map(|l| [l, "\n"])
            .collect();
        files.push((path.file_name().unwrap().to_string_lossy().into_owned(), text));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = verify_into(a.path())?;
    let second = verify_into(b.path())?;
    let names: Vec<&str> = first.iter().map(|f| f.0.as_str()).collect();
    ensure(names == second.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(), || "output file sets differ".into())?;
    for (x, y) in first.iter().zip(&second) {
        ensure(x.1 == y.1, || format!("{} differs between runs", x.0))?;
    }
    Ok(format!("{} identical (wall time excluded)", names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("example constants", Duration::from_secs(1), example_constants),
        ("exponential identities", Duration::from_secs(10), exponential_identities),
        ("comparison oracle", Duration::from_secs(10), comparison_oracle),
        ("permanence", Duration::from_secs(30), permanence),
        ("stability", Duration::from_secs(30), stability),
        ("log-derivative sandwich", Duration::from_secs(2), log_derivative_sandwich),
        ("periodic specialization", Duration::from_secs(10), periodic),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| {
            ensure(elapsed <= budget, || format!("took {elapsed:.2?}, budget {budget:?}"))?;
            Ok(detail)
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why} ({elapsed:.2?})", i + 1);
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
