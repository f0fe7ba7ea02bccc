//! `tscale`: simulate, verify and compare impulsive dynamic equations on time
//! scales from a TOML configuration.
//!
//! Exit status: 0 when every check passes, 1 when the run completed but some
//! check failed, 2 on errors (bad config, divergence, I/O).

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tscale::analysis::{
    permanence_check, stability_check, StabilityOptions, DEFAULT_TRANSIENT_FRACTION,
};
use tscale::comparison::{
    default_tolerance, verify_bound, Direction, Envelope, GronwallEnvelope, LinearEnvelope,
    LinearImpulsiveData, LogisticEnvelope,
};
use tscale::config::RunConfig;
use tscale::impulse::JumpKind;
use tscale::model::{check_hypotheses, ModelConfig, YForm};
use tscale::report::KvBlock;
use tscale::solver::{simulate, Trajectory};
use tscale::timescale::{build_grid, TimeScaleSpec};

#[derive(Parser)]
#[command(name = "tscale", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the model and write trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Integrate the log-density `x` or the density `y = e^x`.
        #[arg(long, value_enum, default_value_t = Form::X)]
        form: Form,
        /// Refuse to simulate unless every hypothesis holds.
        #[arg(long)]
        enforce_hypotheses: bool,
    },
    /// Check the hypotheses, then permanence and stability on simulations.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Transient excluded from the permanence check (default: a quarter
        /// of the horizon).
        #[arg(long)]
        transient: Option<f64>,
        /// Second initial value for the stability pair (default: x*).
        #[arg(long)]
        y0: Option<f64>,
        /// Number of random initial pairs in [x_*, x*] for the uniformity sweep.
        #[arg(long, default_value_t = 4)]
        sweep: usize,
    },
    /// Evaluate a comparison envelope against the [comparison] system.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        envelope: EnvelopeKind,
        #[arg(long, value_enum, default_value_t = Dir::Upper)]
        direction: Dir,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Override the step of a real or union time scale.
    #[arg(long)]
    step: Option<f64>,
    /// Seed for randomized sweeps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check tolerance (permanence for verify, pointwise bound for compare).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    X,
    Y,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvelopeKind {
    /// General linear envelope, exact for the equality system.
    Gronwall,
    /// Constant-coefficient linear envelope with product bounds.
    Linear,
    /// Logistic envelope for `x^Delta <= x^sigma (b - a x)`.
    Logistic,
    /// Lower logistic envelope for `x^Delta >= x (b - a x)`.
    LogisticShifted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Upper,
    Lower,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Self {
        match d {
            Dir::Upper => Direction::Upper,
            Dir::Lower => Direction::Lower,
        }
    }
}

struct Run {
    out: PathBuf,
    outputs: Vec<&'static str>,
    manifest: KvBlock,
}

impl Run {
    fn new(command: &str, common: &Common) -> Result<Self> {
        fs::create_dir_all(&common.out)
            .with_context(|| format!("creating {}", common.out.display()))?;
        let mut manifest = KvBlock::new();
        manifest
            .text("command", command)
            .text("config", common.config.display().to_string())
            .int("seed", common.seed as usize);
        Ok(Run {
            out: common.out.clone(),
            outputs: Vec::new(),
            manifest,
        })
    }

    fn write(&mut self, name: &'static str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let path = self.out.join(name);
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name);
        Ok(())
    }

    fn finish(mut self, pass: bool, started: Instant) -> Result<bool> {
        self.outputs.push("manifest.txt");
        self.manifest
            .text("outputs", self.outputs.join(","))
            .flag("pass", pass)
            .int("wall_time_ms", started.elapsed().as_millis() as usize);
        let path = self.out.join("manifest.txt");
        fs::write(&path, self.manifest.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(pass)
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut rc = RunConfig::load(&common.config)?;
    if let Some(h) = common.horizon {
        rc.set_horizon(h);
    }
    if let Some(s) = common.step {
        rc.set_step(s)?;
    }
    Ok(rc)
}

fn resolved(run: &mut Run, rc: &RunConfig) -> Result<()> {
    run.manifest
        .num("t0", rc.t0())
        .num("horizon", rc.horizon())
        .text("timescale", rc.timescale()?.to_string());
    Ok(())
}

fn cmd_simulate(common: Common, form: Form, enforce: bool) -> Result<bool> {
    let started = Instant::now();
    let rc = load(&common)?;
    let cfg = rc.model()?;
    let mut run = Run::new("simulate", &common)?;
    resolved(&mut run, &rc)?;
    let grid = cfg.grid()?;
    if enforce {
        let rep = check_hypotheses(&cfg)?;
        if !rep.all_pass() {
            let text = rep.kv().render();
            run.write("hypotheses.txt", |w| {
                use std::io::Write;
                w.write_all(text.as_bytes())
            })?;
            eprintln!("hypotheses fail; see hypotheses.txt");
            return run.finish(false, started);
        }
    }
    let traj = match form {
        Form::X => {
            run.manifest.text("form", "x");
            simulate(cfg.rhs_x(), &cfg.schedule, &grid, cfg.x0, cfg.t0)?
        }
        Form::Y => {
            let yform = y_form(&cfg.timescale)?;
            run.manifest.text("form", "y");
            let schedule = if cfg.schedule.is_empty() {
                cfg.schedule.clone()
            } else {
                cfg.schedule.to_multiply_y()?
            };
            simulate(cfg.rhs_y(yform), &schedule, &grid, cfg.x0.exp(), cfg.t0)?
        }
    };
    run.manifest.int("points", traj.len()).int("impulses", traj.jumps().len());
    run.write("trajectory.csv", |w| traj.write_csv(w))?;
    run.finish(true, started)
}

fn y_form(spec: &TimeScaleSpec) -> Result<YForm> {
    match spec {
        TimeScaleSpec::IntegerLattice { spacing, .. } if *spacing == 1.0 => Ok(YForm::Discrete),
        TimeScaleSpec::UniformRealGrid { .. } => Ok(YForm::Continuous),
        other => bail!("the density form is defined on unit lattices and the real line, not {other}"),
    }
}

fn cmd_verify(common: Common, transient: Option<f64>, y0: Option<f64>, sweep: usize) -> Result<bool> {
    let started = Instant::now();
    let rc = load(&common)?;
    let cfg = rc.model()?;
    let mut run = Run::new("verify", &common)?;
    resolved(&mut run, &rc)?;
    let grid = cfg.grid()?;
    let span = cfg.horizon - cfg.t0;
    let transient = transient.unwrap_or(DEFAULT_TRANSIENT_FRACTION * span);
    let tol = common.tol.unwrap_or(0.02);
    run.manifest.num("transient", transient).num("tol", tol).int("sweep", sweep);

    let mut errors: Vec<String> = Vec::new();
    let mut report = String::new();
    writeln!(report, "[config]")?;
    report.push_str(rc.text());
    if !rc.text().ends_with('\n') {
        report.push('\n');
    }

    let hyp = check_hypotheses(&cfg)?;
    writeln!(report, "[hypotheses]")?;
    report.push_str(&hyp.kv().render());
    let mut pass = hyp.all_pass();

    let x = simulate(cfg.rhs_x(), &cfg.schedule, &grid, cfg.x0, cfg.t0);
    let x = match x {
        Ok(x) => {
            run.write("trajectory.csv", |w| x.write_csv(w))?;
            Some(x)
        }
        Err(e) => {
            errors.push(format!("simulation: {e}"));
            None
        }
    };

    writeln!(report, "[permanence]")?;
    match (&x, hyp.permanence) {
        (Some(x), Some(p)) => match permanence_check(x, p.lower, p.upper, transient, tol) {
            Ok(rep) => {
                report.push_str(&rep.kv().render());
                pass &= rep.pass;
            }
            Err(e) => errors.push(format!("permanence: {e}")),
        },
        (_, None) => errors.push("permanence: bounds undefined because (H4) fails".into()),
        (None, _) => errors.push("permanence: no trajectory".into()),
    }

    writeln!(report, "[stability]")?;
    match (&x, hyp.permanence, hyp.gamma) {
        (Some(x), Some(p), Some(gamma)) => {
            let y0 = y0.unwrap_or(p.upper);
            writeln!(report, "y0 = {}", tscale::report::fmt17(y0))?;
            match stability_pair(&cfg, &grid, x, y0, gamma) {
                Ok(rep) => {
                    report.push_str(&rep.kv().render());
                    run.write("stability.csv", |w| rep.write_csv(w))?;
                    pass &= rep.pass;
                }
                Err(e) => errors.push(format!("stability: {e}")),
            }

            writeln!(report, "[sweep]")?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            let mut worst_gap: f64 = 0.0;
            let mut all = true;
            for i in 0..sweep {
                let a = rng.random_range(p.lower..=p.upper);
                let b = rng.random_range(p.lower..=p.upper);
                let res = simulate(cfg.rhs_x(), &cfg.schedule, &grid, a, cfg.t0)
                    .map_err(anyhow::Error::from)
                    .and_then(|xa| stability_pair(&cfg, &grid, &xa, b, gamma));
                match res {
                    Ok(rep) => {
                        writeln!(
                            report,
                            "pair.{i} = {} {} pass={} final_gap={}",
                            tscale::report::fmt17(a),
                            tscale::report::fmt17(b),
                            rep.pass,
                            tscale::report::fmt17(rep.final_gap)
                        )?;
                        worst_gap = worst_gap.max(rep.final_gap);
                        all &= rep.pass;
                    }
                    Err(e) => errors.push(format!("sweep pair {i}: {e}")),
                }
            }
            writeln!(report, "worst_final_gap = {}", tscale::report::fmt17(worst_gap))?;
            writeln!(report, "pass = {all}")?;
            pass &= all;
        }
        _ => errors.push("stability: gamma undefined".into()),
    }

    writeln!(report, "[errors]")?;
    for (i, e) in errors.iter().enumerate() {
        writeln!(report, "error.{i} = {e}")?;
    }
    pass &= errors.is_empty();
    writeln!(report, "[result]")?;
    writeln!(report, "pass = {pass}")?;
    run.write("hypotheses.txt", |w| {
        use std::io::Write;
        w.write_all(report.as_bytes())
    })?;
    for e in &errors {
        eprintln!("{e}");
    }
    run.finish(pass, started)
}

fn stability_pair(
    cfg: &ModelConfig,
    grid: &tscale::timescale::TimeScaleGrid,
    x: &Trajectory,
    y0: f64,
    gamma: f64,
) -> Result<tscale::analysis::StabilityReport> {
    let y = simulate(cfg.rhs_x(), &cfg.schedule, grid, y0, cfg.t0)?;
    Ok(stability_check(x, &y, grid, gamma, StabilityOptions::default())?)
}

fn cmd_compare(common: Common, kind: EnvelopeKind, dir: Dir) -> Result<bool> {
    let started = Instant::now();
    let rc = load(&common)?;
    let cmp = rc.comparison()?;
    let mut run = Run::new("compare", &common)?;
    resolved(&mut run, &rc)?;
    let schedule = rc.schedule()?;
    if !schedule.is_empty() && schedule.kind() != JumpKind::AffineLinear {
        bail!("comparison systems take affine impulses (kind = \"affine\")");
    }
    let spec = rc.timescale()?;
    let grid = build_grid(&spec, rc.t0(), rc.horizon())?;
    let inside: Vec<f64> = schedule
        .instants()
        .iter()
        .copied()
        .filter(|&t| t > rc.t0() && t <= grid.end())
        .collect();
    let grid = grid.with_instants(&inside)?;
    let data = LinearImpulsiveData::new(cmp.p.clone(), cmp.q.clone(), &schedule, &grid, rc.t0())?;
    let direction = Direction::from(dir);
    // Slack pushes the trajectory strictly inside the envelope.
    let slack = match direction {
        Direction::Upper => -cmp.slack,
        Direction::Lower => cmp.slack,
    };
    let tol = common.tol.unwrap_or_else(|| default_tolerance(&grid));
    run.manifest
        .text(
            "envelope",
            match kind {
                EnvelopeKind::Gronwall => "gronwall",
                EnvelopeKind::Linear => "linear",
                EnvelopeKind::Logistic => "logistic",
                EnvelopeKind::LogisticShifted => "logistic-shifted",
            },
        )
        .text(
            "direction",
            match direction {
                Direction::Upper => "upper",
                Direction::Lower => "lower",
            },
        )
        .num("tol", tol)
        .num("alpha", data.alpha())
        .num("beta", data.beta());

    let (p, q) = (&cmp.p, &cmp.q);
    let traj = match kind {
        EnvelopeKind::Gronwall | EnvelopeKind::Linear => {
            let f = |t: f64, x: f64| p.eval(t) * x + q.eval(t) + slack;
            simulate(f, &schedule, &grid, cmp.x0, rc.t0())?
        }
        EnvelopeKind::Logistic => {
            let (a, b) = (data.a()?, data.b()?);
            // x^sigma (b - a x) solved for x^Delta: x (b - a x) / (1 - mu (b - a x)).
            let f = |t: f64, x: f64| {
                let g = b - a * x;
                x * g / (1.0 - grid.mu_or_zero(t) * g) + slack
            };
            simulate(f, &schedule, &grid, cmp.x0, rc.t0())?
        }
        EnvelopeKind::LogisticShifted => {
            if matches!(direction, Direction::Upper) {
                bail!("the shifted logistic envelope is a lower bound; use --direction lower");
            }
            let (a, b) = (data.a()?, data.b()?);
            let f = |_: f64, x: f64| x * (b - a * x) + slack;
            simulate(f, &schedule, &grid, cmp.x0, rc.t0())?
        }
    };
    let env: Box<dyn Envelope + '_> = match kind {
        EnvelopeKind::Gronwall => Box::new(GronwallEnvelope::new(&data, cmp.x0, &grid)?),
        EnvelopeKind::Linear => Box::new(LinearEnvelope::new(&data, cmp.x0, &grid, direction)?),
        EnvelopeKind::Logistic => Box::new(LogisticEnvelope::new(&data, cmp.x0, &grid, direction)?),
        EnvelopeKind::LogisticShifted => Box::new(LogisticEnvelope::shifted(&data, cmp.x0, &grid)?),
    };
    let rep = verify_bound(&traj, env.as_ref(), direction, tol)?;
    run.manifest
        .int("violations", rep.violation_count)
        .num("min_gap", rep.min_gap);
    run.write("trajectory.csv", |w| traj.write_csv(w))?;
    run.write("bounds.csv", |w| rep.write_csv(w))?;
    run.finish(rep.pass, started)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            form,
            enforce_hypotheses,
        } => cmd_simulate(common, form, enforce_hypotheses),
        Command::Verify {
            common,
            transient,
            y0,
            sweep,
        } => cmd_verify(common, transient, y0, sweep),
        Command::Compare {
            common,
            envelope,
            direction,
        } => cmd_compare(common, envelope, direction),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
