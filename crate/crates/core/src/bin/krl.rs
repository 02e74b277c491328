//! `krl`: command-line front end of the kinetic relaxation laboratory.
//!
//! Every subcommand writes its artifacts under the output directory and
//! exits with the category code of the first error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use krl::diagnostics::{
    entropy_ledger, micro_split_norms, pattern_reference, sharp_states, single_shock_pointwise, write_reports,
};
use krl::gas::FluidState;
use krl::grids::{DistributionField, SpatialGrid, VelocityGrid};
use krl::harness::sweep::{default_window, final_reference, write_summaries};
use krl::harness::{run_single, run_sweep, setup, ExperimentConfig, PatternKind};
use krl::kinetic::InitialMode;
use krl::profiles::shock::{profile_from_strength, ShockOptions};
use krl::riemann::{solve_riemann, Family, FirstWave, WavePattern};
use krl::{KrlError, Result};

#[derive(Parser)]
#[command(name = "krl", version, about = "Kinetic relaxation laboratory for 1D gas dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML); presets are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated Knudsen numbers (overrides `sweep.kappas`).
    #[arg(long, value_delimiter = ',')]
    kappa: Option<Vec<f64>>,
    /// Wave pattern: scs, rcs or single3.
    #[arg(long)]
    pattern: Option<PatternKind>,
    /// Initial data: sharp or well_prepared.
    #[arg(long)]
    mode: Option<InitialMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a Riemann problem and report the wave pattern.
    Riemann {
        #[command(flatten)]
        common: Common,
        /// Left state `v,u1,theta`; with `--plus` this replaces the configured pattern.
        #[arg(long, value_delimiter = ',', requires = "plus")]
        minus: Option<Vec<f64>>,
        /// Right state `v,u1,theta`.
        #[arg(long, value_delimiter = ',', requires = "minus")]
        plus: Option<Vec<f64>>,
    },
    /// Tabulate a viscous shock profile as CSV.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Shock family, 1 or 3.
        #[arg(long)]
        family: u8,
        /// Volume jump of the shock.
        #[arg(long)]
        delta: f64,
    },
    /// Run the kinetic solver once per Knudsen number.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plateau distance for single-shock pointwise diagnostics.
        #[arg(long, default_value_t = 1.0)]
        plateau_distance: f64,
    },
    /// Knudsen-number sweep with power-law fit of the limit error.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        plateau_distance: f64,
    },
    /// Entropy ledger and micro-part norms of a snapshot.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Snapshot written by `simulate`.
        #[arg(long)]
        snapshot: PathBuf,
        /// Shift history (`shifts.csv`) to evaluate the composite wave at the snapshot time.
        #[arg(long)]
        shifts: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        plateau_distance: f64,
    },
}

fn main() {
    if let Ok(n) = std::env::var("KRL_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("krl: cannot size thread pool: {e}");
                }
            }
            _ => {
                eprintln!("krl: KRL_THREADS must be a positive integer, got `{n}`");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("krl: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Riemann { common, minus, plus } => riemann(&common, minus.as_deref(), plus.as_deref()),
        Command::Profile { common, family, delta } => profile(&common, family, delta),
        Command::Simulate { common, plateau_distance } => simulate(&common, plateau_distance),
        Command::Sweep { common, plateau_distance } => sweep(&common, plateau_distance),
        Command::Diagnose { common, snapshot, shifts, plateau_distance } => {
            diagnose(&common, &snapshot, shifts.as_deref(), plateau_distance)
        }
    }
}

/// Configuration with command-line overrides applied.
fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(c.pattern.unwrap_or(PatternKind::Single3)),
    };
    if let Some(kind) = c.pattern {
        if kind != cfg.pattern.kind {
            cfg.pattern = ExperimentConfig::preset(kind).pattern;
        }
    }
    if let Some(m) = c.mode {
        cfg.solver.mode = m;
    }
    if let Some(k) = &c.kappa {
        cfg.sweep.kappas = k.clone();
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.clone())
}

fn state_from(v: &[f64]) -> Result<FluidState> {
    match v {
        [a, b, c] => Ok(FluidState::planar(*a, *b, *c)),
        _ => Err(KrlError::InvalidInput(format!("a state needs three values v,u1,theta, got {}", v.len()))),
    }
}

fn fmt_state(s: &FluidState) -> String {
    format!("v={} u1={} theta={} p={}", s.v, s.u[0], s.theta, s.pressure())
}

fn pattern_report(p: &WavePattern) -> String {
    let mut r = String::new();
    r.push_str(&format!("minus  {}\n", fmt_state(&p.minus)));
    r.push_str(&format!("lower  {}\n", fmt_state(&p.lower)));
    r.push_str(&format!("upper  {}\n", fmt_state(&p.upper)));
    r.push_str(&format!("plus   {}\n", fmt_state(&p.plus)));
    match p.first {
        FirstWave::Shock { speed } => r.push_str(&format!("wave1  shock speed={speed}\n")),
        FirstWave::Rarefaction { head, tail } => r.push_str(&format!("wave1  rarefaction head={head} tail={tail}\n")),
    }
    r.push_str(&format!("wave3  shock speed={}\n", p.sigma3));
    r.push_str(&format!("delta1 = {}\ndelta_c = {}\ndelta3 = {}\n", p.delta1, p.delta_c, p.delta3));
    r.push_str(&format!("lax = {}\n", p.satisfies_lax()));
    r
}

fn riemann(c: &Common, minus: Option<&[f64]>, plus: Option<&[f64]>) -> Result<()> {
    let cfg = resolve(c)?;
    let pattern = match (minus, plus) {
        (Some(m), Some(p)) => solve_riemann(&state_from(m)?, &state_from(p)?)?,
        _ => cfg.pattern.build()?,
    };
    let text = pattern_report(&pattern);
    let dir = out_dir(&cfg)?;
    std::fs::write(dir.join("riemann.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn profile(c: &Common, family: u8, delta: f64) -> Result<()> {
    let cfg = resolve(c)?;
    let family = match family {
        1 => Family::One,
        3 => Family::Three,
        f => return Err(KrlError::InvalidInput(format!("shock family must be 1 or 3, got {f}"))),
    };
    let outer = state_from(&cfg.pattern.plus)?;
    let t = profile_from_strength(family, &outer, delta, cfg.transport.transport(), ShockOptions::default())?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!("profile_f{}_d{delta}.csv", family.index()));
    let mut w = BufWriter::new(File::create(&path)?);
    // Expected signs of (v', u1', θ') for each family.
    let signs = match family {
        Family::One => [-1.0, -1.0, 1.0],
        Family::Three => [1.0, -1.0, -1.0],
    };
    writeln!(w, "z,v,u1,theta,dv,du1,dtheta,v_sign_ok,u1_sign_ok,theta_sign_ok")?;
    for j in 0..t.len() {
        let d = [t.dv[j], t.du1[j], t.dtheta[j]];
        let ok = |i: usize| u8::from(signs[i] * d[i] > 0.0);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            t.z[j],
            t.v[j],
            t.u1[j],
            t.theta[j],
            d[0],
            d[1],
            d[2],
            ok(0),
            ok(1),
            ok(2)
        )?;
    }
    w.flush()?;
    println!("family {family} delta={delta} speed={}", t.speed);
    println!("left  {}", fmt_state(&t.left));
    println!("right {}", fmt_state(&t.right));
    println!("tail_rate_left = {}", t.tail_decay_rate(-1.0)?);
    println!("tail_rate_right = {}", t.tail_decay_rate(1.0)?);
    println!("ode_residual = {}", t.ode_residual());
    println!("monotone = {}", t.monotonicity_holds());
    println!("wrote {}", path.display());
    Ok(())
}

fn write_final_state(path: &Path, field: &DistributionField, reference: &[FluidState]) -> Result<()> {
    let fluid = field.fluid()?;
    let y = field.space().centers();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "y,v,u1,theta,v_ref,u1_ref,theta_ref")?;
    for ((y, s), r) in y.iter().zip(&fluid.states).zip(reference) {
        writeln!(w, "{},{},{},{},{},{},{}", y, s.v, s.u[0], s.theta, r.v, r.u[0], r.theta)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(c: &Common, plateau_distance: f64) -> Result<()> {
    let cfg = resolve(c)?;
    let root = out_dir(&cfg)?;
    std::fs::write(root.join("config.toml"), cfg.to_text()?)?;
    let mut rows = Vec::new();
    for &k in &cfg.sweep.kappas {
        let mut run_cfg = cfg.clone();
        let dir = root.join(format!("k{k}"));
        std::fs::create_dir_all(&dir)?;
        run_cfg.output.dir = dir.clone();
        let mut stderr = std::io::stderr();
        let progress: Option<&mut dyn Write> = (cfg.output.progress_stride > 0).then_some(&mut stderr as &mut dyn Write);
        let out = run_single(&run_cfg, k, None, plateau_distance, progress)?;
        let mut f = File::create(dir.join("shifts.csv"))?;
        out.shifts.write_csv(&mut f)?;
        let mut f = File::create(dir.join("diagnostics.csv"))?;
        write_reports(&out.ledger, &mut f)?;
        write_final_state(&dir.join("final_state.csv"), &out.trajectory.field, &final_reference(&out))?;
        let mut snap = BufWriter::new(File::create(dir.join("final.krl"))?);
        out.trajectory.field.write_snapshot(&mut snap)?;
        snap.flush()?;
        let s = &out.summary;
        println!(
            "kappa={k} cells={} steps={} l2_error={} X1={} X3={} TV1={} TV3={} plateau={} wall={:.1}s",
            s.cells, s.steps, s.l2_error, s.x1, s.x3, s.tv1, s.tv3, s.plateau, s.wall_seconds
        );
        rows.push(out.summary);
    }
    write_summaries(&rows, &root.join("summary.csv"))?;
    Ok(())
}

fn sweep(c: &Common, plateau_distance: f64) -> Result<()> {
    let cfg = resolve(c)?;
    let dir = out_dir(&cfg)?;
    std::fs::write(dir.join("config.toml"), cfg.to_text()?)?;
    let mut stderr = std::io::stderr();
    let r = run_sweep(&cfg, plateau_distance, Some(&mut stderr))?;
    r.write(&dir)?;
    for s in r.summaries() {
        println!(
            "kappa={} l2_error={} tv1={} tv3={} shift_l1={} plateau={}",
            s.kappa, s.l2_error, s.tv1, s.tv3, s.shift_l1, s.plateau
        );
    }
    if let Some(f) = r.l2_fit {
        println!("exponent = {} +/- {} (prefactor {})", f.exponent, f.exponent_stderr, f.prefactor);
    }
    if let Some(first) = r.failures.first() {
        for f in &r.failures {
            eprintln!("krl: run at kappa={} failed: {}", f.kappa, f.error);
        }
        return Err(KrlError::CorruptedState {
            time: f64::NAN,
            detail: format!("{} of {} runs failed, first at kappa={}", r.failures.len(), cfg.sweep.kappas.len(), first.kappa),
        });
    }
    Ok(())
}

/// Shifts at time `t` from a `shifts.csv` history, linearly interpolated.
fn shifts_at(path: &Path, t: f64) -> Result<[f64; 2]> {
    let mut r = csv::Reader::from_path(path).map_err(|e| KrlError::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<(f64, [f64; 2])> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| KrlError::InvalidInput(format!("{}: {e}", path.display())))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| KrlError::InvalidInput(format!("{}: malformed row", path.display())))
        };
        rows.push((get(0)?, [get(1)?, get(3)?]));
    }
    let Some(last) = rows.last() else {
        return Err(KrlError::InvalidInput(format!("{}: empty shift history", path.display())));
    };
    if t >= last.0 {
        return Ok(last.1);
    }
    let i = rows.partition_point(|r| r.0 <= t).max(1);
    let ((t0, a), (t1, b)) = (rows[i - 1], rows[i]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    Ok([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])])
}

fn diagnose(c: &Common, snapshot: &Path, shifts: Option<&Path>, plateau_distance: f64) -> Result<()> {
    let cfg = resolve(c)?;
    let kappa = match cfg.sweep.kappas.as_slice() {
        [k] => *k,
        _ => return Err(KrlError::InvalidInput("diagnose needs exactly one --kappa".into())),
    };
    let (profiles, initial, solver, _) = setup(&cfg, kappa)?;
    let space: Arc<SpatialGrid> = initial.space().clone();
    let velocity: Arc<VelocityGrid> = initial.velocity().clone();
    let field = DistributionField::read_snapshot(BufReader::new(File::open(snapshot)?), space, velocity)?;
    let t = field.time;
    let x = match shifts {
        Some(p) => shifts_at(p, t)?,
        None => [0.0; 2],
    };
    let y = field.space().centers();
    let m = pattern_reference(&profiles, field.velocity())?;
    let composite = profiles.assemble(&y, t, x)?;
    let ledger = entropy_ledger(&field, &profiles, &composite, &solver, &m)?;
    let norms = micro_split_norms(&field, &solver, &m)?;
    let dir = out_dir(&cfg)?;
    let mut f = File::create(dir.join("diagnose.csv"))?;
    write_reports(std::slice::from_ref(&ledger), &mut f)?;
    write_final_state(&dir.join("diagnose_state.csv"), &field, &sharp_states(&profiles, &y, t, x))?;
    let mut text = format!(
        "time = {t}\nshifts = {} {}\nweighted_entropy = {}\nenergy = {}\nnorm_G = {}\nnorm_G_ce = {}\nnorm_Pi1 = {}\n",
        x[0],
        x[1],
        ledger.weighted_entropy,
        ledger.energy(),
        norms[0],
        norms[1],
        norms[2]
    );
    let single = profiles.contact.is_none() && profiles.rarefaction.is_none() && (profiles.has_shock(0) != profiles.has_shock(1));
    if single {
        let p = single_shock_pointwise(&field, &profiles, t, x, default_window(plateau_distance), &m)?;
        text.push_str(&format!("plateau = {}\npeak = {}\ntail_rate = {}\n", p.plateau, p.peak, p.rate));
    }
    std::fs::write(dir.join("diagnose.txt"), &text)?;
    print!("{text}");
    Ok(())
}
