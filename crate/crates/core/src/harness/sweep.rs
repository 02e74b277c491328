//! Single runs and Knudsen-number sweeps.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    entropy_ledger, initial_functional, pattern_reference, sharp_states, single_shock_pointwise, EntropyReport,
    LimitErrorAccumulator, PointwiseReport, PointwiseWindow,
};
use crate::error::{KrlError, Result};
use crate::grids::{DistributionField, SpatialGrid, VelocityGrid};
use crate::harness::config::ExperimentConfig;
use crate::kinetic::{prepare_initial_data, run, Observer, RunOptions, SolverConfig, StepView, Trajectory};
use crate::modulation::{ProfileSettings, ShiftState, ShiftTracker, WaveProfiles};

/// Computational domain for one Knudsen number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub left: f64,
    pub right: f64,
    pub cells: usize,
}

impl Domain {
    pub fn dx(&self) -> f64 {
        (self.right - self.left) / self.cells as f64
    }
}

/// Domain covering every wave up to `end_time` plus `tail_efolds` e-folding lengths of each layer,
/// with `dx = κ / cells_per_kappa` and end points on multiples of `dx`.
pub fn domain_for(profiles: &WaveProfiles, end_time: f64, tail_efolds: f64, cells_per_kappa: f64) -> Result<Domain> {
    let k = profiles.kappa;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for (i, table) in [&profiles.shock1, &profiles.shock3].into_iter().enumerate() {
        if let Some(t) = table {
            let end = profiles.shock_speed(i) * end_time;
            lo = lo.min(end.min(0.0) - tail_efolds * k / t.tail_decay_rate(-1.0)?);
            hi = hi.max(end.max(0.0) + tail_efolds * k / t.tail_decay_rate(1.0)?);
        }
    }
    if let Some(c) = &profiles.contact {
        let half = (tail_efolds / c.gaussian_tail_constant()?).sqrt() * (k * (k + end_time)).sqrt();
        lo = lo.min(-half);
        hi = hi.max(half);
    }
    if let (Some(_), crate::riemann::FirstWave::Rarefaction { head, .. }) = (&profiles.rarefaction, profiles.pattern.first) {
        lo = lo.min(head * end_time - tail_efolds * k);
    }
    let dx = k / cells_per_kappa;
    let left = (lo / dx).floor() * dx;
    let right = (hi / dx).ceil() * dx;
    let cells = ((right - left) / dx).round() as usize;
    if cells < 8 {
        return Err(KrlError::invalid("domain has fewer than 8 cells"));
    }
    Ok(Domain { left, right, cells })
}

/// Shift trajectory `X⁰` used as the reference for the limit error.
#[derive(Debug, Clone)]
pub struct ReferenceShift {
    times: Vec<f64>,
    shifts: Vec<[f64; 2]>,
}

impl ReferenceShift {
    pub fn from_state(s: &ShiftState) -> Self {
        Self { times: s.history.iter().map(|r| r.time).collect(), shifts: s.history.iter().map(|r| r.shift).collect() }
    }

    /// Linear interpolation, constant beyond the ends.
    pub fn at(&self, t: f64) -> [f64; 2] {
        let n = self.times.len();
        if n == 0 {
            return [0.0; 2];
        }
        if t <= self.times[0] {
            return self.shifts[0];
        }
        if t >= self.times[n - 1] {
            return self.shifts[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t).max(1);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        let (a, b) = (self.shifts[i - 1], self.shifts[i]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }
}

struct RunObserver<'a> {
    tracker: ShiftTracker,
    own: LimitErrorAccumulator,
    reference: LimitErrorAccumulator,
    x0: Option<&'a ReferenceShift>,
    ledger_stride: usize,
    ledger: Vec<EntropyReport>,
    m_sharp: Vec<f64>,
}

impl Observer for RunObserver<'_> {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        self.tracker.advance(view.time, view.dt, view.states)?;
        let shifts = self.tracker.state.shift;
        let p = &self.tracker.profiles;
        self.own.push_view(view, p, shifts)?;
        if let Some(x0) = self.x0 {
            self.reference.push_view(view, p, x0.at(view.time))?;
        }
        let sample = view.step == 0 || view.last || (self.ledger_stride > 0 && view.step.is_multiple_of(self.ledger_stride));
        if sample {
            let c = self.tracker.composite.as_ref().ok_or_else(|| KrlError::invalid("composite not assembled"))?;
            self.ledger.push(entropy_ledger(view.field, p, c, view.config, &self.m_sharp)?);
        }
        Ok(())
    }
}

/// Numbers reported for one Knudsen number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kappa: f64,
    pub cells: usize,
    pub dx: f64,
    pub steps: usize,
    /// `∫₀^T ∬ |f − M_{X⁰}[U^E]|²`.
    pub l2_error: f64,
    /// Same integral against the run's own shifts.
    pub l2_error_own: f64,
    pub tv1: f64,
    pub tv3: f64,
    pub x1: f64,
    pub x3: f64,
    pub min_separation: f64,
    /// `‖X^κ − X⁰‖_{L¹(0,T)}` summed over both shifts (0 for the reference run itself).
    pub shift_l1: f64,
    /// Away-from-layer plateau at the final time (single-shock runs only; NaN otherwise).
    pub plateau: f64,
    /// Fitted tail rate `c` (single-shock runs only; NaN otherwise).
    pub tail_rate: f64,
    /// Initial-data functional divided by `κ`.
    pub initial_functional: f64,
    pub max_mass_drift: f64,
    pub max_conservation_drift: f64,
    /// Not written to CSV, so that reruns produce identical files.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub shifts: ShiftState,
    pub ledger: Vec<EntropyReport>,
    pub pointwise: Option<PointwiseReport>,
    pub trajectory: Trajectory,
    pub profiles: WaveProfiles,
}

/// Plateau window used for single-shock runs: the plateau is measured at
/// distance ≥ `plateau_distance`, the tail fit over `[10, 60]κ`.
pub fn default_window(plateau_distance: f64) -> PointwiseWindow {
    PointwiseWindow { plateau_distance, fit_lo: 10.0, fit_hi: 60.0 }
}

/// Build profiles, grids, solver configuration and initial data for one `κ`.
pub fn setup(
    cfg: &ExperimentConfig,
    kappa: f64,
) -> Result<(WaveProfiles, DistributionField, SolverConfig, Domain)> {
    cfg.validate()?;
    let pattern = cfg.pattern.build()?;
    let settings = ProfileSettings {
        transport: cfg.transport.transport(),
        rarefaction_offset: Some(cfg.solver.rarefaction_offset * kappa),
        ..Default::default()
    };
    let profiles = WaveProfiles::build(&pattern, kappa, &settings)?;
    let domain = domain_for(&profiles, cfg.solver.end_time, cfg.grid.tail_efolds, cfg.grid.cells_per_kappa)?;
    let space = Arc::new(SpatialGrid::new(domain.left, domain.right, domain.cells)?);
    let velocity = Arc::new(VelocityGrid::new([0.0; 3], cfg.grid.velocity_radius, cfg.grid.velocity_nodes)?);
    let mut solver = SolverConfig::new(kappa, cfg.solver.end_time, pattern.minus, pattern.plus)?;
    solver.cfl = cfg.solver.cfl;
    solver.collision_scale = cfg.solver.collision_scale;
    solver.strang = cfg.solver.strang;
    solver.track_entropy = false;
    let field = prepare_initial_data(&profiles, space, velocity, cfg.solver.mode, &solver)?;
    Ok((profiles, field, solver, domain))
}

/// Run one Knudsen number; `x0` is the reference shift for the limit error (own shifts if `None`).
pub fn run_single(
    cfg: &ExperimentConfig,
    kappa: f64,
    x0: Option<&ReferenceShift>,
    plateau_distance: f64,
    progress: Option<&mut dyn std::io::Write>,
) -> Result<RunOutput> {
    let start = Instant::now();
    let (profiles, field, solver, domain) = setup(cfg, kappa)?;
    let m_sharp = pattern_reference(&profiles, field.velocity())?;
    let init = initial_functional(&field, &profiles, &solver, &m_sharp)?;
    let y = field.space().centers();
    let mut obs = RunObserver {
        tracker: ShiftTracker::new(profiles.clone(), y.clone(), field.space().dx()),
        own: LimitErrorAccumulator::default(),
        reference: LimitErrorAccumulator::default(),
        x0,
        ledger_stride: cfg.output.diagnostic_stride,
        ledger: Vec::new(),
        m_sharp: m_sharp.clone(),
    };
    let snapshots = (cfg.output.snapshot_stride > 0)
        .then(|| (cfg.output.dir.join(format!("snapshots_k{kappa}")), cfg.output.snapshot_stride));
    let opts = RunOptions { progress, progress_stride: cfg.output.progress_stride.max(1), snapshots, max_steps: None };
    let trajectory = {
        let mut observers: [&mut dyn Observer; 1] = [&mut obs];
        run(field, &solver, &mut observers, opts)?
    };
    let shifts = obs.tracker.state.clone();
    let t_end = trajectory.field.time;
    let single = profiles.contact.is_none() && profiles.rarefaction.is_none() && (profiles.has_shock(0) != profiles.has_shock(1));
    let pointwise = if single {
        Some(single_shock_pointwise(&trajectory.field, &profiles, t_end, shifts.shift, default_window(plateau_distance), &m_sharp)?)
    } else {
        None
    };
    let l2_own = obs.own.integral;
    let shift_l1 = x0.map_or(0.0, |r| shift_distance(&shifts, r));
    let summary = RunSummary {
        kappa,
        cells: domain.cells,
        dx: domain.dx(),
        steps: trajectory.steps,
        l2_error: if x0.is_some() { obs.reference.integral } else { l2_own },
        l2_error_own: l2_own,
        tv1: shifts.total_variation[0],
        tv3: shifts.total_variation[1],
        x1: shifts.shift[0],
        x3: shifts.shift[1],
        min_separation: shifts.min_separation_margin(),
        shift_l1,
        plateau: pointwise.as_ref().map_or(f64::NAN, |p| p.plateau),
        tail_rate: pointwise.as_ref().map_or(f64::NAN, |p| p.rate),
        initial_functional: init.normalized(kappa),
        max_mass_drift: trajectory.max_mass_drift,
        max_conservation_drift: trajectory.max_conservation_drift,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { summary, shifts, ledger: obs.ledger, pointwise, trajectory, profiles })
}

/// Trapezoidal `∫ |X₁ − X₁⁰| + |X₃ − X₃⁰| dt` over the recorded history.
pub fn shift_distance(s: &ShiftState, reference: &ReferenceShift) -> f64 {
    let gap = |t: f64, x: [f64; 2]| {
        let r = reference.at(t);
        (x[0] - r[0]).abs() + (x[1] - r[1]).abs()
    };
    s.history.windows(2).map(|w| 0.5 * (w[1].time - w[0].time) * (gap(w[0].time, w[0].shift) + gap(w[1].time, w[1].shift))).sum()
}

/// Least-squares fit `value ≈ prefactor · κ^exponent` in log–log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Largest `|ln value − ln fit|`.
    pub max_log_residual: f64,
    /// Standard error of the exponent (NaN for two points).
    pub exponent_stderr: f64,
}

pub fn fit_power_law(kappas: &[f64], values: &[f64]) -> Result<PowerFit> {
    if kappas.len() != values.len() || kappas.len() < 2 {
        return Err(KrlError::invalid("power-law fit needs at least two matching points"));
    }
    if kappas.iter().chain(values).any(|x| !(*x > 0.0)) {
        return Err(KrlError::invalid("power-law fit needs positive κ and values"));
    }
    let pts: Vec<(f64, f64)> = kappas.iter().zip(values).map(|(k, v)| (k.ln(), v.ln())).collect();
    let (slope, icpt) = crate::diagnostics::linear_fit(&pts);
    let max_log_residual = pts.iter().map(|(x, y)| (y - (icpt + slope * x)).abs()).fold(0.0, f64::max);
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sse: f64 = pts.iter().map(|(x, y)| (y - (icpt + slope * x)).powi(2)).sum();
    let exponent_stderr = if pts.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(PowerFit { exponent: slope, prefactor: icpt.exp(), max_log_residual, exponent_stderr })
}

/// A run that aborted during a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub kappa: f64,
    pub error: String,
}

/// A finished sweep, successful runs ordered as configured (decreasing `κ`).
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<RunOutput>,
    pub failures: Vec<SweepFailure>,
    /// Fit of the L² error over the successful runs; `None` with fewer than two.
    pub l2_fit: Option<PowerFit>,
}

impl SweepResult {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }

    /// `max TV / min TV` over runs for shock `i` (0 or 1).
    pub fn tv_ratio(&self, i: usize) -> f64 {
        let tv: Vec<f64> = self.runs.iter().map(|r| if i == 0 { r.summary.tv1 } else { r.summary.tv3 }).collect();
        let max = tv.iter().cloned().fold(0.0, f64::max);
        let min = tv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_summaries(&self.summaries(), &dir.join("sweep.csv"))?;
        for r in &self.runs {
            let k = r.summary.kappa;
            let mut f = std::fs::File::create(dir.join(format!("shifts_k{k}.csv")))?;
            r.shifts.write_csv(&mut f)?;
            let mut f = std::fs::File::create(dir.join(format!("diagnostics_k{k}.csv")))?;
            crate::diagnostics::write_reports(&r.ledger, &mut f)?;
        }
        let mut text = String::new();
        match &self.l2_fit {
            Some(f) => text.push_str(&format!(
                "exponent = {}\nexponent_stderr = {}\nprefactor = {}\nmax_log_residual = {}\n",
                f.exponent, f.exponent_stderr, f.prefactor, f.max_log_residual
            )),
            None => text.push_str("exponent = nan\n"),
        }
        for f in &self.failures {
            text.push_str(&format!("failed kappa = {} error = {:?}\n", f.kappa, f.error));
        }
        std::fs::write(dir.join("fit.txt"), text)?;
        Ok(())
    }
}

/// Run every `κ` of the sweep, smallest first so its shifts serve as `X⁰`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    plateau_distance: f64,
    mut progress: Option<&mut dyn std::io::Write>,
) -> Result<SweepResult> {
    cfg.validate()?;
    let kappas = &cfg.sweep.kappas;
    if kappas.len() < 3 {
        return Err(KrlError::Config("a sweep needs at least three κ values".into()));
    }
    let mut runs: Vec<RunOutput> = Vec::with_capacity(kappas.len());
    let mut failures = Vec::new();
    let mut x0: Option<ReferenceShift> = None;
    for &k in kappas.iter().rev() {
        let sink = progress.as_mut().map(|w| &mut **w as &mut dyn std::io::Write);
        let out = match run_single(cfg, k, x0.as_ref(), plateau_distance, sink) {
            Ok(out) => out,
            Err(e) => {
                if let Some(w) = progress.as_mut() {
                    writeln!(w, "kappa={k} failed: {e}")?;
                }
                failures.push(SweepFailure { kappa: k, error: e.to_string() });
                continue;
            }
        };
        if let Some(w) = progress.as_mut() {
            let s = &out.summary;
            writeln!(w, "kappa={} cells={} steps={} l2_error={} wall={:.1}s", k, s.cells, s.steps, s.l2_error, s.wall_seconds)?;
        }
        if x0.is_none() {
            x0 = Some(ReferenceShift::from_state(&out.shifts));
        }
        runs.push(out);
    }
    runs.reverse();
    let ks: Vec<f64> = runs.iter().map(|r| r.summary.kappa).collect();
    let es: Vec<f64> = runs.iter().map(|r| r.summary.l2_error).collect();
    let l2_fit = if runs.len() >= 2 { Some(fit_power_law(&ks, &es)?) } else { None };
    failures.reverse();
    Ok(SweepResult { runs, failures, l2_fit })
}

/// Write run summaries as CSV.
pub fn write_summaries(rows: &[RunSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read run summaries written by [`write_summaries`].
pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> KrlError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KrlError::Io(io),
        other => KrlError::Config(format!("csv: {other:?}")),
    }
}

/// Sharp reference states at the end of a run, for plotting.
pub fn final_reference(out: &RunOutput) -> Vec<crate::gas::FluidState> {
    let y = out.trajectory.field.space().centers();
    sharp_states(&out.profiles, &y, out.trajectory.field.time, out.shifts.shift)
}
