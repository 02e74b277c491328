//! Time integrator for the Lagrangian BGK equation
//! `f_t + ((ξ₁−u₁)/v) f_x = ν(M[U_f] − f)`, `ν = ν₀ ρ√θ/κ`.
//!
//! The scheme evolves `g = v f` in conservation form,
//! `g_t + ((ξ₁ − u₁) f)_x = v ν (M − f)`, together with `v_t = u_{1x}`.
//! At every cell face the interface velocity `u*` is the root of the upwind
//! mass flux `Σ_k w (ξ₁−u*) f^{up}`, so `∫ g dξ = 1` is preserved and the
//! updated `f` is a per-velocity convex combination of its three upwind
//! neighbours. Relaxation uses the exact exponential toward a
//! moment-matched discrete Maxwellian. Both stages conserve
//! `Σ dx (v, u, E)` up to boundary fluxes and do not increase
//! `Σ dx v Σ w f ln f` up to the boundary entropy flux.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{KrlError, Result};
use crate::gas::FluidState;
use crate::grids::{DistributionField, VelocityGrid};
use crate::macro_micro::{chapman_enskog_micro, discrete_maxwellian, DiscreteMaxwellian, FieldDerivative, Projector};
use crate::modulation::WaveProfiles;

/// Solver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Knudsen number.
    pub kappa: f64,
    pub cfl: f64,
    pub end_time: f64,
    /// `ν₀` in `ν = ν₀ ρ√θ/κ`.
    pub collision_scale: f64,
    /// Far-field states that pin the ghost cells.
    pub left: FluidState,
    pub right: FluidState,
    /// Strang splitting (relax half step, transport, relax half step).
    pub strang: bool,
    /// Accumulate `Σ f ln f` every step.
    pub track_entropy: bool,
    /// Largest admitted deviation of an edge cell from its far-field state.
    pub boundary_tolerance: f64,
    /// Where to write the state on abort.
    pub dump_path: Option<PathBuf>,
}

impl SolverConfig {
    pub fn new(kappa: f64, end_time: f64, left: FluidState, right: FluidState) -> Result<Self> {
        let cfg = Self {
            kappa,
            cfl: 0.45,
            end_time,
            collision_scale: 1.0,
            left,
            right,
            strang: false,
            track_entropy: false,
            boundary_tolerance: 1e-3,
            dump_path: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(KrlError::invalid(format!("Knudsen number must be positive, got {}", self.kappa)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(KrlError::invalid(format!("CFL number must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.end_time >= 0.0) {
            return Err(KrlError::invalid("end time must be non-negative"));
        }
        if !(self.collision_scale > 0.0) {
            return Err(KrlError::invalid("collision-frequency scale must be positive"));
        }
        if !self.left.is_admissible() || !self.right.is_admissible() {
            return Err(KrlError::invalid("far-field states must be admissible"));
        }
        Ok(())
    }

    /// `ν = ν₀ ρ√θ/κ`.
    pub fn collision_frequency(&self, s: &FluidState) -> f64 {
        self.collision_scale * s.density() * s.theta.sqrt() / self.kappa
    }
}

/// Totals `Σ dx (v, u₁, u₂, u₃, E)`.
pub type Totals = [f64; 5];

/// Outcome of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    /// Drift of `Σ v dx` net of boundary flux, relative to the initial total.
    pub mass_drift: f64,
    /// Largest drift of any total net of boundary flux, relative to `max|Q(0)|`.
    pub conservation_drift: f64,
    /// `Σ dx v Σ w f ln f` after the step (NaN when not tracked).
    pub entropy: f64,
    /// `H(t+Δt) − H(t)` plus the entropy leaving through the boundary.
    pub entropy_production: f64,
}

/// Per-cell scratch for the ghost cells and the ξ₁ marginals.
#[derive(Debug, Clone)]
struct Edge {
    f: Vec<f64>,
    marginal: Vec<f64>,
}

impl Edge {
    fn new(state: &FluidState, grid: &VelocityGrid) -> Result<Self> {
        let m = DiscreteMaxwellian::fit(state, grid)?;
        let mut f = vec![0.0; grid.len()];
        m.fill(grid, &mut f);
        Ok(Self { f, marginal: m.marginal(grid) })
    }
}

/// Result of the per-cell update.
struct CellUpdate {
    state: FluidState,
    entropy: f64,
}

/// Root of the upwind mass flux between two cells with ξ₁ marginals `ml`, `mr`.
///
/// `Φ(u) = Σ_a (ξ_a − u)⁺ m_L(a) − (u − ξ_a)⁺ m_R(a)` is strictly decreasing and
/// linear between nodes, so the root is found exactly.
pub(crate) fn interface_velocity(nodes: &[f64], ml: &[f64], mr: &[f64]) -> f64 {
    let n = nodes.len();
    // With u in [ξ_i, ξ_{i+1}): nodes > u draw from the left, nodes <= u from the right.
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..n {
        a += nodes[i] * ml[i];
        b += ml[i];
    }
    let mut root = a / b;
    if root < nodes[0] {
        return root;
    }
    for i in 0..n {
        a += nodes[i] * (mr[i] - ml[i]);
        b += mr[i] - ml[i];
        root = a / b;
        let hi = if i + 1 < n { nodes[i + 1] } else { f64::INFINITY };
        if root >= nodes[i] && root < hi {
            return root;
        }
    }
    root
}

/// Moments and ξ₁ marginal of one cell in one pass.
fn moments_and_marginal(f: &[f64], grid: &VelocityGrid, marginal: &mut [f64]) -> [f64; 5] {
    let n = grid.n_per_axis();
    let (x0, x1, x2) = (grid.axis(0), grid.axis(1), grid.axis(2));
    let w = grid.weight();
    let mut m = [0.0f64; 5];
    let mut k = 0;
    for a in 0..n {
        let (mut s0, mut s2, mut s3, mut se) = (0.0, 0.0, 0.0, 0.0);
        for &xb in x1.iter() {
            let (mut t0, mut t3, mut te) = (0.0, 0.0, 0.0);
            for &xc in x2.iter() {
                let fk = f[k];
                t0 += fk;
                t3 += xc * fk;
                te += xc * xc * fk;
                k += 1;
            }
            s0 += t0;
            s2 += xb * t0;
            s3 += t3;
            se += te + xb * xb * t0;
        }
        marginal[a] = w * s0;
        let xa = x0[a];
        m[0] += s0;
        m[1] += xa * s0;
        m[2] += s2;
        m[3] += s3;
        m[4] += se + xa * xa * s0;
    }
    [w * m[0], w * m[1], w * m[2], w * m[3], 0.5 * w * m[4]]
}

fn state_from_raw(m: &[f64; 5]) -> Option<FluidState> {
    let rho = m[0];
    if !(rho > 0.0) || !rho.is_finite() {
        return None;
    }
    let u = [m[1] / rho, m[2] / rho, m[3] / rho];
    let theta = m[4] / rho - 0.5 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let s = FluidState::new(1.0 / rho, u, theta);
    s.is_admissible().then_some(s)
}

/// `Σ w f ln f`.
fn cell_entropy(f: &[f64], w: f64) -> f64 {
    w * f.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>()
}

/// Exponential BGK relaxation of one cell; updates the marginal in place.
fn relax_cell(
    f: &mut [f64],
    marginal: &mut [f64],
    grid: &VelocityGrid,
    cfg: &SolverConfig,
    dt: f64,
    time: f64,
) -> Result<FluidState> {
    let raw = moments_and_marginal(f, grid, marginal);
    let state = state_from_raw(&raw).ok_or_else(|| KrlError::CorruptedState {
        time,
        detail: format!("inadmissible cell moments {raw:?}"),
    })?;
    if dt > 0.0 {
        let maxw = DiscreteMaxwellian::fit(&state, grid)?;
        let e = (-cfg.collision_frequency(&state) * dt).exp();
        let mut m = vec![0.0; f.len()];
        maxw.fill(grid, &mut m);
        for (fk, mk) in f.iter_mut().zip(&m) {
            *fk = mk + (*fk - mk) * e;
        }
        // Re-read the moments so that the solver state is a function of `f` alone.
        let raw = moments_and_marginal(f, grid, marginal);
        return state_from_raw(&raw).ok_or_else(|| KrlError::CorruptedState {
            time,
            detail: format!("inadmissible cell moments after relaxation {raw:?}"),
        });
    }
    Ok(state)
}

/// Lagrangian BGK stepper owning the distribution and its ledgers.
#[derive(Debug, Clone)]
pub struct KineticSolver {
    cfg: SolverConfig,
    field: DistributionField,
    scratch: Vec<f64>,
    states: Vec<FluidState>,
    marginals: Vec<f64>,
    faces: Vec<f64>,
    left: Edge,
    right: Edge,
    step: usize,
    initial: Totals,
    inflow: Totals,
    entropy: f64,
    entropy_outflow: f64,
    initial_entropy: f64,
}

impl KineticSolver {
    pub fn new(field: DistributionField, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = field.velocity().clone();
        let n = grid.n_per_axis();
        let left = Edge::new(&cfg.left, &grid)?;
        let right = Edge::new(&cfg.right, &grid)?;
        let ncell = field.n_cells();
        let mut marginals = vec![0.0; ncell * n];
        let mut states = Vec::with_capacity(ncell);
        for j in 0..ncell {
            let raw = moments_and_marginal(field.cell(j), &grid, &mut marginals[j * n..(j + 1) * n]);
            states.push(state_from_raw(&raw).ok_or_else(|| KrlError::CorruptedState {
                time: field.time,
                detail: format!("cell {j} has inadmissible moments {raw:?}"),
            })?);
        }
        if field.values().iter().any(|x| !(*x >= 0.0)) {
            return Err(KrlError::CorruptedState { time: field.time, detail: "negative or non-finite initial density".into() });
        }
        let scratch = vec![0.0; field.values().len()];
        let mut s = Self {
            cfg,
            field,
            scratch,
            states,
            marginals,
            faces: vec![0.0; ncell + 1],
            left,
            right,
            step: 0,
            initial: [0.0; 5],
            inflow: [0.0; 5],
            entropy: f64::NAN,
            entropy_outflow: 0.0,
            initial_entropy: f64::NAN,
        };
        s.initial = s.totals();
        if s.cfg.track_entropy {
            s.entropy = s.total_entropy();
            s.initial_entropy = s.entropy;
        }
        Ok(s)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn field(&self) -> &DistributionField {
        &self.field
    }

    pub fn into_field(self) -> DistributionField {
        self.field
    }

    /// Cell states consistent with the current distribution.
    pub fn states(&self) -> &[FluidState] {
        &self.states
    }

    pub fn time(&self) -> f64 {
        self.field.time
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.field.time >= self.cfg.end_time * (1.0 - 1e-14)
    }

    /// `Σ dx (v, u, E)` of the current state.
    pub fn totals(&self) -> Totals {
        let dx = self.field.space().dx();
        let mut q = [0.0; 5];
        for s in &self.states {
            q[0] += s.v;
            q[1] += s.u[0];
            q[2] += s.u[1];
            q[3] += s.u[2];
            q[4] += s.total_energy();
        }
        q.map(|x| x * dx)
    }

    /// Totals at the start plus everything that entered through the boundary.
    pub fn expected_totals(&self) -> Totals {
        std::array::from_fn(|i| self.initial[i] + self.inflow[i])
    }

    /// Per-component drift net of boundary flux, relative to `max|Q(0)|`.
    pub fn conservation_drift(&self) -> [f64; 5] {
        let q = self.totals();
        let e = self.expected_totals();
        let scale = self.initial.iter().map(|x| x.abs()).fold(f64::MIN_POSITIVE, f64::max);
        std::array::from_fn(|i| (q[i] - e[i]).abs() / scale)
    }

    /// Drift of `Σ v dx` net of boundary flux, relative to its initial value.
    pub fn mass_drift(&self) -> f64 {
        (self.totals()[0] - self.expected_totals()[0]) / self.initial[0]
    }

    /// `Σ dx v Σ w f ln f`.
    pub fn total_entropy(&self) -> f64 {
        let grid = self.field.velocity();
        let w = grid.weight();
        let dx = self.field.space().dx();
        let per: Vec<f64> = (0..self.field.n_cells())
            .into_par_iter()
            .map(|j| self.states[j].v * cell_entropy(self.field.cell(j), w))
            .collect();
        dx * per.iter().sum::<f64>()
    }

    /// Entropy at the start minus everything that left through the boundary.
    pub fn entropy_budget(&self) -> (f64, f64) {
        (self.initial_entropy, self.entropy_outflow)
    }

    fn marginal(&self, j: isize) -> &[f64] {
        let n = self.field.velocity().n_per_axis();
        let ncell = self.field.n_cells() as isize;
        if j < 0 {
            &self.left.marginal
        } else if j >= ncell {
            &self.right.marginal
        } else {
            &self.marginals[j as usize * n..(j as usize + 1) * n]
        }
    }

    fn compute_faces(&mut self) {
        let grid = self.field.velocity().clone();
        let nodes = grid.axis(0);
        let ncell = self.field.n_cells();
        let faces: Vec<f64> = (0..=ncell)
            .into_par_iter()
            .map(|i| interface_velocity(nodes, self.marginal(i as isize - 1), self.marginal(i as isize)))
            .collect();
        self.faces = faces;
    }

    /// Largest stable step for the current faces.
    fn stable_dt(&self) -> f64 {
        let nodes = self.field.velocity().axis(0);
        let (xmin, xmax) = (nodes[0], nodes[nodes.len() - 1]);
        let mut worst = 0.0f64;
        for (j, s) in self.states.iter().enumerate() {
            let (ul, ur) = (self.faces[j], self.faces[j + 1]);
            // max_a (ξ_a − u_R)⁺ + (u_L − ξ_a)⁺ is attained at an end node
            let at = |x: f64| (x - ur).max(0.0) + (ul - x).max(0.0);
            worst = worst.max(at(xmin).max(at(xmax)) / s.v);
        }
        self.cfg.cfl * self.field.space().dx() / worst
    }

    fn dump(&self) {
        if let Some(path) = &self.cfg.dump_path {
            if let Ok(file) = std::fs::File::create(path) {
                let _ = self.field.write_snapshot(std::io::BufWriter::new(file));
            }
        }
    }

    fn corrupted(&self, detail: String) -> KrlError {
        self.dump();
        KrlError::CorruptedState { time: self.field.time, detail }
    }

    fn relax_all(&mut self, dt: f64) -> Result<()> {
        let grid = self.field.velocity().clone();
        let n = grid.n_per_axis();
        let nv = grid.len();
        let cfg = &self.cfg;
        let time = self.field.time;
        let states: Vec<Result<FluidState>> = self
            .field
            .values_mut()
            .par_chunks_mut(nv)
            .zip(self.marginals.par_chunks_mut(n))
            .map(|(f, m)| relax_cell(f, m, &grid, cfg, dt, time))
            .collect();
        for (j, s) in states.into_iter().enumerate() {
            self.states[j] = s?;
        }
        Ok(())
    }

    /// Advance by one step of at most `dt_max`; returns the report.
    pub fn step_limited(&mut self, dt_max: f64) -> Result<StepReport> {
        let grid = self.field.velocity().clone();
        let n = grid.n_per_axis();
        let nv = grid.len();
        let ncell = self.field.n_cells();
        let dx = self.field.space().dx();
        let h_old = self.entropy;

        self.compute_faces();
        let mut dt = self.stable_dt().min(dt_max);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(self.corrupted(format!("non-positive time step {dt}")));
        }
        let relax_dt = if self.cfg.strang {
            self.relax_all(0.5 * dt)?;
            self.compute_faces();
            // Positivity only needs the step below the CFL = 1 limit.
            let redo = self.stable_dt() / self.cfg.cfl;
            if redo < dt {
                return Err(self.corrupted(format!("CFL violated after half relaxation: {dt} > {redo}")));
            }
            0.5 * dt
        } else {
            dt
        };
        dt = dt.max(0.0);
        let lambda = dt / dx;
        let nodes = grid.axis(0).to_vec();

        // Boundary fluxes through the two outer faces, from the pre-step data.
        let boundary = |fl: &[f64], fr: &[f64], u: f64| -> ([f64; 5], f64) {
            let mut q = [0.0; 5];
            let mut h = 0.0;
            for k in 0..nv {
                let xi = grid.node(k);
                let (pos, neg) = ((xi[0] - u).max(0.0), (u - xi[0]).max(0.0));
                let flux = pos * fl[k] - neg * fr[k];
                q[1] += xi[0] * flux;
                q[2] += xi[1] * flux;
                q[3] += xi[2] * flux;
                q[4] += 0.5 * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) * flux;
                if self.cfg.track_entropy {
                    let phi = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
                    h += pos * phi(fl[k]) - neg * phi(fr[k]);
                }
            }
            let w = grid.weight();
            (q.map(|x| x * w), h * w)
        };
        let (mut q_left, h_left) = boundary(&self.left.f, self.field.cell(0), self.faces[0]);
        let (mut q_right, h_right) = boundary(self.field.cell(ncell - 1), &self.right.f, self.faces[ncell]);
        // d/dt Σ v dx = u*_right − u*_left
        q_left[0] = -self.faces[0];
        q_right[0] = -self.faces[ncell];

        let field = &self.field;
        let faces = &self.faces;
        let left = &self.left;
        let right = &self.right;
        let cfg = &self.cfg;
        let states = &self.states;
        let time = self.field.time;
        let track = cfg.track_entropy;
        let w = grid.weight();
        let updates: Vec<Result<CellUpdate>> = self
            .scratch
            .par_chunks_mut(nv)
            .zip(self.marginals.par_chunks_mut(n))
            .enumerate()
            .map(|(j, (out, marg))| {
                let fc = field.cell(j);
                let fl = if j == 0 { &left.f[..] } else { field.cell(j - 1) };
                let fr = if j + 1 == ncell { &right.f[..] } else { field.cell(j + 1) };
                let (ul, ur) = (faces[j], faces[j + 1]);
                let v_old = states[j].v;
                let v_new = v_old + lambda * (ur - ul);
                if !(v_new > 0.0) {
                    return Err(KrlError::CorruptedState { time, detail: format!("cell {j}: volume {v_new} after transport") });
                }
                let inv = 1.0 / v_new;
                let block = nv / n;
                for a in 0..n {
                    let x = nodes[a];
                    let from_left = lambda * (x - ul).max(0.0);
                    let from_right = lambda * (ur - x).max(0.0);
                    let keep = v_old - lambda * (x - ur).max(0.0) - lambda * (ul - x).max(0.0);
                    if keep < -1e-14 * v_old {
                        return Err(KrlError::CorruptedState { time, detail: format!("cell {j}: CFL violated (self weight {keep})") });
                    }
                    let (cs, cl, cr) = (keep * inv, from_left * inv, from_right * inv);
                    let r = a * block..(a + 1) * block;
                    for ((o, (&s, &l)), &rr) in out[r.clone()].iter_mut().zip(fc[r.clone()].iter().zip(&fl[r.clone()])).zip(&fr[r]) {
                        *o = cs * s + cl * l + cr * rr;
                    }
                }
                let state = relax_cell(out, marg, &grid, cfg, relax_dt, time)?;
                let entropy = if track { state.v * cell_entropy(out, w) } else { f64::NAN };
                Ok(CellUpdate { state, entropy })
            })
            .collect();
        let mut h_new = 0.0;
        for (j, u) in updates.into_iter().enumerate() {
            let u = match u {
                Ok(u) => u,
                Err(e) => {
                    self.dump();
                    return Err(e);
                }
            };
            self.states[j] = u.state;
            h_new += u.entropy;
        }
        self.field.swap_values(&mut self.scratch);
        self.field.time += dt;
        if self.cfg.strang {
            self.relax_all(0.5 * dt)?;
        }
        self.step += 1;
        for i in 0..5 {
            self.inflow[i] += dt * (q_left[i] - q_right[i]);
        }
        let mut production = f64::NAN;
        if track {
            let h = if self.cfg.strang { self.total_entropy() } else { dx * h_new };
            let out = dt * (h_right - h_left);
            production = h - h_old + out;
            self.entropy_outflow += out;
            self.entropy = h;
        }
        if self.field.values().iter().any(|x| !(*x >= 0.0)) {
            return Err(self.corrupted("negative density after step".into()));
        }
        self.check_boundaries()?;
        let drift = self.conservation_drift();
        Ok(StepReport {
            step: self.step,
            time: self.field.time,
            dt,
            mass_drift: self.mass_drift(),
            conservation_drift: drift.iter().cloned().fold(0.0, f64::max),
            entropy: self.entropy,
            entropy_production: production,
        })
    }

    /// Advance by one stable step, never past the end time.
    pub fn step(&mut self) -> Result<StepReport> {
        let remaining = self.cfg.end_time - self.field.time;
        self.step_limited(remaining.max(0.0))
    }

    fn check_boundaries(&self) -> Result<()> {
        let ncell = self.states.len();
        let dl = self.states[0].max_abs_diff(&self.cfg.left);
        let dr = self.states[ncell - 1].max_abs_diff(&self.cfg.right);
        if dl.max(dr) > self.cfg.boundary_tolerance {
            return Err(self.corrupted(format!(
                "wave reached the domain boundary (edge deviations {dl:e}, {dr:e}); widen the domain"
            )));
        }
        Ok(())
    }
}

/// One step of the integrator as a pure function.
pub fn step(f: &DistributionField, cfg: &SolverConfig) -> Result<(DistributionField, StepReport)> {
    let mut s = KineticSolver::new(f.clone(), cfg.clone())?;
    let r = s.step_limited(f64::INFINITY)?;
    Ok((s.into_field(), r))
}

/// Read-only view handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    /// Step just taken (0 for the initial call).
    pub dt: f64,
    pub field: &'a DistributionField,
    pub states: &'a [FluidState],
    pub config: &'a SolverConfig,
    /// Final call of the run.
    pub last: bool,
}

/// A consumer of the trajectory, called every `stride()` steps and at the end.
pub trait Observer {
    fn stride(&self) -> usize {
        1
    }
    fn observe(&mut self, view: &StepView<'_>) -> Result<()>;
}

/// Run-level options independent of the physics.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Sink for `t=… dt=… mass_drift=…` lines.
    pub progress: Option<&'a mut dyn Write>,
    pub progress_stride: usize,
    /// Snapshot directory and stride in steps.
    pub snapshots: Option<(PathBuf, usize)>,
    pub max_steps: Option<usize>,
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub field: DistributionField,
    pub states: Vec<FluidState>,
    pub steps: usize,
    pub reports: Vec<StepReport>,
    pub max_mass_drift: f64,
    pub max_conservation_drift: f64,
    /// Largest per-step entropy production (≤ 0 up to rounding).
    pub max_entropy_production: f64,
    pub snapshots: Vec<PathBuf>,
}

fn notify(observers: &mut [&mut dyn Observer], solver: &KineticSolver, dt: f64, last: bool) -> Result<()> {
    let view = StepView {
        step: solver.steps_taken(),
        time: solver.time(),
        dt,
        field: solver.field(),
        states: solver.states(),
        config: solver.config(),
        last,
    };
    for o in observers.iter_mut() {
        let stride = o.stride().max(1);
        if view.step.is_multiple_of(stride) || last {
            o.observe(&view).map_err(|e| KrlError::Observer { step: view.step, time: view.time, source: Box::new(e) })?;
        }
    }
    Ok(())
}

/// Advance `initial` to the configured end time.
pub fn run(
    initial: DistributionField,
    cfg: &SolverConfig,
    observers: &mut [&mut dyn Observer],
    mut opts: RunOptions<'_>,
) -> Result<Trajectory> {
    let mut solver = KineticSolver::new(initial, cfg.clone())?;
    let mut reports = Vec::new();
    let mut snapshots = Vec::new();
    let stride = opts.progress_stride.max(1);
    let (mut max_mass, mut max_cons, mut max_prod) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    notify(observers, &solver, 0.0, solver.is_finished())?;
    let snap = |solver: &KineticSolver, snapshots: &mut Vec<PathBuf>, dir: &PathBuf| -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("snap_{:06}.krl", solver.steps_taken()));
        let file = std::fs::File::create(&path)?;
        solver.field().write_snapshot(std::io::BufWriter::new(file))?;
        snapshots.push(path);
        Ok(())
    };
    if let Some((dir, _)) = &opts.snapshots {
        snap(&solver, &mut snapshots, dir)?;
    }
    while !solver.is_finished() {
        if opts.max_steps.is_some_and(|m| solver.steps_taken() >= m) {
            break;
        }
        let r = solver.step()?;
        max_mass = max_mass.max(r.mass_drift.abs());
        max_cons = max_cons.max(r.conservation_drift);
        if r.entropy_production.is_finite() {
            max_prod = max_prod.max(r.entropy_production);
        }
        let last = solver.is_finished() || opts.max_steps.is_some_and(|m| solver.steps_taken() >= m);
        notify(observers, &solver, r.dt, last)?;
        if r.step % stride == 0 || last {
            if let Some(w) = opts.progress.as_mut() {
                writeln!(w, "t={} dt={} mass_drift={}", r.time, r.dt, r.mass_drift)?;
            }
            reports.push(r);
        }
        if let Some((dir, every)) = &opts.snapshots {
            if r.step % (*every).max(1) == 0 || last {
                snap(&solver, &mut snapshots, dir)?;
            }
        }
    }
    Ok(Trajectory {
        steps: solver.steps_taken(),
        states: solver.states().to_vec(),
        field: solver.into_field(),
        reports,
        max_mass_drift: max_mass,
        max_conservation_drift: max_cons,
        max_entropy_production: max_prod,
        snapshots,
    })
}

/// Cellwise discrete Maxwellians of a state profile.
pub fn maxwellian_field(
    states: &[FluidState],
    space: std::sync::Arc<crate::grids::SpatialGrid>,
    velocity: std::sync::Arc<VelocityGrid>,
) -> Result<DistributionField> {
    if states.len() != space.n_cells() {
        return Err(KrlError::invalid("state count does not match the spatial grid"));
    }
    let nv = velocity.len();
    let mut values = vec![0.0; states.len() * nv];
    let res: Vec<Result<()>> = values
        .par_chunks_mut(nv)
        .zip(states.par_iter())
        .map(|(out, s)| {
            let m = DiscreteMaxwellian::fit(s, &velocity)?;
            m.fill(&velocity, out);
            Ok(())
        })
        .collect();
    res.into_iter().collect::<Result<Vec<()>>>()?;
    DistributionField::from_values(space, velocity, values, 0.0)
}

/// Fraction of the composite Maxwellian below which well-prepared values are floored.
const POSITIVITY_FLOOR: f64 = 1e-3;

/// How the initial distribution is built from a wave pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// Cellwise Maxwellians of the inviscid Riemann data.
    Sharp,
    /// Maxwellian of the composite plus the Chapman–Enskog micro parts of the shock profiles.
    WellPrepared,
}

impl std::str::FromStr for InitialMode {
    type Err = KrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(Self::Sharp),
            "well_prepared" => Ok(Self::WellPrepared),
            other => Err(KrlError::invalid(format!("unknown initial mode `{other}`; expected sharp or well_prepared"))),
        }
    }
}

/// Initial distribution for `profiles` at `τ = 0` with zero shifts.
///
/// Every velocity value must remain positive; a failure here means the
/// velocity box is too small or the shocks are too steep for the grid.
pub fn prepare_initial_data(
    profiles: &WaveProfiles,
    space: std::sync::Arc<crate::grids::SpatialGrid>,
    velocity: std::sync::Arc<VelocityGrid>,
    mode: InitialMode,
    cfg: &SolverConfig,
) -> Result<DistributionField> {
    let y = space.centers();
    match mode {
        InitialMode::Sharp => {
            let states: Vec<FluidState> = y.iter().map(|&yj| profiles.sharp_state(0.0, yj, [0.0; 2])).collect();
            maxwellian_field(&states, space, velocity)
        }
        InitialMode::WellPrepared => {
            let composite = profiles.assemble(&y, 0.0, [0.0; 2])?;
            let mut field = maxwellian_field(&composite.bar, space, velocity.clone())?;
            for slice in composite.shocks.iter().flatten() {
                let parts: Vec<Result<Vec<f64>>> = (0..y.len())
                    .into_par_iter()
                    .map(|j| {
                        let d = slice.derivative[j];
                        if d.iter().all(|x| x.abs() < 1e-300) {
                            return Ok(Vec::new());
                        }
                        let s = slice.state[j];
                        let proj = Projector::new(&s, &velocity)?;
                        let dx = FieldDerivative { v: d[0], u: [d[1], 0.0, 0.0], theta: d[2] };
                        chapman_enskog_micro(&proj, &dx, cfg.collision_frequency(&s), &velocity)
                    })
                    .collect();
                for (j, g) in parts.into_iter().enumerate() {
                    let g = g?;
                    for (a, b) in field.cell_mut(j).iter_mut().zip(&g) {
                        *a += b;
                    }
                }
            }
            // Corner nodes of the velocity box can go negative where the layers overlap; floor them
            // at a fraction of the composite Maxwellian and bound the resulting moment change.
            let nodes = velocity.nodes();
            let w = velocity.weight();
            for (j, m) in composite.bar.iter().enumerate() {
                let mbar = discrete_maxwellian(m, &velocity)?;
                let cell = field.cell_mut(j);
                let mut change = [0.0f64; 5];
                for (k, x) in cell.iter_mut().enumerate() {
                    let floor = POSITIVITY_FLOOR * mbar[k];
                    if *x < floor {
                        let d = floor - *x;
                        let xi = nodes[k];
                        let psi = [1.0, xi[0], xi[1], xi[2], 0.5 * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2])];
                        for (c, p) in change.iter_mut().zip(psi) {
                            *c += w * d * p;
                        }
                        *x = floor;
                    }
                }
                let scale = m.density().max(m.total_energy() / m.v);
                if change.iter().any(|c| c.abs() > 1e-12 * scale) || cell.iter().any(|x| !(*x > 0.0)) {
                    return Err(KrlError::invalid(format!(
                        "well-prepared data is not positive in cell {j} (y = {}); increase the velocity radius or κ",
                        y[j]
                    )));
                }
            }
            Ok(field)
        }
    }
}

/// `Σ dx Σ w (f − M[U_f])²`, the squared `L²` distance to local equilibrium.
pub fn nonequilibrium_norm_sq(field: &DistributionField) -> Result<f64> {
    let grid = field.velocity();
    let w = grid.weight();
    let per: Vec<Result<f64>> = (0..field.n_cells())
        .into_par_iter()
        .map(|j| {
            let f = field.cell(j);
            let s = field.cell_moments(j)?.to_state()?;
            let m = discrete_maxwellian(&s, grid)?;
            Ok(w * f.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        })
        .collect();
    let mut total = 0.0;
    for p in per {
        total += p?;
    }
    Ok(total * field.space().dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::SpatialGrid;
    use std::sync::Arc;

    fn grids(ncell: usize, n: usize) -> (Arc<SpatialGrid>, Arc<VelocityGrid>) {
        (
            Arc::new(SpatialGrid::new(-1.0, 1.0, ncell).unwrap()),
            Arc::new(VelocityGrid::new([0.0; 3], 6.5, n).unwrap()),
        )
    }

    #[test]
    fn interface_velocity_is_the_flux_root() {
        let nodes: Vec<f64> = (0..8).map(|i| -3.5 + i as f64).collect();
        let ml: Vec<f64> = nodes.iter().map(|x| (-(x - 0.3f64).powi(2)).exp()).collect();
        let mr: Vec<f64> = nodes.iter().map(|x| 2.0 * (-(x + 0.2f64).powi(2) / 1.5).exp()).collect();
        let u = interface_velocity(&nodes, &ml, &mr);
        let flux: f64 = nodes.iter().zip(ml.iter().zip(&mr)).map(|(x, (l, r))| (x - u).max(0.0) * l - (u - x).max(0.0) * r).sum();
        assert!(flux.abs() < 1e-14, "{flux}");
        let same = interface_velocity(&nodes, &ml, &ml);
        let mean: f64 = nodes.iter().zip(&ml).map(|(x, m)| x * m).sum::<f64>() / ml.iter().sum::<f64>();
        assert!((same - mean).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (sp, vg) = grids(40, 8);
        let s = FluidState::planar(1.0, 0.0, 1.0);
        let f = maxwellian_field(&vec![s; 40], sp, vg).unwrap();
        let cfg = SolverConfig::new(0.1, 1.0, s, s).unwrap();
        let (g, _) = step(&f, &cfg).unwrap();
        let d = f.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-13, "{d}");
    }

    #[test]
    fn rejects_bad_config() {
        let s = FluidState::planar(1.0, 0.0, 1.0);
        assert!(SolverConfig::new(0.0, 1.0, s, s).is_err());
        let mut c = SolverConfig::new(0.1, 1.0, s, s).unwrap();
        c.cfl = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn smooth_bump_conserves_and_dissipates() {
        let (sp, vg) = grids(60, 12);
        let far = FluidState::planar(1.0, 0.0, 1.0);
        let states: Vec<FluidState> = sp
            .centers()
            .iter()
            .map(|x| {
                let b = (-(x / 0.2).powi(2)).exp();
                FluidState::planar(1.0 + 0.1 * b, 0.05 * b, 1.0 - 0.08 * b)
            })
            .collect();
        let f = maxwellian_field(&states, sp, vg).unwrap();
        let mut cfg = SolverConfig::new(0.05, 0.05, far, far).unwrap();
        cfg.track_entropy = true;
        let t = run(f, &cfg, &mut [], RunOptions::default()).unwrap();
        assert!(t.steps > 5);
        assert!(t.max_conservation_drift < 1e-12, "{}", t.max_conservation_drift);
        assert!(t.max_entropy_production <= 1e-12, "{}", t.max_entropy_production);
    }

    #[test]
    fn strang_split_also_conserves() {
        let (sp, vg) = grids(30, 12);
        let far = FluidState::planar(1.0, 0.0, 1.0);
        let states: Vec<FluidState> = sp
            .centers()
            .iter()
            .map(|x| FluidState::planar(1.0, 0.03 * (-(x / 0.2).powi(2)).exp(), 1.0))
            .collect();
        let f = maxwellian_field(&states, sp, vg).unwrap();
        let mut cfg = SolverConfig::new(0.05, 0.03, far, far).unwrap();
        cfg.strang = true;
        cfg.track_entropy = true;
        let t = run(f, &cfg, &mut [], RunOptions::default()).unwrap();
        assert!(t.max_conservation_drift < 1e-12);
        assert!(t.max_entropy_production <= 1e-12);
    }
}
