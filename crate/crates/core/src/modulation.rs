//! Composite waves with time-dependent shock shifts.
//!
//! The composite `Ū` superposes the viscous 1-wave (shock or smooth
//! rarefaction), the viscous contact and the viscous 3-shock, each shock
//! translated by its shift `X_i(τ)`. Shifts follow
//!
//! `Ẋ_i = −(𝔪_i/δ_i) ∫ a [u1^{Si}_y ψ1 + v^{Si}_y (p̄/v̄) φ + θ^{Si}_y ζ/θ̄] dy`
//!
//! where `(φ, ψ, ζ) = (v − v̄, u − ū, θ − θ̄)` and `a` is the shock weight.
//! Everything here lives in the κ-scaled variables `(τ, y)`.

use std::io::Write;

use crate::error::{KrlError, Result};
use crate::gas::{FluidState, Transport};
use crate::kinetic::{Observer, StepView};
use crate::profiles::{
    solve_contact_profile, solve_shock_profile, ContactOptions, ContactProfile, ProfileTable, RarefactionWave,
    ShockOptions,
};
use crate::riemann::{Family, FirstWave, WavePattern};

/// Strengths below this are treated as absent waves.
const ABSENT: f64 = 1e-14;

/// Profile-construction controls shared by every wave of a pattern.
#[derive(Debug, Clone, Copy)]
pub struct ProfileSettings {
    pub transport: Transport,
    pub shock: ShockOptions,
    pub contact: ContactOptions,
    /// Burgers time offset of the smooth rarefaction; `None` uses `κ`.
    pub rarefaction_offset: Option<f64>,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            transport: Transport::bgk(),
            shock: ShockOptions::default(),
            contact: ContactOptions::default(),
            rarefaction_offset: None,
        }
    }
}

/// Viscous building blocks of one Riemann pattern at Knudsen number `κ`.
#[derive(Debug, Clone)]
pub struct WaveProfiles {
    pub pattern: WavePattern,
    pub kappa: f64,
    pub transport: Transport,
    pub shock1: Option<ProfileTable>,
    pub rarefaction: Option<RarefactionWave>,
    pub contact: Option<ContactProfile>,
    pub shock3: Option<ProfileTable>,
}

/// Shifted shock profile sampled on the grid.
#[derive(Debug, Clone)]
pub struct ShockSlice {
    pub family: Family,
    pub delta: f64,
    pub speed: f64,
    /// Far-field state whose volume anchors the weight (`v−` for the 1-shock, `v^*` for the 3-shock).
    pub anchor: FluidState,
    pub state: Vec<FluidState>,
    /// `(v_y, u1_y, θ_y)`.
    pub derivative: Vec<[f64; 3]>,
}

/// Composite wave `Ū(τ, y)` on the cell centers with its ingredients.
#[derive(Debug, Clone)]
pub struct CompositeWave {
    pub time: f64,
    pub shifts: [f64; 2],
    pub y: Vec<f64>,
    pub bar: Vec<FluidState>,
    pub bar_derivative: Vec<[f64; 3]>,
    /// `[1-shock, 3-shock]`, absent for zero strength or a rarefaction.
    pub shocks: [Option<ShockSlice>; 2],
    /// Contact `(v_y, u1_y, θ_y)` if the pattern has a contact.
    pub contact_derivative: Option<Vec<[f64; 3]>>,
}

/// Shock weights `a1`, `a3` and their sum `a = a1 + a3 − 1`.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub a: Vec<f64>,
    pub a1: Vec<f64>,
    pub a3: Vec<f64>,
    /// `∂_y a1`, `∂_y a3`.
    pub da1: Vec<f64>,
    pub da3: Vec<f64>,
}

impl WaveProfiles {
    /// Solve every viscous profile the pattern needs.
    pub fn build(pattern: &WavePattern, kappa: f64, settings: &ProfileSettings) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(KrlError::invalid("κ must be positive"));
        }
        let t = settings.transport;
        let p = pattern;
        let (shock1, rarefaction) = match p.first {
            FirstWave::Shock { speed } if p.delta1 > ABSENT => {
                (Some(solve_shock_profile(Family::One, &p.minus, &p.lower, speed, t, settings.shock)?), None)
            }
            FirstWave::Rarefaction { .. } if p.delta1 > ABSENT => {
                let offset = settings.rarefaction_offset.unwrap_or(kappa);
                (None, Some(RarefactionWave::new(&p.minus, &p.lower, kappa, offset)?))
            }
            _ => (None, None),
        };
        let contact = if p.delta_c > ABSENT {
            Some(solve_contact_profile(
                p.lower.theta,
                p.upper.theta,
                p.contact_pressure(),
                p.lower.u[0],
                t,
                settings.contact,
            )?)
        } else {
            None
        };
        let shock3 = if p.delta3 > ABSENT {
            Some(solve_shock_profile(Family::Three, &p.upper, &p.plus, p.sigma3, t, settings.shock)?)
        } else {
            None
        };
        Ok(Self { pattern: p.clone(), kappa, transport: t, shock1, rarefaction, contact, shock3 })
    }

    /// Strength of shock `i` (0 for the 1-shock, 1 for the 3-shock); 0 if absent.
    pub fn shock_strength(&self, i: usize) -> f64 {
        match (i, &self.shock1, &self.shock3) {
            (0, Some(_), _) => self.pattern.delta1,
            (1, _, Some(_)) => self.pattern.delta3,
            _ => 0.0,
        }
    }

    pub fn has_shock(&self, i: usize) -> bool {
        self.shock_strength(i) > 0.0
    }

    /// Shock speed `σ_i`; the 1-shock slot reports the rarefaction head speed when absent.
    pub fn shock_speed(&self, i: usize) -> f64 {
        match i {
            0 => match self.pattern.first {
                FirstWave::Shock { speed } => speed,
                FirstWave::Rarefaction { head, .. } => head,
            },
            _ => self.pattern.sigma3,
        }
    }

    /// Shift-ODE constant `𝔪_i` built from the state behind shock `i`.
    pub fn m_constant(&self, i: usize) -> f64 {
        let (state, sigma) = match i {
            0 => (self.pattern.lower, self.shock_speed(0)),
            _ => (self.pattern.upper, self.pattern.sigma3),
        };
        m_constant(&state, sigma, self.transport.gamma)
    }

    /// Composite on cell centers `y` at time `tau` with shifts `[X1, X3]`.
    pub fn assemble(&self, y: &[f64], tau: f64, shifts: [f64; 2]) -> Result<CompositeWave> {
        if y.len() < 2 {
            return Err(KrlError::invalid("composite needs at least two cells"));
        }
        let (lo, hi) = (y[0], y[y.len() - 1]);
        for i in 0..2 {
            if self.has_shock(i) {
                let c = self.shock_speed(i) * tau + shifts[i];
                if !(c > lo && c < hi) {
                    return Err(KrlError::invalid(format!(
                        "grid [{lo}, {hi}] does not cover shock {} at y = {c}",
                        2 * i + 1
                    )));
                }
            }
        }
        if let FirstWave::Rarefaction { head, .. } = self.pattern.first {
            if self.rarefaction.is_some() && !(head * tau > lo) {
                return Err(KrlError::invalid(format!("grid [{lo}, {hi}] does not cover the rarefaction fan")));
            }
        }
        let p = &self.pattern;
        let n = y.len();
        let mut bar = Vec::with_capacity(n);
        let mut bar_derivative = Vec::with_capacity(n);
        let mut slices: [Option<ShockSlice>; 2] = [None, None];
        for (i, table) in [&self.shock1, &self.shock3].into_iter().enumerate() {
            if let Some(t) = table {
                let center = t.speed * tau + shifts[i];
                let (state, derivative) = y
                    .iter()
                    .map(|&yj| {
                        let s = t.eval_scaled(yj - center, self.kappa);
                        (s.state, s.derivative)
                    })
                    .unzip();
                slices[i] = Some(ShockSlice {
                    family: t.family,
                    delta: self.shock_strength(i),
                    speed: t.speed,
                    anchor: if i == 0 { p.minus } else { p.upper },
                    state,
                    derivative,
                });
            }
        }
        let mut contact_derivative = self.contact.as_ref().map(|_| Vec::with_capacity(n));
        for (j, &yj) in y.iter().enumerate() {
            let (w1, d1) = match (&slices[0], &self.rarefaction) {
                (Some(s), _) => (s.state[j], s.derivative[j]),
                (None, Some(r)) => {
                    let s = r.evaluate(tau, yj);
                    (s.state, s.derivative)
                }
                _ => (p.lower, [0.0; 3]),
            };
            let (wc, dc) = match &self.contact {
                Some(c) => {
                    let s = c.sample(tau, yj, self.kappa);
                    (s.state, s.derivative)
                }
                None => (p.lower, [0.0; 3]),
            };
            if let Some(cd) = contact_derivative.as_mut() {
                cd.push(dc);
            }
            let (w3, d3) = match &slices[1] {
                Some(s) => (s.state[j], s.derivative[j]),
                None => (p.upper, [0.0; 3]),
            };
            let v = w1.v + wc.v + w3.v - p.lower.v - p.upper.v;
            let u1 = w1.u[0] + wc.u[0] + w3.u[0] - p.lower.u[0] - p.upper.u[0];
            let theta = w1.theta + wc.theta + w3.theta - p.lower.theta - p.upper.theta;
            let s = FluidState::planar(v, u1, theta);
            if !s.is_admissible() {
                return Err(KrlError::invalid(format!("composite is inadmissible at y = {yj}: {s:?}")));
            }
            bar.push(s);
            bar_derivative.push([d1[0] + dc[0] + d3[0], d1[1] + dc[1] + d3[1], d1[2] + dc[2] + d3[2]]);
        }
        Ok(CompositeWave {
            time: tau,
            shifts,
            y: y.to_vec(),
            bar,
            bar_derivative,
            shocks: slices,
            contact_derivative,
        })
    }

    /// Inviscid Riemann solution with shocks translated by `shifts` (the fan is unshifted).
    pub fn sharp_state(&self, tau: f64, y: f64, shifts: [f64; 2]) -> FluidState {
        let p = &self.pattern;
        let first = match (&self.rarefaction, p.first) {
            (Some(r), _) => r.sharp(tau, y),
            (None, FirstWave::Shock { speed }) => {
                if y < speed * tau + shifts[0] {
                    p.minus
                } else {
                    p.lower
                }
            }
            (None, FirstWave::Rarefaction { .. }) => p.lower,
        };
        let contact = if y < 0.0 { p.lower } else { p.upper };
        let third = if y < p.sigma3 * tau + shifts[1] { p.upper } else { p.plus };
        FluidState::planar(
            first.v + contact.v + third.v - p.lower.v - p.upper.v,
            first.u[0] + contact.u[0] + third.u[0] - p.lower.u[0] - p.upper.u[0],
            first.theta + contact.theta + third.theta - p.lower.theta - p.upper.theta,
        )
    }
}

/// `𝔪 = (20/3) p/(σ³ v²) (5 + 3γ)/(10 + 3γ)` at state `s` and shock speed `σ`.
pub fn m_constant(s: &FluidState, sigma: f64, gamma: f64) -> f64 {
    let p = s.pressure();
    (20.0 / 3.0) * p / (sigma.abs().powi(3) * s.v * s.v) * (5.0 + 3.0 * gamma) / (10.0 + 3.0 * gamma)
}

impl CompositeWave {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Weights `a_i = 1 + (v^{Si} − v_anchor)/√δ_i`, identically one for absent shocks.
    pub fn weights(&self) -> WeightField {
        let n = self.len();
        let one = |slot: &Option<ShockSlice>| -> (Vec<f64>, Vec<f64>) {
            match slot {
                Some(s) => {
                    let r = s.delta.sqrt();
                    (
                        s.state.iter().map(|w| 1.0 + (w.v - s.anchor.v) / r).collect(),
                        s.derivative.iter().map(|d| d[0] / r).collect(),
                    )
                }
                None => (vec![1.0; n], vec![0.0; n]),
            }
        };
        let (a1, da1) = one(&self.shocks[0]);
        let (a3, da3) = one(&self.shocks[1]);
        let a = a1.iter().zip(&a3).map(|(x, y)| x + y - 1.0).collect();
        WeightField { a, a1, a3, da1, da3 }
    }

    /// Cutoffs `(φ1, φ3)` separating the two shock zones.
    pub fn cutoffs(&self) -> (Vec<f64>, Vec<f64>) {
        let left = 0.5 * (self.shocks_center(0));
        let right = 0.5 * (self.shocks_center(1));
        let phi1: Vec<f64> = self
            .y
            .iter()
            .map(|&y| {
                if y <= left {
                    1.0
                } else if y >= right {
                    0.0
                } else {
                    (right - y) / (right - left)
                }
            })
            .collect();
        let phi3 = phi1.iter().map(|p| 1.0 - p).collect();
        (phi1, phi3)
    }

    fn shocks_center(&self, i: usize) -> f64 {
        match &self.shocks[i] {
            Some(s) => s.speed * self.time + self.shifts[i],
            None => 0.0,
        }
    }

    /// Perturbation `(φ, ψ1, ζ)` of `fluid` against the composite, cell by cell.
    pub fn perturbation(&self, fluid: &[FluidState]) -> Result<Vec<[f64; 3]>> {
        if fluid.len() != self.len() {
            return Err(KrlError::invalid(format!(
                "fluid has {} cells, composite has {}",
                fluid.len(),
                self.len()
            )));
        }
        Ok(fluid
            .iter()
            .zip(&self.bar)
            .map(|(f, b)| [f.v - b.v, f.u[0] - b.u[0], f.theta - b.theta])
            .collect())
    }
}

/// Right-hand sides `[Ẋ1, Ẋ3]` for the cell states `fluid` (zero for absent shocks).
pub fn shift_rhs(
    profiles: &WaveProfiles,
    composite: &CompositeWave,
    weight: &WeightField,
    fluid: &[FluidState],
    dy: f64,
) -> Result<[f64; 2]> {
    let pert = composite.perturbation(fluid)?;
    let mut out = [0.0; 2];
    for (i, slot) in composite.shocks.iter().enumerate() {
        let Some(s) = slot else { continue };
        let mut acc = 0.0;
        for j in 0..pert.len() {
            let b = &composite.bar[j];
            let d = s.derivative[j];
            let [phi, psi, zeta] = pert[j];
            acc += weight.a[j] * (d[1] * psi + d[0] * b.pressure() / b.v * phi + d[2] * zeta / b.theta);
        }
        out[i] = -profiles.m_constant(i) / s.delta * acc * dy;
    }
    Ok(out)
}

/// One row of the shift history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftRecord {
    pub time: f64,
    pub shift: [f64; 2],
    pub rate: [f64; 2],
    /// Accumulated `∫|Ẋ_i| dτ`.
    pub total_variation: [f64; 2],
    /// `min(−X1 − σ1τ/2, X3 + σ3τ/2)` over the shocks present.
    pub separation_margin: f64,
}

/// Shifts, their rates and total variation.
#[derive(Debug, Clone, Default)]
pub struct ShiftState {
    pub time: f64,
    pub shift: [f64; 2],
    pub rate: [f64; 2],
    pub total_variation: [f64; 2],
    pub history: Vec<ShiftRecord>,
}

impl ShiftState {
    pub fn separation_margin(&self, profiles: &WaveProfiles) -> f64 {
        let mut m = f64::INFINITY;
        if profiles.has_shock(0) {
            m = m.min(-self.shift[0] - 0.5 * profiles.shock_speed(0) * self.time);
        }
        if profiles.has_shock(1) {
            m = m.min(self.shift[1] + 0.5 * profiles.shock_speed(1) * self.time);
        }
        m
    }

    /// Smallest separation margin seen so far.
    pub fn min_separation_margin(&self) -> f64 {
        self.history.iter().map(|r| r.separation_margin).fold(f64::INFINITY, f64::min)
    }

    fn record(&mut self, profiles: &WaveProfiles) {
        let separation_margin = self.separation_margin(profiles);
        self.history.push(ShiftRecord {
            time: self.time,
            shift: self.shift,
            rate: self.rate,
            total_variation: self.total_variation,
            separation_margin,
        });
    }

    /// Write the history as CSV.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "t,X1,dX1,X3,dX3,TV1,TV3,sep_margin")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.time,
                r.shift[0],
                r.rate[0],
                r.shift[1],
                r.rate[1],
                r.total_variation[0],
                r.total_variation[1],
                r.separation_margin
            )?;
        }
        Ok(())
    }
}

/// Explicit update `X ← X + dt·rate`, accumulating total variation.
pub fn advance_shifts(state: &mut ShiftState, rate: [f64; 2], dt: f64) {
    for i in 0..2 {
        state.shift[i] += dt * rate[i];
        state.total_variation[i] += dt * rate[i].abs();
    }
    state.time += dt;
}

/// Observer integrating the shift ODE alongside the kinetic solver with Heun's method.
///
/// The rate from the end of the previous step is the predictor slope; the corrector
/// re-evaluates the rate on the new cell states at the predicted shifts.
#[derive(Debug)]
pub struct ShiftTracker {
    pub profiles: WaveProfiles,
    pub state: ShiftState,
    y: Vec<f64>,
    dy: f64,
    /// Composite at the latest shifts.
    pub composite: Option<CompositeWave>,
}

impl ShiftTracker {
    pub fn new(profiles: WaveProfiles, y: Vec<f64>, dy: f64) -> Self {
        Self { profiles, state: ShiftState::default(), y, dy, composite: None }
    }

    fn rate_at(&self, tau: f64, shifts: [f64; 2], fluid: &[FluidState]) -> Result<(CompositeWave, [f64; 2])> {
        let c = self.profiles.assemble(&self.y, tau, shifts)?;
        let w = c.weights();
        let r = shift_rhs(&self.profiles, &c, &w, fluid, self.dy)?;
        Ok((c, r))
    }

    /// Advance the shifts across a step of length `dt` ending with `fluid` at `tau`.
    pub fn advance(&mut self, tau: f64, dt: f64, fluid: &[FluidState]) -> Result<()> {
        if dt == 0.0 {
            let (c, r) = self.rate_at(tau, self.state.shift, fluid)?;
            self.state.time = tau;
            self.state.rate = r;
            self.composite = Some(c);
            self.state.record(&self.profiles);
            return Ok(());
        }
        let k1 = self.state.rate;
        let predicted = [self.state.shift[0] + dt * k1[0], self.state.shift[1] + dt * k1[1]];
        let (_, k2) = self.rate_at(tau, predicted, fluid)?;
        let slope = [0.5 * (k1[0] + k2[0]), 0.5 * (k1[1] + k2[1])];
        let tv_before = self.state.total_variation;
        advance_shifts(&mut self.state, slope, dt);
        for i in 0..2 {
            self.state.total_variation[i] = tv_before[i] + 0.5 * dt * (k1[i].abs() + k2[i].abs());
        }
        self.state.time = tau;
        let (c, r) = self.rate_at(tau, self.state.shift, fluid)?;
        self.state.rate = r;
        self.composite = Some(c);
        self.state.record(&self.profiles);
        Ok(())
    }
}

impl Observer for ShiftTracker {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        self.advance(view.time, view.dt, view.states)
    }
}
