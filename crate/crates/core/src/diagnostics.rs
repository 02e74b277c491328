//! Relative-entropy ledger, pointwise shock-layer errors and limit errors.
//!
//! All integrals are midpoint sums over cells in the macroscopic variable `y`,
//! with `y`-derivatives of the profiles. Distribution norms use the reference
//! Maxwellian `M_#`: `‖g‖²_{M_#} = Σ w g²/M_#` and
//! `‖g‖²_{ν,M_#} = Σ w (1 + |ξ|) g²/M_#`.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{KrlError, Result};
use crate::gas::FluidState;
use crate::grids::{DistributionField, VelocityGrid};
use crate::kinetic::{SolverConfig, StepView};
use crate::macro_micro::{
    chapman_enskog_micro, discrete_maxwellian, phi, reference_maxwellian, relative_entropy_unchecked, FieldDerivative,
    Projector,
};
use crate::modulation::{CompositeWave, WaveProfiles};

/// Reference Maxwellian `M_#` for a pattern: volume `min v`, temperature `2 max θ` over its states.
pub fn pattern_reference(profiles: &WaveProfiles, grid: &VelocityGrid) -> Result<Vec<f64>> {
    let p = &profiles.pattern;
    let states = [p.minus, p.lower, p.upper, p.plus];
    let v = states.iter().map(|s| s.v).fold(f64::INFINITY, f64::min);
    let theta = states.iter().map(|s| s.theta).fold(0.0, f64::max);
    reference_maxwellian(v, theta, grid)
}

fn check_grid(field: &DistributionField, n: usize, m_sharp: &[f64]) -> Result<()> {
    if field.n_cells() != n {
        return Err(KrlError::invalid(format!("field has {} cells, composite has {n}", field.n_cells())));
    }
    if m_sharp.len() != field.velocity().len() {
        return Err(KrlError::invalid("reference Maxwellian does not match the velocity grid"));
    }
    Ok(())
}

/// Centered differences of cell states (one-sided at the ends): `(v_y, u_y, θ_y)`.
pub fn state_derivatives(states: &[FluidState], dy: f64) -> Vec<FieldDerivative> {
    let n = states.len();
    (0..n)
        .map(|j| {
            let (a, b, h) = match (j, n) {
                (_, 1) => (j, j, 1.0),
                (0, _) => (0, 1, dy),
                (j, n) if j == n - 1 => (n - 2, n - 1, dy),
                _ => (j - 1, j + 1, 2.0 * dy),
            };
            let (l, r) = (&states[a], &states[b]);
            FieldDerivative {
                v: (r.v - l.v) / h,
                u: [(r.u[0] - l.u[0]) / h, (r.u[1] - l.u[1]) / h, (r.u[2] - l.u[2]) / h],
                theta: (r.theta - l.theta) / h,
            }
        })
        .collect()
}

/// Sum of the Chapman–Enskog micro parts of the shifted shock profiles in cell `j`.
fn shock_micro(
    composite: &CompositeWave,
    j: usize,
    cfg: &SolverConfig,
    grid: &VelocityGrid,
    out: &mut [f64],
) -> Result<()> {
    out.iter_mut().for_each(|x| *x = 0.0);
    for s in composite.shocks.iter().flatten() {
        let d = s.derivative[j];
        if d.iter().all(|x| x.abs() < 1e-300) {
            continue;
        }
        let proj = Projector::new(&s.state[j], grid)?;
        let dx = FieldDerivative { v: d[0], u: [d[1], 0.0, 0.0], theta: d[2] };
        let g = chapman_enskog_micro(&proj, &dx, cfg.collision_frequency(&s.state[j]), grid)?;
        for (a, b) in out.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(())
}

/// Weighted relative-entropy functionals at one time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropyReport {
    pub time: f64,
    /// `∫ a η(U|Ū)`.
    pub weighted_entropy: f64,
    /// `Y_{ij}`, `i ∈ {1, 3}`, `j = 1..6`.
    pub y: [[f64; 6]; 2],
    /// `𝒢_i^S = ∫ |∂_y v^{Si}| φ_i² |(φ,ψ,ζ)|²` with the zone cutoffs `φ_i`.
    pub shock_good: [f64; 2],
    /// `𝒢_sh = ∫ |v̄_y| |(φ,ψ,ζ)|²`.
    pub single_shock_good: f64,
    /// `Σ σ_i ∫ ∂_y a_i η`.
    pub weight_flux: f64,
    /// `κ ∫ a (α(θ̄) ζ_y²/(vθ) + (4/3) μ(θ̄) ψ1_y²/v + μ(θ) (ψ2_y² + ψ3_y²)/v)`.
    pub d_mac: f64,
    /// `∫ a ‖G̃_rem‖²_{ν,M_#}`.
    pub d_mic: f64,
    /// `∫ ‖G̃_C‖²_{M_#}`.
    pub g_contact_norm: f64,
    /// `∫ ‖G̃_rem‖²_{M_#}`.
    pub g_rem_norm: f64,
    /// `∫ |(φ,ψ,ζ)|²`.
    pub perturbation_norm: f64,
    /// Interaction integrals `(∫ φ3 |∂_y v^{S1}|, ∫ φ1 |∂_y v^{S3}|)`.
    pub interaction: [f64; 2],
}

impl EntropyReport {
    /// `ℰ = ∫ a η + ∫ ‖G̃_rem‖²_{M_#}`.
    pub fn energy(&self) -> f64 {
        self.weighted_entropy + self.g_rem_norm
    }

    pub const CSV_HEADER: &'static str = "t,weighted_entropy,Y11,Y12,Y13,Y14,Y15,Y16,Y31,Y32,Y33,Y34,Y35,Y36,\
G1S,G3S,Gsh,weight_flux,D_mac,D_mic,GC_norm,Grem_norm,pert_norm,energy,interaction1,interaction3";

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.time, self.weighted_entropy];
        cols.extend(self.y[0]);
        cols.extend(self.y[1]);
        cols.extend([
            self.shock_good[0],
            self.shock_good[1],
            self.single_shock_good,
            self.weight_flux,
            self.d_mac,
            self.d_mic,
            self.g_contact_norm,
            self.g_rem_norm,
            self.perturbation_norm,
            self.energy(),
            self.interaction[0],
            self.interaction[1],
        ]);
        cols.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Sign checks of the ledger: every functional that must be non-negative is.
pub fn ledger_signs_hold(r: &EntropyReport) -> bool {
    [
        r.weighted_entropy,
        r.shock_good[0],
        r.shock_good[1],
        r.single_shock_good,
        r.d_mac,
        r.d_mic,
        r.g_contact_norm,
        r.g_rem_norm,
        r.perturbation_norm,
    ]
    .iter()
    .all(|x| *x >= 0.0)
}

/// Evaluate the entropy ledger of `field` against `composite`.
pub fn entropy_ledger(
    field: &DistributionField,
    profiles: &WaveProfiles,
    composite: &CompositeWave,
    cfg: &SolverConfig,
    m_sharp: &[f64],
) -> Result<EntropyReport> {
    let n = composite.len();
    check_grid(field, n, m_sharp)?;
    let grid = field.velocity().clone();
    let dy = field.space().dx();
    let states: Vec<FluidState> = (0..n).map(|j| field.cell_moments(j)?.to_state()).collect::<Result<_>>()?;
    let weight = composite.weights();
    let (cut1, cut3) = composite.cutoffs();
    let pert = composite.perturbation(&states)?;
    let pert_states: Vec<FluidState> = pert.iter().map(|p| FluidState::planar(p[0], p[1], p[2])).collect();
    let dpert = state_derivatives(&pert_states, dy);
    let t = profiles.transport;
    let mut r = EntropyReport { time: composite.time, ..Default::default() };

    for j in 0..n {
        let (u, b) = (&states[j], &composite.bar[j]);
        let a = weight.a[j];
        let eta = relative_entropy_unchecked(u, b);
        let [ph, ps, ze] = pert[j];
        let trans = [u.u[1] - b.u[1], u.u[2] - b.u[2]];
        let sq = ph * ph + ps * ps + ze * ze + trans[0] * trans[0] + trans[1] * trans[1];
        r.weighted_entropy += a * eta;
        r.perturbation_norm += sq;
        r.single_shock_good += composite.bar_derivative[j][0].abs() * sq;
        for (i, slot) in composite.shocks.iter().enumerate() {
            let Some(s) = slot else { continue };
            let d = s.derivative[j];
            let cut = if i == 0 { cut1[j] } else { cut3[j] };
            let da = if i == 0 { weight.da1[j] } else { weight.da3[j] };
            let y = &mut r.y[i];
            y[0] += a * d[1] * ps;
            y[1] += a * d[0] * b.pressure() / b.v * ph;
            y[2] += a * d[2] / b.theta * ze;
            y[3] += 2.0 / 3.0 * a * d[2] * phi(u.v / b.v);
            y[4] += a * d[2] * phi(u.theta / b.theta);
            y[5] -= da * eta;
            r.shock_good[i] += d[0].abs() * cut * cut * sq;
            r.weight_flux += s.speed * da * eta;
        }
        if let Some(s) = &composite.shocks[0] {
            r.interaction[0] += cut3[j] * s.derivative[j][0].abs();
        }
        if let Some(s) = &composite.shocks[1] {
            r.interaction[1] += cut1[j] * s.derivative[j][0].abs();
        }
    }
    for j in 0..n {
        let (u, b, dp) = (&states[j], &composite.bar[j], &dpert[j]);
        let a = weight.a[j];
        let dpsi1 = dp.u[0];
        let dzeta = dp.theta;
        let dtrans = {
            let l = &states[j.saturating_sub(1)];
            let rr = &states[(j + 1).min(n - 1)];
            let h = dy * ((j + 1).min(n - 1) - j.saturating_sub(1)) as f64;
            [(rr.u[1] - l.u[1]) / h, (rr.u[2] - l.u[2]) / h]
        };
        r.d_mac += profiles.kappa
            * a
            * (t.conductivity(b.theta) * dzeta * dzeta / (u.v * u.theta)
                + 4.0 / 3.0 * t.viscosity(b.theta) * dpsi1 * dpsi1 / u.v
                + t.viscosity(u.theta) * (dtrans[0] * dtrans[0] + dtrans[1] * dtrans[1]) / u.v);
    }

    let speeds: Vec<f64> = grid.nodes().iter().map(|x| 1.0 + (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).collect();
    let w = grid.weight();
    let contact = composite.contact_derivative.as_ref();
    let micro: Vec<Result<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let f = field.cell(j);
            let proj = Projector::new(&states[j], &grid)?;
            let mut g: Vec<f64> = f.iter().zip(&proj.maxwellian).map(|(a, b)| a - b).collect();
            let mut gs = vec![0.0; g.len()];
            shock_micro(composite, j, cfg, &grid, &mut gs)?;
            for (a, b) in g.iter_mut().zip(&gs) {
                *a -= b;
            }
            let gc = match contact {
                Some(cd) => {
                    let dx = FieldDerivative { v: 0.0, u: [cd[j][1], 0.0, 0.0], theta: cd[j][2] };
                    chapman_enskog_micro(&proj, &dx, cfg.collision_frequency(&states[j]), &grid)?
                }
                None => vec![0.0; g.len()],
            };
            let (mut nc, mut nr, mut nd) = (0.0, 0.0, 0.0);
            for k in 0..g.len() {
                let rem = g[k] - gc[k];
                nc += gc[k] * gc[k] / m_sharp[k];
                nr += rem * rem / m_sharp[k];
                nd += speeds[k] * rem * rem / m_sharp[k];
            }
            Ok([w * nc, w * nr, w * nd])
        })
        .collect();
    for (j, m) in micro.into_iter().enumerate() {
        let [nc, nr, nd] = m?;
        r.g_contact_norm += nc;
        r.g_rem_norm += nr;
        r.d_mic += weight.a[j] * nd;
    }

    for x in [
        &mut r.weighted_entropy,
        &mut r.perturbation_norm,
        &mut r.single_shock_good,
        &mut r.weight_flux,
        &mut r.d_mac,
        &mut r.d_mic,
        &mut r.g_contact_norm,
        &mut r.g_rem_norm,
    ] {
        *x *= dy;
    }
    for i in 0..2 {
        for k in 0..6 {
            r.y[i][k] *= dy;
        }
        r.shock_good[i] *= dy;
        r.interaction[i] *= dy;
    }
    Ok(r)
}

/// Cellwise `‖f − M[U_ref]‖_{M_#}` with cached Maxwellians for repeated states.
pub fn pointwise_error(
    field: &DistributionField,
    reference: &[FluidState],
    m_sharp: &[f64],
) -> Result<Vec<f64>> {
    check_grid(field, reference.len(), m_sharp)?;
    let grid = field.velocity();
    let cache = maxwellian_cache(reference, grid)?;
    let w = grid.weight();
    Ok((0..reference.len())
        .into_par_iter()
        .map(|j| {
            let m = &cache[&key(&reference[j])];
            let s: f64 = field.cell(j).iter().zip(m).zip(m_sharp).map(|((a, b), r)| (a - b) * (a - b) / r).sum();
            (w * s).sqrt()
        })
        .collect())
}

fn key(s: &FluidState) -> [u64; 5] {
    [s.v.to_bits(), s.u[0].to_bits(), s.u[1].to_bits(), s.u[2].to_bits(), s.theta.to_bits()]
}

fn maxwellian_cache(states: &[FluidState], grid: &VelocityGrid) -> Result<HashMap<[u64; 5], Vec<f64>>> {
    let mut unique: Vec<FluidState> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in states {
        if seen.insert(key(s)) {
            unique.push(*s);
        }
    }
    let fitted: Vec<Result<([u64; 5], Vec<f64>)>> =
        unique.par_iter().map(|s| Ok((key(s), discrete_maxwellian(s, grid)?))).collect();
    fitted.into_iter().collect()
}

/// `Σ dy Σ w |f − M[U_ref]|²`, the instantaneous squared `L²_{y,ξ}` distance.
pub fn l2_distance_sq(field: &DistributionField, reference: &[FluidState]) -> Result<f64> {
    if field.n_cells() != reference.len() {
        return Err(KrlError::invalid("reference states do not match the field"));
    }
    let grid = field.velocity();
    let cache = maxwellian_cache(reference, grid)?;
    let s: f64 = (0..reference.len())
        .into_par_iter()
        .map(|j| {
            let m = &cache[&key(&reference[j])];
            field.cell(j).iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    Ok(s * grid.weight() * field.space().dx())
}

/// Sharp shifted Riemann states `U^E` on the cell centers of `field`.
pub fn sharp_states(profiles: &WaveProfiles, y: &[f64], tau: f64, shifts: [f64; 2]) -> Vec<FluidState> {
    y.iter().map(|&yj| profiles.sharp_state(tau, yj, shifts)).collect()
}

/// Time-trapezoid `∫ ∬ |f − M_X[U^E]|²` over stored frames `(τ, field, shifts)`.
pub fn l2_limit_error(frames: &[(f64, DistributionField, [f64; 2])], profiles: &WaveProfiles) -> Result<f64> {
    if frames.len() < 2 {
        return Err(KrlError::invalid("limit error needs at least two trajectory frames"));
    }
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, f, x) in frames {
        let y = f.space().centers();
        let e = l2_distance_sq(f, &sharp_states(profiles, &y, *t, *x))?;
        if let Some((tp, ep)) = prev {
            if !(*t > tp) {
                return Err(KrlError::invalid("trajectory frames must have increasing times"));
            }
            total += 0.5 * (t - tp) * (e + ep);
        }
        prev = Some((*t, e));
    }
    Ok(total)
}

/// Online accumulator of the limit error, fed once per step.
#[derive(Debug, Clone, Default)]
pub struct LimitErrorAccumulator {
    pub integral: f64,
    last: Option<(f64, f64)>,
}

impl LimitErrorAccumulator {
    pub fn push(&mut self, tau: f64, field: &DistributionField, reference: &[FluidState]) -> Result<f64> {
        let e = l2_distance_sq(field, reference)?;
        if let Some((tp, ep)) = self.last {
            self.integral += 0.5 * (tau - tp) * (e + ep);
        }
        self.last = Some((tau, e));
        Ok(e)
    }

    pub fn push_view(&mut self, view: &StepView<'_>, profiles: &WaveProfiles, shifts: [f64; 2]) -> Result<f64> {
        let y = view.field.space().centers();
        self.push(view.time, view.field, &sharp_states(profiles, &y, view.time, shifts))
    }
}

/// Shock-layer structure of a single-shock run at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseReport {
    /// Signed distance `y − στ − X` per cell.
    pub distance: Vec<f64>,
    /// `‖f − M_{E,κ}‖_{M_#}` per cell.
    pub error: Vec<f64>,
    /// Largest error with `|distance| ≥ plateau_distance`.
    pub plateau: f64,
    /// Largest error overall (at the layer).
    pub peak: f64,
    /// Fitted `c` in `error ≈ A e^{−c|distance|/κ}` over the fit window.
    pub rate: f64,
    pub fit_points: usize,
}

/// Where to measure the plateau and fit the exponential tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseWindow {
    pub plateau_distance: f64,
    /// Fit over `lo ≤ |distance|/κ ≤ hi`.
    pub fit_lo: f64,
    pub fit_hi: f64,
}

/// Pointwise error against the shifted two-state Maxwellian for a single-shock pattern.
pub fn single_shock_pointwise(
    field: &DistributionField,
    profiles: &WaveProfiles,
    tau: f64,
    shifts: [f64; 2],
    window: PointwiseWindow,
    m_sharp: &[f64],
) -> Result<PointwiseReport> {
    let i = match (profiles.has_shock(0), profiles.has_shock(1)) {
        (false, true) => 1,
        (true, false) => 0,
        _ => return Err(KrlError::invalid("pointwise shock report needs exactly one shock")),
    };
    if profiles.contact.is_some() || profiles.rarefaction.is_some() {
        return Err(KrlError::invalid("pointwise shock report needs a single-shock pattern"));
    }
    let y = field.space().centers();
    let center = profiles.shock_speed(i) * tau + shifts[i];
    let reference = sharp_states(profiles, &y, tau, shifts);
    let error = pointwise_error(field, &reference, m_sharp)?;
    let distance: Vec<f64> = y.iter().map(|yj| yj - center).collect();
    let plateau = distance
        .iter()
        .zip(&error)
        .filter(|(d, _)| d.abs() >= window.plateau_distance)
        .map(|(_, e)| *e)
        .fold(0.0, f64::max);
    let peak = error.iter().cloned().fold(0.0, f64::max);
    let k = profiles.kappa;
    let pts: Vec<(f64, f64)> = distance
        .iter()
        .zip(&error)
        .filter(|(d, e)| d.abs() / k >= window.fit_lo && d.abs() / k <= window.fit_hi && **e > 0.0)
        .map(|(d, e)| (d.abs() / k, e.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(KrlError::invalid(format!(
            "tail fit window [{}, {}]κ holds {} cells; widen it or refine the grid",
            window.fit_lo,
            window.fit_hi,
            pts.len()
        )));
    }
    let (slope, _) = linear_fit(&pts);
    Ok(PointwiseReport { distance, error, plateau, peak, rate: -slope, fit_points: pts.len() })
}

/// Least-squares line `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Norms `(‖G‖, ‖G_CE‖, ‖Π₁‖)` in `L²_y(M_#)`, where `G = f − M[U_f]`,
/// `G_CE = −(1/(νv)) P₁(ξ₁ M_y)` from finite-difference state gradients and `Π₁ = G − G_CE`.
pub fn micro_split_norms(field: &DistributionField, cfg: &SolverConfig, m_sharp: &[f64]) -> Result<[f64; 3]> {
    let n = field.n_cells();
    check_grid(field, n, m_sharp)?;
    let grid = field.velocity().clone();
    let states: Vec<FluidState> = (0..n).map(|j| field.cell_moments(j)?.to_state()).collect::<Result<_>>()?;
    let ds = state_derivatives(&states, field.space().dx());
    let w = grid.weight();
    let parts: Vec<Result<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let proj = Projector::new(&states[j], &grid)?;
            let ce = chapman_enskog_micro(&proj, &ds[j], cfg.collision_frequency(&states[j]), &grid)?;
            let mut acc = [0.0; 3];
            for (k, (f, m)) in field.cell(j).iter().zip(&proj.maxwellian).enumerate() {
                let g = f - m;
                let r = g - ce[k];
                acc[0] += g * g / m_sharp[k];
                acc[1] += ce[k] * ce[k] / m_sharp[k];
                acc[2] += r * r / m_sharp[k];
            }
            Ok(acc)
        })
        .collect();
    let mut tot = [0.0; 3];
    for p in parts {
        let p = p?;
        for i in 0..3 {
            tot[i] += p[i];
        }
    }
    let dy = field.space().dx();
    Ok(tot.map(|x| (x * w * dy).sqrt()))
}

/// Initial-data functional
/// `∬|f₀ − M[U₀^E]|²/M_# + κ² ∬ (|f_τ|² + |f_y|²)/M_# + κ⁴ ∬ (|f_yy|² + |f_τy|²)/M_#`
/// with `f_τ` from the kinetic equation and centered differences in `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialFunctional {
    pub distance: f64,
    pub first_derivatives: f64,
    pub second_derivatives: f64,
}

impl InitialFunctional {
    pub fn total(&self) -> f64 {
        self.distance + self.first_derivatives + self.second_derivatives
    }

    /// The functional divided by `κ`; bounded by `ε²` for well-prepared data.
    pub fn normalized(&self, kappa: f64) -> f64 {
        self.total() / kappa
    }
}

pub fn initial_functional(
    field: &DistributionField,
    profiles: &WaveProfiles,
    cfg: &SolverConfig,
    m_sharp: &[f64],
) -> Result<InitialFunctional> {
    let n = field.n_cells();
    check_grid(field, n, m_sharp)?;
    if n < 3 {
        return Err(KrlError::invalid("initial functional needs at least three cells"));
    }
    let grid = field.velocity().clone();
    let nv = grid.len();
    let dy = field.space().dx();
    let y = field.space().centers();
    let states: Vec<FluidState> = (0..n).map(|j| field.cell_moments(j)?.to_state()).collect::<Result<_>>()?;
    let sharp = sharp_states(profiles, &y, 0.0, [0.0; 2]);
    let cache = maxwellian_cache(&sharp, &grid)?;
    let nodes = grid.nodes();
    // f_τ = −((ξ₁ − u₁)/v) f_y + ν (M − f)
    let fy = |j: usize, k: usize| -> f64 {
        let (a, b, h) = if j == 0 {
            (0, 1, dy)
        } else if j == n - 1 {
            (n - 2, n - 1, dy)
        } else {
            (j - 1, j + 1, 2.0 * dy)
        };
        (field.cell(b)[k] - field.cell(a)[k]) / h
    };
    let ft: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let s = &states[j];
            let m = discrete_maxwellian(s, &grid)?;
            let nu = cfg.collision_frequency(s);
            Ok((0..nv).map(|k| -(nodes[k][0] - s.u[0]) / s.v * fy(j, k) + nu * (m[k] - field.cell(j)[k])).collect())
        })
        .collect();
    let ft: Vec<Vec<f64>> = ft.into_iter().collect::<Result<_>>()?;
    let k2 = cfg.kappa * cfg.kappa;
    let mut out = InitialFunctional { distance: 0.0, first_derivatives: 0.0, second_derivatives: 0.0 };
    for j in 0..n {
        let m = &cache[&key(&sharp[j])];
        let f = field.cell(j);
        let (jl, jr) = (j.saturating_sub(1), (j + 1).min(n - 1));
        let h = dy * (jr - jl) as f64;
        for k in 0..nv {
            let d = f[k] - m[k];
            out.distance += d * d / m_sharp[k];
            let fyk = fy(j, k);
            out.first_derivatives += k2 * (ft[j][k] * ft[j][k] + fyk * fyk) / m_sharp[k];
            let fyy = if j == 0 || j == n - 1 {
                0.0
            } else {
                (field.cell(j + 1)[k] - 2.0 * f[k] + field.cell(j - 1)[k]) / (dy * dy)
            };
            let fty = (ft[jr][k] - ft[jl][k]) / h;
            out.second_derivatives += k2 * k2 * (fyy * fyy + fty * fty) / m_sharp[k];
        }
    }
    let s = grid.weight() * dy;
    out.distance *= s;
    out.first_derivatives *= s;
    out.second_derivatives *= s;
    Ok(out)
}

/// Both sides of `∫₀¹ |f − f̄|² ≤ ½ ∫₀¹ y(1−y) |f'|²` by Gauss–Legendre quadrature.
///
/// `f` returns `(f(y), f'(y))`; the rule is exact for polynomial integrands up to degree 39.
pub fn poincare_sides(f: impl Fn(f64) -> (f64, f64)) -> (f64, f64) {
    let (nodes, weights) = gauss_legendre(20);
    let pts: Vec<(f64, f64, f64)> = nodes
        .iter()
        .zip(&weights)
        .map(|(x, w)| {
            let y = 0.5 * (x + 1.0);
            let (v, d) = f(y);
            (0.5 * w, v, y * (1.0 - y) * d * d)
        })
        .collect();
    let mean: f64 = pts.iter().map(|(w, v, _)| w * v).sum();
    let lhs: f64 = pts.iter().map(|(w, v, _)| w * (v - mean) * (v - mean)).sum();
    let rhs: f64 = 0.5 * pts.iter().map(|(w, _, g)| w * g).sum::<f64>();
    (lhs, rhs)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Write ledger rows as CSV.
pub fn write_reports(reports: &[EntropyReport], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{}", EntropyReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::SpatialGrid;
    use crate::kinetic::{maxwellian_field, prepare_initial_data, InitialMode};
    use crate::modulation::{shift_rhs, ProfileSettings};
    use crate::profiles::ShockOptions;
    use crate::riemann::WavePattern;
    use std::sync::Arc;

    const KAPPA: f64 = 0.01;

    fn single() -> WaveProfiles {
        let p = WavePattern::single_shock(FluidState::planar(1.0, 0.0, 1.0), 0.05).unwrap();
        let s = ProfileSettings { shock: ShockOptions { n_nodes: 1500, ..Default::default() }, ..Default::default() };
        WaveProfiles::build(&p, KAPPA, &s).unwrap()
    }

    fn grids(lo: f64, hi: f64, n: usize) -> (Arc<SpatialGrid>, Arc<VelocityGrid>) {
        (Arc::new(SpatialGrid::new(lo, hi, n).unwrap()), Arc::new(VelocityGrid::new([0.0; 3], 6.0, 12).unwrap()))
    }

    fn config(w: &WaveProfiles) -> SolverConfig {
        SolverConfig::new(KAPPA, 1.0, w.pattern.minus, w.pattern.plus).unwrap()
    }

    #[test]
    fn zero_perturbation_ledger_vanishes() {
        let w = single();
        let (sp, vg) = grids(-1.0, 1.0, 200);
        let cfg = config(&w);
        let f = prepare_initial_data(&w, sp.clone(), vg.clone(), InitialMode::WellPrepared, &cfg).unwrap();
        let c = w.assemble(&sp.centers(), 0.0, [0.0; 2]).unwrap();
        let m = pattern_reference(&w, &vg).unwrap();
        let r = entropy_ledger(&f, &w, &c, &cfg, &m).unwrap();
        assert!(ledger_signs_hold(&r));
        assert!(r.weighted_entropy < 1e-20 && r.perturbation_norm < 1e-20, "{r:?}");
        for y in r.y.iter().flatten() {
            assert!(y.abs() < 1e-10, "{y}");
        }
        assert!(r.shock_good[1] < 1e-20 && r.g_rem_norm < 1e-20 && r.d_mic < 1e-20, "{r:?}");
    }

    #[test]
    fn y_terms_reproduce_shift_rate() {
        let w = single();
        let (sp, vg) = grids(-1.0, 1.0, 200);
        let y = sp.centers();
        let cfg = config(&w);
        let c = w.assemble(&y, 0.1, [0.0, 0.004]).unwrap();
        let moved = w.assemble(&y, 0.1, [0.0, -0.01]).unwrap();
        let f = maxwellian_field(&moved.bar, sp.clone(), vg.clone()).unwrap();
        let m = pattern_reference(&w, &vg).unwrap();
        let r = entropy_ledger(&f, &w, &c, &cfg, &m).unwrap();
        let states: Vec<FluidState> = (0..f.n_cells()).map(|j| f.cell_moments(j).unwrap().to_state().unwrap()).collect();
        let rate = shift_rhs(&w, &c, &c.weights(), &states, sp.dx()).unwrap()[1];
        let from_y = -w.m_constant(1) / w.shock_strength(1) * (r.y[1][0] + r.y[1][1] + r.y[1][2]);
        assert!((rate - from_y).abs() <= 1e-12 * rate.abs().max(1e-300), "{rate} vs {from_y}");
        assert!(r.y[1][5] <= 0.0 && r.weighted_entropy > 0.0);
    }

    #[test]
    fn poincare_equality_for_linear() {
        let (l, r) = poincare_sides(|y| (y, 1.0));
        assert!((l - 1.0 / 12.0).abs() < 1e-14 && (r - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(20);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((s - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn limit_error_of_exact_frames_is_zero_and_translation_invariant() {
        let w = single();
        let (sp, vg) = grids(-1.0, 1.0, 100);
        let y = sp.centers();
        let frame = |t: f64, x: f64| maxwellian_field(&sharp_states(&w, &y, t, [0.0, x]), sp.clone(), vg.clone()).unwrap();
        let frames = vec![(0.0, frame(0.0, 0.0), [0.0, 0.0]), (0.1, frame(0.1, 0.01), [0.0, 0.01])];
        assert_eq!(l2_limit_error(&frames, &w).unwrap(), 0.0);
        assert!(l2_limit_error(&frames[..1], &w).is_err());

        let c = w.assemble(&y, 0.1, [0.0; 2]).unwrap();
        let f = maxwellian_field(&c.bar, sp.clone(), vg.clone()).unwrap();
        let e0 = l2_limit_error(&[(0.0, f.clone(), [0.0, 0.0]), (0.1, f.clone(), [0.0, 0.0])], &w).unwrap();
        let off = 0.2;
        let sp2 = Arc::new(SpatialGrid::new(-1.0 + off, 1.0 + off, 100).unwrap());
        let f2 = DistributionField::from_values(sp2, vg.clone(), f.values().to_vec(), 0.0).unwrap();
        let e1 = l2_limit_error(&[(0.0, f2.clone(), [0.0, off]), (0.1, f2, [0.0, off])], &w).unwrap();
        assert!(e0 > 0.0 && ((e0 - e1) / e0).abs() < 1e-12, "{e0} {e1}");
    }

    #[test]
    fn pointwise_tail_of_reconstructed_profile() {
        let w = single();
        let (sp, vg) = grids(-2.0, 2.0, 800);
        let c = w.assemble(&sp.centers(), 0.0, [0.0; 2]).unwrap();
        let f = maxwellian_field(&c.bar, sp.clone(), vg.clone()).unwrap();
        let m = pattern_reference(&w, &vg).unwrap();
        let win = PointwiseWindow { plateau_distance: 1.5, fit_lo: 20.0, fit_hi: 120.0 };
        let r = single_shock_pointwise(&f, &w, 0.0, [0.0; 2], win, &m).unwrap();
        let t = w.shock3.as_ref().unwrap();
        let (ra, rb) = (t.tail_decay_rate(-1.0).unwrap(), t.tail_decay_rate(1.0).unwrap());
        assert!(r.rate > 0.5 * ra.min(rb) && r.rate < 2.0 * ra.max(rb), "{} vs {ra} {rb}", r.rate);
        let delta = w.shock_strength(1);
        assert!(r.peak > 0.1 * delta && r.peak < 10.0 * delta, "{}", r.peak);
        assert!(r.plateau < 1e-3 * r.peak);
        let narrow = PointwiseWindow { fit_lo: 20.0, fit_hi: 20.1, ..win };
        assert!(single_shock_pointwise(&f, &w, 0.0, [0.0; 2], narrow, &m).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let w = single();
        let (sp, vg) = grids(-1.0, 1.0, 50);
        let c = w.assemble(&grids(-1.0, 1.0, 60).0.centers(), 0.0, [0.0; 2]).unwrap();
        let f = maxwellian_field(&vec![w.pattern.plus; 50], sp, vg.clone()).unwrap();
        let m = pattern_reference(&w, &vg).unwrap();
        assert!(entropy_ledger(&f, &w, &c, &config(&w), &m).is_err());
    }
}
