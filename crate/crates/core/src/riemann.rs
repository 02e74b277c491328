//! Exact Riemann solver for the Lagrangian monatomic Euler system.
//!
//! Wave curves are closed-form for this gas: the Hugoniot locus through
//! `(v0, p0)` is `v = v0 (p + 4p0)/(4p + p0)` and isentropes are
//! `p v^{5/3} = const`. The solver matches velocity across the contact as a
//! function of the common pressure.

use std::fmt;

use crate::error::{KrlError, Result};
use crate::gas::{lagrangian_sound_speed, pressure, FluidState};

/// Genuinely nonlinear wave families of the Lagrangian system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    One,
    Three,
}

impl Family {
    /// Sign of the characteristic speed `λ = ±√(5p/(3v))`.
    pub fn sign(self) -> f64 {
        match self {
            Family::One => -1.0,
            Family::Three => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Family::One => 1,
            Family::Three => 3,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Characteristic speed of family `family` at `state`.
pub fn characteristic_speed(state: &FluidState, family: Family) -> f64 {
    family.sign() * state.sound_speed()
}

/// Point on the Hugoniot locus through `base` with volume `v`, no admissibility check.
pub(crate) fn hugoniot_locus(base: &FluidState, v: f64, family: Family) -> Result<(FluidState, f64)> {
    let (v0, t0) = (base.v, base.theta);
    let p0 = base.pressure();
    if !(4.0 * v > v0) {
        return Err(KrlError::invalid(format!(
            "volume {v} beyond the maximal compression v0/4 = {}",
            v0 / 4.0
        )));
    }
    let theta = (t0 - 0.5 * p0 * (v - v0)) * 3.0 * v / (4.0 * v - v0);
    if !(theta > 0.0) {
        return Err(KrlError::invalid(format!("Hugoniot temperature {theta} not positive")));
    }
    let dv = v - v0;
    let speed = if dv == 0.0 {
        family.sign() * base.sound_speed()
    } else {
        let p = pressure(v, theta);
        let s2 = -(p - p0) / dv;
        if !(s2 > 0.0) {
            return Err(KrlError::invalid("Hugoniot locus has no real shock speed"));
        }
        family.sign() * s2.sqrt()
    };
    let u1 = base.u[0] - speed * dv;
    Ok((FluidState::new(v, [u1, base.u[1], base.u[2]], theta), speed))
}

/// State on the `family` Hugoniot curve with volume `v_target`, and the shock speed.
///
/// `base` is the outer state of the wave: `U−` for family 1, `U+` for family 3.
/// Admissible (Lax) shocks compress the gas behind them, so `v_target ≤ v_base`.
pub fn hugoniot_state(base: &FluidState, v_target: f64, family: Family) -> Result<(FluidState, f64)> {
    if !base.is_admissible() {
        return Err(KrlError::invalid(format!("inadmissible base state {base:?}")));
    }
    if !(v_target > 0.0) {
        return Err(KrlError::invalid(format!("target volume {v_target} must be positive")));
    }
    if v_target > base.v {
        return Err(KrlError::invalid(format!(
            "v_target = {v_target} > v_base = {} lies on the rarefaction side; use rarefaction_state",
            base.v
        )));
    }
    hugoniot_locus(base, v_target, family)
}

/// Isentrope constant `K = θ v^{2/3}`.
pub fn isentrope_constant(state: &FluidState) -> f64 {
    state.theta * state.v.powf(2.0 / 3.0)
}

/// Temperature on the isentrope with constant `k` at volume `v`.
pub fn isentrope_temperature(v: f64, k: f64) -> f64 {
    k * v.powf(-2.0 / 3.0)
}

/// First characteristic speed along an isentrope, `λ1(v, s) = −(√(10K)/3) v^{-4/3}`.
pub fn lambda1_on_isentrope(v: f64, k: f64) -> f64 {
    -(10.0 * k).sqrt() / 3.0 * v.powf(-4.0 / 3.0)
}

/// Volume at which `λ1` takes the value `w < 0` on the isentrope `k`.
pub fn volume_for_lambda1(w: f64, k: f64) -> f64 {
    (-3.0 * w / (10.0 * k).sqrt()).powf(-0.75)
}

/// `u1(v) − u1(v0) = −∫_{v0}^{v} λ1 dv` in closed form.
pub(crate) fn riemann_invariant_increment(v0: f64, v: f64, k: f64) -> f64 {
    (10.0 * k).sqrt() * (v0.powf(-1.0 / 3.0) - v.powf(-1.0 / 3.0))
}

/// State reached from `base` along the 1-rarefaction curve at volume `v_target ≥ v_base`.
pub fn rarefaction_state(base: &FluidState, v_target: f64) -> Result<FluidState> {
    if !base.is_admissible() {
        return Err(KrlError::invalid(format!("inadmissible base state {base:?}")));
    }
    if !(v_target > 0.0) {
        return Err(KrlError::invalid(format!("target volume {v_target} must be positive")));
    }
    if v_target < base.v {
        return Err(KrlError::invalid(format!(
            "v_target = {v_target} < v_base = {} lies on the shock side; use hugoniot_state",
            base.v
        )));
    }
    Ok(rarefaction_locus(base, v_target))
}

fn rarefaction_locus(base: &FluidState, v: f64) -> FluidState {
    let k = isentrope_constant(base);
    let theta = isentrope_temperature(v, k);
    let u1 = base.u[0] + riemann_invariant_increment(base.v, v, k);
    FluidState::new(v, [u1, base.u[1], base.u[2]], theta)
}

/// First wave of a pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstWave {
    /// 1-shock with Lagrangian speed `speed < 0`.
    Shock { speed: f64 },
    /// 1-rarefaction fan bounded by the characteristic speeds of `U−` and `U_*`.
    Rarefaction { head: f64, tail: f64 },
}

/// Riemann decomposition `U− → U_* → U^* → U+`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePattern {
    pub minus: FluidState,
    /// `U_*`, left of the contact.
    pub lower: FluidState,
    /// `U^*`, right of the contact.
    pub upper: FluidState,
    pub plus: FluidState,
    pub first: FirstWave,
    /// 3-shock speed `σ3 > 0`.
    pub sigma3: f64,
    /// `|v− − v_*|` (shock or rarefaction).
    pub delta1: f64,
    /// `|θ^* − θ_*|`.
    pub delta_c: f64,
    /// `|v^* − v+|`.
    pub delta3: f64,
}

impl WavePattern {
    /// Constant state: all strengths zero.
    pub fn constant(state: FluidState) -> Self {
        Self {
            minus: state,
            lower: state,
            upper: state,
            plus: state,
            first: FirstWave::Shock { speed: -state.sound_speed() },
            sigma3: state.sound_speed(),
            delta1: 0.0,
            delta_c: 0.0,
            delta3: 0.0,
        }
    }

    pub fn sigma1(&self) -> Option<f64> {
        match self.first {
            FirstWave::Shock { speed } => Some(speed),
            FirstWave::Rarefaction { .. } => None,
        }
    }

    pub fn is_rarefaction(&self) -> bool {
        matches!(self.first, FirstWave::Rarefaction { .. })
    }

    /// Common pressure at the contact.
    pub fn contact_pressure(&self) -> f64 {
        self.lower.pressure()
    }

    pub fn total_strength(&self) -> f64 {
        self.delta1 + self.delta_c + self.delta3
    }

    /// Build a shock–contact–shock pattern ending at `plus` with prescribed strengths.
    ///
    /// The contact is hot on the left: `θ_* = θ^* + δ_C`.
    pub fn shock_contact_shock(plus: FluidState, delta1: f64, delta_c: f64, delta3: f64) -> Result<Self> {
        let (upper, sigma3) = hugoniot_state(&plus, plus.v - delta3, Family::Three)?;
        let lower = contact_partner(&upper, delta_c)?;
        let (minus, sigma1) = hugoniot_locus(&lower, lower.v + delta1, Family::One)?;
        Ok(Self {
            minus,
            lower,
            upper,
            plus,
            first: FirstWave::Shock { speed: sigma1 },
            sigma3,
            delta1,
            delta_c,
            delta3,
        })
    }

    /// Build a rarefaction–contact–shock pattern ending at `plus`.
    pub fn rarefaction_contact_shock(plus: FluidState, delta_r: f64, delta_c: f64, delta3: f64) -> Result<Self> {
        let (upper, sigma3) = hugoniot_state(&plus, plus.v - delta3, Family::Three)?;
        let lower = contact_partner(&upper, delta_c)?;
        if !(lower.v - delta_r > 0.0) {
            return Err(KrlError::invalid("rarefaction strength exceeds v_*"));
        }
        let minus = rarefaction_locus(&lower, lower.v - delta_r);
        Ok(Self {
            minus,
            lower,
            upper,
            plus,
            first: FirstWave::Rarefaction {
                head: -minus.sound_speed(),
                tail: -lower.sound_speed(),
            },
            sigma3,
            delta1: delta_r,
            delta_c,
            delta3,
        })
    }

    /// Single 3-shock ending at `plus`.
    pub fn single_shock(plus: FluidState, delta3: f64) -> Result<Self> {
        Self::shock_contact_shock(plus, 0.0, 0.0, delta3)
    }

    /// Check the Lax inequalities `λ_i(right) < σ_i < λ_i(left)` for every shock present.
    pub fn satisfies_lax(&self) -> bool {
        let mut ok = true;
        if let FirstWave::Shock { speed } = self.first {
            if self.delta1 > 0.0 {
                ok &= characteristic_speed(&self.lower, Family::One) < speed
                    && speed < characteristic_speed(&self.minus, Family::One);
            }
        }
        if self.delta3 > 0.0 {
            ok &= characteristic_speed(&self.plus, Family::Three) < self.sigma3
                && self.sigma3 < characteristic_speed(&self.upper, Family::Three);
        }
        ok
    }
}

fn contact_partner(upper: &FluidState, delta_c: f64) -> Result<FluidState> {
    let p = upper.pressure();
    let theta = upper.theta + delta_c;
    if !(theta > 0.0) {
        return Err(KrlError::invalid("contact strength drives θ_* non-positive"));
    }
    Ok(FluidState::planar(2.0 * theta / (3.0 * p), upper.u[0], theta))
}

/// Iteration controls for [`solve_riemann_with`].
#[derive(Debug, Clone, Copy)]
pub struct RiemannOptions {
    pub max_iterations: usize,
    /// Tolerance on the velocity mismatch at the contact.
    pub u_tolerance: f64,
    /// Largest admissible total strength `δ1 + δ_C + δ3`.
    pub strength_cap: f64,
}

impl Default for RiemannOptions {
    fn default() -> Self {
        Self { max_iterations: 200, u_tolerance: 1e-12, strength_cap: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct CurvePoint {
    v: f64,
    u1: f64,
    du_dp: f64,
}

/// Velocity behind the 1-wave from `minus` at pressure `p`.
fn first_curve(minus: &FluidState, p: f64) -> CurvePoint {
    let (v0, p0) = (minus.v, minus.pressure());
    if p >= p0 {
        let v = v0 * (p + 4.0 * p0) / (4.0 * p + p0);
        let dv_dp = -15.0 * p0 * v0 / (4.0 * p + p0).powi(2);
        let (a, b) = (p - p0, v0 - v);
        let root = (a * b).sqrt();
        let du_dp = if root > 0.0 {
            -(b - a * dv_dp) / (2.0 * root)
        } else {
            -1.0 / (minus.sound_speed())
        };
        CurvePoint { v, u1: minus.u[0] - root, du_dp }
    } else {
        let v = v0 * (p0 / p).powf(0.6);
        let k = isentrope_constant(minus);
        let c = (10.0 * k).sqrt() / 3.0 * v.powf(-4.0 / 3.0);
        let dv_dp = -0.6 * v / p;
        CurvePoint { v, u1: minus.u[0] + riemann_invariant_increment(v0, v, k), du_dp: c * dv_dp }
    }
}

/// Velocity behind the 3-shock from `plus` at pressure `p ≥ p+`.
fn third_curve(plus: &FluidState, p: f64) -> CurvePoint {
    let (v0, p0) = (plus.v, plus.pressure());
    let v = v0 * (p + 4.0 * p0) / (4.0 * p + p0);
    let dv_dp = -15.0 * p0 * v0 / (4.0 * p + p0).powi(2);
    let (a, b) = (p - p0, v0 - v);
    let root = (a * b).max(0.0).sqrt();
    let du_dp = if root > 0.0 { (b - a * dv_dp) / (2.0 * root) } else { 1.0 / plus.sound_speed() };
    CurvePoint { v, u1: plus.u[0] + root, du_dp }
}

/// [`solve_riemann_with`] using default options.
pub fn solve_riemann(minus: &FluidState, plus: &FluidState) -> Result<WavePattern> {
    solve_riemann_with(minus, plus, RiemannOptions::default())
}

/// Solve the Riemann problem between `minus` and `plus`.
///
/// Supported patterns are shock/rarefaction – contact – shock. Data that
/// would need a 3-rarefaction, or that forms vacuum, are rejected.
pub fn solve_riemann_with(minus: &FluidState, plus: &FluidState, opts: RiemannOptions) -> Result<WavePattern> {
    for s in [minus, plus] {
        if !s.is_admissible() {
            return Err(KrlError::invalid(format!("inadmissible Riemann state {s:?}")));
        }
        if s.u[1] != 0.0 || s.u[2] != 0.0 {
            return Err(KrlError::invalid("Riemann data must have u2 = u3 = 0"));
        }
    }
    if minus == plus {
        return Ok(WavePattern::constant(*minus));
    }
    let p_plus = plus.pressure();
    let mismatch = |p: f64| first_curve(minus, p).u1 - third_curve(plus, p).u1;

    let h_low = mismatch(p_plus);
    if h_low < -opts.u_tolerance {
        // The 3-wave would be a rarefaction, or vacuum forms on the left.
        let vac = minus.u[0] + (10.0 * isentrope_constant(minus)).sqrt() * minus.v.powf(-1.0 / 3.0);
        if vac <= plus.u[0] {
            return Err(KrlError::Convergence {
                solver: "riemann",
                detail: "vacuum formation between the outer states".into(),
            });
        }
        return Err(KrlError::invalid(
            "data require a 3-rarefaction; only (S|R)–C–S patterns are supported",
        ));
    }

    // Bracket the root of the decreasing mismatch function.
    let mut lo = p_plus;
    let mut hi = p_plus.max(minus.pressure()) * 2.0;
    let mut grow = 0;
    while mismatch(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(KrlError::Convergence {
                solver: "riemann",
                detail: "failed to bracket the contact pressure".into(),
            });
        }
    }

    let mut p = if h_low.abs() <= opts.u_tolerance { p_plus } else { 0.5 * (lo + hi) };
    let mut history = Vec::new();
    let mut converged = h_low.abs() <= opts.u_tolerance;
    for _ in 0..opts.max_iterations {
        if converged {
            break;
        }
        let l = first_curve(minus, p);
        let r = third_curve(plus, p);
        let h = l.u1 - r.u1;
        history.push(h);
        if h.abs() <= opts.u_tolerance {
            converged = true;
            break;
        }
        if h > 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let dh = l.du_dp - r.du_dp;
        let newton = p - h / dh;
        p = if dh < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            converged = mismatch(p).abs() <= 1e3 * opts.u_tolerance;
            break;
        }
    }
    if !converged {
        return Err(KrlError::Convergence {
            solver: "riemann",
            detail: format!("contact matching did not converge; residual history {history:?}"),
        });
    }

    let l = first_curve(minus, p);
    let r = third_curve(plus, p);
    let lower = FluidState::planar(l.v, l.u1, 1.5 * p * l.v);
    // Use the 1-side velocity on both sides so u1 is exactly continuous.
    let upper = FluidState::planar(r.v, l.u1, 1.5 * p * r.v);
    let first = if p >= minus.pressure() {
        let speed = if (minus.v - lower.v).abs() > 0.0 {
            -(((p - minus.pressure()) / (minus.v - lower.v)).sqrt())
        } else {
            -minus.sound_speed()
        };
        FirstWave::Shock { speed }
    } else {
        FirstWave::Rarefaction { head: -minus.sound_speed(), tail: -lower.sound_speed() }
    };
    let sigma3 = if plus.v > upper.v {
        ((p - p_plus) / (plus.v - upper.v)).sqrt()
    } else {
        plus.sound_speed()
    };
    let pattern = WavePattern {
        minus: *minus,
        lower,
        upper,
        plus: *plus,
        first,
        sigma3,
        delta1: (minus.v - lower.v).abs(),
        delta_c: (upper.theta - lower.theta).abs(),
        delta3: (upper.v - plus.v).abs(),
    };
    if pattern.total_strength() > opts.strength_cap {
        return Err(KrlError::invalid(format!(
            "total strength {} exceeds cap {}",
            pattern.total_strength(),
            opts.strength_cap
        )));
    }
    Ok(pattern)
}

/// Residuals of the three Rankine–Hugoniot conditions for a jump at speed `s`.
pub fn rankine_hugoniot_residual(left: &FluidState, right: &FluidState, s: f64) -> [f64; 3] {
    let (pl, pr) = (left.pressure(), right.pressure());
    [
        -s * (right.v - left.v) - (right.u[0] - left.u[0]),
        -s * (right.u[0] - left.u[0]) + (pr - pl),
        -s * (right.total_energy() - left.total_energy()) + (pr * right.u[0] - pl * left.u[0]),
    ]
}

/// Sound speed helper re-exported for callers that hold raw `(v, θ)`.
pub fn sound_speed(v: f64, theta: f64) -> f64 {
    lagrangian_sound_speed(v, theta)
}
