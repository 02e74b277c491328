//! Smooth approximate 1-rarefaction built from an exact Burgers solution.
//!
//! `w` solves `w_t + w w_x = 0` with data `w(0,x) = w_m + (w_* − w_m)(1 + tanh(x/κ))/2`.
//! The fluid state follows from `λ1(v, s_*) = w` on the isentrope through `U_*`.

use crate::error::{KrlError, Result};
use crate::gas::FluidState;
use crate::riemann::{isentrope_constant, isentrope_temperature, lambda1_on_isentrope, riemann_invariant_increment, volume_for_lambda1};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RarefactionWave {
    /// `U_*`, the state behind the fan.
    pub star: FluidState,
    pub w_minus: f64,
    pub w_star: f64,
    pub kappa: f64,
    /// The Burgers solution is evaluated at `t + time_offset`.
    pub time_offset: f64,
    k: f64,
}

/// Rarefaction at one point with first `x`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RarefactionSample {
    pub state: FluidState,
    pub w: f64,
    /// `(v_x, u1_x, θ_x)`.
    pub derivative: [f64; 3],
}

impl RarefactionWave {
    /// Wave between `minus` and `star`, which must share an isentrope.
    pub fn new(minus: &FluidState, star: &FluidState, kappa: f64, time_offset: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(KrlError::invalid("rarefaction smoothing scale must be positive"));
        }
        if !(time_offset >= 0.0) {
            return Err(KrlError::invalid("rarefaction time offset must be non-negative"));
        }
        let k = isentrope_constant(star);
        if (isentrope_constant(minus) - k).abs() > 1e-10 * k {
            return Err(KrlError::invalid("rarefaction end states are not on one isentrope"));
        }
        let w_minus = lambda1_on_isentrope(minus.v, k);
        let w_star = lambda1_on_isentrope(star.v, k);
        Self::from_speeds(*star, w_minus, w_star, kappa, time_offset)
    }

    /// Wave from Burgers end values on the isentrope through `star`.
    pub fn from_speeds(star: FluidState, w_minus: f64, w_star: f64, kappa: f64, time_offset: f64) -> Result<Self> {
        if !(w_minus < w_star) {
            return Err(KrlError::invalid(format!(
                "rarefaction needs expansive data w_- < w_*, got {w_minus} >= {w_star}"
            )));
        }
        if !(w_star < 0.0) {
            return Err(KrlError::invalid("1-rarefaction speeds must be negative"));
        }
        if !(kappa > 0.0) {
            return Err(KrlError::invalid("rarefaction smoothing scale must be positive"));
        }
        Ok(Self { star, w_minus, w_star, kappa, time_offset, k: isentrope_constant(&star) })
    }

    fn w0(&self, x: f64) -> (f64, f64) {
        // 1 + tanh(y) = 2/(1 + e^{-2y}), sech²(y) = 4e^{-2|y|}/(1 + e^{-2|y|})² without cancellation
        let jump = self.w_star - self.w_minus;
        let y = x / self.kappa;
        let e = (-2.0 * y.abs()).exp();
        let logistic = if y >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        (self.w_minus + jump * logistic, 0.5 * jump * sech2 / self.kappa)
    }

    /// Burgers solution `(w, w_x)` at `(t, x)` through the characteristic foot.
    pub fn burgers(&self, t: f64, x: f64) -> (f64, f64) {
        let te = t + self.time_offset;
        if te == 0.0 {
            return self.w0(x);
        }
        // g(x0) = x0 + w0(x0) t − x is increasing; bracket and polish with Newton.
        let mut lo = x - self.w_star * te;
        let mut hi = x - self.w_minus * te;
        let mut x0 = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (w, dw) = self.w0(x0);
            let g = x0 + w * te - x;
            if g.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
            if g > 0.0 {
                hi = x0;
            } else {
                lo = x0;
            }
            let newton = x0 - g / (1.0 + dw * te);
            x0 = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        let (w, dw) = self.w0(x0);
        (w, dw / (1.0 + dw * te))
    }

    /// State on the isentrope where `λ1 = w`.
    pub fn state_for_speed(&self, w: f64) -> FluidState {
        let v = volume_for_lambda1(w, self.k);
        let theta = isentrope_temperature(v, self.k);
        let u1 = self.star.u[0] + riemann_invariant_increment(self.star.v, v, self.k);
        FluidState::planar(v, u1, theta)
    }

    /// Smooth wave at normalised time `t` and position `x`.
    pub fn evaluate(&self, t: f64, x: f64) -> RarefactionSample {
        let (w, wx) = self.burgers(t, x);
        let state = self.state_for_speed(w);
        // dv/dw = −3v/(4w) > 0, u1_x = (3v/4) w_x, θ_x = −(2θ/(3v)) v_x
        let vx = -3.0 * state.v / (4.0 * w) * wx;
        let ux = 0.75 * state.v * wx;
        let tx = -2.0 * state.theta / (3.0 * state.v) * vx;
        RarefactionSample { state, w, derivative: [vx, ux, tx] }
    }

    /// Inviscid centered fan at `(t, x)`; a step at `t = 0`.
    pub fn sharp(&self, t: f64, x: f64) -> FluidState {
        let w = if t <= 0.0 {
            if x < 0.0 {
                self.w_minus
            } else {
                self.w_star
            }
        } else {
            (x / t).clamp(self.w_minus, self.w_star)
        };
        self.state_for_speed(w)
    }
}

/// Free-function form of [`RarefactionWave::evaluate`] for a wave anchored at `star`.
pub fn evaluate_rarefaction(star: &FluidState, w_minus: f64, w_star: f64, kappa: f64, t: f64, x: f64) -> Result<FluidState> {
    Ok(RarefactionWave::from_speeds(*star, w_minus, w_star, kappa, 0.0)?.evaluate(t, x).state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::rarefaction_state;

    fn wave(kappa: f64) -> RarefactionWave {
        let minus = FluidState::planar(1.0, 0.0, 1.0);
        let star = rarefaction_state(&minus, 1.05).unwrap();
        RarefactionWave::new(&minus, &star, kappa, 0.0).unwrap()
    }

    #[test]
    fn midpoint_at_time_zero() {
        let r = wave(0.02);
        let (w, _) = r.burgers(0.0, 0.0);
        assert!((w - 0.5 * (r.w_minus + r.w_star)).abs() < 1e-15);
    }

    #[test]
    fn burgers_residual_is_small() {
        let r = wave(0.05);
        let (t, h) = (0.4, 1e-5);
        for x in [-0.8, -0.5, -0.3, 0.0] {
            let (w, wx) = r.burgers(t, x);
            let wt = (r.burgers(t + h, x).0 - r.burgers(t - h, x).0) / (2.0 * h);
            assert!((wt + w * wx).abs() < 1e-6, "x={x}: {}", wt + w * wx);
        }
    }

    #[test]
    fn signs_and_end_states() {
        let r = wave(0.02);
        for i in 0..200 {
            let x = -1.5 + i as f64 * 0.01;
            let s = r.evaluate(0.5, x);
            assert!(s.derivative[0] > 0.0 && s.derivative[1] > 0.0 && s.derivative[2] < 0.0);
        }
        let far = r.evaluate(0.5, 10.0).state;
        assert!(far.max_abs_diff(&r.star) < 1e-12);
    }

    #[test]
    fn rejects_compressive_data() {
        let s = FluidState::planar(1.0, 0.0, 1.0);
        assert!(RarefactionWave::from_speeds(s, -1.0, -1.2, 0.1, 0.0).is_err());
    }
}
