//! Self-similar viscous contact wave.
//!
//! The temperature solves `Θ_t = (9p_*/10)(α(Θ)Θ_x/Θ)_x` with `Θ(±∞) = θ^*, θ_*`.
//! With `α = γμ₀√Θ` this is `Θ_t = D q(Θ)_xx`, `q(Θ) = 2γμ₀√Θ`, `D = 9p_*/10`,
//! and `Θ = S(x/√(1+t))` turns it into the two-point problem
//! `−(η/2) S' = D q(S)''` on a truncated interval.

use crate::error::{KrlError, Result};
use crate::gas::{FluidState, Transport};
use crate::profiles::interp::MonotoneCubic;

#[derive(Debug, Clone, Copy)]
pub struct ContactOptions {
    pub half_width: f64,
    pub n_nodes: usize,
    /// Newton stops when the max-norm update falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub strength_cap: f64,
}

impl Default for ContactOptions {
    fn default() -> Self {
        Self { half_width: 12.0, n_nodes: 4001, tolerance: 1e-13, max_iterations: 50, strength_cap: 0.5 }
    }
}

/// Similarity profile `S(η)` with its first two derivatives.
#[derive(Debug, Clone)]
pub struct ContactProfile {
    pub eta: Vec<f64>,
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub d2s: Vec<f64>,
    pub p_star: f64,
    pub u_star: f64,
    /// `θ_*`, the left temperature.
    pub theta_left: f64,
    /// `θ^*`, the right temperature.
    pub theta_right: f64,
    pub transport: Transport,
    /// Max-norm of the discrete BVP residual at the last Newton iterate.
    pub residual: f64,
    interp_s: MonotoneCubic,
    interp_ds: MonotoneCubic,
}

/// Contact wave at one point with first `y`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSample {
    pub state: FluidState,
    /// `(v_y, u1_y, θ_y)`.
    pub derivative: [f64; 3],
}

impl ContactProfile {
    pub fn diffusivity(&self) -> f64 {
        0.9 * self.p_star
    }

    fn q_prime(&self, s: f64) -> f64 {
        self.transport.gamma * self.transport.mu0 / s.sqrt()
    }

    pub fn strength(&self) -> f64 {
        (self.theta_right - self.theta_left).abs()
    }

    /// `(S, S')` at similarity coordinate `eta`.
    pub fn similarity(&self, eta: f64) -> (f64, f64) {
        (self.interp_s.eval(eta), self.interp_ds.eval(eta))
    }

    /// Contact wave for Knudsen number `kappa` at macroscopic `(tau, y)`.
    ///
    /// With `kappa = 1` this is the normalised wave at time `t = tau`.
    pub fn sample(&self, tau: f64, y: f64, kappa: f64) -> ContactSample {
        let scale = (kappa * (kappa + tau)).sqrt();
        let eta = y / scale;
        let (s, ds) = self.similarity(eta);
        let theta_y = ds / scale;
        let q_y = self.q_prime(s) * theta_y;
        let u1 = self.u_star + 0.6 * kappa * q_y;
        // q(S)'' = −η S'/(2D) from the similarity ODE
        let qss = -eta * ds / (2.0 * self.diffusivity());
        let u1_y = 0.6 * kappa * qss / (scale * scale);
        let v = 2.0 * s / (3.0 * self.p_star);
        ContactSample {
            state: FluidState::planar(v, u1, s),
            derivative: [2.0 * theta_y / (3.0 * self.p_star), u1_y, theta_y],
        }
    }

    /// Change over the last cell at each end, relative to the contact strength.
    pub fn boundary_mismatch(&self) -> f64 {
        let n = self.s.len();
        let d = self.strength().max(f64::MIN_POSITIVE);
        ((self.s[1] - self.s[0]).abs().max((self.s[n - 1] - self.s[n - 2]).abs())) / d
    }

    /// Fitted Gaussian constant `c₀` in `|S'(η)| ≲ e^{−c₀η²}` over both tails.
    pub fn gaussian_tail_constant(&self) -> Result<f64> {
        let peak = self.ds.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak == 0.0 {
            return Err(KrlError::invalid("zero-strength contact has no tail"));
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (e, d) in self.eta.iter().zip(&self.ds) {
            let r = d.abs() / peak;
            if r < 1e-2 && r > 1e-8 {
                xs.push(e * e);
                ys.push(r.ln());
            }
        }
        if xs.len() < 4 {
            return Err(KrlError::invalid("Gaussian fit window contains fewer than 4 nodes"));
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Ok(-sxy / sxx)
    }

    pub fn is_monotone(&self) -> bool {
        let sign = (self.theta_right - self.theta_left).signum();
        self.s.windows(2).all(|w| (w[1] - w[0]) * sign >= 0.0)
    }
}

/// Solve the similarity BVP for a contact between `θ_*` (left) and `θ^*` (right).
pub fn solve_contact_profile(
    theta_left: f64,
    theta_right: f64,
    p_star: f64,
    u_star: f64,
    transport: Transport,
    opts: ContactOptions,
) -> Result<ContactProfile> {
    if !(theta_left > 0.0 && theta_right > 0.0 && p_star > 0.0) {
        return Err(KrlError::invalid("contact temperatures and pressure must be positive"));
    }
    if (theta_right - theta_left).abs() > opts.strength_cap {
        return Err(KrlError::invalid(format!(
            "contact strength {} exceeds cap {}",
            (theta_right - theta_left).abs(),
            opts.strength_cap
        )));
    }
    if opts.n_nodes < 5 {
        return Err(KrlError::invalid("contact profile needs >= 5 nodes"));
    }
    let n = opts.n_nodes;
    let l = opts.half_width;
    let h = 2.0 * l / (n - 1) as f64;
    let eta: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
    let d = 0.9 * p_star;
    let gm = transport.gamma * transport.mu0;
    let q = |s: f64| 2.0 * gm * s.sqrt();
    let qp = |s: f64| gm / s.sqrt();
    let qpp = |s: f64| -0.5 * gm / (s * s.sqrt());

    let mean = 0.5 * (theta_left + theta_right);
    let half = 0.5 * (theta_right - theta_left);
    let width = (4.0 * d * qp(mean)).sqrt().max(1e-3);
    let mut s: Vec<f64> = eta.iter().map(|e| mean + half * (e / width).tanh()).collect();
    s[0] = theta_left;
    s[n - 1] = theta_right;

    let residual = |s: &[f64], r: &mut [f64]| {
        for i in 1..n - 1 {
            r[i] = d * (q(s[i + 1]) - 2.0 * q(s[i]) + q(s[i - 1])) / (h * h)
                + 0.5 * eta[i] * (s[i + 1] - s[i - 1]) / (2.0 * h);
        }
    };
    let mut r = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = theta_left == theta_right;
    if !converged {
        for _ in 0..opts.max_iterations {
            residual(&s, &mut r);
            let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; n], vec![1.0; n], vec![0.0; n], vec![0.0; n]);
            for i in 1..n - 1 {
                lo[i] = d * qp(s[i - 1]) / (h * h) - eta[i] / (4.0 * h);
                di[i] = -2.0 * d * qp(s[i]) / (h * h);
                up[i] = d * qp(s[i + 1]) / (h * h) + eta[i] / (4.0 * h);
                rhs[i] = -r[i];
            }
            let delta = thomas(&lo, &di, &up, &rhs);
            let step = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 1..n - 1 {
                s[i] += delta[i];
                if !(s[i] > 0.0) {
                    return Err(KrlError::Convergence {
                        solver: "contact_profile",
                        detail: format!("Newton iterate left the positive cone at node {i}"),
                    });
                }
            }
            history.push(step);
            if step <= opts.tolerance * (1.0 + mean) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(KrlError::Convergence {
            solver: "contact_profile",
            detail: format!("BVP Newton did not converge; update history {history:?}"),
        });
    }
    residual(&s, &mut r);
    let res = r[1..n - 1].iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut ds = vec![0.0; n];
    for i in 1..n - 1 {
        ds[i] = (s[i + 1] - s[i - 1]) / (2.0 * h);
    }
    ds[0] = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h);
    ds[n - 1] = (3.0 * s[n - 1] - 4.0 * s[n - 2] + s[n - 3]) / (2.0 * h);
    let d2s: Vec<f64> = (0..n)
        .map(|i| (-(0.5 * eta[i] * ds[i]) / d - qpp(s[i]) * ds[i] * ds[i]) / qp(s[i]))
        .collect();
    let interp_s = MonotoneCubic::with_slopes(eta.clone(), s.clone(), ds.clone());
    let interp_ds = MonotoneCubic::with_slopes(eta.clone(), ds.clone(), d2s.clone());
    Ok(ContactProfile {
        eta,
        s,
        ds,
        d2s,
        p_star,
        u_star,
        theta_left,
        theta_right,
        transport,
        residual: res,
        interp_s,
        interp_ds,
    })
}

/// Tridiagonal solve (rows 0 and n−1 are identity rows).
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for i in 1..n {
        let m = di[i] - lo[i] * c[i - 1];
        c[i] = if i + 1 < n { up[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_strength_is_constant() {
        let c = solve_contact_profile(1.0, 1.0, 2.0 / 3.0, 0.1, Transport::default(), ContactOptions::default())
            .unwrap();
        let s = c.sample(0.5, 0.2, 1.0);
        assert_eq!(s.state.theta, 1.0);
        assert_eq!(s.state.u[0], 0.1);
    }

    #[test]
    fn profile_is_monotone_and_converged() {
        let c = solve_contact_profile(1.05, 1.0, 2.0 / 3.0, 0.0, Transport::default(), ContactOptions::default())
            .unwrap();
        assert!(c.is_monotone());
        assert!(c.residual < 1e-8, "{}", c.residual);
        assert!(c.boundary_mismatch() < 1e-8, "{}", c.boundary_mismatch());
        let c0 = c.gaussian_tail_constant().unwrap();
        // linearised heat kernel: c0 = 1/(4 D q'(θ))
        let lin = 1.0 / (4.0 * c.diffusivity() * c.q_prime(1.025));
        assert!(c0 > 0.0 && (c0 / lin - 1.0).abs() < 0.1, "{c0} vs {lin}");
    }

    #[test]
    fn pressure_is_exactly_constant() {
        let c = solve_contact_profile(1.0, 1.04, 0.7, 0.0, Transport::default(), ContactOptions::default()).unwrap();
        for y in [-1.0, -0.1, 0.0, 0.3, 2.0] {
            let s = c.sample(0.3, y, 1.0);
            assert!((s.state.pressure() - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_ode_residual_on_interpolant() {
        let c = solve_contact_profile(1.0, 1.04, 0.7, 0.0, Transport::default(), ContactOptions::default()).unwrap();
        // −(η/2)S' − D (q'(S) S')' evaluated by finite differences of the stored derivative
        let h = 1e-4;
        for eta in [-1.3, -0.2, 0.4, 1.7] {
            let (s, ds) = c.similarity(eta);
            let flux = |e: f64| {
                let (s, ds) = c.similarity(e);
                c.q_prime(s) * ds
            };
            let lhs = -0.5 * eta * ds;
            let rhs = c.diffusivity() * (flux(eta + h) - flux(eta - h)) / (2.0 * h);
            assert!((lhs - rhs).abs() < 1e-5, "{lhs} {rhs} {s}");
        }
    }
}
