//! Navier–Stokes viscous shock profiles.
//!
//! A traveling wave `U(x − σt)` of the Lagrangian Navier–Stokes system is
//! integrated once in `z`, which leaves the planar system
//!
//! ```text
//! v' = −(3v/(4μσ)) [σ²(v − v_B) + p − p_B]
//! θ' = −(σv/α)     [θ − θ_B − σ²(v − v_B)²/2 + p_B (v − v_B)]
//! ```
//!
//! with `u1 − u1_B = −σ(v − v_B)`, valid for either end state `B`. One end is
//! a saddle and the other a node; the heteroclinic orbit is the branch of the
//! saddle's one-dimensional manifold that enters the node.

use crate::error::{KrlError, Result};
use crate::gas::{FluidState, Transport};
use crate::profiles::interp::MonotoneCubic;
use crate::riemann::{hugoniot_locus, rankine_hugoniot_residual, Family};

/// Controls for [`solve_shock_profile`].
#[derive(Debug, Clone, Copy)]
pub struct ShockOptions {
    pub n_nodes: usize,
    /// Table half-width is `half_width_factor / δ`.
    pub half_width_factor: f64,
    /// Required end-state mismatch at the table edges.
    pub tail_tolerance: f64,
    /// RK4 substeps per table spacing.
    pub substeps: usize,
    pub strength_cap: f64,
}

impl Default for ShockOptions {
    fn default() -> Self {
        Self { n_nodes: 4000, half_width_factor: 20.0, tail_tolerance: 1e-8, substeps: 8, strength_cap: 0.5 }
    }
}

/// Tabulated viscous shock profile in the normalised variable `z`.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    pub family: Family,
    pub speed: f64,
    pub left: FluidState,
    pub right: FluidState,
    pub transport: Transport,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub u1: Vec<f64>,
    pub theta: Vec<f64>,
    pub dv: Vec<f64>,
    pub du1: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub d2v: Vec<f64>,
    pub d2u1: Vec<f64>,
    pub d2theta: Vec<f64>,
    values: [MonotoneCubic; 3],
    slopes: [MonotoneCubic; 3],
}

/// Value and `z`-derivative of a profile at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub state: FluidState,
    /// `(v', u1', θ')`.
    pub derivative: [f64; 3],
}

impl ProfileTable {
    /// Volume jump `|v_R − v_L|`.
    pub fn strength(&self) -> f64 {
        (self.right.v - self.left.v).abs()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Profile at `z` (normalised Knudsen number).
    pub fn eval(&self, z: f64) -> ProfileSample {
        let v = self.values[0].eval(z);
        let u1 = self.values[1].eval(z);
        let theta = self.values[2].eval(z);
        let derivative = [self.slopes[0].eval(z), self.slopes[1].eval(z), self.slopes[2].eval(z)];
        ProfileSample { state: FluidState::planar(v, u1, theta), derivative }
    }

    /// Profile of Knudsen number `kappa` at offset `y` from its center: `U(y/κ)`, derivatives in `y`.
    pub fn eval_scaled(&self, y: f64, kappa: f64) -> ProfileSample {
        let mut s = self.eval(y / kappa);
        for d in &mut s.derivative {
            *d /= kappa;
        }
        s
    }

    /// Largest mismatch between the table edges and the end states.
    pub fn tail_mismatch(&self) -> f64 {
        let n = self.len();
        let a = FluidState::planar(self.v[0], self.u1[0], self.theta[0]).max_abs_diff(&self.left);
        let b = FluidState::planar(self.v[n - 1], self.u1[n - 1], self.theta[n - 1]).max_abs_diff(&self.right);
        a.max(b)
    }

    /// Largest residual of the integrated ODEs at interior nodes, using
    /// sixth-order central differences of the tabulated `v`, `θ`.
    pub fn ode_residual(&self) -> f64 {
        let n = self.len();
        if n < 7 {
            return 0.0;
        }
        let h = self.z[1] - self.z[0];
        let rhs = Rhs::new(&self.left, self.speed, self.transport);
        let fd = |col: &[f64], j: usize| {
            (45.0 * (col[j + 1] - col[j - 1]) - 9.0 * (col[j + 2] - col[j - 2]) + (col[j + 3] - col[j - 3]))
                / (60.0 * h)
        };
        let mut worst: f64 = 0.0;
        for j in 3..n - 3 {
            let (fv, ft) = rhs.eval(self.v[j] - self.left.v, self.theta[j] - self.left.theta);
            worst = worst.max((fd(&self.v, j) - fv).abs()).max((fd(&self.theta, j) - ft).abs());
            let mass = self.u1[j] - self.left.u[0] + self.speed * (self.v[j] - self.left.v);
            worst = worst.max(mass.abs());
        }
        worst
    }

    /// Whether the Lax-profile monotonicity signs hold strictly at every node.
    ///
    /// Family 1: `v' < 0, u1' < 0, θ' > 0`. Family 3: `v' > 0, u1' < 0, θ' < 0`.
    pub fn monotonicity_holds(&self) -> bool {
        if self.strength() == 0.0 {
            return true;
        }
        let sv = match self.family {
            Family::One => -1.0,
            Family::Three => 1.0,
        };
        (0..self.len()).all(|j| sv * self.dv[j] > 0.0 && self.du1[j] < 0.0 && -sv * self.dtheta[j] > 0.0)
    }

    /// `max_z |v''| / (δ max|v'|)`-type constant for the second-derivative bound.
    pub fn second_derivative_constant(&self) -> f64 {
        let delta = self.strength();
        if delta == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (d1, d2) in [(&self.dv, &self.d2v), (&self.du1, &self.d2u1), (&self.dtheta, &self.d2theta)] {
            for j in 0..self.len() {
                if d1[j].abs() > 1e-12 * delta * delta {
                    worst = worst.max(d2[j].abs() / (delta * d1[j].abs()));
                }
            }
        }
        worst
    }

    /// Fitted decay rate `c` of `|v − v_end| ∝ e^{−c|z|}` on the tail at `side` (−1 left, +1 right).
    pub fn tail_decay_rate(&self, side: f64) -> Result<f64> {
        let delta = self.strength();
        let end = if side < 0.0 { self.left.v } else { self.right.v };
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for j in 0..self.len() {
            if self.z[j] * side <= 0.0 {
                continue;
            }
            let dev = (self.v[j] - end).abs();
            if dev < 1e-3 * delta && dev > 1e-7 * delta {
                xs.push(self.z[j].abs());
                ys.push(dev.ln());
            }
        }
        if xs.len() < 4 {
            return Err(KrlError::invalid("tail fit window contains fewer than 4 nodes"));
        }
        let (slope, _) = linear_fit(&xs, &ys);
        Ok(-slope)
    }

    /// Reflect `(z, u1) → (−z, −u1)`, mapping a family-3 profile to family 1 and back.
    pub fn reflected(&self) -> ProfileTable {
        let rev = |c: &Vec<f64>, s: f64| -> Vec<f64> { c.iter().rev().map(|x| s * x).collect() };
        let z: Vec<f64> = self.z.iter().rev().map(|x| -x).collect();
        let flip = |s: &FluidState| FluidState::planar(s.v, -s.u[0], s.theta);
        build_table(
            match self.family {
                Family::One => Family::Three,
                Family::Three => Family::One,
            },
            -self.speed,
            flip(&self.right),
            flip(&self.left),
            self.transport,
            z,
            [rev(&self.v, 1.0), rev(&self.u1, -1.0), rev(&self.theta, 1.0)],
            [rev(&self.dv, -1.0), rev(&self.du1, 1.0), rev(&self.dtheta, -1.0)],
            [rev(&self.d2v, 1.0), rev(&self.d2u1, -1.0), rev(&self.d2theta, 1.0)],
        )
    }

    /// Constant table for a zero-strength wave.
    pub fn constant(family: Family, state: FluidState, transport: Transport) -> Self {
        let z = vec![-1.0, 1.0];
        let c = |x: f64| vec![x, x];
        build_table(
            family,
            family.sign() * state.sound_speed(),
            state,
            state,
            transport,
            z,
            [c(state.v), c(state.u[0]), c(state.theta)],
            [c(0.0), c(0.0), c(0.0)],
            [c(0.0), c(0.0), c(0.0)],
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn build_table(
    family: Family,
    speed: f64,
    left: FluidState,
    right: FluidState,
    transport: Transport,
    z: Vec<f64>,
    vals: [Vec<f64>; 3],
    ders: [Vec<f64>; 3],
    second: [Vec<f64>; 3],
) -> ProfileTable {
    let [v, u1, theta] = vals;
    let [dv, du1, dtheta] = ders;
    let [d2v, d2u1, d2theta] = second;
    let values = [
        MonotoneCubic::with_slopes(z.clone(), v.clone(), dv.clone()),
        MonotoneCubic::with_slopes(z.clone(), u1.clone(), du1.clone()),
        MonotoneCubic::with_slopes(z.clone(), theta.clone(), dtheta.clone()),
    ];
    let slopes = [
        MonotoneCubic::with_slopes(z.clone(), dv.clone(), d2v.clone()),
        MonotoneCubic::with_slopes(z.clone(), du1.clone(), d2u1.clone()),
        MonotoneCubic::with_slopes(z.clone(), dtheta.clone(), d2theta.clone()),
    ];
    ProfileTable {
        family,
        speed,
        left,
        right,
        transport,
        z,
        v,
        u1,
        theta,
        dv,
        du1,
        dtheta,
        d2v,
        d2u1,
        d2theta,
        values,
        slopes,
    }
}

/// Right-hand side of the reduced ODE in deviations `(V, Θ)` from a base end state.
#[derive(Debug, Clone, Copy)]
struct Rhs {
    vb: f64,
    tb: f64,
    pb: f64,
    sigma: f64,
    transport: Transport,
}

impl Rhs {
    fn new(base: &FluidState, sigma: f64, transport: Transport) -> Self {
        Self { vb: base.v, tb: base.theta, pb: base.pressure(), sigma, transport }
    }

    fn eval(&self, dv: f64, dt: f64) -> (f64, f64) {
        let v = self.vb + dv;
        let theta = self.tb + dt;
        let dp = 2.0 * (self.vb * dt - self.tb * dv) / (3.0 * v * self.vb);
        let s = self.sigma;
        let mu = self.transport.viscosity(theta);
        let alpha = self.transport.conductivity(theta);
        let fv = -(3.0 * v / (4.0 * mu * s)) * (s * s * dv + dp);
        let ft = -(s * v / alpha) * (dt - 0.5 * s * s * dv * dv + self.pb * dv);
        (fv, ft)
    }

    /// Jacobian at the base point.
    fn jacobian(&self) -> [[f64; 2]; 2] {
        let s = self.sigma;
        let mu = self.transport.viscosity(self.tb);
        let alpha = self.transport.conductivity(self.tb);
        [
            [-(3.0 * self.vb / (4.0 * mu * s)) * (s * s - self.pb / self.vb), -1.0 / (2.0 * mu * s)],
            [-(s * self.vb / alpha) * self.pb, -s * self.vb / alpha],
        ]
    }

    /// Numerical Jacobian at an arbitrary deviation.
    fn jacobian_at(&self, dv: f64, dt: f64) -> [[f64; 2]; 2] {
        let e = 1e-7;
        let (a, b) = self.eval(dv + e, dt);
        let (c, d) = self.eval(dv - e, dt);
        let (p, q) = self.eval(dv, dt + e);
        let (r, s) = self.eval(dv, dt - e);
        [[(a - c) / (2.0 * e), (p - r) / (2.0 * e)], [(b - d) / (2.0 * e), (q - s) / (2.0 * e)]]
    }

    fn rk4(&self, y: (f64, f64), h: f64) -> (f64, f64) {
        let k1 = self.eval(y.0, y.1);
        let k2 = self.eval(y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1);
        let k3 = self.eval(y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1);
        let k4 = self.eval(y.0 + h * k3.0, y.1 + h * k3.1);
        (
            y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        )
    }
}

/// Real eigenpairs of a 2×2 matrix, ascending eigenvalues.
fn eig2(m: [[f64; 2]; 2]) -> Option<[(f64, [f64; 2]); 2]> {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let lams = [0.5 * (tr - r), 0.5 * (tr + r)];
    let vec = |l: f64| {
        let v1 = [b, l - a];
        let v2 = [l - d, c];
        let [x, y] = if v1[0].hypot(v1[1]) >= v2[0].hypot(v2[1]) { v1 } else { v2 };
        let n = x.hypot(y);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [x / n, y / n]
        }
    };
    Some([(lams[0], vec(lams[0])), (lams[1], vec(lams[1]))])
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Viscous shock profile of `family` between `left` and `right` with speed `sigma`.
///
/// The end states must be connected by the Hugoniot locus at that speed.
pub fn solve_shock_profile(
    family: Family,
    left: &FluidState,
    right: &FluidState,
    sigma: f64,
    transport: Transport,
    opts: ShockOptions,
) -> Result<ProfileTable> {
    for s in [left, right] {
        if !s.is_admissible() || s.u[1] != 0.0 || s.u[2] != 0.0 {
            return Err(KrlError::invalid(format!("inadmissible shock end state {s:?}")));
        }
    }
    if !(transport.mu0 > 0.0 && transport.gamma > 0.0) {
        return Err(KrlError::invalid("transport coefficients must be positive"));
    }
    let delta = (right.v - left.v).abs();
    if delta == 0.0 {
        if left.max_abs_diff(right) > 0.0 {
            return Err(KrlError::invalid("equal volumes but different end states"));
        }
        return Ok(ProfileTable::constant(family, *left, transport));
    }
    if delta > opts.strength_cap {
        return Err(KrlError::invalid(format!("shock strength {delta} exceeds cap {}", opts.strength_cap)));
    }
    if sigma * family.sign() <= 0.0 {
        return Err(KrlError::invalid(format!("speed {sigma} has the wrong sign for family {family}")));
    }
    // Jump conditions within a tolerance that admits data built by the Riemann solver.
    let rh = rankine_hugoniot_residual(left, right, sigma);
    let scale = 1.0 + sigma.abs();
    if rh.iter().any(|r| r.abs() > 1e-9 * scale) {
        return Err(KrlError::invalid(format!("end states violate the jump conditions: residuals {rh:?}")));
    }
    if opts.n_nodes < 16 || opts.substeps == 0 {
        return Err(KrlError::invalid("profile table needs >= 16 nodes and >= 1 substep"));
    }

    let rhs_l = Rhs::new(left, sigma, transport);
    let rhs_r = Rhs::new(right, sigma, transport);
    let det = |m: [[f64; 2]; 2]| m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let (jl, jr) = (rhs_l.jacobian(), rhs_r.jacobian());
    // forward = integrate z upward from a saddle at L; otherwise downward from a saddle at R
    let forward = if det(jl) < 0.0 && det(jr) > 0.0 {
        true
    } else if det(jr) < 0.0 && det(jl) > 0.0 {
        false
    } else {
        return Err(KrlError::Convergence {
            solver: "shock_profile",
            detail: format!("no saddle–node pair: det J_L = {}, det J_R = {}", det(jl), det(jr)),
        });
    };
    let (base, other, rhs, jac) = if forward { (left, right, rhs_l, jl) } else { (right, left, rhs_r, jr) };
    let pairs = eig2(jac).ok_or_else(|| KrlError::Convergence {
        solver: "shock_profile",
        detail: "complex eigenvalues at the saddle".into(),
    })?;
    // leaving L forward needs λ > 0; leaving R backward needs λ < 0
    let (lambda, mut e) = if forward { pairs[1] } else { pairs[0] };
    if e[0] * (other.v - base.v) < 0.0 {
        e = [-e[0], -e[1]];
    }
    let mid = 0.5 * (left.v + right.v);

    let mut half = opts.half_width_factor / delta;
    let n = opts.n_nodes;
    let mut trials = Vec::new();
    for _extend in 0..8 {
        let h = 2.0 * half / (n - 1) as f64;
        let z: Vec<f64> = (0..n).map(|j| -half + j as f64 * h).collect();
        let mut c = 0.5 * delta * (-(lambda.abs()) * 2.0 * half * 0.5).exp();
        let mut devs = vec![(0.0, 0.0); n];
        let mut aligned = false;
        for _iter in 0..60 {
            integrate(&rhs, &mut devs, c, e, h, forward, opts.substeps);
            match crossing(&z, &devs, &rhs, base.v, mid) {
                Some(zm) => {
                    trials.push((half, c, zm));
                    if zm.abs() < 1e-11 * half {
                        aligned = true;
                        break;
                    }
                    let factor = (lambda * zm).exp();
                    c *= factor;
                }
                None => {
                    // midpoint never reached, or reached before the start; move toward it
                    let end_dev = if forward { devs[n - 1].0 } else { devs[0].0 };
                    let reached = (base.v + end_dev - mid) * (other.v - mid) > 0.0;
                    trials.push((half, c, f64::NAN));
                    c *= if reached { 1e-3 } else { 1e3 };
                }
            }
            if !(c > 0.0) || !c.is_finite() {
                break;
            }
        }
        if !aligned {
            return Err(KrlError::Convergence {
                solver: "shock_profile",
                detail: format!("midpoint normalisation failed; trials (half-width, amplitude, z_mid) = {trials:?}"),
            });
        }
        let values: Vec<(f64, f64)> = devs.iter().map(|(a, b)| (base.v + a, base.theta + b)).collect();
        let (first, last) = (values[0], values[n - 1]);
        let mis_l = (first.0 - left.v).abs().max((first.1 - left.theta).abs());
        let mis_r = (last.0 - right.v).abs().max((last.1 - right.theta).abs());
        if mis_l.max(mis_r) > opts.tail_tolerance {
            half *= 1.5;
            continue;
        }
        let rhs_left = Rhs::new(left, sigma, transport);
        let mut cols: [Vec<f64>; 9] = Default::default();
        for j in 0..n {
            let (dv, dt) = devs[j];
            let (v, theta) = (base.v + dv, base.theta + dt);
            let u1 = left.u[0] - sigma * (v - left.v);
            let (fv, ft) = rhs.eval(dv, dt);
            let jm = rhs_left.jacobian_at(v - left.v, theta - left.theta);
            let sv = jm[0][0] * fv + jm[0][1] * ft;
            let st = jm[1][0] * fv + jm[1][1] * ft;
            let vals = [v, u1, theta, fv, -sigma * fv, ft, sv, -sigma * sv, st];
            for (col, x) in cols.iter_mut().zip(vals) {
                col.push(x);
            }
        }
        let [v, u1, theta, dv, du1, dtheta, d2v, d2u1, d2theta] = cols;
        return Ok(build_table(
            family,
            sigma,
            *left,
            *right,
            transport,
            z,
            [v, u1, theta],
            [dv, du1, dtheta],
            [d2v, d2u1, d2theta],
        ));
    }
    Err(KrlError::Convergence {
        solver: "shock_profile",
        detail: format!("end-state tails above {} after extending the table; trials {trials:?}", opts.tail_tolerance),
    })
}

/// Profile for the Riemann shock of `family` whose outer state is `outer` and strength `δ`.
pub fn profile_from_strength(
    family: Family,
    outer: &FluidState,
    delta: f64,
    transport: Transport,
    opts: ShockOptions,
) -> Result<ProfileTable> {
    let (inner, sigma) = hugoniot_locus(outer, outer.v - delta, family)?;
    match family {
        Family::One => solve_shock_profile(family, outer, &inner, sigma, transport, opts),
        Family::Three => solve_shock_profile(family, &inner, outer, sigma, transport, opts),
    }
}

fn integrate(rhs: &Rhs, devs: &mut [(f64, f64)], c: f64, e: [f64; 2], h: f64, forward: bool, substeps: usize) {
    let n = devs.len();
    let hs = h / substeps as f64;
    let mut y = (c * e[0], c * e[1]);
    if forward {
        devs[0] = y;
        for slot in devs.iter_mut().skip(1) {
            for _ in 0..substeps {
                y = rhs.rk4(y, hs);
            }
            *slot = y;
        }
    } else {
        devs[n - 1] = y;
        for j in (0..n - 1).rev() {
            for _ in 0..substeps {
                y = rhs.rk4(y, -hs);
            }
            devs[j] = y;
        }
    }
}

/// Location where `v` crosses `mid`, refined on the cubic Hermite segment.
fn crossing(z: &[f64], devs: &[(f64, f64)], rhs: &Rhs, vb: f64, mid: f64) -> Option<f64> {
    let g = |j: usize| vb + devs[j].0 - mid;
    for j in 0..z.len() - 1 {
        let (a, b) = (g(j), g(j + 1));
        if a == 0.0 {
            return Some(z[j]);
        }
        if a * b < 0.0 {
            let h = z[j + 1] - z[j];
            let d0 = rhs.eval(devs[j].0, devs[j].1).0 * h;
            let d1 = rhs.eval(devs[j + 1].0, devs[j + 1].1).0 * h;
            let herm = |s: f64| {
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * a + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * b + (s3 - s2) * d1
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            let flo = herm(lo);
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if herm(m) * flo > 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            return Some(z[j] + 0.5 * (lo + hi) * h);
        }
    }
    None
}
