//! Monatomic gas closure in Lagrangian variables.
//!
//! Internal energy equals the temperature variable, `e = θ`, and the pressure
//! law is `p = 2θ/(3v)`. The Maxwellian uses the gas constant `R = 2/3`, which
//! makes `p = R ρ θ` and `e = (3/2) R θ` consistent with the same closure.
//!
//! The physical entropy is not written out by the kinetic model; with the
//! closure above it is forced to be `s = ln(θ v^{2/3})` up to an additive
//! constant. This is a derivation of ours and is the only entropy used here.

/// Gas constant of the Maxwellian normalisation.
pub const GAS_CONSTANT: f64 = 2.0 / 3.0;

/// Adiabatic exponent implied by `e = θ`, `p = 2θ/(3v)`.
pub const ADIABATIC_EXPONENT: f64 = 5.0 / 3.0;

/// Macroscopic state `(v, u, θ)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidState {
    /// Specific volume `v = 1/ρ`.
    pub v: f64,
    /// Velocity vector `(u1, u2, u3)`.
    pub u: [f64; 3],
    /// Temperature variable (equals the specific internal energy).
    pub theta: f64,
}

impl FluidState {
    pub const fn new(v: f64, u: [f64; 3], theta: f64) -> Self {
        Self { v, u, theta }
    }

    /// One-dimensional state with `u2 = u3 = 0`.
    pub const fn planar(v: f64, u1: f64, theta: f64) -> Self {
        Self { v, u: [u1, 0.0, 0.0], theta }
    }

    pub fn is_admissible(&self) -> bool {
        self.v > 0.0
            && self.theta > 0.0
            && self.v.is_finite()
            && self.theta.is_finite()
            && self.u.iter().all(|c| c.is_finite())
    }

    pub fn density(&self) -> f64 {
        1.0 / self.v
    }

    pub fn pressure(&self) -> f64 {
        pressure(self.v, self.theta)
    }

    /// Lagrangian sound speed `√(5p/(3v))`.
    pub fn sound_speed(&self) -> f64 {
        lagrangian_sound_speed(self.v, self.theta)
    }

    pub fn entropy(&self) -> f64 {
        entropy(self.v, self.theta)
    }

    /// Specific total energy `θ + |u|²/2`.
    pub fn total_energy(&self) -> f64 {
        self.theta + 0.5 * dot(&self.u, &self.u)
    }

    /// Largest componentwise deviation from `other`.
    pub fn max_abs_diff(&self, other: &FluidState) -> f64 {
        let mut d = (self.v - other.v).abs().max((self.theta - other.theta).abs());
        for k in 0..3 {
            d = d.max((self.u[k] - other.u[k]).abs());
        }
        d
    }
}

pub fn pressure(v: f64, theta: f64) -> f64 {
    2.0 * theta / (3.0 * v)
}

pub fn lagrangian_sound_speed(v: f64, theta: f64) -> f64 {
    (ADIABATIC_EXPONENT * pressure(v, theta) / v).sqrt()
}

pub fn entropy(v: f64, theta: f64) -> f64 {
    (theta * v.powf(2.0 / 3.0)).ln()
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Transport coefficients `μ(θ) = μ₀√θ`, `α_th(θ) = γ μ(θ)` (normalised, κ = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub mu0: f64,
    /// Ratio `α_th/μ`.
    pub gamma: f64,
}

impl Default for Transport {
    fn default() -> Self {
        Self { mu0: 1.0, gamma: 2.5 }
    }
}

impl Transport {
    /// Chapman–Enskog coefficients of the BGK operator with collision
    /// frequency `ρ√θ` (normalised): `μ = p/ν = R√θ` and, at unit Prandtl
    /// number, `α_th = (5/2) R μ`.
    pub fn bgk() -> Self {
        Self { mu0: GAS_CONSTANT, gamma: 2.5 * GAS_CONSTANT }
    }

    pub fn viscosity(&self, theta: f64) -> f64 {
        self.mu0 * theta.sqrt()
    }

    pub fn conductivity(&self, theta: f64) -> f64 {
        self.gamma * self.viscosity(theta)
    }
}
