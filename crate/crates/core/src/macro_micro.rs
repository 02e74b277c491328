//! Maxwellians on the velocity grid, the macro–micro projections, the
//! BGK Chapman–Enskog split and the relative entropy density.
//!
//! Discrete Maxwellians have the form `exp(α + β·ξ + c|ξ|²)` with the five
//! coefficients fitted so that the grid moments equal `(1/v, u/v, (θ+|u|²/2)/v)`
//! to rounding. Since `ln M` is then a collision invariant on the grid, BGK
//! relaxation toward it conserves the moments and decreases `Σ w f ln f`
//! exactly.

use crate::error::{KrlError, Result};
use crate::gas::{dot, FluidState, GAS_CONSTANT};
use crate::grids::{raw_moments, Moments, VelocityGrid};

/// Parameters of the continuous Maxwellian `M[U]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellParams {
    pub rho: f64,
    pub u: [f64; 3],
    pub theta: f64,
}

impl MaxwellParams {
    pub fn from_state(s: &FluidState) -> Result<Self> {
        if !s.is_admissible() {
            return Err(KrlError::invalid(format!("inadmissible state {s:?}")));
        }
        Ok(Self { rho: 1.0 / s.v, u: s.u, theta: s.theta })
    }

    /// `Rθ`, the variance of each velocity component.
    pub fn temperature_scale(&self) -> f64 {
        GAS_CONSTANT * self.theta
    }

    /// `ρ (2πRθ)^{-3/2} exp(−|ξ−u|²/(2Rθ))`.
    pub fn continuous(&self, xi: [f64; 3]) -> f64 {
        let t = self.temperature_scale();
        let c = [xi[0] - self.u[0], xi[1] - self.u[1], xi[2] - self.u[2]];
        self.rho * (2.0 * std::f64::consts::PI * t).powf(-1.5) * (-dot(&c, &c) / (2.0 * t)).exp()
    }

    /// Closed form of `∫ M ln M dξ`.
    pub fn entropy_integral(&self) -> f64 {
        let t = self.temperature_scale();
        self.rho * (self.rho.ln() - 1.5 * (2.0 * std::f64::consts::PI * t).ln() - 1.5)
    }
}

/// Coefficients of a discrete Maxwellian `exp(α + β·ξ + c|ξ|²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMaxwellian {
    pub log_amplitude: f64,
    pub beta: [f64; 3],
    pub c: f64,
}

/// Normalised axis moments `m_k = Σ ξ^k E / Σ E` and `ln(h Σ E)`.
struct AxisSums {
    m: [f64; 5],
    log_mass: f64,
}

fn axis_sums(nodes: &[f64], h: f64, beta: f64, c: f64) -> AxisSums {
    let emax = nodes.iter().map(|&x| beta * x + c * x * x).fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0f64; 5];
    for &x in nodes {
        let e = (beta * x + c * x * x - emax).exp();
        let mut p = e;
        for sk in s.iter_mut() {
            *sk += p;
            p *= x;
        }
    }
    let s0 = s[0];
    AxisSums { m: [1.0, s[1] / s0, s[2] / s0, s[3] / s0, s[4] / s0], log_mass: (h * s0).ln() + emax }
}

/// Dense solve with partial pivoting for the small Newton and Gram systems.
pub(crate) fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

impl DiscreteMaxwellian {
    /// Fit the coefficients to the moments of `state` on `grid`.
    pub fn fit(state: &FluidState, grid: &VelocityGrid) -> Result<Self> {
        let p = MaxwellParams::from_state(state)?;
        let t = p.temperature_scale();
        let h = grid.spacing();
        let target_energy = 2.0 * p.theta + dot(&p.u, &p.u);
        let mut beta = [p.u[0] / t, p.u[1] / t, p.u[2] / t];
        let mut c = -0.5 / t;
        let residual = |beta: &[f64; 3], c: f64| -> ([f64; 4], [AxisSums; 3]) {
            let sums = [0, 1, 2].map(|d| axis_sums(grid.axis(d), h, beta[d], c));
            let mut r = [0.0; 4];
            for d in 0..3 {
                r[d] = sums[d].m[1] - p.u[d];
                r[3] += sums[d].m[2];
            }
            r[3] -= target_energy;
            (r, sums)
        };
        let norm = |r: &[f64; 4]| r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let (mut r, mut sums) = residual(&beta, c);
        let scale = 1.0 + target_energy;
        for _ in 0..60 {
            if norm(&r) <= 1e-15 * scale {
                break;
            }
            let mut jac = [[0.0; 4]; 4];
            for d in 0..3 {
                let m = &sums[d].m;
                jac[d][d] = m[2] - m[1] * m[1];
                jac[d][3] = m[3] - m[1] * m[2];
                jac[3][d] = m[3] - m[2] * m[1];
                jac[3][3] += m[4] - m[2] * m[2];
            }
            let step = solve_dense(jac, r).ok_or_else(|| KrlError::Convergence {
                solver: "discrete_maxwellian",
                detail: "singular moment Jacobian; increase the velocity radius".into(),
            })?;
            // Backtrack to keep c < 0 and reduce the residual.
            let mut lambda = 1.0;
            loop {
                let nb = [beta[0] - lambda * step[0], beta[1] - lambda * step[1], beta[2] - lambda * step[2]];
                let nc = c - lambda * step[3];
                if nc < 0.0 {
                    let (nr, ns) = residual(&nb, nc);
                    if norm(&nr) < norm(&r) || lambda < 1e-3 {
                        beta = nb;
                        c = nc;
                        r = nr;
                        sums = ns;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return Err(KrlError::Convergence {
                        solver: "discrete_maxwellian",
                        detail: format!("line search stalled at residual {:e}; increase the velocity radius", norm(&r)),
                    });
                }
            }
        }
        if !(norm(&r) <= 1e-12 * scale) {
            return Err(KrlError::Convergence {
                solver: "discrete_maxwellian",
                detail: format!("moment residual {:e} for {state:?}; increase the velocity radius", norm(&r)),
            });
        }
        let log_amplitude = p.rho.ln() - sums.iter().map(|s| s.log_mass).sum::<f64>();
        Ok(Self { log_amplitude, beta, c })
    }

    /// Per-axis factors `exp(β_d ξ + c ξ²)` scaled so their product times
    /// `exp(α)` is the Maxwellian.
    fn axis_factors(&self, grid: &VelocityGrid) -> ([Vec<f64>; 3], f64) {
        let mut shift = self.log_amplitude;
        let factors = [0, 1, 2].map(|d| {
            let nodes = grid.axis(d);
            let emax = nodes.iter().map(|&x| self.beta[d] * x + self.c * x * x).fold(f64::NEG_INFINITY, f64::max);
            shift += emax;
            nodes.iter().map(|&x| (self.beta[d] * x + self.c * x * x - emax).exp()).collect::<Vec<_>>()
        });
        (factors, shift.exp())
    }

    /// Evaluate on every node of `grid`.
    pub fn fill(&self, grid: &VelocityGrid, out: &mut [f64]) {
        let n = grid.n_per_axis();
        let ([e0, e1, e2], amp) = self.axis_factors(grid);
        let mut k = 0;
        for a in 0..n {
            let fa = amp * e0[a];
            for b in 0..n {
                let fab = fa * e1[b];
                for c in 0..n {
                    out[k] = fab * e2[c];
                    k += 1;
                }
            }
        }
    }

    /// `ln M(ξ)`.
    pub fn log_value(&self, xi: [f64; 3]) -> f64 {
        self.log_amplitude + dot(&self.beta, &xi) + self.c * dot(&xi, &xi)
    }

    /// Maxwellian in the `ξ1` direction only, with the transverse axes summed:
    /// `Σ_{b,c} w M(ξ_a, ·, ·)` for every `a`.
    pub fn marginal(&self, grid: &VelocityGrid) -> Vec<f64> {
        let ([e0, e1, e2], amp) = self.axis_factors(grid);
        let w = grid.weight();
        let t: f64 = e1.iter().sum::<f64>() * e2.iter().sum::<f64>();
        e0.iter().map(|&e| w * amp * e * t).collect()
    }
}

/// Moment-corrected discrete Maxwellian of `state`.
pub fn discrete_maxwellian(state: &FluidState, grid: &VelocityGrid) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.len()];
    discrete_maxwellian_into(state, grid, &mut out)?;
    Ok(out)
}

/// Fill `out` with the discrete Maxwellian of `state` and return its coefficients.
pub fn discrete_maxwellian_into(state: &FluidState, grid: &VelocityGrid, out: &mut [f64]) -> Result<DiscreteMaxwellian> {
    if out.len() != grid.len() {
        return Err(KrlError::invalid("output slice does not match the velocity grid"));
    }
    let m = DiscreteMaxwellian::fit(state, grid)?;
    m.fill(grid, out);
    Ok(m)
}

/// The analytic orthonormal basis `χ_0..χ_4` of the macroscopic subspace.
pub fn basis(state: &FluidState, grid: &VelocityGrid) -> Result<[Vec<f64>; 5]> {
    let p = MaxwellParams::from_state(state)?;
    let m = discrete_maxwellian(state, grid)?;
    let t = p.temperature_scale();
    let s = (t * p.rho).sqrt();
    let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; grid.len()]);
    for (k, mk) in m.iter().enumerate() {
        let xi = grid.node(k);
        let c = [xi[0] - p.u[0], xi[1] - p.u[1], xi[2] - p.u[2]];
        out[0][k] = mk / p.rho.sqrt();
        for i in 0..3 {
            out[i + 1][k] = c[i] / s * mk;
        }
        out[4][k] = (dot(&c, &c) / t - 3.0) / (6.0 * p.rho).sqrt() * mk;
    }
    Ok(out)
}

/// Weighted inner product `⟨g, h⟩_M = Σ w g h / M`.
pub fn inner_product(g: &[f64], h: &[f64], m: &[f64], grid: &VelocityGrid) -> f64 {
    grid.weight() * g.iter().zip(h).zip(m).map(|((a, b), mk)| if *mk > 0.0 { a * b / mk } else { 0.0 }).sum::<f64>()
}

/// Squared norm `Σ w g² / M` against a reference distribution.
pub fn weighted_norm_sq(g: &[f64], reference: &[f64], grid: &VelocityGrid) -> f64 {
    inner_product(g, g, reference, grid)
}

/// Centered collision invariants `(1, c1, c2, c3, |c|²)` at node `xi`.
#[inline]
fn invariants(xi: [f64; 3], u: &[f64; 3]) -> [f64; 5] {
    let c = [xi[0] - u[0], xi[1] - u[1], xi[2] - u[2]];
    [1.0, c[0], c[1], c[2], dot(&c, &c)]
}

/// Orthogonal projector `P₀` onto `span{M, ξM, |ξ|²M}` in `⟨·,·⟩_M`,
/// built from the Gram matrix of the discrete Maxwellian.
#[derive(Debug, Clone)]
pub struct Projector {
    pub state: FluidState,
    pub maxwellian: Vec<f64>,
    gram_inverse: [[f64; 5]; 5],
    grid_weight: f64,
    nodes: Vec<[f64; 3]>,
}

impl Projector {
    pub fn new(state: &FluidState, grid: &VelocityGrid) -> Result<Self> {
        let maxwellian = discrete_maxwellian(state, grid)?;
        let nodes = grid.nodes();
        let w = grid.weight();
        let mut gram = [[0.0; 5]; 5];
        for (xi, mk) in nodes.iter().zip(&maxwellian) {
            let psi = invariants(*xi, &state.u);
            for a in 0..5 {
                for b in a..5 {
                    gram[a][b] += w * psi[a] * psi[b] * mk;
                }
            }
        }
        for a in 0..5 {
            for b in 0..a {
                gram[a][b] = gram[b][a];
            }
        }
        let mut gram_inverse = [[0.0; 5]; 5];
        for col in 0..5 {
            let mut e = [0.0; 5];
            e[col] = 1.0;
            let x = solve_dense(gram, e).ok_or_else(|| KrlError::Convergence {
                solver: "projector",
                detail: "singular Gram matrix".into(),
            })?;
            for row in 0..5 {
                gram_inverse[row][col] = x[row];
            }
        }
        Ok(Self { state: *state, maxwellian, gram_inverse, grid_weight: w, nodes })
    }

    /// Centered invariant moments `Σ w ψ_a g`.
    fn invariant_moments(&self, g: &[f64]) -> [f64; 5] {
        let mut m = [0.0; 5];
        for (xi, gk) in self.nodes.iter().zip(g) {
            let psi = invariants(*xi, &self.state.u);
            for a in 0..5 {
                m[a] += psi[a] * gk;
            }
        }
        m.map(|x| x * self.grid_weight)
    }

    /// `P₀ g`.
    pub fn macro_part(&self, g: &[f64]) -> Vec<f64> {
        let m = self.invariant_moments(g);
        let mut coef = [0.0; 5];
        for a in 0..5 {
            coef[a] = (0..5).map(|b| self.gram_inverse[a][b] * m[b]).sum();
        }
        self.nodes
            .iter()
            .zip(&self.maxwellian)
            .map(|(xi, mk)| {
                let psi = invariants(*xi, &self.state.u);
                mk * (0..5).map(|a| coef[a] * psi[a]).sum::<f64>()
            })
            .collect()
    }

    /// `P₁ g = g − P₀ g`.
    pub fn micro_part(&self, g: &[f64]) -> Vec<f64> {
        let p0 = self.macro_part(g);
        g.iter().zip(p0).map(|(a, b)| a - b).collect()
    }
}

/// Microscopic part `G = f − P₀ f` of a cell whose moments are `state`.
pub fn project_micro(f: &[f64], state: &FluidState, grid: &VelocityGrid) -> Result<Vec<f64>> {
    if f.len() != grid.len() {
        return Err(KrlError::invalid("cell slice does not match the velocity grid"));
    }
    let got = raw_moments(f, grid).as_array();
    let want = Moments::from_state(state).as_array();
    let scale = want.iter().map(|x| x.abs()).fold(1.0, f64::max);
    let mismatch = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if mismatch > 1e-8 * scale {
        return Err(KrlError::invalid(format!(
            "state does not match the moments of the distribution (mismatch {mismatch:e})"
        )));
    }
    Ok(Projector::new(state, grid)?.micro_part(f))
}

/// Spatial derivatives of the macroscopic fields at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldDerivative {
    pub v: f64,
    pub u: [f64; 3],
    pub theta: f64,
}

/// `G` split into its Chapman–Enskog diffusion part and the remainder `Π₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSplit {
    pub g: Vec<f64>,
    /// `(1/v) L_M^{-1} P₁(ξ₁ M_x) = −(1/(νv)) P₁(ξ₁ M_x)` under BGK.
    pub diffusion: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// `P₁(ξ₁ M_x)` on the grid, with `M_x` from the chain rule.
pub fn streaming_source(projector: &Projector, dx: &FieldDerivative, grid: &VelocityGrid) -> Vec<f64> {
    let s = projector.state;
    let t = GAS_CONSTANT * s.theta;
    let raw: Vec<f64> = projector
        .maxwellian
        .iter()
        .enumerate()
        .map(|(k, mk)| {
            let xi = grid.node(k);
            let c = [xi[0] - s.u[0], xi[1] - s.u[1], xi[2] - s.u[2]];
            let log_x = -dx.v / s.v + dot(&c, &dx.u) / t + (dot(&c, &c) / (2.0 * t) - 1.5) * dx.theta / s.theta;
            xi[0] * mk * log_x
        })
        .collect();
    projector.micro_part(&raw)
}

/// Leading BGK micro part `−(1/(νv)) P₁(ξ₁ M_x)` of a cell.
pub fn chapman_enskog_micro(projector: &Projector, dx: &FieldDerivative, nu: f64, grid: &VelocityGrid) -> Result<Vec<f64>> {
    if !(nu > 0.0) {
        return Err(KrlError::invalid("collision frequency must be positive"));
    }
    let scale = -1.0 / (nu * projector.state.v);
    Ok(streaming_source(projector, dx, grid).into_iter().map(|x| scale * x).collect())
}

/// Split a micro part into diffusion and remainder.
pub fn chapman_enskog_split(
    g: &[f64],
    projector: &Projector,
    dx: &FieldDerivative,
    nu: f64,
    grid: &VelocityGrid,
) -> Result<MicroSplit> {
    if g.len() != grid.len() {
        return Err(KrlError::invalid("micro part does not match the velocity grid"));
    }
    let diffusion = chapman_enskog_micro(projector, dx, nu, grid)?;
    let remainder = g.iter().zip(&diffusion).map(|(a, b)| a - b).collect();
    Ok(MicroSplit { g: g.to_vec(), diffusion, remainder })
}

/// `Φ(z) = z − 1 − ln z`.
pub fn phi(z: f64) -> f64 {
    z - 1.0 - z.ln()
}

/// Relative entropy density `η(U | Ū)`.
pub fn relative_entropy(u: &FluidState, bar: &FluidState) -> Result<f64> {
    if !u.is_admissible() || !bar.is_admissible() {
        return Err(KrlError::invalid("relative entropy needs positive volumes and temperatures"));
    }
    Ok(relative_entropy_unchecked(u, bar))
}

#[inline]
pub(crate) fn relative_entropy_unchecked(u: &FluidState, bar: &FluidState) -> f64 {
    let psi = [u.u[0] - bar.u[0], u.u[1] - bar.u[1], u.u[2] - bar.u[2]];
    2.0 / 3.0 * bar.theta * phi(u.v / bar.v) + bar.theta * phi(u.theta / bar.theta) + 0.5 * dot(&psi, &psi)
}

/// Reference Maxwellian `M_# = M[(v_ref, 0, 2θ_max)]` of the `‖·‖_{M_#}` norms.
pub fn reference_maxwellian(v_ref: f64, theta_max: f64, grid: &VelocityGrid) -> Result<Vec<f64>> {
    discrete_maxwellian(&FluidState::planar(v_ref, 0.0, 2.0 * theta_max), grid)
}
