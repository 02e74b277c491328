//! Discretisation substrate: the Lagrangian mass grid, the truncated tensor
//! velocity grid, and the field containers evolved by the solver.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{KrlError, Result};
use crate::gas::FluidState;

/// Uniform grid on the Lagrangian mass coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    x_left: f64,
    x_right: f64,
    n_cells: usize,
}

impl SpatialGrid {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if !(x_left < x_right) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(KrlError::invalid(format!(
                "spatial grid needs x_left < x_right, got [{x_left}, {x_right}]"
            )));
        }
        if n_cells == 0 {
            return Err(KrlError::invalid("spatial grid needs at least one cell"));
        }
        Ok(Self { x_left, x_right, n_cells })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_cells as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }
}

/// Tensor-product midpoint grid on the box `center + [-R, R]³`.
///
/// Nodes are stored with the third axis fastest: `k = (a·n + b)·n + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    center: [f64; 3],
    radius: f64,
    n_per_axis: usize,
    axes: [Vec<f64>; 3],
    spacing: f64,
}

impl VelocityGrid {
    pub fn new(center: [f64; 3], radius: f64, n_per_axis: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(KrlError::invalid(format!(
                "velocity radius must be positive, got {radius}"
            )));
        }
        if n_per_axis < 4 || !n_per_axis.is_multiple_of(2) {
            return Err(KrlError::invalid(format!(
                "velocity nodes per axis must be even and >= 4, got {n_per_axis}"
            )));
        }
        let h = 2.0 * radius / n_per_axis as f64;
        let axis = |c: f64| -> Vec<f64> {
            // Pair nodes from both ends so the list is exactly symmetric about c.
            let half = n_per_axis / 2;
            let mut nodes = vec![0.0; n_per_axis];
            for i in 0..half {
                let offset = (half - i) as f64 * h - 0.5 * h;
                nodes[i] = c - offset;
                nodes[n_per_axis - 1 - i] = c + offset;
            }
            nodes
        };
        Ok(Self {
            center,
            radius,
            n_per_axis,
            axes: [axis(center[0]), axis(center[1]), axis(center[2])],
            spacing: h,
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn len(&self) -> usize {
        self.n_per_axis.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Midpoint weight of every node (the grid is uniform).
    pub fn weight(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.len()]
    }

    /// Volume of the truncation box.
    pub fn box_volume(&self) -> f64 {
        (2.0 * self.radius).powi(3)
    }

    pub fn split_index(&self, k: usize) -> (usize, usize, usize) {
        let n = self.n_per_axis;
        (k / (n * n), (k / n) % n, k % n)
    }

    pub fn node(&self, k: usize) -> [f64; 3] {
        let (a, b, c) = self.split_index(k);
        [self.axes[0][a], self.axes[1][b], self.axes[2][c]]
    }

    pub fn nodes(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Index of the node mirrored through the grid center.
    pub fn mirror(&self, k: usize) -> usize {
        let n = self.n_per_axis;
        let (a, b, c) = self.split_index(k);
        ((n - 1 - a) * n + (n - 1 - b)) * n + (n - 1 - c)
    }
}

/// Zeroth, first and second velocity moments of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub density: f64,
    pub momentum: [f64; 3],
    /// `∫ |ξ|²/2 f dξ`.
    pub energy: f64,
}

impl Moments {
    /// Fluid state carried by the moments (`e = θ`).
    pub fn to_state(&self) -> Result<FluidState> {
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(KrlError::CorruptedState {
                time: f64::NAN,
                detail: format!("non-positive density {}", self.density),
            });
        }
        let rho = self.density;
        let u = [self.momentum[0] / rho, self.momentum[1] / rho, self.momentum[2] / rho];
        let theta = self.energy / rho - 0.5 * crate::gas::dot(&u, &u);
        Ok(FluidState::new(1.0 / rho, u, theta))
    }

    /// Moments of a Maxwellian with state `s`.
    pub fn from_state(s: &FluidState) -> Self {
        let rho = 1.0 / s.v;
        Self {
            density: rho,
            momentum: [rho * s.u[0], rho * s.u[1], rho * s.u[2]],
            energy: rho * s.total_energy(),
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.density, self.momentum[0], self.momentum[1], self.momentum[2], self.energy]
    }
}

/// Unchecked moment quadrature; used on hot paths where the caller validates.
pub(crate) fn raw_moments(f: &[f64], grid: &VelocityGrid) -> Moments {
    let n = grid.n_per_axis();
    let (x0, x1, x2) = (grid.axis(0), grid.axis(1), grid.axis(2));
    let mut m = [0.0f64; 5];
    let mut k = 0;
    for a in 0..n {
        let xa = x0[a];
        let (mut s0, mut s2, mut s3, mut se) = (0.0, 0.0, 0.0, 0.0);
        for b in 0..n {
            let xb = x1[b];
            let (mut t0, mut t3, mut te) = (0.0, 0.0, 0.0);
            for c in 0..n {
                let fk = f[k];
                let xc = x2[c];
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
        m[0] += s0;
        m[1] += xa * s0;
        m[2] += s2;
        m[3] += s3;
        m[4] += se + xa * xa * s0;
    }
    let w = grid.weight();
    Moments {
        density: w * m[0],
        momentum: [w * m[1], w * m[2], w * m[3]],
        energy: 0.5 * w * m[4],
    }
}

/// Moments `(ρ, ρu, E)` of one cell by grid quadrature.
pub fn moments(f: &[f64], grid: &VelocityGrid) -> Result<Moments> {
    if f.len() != grid.len() {
        return Err(KrlError::invalid(format!(
            "cell slice has {} values, velocity grid has {} nodes",
            f.len(),
            grid.len()
        )));
    }
    let m = raw_moments(f, grid);
    if m.density < 0.0 || !m.density.is_finite() {
        return Err(KrlError::CorruptedState {
            time: f64::NAN,
            detail: format!("negative computed density {}", m.density),
        });
    }
    Ok(m)
}

/// Per-cell macroscopic states with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidField {
    pub states: Vec<FluidState>,
    pub time: f64,
}

impl FluidField {
    pub fn new(states: Vec<FluidState>, time: f64) -> Result<Self> {
        if let Some((j, s)) = states.iter().enumerate().find(|(_, s)| !s.is_admissible()) {
            return Err(KrlError::CorruptedState {
                time,
                detail: format!("cell {j} inadmissible: {s:?}"),
            });
        }
        Ok(Self { states, time })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Phase-space density `f(x_j, ξ_k)` on a spatial × velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    space: Arc<SpatialGrid>,
    velocity: Arc<VelocityGrid>,
    values: Vec<f64>,
    pub time: f64,
}

impl DistributionField {
    pub fn zeros(space: Arc<SpatialGrid>, velocity: Arc<VelocityGrid>) -> Self {
        let n = space.n_cells() * velocity.len();
        Self { space, velocity, values: vec![0.0; n], time: 0.0 }
    }

    pub fn from_values(
        space: Arc<SpatialGrid>,
        velocity: Arc<VelocityGrid>,
        values: Vec<f64>,
        time: f64,
    ) -> Result<Self> {
        if values.len() != space.n_cells() * velocity.len() {
            return Err(KrlError::invalid(format!(
                "expected {} values, got {}",
                space.n_cells() * velocity.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(KrlError::CorruptedState {
                time,
                detail: format!(
                    "value {} at cell {} node {} is negative or non-finite",
                    values[i],
                    i / velocity.len(),
                    i % velocity.len()
                ),
            });
        }
        Ok(Self { space, velocity, values, time })
    }

    pub fn space(&self) -> &Arc<SpatialGrid> {
        &self.space
    }

    pub fn velocity(&self) -> &Arc<VelocityGrid> {
        &self.velocity
    }

    pub fn n_cells(&self) -> usize {
        self.space.n_cells()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Exchange the value buffer with `other` (same length).
    pub(crate) fn swap_values(&mut self, other: &mut Vec<f64>) {
        debug_assert_eq!(self.values.len(), other.len());
        std::mem::swap(&mut self.values, other);
    }

    pub fn cell(&self, j: usize) -> &[f64] {
        let nv = self.velocity.len();
        &self.values[j * nv..(j + 1) * nv]
    }

    pub fn cell_mut(&mut self, j: usize) -> &mut [f64] {
        let nv = self.velocity.len();
        &mut self.values[j * nv..(j + 1) * nv]
    }

    pub fn cell_moments(&self, j: usize) -> Result<Moments> {
        moments(self.cell(j), &self.velocity)
    }

    /// Macroscopic field `U_f` of the kinetic state.
    pub fn fluid(&self) -> Result<FluidField> {
        let mut states = Vec::with_capacity(self.n_cells());
        for j in 0..self.n_cells() {
            let s = self.cell_moments(j)?.to_state().map_err(|e| match e {
                KrlError::CorruptedState { detail, .. } => KrlError::CorruptedState {
                    time: self.time,
                    detail: format!("cell {j}: {detail}"),
                },
                other => other,
            })?;
            states.push(s);
        }
        FluidField::new(states, self.time)
    }

    /// Encode in the `KRL1` little-endian snapshot format.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.n_cells() as u32).to_le_bytes())?;
        w.write_all(&(self.velocity.len() as u32).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for x in &self.values {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Decode a snapshot onto the given grids (sizes must match the header).
    pub fn read_snapshot<R: Read>(
        r: R,
        space: Arc<SpatialGrid>,
        velocity: Arc<VelocityGrid>,
    ) -> Result<Self> {
        let snap = Snapshot::read(r)?;
        if snap.n_cells as usize != space.n_cells() || snap.n_velocity as usize != velocity.len() {
            return Err(KrlError::invalid(format!(
                "snapshot is {}x{}, grids are {}x{}",
                snap.n_cells,
                snap.n_velocity,
                space.n_cells(),
                velocity.len()
            )));
        }
        Self::from_values(space, velocity, snap.values, snap.time)
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KRL1";

/// Raw contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n_cells: u32,
    pub n_velocity: u32,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(KrlError::invalid(format!("bad snapshot magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n_cells = u32::from_le_bytes(b4);
        r.read_exact(&mut b4)?;
        let n_velocity = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        let count = n_cells as usize * n_velocity as usize;
        let mut raw = vec![0u8; count * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { n_cells, n_velocity, time, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_grid_is_symmetric() {
        let g = VelocityGrid::new([0.0; 3], 6.0, 8).unwrap();
        assert_eq!(g.len(), 512);
        for d in 0..3 {
            let nodes = g.axis(d);
            let mut neg: Vec<f64> = nodes.iter().map(|x| -x).collect();
            neg.reverse();
            assert_eq!(nodes, neg.as_slice());
        }
        let vol = g.weight() * g.len() as f64;
        assert!((vol - 1728.0).abs() <= 1e-12 * 1728.0);
    }

    #[test]
    fn shifted_center_mirror() {
        let c = [0.3, -0.2, 0.1];
        let g = VelocityGrid::new(c, 5.0, 10).unwrap();
        for k in 0..g.len() {
            let m = g.mirror(k);
            let (a, b) = (g.node(k), g.node(m));
            for d in 0..3 {
                assert!((a[d] + b[d] - 2.0 * c[d]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_velocity_grids() {
        assert!(VelocityGrid::new([0.0; 3], 0.0, 8).is_err());
        assert!(VelocityGrid::new([0.0; 3], -1.0, 8).is_err());
        assert!(VelocityGrid::new([0.0; 3], 6.0, 7).is_err());
        assert!(VelocityGrid::new([0.0; 3], 6.0, 2).is_err());
    }

    #[test]
    fn rejects_bad_spatial_grids() {
        assert!(SpatialGrid::new(1.0, 1.0, 10).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 0).is_err());
        let g = SpatialGrid::new(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.centers(), vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn gaussian_quadrature() {
        let g = VelocityGrid::new([0.0; 3], 8.0, 32).unwrap();
        let norm = (2.0 * std::f64::consts::PI).powf(1.5);
        let s: f64 = g
            .nodes()
            .iter()
            .map(|x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp() / norm)
            .sum::<f64>()
            * g.weight();
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn zero_field_moments() {
        let g = VelocityGrid::new([0.0; 3], 4.0, 8).unwrap();
        let m = moments(&vec![0.0; g.len()], &g).unwrap();
        assert_eq!(m, Moments::default());
        assert!(moments(&[0.0; 3], &g).is_err());
        let mut neg = vec![0.0; g.len()];
        neg[0] = -1.0;
        assert!(matches!(moments(&neg, &g), Err(KrlError::CorruptedState { .. })));
    }

    #[test]
    fn refinement_reduces_midpoint_error() {
        // ∫_{[-2,2]^3} ξ1^4 dξ = (2·2^5/5)·16
        let exact = 2.0 * 32.0 / 5.0 * 16.0;
        let err = |n: usize| {
            let g = VelocityGrid::new([0.0; 3], 2.0, n).unwrap();
            let s: f64 = g.nodes().iter().map(|x| x[0].powi(4)).sum::<f64>() * g.weight();
            (s - exact).abs()
        };
        assert!(err(8) / err(16) >= 3.0);
        assert!(err(16) / err(32) >= 3.0);
        let serr = |n: usize| {
            let g = SpatialGrid::new(0.0, 1.0, n).unwrap();
            let s: f64 = g.centers().iter().map(|x| x.exp()).sum::<f64>() * g.dx();
            (s - (1f64.exp() - 1.0)).abs()
        };
        assert!(serr(50) / serr(100) >= 3.0);
    }

    #[test]
    fn snapshot_header_layout() {
        let s = Arc::new(SpatialGrid::new(0.0, 1.0, 3).unwrap());
        let v = Arc::new(VelocityGrid::new([0.0; 3], 1.0, 4).unwrap());
        let mut f = DistributionField::zeros(s.clone(), v.clone());
        f.time = 0.25;
        for (i, x) in f.values_mut().iter_mut().enumerate() {
            *x = i as f64 * 0.5;
        }
        let mut bytes = Vec::new();
        f.write_snapshot(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"KRL1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 64);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0.25);
        assert_eq!(f64::from_le_bytes(bytes[20 + 8..28 + 8].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), 20 + 3 * 64 * 8);
        let back = DistributionField::read_snapshot(bytes.as_slice(), s, v).unwrap();
        assert_eq!(back, f);
    }
}
