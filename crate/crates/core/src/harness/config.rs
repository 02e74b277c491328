//! Experiment configuration as sectioned `key = value` text (TOML).
//!
//! Unknown sections or keys are rejected with the list of valid ones.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KrlError, Result};
use crate::gas::{FluidState, Transport};
use crate::kinetic::InitialMode;
use crate::riemann::WavePattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// Shock–contact–shock.
    Scs,
    /// Rarefaction–contact–shock.
    Rcs,
    /// Single 3-shock.
    Single3,
}

impl std::str::FromStr for PatternKind {
    type Err = KrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scs" => Ok(Self::Scs),
            "rcs" => Ok(Self::Rcs),
            "single3" => Ok(Self::Single3),
            other => Err(KrlError::invalid(format!("unknown pattern `{other}`; expected scs, rcs or single3"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub kind: PatternKind,
    /// Right far-field state `(v, u1, θ)`.
    pub plus: [f64; 3],
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub delta_c: f64,
    #[serde(default)]
    pub delta3: f64,
}

impl PatternConfig {
    pub fn build(&self) -> Result<WavePattern> {
        let plus = FluidState::planar(self.plus[0], self.plus[1], self.plus[2]);
        let p = match self.kind {
            PatternKind::Scs => WavePattern::shock_contact_shock(plus, self.delta1, self.delta_c, self.delta3)?,
            PatternKind::Rcs => WavePattern::rarefaction_contact_shock(plus, self.delta1, self.delta_c, self.delta3)?,
            PatternKind::Single3 => {
                if self.delta1 != 0.0 || self.delta_c != 0.0 {
                    return Err(KrlError::invalid("single3 pattern takes only delta3"));
                }
                WavePattern::single_shock(plus, self.delta3)?
            }
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    /// Viscosity prefactor `μ₀` in `μ(θ) = μ₀√θ`.
    pub mu0: f64,
    /// Ratio `α/μ`.
    pub gamma: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        let t = Transport::bgk();
        Self { mu0: t.mu0, gamma: t.gamma }
    }
}

impl TransportConfig {
    pub fn transport(&self) -> Transport {
        Transport { mu0: self.mu0, gamma: self.gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `κ / dx`.
    pub cells_per_kappa: f64,
    /// Shock tails kept on each side, in e-folding lengths.
    pub tail_efolds: f64,
    pub velocity_nodes: usize,
    pub velocity_radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cells_per_kappa: 2.0, tail_efolds: 10.0, velocity_nodes: 16, velocity_radius: 6.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub cfl: f64,
    pub end_time: f64,
    pub collision_scale: f64,
    pub strang: bool,
    pub mode: InitialMode,
    /// Rarefaction time offset in units of `κ`.
    pub rarefaction_offset: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            cfl: 0.45,
            end_time: 0.5,
            collision_scale: 1.0,
            strang: false,
            mode: InitialMode::WellPrepared,
            rarefaction_offset: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Strictly decreasing Knudsen numbers, at least three for a sweep.
    pub kappas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { kappas: vec![0.04, 0.02, 0.01] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Entropy-ledger sampling stride in steps; 0 samples only the first and last step.
    pub diagnostic_stride: usize,
    /// Snapshot stride in steps; 0 disables snapshots.
    pub snapshot_stride: usize,
    /// Progress-line stride in steps; 0 disables progress output.
    pub progress_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), diagnostic_stride: 0, snapshot_stride: 0, progress_stride: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pattern: PatternConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Default setup for a pattern kind with the strengths used in the examples.
    pub fn preset(kind: PatternKind) -> Self {
        let pattern = match kind {
            PatternKind::Single3 => PatternConfig { kind, plus: [1.0, 0.0, 1.0], delta1: 0.0, delta_c: 0.0, delta3: 0.05 },
            PatternKind::Scs | PatternKind::Rcs => {
                PatternConfig { kind, plus: [1.0, 0.0, 1.0], delta1: 0.04, delta_c: 0.04, delta3: 0.04 }
            }
        };
        Self {
            pattern,
            transport: TransportConfig::default(),
            grid: GridConfig::default(),
            solver: SolverSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| KrlError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            KrlError::Config(m) => KrlError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| KrlError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.cells_per_kappa > 0.0 && g.tail_efolds > 0.0 && g.velocity_radius > 0.0 && g.velocity_nodes >= 4) {
            return Err(KrlError::Config(
                "grid needs cells_per_kappa, tail_efolds, velocity_radius > 0 and velocity_nodes >= 4".into(),
            ));
        }
        let s = &self.solver;
        if !(s.cfl > 0.0 && s.cfl <= 1.0 && s.end_time > 0.0 && s.collision_scale > 0.0 && s.rarefaction_offset >= 0.0) {
            return Err(KrlError::Config(
                "solver needs 0 < cfl <= 1, end_time > 0, collision_scale > 0 and rarefaction_offset >= 0".into(),
            ));
        }
        let t = &self.transport;
        if !(t.mu0 > 0.0 && t.gamma > 0.0) {
            return Err(KrlError::Config("transport needs mu0 > 0 and gamma > 0".into()));
        }
        if self.sweep.kappas.is_empty() || self.sweep.kappas.iter().any(|k| !(*k > 0.0)) {
            return Err(KrlError::Config("sweep.kappas must be non-empty and positive".into()));
        }
        if self.sweep.kappas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(KrlError::Config("sweep.kappas must be strictly decreasing".into()));
        }
        Ok(())
    }
}
