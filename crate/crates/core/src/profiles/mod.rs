//! Building-block wave profiles: viscous shocks, the viscous contact wave and
//! the smooth rarefaction.

pub mod contact;
pub mod interp;
pub mod rarefaction;
pub mod shock;

pub use contact::{solve_contact_profile, ContactOptions, ContactProfile, ContactSample};
pub use interp::MonotoneCubic;
pub use rarefaction::{evaluate_rarefaction, RarefactionSample, RarefactionWave};
pub use shock::{profile_from_strength, solve_shock_profile, ProfileSample, ProfileTable, ShockOptions};
