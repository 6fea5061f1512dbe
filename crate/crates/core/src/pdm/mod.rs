//! Predictive maintenance of a degrading second-order plant.
//!
//! Each measurement day an identification experiment on the plant yields a
//! least-squares estimate `ŷ = (â, b̂)`. The parameters drift affinely,
//! `(a₀ − λ₁t, b₀ + λ₂t)`, so consecutive differences obey the linear model
//! `ỹ = diag(−T, T) θ + w̃` in the drift rates `θ = (λ₁, λ₂)`, which the flow
//! tracks as a particle belief. Maintenance is due when the damping ratio
//! `ζ = a/(2√b)` leaves the safe set `ζ ≥ ζ_min`.

mod degradation;
pub mod io;
mod plant;
mod predict;
mod study;

pub use degradation::{
    damping_ratio, maintenance_time_for, DegradationModel, MaintenanceFlag, MaintenanceTime, B_FLOOR,
};
pub use plant::{ls_estimate, simulate_trajectory, spectral_radius, PlantParams, Trajectory};
pub use predict::{
    difference_stream, ls_baseline, predict_damping_band, suggested_maintenance_time, BandRow, DifferencedStream,
    LsBaseline, MaintenanceRule, Observation, RULE_TOL_DAYS,
};
pub use study::{CaseStudy, StudyOutcome, PRESET_SIGMA_W2};
