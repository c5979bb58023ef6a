//! Simulation and design toolkit for the mirror-electrode "tack" ion trap.
//!
//! The crate covers the RF field of the axisymmetric electrode set, the
//! ponderomotive pseudopotential and the observables derived from it, ion
//! crystal equilibria, sequential ray tracing through the mirror optics,
//! synthesis of the aspheric corrector, and light-collection accounting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collect;
pub mod corrector;
pub mod crystal;
pub mod field;
pub mod geometry;
pub mod pseudo;
pub mod rays;

/// Physical constants (CODATA 2018), SI units.
pub mod consts {
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
    pub const COULOMB_CONSTANT: f64 = 8.987_551_792_3e9;
}

pub use collect::{CollectedFraction, EmissionModel, LossElement, SolidAngleMode};
pub use corrector::{AsphereProfile, CorrectorDesignSpec, Orientation};
pub use crystal::{CrystalConfig, RelaxOptions, TrapModel};
pub use field::{BoxBoundary, ScalarField2D, SideCondition, SolveOptions};
pub use geometry::{
    ConicKind, ConicSurface, ElectrodeMask, ElectrodeRole, GridSpec, MirrorSpec, NeedleSpec, PlateSpec, RingSpec,
    TrapGeometry,
};
pub use pseudo::{IonSpecies, RfDrive, SecularFrequencies, TrapAnalysis};
pub use rays::{Ray, SurfaceStack};
