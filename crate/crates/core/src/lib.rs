//! Exact solutions of gas-dynamic balance laws with linear or separated
//! velocity profiles: reduced ODE systems, solution assembly, and the
//! numerical checks that go with them.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact_solution;
pub mod fields;
pub mod geometry;
pub mod quadrature;
pub mod reduced_ode;
pub mod verify;

pub use error::{Error, Result};
pub use exact_solution::{GasSolution, InitialData, ReducedCoefficients};
pub use fields::{FieldDescriptor, FieldFamily, FieldSpec, JmReport, Profile};
pub use geometry::{ChartKind, ChartMetric, Christoffel, DomainBox};
pub use reduced_ode::integrator::{DenseSolution, Event, EventKind, IntegratorOptions, OdeSystem};
pub use reduced_ode::{ParamSet, ReducedSystem, SystemKind, Trajectory};
pub use verify::{Forcing, FunctionalSnapshot, GasState, QuadSpec, ResidualReport};
