//! Contact Hamiltonian dynamics on coordinate charts.
//!
//! The crate is organised bottom-up:
//!
//! - [`exterior`]: pointwise exterior calculus (wedge, `d`, interior product,
//!   Lie derivative, pullback) over dense k-form coefficients.
//! - [`contact`]: contact forms, Reeb fields, the bivector and Jacobi bracket,
//!   Hamiltonian vector fields and the conformal form on `{H != 0}`.
//! - [`dynamics`]: domain-limited flows, flow Jacobians and pushforward checks.
//! - [`zeroset`]: the zero level set of `H` as a graph chart with its induced
//!   exact symplectic structure and Liouville field.
//! - [`sandwich`]: flow-based rectification and the contactification /
//!   symplectification maps built from it.
//! - [`scenarios`]: ready-made systems with closed-form oracles.

pub mod chart;
pub mod contact;
pub mod dynamics;
pub mod error;
pub mod exterior;
pub mod linalg;
pub mod sandwich;
pub mod scenarios;
pub mod zeroset;

pub use chart::Chart;
pub use contact::{ContactSystem, ConformalSystem, MeasureDensity};
pub use dynamics::{FlowMap, FlowOptions, FlowOutcome, FlowStatus, Method};
pub use error::{Error, Result};
pub use exterior::{Calculus, FormField, KForm, ScalarField, Stencil, VectorField};
pub use sandwich::{Phi1, Phi2, Rectification, SandwichReport};
pub use scenarios::Scenario;
pub use zeroset::{InducedStructure, LevelSetChart};
