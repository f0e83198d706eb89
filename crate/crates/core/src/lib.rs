//! Finite element pricing of European options under the Heston model when
//! the market price of volatility risk is only known to lie in an interval.
//!
//! The pricing PDE is rewritten in sheared coordinates `(y, z)` where its
//! diffusion is isotropic, discretized with monotone P1 elements, and stepped
//! backwards in time with implicit Euler. Uncertain controls are handled by
//! Howard policy iteration, giving the upper and lower price envelopes.

pub mod assembly;
pub mod error;
pub mod greeks;
pub mod hjb;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod payoff;
pub mod transform;

pub use assembly::{assemble, DiscreteOperator, RowKind};
pub use error::{Error, Result};
pub use greeks::{recover_gradient, PointQuote, PricedSurface, SurfaceSampler};
pub use hjb::{solve_fixed, solve_hjb, Extremum, Mode, SolverConfig, ValueSurface};
pub use mesh::{structured_triangulation, Mesh, NodeTag, PointLocator};
pub use oracle::{heston_cf_call, mc_price, McConfig, McEstimate};
pub use model::{validate, ControlInterval, HestonParams, Problem, TruncatedDomain};
pub use payoff::{Payoff, PayoffKind};
pub use transform::{build_trapezoid, BoundaryRegion, CoordinateMap, TrapezoidDomain};
