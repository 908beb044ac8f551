//! Physics-informed neural network solver for 2-D groundwater seepage.
//!
//! The crate trains a small multilayer perceptron to satisfy the steady or
//! transient seepage equation
//!
//! ```text
//! kx * d2h/dx2 + ky * d2h/dy2 = Ss * dh/dt
//! ```
//!
//! together with Dirichlet/Neumann boundary data, an optional initial
//! condition, and an optional free (phreatic) surface, by minimizing the mean
//! squared equation residual plus boundary/initial mismatches over sampled
//! collocation points. Derivatives of the network with respect to its inputs
//! are propagated as second-order jets over a reverse-mode tape
//! ([`autodiff`]), so the squared residual remains differentiable with
//! respect to the network parameters.
//!
//! Four builtin benchmarks exercise the solver:
//!
//! * `test1` - square plate with a circular hole, mixed Dirichlet/Neumann;
//! * `test2` - dam foundation strip, 240 m x 80 m, discontinuous top head;
//! * `test3` - rectangular dam with a free surface and a seepage face;
//! * `test4` - 1-D transient head redistribution on a square.
//!
//! Every benchmark is verified against an independent reference: a
//! finite-difference solver or a Fourier series ([`oracle`]), plus published
//! monitor-point values ([`oracle::reference_table`]).

pub mod autodiff;
pub mod batch;
pub mod bench;
pub mod geometry;
pub mod network;
pub mod numerics;
pub mod optim;
pub mod oracle;
pub mod physics;
