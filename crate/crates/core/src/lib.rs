//! Energy-efficiency optimal resource allocation for a two-way
//! decode-and-forward relay that is powered by the signals it relays.
//!
//! Two sources `A` and `B` exchange data through a relay `R` over three slots:
//! `A -> R` and `B -> R` (each of length `beta T`), then `R` broadcasts for
//! `(1 - 2 beta) T`. The relay splits each received signal, sending a fraction
//! `rho_i` to a piecewise-linear energy harvester and the rest to its decoder,
//! and spends everything it harvested on the broadcast.
//!
//! [`dinkelbach::solve_p1`] finds the transmit powers, time split and
//! power-splitting ratios maximizing delivered bits per joule. Each segment
//! pair of the harvester is a convex program solved by the log-barrier method
//! in [`barrier`]; [`baselines`] holds the comparison schemes and [`oracle`] a
//! brute-force grid search over the original variables.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod barrier;
pub mod cli;
pub mod config;
pub mod dinkelbach;
pub mod eh_model;
pub mod error;
pub mod link_model;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod subproblem;

pub use dinkelbach::{solve_p1, solve_p2, SolveOutcome, SolveSettings};
pub use eh_model::EhCurve;
pub use error::{Error, Result};
pub use link_model::{evaluate, Allocation, PerformanceReport};
pub use scenario::{ChannelRealization, SystemParams};
