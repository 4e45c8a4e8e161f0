//! Assume/guarantee contracts for discrete-time systems, composed over
//! arbitrary network interconnections and checked by linear programming.
//!
//! The crate models *recursively defined* (RD) contracts whose assumptions
//! at time `k` may react to outputs up to `k-1`, wires them into directed
//! networks, and verifies *vertical contracts* — claims that the component
//! contracts jointly refine a system-level contract — by building and
//! solving one group of LPs per component plus one for the system
//! guarantees. Optimal values `rho` at or below zero certify the
//! refinement; positive values come with decoded counterexample signals.
//!
//! ```
//! use vertic::platoon::{build_platoon, PlatoonParams};
//! use vertic::verification::verify;
//!
//! let problem = build_platoon(&PlatoonParams::new(2)).unwrap();
//! let report = verify(&problem).unwrap();
//! assert!(report.verdict);
//! assert_eq!(report.lp_groups(), 3);
//! ```
//!
//! See the guide chapters under [`guide`] for a walkthrough, or start with
//! [`contracts::LtiRdContract`], [`network::Network`] and
//! [`verification::verify`].

// Index loops over matrix rows/columns read better than iterator chains in
// the dense-algebra code.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod contracts;
pub mod guide;
pub mod mat;
pub mod network;
pub mod platoon;
pub mod problem;
pub mod simplex;
pub mod verification;

pub use contracts::{
    BlockBuilder, BlockKind, ContractRef, InequalityBlock, LtiRdContract, SignalWindow,
};
pub use network::{Causality, EdgeFilter, Network, NetworkBuilder, NodeId};
pub use simplex::{LpOutcome, LpProblem, SimplexOptions};
