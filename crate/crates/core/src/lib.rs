//! Reduced open-system dynamics from correlated system–bath initial states.
//!
//! Given a joint state `ρ_SB` and a joint unitary `U`, this crate decides whether
//! the induced map `ρ_S(0) ↦ Tr_B[U ρ_SB U†]` is completely positive. The
//! building blocks are:
//!
//! * [`linalg`]: dense complex linear algebra and seeded sampling,
//! * [`states`]: block decomposition of bipartite states, SL classification,
//!   block structure and the classical–quantum (vanishing discord) tests,
//! * [`maps`]: operator-sum maps, the induced map, Choi matrices and Kraus
//!   extraction,
//! * [`verify`]: adversarial unitaries, principal-submatrix checks, a discord
//!   estimator and the Monte-Carlo campaign tying everything together.

pub mod error;
pub mod linalg;
pub mod maps;
pub mod states;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, RandomSource, C64};
