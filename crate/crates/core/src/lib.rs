//! Exact character calculus for linear cellular automata over finite
//! abelian groups, together with the harmonic-mixing machinery for
//! Bernoulli, Markov and Markov-random-field measures.
//!
//! The crate is organised bottom-up:
//!
//! * [`algebra`]: groups, elements, endomorphisms, exact phases, characters.
//! * [`numtheory`]: p-ary digits, Lucas' theorem, digit domination, gap censuses.
//! * [`lca`]: automata as finite sums of endomorphism-weighted shifts, torus
//!   configurations, character pushforward and powers, CRT splitting.
//! * [`diffusion`]: rank trajectories, density reports, separating sets and
//!   the closed-form coefficient families.
//! * [`measures`]: exactly evaluable measures on `A^Z` and their Fourier analysis.
//! * [`mrf`]: finite-grid Markov random fields, lamination kernels and sandwiches.

pub mod algebra;
pub mod diffusion;
pub mod error;
pub mod lca;
pub mod measures;
pub mod mrf;
pub mod numtheory;
pub mod rng;
pub mod site;

pub use algebra::{factorize, Character, Endo, Group, GroupElement, Matrix, Phase};
pub use error::{Error, Result};
pub use lca::{Configuration, Lca};
pub use site::Site;
