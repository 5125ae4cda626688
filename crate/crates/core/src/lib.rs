//! Exact and Monte Carlo tools for central limit theorems of ergodic sums
//! under products of toral automorphisms.
//!
//! Frequencies live in `Z^d` and are pushed forward exactly with big
//! integers; torus points are residues modulo a large modulus so that orbits
//! are exact as well.

pub mod clt;
pub mod coboundary;
pub mod error;
pub mod ergodic;
pub mod experiment;
pub mod functions;
pub mod lattice;
pub mod linalg;
pub mod products;
pub mod rng;
pub mod sl2;
pub mod stats;
pub mod torus;
pub mod trig;

pub use error::{Error, Result};
pub use lattice::FreqVector;
pub use linalg::{Alphabet, IntMatrix, IwasawaFactors, Word};
pub use torus::{Modulus, ModularPoint};
pub use trig::TrigPoly;
