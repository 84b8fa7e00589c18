//! Finite combinatorics of strong subtrees of vector homogeneous trees.
//!
//! - [`tree`]: homogeneous trees, vector trees, level products, densities.
//! - [`strong`]: strong subtrees, their enumeration and counting, canonical
//!   isomorphisms, embeddings of finite sets, Milliken searches.
//! - [`prob`]: exact finite probability spaces, the correlation search and
//!   Markov-type counting facts.
//! - [`constants`]: symbolic parameter expressions with exact, interval and
//!   log-magnitude evaluation.
//! - [`averaging`]: the averaging dichotomies over finite product index sets.
//! - [`gen`]: seeded random fixtures.
//! - [`cli`]: the command line front end.
//! - [`verify`]: seeded property suites.
//! - [`levelsel`]: level selections, density and negligibility predicates,
//!   density Halpern–Läuchli searches and the density-increment driver.

pub mod averaging;
pub mod cli;
pub mod constants;
pub mod error;
pub mod gen;
pub mod levelsel;
pub mod prob;
pub mod rational;
pub mod search;
pub mod strong;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
