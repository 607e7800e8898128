//! Model checking of probabilistic visibly pushdown automata against
//! stair-parity DVPA, Büchi NVPA, and CaRet properties.
//!
//! The pipeline is: property → deterministic stair-parity automaton →
//! product with the system → return/diverge probabilities → step chain →
//! bottom SCC analysis.

pub mod alphabet;
pub mod analysis;
pub mod caret;
pub mod error;
pub mod format;
pub mod lasso;
pub mod linalg;
pub mod probsolve;
pub mod product;
pub mod pvpa;
pub mod rel;
pub mod report;
pub mod stepchain;
pub mod sim;
pub mod translate;
pub mod vpa;

pub use alphabet::{Alphabet, Class, Symbol};
pub use error::{Error, Result};
