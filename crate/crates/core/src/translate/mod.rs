//! Automata constructions: CaRet to Büchi NVPA, and NVPA to parity DVPA.

mod determinize;
mod nnf;
mod tableau;

pub use determinize::{compress_priorities, determinize, determinize_capped, LazyDet, DEFAULT_STATE_CAP as DEFAULT_DET_CAP};
pub use tableau::{caret_to_nvpa, caret_to_nvpa_capped, trim};
