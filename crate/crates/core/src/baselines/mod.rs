//! Classical signal plans (Webster's formula, static and adaptive, and fixed
//! time) and the per-intersection RL variants with phase-indexed actions.

mod variants;
mod webster;

pub use variants::*;
pub use webster::*;
