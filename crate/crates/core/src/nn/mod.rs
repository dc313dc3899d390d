//! Minimal differentiable building blocks with explicit backward passes.

mod adam;
mod conv;
mod dense;
pub mod loss;
mod lstm;
mod param;
#[cfg(test)]
pub(crate) mod testing;

pub use adam::{Adam, PlateauSchedule};
pub use conv::CausalConv1d;
pub use dense::{Activation, Dense};
pub use lstm::{Lstm, LstmState, LstmTrace};
pub use param::{flatten, Module};
pub(crate) use param::join;
