//! Rate and age-of-information tradeoffs for an energy-harvesting transmitter
//! that carries a message in the timing of its status updates.
//!
//! Energy arrives as a Bernoulli process. Each update spends one unit of
//! energy, waits for the next arrival, and is then delayed further to encode
//! message bits. The modules evaluate, optimize and simulate four policy
//! families for choosing that delay.

pub mod cli;
pub mod config;
pub mod etatp;
pub mod policies;
pub mod region;
pub mod search;
pub mod simulator;
pub mod stochastics;
pub mod validation;

pub use policies::{evaluate, PolicyKind, PolicyParams, TradeoffPoint};
pub use stochastics::ArrivalModel;
