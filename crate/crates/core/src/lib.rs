pub mod bench;
pub mod compliance;
pub mod config;
pub mod consensus;
pub mod econ;
pub mod ledger;
pub mod settlement;
pub mod simnet;
