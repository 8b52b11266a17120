//! C-slow retiming for a synthesizable Verilog subset.

pub mod cli;
pub mod csr_place;
pub mod elaborate;
pub mod emit;
pub mod frontend;
pub mod sim;
pub mod timing;
