//! Solver toolkit for linear-quadratic mixed-integer optimal control.

pub mod bench;
pub mod bnb;
pub mod dissipativity;
pub mod guessgen;
pub mod instances;
pub mod io;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod qp;
pub mod relaxation;
pub mod turnpike;
