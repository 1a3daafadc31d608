//! File formats, Monte Carlo verification and the command-line front end for
//! `robust-merton-core`.

pub mod cli;
pub mod io;
pub mod verify;
