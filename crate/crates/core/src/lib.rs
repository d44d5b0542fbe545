//! Time delay estimation between a sparse driver series (daily
//! precipitation) and a smooth response series (a vegetation index).
//!
//! - [`assoc`]: lagged association profiles under three scalings and the
//!   shift-matrix design.
//! - [`lasso`]: LASSO fits, solution paths and cross-validated penalty
//!   selection on the shift-matrix design.
//! - [`tde`]: the delay estimators, their significance test and annual
//!   aggregation.
//! - [`simulate`]: a two-state Markov weather generator with exponential
//!   amounts and an impulse response model for the response series.
//! - [`bench`]: Monte Carlo benchmark grids and their tables.
//! - [`cli`]: the `sparse-tde` command line front end.

pub mod assoc;
pub mod error;
pub mod lasso;
pub mod signal;
pub mod simulate;
pub mod tde;
pub mod bench;
pub mod cli;
