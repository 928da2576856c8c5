//! Corrective commodity taxation when the taxed good also signals how well
//! off its buyers are.
//!
//! A dirty good carries a marginal external damage. If every household at a
//! given income bought it for the same reasons, the efficient tax would be
//! the damage itself. When tastes for the good drift with earning ability,
//! the commodity tax doubles as a redistributive instrument, and the
//! efficient rate departs from the damage by an amount governed by a few
//! measurable statistics.
//!
//! The crate is organised around those statistics:
//!
//! - [`agent`] solves the household problem in synthetic economies.
//! - [`statistics`] extracts elasticities and income effects from them and
//!   splits the cross-sectional slope of dirty consumption into an income
//!   part and a taste part.
//! - [`solver`] turns a [`statistics::StatsProfile`] into nonlinear,
//!   linear, multidimensional and optimal-levels schedules.
//! - [`pipeline`] estimates a profile from a binned income cross-section
//!   and a survey of marginal propensities to consume.
//! - [`oracle`] checks solver output against brute-force welfare gradients
//!   of tax reforms.
//! - [`cli`] backs the `pigou` binary.
//!
//! [`schedules`], [`calibration`], [`numeric`] and [`io`] hold the tax
//! schedules, bundled synthetic inputs, numerical kernels and file formats.

// `!(a > b)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod error;
pub mod numeric;
pub mod schedules;
pub mod statistics;
pub mod calibration;
pub mod solver;
pub mod oracle;
pub mod pipeline;
pub mod io;
pub mod cli;
