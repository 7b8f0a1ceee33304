//! Portfolio optimization under Expected Shortfall with quadratic market
//! impact: empirical risk estimators, dense LP/QP solvers with optimality
//! certificates, the four scenario-based optimizers, replica saddle-point
//! solutions of the large-system limit, Monte Carlo ensembles, and a
//! single-period liquidation simulator.

pub mod core;
pub mod exec;
pub mod liquidation;
pub mod lpqp;
pub mod montecarlo;
pub mod portfolio_opt;
pub mod replica;
pub mod risk;
