//! Laboratory for online learning in two-player zero-sum kernel mixture
//! Markov games.
//!
//! The crate is organized around five layers:
//!
//! * [`game`]: finite simultaneous-move game descriptions with linear
//!   mixture transitions, exact best-response and Nash oracles via backward
//!   induction, random game generation, and a text serialization format.
//! * [`kernels`]: value-weighted features, Gram/dual-form ridge regression
//!   with per-observation normalizers, information gain, and the confidence
//!   radius schedules used by the learners.
//! * [`equilibrium`]: a dense simplex solver, matrix game values, and
//!   coarse correlated equilibria of two-payoff stage games.
//! * [`learner`]: the optimistic/pessimistic planning loop, episode
//!   execution, model updates, and regret bookkeeping.
//! * [`harness`]: experiment configs, deterministic seed derivation,
//!   record files, and the drivers behind the `kmg` command line tool.
//!
//! All randomness flows through explicitly seeded generators; repeated runs
//! with the same config and master seed produce byte-identical record files.

pub mod equilibrium;
pub mod game;
pub mod harness;
pub mod kernels;
pub mod learner;
pub mod linalg;
