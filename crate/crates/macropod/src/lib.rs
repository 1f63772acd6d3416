//! Design-analysis toolkit and simulator for a planar, wire-driven hopping
//! robot with an elastic multi-joint tail.
//!
//! The crate covers the desk-scale design loop for such a robot:
//!
//! - [`dynamics`]: planar articulated rigid-body kinematics and dynamics
//!   (mass matrix, bias forces, inverse/forward dynamics, point Jacobians);
//! - [`muscle`]: wire routing geometry, the muscle-length Jacobian and
//!   minimum-norm tension allocation under pull-only box constraints;
//! - [`jump`]: leap trajectory construction, whole-body inverse kinematics,
//!   stance inverse dynamics with a tail reaction wrench, and per-muscle
//!   tension/velocity profiles;
//! - [`hopper`]: virtual-spring hopping control with energy shaping and
//!   foot placement by the neutral-point rule;
//! - [`tail`]: an eight-joint elastic underactuated tail driven by two
//!   antagonist wires routed in series;
//! - [`sim`]: fixed-step integration, penalty ground contact, scenario
//!   runners and trace recording;
//! - [`config`]: the TOML robot description consumed by the scenarios;
//! - [`plot`] and [`trace`]: dependency-free SVG line plots and CSV output.
//!
//! Every simulation is deterministic: the same configuration produces
//! byte-identical CSV and SVG outputs.
//!
//! See the crate examples for one runnable program per capability, and the
//! `macropod` binary for the config-driven command-line front end.

pub mod config;
pub mod dynamics;
pub mod hopper;
pub mod jump;
pub mod muscle;
pub mod plot;
pub mod qp;
pub mod sim;
pub mod tail;
pub mod trace;
