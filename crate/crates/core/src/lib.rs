//! Coordination kernel for a hierarchical robot team: a manager delegating
//! navigation, information collection and display tasks to three robots,
//! plus the scenario world, agent policies and a rubric evaluator.

#![no_std]

extern crate alloc;

pub mod domain;
pub mod evaluator;
pub mod kb;
pub mod kernel;
pub mod policies;
pub mod world;
