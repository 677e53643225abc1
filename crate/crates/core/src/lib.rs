//! Deterministic multi-drone pursuit-evasion simulator with staged
//! curriculum scheduling, feasibility-filtered domain randomization and a
//! line protocol for external learners.

pub mod bridge;
pub mod curriculum;
pub mod dynamics;
pub mod episode;
pub mod evader;
pub mod feasibility;
pub mod policies;
pub mod runner;
pub mod world;
