//! Hierarchical retrieval-augmented agent for long-horizon mobile automation.
//!
//! A Manager plans and decomposes the task, an Operator turns each subtask
//! into one atomic device action, an Action Reflector judges the outcome and a
//! Notetaker keeps task-critical facts. Planning is grounded with top-k
//! (instruction, human steps) exemplars retrieved once per task; every action
//! is grounded with the best per-app (subtask, screenshot, action) exemplar.

pub mod model;
pub mod retrieval;
pub mod agents;
pub mod environment;
pub mod evaluation;
pub mod orchestrator;
pub mod kb;
