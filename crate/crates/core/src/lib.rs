//! Learns a library of verified, planner-compatible operators for a crafting
//! grid-world from noisy external proposals.
//!
//! The pipeline plans bi-level: a symbolic forward search over abstract states
//! produces a sequence of ground operator steps, and each step's effect is
//! handed to a budgeted low-level search as a subgoal. Operators whose
//! subgoals reliably succeed are retained; the rest are dropped. A count-based
//! dictionary of lifted subgoal-to-trajectory mappings, updated with hindsight
//! relabeling, short-circuits repeated low-level searches.
//!
//! Modules:
//! - [`symbolic`]: typed STRIPS subset — domains, states, grounding, goal
//!   evaluation, and a canonical text format.
//! - [`env`]: the crafting grid-world, its abstraction to symbolic states,
//!   and benchmark/task generation.
//! - [`planner`]: grounded forward search over abstract states.
//! - [`policy`]: subgoals, the trajectory dictionary, budgeted low-level
//!   search, and the bi-level planner.
//! - [`proposer`]: operator/goal/decomposition proposal backends (recorded
//!   replay and remote chat-completion) plus syntax correction.
//! - [`learner`]: the iterative propose-plan-score loop and transfer
//!   evaluation.

#![forbid(unsafe_code)]

pub mod env;
pub mod learner;
pub mod planner;
pub mod policy;
pub mod proposer;
pub mod symbolic;
